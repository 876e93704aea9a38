//! Decomposition of planner-feasible allocations into bilateral credit flows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{curtailment_from_flows, MarketInstance, BALANCE_TOL};
use crate::network::FlowAudit;

/// Reconstruction tolerance, MW.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// `δ_i = d̄_i − c_i`.
    pub delta: Vec<f64>,
    /// Agents with `δ < 0` (curtail beyond their obligation).
    pub sellers: Vec<usize>,
    /// Agents with `δ > 0`.
    pub buyers: Vec<usize>,
}

pub fn residuals(instance: &MarketInstance, c_star: &[f64]) -> Result<Residuals> {
    if c_star.len() != instance.num_agents() {
        return Err(Error::InvalidArgument(format!(
            "{} curtailments for {} agents",
            c_star.len(),
            instance.num_agents()
        )));
    }
    let total: f64 = c_star.iter().sum();
    if (total - instance.target()).abs() > BALANCE_TOL {
        return Err(Error::UnbalancedTarget {
            total,
            target: instance.target(),
        });
    }
    for (i, (a, &c)) in instance.agents().iter().zip(c_star).enumerate() {
        if !(c >= -BALANCE_TOL && c <= a.load + BALANCE_TOL) {
            return Err(Error::BoundViolation {
                agent: i,
                value: c,
                load: a.load,
            });
        }
    }
    let delta: Vec<f64> = instance.agents().iter().zip(c_star).map(|(a, c)| a.obligation - c).collect();
    Ok(Residuals {
        sellers: (0..delta.len()).filter(|&i| delta[i] < 0.0).collect(),
        buyers: (0..delta.len()).filter(|&i| delta[i] > 0.0).collect(),
        delta,
    })
}

/// Northwest-corner transport plan: sellers (δ < 0) are matched against
/// buyers (δ > 0), both in ascending agent order. Returns `x[seller][buyer]`.
pub fn transport_decompose(delta: &[f64]) -> Vec<Vec<f64>> {
    let n = delta.len();
    let mut x = vec![vec![0.0; n]; n];
    let sellers: Vec<usize> = (0..n).filter(|&i| delta[i] < 0.0).collect();
    let buyers: Vec<usize> = (0..n).filter(|&i| delta[i] > 0.0).collect();
    let mut supply: Vec<f64> = sellers.iter().map(|&i| -delta[i]).collect();
    let mut demand: Vec<f64> = buyers.iter().map(|&j| delta[j]).collect();
    let (mut s, mut b) = (0, 0);
    while s < sellers.len() && b < buyers.len() {
        let q = supply[s].min(demand[b]);
        x[sellers[s]][buyers[b]] += q;
        supply[s] -= q;
        demand[b] -= q;
        let last_seller = s + 1 == sellers.len();
        let last_buyer = b + 1 == buyers.len();
        // the smaller side is exhausted; keep the other open for the next match
        if supply[s] <= demand[b] && !last_seller {
            s += 1;
        } else if !last_buyer {
            b += 1;
        } else {
            s += 1;
        }
    }
    // put any rounding remainder on the final matched cell
    if let (Some(&ls), Some(&lb)) = (sellers.last(), buyers.last()) {
        let sold: f64 = x[ls].iter().sum();
        let fix = -delta[ls] - sold;
        if fix.abs() < 1e-6 {
            x[ls][lb] = (x[ls][lb] + fix).max(0.0);
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub flows: Vec<Vec<f64>>,
    pub reconstructed: Vec<f64>,
    pub max_error: f64,
    pub audit_target: FlowAudit,
    pub audit_reconstructed: FlowAudit,
    /// Reconstruction within tolerance and identical audits.
    pub matches: bool,
}

pub fn verify_equivalence(instance: &MarketInstance, c_star: &[f64]) -> Result<EquivalenceReport> {
    let r = residuals(instance, c_star)?;
    let flows = transport_decompose(&r.delta);
    let reconstructed = curtailment_from_flows(&instance.obligations(), &flows);
    let max_error = reconstructed
        .iter()
        .zip(c_star)
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    let audit_target = instance.audit(c_star)?;
    let audit_reconstructed = instance.audit(&reconstructed)?;
    let same_audit = audit_target.feasible == audit_reconstructed.feasible
        && audit_target
            .flows
            .iter()
            .zip(&audit_reconstructed.flows)
            .all(|(a, b)| (a - b).abs() <= RECONSTRUCTION_TOL * (1.0 + a.abs()));
    let nonneg = flows.iter().flatten().all(|&v| v >= 0.0);
    Ok(EquivalenceReport {
        matches: max_error <= RECONSTRUCTION_TOL && same_audit && nonneg,
        flows,
        reconstructed,
        max_error,
        audit_target,
        audit_reconstructed,
    })
}

/// Draws `count` curtailment vectors on `{Σc = D, 0 ≤ c ≤ L}` that pass the
/// network audit. Candidates are load-weighted exponential splits of D,
/// rejected when a bound or a branch limit fails.
pub fn sample_feasible_points(instance: &MarketInstance, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loads = instance.loads();
    let d = instance.target();
    let max_draws = 2_000 * count.max(1) + 100_000;
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        if draws >= max_draws {
            return Err(Error::InvalidArgument(format!(
                "only {} of {count} feasible points found in {max_draws} draws",
                out.len()
            )));
        }
        draws += 1;
        let w: Vec<f64> = loads.iter().map(|l| -(1.0 - rng.gen::<f64>()).ln() * l).collect();
        let total: f64 = w.iter().sum();
        let c: Vec<f64> = w.iter().map(|wi| d * wi / total).collect();
        if c.iter().zip(&loads).any(|(c, l)| c > l) {
            continue;
        }
        if instance.audit(&c)?.feasible {
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub samples: usize,
    pub matched: usize,
    pub worst_error: f64,
    pub max_support: usize,
}

/// Verifies equivalence on sampled feasible points in parallel.
pub fn verify_samples(instance: &MarketInstance, count: usize, seed: u64) -> Result<SampleSummary> {
    let points = sample_feasible_points(instance, count, seed)?;
    let reports: Vec<EquivalenceReport> = points
        .par_iter()
        .map(|c| verify_equivalence(instance, c))
        .collect::<Result<_>>()?;
    Ok(SampleSummary {
        samples: reports.len(),
        matched: reports.iter().filter(|r| r.matches).count(),
        worst_error: reports.iter().fold(0.0, |a, r| a.max(r.max_error)),
        max_support: reports
            .iter()
            .map(|r| r.flows.iter().flatten().filter(|&&v| v > 0.0).count())
            .max()
            .unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn threebus_northwest_corner() {
        let delta = [50.0, 50.0, -20.0, -60.0, -10.0, -10.0];
        let x = transport_decompose(&delta);
        assert_eq!(x[2][0], 20.0);
        assert_eq!(x[3][0], 30.0);
        assert_eq!(x[3][1], 30.0);
        assert_eq!(x[4][1], 10.0);
        assert_eq!(x[5][1], 10.0);
        assert_eq!(x.iter().flatten().filter(|&&v| v > 0.0).count(), 5);
    }

    #[test]
    fn zero_residual_means_no_flow() {
        let x = transport_decompose(&[0.0; 4]);
        assert!(x.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pair() {
        let x = transport_decompose(&[-7.5, 7.5]);
        assert_eq!(x[0][1], 7.5);
    }

    #[test]
    fn unbalanced_target_rejected() {
        let inst = bundled("threebus").unwrap();
        let mut c = inst.obligations();
        c[0] += 1.0;
        assert!(matches!(residuals(&inst, &c), Err(Error::UnbalancedTarget { .. })));
    }

    #[test]
    fn threebus_planner_residuals() {
        let inst = bundled("threebus").unwrap();
        let r = residuals(&inst, &[0.0, 0.0, 50.0, 80.0, 50.0, 50.0]).unwrap();
        assert_eq!(r.delta, vec![50.0, 50.0, -20.0, -60.0, -10.0, -10.0]);
        assert_eq!(r.sellers, vec![2, 3, 4, 5]);
        assert_eq!(r.buyers, vec![0, 1]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let inst = bundled("threebus").unwrap();
        let a = sample_feasible_points(&inst, 20, 7).unwrap();
        let b = sample_feasible_points(&inst, 20, 7).unwrap();
        assert_eq!(a, b);
    }
}
