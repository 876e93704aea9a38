//! Bid-deviation sweeps, capacity sweeps and congestion reports.

use rayon::prelude::*;
use serde::Serialize;

use crate::benchmarks::{planner, prorata_allocation, welfare};
use crate::error::{Error, Result};
use crate::market::{clear, nodal_prices, MarketInstance};
use crate::settlement::{clarke_payment, excluded_welfare, up_settle, SettlementRule};

/// Grid points are snapped to this resolution to avoid float drift.
const GRID_SNAP: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepGrid {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl SweepGrid {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !(lower > 0.0 && step > 0.0 && upper >= lower && upper.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid {lower}:{upper}:{step} needs lower > 0, step > 0 and upper >= lower"
            )));
        }
        Ok(Self { lower, upper, step })
    }

    /// Default bid-multiplier grid.
    pub fn bids() -> Self {
        Self {
            lower: 0.1,
            upper: 5.0,
            step: 0.01,
        }
    }

    /// Parses `LO:HI:STEP`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("grid {s:?} is not LO:HI:STEP"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::new(v[0], v[1], v[2])
    }

    pub fn points(&self) -> Vec<f64> {
        let k = ((self.upper - self.lower) / self.step + 1e-9).floor() as usize;
        (0..=k)
            .map(|i| ((self.lower + i as f64 * self.step) * GRID_SNAP).round() / GRID_SNAP)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationPoint {
    pub multiplier: f64,
    pub bid: f64,
    /// None when the point failed; see `error`.
    pub payoff: Option<f64>,
    pub curtailment: Option<f64>,
    pub price: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationResult {
    pub agent: usize,
    pub rule: SettlementRule,
    pub points: Vec<DeviationPoint>,
    pub u_truthful: f64,
    pub u_best: f64,
    /// `(U_best − U_truthful) / |U_truthful|`.
    pub gain: f64,
    /// Smallest multiplier attaining `U_best`.
    pub best_multiplier: f64,
}

/// Payoff of `agent` as its bid moves over `grid` (multiples of its VOLL)
/// while everyone else bids truthfully.
pub fn bid_sweep(instance: &MarketInstance, agent: usize, grid: &SweepGrid, rule: SettlementRule) -> Result<DeviationResult> {
    if agent >= instance.num_agents() {
        return Err(Error::InvalidArgument(format!("agent index {agent} out of range")));
    }
    let multipliers = grid.points();
    if !multipliers.iter().any(|m| (m - 1.0).abs() < 1e-9) {
        return Err(Error::InvalidArgument("the bid grid must contain the truthful multiplier 1.0".into()));
    }
    let v = instance.volls();
    // the excluded clearing depends only on the other agents' reports
    let excluded = match rule {
        SettlementRule::Vcg => Some(excluded_welfare(instance, &v, agent)?),
        SettlementRule::UniformPrice => None,
    };

    let points: Vec<DeviationPoint> = multipliers
        .par_iter()
        .map(|&m| {
            let mut bids = v.clone();
            bids[agent] = m * v[agent];
            let eval = || -> Result<(f64, f64, Option<f64>)> {
                match excluded {
                    Some(w) => {
                        let out = clear(instance, &bids)?;
                        let p = clarke_payment(&out, &bids, agent, w);
                        Ok((v[agent] * out.served[agent] - p, out.curtailment[agent], None))
                    }
                    None => {
                        let r = up_settle(instance, &bids, &v)?;
                        Ok((r.surpluses[agent], r.outcome.curtailment[agent], r.price))
                    }
                }
            };
            match eval() {
                Ok((u, c, price)) => DeviationPoint {
                    multiplier: m,
                    bid: bids[agent],
                    payoff: Some(u),
                    curtailment: Some(c),
                    price,
                    error: None,
                },
                Err(e) => DeviationPoint {
                    multiplier: m,
                    bid: bids[agent],
                    payoff: None,
                    curtailment: None,
                    price: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let truthful = points
        .iter()
        .find(|p| (p.multiplier - 1.0).abs() < 1e-9)
        .and_then(|p| p.payoff)
        .ok_or_else(|| Error::SolverFailure("the truthful grid point could not be evaluated".into()))?;
    let u_best = points.iter().filter_map(|p| p.payoff).fold(f64::NEG_INFINITY, f64::max);
    let cutoff = u_best - 1e-9 * u_best.abs().max(1.0);
    let best_multiplier = points
        .iter()
        .find(|p| p.payoff.is_some_and(|u| u >= cutoff))
        .map(|p| p.multiplier)
        .expect("the truthful point is valid");
    let gain = if u_best - truthful <= 1e-9 * truthful.abs().max(1.0) {
        0.0
    } else {
        (u_best - truthful) / truthful.abs()
    };
    Ok(DeviationResult {
        agent,
        rule,
        points,
        u_truthful: truthful,
        u_best,
        gain,
        best_multiplier,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityPoint {
    pub capacity: f64,
    pub w_ccm: f64,
    pub w_plan: f64,
    pub w_prorata: f64,
    /// Multiplier on the swept limit(s), $/MWh per MW.
    pub mu: f64,
    pub prorata_feasible: bool,
    pub prorata_min_slack: f64,
    pub admin_feasible: bool,
}

/// Re-clears at each capacity of `branch`. With `symmetric` both
/// directions take the value, otherwise only the positive direction does.
pub fn capacity_sweep(instance: &MarketInstance, branch: usize, capacities: &[f64], symmetric: bool) -> Result<Vec<CapacityPoint>> {
    let net = instance.network();
    let br = net
        .branches()
        .get(branch)
        .ok_or_else(|| Error::UnknownBranch(branch.to_string()))?;
    let f_minus = br.f_minus;
    let v = instance.volls();
    capacities
        .par_iter()
        .map(|&cap| {
            let network = net.with_limits(branch, cap, if symmetric { cap } else { f_minus })?;
            let inst = instance.with_network(network)?;
            let out = clear(&inst, &v)?;
            let plan = planner(&inst, &v, true)?;
            let pr = prorata_allocation(&inst);
            let pr_audit = inst.audit(&pr)?;
            let mu = out.duals.mu_plus[branch] + if symmetric { out.duals.mu_minus[branch] } else { 0.0 };
            Ok(CapacityPoint {
                capacity: cap,
                w_ccm: out.true_welfare,
                w_plan: plan.welfare,
                w_prorata: welfare(&inst, &pr, &v)?,
                mu,
                prorata_feasible: pr_audit.feasible,
                prorata_min_slack: pr_audit.min_slack,
                admin_feasible: inst.audit(&inst.obligations())?.feasible,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BindingBranch {
    pub branch: usize,
    pub id: String,
    /// `+1` for the positive direction, `−1` for the negative one.
    pub direction: i8,
    pub flow: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CongestionReport {
    pub w_plan: f64,
    pub w_copperplate: f64,
    pub gap: f64,
    /// Gap as a percentage of copperplate welfare.
    pub gap_pct: f64,
    pub binding: Vec<BindingBranch>,
    /// None when no agent is interior.
    pub wedge: Option<f64>,
}

pub fn congestion_report(instance: &MarketInstance) -> Result<CongestionReport> {
    let v = instance.volls();
    let plan = planner(instance, &v, true)?;
    let copper = planner(instance, &v, false)?;
    let out = clear(instance, &v)?;
    let mu_tol = 1e-6 * v.iter().fold(1.0_f64, |a, &b| a.max(b));
    let mut binding = Vec::new();
    for (l, br) in instance.network().branches().iter().enumerate() {
        let flow = out.audit.flows[l];
        let sides = [
            (1, out.audit.slack_plus[l], out.duals.mu_plus[l], br.f_plus),
            (-1, out.audit.slack_minus[l], out.duals.mu_minus[l], br.f_minus),
        ];
        for (direction, slack, mu, limit) in sides {
            if slack <= 1e-6 * (1.0 + limit) && mu > mu_tol {
                binding.push(BindingBranch {
                    branch: l,
                    id: br.id.clone(),
                    direction,
                    flow,
                    mu,
                });
            }
        }
    }
    let wedge = match nodal_prices(instance, &v, &out) {
        Ok(p) => Some(p.wedge),
        Err(Error::NoInteriorAgent) => None,
        Err(e) => return Err(e),
    };
    let gap = copper.welfare - plan.welfare;
    Ok(CongestionReport {
        w_plan: plan.welfare,
        w_copperplate: copper.welfare,
        gap,
        gap_pct: if copper.welfare > 0.0 { 100.0 * gap / copper.welfare } else { 0.0 },
        binding,
        wedge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn grid_points_are_snapped() {
        let pts = SweepGrid::bids().points();
        assert_eq!(pts.len(), 491);
        assert_eq!(pts[90], 1.0);
        assert_eq!(*pts.last().unwrap(), 5.0);
        assert!(SweepGrid::parse("1:0:1").is_err());
        assert_eq!(SweepGrid::parse("10:80:1").unwrap().points().len(), 71);
    }

    #[test]
    fn grid_must_contain_truthful_point() {
        let inst = bundled("threebus").unwrap();
        let g = SweepGrid::new(2.0, 3.0, 0.5).unwrap();
        assert!(bid_sweep(&inst, 0, &g, SettlementRule::Vcg).is_err());
    }

    #[test]
    fn threebus_congestion() {
        let inst = bundled("threebus").unwrap();
        let r = congestion_report(&inst).unwrap();
        assert!((r.gap - 40_000.0).abs() < 1e-2);
        assert_eq!(r.binding.len(), 1);
        assert_eq!(r.binding[0].id, "L31");
        assert!((r.binding[0].mu - 12_000.0).abs() < 1e-3);
    }

    #[test]
    fn uncongested_instance() {
        let inst = bundled("threebus").unwrap();
        let net = inst.network().with_limits(2, 500.0, 500.0).unwrap();
        let r = congestion_report(&inst.with_network(net).unwrap()).unwrap();
        assert!(r.gap.abs() < 1e-6);
        assert!(r.binding.is_empty());
    }
}
