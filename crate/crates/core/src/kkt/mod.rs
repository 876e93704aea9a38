//! KKT reformulation of the clearing LP, big-M linearization and a small
//! branch-and-bound solver.

mod bigm;
mod milp;

pub use bigm::{big_m_bounds, big_m_bounds_with, BigM, BigMConfig, DEFAULT_KAPPA};
pub use milp::{
    check_kkt, linearize, solve_milp, verify_milp_equivalence, verify_milp_equivalence_with, KktCheck,
    MilpEquivalenceReport, MilpObjective, MilpOutcome, MilpProblem, MilpSolution, MilpVerifyOptions, ScaleResult,
    ScaleStatus, AGREEMENT_TOL, STABILITY_TOL,
};

use serde::Serialize;

use crate::market::{check_bids, ordered_pairs, ClearingDuals, MarketInstance};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairKind {
    /// `c_i ≥ 0` against `α_i`.
    AgentLower,
    /// `c_i ≤ L_i` against `β_i`.
    AgentUpper,
    /// Positive branch limit against `μ⁺_ℓ`.
    PtdfPlus,
    /// Negative branch limit against `μ⁻_ℓ`.
    PtdfMinus,
    /// `x_ij ≥ 0` against `γ_ij`.
    CreditNonneg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComplementarityPair {
    pub kind: PairKind,
    /// Agent, branch or ordered-pair index depending on `kind`.
    pub index: usize,
}

/// Offsets of each variable block in the continuous vector
/// `(x, α, β, μ⁺, μ⁻, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariableRegistry {
    pub agents: usize,
    pub branches: usize,
    pub pairs: usize,
}

impl VariableRegistry {
    pub fn x(&self, k: usize) -> usize {
        k
    }
    pub fn alpha(&self, i: usize) -> usize {
        self.pairs + i
    }
    pub fn beta(&self, i: usize) -> usize {
        self.pairs + self.agents + i
    }
    pub fn mu_plus(&self, l: usize) -> usize {
        self.pairs + 2 * self.agents + l
    }
    pub fn mu_minus(&self, l: usize) -> usize {
        self.pairs + 2 * self.agents + self.branches + l
    }
    pub fn gamma(&self, k: usize) -> usize {
        self.pairs + 2 * self.agents + 2 * self.branches + k
    }
    pub fn len(&self) -> usize {
        2 * self.pairs + 2 * self.agents + 2 * self.branches
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dual variable paired with `pair`.
    pub fn dual_of(&self, pair: &ComplementarityPair) -> usize {
        match pair.kind {
            PairKind::AgentLower => self.alpha(pair.index),
            PairKind::AgentUpper => self.beta(pair.index),
            PairKind::PtdfPlus => self.mu_plus(pair.index),
            PairKind::PtdfMinus => self.mu_minus(pair.index),
            PairKind::CreditNonneg => self.gamma(pair.index),
        }
    }
}

/// One stationarity equation per ordered pair:
/// `0 = (b_i − b_j) − (α_i − α_j) + (β_i − β_j) + Σ_ℓ (μ⁺_ℓ − μ⁻_ℓ) ΔΦ_ℓ,ij − γ_ij`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityRow {
    pub pair: usize,
    pub i: usize,
    pub j: usize,
    pub bid_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktSystem {
    pub vars: VariableRegistry,
    pub pairs: Vec<(usize, usize)>,
    pub bids: Vec<f64>,
    pub loads: Vec<f64>,
    pub obligations: Vec<f64>,
    pub target: f64,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    /// `ΔΦ[ℓ][k]` for branch ℓ and ordered pair k.
    pub dphi: Vec<Vec<f64>>,
    pub stationarity: Vec<StationarityRow>,
    pub complementarity: Vec<ComplementarityPair>,
}

pub fn binary_count(n: usize, l: usize) -> usize {
    2 * n + 2 * l + n * n.saturating_sub(1)
}

pub fn assemble_kkt(instance: &MarketInstance, bids: &[f64]) -> Result<KktSystem> {
    check_bids(instance, bids)?;
    let n = instance.num_agents();
    let nb = instance.network().num_branches();
    let pairs = ordered_pairs(n);
    let vars = VariableRegistry {
        agents: n,
        branches: nb,
        pairs: pairs.len(),
    };
    let stationarity = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| StationarityRow {
            pair: k,
            i,
            j,
            bid_gap: bids[i] - bids[j],
        })
        .collect();
    let mut complementarity = Vec::with_capacity(binary_count(n, nb));
    for (kind, count) in [
        (PairKind::AgentLower, n),
        (PairKind::AgentUpper, n),
        (PairKind::PtdfPlus, nb),
        (PairKind::PtdfMinus, nb),
        (PairKind::CreditNonneg, pairs.len()),
    ] {
        complementarity.extend((0..count).map(|index| ComplementarityPair { kind, index }));
    }
    let net = instance.network();
    Ok(KktSystem {
        vars,
        bids: bids.to_vec(),
        loads: instance.loads(),
        obligations: instance.obligations(),
        target: instance.target(),
        f_plus: net.branches().iter().map(|b| b.f_plus).collect(),
        f_minus: net.branches().iter().map(|b| b.f_minus).collect(),
        dphi: instance.pair_ptdf(),
        pairs,
        stationarity,
        complementarity,
    })
}

impl KktSystem {
    pub fn num_agents(&self) -> usize {
        self.vars.agents
    }

    pub fn num_branches(&self) -> usize {
        self.vars.branches
    }

    /// Primal slack of `pair` as `constant + Σ coef·x_k`, in MW.
    pub fn primal_expression(&self, pair: &ComplementarityPair) -> (f64, Vec<(usize, f64)>) {
        let net = |i: usize| -> Vec<(usize, f64)> {
            self.pairs
                .iter()
                .enumerate()
                .filter_map(|(k, &(a, b))| {
                    if a == i {
                        Some((k, 1.0))
                    } else if b == i {
                        Some((k, -1.0))
                    } else {
                        None
                    }
                })
                .collect()
        };
        let flow = |l: usize, sign: f64| -> Vec<(usize, f64)> {
            self.dphi[l]
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k, sign * v))
                .collect()
        };
        let i = pair.index;
        match pair.kind {
            PairKind::AgentLower => (self.obligations[i], net(i)),
            PairKind::AgentUpper => (
                self.loads[i] - self.obligations[i],
                net(i).into_iter().map(|(k, v)| (k, -v)).collect(),
            ),
            PairKind::PtdfPlus => (self.f_plus[i], flow(i, -1.0)),
            PairKind::PtdfMinus => (self.f_minus[i], flow(i, 1.0)),
            PairKind::CreditNonneg => (0.0, vec![(i, 1.0)]),
        }
    }

    pub fn primal_slack(&self, pair: &ComplementarityPair, x: &[f64]) -> f64 {
        let (c, terms) = self.primal_expression(pair);
        c + terms.iter().map(|&(k, v)| v * x[k]).sum::<f64>()
    }

    /// Stationarity row `k` as `Σ coef·dual = rhs` over registry indices.
    pub fn stationarity_terms(&self, k: usize) -> (Vec<(usize, f64)>, f64) {
        let row = &self.stationarity[k];
        let v = &self.vars;
        let mut terms = vec![
            (v.alpha(row.i), -1.0),
            (v.alpha(row.j), 1.0),
            (v.beta(row.i), 1.0),
            (v.beta(row.j), -1.0),
            (v.gamma(k), -1.0),
        ];
        for l in 0..self.num_branches() {
            let d = self.dphi[l][k];
            if d != 0.0 {
                terms.push((v.mu_plus(l), d));
                terms.push((v.mu_minus(l), -d));
            }
        }
        (terms, -row.bid_gap)
    }

    /// Residual of every stationarity row at the given multipliers.
    pub fn stationarity_residuals(&self, duals: &ClearingDuals) -> Vec<f64> {
        self.stationarity
            .iter()
            .map(|row| {
                let (i, j) = (row.i, row.j);
                let congestion: f64 = (0..self.num_branches())
                    .map(|l| (duals.mu_plus[l] - duals.mu_minus[l]) * self.dphi[l][row.pair])
                    .sum();
                row.bid_gap - (duals.alpha[i] - duals.alpha[j]) + (duals.beta[i] - duals.beta[j]) + congestion
                    - duals.gamma[i][j]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::clear;
    use crate::scenario::bundled;

    #[test]
    fn counts() {
        assert_eq!(binary_count(6, 3), 48);
        assert_eq!(binary_count(8, 38), 148);
        assert_eq!(binary_count(5, 11), 52);
        assert_eq!(binary_count(1, 0), 2);
        let inst = bundled("threebus").unwrap();
        let k = assemble_kkt(&inst, &inst.volls()).unwrap();
        assert_eq!(k.stationarity.len(), 30);
        assert_eq!(k.complementarity.len(), 48);
    }

    #[test]
    fn registry_blocks_are_disjoint() {
        let v = VariableRegistry {
            agents: 3,
            branches: 2,
            pairs: 6,
        };
        let mut all: Vec<usize> = (0..6).map(|k| v.x(k)).collect();
        all.extend((0..3).map(|i| v.alpha(i)));
        all.extend((0..3).map(|i| v.beta(i)));
        all.extend((0..2).map(|l| v.mu_plus(l)));
        all.extend((0..2).map(|l| v.mu_minus(l)));
        all.extend((0..6).map(|k| v.gamma(k)));
        let want: Vec<usize> = (0..v.len()).collect();
        assert_eq!(all, want);
    }

    #[test]
    fn lp_duals_satisfy_stationarity() {
        for name in ["threebus", "nygrid"] {
            let inst = bundled(name).unwrap();
            let out = clear(&inst, &inst.volls()).unwrap();
            let kkt = assemble_kkt(&inst, &inst.volls()).unwrap();
            let worst = kkt
                .stationarity_residuals(&out.duals)
                .iter()
                .fold(0.0_f64, |a, r| a.max(r.abs()));
            assert!(worst <= 1e-6, "{name}: {worst}");
        }
    }
}
