use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::bigm::{bounds_for, BigM, BigMConfig};
use super::{assemble_kkt, KktSystem, PairKind};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpError, LpProblem, LpStatus};
use crate::market::{clear, MarketInstance};

/// A binary within this distance of 0 or 1 counts as integral.
const FRAC_TOL: f64 = 1e-6;
/// Relative pruning margin against the incumbent.
const PRUNE_TOL: f64 = 1e-9;
/// Relative agreement for "equal to 4 significant figures".
pub const STABILITY_TOL: f64 = 5e-5;
/// Relative agreement between the MILP and LP objectives.
pub const AGREEMENT_TOL: f64 = 1e-6;

/// Linearized KKT system in normalized units: flows are divided by D and
/// each multiplier by its own dual big-M. Columns are the continuous registry
/// followed by one binary per complementarity pair.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub kkt: KktSystem,
    pub bigm: BigM,
    relaxation: LpProblem,
    /// Column of the first binary.
    binary_offset: usize,
    flow_scale: f64,
    /// $/MWh per unit of each normalized multiplier, registry order.
    dual_scale: Vec<f64>,
    /// Declared welfare at `x = 0`.
    constant: f64,
    /// Largest normalized big-M of each pair.
    gate: Vec<f64>,
}

impl MilpProblem {
    pub fn num_binaries(&self) -> usize {
        self.kkt.complementarity.len()
    }

    pub fn num_continuous(&self) -> usize {
        self.binary_offset
    }

    pub fn num_rows(&self) -> usize {
        self.relaxation.num_constraints()
    }

    /// Declared welfare of the flow vector `x` (MW).
    pub fn declared_welfare(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .kkt
                .pairs
                .iter()
                .zip(x)
                .map(|(&(i, j), v)| (self.kkt.bids[j] - self.kkt.bids[i]) * v)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MilpObjective {
    /// Full branch-and-bound on declared welfare.
    DeclaredWelfare,
    /// Stop at the first integral KKT point.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpSolution {
    /// Credit flows in MW, in ordered-pair order.
    pub x: Vec<f64>,
    /// Multipliers in $/MWh, indexed by registry offset minus the pair count.
    pub duals: Vec<f64>,
    pub z: Vec<bool>,
    /// Declared welfare of `x`.
    pub objective: f64,
    pub nodes: usize,
}

impl MilpSolution {
    /// Value of the multiplier at registry index `idx`.
    pub fn dual(&self, kkt: &KktSystem, idx: usize) -> f64 {
        self.duals[idx - kkt.vars.pairs]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MilpOutcome {
    Solved(MilpSolution),
    /// No integral point exists at these big-M values.
    Infeasible { nodes: usize },
}

pub fn linearize(kkt: &KktSystem, bigm: &BigM) -> MilpProblem {
    let v = kkt.vars;
    let nc = v.len();
    let nz = kkt.complementarity.len();
    let ncols = nc + nz;
    let d = if kkt.target > 0.0 { kkt.target } else { 1.0 };
    let b_max = kkt.bids.iter().fold(0.0_f64, |a, &b| a.max(b));
    let bs = if b_max > 0.0 { b_max } else { 1.0 };

    let mut obj = vec![0.0; ncols];
    for (k, &(i, j)) in kkt.pairs.iter().enumerate() {
        obj[v.x(k)] = (kkt.bids[j] - kkt.bids[i]) / bs;
    }
    let mut lp = LpProblem::maximize(obj);
    for k in 0..kkt.pairs.len() {
        lp.set_bounds(v.x(k), 0.0, 1.0);
    }
    let mut dual_scale = vec![0.0; nc - v.pairs];
    for (p, pair) in kkt.complementarity.iter().enumerate() {
        dual_scale[v.dual_of(pair) - v.pairs] = bigm.dual[p];
        lp.set_bounds(v.dual_of(pair), 0.0, 1.0);
        lp.set_bounds(nc + p, 0.0, 1.0);
    }

    // stationarity in $/MWh divided by bmax
    for k in 0..kkt.stationarity.len() {
        let (terms, rhs) = kkt.stationarity_terms(k);
        let mut row = vec![0.0; ncols];
        for (idx, c) in terms {
            row[idx] += c * dual_scale[idx - v.pairs] / bs;
        }
        lp.equal(row, rhs / bs);
    }

    for (p, pair) in kkt.complementarity.iter().enumerate() {
        // dual ≤ M_a z
        let mut row = vec![0.0; ncols];
        row[v.dual_of(pair)] = 1.0;
        row[nc + p] = -1.0;
        lp.less_eq(row, 0.0);

        // 0 ≤ slack ≤ M_b (1 − z), slack = const + Σ coef x
        let (c, terms) = kkt.primal_expression(pair);
        let mut expr = vec![0.0; ncols];
        for (k, a) in terms {
            expr[v.x(k)] += a;
        }
        let mb = bigm.primal[p] / d;
        if pair.kind != PairKind::CreditNonneg {
            lp.less_eq(expr.iter().map(|a| -a).collect(), c / d);
        }
        let mut gated = expr;
        gated[nc + p] = mb;
        lp.less_eq(gated, mb - c / d);
    }

    let constant = kkt
        .bids
        .iter()
        .zip(kkt.loads.iter().zip(&kkt.obligations))
        .map(|(b, (l, o))| b * (l - o))
        .sum();
    MilpProblem {
        kkt: kkt.clone(),
        bigm: bigm.clone(),
        relaxation: lp,
        binary_offset: nc,
        flow_scale: d,
        dual_scale,
        constant,
        gate: (0..nz).map(|p| (bigm.primal[p] / d).max(1.0)).collect(),
    }
}

struct Node {
    fixed: Vec<Option<bool>>,
}

pub fn solve_milp(milp: &MilpProblem, objective: MilpObjective, time_budget: Duration) -> Result<MilpOutcome> {
    let start = Instant::now();
    let nz = milp.num_binaries();
    let off = milp.binary_offset;
    let mut base = milp.relaxation.clone();
    if objective == MilpObjective::None {
        base.set_objective(vec![0.0; base.num_vars()]);
    }

    let mut incumbent: Option<(f64, MilpSolution)> = None;
    let mut stack = vec![Node { fixed: vec![None; nz] }];
    let mut nodes = 0usize;
    while let Some(node) = stack.pop() {
        if start.elapsed() > time_budget {
            return Err(Error::TimeBudgetExceeded {
                budget_secs: time_budget.as_secs_f64(),
                nodes,
                incumbent: incumbent.map(|(_, s)| Box::new(s)),
            });
        }
        nodes += 1;
        let mut lp = base.clone();
        for (p, f) in node.fixed.iter().enumerate() {
            if let Some(b) = *f {
                let v = if b { 1.0 } else { 0.0 };
                lp.set_bounds(off + p, v, v);
            }
        }
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(Error::SolverFailure("MILP relaxation is unbounded".into())),
            LpStatus::Optimal => {}
        }
        if let Some((best, _)) = &incumbent {
            if sol.objective <= best + PRUNE_TOL * (1.0 + best.abs()) {
                continue;
            }
        }

        // most fractional binary, lowest index on ties; fractionality is
        // weighted by the gate size so a tiny z cannot hide a large multiplier
        let frac: Vec<f64> = (0..nz)
            .map(|p| {
                let z = sol.primal[off + p];
                z.min(1.0 - z).max(0.0) * milp.gate[p]
            })
            .collect();
        let pick = |tol: f64| {
            frac.iter()
                .enumerate()
                .filter(|(_, &f)| f > tol)
                .fold(None, |acc: Option<(usize, f64)>, (p, &f)| match acc {
                    Some((_, g)) if g >= f => acc,
                    _ => Some((p, f)),
                })
        };
        let mut branch = pick(FRAC_TOL);
        if branch.is_none() {
            let z: Vec<bool> = (0..nz).map(|p| sol.primal[off + p] > 0.5).collect();
            match polish(milp, &base, &z, nodes)? {
                Some(s) => {
                    incumbent = Some((sol.objective, s));
                    if objective == MilpObjective::None {
                        break;
                    }
                    continue;
                }
                None => branch = pick(0.0),
            }
        }
        match branch {
            None => {}
            Some((p, _)) => {
                let up = sol.primal[off + p] >= 0.5;
                let mut first = node.fixed.clone();
                first[p] = Some(up);
                let mut second = node.fixed;
                second[p] = Some(!up);
                stack.push(Node { fixed: second });
                stack.push(Node { fixed: first });
            }
        }
    }
    Ok(match incumbent {
        Some((_, mut s)) => {
            s.nodes = nodes;
            MilpOutcome::Solved(s)
        }
        None => MilpOutcome::Infeasible { nodes },
    })
}

/// Re-solves with every binary fixed and maps back to physical units.
fn polish(milp: &MilpProblem, base: &LpProblem, z: &[bool], nodes: usize) -> Result<Option<MilpSolution>> {
    let off = milp.binary_offset;
    let mut lp = base.clone();
    for (p, &b) in z.iter().enumerate() {
        let v = if b { 1.0 } else { 0.0 };
        lp.set_bounds(off + p, v, v);
        if !b {
            // the gate forces this multiplier to zero
            lp.set_bounds(milp.kkt.vars.dual_of(&milp.kkt.complementarity[p]), 0.0, 0.0);
        }
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let np = milp.kkt.vars.pairs;
    let x: Vec<f64> = sol.primal[..np].iter().map(|v| v * milp.flow_scale).collect();
    let duals = sol.primal[np..off].iter().zip(&milp.dual_scale).map(|(v, m)| v * m).collect();
    Ok(Some(MilpSolution {
        objective: milp.declared_welfare(&x),
        x,
        duals,
        z: z.to_vec(),
        nodes,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktCheck {
    /// Largest primal violation, MW.
    pub primal_violation: f64,
    /// Largest stationarity residual, $/MWh.
    pub stationarity: f64,
    /// Largest `dual × primal slack` product over the pairs.
    pub complementarity: f64,
}

/// Evaluates primal feasibility, stationarity and complementarity of a
/// MILP solution against the unscaled KKT system.
pub fn check_kkt(kkt: &KktSystem, sol: &MilpSolution) -> KktCheck {
    let mut primal_violation = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for pair in &kkt.complementarity {
        let slack = kkt.primal_slack(pair, &sol.x);
        primal_violation = primal_violation.max(-slack);
        let dual = sol.dual(kkt, kkt.vars.dual_of(pair));
        complementarity = complementarity.max((dual * slack.max(0.0)).abs());
    }
    let stationarity = (0..kkt.stationarity.len())
        .map(|k| {
            let (terms, rhs) = kkt.stationarity_terms(k);
            let lhs: f64 = terms.iter().map(|&(idx, c)| c * sol.dual(kkt, idx)).sum();
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max);
    KktCheck {
        primal_violation,
        stationarity,
        complementarity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScaleStatus {
    Optimal,
    /// Big-M values too small: every KKT point is cut off.
    UndersizedM,
    BudgetExceeded,
    /// The relaxation solver lost accuracy; see `message`.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleResult {
    pub scale: f64,
    pub status: ScaleStatus,
    /// Best objective found, if any.
    pub objective: Option<f64>,
    pub nodes: usize,
    pub elapsed_secs: f64,
    /// `|W_milp − W_lp| / |W_lp|`.
    pub relative_gap: Option<f64>,
    pub kkt: Option<KktCheck>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpEquivalenceReport {
    pub binaries: usize,
    pub lp_objective: f64,
    pub results: Vec<ScaleResult>,
    /// Every optimal scale matches the LP objective within `AGREEMENT_TOL`.
    pub agrees_with_lp: bool,
    /// Every optimal scale agrees with the others to 4 significant figures.
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MilpVerifyOptions {
    pub bigm: BigMConfig,
    pub objective: MilpObjective,
    pub time_budget: Duration,
}

impl Default for MilpVerifyOptions {
    fn default() -> Self {
        Self {
            bigm: BigMConfig::default(),
            objective: MilpObjective::DeclaredWelfare,
            time_budget: Duration::from_secs(300),
        }
    }
}

pub fn verify_milp_equivalence(instance: &MarketInstance, bids: &[f64], scales: &[f64]) -> Result<MilpEquivalenceReport> {
    verify_milp_equivalence_with(instance, bids, scales, &MilpVerifyOptions::default())
}

pub fn verify_milp_equivalence_with(
    instance: &MarketInstance,
    bids: &[f64],
    scales: &[f64],
    options: &MilpVerifyOptions,
) -> Result<MilpEquivalenceReport> {
    let kkt = assemble_kkt(instance, bids)?;
    let lp_objective = clear(instance, bids)?.declared_welfare;
    let denom = lp_objective.abs().max(1.0);
    let results: Vec<ScaleResult> = scales
        .par_iter()
        .map(|&scale| -> Result<ScaleResult> {
            let bigm = bounds_for(&kkt, scale, &options.bigm)?;
            let milp = linearize(&kkt, &bigm);
            let start = Instant::now();
            let outcome = solve_milp(&milp, options.objective, options.time_budget);
            let elapsed_secs = start.elapsed().as_secs_f64();
            let mut message = None;
            let (status, sol, nodes) = match outcome {
                Ok(MilpOutcome::Solved(s)) => (ScaleStatus::Optimal, Some(s.clone()), s.nodes),
                Ok(MilpOutcome::Infeasible { nodes }) => (ScaleStatus::UndersizedM, None, nodes),
                Err(Error::TimeBudgetExceeded { nodes, incumbent, .. }) => {
                    (ScaleStatus::BudgetExceeded, incumbent.map(|b| *b), nodes)
                }
                Err(e @ Error::Lp(LpError::NumericalFailure(_))) => {
                    message = Some(e.to_string());
                    (ScaleStatus::NumericalFailure, None, 0)
                }
                Err(e) => return Err(e),
            };
            Ok(ScaleResult {
                scale,
                status,
                objective: sol.as_ref().map(|s| s.objective),
                nodes,
                elapsed_secs,
                relative_gap: sol.as_ref().map(|s| (s.objective - lp_objective).abs() / denom),
                kkt: sol.as_ref().map(|s| check_kkt(&kkt, s)),
                message,
            })
        })
        .collect::<Result<_>>()?;

    let solved: Vec<f64> = results
        .iter()
        .filter(|r| r.status == ScaleStatus::Optimal)
        .filter_map(|r| r.objective)
        .collect();
    let agrees_with_lp = !solved.is_empty()
        && results
            .iter()
            .filter(|r| r.status == ScaleStatus::Optimal)
            .all(|r| r.relative_gap.is_some_and(|g| g <= AGREEMENT_TOL));
    let stable = !solved.is_empty()
        && solved
            .iter()
            .all(|a| solved.iter().all(|b| (a - b).abs() <= STABILITY_TOL * a.abs().max(b.abs()).max(1.0)));
    Ok(MilpEquivalenceReport {
        binaries: kkt.complementarity.len(),
        lp_objective,
        results,
        agrees_with_lp,
        stable,
    })
}
