//! Agents, validated market instances, the reduced clearing LP and nodal
//! credit prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{lex_refine_from, solve_lp, LpProblem, LpStatus};
use crate::network::{injection_deltas, FlowAudit, Network};

/// Tolerance on `|Σ d̄ − D|`, MW.
pub const BALANCE_TOL: f64 = 1e-6;
/// An agent is interior when its curtailment is this far from both bounds, MW.
pub const INTERIOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub name: String,
    pub bus: u32,
    /// L_i, MW.
    pub load: f64,
    /// d̄_i, MW.
    pub obligation: f64,
    /// v_i, $/MWh.
    pub voll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    network: Network,
    agents: Vec<Agent>,
    target: f64,
}

/// Checks every instance invariant and reports all violations at once.
pub fn validate_instance(network: Network, agents: Vec<Agent>, target: f64) -> Result<MarketInstance> {
    let mut problems = Vec::new();
    if agents.is_empty() {
        problems.push("the market has no agents".to_string());
    }
    if !(target.is_finite() && target >= 0.0) {
        problems.push(format!("target {target} MW must be finite and non-negative"));
    }
    for (k, a) in agents.iter().enumerate() {
        if agents[..k].iter().any(|b| b.name == a.name) {
            problems.push(format!("duplicate agent name {:?}", a.name));
        }
        if network.bus_index(a.bus).is_none() {
            problems.push(format!("agent {:?} references unknown bus {}", a.name, a.bus));
        }
        if !(a.load.is_finite() && a.load > 0.0) {
            problems.push(format!("agent {:?}: load {} MW must be positive", a.name, a.load));
        }
        if !(a.voll.is_finite() && a.voll > 0.0) {
            problems.push(format!("agent {:?}: VOLL {} $/MWh must be positive", a.name, a.voll));
        }
        if !a.obligation.is_finite() || a.obligation < 0.0 {
            problems.push(format!("agent {:?}: obligation {} MW is negative", a.name, a.obligation));
        } else if a.obligation > a.load {
            problems.push(format!(
                "agent {:?}: obligation {} MW exceeds load {} MW",
                a.name, a.obligation, a.load
            ));
        }
    }
    let total: f64 = agents.iter().map(|a| a.obligation).sum();
    if (total - target).abs() > BALANCE_TOL {
        problems.push(format!(
            "obligations sum to {total} MW but the target is {target} MW (mismatch {} MW)",
            total - target
        ));
    }
    if problems.is_empty() {
        Ok(MarketInstance { network, agents, target })
    } else {
        Err(Error::Validation(problems))
    }
}

impl MarketInstance {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// D, MW.
    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn agent_index(&self, name: &str) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAgent(name.to_string()))
    }

    pub fn loads(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.load).collect()
    }

    pub fn obligations(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.obligation).collect()
    }

    pub fn volls(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.voll).collect()
    }

    pub fn agent_buses(&self) -> Vec<u32> {
        self.agents.iter().map(|a| a.bus).collect()
    }

    /// Column of each agent's bus in the PTDF matrix.
    pub fn agent_bus_indices(&self) -> Vec<usize> {
        self.agents
            .iter()
            .map(|a| self.network.bus_index(a.bus).expect("validated bus"))
            .collect()
    }

    /// Same agents and target on a different network.
    pub fn with_network(&self, network: Network) -> Result<Self> {
        validate_instance(network, self.agents.clone(), self.target)
    }

    /// Instance without agent `i`, with the target reduced by its obligation.
    pub(crate) fn without_agent(&self, i: usize) -> Result<Self> {
        let mut agents = self.agents.clone();
        let gone = agents.remove(i);
        let target = self.target - gone.obligation;
        validate_instance(self.network.clone(), agents, target)
    }

    pub fn delta_p(&self, curtailment: &[f64]) -> Result<Vec<f64>> {
        injection_deltas(&self.network, &self.agent_buses(), &self.obligations(), curtailment)
    }

    pub fn audit(&self, curtailment: &[f64]) -> Result<FlowAudit> {
        Ok(self.network.audit(&self.delta_p(curtailment)?))
    }

    /// `ΔΦ_ℓ,ij = Φ_{ℓ,n(i)} − Φ_{ℓ,n(j)}` for every branch and ordered pair.
    pub fn pair_ptdf(&self) -> Vec<Vec<f64>> {
        let cols = self.agent_bus_indices();
        let pairs = ordered_pairs(self.num_agents());
        self.network
            .ptdf()
            .iter()
            .map(|row| pairs.iter().map(|&(i, j)| row[cols[i]] - row[cols[j]]).collect())
            .collect()
    }
}

/// Ordered pairs `(i, j)`, `i ≠ j`, sorted lexicographically.
pub fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn check_bids(instance: &MarketInstance, bids: &[f64]) -> Result<()> {
    if bids.len() != instance.num_agents() {
        return Err(Error::InvalidArgument(format!(
            "{} bids for {} agents",
            bids.len(),
            instance.num_agents()
        )));
    }
    if let Some(k) = bids.iter().position(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidArgument(format!("bid {} of agent {k} must be non-negative", bids[k])));
    }
    Ok(())
}

/// Reduced clearing LP over credit flows.
///
/// Row layout: `N` rows keeping `c ≥ 0`, `N` rows keeping `c ≤ L`, then one
/// row per branch for the positive direction followed by one per branch for
/// the negative direction.
#[derive(Debug, Clone)]
pub struct ReducedLp {
    pub problem: LpProblem,
    /// `Σ b_i (L_i − d̄_i)`, added to the LP objective to get declared welfare.
    pub constant: f64,
    pub pairs: Vec<(usize, usize)>,
}

impl ReducedLp {
    pub fn lower_row(&self, i: usize) -> usize {
        i
    }

    pub fn upper_row(&self, n: usize, i: usize) -> usize {
        n + i
    }

    pub fn plus_row(&self, n: usize, l: usize) -> usize {
        2 * n + l
    }

    pub fn minus_row(&self, n: usize, num_branches: usize, l: usize) -> usize {
        2 * n + num_branches + l
    }
}

pub fn build_reduced_lp(instance: &MarketInstance, bids: &[f64]) -> Result<ReducedLp> {
    check_bids(instance, bids)?;
    let n = instance.num_agents();
    let pairs = ordered_pairs(n);
    let p = pairs.len();
    let agents = instance.agents();

    let objective: Vec<f64> = pairs.iter().map(|&(i, j)| bids[j] - bids[i]).collect();
    let constant = agents
        .iter()
        .zip(bids)
        .map(|(a, b)| b * (a.load - a.obligation))
        .sum();
    let mut problem = LpProblem::maximize(objective);

    // net_i(x) = Σ_j x_ij − Σ_j x_ji = c_i − d̄_i
    let net_row = |i: usize| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(a, b)| {
                if a == i {
                    1.0
                } else if b == i {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect()
    };
    for (i, a) in agents.iter().enumerate() {
        let row: Vec<f64> = net_row(i).iter().map(|v| -v).collect();
        problem.less_eq(row, a.obligation);
    }
    for (i, a) in agents.iter().enumerate() {
        problem.less_eq(net_row(i), a.load - a.obligation);
    }
    let dphi = instance.pair_ptdf();
    for (row, br) in dphi.iter().zip(instance.network().branches()) {
        problem.less_eq(row.clone(), br.f_plus);
    }
    for (row, br) in dphi.iter().zip(instance.network().branches()) {
        problem.less_eq(row.iter().map(|v| -v).collect(), br.f_minus);
    }
    for k in 0..p {
        problem.set_bounds(k, 0.0, instance.target());
    }
    Ok(ReducedLp {
        problem,
        constant,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearingDuals {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    /// `γ_ij` as an N×N matrix with zero diagonal.
    pub gamma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearingOutcome {
    /// `x[i][j]`, credits sold by `i` to `j`, MW.
    pub x: Vec<Vec<f64>>,
    pub curtailment: Vec<f64>,
    pub served: Vec<f64>,
    pub duals: ClearingDuals,
    pub declared_welfare: f64,
    pub true_welfare: f64,
    pub audit: FlowAudit,
}

impl ClearingOutcome {
    pub fn interior_agents(&self, instance: &MarketInstance) -> Vec<usize> {
        interior_agents(instance, &self.curtailment)
    }

    pub fn pair_vector(&self, pairs: &[(usize, usize)]) -> Vec<f64> {
        pairs.iter().map(|&(i, j)| self.x[i][j]).collect()
    }
}

pub fn interior_agents(instance: &MarketInstance, curtailment: &[f64]) -> Vec<usize> {
    instance
        .agents()
        .iter()
        .zip(curtailment)
        .enumerate()
        .filter(|(_, (a, &c))| c > INTERIOR_TOL && c < a.load - INTERIOR_TOL)
        .map(|(i, _)| i)
        .collect()
}

/// `c_i = d̄_i − Σ_j x_ji + Σ_j x_ij`.
pub fn curtailment_from_flows(obligations: &[f64], x: &[Vec<f64>]) -> Vec<f64> {
    let n = obligations.len();
    (0..n)
        .map(|i| {
            let sold: f64 = (0..n).filter(|&j| j != i).map(|j| x[i][j]).sum();
            let bought: f64 = (0..n).filter(|&j| j != i).map(|j| x[j][i]).sum();
            obligations[i] - bought + sold
        })
        .collect()
}

/// Clears the market at `bids` and refines the optimum lexicographically
/// in `(i, j)` pair order.
pub fn clear(instance: &MarketInstance, bids: &[f64]) -> Result<ClearingOutcome> {
    let reduced = build_reduced_lp(instance, bids)?;
    let n = instance.num_agents();
    let nb = instance.network().num_branches();
    let first = solve_lp(&reduced.problem)?;
    match first.status {
        LpStatus::Optimal => {}
        other => {
            return Err(Error::SolverFailure(format!(
                "clearing LP reported {other:?}; the no-trade point should always be feasible"
            )))
        }
    }
    let order: Vec<usize> = (0..reduced.pairs.len()).collect();
    let refined = lex_refine_from(&reduced.problem, &first, &order)?;

    let mut x = vec![vec![0.0; n]; n];
    for (k, &(i, j)) in reduced.pairs.iter().enumerate() {
        x[i][j] = refined.primal[k];
    }
    let obligations = instance.obligations();
    let loads = instance.loads();
    let curtailment: Vec<f64> = curtailment_from_flows(&obligations, &x)
        .into_iter()
        .zip(&loads)
        .map(|(c, &l)| c.clamp(0.0, l))
        .collect();
    let served: Vec<f64> = loads.iter().zip(&curtailment).map(|(l, c)| l - c).collect();

    let y = &refined.duals;
    let mut gamma = vec![vec![0.0; n]; n];
    for (k, &(i, j)) in reduced.pairs.iter().enumerate() {
        gamma[i][j] = (-refined.reduced_costs[k]).max(0.0);
    }
    let duals = ClearingDuals {
        alpha: (0..n).map(|i| y[reduced.lower_row(i)]).collect(),
        beta: (0..n).map(|i| y[reduced.upper_row(n, i)]).collect(),
        mu_plus: (0..nb).map(|l| y[reduced.plus_row(n, l)]).collect(),
        mu_minus: (0..nb).map(|l| y[reduced.minus_row(n, nb, l)]).collect(),
        gamma,
    };
    let declared_welfare = bids.iter().zip(&served).map(|(b, s)| b * s).sum();
    let true_welfare = instance.agents().iter().zip(&served).map(|(a, s)| a.voll * s).sum();
    let audit = instance.audit(&curtailment)?;
    Ok(ClearingOutcome {
        x,
        curtailment,
        served,
        duals,
        declared_welfare,
        true_welfare,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalPrices {
    /// One price per network bus, in bus order, $/MWh.
    pub prices: Vec<f64>,
    /// max − min over buses hosting at least one agent, $/MWh.
    pub wedge: f64,
    /// Agent whose bid fixed the price level.
    pub anchor_agent: usize,
}

/// `π_n = ρ − Σ_ℓ (μ⁺_ℓ − μ⁻_ℓ) Φ_{ℓn}`, with ρ chosen so the first
/// interior agent's bus is priced at its bid.
pub fn nodal_prices(instance: &MarketInstance, bids: &[f64], outcome: &ClearingOutcome) -> Result<NodalPrices> {
    check_bids(instance, bids)?;
    let interior = outcome.interior_agents(instance);
    let &anchor = interior.first().ok_or(Error::NoInteriorAgent)?;
    let net = instance.network();
    let congestion: Vec<f64> = (0..net.num_buses())
        .map(|n| {
            net.ptdf()
                .iter()
                .enumerate()
                .map(|(l, row)| (outcome.duals.mu_plus[l] - outcome.duals.mu_minus[l]) * row[n])
                .sum()
        })
        .collect();
    let cols = instance.agent_bus_indices();
    let rho = bids[anchor] + congestion[cols[anchor]];
    let prices: Vec<f64> = congestion.iter().map(|c| rho - c).collect();
    let (lo, hi) = cols
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(prices[k]), hi.max(prices[k])));
    Ok(NodalPrices {
        prices,
        wedge: hi - lo,
        anchor_agent: anchor,
    })
}
