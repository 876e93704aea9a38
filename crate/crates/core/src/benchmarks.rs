//! Fixed-rule and planner benchmarks, and welfare accounting.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{lex_refine_from, solve_lp, LpProblem, LpStatus};
use crate::market::{clear, MarketInstance};
use crate::network::FlowAudit;

/// Slack allowed when checking `0 ≤ c ≤ L`, MW.
const BOUND_TOL: f64 = 1e-6;

pub fn admin_allocation(instance: &MarketInstance) -> Vec<f64> {
    instance.obligations()
}

pub fn prorata_allocation(instance: &MarketInstance) -> Vec<f64> {
    let total: f64 = instance.loads().iter().sum();
    let rate = instance.target() / total;
    instance.loads().iter().map(|l| l * rate).collect()
}

/// `W = Σ v_i (L_i − c_i)`.
pub fn welfare(instance: &MarketInstance, curtailment: &[f64], valuations: &[f64]) -> Result<f64> {
    if curtailment.len() != instance.num_agents() || valuations.len() != instance.num_agents() {
        return Err(Error::InvalidArgument("vector length does not match the agent count".into()));
    }
    let mut w = 0.0;
    for (i, (a, (&c, &v))) in instance.agents().iter().zip(curtailment.iter().zip(valuations)).enumerate() {
        if !(c >= -BOUND_TOL && c <= a.load + BOUND_TOL) {
            return Err(Error::BoundViolation {
                agent: i,
                value: c,
                load: a.load,
            });
        }
        w += v * (a.load - c);
    }
    Ok(w)
}

pub fn efficiency_ratio(w_ccm: f64, w_plan: f64) -> Result<f64> {
    if w_plan <= 0.0 || !w_plan.is_finite() {
        return Err(Error::DegenerateDenominator(w_plan));
    }
    Ok(w_ccm / w_plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerResult {
    pub curtailment: Vec<f64>,
    pub welfare: f64,
    /// Multipliers of the PTDF rows (empty when unconstrained).
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
}

/// Welfare-maximizing curtailment over `{Σc = D, 0 ≤ c ≤ L}`, optionally
/// restricted by the PTDF limits. Ties are broken lexicographically in
/// agent order.
pub fn planner(instance: &MarketInstance, valuations: &[f64], network_constrained: bool) -> Result<PlannerResult> {
    let n = instance.num_agents();
    if valuations.len() != n {
        return Err(Error::InvalidArgument(format!("{} valuations for {n} agents", valuations.len())));
    }
    let agents = instance.agents();
    let mut lp = LpProblem::maximize(valuations.iter().map(|v| -v).collect());
    lp.equal(vec![1.0; n], instance.target());
    for (i, a) in agents.iter().enumerate() {
        lp.set_bounds(i, 0.0, a.load);
    }
    let net = instance.network();
    let cols = instance.agent_bus_indices();
    let nb = if network_constrained { net.num_branches() } else { 0 };
    // Σ_i Φ_{ℓ,n(i)} (c_i − d̄_i) within [−F⁻, F⁺]
    for sign in [1.0, -1.0] {
        for (row, br) in net.ptdf().iter().zip(net.branches()).take(nb) {
            let coef: Vec<f64> = cols.iter().map(|&k| sign * row[k]).collect();
            let base: f64 = coef.iter().zip(agents).map(|(c, a)| c * a.obligation).sum();
            let limit = if sign > 0.0 { br.f_plus } else { br.f_minus };
            lp.less_eq(coef, limit + base);
        }
    }
    let first = solve_lp(&lp)?;
    if first.status != LpStatus::Optimal {
        return Err(Error::SolverFailure(format!(
            "planner LP reported {:?}; the obligation vector should always be feasible",
            first.status
        )));
    }
    let order: Vec<usize> = (0..n).collect();
    let refined = lex_refine_from(&lp, &first, &order)?;
    let curtailment: Vec<f64> = refined
        .primal
        .iter()
        .zip(agents)
        .map(|(c, a)| c.clamp(0.0, a.load))
        .collect();
    let welfare = welfare(instance, &curtailment, valuations)?;
    Ok(PlannerResult {
        curtailment,
        welfare,
        mu_plus: refined.duals[1..1 + nb].to_vec(),
        mu_minus: refined.duals[1 + nb..1 + 2 * nb].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Administrative,
    ProRata,
    Ccm,
    Planner,
    Copperplate,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Administrative,
        Regime::ProRata,
        Regime::Ccm,
        Regime::Planner,
        Regime::Copperplate,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Regime::Administrative => "admin",
            Regime::ProRata => "prorata",
            Regime::Ccm => "ccm",
            Regime::Planner => "planner",
            Regime::Copperplate => "copperplate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.label() == s)
    }
}

/// Curtailment chosen by `regime` under truthful reports.
pub fn regime_allocation(instance: &MarketInstance, regime: Regime) -> Result<Vec<f64>> {
    let v = instance.volls();
    Ok(match regime {
        Regime::Administrative => admin_allocation(instance),
        Regime::ProRata => prorata_allocation(instance),
        Regime::Ccm => clear(instance, &v)?.curtailment,
        Regime::Planner => planner(instance, &v, true)?.curtailment,
        Regime::Copperplate => planner(instance, &v, false)?.curtailment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub regime: Regime,
    pub curtailment: Vec<f64>,
    pub welfare: f64,
    /// Audit against the real network; copperplate rows may fail it.
    pub audit: FlowAudit,
    pub vs_admin: f64,
    pub vs_prorata: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub rows: Vec<RegimeRow>,
    /// `W_copperplate − W_planner`.
    pub congestion_cost: f64,
}

impl RegimeReport {
    pub fn row(&self, regime: Regime) -> &RegimeRow {
        self.rows.iter().find(|r| r.regime == regime).expect("every regime is reported")
    }
}

pub fn regime_report(instance: &MarketInstance) -> Result<RegimeReport> {
    let v = instance.volls();
    let allocations: Vec<(Regime, Vec<f64>)> = Regime::ALL
        .par_iter()
        .map(|&r| regime_allocation(instance, r).map(|c| (r, c)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(allocations.len());
    for (regime, c) in allocations {
        rows.push(RegimeRow {
            regime,
            welfare: welfare(instance, &c, &v)?,
            audit: instance.audit(&c)?,
            curtailment: c,
            vs_admin: 0.0,
            vs_prorata: 0.0,
        });
    }
    let w_admin = rows[0].welfare;
    let w_prorata = rows[1].welfare;
    for r in &mut rows {
        r.vs_admin = r.welfare / w_admin;
        r.vs_prorata = r.welfare / w_prorata;
    }
    let mut report = RegimeReport { rows, congestion_cost: 0.0 };
    report.congestion_cost = report.row(Regime::Copperplate).welfare - report.row(Regime::Planner).welfare;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn threebus_fixed_rules() {
        let inst = bundled("threebus").unwrap();
        let v = inst.volls();
        let admin = welfare(&inst, &admin_allocation(&inst), &v).unwrap();
        assert!((admin - 9_965_000.0).abs() < 1e-6);
        let pr = prorata_allocation(&inst);
        assert!((pr.iter().sum::<f64>() - 230.0).abs() < 1e-9);
        let w = welfare(&inst, &pr, &v).unwrap();
        assert!((w - 8_779_765.625).abs() < 1e-3, "{w}");
    }

    #[test]
    fn threebus_planner_and_copperplate() {
        let inst = bundled("threebus").unwrap();
        let v = inst.volls();
        let p = planner(&inst, &v, true).unwrap();
        assert!((p.welfare - 13_260_000.0).abs() < 1e-2);
        let cp = planner(&inst, &v, false).unwrap();
        assert!((cp.welfare - 13_300_000.0).abs() < 1e-2);
    }

    #[test]
    fn out_of_bounds_curtailment() {
        let inst = bundled("threebus").unwrap();
        let mut c = admin_allocation(&inst);
        c[0] = 201.0;
        assert!(matches!(
            welfare(&inst, &c, &inst.volls()),
            Err(Error::BoundViolation { agent: 0, .. })
        ));
    }

    #[test]
    fn ratio_edge_cases() {
        assert_eq!(efficiency_ratio(0.0, 5.0).unwrap(), 0.0);
        assert!(matches!(efficiency_ratio(1.0, 0.0), Err(Error::DegenerateDenominator(_))));
    }

    #[test]
    fn admin_row_is_feasible() {
        let inst = bundled("nygrid").unwrap();
        let report = regime_report(&inst).unwrap();
        assert!(report.row(Regime::Administrative).audit.feasible);
        assert!(!report.row(Regime::Copperplate).audit.feasible);
    }
}
