//! VCG (Clarke pivot) and uniform-price settlement.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{check_bids, clear, ClearingOutcome, MarketInstance, INTERIOR_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SettlementRule {
    Vcg,
    UniformPrice,
}

impl SettlementRule {
    pub fn label(self) -> &'static str {
        match self {
            SettlementRule::Vcg => "vcg",
            SettlementRule::UniformPrice => "up",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlementReport {
    pub rule: SettlementRule,
    /// Positive means the agent pays.
    pub payments: Vec<f64>,
    /// VCG: `v_i s_i − p_i`; UP: `v_i s_i + π (c_i − d̄_i)`.
    pub surpluses: Vec<f64>,
    /// Uniform price, $/MWh (UP only).
    pub price: Option<f64>,
    /// Set when no agent was interior and the price fell back to the
    /// highest net-seller bid.
    pub price_fallback: bool,
    pub budget: f64,
    pub deficit: bool,
    pub outcome: ClearingOutcome,
    /// Clearing solves performed.
    pub solves: usize,
}

/// The market without agent `i`; the excluded agent is frozen at its
/// obligation, so the target drops by `d̄_i` and the network is unchanged.
pub fn leave_one_out(instance: &MarketInstance, i: usize) -> Result<MarketInstance> {
    if instance.num_agents() <= 1 {
        return Err(Error::LastAgent);
    }
    if i >= instance.num_agents() {
        return Err(Error::InvalidArgument(format!("agent index {i} out of range")));
    }
    instance.without_agent(i)
}

/// Declared welfare of the others when agent `i` is excluded,
/// `Σ_{j≠i} b_j s_j^{(−i)}`. Zero when `i` is the only agent.
pub fn excluded_welfare(instance: &MarketInstance, bids: &[f64], i: usize) -> Result<f64> {
    if instance.num_agents() == 1 {
        return Ok(0.0);
    }
    let loo = leave_one_out(instance, i)?;
    let others: Vec<f64> = bids.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &b)| b).collect();
    Ok(clear(&loo, &others)?.declared_welfare)
}

/// Clarke pivot payment of agent `i` given the others' welfare without it.
pub fn clarke_payment(outcome: &ClearingOutcome, bids: &[f64], i: usize, excluded: f64) -> f64 {
    let others_now = outcome.declared_welfare - bids[i] * outcome.served[i];
    excluded - others_now
}

pub fn vcg_settle(instance: &MarketInstance, bids: &[f64], valuations: &[f64]) -> Result<SettlementReport> {
    check_bids(instance, bids)?;
    check_lengths(instance, valuations)?;
    let n = instance.num_agents();
    let outcome = clear(instance, bids)?;
    let excluded: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| excluded_welfare(instance, bids, i))
        .collect::<Result<_>>()?;
    let payments: Vec<f64> = (0..n).map(|i| clarke_payment(&outcome, bids, i, excluded[i])).collect();
    let surpluses: Vec<f64> = (0..n)
        .map(|i| valuations[i] * outcome.served[i] - payments[i])
        .collect();
    let budget: f64 = payments.iter().sum();
    Ok(SettlementReport {
        rule: SettlementRule::Vcg,
        payments,
        surpluses,
        price: None,
        price_fallback: false,
        deficit: budget < 0.0,
        budget,
        outcome,
        solves: if n > 1 { n + 1 } else { 1 },
    })
}

/// Uniform price for a refined clearing: the lowest bid among interior
/// agents, or the highest bid among net sellers when none is interior.
pub fn uniform_price(instance: &MarketInstance, bids: &[f64], outcome: &ClearingOutcome) -> (f64, bool) {
    let interior = outcome.interior_agents(instance);
    if let Some(p) = interior.iter().map(|&i| bids[i]).reduce(f64::min) {
        return (p, false);
    }
    let sellers = instance
        .agents()
        .iter()
        .zip(&outcome.curtailment)
        .enumerate()
        .filter(|(_, (a, &c))| c - a.obligation > INTERIOR_TOL)
        .map(|(i, _)| bids[i]);
    (sellers.reduce(f64::max).unwrap_or(0.0), true)
}

pub fn up_settle(instance: &MarketInstance, bids: &[f64], valuations: &[f64]) -> Result<SettlementReport> {
    check_bids(instance, bids)?;
    check_lengths(instance, valuations)?;
    let outcome = clear(instance, bids)?;
    let (price, price_fallback) = uniform_price(instance, bids, &outcome);
    let agents = instance.agents();
    let payments: Vec<f64> = agents
        .iter()
        .zip(&outcome.curtailment)
        .map(|(a, c)| -price * (c - a.obligation))
        .collect();
    let surpluses: Vec<f64> = (0..agents.len())
        .map(|i| valuations[i] * outcome.served[i] - payments[i])
        .collect();
    let budget: f64 = payments.iter().sum();
    Ok(SettlementReport {
        rule: SettlementRule::UniformPrice,
        payments,
        surpluses,
        price: Some(price),
        price_fallback,
        deficit: budget < -1e-6 * (1.0 + price * instance.target()),
        budget,
        outcome,
        solves: 1,
    })
}

pub fn settle(rule: SettlementRule, instance: &MarketInstance, bids: &[f64], valuations: &[f64]) -> Result<SettlementReport> {
    match rule {
        SettlementRule::Vcg => vcg_settle(instance, bids, valuations),
        SettlementRule::UniformPrice => up_settle(instance, bids, valuations),
    }
}

fn check_lengths(instance: &MarketInstance, valuations: &[f64]) -> Result<()> {
    if valuations.len() != instance.num_agents() {
        return Err(Error::InvalidArgument(format!(
            "{} valuations for {} agents",
            valuations.len(),
            instance.num_agents()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn loo_targets() {
        let inst = bundled("threebus").unwrap();
        assert_eq!(leave_one_out(&inst, 0).unwrap().target(), 180.0);
        let ny = bundled("nygrid").unwrap();
        let d = leave_one_out(&ny, 4).unwrap().target();
        assert!((d - (6815.0 - 5993.0 * 6815.0 / 15612.0)).abs() < 1e-9);
    }

    #[test]
    fn threebus_vcg() {
        let inst = bundled("threebus").unwrap();
        let v = inst.volls();
        let r = vcg_settle(&inst, &v, &v).unwrap();
        assert_eq!(r.solves, 7);
        assert!((r.payments[0] - 255_000.0).abs() < 1e-2, "{:?}", r.payments);
        assert!((r.surpluses[0] - 9_745_000.0).abs() < 1e-2);
        let total: f64 = r.surpluses.iter().sum();
        assert!((total - (r.outcome.true_welfare - r.budget)).abs() < 1e-4 * total);
    }

    #[test]
    fn threebus_up_truthful() {
        let inst = bundled("threebus").unwrap();
        let v = inst.volls();
        let r = up_settle(&inst, &v, &v).unwrap();
        assert_eq!(r.price, Some(1000.0));
        assert!(!r.price_fallback);
        assert!((r.surpluses[4] - 20_000.0).abs() < 1e-3);
        assert!(r.budget.abs() < 1e-4);
    }

    #[test]
    fn single_agent_settlements() {
        let inst = bundled("threebus").unwrap();
        let solo = crate::market::validate_instance(inst.network().clone(), vec![inst.agents()[2].clone()], 30.0).unwrap();
        assert!(matches!(leave_one_out(&solo, 0), Err(Error::LastAgent)));
        let up = up_settle(&solo, &[5000.0], &[5000.0]).unwrap();
        assert!((up.surpluses[0] - 5000.0 * 70.0).abs() < 1e-9);
        let vcg = vcg_settle(&solo, &[5000.0], &[5000.0]).unwrap();
        assert_eq!(vcg.payments, vec![0.0]);
    }
}
