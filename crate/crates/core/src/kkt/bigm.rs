use serde::Serialize;

use super::{assemble_kkt, KktSystem, PairKind};
use crate::error::{Error, Result};
use crate::market::MarketInstance;

pub const DEFAULT_KAPPA: f64 = 10.0;

/// `|ΔΦ|` at or below this is treated as a co-located pair.
const DPHI_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BigMConfig {
    /// Headroom multiplier on the largest bid.
    pub kappa: f64,
    /// Absolute cap on the branch multipliers used when no PTDF difference
    /// is available to derive one.
    pub fallback_dual_cap: Option<f64>,
}

impl Default for BigMConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            fallback_dual_cap: None,
        }
    }
}

/// Per-pair bounds in the order of [`KktSystem::complementarity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BigM {
    /// Bound on the dual side of each pair.
    pub dual: Vec<f64>,
    /// Bound on the primal slack of each pair.
    pub primal: Vec<f64>,
    pub scale: f64,
    pub kappa: f64,
    pub fallback_used: bool,
}

pub fn big_m_bounds(instance: &MarketInstance, bids: &[f64], scale: f64) -> Result<BigM> {
    big_m_bounds_with(instance, bids, scale, &BigMConfig::default())
}

pub fn big_m_bounds_with(instance: &MarketInstance, bids: &[f64], scale: f64, config: &BigMConfig) -> Result<BigM> {
    let kkt = assemble_kkt(instance, bids)?;
    bounds_for(&kkt, scale, config)
}

pub(crate) fn bounds_for(kkt: &KktSystem, scale: f64, config: &BigMConfig) -> Result<BigM> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("big-M scale {scale} must be positive")));
    }
    if !(config.kappa.is_finite() && config.kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa {} must be positive", config.kappa)));
    }
    let b_max = kkt.bids.iter().fold(0.0_f64, |a, &b| a.max(b));
    let dual_base = config.kappa * if b_max > 0.0 { b_max } else { 1.0 };

    // smallest non-zero |ΔΦ| over all branches and pairs; co-located pairs never enter
    let min_dphi = kkt
        .dphi
        .iter()
        .flatten()
        .map(|v| v.abs())
        .filter(|&v| v > DPHI_ZERO)
        .reduce(f64::min);
    let mut fallback_used = false;
    let mu_bound = match min_dphi {
        Some(d) => dual_base / d,
        None if kkt.num_branches() == 0 => dual_base,
        None => {
            fallback_used = true;
            config.fallback_dual_cap.ok_or(Error::DegeneratePtdf)?
        }
    };

    let mut dual = Vec::with_capacity(kkt.complementarity.len());
    let mut primal = Vec::with_capacity(kkt.complementarity.len());
    for p in &kkt.complementarity {
        let (md, mp) = match p.kind {
            PairKind::AgentLower | PairKind::AgentUpper => (dual_base, kkt.loads[p.index]),
            PairKind::PtdfPlus | PairKind::PtdfMinus => {
                (mu_bound, kkt.f_plus[p.index] + kkt.f_minus[p.index])
            }
            PairKind::CreditNonneg => (dual_base, kkt.target),
        };
        dual.push(md * scale);
        primal.push(mp.max(f64::MIN_POSITIVE) * scale);
    }
    Ok(BigM {
        dual,
        primal,
        scale,
        kappa: config.kappa,
        fallback_used,
    })
}
