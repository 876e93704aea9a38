//! DC network model: PTDF construction, injection accounting and flow audits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Audit tolerance on branch slacks, MW.
pub const AUDIT_TOL: f64 = 1e-6;

/// Largest entrywise disagreement accepted between a supplied PTDF row
/// and the one computed from reactances.
const PTDF_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub name: String,
    pub reference: bool,
}

/// Endpoints and reactance of a physical line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineData {
    pub from: u32,
    pub to: u32,
    pub reactance: f64,
}

/// A transmission element with directional limits. Interfaces carry a
/// supplied PTDF row; physical lines carry endpoints and a reactance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub label: String,
    pub f_plus: f64,
    pub f_minus: f64,
    pub line: Option<LineData>,
    pub ptdf_row: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    reference: usize,
    ptdf: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowAudit {
    pub flows: Vec<f64>,
    pub slack_plus: Vec<f64>,
    pub slack_minus: Vec<f64>,
    /// `+∞` when the network has no branches.
    pub min_slack: f64,
    pub feasible: bool,
}

impl Network {
    /// Builds a network, computing PTDF rows for branches given by
    /// reactance and checking supplied rows against them when both exist.
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self> {
        let refs: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.reference)
            .map(|(i, _)| i)
            .collect();
        if refs.len() != 1 {
            return Err(Error::InvalidNetwork(format!(
                "exactly one reference bus required, found {}",
                refs.len()
            )));
        }
        let reference = refs[0];
        for (k, a) in buses.iter().enumerate() {
            if buses[..k].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidNetwork(format!("duplicate bus id {}", a.id)));
            }
        }
        for (k, br) in branches.iter().enumerate() {
            if branches[..k].iter().any(|b| b.id == br.id) {
                return Err(Error::InvalidNetwork(format!("duplicate branch id {:?}", br.id)));
            }
            for (name, v) in [("f_plus", br.f_plus), ("f_minus", br.f_minus)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidNetwork(format!(
                        "branch {:?}: {name} must be positive and finite, got {v}",
                        br.id
                    )));
                }
            }
            if br.line.is_none() && br.ptdf_row.is_none() {
                return Err(Error::InvalidNetwork(format!(
                    "branch {:?} needs either a PTDF row or endpoints with a reactance",
                    br.id
                )));
            }
        }

        let ids: Vec<u32> = buses.iter().map(|b| b.id).collect();
        let lines: Vec<(usize, LineData)> = branches
            .iter()
            .enumerate()
            .filter_map(|(k, b)| b.line.map(|l| (k, l)))
            .collect();
        let computed = if lines.is_empty() {
            Vec::new()
        } else {
            let data: Vec<LineData> = lines.iter().map(|(_, l)| *l).collect();
            compute_ptdf(&ids, &data, buses[reference].id)?
        };

        let mut ptdf = vec![Vec::new(); branches.len()];
        for ((k, _), row) in lines.iter().zip(computed) {
            ptdf[*k] = row;
        }
        for (k, br) in branches.iter().enumerate() {
            let Some(supplied) = &br.ptdf_row else { continue };
            if supplied.len() != buses.len() {
                return Err(Error::InvalidNetwork(format!(
                    "branch {:?}: PTDF row has {} entries for {} buses",
                    br.id,
                    supplied.len(),
                    buses.len()
                )));
            }
            if supplied.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidNetwork(format!("branch {:?}: non-finite PTDF entry", br.id)));
            }
            if supplied[reference] != 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "branch {:?}: PTDF entry at the reference bus must be zero",
                    br.id
                )));
            }
            if br.line.is_some() {
                let gap = supplied
                    .iter()
                    .zip(&ptdf[k])
                    .fold(0.0_f64, |a, (s, c)| a.max((s - c).abs()));
                if gap > PTDF_CONSISTENCY_TOL {
                    return Err(Error::InvalidNetwork(format!(
                        "branch {:?}: supplied PTDF row differs from the reactance-based row by {gap}",
                        br.id
                    )));
                }
            } else {
                ptdf[k] = supplied.clone();
            }
        }
        Ok(Self {
            buses,
            branches,
            reference,
            ptdf,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn reference_index(&self) -> usize {
        self.reference
    }

    /// Rows follow branch order, columns follow bus order.
    pub fn ptdf(&self) -> &[Vec<f64>] {
        &self.ptdf
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    /// Copy with the limits of one branch replaced.
    pub fn with_limits(&self, branch: usize, f_plus: f64, f_minus: f64) -> Result<Self> {
        if branch >= self.branches.len() {
            return Err(Error::UnknownBranch(branch.to_string()));
        }
        for v in [f_plus, f_minus] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidNetwork(format!("branch limit must be positive and finite, got {v}")));
            }
        }
        let mut out = self.clone();
        out.branches[branch].f_plus = f_plus;
        out.branches[branch].f_minus = f_minus;
        Ok(out)
    }

    /// Copy with every branch dropped (copperplate).
    pub fn without_branches(&self) -> Self {
        Self {
            buses: self.buses.clone(),
            branches: Vec::new(),
            reference: self.reference,
            ptdf: Vec::new(),
        }
    }

    pub fn line_flows(&self, delta_p: &[f64]) -> Vec<f64> {
        self.ptdf
            .iter()
            .map(|row| row.iter().zip(delta_p).map(|(phi, p)| phi * p).sum())
            .collect()
    }

    pub fn audit(&self, delta_p: &[f64]) -> FlowAudit {
        let flows = self.line_flows(delta_p);
        let slack_plus: Vec<f64> = self.branches.iter().zip(&flows).map(|(b, f)| b.f_plus - f).collect();
        let slack_minus: Vec<f64> = self.branches.iter().zip(&flows).map(|(b, f)| b.f_minus + f).collect();
        let min_slack = slack_plus
            .iter()
            .chain(&slack_minus)
            .fold(f64::INFINITY, |a, &s| a.min(s));
        FlowAudit {
            feasible: min_slack >= -AUDIT_TOL,
            flows,
            slack_plus,
            slack_minus,
            min_slack,
        }
    }
}

/// DC power transfer distribution factors for lines given by endpoints and
/// reactance. Row ℓ, column n is the flow on line ℓ (positive from `from`
/// to `to`) caused by 1 MW injected at bus n and withdrawn at the reference.
pub fn compute_ptdf(buses: &[u32], lines: &[LineData], reference: u32) -> Result<Vec<Vec<f64>>> {
    let n = buses.len();
    let index = |id: u32| {
        buses
            .iter()
            .position(|&b| b == id)
            .ok_or_else(|| Error::UnknownBus(id.to_string()))
    };
    let r = index(reference)?;
    let mut ends = Vec::with_capacity(lines.len());
    for l in lines {
        if !(l.reactance.is_finite() && l.reactance > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "line {}-{} has non-positive reactance {}",
                l.from, l.to, l.reactance
            )));
        }
        let (f, t) = (index(l.from)?, index(l.to)?);
        if f == t {
            return Err(Error::InvalidNetwork(format!("line {}-{} is a self-loop", l.from, l.to)));
        }
        ends.push((f, t, 1.0 / l.reactance));
    }

    // connectivity first so the error names the cause
    let mut seen = vec![false; n];
    let mut stack = vec![r];
    seen[r] = true;
    while let Some(u) = stack.pop() {
        for &(f, t, _) in &ends {
            for (a, b) in [(f, t), (t, f)] {
                if a == u && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::SingularTopology(format!(
            "bus {} is not connected to the reference bus",
            buses[k]
        )));
    }

    // reduced susceptance matrix without the reference row/column
    let map: Vec<Option<usize>> = (0..n)
        .map(|k| match k.cmp(&r) {
            std::cmp::Ordering::Less => Some(k),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(k - 1),
        })
        .collect();
    let m = n - 1;
    let mut b = DMatrix::<f64>::zeros(m, m);
    for &(f, t, y) in &ends {
        if let Some(a) = map[f] {
            b[(a, a)] += y;
        }
        if let Some(c) = map[t] {
            b[(c, c)] += y;
        }
        if let (Some(a), Some(c)) = (map[f], map[t]) {
            b[(a, c)] -= y;
            b[(c, a)] -= y;
        }
    }
    let theta = if m == 0 {
        DMatrix::<f64>::zeros(0, 0)
    } else {
        b.lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularTopology("susceptance matrix is singular".into()))?
    };

    let mut ptdf = Vec::with_capacity(ends.len());
    for &(f, t, y) in &ends {
        let mut row = vec![0.0; n];
        for (k, slot) in row.iter_mut().enumerate() {
            let Some(kk) = map[k] else { continue };
            let tf = map[f].map_or(0.0, |a| theta[(a, kk)]);
            let tt = map[t].map_or(0.0, |c| theta[(c, kk)]);
            *slot = y * (tf - tt);
        }
        ptdf.push(row);
    }
    Ok(ptdf)
}

/// Net injection change per bus, `ΔP_n = Σ_{i at n} (c_i − d̄_i)`.
pub fn injection_deltas(network: &Network, agent_buses: &[u32], obligations: &[f64], curtailment: &[f64]) -> Result<Vec<f64>> {
    if agent_buses.len() != obligations.len() || obligations.len() != curtailment.len() {
        return Err(Error::InvalidArgument(format!(
            "agent vectors differ in length ({}, {}, {})",
            agent_buses.len(),
            obligations.len(),
            curtailment.len()
        )));
    }
    let mut dp = vec![0.0; network.num_buses()];
    for ((&bus, &d), &c) in agent_buses.iter().zip(obligations).zip(curtailment) {
        let k = network.bus_index(bus).ok_or_else(|| Error::UnknownBus(bus.to_string()))?;
        dp[k] += c - d;
    }
    Ok(dp)
}
