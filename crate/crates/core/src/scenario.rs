//! JSON scenario files and the bundled test systems.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{validate_instance, Agent, MarketInstance};
use crate::network::{Branch, Bus, LineData, Network};

pub const SCHEMA_VERSION: u32 = 1;

const THREEBUS: &str = include_str!("../scenarios/threebus.json");
const NYGRID: &str = include_str!("../scenarios/nygrid.json");
const IEEE24: &str = include_str!("../scenarios/ieee24.json");

pub const BUNDLED: [&str; 3] = ["threebus", "nygrid", "ieee24"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub network: NetworkSpec,
    pub agents: Vec<AgentSpec>,
    pub target_mw: f64,
    #[serde(default)]
    pub obligation_rule: ObligationRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derating: Option<DeratingSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub f_plus_mw: f64,
    pub f_minus_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptdf_row: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub bus: u32,
    pub load_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obligation_mw: Option<f64>,
    pub voll_per_mwh: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObligationRule {
    #[default]
    Explicit,
    Prorata,
}

/// Multiplies the limits of the listed branches by `factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeratingSpec {
    pub factor: f64,
    pub branches: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadOptions {
    /// Replaces the derating factor declared in the file.
    pub derating: Option<f64>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<MarketInstance> {
    load_scenario_with(path, LoadOptions::default())
}

pub fn load_scenario_with(path: impl AsRef<Path>, options: LoadOptions) -> Result<MarketInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string(), options)
}

/// Loads a bundled scenario by name.
pub fn bundled(name: &str) -> Result<MarketInstance> {
    bundled_with(name, LoadOptions::default())
}

pub fn bundled_with(name: &str, options: LoadOptions) -> Result<MarketInstance> {
    parse_scenario(bundled_text(name)?, name, options)
}

pub fn bundled_text(name: &str) -> Result<&'static str> {
    match name {
        "threebus" => Ok(THREEBUS),
        "nygrid" => Ok(NYGRID),
        "ieee24" => Ok(IEEE24),
        other => Err(Error::InvalidArgument(format!(
            "no bundled scenario named {other:?} (available: {})",
            BUNDLED.join(", ")
        ))),
    }
}

pub fn parse_file(text: &str, context: &str) -> Result<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })
}

pub fn parse_scenario(text: &str, context: &str, options: LoadOptions) -> Result<MarketInstance> {
    let file = parse_file(text, context)?;
    file.into_instance(context, options)
}

fn parse_err(context: &str, message: String) -> Error {
    Error::Parse {
        context: context.to_string(),
        message,
    }
}

impl ScenarioFile {
    pub fn into_instance(self, context: &str, options: LoadOptions) -> Result<MarketInstance> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(parse_err(
                context,
                format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let buses: Vec<Bus> = self
            .network
            .buses
            .into_iter()
            .map(|b| Bus {
                name: if b.name.is_empty() { format!("Bus {}", b.id) } else { b.name },
                id: b.id,
                reference: b.reference,
            })
            .collect();

        let mut branches = Vec::with_capacity(self.network.branches.len());
        for (k, b) in self.network.branches.into_iter().enumerate() {
            let line = match (b.from, b.to, b.reactance) {
                (Some(from), Some(to), Some(reactance)) => Some(LineData { from, to, reactance }),
                (None, None, None) => None,
                _ => {
                    return Err(parse_err(
                        context,
                        format!("network.branches[{k}] ({}): from, to and reactance must be given together", b.id),
                    ))
                }
            };
            if line.is_none() && b.ptdf_row.is_none() {
                return Err(parse_err(
                    context,
                    format!("network.branches[{k}] ({}): missing field `ptdf_row` (or from/to/reactance)", b.id),
                ));
            }
            branches.push(Branch {
                label: if b.label.is_empty() { b.id.clone() } else { b.label },
                id: b.id,
                f_plus: b.f_plus_mw,
                f_minus: b.f_minus_mw,
                line,
                ptdf_row: b.ptdf_row,
            });
        }

        if let Some(d) = &self.derating {
            let factor = options.derating.unwrap_or(d.factor);
            if !(factor.is_finite() && factor > 0.0) {
                return Err(Error::InvalidArgument(format!("derating factor {factor} must be positive")));
            }
            for id in &d.branches {
                let br = branches
                    .iter_mut()
                    .find(|b| &b.id == id)
                    .ok_or_else(|| parse_err(context, format!("derating.branches names unknown branch {id:?}")))?;
                br.f_plus *= factor;
                br.f_minus *= factor;
            }
        } else if options.derating.is_some() {
            return Err(Error::InvalidArgument("scenario declares no derating section".into()));
        }

        let network = Network::new(buses, branches)?;

        let total_load: f64 = self.agents.iter().map(|a| a.load_mw).sum();
        let mut agents = Vec::with_capacity(self.agents.len());
        for (k, a) in self.agents.into_iter().enumerate() {
            let obligation = match self.obligation_rule {
                ObligationRule::Explicit => a.obligation_mw.ok_or_else(|| {
                    parse_err(context, format!("agents[{k}] ({}): missing field `obligation_mw`", a.name))
                })?,
                ObligationRule::Prorata => {
                    if a.obligation_mw.is_some() {
                        return Err(parse_err(
                            context,
                            format!("agents[{k}] ({}): `obligation_mw` conflicts with obligation_rule prorata", a.name),
                        ));
                    }
                    a.load_mw * self.target_mw / total_load
                }
            };
            agents.push(Agent {
                name: a.name,
                bus: a.bus,
                load: a.load_mw,
                obligation,
                voll: a.voll_per_mwh,
            });
        }
        validate_instance(network, agents, self.target_mw)
    }

    /// Scenario file describing `instance` with explicit obligations and
    /// effective branch limits.
    pub fn from_instance(instance: &MarketInstance) -> Self {
        let net = instance.network();
        Self {
            schema_version: SCHEMA_VERSION,
            name: None,
            description: None,
            network: NetworkSpec {
                buses: net
                    .buses()
                    .iter()
                    .map(|b| BusSpec {
                        id: b.id,
                        name: b.name.clone(),
                        reference: b.reference,
                    })
                    .collect(),
                branches: net
                    .branches()
                    .iter()
                    .map(|b| BranchSpec {
                        id: b.id.clone(),
                        label: b.label.clone(),
                        f_plus_mw: b.f_plus,
                        f_minus_mw: b.f_minus,
                        ptdf_row: b.ptdf_row.clone(),
                        from: b.line.map(|l| l.from),
                        to: b.line.map(|l| l.to),
                        reactance: b.line.map(|l| l.reactance),
                    })
                    .collect(),
            },
            agents: instance
                .agents()
                .iter()
                .map(|a| AgentSpec {
                    name: a.name.clone(),
                    bus: a.bus,
                    load_mw: a.load,
                    obligation_mw: Some(a.obligation),
                    voll_per_mwh: a.voll,
                })
                .collect(),
            target_mw: instance.target(),
            obligation_rule: ObligationRule::Explicit,
            derating: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }
}
