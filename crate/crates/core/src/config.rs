//! TOML configuration files.
//!
//! ```toml
//! M = 2
//! N = 12
//! Kbar = 2
//! V = 10.0
//! V0 = "auto"            # or a positive number
//! uplink_mode = "direct" # or "physical"
//! uplink_kappa_pmf = [0.5, 0.5]
//! lambda = [[0.9, 0.7], [0.8, 0.6]]
//! policy = "dpp"
//! ```
//!
//! Physical mode needs `channel_states` (gains) and `channel_transition`, and uses
//! `lengths`, `bandwidth`, `slot_duration`, `power_sn`, `noise_bs`; link fields
//! default to `LinkBudget::default()` and lengths to 1000 bits.

use std::path::Path;

use serde::Deserialize;

use crate::model::{AgeDriftWeight, ChannelModel, LinkBudget, SystemConfig, UplinkModel};
use crate::policies::PolicyKind;
use crate::region::ArrivalMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum DriftWeightField {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "M")]
    sources: usize,
    #[serde(rename = "N")]
    slots: usize,
    #[serde(rename = "Kbar")]
    max_cost: usize,
    #[serde(rename = "V", default = "default_tradeoff")]
    tradeoff: f64,
    #[serde(rename = "V0")]
    drift_weight: Option<DriftWeightField>,
    lengths: Option<Vec<f64>>,
    bandwidth: Option<f64>,
    slot_duration: Option<f64>,
    power_sn: Option<f64>,
    power_bs: Option<f64>,
    noise_bs: Option<f64>,
    noise_mu: Option<f64>,
    uplink_mode: Option<String>,
    uplink_kappa_pmf: Option<Vec<f64>>,
    channel_states: Option<Vec<f64>>,
    channel_transition: Option<Vec<Vec<f64>>>,
    lambda: Vec<Vec<f64>>,
    policy: Option<String>,
    window_thresholds: Option<Vec<u64>>,
}

fn default_tradeoff() -> f64 {
    1.0
}

/// A parsed file: the system plus the run-level choices it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub system: SystemConfig,
    pub policy: Option<PolicyKind>,
    pub window_thresholds: Option<Vec<u64>>,
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    let defaults = LinkBudget::default();
    let link = LinkBudget {
        bandwidth: raw.bandwidth.unwrap_or(defaults.bandwidth),
        slot_duration: raw.slot_duration.unwrap_or(defaults.slot_duration),
        power_sn: raw.power_sn.unwrap_or(defaults.power_sn),
        power_bs: raw.power_bs.unwrap_or(defaults.power_bs),
        noise_bs: raw.noise_bs.unwrap_or(defaults.noise_bs),
        noise_mu: raw.noise_mu.unwrap_or(defaults.noise_mu),
    };

    let drift_weight = match raw.drift_weight {
        None => AgeDriftWeight::Auto,
        Some(DriftWeightField::Value(v)) => AgeDriftWeight::Fixed(v),
        Some(DriftWeightField::Keyword(k)) if k == "auto" => AgeDriftWeight::Auto,
        Some(DriftWeightField::Keyword(k)) => {
            return Err(Error::Config(format!("V0 must be \"auto\" or a number, got {k:?}")))
        }
    };

    let uplink = match raw.uplink_mode.as_deref().unwrap_or("direct") {
        "direct" => UplinkModel::Direct {
            pmf: raw
                .uplink_kappa_pmf
                .ok_or_else(|| Error::Config("direct uplink mode needs uplink_kappa_pmf".into()))?,
        },
        "physical" => {
            let gains = raw
                .channel_states
                .ok_or_else(|| Error::Config("physical uplink mode needs channel_states".into()))?;
            let transition = raw
                .channel_transition
                .ok_or_else(|| Error::Config("physical uplink mode needs channel_transition".into()))?;
            UplinkModel::Physical {
                channel: ChannelModel::new(gains, transition)?,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "uplink_mode must be direct or physical, got {other:?}"
            )))
        }
    };

    let arrivals = ArrivalMatrix::from_rows(&raw.lambda).map_err(|e| Error::Config(format!("lambda: {e}")))?;
    let system = SystemConfig {
        sources: raw.sources,
        slots: raw.slots,
        max_downlink_cost: raw.max_cost,
        message_lengths: raw.lengths.unwrap_or_else(|| vec![1000.0; raw.sources]),
        link,
        tradeoff: raw.tradeoff,
        drift_weight,
        uplink,
        arrivals,
    };
    system.validate()?;

    let policy = raw.policy.as_deref().map(str::parse).transpose()?;
    if let Some(w) = &raw.window_thresholds {
        if w.len() != system.sources || w.contains(&0) {
            return Err(Error::Config(format!(
                "window_thresholds needs {} positive entries",
                system.sources
            )));
        }
    }
    Ok(FileConfig {
        system,
        policy,
        window_thresholds: raw.window_thresholds,
    })
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
