//! TOML configuration files and the fixed-channel file used by `jppc solve`.
//!
//! Powers and noise are given in dBm, distances in meters. UE requirements
//! are read in the units named by `requirement_units` (`nats`,
//! `sinr-linear` or `sinr-db`) and converted to nats on load. Unknown keys
//! are rejected so typos surface with the key name. See `configs/` in the
//! repository for complete examples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backhaul::OrderStrategy;
use crate::experiments::{RadioParams, SinrUnits, SweepSpec, TopologyParams};
use crate::jppc::Scheme;
use crate::scenario::{
    dbm_to_watts, sinr_to_rate, CellConfig, ChannelRealization, NetworkScenario, UeConfig, DEFAULT_CARRIER_GHZ,
};
use crate::{CVector, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequirementUnits {
    Nats,
    #[default]
    SinrLinear,
    SinrDb,
}

impl RequirementUnits {
    pub fn to_nats(self, value: f64) -> f64 {
        match self {
            RequirementUnits::Nats => value,
            RequirementUnits::SinrLinear => sinr_to_rate(value),
            RequirementUnits::SinrDb => sinr_to_rate(crate::scenario::db_to_linear(value)),
        }
    }
}

fn default_carrier() -> f64 {
    DEFAULT_CARRIER_GHZ
}

fn default_share() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeEntry {
    pub distances_to_scbs_m: Vec<f64>,
    pub requirement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub backhaul_distance_m: f64,
    /// Overrides the file-level `scbs_power_dbm`.
    pub scbs_power_dbm: Option<f64>,
    pub ues: Vec<UeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub distances_m: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub cells: usize,
    pub ues_per_cell: usize,
    pub sinr_range: [f64; 2],
    #[serde(default)]
    pub sinr_units: SinrUnits,
    pub ue_radius_m: f64,
    #[serde(default = "default_min_distance")]
    pub min_ue_distance_m: f64,
    pub ring_radius_m: Option<f64>,
    #[serde(default)]
    pub angle_offset_deg: f64,
    pub threads: Option<usize>,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Dpc, Scheme::Zfbf]
}

fn default_min_distance() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub num_antennas: usize,
    #[serde(default = "default_carrier")]
    pub carrier_freq_ghz: f64,
    pub noise_dbm: f64,
    pub gateway_power_dbm: f64,
    pub scbs_power_dbm: f64,
    #[serde(default = "default_share")]
    pub backhaul_frame_share: f64,
    #[serde(default)]
    pub seed: u64,
    pub order: Option<OrderStrategy>,
    #[serde(default)]
    pub requirement_units: RequirementUnits,
    #[serde(default)]
    pub cells: Vec<CellEntry>,
    pub sweep: Option<SweepEntry>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: "<config>".into(), message: e.to_string() })
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams {
            num_antennas: self.num_antennas,
            carrier_freq_ghz: self.carrier_freq_ghz,
            noise_power_w: dbm_to_watts(self.noise_dbm),
            gateway_power_budget_w: dbm_to_watts(self.gateway_power_dbm),
            scbs_power_budget_w: dbm_to_watts(self.scbs_power_dbm),
            backhaul_frame_share: self.backhaul_frame_share,
        }
    }

    /// Scenario built from the `[[cells]]` tables.
    pub fn to_scenario(&self) -> Result<NetworkScenario> {
        if self.cells.is_empty() {
            return Err(Error::config("cells", "no [[cells]] tables in the configuration"));
        }
        let units = self.requirement_units;
        let scenario = NetworkScenario {
            num_antennas: self.num_antennas,
            cells: self
                .cells
                .iter()
                .map(|c| CellConfig {
                    backhaul_distance_m: c.backhaul_distance_m,
                    scbs_power_budget_w: dbm_to_watts(c.scbs_power_dbm.unwrap_or(self.scbs_power_dbm)),
                    ues: c
                        .ues
                        .iter()
                        .map(|u| UeConfig {
                            distances_to_scbs_m: u.distances_to_scbs_m.clone(),
                            rate_req_nats: units.to_nats(u.requirement),
                        })
                        .collect(),
                })
                .collect(),
            carrier_freq_ghz: self.carrier_freq_ghz,
            noise_power_w: dbm_to_watts(self.noise_dbm),
            gateway_power_budget_w: dbm_to_watts(self.gateway_power_dbm),
            backhaul_frame_share: self.backhaul_frame_share,
            rng_seed: self.seed,
        };
        for (ci, c) in self.cells.iter().enumerate() {
            for (ui, u) in c.ues.iter().enumerate() {
                let nats = units.to_nats(u.requirement);
                if !(nats.is_finite() && nats >= 0.0) {
                    return Err(Error::config(
                        format!("cells[{ci}].ues[{ui}].requirement"),
                        format!("{} is not a valid {units:?} requirement", u.requirement),
                    ));
                }
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Sweep specification from the `[sweep]` table.
    pub fn to_sweep_spec(&self) -> Result<SweepSpec> {
        let s = self.sweep.as_ref().ok_or_else(|| Error::config("sweep", "no [sweep] table in the configuration"))?;
        let spec = SweepSpec {
            radio: self.radio(),
            num_cells: s.cells,
            ues_per_cell: s.ues_per_cell,
            distances_m: s.distances_m.clone(),
            trials: s.trials,
            schemes: s.schemes.clone(),
            sinr_range: (s.sinr_range[0], s.sinr_range[1]),
            sinr_units: s.sinr_units,
            topology: TopologyParams {
                ue_radius_m: s.ue_radius_m,
                min_distance_m: s.min_ue_distance_m,
                ring_radius_m: s.ring_radius_m,
                angle_offset_rad: s.angle_offset_deg.to_radians(),
            },
            order: self.order,
            seed: self.seed,
            threads: s.threads,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// JSON layout of a fixed channel realization: complex entries as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub backhaul: Vec<Vec<[f64; 2]>>,
    pub access_gain_sq: Vec<Vec<Vec<f64>>>,
}

impl ChannelFile {
    pub fn from_realization(ch: &ChannelRealization) -> Self {
        Self {
            backhaul: ch.backhaul.iter().map(|h| h.iter().map(|z| [z.re, z.im]).collect()).collect(),
            access_gain_sq: ch.access_gain_sq.clone(),
        }
    }

    pub fn into_realization(self) -> ChannelRealization {
        ChannelRealization {
            backhaul: self
                .backhaul
                .into_iter()
                .map(|h| CVector::from_iterator(h.len(), h.into_iter().map(|[re, im]| Complex64::new(re, im))))
                .collect(),
            access_gain_sq: self.access_gain_sq,
        }
    }

    pub fn load(path: &Path) -> Result<ChannelRealization> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let file: ChannelFile =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let ch = file.into_realization();
        ch.validate()?;
        Ok(ch)
    }

    /// Checks the realization's shape against a scenario.
    pub fn check_against(ch: &ChannelRealization, scenario: &NetworkScenario) -> Result<()> {
        if ch.num_cells() != scenario.num_cells() {
            return Err(Error::config(
                "backhaul",
                format!("channel file has {} cells, scenario has {}", ch.num_cells(), scenario.num_cells()),
            ));
        }
        if ch.backhaul.iter().any(|h| h.len() != scenario.num_antennas) {
            return Err(Error::config("backhaul", format!("channel vectors must have {} entries", scenario.num_antennas)));
        }
        let expected: Vec<usize> = scenario.cells.iter().map(|c| c.ues.len()).collect();
        if ch.ues_per_cell() != expected {
            return Err(Error::config(
                "access_gain_sq",
                format!("UEs per cell {:?} do not match the scenario {:?}", ch.ues_per_cell(), expected),
            ));
        }
        Ok(())
    }
}
