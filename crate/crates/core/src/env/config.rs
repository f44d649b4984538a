//! Scenario configuration for the four capture cases.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EnvError;
use crate::carbon::{CdrSpec, CdrVariant};
use crate::data::RenewableSpec;
use crate::devices::{ConverterSpec, Fuel, StorageSpec};
use crate::economics::{OpCosts, PenaltyCoeffs, Tariffs};

/// Natural gas lower heating value, MWh/m³.
pub const GAS_LHV: f64 = 0.00997;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElecSink {
    Load,
    HeatPump,
    ElectricChiller,
    Pcc,
    Dac,
    Battery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatSink {
    Load,
    AbsorptionChiller,
    Dac,
    ThermalStorage,
}

/// Priority in which produced energy is handed to consumers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routing {
    pub electricity: Vec<ElecSink>,
    pub heat: Vec<HeatSink>,
}

impl Default for Routing {
    fn default() -> Self {
        Self {
            electricity: vec![
                ElecSink::Load,
                ElecSink::HeatPump,
                ElecSink::ElectricChiller,
                ElecSink::Pcc,
                ElecSink::Dac,
                ElecSink::Battery,
            ],
            heat: vec![HeatSink::Load, HeatSink::AbsorptionChiller, HeatSink::Dac, HeatSink::ThermalStorage],
        }
    }
}

impl Routing {
    fn validate(&self) -> Result<(), EnvError> {
        let d = Routing::default();
        let mut e = self.electricity.clone();
        let mut de = d.electricity.clone();
        e.sort_by_key(|s| *s as u8);
        de.sort_by_key(|s| *s as u8);
        let mut h = self.heat.clone();
        let mut dh = d.heat.clone();
        h.sort_by_key(|s| *s as u8);
        dh.sort_by_key(|s| *s as u8);
        if e != de || h != dh {
            return Err(EnvError::Config("routing must list every sink exactly once".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth { seed: u64, horizon: usize },
    Files { loads: PathBuf, weather: PathBuf },
}

/// Per-feature min/max used to scale observations into [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case: u8,
    pub renewables: RenewableSpec,
    /// $/MWh of renewable output.
    pub res_op_cost: f64,
    pub gt: ConverterSpec,
    pub cfp: ConverterSpec,
    pub gb: ConverterSpec,
    pub wshp: ConverterSpec,
    pub ec: ConverterSpec,
    pub ac: ConverterSpec,
    pub bes: StorageSpec,
    pub tes: StorageSpec,
    pub cdr: CdrSpec,
    pub tariffs: Tariffs,
    pub penalties: PenaltyCoeffs,
    /// MWh/m³, converts DAC regeneration gas to a billable volume.
    pub gas_lhv: f64,
    pub episode_len: usize,
    /// Rewards handed to agents are divided by this.
    pub reward_scale: f64,
    /// First hour of the evaluation day.
    pub eval_start: usize,
    pub routing: Routing,
    pub data: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_bounds: Option<ObsBounds>,
}

fn converter(name: &str, p: f64, eta: f64, fuel: Fuel, op: f64) -> ConverterSpec {
    ConverterSpec { op_cost: op, ..ConverterSpec::new(name, p, eta, fuel) }
}

fn storage(name: &str, p: f64, q: f64) -> StorageSpec {
    StorageSpec {
        name: name.into(),
        q_cap: q,
        p_rated: p,
        eta_ch: 0.95,
        eta_dch: 0.95,
        soc_min: 0.1,
        soc_max: 0.9,
        soc_init: 0.5,
        psi1: 1000.0,
        psi2: 1000.0,
        op_cost: 1.0,
        delta_min: -1.0,
        delta_max: 1.0,
    }
}

pub fn variant_for_case(case: u8) -> Result<CdrVariant, EnvError> {
    match case {
        1 => Ok(CdrVariant::None),
        2 => Ok(CdrVariant::PccOnly),
        3 => Ok(CdrVariant::PccDac1),
        4 => Ok(CdrVariant::PccDac2),
        _ => Err(EnvError::Config(format!("case must be 1..=4, got {case}"))),
    }
}

impl ScenarioConfig {
    /// Shipped defaults for case 1 (no capture) to 4 (PCC with solid-sorbent DAC).
    pub fn for_case(case: u8) -> Result<Self, EnvError> {
        let variant = variant_for_case(case)?;
        let mut gt = converter("gt", 500.0, 0.35, Fuel::Gas, 2.70);
        gt.eta_heat = 0.45;
        gt.heating_value = GAS_LHV;
        gt.emission_factor = 0.567;
        let mut cfp = converter("cfp", 500.0, 0.40, Fuel::Coal, 4.80);
        cfp.eta_heat = 0.35;
        cfp.heating_value = 8.14;
        cfp.emission_factor = 2.77;
        let mut gb = converter("gb", 200.0, 0.90, Fuel::Gas, 2.0);
        gb.heating_value = GAS_LHV;
        gb.emission_factor = 0.00198;
        let penalties = PenaltyCoeffs {
            release_cap: if variant == CdrVariant::None { None } else { Some(0.20) },
            ..PenaltyCoeffs::default()
        };
        Ok(Self {
            case,
            renewables: RenewableSpec::default(),
            res_op_cost: 6.92,
            gt,
            cfp,
            gb,
            wshp: converter("wshp", 500.0, 3.5, Fuel::Electricity, 1.70),
            ec: converter("ec", 200.0, 4.0, Fuel::Electricity, 1.50),
            ac: converter("ac", 200.0, 0.7, Fuel::Heat, 1.50),
            bes: storage("bes", 100.0, 200.0),
            tes: storage("tes", 200.0, 400.0),
            cdr: CdrSpec::for_variant(variant),
            tariffs: Tariffs::default(),
            penalties,
            gas_lhv: GAS_LHV,
            episode_len: 24,
            reward_scale: 1e6,
            eval_start: 0,
            routing: Routing::default(),
            data: DataSource::Synth { seed: 2022, horizon: 168 },
            obs_bounds: None,
        })
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let variant = variant_for_case(self.case)?;
        if variant != self.cdr.variant {
            return Err(EnvError::Config(format!(
                "case {} requires capture variant {:?}, found {:?}",
                self.case, variant, self.cdr.variant
            )));
        }
        self.renewables.validate()?;
        for spec in [&self.gt, &self.cfp, &self.gb, &self.wshp, &self.ec, &self.ac] {
            spec.validate()?;
        }
        self.bes.validate()?;
        self.tes.validate()?;
        self.cdr.validate()?;
        let t = &self.tariffs;
        let prices = [t.gas, t.coal, t.cdr_capture, t.cdr_storage, t.pcc_solvent, t.dac_sorbent, t.co2];
        if prices.iter().any(|p| !(*p >= 0.0)) || !(self.res_op_cost >= 0.0) {
            return Err(EnvError::Config("tariffs must be non-negative".into()));
        }
        let p = &self.penalties;
        if [p.theta_el, p.theta_hl, p.theta_cl, p.omega, p.psi_release].iter().any(|c| !(*c >= 0.0)) {
            return Err(EnvError::Config("penalty coefficients must be non-negative".into()));
        }
        if let Some(cap) = p.release_cap {
            if !(0.0..=1.0).contains(&cap) {
                return Err(EnvError::Config(format!("release cap must lie in [0, 1], got {cap}")));
            }
        }
        if !(self.gas_lhv > 0.0) || !(self.reward_scale > 0.0) {
            return Err(EnvError::Config("gas_lhv and reward_scale must be positive".into()));
        }
        if self.episode_len == 0 {
            return Err(EnvError::Config("episode_len must be at least 1".into()));
        }
        if let Some(b) = &self.obs_bounds {
            if b.lo.len() != super::OBS_DIM || b.hi.len() != super::OBS_DIM {
                return Err(EnvError::Config(format!("obs_bounds need {} entries", super::OBS_DIM)));
            }
        }
        self.routing.validate()
    }

    pub fn op_costs(&self) -> OpCosts {
        OpCosts {
            res: self.res_op_cost,
            gt: self.gt.op_cost,
            cfp: self.cfp.op_cost,
            gb: self.gb.op_cost,
            wshp: self.wshp.op_cost,
            ec: self.ec.op_cost,
            ac: self.ac.op_cost,
            bes: self.bes.op_cost,
            tes: self.tes.op_cost,
        }
    }

    /// SHA-256 of the canonical JSON encoding. Data paths enter by file
    /// name only so a scenario keeps its hash when its directory moves.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        if let DataSource::Files { loads, weather } = &mut c.data {
            for p in [loads, weather] {
                if let Some(name) = p.file_name() {
                    *p = PathBuf::from(name);
                }
            }
        }
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; data file paths are resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSource::Files { loads, weather } = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [loads, weather] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }
}
