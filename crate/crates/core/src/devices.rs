//! Energy conversion and storage device models.
//!
//! Every converter follows the same pattern: a loading rate `δ` scales the
//! rated capacity, the input drawn is `δ·P_r/η_r`, and the useful output is
//! `δ·P_r·f(δ)` where `f` is the part-load polynomial `Σ k_o δ^o` (identically
//! 1 when part-load modelling is disabled). The effective efficiency is
//! therefore `η_r·f(δ)`, see [`plr_eta`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Storage SOC is soft-bounded by `[soc_min, soc_max]` and hard-bounded here.
pub const SOC_HARD_MIN: f64 = -0.1;
pub const SOC_HARD_MAX: f64 = 1.1;

/// Default cubic part-load curve: `f(1) = 1`, `f(0.3) ≈ 0.85`, increasing on [0, 1].
pub const DEFAULT_PLR: [f64; 4] = [0.73, 0.54, -0.54, 0.27];

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("device {name}: {msg}")]
    InvalidSpec { name: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fuel {
    Gas,
    Coal,
    Electricity,
    Heat,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub name: String,
    /// Rated output, MW.
    pub p_rated: f64,
    /// Rated efficiency or COP of the primary output.
    pub eta_rated: f64,
    /// Secondary (recovered heat) efficiency for cogeneration units, 0 otherwise.
    #[serde(default)]
    pub eta_heat: f64,
    pub plr_enabled: bool,
    /// Ascending polynomial coefficients `k_0, k_1, ...`.
    pub plr_coeffs: Vec<f64>,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Ramp limit as a fraction of `p_rated`.
    pub ramp_frac: f64,
    /// Operation cost, $/MWh of primary output.
    pub op_cost: f64,
    /// tCO₂ per MWh electric (gas turbine), per t coal, or per m³ gas (boiler).
    #[serde(default)]
    pub emission_factor: f64,
    /// Heating value of the fuel: MWh/m³ for gas, MWh/t for coal.
    #[serde(default)]
    pub heating_value: f64,
    pub fuel: Fuel,
}

impl ConverterSpec {
    /// A converter with the default part-load curve and no fuel.
    pub fn new(name: &str, p_rated: f64, eta_rated: f64, fuel: Fuel) -> Self {
        Self {
            name: name.to_string(),
            p_rated,
            eta_rated,
            eta_heat: 0.0,
            plr_enabled: true,
            plr_coeffs: DEFAULT_PLR.to_vec(),
            delta_min: 0.0,
            delta_max: 1.0,
            ramp_frac: 0.20,
            op_cost: 0.0,
            emission_factor: 0.0,
            heating_value: 0.0,
            fuel,
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> DeviceError {
        DeviceError::InvalidSpec { name: self.name.clone(), msg: msg.into() }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(0.0 <= self.delta_min && self.delta_min <= self.delta_max && self.delta_max <= 1.0) {
            return Err(self.invalid(format!(
                "loading band must satisfy 0 <= delta_min <= delta_max <= 1, got [{}, {}]",
                self.delta_min, self.delta_max
            )));
        }
        if !(self.p_rated > 0.0) {
            return Err(self.invalid("p_rated must be positive"));
        }
        if !(self.eta_rated > 0.0) {
            return Err(self.invalid("eta_rated must be positive"));
        }
        if self.plr_coeffs.is_empty() {
            return Err(self.invalid("plr_coeffs must be non-empty"));
        }
        if self.eta_heat < 0.0 || self.ramp_frac < 0.0 || self.op_cost < 0.0 || self.emission_factor < 0.0 {
            return Err(self.invalid("negative efficiency, ramp, cost or emission factor"));
        }
        if matches!(self.fuel, Fuel::Gas | Fuel::Coal) && !(self.heating_value > 0.0) {
            return Err(self.invalid("fuel-burning device needs a positive heating value"));
        }
        if self.plr_enabled {
            let n = 1000;
            for i in 0..=n {
                let d = self.delta_min + (self.delta_max - self.delta_min) * i as f64 / n as f64;
                let f = poly(&self.plr_coeffs, d);
                if !(f > 0.0) {
                    return Err(self.invalid(format!("part-load polynomial is {f} at delta={d}")));
                }
            }
        }
        Ok(())
    }

    /// Ramp limit in MW.
    pub fn ramp_limit(&self) -> f64 {
        self.ramp_frac * self.p_rated
    }
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

/// Part-load factor `f(δ)`; 1 when part-load modelling is disabled.
pub fn plr_factor(spec: &ConverterSpec, delta: f64) -> f64 {
    if spec.plr_enabled {
        poly(&spec.plr_coeffs, delta)
    } else {
        1.0
    }
}

/// Effective efficiency at loading `delta`, clamped to `(0, 1.5·η_r]`.
pub fn plr_eta(spec: &ConverterSpec, delta: f64) -> f64 {
    let eta = spec.eta_rated * plr_factor(spec, delta);
    eta.clamp(f64::MIN_POSITIVE, 1.5 * spec.eta_rated)
}

/// Whether `delta` satisfies `u·δ_min ≤ δ ≤ u·δ_max`.
pub fn in_band(spec: &ConverterSpec, delta: f64, on: bool) -> bool {
    if on {
        spec.delta_min <= delta && delta <= spec.delta_max
    } else {
        delta == 0.0
    }
}

/// Maps a requested loading rate in [0, 1] onto the operating band.
///
/// Requests under half of `delta_min` switch the unit off; the rest of the
/// gap is raised to `delta_min`. Anything above `delta_max` is lowered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loading {
    pub delta: f64,
    pub on: bool,
    /// The request was outside the band and had to be moved.
    pub violation: bool,
}

pub fn resolve_loading(delta_min: f64, delta_max: f64, requested: f64) -> Loading {
    let r = if requested.is_finite() { requested.clamp(0.0, 1.0) } else { 0.0 };
    if r <= 0.0 || r < 0.5 * delta_min {
        return Loading { delta: 0.0, on: false, violation: r > 0.0 };
    }
    if r < delta_min {
        return Loading { delta: delta_min, on: true, violation: true };
    }
    if r > delta_max {
        return Loading { delta: delta_max, on: true, violation: true };
    }
    Loading { delta: r, on: true, violation: false }
}

/// `u·δ·P_r` and a band flag; never fails.
pub fn converter_output(spec: &ConverterSpec, delta: f64, on: bool) -> (f64, bool) {
    let ok = in_band(spec, delta, on);
    let out = if on { delta * spec.p_rated } else { 0.0 };
    (out, ok)
}

/// Resolved flows of one converter over one hour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceOutput {
    pub e_out: f64,
    pub h_out: f64,
    pub c_out: f64,
    /// Electricity drawn, MW.
    pub e_in: f64,
    /// Heat drawn, MW.
    pub h_in: f64,
    /// m³ of gas or t of coal.
    pub fuel_in: f64,
    pub co2: f64,
    pub on: bool,
    pub band_violation: bool,
}

fn off(spec: &ConverterSpec, delta: f64) -> DeviceOutput {
    DeviceOutput { band_violation: !in_band(spec, delta, false), ..Default::default() }
}

/// Gas turbine cogeneration: electricity with part-load derating, recovered
/// heat, gas volume from the lower heating value and CO₂ per MWh electric.
pub fn chp_gas_step(spec: &ConverterSpec, delta: f64) -> DeviceOutput {
    if delta <= 0.0 {
        return off(spec, delta);
    }
    let f = plr_factor(spec, delta);
    let e_out = spec.p_rated * delta * f;
    let h_out = spec.p_rated * delta * f * spec.eta_heat / spec.eta_rated;
    let fuel_mwh = spec.p_rated * delta / spec.eta_rated;
    DeviceOutput {
        e_out,
        h_out,
        fuel_in: fuel_mwh / spec.heating_value,
        co2: e_out * spec.emission_factor,
        on: true,
        band_violation: !in_band(spec, delta, true),
        ..Default::default()
    }
}

/// Coal-fired cogeneration: electricity `δ·P_r`, coal mass from the part-load
/// efficiency, heat recovered from the coal energy.
pub fn cfp_step(spec: &ConverterSpec, delta: f64) -> DeviceOutput {
    if delta <= 0.0 {
        return off(spec, delta);
    }
    let e_out = delta * spec.p_rated;
    let coal = e_out / (plr_eta(spec, delta) * spec.heating_value);
    DeviceOutput {
        e_out,
        h_out: spec.eta_heat * coal * spec.heating_value,
        fuel_in: coal,
        co2: coal * spec.emission_factor,
        on: true,
        band_violation: !in_band(spec, delta, true),
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatSource {
    GasBoiler,
    HeatPump,
}

/// Gas boiler or water-source heat pump.
pub fn thermal_step(spec: &ConverterSpec, delta: f64, kind: HeatSource) -> DeviceOutput {
    if delta <= 0.0 {
        return off(spec, delta);
    }
    let h_out = spec.p_rated * delta * plr_factor(spec, delta);
    let input = spec.p_rated * delta / spec.eta_rated;
    let mut out = DeviceOutput {
        h_out,
        on: true,
        band_violation: !in_band(spec, delta, true),
        ..Default::default()
    };
    match kind {
        HeatSource::GasBoiler => {
            out.fuel_in = input / spec.heating_value;
            out.co2 = out.fuel_in * spec.emission_factor;
        }
        HeatSource::HeatPump => out.e_in = input,
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chiller {
    Electric,
    Absorption,
}

/// Electric or absorption chiller: cooling output and the electricity or
/// heat it draws.
pub fn chiller_step(spec: &ConverterSpec, delta: f64, kind: Chiller) -> DeviceOutput {
    if delta <= 0.0 {
        return off(spec, delta);
    }
    let input = spec.p_rated * delta / spec.eta_rated;
    let mut out = DeviceOutput {
        c_out: spec.p_rated * delta * plr_factor(spec, delta),
        on: true,
        band_violation: !in_band(spec, delta, true),
        ..Default::default()
    };
    match kind {
        Chiller::Electric => out.e_in = input,
        Chiller::Absorption => out.h_in = input,
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub name: String,
    /// Energy capacity, MWh.
    pub q_cap: f64,
    /// Power rating, MW.
    pub p_rated: f64,
    pub eta_ch: f64,
    pub eta_dch: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    /// Penalty coefficient below `soc_min`, $.
    pub psi1: f64,
    /// Penalty coefficient above `soc_max`, $.
    pub psi2: f64,
    pub op_cost: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl StorageSpec {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |msg: &str| DeviceError::InvalidSpec { name: self.name.clone(), msg: msg.to_string() };
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(bad("SOC bounds must satisfy 0 <= soc_min < soc_max <= 1"));
        }
        if !(self.eta_ch > 0.0 && self.eta_ch <= 1.0 && self.eta_dch > 0.0 && self.eta_dch <= 1.0) {
            return Err(bad("efficiencies must lie in (0, 1]"));
        }
        if !(self.q_cap > 0.0 && self.p_rated > 0.0) {
            return Err(bad("capacity and power rating must be positive"));
        }
        if !(-1.0 <= self.delta_min && self.delta_min <= 0.0 && 0.0 <= self.delta_max && self.delta_max <= 1.0) {
            return Err(bad("loading band must lie within [-1, 1] and contain 0"));
        }
        if !(SOC_HARD_MIN..=SOC_HARD_MAX).contains(&self.soc_init) {
            return Err(bad("initial SOC outside the hard envelope"));
        }
        if self.psi1 < 0.0 || self.psi2 < 0.0 || self.op_cost < 0.0 {
            return Err(bad("negative penalty or cost"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub soc: f64,
}

/// Outcome of one storage hour. `power` is positive when discharging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageStep {
    pub state: StorageState,
    pub power: f64,
    pub penalty: f64,
    pub band_violation: bool,
}

/// Exponential SOC penalty: 0 inside `[soc_min, soc_max]`.
pub fn soc_penalty(spec: &StorageSpec, soc: f64) -> f64 {
    if soc < spec.soc_min {
        spec.psi1 * (spec.soc_min - soc).exp()
    } else if soc > spec.soc_max {
        spec.psi2 * (soc - spec.soc_max).exp()
    } else {
        0.0
    }
}

/// Advances one hour. Negative `delta` charges, positive discharges.
///
/// Power is reduced if needed so the SOC stays within
/// [`SOC_HARD_MIN`, `SOC_HARD_MAX`]; soft-bound violations are penalized.
pub fn storage_step(state: StorageState, spec: &StorageSpec, delta: f64) -> StorageStep {
    let requested = if delta.is_finite() { delta } else { 0.0 };
    let band_violation = requested < spec.delta_min || requested > spec.delta_max;
    let d = requested.clamp(spec.delta_min, spec.delta_max);
    let mut power = d * spec.p_rated;
    // SOC' = SOC - eta * P / Q with eta = eta_ch (P < 0) or 1/eta_dch (P >= 0)
    if power > 0.0 {
        let max_out = (state.soc - SOC_HARD_MIN).max(0.0) * spec.q_cap * spec.eta_dch;
        power = power.min(max_out);
    } else if power < 0.0 {
        let max_in = (SOC_HARD_MAX - state.soc).max(0.0) * spec.q_cap / spec.eta_ch;
        power = power.max(-max_in);
    }
    let eta = if power < 0.0 { spec.eta_ch } else { 1.0 / spec.eta_dch };
    let soc = state.soc - eta * power / spec.q_cap;
    StorageStep {
        state: StorageState { soc },
        power,
        penalty: soc_penalty(spec, soc),
        band_violation,
    }
}

/// `ω·|Δ|` when the hour-to-hour change exceeds the ramp limit, else 0.
pub fn ramp_penalty(prev_out: f64, curr_out: f64, spec: &ConverterSpec, omega: f64) -> f64 {
    let change = (prev_out - curr_out).abs();
    if change <= spec.ramp_limit() {
        0.0
    } else {
        omega * change
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(name: &str, p: f64, eta: f64, fuel: Fuel) -> ConverterSpec {
        ConverterSpec { plr_enabled: false, ..ConverterSpec::new(name, p, eta, fuel) }
    }

    fn storage() -> StorageSpec {
        StorageSpec {
            name: "bes".into(),
            q_cap: 100.0,
            p_rated: 100.0,
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

    #[test]
    fn plr_eta_examples() {
        let mut spec = ConverterSpec::new("x", 100.0, 0.4, Fuel::None);
        spec.plr_enabled = false;
        assert_eq!(plr_eta(&spec, 0.37), 0.4);
        spec.plr_enabled = true;
        spec.plr_coeffs = vec![0.0, 1.0];
        assert!((plr_eta(&spec, 1.0) - 0.4).abs() < 1e-15);
        spec.plr_coeffs = vec![0.1, 0.9];
        assert!((plr_eta(&spec, 0.5) - 0.22).abs() < 1e-12);
    }

    #[test]
    fn default_plr_shape() {
        let spec = ConverterSpec::new("x", 1.0, 1.0, Fuel::None);
        assert!((plr_factor(&spec, 1.0) - 1.0).abs() < 1e-12);
        assert!((plr_factor(&spec, 0.3) - 0.85).abs() < 0.01);
        spec.validate().unwrap();
    }

    #[test]
    fn non_positive_polynomial_rejected() {
        let mut spec = ConverterSpec::new("bad", 1.0, 1.0, Fuel::None);
        spec.plr_coeffs = vec![-0.1, 1.1];
        assert!(matches!(spec.validate(), Err(DeviceError::InvalidSpec { .. })));
        // the same curve is fine when the band excludes the negative region
        spec.delta_min = 0.2;
        spec.validate().unwrap();
    }

    #[test]
    fn converter_output_examples() {
        let gt = flat("gt", 500.0, 0.35, Fuel::Gas);
        assert_eq!(converter_output(&gt, 0.0, false), (0.0, true));
        assert_eq!(converter_output(&gt, 1.0, true), (500.0, true));
        let small = flat("x", 200.0, 1.0, Fuel::None);
        assert_eq!(converter_output(&small, 0.5, true).0, 100.0);
        let mut banded = small.clone();
        banded.delta_min = 0.3;
        assert_eq!(converter_output(&banded, 0.1, true).1, false);
    }

    #[test]
    fn resolve_loading_rules() {
        assert_eq!(resolve_loading(0.2, 0.9, 0.0), Loading { delta: 0.0, on: false, violation: false });
        assert_eq!(resolve_loading(0.2, 0.9, 0.05), Loading { delta: 0.0, on: false, violation: true });
        assert_eq!(resolve_loading(0.2, 0.9, 0.15), Loading { delta: 0.2, on: true, violation: true });
        assert_eq!(resolve_loading(0.2, 0.9, 0.5), Loading { delta: 0.5, on: true, violation: false });
        assert_eq!(resolve_loading(0.2, 0.9, 0.95), Loading { delta: 0.9, on: true, violation: true });
        assert_eq!(resolve_loading(0.0, 1.0, f64::NAN).delta, 0.0);
    }

    #[test]
    fn chp_gas_examples() {
        let mut gt = flat("gt", 500.0, 0.35, Fuel::Gas);
        gt.eta_heat = 0.28; // eta_h / eta_e = 0.8
        gt.heating_value = 0.01;
        gt.emission_factor = 0.567;
        let zero = chp_gas_step(&gt, 0.0);
        assert_eq!((zero.e_out, zero.h_out, zero.fuel_in, zero.co2), (0.0, 0.0, 0.0, 0.0));
        let out = chp_gas_step(&gt, 0.6);
        assert!((out.e_out - 300.0).abs() < 1e-9);
        assert!((out.h_out - 240.0).abs() < 1e-9);
        assert!((out.fuel_in - 500.0 * 0.6 / 0.35 / 0.01).abs() < 1e-6);
        for d in [0.2, 0.5, 0.9] {
            let o = chp_gas_step(&gt, d);
            assert!((o.co2 / o.e_out - 0.567).abs() < 1e-12);
        }
    }

    #[test]
    fn chp_matches_constant_efficiency_converter_without_plr() {
        let mut gt = flat("gt", 500.0, 0.35, Fuel::Gas);
        gt.eta_heat = 0.45;
        gt.heating_value = 0.01;
        for i in 0..=100 {
            let d = i as f64 / 100.0;
            let (p, _) = converter_output(&gt, d, d > 0.0);
            let o = chp_gas_step(&gt, d);
            assert!((o.e_out - p).abs() <= 1e-12 * p.max(1.0));
            assert!((o.h_out - p * 0.45 / 0.35).abs() <= 1e-9 * p.max(1.0));
        }
    }

    #[test]
    fn cfp_examples() {
        let mut cfp = flat("cfp", 500.0, 0.4, Fuel::Coal);
        cfp.heating_value = 8.14;
        cfp.eta_heat = 0.35;
        cfp.emission_factor = 2.77;
        let z = cfp_step(&cfp, 0.0);
        assert_eq!((z.e_out, z.fuel_in), (0.0, 0.0));
        let full = cfp_step(&cfp, 1.0);
        assert!((full.fuel_in - 153.56).abs() < 0.01, "{}", full.fuel_in);
        assert!((full.fuel_in - 500.0 / (0.4 * 8.14)).abs() < 1e-12);
        for d in [0.25, 0.6, 1.0] {
            let o = cfp_step(&cfp, d);
            assert!((o.h_out / o.fuel_in - 0.35 * 8.14).abs() < 1e-12);
            assert!((o.co2 / o.fuel_in - 2.77).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_examples() {
        let mut gb = flat("gb", 200.0, 0.9, Fuel::Gas);
        gb.heating_value = 0.01;
        assert_eq!(thermal_step(&gb, 0.0, HeatSource::GasBoiler).h_out, 0.0);
        let o = thermal_step(&gb, 0.5, HeatSource::GasBoiler);
        assert!((o.h_out - 100.0).abs() < 1e-12);
        assert!((o.fuel_in - (200.0 * 0.5 / 0.9) / 0.01).abs() < 1e-9);
        let hp = flat("wshp", 500.0, 3.0, Fuel::Electricity);
        let o = thermal_step(&hp, 0.3, HeatSource::HeatPump);
        assert!((o.h_out - 150.0).abs() < 1e-12);
        assert!((o.e_in - 50.0).abs() < 1e-12);
    }

    #[test]
    fn chiller_examples() {
        let ec = flat("ec", 200.0, 4.0, Fuel::Electricity);
        assert_eq!(chiller_step(&ec, 0.0, Chiller::Electric).c_out, 0.0);
        let o = chiller_step(&ec, 1.0, Chiller::Electric);
        assert_eq!((o.c_out, o.e_in), (200.0, 50.0));
        let ac = flat("ac", 200.0, 0.7, Fuel::Heat);
        for d in [0.1, 0.5, 1.0] {
            let o = chiller_step(&ac, d, Chiller::Absorption);
            assert_eq!(o.e_out, 0.0);
            assert_eq!(o.e_in, 0.0);
            assert!(o.h_in > 0.0);
        }
    }

    #[test]
    fn storage_examples() {
        let spec = storage();
        let s0 = StorageState { soc: 0.5 };
        let idle = storage_step(s0, &spec, 0.0);
        assert_eq!((idle.state.soc, idle.penalty), (0.5, 0.0));
        let ch = storage_step(s0, &spec, -0.1);
        assert!((ch.state.soc - 0.595).abs() < 1e-12);
        assert!((ch.power + 10.0).abs() < 1e-12);
        let dch = storage_step(s0, &spec, 0.1);
        assert!((dch.state.soc - (0.5 - 10.0 / (0.95 * 100.0))).abs() < 1e-12);
        assert!((dch.state.soc - 0.3947).abs() < 1e-4);
    }

    #[test]
    fn storage_hard_envelope() {
        let spec = storage();
        let s = storage_step(StorageState { soc: 0.0 }, &spec, 1.0);
        assert!((s.state.soc - SOC_HARD_MIN).abs() < 1e-12);
        assert!(s.penalty > 0.0);
        let s = storage_step(StorageState { soc: 1.05 }, &spec, -1.0);
        assert!((s.state.soc - SOC_HARD_MAX).abs() < 1e-12);
    }

    #[test]
    fn ramp_examples() {
        let gt = flat("gt", 500.0, 0.35, Fuel::Gas);
        assert_eq!(ramp_penalty(120.0, 120.0, &gt, 10.0), 0.0);
        assert_eq!(ramp_penalty(100.0, 200.0, &gt, 10.0), 0.0);
        assert_eq!(ramp_penalty(300.0, 150.0, &gt, 10.0), 1500.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn specs() -> Vec<(ConverterSpec, u8)> {
            let mut gt = ConverterSpec::new("gt", 500.0, 0.35, Fuel::Gas);
            gt.eta_heat = 0.45;
            gt.heating_value = 0.00997;
            gt.emission_factor = 0.567;
            let mut cfp = ConverterSpec::new("cfp", 500.0, 0.4, Fuel::Coal);
            cfp.eta_heat = 0.35;
            cfp.heating_value = 8.14;
            cfp.emission_factor = 2.77;
            let mut gb = ConverterSpec::new("gb", 200.0, 0.9, Fuel::Gas);
            gb.heating_value = 0.00997;
            gb.emission_factor = 0.00198;
            let hp = ConverterSpec::new("hp", 500.0, 3.5, Fuel::Electricity);
            let ec = ConverterSpec::new("ec", 200.0, 4.0, Fuel::Electricity);
            let ac = ConverterSpec::new("ac", 200.0, 0.7, Fuel::Heat);
            vec![(gt, 0), (cfp, 1), (gb, 2), (hp, 3), (ec, 4), (ac, 5)]
        }

        fn run(spec: &ConverterSpec, kind: u8, d: f64) -> DeviceOutput {
            match kind {
                0 => chp_gas_step(spec, d),
                1 => cfp_step(spec, d),
                2 => thermal_step(spec, d, HeatSource::GasBoiler),
                3 => thermal_step(spec, d, HeatSource::HeatPump),
                4 => chiller_step(spec, d, Chiller::Electric),
                _ => chiller_step(spec, d, Chiller::Absorption),
            }
        }

        proptest! {
            #[test]
            fn outputs_finite_non_negative(d in 0.0f64..=1.0) {
                for (spec, kind) in specs() {
                    let o = run(&spec, kind, d);
                    for v in [o.e_out, o.h_out, o.c_out, o.e_in, o.h_in, o.fuel_in, o.co2] {
                        prop_assert!(v.is_finite() && v >= 0.0);
                    }
                    if !o.on {
                        prop_assert_eq!(o.co2, 0.0);
                        prop_assert_eq!(o.e_out + o.h_out + o.c_out, 0.0);
                    }
                }
            }

            #[test]
            fn ramp_symmetric(a in 0.0f64..600.0, b in 0.0f64..600.0) {
                let (gt, _) = specs().remove(0);
                prop_assert_eq!(ramp_penalty(a, b, &gt, 10.0), ramp_penalty(b, a, &gt, 10.0));
            }

            #[test]
            fn soc_penalty_shape(v1 in 0.0f64..0.2, v2 in 0.0f64..0.2, inside in 0.1f64..=0.9) {
                let spec = storage();
                prop_assert_eq!(soc_penalty(&spec, inside), 0.0);
                let (lo, hi) = if v1 < v2 { (v1, v2) } else { (v2, v1) };
                prop_assume!(hi - lo > 1e-9 && lo > 1e-12);
                prop_assert!(soc_penalty(&spec, spec.soc_min - lo) > 0.0);
                prop_assert!(soc_penalty(&spec, spec.soc_min - hi) > soc_penalty(&spec, spec.soc_min - lo));
                prop_assert!(soc_penalty(&spec, spec.soc_max + hi) > soc_penalty(&spec, spec.soc_max + lo));
            }
        }
    }
}
