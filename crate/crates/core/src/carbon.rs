//! Carbon accounting: plant emissions, post-combustion and direct-air
//! capture, released CO₂ and the release/capture metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ambient CO₂ attributed to the system on top of its own stack emissions.
pub const AMBIENT_SHARE: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum CarbonError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("invalid capture spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdrVariant {
    None,
    PccOnly,
    /// PCC plus aqueous-solvent DAC regenerated with natural gas.
    PccDac1,
    /// PCC plus solid-sorbent DAC regenerated with low-grade heat.
    PccDac2,
}

impl CdrVariant {
    pub fn has_pcc(self) -> bool {
        self != CdrVariant::None
    }

    pub fn has_dac(self) -> bool {
        matches!(self, CdrVariant::PccDac1 | CdrVariant::PccDac2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdrSpec {
    pub variant: CdrVariant,
    /// t/h of flue CO₂ the unit can process.
    pub pcc_cap: f64,
    pub pcc_eff: f64,
    /// MWh per captured ton.
    pub pcc_elec: f64,
    /// kg solvent per captured ton.
    pub pcc_solvent: f64,
    pub pcc_delta_min: f64,
    pub pcc_delta_max: f64,
    /// t/h of air-borne CO₂ the unit can process.
    pub dac_cap: f64,
    pub dac_eff: f64,
    pub dac_elec: f64,
    /// MWh heat per ton (solid sorbent only).
    pub dac_heat: f64,
    /// GJ natural gas per ton (aqueous solvent only).
    pub dac_gas: f64,
    pub dac_sorbent: f64,
    pub dac_delta_min: f64,
    pub dac_delta_max: f64,
}

impl CdrSpec {
    /// Shipped parameters for a variant.
    pub fn for_variant(variant: CdrVariant) -> Self {
        let base = CdrSpec {
            variant,
            pcc_cap: 300.0,
            pcc_eff: 0.90,
            pcc_elec: 0.30,
            pcc_solvent: 53.68,
            pcc_delta_min: 0.0,
            pcc_delta_max: 1.0,
            dac_cap: 200.0,
            dac_eff: 0.90,
            dac_elec: 0.25,
            dac_heat: 1.5,
            dac_gas: 0.0,
            dac_sorbent: 3.0,
            dac_delta_min: 0.0,
            dac_delta_max: 1.0,
        };
        match variant {
            CdrVariant::PccDac1 => CdrSpec {
                dac_eff: 0.85,
                dac_elec: 0.366,
                dac_heat: 0.0,
                dac_gas: 5.25,
                dac_sorbent: 53.68,
                ..base
            },
            _ => base,
        }
    }

    pub fn validate(&self) -> Result<(), CarbonError> {
        let bad = |m: &str| Err(CarbonError::InvalidSpec(m.to_string()));
        if !(self.pcc_eff > 0.0 && self.pcc_eff <= 1.0 && self.dac_eff > 0.0 && self.dac_eff <= 1.0) {
            return bad("capture efficiencies must lie in (0, 1]");
        }
        if self.pcc_cap < 0.0 || self.dac_cap < 0.0 {
            return bad("capacities must be non-negative");
        }
        let rates = [self.pcc_elec, self.pcc_solvent, self.dac_elec, self.dac_heat, self.dac_gas, self.dac_sorbent];
        if rates.iter().any(|r| !(*r >= 0.0)) {
            return bad("consumption rates must be non-negative");
        }
        for (lo, hi) in [(self.pcc_delta_min, self.pcc_delta_max), (self.dac_delta_min, self.dac_delta_max)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad("loading band must satisfy 0 <= min <= max <= 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PccOutput {
    pub captured: f64,
    pub elec: f64,
    pub solvent: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DacOutput {
    pub captured: f64,
    pub elec: f64,
    pub heat: f64,
    /// GJ.
    pub gas: f64,
    pub sorbent: f64,
}

/// `(mes, total)`: stack emissions and stack plus ambient share.
pub fn mes_emissions(gt_co2: f64, cfp_co2: f64, gb_co2: f64) -> (f64, f64) {
    let mes = gt_co2 + cfp_co2 + gb_co2;
    (mes, (1.0 + AMBIENT_SHARE) * mes)
}

pub fn pcc_step(spec: &CdrSpec, delta: f64, on: bool) -> PccOutput {
    if !on || !spec.variant.has_pcc() || delta <= 0.0 {
        return PccOutput::default();
    }
    let captured = spec.pcc_eff * delta * spec.pcc_cap;
    PccOutput { captured, elec: spec.pcc_elec * captured, solvent: spec.pcc_solvent * captured }
}

pub fn dac_step(spec: &CdrSpec, delta: f64, on: bool) -> DacOutput {
    if !on || !spec.variant.has_dac() || delta <= 0.0 {
        return DacOutput::default();
    }
    let captured = spec.dac_eff * delta * spec.dac_cap;
    let (heat, gas) = match spec.variant {
        CdrVariant::PccDac1 => (0.0, spec.dac_gas * captured),
        _ => (spec.dac_heat * captured, 0.0),
    };
    DacOutput { captured, elec: spec.dac_elec * captured, heat, gas, sorbent: spec.dac_sorbent * captured }
}

/// Total emissions minus captures; negative means net removal.
pub fn released(total_emit: f64, pcc_cap: f64, dac_cap: f64) -> f64 {
    total_emit - (pcc_cap + dac_cap)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionLedger {
    pub mes_emit: f64,
    pub total_emit: f64,
    pub pcc_cap: f64,
    pub dac_cap: f64,
    pub released: f64,
}

impl EmissionLedger {
    pub fn new(gt_co2: f64, cfp_co2: f64, gb_co2: f64, pcc_cap: f64, dac_cap: f64) -> Self {
        let (mes_emit, total_emit) = mes_emissions(gt_co2, cfp_co2, gb_co2);
        Self { mes_emit, total_emit, pcc_cap, dac_cap, released: released(total_emit, pcc_cap, dac_cap) }
    }

    pub fn captured(&self) -> f64 {
        self.pcc_cap + self.dac_cap
    }

    pub fn accumulate(&mut self, other: &EmissionLedger) {
        self.mes_emit += other.mes_emit;
        self.total_emit += other.total_emit;
        self.pcc_cap += other.pcc_cap;
        self.dac_cap += other.dac_cap;
        self.released += other.released;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cri {
    pub fraction: f64,
    pub percent: f64,
}

/// Share of emitted CO₂ that escapes capture.
pub fn cri(emitted: f64, captured: f64) -> Result<Cri, CarbonError> {
    if !(emitted > 0.0) {
        return Err(CarbonError::UndefinedMetric(format!("CRI needs positive emissions, got {emitted}")));
    }
    let fraction = (emitted - captured) / emitted;
    Ok(Cri { fraction, percent: 100.0 * fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ccrr {
    /// captured / released; +inf when nothing is released.
    pub ratio: f64,
    /// (captured − released) / captured, absent when nothing is captured.
    pub net_fraction: Option<f64>,
    pub net_negative: bool,
}

pub fn ccrr(captured: f64, released: f64) -> Ccrr {
    let net_negative = released <= 0.0;
    let ratio = if net_negative { f64::INFINITY } else { captured / released };
    let net_fraction = (captured > 0.0).then(|| (captured - released) / captured);
    Ccrr { ratio, net_fraction, net_negative }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mes_examples() {
        assert_eq!(mes_emissions(0.0, 0.0, 0.0), (0.0, 0.0));
        let (m, t) = mes_emissions(10.0, 20.0, 5.0);
        assert_eq!(m, 35.0);
        assert!((t - 38.5).abs() < 1e-12);
    }

    #[test]
    fn pcc_examples() {
        let spec = CdrSpec::for_variant(CdrVariant::PccOnly);
        assert_eq!(pcc_step(&spec, 1.0, false), PccOutput::default());
        let o = pcc_step(&spec, 1.0, true);
        assert!((o.captured - 270.0).abs() < 1e-12);
        assert!((o.solvent - 14_493.6).abs() < 1e-6);
        assert!((o.elec - 81.0).abs() < 1e-9);
        let none = CdrSpec::for_variant(CdrVariant::None);
        assert_eq!(pcc_step(&none, 1.0, true), PccOutput::default());
    }

    #[test]
    fn dac_examples() {
        let d1 = CdrSpec::for_variant(CdrVariant::PccDac1);
        assert_eq!(dac_step(&d1, 0.5, false), DacOutput::default());
        // 100 t captured
        let o = dac_step(&d1, 100.0 / (0.85 * 200.0), true);
        assert!((o.captured - 100.0).abs() < 1e-9);
        assert!((o.elec - 36.6).abs() < 1e-9);
        assert!((o.gas - 525.0).abs() < 1e-9);
        assert_eq!(o.heat, 0.0);
        let d2 = CdrSpec::for_variant(CdrVariant::PccDac2);
        let o = dac_step(&d2, 100.0 / (0.9 * 200.0), true);
        assert!((o.sorbent - 300.0).abs() < 1e-9);
        assert_eq!(o.gas, 0.0);
        assert!(o.heat > 0.0);
        let pcc = CdrSpec::for_variant(CdrVariant::PccOnly);
        assert_eq!(dac_step(&pcc, 1.0, true), DacOutput::default());
    }

    #[test]
    fn released_examples() {
        assert_eq!(released(38.5, 30.0, 8.5), 0.0);
        assert!((released(38.5, 27.0, 10.0) - 1.5).abs() < 1e-12);
        assert_eq!(released(10.0, 10.0, 5.0), -5.0);
    }

    #[test]
    fn cri_examples() {
        assert_eq!(cri(100.0, 100.0).unwrap().fraction, 0.0);
        assert_eq!(cri(100.0, 0.0).unwrap().fraction, 1.0);
        let c = cri(100.0, 97.47).unwrap();
        assert!((c.fraction - 0.0253).abs() < 1e-12);
        assert!((c.percent - 2.53).abs() < 1e-9);
        assert!(matches!(cri(0.0, 0.0), Err(CarbonError::UndefinedMetric(_))));
    }

    #[test]
    fn ccrr_examples() {
        let c = ccrr(38.54 * 2.0, 2.0);
        assert!((c.ratio - 38.54).abs() < 1e-12);
        let c = ccrr(5.0, 5.0);
        assert_eq!(c.ratio, 1.0);
        assert_eq!(c.net_fraction, Some(0.0));
        let c = ccrr(5.0, 0.0);
        assert!(c.ratio.is_infinite() && c.net_negative);
    }

    #[test]
    fn shipped_specs_validate() {
        for v in [CdrVariant::None, CdrVariant::PccOnly, CdrVariant::PccDac1, CdrVariant::PccDac2] {
            CdrSpec::for_variant(v).validate().unwrap();
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cri_identity(e in 1e-6f64..1e4, share in 0.0f64..1.5) {
                let c = e * share;
                let v = cri(e, c).unwrap();
                prop_assert!((v.fraction + c / e - 1.0).abs() < 1e-9);
            }

            #[test]
            fn capture_linear_in_delta(d in 0.0f64..=0.5) {
                for v in [CdrVariant::PccOnly, CdrVariant::PccDac1, CdrVariant::PccDac2] {
                    let spec = CdrSpec::for_variant(v);
                    let (a, b) = (pcc_step(&spec, d, true), pcc_step(&spec, 2.0 * d, true));
                    prop_assert!((b.captured - 2.0 * a.captured).abs() < 1e-9);
                    prop_assert!((b.elec - 2.0 * a.elec).abs() < 1e-9);
                    let (a, b) = (dac_step(&spec, d, true), dac_step(&spec, 2.0 * d, true));
                    prop_assert!((b.captured - 2.0 * a.captured).abs() < 1e-9);
                    prop_assert!((b.gas - 2.0 * a.gas).abs() < 1e-9);
                    prop_assert!((b.heat - 2.0 * a.heat).abs() < 1e-9);
                }
            }

            #[test]
            fn ledger_conserves(rows in proptest::collection::vec((0.0f64..300.0, 0.0f64..400.0, 0.0f64..50.0, 0.0f64..270.0, 0.0f64..180.0), 1..48)) {
                let mut sum = EmissionLedger::default();
                for (g, c, b, p, d) in rows {
                    sum.accumulate(&EmissionLedger::new(g, c, b, p, d));
                }
                let gap = sum.total_emit - sum.captured() - sum.released;
                prop_assert!(gap.abs() < 1e-9 * sum.total_emit.max(1.0));
            }
        }
    }
}
