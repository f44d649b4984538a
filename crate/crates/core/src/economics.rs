//! Step cost, constraint penalties and reward.

use serde::{Deserialize, Serialize};

use crate::carbon::{DacOutput, PccOutput};

/// Energy prices and carbon-removal tariffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariffs {
    /// $/m³.
    pub gas: f64,
    /// $/t.
    pub coal: f64,
    /// $/t captured.
    pub cdr_capture: f64,
    /// $/t captured.
    pub cdr_storage: f64,
    /// $/kg.
    pub pcc_solvent: f64,
    /// $/kg.
    pub dac_sorbent: f64,
    /// $/t released.
    pub co2: f64,
    /// Pay `co2·|released|` for net-negative hours.
    #[serde(default)]
    pub carbon_credit: bool,
}

impl Default for Tariffs {
    fn default() -> Self {
        Self {
            gas: 0.25,
            coal: 60.0,
            cdr_capture: 50.0,
            cdr_storage: 10.0,
            pcc_solvent: 3.0,
            dac_sorbent: 10.0,
            co2: 40.0,
            carbon_credit: false,
        }
    }
}

/// Operation cost per MWh of device output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCosts {
    pub res: f64,
    pub gt: f64,
    pub cfp: f64,
    pub gb: f64,
    pub wshp: f64,
    pub ec: f64,
    pub ac: f64,
    pub bes: f64,
    pub tes: f64,
}

/// Primary output of each costed device over one hour, MW. Storage power is signed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatingFlows {
    pub res: f64,
    pub gt: f64,
    pub cfp: f64,
    pub gb: f64,
    pub wshp: f64,
    pub ec: f64,
    pub ac: f64,
    pub bes: f64,
    pub tes: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCoeffs {
    pub theta_el: f64,
    pub theta_hl: f64,
    pub theta_cl: f64,
    /// Ramp penalty, $/MW.
    pub omega: f64,
    /// Release-cap penalty scale, $/t.
    pub psi_release: f64,
    /// Allowed released share of total emissions; `None` disables the cap.
    pub release_cap: Option<f64>,
}

impl Default for PenaltyCoeffs {
    fn default() -> Self {
        Self {
            theta_el: 100.0,
            theta_hl: 100.0,
            theta_cl: 100.0,
            omega: 10.0,
            psi_release: 1000.0,
            release_cap: Some(0.20),
        }
    }
}

/// Supply minus demand per carrier, MW.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub el: f64,
    pub hl: f64,
    pub cl: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CdrCost {
    pub capture: f64,
    pub storage: f64,
    pub pcc_solvent: f64,
    pub dac_sorbent: f64,
    pub dac_gas: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub op: f64,
    pub fuel: f64,
    pub cdr: f64,
    pub emission: f64,
    pub penalty: f64,
    /// `op + fuel + cdr + emission`; penalties are kept out.
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(op: f64, fuel: f64, cdr: f64, emission: f64, penalty: f64) -> Self {
        Self { op, fuel, cdr, emission, penalty, total: op + fuel + cdr + emission }
    }

    pub fn accumulate(&mut self, other: &CostBreakdown) {
        self.op += other.op;
        self.fuel += other.fuel;
        self.cdr += other.cdr;
        self.emission += other.emission;
        self.penalty += other.penalty;
        self.total += other.total;
    }

    /// Cost including penalties.
    pub fn overall(&self) -> f64 {
        self.total + self.penalty
    }
}

pub fn operation_cost(flows: &OperatingFlows, op: &OpCosts) -> f64 {
    op.res * flows.res.abs()
        + op.gt * flows.gt.abs()
        + op.cfp * flows.cfp.abs()
        + op.gb * flows.gb.abs()
        + op.wshp * flows.wshp.abs()
        + op.ec * flows.ec.abs()
        + op.ac * flows.ac.abs()
        + op.bes * flows.bes.abs()
        + op.tes * flows.tes.abs()
}

/// Gas volumes in m³, coal in t. Gas burned for DAC regeneration is billed
/// under carbon removal instead.
pub fn fuel_cost(gas_chp: f64, gas_gb: f64, coal: f64, tariffs: &Tariffs) -> f64 {
    tariffs.gas * (gas_chp + gas_gb) + tariffs.coal * coal
}

/// `gas_lhv` converts the DAC regeneration gas from GJ to m³ (MWh/m³).
pub fn cdr_cost(pcc: &PccOutput, dac: &DacOutput, tariffs: &Tariffs, gas_lhv: f64) -> CdrCost {
    let captured = pcc.captured + dac.captured;
    let gas_m3 = if dac.gas > 0.0 { dac.gas / 3.6 / gas_lhv } else { 0.0 };
    let capture = tariffs.cdr_capture * captured;
    let storage = tariffs.cdr_storage * captured;
    let pcc_solvent = tariffs.pcc_solvent * pcc.solvent;
    let dac_sorbent = tariffs.dac_sorbent * dac.sorbent;
    let dac_gas = tariffs.gas * gas_m3;
    CdrCost {
        capture,
        storage,
        pcc_solvent,
        dac_sorbent,
        dac_gas,
        total: capture + storage + pcc_solvent + dac_sorbent + dac_gas,
    }
}

pub fn emission_cost(released: f64, tariffs: &Tariffs) -> f64 {
    if released >= 0.0 {
        tariffs.co2 * released
    } else if tariffs.carbon_credit {
        tariffs.co2 * released
    } else {
        0.0
    }
}

pub fn balance_penalties(res: &Residuals, coeffs: &PenaltyCoeffs) -> f64 {
    coeffs.theta_el * res.el * res.el + coeffs.theta_hl * res.hl * res.hl + coeffs.theta_cl * res.cl * res.cl
}

/// Exponential penalty on released CO₂ above `cap·total`:
/// `ψ·total·(exp(excess/total) − 1)`, about `ψ` per excess ton when small.
pub fn release_cap_penalty(total_emit: f64, released: f64, coeffs: &PenaltyCoeffs) -> f64 {
    let Some(cap) = coeffs.release_cap else { return 0.0 };
    if total_emit <= 0.0 {
        return 0.0;
    }
    let excess = released - cap * total_emit;
    if excess <= 0.0 {
        return 0.0;
    }
    coeffs.psi_release * total_emit * ((excess / total_emit).exp() - 1.0)
}

/// Raw reward in $ for a one-hour step.
pub fn step_reward(cost: &CostBreakdown) -> f64 {
    -(cost.total + cost.penalty)
}
