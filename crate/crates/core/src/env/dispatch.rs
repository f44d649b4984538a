//! Maps one action onto device flows with merit-order routing, then prices
//! the hour.

use serde::{Deserialize, Serialize};

use super::config::{ElecSink, HeatSink, ScenarioConfig};
use super::ACT_DIM;
use crate::carbon::{dac_step, mes_emissions, pcc_step, CdrVariant, DacOutput, EmissionLedger, PccOutput};
use crate::devices::{
    cfp_step, chiller_step, chp_gas_step, ramp_penalty, resolve_loading, storage_step, thermal_step, Chiller,
    ConverterSpec, HeatSource, StorageState,
};
use crate::economics::{
    balance_penalties, cdr_cost, emission_cost, fuel_cost, operation_cost, release_cap_penalty, CdrCost,
    CostBreakdown, OperatingFlows, Residuals,
};

pub const RES: usize = 0;
pub const CFP: usize = 1;
pub const GT: usize = 2;
pub const GB: usize = 3;
pub const HP: usize = 4;
pub const BES: usize = 5;
pub const TES: usize = 6;
pub const EC: usize = 7;
pub const AC: usize = 8;
pub const PCC: usize = 9;
pub const DAC: usize = 10;

pub const ACTION_NAMES: [&str; ACT_DIM] = ["res", "cfp", "gt", "gb", "hp", "bes", "tes", "ec", "ac", "pcc", "dac"];

pub fn action_low() -> [f64; ACT_DIM] {
    let mut lo = [0.0; ACT_DIM];
    lo[BES] = -1.0;
    lo[TES] = -1.0;
    lo
}

pub fn action_high() -> [f64; ACT_DIM] {
    [1.0; ACT_DIM]
}

/// Clamps into the action box; non-finite entries become 0.
pub fn clamp_action(action: &[f64]) -> [f64; ACT_DIM] {
    let (lo, hi) = (action_low(), action_high());
    let mut a = [0.0; ACT_DIM];
    for i in 0..ACT_DIM {
        let v = action.get(i).copied().unwrap_or(0.0);
        a[i] = if v.is_finite() { v.clamp(lo[i], hi[i]) } else { 0.0 };
    }
    a
}

/// Hourly inputs that the dispatch cannot influence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Exogenous {
    pub pv: f64,
    pub pw: f64,
    pub el: f64,
    pub hl: f64,
    pub cl: f64,
}

/// Dynamic state carried between hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub soc_b: f64,
    pub soc_h: f64,
    /// Previous primary outputs of GT, CFP, GB, WSHP, EC, AC.
    pub prev: [f64; 6],
}

/// Resolved flows for one hour. Storage power is positive when discharging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub el: f64,
    pub hl: f64,
    pub cl: f64,
    pub res_avail: f64,
    pub res: f64,
    pub gt_e: f64,
    pub gt_h: f64,
    pub cfp_e: f64,
    pub cfp_h: f64,
    pub gb_h: f64,
    pub wshp_h: f64,
    pub wshp_e: f64,
    pub ec_c: f64,
    pub ec_e: f64,
    pub ac_c: f64,
    pub ac_h: f64,
    pub bes_p: f64,
    pub tes_p: f64,
    pub soc_b: f64,
    pub soc_h: f64,
    pub pcc_cap: f64,
    pub pcc_e: f64,
    pub dac_cap: f64,
    pub dac_e: f64,
    pub dac_h: f64,
    /// GJ.
    pub dac_gas: f64,
    /// m³.
    pub gas_chp: f64,
    /// m³.
    pub gas_gb: f64,
    /// t.
    pub coal: f64,
    /// kg.
    pub pcc_solvent: f64,
    /// kg.
    pub dac_sorbent: f64,
    pub el_served: f64,
    pub hl_served: f64,
    pub surplus_e: f64,
    pub surplus_h: f64,
    pub residual_el: f64,
    pub residual_hl: f64,
    pub residual_cl: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub balance: f64,
    pub ramp: f64,
    pub soc: f64,
    pub release: f64,
    pub total: f64,
}

impl Penalties {
    pub fn accumulate(&mut self, o: &Penalties) {
        self.balance += o.balance;
        self.ramp += o.ramp;
        self.soc += o.soc;
        self.release += o.release;
        self.total += o.total;
    }
}

/// Everything one hour produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub dispatch: Dispatch,
    pub ledger: EmissionLedger,
    pub costs: CostBreakdown,
    pub cdr: CdrCost,
    pub penalties: Penalties,
    pub next: SimState,
    /// Count of loading requests moved into their operating band.
    pub band_violations: u32,
    /// Loading rates after band, energy and flue-gas limits.
    pub effective: [f64; ACT_DIM],
}

impl Outcome {
    /// Raw reward in $.
    pub fn raw_reward(&self) -> f64 {
        crate::economics::step_reward(&self.costs)
    }
}

/// Loading a consumer can actually run at given the energy on offer.
fn realize(spec_min: f64, delta: f64, per_delta: f64, pool: f64) -> f64 {
    if delta <= 0.0 || per_delta <= 0.0 {
        return delta.max(0.0);
    }
    let d = delta.min(pool.max(0.0) / per_delta);
    if d < spec_min {
        0.0
    } else {
        d
    }
}

fn draw_per_delta(spec: &ConverterSpec) -> f64 {
    spec.p_rated / spec.eta_rated
}

struct ElecRoute {
    el_served: f64,
    hp: f64,
    ec: f64,
    pcc: f64,
    dac: f64,
    bes_charge: f64,
    surplus: f64,
}

struct HeatRoute {
    hl_served: f64,
    ac: f64,
    dac: f64,
    tes_charge: f64,
    surplus: f64,
}

#[allow(clippy::too_many_arguments)]
fn route_electricity(
    cfg: &ScenarioConfig,
    pool: f64,
    el: f64,
    hp: f64,
    ec: f64,
    pcc: f64,
    dac: f64,
    bes_charge: f64,
) -> ElecRoute {
    let mut pool = pool;
    let mut r = ElecRoute { el_served: 0.0, hp: 0.0, ec: 0.0, pcc: 0.0, dac: 0.0, bes_charge: 0.0, surplus: 0.0 };
    let cdr = &cfg.cdr;
    for sink in &cfg.routing.electricity {
        match sink {
            ElecSink::Load => {
                r.el_served = el.min(pool);
                pool -= r.el_served;
            }
            ElecSink::HeatPump => {
                let k = draw_per_delta(&cfg.wshp);
                r.hp = realize(cfg.wshp.delta_min, hp, k, pool);
                pool = (pool - r.hp * k).max(0.0);
            }
            ElecSink::ElectricChiller => {
                let k = draw_per_delta(&cfg.ec);
                r.ec = realize(cfg.ec.delta_min, ec, k, pool);
                pool = (pool - r.ec * k).max(0.0);
            }
            ElecSink::Pcc => {
                let k = cdr.pcc_elec * cdr.pcc_eff * cdr.pcc_cap;
                r.pcc = realize(cdr.pcc_delta_min, pcc, k, pool);
                pool = (pool - r.pcc * k).max(0.0);
            }
            ElecSink::Dac => {
                let k = cdr.dac_elec * cdr.dac_eff * cdr.dac_cap;
                r.dac = realize(cdr.dac_delta_min, dac, k, pool);
                pool = (pool - r.dac * k).max(0.0);
            }
            ElecSink::Battery => {
                r.bes_charge = bes_charge.min(pool);
                pool -= r.bes_charge;
            }
        }
    }
    r.surplus = pool;
    r
}

fn route_heat(cfg: &ScenarioConfig, pool: f64, hl: f64, ac: f64, dac: f64, tes_charge: f64) -> HeatRoute {
    let mut pool = pool;
    let mut r = HeatRoute { hl_served: 0.0, ac: 0.0, dac: 0.0, tes_charge: 0.0, surplus: 0.0 };
    let cdr = &cfg.cdr;
    for sink in &cfg.routing.heat {
        match sink {
            HeatSink::Load => {
                r.hl_served = hl.min(pool);
                pool -= r.hl_served;
            }
            HeatSink::AbsorptionChiller => {
                let k = draw_per_delta(&cfg.ac);
                r.ac = realize(cfg.ac.delta_min, ac, k, pool);
                pool = (pool - r.ac * k).max(0.0);
            }
            HeatSink::Dac => {
                let k = if cdr.variant == CdrVariant::PccDac2 { cdr.dac_heat * cdr.dac_eff * cdr.dac_cap } else { 0.0 };
                r.dac = realize(cdr.dac_delta_min, dac, k, pool);
                pool = (pool - r.dac * k).max(0.0);
            }
            HeatSink::ThermalStorage => {
                r.tes_charge = tes_charge.min(pool);
                pool -= r.tes_charge;
            }
        }
    }
    r.surplus = pool;
    r
}

/// Resolves `action` from `state` at hour inputs `ex`. Pure: the caller
/// decides whether to commit `Outcome::next`.
pub fn resolve_dispatch(cfg: &ScenarioConfig, ex: &Exogenous, state: &SimState, action: &[f64]) -> Outcome {
    let a = clamp_action(action);
    let mut band_violations = 0u32;
    let mut load = |spec: &ConverterSpec, req: f64| {
        let l = resolve_loading(spec.delta_min, spec.delta_max, req);
        band_violations += l.violation as u32;
        l.delta
    };

    let res_avail = ex.pv + ex.pw;
    let res = a[RES] * res_avail;
    let d_cfp = load(&cfg.cfp, a[CFP]);
    let d_gt = load(&cfg.gt, a[GT]);
    let d_gb = load(&cfg.gb, a[GB]);
    let hp_req = load(&cfg.wshp, a[HP]);
    let ec_req = load(&cfg.ec, a[EC]);
    let ac_req = load(&cfg.ac, a[AC]);
    let cfp = cfp_step(&cfg.cfp, d_cfp);
    let gt = chp_gas_step(&cfg.gt, d_gt);
    let gb = thermal_step(&cfg.gb, d_gb, HeatSource::GasBoiler);

    let cdr = &cfg.cdr;
    let (mes, _) = mes_emissions(gt.co2, cfp.co2, gb.co2);
    let mut pcc_req = 0.0;
    if cdr.variant.has_pcc() && cdr.pcc_cap > 0.0 {
        let l = resolve_loading(cdr.pcc_delta_min, cdr.pcc_delta_max, a[PCC]);
        band_violations += l.violation as u32;
        // cannot process more flue gas than the plant emits
        pcc_req = l.delta.min(mes / cdr.pcc_cap);
        if pcc_req < cdr.pcc_delta_min {
            pcc_req = 0.0;
        }
    }
    let mut dac_req = 0.0;
    if cdr.variant.has_dac() {
        let l = resolve_loading(cdr.dac_delta_min, cdr.dac_delta_max, a[DAC]);
        band_violations += l.violation as u32;
        dac_req = l.delta;
    }

    let bes_try = storage_step(StorageState { soc: state.soc_b }, &cfg.bes, a[BES]);
    let tes_try = storage_step(StorageState { soc: state.soc_h }, &cfg.tes, a[TES]);
    band_violations += bes_try.band_violation as u32 + tes_try.band_violation as u32;
    let bes_dis = bes_try.power.max(0.0);
    let tes_dis = tes_try.power.max(0.0);
    let bes_ch_req = (-bes_try.power).max(0.0);
    let tes_ch_req = (-tes_try.power).max(0.0);

    let e_pool = res + gt.e_out + cfp.e_out + bes_dis;
    let h_base = cfp.h_out + gt.h_out + gb.h_out + tes_dis;

    let mut er = route_electricity(cfg, e_pool, ex.el, hp_req, ec_req, pcc_req, dac_req, bes_ch_req);
    let mut hp = thermal_step(&cfg.wshp, er.hp, HeatSource::HeatPump);
    let mut hr = route_heat(cfg, h_base + hp.h_out, ex.hl, ac_req, er.dac, tes_ch_req);
    if hr.dac < er.dac {
        er = route_electricity(cfg, e_pool, ex.el, hp_req, ec_req, pcc_req, hr.dac, bes_ch_req);
        hp = thermal_step(&cfg.wshp, er.hp, HeatSource::HeatPump);
        hr = route_heat(cfg, h_base + hp.h_out, ex.hl, ac_req, er.dac, tes_ch_req);
    }
    let d_dac = er.dac.min(hr.dac);

    let ec = chiller_step(&cfg.ec, er.ec, Chiller::Electric);
    let ac = chiller_step(&cfg.ac, hr.ac, Chiller::Absorption);
    let pcc: PccOutput = pcc_step(cdr, er.pcc, er.pcc > 0.0);
    let dac: DacOutput = dac_step(cdr, d_dac, d_dac > 0.0);

    let bes = if bes_try.power >= 0.0 {
        bes_try
    } else {
        storage_step(StorageState { soc: state.soc_b }, &cfg.bes, -er.bes_charge / cfg.bes.p_rated)
    };
    let tes = if tes_try.power >= 0.0 {
        tes_try
    } else {
        storage_step(StorageState { soc: state.soc_h }, &cfg.tes, -hr.tes_charge / cfg.tes.p_rated)
    };

    let residuals = Residuals {
        el: er.surplus - (ex.el - er.el_served),
        hl: hr.surplus - (ex.hl - hr.hl_served),
        cl: ec.c_out + ac.c_out - ex.cl,
    };

    let ledger = EmissionLedger::new(gt.co2, cfp.co2, gb.co2, pcc.captured, dac.captured);
    let flows = OperatingFlows {
        res,
        gt: gt.e_out,
        cfp: cfp.e_out,
        gb: gb.h_out,
        wshp: hp.h_out,
        ec: ec.c_out,
        ac: ac.c_out,
        bes: bes.power,
        tes: tes.power,
    };
    let op = operation_cost(&flows, &cfg.op_costs());
    let fuel = fuel_cost(gt.fuel_in, gb.fuel_in, cfp.fuel_in, &cfg.tariffs);
    let cdr_parts = cdr_cost(&pcc, &dac, &cfg.tariffs, cfg.gas_lhv);
    let emission = emission_cost(ledger.released, &cfg.tariffs);

    let outputs = [gt.e_out, cfp.e_out, gb.h_out, hp.h_out, ec.c_out, ac.c_out];
    let specs = [&cfg.gt, &cfg.cfp, &cfg.gb, &cfg.wshp, &cfg.ec, &cfg.ac];
    let ramp: f64 = (0..6).map(|i| ramp_penalty(state.prev[i], outputs[i], specs[i], cfg.penalties.omega)).sum();
    let balance = balance_penalties(&residuals, &cfg.penalties);
    let soc = bes.penalty + tes.penalty;
    let release = if cdr.variant == CdrVariant::None {
        0.0
    } else {
        release_cap_penalty(ledger.total_emit, ledger.released, &cfg.penalties)
    };
    let penalties = Penalties { balance, ramp, soc, release, total: balance + ramp + soc + release };
    let costs = CostBreakdown::new(op, fuel, cdr_parts.total, emission, penalties.total);

    let mut effective = [0.0; ACT_DIM];
    effective[RES] = a[RES];
    effective[CFP] = d_cfp;
    effective[GT] = d_gt;
    effective[GB] = d_gb;
    effective[HP] = er.hp;
    effective[BES] = bes.power / cfg.bes.p_rated;
    effective[TES] = tes.power / cfg.tes.p_rated;
    effective[EC] = er.ec;
    effective[AC] = hr.ac;
    effective[PCC] = er.pcc;
    effective[DAC] = d_dac;

    let dispatch = Dispatch {
        el: ex.el,
        hl: ex.hl,
        cl: ex.cl,
        res_avail,
        res,
        gt_e: gt.e_out,
        gt_h: gt.h_out,
        cfp_e: cfp.e_out,
        cfp_h: cfp.h_out,
        gb_h: gb.h_out,
        wshp_h: hp.h_out,
        wshp_e: hp.e_in,
        ec_c: ec.c_out,
        ec_e: ec.e_in,
        ac_c: ac.c_out,
        ac_h: ac.h_in,
        bes_p: bes.power,
        tes_p: tes.power,
        soc_b: bes.state.soc,
        soc_h: tes.state.soc,
        pcc_cap: pcc.captured,
        pcc_e: pcc.elec,
        dac_cap: dac.captured,
        dac_e: dac.elec,
        dac_h: dac.heat,
        dac_gas: dac.gas,
        gas_chp: gt.fuel_in,
        gas_gb: gb.fuel_in,
        coal: cfp.fuel_in,
        pcc_solvent: pcc.solvent,
        dac_sorbent: dac.sorbent,
        el_served: er.el_served,
        hl_served: hr.hl_served,
        surplus_e: er.surplus,
        surplus_h: hr.surplus,
        residual_el: residuals.el,
        residual_hl: residuals.hl,
        residual_cl: residuals.cl,
    };
    Outcome {
        dispatch,
        ledger,
        costs,
        cdr: cdr_parts,
        penalties,
        next: SimState { soc_b: bes.state.soc, soc_h: tes.state.soc, prev: outputs },
        band_violations,
        effective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> SimState {
        SimState { soc_b: 0.5, soc_h: 0.5, prev: [0.0; 6] }
    }

    #[test]
    fn zero_action_residuals_equal_loads() {
        let cfg = ScenarioConfig::for_case(1).unwrap();
        let ex = Exogenous { pv: 10.0, pw: 20.0, el: 200.0, hl: 150.0, cl: 90.0 };
        let o = resolve_dispatch(&cfg, &ex, &start(), &[0.0; ACT_DIM]);
        assert_eq!(o.dispatch.residual_el, -200.0);
        assert_eq!(o.dispatch.residual_hl, -150.0);
        assert_eq!(o.dispatch.residual_cl, -90.0);
        let expected = 100.0 * (200.0f64.powi(2) + 150.0f64.powi(2) + 90.0f64.powi(2));
        assert!((o.penalties.total - expected).abs() < 1e-6);
        assert_eq!(o.costs.total, 0.0);
    }

    #[test]
    fn renewable_surplus_goes_to_battery_or_residual() {
        let cfg = ScenarioConfig::for_case(1).unwrap();
        let ex = Exogenous { pv: 3.0, pw: 0.0, el: 2.0, hl: 0.0, cl: 0.0 };
        let mut a = [0.0; ACT_DIM];
        a[RES] = 1.0;
        let o = resolve_dispatch(&cfg, &ex, &start(), &a);
        assert_eq!(o.dispatch.el_served, 2.0);
        assert!((o.dispatch.residual_el - 1.0).abs() < 1e-12);
        a[BES] = -0.5;
        let o = resolve_dispatch(&cfg, &ex, &start(), &a);
        assert!(o.dispatch.residual_el.abs() < 1e-12);
        assert!((o.dispatch.bes_p + 1.0).abs() < 1e-12);
        assert!((o.dispatch.soc_b - (0.5 + 0.95 / 200.0)).abs() < 1e-12);
    }

    #[test]
    fn pcc_without_electricity_captures_nothing() {
        let cfg = ScenarioConfig::for_case(2).unwrap();
        let ex = Exogenous { pv: 0.0, pw: 0.0, el: 0.0, hl: 0.0, cl: 0.0 };
        let mut a = [0.0; ACT_DIM];
        a[GB] = 1.0;
        a[PCC] = 1.0;
        let o = resolve_dispatch(&cfg, &ex, &start(), &a);
        assert!(o.ledger.mes_emit > 0.0);
        assert_eq!(o.ledger.pcc_cap, 0.0);
        assert_eq!(o.effective[PCC], 0.0);
    }

    #[test]
    fn pcc_limited_by_flue_gas() {
        let cfg = ScenarioConfig::for_case(2).unwrap();
        let ex = Exogenous { pv: 0.0, pw: 0.0, el: 0.0, hl: 0.0, cl: 0.0 };
        let mut a = [0.0; ACT_DIM];
        a[CFP] = 0.4;
        a[PCC] = 1.0;
        let o = resolve_dispatch(&cfg, &ex, &start(), &a);
        let mes = o.ledger.mes_emit;
        assert!(mes < 300.0);
        assert!((o.ledger.pcc_cap - 0.9 * mes).abs() < 1e-9);
    }

    #[test]
    fn dac2_needs_heat() {
        let cfg = ScenarioConfig::for_case(4).unwrap();
        let ex = Exogenous { pv: 50.0, pw: 100.0, el: 0.0, hl: 0.0, cl: 0.0 };
        let mut a = [0.0; ACT_DIM];
        a[RES] = 1.0;
        a[DAC] = 1.0;
        let o = resolve_dispatch(&cfg, &ex, &start(), &a);
        assert_eq!(o.ledger.dac_cap, 0.0);
        // electricity stays unused
        assert!((o.dispatch.surplus_e - 150.0).abs() < 1e-9);
        a[GB] = 1.0;
        let o = resolve_dispatch(&cfg, &ex, &start(), &a);
        let heat_per_t = cfg.cdr.dac_heat;
        assert!((o.dispatch.dac_cap - 200.0 / heat_per_t).abs() < 1e-9, "{}", o.dispatch.dac_cap);
        assert!((o.dispatch.dac_h - 200.0).abs() < 1e-9);
        assert!(o.dispatch.surplus_h.abs() < 1e-9);
    }

    #[test]
    fn carriers_never_overdrawn() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for case in 1..=4 {
            let cfg = ScenarioConfig::for_case(case).unwrap();
            for _ in 0..2000 {
                let ex = Exogenous {
                    pv: rng.random_range(0.0..50.0),
                    pw: rng.random_range(0.0..200.0),
                    el: rng.random_range(0.0..400.0),
                    hl: rng.random_range(0.0..300.0),
                    cl: rng.random_range(0.0..200.0),
                };
                let a: Vec<f64> = (0..ACT_DIM).map(|i| if i == BES || i == TES { rng.random_range(-1.0..1.0) } else { rng.random_range(0.0..1.0) }).collect();
                let st = SimState { soc_b: rng.random_range(0.0..1.0), soc_h: rng.random_range(0.0..1.0), prev: [0.0; 6] };
                let o = resolve_dispatch(&cfg, &ex, &st, &a);
                let d = o.dispatch;
                let e_in = d.res + d.gt_e + d.cfp_e + d.bes_p.max(0.0);
                let e_out = d.el_served + d.wshp_e + d.ec_e + d.pcc_e + d.dac_e + (-d.bes_p).max(0.0);
                assert!(e_out <= e_in + 1e-9);
                assert!((e_in - e_out - d.surplus_e).abs() < 1e-6 * e_in.max(1.0));
                let h_in = d.cfp_h + d.gt_h + d.gb_h + d.wshp_h + d.tes_p.max(0.0);
                let h_out = d.hl_served + d.ac_h + d.dac_h + (-d.tes_p).max(0.0);
                assert!(h_out <= h_in + 1e-9);
                assert!((h_in - h_out - d.surplus_h).abs() < 1e-6 * h_in.max(1.0));
                let pen = balance_penalties(
                    &Residuals { el: d.residual_el, hl: d.residual_hl, cl: d.residual_cl },
                    &cfg.penalties,
                );
                assert_eq!(pen, o.penalties.balance);
                assert!(o.raw_reward() <= 0.0);
            }
        }
    }
}
