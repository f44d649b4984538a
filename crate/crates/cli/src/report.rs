use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use zcmes::carbon::{Ccrr, Cri, EmissionLedger};
use zcmes::economics::{CdrCost, CostBreakdown};
use zcmes::env::dispatch::{Penalties, ACTION_NAMES};
use zcmes::env::{EpisodeReport, StepTrace};

pub const REPORT_VERSION: u32 = 1;

/// Evaluation of one method on one scenario, averaged over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub version: u32,
    pub method: String,
    pub case: u8,
    pub config_hash: String,
    pub seed: u64,
    pub episodes: usize,
    pub costs: CostBreakdown,
    /// Components plus penalties.
    pub overall_cost: f64,
    pub cdr: CdrCost,
    pub penalties: Penalties,
    pub ledger: EmissionLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cri: Option<Cri>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccrr: Option<Ccrr>,
    pub raw_return: f64,
    pub max_abs_residual: f64,
    pub band_violations: u32,
}

impl MethodReport {
    /// Episode means; metrics come from the first episode since
    /// evaluation episodes share the start hour.
    pub fn from_episodes(method: &str, seed: u64, rep: &EpisodeReport) -> Self {
        let n = rep.episodes.len().max(1) as f64;
        let mut costs = CostBreakdown::default();
        let mut cdr = CdrCost::default();
        let mut penalties = Penalties::default();
        let mut ledger = EmissionLedger::default();
        let mut residual: f64 = 0.0;
        let mut band = 0;
        for e in &rep.episodes {
            costs.accumulate(&e.costs);
            cdr.capture += e.cdr.capture;
            cdr.storage += e.cdr.storage;
            cdr.pcc_solvent += e.cdr.pcc_solvent;
            cdr.dac_sorbent += e.cdr.dac_sorbent;
            cdr.dac_gas += e.cdr.dac_gas;
            cdr.total += e.cdr.total;
            penalties.accumulate(&e.penalties);
            ledger.accumulate(&e.ledger);
            residual = residual.max(e.max_abs_residual);
            band += e.band_violations;
        }
        let scale = |x: &mut f64| *x /= n;
        for x in [&mut costs.op, &mut costs.fuel, &mut costs.cdr, &mut costs.emission, &mut costs.penalty, &mut costs.total] {
            scale(x);
        }
        for x in [&mut cdr.capture, &mut cdr.storage, &mut cdr.pcc_solvent, &mut cdr.dac_sorbent, &mut cdr.dac_gas, &mut cdr.total] {
            scale(x);
        }
        for x in [&mut penalties.balance, &mut penalties.ramp, &mut penalties.soc, &mut penalties.release, &mut penalties.total] {
            scale(x);
        }
        for x in [&mut ledger.mes_emit, &mut ledger.total_emit, &mut ledger.pcc_cap, &mut ledger.dac_cap, &mut ledger.released] {
            scale(x);
        }
        let first = rep.episodes.first();
        Self {
            version: REPORT_VERSION,
            method: method.into(),
            case: rep.case,
            config_hash: rep.config_hash.clone(),
            seed,
            episodes: rep.episodes.len(),
            overall_cost: costs.overall(),
            costs,
            cdr,
            penalties,
            ledger,
            cri: first.and_then(|e| e.cri),
            ccrr: first.and_then(|e| e.ccrr),
            raw_return: rep.mean_raw_return,
            max_abs_residual: residual,
            band_violations: band,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_report(path: &Path) -> anyhow::Result<MethodReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Per-hour dispatch of one episode.
pub fn write_trace_csv(path: &Path, trace: &[StepTrace]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["hour".into()];
    header.extend(ACTION_NAMES.iter().map(|n| format!("a_{}", n.to_ascii_lowercase())));
    header.extend(
        [
            "el", "hl", "cl", "res", "gt_e", "gt_h", "cfp_e", "cfp_h", "gb_h", "wshp_h", "wshp_e", "ec_c", "ec_e", "ac_c",
            "ac_h", "bes_p", "tes_p", "soc_b", "soc_h", "pcc_cap", "dac_cap", "residual_el", "residual_hl", "residual_cl",
            "total_emit", "released", "cost_total", "penalty", "raw_reward",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for s in trace {
        let d = &s.dispatch;
        let mut row: Vec<String> = vec![s.hour.to_string()];
        row.extend(s.action.iter().map(|a| a.to_string()));
        row.extend(
            [
                d.el,
                d.hl,
                d.cl,
                d.res,
                d.gt_e,
                d.gt_h,
                d.cfp_e,
                d.cfp_h,
                d.gb_h,
                d.wshp_h,
                d.wshp_e,
                d.ec_c,
                d.ec_e,
                d.ac_c,
                d.ac_h,
                d.bes_p,
                d.tes_p,
                d.soc_b,
                d.soc_h,
                d.pcc_cap,
                d.dac_cap,
                d.residual_el,
                d.residual_hl,
                d.residual_cl,
                s.ledger.total_emit,
                s.ledger.released,
                s.costs.total,
                s.costs.penalty,
                s.raw_reward,
            ]
            .map(|v| v.to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One comparison row; `overall` is the sum of the five cost columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub operation: f64,
    pub fuel: f64,
    pub emission: f64,
    pub cdr: f64,
    pub penalty: f64,
    pub overall: f64,
    pub improvement_pct: f64,
}

pub fn compare_rows(reports: &[MethodReport], baseline: usize) -> Vec<CompareRow> {
    let base = reports[baseline].costs.overall();
    reports
        .iter()
        .map(|r| {
            let c = &r.costs;
            let overall = c.op + c.fuel + c.emission + c.cdr + c.penalty;
            CompareRow {
                method: r.method.clone(),
                operation: c.op,
                fuel: c.fuel,
                emission: c.emission,
                cdr: c.cdr,
                penalty: c.penalty,
                overall,
                improvement_pct: if base != 0.0 { 100.0 * (base - overall) / base } else { 0.0 },
            }
        })
        .collect()
}

pub fn write_compare(dir: &Path, rows: &[CompareRow], baseline: &str) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut text = format!(
        "{:<12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>10}\n",
        "method", "operation", "fuel", "emission", "cdr", "penalty", "overall", "vs base %"
    );
    for r in rows {
        text += &format!(
            "{:<12} {:>14.2} {:>14.2} {:>14.2} {:>14.2} {:>14.2} {:>14.2} {:>10.2}\n",
            r.method, r.operation, r.fuel, r.emission, r.cdr, r.penalty, r.overall, r.improvement_pct
        );
    }
    text += &format!("baseline: {baseline}\n");
    let mut f = std::fs::File::create(dir.join("compare.txt"))?;
    f.write_all(text.as_bytes())?;
    Ok(text)
}
