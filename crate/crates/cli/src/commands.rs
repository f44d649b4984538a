use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use zcmes::agents::{self, load_policy, save_policy, write_curve, Algo, HyperParams, Manifest};
use zcmes::baseline::{greedy_schedule, pso_schedule, PsoConfig};
use zcmes::data;
use zcmes::env::config::{DataSource, ScenarioConfig};
use zcmes::env::{load_hours, rollout, EnvError, EpisodeReport, ZcmesEnv};
use zcmes::tuner::{importance, tune_agent, AgentTuneConfig, SearchSpace, Study, TuneConfig};

use crate::report::{compare_rows, read_report, write_compare, write_json, write_trace_csv, MethodReport};
use crate::{plot, AlgoArg, BaselineArg, Cli, Command, Failure, Global, Preset, PsoArgs};

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn env_failure(e: EnvError) -> Failure {
    match e {
        EnvError::Config(_) | EnvError::Argument(_) | EnvError::Data(_) => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.into()),
    }
}

fn load_config(g: &Global) -> Result<ScenarioConfig, Failure> {
    match &g.config {
        Some(p) => ScenarioConfig::load(p).map_err(env_failure),
        None => ScenarioConfig::for_case(g.case).map_err(env_failure),
    }
}

fn build_env(cfg: ScenarioConfig) -> Result<ZcmesEnv, Failure> {
    ZcmesEnv::new(cfg).map_err(env_failure)
}

fn algo_of(a: AlgoArg) -> Algo {
    match a {
        AlgoArg::Sac => Algo::Sac,
        AlgoArg::Td3 => Algo::Td3,
    }
}

fn algo_name(a: Algo) -> &'static str {
    match a {
        Algo::Sac => "sac",
        Algo::Td3 => "td3",
    }
}

fn pso_config(p: &PsoArgs, seed: u64) -> PsoConfig {
    PsoConfig {
        particles: p.pso_particles,
        max_iters: p.pso_iters,
        action_samples: p.pso_samples,
        seed,
        ..PsoConfig::default()
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let g = cli.global;
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    match cli.command {
        Command::Ingest { loads, weather } => ingest(&g, &loads, &weather),
        Command::Synth { horizon } => synth(&g, horizon),
        Command::Train { algo, steps, preset, hyperparams, full_size } => {
            train(&g, algo_of(algo), steps, preset, hyperparams.as_deref(), full_size)
        }
        Command::Evaluate { agent, baseline, episodes, pso } => evaluate(&g, agent.as_deref(), baseline, episodes, &pso),
        Command::Compare { reports, pso, greedy, baseline, pso_args } => compare(&g, &reports, pso, greedy, baseline, &pso_args),
        Command::SweepCarbon { prices, from, to, step, pso } => sweep(&g, prices, from, to, step, &pso),
        Command::Tune { algo, trials, steps_per_trial, eval_episodes, study } => {
            tune(&g, algo_of(algo), trials, steps_per_trial, eval_episodes, study)
        }
    }
}

#[derive(Serialize)]
struct SeriesRange {
    min: f64,
    max: f64,
    mean: f64,
}

fn range(v: impl Iterator<Item = f64> + Clone) -> SeriesRange {
    let n = v.clone().count().max(1) as f64;
    SeriesRange {
        min: v.clone().fold(f64::INFINITY, f64::min),
        max: v.clone().fold(f64::NEG_INFINITY, f64::max),
        mean: v.sum::<f64>() / n,
    }
}

#[derive(Serialize)]
struct IngestSummary {
    hours: usize,
    config_hash: String,
    el: SeriesRange,
    hl: SeriesRange,
    cl: SeriesRange,
    pv: SeriesRange,
    wind: SeriesRange,
}

fn ingest(g: &Global, loads: &Path, weather: &Path) -> Result<(), Failure> {
    let l = data::load_loads(loads).map_err(|e| usage(format!("{}: {e}", loads.display())))?;
    let w = data::load_weather(weather).map_err(|e| usage(format!("{}: {e}", weather.display())))?;
    data::write_loads(std::fs::File::create(g.out.join("loads.csv"))?, &l)?;
    data::write_weather(std::fs::File::create(g.out.join("weather.csv"))?, &w)?;
    let mut cfg = load_config(g)?;
    cfg.obs_bounds = None;
    cfg.data = DataSource::Files { loads: g.out.join("loads.csv"), weather: g.out.join("weather.csv") };
    let hours = load_hours(&cfg).map_err(env_failure)?;
    let env = ZcmesEnv::with_hours(cfg, hours).map_err(env_failure)?;
    // frozen bounds, data referenced next to the scenario file
    let mut frozen = env.config().clone();
    frozen.data = DataSource::Files { loads: PathBuf::from("loads.csv"), weather: PathBuf::from("weather.csv") };
    write_json(&g.out.join("scenario.json"), &frozen)?;
    let h = env.hours();
    let summary = IngestSummary {
        hours: h.len(),
        config_hash: frozen.hash(),
        el: range(h.iter().map(|x| x.el)),
        hl: range(h.iter().map(|x| x.hl)),
        cl: range(h.iter().map(|x| x.cl)),
        pv: range(h.iter().map(|x| x.pv)),
        wind: range(h.iter().map(|x| x.pw)),
    };
    write_json(&g.out.join("ingest.json"), &summary)?;
    println!("ingested {} h; scenario {}", summary.hours, summary.config_hash);
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary {
    seed: u64,
    horizon: usize,
    el: SeriesRange,
    hl: SeriesRange,
    cl: SeriesRange,
    ghi: SeriesRange,
    wind: SeriesRange,
}

fn synth(g: &Global, horizon: usize) -> Result<(), Failure> {
    if horizon == 0 {
        return Err(usage("horizon must be positive"));
    }
    let (l, w) = data::synth_scenario(g.seed, horizon).map_err(|e| usage(e.to_string()))?;
    data::write_loads(std::fs::File::create(g.out.join("loads.csv"))?, &l)?;
    data::write_weather(std::fs::File::create(g.out.join("weather.csv"))?, &w)?;
    let s = SynthSummary {
        seed: g.seed,
        horizon,
        el: range(l.iter().map(|x| x.el)),
        hl: range(l.iter().map(|x| x.hl)),
        cl: range(l.iter().map(|x| x.cl)),
        ghi: range(w.iter().map(|x| x.ghi)),
        wind: range(w.iter().map(|x| x.wind)),
    };
    write_json(&g.out.join("synth.json"), &s)?;
    println!("wrote {horizon} h of synthetic loads and weather");
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    algo: &'static str,
    seed: u64,
    steps: usize,
    updates: u64,
    config_hash: String,
    episodes: usize,
    first_decile_return: f64,
    last_decile_return: f64,
    hyperparams: HyperParams,
}

fn decile_means(r: &[f64]) -> (f64, f64) {
    if r.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = (r.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&r[..k]), mean(&r[r.len() - k..]))
}

fn train(g: &Global, algo: Algo, steps: usize, preset: Preset, hp_file: Option<&Path>, full_size: bool) -> Result<(), Failure> {
    let mut env = build_env(load_config(g)?)?;
    let hp = match hp_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let hp: HyperParams = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if hp.algo != algo {
                return Err(usage(format!("{} holds {} settings", p.display(), algo_name(hp.algo))));
            }
            hp
        }
        None => {
            let base = match preset {
                Preset::Tuned => HyperParams::tuned(algo),
                Preset::Untuned => HyperParams::untuned(algo),
            };
            if full_size {
                base
            } else {
                base.desk()
            }
        }
    };
    hp.validate().map_err(|e| usage(e.to_string()))?;
    if steps < hp.learning_starts {
        return Err(usage(format!("--steps must be at least {}", hp.learning_starts)));
    }
    let hash = env.config().hash();
    let out = agents::train(&mut env, &hp, steps, g.seed, &mut |_| true)?;
    let policy = out.agent.policy();
    let manifest = Manifest::new(&hp, env.config().obs_bounds.as_ref().map_or(0, |b| b.lo.len()), &policy.bounds, &hash, g.seed, steps);
    save_policy(&g.out.join("agent"), &policy, &manifest)?;
    write_curve(&g.out.join("curve.csv"), &out.curve)?;
    plot::curve(&g.out.join("curve.svg"), &out.curve)?;
    let (first, last) = decile_means(&out.complete_returns());
    let summary = TrainSummary {
        algo: algo_name(algo),
        seed: g.seed,
        steps: out.steps,
        updates: out.updates,
        config_hash: hash,
        episodes: out.curve.len(),
        first_decile_return: first,
        last_decile_return: last,
        hyperparams: hp,
    };
    write_json(&g.out.join("train.json"), &summary)?;
    println!(
        "trained {} for {} steps: mean return {:.3} (first tenth) -> {:.3} (last tenth)",
        summary.algo, summary.steps, first, last
    );
    Ok(())
}

/// Runs a method and returns its report plus the first episode for traces.
fn run_method(
    env: &mut ZcmesEnv,
    g: &Global,
    agent: Option<&Path>,
    baseline: Option<BaselineArg>,
    episodes: usize,
    pso: &PsoArgs,
) -> Result<(String, EpisodeReport), Failure> {
    let hash = env.config().hash();
    let start = env.config().eval_start;
    let len = env.config().episode_len;
    match (agent, baseline) {
        (Some(dir), None) => {
            let (policy, manifest) = load_policy(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            if manifest.config_hash != hash {
                return Err(usage(format!(
                    "agent in {} was trained on scenario {}, but this scenario hashes to {}; pass the matching --config or --case",
                    dir.display(),
                    manifest.config_hash,
                    hash
                )));
            }
            let rep = rollout(env, episodes.max(1), |_, norm, _| policy.act(norm)).map_err(env_failure)?;
            Ok((algo_name(policy.algo).to_string(), rep))
        }
        (None, Some(BaselineArg::Pso)) => {
            let s = pso_schedule(env, start, len, &pso_config(pso, g.seed)).map_err(env_failure)?;
            Ok(("pso".into(), s.report))
        }
        (None, Some(BaselineArg::Greedy)) => {
            let s = greedy_schedule(env, start, len).map_err(env_failure)?;
            Ok(("greedy".into(), s.report))
        }
        _ => Err(usage("evaluate needs exactly one of --agent DIR or --baseline pso|greedy")),
    }
}

fn evaluate(g: &Global, agent: Option<&Path>, baseline: Option<BaselineArg>, episodes: usize, pso: &PsoArgs) -> Result<(), Failure> {
    let mut env = build_env(load_config(g)?)?;
    let (method, rep) = run_method(&mut env, g, agent, baseline, episodes, pso)?;
    let report = MethodReport::from_episodes(&method, g.seed, &rep);
    write_json(&g.out.join("report.json"), &report)?;
    let trace = &rep.episodes[0].trace;
    write_trace_csv(&g.out.join("dispatch.csv"), trace)?;
    plot::dispatch(&g.out.join("dispatch.svg"), trace)?;
    plot::soc(&g.out.join("soc.svg"), trace)?;
    println!(
        "{method} on case {}: cost {:.2}, penalties {:.2}, released {:.3} t, captured {:.3} t",
        report.case,
        report.costs.total,
        report.costs.penalty,
        report.ledger.released,
        report.ledger.captured()
    );
    Ok(())
}

fn compare(
    g: &Global,
    paths: &[PathBuf],
    with_pso: bool,
    with_greedy: bool,
    baseline: Option<String>,
    pso: &PsoArgs,
) -> Result<(), Failure> {
    let mut reports = Vec::new();
    for p in paths {
        reports.push(read_report(p).map_err(|e| usage(format!("{e:#}")))?);
    }
    if with_pso || with_greedy {
        let mut env = build_env(load_config(g)?)?;
        for (on, b) in [(with_pso, BaselineArg::Pso), (with_greedy, BaselineArg::Greedy)] {
            if on {
                let (m, rep) = run_method(&mut env, g, None, Some(b), 1, pso)?;
                reports.push(MethodReport::from_episodes(&m, g.seed, &rep));
            }
        }
    }
    if reports.len() < 2 {
        return Err(usage("compare needs at least two runs (report files or --pso/--greedy)"));
    }
    let hash = &reports[0].config_hash;
    if let Some(bad) = reports.iter().find(|r| &r.config_hash != hash) {
        return Err(usage(format!(
            "scenario mismatch: {} ran on {} but {} ran on {}",
            reports[0].method, hash, bad.method, bad.config_hash
        )));
    }
    let base = match &baseline {
        Some(name) => reports
            .iter()
            .position(|r| &r.method == name)
            .ok_or_else(|| usage(format!("no run named {name}")))?,
        None => reports.iter().position(|r| r.method == "pso").unwrap_or(0),
    };
    let rows = compare_rows(&reports, base);
    let text = write_compare(&g.out, &rows, &reports[base].method)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    price: f64,
    captured: f64,
    released: f64,
    total_emit: f64,
    captured_fraction: f64,
    cdr_cost: f64,
    total_cost: f64,
    overall_cost: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct SweepSummary {
    base_config_hash: String,
    seed: u64,
    pso: PsoConfig,
    rows: Vec<SweepRow>,
}

pub fn price_grid(prices: Option<Vec<f64>>, from: f64, to: f64, step: f64) -> Result<Vec<f64>, Failure> {
    let grid = match prices {
        Some(p) => p,
        None => {
            if !(step > 0.0) || !(to >= from) {
                return Err(usage("price range needs --step > 0 and --to >= --from"));
            }
            let mut v = Vec::new();
            let mut k = 0;
            loop {
                let p = from + step * k as f64;
                if p > to + 1e-9 {
                    break;
                }
                v.push(p);
                k += 1;
            }
            if v.last().is_some_and(|l| to - l > 1e-9) {
                v.push(to);
            }
            v
        }
    };
    if grid.is_empty() {
        return Err(usage("price list is empty"));
    }
    if grid.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(usage("prices must be finite and non-negative"));
    }
    Ok(grid)
}

fn sweep(g: &Global, prices: Option<Vec<f64>>, from: f64, to: f64, step: f64, pso: &PsoArgs) -> Result<(), Failure> {
    let grid = price_grid(prices, from, to, step)?;
    let base = load_config(g)?;
    let base_hash = build_env(base.clone())?.config().hash();
    let cfg_pso = pso_config(pso, g.seed);
    let mut rows = Vec::new();
    for &price in &grid {
        let mut cfg = base.clone();
        cfg.tariffs.co2 = price;
        let mut env = build_env(cfg)?;
        let (start, len) = (env.config().eval_start, env.config().episode_len);
        let s = pso_schedule(&mut env, start, len, &cfg_pso).map_err(env_failure)?;
        let e = &s.report.episodes[0];
        let l = &e.ledger;
        rows.push(SweepRow {
            price,
            captured: l.captured(),
            released: l.released,
            total_emit: l.total_emit,
            captured_fraction: if l.total_emit > 0.0 { l.captured() / l.total_emit } else { 0.0 },
            cdr_cost: e.cdr.total,
            total_cost: e.costs.total,
            overall_cost: e.overall_cost(),
            config_hash: s.report.config_hash.clone(),
        });
        println!("price {price:>8.2} $/t: captured {:.3} t, released {:.3} t", l.captured(), l.released);
    }
    let mut w = csv::Writer::from_path(g.out.join("sweep.csv")).context("sweep.csv")?;
    w.write_record(["price", "captured", "released", "total_emit", "captured_fraction", "cdr_cost", "total_cost", "overall_cost"])
        .context("sweep.csv")?;
    for r in &rows {
        let cells = [r.price, r.captured, r.released, r.total_emit, r.captured_fraction, r.cdr_cost, r.total_cost, r.overall_cost];
        w.write_record(cells.map(|v| v.to_string())).context("sweep.csv")?;
    }
    w.flush()?;
    plot::sweep(
        &g.out.join("sweep.svg"),
        &grid,
        &rows.iter().map(|r| r.captured).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.released).collect::<Vec<_>>(),
    )?;
    write_json(&g.out.join("sweep.json"), &SweepSummary { base_config_hash: base_hash, seed: g.seed, pso: cfg_pso, rows })?;
    Ok(())
}

#[derive(Serialize)]
struct BestSummary {
    config_hash: String,
    trial: usize,
    objective: f64,
    completed: usize,
    pruned: usize,
    hyperparams: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    importance: Option<Vec<(String, f64)>>,
}

fn tune(g: &Global, algo: Algo, trials: usize, steps: usize, eval_episodes: usize, study: Option<PathBuf>) -> Result<(), Failure> {
    if trials < 2 {
        return Err(usage("--trials must be at least 2"));
    }
    let mut env = build_env(load_config(g)?)?;
    let base = HyperParams::untuned(algo).desk();
    if steps < base.learning_starts {
        return Err(usage(format!("--steps-per-trial must be at least {}", base.learning_starts)));
    }
    let path = study.unwrap_or_else(|| g.out.join("study.jsonl"));
    let mut st = Study::open(&path).map_err(|e| usage(e.to_string()))?;
    let space = SearchSpace::for_algo(algo);
    let cfg = AgentTuneConfig {
        base,
        steps_per_trial: steps,
        eval_episodes,
        checkpoints: 4,
        train_seed: g.seed,
        search: TuneConfig { trials, seed: g.seed, ..TuneConfig::default() },
    };
    let (outcome, hp) = tune_agent(&mut env, &space, &cfg, &mut st)?;
    let imp = importance(&space, &st.records).ok();
    let summary = BestSummary {
        config_hash: env.config().hash(),
        trial: outcome.best.id,
        objective: outcome.best.objective.unwrap_or(f64::NAN),
        completed: st.completed().count(),
        pruned: st.records.iter().filter(|r| r.state == zcmes::tuner::TrialState::Pruned).count(),
        hyperparams: hp.clone(),
        importance: imp.clone(),
    };
    write_json(&g.out.join("best.json"), &summary)?;
    let extra = match algo {
        Algo::Sac => format!("  entropy coefficient  {}\n", hp.ent_coef),
        Algo::Td3 => format!("  noise std            {}\n  policy delay         {}\n", hp.noise_std, hp.policy_delay),
    };
    print!(
        "best {} trial {} of {} (objective {:.4}{})\n  gamma                {}\n  learning rate        {}\n  buffer size          {}\n  batch size           {}\n  tau                  {}\n{extra}  net arch             {:?}\n  activation           {:?}\n  learning starts      {}\n  train freq           {}\n  gradient steps       {}\n",
        algo_name(algo),
        summary.trial,
        st.records.len(),
        summary.objective,
        if outcome.early_stopped { ", stopped on plateau" } else { "" },
        hp.gamma,
        hp.lr,
        hp.buffer_size,
        hp.batch_size,
        hp.tau,
        hp.net_arch,
        hp.activation,
        hp.learning_starts,
        hp.train_freq,
        hp.gradient_steps,
    );
    if let Some(imp) = imp {
        println!("importance:");
        for (name, s) in imp {
            println!("  {name:<20} {s:.3}");
        }
    }
    Ok(())
}
