//! Hyperparameter search: Parzen-estimator sampling, median pruning,
//! a plateau stop and a variance-based importance ranking.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{evaluate, train, Algo, HyperParams};
use crate::env::Mdp;
use crate::neural::Activation;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("no completed trials: {0}")]
    NoCompletedTrials(String),
    #[error("study file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    IntSet { values: Vec<i64> },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Text(_) => None,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:.6}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

pub type Assignment = BTreeMap<String, Value>;

impl Domain {
    fn validate(&self) -> Result<(), TuneError> {
        let ok = match self {
            Domain::Uniform { lo, hi } => lo < hi,
            Domain::LogUniform { lo, hi } => *lo > 0.0 && lo < hi,
            Domain::IntSet { values } => !values.is_empty(),
            Domain::Categorical { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(TuneError::Argument(format!("empty or inverted domain {self:?}")))
        }
    }

    /// Continuous coordinate used for density estimation, if any.
    fn to_internal(&self, v: &Value) -> Option<f64> {
        match self {
            Domain::Uniform { .. } => v.as_f64(),
            Domain::LogUniform { .. } => v.as_f64().map(f64::ln),
            _ => None,
        }
    }

    fn internal_range(&self) -> (f64, f64) {
        match self {
            Domain::Uniform { lo, hi } => (*lo, *hi),
            Domain::LogUniform { lo, hi } => (lo.ln(), hi.ln()),
            _ => (0.0, 1.0),
        }
    }

    fn from_internal(&self, x: f64) -> Value {
        match self {
            Domain::LogUniform { .. } => Value::Float(x.exp()),
            _ => Value::Float(x),
        }
    }

    fn choices(&self) -> Vec<Value> {
        match self {
            Domain::IntSet { values } => values.iter().map(|v| Value::Int(*v)).collect(),
            Domain::Categorical { values } => values.iter().map(|v| Value::Text(v.clone())).collect(),
            _ => Vec::new(),
        }
    }

    fn index_of(&self, v: &Value) -> Option<usize> {
        self.choices().iter().position(|c| c == v)
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Domain::Uniform { lo, hi } | Domain::LogUniform { lo, hi } => {
                v.as_f64().is_some_and(|x| x >= *lo && x <= *hi)
            }
            _ => self.index_of(v).is_some(),
        }
    }

    fn sample_uniform(&self, rng: &mut impl Rng) -> Value {
        match self {
            Domain::Uniform { .. } | Domain::LogUniform { .. } => {
                let (lo, hi) = self.internal_range();
                self.from_internal(rng.random_range(lo..=hi))
            }
            _ => {
                let c = self.choices();
                c[rng.random_range(0..c.len())].clone()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, Domain>,
}

impl SearchSpace {
    pub fn new(params: impl IntoIterator<Item = (String, Domain)>) -> Result<Self, TuneError> {
        let s = Self { params: params.into_iter().collect() };
        if s.params.is_empty() {
            return Err(TuneError::Argument("search space is empty".into()));
        }
        for d in s.params.values() {
            d.validate()?;
        }
        Ok(s)
    }

    /// Ranges bracketing the tuned settings, with desk-sized networks.
    pub fn for_algo(algo: Algo) -> Self {
        let mut p = vec![
            ("gamma".to_string(), Domain::Uniform { lo: 0.85, hi: 0.999 }),
            ("lr".into(), Domain::LogUniform { lo: 1e-4, hi: 1e-2 }),
            ("buffer_size".into(), Domain::IntSet { values: vec![10_000, 50_000, 100_000] }),
            ("batch_size".into(), Domain::IntSet { values: vec![64, 128, 256, 512, 1024] }),
            ("tau".into(), Domain::LogUniform { lo: 0.005, hi: 0.1 }),
            ("net_arch".into(), Domain::Categorical { values: vec!["32x32".into(), "64x64".into(), "128x128".into()] }),
            ("activation".into(), Domain::Categorical { values: vec!["relu".into(), "tanh".into()] }),
        ];
        match algo {
            Algo::Sac => p.push(("ent_coef".into(), Domain::LogUniform { lo: 1e-3, hi: 0.2 })),
            Algo::Td3 => p.push(("noise_std".into(), Domain::Uniform { lo: 0.05, hi: 0.8 })),
        }
        Self::new(p).expect("static space is valid")
    }

    /// Expresses `hp` in this space; fails when a value falls outside it.
    pub fn assignment_of(&self, hp: &HyperParams) -> Result<Assignment, TuneError> {
        let mut a = Assignment::new();
        for (name, dom) in &self.params {
            let v = match name.as_str() {
                "gamma" => Value::Float(hp.gamma),
                "lr" => Value::Float(hp.lr),
                "buffer_size" => Value::Int(hp.buffer_size as i64),
                "batch_size" => Value::Int(hp.batch_size as i64),
                "tau" => Value::Float(hp.tau),
                "ent_coef" => Value::Float(hp.ent_coef),
                "noise_std" => Value::Float(hp.noise_std),
                "net_arch" => Value::Text(hp.net_arch.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x")),
                "activation" => Value::Text(
                    match hp.activation {
                        Activation::Relu => "relu",
                        Activation::Tanh => "tanh",
                    }
                    .into(),
                ),
                other => return Err(TuneError::Argument(format!("unknown hyperparameter {other}"))),
            };
            if !dom.contains(&v) {
                return Err(TuneError::Argument(format!("{name} = {v} lies outside its domain")));
            }
            a.insert(name.clone(), v);
        }
        Ok(a)
    }
}

/// Overwrites the fields named in `a`.
pub fn apply(base: &HyperParams, a: &Assignment) -> Result<HyperParams, TuneError> {
    let mut hp = base.clone();
    let num = |name: &str, v: &Value| v.as_f64().ok_or_else(|| TuneError::Argument(format!("{name} must be numeric")));
    for (name, v) in a {
        match name.as_str() {
            "gamma" => hp.gamma = num(name, v)?,
            "lr" => hp.lr = num(name, v)?,
            "buffer_size" => hp.buffer_size = num(name, v)? as usize,
            "batch_size" => hp.batch_size = num(name, v)? as usize,
            "tau" => hp.tau = num(name, v)?,
            "ent_coef" => hp.ent_coef = num(name, v)?,
            "noise_std" => hp.noise_std = num(name, v)?,
            "net_arch" => {
                let Value::Text(s) = v else {
                    return Err(TuneError::Argument("net_arch must be text like 64x64".into()));
                };
                hp.net_arch = s
                    .split('x')
                    .map(|w| w.parse::<usize>().map_err(|e| TuneError::Argument(format!("net_arch {s}: {e}"))))
                    .collect::<Result<_, _>>()?;
            }
            "activation" => {
                hp.activation = match v {
                    Value::Text(s) if s == "relu" => Activation::Relu,
                    Value::Text(s) if s == "tanh" => Activation::Tanh,
                    _ => return Err(TuneError::Argument(format!("unknown activation {v}"))),
                }
            }
            other => return Err(TuneError::Argument(format!("unknown hyperparameter {other}"))),
        }
    }
    hp.batch_size = hp.batch_size.min(hp.buffer_size);
    hp.validate().map_err(|e| TuneError::Argument(e.to_string()))?;
    Ok(hp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Complete,
    Pruned,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: usize,
    pub params: Assignment,
    pub state: TrialState,
    /// Present exactly when the trial completed.
    pub objective: Option<f64>,
    pub intermediate: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Trial records, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct Study {
    pub records: Vec<TrialRecord>,
    path: Option<PathBuf>,
    queue: Vec<Assignment>,
}

impl Study {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates a study file; existing records are kept for resume.
    pub fn open(path: &Path) -> Result<Self, TuneError> {
        let mut records = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| TuneError::Io(e.to_string()))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let r: TrialRecord =
                    serde_json::from_str(line).map_err(|e| TuneError::Io(format!("line {}: {e}", i + 1)))?;
                records.push(r);
            }
        }
        Ok(Self { records, path: Some(path.to_path_buf()), queue: Vec::new() })
    }

    /// Queues an assignment to be tried before any sampling.
    pub fn enqueue(&mut self, a: Assignment) {
        self.queue.push(a);
    }

    fn next_id(&self) -> usize {
        self.records.iter().map(|r| r.id + 1).max().unwrap_or(0)
    }

    fn push(&mut self, r: TrialRecord) -> Result<(), TuneError> {
        if let Some(p) = &self.path {
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| TuneError::Io(e.to_string()))?;
            let line = serde_json::to_string(&r).map_err(|e| TuneError::Io(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| TuneError::Io(e.to_string()))?;
        }
        self.records.push(r);
        Ok(())
    }

    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.state == TrialState::Complete)
    }

    pub fn best(&self) -> Option<&TrialRecord> {
        self.completed().fold(None, |best: Option<&TrialRecord>, r| match best {
            Some(b) if b.objective >= r.objective => Some(b),
            _ => Some(r),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub trials: usize,
    /// Trials sampled uniformly before the estimator takes over.
    pub startup_trials: usize,
    /// Fraction of completed trials treated as good.
    pub gamma: f64,
    pub candidates: usize,
    /// Trials that must report before pruning can happen.
    pub prune_startup: usize,
    pub early_stop_window: usize,
    pub early_stop_threshold: f64,
    /// Completed trials required before the plateau stop may fire.
    pub early_stop_after: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            startup_trials: 10,
            gamma: 0.25,
            candidates: 24,
            prune_startup: 5,
            early_stop_window: 5,
            early_stop_threshold: 0.0005,
            early_stop_after: 10,
            seed: 0,
        }
    }
}

/// Median rule over what earlier trials reported at the same checkpoint.
pub struct Reporter<'a> {
    history: &'a [TrialRecord],
    prune_startup: usize,
    values: Vec<f64>,
    pruned: bool,
}

impl Reporter<'_> {
    /// Records an intermediate value; returns `false` once the trial should stop.
    pub fn report(&mut self, value: f64) -> bool {
        let k = self.values.len();
        self.values.push(value);
        let mut peers: Vec<f64> = self
            .history
            .iter()
            .filter(|r| r.state != TrialState::Failed)
            .filter_map(|r| r.intermediate.get(k).copied())
            .collect();
        if peers.len() >= self.prune_startup.max(1) {
            peers.sort_by(f64::total_cmp);
            let m = peers.len();
            let median = if m % 2 == 1 { peers[m / 2] } else { 0.5 * (peers[m / 2 - 1] + peers[m / 2]) };
            if value < median {
                self.pruned = true;
            }
        }
        !self.pruned
    }

    pub fn pruned(&self) -> bool {
        self.pruned
    }
}

fn gauss_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Parzen mixture over `points` plus a broad prior component.
struct Parzen {
    mus: Vec<f64>,
    sds: Vec<f64>,
}

impl Parzen {
    fn fit(points: &[f64], lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let mut mus: Vec<f64> = points.to_vec();
        mus.push(0.5 * (lo + hi));
        mus.sort_by(f64::total_cmp);
        let min_sd = width / (mus.len() as f64 + 1.0).min(100.0);
        let sds = (0..mus.len())
            .map(|i| {
                let left = if i > 0 { mus[i] - mus[i - 1] } else { mus[i] - lo };
                let right = if i + 1 < mus.len() { mus[i + 1] - mus[i] } else { hi - mus[i] };
                left.max(right).clamp(min_sd, width)
            })
            .collect::<Vec<_>>();
        // the prior keeps full width
        let prior = mus.iter().position(|m| *m == 0.5 * (lo + hi)).expect("prior inserted");
        let mut sds = sds;
        sds[prior] = width;
        Self { mus, sds }
    }

    fn pdf(&self, x: f64) -> f64 {
        let n = self.mus.len() as f64;
        self.mus.iter().zip(&self.sds).map(|(m, s)| gauss_pdf(x, *m, *s)).sum::<f64>() / n
    }

    fn sample(&self, rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
        let i = rng.random_range(0..self.mus.len());
        let d = Normal::new(self.mus[i], self.sds[i]).expect("positive sd");
        for _ in 0..32 {
            let x = d.sample(rng);
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
        d.sample(rng).clamp(lo, hi)
    }
}

fn sample_tpe(space: &SearchSpace, done: &[&TrialRecord], cfg: &TuneConfig, rng: &mut impl Rng) -> Assignment {
    let mut sorted: Vec<&TrialRecord> = done.to_vec();
    sorted.sort_by(|a, b| b.objective.unwrap_or(f64::NEG_INFINITY).total_cmp(&a.objective.unwrap_or(f64::NEG_INFINITY)));
    let n_good = ((cfg.gamma * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len().saturating_sub(1).max(1));
    let (good, bad) = sorted.split_at(n_good);
    let mut out = Assignment::new();
    for (name, dom) in &space.params {
        let v = match dom {
            Domain::Uniform { .. } | Domain::LogUniform { .. } => {
                let (lo, hi) = dom.internal_range();
                let pts = |rs: &[&TrialRecord]| {
                    rs.iter().filter_map(|r| r.params.get(name).and_then(|v| dom.to_internal(v))).collect::<Vec<_>>()
                };
                let l = Parzen::fit(&pts(good), lo, hi);
                let g = Parzen::fit(&pts(bad), lo, hi);
                let best = (0..cfg.candidates)
                    .map(|_| l.sample(rng, lo, hi))
                    .map(|x| (x, l.pdf(x).ln() - g.pdf(x).max(1e-300).ln()))
                    .fold((0.5 * (lo + hi), f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
                dom.from_internal(best.0)
            }
            _ => {
                let choices = dom.choices();
                let weights = |rs: &[&TrialRecord]| {
                    let mut w = vec![1.0; choices.len()];
                    for r in rs {
                        if let Some(i) = r.params.get(name).and_then(|v| dom.index_of(v)) {
                            w[i] += 1.0;
                        }
                    }
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / total).collect::<Vec<_>>()
                };
                let (wl, wg) = (weights(good), weights(bad));
                let mut best = (0, f64::NEG_INFINITY);
                for _ in 0..cfg.candidates {
                    let mut u = rng.random::<f64>();
                    let mut i = 0;
                    while i + 1 < wl.len() && u >= wl[i] {
                        u -= wl[i];
                        i += 1;
                    }
                    let score = wl[i].ln() - wg[i].ln();
                    if score > best.1 {
                        best = (i, score);
                    }
                }
                choices[best.0].clone()
            }
        };
        out.insert(name.clone(), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: TrialRecord,
    /// Trials run by this call.
    pub ran: usize,
    pub early_stopped: bool,
}

/// Maximizes `objective`. The closure receives the trial id, its assignment
/// and a reporter for intermediate values; pruned trials have their return
/// value discarded. Errors from the closure mark the trial failed.
pub fn tune<F>(space: &SearchSpace, cfg: &TuneConfig, study: &mut Study, mut objective: F) -> Result<TuneOutcome, TuneError>
where
    F: FnMut(usize, &Assignment, &mut Reporter) -> Result<f64, String>,
{
    if cfg.trials < 2 {
        return Err(TuneError::Argument("trial budget must be at least 2".into()));
    }
    let mut ran = 0;
    let mut early_stopped = false;
    while study.records.len() < cfg.trials {
        if plateaued(study, cfg) {
            early_stopped = true;
            break;
        }
        let id = study.next_id();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (id as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        let params = if !study.queue.is_empty() {
            study.queue.remove(0)
        } else {
            let done: Vec<&TrialRecord> = study.completed().collect();
            if done.len() < cfg.startup_trials.max(2) {
                space.params.iter().map(|(k, d)| (k.clone(), d.sample_uniform(&mut rng))).collect()
            } else {
                sample_tpe(space, &done, cfg, &mut rng)
            }
        };
        let mut rep = Reporter { history: &study.records, prune_startup: cfg.prune_startup, values: Vec::new(), pruned: false };
        let result = objective(id, &params, &mut rep);
        let (pruned, intermediate) = (rep.pruned, rep.values);
        let record = match result {
            Err(msg) => TrialRecord { id, params, state: TrialState::Failed, objective: None, intermediate, note: Some(msg) },
            Ok(_) if pruned => TrialRecord { id, params, state: TrialState::Pruned, objective: None, intermediate, note: None },
            Ok(v) if !v.is_finite() => TrialRecord {
                id,
                params,
                state: TrialState::Failed,
                objective: None,
                intermediate,
                note: Some(format!("non-finite objective {v}")),
            },
            Ok(v) => TrialRecord { id, params, state: TrialState::Complete, objective: Some(v), intermediate, note: None },
        };
        study.push(record)?;
        ran += 1;
    }
    let best = study.best().cloned().ok_or_else(|| {
        let pruned = study.records.iter().filter(|r| r.state == TrialState::Pruned).count();
        let failed: Vec<String> = study.records.iter().filter_map(|r| r.note.clone()).collect();
        TuneError::NoCompletedTrials(format!("{} trials, {pruned} pruned, failures: {failed:?}", study.records.len()))
    })?;
    Ok(TuneOutcome { best, ran, early_stopped })
}

/// True when the running best improved by less than the threshold over the window.
fn plateaued(study: &Study, cfg: &TuneConfig) -> bool {
    let mut best = f64::NEG_INFINITY;
    let series: Vec<f64> = study
        .completed()
        .map(|r| {
            best = best.max(r.objective.unwrap_or(f64::NEG_INFINITY));
            best
        })
        .collect();
    let n = series.len();
    let w = cfg.early_stop_window;
    if w == 0 || n < cfg.early_stop_after.max(w + 1) {
        return false;
    }
    series[n - 1] - series[n - 1 - w] < cfg.early_stop_threshold
}

/// Importance of each hyperparameter as the adjusted explained variance of
/// a one-dimensional piecewise-constant fit, normalized to sum to one.
/// This is a coarse stand-in for a functional ANOVA.
pub fn importance(space: &SearchSpace, records: &[TrialRecord]) -> Result<Vec<(String, f64)>, TuneError> {
    let done: Vec<&TrialRecord> = records.iter().filter(|r| r.state == TrialState::Complete).collect();
    if done.len() < 10 {
        return Err(TuneError::Argument(format!("importance needs 10 completed trials, have {}", done.len())));
    }
    let y: Vec<f64> = done.iter().map(|r| r.objective.expect("complete")).collect();
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let mut scores = Vec::new();
    for (name, dom) in &space.params {
        // group label per trial
        let labels: Vec<usize> = match dom {
            Domain::Uniform { .. } | Domain::LogUniform { .. } => {
                let xs: Vec<f64> = done
                    .iter()
                    .map(|r| r.params.get(name).and_then(|v| dom.to_internal(v)).unwrap_or(f64::NAN))
                    .collect();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
                let bins = ((n as f64).sqrt().floor() as usize).max(2);
                let mut lab = vec![0; n];
                for (rank, &i) in order.iter().enumerate() {
                    lab[i] = rank * bins / n;
                }
                lab
            }
            _ => done.iter().map(|r| r.params.get(name).and_then(|v| dom.index_of(v)).unwrap_or(usize::MAX)).collect(),
        };
        let mut groups: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for (l, v) in labels.iter().zip(&y) {
            let g = groups.entry(*l).or_insert((0.0, 0));
            g.0 += v;
            g.1 += 1;
        }
        let sse: f64 = labels
            .iter()
            .zip(&y)
            .map(|(l, v)| {
                let (s, c) = groups[l];
                (v - s / c as f64).powi(2)
            })
            .sum();
        let k = groups.len();
        let score = if sst <= 0.0 || n <= k {
            0.0
        } else {
            (1.0 - (sse / (n - k) as f64) / (sst / (n - 1) as f64)).max(0.0)
        };
        scores.push((name.clone(), score));
    }
    let total: f64 = scores.iter().map(|s| s.1).sum();
    let m = scores.len() as f64;
    for s in &mut scores {
        s.1 = if total > 0.0 { s.1 / total } else { 1.0 / m };
    }
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scores)
}

/// Settings for tuning an agent on an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTuneConfig {
    pub base: HyperParams,
    pub steps_per_trial: usize,
    pub eval_episodes: usize,
    /// Intermediate reports per trial.
    pub checkpoints: usize,
    pub train_seed: u64,
    pub search: TuneConfig,
}

/// Objective: mean deterministic evaluation return after training.
/// Intermediate values are the mean of the last ten training returns.
pub fn tune_agent<E: Mdp>(
    env: &mut E,
    space: &SearchSpace,
    cfg: &AgentTuneConfig,
    study: &mut Study,
) -> Result<(TuneOutcome, HyperParams), TuneError> {
    if study.records.is_empty() {
        study.enqueue(space.assignment_of(&cfg.base)?);
    }
    let every = (cfg.steps_per_trial / cfg.checkpoints.max(1)).max(1);
    let outcome = tune(space, &cfg.search, study, |_, a, rep| {
        let hp = apply(&cfg.base, a).map_err(|e| e.to_string())?;
        if hp.learning_starts > cfg.steps_per_trial {
            return Err("learning starts exceed trial length".into());
        }
        let mut recent: Vec<f64> = Vec::new();
        let mut next = every;
        let out = train(env, &hp, cfg.steps_per_trial, cfg.train_seed, &mut |log| {
            if log.complete {
                recent.push(log.ret);
            }
            if log.step >= next && log.step < cfg.steps_per_trial && !recent.is_empty() {
                next += every;
                let tail = &recent[recent.len().saturating_sub(10)..];
                return rep.report(tail.iter().sum::<f64>() / tail.len() as f64);
            }
            true
        })
        .map_err(|e| e.to_string())?;
        if out.stopped {
            return Ok(f64::NAN);
        }
        let rets = evaluate(env, &out.agent.policy(), cfg.eval_episodes.max(1));
        Ok(rets.iter().sum::<f64>() / rets.len() as f64)
    })?;
    let hp = apply(&cfg.base, &outcome.best.params)?;
    Ok((outcome, hp))
}
