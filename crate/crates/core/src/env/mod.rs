//! The hourly dispatch MDP.
//!
//! The observation is `[pv, pw, el, hl, cl, soc_b, soc_h, prev(6)]` scaled
//! to [-1, 1]; the action is the 11 loading rates listed in
//! [`dispatch::ACTION_NAMES`].

pub mod config;
pub mod dispatch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carbon::{ccrr, cri, CarbonError, Ccrr, CdrVariant, Cri, EmissionLedger};
use crate::data::{self, DataError};
use crate::devices::{DeviceError, SOC_HARD_MAX, SOC_HARD_MIN};
use crate::economics::{CdrCost, CostBreakdown};
pub use config::{DataSource, ObsBounds, Routing, ScenarioConfig};
pub use dispatch::{resolve_dispatch, Dispatch, Exogenous, Outcome, Penalties, SimState};

pub const OBS_DIM: usize = 13;
pub const ACT_DIM: usize = 11;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Carbon(#[from] CarbonError),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("state error: {0}")]
    State(String),
}

/// A reinforcement-learning environment with a box action space.
pub trait Mdp {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn action_low(&self) -> Vec<f64>;
    fn action_high(&self) -> Vec<f64>;
    /// Starts training episode number `episode`; returns the observation.
    fn reset_train(&mut self, episode: usize) -> Vec<f64>;
    /// Starts an evaluation episode.
    fn reset_eval(&mut self, episode: usize) -> Vec<f64>;
    /// Returns `(next observation, reward, done)`.
    fn step_mdp(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pv: f64,
    pub pw: f64,
    pub el: f64,
    pub hl: f64,
    pub cl: f64,
    pub soc_b: f64,
    pub soc_h: f64,
    pub prev: [f64; 6],
}

impl Observation {
    pub fn raw(&self) -> [f64; OBS_DIM] {
        let mut v = [0.0; OBS_DIM];
        v[..7].copy_from_slice(&[self.pv, self.pw, self.el, self.hl, self.cl, self.soc_b, self.soc_h]);
        v[7..].copy_from_slice(&self.prev);
        v
    }

    /// Per-feature scaling into [-1, 1]; a constant feature maps to 0.
    pub fn normalized(&self, b: &ObsBounds) -> Vec<f64> {
        self.raw()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let span = b.hi[i] - b.lo[i];
                if span <= 0.0 {
                    0.0
                } else {
                    (2.0 * (x - b.lo[i]) / span - 1.0).clamp(-1.0, 1.0)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    /// Raw reward divided by the reward scale.
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
    pub info: Outcome,
}

pub struct ZcmesEnv {
    cfg: ScenarioConfig,
    hours: Vec<Exogenous>,
    bounds: ObsBounds,
    train_starts: Vec<usize>,
    hour: usize,
    steps: usize,
    state: SimState,
    active: bool,
}

fn initial_state(cfg: &ScenarioConfig) -> SimState {
    SimState { soc_b: cfg.bes.soc_init, soc_h: cfg.tes.soc_init, prev: [0.0; 6] }
}

/// Hourly exogenous inputs derived from the config's data source.
pub fn load_hours(cfg: &ScenarioConfig) -> Result<Vec<Exogenous>, EnvError> {
    let (loads, weather) = match &cfg.data {
        DataSource::Synth { seed, horizon } => data::synth_scenario(*seed, *horizon)?,
        DataSource::Files { loads, weather } => (data::load_loads(loads)?, data::load_weather(weather)?),
    };
    if loads.len() != weather.len() || loads.iter().zip(&weather).any(|(l, w)| l.t != w.t) {
        return Err(EnvError::Config("load and weather series must cover the same hours".into()));
    }
    Ok(loads
        .iter()
        .zip(&weather)
        .map(|(l, w)| Exogenous {
            pv: data::pv_power(w, &cfg.renewables),
            pw: data::wt_power(w.wind, &cfg.renewables),
            el: l.el,
            hl: l.hl,
            cl: l.cl,
        })
        .collect())
}

/// Dataset min/max for the exogenous features, device ratings for the rest.
pub fn compute_bounds(cfg: &ScenarioConfig, hours: &[Exogenous]) -> ObsBounds {
    let mut lo = vec![f64::INFINITY; OBS_DIM];
    let mut hi = vec![f64::NEG_INFINITY; OBS_DIM];
    for h in hours {
        for (i, v) in [h.pv, h.pw, h.el, h.hl, h.cl].into_iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    for i in 5..7 {
        lo[i] = SOC_HARD_MIN;
        hi[i] = SOC_HARD_MAX;
    }
    for (k, spec) in [&cfg.gt, &cfg.cfp, &cfg.gb, &cfg.wshp, &cfg.ec, &cfg.ac].into_iter().enumerate() {
        lo[7 + k] = 0.0;
        hi[7 + k] = spec.p_rated * 1.5;
    }
    ObsBounds { lo, hi }
}

impl ZcmesEnv {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let hours = load_hours(&cfg)?;
        Self::with_hours(cfg, hours)
    }

    /// Builds an environment over explicit hourly inputs.
    pub fn with_hours(mut cfg: ScenarioConfig, hours: Vec<Exogenous>) -> Result<Self, EnvError> {
        cfg.validate()?;
        if hours.len() < cfg.episode_len {
            return Err(EnvError::Config(format!(
                "data covers {} h, shorter than one {} h episode",
                hours.len(),
                cfg.episode_len
            )));
        }
        if cfg.eval_start + cfg.episode_len > hours.len() {
            return Err(EnvError::Config("eval_start leaves no room for a full episode".into()));
        }
        let bounds = match &cfg.obs_bounds {
            Some(b) => b.clone(),
            None => compute_bounds(&cfg, &hours),
        };
        cfg.obs_bounds = Some(bounds.clone());
        let last = hours.len() - cfg.episode_len;
        let stride = if cfg.episode_len <= 24 { 24.min(last.max(1)) } else { cfg.episode_len };
        let train_starts: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
        let state = initial_state(&cfg);
        Ok(Self { cfg, hours, bounds, train_starts, hour: 0, steps: 0, state, active: false })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> usize {
        self.hours.len()
    }

    pub fn hours(&self) -> &[Exogenous] {
        &self.hours
    }

    pub fn bounds(&self) -> &ObsBounds {
        &self.bounds
    }

    pub fn sim_state(&self) -> SimState {
        self.state
    }

    pub fn current_hour(&self) -> usize {
        self.hour
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn reset(&mut self, start_hour: usize) -> Result<Observation, EnvError> {
        if start_hour + self.cfg.episode_len > self.hours.len() {
            return Err(EnvError::Argument(format!(
                "start hour {start_hour} + episode length {} exceeds horizon {}",
                self.cfg.episode_len,
                self.hours.len()
            )));
        }
        self.hour = start_hour;
        self.steps = 0;
        self.state = initial_state(&self.cfg);
        self.active = true;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        let h = self.hours[self.hour.min(self.hours.len() - 1)];
        Observation {
            pv: h.pv,
            pw: h.pw,
            el: h.el,
            hl: h.hl,
            cl: h.cl,
            soc_b: self.state.soc_b,
            soc_h: self.state.soc_h,
            prev: self.state.prev,
        }
    }

    pub fn normalized(&self, obs: &Observation) -> Vec<f64> {
        obs.normalized(&self.bounds)
    }

    /// Evaluates `action` at the current hour without advancing.
    pub fn peek(&self, action: &[f64]) -> Outcome {
        resolve_dispatch(&self.cfg, &self.hours[self.hour], &self.state, action)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if !self.active {
            return Err(EnvError::State("step called before reset or after the episode ended".into()));
        }
        let info = self.peek(action);
        self.state = info.next;
        self.steps += 1;
        let done = self.steps >= self.cfg.episode_len;
        if done {
            self.active = false;
        } else {
            self.hour += 1;
        }
        let raw_reward = info.raw_reward();
        Ok(StepResult { obs: self.observation(), reward: raw_reward / self.cfg.reward_scale, raw_reward, done, info })
    }
}

impl Mdp for ZcmesEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn act_dim(&self) -> usize {
        ACT_DIM
    }

    fn action_low(&self) -> Vec<f64> {
        dispatch::action_low().to_vec()
    }

    fn action_high(&self) -> Vec<f64> {
        dispatch::action_high().to_vec()
    }

    fn reset_train(&mut self, episode: usize) -> Vec<f64> {
        let start = self.train_starts[episode % self.train_starts.len()];
        let obs = self.reset(start).expect("training starts fit the horizon");
        self.normalized(&obs)
    }

    fn reset_eval(&mut self, _episode: usize) -> Vec<f64> {
        let obs = self.reset(self.cfg.eval_start).expect("validated eval start");
        self.normalized(&obs)
    }

    fn step_mdp(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool) {
        let r = self.step(action).expect("agent steps within an episode");
        (self.normalized(&r.obs), r.reward, r.done)
    }
}

/// One hour of an evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub hour: usize,
    pub action: Vec<f64>,
    pub dispatch: Dispatch,
    pub costs: CostBreakdown,
    pub cdr: CdrCost,
    pub penalties: Penalties,
    pub ledger: EmissionLedger,
    pub raw_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub start_hour: usize,
    pub costs: CostBreakdown,
    pub cdr: CdrCost,
    pub penalties: Penalties,
    pub ledger: EmissionLedger,
    /// Present for capture cases with positive emissions.
    pub cri: Option<Cri>,
    pub ccrr: Option<Ccrr>,
    pub raw_return: f64,
    pub max_abs_residual: f64,
    pub band_violations: u32,
    pub trace: Vec<StepTrace>,
}

impl EpisodeSummary {
    pub fn from_trace(start_hour: usize, variant: CdrVariant, trace: Vec<StepTrace>, band_violations: u32) -> Self {
        let mut costs = CostBreakdown::default();
        let mut cdr = CdrCost::default();
        let mut penalties = Penalties::default();
        let mut ledger = EmissionLedger::default();
        let mut raw_return = 0.0;
        let mut max_abs_residual: f64 = 0.0;
        for s in &trace {
            costs.accumulate(&s.costs);
            cdr.capture += s.cdr.capture;
            cdr.storage += s.cdr.storage;
            cdr.pcc_solvent += s.cdr.pcc_solvent;
            cdr.dac_sorbent += s.cdr.dac_sorbent;
            cdr.dac_gas += s.cdr.dac_gas;
            cdr.total += s.cdr.total;
            penalties.accumulate(&s.penalties);
            ledger.accumulate(&s.ledger);
            raw_return += s.raw_reward;
            let d = &s.dispatch;
            max_abs_residual = max_abs_residual.max(d.residual_el.abs()).max(d.residual_hl.abs()).max(d.residual_cl.abs());
        }
        let capture = variant != CdrVariant::None;
        let cri = if capture { cri(ledger.total_emit, ledger.captured()).ok() } else { None };
        let ccrr = capture.then(|| ccrr(ledger.captured(), ledger.released));
        Self { start_hour, costs, cdr, penalties, ledger, cri, ccrr, raw_return, max_abs_residual, band_violations, trace }
    }

    /// Cost including penalties, equal to the negated raw return.
    pub fn overall_cost(&self) -> f64 {
        self.costs.overall()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub config_hash: String,
    pub case: u8,
    pub episodes: Vec<EpisodeSummary>,
    pub mean_cost: f64,
    pub mean_overall_cost: f64,
    pub mean_raw_return: f64,
}

impl EpisodeReport {
    pub fn new(cfg: &ScenarioConfig, episodes: Vec<EpisodeSummary>) -> Self {
        let n = episodes.len().max(1) as f64;
        let mean_cost = episodes.iter().map(|e| e.costs.total).sum::<f64>() / n;
        let mean_overall_cost = episodes.iter().map(|e| e.overall_cost()).sum::<f64>() / n;
        let mean_raw_return = episodes.iter().map(|e| e.raw_return).sum::<f64>() / n;
        Self { config_hash: cfg.hash(), case: cfg.case, episodes, mean_cost, mean_overall_cost, mean_raw_return }
    }
}

/// Runs `episodes` evaluation episodes from the config's evaluation hour.
///
/// `policy` receives the raw observation, its normalized copy and the hour
/// index within the episode, and returns an action.
pub fn rollout<P>(env: &mut ZcmesEnv, episodes: usize, mut policy: P) -> Result<EpisodeReport, EnvError>
where
    P: FnMut(&Observation, &[f64], usize) -> Vec<f64>,
{
    let start = env.config().eval_start;
    let variant = env.config().cdr.variant;
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(start)?;
        let mut trace = Vec::with_capacity(env.config().episode_len);
        let mut band = 0;
        loop {
            let norm = env.normalized(&obs);
            let k = env.steps_taken();
            let action = policy(&obs, &norm, k);
            let hour = env.current_hour();
            let r = env.step(&action)?;
            band += r.info.band_violations;
            trace.push(StepTrace {
                hour,
                action: dispatch::clamp_action(&action).to_vec(),
                dispatch: r.info.dispatch,
                costs: r.info.costs,
                cdr: r.info.cdr,
                penalties: r.info.penalties,
                ledger: r.info.ledger,
                raw_reward: r.raw_reward,
            });
            obs = r.obs;
            if r.done {
                break;
            }
        }
        out.push(EpisodeSummary::from_trace(start, variant, trace, band));
    }
    Ok(EpisodeReport::new(env.config(), out))
}
