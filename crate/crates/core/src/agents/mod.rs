//! Off-policy agents, replay and the training loop.

mod policy;
mod replay;
mod sac;
mod td3;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use policy::{log1m_tanh2, log_prob_at, sample_gaussian, ActionBox, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Minibatch, ReplayBuffer};
pub use sac::Sac;
pub use td3::Td3;

use crate::env::Mdp;
use crate::neural::{Activation, Mlp, NeuralError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("state error: {0}")]
    State(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

impl From<std::io::Error> for AgentError {
    fn from(e: std::io::Error) -> Self {
        AgentError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Sac,
    Td3,
}

impl std::str::FromStr for Algo {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sac" => Ok(Algo::Sac),
            "td3" => Ok(Algo::Td3),
            other => Err(AgentError::Argument(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub algo: Algo,
    pub gamma: f64,
    pub lr: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    /// Uniform random actions until this many environment steps.
    pub learning_starts: usize,
    pub train_freq: usize,
    pub gradient_steps: usize,
    /// Soft-update rate for tracking networks.
    pub tau: f64,
    /// Fixed entropy weight (SAC).
    pub ent_coef: f64,
    /// Exploration noise std in squashed space (TD3).
    pub noise_std: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,
    pub net_arch: Vec<usize>,
    pub activation: Activation,
    /// Treat the episode boundary as terminal when bootstrapping.
    pub mask_truncation: bool,
}

impl HyperParams {
    /// The tuned SAC setting with full-size networks.
    pub fn sac_tuned() -> Self {
        Self {
            algo: Algo::Sac,
            gamma: 0.96,
            lr: 0.00122,
            buffer_size: 100_000,
            batch_size: 512,
            learning_starts: 100,
            train_freq: 1,
            gradient_steps: 1,
            tau: 0.02,
            ent_coef: 0.05,
            noise_std: 0.0,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            net_arch: vec![400, 300],
            activation: Activation::Relu,
            mask_truncation: true,
        }
    }

    pub fn td3_tuned() -> Self {
        Self {
            algo: Algo::Td3,
            gamma: 0.90,
            lr: 0.00148,
            batch_size: 1024,
            tau: 0.08,
            ent_coef: 0.0,
            noise_std: 0.5237,
            ..Self::sac_tuned()
        }
    }

    /// Common library defaults, the untuned reference point.
    pub fn untuned(algo: Algo) -> Self {
        Self {
            algo,
            gamma: 0.99,
            lr: 3e-4,
            buffer_size: 100_000,
            batch_size: 256,
            learning_starts: 100,
            train_freq: 1,
            gradient_steps: 1,
            tau: 0.005,
            ent_coef: 0.1,
            noise_std: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            net_arch: vec![256, 256],
            activation: Activation::Relu,
            mask_truncation: true,
        }
    }

    pub fn tuned(algo: Algo) -> Self {
        match algo {
            Algo::Sac => Self::sac_tuned(),
            Algo::Td3 => Self::td3_tuned(),
        }
    }

    /// Shrinks networks and batches so a 20k-step run fits in minutes on one core.
    pub fn desk(mut self) -> Self {
        self.net_arch = vec![64, 64];
        self.batch_size = self.batch_size.min(128);
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Argument(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_size {
            return bad("batch size must be in 1..=buffer size");
        }
        if self.train_freq == 0 || self.policy_delay == 0 {
            return bad("train_freq and policy_delay must be positive");
        }
        if self.net_arch.contains(&0) {
            return bad("network widths must be positive");
        }
        if !(self.ent_coef >= 0.0) || !(self.noise_std >= 0.0) || !(self.target_noise >= 0.0) {
            return bad("entropy and noise scales must be non-negative");
        }
        Ok(())
    }
}

/// Losses from one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub value_loss: f64,
    pub actor_loss: Option<f64>,
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Agent {
    Sac(Box<Sac>),
    Td3(Box<Td3>),
}

impl Agent {
    pub fn new(hp: &HyperParams, obs_dim: usize, bounds: ActionBox, seed: u64) -> Result<Self, AgentError> {
        hp.validate()?;
        Ok(match hp.algo {
            Algo::Sac => Agent::Sac(Box::new(Sac::new(hp, obs_dim, bounds, seed))),
            Algo::Td3 => Agent::Td3(Box::new(Td3::new(hp, obs_dim, bounds, seed))),
        })
    }

    pub fn act(&self, obs: &[f64], rng: &mut impl Rng, deterministic: bool) -> Vec<f64> {
        match self {
            Agent::Sac(a) => a.act(obs, rng, deterministic).0,
            Agent::Td3(a) => a.act(obs, rng, !deterministic),
        }
    }

    pub fn update(&mut self, mb: &Minibatch, rng: &mut impl Rng) -> UpdateStats {
        match self {
            Agent::Sac(a) => a.update(mb, rng),
            Agent::Td3(a) => a.update(mb, rng),
        }
    }

    pub fn policy(&self) -> Policy {
        match self {
            Agent::Sac(a) => Policy { algo: Algo::Sac, bounds: a.bounds.clone(), actor: a.actor.clone() },
            Agent::Td3(a) => Policy { algo: Algo::Td3, bounds: a.bounds.clone(), actor: a.actor.clone() },
        }
    }

    fn norms(&self) -> String {
        match self {
            Agent::Sac(a) => format!(
                "|actor| {:.3e} |q1| {:.3e} |q2| {:.3e} |v| {:.3e}",
                a.actor.norm(),
                a.q1.norm(),
                a.q2.norm(),
                a.v.norm()
            ),
            Agent::Td3(a) => format!("|actor| {:.3e} |q1| {:.3e} |q2| {:.3e}", a.actor.norm(), a.q1.norm(), a.q2.norm()),
        }
    }
}

/// Deterministic actor extracted from a trained agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub algo: Algo,
    pub bounds: ActionBox,
    pub actor: Mlp,
}

impl Policy {
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        let head = self.actor.predict_one(obs).expect("observation width");
        (0..self.bounds.dim()).map(|j| self.bounds.to_box(j, head[j].tanh())).collect()
    }
}

pub const MANIFEST_FORMAT: &str = "zcmes-agent";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub hyperparams: HyperParams,
    pub obs_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub config_hash: String,
    pub seed: u64,
    pub total_steps: usize,
}

impl Manifest {
    pub fn new(hp: &HyperParams, obs_dim: usize, bounds: &ActionBox, config_hash: &str, seed: u64, total_steps: usize) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            hyperparams: hp.clone(),
            obs_dim,
            action_low: bounds.lo.clone(),
            action_high: bounds.hi.clone(),
            config_hash: config_hash.into(),
            seed,
            total_steps,
        }
    }
}

/// Writes `manifest.json` and `actor.json` into `dir`.
pub fn save_policy(dir: &Path, policy: &Policy, manifest: &Manifest) -> Result<(), AgentError> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest).map_err(|e| AgentError::Io(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    std::fs::write(dir.join("actor.json"), policy.actor.to_json() + "\n")?;
    Ok(())
}

pub fn load_policy(dir: &Path) -> Result<(Policy, Manifest), AgentError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| AgentError::Io(format!("manifest: {e}")))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(AgentError::Io(format!("unsupported manifest {} v{}", m.format, m.version)));
    }
    let actor = Mlp::from_json(&std::fs::read_to_string(dir.join("actor.json"))?)?;
    let k = m.action_low.len();
    let head = match m.hyperparams.algo {
        Algo::Sac => 2 * k,
        Algo::Td3 => k,
    };
    if actor.input_dim() != m.obs_dim || actor.output_dim() != head {
        return Err(AgentError::Io("actor shape disagrees with manifest".into()));
    }
    let bounds = ActionBox::new(m.action_low.clone(), m.action_high.clone());
    Ok((Policy { algo: m.hyperparams.algo, bounds, actor }, m))
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Environment steps taken when the episode ended.
    pub step: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub entropy: Option<f64>,
    #[serde(skip)]
    pub complete: bool,
}

pub fn write_curve(path: &Path, curve: &[EpisodeLog]) -> Result<(), AgentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AgentError::Io(e.to_string()))?;
    for row in curve {
        w.serialize(row).map_err(|e| AgentError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<EpisodeLog>,
    pub steps: usize,
    pub updates: u64,
    /// The episode hook asked to stop.
    pub stopped: bool,
}

impl TrainOutcome {
    pub fn complete_returns(&self) -> Vec<f64> {
        self.curve.iter().filter(|e| e.complete).map(|e| e.ret).collect()
    }
}

#[derive(Default)]
struct Running {
    critic: f64,
    actor: f64,
    entropy: f64,
    n: usize,
    na: usize,
    ne: usize,
}

impl Running {
    fn log(&self, step: usize, ret: f64, complete: bool) -> EpisodeLog {
        let mean = |s: f64, n: usize| if n == 0 { None } else { Some(s / n as f64) };
        EpisodeLog {
            step,
            ret,
            critic_loss: mean(self.critic, self.n),
            actor_loss: mean(self.actor, self.na),
            entropy: mean(self.entropy, self.ne),
            complete,
        }
    }
}

/// Off-policy training loop: act, store, and after `learning_starts`
/// update every `train_freq` steps. `on_episode` may return `false` to stop.
pub fn train<E: Mdp>(
    env: &mut E,
    hp: &HyperParams,
    total_steps: usize,
    seed: u64,
    on_episode: &mut dyn FnMut(&EpisodeLog) -> bool,
) -> Result<TrainOutcome, AgentError> {
    hp.validate()?;
    if total_steps < hp.learning_starts {
        return Err(AgentError::Argument(format!(
            "total steps {total_steps} below learning starts {}",
            hp.learning_starts
        )));
    }
    let bounds = ActionBox::new(env.action_low(), env.action_high());
    let obs_dim = env.obs_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Agent::new(hp, obs_dim, bounds.clone(), seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(17))?;
    let mut buffer = ReplayBuffer::new(hp.buffer_size, obs_dim, bounds.dim())?;
    let mut curve = Vec::new();
    let mut episode = 0;
    let mut obs = env.reset_train(episode);
    let mut ret = 0.0;
    let mut run = Running::default();
    let mut updates = 0u64;
    let mut stopped = false;
    for step in 1..=total_steps {
        let action = if step <= hp.learning_starts {
            (0..bounds.dim()).map(|j| rng.random_range(bounds.lo[j]..=bounds.hi[j])).collect()
        } else {
            agent.act(&obs, &mut rng, false)
        };
        let (next, reward, done) = env.step_mdp(&action);
        buffer.push(&obs, &action, reward, &next, done && hp.mask_truncation)?;
        ret += reward;
        obs = next;
        if step > hp.learning_starts && step % hp.train_freq == 0 && buffer.len() >= hp.batch_size {
            for _ in 0..hp.gradient_steps {
                let mb = buffer.sample(hp.batch_size, &mut rng)?;
                let st = agent.update(&mb, &mut rng);
                updates += 1;
                let finite = st.critic_loss.is_finite()
                    && st.value_loss.is_finite()
                    && st.actor_loss.is_none_or(f64::is_finite)
                    && st.entropy.is_none_or(f64::is_finite);
                if !finite {
                    return Err(AgentError::Diverged(format!(
                        "step {step} update {updates}: critic {} value {} actor {:?} entropy {:?}; {}",
                        st.critic_loss,
                        st.value_loss,
                        st.actor_loss,
                        st.entropy,
                        agent.norms()
                    )));
                }
                run.critic += st.critic_loss;
                run.n += 1;
                if let Some(a) = st.actor_loss {
                    run.actor += a;
                    run.na += 1;
                }
                if let Some(e) = st.entropy {
                    run.entropy += e;
                    run.ne += 1;
                }
            }
        }
        if done || step == total_steps {
            let log = run.log(step, ret, done);
            let keep_going = on_episode(&log);
            curve.push(log);
            if !keep_going {
                stopped = step < total_steps;
                break;
            }
            if done && step < total_steps {
                episode += 1;
                obs = env.reset_train(episode);
                ret = 0.0;
                run = Running::default();
            }
        }
    }
    let steps = curve.last().map_or(0, |l| l.step);
    Ok(TrainOutcome { agent, curve, steps, updates, stopped })
}

/// Returns of `episodes` deterministic evaluation episodes.
pub fn evaluate<E: Mdp>(env: &mut E, policy: &Policy, episodes: usize) -> Vec<f64> {
    (0..episodes)
        .map(|k| {
            let mut obs = env.reset_eval(k);
            let mut ret = 0.0;
            loop {
                let (next, r, done) = env.step_mdp(&policy.act(&obs));
                ret += r;
                obs = next;
                if done {
                    break ret;
                }
            }
        })
        .collect()
}
