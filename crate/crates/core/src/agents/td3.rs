use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::policy::ActionBox;
use super::replay::Minibatch;
use super::{HyperParams, UpdateStats};
use crate::neural::{Adam, Mlp};

fn cat(s: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s.view(), a.view()]).expect("matching batch rows")
}

/// Twin-delayed deterministic policy gradient.
#[derive(Debug, Clone)]
pub struct Td3 {
    pub hp: HyperParams,
    pub bounds: ActionBox,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    critic_updates: u64,
    actor_updates: u64,
}

impl Td3 {
    pub fn new(hp: &HyperParams, obs_dim: usize, bounds: ActionBox, seed: u64) -> Self {
        let k = bounds.dim();
        let widths = |i: usize, o: usize| {
            let mut w = vec![i];
            w.extend(&hp.net_arch);
            w.push(o);
            w
        };
        let net = |i, o, s| Mlp::new(&widths(i, o), hp.activation, s).expect("validated widths");
        let actor = net(obs_dim, k, seed);
        let q1 = net(obs_dim + k, 1, seed.wrapping_add(1));
        let q2 = net(obs_dim + k, 1, seed.wrapping_add(2));
        Self {
            opt_actor: Adam::new(&actor, hp.lr),
            opt_q1: Adam::new(&q1, hp.lr),
            opt_q2: Adam::new(&q2, hp.lr),
            hp: hp.clone(),
            bounds,
            actor_target: actor.clone(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            critic_updates: 0,
            actor_updates: 0,
        }
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    /// Squashed policy output in `[-1, 1]`.
    fn squashed(net: &Mlp, s: &Array2<f64>) -> Array2<f64> {
        net.predict(s).expect("obs width").mapv(f64::tanh)
    }

    fn to_box(&self, t: &Array2<f64>) -> Array2<f64> {
        let mut a = t.clone();
        for mut row in a.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.bounds.to_box(j, *v);
            }
        }
        a
    }

    /// With `explore` adds Gaussian noise in the squashed space.
    pub fn act(&self, obs: &[f64], rng: &mut impl Rng, explore: bool) -> Vec<f64> {
        let s = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("single row");
        let mut t = Self::squashed(&self.actor, &s);
        if explore && self.hp.noise_std > 0.0 {
            let noise = Normal::new(0.0, self.hp.noise_std).expect("finite std");
            t.mapv_inplace(|v| (v + noise.sample(rng)).clamp(-1.0, 1.0));
        }
        self.to_box(&t).row(0).to_vec()
    }

    pub fn critic_update(&mut self, mb: &Minibatch, rng: &mut impl Rng) -> f64 {
        let n = mb.len() as f64;
        let mut t2 = Self::squashed(&self.actor_target, &mb.s2);
        if self.hp.target_noise > 0.0 {
            let noise = Normal::new(0.0, self.hp.target_noise).expect("finite std");
            let c = self.hp.target_noise_clip;
            t2.mapv_inplace(|v| (v + noise.sample(rng).clamp(-c, c)).clamp(-1.0, 1.0));
        }
        let sa2 = cat(&mb.s2, &self.to_box(&t2));
        let qa = self.q1_target.predict(&sa2).expect("critic width");
        let qb = self.q2_target.predict(&sa2).expect("critic width");
        let qmin = ndarray::Zip::from(qa.column(0)).and(qb.column(0)).map_collect(|a, b| a.min(*b));
        let target = &mb.r + &((1.0 - &mb.done) * &qmin * self.hp.gamma);
        let sa = cat(&mb.s, &mb.a);
        let mut loss = 0.0;
        for (q, opt) in [(&mut self.q1, &mut self.opt_q1), (&mut self.q2, &mut self.opt_q2)] {
            let (y, mut tape) = q.forward(&sa).expect("critic width");
            let err = y.column(0).to_owned() - &target;
            loss += err.mapv(|e| e * e).sum() / n;
            let g = q.backward(&mut tape, &(err * (2.0 / n)).insert_axis(Axis(1))).expect("fresh tape");
            opt.step(q, &g);
        }
        self.critic_updates += 1;
        0.5 * loss
    }

    /// Ascends `Q1(s, π(s))` and moves all tracking copies.
    pub fn actor_update(&mut self, mb: &Minibatch) -> f64 {
        let n = mb.len();
        let obs_dim = mb.s.ncols();
        let k = self.bounds.dim();
        let (pre, mut tape) = self.actor.forward(&mb.s).expect("obs width");
        let t = pre.mapv(f64::tanh);
        let sa = cat(&mb.s, &self.to_box(&t));
        let (q, mut qt) = self.q1.forward(&sa).expect("critic width");
        let dy = Array2::from_elem((n, 1), -1.0 / n as f64);
        let gq = self.q1.backward(&mut qt, &dy).expect("fresh tape");
        let mut d = gq.input.slice(ndarray::s![.., obs_dim..obs_dim + k]).to_owned();
        for i in 0..n {
            for j in 0..k {
                d[[i, j]] *= self.bounds.half_width(j) * (1.0 - t[[i, j]] * t[[i, j]]);
            }
        }
        let g = self.actor.backward(&mut tape, &d).expect("fresh tape");
        self.opt_actor.step(&mut self.actor, &g);
        let tau = self.hp.tau;
        self.actor_target.soft_update(&self.actor, tau);
        self.q1_target.soft_update(&self.q1, tau);
        self.q2_target.soft_update(&self.q2, tau);
        self.actor_updates += 1;
        -q.sum() / n as f64
    }

    pub fn update(&mut self, mb: &Minibatch, rng: &mut impl Rng) -> UpdateStats {
        let critic_loss = self.critic_update(mb, rng);
        let actor_loss = if self.critic_updates % self.hp.policy_delay as u64 == 0 {
            Some(self.actor_update(mb))
        } else {
            None
        };
        UpdateStats { critic_loss, value_loss: 0.0, actor_loss, entropy: None }
    }
}
