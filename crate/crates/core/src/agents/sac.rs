use ndarray::{concatenate, Array2, Axis};
use rand::Rng;

use super::policy::{entropy_estimate, gaussian_head_grad, sample_gaussian, ActionBox, GaussianSample};
use super::replay::Minibatch;
use super::{HyperParams, UpdateStats};
use crate::neural::{Adam, Mlp};

fn cat(s: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s.view(), a.view()]).expect("matching batch rows")
}

fn column(x: &Array2<f64>) -> ndarray::Array1<f64> {
    x.column(0).to_owned()
}

/// Soft actor-critic with an explicit state-value network and its
/// slowly tracking copy.
#[derive(Debug, Clone)]
pub struct Sac {
    pub hp: HyperParams,
    pub bounds: ActionBox,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub v: Mlp,
    pub v_target: Mlp,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_v: Adam,
}

impl Sac {
    pub fn new(hp: &HyperParams, obs_dim: usize, bounds: ActionBox, seed: u64) -> Self {
        let k = bounds.dim();
        let widths = |i: usize, o: usize| {
            let mut w = vec![i];
            w.extend(&hp.net_arch);
            w.push(o);
            w
        };
        let net = |i, o, s| Mlp::new(&widths(i, o), hp.activation, s).expect("validated widths");
        let actor = net(obs_dim, 2 * k, seed);
        let q1 = net(obs_dim + k, 1, seed.wrapping_add(1));
        let q2 = net(obs_dim + k, 1, seed.wrapping_add(2));
        let v = net(obs_dim, 1, seed.wrapping_add(3));
        let v_target = v.clone();
        Self {
            opt_actor: Adam::new(&actor, hp.lr),
            opt_q1: Adam::new(&q1, hp.lr),
            opt_q2: Adam::new(&q2, hp.lr),
            opt_v: Adam::new(&v, hp.lr),
            hp: hp.clone(),
            bounds,
            actor,
            q1,
            q2,
            v,
            v_target,
        }
    }

    pub fn act(&self, obs: &[f64], rng: &mut impl Rng, deterministic: bool) -> (Vec<f64>, f64) {
        let s = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("single row");
        let smp = sample_gaussian(&self.actor, s.view(), &self.bounds, rng, deterministic, false);
        (smp.actions.row(0).to_vec(), smp.log_prob[0])
    }

    /// Both critics regress onto `r + γ(1 − done)·V̂(s′)`.
    pub fn critic_targets(&self, mb: &Minibatch) -> ndarray::Array1<f64> {
        let v_next = column(&self.v_target.predict(&mb.s2).expect("obs width"));
        &mb.r + &((1.0 - &mb.done) * &v_next * self.hp.gamma)
    }

    pub fn critic_update(&mut self, mb: &Minibatch) -> f64 {
        let n = mb.len() as f64;
        let target = self.critic_targets(mb);
        let sa = cat(&mb.s, &mb.a);
        let mut loss = 0.0;
        for (q, opt) in [(&mut self.q1, &mut self.opt_q1), (&mut self.q2, &mut self.opt_q2)] {
            let (y, mut tape) = q.forward(&sa).expect("critic width");
            let err = column(&y) - &target;
            loss += err.mapv(|e| e * e).sum() / n;
            let dy = (err * (2.0 / n)).insert_axis(Axis(1));
            let g = q.backward(&mut tape, &dy).expect("fresh tape");
            opt.step(q, &g);
        }
        0.5 * loss
    }

    /// Targets for the value regression, from fresh policy actions.
    pub fn value_targets(&self, s: &Array2<f64>, rng: &mut impl Rng) -> ndarray::Array1<f64> {
        let smp = sample_gaussian(&self.actor, s.view(), &self.bounds, rng, false, false);
        let sa = cat(s, &smp.actions);
        let q1 = column(&self.q1.predict(&sa).expect("critic width"));
        let q2 = column(&self.q2.predict(&sa).expect("critic width"));
        let qmin = ndarray::Zip::from(&q1).and(&q2).map_collect(|a, b| a.min(*b));
        qmin - &(smp.log_prob * self.hp.ent_coef)
    }

    /// Regression of `V(s)` then a soft update of the tracking copy.
    pub fn value_update(&mut self, mb: &Minibatch, rng: &mut impl Rng) -> f64 {
        let n = mb.len() as f64;
        let target = self.value_targets(&mb.s, rng);
        let (y, mut tape) = self.v.forward(&mb.s).expect("obs width");
        let err = column(&y) - &target;
        let loss = err.mapv(|e| e * e).sum() / n;
        let dy = (err * (2.0 / n)).insert_axis(Axis(1));
        let g = self.v.backward(&mut tape, &dy).expect("fresh tape");
        self.opt_v.step(&mut self.v, &g);
        self.v_target.soft_update(&self.v, self.hp.tau);
        loss
    }

    /// Minimizes `mean[α·logπ(ã|s) − min Q(s, ã)]` through reparameterized actions.
    /// Returns the loss and the batch entropy estimate.
    pub fn actor_update(&mut self, mb: &Minibatch, rng: &mut impl Rng) -> (f64, f64) {
        let n = mb.len();
        let k = self.bounds.dim();
        let obs_dim = mb.s.ncols();
        let mut smp: GaussianSample = sample_gaussian(&self.actor, mb.s.view(), &self.bounds, rng, false, true);
        let sa = cat(&mb.s, &smp.actions);
        let (y1, mut t1) = self.q1.forward(&sa).expect("critic width");
        let (y2, mut t2) = self.q2.forward(&sa).expect("critic width");
        let mut d1 = Array2::zeros((n, 1));
        let mut d2 = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let (a, b) = (y1[[i, 0]], y2[[i, 0]]);
            if a <= b {
                d1[[i, 0]] = -1.0 / n as f64;
            } else {
                d2[[i, 0]] = -1.0 / n as f64;
            }
            loss += self.hp.ent_coef * smp.log_prob[i] - a.min(b);
        }
        let g1 = self.q1.backward(&mut t1, &d1).expect("fresh tape");
        let g2 = self.q2.backward(&mut t2, &d2).expect("fresh tape");
        let g_a = (&g1.input + &g2.input).slice(ndarray::s![.., obs_dim..obs_dim + k]).to_owned();
        let head = gaussian_head_grad(&smp, &g_a, self.hp.ent_coef / n as f64, &self.bounds);
        let mut tape = smp.tape.take().expect("recorded sample");
        let g = self.actor.backward(&mut tape, &head).expect("fresh tape");
        self.opt_actor.step(&mut self.actor, &g);
        (loss / n as f64, entropy_estimate(&smp))
    }

    pub fn update(&mut self, mb: &Minibatch, rng: &mut impl Rng) -> UpdateStats {
        let critic_loss = self.critic_update(mb);
        let value_loss = self.value_update(mb, rng);
        let (actor_loss, entropy) = self.actor_update(mb, rng);
        UpdateStats { critic_loss, value_loss, actor_loss: Some(actor_loss), entropy: Some(entropy) }
    }
}
