//! Tanh squashing into a per-dimension action box.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::neural::{GradTape, Mlp};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log1m_tanh2(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Affine map between `[-1, 1]` and `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn half_width(&self, j: usize) -> f64 {
        0.5 * (self.hi[j] - self.lo[j])
    }

    pub fn to_box(&self, j: usize, t: f64) -> f64 {
        self.lo[j] + self.half_width(j) * (t + 1.0)
    }

    pub fn from_box(&self, j: usize, a: f64) -> f64 {
        (a - self.lo[j]) / self.half_width(j) - 1.0
    }

    /// Sum over dimensions of `ln(half width)`.
    pub fn log_jacobian(&self) -> f64 {
        (0..self.dim()).map(|j| self.half_width(j).ln()).sum()
    }
}

/// Batched squashed-Gaussian sample with everything the gradient needs.
#[derive(Debug)]
pub struct GaussianSample {
    pub actions: Array2<f64>,
    pub log_prob: Array1<f64>,
    pub eps: Array2<f64>,
    pub tanh: Array2<f64>,
    pub std: Array2<f64>,
    /// 1 where the raw log-std sat inside the clamp.
    pub ls_live: Array2<f64>,
    pub tape: Option<GradTape>,
}

/// Density of a squashed Gaussian at pre-squash point `u`.
pub fn log_prob_at(mu: f64, log_std: f64, u: f64, half_width: f64) -> f64 {
    let eps = (u - mu) / log_std.exp();
    -0.5 * eps * eps - log_std - HALF_LN_2PI - log1m_tanh2(u) - half_width.ln()
}

/// Runs a Gaussian actor head (`[mean | log_std]`) on a batch.
/// With `eps = None` draws noise from `rng`; zero noise gives the mode.
pub fn sample_gaussian(
    actor: &Mlp,
    s: ArrayView2<f64>,
    bounds: &ActionBox,
    rng: &mut impl Rng,
    deterministic: bool,
    record: bool,
) -> GaussianSample {
    let k = bounds.dim();
    let s = s.to_owned();
    let (out, tape) = if record {
        let (y, t) = actor.forward(&s).expect("actor input width");
        (y, Some(t))
    } else {
        (actor.predict(&s).expect("actor input width"), None)
    };
    let n = out.nrows();
    let mut eps = Array2::zeros((n, k));
    if !deterministic {
        eps.mapv_inplace(|_: f64| rng.sample::<f64, _>(StandardNormal));
    }
    let mut actions = Array2::zeros((n, k));
    let mut tanh = Array2::zeros((n, k));
    let mut std = Array2::zeros((n, k));
    let mut ls_live = Array2::zeros((n, k));
    let mut log_prob = Array1::zeros(n);
    let log_jac = bounds.log_jacobian();
    for i in 0..n {
        let mut lp = -log_jac;
        for j in 0..k {
            let mu = out[[i, j]];
            let raw = out[[i, k + j]];
            let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            ls_live[[i, j]] = if raw == ls { 1.0 } else { 0.0 };
            let sd = ls.exp();
            let e = eps[[i, j]];
            let u = mu + sd * e;
            let t = u.tanh();
            lp += -0.5 * e * e - ls - HALF_LN_2PI - log1m_tanh2(u);
            tanh[[i, j]] = t;
            std[[i, j]] = sd;
            actions[[i, j]] = bounds.to_box(j, t);
        }
        log_prob[i] = lp;
    }
    GaussianSample { actions, log_prob, eps, tanh, std, ls_live, tape }
}

/// Gradient of `Σ_i [α·logπ_i + g_a,i · a_i]` with respect to the actor's
/// raw head, where `g_a` is an upstream gradient on the box actions.
pub fn gaussian_head_grad(sample: &GaussianSample, g_a: &Array2<f64>, alpha_per_row: f64, bounds: &ActionBox) -> Array2<f64> {
    let (n, k) = sample.actions.dim();
    let mut d = Array2::zeros((n, 2 * k));
    for i in 0..n {
        for j in 0..k {
            let t = sample.tanh[[i, j]];
            let sd = sample.std[[i, j]];
            let e = sample.eps[[i, j]];
            let du = g_a[[i, j]] * bounds.half_width(j) * (1.0 - t * t) + alpha_per_row * 2.0 * t;
            d[[i, j]] = du;
            d[[i, k + j]] = sample.ls_live[[i, j]] * (du * sd * e - alpha_per_row);
        }
    }
    d
}

/// Mean of the batch entropy estimate `-logπ`.
pub fn entropy_estimate(sample: &GaussianSample) -> f64 {
    -sample.log_prob.mean_axis(Axis(0)).map(|m| m.into_scalar()).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log1m_tanh2_matches_direct_form() {
        for u in [-3.0, -0.5, 0.0, 0.2, 1.7, 4.0] {
            let t: f64 = f64::tanh(u);
            assert!((log1m_tanh2(u) - (1.0 - t * t).ln()).abs() < 1e-10);
        }
        assert!(log1m_tanh2(400.0).is_finite());
    }

    /// The density over the box, pushed back through the squash, integrates to one.
    #[test]
    fn density_integrates_to_one() {
        for (lo, hi, mu, ls) in [(0.0, 1.0, 0.3, -0.5), (-1.0, 1.0, -1.2, 0.4), (0.0, 1.0, 2.0, 1.0)] {
            let b = ActionBox::new(vec![lo], vec![hi]);
            // trapezoid rule on action points spaced evenly in the pre-squash coordinate,
            // so mass crowded against the box edges is resolved
            let n = 200_000;
            let grid: Vec<f64> = (0..=n).map(|i| -40.0 + 80.0 * i as f64 / n as f64).collect();
            let dens = |u: f64| log_prob_at(mu, ls, u, b.half_width(0)).exp();
            let mut total = 0.0;
            for w in grid.windows(2) {
                let (a0, a1) = (b.to_box(0, w[0].tanh()), b.to_box(0, w[1].tanh()));
                total += 0.5 * (dens(w[0]) + dens(w[1])) * (a1 - a0);
            }
            assert!((total - 1.0).abs() < 1e-3, "integral {total}");
        }
    }

    #[test]
    fn sampled_log_prob_matches_closed_form() {
        let actor = Mlp::new(&[1, 2], Activation::Relu, 5).unwrap();
        let b = ActionBox::new(vec![0.0], vec![1.0]);
        let s = ndarray::array![[0.4]];
        let out = actor.predict(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let smp = sample_gaussian(&actor, s.view(), &b, &mut rng, false, false);
        let t = b.from_box(0, smp.actions[[0, 0]]);
        let expect = log_prob_at(out[[0, 0]], out[[0, 1]].clamp(LOG_STD_MIN, LOG_STD_MAX), t.atanh(), 0.5);
        assert!((smp.log_prob[0] - expect).abs() < 1e-6);
    }

    #[test]
    fn deterministic_sample_is_squashed_mean() {
        let actor = Mlp::new(&[3, 8, 4], Activation::Tanh, 2).unwrap();
        let b = ActionBox::new(vec![0.0, -1.0], vec![1.0, 1.0]);
        let s = ndarray::array![[0.1, -0.2, 0.3]];
        let mu = actor.predict(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let smp = sample_gaussian(&actor, s.view(), &b, &mut rng, true, false);
        for j in 0..2 {
            assert_eq!(smp.actions[[0, j]], b.to_box(j, mu[[0, j]].tanh()));
        }
    }

    #[test]
    fn vanishing_std_collapses_to_mode() {
        let mut actor = Mlp::new(&[1, 2], Activation::Relu, 0).unwrap();
        // mean 0.3, log-std at the lower clamp
        actor.set_params_flat(&[0.0, 0.0, 0.3, -30.0]).unwrap();
        let b = ActionBox::new(vec![-1.0], vec![1.0]);
        let s = ndarray::array![[1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = sample_gaussian(&actor, s.view(), &b, &mut rng, false, false);
        let det = sample_gaussian(&actor, s.view(), &b, &mut rng, true, false);
        assert!((st.actions[[0, 0]] - det.actions[[0, 0]]).abs() < 1e-7);
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let b = ActionBox::new(vec![0.0, -1.0], vec![1.0, 1.0]);
        let actor = Mlp::new(&[2, 4], Activation::Relu, 8).unwrap();
        let s = ndarray::array![[0.3, -0.7], [0.9, 0.1]];
        let g_a = ndarray::array![[0.4, -1.1], [0.2, 0.7]];
        let alpha = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = sample_gaussian(&actor, s.view(), &b, &mut rng, false, false);
        let objective = |head: &Array2<f64>| {
            let mut total = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let ls = head[[i, 2 + j]];
                    let u = head[[i, j]] + ls.exp() * base.eps[[i, j]];
                    total += alpha * log_prob_at(head[[i, j]], ls, u, b.half_width(j));
                    total += g_a[[i, j]] * b.to_box(j, u.tanh());
                }
            }
            total
        };
        let head = actor.predict(&s).unwrap();
        let d = gaussian_head_grad(&base, &g_a, alpha, &b);
        for idx in [[0, 0], [0, 3], [1, 1], [1, 2]] {
            let h = 1e-6;
            let mut up = head.clone();
            up[idx] += h;
            let mut dn = head.clone();
            dn[idx] -= h;
            let fd = (objective(&up) - objective(&dn)) / (2.0 * h);
            assert!((fd - d[idx]).abs() < 1e-5 * fd.abs().max(1.0), "{idx:?}: {fd} vs {}", d[idx]);
        }
    }
}
