//! Dense networks with hand-written reverse mode, Adam and SGD.
//!
//! Inputs are row-major batches: one sample per row.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "zcmes-mlp";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("state error: {0}")]
    State(String),
    #[error("format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
        }
    }

    /// Derivative expressed through pre-activation `z` and output `a`.
    fn grad(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Multi-layer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    /// `weights[l]` has shape `(widths[l], widths[l + 1])`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-layer inputs and pre-activations from one forward pass.
#[derive(Debug)]
pub struct GradTape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    widths: Vec<usize>,
    consumed: bool,
}

/// Gradients of a scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl Grads {
    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            *w *= k;
        }
        for b in &mut self.biases {
            *b *= k;
        }
        self.input *= k;
    }
}

impl Mlp {
    /// Fan-in uniform initialization `U(−1/√n, 1/√n)`.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self, NeuralError> {
        if widths.len() < 2 {
            return Err(NeuralError::Argument("need at least input and output widths".into()));
        }
        if widths.contains(&0) {
            return Err(NeuralError::Argument(format!("zero width in {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let bound = 1.0 / (widths[l] as f64).sqrt();
            weights.push(Array2::from_shape_fn((widths[l], widths[l + 1]), |_| rng.random_range(-bound..bound)));
            biases.push(Array1::from_shape_fn(widths[l + 1], |_| rng.random_range(-bound..bound)));
        }
        Ok(Self { widths: widths.to_vec(), activation, weights, biases })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NeuralError> {
        if x.ncols() != self.input_dim() {
            return Err(NeuralError::Argument(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass without recording.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..=last {
            h = self.activation.apply(&h);
            h = h.dot(&self.weights[l]) + &self.biases[l];
        }
        Ok(h)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let m = Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| NeuralError::Argument(e.to_string()))?;
        Ok(self.predict(&m)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, GradTape), NeuralError> {
        self.check_input(x)?;
        let n = self.weights.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.clone();
        for l in 0..n {
            let z = h.dot(&self.weights[l]) + &self.biases[l];
            inputs.push(h);
            if l + 1 < n {
                h = self.activation.apply(&z);
            } else {
                h = z.clone();
            }
            pre.push(z);
        }
        Ok((h, GradTape { inputs, pre, widths: self.widths.clone(), consumed: false }))
    }

    /// Gradients of `Σ dy ⊙ y` with respect to every parameter and the input.
    pub fn backward(&self, tape: &mut GradTape, dy: &Array2<f64>) -> Result<Grads, NeuralError> {
        if tape.consumed {
            return Err(NeuralError::State("gradient tape already consumed".into()));
        }
        if tape.widths != self.widths {
            return Err(NeuralError::Argument("tape was recorded on a different network shape".into()));
        }
        let batch = tape.inputs[0].nrows();
        if dy.dim() != (batch, self.output_dim()) {
            return Err(NeuralError::Argument(format!(
                "dy has shape {:?}, expected ({batch}, {})",
                dy.dim(),
                self.output_dim()
            )));
        }
        tape.consumed = true;
        let n = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        let mut delta = dy.clone();
        for l in (0..n).rev() {
            gw[l] = tape.inputs[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            let back = delta.dot(&self.weights[l].t());
            if l == 0 {
                delta = back;
            } else {
                let z = &tape.pre[l - 1];
                let a = &tape.inputs[l];
                let act = self.activation;
                let mut d = back;
                ndarray::Zip::from(&mut d).and(z).and(a).for_each(|d, &z, &a| *d *= act.grad(z, a));
                delta = d;
            }
        }
        Ok(Grads { weights: gw, biases: gb, input: delta })
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<(), NeuralError> {
        if p.len() != self.param_count() {
            return Err(NeuralError::Argument(format!("expected {} parameters, got {}", self.param_count(), p.len())));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = p[k];
                k += 1;
            }
            for v in b.iter_mut() {
                *v = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// `self ← τ·source + (1 − τ)·self`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.weights.iter_mut().zip(&source.weights) {
            t.zip_mut_with(s, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        for (t, s) in self.biases.iter_mut().zip(&source.biases) {
            t.zip_mut_with(s, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
    }

    pub fn norm(&self) -> f64 {
        self.params_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> String {
        let doc = SavedMlp {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            widths: self.widths.clone(),
            activation: self.activation,
            params: self.params_flat(),
        };
        serde_json::to_string(&doc).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let doc: SavedMlp = serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))?;
        if doc.format != FORMAT || doc.version != FORMAT_VERSION {
            return Err(NeuralError::Format(format!("unsupported format {} v{}", doc.format, doc.version)));
        }
        let mut net = Mlp::new(&doc.widths, doc.activation, 0)?;
        net.set_params_flat(&doc.params)?;
        if net.params_flat().iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::Format("non-finite parameter".into()));
        }
        Ok(net)
    }
}

/// On-disk layout: a small header followed by all parameters, layer by
/// layer, weights row-major then biases.
#[derive(Debug, Serialize, Deserialize)]
struct SavedMlp {
    format: String,
    version: u32,
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    mw: Vec<Array2<f64>>,
    vw: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            mw: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            vw: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            mb: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            vb: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, g: &Grads) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = self.lr * c2.sqrt() / c1;
        let eps_hat = eps * c2.sqrt();
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&mut self.mw[l])
                .and(&mut self.vw[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps_hat);
                });
            ndarray::Zip::from(&mut net.biases[l])
                .and(&mut self.mb[l])
                .and(&mut self.vb[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps_hat);
                });
        }
    }
}

/// Plain gradient descent.
pub fn sgd_step(net: &mut Mlp, g: &Grads, lr: f64) {
    for (w, gw) in net.weights.iter_mut().zip(&g.weights) {
        w.scaled_add(-lr, gw);
    }
    for (b, gb) in net.biases.iter_mut().zip(&g.biases) {
        b.scaled_add(-lr, gb);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::new(&[8, 400, 300, 1], Activation::Relu, 3).unwrap();
        let b = Mlp::new(&[8, 400, 300, 1], Activation::Relu, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), 8 * 400 + 400 + 400 * 300 + 300 + 300 + 1);
        assert!(a.params_flat().iter().all(|v| v.is_finite() && v.abs() < 1.0));
        assert!(matches!(Mlp::new(&[3, 0, 1], Activation::Relu, 0), Err(NeuralError::Argument(_))));
    }

    #[test]
    fn forward_examples() {
        let mut net = Mlp::new(&[3, 4, 2], Activation::Relu, 1).unwrap();
        let n = net.param_count();
        let mut p = vec![0.0; n];
        // head bias is the last 2 parameters
        p[n - 2] = 0.7;
        p[n - 1] = -0.2;
        net.set_params_flat(&p).unwrap();
        let y = net.predict(&array![[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(y, array![[0.7, -0.2]]);

        let mut lin = Mlp::new(&[2, 2], Activation::Relu, 0).unwrap();
        lin.set_params_flat(&[1.0, 2.0, 3.0, 4.0, 0.0, 0.0]).unwrap();
        let y = lin.predict(&array![[1.0, 1.0], [2.0, 0.0]]).unwrap();
        assert_eq!(y, array![[4.0, 6.0], [2.0, 4.0]]);

        let mut r = Mlp::new(&[1, 3, 1], Activation::Relu, 2).unwrap();
        // negative hidden weights and biases on a positive input: all units dead
        r.set_params_flat(&[-1.0, -1.0, -1.0, -0.1, -0.1, -0.1, 5.0, 5.0, 5.0, 0.25]).unwrap();
        assert_eq!(r.predict(&array![[2.0]]).unwrap(), array![[0.25]]);
        assert!(r.predict(&array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut net = Mlp::new(&[1, 1], Activation::Relu, 0).unwrap();
        net.set_params_flat(&[1.5, 0.0]).unwrap();
        let (_, mut tape) = net.forward(&array![[2.0]]).unwrap();
        let g = net.backward(&mut tape, &array![[3.0]]).unwrap();
        assert_eq!(g.weights[0], array![[6.0]]);
        assert!(matches!(net.backward(&mut tape, &array![[3.0]]), Err(NeuralError::State(_))));

        let big = Mlp::new(&[4, 8, 2], Activation::Tanh, 0).unwrap();
        let (_, mut tape) = big.forward(&array![[0.1, 0.2, 0.3, 0.4]]).unwrap();
        let g = big.backward(&mut tape, &Array2::zeros((1, 2))).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|v| *v == 0.0)));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adam_examples() {
        let mut net = Mlp::new(&[1, 1], Activation::Relu, 0).unwrap();
        net.set_params_flat(&[0.5, 0.0]).unwrap();
        let mut opt = Adam::new(&net, 0.01);
        let zero = Grads { weights: vec![array![[0.0]]], biases: vec![array![0.0]], input: array![[0.0]] };
        opt.step(&mut net, &zero);
        assert_eq!(net.params_flat(), vec![0.5, 0.0]);

        let g = Grads { weights: vec![array![[2.0]]], biases: vec![array![-3.0]], input: array![[0.0]] };
        let mut opt = Adam::new(&net, 0.01);
        let mut prev = net.params_flat();
        for _ in 0..100 {
            opt.step(&mut net, &g);
            let now = net.params_flat();
            // a constant gradient moves each coordinate by about lr per step
            assert!((prev[0] - now[0]) > 0.0 && (prev[0] - now[0]) <= 0.01 * 1.001);
            assert!((now[1] - prev[1]) > 0.0 && (now[1] - prev[1]) <= 0.01 * 1.001);
            prev = now;
        }
    }

    #[test]
    fn json_round_trip() {
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, 9).unwrap();
        let back = Mlp::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        assert!(Mlp::from_json("{\"format\":\"other\",\"version\":1,\"widths\":[1,1],\"activation\":\"relu\",\"params\":[0,0]}").is_err());
    }

    #[test]
    fn soft_update_limits() {
        let src = Mlp::new(&[2, 3, 1], Activation::Relu, 1).unwrap();
        let mut t = Mlp::new(&[2, 3, 1], Activation::Relu, 2).unwrap();
        let before = t.clone();
        t.soft_update(&src, 0.0);
        assert_eq!(t, before);
        t.soft_update(&src, 1.0);
        assert_eq!(t, src);
    }

    #[test]
    fn fits_sine() {
        let mut net = Mlp::new(&[1, 16, 1], Activation::Tanh, 4).unwrap();
        let mut opt = Adam::new(&net, 0.01);
        let xs: Vec<f64> = (0..64).map(|i| -3.0 + 6.0 * i as f64 / 63.0).collect();
        let x = Array2::from_shape_vec((64, 1), xs.clone()).unwrap();
        let y = Array2::from_shape_vec((64, 1), xs.iter().map(|v| v.sin()).collect()).unwrap();
        let mut mse = f64::INFINITY;
        for _ in 0..2000 {
            let (out, mut tape) = net.forward(&x).unwrap();
            let err = &out - &y;
            mse = err.mapv(|e| e * e).mean().unwrap();
            let g = net.backward(&mut tape, &(err * (2.0 / 64.0))).unwrap();
            opt.step(&mut net, &g);
        }
        assert!(mse < 1e-2, "mse {mse}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let act = if k % 2 == 0 { Activation::Relu } else { Activation::Tanh };
            let mut net = Mlp::new(&[4, 7, 6, 3], act, k).unwrap();
            let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
            let c = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
            let loss = |n: &Mlp, x: &Array2<f64>| (n.predict(x).unwrap() * &c).sum();
            let (_, mut tape) = net.forward(&x).unwrap();
            let g = net.backward(&mut tape, &c).unwrap();
            let mut analytic: Vec<f64> = Vec::new();
            for (w, b) in g.weights.iter().zip(&g.biases) {
                analytic.extend(w.iter());
                analytic.extend(b.iter());
            }
            let p0 = net.params_flat();
            let h = 1e-5;
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] += h;
                net.set_params_flat(&p).unwrap();
                let up = loss(&net, &x);
                p[i] -= 2.0 * h;
                net.set_params_flat(&p).unwrap();
                let down = loss(&net, &x);
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3));
            }
            net.set_params_flat(&p0).unwrap();
            for i in 0..x.len() {
                let (r, col) = (i / 4, i % 4);
                let mut xp = x.clone();
                xp[[r, col]] += h;
                let up = loss(&net, &xp);
                xp[[r, col]] -= 2.0 * h;
                let fd = (up - loss(&net, &xp)) / (2.0 * h);
                let a = g.input[[r, col]];
                worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-3));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
