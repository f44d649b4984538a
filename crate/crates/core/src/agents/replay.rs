use ndarray::{Array1, Array2};
use rand::Rng;

use super::AgentError;

/// Row-aligned minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s2: Array2<f64>,
    pub done: Array1<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Fixed-capacity ring of transitions, stored flat.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    s2: Vec<f64>,
    done: Vec<f64>,
    len: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self, AgentError> {
        if capacity == 0 {
            return Err(AgentError::Argument("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            s: vec![0.0; capacity * obs_dim],
            a: vec![0.0; capacity * act_dim],
            r: vec![0.0; capacity],
            s2: vec![0.0; capacity * obs_dim],
            done: vec![0.0; capacity],
            len: 0,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, s2: &[f64], done: bool) -> Result<(), AgentError> {
        if s.len() != self.obs_dim || s2.len() != self.obs_dim || a.len() != self.act_dim {
            return Err(AgentError::Argument("transition has wrong dimensions".into()));
        }
        if !(s.iter().chain(a).chain(s2).all(|v| v.is_finite()) && r.is_finite()) {
            return Err(AgentError::Argument("transition contains non-finite values".into()));
        }
        let i = self.cursor;
        let (o, k) = (self.obs_dim, self.act_dim);
        self.s[i * o..(i + 1) * o].copy_from_slice(s);
        self.s2[i * o..(i + 1) * o].copy_from_slice(s2);
        self.a[i * k..(i + 1) * k].copy_from_slice(a);
        self.r[i] = r;
        self.done[i] = if done { 1.0 } else { 0.0 };
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Slot indices of a uniform draw with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>, AgentError> {
        if batch == 0 || self.len < batch {
            return Err(AgentError::State(format!("buffer holds {} transitions, batch needs {batch}", self.len)));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.len)).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Minibatch, AgentError> {
        let idx = self.sample_indices(batch, rng)?;
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, idx: &[usize]) -> Minibatch {
        let (o, k) = (self.obs_dim, self.act_dim);
        let n = idx.len();
        let rows = |src: &[f64], w: usize| {
            let mut out = Vec::with_capacity(n * w);
            for &i in idx {
                out.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
            Array2::from_shape_vec((n, w), out).expect("row-major gather")
        };
        Minibatch {
            s: rows(&self.s, o),
            a: rows(&self.a, k),
            r: idx.iter().map(|&i| self.r[i]).collect(),
            s2: rows(&self.s2, o),
            done: idx.iter().map(|&i| self.done[i]).collect(),
        }
    }

    /// Oldest stored reward first.
    pub fn rewards_in_order(&self) -> Vec<f64> {
        let start = if self.len < self.capacity { 0 } else { self.cursor };
        (0..self.len).map(|j| self.r[(start + j) % self.capacity]).collect()
    }
}
