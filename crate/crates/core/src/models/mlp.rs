//! One-hidden-layer perceptron: ReLU hidden units, sigmoid output, trained
//! with Adam on mini-batches of log-loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::SparseRow;
use super::sigmoid;
use crate::scalar::Scalar;

const BATCH: usize = 32;
const L2: f64 = 1e-4;
const PATIENCE: usize = 10;
const MIN_IMPROVEMENT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpParams<T> {
    pub inputs: usize,
    pub hidden: usize,
    /// Input-major: `w1[i * hidden + j]` connects input `i` to unit `j`.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

impl<T: Scalar> MlpParams<T> {
    fn init(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
        Self {
            inputs,
            hidden,
            w1: (0..inputs * hidden)
                .map(|_| T::lit(rng.gen_range(-bound1..bound1)))
                .collect(),
            b1: (0..hidden).map(|_| T::lit(rng.gen_range(-bound1..bound1))).collect(),
            w2: (0..hidden).map(|_| T::lit(rng.gen_range(-bound2..bound2))).collect(),
            b2: T::lit(rng.gen_range(-bound2..bound2)),
        }
    }

    fn hidden_pre(&self, row: &SparseRow<T>, out: &mut [T]) {
        out.copy_from_slice(&self.b1);
        for (i, v) in row.iter() {
            let w = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (o, &wj) in out.iter_mut().zip(w) {
                *o = *o + v * wj;
            }
        }
    }

    fn sparse_predict(&self, row: &SparseRow<T>, buf: &mut [T]) -> T {
        self.hidden_pre(row, buf);
        let z = buf
            .iter()
            .zip(&self.w2)
            .fold(self.b2, |acc, (&a, &w)| acc + a.max(T::zero()) * w);
        sigmoid(z)
    }

    pub fn predict(&self, row: &[T]) -> T {
        let mut buf = vec![T::zero(); self.hidden];
        self.sparse_predict(&SparseRow::from_dense(row), &mut buf)
    }

    fn flat_len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }
}

fn log_loss<T: Scalar>(params: &MlpParams<T>, rows: &[SparseRow<T>], y: &[bool]) -> f64 {
    let eps = 1e-12;
    let mut buf = vec![T::zero(); params.hidden];
    let total: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, &t)| {
            let p = params.sparse_predict(r, &mut buf).as_f64().clamp(eps, 1.0 - eps);
            if t {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / rows.len().max(1) as f64
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
}

impl<T: Scalar> Adam<T> {
    fn new(len: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut MlpParams<T>, grad: &[T]) {
        let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let lr = self.lr;
        let mut k = 0;
        let mut update = |p: &mut T| {
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * g;
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * g * g;
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
            k += 1;
        };
        params.w1.iter_mut().for_each(&mut update);
        params.b1.iter_mut().for_each(&mut update);
        params.w2.iter_mut().for_each(&mut update);
        update(&mut params.b2);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MlpFit<T> {
    pub params: MlpParams<T>,
    /// Epochs actually used (best validation epoch when early stopping).
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains for up to `epochs` epochs. With a validation split the weights of
/// the epoch with the lowest validation log-loss are kept, and training stops
/// after `PATIENCE` epochs without improvement.
pub(crate) fn fit<T: Scalar>(
    rows: &[SparseRow<T>],
    y: &[bool],
    inputs: usize,
    hidden: usize,
    learning_rate: f64,
    epochs: usize,
    validation: Option<(&[SparseRow<T>], &[bool])>,
    seed: u64,
) -> MlpFit<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::init(inputs, hidden, &mut rng);
    let initial_loss = log_loss(&params, rows, y);
    let mut adam = Adam::new(params.flat_len(), T::lit(learning_rate));
    let mut grad = vec![T::zero(); params.flat_len()];
    let (b1_off, w2_off) = (inputs * hidden, inputs * hidden + hidden);
    let b2_off = w2_off + hidden;
    let mut pre = vec![T::zero(); hidden];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let l2 = T::lit(L2);

    let mut best: Option<(f64, usize, MlpParams<T>)> = None;
    let mut used = 0;
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            for &r in batch {
                let row = &rows[r];
                params.hidden_pre(row, &mut pre);
                let z = pre
                    .iter()
                    .zip(&params.w2)
                    .fold(params.b2, |acc, (&a, &w)| acc + a.max(T::zero()) * w);
                let dz = sigmoid(z) - if y[r] { T::one() } else { T::zero() };
                grad[b2_off] = grad[b2_off] + dz;
                for j in 0..hidden {
                    if pre[j] > T::zero() {
                        grad[w2_off + j] = grad[w2_off + j] + dz * pre[j];
                        let dh = dz * params.w2[j];
                        grad[b1_off + j] = grad[b1_off + j] + dh;
                        for (i, v) in row.iter() {
                            grad[i * hidden + j] = grad[i * hidden + j] + dh * v;
                        }
                    }
                }
            }
            let scale = T::one() / T::from_usize(batch.len()).unwrap();
            for g in grad.iter_mut() {
                *g = *g * scale;
            }
            for (k, w) in params.w1.iter().enumerate() {
                grad[k] = grad[k] + l2 * *w;
            }
            for (j, w) in params.w2.iter().enumerate() {
                grad[w2_off + j] = grad[w2_off + j] + l2 * *w;
            }
            adam.step(&mut params, &grad);
        }
        used = epoch;

        if let Some((vx, vy)) = validation {
            let loss = log_loss(&params, vx, vy);
            match &best {
                Some((b, _, _)) if loss >= *b - MIN_IMPROVEMENT => {
                    if epoch - best.as_ref().unwrap().1 >= PATIENCE {
                        break;
                    }
                }
                _ => best = Some((loss, epoch, params.clone())),
            }
        }
    }
    let (params, epochs) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, used),
    };
    MlpFit {
        final_loss: log_loss(&params, rows, y),
        params,
        epochs,
        initial_loss,
    }
}
