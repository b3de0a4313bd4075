//! L2-regularised logistic regression fitted with damped Newton steps.
//!
//! Objective: mean log-loss + `l2 / 2 * |w|^2` (bias unpenalised). The
//! Hessian is accumulated from sparse rows, so a step costs
//! `O(rows * nnz^2 + d^3)`.

use serde::{Deserialize, Serialize};

use super::features::SparseRow;
use super::sigmoid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogRegParams<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LogRegParams<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
        }
    }

    pub fn logit(&self, row: &[T]) -> T {
        row.iter()
            .zip(&self.weights)
            .fold(self.bias, |acc, (&x, &w)| acc + x * w)
    }

    fn sparse_logit(&self, row: &SparseRow<T>) -> T {
        row.iter()
            .fold(self.bias, |acc, (i, v)| acc + v * self.weights[i])
    }

    pub fn predict(&self, row: &[T]) -> T {
        sigmoid(self.logit(row))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitReport<T> {
    pub initial_loss: T,
    pub final_loss: T,
    #[cfg_attr(not(test), allow(dead_code))]
    pub gradient_norm: T,
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn objective<T: Scalar>(p: &LogRegParams<T>, rows: &[SparseRow<T>], y: &[bool], l2: T) -> T {
    let n = T::from_usize(rows.len()).unwrap();
    let loss = rows.iter().zip(y).fold(T::zero(), |acc, (r, &t)| {
        let z = p.sparse_logit(r);
        acc + softplus(z) - if t { z } else { T::zero() }
    }) / n;
    let penalty = p.weights.iter().fold(T::zero(), |a, &w| a + w * w);
    loss + l2 * penalty / T::lit(2.0)
}

/// In-place Cholesky solve of `a x = b`; `a` is row-major `n x n` and
/// symmetric positive definite. Returns `None` if a pivot is not positive.
fn cholesky_solve<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> Option<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(())
}

/// Fits from zero initialisation. Stops after `max_iter` Newton steps, when
/// the gradient norm drops below `tol`, or when no step decreases the loss.
pub(crate) fn fit<T: Scalar>(
    rows: &[SparseRow<T>],
    y: &[bool],
    dim: usize,
    l2: T,
    max_iter: usize,
    tol: T,
) -> (LogRegParams<T>, FitReport<T>) {
    let n = T::from_usize(rows.len()).unwrap();
    let m = dim + 1;
    let mut params = LogRegParams::zeros(dim);
    let initial_loss = objective(&params, rows, y, l2);
    let mut loss = initial_loss;
    let mut grad_norm = T::infinity();
    let mut iterations = 0;

    let mut grad = vec![T::zero(); m];
    let mut hess = vec![T::zero(); m * m];
    while iterations < max_iter {
        grad.iter_mut().for_each(|g| *g = T::zero());
        hess.iter_mut().for_each(|h| *h = T::zero());
        for (r, &t) in rows.iter().zip(y) {
            let p = sigmoid(params.sparse_logit(r));
            let resid = p - if t { T::one() } else { T::zero() };
            let w = p * (T::one() - p);
            for (a, va) in r.iter() {
                grad[a] = grad[a] + resid * va;
                for (b, vb) in r.iter() {
                    hess[a * m + b] = hess[a * m + b] + w * va * vb;
                }
                hess[a * m + dim] = hess[a * m + dim] + w * va;
                hess[dim * m + a] = hess[dim * m + a] + w * va;
            }
            grad[dim] = grad[dim] + resid;
            hess[dim * m + dim] = hess[dim * m + dim] + w;
        }
        for g in grad.iter_mut() {
            *g = *g / n;
        }
        for h in hess.iter_mut() {
            *h = *h / n;
        }
        for (i, &w) in params.weights.iter().enumerate() {
            grad[i] = grad[i] + l2 * w;
            hess[i * m + i] = hess[i * m + i] + l2;
        }
        hess[dim * m + dim] = hess[dim * m + dim] + T::lit(1e-12);
        grad_norm = grad.iter().fold(T::zero(), |a, &g| a + g * g).sqrt();
        if grad_norm < tol {
            break;
        }

        let mut step = grad.clone();
        if cholesky_solve(&mut hess, &mut step, m).is_none() {
            break;
        }
        let mut scale = T::one();
        let mut improved = false;
        for _ in 0..40 {
            let candidate = LogRegParams {
                weights: params
                    .weights
                    .iter()
                    .zip(&step)
                    .map(|(&w, &s)| w - scale * s)
                    .collect(),
                bias: params.bias - scale * step[dim],
            };
            let l = objective(&candidate, rows, y, l2);
            if l < loss {
                params = candidate;
                loss = l;
                improved = true;
                break;
            }
            scale = scale / T::lit(2.0);
        }
        iterations += 1;
        if !improved {
            break;
        }
    }
    (
        params,
        FitReport {
            initial_loss,
            final_loss: loss,
            gradient_norm: grad_norm,
        },
    )
}
