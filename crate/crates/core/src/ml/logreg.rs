//! L2-regularized logistic regression on z-scored features.
//!
//! Minimizes `mean(logloss) + |w|^2 / (2 C n)` with an unpenalized
//! intercept, the same minimizer as `C * sum(logloss) + |w|^2 / 2`. Solved by
//! Newton steps with backtracking until the gradient norm drops below 1e-6
//! or 10,000 iterations pass. Several classes are fitted one-vs-rest and
//! the per-class probabilities renormalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::scale::Standardizer;
use crate::matrix::Matrix;

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLogreg {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logreg {
    pub n_classes: usize,
    pub scaler: Standardizer,
    /// One model for binary (positive = class 1), one per class otherwise.
    pub models: Vec<BinaryLogreg>,
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Objective and gradient at `(w, b)`; the gradient's last entry is the
/// intercept's.
pub fn objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, c: f64) -> (f64, Vec<f64>) {
    let n = x.n_rows() as f64;
    let p = x.n_cols();
    let mut loss = 0.0;
    let mut grad = vec![0.0; p + 1];
    for (row, &yi) in x.rows().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        // -[y log s(z) + (1-y) log(1-s(z))]
        loss += log1pexp(z) - yi * z;
        let r = sigmoid(z) - yi;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[p] += r;
    }
    let reg = 1.0 / (c * n);
    let mut obj = loss / n + 0.5 * reg * w.iter().map(|v| v * v).sum::<f64>();
    if !obj.is_finite() {
        obj = f64::INFINITY;
    }
    for (j, g) in grad.iter_mut().enumerate() {
        *g /= n;
        if j < p {
            *g += reg * w[j];
        }
    }
    (obj, grad)
}

fn hessian(x: &Matrix, w: &[f64], b: f64, c: f64) -> DMatrix<f64> {
    let n = x.n_rows() as f64;
    let p = x.n_cols();
    let mut h = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut ext = vec![1.0; p + 1];
    for row in x.rows() {
        let z = b + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let s = sigmoid(z);
        let d = s * (1.0 - s) / n;
        ext[..p].copy_from_slice(row);
        for i in 0..=p {
            let di = d * ext[i];
            for j in i..=p {
                h[(i, j)] += di * ext[j];
            }
        }
    }
    for i in 0..=p {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    let reg = 1.0 / (c * n);
    for i in 0..p {
        h[(i, i)] += reg;
    }
    h
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Fits one binary model; `y` holds 0/1 targets.
pub fn fit_binary(x: &Matrix, y: &[f64], c: f64) -> BinaryLogreg {
    let p = x.n_cols();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let (mut obj, mut grad) = objective(x, y, &w, b, c);
    let mut it = 0;
    while it < MAX_ITERATIONS && norm(&grad) > GRADIENT_TOLERANCE {
        it += 1;
        let mut h = hessian(x, &w, b, c);
        let g = DVector::from_column_slice(&grad);
        let step = loop {
            if let Some(ch) = h.clone().cholesky() {
                break ch.solve(&g);
            }
            // Flat intercept direction when every prediction saturates.
            for i in 0..=p {
                h[(i, i)] += 1e-10;
            }
        };
        let mut t = 1.0;
        let slope: f64 = -g.dot(&step);
        loop {
            let w_new: Vec<f64> = w.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let b_new = b - t * step[p];
            let (o, gr) = objective(x, y, &w_new, b_new, c);
            if o <= obj + 1e-4 * t * slope || t < 1e-12 {
                w = w_new;
                b = b_new;
                obj = o;
                grad = gr;
                break;
            }
            t *= 0.5;
        }
        if t < 1e-12 {
            break;
        }
    }
    let gradient_norm = norm(&grad);
    BinaryLogreg { weights: w, intercept: b, iterations: it, gradient_norm }
}

impl BinaryLogreg {
    pub fn prob(&self, z_row: &[f64]) -> f64 {
        sigmoid(self.intercept + z_row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

impl Logreg {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, c: f64) -> Self {
        let scaler = Standardizer::fit(x);
        let z = scaler.transform(x);
        let targets: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
        let models = targets
            .iter()
            .map(|&k| {
                let yk: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v == k))).collect();
                fit_binary(&z, &yk, c)
            })
            .collect();
        Logreg { n_classes, scaler, models }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<Vec<f64>> {
        x.rows()
            .map(|row| {
                let z = self.scaler.transform_row(row);
                if self.n_classes == 2 {
                    let p = self.models[0].prob(&z);
                    vec![1.0 - p, p]
                } else {
                    let mut p: Vec<f64> = self.models.iter().map(|m| m.prob(&z)).collect();
                    let s: f64 = p.iter().sum();
                    if s > 0.0 {
                        p.iter_mut().for_each(|v| *v /= s);
                    } else {
                        p.iter_mut().for_each(|v| *v = 1.0 / self.n_classes as f64);
                    }
                    p
                }
            })
            .collect()
    }
}
