use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, sort_columns, CartParams, Tree};
use super::ModelConfig;
use crate::matrix::Matrix;

/// Bagged CART trees with √p candidate features per split. Tree `t` draws
/// from its own ChaCha8 stream, so trees can be grown in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, config: &ModelConfig) -> Self {
        let sorted = sort_columns(x);
        let n = x.n_rows();
        let params = CartParams {
            n_classes,
            max_depth: config.rf_max_depth,
            max_features: ((x.n_cols() as f64).sqrt() as usize).max(1),
        };
        let trees = (0..config.rf_n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.gen_range(0..n)] += 1.0;
                }
                grow(x, y, &w, &sorted, &params, Some(&mut rng))
            })
            .collect();
        Forest { n_classes, trees }
    }

    /// Mean of the leaf class frequencies over trees.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<Vec<f64>> {
        let m = self.trees.len() as f64;
        x.rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| {
                let mut p = vec![0.0; self.n_classes];
                for t in &self.trees {
                    for (a, b) in p.iter_mut().zip(t.leaf_value(row)) {
                        *a += b;
                    }
                }
                p.iter_mut().for_each(|v| *v /= m);
                p
            })
            .collect()
    }

    /// Per-tree normalized Gini decrease, averaged over trees that split at
    /// all, renormalized to sum 1.
    pub fn importances(&self, n_features: usize) -> Vec<f64> {
        let mut imp = vec![0.0; n_features];
        let mut used = 0usize;
        for t in self.trees.iter().filter(|t| !t.is_leaf()) {
            used += 1;
            for (a, b) in imp.iter_mut().zip(t.importances(n_features)) {
                *a += b;
            }
        }
        if used > 0 {
            imp.iter_mut().for_each(|v| *v /= used as f64);
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}
