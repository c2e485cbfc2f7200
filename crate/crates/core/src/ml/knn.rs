use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scale::Standardizer;
use crate::matrix::Matrix;

/// k-nearest neighbours on z-scored features, squared Euclidean distance.
/// Equidistant neighbours are taken in training-row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub scaler: Standardizer,
    pub x: Matrix,
    pub y: Vec<usize>,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, k: usize) -> Self {
        let scaler = Standardizer::fit(x);
        Knn { k, n_classes, x: scaler.transform(x), y: y.to_vec(), scaler }
    }

    /// Indices of the `k` nearest training rows to an already scaled query,
    /// nearest first.
    pub fn neighbours(&self, q: &[f64]) -> Vec<usize> {
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(self.k + 1);
        for (i, row) in self.x.rows().enumerate() {
            let d: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            let c = Cand(d, i);
            if heap.len() < self.k {
                heap.push(c);
            } else if c < *heap.peek().expect("k > 0") {
                heap.pop();
                heap.push(c);
            }
        }
        heap.into_sorted_vec().into_iter().map(|c| c.1).collect()
    }

    /// Vote fractions among the neighbours.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<Vec<f64>> {
        x.rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|row| {
                let q = self.scaler.transform_row(row);
                let nb = self.neighbours(&q);
                let mut p = vec![0.0; self.n_classes];
                for &i in &nb {
                    p[self.y[i]] += 1.0;
                }
                let m = nb.len() as f64;
                p.iter_mut().for_each(|v| *v /= m);
                p
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn unanimous_neighbours() {
        let x = Matrix::from_rows(2, vec![vec![1.0, 1.0]; 5]);
        let m = Knn::fit(&x, &[1; 5], 2, 5);
        let p = m.predict_proba(&Matrix::from_rows(2, vec![vec![9.0, -3.0], vec![0.0, 0.0]]));
        assert_eq!(p, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_distance_oracle(
            rows in prop::collection::vec((prop::collection::vec(-5i32..5, 3), 0usize..2), 5..200),
            queries in prop::collection::vec(prop::collection::vec(-6i32..6, 3), 1..10),
        ) {
            let x = Matrix::from_rows(3, rows.iter().map(|(r, _)| r.iter().map(|&v| f64::from(v)).collect()));
            let y: Vec<usize> = rows.iter().map(|(_, c)| *c).collect();
            let m = Knn::fit(&x, &y, 2, 5);
            let q = Matrix::from_rows(3, queries.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()));
            let got = m.predict_proba(&q);
            for (qi, qrow) in q.rows().enumerate() {
                let zq = m.scaler.transform_row(qrow);
                let mut all: Vec<(f64, usize)> = (0..x.n_rows())
                    .map(|i| {
                        let zr = m.scaler.transform_row(x.row(i));
                        (zr.iter().zip(&zq).map(|(a, b)| (a - b).powi(2)).sum(), i)
                    })
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let votes = all[..5].iter().filter(|(_, i)| y[*i] == 1).count();
                prop_assert_eq!(got[qi][1], votes as f64 / 5.0);
            }
        }
    }
}
