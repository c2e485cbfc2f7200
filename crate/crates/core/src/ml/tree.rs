//! CART classification trees (Gini) and the presorted column index shared
//! with boosting.
//!
//! Rows go left when `x[feature] <= threshold`. Thresholds are midpoints
//! between consecutive distinct values. Candidate splits whose gains differ
//! by at most [`GAIN_TOLERANCE`] count as tied, and ties go to the lower
//! feature index, then the lower threshold.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub const GAIN_TOLERANCE: f64 = 1e-12;

/// For each feature, row indices sorted by (value, index).
pub(crate) fn sort_columns(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Per-feature sorted row lists in which every tree node owns the same
/// index range `lo..hi` in each list.
pub(crate) struct Presorted {
    pub lists: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
}

impl Presorted {
    pub fn new(sorted: &[Vec<u32>], n_rows: usize, keep: impl Fn(u32) -> bool) -> Self {
        let lists: Vec<Vec<u32>> = sorted.iter().map(|l| l.iter().copied().filter(|&i| keep(i)).collect()).collect();
        Presorted { lists, scratch: Vec::new(), goes_left: vec![false; n_rows] }
    }

    pub fn len(&self) -> usize {
        self.lists.first().map_or(0, Vec::len)
    }

    /// Stable partition of `lo..hi` in every list; returns the split point.
    pub fn partition(&mut self, x: &Matrix, lo: usize, hi: usize, feature: usize, threshold: f64) -> usize {
        for &i in &self.lists[feature][lo..hi] {
            self.goes_left[i as usize] = x.get(i as usize, feature) <= threshold;
        }
        let mut mid = lo;
        for list in &mut self.lists {
            self.scratch.clear();
            let mut w = lo;
            for k in lo..hi {
                let i = list[k];
                if self.goes_left[i as usize] {
                    list[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            list[w..hi].copy_from_slice(&self.scratch);
            mid = w;
        }
        mid
    }
}

pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Whether candidate `(gain, feature, threshold)` beats the current best.
pub(crate) fn better(gain: f64, feature: usize, threshold: f64, best: Option<&SplitChoice>) -> bool {
    match best {
        None => true,
        Some(b) => {
            if gain > b.gain + GAIN_TOLERANCE {
                true
            } else if gain >= b.gain - GAIN_TOLERANCE {
                feature < b.feature || (feature == b.feature && threshold < b.threshold)
            } else {
                false
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Gini decrease relative to the node, `gini(node) - weighted children gini`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
        /// Weighted impurity decrease, for importances.
        decrease: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    /// Longest root-to-leaf path in edges.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        go(self, 0)
    }

    /// Splits per feature weighted by impurity decrease, normalized to sum 1
    /// (all zero for a single-leaf tree).
    pub fn importances(&self, n_features: usize) -> Vec<f64> {
        let mut imp = vec![0.0; n_features];
        for n in &self.nodes {
            if let Node::Split { feature, decrease, .. } = n {
                imp[*feature] += decrease.max(0.0);
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

pub(crate) struct CartParams {
    pub n_classes: usize,
    pub max_depth: usize,
    /// Non-constant features examined per split.
    pub max_features: usize,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    w: &'a [f64],
    params: &'a CartParams,
    rng: Option<&'a mut ChaCha8Rng>,
    ps: Presorted,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

impl Builder<'_> {
    fn counts(&self, lo: usize, hi: usize) -> (Vec<f64>, f64) {
        let mut c = vec![0.0; self.params.n_classes];
        let mut t = 0.0;
        for &i in &self.ps.lists[0][lo..hi] {
            c[self.y[i as usize]] += self.w[i as usize];
            t += self.w[i as usize];
        }
        (c, t)
    }

    /// Best split of `feature` on `lo..hi`; `None` when constant.
    fn scan(&self, feature: usize, lo: usize, hi: usize, counts: &[f64], total: f64, parent: f64) -> Option<SplitChoice> {
        let list = &self.ps.lists[feature][lo..hi];
        let x = |k: usize| self.x.get(list[k] as usize, feature);
        if x(0) == x(list.len() - 1) {
            return None;
        }
        let mut left = vec![0.0; counts.len()];
        let mut right = counts.to_vec();
        let mut wl = 0.0;
        let mut best: Option<SplitChoice> = None;
        for (k, &i) in list[..list.len() - 1].iter().enumerate() {
            let i = i as usize;
            left[self.y[i]] += self.w[i];
            right[self.y[i]] -= self.w[i];
            wl += self.w[i];
            let (a, b) = (x(k), x(k + 1));
            if a == b {
                continue;
            }
            let wr = total - wl;
            let gain = parent - (wl * gini(&left, wl) + wr * gini(&right, wr)) / total;
            let threshold = midpoint(a, b);
            if better(gain, feature, threshold, best.as_ref()) {
                best = Some(SplitChoice { feature, threshold, gain });
            }
        }
        best
    }

    fn choose(&mut self, lo: usize, hi: usize, counts: &[f64], total: f64, parent: f64) -> Option<SplitChoice> {
        if let Some(rng) = self.rng.as_deref_mut() {
            self.features.shuffle(rng);
        }
        let mut best: Option<SplitChoice> = None;
        let mut examined = 0;
        for k in 0..self.features.len() {
            if examined >= self.params.max_features {
                break;
            }
            let f = self.features[k];
            if let Some(c) = self.scan(f, lo, hi, counts, total, parent) {
                examined += 1;
                if better(c.gain, c.feature, c.threshold, best.as_ref()) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let (counts, total) = self.counts(lo, hi);
        let parent = gini(&counts, total);
        let leaf = Node::Leaf { value: counts.iter().map(|c| c / total).collect() };
        self.nodes.push(leaf);
        if depth >= self.params.max_depth || parent <= 0.0 || hi - lo < 2 {
            return id;
        }
        let Some(split) = self.choose(lo, hi, &counts, total, parent) else {
            return id;
        };
        let mid = self.ps.partition(self.x, lo, hi, split.feature, split.threshold);
        let left = self.build(lo, mid, depth + 1);
        let right = self.build(mid, hi, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            decrease: split.gain * total,
        };
        id
    }
}

/// Grows a tree on rows with positive weight. `sorted` comes from
/// [`sort_columns`] on `x`.
pub(crate) fn grow(
    x: &Matrix,
    y: &[usize],
    w: &[f64],
    sorted: &[Vec<u32>],
    params: &CartParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let ps = Presorted::new(sorted, x.n_rows(), |i| w[i as usize] > 0.0);
    let n = ps.len();
    let mut b = Builder { x, y, w, params, rng, ps, nodes: Vec::new(), features: (0..x.n_cols()).collect() };
    assert!(n > 0, "tree needs at least one weighted row");
    b.build(0, n, 0);
    Tree { nodes: b.nodes }
}

/// Best root split over all features with unit weights, as chosen by the
/// tree builder.
pub fn best_split(x: &Matrix, y: &[usize], n_classes: usize) -> Option<SplitChoice> {
    let sorted = sort_columns(x);
    let w = vec![1.0; y.len()];
    let params = CartParams { n_classes, max_depth: 1, max_features: x.n_cols() };
    let ps = Presorted::new(&sorted, x.n_rows(), |_| true);
    let n = ps.len();
    let mut b = Builder { x, y, w: &w, params: &params, rng: None, ps, nodes: Vec::new(), features: (0..x.n_cols()).collect() };
    let (counts, total) = b.counts(0, n);
    let parent = gini(&counts, total);
    b.choose(0, n, &counts, total, parent)
}
