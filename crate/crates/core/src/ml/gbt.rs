//! Gradient boosted trees with second-order split gain, L2 leaf penalty
//! `lambda = 1`, minimum child hessian 1 and a raw base score of 0.
//! Binary uses the logistic link with one tree per round; `K` classes use
//! softmax with `K` trees per round.

use serde::{Deserialize, Serialize};

use super::tree::{better, midpoint, sort_columns, Presorted, SplitChoice};
use super::ModelConfig;
use crate::matrix::Matrix;

const LAMBDA: f64 = 1.0;
const MIN_CHILD_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegTree, i: usize) -> usize {
            match &t.nodes[i] {
                RegNode::Leaf { .. } => 0,
                RegNode::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub n_classes: usize,
    /// Per round: one tree for binary, one per class otherwise.
    pub rounds: Vec<Vec<RegTree>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn score(g: f64, h: f64) -> f64 {
    g * g / (h + LAMBDA)
}

struct RegBuilder<'a> {
    x: &'a Matrix,
    g: &'a [f64],
    h: &'a [f64],
    eta: f64,
    max_depth: usize,
    ps: Presorted,
    nodes: Vec<RegNode>,
}

impl RegBuilder<'_> {
    fn sums(&self, lo: usize, hi: usize) -> (f64, f64) {
        self.ps.lists[0][lo..hi]
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.g[i as usize], h + self.h[i as usize]))
    }

    fn choose(&self, lo: usize, hi: usize, gs: f64, hs: f64) -> Option<SplitChoice> {
        let parent = score(gs, hs);
        let mut best: Option<SplitChoice> = None;
        for f in 0..self.x.n_cols() {
            let list = &self.ps.lists[f][lo..hi];
            let xv = |k: usize| self.x.get(list[k] as usize, f);
            let (mut gl, mut hl) = (0.0, 0.0);
            for (k, &i) in list[..list.len() - 1].iter().enumerate() {
                let i = i as usize;
                gl += self.g[i];
                hl += self.h[i];
                let (a, b) = (xv(k), xv(k + 1));
                if a == b {
                    continue;
                }
                let hr = hs - hl;
                if hl < MIN_CHILD_WEIGHT || hr < MIN_CHILD_WEIGHT {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl) + score(gs - gl, hr) - parent);
                let threshold = midpoint(a, b);
                if better(gain, f, threshold, best.as_ref()) {
                    best = Some(SplitChoice { feature: f, threshold, gain });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12)
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let (gs, hs) = self.sums(lo, hi);
        self.nodes.push(RegNode::Leaf { value: -self.eta * gs / (hs + LAMBDA) });
        if depth >= self.max_depth || hi - lo < 2 {
            return id;
        }
        let Some(split) = self.choose(lo, hi, gs, hs) else {
            return id;
        };
        let mid = self.ps.partition(self.x, lo, hi, split.feature, split.threshold);
        let left = self.build(lo, mid, depth + 1);
        let right = self.build(mid, hi, depth + 1);
        self.nodes[id as usize] = RegNode::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

impl Gbt {
    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, config: &ModelConfig) -> Self {
        let n = x.n_rows();
        let sorted = sort_columns(x);
        let per_round = if n_classes == 2 { 1 } else { n_classes };
        let mut raw = vec![vec![0.0; per_round]; n];
        let mut rounds = Vec::with_capacity(config.gbt_rounds);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..config.gbt_rounds {
            let probs: Vec<Vec<f64>> = raw
                .iter()
                .map(|r| if per_round == 1 { vec![sigmoid(r[0])] } else { softmax(r) })
                .collect();
            let mut trees = Vec::with_capacity(per_round);
            #[allow(clippy::needless_range_loop)]
            for k in 0..per_round {
                let target = if per_round == 1 { 1 } else { k };
                for i in 0..n {
                    let p = probs[i][k];
                    g[i] = p - f64::from(u8::from(y[i] == target));
                    h[i] = (p * (1.0 - p)).max(1e-16);
                }
                let mut b = RegBuilder {
                    x,
                    g: &g,
                    h: &h,
                    eta: config.gbt_learning_rate,
                    max_depth: config.gbt_max_depth,
                    ps: Presorted::new(&sorted, n, |_| true),
                    nodes: Vec::new(),
                };
                b.build(0, n, 0);
                trees.push(RegTree { nodes: b.nodes });
            }
            for (i, r) in raw.iter_mut().enumerate() {
                for (k, t) in trees.iter().enumerate() {
                    r[k] += t.value(x.row(i));
                }
            }
            rounds.push(trees);
        }
        Gbt { n_classes, rounds }
    }

    pub fn raw_scores(&self, row: &[f64]) -> Vec<f64> {
        let per_round = if self.n_classes == 2 { 1 } else { self.n_classes };
        let mut raw = vec![0.0; per_round];
        for trees in &self.rounds {
            for (r, t) in raw.iter_mut().zip(trees) {
                *r += t.value(row);
            }
        }
        raw
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<Vec<f64>> {
        x.rows()
            .map(|row| {
                let raw = self.raw_scores(row);
                if self.n_classes == 2 {
                    let p = sigmoid(raw[0]);
                    vec![1.0 - p, p]
                } else {
                    softmax(&raw)
                }
            })
            .collect()
    }

    pub fn max_depth(&self) -> usize {
        self.rounds.iter().flatten().map(RegTree::depth).max().unwrap_or(0)
    }
}
