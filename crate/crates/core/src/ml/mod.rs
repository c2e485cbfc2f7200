//! Classifiers over feature matrices: random forest, gradient boosted trees,
//! k-nearest neighbours and logistic regression, plus metrics, temporally
//! shifted cross-validation and Gini importance.
//!
//! Training rows are put in a canonical order (by feature values, then label)
//! before fitting, so a model never depends on the order rows arrive in.

mod cv;
mod forest;
mod gbt;
mod knn;
pub mod logreg;
mod metrics;
mod persist;
mod scale;
pub mod tree;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;
use crate::features::{FeatureMatrix, FeatureMode, FeatureSchema};
use crate::labels::{LabelClass, LabelStore};
use crate::matrix::Matrix;

pub use cv::{cross_validate, stratified_folds, write_metrics_csv, CvReport, MonthMetrics, FOLDS};
pub use forest::Forest;
pub use gbt::Gbt;
pub use knn::Knn;
pub use logreg::Logreg;
pub use metrics::{evaluate, evaluate_at_threshold, Metrics};
pub use persist::MODEL_FORMAT;
pub use scale::Standardizer;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training labels contain a single class ({0})")]
    SingleClass(ClassLabel),
    #[error("label {label} is not a {mode:?} class")]
    BadLabel { label: ClassLabel, mode: FeatureMode },
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("operation needs a random forest, model is {0}")]
    NotForest(Algorithm),
    #[error("month {0} missing from feature matrices")]
    MissingMonth(crate::domain::Month),
    #[error("empty input")]
    Empty,
    #[error("model file: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl MlError {
    pub fn code(&self) -> &'static str {
        match self {
            MlError::SingleClass(_) => "single_class",
            MlError::BadLabel { .. } => "bad_label",
            MlError::SchemaMismatch { .. } => "schema_mismatch",
            MlError::InvalidConfig(_) => "invalid_config",
            MlError::LengthMismatch(..) => "length_mismatch",
            MlError::TooFewRows { .. } => "too_few_rows",
            MlError::NotForest(_) => "not_forest",
            MlError::MissingMonth(_) => "missing_month",
            MlError::Empty => "empty_input",
            MlError::Format(_) | MlError::Json(_) | MlError::Csv(_) => "parse",
            MlError::Io(_) => "io",
        }
    }
}

/// Class of a training row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    NonMisinformation,
    Misinformation,
    Propaganda,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::NonMisinformation => "non_misinformation",
            ClassLabel::Misinformation => "misinformation",
            ClassLabel::Propaganda => "propaganda",
        }
    }

    /// Training class of a labeled domain; `None` for unlabeled ones.
    /// Propaganda collapses into misinformation in binary mode.
    pub fn of(store: &LabelStore, domain: &str, mode: FeatureMode) -> Option<ClassLabel> {
        match store.class_of(domain) {
            LabelClass::Unlabeled => None,
            LabelClass::Authoritative => Some(ClassLabel::NonMisinformation),
            LabelClass::Misinformation => {
                if mode == FeatureMode::Multiclass && store.is_propaganda(domain) {
                    Some(ClassLabel::Propaganda)
                } else {
                    Some(ClassLabel::Misinformation)
                }
            }
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "non_misinformation" | "authoritative" => Ok(ClassLabel::NonMisinformation),
            "misinformation" => Ok(ClassLabel::Misinformation),
            "propaganda" => Ok(ClassLabel::Propaganda),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

/// Class list of a mode, in output column order.
pub fn classes(mode: FeatureMode) -> Vec<ClassLabel> {
    match mode {
        FeatureMode::Binary => vec![ClassLabel::NonMisinformation, ClassLabel::Misinformation],
        FeatureMode::Multiclass => {
            vec![ClassLabel::NonMisinformation, ClassLabel::Misinformation, ClassLabel::Propaganda]
        }
    }
}

/// The class whose precision and recall get reported, and whose confidence
/// drives deployment.
pub fn target_class(mode: FeatureMode) -> ClassLabel {
    match mode {
        FeatureMode::Binary => ClassLabel::Misinformation,
        FeatureMode::Multiclass => ClassLabel::Propaganda,
    }
}

/// Labels for the rows of `x` from a label store. Unlabeled rows get `None`.
pub fn labels_for(store: &LabelStore, domains: &[Domain], mode: FeatureMode) -> Vec<Option<ClassLabel>> {
    domains.iter().map(|d| ClassLabel::of(store, d.as_str(), mode)).collect()
}

/// Every labeled domain with its training class.
pub fn labeled_set(store: &LabelStore, mode: FeatureMode) -> std::collections::BTreeMap<Domain, ClassLabel> {
    store
        .labels()
        .filter_map(|l| ClassLabel::of(store, l.domain.as_str(), mode).map(|c| (l.domain.clone(), c)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Knn,
    Logreg,
    RandomForest,
    Gbt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Knn, Algorithm::Logreg, Algorithm::RandomForest, Algorithm::Gbt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Logreg => "logreg",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Gbt => "gbt",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "knn" => Ok(Algorithm::Knn),
            "logreg" | "logistic_regression" => Ok(Algorithm::Logreg),
            "random_forest" | "rf" => Ok(Algorithm::RandomForest),
            "gbt" | "xgb" | "boosted_trees" => Ok(Algorithm::Gbt),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub algorithm: Algorithm,
    pub knn_k: usize,
    pub logreg_c: f64,
    pub rf_max_depth: usize,
    pub rf_n_trees: usize,
    pub gbt_max_depth: usize,
    pub gbt_rounds: usize,
    pub gbt_learning_rate: f64,
    pub seed: u64,
    pub mode: FeatureMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            algorithm: Algorithm::RandomForest,
            knn_k: 5,
            logreg_c: 1.0,
            rf_max_depth: 20,
            rf_n_trees: 100,
            gbt_max_depth: 6,
            gbt_rounds: 200,
            gbt_learning_rate: 0.1,
            seed: 0,
            mode: FeatureMode::Binary,
        }
    }
}

impl ModelConfig {
    pub fn new(algorithm: Algorithm, mode: FeatureMode, seed: u64) -> Self {
        ModelConfig { algorithm, mode, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), MlError> {
        let bad = |m: &str| Err(MlError::InvalidConfig(m.to_string()));
        if self.knn_k == 0 || self.knn_k % 2 == 0 {
            return bad("knn_k must be odd and positive");
        }
        if !(self.logreg_c > 0.0 && self.logreg_c.is_finite()) {
            return bad("logreg_c must be positive");
        }
        if self.rf_max_depth == 0 || self.rf_n_trees == 0 || self.gbt_max_depth == 0 || self.gbt_rounds == 0 {
            return bad("depths and counts must be at least 1");
        }
        if !(self.gbt_learning_rate > 0.0 && self.gbt_learning_rate <= 1.0) {
            return bad("gbt_learning_rate must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    RandomForest(Forest),
    Gbt(Gbt),
    Knn(Knn),
    Logreg(Logreg),
}

/// A fitted classifier. Immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub algorithm: Algorithm,
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub classes: Vec<ClassLabel>,
    pub params: ModelParams,
}

/// Fits a model on rows of `x` labeled by `y`.
pub fn train(config: &ModelConfig, x: &FeatureMatrix, y: &[ClassLabel]) -> Result<TrainedModel, MlError> {
    if x.schema.mode() != config.mode {
        return Err(MlError::SchemaMismatch {
            expected: format!("{:?} features", config.mode),
            found: x.schema.to_string(),
        });
    }
    train_matrix(config, &x.schema, &x.values, y)
}

/// Like [`train`] on a bare matrix whose columns follow `schema`.
pub fn train_matrix(
    config: &ModelConfig,
    schema: &FeatureSchema,
    x: &Matrix,
    y: &[ClassLabel],
) -> Result<TrainedModel, MlError> {
    config.validate()?;
    if x.n_cols() != schema.len() {
        return Err(MlError::SchemaMismatch {
            expected: schema.to_string(),
            found: format!("{} columns", x.n_cols()),
        });
    }
    if x.n_rows() != y.len() {
        return Err(MlError::LengthMismatch(x.n_rows(), y.len()));
    }
    let classes = classes(config.mode);
    let mut yi = Vec::with_capacity(y.len());
    for &label in y {
        let i = classes
            .iter()
            .position(|c| *c == label)
            .ok_or(MlError::BadLabel { label, mode: config.mode })?;
        yi.push(i);
    }
    if x.n_rows() < classes.len() {
        return Err(MlError::TooFewRows { needed: classes.len(), got: x.n_rows() });
    }
    if yi.iter().all(|&c| c == yi[0]) {
        return Err(MlError::SingleClass(classes[yi[0]]));
    }
    let (x, yi) = canonical_order(x, &yi);
    let k = classes.len();
    let params = match config.algorithm {
        Algorithm::RandomForest => ModelParams::RandomForest(Forest::fit(&x, &yi, k, config)),
        Algorithm::Gbt => ModelParams::Gbt(Gbt::fit(&x, &yi, k, config)),
        Algorithm::Knn => ModelParams::Knn(Knn::fit(&x, &yi, k, config.knn_k)),
        Algorithm::Logreg => ModelParams::Logreg(Logreg::fit(&x, &yi, k, config.logreg_c)),
    };
    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        algorithm: config.algorithm,
        config: config.clone(),
        schema: schema.clone(),
        classes,
        params,
    })
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Sorts rows by feature values then label. Identical (row, label) pairs are
/// interchangeable, so the result is independent of input order.
fn canonical_order(x: &Matrix, y: &[usize]) -> (Matrix, Vec<usize>) {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| cmp_rows(x.row(a), x.row(b)).then(y[a].cmp(&y[b])));
    let y = idx.iter().map(|&i| y[i]).collect();
    (x.select_rows(&idx), y)
}

impl TrainedModel {
    pub fn target_class(&self) -> ClassLabel {
        target_class(self.config.mode)
    }

    pub fn class_index(&self, class: ClassLabel) -> Option<usize> {
        self.classes.iter().position(|c| *c == class)
    }

    /// Per-row class confidences, columns in [`TrainedModel::classes`] order.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, MlError> {
        if x.schema != self.schema {
            return Err(MlError::SchemaMismatch {
                expected: self.schema.to_string(),
                found: x.schema.to_string(),
            });
        }
        Ok(self.predict_proba_matrix(&x.values))
    }

    /// Panics if the column count differs from the training schema.
    pub fn predict_proba_matrix(&self, x: &Matrix) -> Vec<Vec<f64>> {
        assert_eq!(x.n_cols(), self.schema.len(), "column count");
        match &self.params {
            ModelParams::RandomForest(m) => m.predict_proba(x),
            ModelParams::Gbt(m) => m.predict_proba(x),
            ModelParams::Knn(m) => m.predict_proba(x),
            ModelParams::Logreg(m) => m.predict_proba(x),
        }
    }

    /// Arg-max class per row; ties go to the earlier class.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<ClassLabel>, MlError> {
        Ok(self.predict_proba(x)?.iter().map(|p| self.classes[argmax(p)]).collect())
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<ClassLabel> {
        self.predict_proba_matrix(x).iter().map(|p| self.classes[argmax(p)]).collect()
    }

    /// Features ranked by mean decrease in Gini impurity, summing to 1.
    /// Ties keep schema order.
    pub fn gini_importance(&self) -> Result<Vec<(String, f64)>, MlError> {
        let ModelParams::RandomForest(forest) = &self.params else {
            return Err(MlError::NotForest(self.algorithm));
        };
        let imp = forest.importances(self.schema.len());
        let mut ranked: Vec<(String, f64)> = self.schema.columns.iter().cloned().zip(imp).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(ranked)
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod test_util {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    pub fn schema(n: usize) -> FeatureSchema {
        FeatureSchema { version: "test".into(), columns: (0..n).map(|i| format!("f{i}")).collect() }
    }

    /// Two Gaussian-ish blobs in `dims` dimensions, `n` rows, labels 0/1.
    pub fn blobs(n: usize, dims: usize, sep: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let row: Vec<f64> = (0..dims)
                .map(|_| {
                    let g: f64 = (0..6).map(|_| rng.gen::<f64>()).sum::<f64>() - 3.0;
                    g + if c == 1 { sep } else { -sep }
                })
                .collect();
            rows.push(row);
            y.push(c);
        }
        (Matrix::from_rows(dims, rows), y)
    }

    pub fn to_labels(y: &[usize]) -> Vec<ClassLabel> {
        let cls = classes(FeatureMode::Binary);
        y.iter().map(|&i| cls[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::test_util::*;
    use super::*;

    fn small(alg: Algorithm) -> ModelConfig {
        ModelConfig { rf_n_trees: 10, gbt_rounds: 20, ..ModelConfig::new(alg, FeatureMode::Binary, 3) }
    }

    #[test]
    fn single_class_and_bad_config_are_errors() {
        let x = Matrix::from_rows(1, vec![vec![0.0], vec![1.0]]);
        let s = schema(1);
        let y = [ClassLabel::Misinformation; 2];
        let cfg = small(Algorithm::Knn);
        assert!(matches!(train_matrix(&cfg, &s, &x, &y), Err(MlError::SingleClass(_))));
        let even = ModelConfig { knn_k: 4, ..cfg.clone() };
        assert!(matches!(
            train_matrix(&even, &s, &x, &[ClassLabel::Misinformation, ClassLabel::NonMisinformation]),
            Err(MlError::InvalidConfig(_))
        ));
        let y = [ClassLabel::Propaganda, ClassLabel::NonMisinformation];
        assert!(matches!(train_matrix(&cfg, &s, &x, &y), Err(MlError::BadLabel { .. })));
    }

    #[test]
    fn schema_mismatch_on_predict() {
        let (x, y) = blobs(20, 2, 2.0, 1);
        let m = train_matrix(&small(Algorithm::Knn), &schema(2), &x, &to_labels(&y)).unwrap();
        let other = FeatureMatrix { schema: schema(3), domains: vec![], values: Matrix::zeros(0, 3) };
        assert!(matches!(m.predict_proba(&other), Err(MlError::SchemaMismatch { .. })));
        let fm = FeatureMatrix::empty(FeatureSchema::traffic(FeatureMode::Multiclass));
        assert!(matches!(train(&small(Algorithm::Knn), &fm, &[]), Err(MlError::SchemaMismatch { .. })));
    }

    #[test]
    fn probabilities_are_distributions() {
        let (x, y) = blobs(60, 3, 0.5, 2);
        for alg in Algorithm::ALL {
            let m = train_matrix(&small(alg), &schema(3), &x, &to_labels(&y)).unwrap();
            for p in m.predict_proba_matrix(&x) {
                assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{alg}: {p:?}");
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{alg}: {p:?}");
            }
        }
    }

    #[test]
    fn gini_importance_needs_forest() {
        let (x, y) = blobs(20, 2, 2.0, 1);
        let m = train_matrix(&small(Algorithm::Logreg), &schema(2), &x, &to_labels(&y)).unwrap();
        assert!(matches!(m.gini_importance(), Err(MlError::NotForest(Algorithm::Logreg))));
    }

    #[test]
    fn single_feature_forest_importance() {
        // Only f1 varies, so every split uses it.
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0, i as f64, 0.0]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let x = Matrix::from_rows(3, rows);
        let m = train_matrix(&small(Algorithm::RandomForest), &schema(3), &x, &to_labels(&y)).unwrap();
        let imp = m.gini_importance().unwrap();
        assert_eq!(imp[0], ("f1".to_string(), 1.0));
        assert_eq!(imp[1].1, 0.0);
        assert_eq!(imp[1].0, "f0");
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(80, 4, 0.3, 5);
        for alg in Algorithm::ALL {
            let a = train_matrix(&small(alg), &schema(4), &x, &to_labels(&y)).unwrap();
            let b = train_matrix(&small(alg), &schema(4), &x, &to_labels(&y)).unwrap();
            assert_eq!(a, b, "{alg}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn row_permutation_changes_no_prediction(seed in 0u64..1000, alg in 0usize..4) {
            let alg = Algorithm::ALL[alg];
            let (x, y) = blobs(40, 3, 0.4, seed);
            let mut idx: Vec<usize> = (0..40).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
            let xp = x.select_rows(&idx);
            let yp: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let cfg = small(alg);
            let a = train_matrix(&cfg, &schema(3), &x, &to_labels(&y)).unwrap();
            let b = train_matrix(&cfg, &schema(3), &xp, &to_labels(&yp)).unwrap();
            let (q, _) = blobs(30, 3, 0.4, seed + 1);
            prop_assert_eq!(a.predict_proba_matrix(&q), b.predict_proba_matrix(&q));
        }
    }
}
