//! Temporally shifted cross-validation: folds are drawn once over labeled
//! domains, each fold trains on the training month and tests the held-out
//! domains in every month.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, target_class, train_matrix, Algorithm, ClassLabel, Metrics, MlError, ModelConfig};
use crate::domain::{Domain, Month};
use crate::features::FeatureMatrix;
use crate::matrix::Matrix;

pub const FOLDS: usize = 5;

/// Fold index per domain, in map order. Each class's domains (sorted) are
/// shuffled with `seed` and dealt round-robin, continuing the deal across
/// classes.
pub fn stratified_folds(labels: &BTreeMap<Domain, ClassLabel>, k: usize, seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, c) in labels.values().enumerate() {
        by_class.entry(*c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            folds[r] = next % k;
            next += 1;
        }
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthMetrics {
    pub month: Month,
    /// Means over folds; precision and recall average only the folds where
    /// they are defined.
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub folds: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub algorithm: Algorithm,
    pub positive_class: ClassLabel,
    pub train_month: Month,
    pub months: Vec<MonthMetrics>,
}

/// Rows for `domains` from `m`; domains absent from the matrix get zeros.
pub(crate) fn gather_rows(m: &FeatureMatrix, domains: &[&Domain]) -> Matrix {
    let p = m.schema.len();
    Matrix::from_rows(
        p,
        domains.iter().map(|d| match m.row_of(d.as_str()) {
            Some(i) => m.row(i).to_vec(),
            None => vec![0.0; p],
        }),
    )
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn cross_validate(
    config: &ModelConfig,
    features_by_month: &BTreeMap<Month, FeatureMatrix>,
    labels: &BTreeMap<Domain, ClassLabel>,
    train_month: Month,
) -> Result<CvReport, MlError> {
    let train_m = features_by_month.get(&train_month).ok_or(MlError::MissingMonth(train_month))?;
    for m in features_by_month.values() {
        if m.schema != train_m.schema {
            return Err(MlError::SchemaMismatch { expected: train_m.schema.to_string(), found: m.schema.to_string() });
        }
    }
    if labels.len() < FOLDS {
        return Err(MlError::TooFewRows { needed: FOLDS, got: labels.len() });
    }
    let domains: Vec<&Domain> = labels.keys().collect();
    let y: Vec<ClassLabel> = labels.values().copied().collect();
    let folds = stratified_folds(labels, FOLDS, config.seed);
    let by_month: Vec<(Month, Matrix)> =
        features_by_month.iter().map(|(m, fm)| (*m, gather_rows(fm, &domains))).collect();
    let x_train_all = gather_rows(train_m, &domains);
    let positive = target_class(config.mode);

    let per_fold: Vec<Vec<Metrics>> = (0..FOLDS)
        .into_par_iter()
        .map(|f| {
            let tr: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let te: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            let ytr: Vec<ClassLabel> = tr.iter().map(|&i| y[i]).collect();
            let yte: Vec<ClassLabel> = te.iter().map(|&i| y[i]).collect();
            let model = train_matrix(config, &train_m.schema, &x_train_all.select_rows(&tr), &ytr)?;
            by_month
                .iter()
                .map(|(_, x)| evaluate(&yte, &model.predict_matrix(&x.select_rows(&te)), positive))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let months = by_month
        .iter()
        .enumerate()
        .map(|(mi, (month, _))| {
            let fm: Vec<Metrics> = per_fold.iter().map(|f| f[mi]).collect();
            MonthMetrics {
                month: *month,
                accuracy: fm.iter().map(|m| m.accuracy).sum::<f64>() / fm.len() as f64,
                precision: mean_opt(fm.iter().map(|m| m.precision)),
                recall: mean_opt(fm.iter().map(|m| m.recall)),
                folds: fm,
            }
        })
        .collect();
    Ok(CvReport { algorithm: config.algorithm, positive_class: positive, train_month, months })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// One row per model, `<month>:accuracy,<month>:precision,<month>:recall`
/// column triples per month. Undefined values are empty cells.
pub fn write_metrics_csv<W: Write>(writer: W, reports: &[CvReport]) -> Result<(), MlError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let months: Vec<Month> = reports.first().map(|r| r.months.iter().map(|m| m.month).collect()).unwrap_or_default();
    let mut header = vec!["model".to_string()];
    for m in &months {
        for k in ["accuracy", "precision", "recall"] {
            header.push(format!("{m}:{k}"));
        }
    }
    wtr.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.algorithm.to_string()];
        for m in &months {
            let mm = r.months.iter().find(|x| x.month == *m);
            row.push(cell(mm.map(|x| x.accuracy)));
            row.push(cell(mm.and_then(|x| x.precision)));
            row.push(cell(mm.and_then(|x| x.recall)));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::test_util::blobs;
    use super::*;
    use crate::features::FeatureSchema;

    fn fixture(months: &[&str]) -> (BTreeMap<Month, FeatureMatrix>, BTreeMap<Domain, ClassLabel>) {
        let (x, y) = blobs(60, 3, 1.0, 8);
        let schema = FeatureSchema { version: "t".into(), columns: vec!["a".into(), "b".into(), "c".into()] };
        let domains: Vec<Domain> = (0..60).map(|i| Domain::parse(&format!("d{i:03}.com")).unwrap()).collect();
        let labels = domains
            .iter()
            .zip(&y)
            .map(|(d, &c)| (d.clone(), if c == 1 { ClassLabel::Misinformation } else { ClassLabel::NonMisinformation }))
            .collect();
        let fm = FeatureMatrix { schema, domains, values: x };
        (months.iter().map(|m| (m.parse().unwrap(), fm.clone())).collect(), labels)
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let (_, labels) = fixture(&["2022-10"]);
        let a = stratified_folds(&labels, 5, 1);
        assert_eq!(a, stratified_folds(&labels, 5, 1));
        assert_ne!(a, stratified_folds(&labels, 5, 2));
        for f in 0..5 {
            let pos = labels.values().zip(&a).filter(|(c, &x)| x == f && **c == ClassLabel::Misinformation).count();
            assert_eq!(pos, 6);
        }
    }

    #[test]
    fn identical_months_give_identical_metrics() {
        let (fm, labels) = fixture(&["2022-10", "2022-11", "2022-12"]);
        let cfg = ModelConfig { rf_n_trees: 10, ..Default::default() };
        let r = cross_validate(&cfg, &fm, &labels, "2022-10".parse().unwrap()).unwrap();
        assert_eq!(r.months.len(), 3);
        assert_eq!(r.months[0].folds, r.months[2].folds);
        assert_eq!(r.months[0].folds.len(), 5);
        let mut out = Vec::new();
        write_metrics_csv(&mut out, &[r]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("model,2022-10:accuracy,2022-10:precision,2022-10:recall,2022-11:accuracy"));
        assert!(text.lines().nth(1).unwrap().starts_with("random_forest,"));
    }

    #[test]
    fn missing_train_month() {
        let (fm, labels) = fixture(&["2022-10"]);
        let r = cross_validate(&ModelConfig::default(), &fm, &labels, "2023-01".parse().unwrap());
        assert!(matches!(r, Err(MlError::MissingMonth(_))));
    }
}
