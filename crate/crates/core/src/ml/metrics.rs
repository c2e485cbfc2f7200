use serde::{Deserialize, Serialize};

use super::{ClassLabel, MlError};

/// Accuracy over all classes; precision and recall for `positive_class`.
/// Precision is `None` with no positive predictions, recall `None` with no
/// positive rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub positive_class: ClassLabel,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub correct: u64,
    pub total: u64,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn evaluate(y_true: &[ClassLabel], y_pred: &[ClassLabel], positive_class: ClassLabel) -> Result<Metrics, MlError> {
    if y_true.len() != y_pred.len() {
        return Err(MlError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MlError::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut tn, mut correct) = (0, 0, 0, 0, 0);
    for (t, p) in y_true.iter().zip(y_pred) {
        correct += u64::from(t == p);
        match (*t == positive_class, *p == positive_class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let total = y_true.len() as u64;
    Ok(Metrics {
        positive_class,
        accuracy: correct as f64 / total as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
        tn,
        correct,
        total,
    })
}

/// Binary view of scored rows: positive iff `score > threshold`.
pub fn evaluate_at_threshold(is_positive: &[bool], scores: &[f64], threshold: f64) -> Result<Metrics, MlError> {
    let lab = |b: bool| if b { ClassLabel::Misinformation } else { ClassLabel::NonMisinformation };
    let t: Vec<ClassLabel> = is_positive.iter().map(|&b| lab(b)).collect();
    let p: Vec<ClassLabel> = scores.iter().map(|&s| lab(s > threshold)).collect();
    evaluate(&t, &p, ClassLabel::Misinformation)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use ClassLabel::{Misinformation as M, NonMisinformation as N};

    #[test]
    fn confusion_arithmetic() {
        let t = [M, M, M, M, N, N, N, N, N, N];
        let p = [M, M, M, N, M, N, N, N, N, N];
        let m = evaluate(&t, &p, M).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 1, 1, 5));
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.75));
        assert_eq!(m.accuracy, 0.8);
    }

    #[test]
    fn perfect_and_empty_positive_predictions() {
        let t = [M, N, M];
        let m = evaluate(&t, &t, M).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (1.0, Some(1.0), Some(1.0)));
        let m = evaluate(&t, &[N, N, N], M).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert!(matches!(evaluate(&t, &[N], M), Err(MlError::LengthMismatch(3, 1))));
    }

    #[test]
    fn precision_is_not_monotone_in_threshold() {
        // A higher threshold can drop a true positive while keeping a false one.
        let pos = [false, true];
        let s = [0.8, 0.6];
        assert_eq!(evaluate_at_threshold(&pos, &s, 0.5).unwrap().precision, Some(0.5));
        assert_eq!(evaluate_at_threshold(&pos, &s, 0.7).unwrap().precision, Some(0.0));
    }

    proptest! {
        #[test]
        fn raising_threshold_is_monotone(
            rows in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..60),
            a in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pos: Vec<bool> = rows.iter().map(|r| r.0).collect();
            let s: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let ml = evaluate_at_threshold(&pos, &s, lo).unwrap();
            let mh = evaluate_at_threshold(&pos, &s, hi).unwrap();
            prop_assert!(mh.tp <= ml.tp && mh.fp <= ml.fp);
            if let (Some(rl), Some(rh)) = (ml.recall, mh.recall) {
                prop_assert!(rh <= rl);
            }
            prop_assert_eq!(mh.recall.is_some(), ml.recall.is_some());
        }
    }
}
