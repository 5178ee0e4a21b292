//! Thresholded binary-classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Tallies one scored pair. Predicted positive iff `score > threshold`.
    #[inline]
    pub fn record(&mut self, score: f64, label: bool, threshold: f64) {
        match (score > threshold, label) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} scores", scores.len()),
            format!("{} labels", labels.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut counts = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        counts.record(s, l, threshold);
    }
    Ok(counts)
}

/// Precision, recall and F1. Any zero denominator yields 0.
pub fn f1(counts: ConfusionCounts) -> MetricsReport {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsReport {
        precision,
        recall,
        f1,
        counts,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean and population standard deviation.
    pub fn of(values: &[f64]) -> Result<MeanStd> {
        if values.is_empty() {
            return Err(Error::Config("cannot aggregate zero values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(MeanStd { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub runs: usize,
}

/// Mean and population std of each metric across repeated runs.
pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    let pick = |f: fn(&MetricsReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Ok(AggregateReport {
        precision: MeanStd::of(&pick(|r| r.precision))?,
        recall: MeanStd::of(&pick(|r| r.recall))?,
        f1: MeanStd::of(&pick(|r| r.f1))?,
        runs: reports.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn simple_confusion() {
        let c = confusion(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!(c, counts(1, 0, 0, 1));
    }

    #[test]
    fn threshold_is_strict() {
        let c = confusion(&[0.5], &[true], 0.5).unwrap();
        assert_eq!(c, counts(0, 0, 1, 0));
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion(&[0.1], &[], 0.5), Err(Error::Shape { .. })));
        assert!(confusion(&[], &[], 0.5).is_err());
        assert!(confusion(&[0.1], &[true], 1.0).is_err());
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1(counts(3, 0, 0, 5)).f1, 1.0);
        let r = f1(counts(1, 1, 1, 0));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert_eq!(f1(counts(0, 4, 2, 1)).f1, 0.0);
        assert_eq!(f1(counts(0, 0, 0, 9)).f1, 0.0);
    }

    #[test]
    fn aggregate_cases() {
        let r = f1(counts(2, 1, 1, 3));
        let a = aggregate(&[r]).unwrap();
        assert_eq!(a.f1.mean, r.f1);
        assert_eq!(a.f1.std, 0.0);

        let mk = |f| MetricsReport {
            precision: 0.0,
            recall: 0.0,
            f1: f,
            counts: ConfusionCounts::default(),
        };
        let a = aggregate(&[mk(0.4), mk(0.6)]).unwrap();
        assert!((a.f1.mean - 0.5).abs() < 1e-15);
        assert!((a.f1.std - 0.1).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregate_matches_direct_sums() {
        let rs = [f1(counts(5, 2, 3, 10)), f1(counts(1, 7, 0, 2)), f1(counts(4, 4, 4, 4))];
        let a = aggregate(&rs).unwrap();
        let xs: Vec<f64> = rs.iter().map(|r| r.recall).collect();
        let mean = (xs[0] + xs[1] + xs[2]) / 3.0;
        let std = (((xs[0] - mean).powi(2) + (xs[1] - mean).powi(2) + (xs[2] - mean).powi(2)) / 3.0).sqrt();
        assert!((a.recall.mean - mean).abs() < 1e-12);
        assert!((a.recall.std - std).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metrics_bounded(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let r = f1(counts(tp, fp, fn_, tn));
            for v in [r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn fp_to_tn_never_hurts(tp in 0u64..50, fp in 1u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            let before = f1(counts(tp, fp, fn_, tn)).f1;
            let after = f1(counts(tp, fp - 1, fn_, tn + 1)).f1;
            prop_assert!(after >= before);
        }

        #[test]
        fn permutation_invariant(pairs in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..200), seed in any::<u64>()) {
            let (s, l): (Vec<f64>, Vec<bool>) = pairs.iter().cloned().unzip();
            let mut shuffled = pairs.clone();
            crate::nn::Rng::new(seed).shuffle(&mut shuffled);
            let (s2, l2): (Vec<f64>, Vec<bool>) = shuffled.into_iter().unzip();
            prop_assert_eq!(confusion(&s, &l, 0.5).unwrap(), confusion(&s2, &l2, 0.5).unwrap());
        }
    }
}
