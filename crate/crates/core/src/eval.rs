//! Detection scoring and distribution comparison.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can_log::Label;
use crate::numeric;
use crate::similarity::Metric;
use crate::special::student_t_two_sided;

/// How similarity pairs are labelled for scoring.
pub const PAIR_LABELING: &str = "a similarity pair is injected if either of its two windows contains an injected frame";

#[derive(Error, Debug, PartialEq)]
pub enum EvalError {
    #[error("{verdicts} verdicts but {labels} labels")]
    LengthMismatch { verdicts: usize, labels: usize },
    #[error("need at least 2 values in each sample (got {0} and {1})")]
    TooFewSamples(usize, usize),
    #[error("a sample has zero variance")]
    ZeroVariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Benign,
    Attack,
}

impl Verdict {
    pub fn is_attack(self) -> bool {
        self == Verdict::Attack
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Benign => "benign",
            Verdict::Attack => "attack",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Threshold,
    Cpd,
    Lstm,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Threshold => "threshold",
            Detector::Cpd => "cpd",
            Detector::Lstm => "lstm",
        })
    }
}

/// Confusion-matrix tallies; "positive" means attack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn tally(verdicts: &[Verdict], labels: &[Label]) -> Result<Self, EvalError> {
        if verdicts.len() != labels.len() {
            return Err(EvalError::LengthMismatch { verdicts: verdicts.len(), labels: labels.len() });
        }
        let mut c = Confusion::default();
        for (v, l) in verdicts.iter().zip(labels) {
            match (v.is_attack(), l.is_injected()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `fp / (fp + tn)`, or `None` when there are no benign labels.
    pub fn false_positive_rate(&self) -> Option<f64> {
        let negatives = self.fp + self.tn;
        (negatives > 0).then(|| self.fp as f64 / negatives as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detector: Detector,
    pub metric: Option<Metric>,
    /// Echo of the configuration that produced the verdicts.
    pub parameters: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    pub labels: Vec<Label>,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub total: usize,
    pub accuracy: f64,
    /// NaN (null in JSON) when there are no benign labels; see `fpr_undefined`.
    pub false_positive_rate: f64,
    pub fpr_undefined: bool,
    pub labeling: String,
}

impl DetectionReport {
    pub fn summary_line(&self) -> String {
        let fpr = if self.fpr_undefined {
            "n/a (no benign labels)".to_string()
        } else {
            format!("{:.2}%", self.false_positive_rate * 100.0)
        };
        format!(
            "{}{}: accuracy {:.2}% over {} verdicts (tp={} fp={} tn={} fn={}), FPR {}",
            self.detector,
            self.metric.map(|m| format!("/{m}")).unwrap_or_default(),
            self.accuracy * 100.0,
            self.total,
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn_,
            fpr
        )
    }
}

/// Scores verdicts against ground truth.
pub fn score(
    verdicts: &[Verdict],
    labels: &[Label],
    detector: Detector,
    metric: Option<Metric>,
    parameters: serde_json::Value,
) -> Result<DetectionReport, EvalError> {
    let confusion = Confusion::tally(verdicts, labels)?;
    let fpr = confusion.false_positive_rate();
    Ok(DetectionReport {
        detector,
        metric,
        parameters,
        verdicts: verdicts.to_vec(),
        labels: labels.to_vec(),
        confusion,
        total: confusion.total(),
        accuracy: if confusion.total() == 0 { f64::NAN } else { confusion.accuracy() },
        false_positive_rate: fpr.unwrap_or(f64::NAN),
        fpr_undefined: fpr.is_none(),
        labeling: PAIR_LABELING.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

impl WelchTest {
    pub fn p_display(&self) -> String {
        format_p(self.p_value)
    }
}

/// Three significant digits in scientific notation, e.g. `1.12e-74`.
pub fn format_p(p: f64) -> String {
    format!("{p:.2e}")
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::TooFewSamples(a.len(), b.len()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (numeric::sample_variance(a), numeric::sample_variance(b));
    if va == 0.0 || vb == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let (sa, sb) = (va / na, vb / nb);
    let se = (sa + sb).sqrt();
    let t = (numeric::mean(a) - numeric::mean(b)) / se;
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest { t, df, p_value: student_t_two_sided(t, df) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    use statrs::distribution::{ContinuousCDF, StudentsT};
    const ATK: Verdict = Verdict::Attack;
    const OK: Verdict = Verdict::Benign;
    const INJ: Label = Label::Injected;
    const BEN: Label = Label::Benign;

    fn report(v: &[Verdict], l: &[Label]) -> DetectionReport {
        score(v, l, Detector::Threshold, None, serde_json::Value::Null).unwrap()
    }

    #[test]
    fn perfect_and_inverted() {
        let r = report(&[ATK, OK, ATK], &[INJ, BEN, INJ]);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.false_positive_rate, 0.0);
        let r = report(&[ATK, ATK], &[BEN, BEN]);
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.false_positive_rate, 1.0);
    }

    #[test]
    fn no_negatives_flags_fpr() {
        let mut v = vec![ATK; 97];
        v.extend([OK; 3]);
        let r = report(&v, &[INJ; 100]);
        assert_eq!((r.confusion.tp, r.confusion.fn_, r.confusion.fp, r.confusion.tn), (97, 3, 0, 0));
        assert!((r.accuracy - 0.97).abs() < 1e-15);
        assert!(r.fpr_undefined);
        assert!(r.false_positive_rate.is_nan());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["false_positive_rate"].is_null());
        assert_eq!(json["fn"], 3);

        // With fp = 3 there *are* benign labels, so the rate is defined.
        let v = vec![ATK; 100];
        let mut l = vec![INJ; 97];
        l.extend([BEN; 3]);
        let r = report(&v, &l);
        assert_eq!((r.confusion.tp, r.confusion.fp), (97, 3));
        assert!((r.accuracy - 0.97).abs() < 1e-15);
        assert_eq!(r.false_positive_rate, 1.0);
        assert!(!r.fpr_undefined);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            score(&[ATK], &[], Detector::Cpd, None, serde_json::Value::Null),
            Err(EvalError::LengthMismatch { verdicts: 1, labels: 0 })
        );
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.5, 4.0, 3.3];
        let w = welch_t_test(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.p_value, 1.0);
    }

    #[test]
    fn textbook_oracle() {
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 3.0, 100.0];
        // Hand evaluation: mean_a = 2, var_a = 1; mean_b = 26.5, var_b = 7205 / 3
        let (ma, va, mb, vb) = (2.0f64, 1.0f64, 26.5f64, 7205.0f64 / 3.0);
        let se2 = va / 3.0 + vb / 4.0;
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / ((va / 3.0).powi(2) / 2.0 + (vb / 4.0).powi(2) / 3.0);
        let p = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());

        let w = welch_t_test(&a, &b).unwrap();
        assert!((w.t - t).abs() < 1e-10, "{} vs {t}", w.t);
        assert!((w.df - df).abs() < 1e-10);
        assert!((w.p_value - p).abs() < 1e-10, "{} vs {p}", w.p_value);
    }

    #[test]
    fn well_separated_normals() {
        let mut rng = StdRng::seed_from_u64(11);
        let a: Vec<f64> = Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(1000).collect();
        let b: Vec<f64> = Normal::new(5.0, 1.0).unwrap().sample_iter(&mut rng).take(1000).collect();
        let w = welch_t_test(&a, &b).unwrap();
        assert!(w.t < -100.0);
        assert!(w.p_value < 1e-100);
    }

    #[test]
    fn errors() {
        assert_eq!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(EvalError::TooFewSamples(1, 2)));
        assert_eq!(welch_t_test(&[1.0, 1.0], &[1.0, 2.0]), Err(EvalError::ZeroVariance));
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(1.1234e-74), "1.12e-74");
        assert_eq!(format_p(0.5), "5.00e-1");
    }

    proptest! {
        #[test]
        fn antisymmetry_and_location(
            a in proptest::collection::vec(-50.0f64..50.0, 2..30),
            b in proptest::collection::vec(-50.0f64..50.0, 2..30),
            c in -1000.0f64..1000.0,
        ) {
            let Ok(ab) = welch_t_test(&a, &b) else { return Ok(()) };
            let ba = welch_t_test(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() <= 1e-12 * ab.t.abs().max(1.0));
            prop_assert!((ab.p_value - ba.p_value).abs() <= 1e-12);

            let a2: Vec<f64> = a.iter().map(|v| v + c).collect();
            let b2: Vec<f64> = b.iter().map(|v| v + c).collect();
            let moved = welch_t_test(&a2, &b2).unwrap();
            prop_assert!((moved.t - ab.t).abs() <= 1e-10 * ab.t.abs().max(1.0));
            prop_assert!((moved.p_value - ab.p_value).abs() <= 1e-10);
        }

        #[test]
        fn score_is_permutation_equivariant(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..50), rot in 0usize..50) {
            let v: Vec<Verdict> = pairs.iter().map(|p| if p.0 { ATK } else { OK }).collect();
            let l: Vec<Label> = pairs.iter().map(|p| if p.1 { INJ } else { BEN }).collect();
            let r = report(&v, &l);
            let k = rot % v.len();
            let (mut v2, mut l2) = (v.clone(), l.clone());
            v2.rotate_left(k);
            l2.rotate_left(k);
            let r2 = report(&v2, &l2);
            prop_assert_eq!(r.confusion, r2.confusion);
            prop_assert_eq!(r.accuracy.to_bits(), r2.accuracy.to_bits());
            prop_assert_eq!(r.false_positive_rate.to_bits(), r2.false_positive_rate.to_bits());
            prop_assert_eq!(r.confusion.total(), v.len());
        }
    }
}
