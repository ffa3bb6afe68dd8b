use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{Confusion, Verdict};
use crate::similarity::SimilaritySeries;

/// Cut-off used when none is calibrated.
pub const DEFAULT_THRESHOLD: f64 = 0.87;

#[derive(Error, Debug, PartialEq)]
pub enum ThresholdError {
    #[error("calibration needs labels")]
    Unlabeled,
    #[error("calibration needs both benign and injected labels")]
    SingleClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVerdicts {
    pub threshold: f64,
    pub verdicts: Vec<Verdict>,
    /// Present when the series carries labels.
    pub counts: Option<Confusion>,
}

impl ThresholdVerdicts {
    /// `pair_index,value,verdict,label` rows.
    pub fn write_csv<W: io::Write>(&self, series: &SimilaritySeries, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["pair_index", "value", "verdict", "label"])?;
        for (i, v) in self.verdicts.iter().enumerate() {
            let label = series.labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
            w.write_record([i.to_string(), series.values[i].to_string(), v.to_string(), label])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn verdict(value: f64, threshold: f64) -> Verdict {
    // Strictly below is an attack; the threshold itself is benign.
    if value < threshold {
        Verdict::Attack
    } else {
        Verdict::Benign
    }
}

/// Flags every pair whose similarity is below `threshold`.
pub fn threshold_detect(series: &SimilaritySeries, threshold: f64) -> ThresholdVerdicts {
    let verdicts: Vec<Verdict> = series.values.iter().map(|&v| verdict(v, threshold)).collect();
    let counts = series
        .labels
        .as_ref()
        .map(|l| Confusion::tally(&verdicts, l).expect("series labels are aligned with values"));
    ThresholdVerdicts { threshold, verdicts, counts }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Accuracy of a threshold against the series labels.
pub fn threshold_accuracy(series: &SimilaritySeries, threshold: f64) -> Option<f64> {
    let labels = series.labels.as_ref()?;
    let correct = series
        .values
        .iter()
        .zip(labels)
        .filter(|(&v, l)| verdict(v, threshold).is_attack() == l.is_injected())
        .count();
    Some(correct as f64 / labels.len() as f64)
}

/// Candidate thresholds: the 0.00..=1.00 grid in steps of 0.01 plus the
/// midpoints between consecutive distinct values. Candidates equal to an
/// observed value are dropped: they classify exactly like the midpoint just
/// below them but sit on a data point.
pub fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let mut out: Vec<f64> = (0..=100).map(|i| f64::from(i) / 100.0).collect();
    out.extend(sorted.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    out.retain(|c| sorted.binary_search_by(|v| v.total_cmp(c)).is_err());
    if let Some(&lowest) = sorted.first() {
        // Keep an "everything benign" option.
        if out.iter().all(|&c| c > lowest) {
            out.push(lowest - 0.01);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Picks the accuracy-maximizing threshold, preferring the larger one on ties.
pub fn calibrate_threshold(series: &SimilaritySeries) -> Result<Calibration, ThresholdError> {
    let labels = series.labels.as_ref().ok_or(ThresholdError::Unlabeled)?;
    let injected = labels.iter().filter(|l| l.is_injected()).count();
    if injected == 0 || injected == labels.len() {
        return Err(ThresholdError::SingleClass);
    }

    // Sweep candidates in ascending order keeping a running tally: as the
    // threshold passes a value, that value's verdict flips to attack.
    let mut pairs: Vec<(f64, bool)> = series.values.iter().copied().zip(labels.iter().map(|l| l.is_injected())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len() as f64;
    // Threshold below every value: all benign.
    let mut correct = labels.len() - injected;
    let mut next = 0;
    let mut best = Calibration { threshold: f64::NEG_INFINITY, accuracy: -1.0 };
    for c in candidate_thresholds(&series.values) {
        while next < pairs.len() && pairs[next].0 < c {
            if pairs[next].1 {
                correct += 1;
            } else {
                correct -= 1;
            }
            next += 1;
        }
        let acc = correct as f64 / n;
        if acc >= best.accuracy {
            best = Calibration { threshold: c, accuracy: acc };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::can_log::Label;
    use crate::similarity::Metric;
    use proptest::prelude::*;

    fn series(values: &[f64], labels: Option<&[Label]>) -> SimilaritySeries {
        SimilaritySeries {
            metric: Metric::Cosine,
            window_size: 100,
            values: values.to_vec(),
            degenerate: vec![false; values.len()],
            labels: labels.map(<[Label]>::to_vec),
        }
    }

    const B: Label = Label::Benign;
    const I: Label = Label::Injected;

    #[test]
    fn verdicts_use_strict_less_than() {
        let v = threshold_detect(&series(&[0.95, 0.80], None), DEFAULT_THRESHOLD);
        assert_eq!(v.verdicts, [Verdict::Benign, Verdict::Attack]);
        assert!(v.counts.is_none());
        let v = threshold_detect(&series(&[0.87], None), 0.87);
        assert_eq!(v.verdicts, [Verdict::Benign]);
    }

    #[test]
    fn counts_filled_when_labeled() {
        let v = threshold_detect(&series(&[0.95, 0.80, 0.5], Some(&[B, I, B])), 0.87);
        assert_eq!(v.counts, Some(Confusion { tp: 1, fp: 1, tn: 1, fn_: 0 }));
    }

    #[test]
    fn separable_classes_prefer_larger_threshold() {
        let s = series(&[0.95, 0.95, 0.60, 0.95, 0.60], Some(&[B, B, I, B, I]));
        let c = calibrate_threshold(&s).unwrap();
        assert_eq!(c.accuracy, 1.0);
        // 0.95 itself is a data point, so the largest candidate below it wins.
        assert_eq!(c.threshold, 0.94);
    }

    // Independent re-check: evaluate every candidate from scratch.
    fn brute_force(s: &SimilaritySeries) -> Calibration {
        let mut best = Calibration { threshold: f64::NAN, accuracy: -1.0 };
        for c in candidate_thresholds(&s.values) {
            let acc = threshold_accuracy(s, c).unwrap();
            if acc >= best.accuracy {
                best = Calibration { threshold: c, accuracy: acc };
            }
        }
        best
    }

    #[test]
    fn overlapping_classes() {
        // One benign value (0.70) sits below one injected value (0.75).
        let s = series(&[0.90, 0.70, 0.92, 0.60, 0.75, 0.55], Some(&[B, B, B, I, I, I]));
        let c = calibrate_threshold(&s).unwrap();
        assert_eq!(c, brute_force(&s));
        assert!((c.accuracy - 5.0 / 6.0).abs() < 1e-15);
        // Best cut lies between 0.75 and 0.90: the midpoint 0.825 ties with grid
        // points up to 0.89, and the tie goes to the largest.
        assert_eq!(c.threshold, 0.89);
    }

    #[test]
    fn single_class_is_rejected() {
        assert_eq!(calibrate_threshold(&series(&[0.9, 0.8], Some(&[B, B]))), Err(ThresholdError::SingleClass));
        assert_eq!(calibrate_threshold(&series(&[0.9, 0.8], None)), Err(ThresholdError::Unlabeled));
    }

    #[test]
    fn csv_export() {
        let s = series(&[0.95, 0.80], Some(&[B, I]));
        let v = threshold_detect(&s, 0.87);
        let mut buf = Vec::new();
        v.write_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "pair_index,value,verdict,label\n0,0.95,benign,benign\n1,0.8,attack,injected\n");
    }

    proptest! {
        #[test]
        fn calibration_is_optimal(raw in proptest::collection::vec((-100i32..=100, any::<bool>()), 2..80)) {
            let values: Vec<f64> = raw.iter().map(|r| f64::from(r.0) / 100.0).collect();
            let labels: Vec<Label> = raw.iter().map(|r| if r.1 { I } else { B }).collect();
            let s = series(&values, Some(&labels));
            match calibrate_threshold(&s) {
                Ok(c) => {
                    prop_assert_eq!(c, brute_force(&s));
                    for i in 0..=100 {
                        let g = f64::from(i) / 100.0;
                        prop_assert!(c.accuracy >= threshold_accuracy(&s, g).unwrap());
                    }
                }
                Err(e) => prop_assert_eq!(e, ThresholdError::SingleClass),
            }
        }

        #[test]
        fn raising_threshold_never_clears_attacks(values in proptest::collection::vec(-1.0f64..=1.0, 1..50), lo in -1.0f64..1.0, d in 0.0f64..1.0) {
            let s = series(&values, None);
            let low = threshold_detect(&s, lo);
            let high = threshold_detect(&s, lo + d);
            for (a, b) in low.verdicts.iter().zip(&high.verdicts) {
                prop_assert!(!a.is_attack() || b.is_attack());
            }
        }
    }
}
