use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::can_log::Label;
use crate::similarity::{Metric, SimilaritySeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `lookback * features` values, timestep-major.
    pub inputs: Vec<f64>,
    /// 1 for injected.
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequenceDataset {
    pub lookback: usize,
    pub features: usize,
    pub samples: Vec<Sample>,
    /// Metrics feeding each feature column.
    pub metrics: Vec<Metric>,
    pub window_size: usize,
    pub provenance: String,
}

impl LabeledSequenceDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Chronological split: the first `fraction` of samples train, the rest test.
    pub fn split(&self, fraction: f64) -> (LabeledSequenceDataset, LabeledSequenceDataset) {
        let cut = ((self.samples.len() as f64) * fraction).round() as usize;
        let cut = cut.min(self.samples.len());
        let part = |samples: &[Sample], tag: &str| LabeledSequenceDataset {
            samples: samples.to_vec(),
            provenance: format!("{} [{tag}]", self.provenance),
            metrics: self.metrics.clone(),
            ..*self
        };
        (part(&self.samples[..cut], "train"), part(&self.samples[cut..], "test"))
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

// Aligned values and per-step injected flags for a group of series.
fn stack(group: &[&SimilaritySeries], default_label: Label) -> Result<(Vec<Vec<f64>>, Vec<bool>), ModelError> {
    let first = group.first().ok_or(ModelError::EmptyDataset)?;
    let len = first.len();
    if group.iter().any(|s| s.window_size != first.window_size) {
        return Err(ModelError::WindowSizeMismatch);
    }
    if group.iter().any(|s| s.len() != len) {
        return Err(ModelError::MetricMismatch);
    }
    let rows = (0..len).map(|t| group.iter().map(|s| s.values[t]).collect()).collect();
    let injected = (0..len)
        .map(|t| {
            group.iter().any(|s| s.labels.as_ref().map_or(default_label, |l| l[t]).is_injected())
        })
        .collect();
    Ok((rows, injected))
}

fn slide(rows: &[Vec<f64>], injected: &[bool], lookback: usize) -> Result<Vec<Sample>, ModelError> {
    if rows.len() < lookback || lookback == 0 {
        return Err(ModelError::TooShort { len: rows.len(), lookback });
    }
    Ok((0..=rows.len() - lookback)
        .map(|start| Sample {
            inputs: rows[start..start + lookback].iter().flatten().copied().collect(),
            label: u8::from(injected[start + lookback - 1]),
        })
        .collect())
}

/// Appends an injected-traffic series to a benign one and slides a window
/// of `lookback` values over the result. A sample is labelled injected when
/// its last value is.
///
/// Series without labels count as entirely benign (first argument) or
/// entirely injected (second argument).
pub fn build_constructed_dataset(
    benign: &SimilaritySeries,
    injected: &SimilaritySeries,
    lookback: usize,
) -> Result<LabeledSequenceDataset, ModelError> {
    build_constructed_dataset_multi(&[benign], &[injected], lookback)
}

/// Multi-feature version: one feature column per series in each group.
pub fn build_constructed_dataset_multi(
    benign: &[&SimilaritySeries],
    injected: &[&SimilaritySeries],
    lookback: usize,
) -> Result<LabeledSequenceDataset, ModelError> {
    if benign.len() != injected.len() || benign.iter().zip(injected).any(|(a, b)| a.metric != b.metric) {
        return Err(ModelError::MetricMismatch);
    }
    if benign.iter().chain(injected).any(|s| s.window_size != benign[0].window_size) {
        return Err(ModelError::WindowSizeMismatch);
    }
    let (mut rows, mut flags) = stack(benign, Label::Benign)?;
    let (rows_i, flags_i) = stack(injected, Label::Injected)?;
    rows.extend(rows_i);
    flags.extend(flags_i);
    let samples = slide(&rows, &flags, lookback)?;
    let metrics: Vec<Metric> = benign.iter().map(|s| s.metric).collect();
    Ok(LabeledSequenceDataset {
        lookback,
        features: benign.len(),
        samples,
        window_size: benign[0].window_size,
        provenance: format!(
            "constructed: {} benign + {} injected values, metrics {:?}, window {}",
            benign[0].len(),
            injected[0].len(),
            metrics,
            benign[0].window_size
        ),
        metrics,
    })
}

/// Samples from a single log; unlabelled series get label 0 throughout.
pub fn sequences_from_series(series: &[&SimilaritySeries], lookback: usize) -> Result<LabeledSequenceDataset, ModelError> {
    let (rows, flags) = stack(series, Label::Benign)?;
    let samples = slide(&rows, &flags, lookback)?;
    Ok(LabeledSequenceDataset {
        lookback,
        features: series.len(),
        samples,
        metrics: series.iter().map(|s| s.metric).collect(),
        window_size: series[0].window_size,
        provenance: format!("single log, {} values", rows.len()),
    })
}
