//! Similarity of consecutive message-sequence graphs.
//!
//! `values[t]` scores the pair of graphs `(t, t + 1)`.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can_log::Label;
use crate::msg_graph::{edge_vectors, MessageSequenceGraph};
use crate::numeric;

#[derive(Error, Debug, PartialEq)]
pub enum SimilarityError {
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vectors are empty")]
    Empty,
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("correlation is undefined for a constant vector")]
    ConstantVector,
    #[error("need at least 2 graphs, got {0}")]
    TooFewGraphs(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Pearson,
}

impl Metric {
    pub fn score(self, x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
        match self {
            Metric::Cosine => cosine_similarity(x, y),
            Metric::Pearson => pearson_correlation(x, y),
        }
    }

    /// Inclusive range the metric can take on count vectors.
    pub fn range(self) -> (f64, f64) {
        match self {
            Metric::Cosine => (0.0, 1.0),
            Metric::Pearson => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Pearson => "pearson",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "pearson" => Ok(Metric::Pearson),
            other => Err(format!("unknown metric `{other}` (expected cosine or pearson)")),
        }
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), SimilarityError> {
    if x.len() != y.len() {
        return Err(SimilarityError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(SimilarityError::Empty);
    }
    Ok(())
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    check_lengths(x, y)?;
    let dot = numeric::sum(x.iter().zip(y).map(|(a, b)| a * b));
    let nx = numeric::sum(x.iter().map(|a| a * a)).sqrt();
    let ny = numeric::sum(y.iter().map(|b| b * b)).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    check_lengths(x, y)?;
    let mx = numeric::mean(x);
    let my = numeric::mean(y);
    let cov = numeric::sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sx = numeric::sum(x.iter().map(|a| (a - mx) * (a - mx))).sqrt();
    let sy = numeric::sum(y.iter().map(|b| (b - my) * (b - my))).sqrt();
    if sx == 0.0 || sy == 0.0 {
        return Err(SimilarityError::ConstantVector);
    }
    Ok((cov / (sx * sy)).clamp(-1.0, 1.0))
}

/// Per-pair similarity values for one log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySeries {
    pub metric: Metric,
    pub window_size: usize,
    pub values: Vec<f64>,
    /// Pairs whose score was undefined and recorded as 0.0.
    pub degenerate: Vec<bool>,
    /// A pair is injected if either of its windows is.
    pub labels: Option<Vec<Label>>,
}

impl SimilaritySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values whose score was defined, split by label. Unlabelled series
    /// put everything in the first bucket.
    pub fn split_by_label(&self) -> (Vec<f64>, Vec<f64>) {
        let mut benign = Vec::new();
        let mut injected = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            if self.degenerate[i] {
                continue;
            }
            match self.labels.as_ref().map(|l| l[i]) {
                Some(Label::Injected) => injected.push(v),
                _ => benign.push(v),
            }
        }
        (benign, injected)
    }

    /// Writes `pair_index,metric,value,label,degenerate_flag` rows.
    pub fn write_csv<W: io::Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["pair_index", "metric", "value", "label", "degenerate_flag"])?;
        for (i, v) in self.values.iter().enumerate() {
            let label = self.labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
            w.write_record([
                i.to_string(),
                self.metric.to_string(),
                v.to_string(),
                label,
                u8::from(self.degenerate[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). The window
    /// size is not part of the file and must be supplied.
    pub fn read_csv<R: io::Read>(source: R, window_size: usize) -> Result<Self, SeriesCsvError> {
        #[derive(Deserialize)]
        struct Row {
            pair_index: usize,
            metric: String,
            value: f64,
            label: String,
            degenerate_flag: u8,
        }
        let mut rdr = csv::Reader::from_reader(source);
        let mut metric = None;
        let mut values = Vec::new();
        let mut degenerate = Vec::new();
        let mut labels = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let bad = |msg: String| SeriesCsvError::Invalid { row: i + 1, msg };
            if row.pair_index != i {
                return Err(bad(format!("pair_index {} out of sequence", row.pair_index)));
            }
            let m: Metric = row.metric.parse().map_err(bad)?;
            if *metric.get_or_insert(m) != m {
                return Err(bad("mixed metrics in one series".into()));
            }
            values.push(row.value);
            degenerate.push(row.degenerate_flag != 0);
            labels.push(match row.label.as_str() {
                "" => None,
                "benign" | "0" => Some(Label::Benign),
                "injected" | "1" => Some(Label::Injected),
                other => return Err(bad(format!("unknown label `{other}`"))),
            });
        }
        let metric = metric.ok_or(SeriesCsvError::Invalid { row: 0, msg: "no rows".into() })?;
        let labels = if labels.iter().all(Option::is_some) {
            Some(labels.into_iter().flatten().collect())
        } else if labels.iter().all(Option::is_none) {
            None
        } else {
            return Err(SeriesCsvError::Invalid { row: 0, msg: "labels present on some rows only".into() });
        };
        Ok(SimilaritySeries { metric, window_size, values, degenerate, labels })
    }
}

#[derive(Error, Debug)]
pub enum SeriesCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("similarity csv row {row}: {msg}")]
    Invalid { row: usize, msg: String },
}

/// Scores every consecutive pair of graphs.
///
/// `window_labels`, when given, must have one entry per graph.
pub fn similarity_series(
    graphs: &[MessageSequenceGraph],
    metric: Metric,
    window_size: usize,
    window_labels: Option<&[Label]>,
) -> Result<SimilaritySeries, SimilarityError> {
    if graphs.len() < 2 {
        return Err(SimilarityError::TooFewGraphs(graphs.len()));
    }
    if let Some(l) = window_labels {
        if l.len() != graphs.len() {
            return Err(SimilarityError::LengthMismatch(graphs.len(), l.len()));
        }
    }
    let mut values = Vec::with_capacity(graphs.len() - 1);
    let mut degenerate = Vec::with_capacity(graphs.len() - 1);
    for pair in graphs.windows(2) {
        let (x, y) = edge_vectors(&pair[0], &pair[1]);
        match metric.score(&x, &y) {
            Ok(v) => {
                values.push(v);
                degenerate.push(false);
            }
            Err(SimilarityError::ConstantVector) => {
                values.push(0.0);
                degenerate.push(true);
            }
            Err(e) => return Err(e),
        }
    }
    let labels = window_labels.map(|l| {
        l.windows(2)
            .map(|p| if p[0].is_injected() || p[1].is_injected() { Label::Injected } else { Label::Benign })
            .collect()
    });
    Ok(SimilaritySeries { metric, window_size, values, degenerate, labels })
}
