//! Frames to similarity series in one call.

use crate::can_log::{windowize_with, CanFrame, Label, Windowing};
use crate::msg_graph::{compute_msg, MessageSequenceGraph};
use crate::similarity::{similarity_series, Metric, SimilaritySeries};
use crate::Error;

#[derive(Clone, Debug)]
pub struct SeriesRun {
    pub series: SimilaritySeries,
    pub graphs: Vec<MessageSequenceGraph>,
    /// Frames past the last full window.
    pub discarded: usize,
}

/// Builds the graphs of every window. Fewer than two windows yields an
/// empty series rather than an error, with `discarded` explaining why.
pub fn similarity_from_frames(
    frames: &[CanFrame],
    labels: Option<&[Label]>,
    windowing: Windowing,
    metric: Metric,
) -> Result<SeriesRun, Error> {
    let windowed = windowize_with(frames, labels, windowing)?;
    let graphs = windowed.windows.iter().map(compute_msg).collect::<Result<Vec<_>, _>>()?;
    let series = if graphs.len() < 2 {
        SimilaritySeries {
            metric,
            window_size: windowing.size,
            values: Vec::new(),
            degenerate: Vec::new(),
            labels: labels.map(|_| Vec::new()),
        }
    } else {
        let window_labels: Option<Vec<Label>> =
            labels.map(|_| windowed.windows.iter().map(|w| w.label.expect("labelled windows")).collect());
        similarity_series(&graphs, metric, windowing.size, window_labels.as_deref())?
    };
    Ok(SeriesRun { series, graphs, discarded: windowed.discarded })
}
