//! Injection-attack detection for CAN bus logs without knowledge of which
//! ECU owns which identifier.
//!
//! The log is cut into windows of consecutive frames. Each window becomes a
//! [`MessageSequenceGraph`] counting which id follows which, and consecutive
//! graphs are compared with cosine similarity or Pearson correlation. Injected
//! frames break the usual ordering, which shows up as a drop in similarity.
//! Three detectors consume the resulting series: a fixed threshold, a Bayesian
//! change-point model and a small LSTM classifier.
//!
//! ```
//! use msgraph_core::{can_log::Windowing, pipeline, similarity::Metric};
//! use msgraph_core::inject::{generate_benign, SyntheticTrafficSpec};
//!
//! let frames = generate_benign(&SyntheticTrafficSpec::cyclic(10, 0.05, 1_000, 1)).unwrap();
//! let run = pipeline::similarity_from_frames(&frames, None, Windowing::disjoint(100), Metric::Pearson).unwrap();
//! assert_eq!(run.series.len(), 9);
//! ```

pub mod can_log;
pub mod detect;
pub mod eval;
pub mod inject;
pub mod msg_graph;
pub mod numeric;
pub mod pipeline;
pub mod seq_model;
pub mod similarity;
pub mod special;

pub use can_log::{CanFrame, FrameWindow, Label, Pid, Timestamp};
pub use detect::{ChangePointEstimate, CpdConfig, ThresholdVerdicts};
pub use eval::{DetectionReport, Detector, Verdict};
pub use msg_graph::MessageSequenceGraph;
pub use similarity::{Metric, SimilaritySeries};

use thiserror::Error;

/// Any error the library can produce.
#[derive(Error, Debug)]
pub enum Error {
    #[error(transparent)]
    Log(#[from] can_log::LogError),
    #[error(transparent)]
    Graph(#[from] msg_graph::GraphError),
    #[error(transparent)]
    Similarity(#[from] similarity::SimilarityError),
    #[error(transparent)]
    SeriesCsv(#[from] similarity::SeriesCsvError),
    #[error(transparent)]
    Threshold(#[from] detect::ThresholdError),
    #[error(transparent)]
    Cpd(#[from] detect::CpdError),
    #[error(transparent)]
    Model(#[from] seq_model::ModelError),
    #[error(transparent)]
    Inject(#[from] inject::InjectError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}
