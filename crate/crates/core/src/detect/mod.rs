//! Detectors that turn a similarity series into verdicts.

pub mod cpd;
pub mod threshold;

pub use cpd::{
    change_point_detect, change_point_detect_with_diagnostics, strength_of_change, ChangePointEstimate, CpdConfig,
    CpdDiagnostics, CpdError,
};
pub use threshold::{
    calibrate_threshold, threshold_detect, Calibration, ThresholdError, ThresholdVerdicts, DEFAULT_THRESHOLD,
};
