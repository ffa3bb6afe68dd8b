//! Synthetic benign traffic and fabricated-frame injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can_log::{CanFrame, Label, Pid, Timestamp};

#[derive(Error, Debug, PartialEq)]
pub enum InjectError {
    #[error("bad transition matrix: {0}")]
    BadTransitionMatrix(String),
    #[error("invalid traffic spec: {0}")]
    InvalidSpec(String),
    #[error("injection interval {start}..{end} does not fit a log of {len} frames")]
    IntervalOutOfRange { start: usize, end: usize, len: usize },
    #[error("injection rate must be at least 1")]
    ZeroRate,
    #[error("injected payload of {0} bytes exceeds 8")]
    PayloadTooLong(usize),
}

const ROW_TOLERANCE: f64 = 1e-12;

/// First-order Markov model of benign bus traffic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrafficSpec {
    pub pids: Vec<Pid>,
    /// Row-stochastic; `transitions[i][j]` is P(next = pids[j] | current = pids[i]).
    pub transitions: Vec<Vec<f64>>,
    /// Mean seconds between frames.
    pub inter_arrival: f64,
    pub length: usize,
    pub seed: u64,
    pub bus: String,
    pub start_time: Timestamp,
}

/// Ids used by the built-in schedules.
pub const DEFAULT_PIDS: [&str; 16] = [
    "0C1", "0C9", "0F1", "130", "17D", "1A0", "1E5", "201", "215", "230", "264", "2A1", "30D", "3E9", "420", "4C1",
];

impl SyntheticTrafficSpec {
    /// A jittered round-robin schedule over `n_pids` ids: each id is followed by
    /// the next one in the cycle with probability `1 - jitter + jitter / n`,
    /// and by any other id with probability `jitter / n`.
    pub fn cyclic(n_pids: usize, jitter: f64, length: usize, seed: u64) -> Self {
        assert!((1..=DEFAULT_PIDS.len()).contains(&n_pids), "1..=16 ids supported");
        let pids = DEFAULT_PIDS[..n_pids].iter().map(|p| Pid::new(p).unwrap()).collect();
        let off = jitter / n_pids as f64;
        let transitions = (0..n_pids)
            .map(|i| {
                let mut row = vec![off; n_pids];
                row[(i + 1) % n_pids] += 1.0 - jitter;
                row
            })
            .collect();
        SyntheticTrafficSpec {
            pids,
            transitions,
            inter_arrival: 0.001,
            length,
            seed,
            bus: "can0".to_string(),
            start_time: Timestamp::from_micros(1_600_000_000_000_000),
        }
    }

    pub fn validate(&self) -> Result<(), InjectError> {
        let k = self.pids.len();
        if k == 0 {
            return Err(InjectError::BadTransitionMatrix("empty id alphabet".into()));
        }
        if self.transitions.len() != k {
            return Err(InjectError::BadTransitionMatrix(format!("{} rows for {k} ids", self.transitions.len())));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != k {
                return Err(InjectError::BadTransitionMatrix(format!("row {i} has {} entries", row.len())));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(InjectError::BadTransitionMatrix(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(InjectError::BadTransitionMatrix(format!("row {i} sums to {s}")));
            }
        }
        if self.length < 2 {
            return Err(InjectError::InvalidSpec("length must be at least 2".into()));
        }
        if !(self.inter_arrival.is_finite() && self.inter_arrival > 0.0) {
            return Err(InjectError::InvalidSpec("inter-arrival must be positive".into()));
        }
        Ok(())
    }
}

fn sample_row<R: Rng>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = j;
            acc += p;
            if u < acc {
                return j;
            }
        }
    }
    last_nonzero
}

/// Draws a benign log from the Markov model.
pub fn generate_benign(spec: &SyntheticTrafficSpec) -> Result<Vec<CanFrame>, InjectError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaps = Exp::new(1.0 / spec.inter_arrival).expect("positive rate");
    let mut state = rng.random_range(0..spec.pids.len());
    let mut ts = spec.start_time.as_micros();
    let mut frames = Vec::with_capacity(spec.length);
    for i in 0..spec.length {
        if i > 0 {
            state = sample_row(&spec.transitions[state], &mut rng);
            let gap = (gaps.sample(&mut rng) * 1e6).round() as u64;
            ts += gap.max(1);
        }
        let len = rng.random_range(0..=8);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        frames.push(CanFrame {
            timestamp: Timestamp::from_micros(ts),
            bus: spec.bus.clone(),
            pid: spec.pids[state].clone(),
            payload,
        });
    }
    Ok(frames)
}

/// Fabricated-frame insertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub target_pid: Pid,
    pub payload: Vec<u8>,
    /// One fabricated frame after every `rate` legitimate frames.
    pub rate: usize,
    /// Half-open interval of original frame ordinals.
    pub start_frame: usize,
    pub end_frame: usize,
    /// Seeds the timestamp jitter of inserted frames.
    pub seed: u64,
}

impl InjectionSpec {
    /// `0xFF 0xFF` payload, like a saturated RPM reading.
    pub fn rpm_style(target_pid: Pid, start_frame: usize, end_frame: usize) -> Self {
        InjectionSpec { target_pid, payload: vec![0xFF, 0xFF], rate: 1, start_frame, end_frame, seed: 0 }
    }

    /// `0x0F 0xFF` payload, like a fabricated speed reading.
    pub fn speed_style(target_pid: Pid, start_frame: usize, end_frame: usize) -> Self {
        InjectionSpec { payload: vec![0x0F, 0xFF], ..Self::rpm_style(target_pid, start_frame, end_frame) }
    }

    /// Number of frames the spec inserts.
    pub fn insertion_count(&self) -> usize {
        (self.end_frame - self.start_frame) / self.rate
    }
}

/// Inserts fabricated frames and returns the new log with per-frame labels.
pub fn inject_frames(frames: &[CanFrame], spec: &InjectionSpec) -> Result<(Vec<CanFrame>, Vec<Label>), InjectError> {
    let labels = vec![Label::Benign; frames.len()];
    inject_labeled(frames, &labels, spec)
}

/// Like [`inject_frames`] but keeps existing labels on the original frames.
pub fn inject_labeled(
    frames: &[CanFrame],
    labels: &[Label],
    spec: &InjectionSpec,
) -> Result<(Vec<CanFrame>, Vec<Label>), InjectError> {
    assert_eq!(frames.len(), labels.len(), "one label per frame");
    if spec.rate == 0 {
        return Err(InjectError::ZeroRate);
    }
    if spec.start_frame >= spec.end_frame || spec.end_frame > frames.len() {
        return Err(InjectError::IntervalOutOfRange { start: spec.start_frame, end: spec.end_frame, len: frames.len() });
    }
    if spec.payload.len() > crate::can_log::MAX_PAYLOAD {
        return Err(InjectError::PayloadTooLong(spec.payload.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(frames.len() + spec.insertion_count());
    let mut out_labels = Vec::with_capacity(out.capacity());
    for (i, (frame, &label)) in frames.iter().zip(labels).enumerate() {
        out.push(frame.clone());
        out_labels.push(label);
        let in_range = (spec.start_frame..spec.end_frame).contains(&i);
        if in_range && (i - spec.start_frame + 1).is_multiple_of(spec.rate) {
            let prev = frame.timestamp.as_micros();
            // Strictly between the neighbours when there is room, else tied
            // with the previous frame.
            let ts = match frames.get(i + 1).map(|f| f.timestamp.as_micros()) {
                Some(next) if next > prev + 1 => rng.random_range(prev + 1..next),
                Some(_) => prev,
                None => prev + rng.random_range(1..=1000),
            };
            out.push(CanFrame {
                timestamp: Timestamp::from_micros(ts),
                bus: frame.bus.clone(),
                pid: spec.target_pid.clone(),
                payload: spec.payload.clone(),
            });
            out_labels.push(Label::Injected);
        }
    }
    Ok((out, out_labels))
}
