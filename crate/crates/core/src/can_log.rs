//! candump-style log parsing and windowing.
//!
//! A record looks like
//!
//! ```text
//! (1600000000.123456) can0 264#11223344
//! ```
//!
//! i.e. a parenthesised timestamp, the bus channel, the arbitration id and the
//! payload bytes in hex after a `#`.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of payload bytes in a classic CAN frame.
pub const MAX_PAYLOAD: usize = 8;
const MAX_PID_DIGITS: usize = 8;

#[derive(Error, Debug)]
pub enum LogError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: payload has an odd number of hex digits")]
    OddHexLength { line: usize },
    #[error("line {line}: payload of {digits} hex digits exceeds 8 bytes")]
    PayloadTooLong { line: usize, digits: usize },
    #[error("line {line}: bad timestamp `{text}`")]
    BadTimestamp { line: usize, text: String },
    #[error("window size {0} is too small (need at least 2 frames)")]
    WindowTooSmall(usize),
    #[error("frame {index} has a timestamp earlier than its predecessor")]
    TimestampRegression { index: usize },
    #[error("stride must be positive")]
    ZeroStride,
    #[error("label count {labels} does not match frame count {frames}")]
    LabelMismatch { frames: usize, labels: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl LogError {
    /// Line number the error refers to, when it came from a record.
    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::MalformedLine { line, .. }
            | LogError::OddHexLength { line }
            | LogError::PayloadTooLong { line, .. }
            | LogError::BadTimestamp { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Timestamp in whole microseconds since the epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub fn from_secs_f64(secs: f64) -> Option<Self> {
        if secs.is_finite() && secs >= 0.0 && secs < u64::MAX as f64 / 1e6 {
            Some(Timestamp((secs * 1e6).round() as u64))
        } else {
            None
        }
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    fn parse(text: &str) -> Option<Self> {
        let (whole, frac) = text.split_once('.')?;
        if whole.is_empty()
            || frac.is_empty()
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let secs: u64 = whole.parse().ok()?;
        // Round anything past microseconds.
        let mut digits = frac.bytes().map(|b| u64::from(b - b'0'));
        let mut micros = 0u64;
        for _ in 0..6 {
            micros = micros * 10 + digits.next().unwrap_or(0);
        }
        if digits.next().is_some_and(|d| d >= 5) {
            micros += 1;
        }
        secs.checked_mul(1_000_000)?.checked_add(micros).map(Timestamp)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// CAN arbitration identifier kept as its hex spelling.
///
/// Stored uppercase with the written width preserved, so `0264` and `264`
/// are different ids. Comparison is therefore case-insensitive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pid(String);

impl Pid {
    pub fn new(text: &str) -> Option<Self> {
        if text.is_empty()
            || text.len() > MAX_PID_DIGITS
            || !text.bytes().all(|b| b.is_ascii_hexdigit())
        {
            return None;
        }
        Some(Pid(text.to_ascii_uppercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Numeric value of the identifier.
    pub fn value(&self) -> u32 {
        u32::from_str_radix(&self.0, 16).expect("validated hex")
    }
}

impl TryFrom<String> for Pid {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Pid::new(&value).ok_or_else(|| format!("invalid CAN id `{value}`"))
    }
}

impl From<Pid> for String {
    fn from(pid: Pid) -> String {
        pid.0
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One parsed log record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanFrame {
    pub timestamp: Timestamp,
    pub bus: String,
    pub pid: Pid,
    pub payload: Vec<u8>,
}

impl CanFrame {
    /// Builds a frame, enforcing the 8-byte payload limit.
    pub fn new(timestamp: Timestamp, bus: impl Into<String>, pid: Pid, payload: Vec<u8>) -> Option<Self> {
        let bus = bus.into();
        if payload.len() > MAX_PAYLOAD || bus.is_empty() || bus.contains(char::is_whitespace) {
            return None;
        }
        Some(CanFrame { timestamp, bus, pid, payload })
    }
}

impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {} {}#", self.timestamp, self.bus, self.pid)?;
        for b in &self.payload {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

/// Ground truth for a frame or window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Injected,
}

impl Label {
    pub fn is_injected(self) -> bool {
        self == Label::Injected
    }

    pub fn as_bit(self) -> u8 {
        self as u8
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Benign),
            1 => Some(Label::Injected),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "benign",
            Label::Injected => "injected",
        })
    }
}

/// Parses one record. `line_no` is only used for error context.
pub fn parse_line(line: &str, line_no: usize) -> Result<CanFrame, LogError> {
    let malformed = |reason: &str| LogError::MalformedLine { line: line_no, reason: reason.to_string() };

    let line = line.trim_end_matches(['\r', '\n']);
    let rest = line.strip_prefix('(').ok_or_else(|| malformed("expected `(` before timestamp"))?;
    let (ts_text, rest) = rest.split_once(')').ok_or_else(|| malformed("unterminated timestamp"))?;
    let timestamp = Timestamp::parse(ts_text)
        .ok_or_else(|| LogError::BadTimestamp { line: line_no, text: ts_text.to_string() })?;

    let rest = rest.strip_prefix(' ').ok_or_else(|| malformed("expected space after timestamp"))?;
    let (bus, rest) = rest.split_once(' ').ok_or_else(|| malformed("missing CAN id field"))?;
    if bus.is_empty() || bus.contains(char::is_whitespace) {
        return Err(malformed("bad channel name"));
    }
    let (pid_text, data) = rest.split_once('#').ok_or_else(|| malformed("missing `#` separator"))?;
    let pid = Pid::new(pid_text).ok_or_else(|| malformed("CAN id is not 1-8 hex digits"))?;

    let data = data.trim_end();
    if !data.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed("payload is not hex"));
    }
    if data.len() % 2 != 0 {
        return Err(LogError::OddHexLength { line: line_no });
    }
    if data.len() > 2 * MAX_PAYLOAD {
        return Err(LogError::PayloadTooLong { line: line_no, digits: data.len() });
    }
    let payload = data
        .as_bytes()
        .chunks(2)
        .map(|pair| u8::from_str_radix(std::str::from_utf8(pair).expect("ascii"), 16).expect("hex"))
        .collect();

    Ok(CanFrame { timestamp, bus: bus.to_string(), pid, payload })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParseMode {
    /// Abort on the first malformed record.
    Strict,
    /// Skip malformed records, collecting a warning for each.
    #[default]
    Lenient,
}

/// A record that was skipped in lenient mode.
#[derive(Debug)]
pub struct SkippedLine {
    pub line: usize,
    pub error: LogError,
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub frames: Vec<CanFrame>,
    pub warnings: Vec<SkippedLine>,
    /// Valid records dropped because they were on another channel.
    pub other_channel: usize,
}

#[derive(Clone, Debug)]
pub struct ReadOptions {
    pub mode: ParseMode,
    /// Keep only frames from this channel. `None` keeps everything.
    pub channel: Option<String>,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { mode: ParseMode::Lenient, channel: Some("can0".to_string()) }
    }
}

/// Reads a whole log. Blank lines and `#` comments are ignored.
pub fn read_log<R: BufRead>(source: R, opts: &ReadOptions) -> Result<ParsedLog, LogError> {
    let mut out = ParsedLog::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_line(trimmed, line_no) {
            Ok(frame) => {
                if opts.channel.as_deref().is_some_and(|c| c != frame.bus) {
                    out.other_channel += 1;
                } else {
                    out.frames.push(frame);
                }
            }
            Err(e) if opts.mode == ParseMode::Lenient => {
                log::warn!("skipping {e}");
                out.warnings.push(SkippedLine { line: line_no, error: e });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Writes frames in candump format, one per line.
pub fn write_log<W: std::io::Write>(mut sink: W, frames: &[CanFrame]) -> std::io::Result<()> {
    for f in frames {
        writeln!(sink, "{f}")?;
    }
    Ok(())
}

/// Reads a label sidecar: one `0` or `1` per line.
pub fn read_labels<R: BufRead>(source: R) -> Result<Vec<Label>, LogError> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let label = match t {
            "0" => Label::Benign,
            "1" => Label::Injected,
            _ => {
                return Err(LogError::MalformedLine {
                    line: idx + 1,
                    reason: format!("label must be 0 or 1, got `{t}`"),
                })
            }
        };
        out.push(label);
    }
    Ok(out)
}

pub fn write_labels<W: std::io::Write>(mut sink: W, labels: &[Label]) -> std::io::Result<()> {
    for l in labels {
        writeln!(sink, "{}", l.as_bit())?;
    }
    Ok(())
}

/// A batch of consecutive frames that becomes one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWindow {
    pub index: usize,
    pub frames: Vec<CanFrame>,
    /// `Injected` if any frame in the window is injected.
    pub label: Option<Label>,
}

impl FrameWindow {
    pub fn pids(&self) -> impl Iterator<Item = &Pid> {
        self.frames.iter().map(|f| &f.pid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Windowing {
    pub size: usize,
    /// Distance between window starts. Equal to `size` for disjoint windows.
    pub stride: usize,
}

impl Windowing {
    pub fn disjoint(size: usize) -> Self {
        Windowing { size, stride: size }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Windowed {
    pub windows: Vec<FrameWindow>,
    /// Trailing frames not covered by any window.
    pub discarded: usize,
}

/// Splits frames into disjoint windows of `window_size`, dropping the remainder.
pub fn windowize(frames: &[CanFrame], window_size: usize) -> Result<Windowed, LogError> {
    windowize_with(frames, None, Windowing::disjoint(window_size))
}

/// Windowing with optional per-frame labels and a custom stride.
pub fn windowize_with(
    frames: &[CanFrame],
    labels: Option<&[Label]>,
    windowing: Windowing,
) -> Result<Windowed, LogError> {
    let Windowing { size, stride } = windowing;
    if size < 2 {
        return Err(LogError::WindowTooSmall(size));
    }
    if stride == 0 {
        return Err(LogError::ZeroStride);
    }
    if let Some(labels) = labels {
        if labels.len() != frames.len() {
            return Err(LogError::LabelMismatch { frames: frames.len(), labels: labels.len() });
        }
    }

    if let Some(i) = frames.windows(2).position(|p| p[1].timestamp < p[0].timestamp) {
        return Err(LogError::TimestampRegression { index: i + 1 });
    }

    let mut windows = Vec::new();
    let mut start = 0;
    while start + size <= frames.len() {
        let label = labels.map(|l| {
            if l[start..start + size].iter().any(|x| x.is_injected()) {
                Label::Injected
            } else {
                Label::Benign
            }
        });
        windows.push(FrameWindow { index: windows.len(), frames: frames[start..start + size].to_vec(), label });
        start += stride;
    }
    let covered = windows.last().map_or(0, |_| start - stride + size);
    Ok(Windowed { windows, discarded: frames.len() - covered })
}
