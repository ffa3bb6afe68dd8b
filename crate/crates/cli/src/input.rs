use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use msgraph_core::can_log::{read_labels, read_log, CanFrame, Label, ParseMode, ReadOptions, Windowing};
use msgraph_core::pipeline::similarity_from_frames;
use msgraph_core::similarity::{Metric, SimilaritySeries};

use crate::error::CliError;
use crate::{LogOpts, SeriesOpts, WindowOpts};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// File or stdout.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn read_frames(path: &Path, opts: &LogOpts) -> Result<Vec<CanFrame>, CliError> {
    let options = ReadOptions {
        mode: if opts.strict { ParseMode::Strict } else { ParseMode::Lenient },
        channel: (opts.channel != "*").then(|| opts.channel.clone()),
    };
    let parsed = read_log(open(path)?, &options).map_err(|e| CliError::in_file(path, e))?;
    if !parsed.warnings.is_empty() {
        log::warn!("{}: skipped {} malformed lines", path.display(), parsed.warnings.len());
        for w in parsed.warnings.iter().take(5) {
            log::warn!("{}: {}", path.display(), w.error);
        }
    }
    if parsed.other_channel > 0 {
        log::info!("{}: ignored {} frames on other channels", path.display(), parsed.other_channel);
    }
    Ok(parsed.frames)
}

pub fn read_label_file(path: &Path) -> Result<Vec<Label>, CliError> {
    read_labels(open(path)?).map_err(|e| CliError::in_file(path, e))
}

pub fn windowing(opts: &WindowOpts) -> Windowing {
    Windowing { size: opts.window_size, stride: opts.stride.unwrap_or(opts.window_size) }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Similarity series from a log (recomputed) or a series CSV (read back).
pub fn series_from(
    path: &Path,
    labels: Option<&PathBuf>,
    metric: Metric,
    window: &WindowOpts,
    log_opts: &LogOpts,
) -> Result<SimilaritySeries, CliError> {
    if is_csv(path) {
        if labels.is_some() {
            log::warn!("--labels is ignored for series CSV input; labels come from the CSV");
        }
        let series = SimilaritySeries::read_csv(open(path)?, window.window_size).map_err(|e| CliError::io(path, e))?;
        if series.metric != metric {
            log::info!("{}: series uses {} (ignoring --metric {metric})", path.display(), series.metric);
        }
        return Ok(series);
    }
    let frames = read_frames(path, log_opts)?;
    let labels = labels.map(|p| read_label_file(p)).transpose()?;
    let run = similarity_from_frames(&frames, labels.as_deref(), windowing(window), metric)
        .map_err(|e| CliError::in_file(path, e))?;
    if run.discarded > 0 {
        log::warn!("{}: {} trailing frames did not fill a window and were discarded", path.display(), run.discarded);
    }
    if run.series.is_empty() {
        log::warn!("{}: fewer than two windows, the series is empty", path.display());
    }
    Ok(run.series)
}

pub fn load_series(opts: &SeriesOpts) -> Result<SimilaritySeries, CliError> {
    series_from(&opts.input, opts.labels.as_ref(), opts.metric, &opts.window, &opts.log)
}
