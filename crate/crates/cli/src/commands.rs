use std::fs;
use std::io::Write;
use std::path::Path;

use msgraph_core::can_log::{windowize_with, write_labels, write_log, Label, Pid};
use msgraph_core::detect::{calibrate_threshold, change_point_detect, threshold_detect, CpdConfig};
use msgraph_core::eval::{score, DetectionReport, Detector};
use msgraph_core::inject::{generate_benign, inject_labeled, InjectionSpec, SyntheticTrafficSpec};
use msgraph_core::msg_graph::compute_msg;
use msgraph_core::seq_model::{
    build_constructed_dataset, predict, sequences_from_series, train, EpochStats, LstmModel, ModelConfig, Sample,
};
use msgraph_core::similarity::{Metric, SimilaritySeries};
use serde_json::json;

use crate::error::CliError;
use crate::input::{load_series, read_frames, read_label_file, series_from, sink, windowing};
use crate::{
    Command, CpdArgs, CpdOpts, DetectorArg, DotArgs, EvalArgs, GenerateArgs, InjectArgs, PredictArgs, SimilarityArgs,
    ThresholdArgs, TrainArgs, WindowOpts,
};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Similarity(a) => similarity(a),
        Command::DetectThreshold(a) => detect_threshold(a),
        Command::DetectCpd(a) => detect_cpd(a),
        Command::TrainLstm(a) => train_lstm(a),
        Command::PredictLstm(a) => predict_lstm(a),
        Command::Eval(a) => eval(a),
        Command::Generate(a) => generate(a),
        Command::Inject(a) => inject(a),
        Command::ExportDot(a) => export_dot(a),
    }
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn similarity(a: SimilarityArgs) -> Result<(), CliError> {
    let series = load_series(&a.series)?;
    let mut out = sink(a.output.as_deref())?;
    series.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = &a.svg {
        fs::write(path, crate::svg::line_chart(&series)).map_err(|e| CliError::io(path, e))?;
    }
    eprintln!("{} {} similarity values (window {})", series.len(), series.metric, series.window_size);
    Ok(())
}

fn detect_threshold(a: ThresholdArgs) -> Result<(), CliError> {
    let series = load_series(&a.series)?;
    let threshold = if a.calibrate {
        let c = calibrate_threshold(&series)?;
        eprintln!("calibrated threshold {:.4} (accuracy {:.2}%)", c.threshold, c.accuracy * 100.0);
        c.threshold
    } else {
        a.threshold
    };
    let result = threshold_detect(&series, threshold);
    if let Some(path) = &a.verdicts {
        result.write_csv(&series, sink(Some(path))?)?;
    }
    let params = json!({ "threshold": threshold, "calibrated": a.calibrate, "window_size": series.window_size });
    match &series.labels {
        Some(labels) => {
            let report = score(&result.verdicts, labels, Detector::Threshold, Some(series.metric), params)?;
            eprintln!("{}", report.summary_line());
            write_json(a.output.as_deref(), &report)
        }
        None => {
            let flagged = result.verdicts.iter().filter(|v| v.is_attack()).count();
            eprintln!("threshold/{}: {flagged} of {} pairs below {threshold}", series.metric, series.len());
            write_json(a.output.as_deref(), &json!({ "detector": "threshold", "metric": series.metric, "parameters": params, "verdicts": result.verdicts }))
        }
    }
}

fn cpd_config(o: &CpdOpts) -> CpdConfig {
    CpdConfig { samples: o.samples, burn_in: o.burn_in, seed: o.cpd_seed, strength_threshold: o.strength }
}

fn detect_cpd(a: CpdArgs) -> Result<(), CliError> {
    let series = load_series(&a.series)?;
    let config = cpd_config(&a.cpd);
    let est = change_point_detect(&series.values, &config)?;
    if let Some(path) = &a.posterior {
        est.write_posterior_csv(sink(Some(path))?)?;
    }
    eprintln!(
        "cpd/{}: tau {} of {}, mean {:.4} -> {:.4}, strength {:.3}% => {}",
        series.metric,
        est.tau_point,
        series.len(),
        est.mu_before,
        est.mu_after,
        est.strength_of_change,
        if est.changed { "change" } else { "no change" }
    );
    let params = json!({ "config": config, "estimate": est, "window_size": series.window_size });
    match &series.labels {
        Some(labels) => {
            let report = score(&est.verdicts(series.len()), labels, Detector::Cpd, Some(series.metric), params)?;
            eprintln!("{}", report.summary_line());
            write_json(a.output.as_deref(), &report)
        }
        None => write_json(a.output.as_deref(), &json!({ "detector": "cpd", "metric": series.metric, "parameters": params })),
    }
}

// A missing sidecar means the whole log carries `default`.
fn labelled_series(
    path: &Path,
    labels: Option<&std::path::PathBuf>,
    default: Label,
    metric: Metric,
    window: &WindowOpts,
    log: &crate::LogOpts,
) -> Result<SimilaritySeries, CliError> {
    let mut s = series_from(path, labels, metric, window, log)?;
    if s.labels.is_none() {
        s.labels = Some(vec![default; s.len()]);
    }
    Ok(s)
}

fn train_lstm(a: TrainArgs) -> Result<(), CliError> {
    let config = a.model.config();
    config.validate()?;
    let benign = labelled_series(&a.benign, a.benign_labels.as_ref(), Label::Benign, a.metric, &a.window, &a.log)?;
    let attack = labelled_series(&a.attack, a.attack_labels.as_ref(), Label::Injected, a.metric, &a.window, &a.log)?;
    let dataset = build_constructed_dataset(&benign, &attack, config.lookback)?;
    let (train_set, test_set) = dataset.split(config.train_fraction);
    let (model, history) = train(&dataset, &config)?;
    model.save(&a.model_out).map_err(|e| CliError::in_file(&a.model_out, e))?;
    if let Some(path) = &a.history {
        EpochStats::write_csv(&history, sink(Some(path))?)?;
    }
    let last = history.last().expect("at least one epoch");
    let held_out = if test_set.is_empty() { f64::NAN } else { predict(&model, &test_set.samples)?.accuracy };
    eprintln!(
        "lstm/{}: {} epochs on {} samples, final loss {:.4}, train accuracy {:.2}%, held-out accuracy {:.2}% over {} samples",
        a.metric,
        history.len(),
        train_set.len(),
        last.loss,
        last.train_accuracy * 100.0,
        held_out * 100.0,
        test_set.len()
    );
    Ok(())
}

fn write_predictions(path: Option<&Path>, samples: &[Sample], probs: &[f64], labelled: bool) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(["sample_index", "probability", "verdict", "label"])?;
    for (i, (s, p)) in samples.iter().zip(probs).enumerate() {
        let verdict = if *p >= 0.5 { "attack" } else { "benign" };
        let label = if labelled { s.label.to_string() } else { String::new() };
        w.write_record([i.to_string(), p.to_string(), verdict.to_string(), label])?;
    }
    w.flush()?;
    Ok(())
}

fn predict_lstm(a: PredictArgs) -> Result<(), CliError> {
    if a.model.is_none() && !a.train {
        return Err(CliError::Usage("predict-lstm needs --model <checkpoint> or --train".into()));
    }
    let series = load_series(&a.series)?;
    let labelled = series.labels.is_some();
    let (model, samples) = match &a.model {
        Some(path) => {
            let model = LstmModel::load(path).map_err(|e| CliError::in_file(path, e))?;
            if model.config().features != 1 {
                return Err(CliError::Usage(format!("{}: model expects {} features per step", path.display(), model.config().features)));
            }
            let dataset = sequences_from_series(&[&series], model.config().lookback)?;
            (model, dataset.samples)
        }
        None => {
            if !labelled {
                return Err(CliError::Usage("--train needs labels for the input".into()));
            }
            let config: ModelConfig = a.model_opts.config();
            config.validate()?;
            let dataset = sequences_from_series(&[&series], config.lookback)?;
            let (model, _) = train(&dataset, &config)?;
            let (_, test) = dataset.split(config.train_fraction);
            (model, test.samples)
        }
    };
    let result = predict(&model, &samples)?;
    write_predictions(a.output.as_deref(), &samples, &result.probabilities, labelled)?;
    let flagged = result.verdicts.iter().filter(|v| v.is_attack()).count();
    if labelled {
        eprintln!("lstm: {flagged} of {} sequences flagged, accuracy {:.2}%", samples.len(), result.accuracy * 100.0);
    } else {
        eprintln!("lstm: {flagged} of {} sequences flagged", samples.len());
    }
    Ok(())
}

fn run_detector(
    d: DetectorArg,
    series: &SimilaritySeries,
    a: &EvalArgs,
) -> Result<DetectionReport, CliError> {
    let labels = series.labels.as_ref().expect("eval input is labelled");
    match d {
        DetectorArg::Threshold => {
            let threshold = if a.calibrate { calibrate_threshold(series)?.threshold } else { a.threshold };
            let v = threshold_detect(series, threshold);
            let params = json!({ "threshold": threshold, "calibrated": a.calibrate, "window_size": series.window_size });
            Ok(score(&v.verdicts, labels, Detector::Threshold, Some(series.metric), params)?)
        }
        DetectorArg::Cpd => {
            let config = cpd_config(&a.cpd);
            let est = change_point_detect(&series.values, &config)?;
            let params = json!({ "config": config, "tau": est.tau_point, "strength_of_change": est.strength_of_change, "window_size": series.window_size });
            Ok(score(&est.verdicts(series.len()), labels, Detector::Cpd, Some(series.metric), params)?)
        }
        DetectorArg::Lstm => {
            let config = a.model.config();
            let dataset = sequences_from_series(&[series], config.lookback)?;
            let (model, _) = train(&dataset, &config)?;
            let (_, test) = dataset.split(config.train_fraction);
            let result = predict(&model, &test.samples)?;
            let test_labels: Vec<Label> = test.samples.iter().map(|s| Label::from_bit(s.label).expect("binary label")).collect();
            let params = json!({ "config": config, "window_size": series.window_size, "evaluated_on": "held-out split" });
            Ok(score(&result.verdicts, &test_labels, Detector::Lstm, Some(series.metric), params)?)
        }
    }
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let frames = read_frames(&a.input, &a.log)?;
    let labels = read_label_file(&a.labels)?;
    if let Some(dir) = &a.reports {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_writer(sink(a.output.as_deref())?);
    w.write_record(["window_size", "metric", "detector", "accuracy", "false_positive_rate", "tp", "fp", "tn", "fn", "total"])?;
    for &size in &a.window_sizes {
        let window = WindowOpts { window_size: size, stride: None };
        for &metric in &a.metrics {
            let run = msgraph_core::pipeline::similarity_from_frames(&frames, Some(&labels), windowing(&window), metric)
                .map_err(|e| CliError::in_file(&a.input, e))?;
            for &d in &a.detectors {
                let report = match run_detector(d, &run.series, &a) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("window {size} {metric} {d:?}: skipped: {e}");
                        continue;
                    }
                };
                eprintln!("w={size} {}", report.summary_line());
                let c = report.confusion;
                w.write_record([
                    size.to_string(),
                    metric.to_string(),
                    report.detector.to_string(),
                    report.accuracy.to_string(),
                    report.false_positive_rate.to_string(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.tn.to_string(),
                    c.fn_.to_string(),
                    report.total.to_string(),
                ])?;
                if let Some(dir) = &a.reports {
                    let path = dir.join(format!("{}-{metric}-w{size}.json", report.detector));
                    write_json(Some(&path), &report)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    if a.pids == 0 || a.pids > msgraph_core::inject::DEFAULT_PIDS.len() {
        return Err(CliError::Usage(format!("--pids must be between 1 and {}", msgraph_core::inject::DEFAULT_PIDS.len())));
    }
    let mut spec = SyntheticTrafficSpec::cyclic(a.pids, a.jitter, a.length, a.seed);
    spec.inter_arrival = a.inter_arrival;
    spec.bus = a.bus.clone();
    let frames = generate_benign(&spec)?;
    let mut out = sink(a.output.as_deref())?;
    writeln!(
        out,
        "# msgraph generate seed={} pids={} jitter={} length={} inter_arrival={}",
        a.seed, a.pids, a.jitter, a.length, a.inter_arrival
    )?;
    write_log(&mut out, &frames)?;
    out.flush()?;
    if let Some(path) = &a.labels_out {
        let mut w = sink(Some(path))?;
        write_labels(&mut w, &vec![Label::Benign; frames.len()])?;
        w.flush()?;
    }
    Ok(())
}

fn parse_payload(hex: &str) -> Result<Vec<u8>, CliError> {
    let bad = || CliError::Usage(format!("--payload `{hex}` is not an even-length hex string"));
    if !hex.len().is_multiple_of(2) || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(bad());
    }
    (0..hex.len()).step_by(2).map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| bad())).collect()
}

fn inject(a: InjectArgs) -> Result<(), CliError> {
    let target = Pid::new(&a.target_pid).ok_or_else(|| CliError::Usage(format!("--target-pid `{}` is not a CAN identifier", a.target_pid)))?;
    let payload = parse_payload(&a.payload)?;
    let frames = read_frames(&a.input, &a.log)?;
    let labels = match &a.labels {
        Some(p) => read_label_file(p)?,
        None => vec![Label::Benign; frames.len()],
    };
    if labels.len() != frames.len() {
        return Err(CliError::Data(format!("{} labels for {} frames", labels.len(), frames.len())));
    }
    let spec = InjectionSpec {
        target_pid: target,
        payload,
        rate: a.rate,
        start_frame: a.start,
        end_frame: a.end.unwrap_or(frames.len()),
        seed: a.seed,
    };
    let (out_frames, out_labels) = inject_labeled(&frames, &labels, &spec)?;
    let mut out = sink(a.output.as_deref())?;
    writeln!(
        out,
        "# msgraph inject seed={} target={} payload={} rate={} start={} end={}",
        spec.seed,
        spec.target_pid,
        a.payload.to_ascii_uppercase(),
        spec.rate,
        spec.start_frame,
        spec.end_frame
    )?;
    write_log(&mut out, &out_frames)?;
    out.flush()?;
    if let Some(path) = &a.labels_out {
        let mut w = sink(Some(path))?;
        write_labels(&mut w, &out_labels)?;
        w.flush()?;
    }
    eprintln!("inserted {} frames; {} frames total", spec.insertion_count(), out_frames.len());
    Ok(())
}

fn export_dot(a: DotArgs) -> Result<(), CliError> {
    let frames = read_frames(&a.input, &a.log)?;
    let windowed = windowize_with(&frames, None, windowing(&a.window)).map_err(|e| CliError::in_file(&a.input, e))?;
    let selected: Vec<_> = match a.window_index {
        Some(i) => {
            let w = windowed
                .windows
                .get(i)
                .ok_or_else(|| CliError::Usage(format!("window {i} does not exist ({} windows)", windowed.windows.len())))?;
            vec![w]
        }
        None => windowed.windows.iter().collect(),
    };
    let mut out = sink(a.output.as_deref())?;
    for w in selected {
        let g = compute_msg(w).map_err(|e| CliError::Data(e.to_string()))?;
        out.write_all(g.to_dot().as_bytes())?;
    }
    out.flush()?;
    Ok(())
}
