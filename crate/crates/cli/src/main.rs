mod args;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use sand_core::data::{load_csv, load_labels, load_smd, load_smd_labels, split, write_csv, write_labels};
use sand_core::metrics::evaluate;
use sand_core::pipeline::{fit_model, run_detect, run_explain, AtStep, InputFormat};
use sand_core::synthetic::{generate, CollinearGroup, PlantedAnomaly, SynthConfig};
use sand_core::{
    DetectionResult, Error, LabelVector, PipelineConfig, PipelineError, SandModel, SeriesMatrix, SplitSpec, Step,
};

use args::{Cli, Command, DetectArgs, EvaluateArgs, ExplainArgs, SynthArgs};

const DEFAULT_OUT: &str = "sand-out";

type Outcome = Result<(), PipelineError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => detect(&a),
        Command::Fit(a) => fit(&a),
        Command::Score(a) => score(&a),
        Command::Explain(a) => explain(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Synth(a) => synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_err(msg: &str) -> PipelineError {
    PipelineError {
        step: Step::Config,
        source: Error::Config(msg.to_string()),
    }
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(&dir, e))
        .at(Step::Output)?;
    Ok(dir)
}

struct Segments {
    train: Option<SeriesMatrix>,
    test: Option<SeriesMatrix>,
    truth: Option<LabelVector>,
}

fn read_matrix(path: &Path, cfg: &PipelineConfig) -> sand_core::Result<(SeriesMatrix, Option<LabelVector>)> {
    match cfg.format {
        InputFormat::Csv => load_csv(path, cfg.label_column.as_deref()),
        InputFormat::Smd => Ok((load_smd(path)?, None)),
    }
}

fn read_labels(path: &Path, cfg: &PipelineConfig) -> sand_core::Result<LabelVector> {
    match cfg.format {
        InputFormat::Csv => load_labels(path, cfg.label_column.as_deref()),
        InputFormat::Smd => load_smd_labels(path),
    }
}

/// Loads whichever segments the configuration names.
fn load_segments(cfg: &PipelineConfig) -> Result<Segments, PipelineError> {
    let mut seg = Segments {
        train: None,
        test: None,
        truth: None,
    };
    if let Some(data) = &cfg.data {
        if cfg.train.is_some() || cfg.test.is_some() {
            return Err(config_err("give either --data or --train/--test, not both"));
        }
        let train_end = cfg
            .train_end
            .ok_or_else(|| config_err("--data needs --train-end"))?;
        let (x, labels) = read_matrix(data, cfg).at(Step::Ingest)?;
        let spec = SplitSpec { train_end };
        let (train, test) = split(&x, spec).at(Step::Ingest)?;
        seg.truth = labels.map(|l| l.slice(train_end..x.len()));
        seg.train = Some(train);
        seg.test = Some(test);
    } else {
        if let Some(p) = &cfg.train {
            seg.train = Some(read_matrix(p, cfg).at(Step::Ingest)?.0);
        }
        if let Some(p) = &cfg.test {
            let (x, labels) = read_matrix(p, cfg).at(Step::Ingest)?;
            seg.truth = labels;
            seg.test = Some(x);
        }
    }
    if let Some(p) = &cfg.labels {
        seg.truth = Some(read_labels(p, cfg).at(Step::Ingest)?);
    }
    if let (Some(t), Some(x)) = (&seg.truth, &seg.test) {
        if t.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: t.len(),
            })
            .at(Step::Ingest);
        }
    }
    Ok(seg)
}

fn need(x: Option<SeriesMatrix>, what: &str) -> Result<SeriesMatrix, PipelineError> {
    x.ok_or_else(|| config_err(&format!("no {what} data given")))
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Error::io(path, e))
        .at(Step::Output)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text)
        .map_err(|e| Error::io(path, e))
        .at(Step::Output)
}

fn scores_csv(d: &DetectionResult) -> String {
    let mut s = String::with_capacity(d.scores.len() * 24);
    s.push_str("timestamp,score,flag\n");
    for (i, (score, flag)) in d.scores.iter().zip(d.flags.as_slice()).enumerate() {
        let _ = writeln!(s, "{},{score:?},{flag}", i + d.time_offset);
    }
    s
}

fn intervals_csv(d: &DetectionResult) -> String {
    let mut s = String::from("start,end\n");
    for (a, b) in d.intervals() {
        let _ = writeln!(s, "{a},{b}");
    }
    s
}

fn write_detection(dir: &Path, d: &DetectionResult) -> Outcome {
    write_text(&dir.join("scores.csv"), &scores_csv(d))?;
    write_text(&dir.join("intervals.csv"), &intervals_csv(d))
}

fn save_model(dir: &Path, model: &SandModel) -> Outcome {
    model.save(dir.join("model.sand")).at(Step::Output)
}

fn detect(a: &DetectArgs) -> Outcome {
    let cfg = a.config().at(Step::Config)?;
    let params = cfg.detect_params().at(Step::Config)?;
    let seg = load_segments(&cfg)?;
    let train = need(seg.train, "training")?;
    let test = need(seg.test, "test")?;
    let dir = out_dir(&cfg)?;
    let (model, detection, report) = run_detect(&train, &test, seg.truth.as_ref(), &params)?;
    write_json(&dir.join("report.json"), &report)?;
    write_detection(&dir, &detection)?;
    save_model(&dir, &model)?;
    if cfg.summary {
        let mut s = String::new();
        let _ = writeln!(s, "variables: {} retained of {}", report.retained.len(), report.n_vars);
        let _ = writeln!(s, "threshold: {} k = {}", report.threshold.kind.as_str(), report.threshold.k);
        let _ = writeln!(s, "flags: {} in {} intervals", report.n_flags, report.intervals.len());
        if let Some(m) = &report.metrics {
            let ric = m.ric.map_or("n/a".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(
                s,
                "precision {:.4} recall {:.4} f1 {:.4} mcc {:.4} ric {ric}",
                m.precision, m.recall, m.f1, m.mcc
            );
        }
        write_text(&dir.join("summary.txt"), &s)?;
    }
    println!(
        "{} flags in {} intervals; report in {}",
        report.n_flags,
        report.intervals.len(),
        dir.display()
    );
    Ok(())
}

fn fit(a: &DetectArgs) -> Outcome {
    let cfg = a.config().at(Step::Config)?;
    let params = cfg.detect_params().at(Step::Config)?;
    let train = need(load_segments(&cfg)?.train, "training")?;
    let dir = out_dir(&cfg)?;
    let (model, report) = fit_model(&train, &params)?;
    write_json(&dir.join("fit.json"), &report)?;
    save_model(&dir, &model)?;
    println!("model with {} variables, k = {}", model.retained.len(), model.k);
    Ok(())
}

#[derive(Serialize)]
struct ScoreReport {
    model: PathBuf,
    test_len: usize,
    time_offset: usize,
    k: f64,
    n_flags: usize,
    intervals: Vec<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<sand_core::MetricsBlock>,
}

fn load_model(cfg: &PipelineConfig) -> Result<(PathBuf, SandModel), PipelineError> {
    let path = cfg.model.clone().ok_or_else(|| config_err("--model is required"))?;
    let model = SandModel::load(&path).at(Step::Ingest)?;
    Ok((path, model))
}

fn score(a: &DetectArgs) -> Outcome {
    let cfg = a.config().at(Step::Config)?;
    let (path, model) = load_model(&cfg)?;
    let seg = load_segments(&cfg)?;
    let test = need(seg.test, "test")?;
    let dir = out_dir(&cfg)?;
    let detection = model.detect(&test).at(Step::Scoring)?;
    let metrics = seg
        .truth
        .as_ref()
        .map(|t| sand_core::pipeline::run_evaluate(&detection, t, cfg.min_cluster_len.max(1)))
        .transpose()?;
    let report = ScoreReport {
        model: path,
        test_len: test.len(),
        time_offset: detection.time_offset,
        k: model.k,
        n_flags: detection.flags.count_ones(),
        intervals: detection.intervals(),
        metrics,
    };
    write_json(&dir.join("score.json"), &report)?;
    write_detection(&dir, &detection)?;
    println!("{} flags in {} intervals", report.n_flags, report.intervals.len());
    Ok(())
}

fn explain(a: &ExplainArgs) -> Outcome {
    let cfg = a.config().at(Step::Config)?;
    let params = cfg.explain_params().at(Step::Config)?;
    let seg = load_segments(&cfg)?;
    let train = need(seg.train, "training")?;
    let test = need(seg.test, "test")?;
    let dir = out_dir(&cfg)?;
    let model = match &cfg.model {
        Some(_) => load_model(&cfg)?.1,
        None => fit_model(&train, &cfg.detect_params().at(Step::Config)?)?.0,
    };
    let detection = model.detect(&test).at(Step::Scoring)?;
    let report = run_explain(&model, &train, &test, &detection, &params)?;
    write_json(&dir.join("explain.json"), &report)?;
    for r in &report.reports {
        let names: Vec<&str> = r.top(report.top).iter().map(|v| v.name.as_str()).collect();
        println!("{}: {}", r.method.as_str(), names.join(", "));
    }
    Ok(())
}

/// Reads `timestamp,score,flag` rows into flags plus their timestamps.
fn read_predictions(path: &Path) -> sand_core::Result<(Vec<usize>, LabelVector)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let (ti, fi) = (col("timestamp")?, col("flag")?);
    let mut stamps = Vec::new();
    let mut flags = Vec::new();
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let cell = |i: usize| cells.get(i).copied().unwrap_or("");
        let t = cell(ti).parse().map_err(|_| Error::Parse {
            row: row + 1,
            column: "timestamp".into(),
            value: cell(ti).to_string(),
        })?;
        let f = match cell(fi) {
            "0" => 0,
            "1" => 1,
            v => {
                return Err(Error::BadLabel {
                    row: row + 1,
                    column: "flag".into(),
                    value: v.to_string(),
                })
            }
        };
        stamps.push(t);
        flags.push(f);
    }
    Ok((stamps, LabelVector::new(flags, path.display().to_string())?))
}

fn evaluate_cmd(a: &EvaluateArgs) -> Outcome {
    let (stamps, pred) = read_predictions(&a.pred).at(Step::Ingest)?;
    let truth = load_labels(&a.truth, a.label_column.as_deref()).at(Step::Ingest)?;
    let picked = stamps
        .iter()
        .map(|&t| {
            truth.as_slice().get(t).copied().ok_or(Error::Shape(format!(
                "prediction timestamp {t} beyond truth length {}",
                truth.len()
            )))
        })
        .collect::<sand_core::Result<Vec<u8>>>()
        .at(Step::Evaluation)?;
    let aligned = LabelVector::new(picked, pred.aligned_to()).at(Step::Evaluation)?;
    let metrics = evaluate(&pred, &aligned, a.min_cluster_len.max(1)).at(Step::Evaluation)?;
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(&dir, e))
        .at(Step::Output)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    let ric = metrics.ric.map_or("n/a".to_string(), |r| format!("{r:.4}"));
    println!(
        "precision {:.4} recall {:.4} f1 {:.4} mcc {:.4} ric {ric} flags {}",
        metrics.precision, metrics.recall, metrics.f1, metrics.mcc, metrics.n_flags
    );
    Ok(())
}

fn parse_list(s: &str) -> Option<Vec<usize>> {
    s.split(',').map(|v| v.trim().parse().ok()).collect()
}

fn parse_group(s: &str) -> Option<CollinearGroup> {
    let mut parts = s.split(':');
    let base = parts.next()?.trim().parse().ok()?;
    let dependents = parse_list(parts.next()?)?;
    let noise = match parts.next() {
        Some(v) => v.trim().parse().ok()?,
        None => 0.0,
    };
    parts.next().is_none().then_some(CollinearGroup { base, dependents, noise })
}

fn parse_anomaly(s: &str) -> Option<PlantedAnomaly> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, length, vars, shift] = parts.as_slice() else {
        return None;
    };
    Some(PlantedAnomaly {
        start: start.trim().parse().ok()?,
        length: length.trim().parse().ok()?,
        vars: parse_list(vars)?,
        shift: shift.trim().parse().ok()?,
    })
}

fn synth(a: &SynthArgs) -> Outcome {
    let mut cfg = SynthConfig::new(a.n, a.t_a, a.t_b, a.seed);
    for g in &a.collinear {
        cfg.collinear_groups
            .push(parse_group(g).ok_or_else(|| config_err(&format!("bad --collinear {g:?}")))?);
    }
    for s in &a.anomaly {
        cfg.anomalies
            .push(parse_anomaly(s).ok_or_else(|| config_err(&format!("bad --anomaly {s:?}")))?);
    }
    let (x, truth, spec) = generate(&cfg).at(Step::Config)?;
    let (train, test) = split(&x, spec).at(Step::Ingest)?;
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(&dir, e))
        .at(Step::Output)?;
    write_csv(dir.join("train.csv"), &train, None).at(Step::Output)?;
    write_csv(dir.join("test.csv"), &test, None).at(Step::Output)?;
    write_labels(dir.join("truth.csv"), "label", &truth.slice(spec.train_end..x.len())).at(Step::Output)?;
    write_json(&dir.join("synth.json"), &cfg)?;
    println!("wrote {} training and {} test rows to {}", train.len(), test.len(), dir.display());
    Ok(())
}
