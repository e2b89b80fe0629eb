//! End-to-end orchestration: fit on anomaly-free training data, score and
//! flag a test segment, explain flagged windows, evaluate against truth.
//!
//! Every failure is tagged with the step that produced it so callers can
//! map it to a distinct exit code.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::collinearity::{center, vif_prune, VifReport, DEFAULT_VIF_THRESHOLD};
use crate::data::{LabelVector, SeriesMatrix};
use crate::error::Error;
use crate::importance::{
    assemble_step5_dataset, gini_importance, rcde, ForestParams, ImportanceReport, DEFAULT_RIDGE,
};
use crate::metrics::{evaluate, MetricsBlock};
use crate::model::{DetectionResult, SandModel};
use crate::scoring::fit_scatter;
use crate::smoothing::{align_labels, smooth_matrix, FilterKind, SmoothConfig};
use crate::threshold::{chi2_threshold, mvt_threshold, pot_threshold, GpdFit, ThresholdKind, ThresholdSpec};

/// Order of the detection steps as recorded in reports.
pub const DETECT_STEPS: [&str; 7] = [
    "smooth",
    "vif_prune",
    "center",
    "fit_scatter",
    "score_all",
    "threshold",
    "flag",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Config,
    Ingest,
    Smoothing,
    Collinearity,
    Scoring,
    Threshold,
    Importance,
    Evaluation,
    Output,
}

impl Step {
    pub fn exit_code(self) -> i32 {
        match self {
            Step::Config => 2,
            Step::Ingest => 3,
            Step::Smoothing => 4,
            Step::Collinearity => 5,
            Step::Scoring => 6,
            Step::Threshold => 7,
            Step::Importance => 8,
            Step::Evaluation => 9,
            Step::Output => 10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Config => "config",
            Step::Ingest => "ingest",
            Step::Smoothing => "smoothing",
            Step::Collinearity => "collinearity",
            Step::Scoring => "scoring",
            Step::Threshold => "threshold",
            Step::Importance => "importance",
            Step::Evaluation => "evaluation",
            Step::Output => "output",
        }
    }
}

#[derive(Debug)]
pub struct PipelineError {
    pub step: Step,
    pub source: Error,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        self.step.exit_code()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} step failed: {}", self.step.as_str(), self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub trait AtStep<T> {
    fn at(self, step: Step) -> Result<T, PipelineError>;
}

impl<T> AtStep<T> for Result<T, Error> {
    fn at(self, step: Step) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { step, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Csv,
    Smd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceChoice {
    Rf,
    Lr,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    #[default]
    Smoothed,
    Raw,
}

/// Run configuration. Keys mirror the command-line flags; a TOML file may
/// set any subset and flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PipelineConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Single file split at `train_end` instead of separate files.
    pub data: Option<PathBuf>,
    pub train_end: Option<usize>,
    /// Ground truth for the test segment.
    pub labels: Option<PathBuf>,
    pub label_column: Option<String>,
    pub format: InputFormat,
    pub model: Option<PathBuf>,
    pub smooth_window: usize,
    pub smooth_kind: FilterKind,
    pub vif_threshold: f64,
    pub threshold: ThresholdKind,
    pub pot_q: f64,
    pub pot_percentile: f64,
    pub chi2_alpha: f64,
    pub importance: ImportanceChoice,
    pub rf_trees: usize,
    pub rf_seed: Option<u64>,
    /// `start:end` on the original test timeline.
    pub step5_window: Option<String>,
    pub step5_extra: usize,
    pub step5_features: FeatureSource,
    pub top: usize,
    pub min_cluster_len: usize,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub timing: bool,
    pub summary: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = ThresholdSpec::default();
        Self {
            train: None,
            test: None,
            data: None,
            train_end: None,
            labels: None,
            label_column: None,
            format: InputFormat::Csv,
            model: None,
            smooth_window: 1,
            smooth_kind: FilterKind::Median,
            vif_threshold: DEFAULT_VIF_THRESHOLD,
            threshold: ThresholdKind::Pot,
            pot_q: t.q,
            pot_percentile: t.percentile,
            chi2_alpha: t.alpha,
            importance: ImportanceChoice::Both,
            rf_trees: 100,
            rf_seed: None,
            step5_window: None,
            step5_extra: 0,
            step5_features: FeatureSource::Smoothed,
            top: 5,
            min_cluster_len: 1,
            out: None,
            seed: 0,
            timing: true,
            summary: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> crate::Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn smoothing(&self) -> crate::Result<SmoothConfig> {
        SmoothConfig::new(self.smooth_window, self.smooth_kind)
    }

    pub fn threshold_spec(&self) -> crate::Result<ThresholdSpec> {
        let spec = ThresholdSpec {
            kind: self.threshold,
            q: self.pot_q,
            percentile: self.pot_percentile,
            alpha: self.chi2_alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn detect_params(&self) -> crate::Result<DetectParams> {
        if !(self.vif_threshold > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "vif threshold {} must exceed 1",
                self.vif_threshold
            )));
        }
        Ok(DetectParams {
            smoothing: self.smoothing()?,
            vif_threshold: self.vif_threshold,
            threshold: self.threshold_spec()?,
            min_cluster_len: self.min_cluster_len.max(1),
            timing: self.timing,
        })
    }

    pub fn explain_params(&self) -> crate::Result<ExplainParams> {
        let window = self.step5_window.as_deref().map(parse_window).transpose()?;
        if self.rf_trees == 0 {
            return Err(Error::InvalidParameter("rf-trees must be at least 1".into()));
        }
        Ok(ExplainParams {
            method: self.importance,
            forest: ForestParams {
                n_trees: self.rf_trees,
                seed: self.rf_seed.unwrap_or(self.seed),
                ..ForestParams::default()
            },
            window,
            extra: self.step5_extra,
            features: self.step5_features,
            top: self.top,
        })
    }
}

/// Parses `start:end` (end exclusive).
pub fn parse_window(s: &str) -> crate::Result<Range<usize>> {
    let bad = || Error::InvalidParameter(format!("window {s:?} is not start:end"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let start: usize = a.trim().parse().map_err(|_| bad())?;
    let end: usize = b.trim().parse().map_err(|_| bad())?;
    if start >= end {
        return Err(bad());
    }
    Ok(start..end)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub smoothing: SmoothConfig,
    pub vif_threshold: f64,
    pub threshold: ThresholdSpec,
    pub min_cluster_len: usize,
    pub timing: bool,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            smoothing: SmoothConfig::default(),
            vif_threshold: DEFAULT_VIF_THRESHOLD,
            threshold: ThresholdSpec::default(),
            min_cluster_len: 1,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub kind: ThresholdKind,
    pub k: f64,
    pub gpd: Option<GpdFit>,
    pub spec: ThresholdSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTime {
    pub step: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub fit_seconds: f64,
    pub score_seconds: f64,
    pub steps: Vec<StepTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub steps: Vec<&'static str>,
    pub smoothing: SmoothConfig,
    pub n_vars: usize,
    pub train_len: usize,
    pub retained: Vec<String>,
    pub vif: VifReport,
    pub threshold: ThresholdReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectReport {
    pub steps: Vec<&'static str>,
    pub smoothing: SmoothConfig,
    pub n_vars: usize,
    pub train_len: usize,
    pub test_len: usize,
    /// Original test row of score index 0.
    pub time_offset: usize,
    pub retained: Vec<String>,
    pub vif: VifReport,
    pub threshold: ThresholdReport,
    pub n_flags: usize,
    pub intervals: Vec<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

struct Clock {
    enabled: bool,
    steps: Vec<StepTime>,
    last: Instant,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            steps: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, step: &'static str) {
        let now = Instant::now();
        if self.enabled {
            self.steps.push(StepTime {
                step,
                seconds: (now - self.last).as_secs_f64(),
            });
        }
        self.last = now;
    }

    fn total(&self) -> f64 {
        self.steps.iter().map(|s| s.seconds).sum()
    }
}

/// Steps 1 to 4 on the training segment: smooth, prune, center, fit the
/// scatter, and set the threshold from the training scores.
pub fn fit_model(train: &SeriesMatrix, params: &DetectParams) -> Result<(SandModel, FitReport), PipelineError> {
    let mut clock = Clock::new(params.timing);
    let smoothed = smooth_matrix(train, params.smoothing).at(Step::Smoothing)?;
    clock.lap("smooth");
    let vif = vif_prune(&smoothed, params.vif_threshold).at(Step::Collinearity)?;
    clock.lap("vif_prune");
    let kept = smoothed.select(&vif.retained).at(Step::Collinearity)?;
    let (centered, mu) = center(&kept).at(Step::Scoring)?;
    clock.lap("center");
    let fit = fit_scatter(&centered, mu).at(Step::Scoring)?;
    clock.lap("fit_scatter");
    let md_a = fit.score_all(&centered).at(Step::Scoring)?;
    clock.lap("score_all");
    let (k, gpd) = match params.threshold.kind {
        ThresholdKind::Mvt => (mvt_threshold(&md_a).at(Step::Threshold)?, None),
        ThresholdKind::Pot => {
            let (k, g) = pot_threshold(&md_a, &params.threshold).at(Step::Threshold)?;
            (k, Some(g))
        }
        ThresholdKind::Chi2 => (chi2_threshold(fit.dim(), params.threshold.alpha).at(Step::Threshold)?, None),
    };
    clock.lap("threshold");
    let model = SandModel::new(
        train.names().to_vec(),
        vif.retained.clone(),
        params.smoothing,
        fit,
        params.threshold.kind,
        k,
        gpd,
        vif.removed.clone(),
    )
    .at(Step::Threshold)?;
    let timing = params.timing.then(|| Timing {
        fit_seconds: clock.total(),
        score_seconds: 0.0,
        steps: clock.steps.clone(),
    });
    let report = FitReport {
        steps: DETECT_STEPS[..6].to_vec(),
        smoothing: params.smoothing,
        n_vars: train.n_vars(),
        train_len: train.len(),
        retained: model.retained_names().iter().map(|s| s.to_string()).collect(),
        vif,
        threshold: ThresholdReport {
            kind: params.threshold.kind,
            k,
            gpd,
            spec: params.threshold,
        },
        timing,
    };
    Ok((model, report))
}

/// Fits on `train`, flags `test`, and evaluates against `truth` (raw test
/// timeline) when given.
pub fn run_detect(
    train: &SeriesMatrix,
    test: &SeriesMatrix,
    truth: Option<&LabelVector>,
    params: &DetectParams,
) -> Result<(SandModel, DetectionResult, DetectReport), PipelineError> {
    let (model, fit_report) = fit_model(train, params)?;
    let start = Instant::now();
    let prepared = model.prepare(test).at(Step::Smoothing)?;
    let smooth_time = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let scores = model.fit.score_all_raw(&prepared).at(Step::Scoring)?;
    let score_time = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let flags = crate::threshold::flag(&scores, model.k);
    let flag_time = start.elapsed().as_secs_f64();
    let detection = DetectionResult {
        scores,
        flags,
        time_offset: prepared.time_offset(),
    };
    let metrics = truth
        .map(|t| run_evaluate(&detection, t, params.min_cluster_len))
        .transpose()?;
    let timing = fit_report.timing.map(|mut t| {
        t.score_seconds = smooth_time + score_time + flag_time;
        t.steps.push(StepTime { step: "test_smooth", seconds: smooth_time });
        t.steps.push(StepTime { step: "test_score_all", seconds: score_time });
        t.steps.push(StepTime { step: "flag", seconds: flag_time });
        t
    });
    let report = DetectReport {
        steps: DETECT_STEPS.to_vec(),
        smoothing: fit_report.smoothing,
        n_vars: fit_report.n_vars,
        train_len: fit_report.train_len,
        test_len: test.len(),
        time_offset: detection.time_offset,
        retained: fit_report.retained,
        vif: fit_report.vif,
        threshold: fit_report.threshold,
        n_flags: detection.flags.count_ones(),
        intervals: detection.intervals(),
        metrics,
        timing,
    };
    Ok((model, detection, report))
}

/// Metrics on the smoothed timeline: truth is aligned by window end.
pub fn run_evaluate(
    detection: &DetectionResult,
    truth: &LabelVector,
    min_cluster_len: usize,
) -> Result<MetricsBlock, PipelineError> {
    let aligned = align_labels(truth, detection.time_offset + 1).at(Step::Evaluation)?;
    evaluate(&detection.flags, &aligned, min_cluster_len).at(Step::Evaluation)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainParams {
    pub method: ImportanceChoice,
    pub forest: ForestParams,
    /// Rows of the original test timeline; defaults to 1000 rows centered
    /// on the longest flagged run.
    pub window: Option<Range<usize>>,
    pub extra: usize,
    pub features: FeatureSource,
    pub top: usize,
}

impl Default for ExplainParams {
    fn default() -> Self {
        Self {
            method: ImportanceChoice::Both,
            forest: ForestParams::default(),
            window: None,
            extra: 0,
            features: FeatureSource::Smoothed,
            top: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainReport {
    /// Original test rows used, end exclusive.
    pub window: (usize, usize),
    pub features: FeatureSource,
    pub n_rows: usize,
    pub n_flagged: usize,
    pub top: usize,
    pub reports: Vec<ImportanceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oob_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

const DEFAULT_WINDOW: usize = 1000;

/// Window of `width` rows centered on the longest run of ones.
pub fn default_window(flags: &LabelVector, width: usize) -> Option<Range<usize>> {
    let f = flags.as_slice();
    let mut best: Option<(usize, usize)> = None;
    let mut t = 0;
    while t < f.len() {
        if f[t] == 1 {
            let s = t;
            while t < f.len() && f[t] == 1 {
                t += 1;
            }
            if best.is_none_or(|(bs, be)| t - s > be - bs) {
                best = Some((s, t));
            }
        } else {
            t += 1;
        }
    }
    let (s, e) = best?;
    let width = width.min(f.len());
    let mid = (s + e) / 2;
    let start = mid.saturating_sub(width / 2).min(f.len() - width);
    Some(start..start + width)
}

/// Step 5: ranks variables by how well they separate flagged rows in the
/// window from the unflagged ones (plus `extra` training rows).
pub fn run_explain(
    model: &SandModel,
    train: &SeriesMatrix,
    test: &SeriesMatrix,
    detection: &DetectionResult,
    params: &ExplainParams,
) -> Result<ExplainReport, PipelineError> {
    let offset = detection.time_offset;
    let cfg = model.smoothing;
    let n_scores = detection.flags.len();
    let window = match &params.window {
        Some(w) => {
            if w.start < offset || w.end > offset + n_scores {
                return Err(Error::InvalidParameter(format!(
                    "window {w:?} outside scored rows {offset}..{}",
                    offset + n_scores
                )))
                .at(Step::Importance);
            }
            w.start - offset..w.end - offset
        }
        None => default_window(&detection.flags, DEFAULT_WINDOW)
            .ok_or(Error::SingleClass)
            .at(Step::Importance)?,
    };
    let (test_rows, train_rows) = match params.features {
        FeatureSource::Smoothed => (
            smooth_matrix(test, cfg).at(Step::Smoothing)?,
            smooth_matrix(train, cfg).at(Step::Smoothing)?,
        ),
        FeatureSource::Raw => (
            test.rows(offset..test.len()).at(Step::Importance)?,
            train.clone(),
        ),
    };
    let data = assemble_step5_dataset(&test_rows, &detection.flags, window.clone(), &train_rows, params.extra)
        .at(Step::Importance)?;
    let n_flagged = data.targets().iter().filter(|&&t| t == 1).count();
    let mut reports = Vec::new();
    let mut oob_accuracy = None;
    let mut ridge = None;
    if matches!(params.method, ImportanceChoice::Rf | ImportanceChoice::Both) {
        let (forest, report) = gini_importance(&data, &params.forest).at(Step::Importance)?;
        oob_accuracy = forest.oob_accuracy(&data);
        reports.push(report);
    }
    if matches!(params.method, ImportanceChoice::Lr | ImportanceChoice::Both) {
        let (r, report) = rcde_escalating(&data).at(Step::Importance)?;
        ridge = Some(r);
        reports.push(report);
    }
    Ok(ExplainReport {
        window: (window.start + offset, window.end + offset),
        features: params.features,
        n_rows: data.n_rows(),
        n_flagged,
        top: params.top,
        reports,
        oob_accuracy,
        ridge,
    })
}

/// Raises the ridge by factors of 100 while the fit fails to converge.
fn rcde_escalating(data: &crate::importance::Step5Dataset) -> crate::Result<(f64, ImportanceReport)> {
    let mut ridge = DEFAULT_RIDGE;
    loop {
        match rcde(data, ridge) {
            Ok((_, report)) => return Ok((ridge, report)),
            Err(Error::LogisticNoConvergence { .. }) if ridge < 1.0 => ridge *= 100.0,
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split;
    use crate::synthetic::{generate, CollinearGroup, PlantedAnomaly, SynthConfig};

    fn planted() -> SynthConfig {
        let mut cfg = SynthConfig::new(12, 6000, 2000, 21);
        cfg.collinear_groups = vec![CollinearGroup { base: 0, dependents: vec![1], noise: 0.0 }];
        cfg.anomalies = vec![
            PlantedAnomaly { start: 300, length: 150, vars: vec![3, 7, 11], shift: 6.0 },
            PlantedAnomaly { start: 1200, length: 200, vars: vec![4, 5, 6], shift: 6.0 },
        ];
        cfg
    }

    fn run(kind: ThresholdKind, h: usize) -> (SandModel, DetectionResult, DetectReport, SeriesMatrix, SeriesMatrix) {
        let (x, truth, s) = generate(&planted()).unwrap();
        let (train, test) = split(&x, s).unwrap();
        let truth_test = truth.slice(s.train_end..x.len());
        let params = DetectParams {
            smoothing: SmoothConfig::new(h, FilterKind::Median).unwrap(),
            threshold: ThresholdSpec::with_kind(kind),
            min_cluster_len: 100,
            timing: false,
            ..DetectParams::default()
        };
        let (m, d, r) = run_detect(&train, &test, Some(&truth_test), &params).unwrap();
        (m, d, r, train, test)
    }

    #[test]
    fn planted_anomalies_are_found() {
        for kind in [ThresholdKind::Mvt, ThresholdKind::Pot] {
            let (_, _, r, _, _) = run(kind, 1);
            let m = r.metrics.unwrap();
            assert_eq!(m.ric, Some(1.0), "{kind:?}");
            assert!(m.precision >= 0.9, "{kind:?}: {}", m.precision);
            assert_eq!(r.vif.removed[0].0, 0);
        }
    }

    #[test]
    fn report_lists_steps_in_order() {
        let (_, _, r, _, _) = run(ThresholdKind::Mvt, 1);
        assert_eq!(r.steps, DETECT_STEPS);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("timing"));
        assert!(json.contains("\"vif\""));
    }

    #[test]
    fn deterministic_report() {
        let a = serde_json::to_string(&run(ThresholdKind::Pot, 3).2).unwrap();
        let b = serde_json::to_string(&run(ThresholdKind::Pot, 3).2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_as_test_gives_no_mvt_flags() {
        let (x, _, s) = generate(&planted()).unwrap();
        let (train, _) = split(&x, s).unwrap();
        let params = DetectParams {
            threshold: ThresholdSpec::with_kind(ThresholdKind::Mvt),
            ..DetectParams::default()
        };
        for h in [1, 5] {
            let p = DetectParams { smoothing: SmoothConfig::new(h, FilterKind::Mean).unwrap(), ..params };
            let (_, d, _) = run_detect(&train, &train, None, &p).unwrap();
            assert_eq!(d.flags.count_ones(), 0);
        }
    }

    #[test]
    fn smoothing_offsets_the_timeline() {
        let (_, d, r, _, test) = run(ThresholdKind::Mvt, 10);
        assert_eq!(d.time_offset, 9);
        assert_eq!(d.scores.len(), test.len() - 9);
        assert!(r.intervals.iter().all(|&(s, _)| s >= 9));
    }

    #[test]
    fn explain_ranks_injected_variables() {
        let (m, d, _, train, test) = run(ThresholdKind::Mvt, 1);
        let params = ExplainParams {
            window: Some(0..1000),
            forest: ForestParams { seed: 4, ..ForestParams::default() },
            ..ExplainParams::default()
        };
        let e = run_explain(&m, &train, &test, &d, &params).unwrap();
        let rf = &e.reports[0];
        let top: Vec<&str> = rf.top(5).iter().map(|v| v.name.as_str()).collect();
        for v in ["x3", "x7", "x11"] {
            assert!(top.contains(&v), "{v} not in {top:?}");
        }
        assert_eq!(e.reports.len(), 2);
        assert!(e.ridge.is_some());
    }

    #[test]
    fn explain_without_flags_fails() {
        let (m, d, _, train, test) = run(ThresholdKind::Mvt, 1);
        let params = ExplainParams { window: Some(1500..1800), ..ExplainParams::default() };
        let err = run_explain(&m, &train, &test, &d, &params).unwrap_err();
        assert_eq!(err.step, Step::Importance);
        assert!(matches!(err.source, Error::SingleClass));
    }

    #[test]
    fn default_window_centers_longest_run() {
        let mut f = vec![0u8; 5000];
        f[100..110].iter_mut().for_each(|v| *v = 1);
        f[3000..3400].iter_mut().for_each(|v| *v = 1);
        let w = default_window(&LabelVector::new(f, "s").unwrap(), 1000).unwrap();
        assert_eq!(w, 2700..3700);
        let f = LabelVector::new(vec![0, 1, 0], "s").unwrap();
        assert_eq!(default_window(&f, 1000).unwrap(), 0..3);
    }

    #[test]
    fn errors_carry_their_step() {
        let x = SeriesMatrix::new(vec!["a".into(), "b".into()], vec![1.0, 2.0, 1.0, 3.0, 1.0, 4.0]).unwrap();
        let err = fit_model(&x, &DetectParams::default()).unwrap_err();
        assert_eq!(err.step, Step::Collinearity);
        assert_eq!(err.exit_code(), 5);
        let err = fit_model(&x, &DetectParams {
            smoothing: SmoothConfig::new(10, FilterKind::Mean).unwrap(),
            ..DetectParams::default()
        })
        .unwrap_err();
        assert_eq!(err.step, Step::Smoothing);
    }

    #[test]
    fn config_from_toml() {
        let c = PipelineConfig::from_toml("smooth-window = 10\nthreshold = \"mvt\"\nstep5-window = \"5:9\"\n").unwrap();
        assert_eq!(c.smooth_window, 10);
        assert_eq!(c.threshold, ThresholdKind::Mvt);
        assert_eq!(c.explain_params().unwrap().window, Some(5..9));
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(parse_window("9:5").is_err());
    }
}
