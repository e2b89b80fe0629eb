use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sand_core::pipeline::{FeatureSource, ImportanceChoice, InputFormat};
use sand_core::{FilterKind, PipelineConfig, ThresholdKind};

#[derive(Debug, Parser)]
#[command(name = "sand", version, about = "Semi-supervised anomaly detection for multivariate time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit on training data, score and flag the test segment.
    Detect(DetectArgs),
    /// Rank the variables behind a window of flagged observations.
    Explain(ExplainArgs),
    /// Compare flags against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with planted anomalies.
    Synth(SynthArgs),
    /// Fit and save a model without scoring.
    Fit(DetectArgs),
    /// Score data with a saved model.
    Score(DetectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Smd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Threshold {
    Mvt,
    Pot,
    Chi2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Importance {
    Rf,
    Lr,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Features {
    Smoothed,
    Raw,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// TOML file whose keys mirror these flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// One file holding both segments, split at --train-end.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub train_end: Option<usize>,
    /// Ground-truth labels for the test segment.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Saved model (score, explain).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub smooth_window: Option<usize>,
    #[arg(long, value_enum)]
    pub smooth_kind: Option<Kind>,
    #[arg(long)]
    pub vif_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub threshold: Option<Threshold>,
    #[arg(long)]
    pub pot_q: Option<f64>,
    #[arg(long)]
    pub pot_percentile: Option<f64>,
    #[arg(long)]
    pub chi2_alpha: Option<f64>,
    #[arg(long)]
    pub min_cluster_len: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave wall-clock timings out of the report.
    #[arg(long)]
    pub no_timing: bool,
    /// Also write a plain-text summary.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub detect: DetectArgs,
    #[arg(long, value_enum)]
    pub importance: Option<Importance>,
    #[arg(long)]
    pub rf_trees: Option<usize>,
    #[arg(long)]
    pub rf_seed: Option<u64>,
    /// Test rows `start:end` (end exclusive) on the original timeline.
    #[arg(long)]
    pub step5_window: Option<String>,
    /// Anomaly-free training rows appended as negatives.
    #[arg(long)]
    pub step5_extra: Option<usize>,
    #[arg(long, value_enum)]
    pub step5_features: Option<Features>,
    /// Number of variables highlighted per ranking.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Scores CSV written by detect or score (timestamp, score, flag).
    #[arg(long)]
    pub pred: PathBuf,
    /// Labels on the original test timeline.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub min_cluster_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 50_000)]
    pub t_a: usize,
    #[arg(long, default_value_t = 10_000)]
    pub t_b: usize,
    /// `base:dep,dep[:noise]`, repeatable.
    #[arg(long)]
    pub collinear: Vec<String>,
    /// `start:length:var,var:shift` on the test timeline, repeatable.
    #[arg(long)]
    pub anomaly: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl DetectArgs {
    /// Config file (if any) with every given flag applied on top.
    pub fn config(&self) -> sand_core::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    c.$field = Some(v.clone());
                }
            };
            ($field:ident, $map:expr) => {
                if let Some(v) = self.$field {
                    c.$field = $map(v);
                }
            };
        }
        set!(train);
        set!(test);
        set!(data);
        set!(train_end);
        set!(labels);
        set!(label_column);
        set!(model);
        set!(out);
        set!(format, |f| match f {
            Format::Csv => InputFormat::Csv,
            Format::Smd => InputFormat::Smd,
        });
        set!(smooth_window, |v| v);
        set!(smooth_kind, |k| match k {
            Kind::Mean => FilterKind::Mean,
            Kind::Median => FilterKind::Median,
        });
        set!(vif_threshold, |v| v);
        set!(threshold, |t| match t {
            Threshold::Mvt => ThresholdKind::Mvt,
            Threshold::Pot => ThresholdKind::Pot,
            Threshold::Chi2 => ThresholdKind::Chi2,
        });
        set!(pot_q, |v| v);
        set!(pot_percentile, |v| v);
        set!(chi2_alpha, |v| v);
        set!(min_cluster_len, |v| v);
        set!(seed, |v| v);
        if self.no_timing {
            c.timing = false;
        }
        if self.summary {
            c.summary = true;
        }
        Ok(c)
    }
}

impl ExplainArgs {
    pub fn config(&self) -> sand_core::Result<PipelineConfig> {
        let mut c = self.detect.config()?;
        if let Some(i) = self.importance {
            c.importance = match i {
                Importance::Rf => ImportanceChoice::Rf,
                Importance::Lr => ImportanceChoice::Lr,
                Importance::Both => ImportanceChoice::Both,
            };
        }
        if let Some(f) = self.step5_features {
            c.step5_features = match f {
                Features::Smoothed => FeatureSource::Smoothed,
                Features::Raw => FeatureSource::Raw,
            };
        }
        if let Some(v) = self.rf_trees {
            c.rf_trees = v;
        }
        if self.rf_seed.is_some() {
            c.rf_seed = self.rf_seed;
        }
        if self.step5_window.is_some() {
            c.step5_window = self.step5_window.clone();
        }
        if let Some(v) = self.step5_extra {
            c.step5_extra = v;
        }
        if let Some(v) = self.top {
            c.top = v;
        }
        Ok(c)
    }
}
