use std::path::PathBuf;

use cadesh::{Error, PipelineConfig, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cadesh", version, about = "Two-step collaborative anomaly detection for smart-home flows")]
pub struct Cli {
    /// Log progress and stage timings to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, enrich, cleanse and partition a flow CSV.
    Ingest(IngestArgs),
    /// Train both filters on an ingested dataset directory.
    Train(TrainArgs),
    /// Write per-cluster distance thresholds into a trained model.
    Calibrate(CalibrateArgs),
    /// Emit one verdict per flow.
    Detect(DetectArgs),
    /// Evaluate a model on the test partition, or compute metrics from
    /// confusion counts.
    Eval(EvalArgs),
    /// Compare the pipeline against one-step baselines.
    Bench(BenchArgs),
    /// Exhaustive hyperparameter grid.
    Grid(GridArgs),
    /// Retrain on the most recent N flows for several N.
    Sweep(SweepArgs),
    /// Generate a labeled synthetic dataset.
    Synth(SynthArgs),
}

/// Pipeline settings: a key=value file, then individual overrides.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Flat key=value file using the configuration field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed for every stochastic step (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs_max: Option<String>,
    #[arg(long)]
    pub delta_min: Option<String>,
    #[arg(long)]
    pub patience_max: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub pctl_frequent: Option<String>,
    #[arg(long)]
    pub pctl_known: Option<String>,
    #[arg(long)]
    pub k_min: Option<String>,
    #[arg(long)]
    pub k_max: Option<String>,
    /// drop | prefix-one-hot
    #[arg(long)]
    pub ip_treatment: Option<String>,
    /// as-is | log1p
    #[arg(long)]
    pub numeric_treatment: Option<String>,
    /// all | manual-subset | pca | ae-bottleneck
    #[arg(long)]
    pub clustering_features: Option<String>,
    /// raw-euclidean | normalized-euclidean
    #[arg(long)]
    pub distance_mode: Option<String>,
    /// Number in (0,1), or `none` for per-cluster thresholds.
    #[arg(long)]
    pub global_tanh_threshold: Option<String>,
    #[arg(long)]
    pub sanitize_min_port_count: Option<String>,
    #[arg(long)]
    pub silhouette_sample_size: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_kv_str(&crate::io::read_text(path)?)?,
            None => PipelineConfig::default(),
        };
        let overrides = [
            ("epochs_max", &self.epochs_max),
            ("delta_min", &self.delta_min),
            ("patience_max", &self.patience_max),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("pctl_frequent", &self.pctl_frequent),
            ("pctl_known", &self.pctl_known),
            ("k_min", &self.k_min),
            ("k_max", &self.k_max),
            ("ip_treatment", &self.ip_treatment),
            ("numeric_treatment", &self.numeric_treatment),
            ("clustering_features", &self.clustering_features),
            ("distance_mode", &self.distance_mode),
            ("global_tanh_threshold", &self.global_tanh_threshold),
            ("sanitize_min_port_count", &self.sanitize_min_port_count),
            ("silhouette_sample_size", &self.silhouette_sample_size),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Flow CSV in the published column layout.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving training.csv, validation.csv, test.csv and
    /// cleansing_report.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training, validation and test days.
    #[arg(long, default_value = "13,3,5")]
    pub split: String,
    /// Partition by the input's own partition column.
    #[arg(long)]
    pub keep_partition: bool,
    #[arg(long, default_value_t = 10)]
    pub sanitize_min_port_count: usize,
    /// auto | always | never
    #[arg(long, default_value = "auto")]
    pub recompute: String,
    #[arg(long, default_value_t = 5)]
    pub lab_network: u32,
    #[arg(long, default_value_t = 7)]
    pub lab_device: u32,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also calibrate per-cluster thresholds right away.
    #[arg(long)]
    pub calibrate: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory written by `ingest`; its validation partition is used.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file; defaults to overwriting `--model`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the stored percentile for per-cluster thresholds.
    #[arg(long)]
    pub pctl_known: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Flow CSV to classify.
    #[arg(long)]
    pub input: PathBuf,
    /// Verdict CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Classify with the global tanh threshold τ instead of the model's
    /// configured mode; `none` selects per-cluster thresholds.
    #[arg(long)]
    pub tau: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "from_confusion")]
    pub model: Option<PathBuf>,
    /// Directory written by `ingest`; its test partition is evaluated.
    #[arg(long, required_unless_present = "from_confusion")]
    pub data: Option<PathBuf>,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pr_curve: Option<PathBuf>,
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Confusion counts `tp=N fn=N fp=N tn=N` for one scenario; repeat the
    /// flag for further scenarios.
    #[arg(long, num_args = 4, value_names = ["TP", "FN", "FP", "TN"], action = clap::ArgAction::Append)]
    pub from_confusion: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub lof_neighbors: usize,
    /// Training rows kept for LOF.
    #[arg(long, default_value_t = 10_000)]
    pub lof_train_cap: usize,
    #[arg(long, default_value_t = 100)]
    pub if_trees: usize,
    #[arg(long, default_value_t = 256)]
    pub if_subsample: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only evaluate the configured combination.
    #[arg(long)]
    pub single: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated training-pool sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub homes: u32,
    #[arg(long, default_value_t = 7)]
    pub days: u32,
    /// Training, validation and test days; proportional to 13,3,5 by
    /// default.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Parses `tp=3032` style tokens into the four counts.
pub fn parse_confusion(tokens: &[String]) -> Result<(u64, u64, u64, u64)> {
    let (mut tp, mut fn_, mut fp, mut tn) = (None, None, None, None);
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{t}'")))?;
        let v: u64 = v.trim().parse().map_err(|_| Error::Config(format!("invalid count '{t}'")))?;
        let slot = match k.trim().to_ascii_lowercase().as_str() {
            "tp" => &mut tp,
            "fn" => &mut fn_,
            "fp" => &mut fp,
            "tn" => &mut tn,
            other => return Err(Error::Config(format!("unknown confusion key '{other}'"))),
        };
        *slot = Some(v);
    }
    match (tp, fn_, fp, tn) {
        (Some(a), Some(b), Some(c), Some(d)) => Ok((a, b, c, d)),
        _ => Err(Error::Config("confusion counts need tp, fn, fp and tn".into())),
    }
}
