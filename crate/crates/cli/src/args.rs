use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "tpe",
    version,
    about = "Triplet probability embedding: training, evaluation and clustering of feature vectors"
)]
pub struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled feature set.
    Gen(GenArgs),
    /// Write the PCA initialization of the projection matrix.
    PcaInit(PcaInitArgs),
    /// Learn a projection matrix from labeled features.
    Train(TrainArgs),
    /// Apply a projection matrix to every record.
    Project(ProjectArgs),
    /// Collapse templates to one vector each.
    Pool(PoolArgs),
    /// Verification metrics over a pair protocol.
    VerifyEval(VerifyArgs),
    /// Closed- and open-set identification metrics.
    IdentEval(IdentArgs),
    /// Cluster records by average-linkage agglomeration or k-means.
    Cluster(ClusterArgs),
    /// Raw vs TDE vs TPE verification on synthetic data.
    ReproFig3(ReproArgs),
    /// Raw vs TPE clustering of pooled synthetic templates.
    ReproCluster(ReproArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Tpe,
    Tde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolArg {
    Average,
    Media,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Agglo,
    Kmeans,
}

/// A feature file to read.
#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Feature file: inline CSV, binary `.bin`, or its manifest.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Keep features as stored instead of scaling them to unit length.
    #[arg(long)]
    pub no_normalize: bool,
    /// Use only records from this split.
    #[arg(long, value_parser = ["train", "test"])]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    /// JSON generator config (or a previous run.json); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Records per subject.
    #[arg(long)]
    pub per: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Within-class noise level.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Media items per subject.
    #[arg(long)]
    pub media: Option<usize>,
    #[arg(long)]
    pub media_offset: Option<f64>,
    #[arg(long)]
    pub nuisance_rank: Option<usize>,
    #[arg(long)]
    pub nuisance_sigma: Option<f64>,
    #[arg(long)]
    pub media_nuisance: Option<f64>,
    /// Templates per subject; switches to the template layout.
    #[arg(long)]
    pub templates: Option<usize>,
    #[arg(long, requires = "templates")]
    pub media_per_template: Option<usize>,
    #[arg(long, requires = "templates")]
    pub max_frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    pub format: FileFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PcaInitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Target dimension.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// JSON training config (or a previous run.json); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Target dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Candidates drawn per hard-negative search.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Hinge margin (TDE).
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Multiply the learning rate by this factor every `--decay-every` iterations.
    #[arg(long, requires = "decay_every")]
    pub decay_factor: Option<f64>,
    #[arg(long, requires = "decay_factor")]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `TPEW` matrix file.
    #[arg(short, long)]
    pub matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    pub format: FileFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PoolArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = PoolArg::Media)]
    pub mode: PoolArg,
    #[arg(long, value_enum, default_value_t = FileFormat::Bin)]
    pub format: FileFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Project features with this matrix before scoring.
    #[arg(short, long)]
    pub matrix: Option<PathBuf>,
    /// Pair protocol CSV `id_a,id_b,label`; defaults to every pair of records.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    pub fmr: Vec<f64>,
    /// Learn an accuracy threshold on these pairs and report test accuracy.
    #[arg(long)]
    pub threshold_pairs: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IdentArgs {
    /// Gallery features, one record per subject.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Probe features; subjects absent from the gallery are non-mated.
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(short, long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ranks: Vec<usize>,
    /// Target FPIRs; defaults to 0.01,0.1 when non-mated probes exist.
    #[arg(long, value_delimiter = ',')]
    pub fpir: Option<Vec<f64>>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("threshold").args(["cutoff", "learn_cutoff"])))]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Algo::Agglo)]
    pub algo: Algo,
    /// Linkage distance cutoff in [0, 2].
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Labeled features on which to learn the cutoff.
    #[arg(long)]
    pub learn_cutoff: Option<PathBuf>,
    /// Clusters smaller than this are pruned from the count.
    #[arg(long, default_value_t = 3)]
    pub min_size: usize,
    /// Number of clusters (k-means).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproArgs {
    /// JSON experiment config (or a previous run.json); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for both data generation and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}
