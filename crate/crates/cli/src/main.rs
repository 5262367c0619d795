mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echofactor::pipeline::StageError;
use echofactor::{Error, FillPolicy};

/// Low-rank + sparse and smooth-NMF decomposition of long echogram time series.
#[derive(Debug, Parser)]
#[command(name = "echofactor", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bundle → PCP → tsNMF → Ward summary, with every stage's outputs.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pcp: PcpArgs,
        #[command(flatten)]
        nmf: NmfArgs,
        /// Ward clusters to cut.
        #[arg(long)]
        clusters: Option<usize>,
        /// Cluster raw activations instead of norm-scaled ones.
        #[arg(long)]
        raw_distance: bool,
    },
    /// Split a bundle or matrix into low-rank and sparse parts.
    Pcp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pcp: PcpArgs,
    },
    /// Multistart temporally smooth NMF of a bundle or matrix.
    Tsnmf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        nmf: NmfArgs,
    },
    /// Median MSE per rank on the data and on row-permuted data.
    RankScan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        nmf: NmfArgs,
        /// `1..8` or `1,2,4`.
        #[arg(long, value_parser = config::parse_ranks)]
        ranks: Option<Ranks>,
    },
    /// Reconstruction vs. smoothness cost over a sweep of η.
    Lcurve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        nmf: NmfArgs,
        /// `1e0..1e6` (one value per decade) or a comma list.
        #[arg(long, value_parser = config::parse_etas)]
        etas: Option<Etas>,
    },
    /// Day-by-day distances, Ward clusters and transitions from activations.
    Summarize {
        #[command(flatten)]
        common: Common,
        /// Activations `H` (K × T CSV).
        #[arg(long = "h")]
        h: PathBuf,
        /// Patterns `W`; when given, activations are scaled by ‖w_k‖.
        #[arg(long = "w")]
        w: Option<PathBuf>,
        /// Use `H` as given even when `--w` is supplied.
        #[arg(long)]
        raw: bool,
        /// Number of clusters.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Write synthetic ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SynthKind::Patterned)]
        kind: SynthKind,
        #[arg(long)]
        n_depth: Option<usize>,
        #[arg(long)]
        n_ping: Option<usize>,
        #[arg(long)]
        n_freq: Option<usize>,
        #[arg(long)]
        n_day: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        smoothness: Option<f64>,
    },
    /// Reshape each column of `W` into per-frequency daily images.
    UnflattenPattern {
        #[command(flatten)]
        common: Common,
        /// Patterns `W` (D × K CSV).
        #[arg(long = "w")]
        w: PathBuf,
        /// Bundle supplying the layout and frequency labels.
        #[arg(long, conflicts_with = "layout")]
        bundle: Option<PathBuf>,
        /// `n_depth,n_ping,n_freq` when no bundle is at hand.
        #[arg(long)]
        layout: Option<String>,
    },
}

// aliases keep clap from treating these as repeated flags
type Ranks = Vec<usize>;
type Etas = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    /// Echogram bundle built from known daily patterns.
    Patterned,
    /// Low-rank plus sparse matrix.
    Lowrank,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, env = "ECHOFACTOR_THREADS")]
    pub threads: Option<usize>,
    /// Fail with exit code 4 when a solver does not converge.
    #[arg(long)]
    pub strict: bool,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Bundle directory or matrix CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `fail`, `column-mean` or `constant(<v>)`.
    #[arg(long, value_parser = parse_fill)]
    pub fill: Option<FillPolicy>,
}

#[derive(Debug, Args)]
pub struct PcpArgs {
    /// ℓ1 weight, or `auto`.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub pcp_max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NmfArgs {
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta_w: Option<f64>,
    #[arg(long)]
    pub beta_h: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub stop_ratio: Option<f64>,
    #[arg(long)]
    pub stop_window: Option<usize>,
}

fn parse_fill(s: &str) -> Result<FillPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a failure: 1 usage, 2 data, 3 numerical, 4 non-convergence.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return classify(e);
        }
        if let Some(e) = cause.downcast_ref::<StageError>() {
            return classify(&e.error);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) => 1,
        Error::NotConverged(_) => 4,
        Error::RunFailed { source, .. } => classify(source),
        Error::Numerical(_) | Error::UndefinedCoefficient(_) | Error::DegenerateCorrelation(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
