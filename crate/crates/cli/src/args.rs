use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fsc::InitStrategy;

use crate::commands;
use crate::config::{CommandKind, RunConfig, SynthConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fsc", version, about = "Fusion subspace clustering")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one λ and cluster.
    Fit(FitArgs),
    /// Sweep λ with warm starts and select a model.
    Path(PathArgs),
    /// Fit, cluster and fill in missing entries.
    Complete(CompleteArgs),
    /// Generate a union-of-subspaces data set.
    Synth(SynthArgs),
    /// Clustering error and completion RMSE.
    Eval(EvalArgs),
    /// Fit at increasing ranks, removing columns that are explained.
    RankSweep(RankSweepArgs),
    /// Re-run a saved config or manifest.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Data matrix (CSV, one data point per column).
    pub input: PathBuf,
    /// 0/1 mask with the same shape; overrides inline missing markers.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative decrease stopping tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed each basis with its own column instead of a random draw.
    #[arg(long)]
    pub column_init: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long)]
    pub rank: usize,
    /// Fusion weight; 1/(n·d) when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of clusters; chosen by fit score when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long)]
    pub rank: usize,
    /// Comma-separated increasing λ values; a log grid around 1/(n·d) when omitted.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Keep doubling λ past the grid until all subspaces fuse.
    #[arg(long)]
    pub to_single: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long)]
    pub rank: usize,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Use these labels instead of clustering.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Replace observed entries by the model fit as well.
    #[arg(long)]
    pub smooth: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    /// Number of subspaces.
    #[arg(long, default_value_t = 4)]
    pub subspaces: usize,
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// Columns per subspace.
    #[arg(long, default_value_t = 20)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Probability that an entry is observed.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Redraw columns with fewer observed entries than this.
    #[arg(long, default_value_t = 1)]
    pub min_observed: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted labels.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Reference labels.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub completed: Option<PathBuf>,
    /// Fully observed reference matrix.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Mask of the original data; adds the RMSE over unobserved entries.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankSweepArgs {
    #[command(flatten)]
    pub io: InputArgs,
    /// Comma-separated increasing ranks.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file or a `manifest.toml` from an earlier run.
    pub config: PathBuf,
    /// Write to this directory instead of the one in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SolverArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.solver;
        s.seed = self.seed;
        if let Some(m) = self.max_iters {
            s.max_iters = m;
        }
        if let Some(t) = self.tol {
            s.tol_rel = t;
        }
        if self.column_init {
            s.init = InitStrategy::ColumnSeeded;
        }
    }
}

fn with_input(kind: CommandKind, io: &InputArgs) -> RunConfig {
    RunConfig {
        command: kind,
        input: Some(io.input.clone()),
        mask: io.mask.clone(),
        out: Some(io.out.clone()),
        ..Default::default()
    }
}

/// The run configuration for a command line, and whether λ was given
/// explicitly.
pub fn to_config(cli: &Cli) -> Result<(RunConfig, bool), CliError> {
    let (mut cfg, lambda_given) = match &cli.command {
        Command::Fit(a) => {
            let mut c = with_input(CommandKind::Fit, &a.io);
            c.k = a.k;
            c.solver.rank = a.rank;
            c.solver.lambda = a.lambda.unwrap_or(0.0);
            a.solver.apply(&mut c);
            (c, a.lambda.is_some())
        }
        Command::Path(a) => {
            let mut c = with_input(CommandKind::Path, &a.io);
            c.grid = a.grid.clone();
            c.to_single = a.to_single;
            c.solver.rank = a.rank;
            a.solver.apply(&mut c);
            (c, true)
        }
        Command::Complete(a) => {
            let mut c = with_input(CommandKind::Complete, &a.io);
            c.k = a.k;
            c.labels = a.labels.clone();
            c.smooth = a.smooth;
            c.solver.rank = a.rank;
            c.solver.lambda = a.lambda.unwrap_or(0.0);
            a.solver.apply(&mut c);
            (c, a.lambda.is_some())
        }
        Command::Synth(a) => {
            let c = RunConfig {
                command: CommandKind::Synth,
                out: Some(a.out.clone()),
                synth: SynthConfig {
                    d: a.d,
                    subspaces: a.subspaces,
                    rank: a.rank,
                    per_cluster: a.per_cluster,
                    sigma: a.sigma,
                    p: a.p,
                    min_observed: a.min_observed,
                    seed: a.seed,
                },
                ..Default::default()
            };
            (c, true)
        }
        Command::Eval(a) => {
            let c = RunConfig {
                command: CommandKind::Eval,
                labels: a.pred.clone(),
                truth: a.truth.clone(),
                completed: a.completed.clone(),
                reference: a.reference.clone(),
                mask: a.mask.clone(),
                out: a.out.clone(),
                ..Default::default()
            };
            (c, true)
        }
        Command::RankSweep(a) => {
            let mut c = with_input(CommandKind::RankSweep, &a.io);
            c.ranks = a.ranks.clone();
            c.solver.lambda = a.lambda.unwrap_or(0.0);
            a.solver.apply(&mut c);
            (c, true)
        }
        Command::Run(a) => {
            let mut c = RunConfig::load(&a.config)?;
            if a.out.is_some() {
                c.out = a.out.clone();
            }
            (c, true)
        }
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok((cfg, lambda_given))
}

/// Runs a parsed command line and returns what to print.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let (cfg, lambda_given) = to_config(cli)?;
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match cfg.command {
        CommandKind::Fit => commands::cmd_fit_with(&cfg, lambda_given),
        CommandKind::Complete => commands::cmd_complete_with(&cfg, lambda_given),
        _ => commands::run(&cfg),
    }
}
