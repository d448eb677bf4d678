use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod failure;
mod output;

use config::{MappingKind, RealizeMethod};
use failure::Failure;

/// Congruence class models for networks: sampling, Bayesian inference on
/// partially observed networks, and simulation studies.
#[derive(Parser)]
#[command(name = "ccm", version)]
struct Cli {
    /// Master seed; overrides any seed in the config file.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,

    /// Worker threads for replications and chains (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Default scale for simulate and wphi-study.
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,

    /// Output directory.
    #[arg(
        long,
        short,
        global = true,
        env = "CCM_OUT_DIR",
        default_value = "ccm-out"
    )]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

impl ProfileArg {
    fn name(self) -> &'static str {
        match self {
            ProfileArg::Desk => "desk",
            ProfileArg::Paper => "paper",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample networks from a CCM with the tie/no-tie Metropolis-Hastings chain.
    Generate(GenerateArgs),
    /// Gibbs sampling of the unobserved network and CCM parameters.
    Infer(InferArgs),
    /// Run a recovery or illustration study.
    Simulate(SimulateArgs),
    /// Estimate normalizing-mass ratios under perturbed parameters.
    WphiStudy(WphiArgs),
    /// Build a network with a given classification mixing matrix.
    RealizeMm(RealizeArgs),
    /// Build a genetic linkage network from aligned sequences.
    IngestVgl(VglArgs),
    /// Convergence diagnostics and trace plots for a chain CSV.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Default)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub mapping: Option<MappingKind>,
    /// Number of nodes.
    #[arg(long)]
    pub n: Option<usize>,
    /// Uniform law over congruence classes.
    #[arg(long)]
    pub uniform: bool,
    /// Degree probabilities, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub nb_size: Option<f64>,
    #[arg(long)]
    pub nb_mu: Option<f64>,
    /// Contiguous class sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub class_sizes: Option<Vec<usize>>,
    /// `node,label` file for mixing models.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Mixing cell probabilities in upper-triangle order.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Dirichlet prior concentration per component.
    #[arg(long)]
    pub prior_alpha0: Option<f64>,
    #[arg(long)]
    pub gamma_shape: Option<f64>,
    #[arg(long)]
    pub gamma_rate: Option<f64>,
}

#[derive(Args, Default)]
pub struct SamplerArgs {
    /// Total Metropolis-Hastings steps.
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Probability of proposing an existing edge.
    #[arg(long)]
    pub tnt_edge_prob: Option<f64>,
    /// Accept with the plain target ratio, without the proposal correction.
    #[arg(long)]
    pub paper_faithful: bool,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// TOML config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Also write every retained network as an edge list.
    #[arg(long)]
    pub save_networks: bool,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observed edge list.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Sampled node ids; dyads between two sampled nodes are known.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Parameters to draw trace plots for, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub traces: Option<Vec<String>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub outer_iterations: Option<u64>,
    #[arg(long)]
    pub outer_burn_in: Option<u64>,
    /// Inner Metropolis-Hastings steps per unknown dyad per outer iteration.
    #[arg(long)]
    pub inner_sweep_factor: Option<f64>,
    #[arg(long)]
    pub tnt_edge_prob: Option<f64>,
    #[arg(long)]
    pub paper_faithful: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Illustration,
    Degree,
    Mixing,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Node sampling fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub outer_iterations: Option<u64>,
    #[arg(long)]
    pub outer_burn_in: Option<u64>,
    #[arg(long)]
    pub prior_alpha0: Option<f64>,
    /// Illustration: networks per method.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Skip inference and only evaluate the complete case.
    #[arg(long)]
    pub no_infer: bool,
}

#[derive(Args)]
pub struct WphiArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mapping: Option<MappingKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub nb_size: Option<f64>,
    #[arg(long)]
    pub nb_mu: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub class_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Relative perturbations of the mean parameter, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub deltas: Option<Vec<f64>>,
    /// Independent harvesting chains.
    #[arg(long)]
    pub chains: Option<usize>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Args)]
pub struct RealizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Symmetric integer matrix, one row per line.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Class sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub class_sizes: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub method: Option<RealizeMethod>,
}

#[derive(Args)]
pub struct VglArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Aligned sequences, `>id` headers.
    #[arg(long)]
    pub fasta: Option<PathBuf>,
    /// CSV with header `id,label,sequenced`.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Largest distance that still links two individuals.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// skip or resolve-fractional.
    #[arg(long)]
    pub ambiguity: Option<ccm_core::vgl::AmbiguityPolicy>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV with one column per parameter; an `iteration` column is ignored.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Leading rows to drop.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Columns to plot, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Chains with variance below this are reported as not computable.
    #[arg(long)]
    pub min_variance: Option<f64>,
}

/// Settings shared by every subcommand.
pub struct Global {
    pub seed: Option<u64>,
    pub workers: usize,
    pub profile: ProfileArg,
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = Global {
        seed: cli.seed,
        workers: cli.workers,
        profile: cli.profile,
        out: cli.out,
    };
    match cli.command {
        Command::Generate(a) => commands::generate(&g, a),
        Command::Infer(a) => commands::infer(&g, a),
        Command::Simulate(a) => commands::simulate(&g, a),
        Command::WphiStudy(a) => commands::wphi_study(&g, a),
        Command::RealizeMm(a) => commands::realize_mm(&g, a),
        Command::IngestVgl(a) => commands::ingest_vgl(&g, a),
        Command::Diagnose(a) => commands::diagnose(&g, a),
    }
}

fn one_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    std::panic::set_hook(Box::new(|info| {
        eprintln!("error: internal: {}", one_line(&info.to_string()));
    }));
    match std::panic::catch_unwind(move || run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", one_line(f.message()));
            ExitCode::from(f.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
