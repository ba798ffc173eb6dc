//! `osm`: instance generation, per-vertex ratio reports and certification
//! runs for fractional online stochastic matching.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use osm_core::oracle::PolicyMode;

use config::{Check, GeneratorKind, RunConfig};

/// Conditional-probability samples when `--mc-samples` is given bare.
const DEFAULT_MC_SAMPLES: &str = "90000";

#[derive(Parser)]
#[command(name = "osm", version, about = "Unbiased estimators for online stochastic matching")]
struct Cli {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file (and a rule file for worst-case instances).
    Generate(GenerateArgs),
    /// Per-vertex fractional and OCS ratios of an estimator as CSV.
    Ratio(RatioArgs),
    /// Run the numerical certification checks; exits 1 if any fails.
    Certify(CertifyArgs),
}

#[derive(Args, Default)]
struct GeneratorArgs {
    #[arg(long, value_enum)]
    kind: Option<GeneratorKind>,
    /// Number of arrivals.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n_offline: Option<usize>,
    #[arg(long)]
    types_per_vertex: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    weight_min: Option<f64>,
    #[arg(long)]
    weight_max: Option<f64>,
    #[arg(long)]
    iid: Option<bool>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rule file for worst-case instances; defaults to `<out stem>.rule.json`.
    #[arg(long)]
    rule_out: Option<PathBuf>,
}

#[derive(Args)]
struct RatioArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// independent, fully_correlated, even_mix, windowed_mix, subset or rule_independent.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// Permutation rule file for rule_independent.
    #[arg(long)]
    rule: Option<PathBuf>,
    /// Sampled realizations instead of exact enumeration.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    exact: bool,
    /// Estimate conditional probabilities by sampling.
    #[arg(long, num_args = 0..=1, default_missing_value = DEFAULT_MC_SAMPLES)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Restrict to some checks; repeatable.
    #[arg(long, value_enum)]
    only: Vec<Check>,
    #[arg(long)]
    seed: Option<u64>,
    /// Arrivals in the worst-case experiment.
    #[arg(long)]
    n: Option<usize>,
    /// Samples per μ in the worst-case experiment.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the experiment curve here.
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PolicyArg {
    Canonical,
    Exchangeable,
}

impl From<PolicyArg> for PolicyMode {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Canonical => PolicyMode::Canonical,
            PolicyArg::Exchangeable => PolicyMode::Exchangeable,
        }
    }
}

impl GeneratorArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            kind: self.kind,
            n: self.n,
            mu: self.mu,
            n_offline: self.n_offline,
            types_per_vertex: self.types_per_vertex,
            edge_prob: self.edge_prob,
            weight_min: self.weight_min,
            weight_max: self.weight_max,
            iid: self.iid,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy)]
enum Which {
    Generate,
    Ratio,
    Certify,
}

impl Command {
    fn into_flags(self) -> (Which, RunConfig) {
        match self {
            Command::Generate(a) => (
                Which::Generate,
                RunConfig { seed: a.seed, out: a.out, rule_out: a.rule_out, ..a.generator.into_config() },
            ),
            Command::Ratio(a) => (Which::Ratio, RunConfig {
                instance: a.instance,
                estimator: a.estimator,
                beta: a.beta,
                rule: a.rule,
                trials: a.trials,
                exact: a.exact.then_some(true),
                mc_samples: a.mc_samples,
                seed: a.seed,
                policy: a.policy.map(Into::into),
                out: a.out,
                ..a.generator.into_config()
            }),
            Command::Certify(a) => (Which::Certify, RunConfig {
                only: (!a.only.is_empty()).then_some(a.only),
                seed: a.seed,
                n: a.n,
                samples: a.samples,
                out: a.out,
                curve_out: a.curve_out,
                ..Default::default()
            }),
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (which, flags) = cli.command.into_flags();
    let config = file.merged(flags);
    match which {
        Which::Generate => commands::generate(&config).map(|_| true),
        Which::Ratio => commands::ratio(&config).map(|_| true),
        Which::Certify => commands::certify(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
