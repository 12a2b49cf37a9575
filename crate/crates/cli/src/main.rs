mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "reluphase",
    version,
    about = "Phase-diagram experiments for wide two-layer ReLU networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the named initializations with their κ, κ′, γ and γ′.
    Presets(PresetsArgs),
    /// Train one network and export its trajectory, snapshots and feature scatter.
    Train(TrainArgs),
    /// Sweep a (γ, γ′) grid over widths and fit relative-deviation slopes.
    Scan(ScanArgs),
    /// Limiting kernels, their spectra and the predicted decay rates.
    Spectrum(SpectrumArgs),
    /// Condensation summary and scatter of a parameter snapshot.
    Condense(CondenseArgs),
    /// Check the initialization, decay and relative-change bounds for one cell.
    /// Exits with status 1 if a hard check fails.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Flat `key = value` file with defaults for any flag; flags win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Print every setting in config-file form and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Directory for output files and the manifest.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// `builtin:default` (alias `builtin:fig2`), a CSV file with header
    /// `x1,...,xd,y`, or `idx:IMAGES,LABELS[,COUNT]`.
    #[arg(long, default_value = "builtin:default")]
    pub dataset: String,
    /// Multiplier applied to IDX labels.
    #[arg(long, default_value_t = 1.0 / 9.0)]
    pub label_scale: f64,
    /// Validate the dataset against the assumptions of the convergence bounds.
    #[arg(long)]
    pub theory: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true, conflicts_with = "preset")]
    pub gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "preset")]
    pub gamma_prime: Option<f64>,
    /// lecun, he, xavier, ntk, mean-field or e-et-al.
    #[arg(long)]
    pub preset: Option<String>,
    /// Exponent `b` of `β = m^(−b)` for the e-et-al preset.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_exponent: Option<f64>,
    /// Coefficient of `κ = c·m^(−γ)`.
    #[arg(long, default_value_t = 1.0)]
    pub kappa_coeff: f64,
    /// Coefficient of `κ′ = c′·m^(−γ′)`.
    #[arg(long, default_value_t = 1.0)]
    pub kappa_prime_coeff: f64,
}

#[derive(Args, Debug, Clone)]
pub struct FlowArgs {
    /// Stop at normalized time `horizon / κ`.
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    /// Additional cap on normalized time.
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Absolute risk threshold; defaults to the relative one (or the theory
    /// threshold with `--theory`).
    #[arg(long)]
    pub risk_tolerance: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub relative_tolerance: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_steps: usize,
    /// Defaults to a stability estimate at initialization.
    #[arg(long)]
    pub initial_step: Option<f64>,
    /// Defaults to 1024 times the initial step.
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Keep the initial step instead of adapting it.
    #[arg(long)]
    pub fixed_step: bool,
    #[arg(long, default_value_t = 1)]
    pub record_stride: usize,
    /// Save parameters every this many accepted steps (0 disables).
    #[arg(long, default_value_t = 0)]
    pub snapshot_stride: usize,
}

#[derive(Args, Debug, Clone)]
pub struct PresetsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input dimension used by the LeCun and He presets.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// `b` for the e-et-al row.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta_exponent: f64,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub flow: FlowArgs,
    /// Width.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Antisymmetric initialization: auto (when γ ≤ ½), on or off.
    #[arg(long, default_value = "auto")]
    pub asi: String,
    /// Integrate the original model instead of the normalized one.
    #[arg(long)]
    pub original: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Comma-separated γ values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub gamma: Vec<f64>,
    /// Comma-separated γ′ values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub gamma_prime: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub replicates: usize,
    /// Base seed of the grid.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub relative_tolerance: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub kappa_coeff: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kappa_prime_coeff: f64,
    /// Run the original model with `β₂ = m^(−b)`.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_exponent: Option<f64>,
    /// Result cache; defaults to `<out-dir>/cache`.
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Width for the decay rates and the finite-width Gram matrices.
    #[arg(long)]
    pub m: Option<usize>,
    /// Monte Carlo samples for a sampled estimate of the kernels (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct CondenseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Snapshot written by `train`; without it a fresh initialization is used.
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<PathBuf>,
    /// Snapshot to compare against, tagged `initial` in the scatter.
    #[arg(long, value_name = "PATH")]
    pub initial: Option<PathBuf>,
    /// Width of the fresh initialization.
    #[arg(long)]
    pub m: Option<usize>,
    /// Input dimension of the fresh initialization, bias included.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub asi: bool,
    #[arg(long, default_value_t = 0.1)]
    pub amplitude_fraction: f64,
    /// Angular clustering tolerance in radians.
    #[arg(long, default_value_t = 0.05)]
    pub cosine_tolerance: f64,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub flow: FlowArgs,
    /// Width of the main run.
    #[arg(long)]
    pub m: usize,
    /// Widths for the relative-change study; defaults to m and 2m.
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub decay_tolerance: f64,
    #[arg(long, default_value_t = 10.0)]
    pub rd_constant: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub residual_tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn parse(args: Vec<OsString>) -> Result<(Cli, clap::ArgMatches), clap::Error> {
    let expanded =
        config::expand(args).map_err(|e| Cli::command().error(clap::error::ErrorKind::Io, format!("{e:#}")))?;
    let matches = Cli::command().try_get_matches_from(expanded)?;
    let cli = Cli::from_arg_matches(&matches)?;
    Ok((cli, matches))
}

fn main() -> ExitCode {
    let (cli, matches) = match parse(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let settings = config::render(name, sub);
    match commands::run(cli.command, name, &settings) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
