use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "switchmargin", version, about = "Stability margins of switched linear systems x' = (A + Δ(t)A0)x")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certified lower bound on the margin; stores the certificate.
    MarginLower(MarginLowerArgs),
    /// Worst-case bang-bang switching for a given δ.
    WorstSwitch(WorstSwitchArgs),
    /// Upper bound from a periodic worst-case trajectory.
    MarginUpper(MarginUpperArgs),
    /// Worst-case and unswitched impulse responses C·φ(t), φ(0) = B.
    Impulse(ImpulseArgs),
    /// Replay a stored switching signal.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Problem file (TOML).
    pub problem: PathBuf,
    /// Certificate store; defaults to `<problem stem>.certs.json` beside the problem file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegratorArgs {
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Time tolerance for switching-event localization.
    #[arg(long)]
    pub event_tol: Option<f64>,
    /// Extra CSV samples on a uniform grid of this spacing.
    #[arg(long)]
    pub sample_dt: Option<f64>,
}

/// Selects a stored certificate; without either flag the largest certified δ wins.
#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct LevelArgs {
    /// Polynomial order 2i of the Lyapunov function (even).
    #[arg(long)]
    pub order: Option<usize>,
    /// Hierarchy level i.
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MarginLowerArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Highest hierarchy level tried.
    #[arg(long, conflicts_with = "order")]
    pub i_max: Option<usize>,
    /// Highest polynomial order tried (even); sets i_max = order / 2.
    #[arg(long)]
    pub order: Option<usize>,
    /// Step in δ between certification attempts.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Relative tolerance of the SDP solver.
    #[arg(long)]
    pub sdp_tol: Option<f64>,
    /// Stop the sweep at this δ.
    #[arg(long)]
    pub delta_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WorstSwitchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub level: LevelArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Switching amplitude δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Horizon t_f.
    #[arg(long)]
    pub tf: Option<f64>,
    /// Trajectory CSV path.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MarginUpperArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub level: LevelArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Sweep step in δ.
    #[arg(long)]
    pub increment: Option<f64>,
    /// Tolerance on | |λ| - 1 | for the periodicity witness.
    #[arg(long)]
    pub tol_unit: Option<f64>,
    /// Maximum number of sweep steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long)]
    pub tf: Option<f64>,
    /// CSV of the worst-case trajectory at the upper bound.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImpulseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub level: LevelArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub tf: Option<f64>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Matrix exponential per segment.
    Exact,
    /// Adaptive Runge-Kutta per segment.
    Ode,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub level: LevelArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Signal JSON (`times`, `values`) or a report from another command.
    #[arg(long)]
    pub signal: PathBuf,
    /// Initial state, comma separated, or `cycle` for the unit eigenvector
    /// of the signal's transition matrix.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Number of back-to-back repetitions of the signal.
    #[arg(long, default_value_t = 1)]
    pub cycles: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}
