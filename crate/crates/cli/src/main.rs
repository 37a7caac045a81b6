use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otdual_cli::commands::{self, DistanceArgs, SemidiscreteArgs, SolveArgs};

/// Entropic optimal transport solvers.
///
/// Exit status: 0 when the requested tolerance was reached, 2 when the
/// iteration budget ran out (outputs hold the last iterate), 1 on errors.
#[derive(Parser)]
#[command(name = "otdual", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Entropic (or, at ε = 0, exact) transport between two histograms.
    Distance(DistanceCli),
    /// Wasserstein barycenter by smooth dual descent.
    Barycenter(SolveCli),
    /// Regularized barycenter by forward-backward splitting.
    Regbary(SolveCli),
    /// JKO gradient flow from one initial density.
    Flow(SolveCli),
    /// Semi-discrete transport from samples to weighted sites.
    Semidiscrete(SemidiscreteCli),
}

#[derive(Args)]
struct DistanceCli {
    /// Source histogram (one value per line) or PGM image.
    #[arg(long)]
    a: PathBuf,
    /// Target histogram or PGM image.
    #[arg(long)]
    b: PathBuf,
    /// Cost matrix as comma-separated rows.
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Grid cost: `line`, `line:LO:HI` or `square:H:W`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Divide the cost by its median before solving.
    #[arg(long)]
    rescale_median: bool,
    /// Write the coupling as comma-separated rows.
    #[arg(long)]
    dump_coupling: Option<PathBuf>,
    /// Write the JSON summary here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveCli {
    /// JSON configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Divide the cost by its median before solving.
    #[arg(long)]
    rescale_median: bool,
    /// Input densities: histogram files or PGM images.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct SemidiscreteCli {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Source samples, one comma-separated point per line.
    #[arg(long)]
    source: PathBuf,
    /// Source sample weights (uniform if omitted).
    #[arg(long)]
    source_weights: Option<PathBuf>,
    /// Target sites, one comma-separated point per line.
    #[arg(long)]
    sites: PathBuf,
    /// Target masses, one value per line.
    #[arg(long)]
    masses: PathBuf,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("OT_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("OT_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "OT_THREADS must be a positive integer, got {v:?}");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn solve(cli: SolveCli) -> SolveArgs {
    SolveArgs { config: cli.config, out: cli.out, rescale_median: cli.rescale_median, inputs: cli.inputs }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    match cli.command {
        Cmd::Distance(d) => commands::distance(&DistanceArgs {
            a: d.a,
            b: d.b,
            cost: d.cost,
            grid: d.grid,
            epsilon: d.epsilon,
            tol: d.tol,
            max_iter: d.max_iter,
            rescale_median: d.rescale_median,
            dump_coupling: d.dump_coupling,
            out: d.out,
        }),
        Cmd::Barycenter(s) => commands::barycenter(&solve(s)),
        Cmd::Regbary(s) => commands::regbary(&solve(s)),
        Cmd::Flow(s) => commands::flow(&solve(s)),
        Cmd::Semidiscrete(s) => commands::semidiscrete(&SemidiscreteArgs {
            config: s.config,
            out: s.out,
            source: s.source,
            source_weights: s.source_weights,
            sites: s.sites,
            masses: s.masses,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("otdual: tolerance not reached within the iteration budget");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("otdual: {e:#}");
            ExitCode::from(1)
        }
    }
}
