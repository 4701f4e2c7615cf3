//! Study runner CLI: convergence and Pareto sweeps over polynomial degree and
//! projection method, emitted as CSV.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use lspg::bench::{
    emit_csv, emit_pareto_csv, run_convergence_study, run_pareto_study, Method, StudyConfig,
};
use lspg::problems::ProblemKind;

#[derive(Parser)]
#[command(name = "study", about = "Run spectral-projection convergence and Pareto studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write one CSV row per (method, degree).
    Run(StudyArgs),
    /// Run the study and flag the Pareto front of (wall time, error) per
    /// error measure.
    Pareto(StudyArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration file (TOML; every CLI flag mirrors a config key).
    config: PathBuf,

    /// Benchmark problem (diffusion1 | diffusion2 | diffusion3 | convdiff | scalar_toy).
    #[arg(long)]
    problem: Option<String>,

    /// Largest polynomial degree.
    #[arg(long)]
    p_max: Option<usize>,

    /// Comma-separated methods (sg, ps, lspg-energy, lspg-identity, lspg-goal).
    #[arg(long)]
    methods: Option<String>,

    /// Mesh elements per dimension.
    #[arg(long)]
    mesh: Option<usize>,

    /// Quadrature nodes (0 = automatic).
    #[arg(long)]
    quad: Option<usize>,

    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn apply_overrides(mut cfg: StudyConfig, args: &StudyArgs) -> Result<StudyConfig, lspg::Error> {
    if let Some(problem) = &args.problem {
        cfg.problem = ProblemKind::from_str(problem)?;
    }
    if let Some(p_max) = args.p_max {
        cfg.p_max = p_max;
        cfg.p_min = cfg.p_min.min(p_max);
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| Method::from_str(s.trim()))
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(mesh) = args.mesh {
        cfg.mesh = mesh;
    }
    if let Some(quad) = args.quad {
        cfg.quad = quad;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(args: &StudyArgs) -> Result<StudyConfig, lspg::Error> {
    let cfg = StudyConfig::load(&args.config)?;
    apply_overrides(cfg, args)
}

fn run(args: &StudyArgs, pareto: bool) -> Result<usize, lspg::Error> {
    let cfg = load(args)?;
    eprintln!(
        "study: problem={} mesh={} p={}..{} assembly={:?} out={}",
        cfg.problem.label(),
        cfg.mesh,
        cfg.p_min,
        cfg.p_max,
        cfg.assembly,
        cfg.out.display()
    );
    eprintln!("study: timing rule is total_seconds = assembly_seconds + solve_seconds; the shared reference solve is excluded");

    let failed = if pareto {
        let rows = run_pareto_study::<f64>(&cfg)?;
        emit_pareto_csv(&rows, &cfg.out)?;
        eprintln!("study: wrote {} rows to {}", rows.len(), cfg.out.display());
        rows.iter().filter(|r| !r.row.is_ok()).count()
    } else {
        let rows = run_convergence_study::<f64>(&cfg)?;
        emit_csv(&rows, &cfg.out)?;
        eprintln!("study: wrote {} rows to {}", rows.len(), cfg.out.display());
        rows.iter().filter(|r| !r.is_ok()).count()
    };
    Ok(failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, pareto) = match &cli.command {
        Command::Run(args) => (args, false),
        Command::Pareto(args) => (args, true),
    };
    match run(args, pareto) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("study: {failed} row(s) failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("study: error: {e}");
            ExitCode::FAILURE
        }
    }
}
