use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fucik_lab::commands::{self, Outcome, PointOverride};
use fucik_lab::config::RunConfig;
use fucik_lab::solver::CaseRequest;
use fucik_lab::Error;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Parser)]
#[command(version, about = "Fractional Laplacian spectra, Fucik curves and linking critical points")]
struct Cli {
    /// Directory for reports, data files and the manifest.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
    /// Overrides solver.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, global = true, env = "FUCIK_LAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; the built-in default when omitted.
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, value_parser = parse_case)]
    case: Option<CaseRequest>,
}

fn parse_case(s: &str) -> Result<CaseRequest, String> {
    match s {
        "auto" => Ok(CaseRequest::Auto),
        "below-nu" => Ok(CaseRequest::BelowNu),
        "above-mu" => Ok(CaseRequest::AboveMu),
        _ => Err(format!("unknown case {s:?}; expected auto, below-nu or above-mu")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of the discrete operator.
    Eigs(ConfigArg),
    /// The curves ν_{l−1} and μ_l on an a-grid.
    Fucik(ConfigArg),
    /// Fitted ε-exponents of the bubble estimates.
    BubbleCheck(ConfigArg),
    /// The linking upper bound against c* over the ε-grid.
    LinkingCheck(ConfigArg),
    /// A critical point by linking min-max and Newton.
    Solve {
        #[command(flatten)]
        cfg: ConfigArg,
        #[command(flatten)]
        point: PointArgs,
    },
    /// The L∞ certificate of a solved critical point.
    Degiorgi {
        #[command(flatten)]
        cfg: ConfigArg,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Re-reads output files, or a whole output directory with its manifest.
    Validate { path: PathBuf },
}

fn load(arg: &ConfigArg, seed: Option<u64>) -> fucik_lab::Result<RunConfig> {
    let mut cfg = match &arg.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse(DEFAULT_CONFIG)?,
    };
    if let Some(s) = seed {
        cfg.solver.seed = s;
    }
    Ok(cfg)
}

fn with_point(arg: &ConfigArg, point: &PointArgs, seed: Option<u64>) -> fucik_lab::Result<RunConfig> {
    let mut cfg = load(arg, seed)?;
    PointOverride { a: point.a, b: point.b, level: point.level, case: point.case }.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> fucik_lab::Result<Outcome> {
    let out: &Path = &cli.output_dir;
    match &cli.command {
        Command::Eigs(c) => commands::cmd_eigs(&load(c, cli.seed)?, out),
        Command::Fucik(c) => commands::cmd_fucik(&load(c, cli.seed)?, out),
        Command::BubbleCheck(c) => commands::cmd_bubble_check(&load(c, cli.seed)?, out),
        Command::LinkingCheck(c) => commands::cmd_linking_check(&load(c, cli.seed)?, out),
        Command::Solve { cfg, point } => commands::cmd_solve(&with_point(cfg, point, cli.seed)?, out),
        Command::Degiorgi { cfg, point } => commands::cmd_degiorgi(&with_point(cfg, point, cli.seed)?, out),
        Command::Validate { .. } => unreachable!("handled before dispatch"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    if let Command::Validate { path } = &cli.command {
        return match commands::cmd_validate(path) {
            Ok(r) => {
                for p in &r.problems {
                    eprintln!("invalid: {p}");
                }
                println!("checked {} files, {} problems", r.checked.len(), r.problems.len());
                if r.ok() { ExitCode::SUCCESS } else { ExitCode::from(2) }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        };
    }
    match run(&cli) {
        Ok(o) => {
            println!("{}: {}", if o.pass { "pass" } else { "flagged" }, o.summary);
            println!("manifest: {}", o.manifest.display());
            if o.pass { ExitCode::SUCCESS } else { ExitCode::from(2) }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
