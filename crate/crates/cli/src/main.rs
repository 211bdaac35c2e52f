use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chernqfi::pipeline::PipelineError;
use chernqfi::{parse_config, run_pipeline, BzGrid, Command, RunConfig, RunReport};

const EXIT_CONFIG: u8 = 2;

/// Momentum-resolved quantum Fisher information of Chern insulators.
#[derive(Parser)]
#[command(name = "chernqfi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bands, quantum geometry and Chern numbers.
    Geometry(RunArgs),
    /// QFI curves and their small-q expansion.
    Qfi(RunArgs),
    /// Topological bounds on the expansion coefficients.
    Bounds(RunArgs),
    /// Quantum speed limit for the configured potential.
    Speedlimit(RunArgs),
    /// Every stage.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run file.
    config: PathBuf,
    /// Output directory (overrides `output`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid override, e.g. `128x128`.
    #[arg(long, value_name = "NxN", value_parser = parse_grid)]
    grid: Option<BzGrid>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

fn parse_grid(s: &str) -> Result<BzGrid, String> {
    let (nx, ny) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxN, got `{s}`"))?;
    let nx: usize = nx.trim().parse().map_err(|_| format!("bad grid size `{nx}`"))?;
    let ny: usize = ny.trim().parse().map_err(|_| format!("bad grid size `{ny}`"))?;
    BzGrid::new(nx, ny).map_err(|e| e.to_string())
}

fn load(path: &Path) -> Result<RunConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    parse_config(&text).map_err(|errs| {
        for e in errs.iter() {
            eprintln!("error: {}: {e}", path.display());
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn summarize(report: &RunReport) {
    println!("model     {}", report.model);
    println!("chern     {} (plaquette {:?})", report.chern, report.chern_plaquette);
    if let Some(e) = &report.expansion {
        println!("A         {}", e.a);
        println!("B         {}", e.b);
    }
    if let Some(p) = &report.peak {
        let note = if p.reliable { "" } else { " (outside expansion window)" };
        println!("q*        {}{note}", p.q_star);
    }
    for b in &report.bounds {
        let verdict = if b.passed { "pass" } else { "FAIL" };
        println!("bound     {:<17} {verdict}  measured {} bound {}", b.name, b.measured, b.bound);
    }
    if let Some(s) = &report.speed_limit {
        println!("ds/dt     {}", s.ds_dt);
    }
    println!("artifacts {}", report.artifacts.join(", "));
}

fn run(command: Command, args: RunArgs) -> ExitCode {
    let level = if args.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut config = match load(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(out) = args.out {
        config.output = out;
    }
    if let Some(grid) = args.grid {
        config.grid = grid;
    }
    match run_pipeline(&config, command) {
        Ok(report) => {
            if !args.quiet {
                summarize(&report);
                for (stage, secs) in &report.timings {
                    eprintln!("time  {stage:<10} {secs:.3}s");
                }
            }
            if !report.bounds_passed() {
                eprintln!("error: at least one bound check failed");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => report_failure(&e),
    }
}

fn report_failure(e: &PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Geometry(a) => (Command::Geometry, a),
        Cmd::Qfi(a) => (Command::Qfi, a),
        Cmd::Bounds(a) => (Command::Bounds, a),
        Cmd::Speedlimit(a) => (Command::SpeedLimit, a),
        Cmd::All(a) => (Command::All, a),
    };
    run(command, args)
}
