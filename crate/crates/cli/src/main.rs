use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinetofluid::commands::{self, RunOptions};
use kinetofluid::suites::{render_table, run_suite, Suite, SuiteOptions};
use kinetofluid::{exit, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "kinetofluid", version, about = "Kinetic particles coupled by drag to a non-Newtonian fluid")]
struct Cli {
    /// Worker threads for particle and grid kernels.
    #[arg(long, global = true, env = "KINETOFLUID_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace `particles.seed`.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-point or small-data run; writes diagnostics, snapshots and a report.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Rewrite the golden files named by `output.golden`.
        #[arg(long)]
        golden_regen: bool,
    },
    /// Run a property suite and print test, property and margin.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Swap a law violating the structure conditions into the constitutive suite.
        #[arg(long)]
        broken_law: bool,
    },
    /// Contraction ratio of the fixed-point map over `contraction.sweep`.
    Contraction {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Stability report for two recorded particle runs.
    Wasserstein {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(run: &RunArgs) -> Result<(kinetofluid::Parsed, RunOptions), CliError> {
    let parsed = RunConfig::from_file(&run.config)?;
    let opts = RunOptions { out: run.out.clone(), seed_override: run.seed_override, golden_regen: false };
    Ok((parsed, opts))
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate { run, golden_regen } => {
            let (parsed, mut opts) = load(&run)?;
            opts.golden_regen = golden_regen;
            let s = commands::simulate(&parsed, &opts)?;
            println!("{}", s.report["status"].as_str().unwrap_or("done"));
            if let Some(d) = s.golden_diff {
                if golden_regen {
                    println!("golden files rewritten");
                } else {
                    println!("golden max diff {d:e}");
                }
            }
            println!("outputs in {}", s.out_dir.display());
            Ok(exit::SUCCESS)
        }
        Command::Verify { suite, broken_law } => {
            let checks = run_suite(suite, SuiteOptions { broken_law });
            print!("{}", render_table(&checks));
            let failed: Vec<_> = checks.iter().filter(|c| !c.pass()).collect();
            for c in &failed {
                eprintln!("{}: {}", c.name, c.detail);
            }
            println!("{suite}: {}/{} passed", checks.len() - failed.len(), checks.len());
            Ok(if failed.is_empty() { exit::SUCCESS } else { exit::FAILURE })
        }
        Command::Contraction { run } => {
            let (parsed, opts) = load(&run)?;
            let s = commands::contraction(&parsed, &opts)?;
            println!("smallest ratio {}", s.report["smallest_ratio"]);
            Ok(exit::SUCCESS)
        }
        Command::Wasserstein { run_a, run_b, out } => {
            let s = commands::wasserstein(&run_a, &run_b, &out)?;
            println!("stability margin {}", s.report["min_margin"]);
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(exit::VALIDATION as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(exit::FAILURE as u8);
        }
    }
    let code = dispatch(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
