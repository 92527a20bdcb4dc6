use std::path::PathBuf;
use std::process;

use acflow::cli_io::{cmd_check, cmd_diag, cmd_run, cmd_sweep, parse_eps_list, DiagKind, ExitCode};
use acflow::Error;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Artificial-compressibility flow solver with energy and compactness diagnostics.
#[derive(Debug, Parser)]
#[command(name = "acflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Dotted override such as `solver.epsilon=1e-3`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Continue from a snapshot of an earlier run with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run one member per epsilon and merge the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma separated, strictly decreasing list such as `1e-1,1e-2`.
        #[arg(long)]
        eps: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Verify the discrete identities on random fields.
    Check {
        #[arg(long, default_value_t = 16)]
        grid: usize,
    },
    /// Recompute one diagnostic from the snapshots of a finished run.
    Diag {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        which: String,
    },
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    ExitCode::for_error(e) as i32
}

fn execute(cmd: Command) -> i32 {
    match cmd {
        Command::Run { config, set, resume } => match cmd_run(&config, &set, resume.as_deref()) {
            Ok(out) => {
                println!(
                    "wrote {} ({} steps, t = {}, {} snapshots)",
                    out.directory.display(),
                    out.steps,
                    out.t,
                    out.snapshots
                );
                ExitCode::Ok as i32
            }
            Err(e) => fail(&e),
        },
        Command::Sweep { config, eps, jobs, set } => {
            let list = match parse_eps_list(&eps) {
                Ok(l) => l,
                Err(e) => return fail(&e),
            };
            if jobs == 0 {
                eprintln!("error: --jobs must be at least 1");
                return ExitCode::Usage as i32;
            }
            match cmd_sweep(&config, &set, &list, jobs) {
                Ok(members) => {
                    let mut code = ExitCode::Ok;
                    for m in &members {
                        match &m.error {
                            None => {
                                println!("eps {:e}: {} steps, sup |p|_5/3 = {:.6e}", m.epsilon, m.steps, m.sup_p_l53)
                            }
                            Some(err) => {
                                println!("eps {:e}: failed: {err}", m.epsilon);
                                code = ExitCode::Runtime;
                            }
                        }
                    }
                    code as i32
                }
                Err(e) => fail(&e),
            }
        }
        Command::Check { grid } => match cmd_check(grid) {
            Ok(results) => {
                let mut code = ExitCode::Ok;
                for r in &results {
                    let tag = if r.passed { "PASS" } else { "FAIL" };
                    println!(
                        "{tag} {:<28} measured {:.3e} threshold {:.1e} ({} trials)",
                        r.name, r.measured, r.threshold, r.trials
                    );
                    if !r.passed {
                        code = ExitCode::Invariant;
                    }
                }
                code as i32
            }
            Err(e) => fail(&e),
        },
        Command::Diag { trajectory, which } => {
            let Some(kind) = DiagKind::parse(&which) else {
                eprintln!("error: --which must be one of ledger, local, lemma, weak (got '{which}')");
                return ExitCode::Usage as i32;
            };
            match cmd_diag(&trajectory, kind) {
                Ok(path) => {
                    println!("wrote {}", path.display());
                    ExitCode::Ok as i32
                }
                Err(e) => fail(&e),
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::Ok,
                _ => ExitCode::Usage,
            };
            let _ = e.print();
            process::exit(code as i32);
        }
    };
    process::exit(execute(cli.command));
}
