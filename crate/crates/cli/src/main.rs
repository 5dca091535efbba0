mod bench;
mod cli;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use run::UsageError;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<raris::Error>() {
            return match e {
                raris::Error::Config(_) | raris::Error::Domain(_) => 2,
                raris::Error::Numerical(_) => 3,
            };
        }
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => run::cmd_estimate(a),
        Command::SelectK(a) => run::cmd_select_k(a),
        Command::MScan(a) => run::cmd_m_scan(a),
        Command::Tail(a) => run::cmd_tail(a),
        Command::Diagnose(a) => run::cmd_diagnose(a),
        Command::Benchmark(a) => bench::run_benchmark(a).map(|pass| {
            if !pass {
                eprintln!("warning: some benchmark checks failed; see summary.json");
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
