use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use pglimmer_cli::args::{Cli, Command};
use pglimmer_cli::{bench, generate, run};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(a) => generate::cmd_generate(a),
        Command::Run(a) => run::cmd_run(a).map(|_| ()),
        Command::Bench(a) => bench::cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
