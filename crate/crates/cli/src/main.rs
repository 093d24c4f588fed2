use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use permrate_cli::args::{Cli, Command};
use permrate_cli::run;

fn threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(a) => threads(a.threads).and_then(|_| run::run_test(a)).map(|r| {
            log::info!("tie-breaking uniform {:?}", r.permutation.first().map(|p| p.uniform));
            print!("{}", r.summary());
        }),
        Command::Cset(c) => threads(c.analysis.threads).and_then(|_| run::run_cset(c)).map(|r| print!("{}", r.summary())),
        Command::Bandwidth(a) => threads(a.threads)
            .and_then(|_| run::run_bandwidth(a))
            .and_then(|b| Ok(println!("{}", serde_json::to_string_pretty(&b)?))),
        Command::Simulate(s) => {
            threads(s.threads).and_then(|_| run::run_simulate(s)).map(|o| print!("{}", run::simulate_summary(&o)))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
