use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use graphshot::args::Cli;
use graphshot::server;
use graphshot_core::experiment::{aggregate, run_experiment, write_outputs};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.serve {
        let runtime = tokio::runtime::Runtime::new()?;
        return runtime.block_on(server::serve(SocketAddr::new(cli.host, cli.port), cli.data_dir.clone()));
    }
    let cfg = cli.to_config()?;
    let records = run_experiment(&cfg)?;
    write_outputs(&cli.out, &cfg, &records)?;
    println!("{:<11} {:<5} {:<9} {:<5} {:>5} {:>7} {:>7} {:>7}", "setting", "model", "sampler", "lp", "round", "budget", "mean", "std");
    for row in aggregate(&records) {
        println!(
            "{:<11} {:<5} {:<9} {:<5} {:>5} {:>7.1} {:>7.4} {:>7.4}",
            row.setting.name(),
            row.model.name(),
            row.sampler.name(),
            row.label_prop,
            row.round,
            row.budget_used,
            row.mean,
            row.std
        );
    }
    log::info!("wrote {}", cli.out.display());
    Ok(())
}
