use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocn_cli::{cmd_compare, cmd_report_topology, cmd_run, summary_line, RunSummary};
use ocn_core::scenario::Mode;

#[derive(Parser)]
#[command(name = "ocn-rgp", version, about = "Constraint-aware water-level consensus for open-channel networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the topological constants of a scenario's network.
    ReportTopology {
        #[arg(long)]
        scenario: PathBuf,
        /// Print JSON only.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario and write trace.csv, report.json and scenario.resolved.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// centralized, distributed or compare
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run both engines and check that their traces coincide.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn finish(summary: RunSummary) -> ExitCode {
    println!("{}", summary_line(&summary.run.report));
    if let Some(c) = summary.run.report.compare {
        println!(
            "compare: max |x_central - x_distributed| = {:e}, max eta gap = {:e}",
            c.max_state_deviation, c.max_eta_deviation
        );
    }
    if summary.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ReportTopology { scenario, json } => cmd_report_topology(&scenario).and_then(|r| {
            if !json {
                print!("{}", r.to_text());
                println!();
            }
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(ExitCode::SUCCESS)
        }),
        Command::Run { scenario, out, seed, mode } => cmd_run(&scenario, &out, seed, mode).map(finish),
        Command::Compare { scenario, out } => cmd_compare(&scenario, &out).map(finish),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
