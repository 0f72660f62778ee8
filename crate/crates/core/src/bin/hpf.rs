use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use hpf_core::harness::{
    bundled, compute_metrics, load_run, metrics_json, run, write_outputs, write_plotdata, HarnessError, RunStatus,
    Scenario, BUNDLED,
};

/// Leader-following robot simulator.
#[derive(Parser)]
#[command(name = "hpf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write run.json, metrics.json and plot files.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// `dotted.key=value`, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Recompute metrics from a run log and print them as JSON.
    Metrics { run: PathBuf },
    /// Regenerate the plot files from a run log.
    Plotdata {
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a bundled scenario as JSON.
    Scenario {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUNDLED))]
        name: String,
    },
}

fn execute(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            overrides,
        } => {
            let mut scn = Scenario::load(&scenario)?;
            if let Some(s) = seed {
                scn.seed = s;
            }
            for o in &overrides {
                scn = scn.apply_override(o)?;
            }
            let started = Instant::now();
            let log = run(&scn);
            let elapsed = started.elapsed();
            write_outputs(&log, &out)?;
            let m = &log.metrics;
            eprintln!(
                "{}: {} steps in {:.2} s, status {:?}, lateral p95 {:.3} m max {:.3} m",
                scn.name,
                m.steps,
                elapsed.as_secs_f64(),
                log.status,
                m.lateral.p95,
                m.lateral.max
            );
            if let Some(f) = &log.fault {
                eprintln!("fault: {f}");
            }
            Ok(match log.status {
                RunStatus::Completed => ExitCode::SUCCESS,
                RunStatus::Fault => ExitCode::from(2),
            })
        }
        Command::Metrics { run } => {
            let log = load_run(&run)?;
            println!("{}", metrics_json(&compute_metrics(&log)));
            Ok(ExitCode::SUCCESS)
        }
        Command::Plotdata { run, out } => {
            let log = load_run(&run)?;
            write_plotdata(&log, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { name } => {
            let scn = bundled(&name).expect("clap restricts the name");
            println!("{}", scn.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
