use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coded_smoothing_cli::{commands, resolve_config, CliError};

#[derive(Parser)]
#[command(name = "coded-smoothing", version, about = "Coded-smoothing experiments")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<subcommand>).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the encoding (α) and decoding (β) points.
    Points {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Coded-path MSE as a function of N.
    Lemma1,
    /// Train one model and save its metrics and parameters.
    Train,
    /// Evaluate a saved model under attack, standard and RCI inference.
    Attack {
        /// Model file; overrides `attack.model`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Straggler simulation over an (N, S) grid.
    Simulate,
    /// Train and evaluate once per value of a training parameter.
    Sweep {
        #[arg(long)]
        threads: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Points { .. } => "points",
            Command::Lemma1 => "lemma1",
            Command::Train => "train",
            Command::Attack { .. } => "attack",
            Command::Simulate => "simulate",
            Command::Sweep { .. } => "sweep",
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut sets = cli.set.clone();
    match &cli.command {
        Command::Points { k, n } => {
            sets.extend(k.map(|k| format!("points.K={k}")));
            sets.extend(n.map(|n| format!("points.N={n}")));
        }
        Command::Attack { model: Some(m) } => sets.push(format!("attack.model={}", m.display())),
        _ => {}
    }
    let cfg = resolve_config(cli.config.as_deref(), &sets, cli.seed)?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    Ok(match cli.command {
        Command::Points { .. } => commands::points(&cfg)?.render(),
        Command::Lemma1 => commands::lemma1(&cfg, &out)?.report.render(),
        Command::Train => commands::train(&cfg, &out)?.report.render(),
        Command::Attack { .. } => {
            let rows = commands::attack(&cfg, &out)?;
            rows.iter()
                .map(|r| format!("{}.{}={:.4}\n", r.inference_mode, r.attack, r.accuracy))
                .collect()
        }
        Command::Simulate => commands::simulate(&cfg, &out)?.summary.render(),
        Command::Sweep { threads } => {
            let rows = commands::sweep(&cfg, &out, threads)?;
            format!("{} runs written to {}\n", rows.len(), out.join("sweep.csv").display())
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
