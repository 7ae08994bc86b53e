mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::Run;

/// Fit, backtest and simulate realized-volatility models.
#[derive(Parser)]
#[command(name = "dmem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured model on the full sample.
    Fit(Common),
    /// Rolling out-of-sample forecasts, loss tables and MCS flags.
    Backtest(Common),
    /// Draw a synthetic panel from the [simulate] design.
    Simulate(Common),
    /// Monthly long-run components per model and index, with correlations.
    Longrun(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Backtest(_) => "backtest",
            Command::Simulate(_) => "simulate",
            Command::Longrun(_) => "longrun",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Fit(c) | Command::Backtest(c) | Command::Simulate(c) | Command::Longrun(c) => c,
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    status: &'a str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    files: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    causes: Vec<String>,
}

fn fail(command: &str, message: String, causes: Vec<String>, code: u8) -> ExitCode {
    let r = Report { status: "error", command, files: None, error: Some(message), causes };
    eprintln!("{}", serde_json::to_string(&r).expect("error record serializes"));
    ExitCode::from(code)
}

fn run(cmd: &Command) -> anyhow::Result<Vec<PathBuf>> {
    let c = cmd.common();
    let run = Run::new(&c.config, c.seed, c.out.clone())?;
    match cmd {
        Command::Fit(_) => commands::fit(&run),
        Command::Backtest(_) => commands::backtest(&run),
        Command::Simulate(_) => commands::simulate_cmd(&run),
        Command::Longrun(_) => commands::longrun(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("", e.kind().to_string(), vec![e.render().to_string().trim().to_string()], 2),
    };
    let name = cli.command.name();
    match run(&cli.command) {
        Ok(files) => {
            let files = files.iter().map(|p| p.display().to_string()).collect();
            let r = Report { status: "ok", command: name, files: Some(files), error: None, causes: vec![] };
            println!("{}", serde_json::to_string(&r).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(name, e.to_string(), e.chain().skip(1).map(|c| c.to_string()).collect(), 1),
    }
}
