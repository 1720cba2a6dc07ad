use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::CliError;
use config::{RawConfig, Settings};

/// Sequential three-way decision training of a single-hidden-layer network.
#[derive(Parser, Debug)]
#[command(name = "stwd-sfnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on an 8:1:1 split and write model.json, ledger.json,
    /// metrics.json, roc.csv and costs.csv.
    Train(Shared),
    /// Evaluate a saved model on a dataset.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// k-fold cross-validation; writes summary.json and summary.csv.
    Crossval(Shared),
    /// Train one comparison model (m1, m2, m3, grid-search, twd-fixed, stwd-nk).
    Baseline(Shared),
    /// Rewrite costs.csv from a run directory's ledger.json.
    Costs {
        run_dir: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
}

#[derive(Args, Debug, Default)]
struct Shared {
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    positive: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    /// z-score, min-max or none.
    #[arg(long)]
    norm: Option<String>,
}

impl Shared {
    fn settings(&self, model: Option<&PathBuf>) -> Result<Settings, CliError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        let flags = [
            ("data", &self.data),
            ("label_col", &self.label_col),
            ("positive", &self.positive),
            ("seed", &self.seed),
            ("out", &self.out),
            ("folds", &self.folds),
            ("jobs", &self.jobs),
            ("kind", &self.kind),
            ("norm", &self.norm),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set(key, v.as_str());
            }
        }
        if let Some(m) = model {
            raw.set("model", m.to_string_lossy());
        }
        Ok(Settings::resolve(&raw)?)
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train(s) => commands::train(&s.settings(None)?),
        Command::Eval { shared, model } => commands::eval(&shared.settings(model.as_ref())?),
        Command::Crossval(s) => commands::crossval_cmd(&s.settings(None)?),
        Command::Baseline(s) => commands::baseline(&s.settings(None)?),
        Command::Costs { run_dir, shared } => commands::costs(&run_dir, &shared.settings(None)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
