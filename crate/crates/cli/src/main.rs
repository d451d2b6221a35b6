use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod failure;

use failure::Failure;

/// Privacy-preserving vertical XGBoost for wind power forecasting.
#[derive(Parser, Debug)]
#[command(name = "windshare", version)]
struct Cli {
    /// TOML run config; every key is optional.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the effective config (defaults filled in) and exit.
    #[arg(long)]
    show_config: bool,

    /// More logging (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate the configured farm CSVs and write a normalized cache.
    Ingest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic cluster as farm CSVs plus a matching config snippet.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MMD adjacency and the target's participants.
    Select {
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the adjacency matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the vertical model for one horizon and save it.
    Train {
        #[arg(long)]
        horizon: Option<usize>,
        /// Model directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the test rows with a saved model; writes a prediction CSV.
    Predict {
        /// Model directory written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score every configured horizon; writes an EvalReport JSON.
    Eval {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training and inference time over party counts.
    Bench {
        /// Party counts, `a..b` (inclusive) or a comma list.
        #[arg(long, default_value = "2..6")]
        parties: String,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        horizon: Option<usize>,
        /// One process per party over TCP instead of threads in this process.
        #[arg(long)]
        tcp: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baselines against the vertical model, one row per method.
    Compare {
        /// Method names; default all.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one party of a process-per-party federation.
    Party {
        #[arg(long)]
        id: u32,
        #[arg(long)]
        horizon: Option<usize>,
        /// Prediction CSV (active party only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = commands::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.show_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::usage("no subcommand given; see --help"));
    };
    match command {
        Command::Ingest { out } => commands::ingest(&cfg, out),
        Command::Synth { out } => commands::synth(&cfg, out),
        Command::Select { out, csv } => commands::select(&cfg, out, csv),
        Command::Train { horizon, out } => commands::train(&cfg, horizon, out),
        Command::Predict { model, out } => commands::predict(&cfg, model, out),
        Command::Eval { out } => commands::eval(&cfg, out),
        Command::Bench {
            parties,
            repeats,
            horizon,
            tcp,
            out,
        } => commands::bench(&cfg, &parties, repeats, horizon, tcp, out),
        Command::Compare { methods, out } => commands::compare(&cfg, &methods, out),
        Command::Party { id, horizon, out } => commands::party(&cfg, id, horizon, out),
    }
}
