//! `aaad`: fit models, render surfaces, replay logs, simulate observers and
//! serve live sessions.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aaad", version, about = "Attention allocation aid: model fitting, replay, simulation and live sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a `ppc-bundle/1` model from psychometric and forced-fixation CSVs.
    Fit {
        /// Psychometric trials CSV.
        #[arg(long)]
        data: PathBuf,
        /// Forced-fixation trials CSV (eccentricity curves).
        #[arg(long)]
        forced_fixation: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 0.005)]
        sigma_floor: f64,
    },
    /// Render a detectability surface or exploration map as a 16-bit PGM.
    Surface {
        #[arg(long, env = "AAAD_BUNDLE")]
        bundle: PathBuf,
        /// `aaad-log/1` log whose gaze defines the fixations.
        #[arg(long)]
        fixations: PathBuf,
        /// Trial to render; defaults to the first in the log.
        #[arg(long)]
        trial: Option<String>,
        /// Stimulus raster for the clutter map; uniform clutter without one.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MapKind::Detectability)]
        map: MapKind,
    },
    /// Replay a session log through the engine and write per-trial reports.
    Replay {
        #[arg(long, env = "AAAD_BUNDLE")]
        bundle: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Multiple of real time, or `max`.
        #[arg(long, default_value = "max")]
        speed: String,
        #[arg(long)]
        report: PathBuf,
    },
    /// Monte Carlo comparison of synthetic observer arms.
    Simulate {
        #[arg(long, env = "AAAD_BUNDLE")]
        bundle: PathBuf,
        /// JSON list of `{"name", "params"}` observer arms.
        #[arg(long)]
        observers: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Serve the live protocol at `/live` and static assets elsewhere.
    Serve {
        #[arg(long, env = "AAAD_BUNDLE")]
        bundle: PathBuf,
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Directory for one session log per connection.
        #[arg(long, env = "AAAD_LOG_DIR")]
        log_dir: Option<PathBuf>,
    },
    /// Summarize a replay report as session metrics.
    Report {
        /// Output of `aaad replay`.
        #[arg(long)]
        input: PathBuf,
        /// Write JSON metrics here instead of a text summary on stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MapKind {
    Exploration,
    Detectability,
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        eprintln!("aaad: internal error: {info}");
        std::process::exit(2);
    }));
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit { data, forced_fixation, out, bins, sigma_floor } => {
            commands::fit(&data, &forced_fixation, &out, bins, sigma_floor)
        }
        Command::Surface { bundle, fixations, trial, image, out, map } => {
            commands::surface(&bundle, &fixations, trial.as_deref(), image.as_deref(), &out, map == MapKind::Exploration)
        }
        Command::Replay { bundle, log, speed, report } => commands::replay(&bundle, &log, &speed, &report),
        Command::Simulate { bundle, observers, trials, seed, report } => {
            commands::simulate(&bundle, &observers, trials, seed, &report)
        }
        Command::Serve { bundle, assets, listen, log_dir } => commands::serve(&bundle, assets, &listen, log_dir),
        Command::Report { input, out } => commands::report(&input, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aaad: {:#}", e.error);
            ExitCode::from(e.code())
        }
    }
}
