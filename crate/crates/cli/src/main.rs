//! `tnnc`: compile, validate and profile tiny neural-network chains, and run
//! the CAN intrusion-detection and battery-capacity pipelines.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use report::{CliError, Outcome};

#[derive(Parser)]
#[command(name = "tnnc", version, about = "Tiny neural-network compiler for microcontrollers")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the machine-readable JSON report here.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Suppress console output other than errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ModelArg {
    /// Path to a `.tnnf.json` manifest, or a bundled model name
    /// (`autoencoder`, `cnn-lstm`).
    pub model: String,
}

#[derive(Subcommand)]
enum Command {
    /// Print layers, output shapes, parameter and MACC counts.
    Inspect(ModelArg),
    /// Generate C sources, the memory plan and the complexity report.
    Compile {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        out: PathBuf,
        /// C identifier prefix; defaults to the model name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Write seeded input vectors and the interpreter's outputs for them.
    Vectors {
        #[command(flatten)]
        model: ModelArg,
        /// Output stem: writes `<stem>.inputs.tnnv` and `<stem>.expected.tnnv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        low: f32,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        high: f32,
    },
    /// Score compiled-code outputs against the interpreter (exit 3 unless every element matches).
    Validate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long, default_value_t = tnnc_core::validator::DEFAULT_ATOL)]
        atol: f64,
        #[arg(long, default_value_t = tnnc_core::validator::DEFAULT_RTOL)]
        rtol: f64,
    },
    /// Per-layer Flash/RAM/time shares and on-target time estimates.
    Profile {
        #[command(flatten)]
        model: ModelArg,
        /// MCU names from the catalog; all of them when omitted.
        #[arg(long)]
        mcu: Vec<String>,
        #[arg(long, default_value_t = tnnc_core::profiler::DEFAULT_CYCLES_PER_MACC)]
        cycles_per_macc: f64,
        /// JSON catalog replacing the built-in one.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Take time shares from measured interpreter runs instead of MACC.
        #[arg(long)]
        host_timings: bool,
        #[arg(long, default_value_t = 25)]
        repeats: usize,
    },
    /// Build labeled snapshot windows from a CAN trace.
    IdsWindow {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        signal_map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Score CAN windows by reconstruction error and report precision/recall.
    IdsEval {
        #[command(flatten)]
        model: ModelArg,
        /// Window set stem written by `ids-window`.
        #[arg(long)]
        windows: PathBuf,
        /// Fixed threshold; otherwise fitted on normal windows.
        #[arg(long, conflicts_with = "fit_windows")]
        threshold: Option<f32>,
        /// Window set whose normal windows fit the threshold; defaults to `--windows`.
        #[arg(long)]
        fit_windows: Option<PathBuf>,
        #[arg(long, default_value_t = tnnc_core::pipelines::metrics::DEFAULT_QUANTILE)]
        quantile: f64,
    },
    /// Build discharge-cycle windows, optionally min-max scaled.
    BattWindow {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Fit a scaler on these windows, apply it and save it here.
        #[arg(long, conflicts_with = "scaler")]
        fit_scaler: Option<PathBuf>,
        /// Apply a previously fitted scaler.
        #[arg(long)]
        scaler: Option<PathBuf>,
    },
    /// Predict capacities for battery windows and report MAE and SoH flags.
    BattEval {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        windows: PathBuf,
        /// Rated capacity for the state-of-health ratio.
        #[arg(long, default_value_t = 2.0)]
        rated: f64,
    },
    /// Export the bundled models as manifest + weight-blob fixtures.
    Bundled {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic CAN trace and its signal map.
    SynthCan {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        signal_map: PathBuf,
        #[arg(long, default_value_t = 2000)]
        messages: usize,
        /// Leave out attack episodes.
        #[arg(long)]
        normal_only: bool,
    },
    /// Write synthetic battery discharge cycles.
    SynthBattery {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        cycles: usize,
        #[arg(long, default_value_t = 60)]
        rows: usize,
    },
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let seed = cli.seed;
    match &cli.command {
        Command::Inspect(m) => commands::inspect(m),
        Command::Compile { model, out, name } => commands::compile(model, out, name.as_deref()),
        Command::Vectors { model, out, count, low, high } => commands::vectors(model, out, *count, seed, (*low, *high)),
        Command::Validate { model, inputs, outputs, atol, rtol } => commands::validate(model, inputs, outputs, *atol, *rtol),
        Command::Profile { model, mcu, cycles_per_macc, catalog, host_timings, repeats } => {
            commands::profile(model, mcu, *cycles_per_macc, catalog.as_deref(), host_timings.then_some(*repeats), seed)
        }
        Command::IdsWindow { csv, signal_map, out, window, stride } => commands::ids_window(csv, signal_map, out, *window, *stride),
        Command::IdsEval { model, windows, threshold, fit_windows, quantile } => {
            commands::ids_eval(model, windows, *threshold, fit_windows.as_deref(), *quantile)
        }
        Command::BattWindow { csv, out, samples, fit_scaler, scaler } => {
            commands::batt_window(csv, out, *samples, fit_scaler.as_deref(), scaler.as_deref())
        }
        Command::BattEval { model, windows, rated } => commands::batt_eval(model, windows, *rated),
        Command::Bundled { out } => commands::bundled(out),
        Command::SynthCan { out, signal_map, messages, normal_only } => {
            commands::synth_can(out, signal_map, *messages, *normal_only, seed)
        }
        Command::SynthBattery { out, cycles, rows } => commands::synth_battery(out, *cycles, *rows, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { report::EXIT_USAGE } else { report::EXIT_OK });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    let command = cli.command_name();
    match run(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                print!("{}", outcome.console);
            }
            if let Some(path) = &cli.report {
                if let Err(e) = report::write_report(path, command, &outcome) {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.code);
                }
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

impl Cli {
    fn command_name(&self) -> &'static str {
        match self.command {
            Command::Inspect(_) => "inspect",
            Command::Compile { .. } => "compile",
            Command::Vectors { .. } => "vectors",
            Command::Validate { .. } => "validate",
            Command::Profile { .. } => "profile",
            Command::IdsWindow { .. } => "ids-window",
            Command::IdsEval { .. } => "ids-eval",
            Command::BattWindow { .. } => "batt-window",
            Command::BattEval { .. } => "batt-eval",
            Command::Bundled { .. } => "bundled",
            Command::SynthCan { .. } => "synth-can",
            Command::SynthBattery { .. } => "synth-battery",
        }
    }
}
