use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ocdr::config::{read_config, ExperimentConfig, OutputFormat, Scenario};
use ocdr::runner::{run_experiment, REPORT_FILE};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ocdr",
    version,
    about = "Photon-counting OCDR simulation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML); scenario defaults are used when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master RNG seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the config
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Axial point-spread function of a source/detector pair
    Psf,
    /// SPAD versus SSPD resolution and recovered spectra
    CompareDetectors,
    /// Predicted and simulated photon-counting SNR
    SnrRun,
    /// Fano factor statistics of repeated counts
    FanoRun,
    /// Two-surface window scan with peak detection
    SilicaScan,
    /// Conventional receiver SNR versus reference power
    SnrBudget,
    /// Acquisition time and counts per bin
    AcqPlan,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Psf => Scenario::Psf,
            Command::CompareDetectors => Scenario::CompareDetectors,
            Command::SnrRun => Scenario::SnrRun,
            Command::FanoRun => Scenario::FanoRun,
            Command::SilicaScan => Scenario::SilicaScan,
            Command::SnrBudget => Scenario::SnrBudget,
            Command::AcqPlan => Scenario::AcqPlan,
        }
    }
}

fn resolve(cli: &Cli) -> ocdr::Result<ExperimentConfig> {
    let scenario = cli.command.scenario();
    let mut config = match &cli.config {
        Some(path) => read_config(path).map_err(|e| e.context(path.display().to_string()))?,
        None => ExperimentConfig::defaults_for(scenario),
    };
    if config.scenario != scenario {
        return Err(ocdr::Error::Config(format!(
            "config is for scenario {}, not {scenario}",
            config.scenario
        )));
    }
    if let Some(seed) = cli.seed {
        config.rng_seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.output.dir = dir.to_string_lossy().into_owned();
    }
    config.output.format = match cli.format {
        Format::Csv => OutputFormat::Csv,
    };
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            };
            return ExitCode::from(code);
        }
    };
    match run_experiment(&config) {
        Ok(report) => {
            for (name, m) in &report.metrics {
                println!("{name} = {} {}", m.value, m.unit);
            }
            println!(
                "wrote {}",
                PathBuf::from(&config.output.dir)
                    .join(REPORT_FILE)
                    .display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            };
            ExitCode::from(code)
        }
    }
}
