use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecgfuse_core::harness::experiment::{self, prepare, train_system, TrainedSystem};
use ecgfuse_core::harness::sweep::{load_noise_bank, noise_sweep, write_sweep_csv};
use ecgfuse_core::harness::{ExperimentConfig, HarnessError};

mod commands;

type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Parser)]
#[command(name = "ecgfuse", version, about = "Two-view ECG beat classification with evidence fusion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where outputs are written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled synthetic WFDB records into --out-dir.
    Synth,
    /// Read the configured records and report header, checksum and beat counts.
    Ingest,
    /// Segment, split and balance; write train.csv, test.csv and manifest.json.
    Segment,
    /// Write GAF images of test beats as PGM (and optionally CSV).
    GafExport {
        /// Number of test beats to export.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Image side; defaults to the beat length.
        #[arg(long)]
        res: Option<usize>,
        /// Also dump each matrix as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Train both views and the feature-fusion head; write checkpoints.
    Train,
    /// Evaluate every method on the clean test split.
    Eval {
        /// Directory with checkpoints from `train`; trains from scratch if absent.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Evaluate every method across noise kinds and SNRs.
    Sweep {
        /// Directory with checkpoints from `train`; trains from scratch if absent.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of both view models.
    GradCheck {
        /// Parameter coordinates sampled per model.
        #[arg(long, default_value_t = 200)]
        coords: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Beat length for the recurrent model; defaults to the config's L.
        #[arg(long)]
        input_len: Option<usize>,
    },
}

impl Global {
    fn load_config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| HarnessError::Config("--config is required for this command".into()))?;
        let mut config = ExperimentConfig::from_path(path)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out_dir).map_err(|source| HarnessError::Io {
            path: self.out_dir.clone(),
            source,
        })?;
        Ok(&self.out_dir)
    }
}

fn system(global: &Global, config: &ExperimentConfig, checkpoints: Option<&Path>) -> Result<(TrainedSystem, experiment::PreparedData)> {
    let data = prepare(config)?;
    let system = match checkpoints {
        Some(dir) => TrainedSystem::load(dir, config)?,
        None => {
            let run = train_system(config, &data)?;
            run.system.save(global.out_dir()?, config)?;
            run.system
        }
    };
    Ok((system, data))
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth => commands::synth(g.out_dir()?, g.seed.unwrap_or(2024)),
        Command::Ingest => commands::ingest(&g.load_config()?, g.out_dir()?),
        Command::Segment => commands::segment(&g.load_config()?, g.out_dir()?),
        Command::GafExport { count, res, csv } => commands::gaf_export(&g.load_config()?, g.out_dir()?, *count, *res, *csv),
        Command::Train => commands::train(&g.load_config()?, g.out_dir()?),
        Command::Eval { checkpoints } => {
            let config = g.load_config()?;
            let (system, data) = system(g, &config, checkpoints.as_deref())?;
            let evaluation = experiment::evaluate(&system, &data.test_inputs(), &data.test_labels(), config.n_classes())?;
            let dir = g.out_dir()?;
            experiment::write_metrics(&dir.join("metrics.json"), &evaluation, &config)?;
            experiment::write_predictions(&dir.join("predictions.csv"), &evaluation, &data.dataset.test, config.n_classes())?;
            for (method, m) in &evaluation.metrics {
                println!(
                    "{method:<13} acc {:.4}  P {:.4}  R {:.4}",
                    m.accuracy,
                    m.precision(config.metrics.average),
                    m.recall(config.metrics.average)
                );
            }
            Ok(())
        }
        Command::Sweep { checkpoints } => {
            let config = g.load_config()?;
            let bank = load_noise_bank(&config)?;
            let (system, data) = system(g, &config, checkpoints.as_deref())?;
            let rows = noise_sweep(&system, &data.dataset.test, config.n_classes(), &config.sweep, config.seed, bank.as_ref())?;
            let path = g.out_dir()?.join("sweep.csv");
            let file = std::fs::File::create(&path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            write_sweep_csv(&rows, config.metrics.average, std::io::BufWriter::new(file))
                .map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            println!("{} rows written to {}", rows.len(), path.display());
            Ok(())
        }
        Command::GradCheck { coords, eps, input_len } => {
            let config = match &g.config {
                Some(_) => g.load_config()?,
                None => ExperimentConfig::for_source(".", Default::default()),
            };
            commands::grad_check(&config, *coords, *eps, *input_len, g.seed.unwrap_or(config.seed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
