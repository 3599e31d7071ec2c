use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvlab::experiment::{run_to_dir, ExperimentConfig};
use mvlab::models::CATALOG;
use mvlab::Error;

#[derive(Parser)]
#[command(name = "mvlab", version, about = "Particle experiments for McKean-Vlasov SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config
    Run {
        config: PathBuf,
        /// Directory for the CSV and manifest (overrides `output_dir`)
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads
        #[arg(long, env = "MVLAB_THREADS")]
        threads: Option<usize>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a config without running it
    Validate { config: PathBuf },
    /// Print the model catalog
    ListModels,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("mvlab: {err}");
    ExitCode::from(exit_code(&err))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListModels => {
            for (id, about) in CATALOG {
                println!("{id:<26} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match ExperimentConfig::from_path(&config) {
            Ok(cfg) => {
                println!("{}: ok ({} on {})", config.display(), cfg.experiment.name(), cfg.model);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run {
            config,
            output_dir,
            threads,
            seed,
        } => {
            let mut cfg = match ExperimentConfig::from_path(&config) {
                Ok(cfg) => cfg,
                Err(e) => return fail(e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = output_dir.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("mvlab-out"));
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(k) = threads {
                if k == 0 {
                    return fail(Error::Config("`--threads` must be at least 1".into()));
                }
                pool = pool.num_threads(k);
            }
            let pool = match pool.build() {
                Ok(p) => p,
                Err(e) => return fail(Error::Evaluation(e.to_string())),
            };
            match pool.install(|| run_to_dir(&cfg, &dir)) {
                Ok(art) => {
                    println!("wrote {} and {}", art.csv.display(), art.manifest.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
