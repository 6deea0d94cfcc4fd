//! `psfield`: generate synthetic PSF fields, interpolate them with transport
//! or the baselines, and tabulate quality metrics and PCA sensitivity.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Method;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "psfield", version, about)]
struct Cli {
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic field: train.csv, test.csv and images/.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate the PSFs at the target positions, one run per neighbor count.
    Interp {
        /// Manifest of the observed PSFs.
        #[arg(long)]
        manifest: PathBuf,
        /// Manifest whose positions are interpolated; its images are not read
        /// beyond validation.
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Neighbor counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        neighbors: Vec<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare estimate runs against the true PSFs.
    Metrics {
        /// Manifest of the true PSFs.
        #[arg(long)]
        manifest: PathBuf,
        /// Run directories written by `interp`, or their parents.
        #[arg(long, required = true, num_args = 1..)]
        estimates: Vec<PathBuf>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ellipticity sensitivity to each principal component of the PSF set.
    Sensitivity {
        /// Manifests whose PSFs together form the set.
        #[arg(long, required = true, num_args = 1..)]
        manifest: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        components: usize,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn run(cli: Cli) -> psfield::Result<()> {
    match cli.command {
        Command::Gen { config, seed, out } => {
            let cfg = RunConfig::load(config.as_deref())?.with_seed(seed);
            commands::gen(&cfg, &out)
        }
        Command::Interp {
            manifest,
            targets,
            method,
            neighbors,
            config,
            seed,
            out,
        } => {
            let cfg = RunConfig::load(config.as_deref())?.with_seed(seed);
            commands::interp(&cfg, &manifest, &targets, method, &neighbors, &out)
        }
        Command::Metrics {
            manifest,
            estimates,
            out,
        } => commands::metrics(&manifest, &estimates, out.as_deref()),
        Command::Sensitivity {
            manifest,
            components,
            out,
        } => commands::sensitivity_cmd(&manifest, components, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("psfield: cannot start {} threads: {e}", cli.threads);
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psfield: {e}");
            ExitCode::from(if e.is_input_error() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            })
        }
    }
}
