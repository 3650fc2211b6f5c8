use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use h2m_cli::config::FileConfig;
use h2m_cli::{commands, error_json, exit_code, EXIT_DIAGNOSTIC};
use h2m_core::mcmc::{DrawFormat, Variant};
use h2m_core::{Error, Result};

#[derive(Parser)]
#[command(name = "h2m", version, about = "Two-component exposure and health model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a dataset.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV; overrides `data.path`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// ME, H2M or H2Mjoint.
        #[arg(long)]
        variant: Option<Variant>,
        /// Fit each pollutant on its own.
        #[arg(long)]
        single_pollutant: bool,
        /// Draw file format: csv or columnar.
        #[arg(long)]
        format: Option<DrawFormat>,
    },
    /// Simulate one dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the replicated simulation study.
    Study {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of ME, H2M, H2Mjoint.
        #[arg(long, value_delimiter = ',')]
        variant: Option<Vec<Variant>>,
    },
    /// Check convergence of stored draws.
    Diagnose {
        /// Fit output directory or its `draws` subdirectory.
        draws: PathBuf,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<FileConfig> {
    let config = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(j) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Fit {
            common,
            data,
            variant,
            single_pollutant,
            format,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = common.seed {
                cfg.mcmc.seed = s;
            }
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            if let Some(f) = format {
                cfg.mcmc.format = f;
            }
            cfg.data.single_pollutant |= single_pollutant;
            let path = data
                .or_else(|| cfg.data.path.clone())
                .ok_or_else(|| Error::InvalidConfig("no dataset given (--data or data.path)".into()))?;
            commands::fit(&cfg, &path, &common.out)?;
        }
        Command::Simulate { common } => {
            let mut cfg = load(&common)?;
            if let Some(s) = common.seed {
                cfg.simulation.seed = s;
            }
            commands::simulate(&cfg, &common.out)?;
        }
        Command::Study { common, variant } => {
            let mut cfg = load(&common)?;
            if let Some(s) = common.seed {
                cfg.simulation.seed = s;
            }
            if let Some(v) = variant {
                cfg.study.variants = v;
            }
            let (_, metrics) = commands::study(&cfg, &common.out)?;
            print!("{}", metrics.to_csv());
        }
        Command::Diagnose { draws, out } => {
            let report = commands::diagnose(&draws)?;
            print!("{}", report.to_csv());
            if let Some(dir) = out {
                h2m_cli::manifest::create_dir(&dir)?;
                h2m_cli::manifest::write_json(&dir.join("convergence.json"), &report)?;
            }
            if !report.passed {
                for f in report.failures() {
                    log::warn!("{} failed: R-hat {:.3}, MC error {:.3e}", f.parameter, f.rhat, f.mc_error);
                }
                return Ok(EXIT_DIAGNOSTIC);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("H2M_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
