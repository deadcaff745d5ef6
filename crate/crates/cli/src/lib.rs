//! Command-line sweep driver for the `owpn` library. Every subcommand
//! evaluates a parameter grid and writes CSV.

pub mod commands;
pub mod error;
pub mod spec;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, Result};
use spec::{AxisDefaults, RawSettings, SweepSpec};

#[derive(Debug, Parser)]
#[command(
    name = "owpn",
    version,
    about = "Capacity bounds and GDoF sweeps for the oversampled Wiener phase noise channel"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Outer, partially-coherent and coherent-combining bounds over (P, L, sigma2).
    Bounds,
    /// GDoF exponents over (alpha, beta).
    Gdof,
    /// Monte Carlo checks of the closed forms; exits 2 on any failure.
    Verify,
    /// Iterate the posterior Fisher-information recursion.
    Riccati {
        /// Per-sample signal power E|X|^2.
        #[arg(long)]
        x: f64,
        /// L / sigma2.
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long, default_value_t = owpn::riccati::MAX_ITERATIONS)]
        max_iter: usize,
    },
    /// Near-AWGN / near-ONC classification over (P, L, sigma2).
    Regimes,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Power axis: v1,v2,... | log:start:stop:n | lin:start:stop:n
    #[arg(
        long = "P",
        global = true,
        allow_hyphen_values = true,
        value_name = "AXIS"
    )]
    pub p: Option<String>,
    /// Oversampling axis (integers).
    #[arg(
        long = "L",
        global = true,
        allow_hyphen_values = true,
        value_name = "AXIS"
    )]
    pub l: Option<String>,
    /// Frequency-noise variance axis.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "AXIS")]
    pub sigma2: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "AXIS")]
    pub alpha: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "AXIS")]
    pub beta: Option<String>,
    /// nats or bits
    #[arg(long, global = true)]
    pub units: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Monte Carlo samples per check.
    #[arg(long, global = true)]
    pub samples: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// key=value file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<String>,
    /// Multiplies every verification tolerance.
    #[arg(long = "tol-scale", global = true)]
    pub tol_scale: Option<String>,
    /// Cap on grid rows.
    #[arg(long = "max-rows", global = true)]
    pub max_rows: Option<String>,
}

impl CommonArgs {
    fn raw(&self) -> RawSettings {
        RawSettings {
            p: self.p.clone(),
            l: self.l.clone(),
            sigma2: self.sigma2.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            units: self.units.clone(),
            seed: self.seed.clone(),
            samples: self.samples.clone(),
            out: self.out.clone(),
            threads: self.threads.clone(),
            tol_scale: self.tol_scale.clone(),
            max_rows: self.max_rows.clone(),
        }
    }

    /// Merges flags over the optional config file.
    pub fn resolve(&self, defaults: &AxisDefaults) -> Result<SweepSpec> {
        let base = match &self.config {
            Some(path) => RawSettings::from_config_file(path)?,
            None => RawSettings::default(),
        };
        SweepSpec::resolve(&self.raw().over(base), defaults)
    }
}

/// Defaults per subcommand; `verify` sweeps fewer, cheaper points.
pub fn defaults_for(command: &Command) -> AxisDefaults {
    match command {
        Command::Verify => AxisDefaults {
            p: "20",
            l: "2,4,16",
            sigma2: "0,0.1,1",
            ..AxisDefaults::default()
        },
        _ => AxisDefaults::default(),
    }
}

/// Runs a parsed command line and writes its output.
pub fn run(cli: &Cli) -> Result<()> {
    let spec = cli.common.resolve(&defaults_for(&cli.command))?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = spec.threads {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?
    };
    pool.install(|| match &cli.command {
        Command::Bounds => emit(&commands::bounds(&spec)?.to_csv(), spec.out.as_deref()),
        Command::Gdof => emit(&commands::gdof(&spec)?.to_csv(), spec.out.as_deref()),
        Command::Regimes => emit(&commands::regimes(&spec)?.to_csv(), spec.out.as_deref()),
        Command::Riccati { x, ratio, max_iter } => emit(
            &commands::riccati_report(*x, *ratio, *max_iter)?,
            spec.out.as_deref(),
        ),
        Command::Verify => {
            let (table, failed) = commands::verify(&spec)?;
            emit(&table.to_csv(), spec.out.as_deref())?;
            if failed > 0 {
                Err(CliError::VerificationFailed {
                    failed,
                    total: table.rows.len(),
                })
            } else {
                Ok(())
            }
        }
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}
