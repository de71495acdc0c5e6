//! `roughbermudan`: batch driver for the lifted rough Heston pricer.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 numeric error, 4 `table1 --check` found a delta above tolerance.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use output::Output;

pub const SEED_ENV: &str = "ROUGHBERMUDAN_SEED";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Acceptance(String),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Acceptance(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Acceptance(m) => write!(f, "acceptance check failed: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<roughbermudan::Error> for CliError {
    fn from(e: roughbermudan::Error) -> Self {
        use roughbermudan::Error as E;
        match e {
            E::Domain(_) | E::InvalidParameter { .. } | E::NonIntegrable { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Parser)]
#[command(name = "roughbermudan", version, about = "Bermudan put pricing under lifted rough Heston models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized geometric ratios and squared L2 errors for n in {4,10,20,40,200}.
    Table1 {
        /// Exit with code 4 if a row deviates from the reference table.
        #[arg(long)]
        check: bool,
    },
    /// Bermudan put prices over the spot grid.
    Price,
    /// Critical prices along a parameter sweep.
    Critical,
    /// Fourier against Monte Carlo European puts.
    European,
    /// Distance between lifted and fractional Riccati solutions.
    RiccatiCheck,
    /// Per-step log-price and variance of the first `dump-paths` paths.
    SimulateDump,
}

/// Flags shared by all commands. Each model or run key is also accepted in
/// the `--config` file; flags win.
#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for Monte Carlo; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Random seed (default from $ROUGHBERMUDAN_SEED).
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    paths: Option<String>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    v0: Option<String>,
    #[arg(long, global = true)]
    nu_bar: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    #[arg(long, global = true)]
    eta: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    rho: Option<String>,
    #[arg(long, global = true)]
    r: Option<String>,
    #[arg(long, global = true)]
    s0: Option<String>,
    #[arg(long, global = true)]
    ratio: Option<String>,
    #[arg(long, global = true)]
    maturity: Option<String>,
    #[arg(long, global = true)]
    strike: Option<String>,
    #[arg(long, global = true)]
    spots: Option<String>,
    #[arg(long, global = true)]
    exercise_dates: Option<String>,
    #[arg(long, global = true)]
    time_steps: Option<String>,
    #[arg(long, global = true)]
    strikes: Option<String>,
    #[arg(long, global = true)]
    sweep: Option<String>,
    #[arg(long, global = true)]
    sweep_values: Option<String>,
    #[arg(long, global = true)]
    critical_lo: Option<String>,
    #[arg(long, global = true)]
    critical_hi: Option<String>,
    #[arg(long, global = true)]
    critical_tol: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    w: Option<String>,
    #[arg(long, global = true)]
    riccati_dt: Option<String>,
    #[arg(long, global = true)]
    fourier_dt: Option<String>,
    #[arg(long, global = true)]
    dump_paths: Option<String>,
}

impl Common {
    fn overrides(&self) -> [(&'static str, &Option<String>); 27] {
        [
            ("seed", &self.seed),
            ("paths", &self.paths),
            ("n", &self.n),
            ("alpha", &self.alpha),
            ("v0", &self.v0),
            ("nu-bar", &self.nu_bar),
            ("lambda", &self.lambda),
            ("eta", &self.eta),
            ("rho", &self.rho),
            ("r", &self.r),
            ("s0", &self.s0),
            ("ratio", &self.ratio),
            ("maturity", &self.maturity),
            ("strike", &self.strike),
            ("spots", &self.spots),
            ("exercise-dates", &self.exercise_dates),
            ("time-steps", &self.time_steps),
            ("strikes", &self.strikes),
            ("sweep", &self.sweep),
            ("sweep-values", &self.sweep_values),
            ("critical-lo", &self.critical_lo),
            ("critical-hi", &self.critical_hi),
            ("critical-tol", &self.critical_tol),
            ("w", &self.w),
            ("riccati-dt", &self.riccati_dt),
            ("fourier-dt", &self.fourier_dt),
            ("dump-paths", &self.dump_paths),
        ]
    }

    /// Defaults, then the seed environment variable, then the file, then flags.
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.set("seed", &seed)
                .map_err(|e| CliError::Config(format!("${SEED_ENV}: {e}")))?;
        }
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.common.resolve()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let out = Output::new(&cli.common.out, &cfg)?;
    match cli.command {
        Command::Table1 { check } => commands::table1(&cfg, &out, check),
        Command::Price => commands::price(&cfg, &out),
        Command::Critical => commands::critical(&cfg, &out),
        Command::European => commands::european(&cfg, &out),
        Command::RiccatiCheck => commands::riccati_check(&cfg, &out),
        Command::SimulateDump => commands::simulate_dump(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roughbermudan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
