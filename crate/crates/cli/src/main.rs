#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;
mod svg;

use config::ConfigError;

/// Exit codes beyond clap's usage error (2).
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;
pub const EXIT_TIME_REACHED: u8 = 5;

#[derive(Parser)]
#[command(name = "refugia", version, about = "Predator-prey steady states with a prey refuge and directed predator flux")]
struct Cli {
    /// TOML or JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Origin {
    GammaV,
    GammaU,
    Lp2,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Alpha,
    Lambda0,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenvalue of the habitat well over a range of predator growth rates.
    Eig {
        /// a:b:n, or a:b:n:log for geometric spacing.
        #[arg(long, default_value = "0.1:1000:50:log", allow_hyphen_values = true)]
        mu_grid: String,
    },
    /// Classify a grid of (λ, μ) points by the existence and nonexistence curves.
    Regions {
        #[arg(long, default_value = "0.05:3:30", allow_hyphen_values = true)]
        lambda: String,
        #[arg(long, default_value = "-3:6:37", allow_hyphen_values = true)]
        mu: String,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Solve for a positive steady state.
    Steady {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Search with this many random starts instead of following the branch.
        #[arg(long)]
        multistart: Option<usize>,
        /// Also write the fields as CSV.
        #[arg(long)]
        fields: bool,
    },
    /// Follow a branch of positive steady states.
    Continue {
        #[arg(long, value_enum)]
        from: Origin,
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Size of the seed step off the semitrivial state.
        #[arg(long, default_value_t = 1e-3)]
        seed_step: f64,
    },
    /// Integrate the time-dependent system.
    Evolve {
        /// Final time, overriding the config.
        #[arg(long = "T")]
        t_final: Option<f64>,
        /// Write a field snapshot every k monitor records.
        #[arg(long)]
        snapshots: Option<usize>,
    },
    /// Large-flux and small-growth limits.
    Asymptotics {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Prey growth for the flux sweep, as a multiple of σ₁.
        #[arg(long, default_value_t = 1.5)]
        lambda_factor: f64,
    },
    /// Run the full acceptance suite.
    Verify,
}

fn run(cli: Cli) -> Result<u8> {
    if let Ok(n) = std::env::var("REFUGIA_THREADS") {
        let n: usize = n
            .parse()
            .map_err(|_| ConfigError(format!("REFUGIA_THREADS must be a positive integer, got '{n}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => config::parse_config(p)?,
        None => config::RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    match cli.command {
        Command::Eig { mu_grid } => commands::eig(cfg, &mu_grid),
        Command::Regions { lambda, mu, alpha } => commands::regions(cfg, &lambda, &mu, alpha),
        Command::Steady {
            lambda,
            mu,
            alpha,
            multistart,
            fields,
        } => {
            override_model(&mut cfg, lambda, mu, alpha);
            commands::steady(cfg, multistart, fields)
        }
        Command::Continue {
            from,
            mu,
            alpha,
            seed_step,
        } => {
            override_model(&mut cfg, None, mu, alpha);
            commands::continue_branch(cfg, from, seed_step)
        }
        Command::Evolve { t_final, snapshots } => {
            if let Some(t) = t_final {
                cfg.evolution.t_final = t;
            }
            if let Some(k) = snapshots {
                cfg.evolution.snapshot_every = k;
            }
            commands::evolve(cfg)
        }
        Command::Asymptotics { mode, lambda_factor } => commands::asymptotics(cfg, mode, lambda_factor),
        Command::Verify => commands::verify(cfg),
    }
}

fn override_model(cfg: &mut config::RunConfig, lambda: Option<f64>, mu: Option<f64>, alpha: Option<f64>) {
    if let Some(l) = lambda {
        cfg.model.lambda = l;
    }
    if let Some(m) = mu {
        cfg.model.mu = m;
    }
    if let Some(a) = alpha {
        cfg.model.alpha = a;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
