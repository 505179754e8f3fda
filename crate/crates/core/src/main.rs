use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddstop::cli::{self, Dim, DEFAULT_PERTURBATIONS, EXIT_CHECK_FAILED};
use ddstop::config::RunConfig;
use ddstop::Result;

/// Exercise boundaries, values and Monte Carlo checks for perpetual American
/// options driven by the running maximum and maximum drawdown.
#[derive(Parser)]
#[command(name = "ddstop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed; overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Characteristic roots and their partial derivatives on the grid.
    Roots {
        #[command(flatten)]
        common: Common,
    },
    /// Exercise boundary curve (dim 2) or surface (dim 3) with switch points.
    Boundary {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        dim: u8,
        /// Start the put boundary ODE this far below its asymptote.
        #[arg(long, default_value_t = 0.0)]
        shoot_offset: f64,
    },
    /// Value function at one point.
    Value {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        dim: u8,
        #[arg(long, requires_all = ["s", "y"])]
        x: Option<f64>,
        #[arg(long, requires_all = ["x", "y"])]
        s: Option<f64>,
        #[arg(long, requires_all = ["x", "s"])]
        y: Option<f64>,
    },
    /// Monte Carlo verification report; exits 5 if a check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        dim: u8,
        #[arg(long, default_value_t = 0.0)]
        shoot_offset: f64,
        /// Boundary scale factors, e.g. `0.9,1.1`.
        #[arg(long)]
        perturb: Option<String>,
    },
    /// Monte Carlo estimates under the solved boundary and scaled copies.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        dim: u8,
        #[arg(long, default_value_t = 0.0)]
        shoot_offset: f64,
        #[arg(long)]
        perturb: Option<String>,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn factors(text: &Option<String>) -> Result<Vec<f64>> {
    match text {
        Some(t) => cli::parse_factors(t),
        None => Ok(DEFAULT_PERTURBATIONS.to_vec()),
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Roots { common } => {
            let (cfg, out) = load(&common)?;
            report(&cli::cmd_roots(&cfg, &out)?);
        }
        Command::Boundary {
            common,
            dim,
            shoot_offset,
        } => {
            let (cfg, out) = load(&common)?;
            report(&cli::cmd_boundary(
                &cfg,
                Dim::parse(dim)?,
                shoot_offset,
                &out,
            )?);
        }
        Command::Value {
            common,
            dim,
            x,
            s,
            y,
        } => {
            let (cfg, out) = load(&common)?;
            let point = x.zip(s).zip(y).map(|((x, s), y)| [x, s, y]);
            let (v, paths) = cli::cmd_value(&cfg, Dim::parse(dim)?, point, &out)?;
            println!("value {}", cli::fmt_real(v));
            report(&paths);
        }
        Command::Verify {
            common,
            dim,
            shoot_offset,
            perturb,
        } => {
            let (cfg, out) = load(&common)?;
            let (r, failures, paths) = cli::cmd_verify(
                &cfg,
                Dim::parse(dim)?,
                shoot_offset,
                &factors(&perturb)?,
                &out,
            )?;
            println!(
                "mc {} ± {} analytic {}",
                cli::fmt_real(r.mc_mean),
                cli::fmt_real(r.mc_stderr),
                cli::fmt_real(r.analytic_value)
            );
            report(&paths);
            if !failures.is_empty() {
                for f in &failures {
                    eprintln!("check failed: {f}");
                }
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Command::Simulate {
            common,
            dim,
            shoot_offset,
            perturb,
        } => {
            let (cfg, out) = load(&common)?;
            report(&cli::cmd_simulate(
                &cfg,
                Dim::parse(dim)?,
                shoot_offset,
                &factors(&perturb)?,
                &out,
            )?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(parsed.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
