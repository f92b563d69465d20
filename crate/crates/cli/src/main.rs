mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "elnum", version, about = "Blow-up bubbles for the Einstein-Lichnerowicz equation on the round sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dimension.
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Plateau radius of the bump profile.
    #[arg(long = "M", global = true)]
    plateau: Option<f64>,
    /// Comma-separated ε values.
    #[arg(long, global = true)]
    eps_ladder: Option<String>,
    /// Schedule indices `a..b`.
    #[arg(long, global = true)]
    k_range: Option<String>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol_quad: Option<f64>,
    /// Scaled Newton residual tolerance.
    #[arg(long, global = true)]
    tol_newton: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Expansion ladder of the measured reduced energy.
    Expansion,
    /// Critical point of the limit reduced energy.
    Reduced,
    /// One peaked solution.
    Solve,
    /// Family of peaked solutions over decreasing ε.
    Family,
    /// Linearization spectrum at the base solution.
    Spectrum,
    /// Six-dimensional reduced map and fit.
    N6,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Expansion => "expansion",
            Command::Reduced => "reduced",
            Command::Solve => "solve",
            Command::Family => "family",
            Command::Spectrum => "spectrum",
            Command::N6 => "n6",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.n) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(n)) => RunConfig::defaults(n),
        (None, None) => anyhow::bail!("either --config or --n is required"),
    };
    let overrides = [
        ("n", cli.n.map(|v| v.to_string())),
        ("plateau", cli.plateau.map(|v| v.to_string())),
        ("eps_ladder", cli.eps_ladder.clone()),
        ("k_range", cli.k_range.clone()),
        ("tol_quad", cli.tol_quad.map(|v| v.to_string())),
        ("tol_newton", cli.tol_newton.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v).with_context(|| format!("flag for `{key}`"))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = resolve_config(cli)?;
    let name = cli.command.name();
    debug_assert!(commands::COMMANDS.contains(&name));
    let env = commands::run_command(name, &cfg).with_context(|| format!("running `{name}`"))?;
    let paths = report::emit_report(&env, &cfg.out)?;
    for c in &env.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(env.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
