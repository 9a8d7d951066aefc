// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! `blockade`: pulse synthesis, simulation and error budgets for
//! photon-blockade control.
//!
//! Exit codes: 0 success, 1 internal or I/O error, 2 invalid config or
//! arguments, 3 optimizer did not converge, 4 target infeasible.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{execute, prepare, Command};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::run::{timestamp, Flags, Format, Manifest, RunDir, DEFAULT_SEED, TOOL};

#[derive(Debug, Parser)]
#[command(name = "blockade", version, about = "Photon-blockade pulse synthesis and simulation")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Linear-drive amplitude error for `simulate` in fock1 mode.
    #[arg(long, global = true, allow_hyphen_values = true)]
    eta: Option<f64>,
    /// Modulation profile; overrides the config.
    #[arg(long, global = true, value_parser = ["double_pump", "semi_rotation", "two_point"])]
    profile: Option<String>,
    /// SI units (W, rad/s) for `budget`; `feasibility` is always SI.
    #[arg(long, global = true)]
    si: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Optimize a sine-series pulse for a gate or state target.
    Synthesize,
    /// Replay a pulse, with loss if κ > 0, or run the Fock-1 protocol.
    Simulate,
    /// Modulate an envelope and export the single-drive program.
    Modulate,
    /// Fock-1 Trotter error over an (M, χT) grid with a power-law fit.
    TrotterScan,
    /// Closed-form error budget and power requirements.
    Budget,
    /// Platform feasibility table.
    Feasibility,
    /// Controllability diagnostics for r = 1..r_max.
    Universality,
    /// Re-run the command recorded in a manifest into a new run directory.
    Replay { manifest: PathBuf },
}

impl Cmd {
    fn command(&self) -> Option<Command> {
        Some(match self {
            Cmd::Synthesize => Command::Synthesize,
            Cmd::Simulate => Command::Simulate,
            Cmd::Modulate => Command::Modulate,
            Cmd::TrotterScan => Command::TrotterScan,
            Cmd::Budget => Command::Budget,
            Cmd::Feasibility => Command::Feasibility,
            Cmd::Universality => Command::Universality,
            Cmd::Replay { .. } => return None,
        })
    }
}

fn resolve(cli: &Cli) -> CliResult<(Command, RunConfig, Flags)> {
    if let Cmd::Replay { manifest } = &cli.command {
        if cli.config.is_some()
            || cli.seed.is_some()
            || cli.format.is_some()
            || cli.eta.is_some()
            || cli.profile.is_some()
            || cli.si
        {
            return Err(CliError::Config(
                "replay takes only --out; everything else comes from the manifest".into(),
            ));
        }
        let m = Manifest::load(manifest)?;
        let cfg = RunConfig::parse(&serde_json::to_string(&m.config)?)?;
        return Ok((Command::parse(&m.command)?, cfg, m.flags));
    }
    let cmd = cli.command.command().expect("replay handled above");
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("{}")?,
    };
    cfg.seed = Some(cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED));
    let flags = Flags {
        format: cli.format.unwrap_or_default(),
        eta: cli.eta,
        profile: cli.profile.clone(),
        si: cli.si,
    };
    Ok((cmd, cfg, flags))
}

fn run(cli: &Cli) -> CliResult<()> {
    let (cmd, cfg, flags) = resolve(cli)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let plan = prepare(cmd, &cfg, &flags, seed)?;
    let manifest = Manifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        seed,
        created: timestamp(),
        flags,
        config: cfg,
    };
    let mut dir = RunDir::create(&cli.out, &manifest)?;
    let outcome = execute(&plan, &mut dir)?;
    for l in &outcome.lines {
        println!("{l}");
    }
    println!("run directory: {}", dir.path.display());
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
