//! Command-line front end for the `perdl` experiments.
//!
//! Exit codes: 0 on success, 1 for configuration errors (including bad
//! arguments), 2 for failures while running.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, ExperimentConfig, Ini, Switch};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] perdl_core::Error),
    #[error("client {client}: {source}")]
    Client {
        client: usize,
        source: perdl_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(ConfigError::Invalid(message.into()))
    }

    pub fn client(client: usize, source: perdl_core::Error) -> Self {
        CliError::Client { client, source }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "perdl",
    version,
    about = "Personalized dictionary learning experiments"
)]
pub struct Cli {
    /// Configuration file (`[section]` / `key = value`)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run a single seed instead of the configured list
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of collaborative rounds
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    /// Renormalize averaged global atoms (on|off)
    #[arg(long, global = true)]
    pub renormalize: Option<Switch>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override any setting, e.g. `--set synthetic.weak_clients=7,8,9`
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Independent vs collaborative runs on generated data
    Synth,
    /// Learn dictionaries and write top-k reconstructions
    Reconstruct,
    /// Report incoherence, identifiability and the matching hypothesis
    Validate,
    /// Run global matching on dictionary files
    Match {
        /// Dictionary files (default: [match] dictionaries)
        files: Vec<PathBuf>,
        /// Number of global atoms (default: [model] global_atoms)
        #[arg(long)]
        global_atoms: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Reconstruct => "reconstruct",
            Command::Validate => "validate",
            Command::Match { .. } => "match",
        }
    }
}

/// Resolves the configuration: file, then `--set` overrides, then flags.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut ini = match &cli.config {
        Some(p) => Ini::read(p)?,
        None => Ini::default(),
    };
    let mut overrides = Vec::with_capacity(cli.overrides.len());
    for o in &cli.overrides {
        let bad = || ConfigError::Invalid(format!("--set {o:?}: expected SECTION.KEY=VALUE"));
        let (lhs, value) = o.split_once('=').ok_or_else(bad)?;
        let (section, key) = lhs.split_once('.').ok_or_else(bad)?;
        let (section, key, value) = (section.trim(), key.trim(), value.trim());
        if (section, key) == ("run", "scenario") {
            // The scenario picks the defaults, so it must be known first.
            ini.insert(section, key, value);
        } else {
            overrides.push((section, key, value));
        }
    }
    let mut cfg = ExperimentConfig::from_ini(&ini)?;
    for (section, key, value) in overrides {
        cfg.set(section, key, value)?;
    }
    if let Some(seed) = cli.seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.clone();
    }
    if let Some(r) = cli.rounds {
        cfg.run.rounds = r;
    }
    if let Some(Switch(on)) = cli.renormalize {
        cfg.run.renormalize = on;
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    if let Command::Match {
        global_atoms: Some(g),
        ..
    } = &cli.command
    {
        cfg.model.global_atoms = *g;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and writes its outputs and manifest.
pub fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let cfg = resolve(cli)?;
    let mut out = match &cli.command {
        Command::Synth => commands::synth(&cfg)?,
        Command::Reconstruct => commands::reconstruct(&cfg)?,
        Command::Validate => commands::validate(&cfg)?,
        Command::Match { files, .. } => commands::match_files(&cfg, files)?,
    };
    out.text("manifest.ini", commands::manifest(&cfg, cli.command.name()));
    out.write_all(&cfg.run.out)?;
    Ok(cfg.run.out.clone())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("PERDL_LOG")
        .try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(dir) => {
            log::info!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
