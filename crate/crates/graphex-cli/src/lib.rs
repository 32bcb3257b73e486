//! Command-line pipeline over the graphex crate: simulation, sparsity
//! checking, estimation, splitting, fitting, test-user refits, predictive
//! draws, and recommendation scoring.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};

pub mod commands;
pub mod config;
pub mod io;
pub mod par;

use config::RunConfig;

/// Parsed invocation: the subcommand and its `--flag value` pairs.
#[derive(Debug, Clone)]
pub struct Args {
    pub cmd: String,
    pub flags: BTreeMap<String, String>,
}

impl Args {
    pub fn require(&self, flag: &str) -> Result<&str> {
        self.flags
            .get(flag)
            .map(|s| s.as_str())
            .ok_or_else(|| anyhow!("{}: missing required flag --{flag}", self.cmd))
    }

    pub fn parse_flag<T: FromStr>(&self, flag: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(flag)?;
        raw.parse().map_err(|e| anyhow!("--{flag} {raw}: {e}"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_flag("seed")
    }

    /// Resolved configuration: optional `--config FILE`, then flag
    /// overrides for every known config key.
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = match self.flags.get("config") {
            Some(path) => RunConfig::load(&PathBuf::from(path))?,
            None => RunConfig::default(),
        };
        for (flag, value) in &self.flags {
            let key = flag.replace('-', "_");
            if config::KNOWN_KEYS.contains(&key.as_str()) {
                cfg.set(&key, value)?;
            }
        }
        Ok(cfg)
    }
}

/// Flags every command accepts beyond the config keys.
fn command_flags(cmd: &str) -> Option<&'static [&'static str]> {
    Some(match cmd {
        "simulate" => &["out", "seed", "config"],
        "check-sparsity" => &["graph", "out", "seed", "config", "side"],
        "estimate" => &["graph", "out", "seed", "config"],
        "split" => &["graph", "out", "seed", "config", "p", "q"],
        "fit" => &["graph", "out", "seed", "config", "estimates"],
        "fit-users" => &["graph", "model", "out", "seed", "config", "user-size"],
        "predict" => &["model", "out", "seed", "config", "test", "dense-model"],
        "evaluate" => &["model", "test", "train", "out", "config"],
        _ => return None,
    })
}

const USAGE: &str = "usage: graphex <command> [--flag value ...]

commands:
  simulate        draw a graph and its latent truth from the generative model
  check-sparsity  edge-density profile over subsampling levels, with verdict
  estimate        sigma and size estimation from an observed graph
  split           test-train split by user/item subsampling
  fit             coordinate-ascent variational inference
  fit-users       refit user factors on a holdout-fit part, globals frozen
  predict         posterior-predictive graph draws and summary checks
  evaluate        recommendation scoring (recall@M, nDCG) on a test part

common flags: --out DIR, --seed N (required wherever randomness is drawn),
--config FILE (flat key=value), plus per-key overrides such as --sigma-u,
--k, --p, --q, --threads. Run a command with --help for its flags.";

pub fn run(argv: &[String]) -> Result<()> {
    let Some(cmd) = argv.first() else {
        bail!("{USAGE}");
    };
    if cmd == "--help" || cmd == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    let Some(extra) = command_flags(cmd) else {
        bail!("unknown command {cmd:?}\n{USAGE}");
    };

    let mut flags = BTreeMap::new();
    let mut it = argv[1..].iter();
    while let Some(arg) = it.next() {
        if arg == "--help" {
            let mut allowed: Vec<&str> = extra.to_vec();
            allowed.extend(config::KNOWN_KEYS.iter().copied());
            println!("graphex {cmd} flags: {}", allowed.join(", "));
            return Ok(());
        }
        let Some(name) = arg.strip_prefix("--") else {
            bail!("{cmd}: expected --flag, got {arg:?}");
        };
        let known = extra.contains(&name) || config::KNOWN_KEYS.contains(&name.replace('-', "_").as_str());
        if !known {
            bail!("{cmd}: unknown flag --{name}");
        }
        let Some(value) = it.next() else {
            bail!("{cmd}: flag --{name} needs a value");
        };
        if flags.insert(name.to_string(), value.clone()).is_some() {
            bail!("{cmd}: flag --{name} given twice");
        }
    }
    let args = Args { cmd: cmd.clone(), flags };

    match cmd.as_str() {
        "simulate" => commands::simulate(&args),
        "check-sparsity" => commands::check_sparsity(&args),
        "estimate" => commands::estimate(&args),
        "split" => commands::split_cmd(&args),
        "fit" => commands::fit_cmd(&args),
        "fit-users" => commands::fit_users(&args),
        "predict" => commands::predict(&args),
        "evaluate" => commands::evaluate(&args),
        _ => unreachable!(),
    }
}
