//! Flat key=value run configuration with flag overrides.
//!
//! Unknown keys are rejected; every command writes a resolved copy of its
//! configuration next to its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use graphex::inference::{FitConfig, FitMode, LeftoverForm};
use graphex::simulate::ModelHyperparams;

/// Keys a configuration file or flag override may set.
pub const KNOWN_KEYS: &[&str] = &[
    "sigma_u", "tau_u", "sigma_i", "tau_i", "a", "b", "c", "d", "k", "s", "alpha",
    "max_iters", "conv_tol", "mc_samples", "mode", "dense_sigma", "leftover_form",
    "p", "q", "levels", "reps", "flat_tol", "side",
    "m", "unpopular_pct", "draws", "max_edges", "threads",
    "user_size", "item_size", "user_keep", "item_keep", "n_sims",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value, got {raw:?}", path.display(), lineno + 1);
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("{}:{}: unknown config key {key:?}", path.display(), lineno + 1);
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(RunConfig { values })
    }

    /// Apply one flag override (`key` already in snake_case).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            bail!("unknown config key {key:?}");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("config {key}={v} is not a number")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().with_context(|| format!("config {key}={v} is not an integer")),
        }
    }

    /// Model hyperparameters with the survey defaults filled in.
    pub fn hyperparams(&self) -> Result<ModelHyperparams> {
        let mut h = ModelHyperparams::survey_defaults(
            self.f64_or("s", 120.0)?,
            self.f64_or("alpha", 120.0)?,
        );
        h.sigma_u = self.f64_or("sigma_u", h.sigma_u)?;
        h.tau_u = self.f64_or("tau_u", h.tau_u)?;
        h.sigma_i = self.f64_or("sigma_i", h.sigma_i)?;
        h.tau_i = self.f64_or("tau_i", h.tau_i)?;
        h.a = self.f64_or("a", h.a)?;
        h.b = self.f64_or("b", h.b)?;
        h.c = self.f64_or("c", h.c)?;
        h.d = self.f64_or("d", h.d)?;
        h.k = self.usize_or("k", h.k)?;
        Ok(h)
    }

    pub fn fit_config(&self, seed: u64) -> Result<FitConfig> {
        let mut cfg = FitConfig { seed, ..Default::default() };
        cfg.k = self.usize_or("k", cfg.k)?;
        cfg.max_iters = self.usize_or("max_iters", cfg.max_iters as usize)? as u32;
        cfg.conv_tol = self.f64_or("conv_tol", cfg.conv_tol)?;
        cfg.mc_samples = self.usize_or("mc_samples", cfg.mc_samples as usize)? as u32;
        cfg.dense_sigma = self.f64_or("dense_sigma", cfg.dense_sigma)?;
        cfg.mode = match self.get("mode").unwrap_or("sparse") {
            "sparse" => FitMode::Sparse,
            "dense" => FitMode::Dense,
            other => bail!("mode must be sparse or dense, got {other:?}"),
        };
        cfg.leftover_form = match self.get("leftover_form").unwrap_or("tilted") {
            "tilted" => LeftoverForm::Tilted,
            "literal" => LeftoverForm::Literal,
            other => bail!("leftover_form must be tilted or literal, got {other:?}"),
        };
        Ok(cfg)
    }

    /// Render the resolved configuration, one sorted key=value per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
