//! Flat `key = value` configuration.
//!
//! A config names a preset and overrides individual fields. Resolution order:
//! preset defaults at the requested scale, then file entries, then command
//! line entries. [`ExperimentConfig::echo`] renders every resolved key and
//! parses back to the same config.

use std::fs;
use std::path::Path;

use crate::cli::presets::{Preset, Scale};
use crate::dynamics::{RbmNorm, RunConfig};
use crate::ensemble::InitialCondition;
use crate::error::{LandauError, Result};
use crate::kernels::KernelSpec;
use crate::losses::TildeRange;
use crate::optim::TrainConfig;

pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub run: RunConfig,
    pub kde_eps: f64,
    pub oracle_every: usize,
}

/// Splits `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            LandauError::InvalidConfig(format!("line {}: expected key=value, got `{line}`", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a single `key=value` command-line override.
pub fn parse_flag(flag: &str) -> Result<(String, String)> {
    let (k, v) = flag
        .split_once('=')
        .ok_or_else(|| LandauError::InvalidConfig(format!("expected key=value, got `{flag}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| LandauError::OutOfRange {
        key: key.into(),
        reason: format!("cannot parse `{v}`"),
    })
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(LandauError::OutOfRange {
            key: key.into(),
            reason: format!("expected a boolean, got `{v}`"),
        }),
    }
}

fn rbm_norm_str(n: RbmNorm) -> &'static str {
    match n {
        RbmNorm::Unbiased => "unbiased",
        RbmNorm::Batch => "batch",
    }
}

fn tilde_str(r: TildeRange) -> &'static str {
    match r {
        TildeRange::Batch => "batch",
        TildeRange::Full => "full",
    }
}

/// Kernel fields are collected first and assembled once, so that `gamma`
/// and `min_dist` may be given in any order.
struct KernelDraft {
    gamma: f64,
    c_gamma: f64,
    min_dist: Option<f64>,
}

fn apply_train(t: &mut TrainConfig, field: &str, key: &str, v: &str) -> Result<()> {
    match field {
        "batch_size" => t.batch_size = num(key, v)?,
        "epochs" => t.epochs = num(key, v)?,
        "lr" => t.lr = num(key, v)?,
        "optimizer" => t.optimizer = v.parse()?,
        "beta1" => t.beta1 = num(key, v)?,
        "beta2" => t.beta2 = num(key, v)?,
        _ => return Err(LandauError::UnknownKey(key.into())),
    }
    Ok(())
}

impl ExperimentConfig {
    /// Preset defaults with no overrides.
    pub fn from_preset(name: &str, scale: Scale, seed: u64) -> Result<Self> {
        let p = Preset::named(name)?;
        Ok(Self {
            scale,
            run: p.run_config(scale, seed),
            kde_eps: p.kde_eps,
            oracle_every: p.oracle_every,
        })
    }

    /// Resolves `pairs` (file entries followed by flags). Later entries win.
    pub fn resolve(pairs: &[(String, String)]) -> Result<Self> {
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let name = last("preset").ok_or_else(|| LandauError::InvalidConfig("missing `preset`".into()))?;
        let scale = match last("scale") {
            Some(s) => s.parse()?,
            None => Scale::Desk,
        };
        let seed = match last("seed") {
            Some(s) => num("seed", s)?,
            None => DEFAULT_SEED,
        };
        let mut cfg = Self::from_preset(name, scale, seed)?;
        let run = &mut cfg.run;
        let mut kd = KernelDraft {
            gamma: run.kernel.gamma,
            c_gamma: run.kernel.c_gamma,
            min_dist: None,
        };
        let mut kernel_touched = false;
        for (key, v) in pairs {
            let (key, v) = (key.as_str(), v.as_str());
            match key {
                "preset" | "scale" | "seed" => {}
                "n" => run.n = num(key, v)?,
                "tau" => run.tau = num(key, v)?,
                "steps" => run.n_steps = num(key, v)?,
                "scheme" => run.scheme = v.parse()?,
                "rbm_batch" => {
                    run.rbm_batch = match v {
                        "none" | "0" => None,
                        _ => Some(num(key, v)?),
                    }
                }
                "rbm_norm" => {
                    run.rbm_norm = match v {
                        "unbiased" => RbmNorm::Unbiased,
                        "batch" => RbmNorm::Batch,
                        _ => {
                            return Err(LandauError::OutOfRange {
                                key: key.into(),
                                reason: format!("expected unbiased or batch, got `{v}`"),
                            })
                        }
                    }
                }
                "initial" => {
                    run.initial = v.parse::<InitialCondition>()?;
                    kernel_touched = true;
                }
                "gamma" => {
                    kd.gamma = num(key, v)?;
                    kernel_touched = true;
                }
                "c_gamma" => {
                    kd.c_gamma = num(key, v)?;
                    kernel_touched = true;
                }
                "min_dist" => {
                    kd.min_dist = Some(num(key, v)?);
                    kernel_touched = true;
                }
                "warm_start" => run.warm_start = boolean(key, v)?,
                "tilde_range" => {
                    run.tilde_range = match v {
                        "batch" => TildeRange::Batch,
                        "full" => TildeRange::Full,
                        _ => {
                            return Err(LandauError::OutOfRange {
                                key: key.into(),
                                reason: format!("expected batch or full, got `{v}`"),
                            })
                        }
                    }
                }
                "checkpoint_every" => run.checkpoint_every = num(key, v)?,
                "deterministic" => run.deterministic = boolean(key, v)?,
                "kde_eps" => cfg.kde_eps = num(key, v)?,
                "oracle_every" => cfg.oracle_every = num(key, v)?,
                "batch_size" => {
                    let b = num(key, v)?;
                    run.first.batch_size = b;
                    run.later.batch_size = b;
                }
                _ => match key.split_once('.') {
                    Some(("first", f)) => apply_train(&mut run.first, f, key, v)?,
                    Some(("later", f)) => apply_train(&mut run.later, f, key, v)?,
                    _ => return Err(LandauError::UnknownKey(key.into())),
                },
            }
        }
        if kernel_touched {
            let d = run.initial.dim();
            run.kernel = match kd.min_dist {
                Some(m) => KernelSpec::with_min_dist(d, kd.gamma, kd.c_gamma, m)?,
                None => KernelSpec::new(d, kd.gamma, kd.c_gamma)?,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads an optional config file and applies command-line overrides.
    pub fn load(file: Option<&Path>, flags: &[String]) -> Result<Self> {
        let mut pairs = match file {
            Some(p) => parse_pairs(&fs::read_to_string(p).map_err(|e| LandauError::io(p, e))?)?,
            None => Vec::new(),
        };
        for f in flags {
            pairs.push(parse_flag(f)?);
        }
        Self::resolve(&pairs)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if !(self.kde_eps > 0.0 && self.kde_eps.is_finite()) {
            return Err(LandauError::OutOfRange {
                key: "kde_eps".into(),
                reason: format!("must be positive, got {}", self.kde_eps),
            });
        }
        if self.oracle_every == 0 {
            return Err(LandauError::OutOfRange {
                key: "oracle_every".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Every resolved key in a fixed order; parses back to `self`.
    pub fn echo(&self) -> String {
        let r = &self.run;
        let mut lines = vec![
            format!("preset = {}", r.preset),
            format!("scale = {}", self.scale),
            format!("seed = {}", r.seed),
            format!("initial = {}", r.initial),
            format!("gamma = {}", r.kernel.gamma),
            format!("c_gamma = {}", r.kernel.c_gamma),
            format!("min_dist = {}", r.kernel.min_dist),
            format!("n = {}", r.n),
            format!("tau = {}", r.tau),
            format!("steps = {}", r.n_steps),
            format!("scheme = {}", r.scheme),
            format!(
                "rbm_batch = {}",
                r.rbm_batch.map_or("none".to_string(), |b| b.to_string())
            ),
            format!("rbm_norm = {}", rbm_norm_str(r.rbm_norm)),
            format!("warm_start = {}", r.warm_start),
            format!("tilde_range = {}", tilde_str(r.tilde_range)),
            format!("checkpoint_every = {}", r.checkpoint_every),
            format!("deterministic = {}", r.deterministic),
            format!("kde_eps = {}", self.kde_eps),
            format!("oracle_every = {}", self.oracle_every),
        ];
        for (tag, t) in [("first", &r.first), ("later", &r.later)] {
            lines.push(format!("{tag}.batch_size = {}", t.batch_size));
            lines.push(format!("{tag}.epochs = {}", t.epochs));
            lines.push(format!("{tag}.lr = {}", t.lr));
            lines.push(format!("{tag}.optimizer = {}", t.optimizer));
            lines.push(format!("{tag}.beta1 = {}", t.beta1));
            lines.push(format!("{tag}.beta2 = {}", t.beta2));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}
