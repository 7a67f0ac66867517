//! Named experiment presets.
//!
//! Every preset stores the published full-size values. [`Scale`] maps them to
//! a concrete particle count; batch sizes scale with `N` so that each epoch
//! keeps the same number of optimizer steps.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{RbmNorm, RunConfig};
use crate::ensemble::InitialCondition;
use crate::error::{LandauError, Result};
use crate::kernels::KernelSpec;
use crate::losses::{Scheme, TildeRange};
use crate::optim::TrainConfig;

pub const PRESET_NAMES: [&str; 7] = [
    "bkw2d_weak",
    "bkw2d_strong",
    "bkw3d_strong",
    "bimax2d_coulomb",
    "rosenbluth3d",
    "rosenbluth3d_strong",
    "aniso10d",
];

/// Particle-count scaling relative to the published runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scale {
    /// Laptop-sized default.
    Desk,
    /// The published particle count.
    Paper,
    /// `round(f · N_paper)`.
    Factor(f64),
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Desk => f.write_str("desk"),
            Scale::Paper => f.write_str("paper"),
            Scale::Factor(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for Scale {
    type Err = LandauError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => match other.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(Scale::Factor(x)),
                _ => Err(LandauError::OutOfRange {
                    key: "scale".into(),
                    reason: format!("expected desk, paper or a positive factor, got `{other}`"),
                }),
            },
        }
    }
}

/// Which reference solution a preset is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleBinding {
    /// Analytic BKW density, entropy and energy.
    Bkw,
    /// Closed-form second-moment tensor for Maxwellian molecules.
    Covariance,
    /// Conserved energy only.
    Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub lr: f64,
}

/// KDE line slices written at fixed times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub times: Vec<f64>,
    /// Point through which every axis-parallel slice passes.
    pub base: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub initial: InitialCondition,
    pub kernel: KernelSpec,
    pub tau: f64,
    pub n_steps: usize,
    pub paper_n: usize,
    pub desk_n: usize,
    pub paper_batch: usize,
    /// Random-batch size for the particle update; `None` is the full update.
    pub paper_rbm: Option<usize>,
    pub first: TrainSpec,
    pub later: TrainSpec,
    pub warm_start: bool,
    pub oracle: OracleBinding,
    pub kde_eps: f64,
    /// Oracle columns are filled every this many steps.
    pub oracle_every: usize,
    pub slices: Option<SliceSpec>,
}

fn ts(epochs: usize, lr: f64) -> TrainSpec {
    TrainSpec { epochs, lr }
}

impl Preset {
    pub fn named(name: &str) -> Result<Self> {
        let kernel = |d, g, c| KernelSpec::new(d, g, c).expect("preset kernels are valid");
        let bkw = |d, b, c| InitialCondition::bkw(d, b, c).expect("preset BKW data is valid");
        let p = match name {
            "bkw2d_weak" => Self {
                name: name.into(),
                initial: bkw(2, 0.5, 1.0 / 16.0),
                kernel: kernel(2, 0.0, 1.0 / 16.0),
                tau: 0.01,
                n_steps: 200,
                paper_n: 160 * 160,
                desk_n: 4096,
                paper_batch: 1280,
                paper_rbm: None,
                first: ts(50, 7e-4),
                later: ts(5, 2e-4),
                warm_start: true,
                oracle: OracleBinding::Bkw,
                kde_eps: 0.3,
                oracle_every: 10,
                slices: None,
            },
            // Training values are not published for this regime; the step is
            // large relative to the relaxation time, so every step starts fresh.
            "bkw2d_strong" => Self {
                name: name.into(),
                initial: bkw(2, 0.5, 5.0),
                kernel: kernel(2, 0.0, 5.0),
                tau: 0.1,
                n_steps: 10,
                paper_n: 160 * 160,
                desk_n: 4096,
                paper_batch: 1280,
                paper_rbm: None,
                first: ts(30, 1e-3),
                later: ts(30, 1e-3),
                warm_start: false,
                oracle: OracleBinding::Bkw,
                kde_eps: 0.3,
                oracle_every: 1,
                slices: None,
            },
            "bkw3d_strong" => Self {
                name: name.into(),
                initial: bkw(3, 1.0, 3.0),
                kernel: kernel(3, 0.0, 3.0),
                tau: 0.1,
                n_steps: 10,
                paper_n: 30 * 30 * 30,
                desk_n: 8192,
                paper_batch: 1350,
                paper_rbm: None,
                first: ts(30, 1e-3),
                later: ts(30, 1e-3),
                warm_start: false,
                oracle: OracleBinding::Bkw,
                kde_eps: 0.3,
                oracle_every: 1,
                slices: None,
            },
            "bimax2d_coulomb" => Self {
                name: name.into(),
                initial: InitialCondition::BiMaxwellian2d,
                kernel: kernel(2, -3.0, 1.0 / 16.0),
                tau: 0.1,
                n_steps: 400,
                paper_n: 120 * 120,
                desk_n: 4096,
                paper_batch: 900,
                paper_rbm: None,
                first: ts(30, 1e-3),
                later: ts(3, 1e-4),
                warm_start: true,
                oracle: OracleBinding::Moments,
                kde_eps: 0.3,
                oracle_every: 10,
                slices: Some(SliceSpec {
                    times: vec![0.0, 20.0, 40.0],
                    base: vec![0.0, -1.0],
                    lo: -10.0,
                    hi: 10.0,
                    points: 201,
                }),
            },
            "rosenbluth3d" => Self {
                name: name.into(),
                initial: InitialCondition::rosenbluth(),
                kernel: kernel(3, -3.0, 1.0 / (4.0 * PI)),
                tau: 0.2,
                n_steps: 100,
                paper_n: 50 * 50 * 50,
                desk_n: 8192,
                paper_batch: 640,
                paper_rbm: Some(1280),
                first: ts(20, 1e-3),
                later: ts(3, 2e-4),
                warm_start: true,
                oracle: OracleBinding::Moments,
                kde_eps: 0.04,
                oracle_every: 10,
                slices: Some(SliceSpec {
                    times: vec![0.0, 10.0, 20.0],
                    base: vec![0.0, 0.0, 0.0],
                    lo: -1.0,
                    hi: 1.0,
                    points: 201,
                }),
            },
            "rosenbluth3d_strong" => Self {
                name: name.into(),
                initial: InitialCondition::rosenbluth(),
                kernel: kernel(3, -3.0, 10.0),
                tau: 1.0,
                n_steps: 20,
                paper_n: 25600,
                desk_n: 8192,
                paper_batch: 640,
                paper_rbm: Some(1280),
                first: ts(20, 1e-3),
                later: ts(20, 1e-3),
                warm_start: false,
                oracle: OracleBinding::Moments,
                kde_eps: 0.04,
                oracle_every: 1,
                slices: None,
            },
            "aniso10d" => {
                let mut p = vec![1.0; 10];
                p[0] = 1.8;
                p[1] = 0.2;
                Self {
                    name: name.into(),
                    initial: InitialCondition::AnisotropicGaussian { p },
                    kernel: kernel(10, 0.0, 1.0),
                    tau: 0.002,
                    n_steps: 50,
                    paper_n: 25600,
                    desk_n: 8192,
                    paper_batch: 640,
                    paper_rbm: Some(1280),
                    first: ts(30, 1e-3),
                    later: ts(3, 4e-4),
                    warm_start: true,
                    oracle: OracleBinding::Covariance,
                    kde_eps: 0.3,
                    oracle_every: 1,
                    slices: None,
                }
            }
            other => return Err(LandauError::UnknownPreset(other.to_string())),
        };
        Ok(p)
    }

    pub fn n_at(&self, scale: Scale) -> usize {
        match scale {
            Scale::Desk => self.desk_n,
            Scale::Paper => self.paper_n,
            Scale::Factor(f) => ((self.paper_n as f64 * f).round() as usize).max(2),
        }
    }

    /// A published batch size rescaled to `n` particles, clamped to `[2, n]`.
    pub fn batch_for(&self, paper_batch: usize, n: usize) -> usize {
        let b = (paper_batch as f64 * n as f64 / self.paper_n as f64).round() as usize;
        b.clamp(2.min(n), n)
    }

    /// Simulated time covered by the default number of steps.
    pub fn horizon(&self) -> f64 {
        self.tau * self.n_steps as f64
    }

    pub fn run_config(&self, scale: Scale, seed: u64) -> RunConfig {
        let n = self.n_at(scale);
        let b = self.batch_for(self.paper_batch, n);
        RunConfig {
            preset: self.name.clone(),
            initial: self.initial.clone(),
            kernel: self.kernel,
            n,
            tau: self.tau,
            n_steps: self.n_steps,
            scheme: Scheme::Implicit,
            rbm_batch: self.paper_rbm.map(|r| self.batch_for(r, n)),
            rbm_norm: RbmNorm::Unbiased,
            first: TrainConfig::adamax(b, self.first.epochs, self.first.lr),
            later: TrainConfig::adamax(b, self.later.epochs, self.later.lr),
            warm_start: self.warm_start,
            tilde_range: TildeRange::Batch,
            seed,
            checkpoint_every: 0,
            deterministic: false,
        }
    }
}

pub fn catalog() -> Vec<Preset> {
    PRESET_NAMES
        .iter()
        .map(|n| Preset::named(n).expect("catalog names resolve"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper(name: &str) -> RunConfig {
        Preset::named(name).unwrap().run_config(Scale::Paper, 0)
    }

    // (name, N, τ, C_γ, γ, first (lr, epochs), later (lr, epochs), B, B')
    #[allow(clippy::type_complexity)]
    const GOLDEN: [(&str, usize, f64, f64, f64, (f64, usize), (f64, usize), usize, Option<usize>); 4] = [
        ("bkw2d_weak", 25600, 0.01, 1.0 / 16.0, 0.0, (7e-4, 50), (2e-4, 5), 1280, None),
        ("bimax2d_coulomb", 14400, 0.1, 1.0 / 16.0, -3.0, (1e-3, 30), (1e-4, 3), 900, None),
        ("rosenbluth3d", 125000, 0.2, 1.0 / (4.0 * PI), -3.0, (1e-3, 20), (2e-4, 3), 640, Some(1280)),
        ("aniso10d", 25600, 0.002, 1.0, 0.0, (1e-3, 30), (4e-4, 3), 640, Some(1280)),
    ];

    #[test]
    fn golden_published_values() {
        for (name, n, tau, c, g, first, later, b, rbm) in GOLDEN {
            let cfg = paper(name);
            assert_eq!(cfg.n, n, "{name}");
            assert_eq!(cfg.tau, tau, "{name}");
            assert_eq!(cfg.kernel.c_gamma, c, "{name}");
            assert_eq!(cfg.kernel.gamma, g, "{name}");
            assert_eq!((cfg.first.lr, cfg.first.epochs), first, "{name}");
            assert_eq!((cfg.later.lr, cfg.later.epochs), later, "{name}");
            assert_eq!(cfg.first.batch_size, b, "{name}");
            assert_eq!(cfg.later.batch_size, b, "{name}");
            assert_eq!(cfg.rbm_batch, rbm, "{name}");
            assert!(cfg.warm_start, "{name}");
        }
    }

    #[test]
    fn golden_strong_regimes() {
        let s2 = paper("bkw2d_strong");
        assert_eq!((s2.kernel.c_gamma, s2.tau), (5.0, 0.1));
        let s3 = paper("bkw3d_strong");
        assert_eq!((s3.kernel.dim, s3.kernel.c_gamma, s3.n), (3, 3.0, 27000));
        match s3.initial {
            InitialCondition::Bkw { spec, .. } => assert_eq!(spec.bkw_b, 1.0),
            _ => panic!("bkw3d_strong must start from BKW"),
        }
        let r = paper("rosenbluth3d_strong");
        assert_eq!((r.kernel.c_gamma, r.tau, r.n), (10.0, 1.0, 25600));
        for cfg in [s2, s3, r] {
            assert!(!cfg.warm_start);
        }
    }

    #[test]
    fn golden_initial_data() {
        match paper("aniso10d").initial {
            InitialCondition::AnisotropicGaussian { p } => {
                assert_eq!(p.len(), 10);
                assert_eq!((p[0], p[1]), (1.8, 0.2));
                assert!(p[2..].iter().all(|&x| x == 1.0));
            }
            _ => panic!("aniso10d must be Gaussian"),
        }
        assert_eq!(
            paper("rosenbluth3d").initial,
            InitialCondition::RosenbluthShell3d { sigma: 0.3, s: 10.0 }
        );
        match paper("bkw2d_weak").initial {
            InitialCondition::Bkw { spec, t0 } => {
                assert_eq!((spec.dim, spec.bkw_b, t0), (2, 0.5, 0.0));
            }
            _ => panic!("bkw2d_weak must start from BKW"),
        }
    }

    #[test]
    fn desk_scale_keeps_batches_per_epoch() {
        let p = Preset::named("bkw2d_weak").unwrap();
        let cfg = p.run_config(Scale::Desk, 0);
        assert_eq!(cfg.n, 4096);
        assert_eq!(cfg.first.batch_size, 205);
        let r = Preset::named("aniso10d").unwrap().run_config(Scale::Desk, 0);
        assert_eq!((r.n, r.first.batch_size, r.rbm_batch), (8192, 205, Some(410)));
        let half = p.run_config(Scale::Factor(0.5), 0);
        assert_eq!((half.n, half.first.batch_size), (12800, 640));
    }

    #[test]
    fn every_preset_validates() {
        for p in catalog() {
            for s in [Scale::Desk, Scale::Paper] {
                p.run_config(s, 1).validate().unwrap();
            }
            assert_eq!(p.initial.dim(), p.kernel.dim);
        }
    }

    #[test]
    fn unknown_preset_is_named() {
        match Preset::named("nope") {
            Err(LandauError::UnknownPreset(n)) => assert_eq!(n, "nope"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scale_parses() {
        assert_eq!("desk".parse::<Scale>().unwrap(), Scale::Desk);
        assert_eq!("paper".parse::<Scale>().unwrap(), Scale::Paper);
        assert_eq!("0.25".parse::<Scale>().unwrap(), Scale::Factor(0.25));
        assert!("-1".parse::<Scale>().is_err());
    }
}
