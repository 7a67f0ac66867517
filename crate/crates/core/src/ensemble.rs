//! Particle state, initial-condition samplers and moment diagnostics.
//!
//! Particles carry equal weights `1/N`. Alongside each velocity the ensemble
//! stores `log f(v_i)`, the log of the density transported along the particle
//! trajectory; storing the log keeps repeated multiplicative updates from
//! underflowing.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};
use crate::oracles::BkwSpec;
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    velocities: Vec<f64>,
    log_density: Vec<f64>,
    time: f64,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, velocities: Vec<f64>, log_density: Vec<f64>, time: f64) -> Result<Self> {
        if dim < 2 {
            return Err(LandauError::UnsupportedDimension(dim));
        }
        let n = log_density.len();
        if n == 0 {
            return Err(LandauError::EmptyEnsemble(0));
        }
        if velocities.len() != n * dim {
            return Err(LandauError::DimensionMismatch {
                expected: n * dim,
                got: velocities.len(),
            });
        }
        if let Some(i) = velocities.iter().position(|x| !x.is_finite()) {
            return Err(LandauError::non_finite(format!("velocity of particle {}", i / dim)));
        }
        // log f = -inf is a legitimate zero of the initial density
        if let Some(i) = log_density.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(LandauError::non_finite(format!("log-density of particle {i}")));
        }
        Ok(Self {
            dim,
            velocities,
            log_density,
            time,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.log_density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_density.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

/// Initial densities with closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// BKW solution evaluated at time `t0` (so that `K(t0)` is admissible).
    Bkw { spec: BkwSpec, t0: f64 },
    /// Equal mixture of unit Gaussians at `(-2, 1)` and `(0, -1)`.
    BiMaxwellian2d,
    /// Normalized shell `∝ exp(-S (|v| - σ)² / σ²)` in 3D.
    RosenbluthShell3d { sigma: f64, s: f64 },
    /// Centered Gaussian with covariance `diag(p)`.
    AnisotropicGaussian { p: Vec<f64> },
}

const BIMAX_CENTERS: [[f64; 2]; 2] = [[-2.0, 1.0], [0.0, -1.0]];

impl InitialCondition {
    pub fn bkw(dim: usize, bkw_b: f64, c_gamma: f64) -> Result<Self> {
        let spec = BkwSpec::new(dim, bkw_b, c_gamma)?;
        Ok(Self::Bkw {
            spec,
            t0: spec.earliest_time(),
        })
    }

    pub fn rosenbluth() -> Self {
        Self::RosenbluthShell3d { sigma: 0.3, s: 10.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Bkw { spec, .. } => spec.dim,
            Self::BiMaxwellian2d => 2,
            Self::RosenbluthShell3d { .. } => 3,
            Self::AnisotropicGaussian { p } => p.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Bkw { spec, t0 } => {
                spec.profile(*t0)?;
            }
            Self::RosenbluthShell3d { sigma, s } => {
                if !(*sigma > 0.0 && *s > 0.0) {
                    return Err(LandauError::InvalidConfig(
                        "Rosenbluth shell needs sigma > 0 and S > 0".into(),
                    ));
                }
            }
            Self::AnisotropicGaussian { p } => {
                if p.len() < 2 || p.iter().any(|x| !(*x > 0.0)) {
                    return Err(LandauError::InvalidConfig(
                        "anisotropic Gaussian needs >= 2 positive variances".into(),
                    ));
                }
            }
            Self::BiMaxwellian2d => {}
        }
        Ok(())
    }

    /// Exact second moment `∫ |v|² f`.
    pub fn energy(&self) -> f64 {
        match self {
            Self::Bkw { spec, .. } => spec.dim as f64,
            Self::BiMaxwellian2d => {
                let c: f64 = BIMAX_CENTERS.iter().flatten().map(|x| x * x).sum();
                0.5 * c + 2.0
            }
            Self::RosenbluthShell3d { sigma, s } => {
                // ∫ r⁴ q / ∫ r² q, by quadrature on the radial profile
                let (m2, m4) = radial_moments(|r| (-s * (r - sigma).powi(2) / (sigma * sigma)).exp(), 3);
                m4 / m2
            }
            Self::AnisotropicGaussian { p } => p.iter().sum(),
        }
    }

    /// Exact mean velocity.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::BiMaxwellian2d => vec![
                0.5 * (BIMAX_CENTERS[0][0] + BIMAX_CENTERS[1][0]),
                0.5 * (BIMAX_CENTERS[0][1] + BIMAX_CENTERS[1][1]),
            ],
            other => vec![0.0; other.dim()],
        }
    }

    pub fn log_density(&self, v: &[f64]) -> f64 {
        let r2: f64 = v.iter().map(|x| x * x).sum();
        match self {
            Self::Bkw { spec, t0 } => spec.log_density(*t0, v).unwrap_or(f64::NEG_INFINITY),
            Self::BiMaxwellian2d => {
                let g = |c: &[f64; 2]| {
                    let dx = v[0] - c[0];
                    let dy = v[1] - c[1];
                    -(dx * dx + dy * dy) / 2.0
                };
                let (a, b) = (g(&BIMAX_CENTERS[0]), g(&BIMAX_CENTERS[1]));
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln() - (4.0 * PI).ln()
            }
            Self::RosenbluthShell3d { sigma, s } => {
                let r = r2.sqrt();
                -s * (r - sigma).powi(2) / (sigma * sigma) - rosenbluth_norm(*sigma, *s).ln()
            }
            Self::AnisotropicGaussian { p } => p
                .iter()
                .zip(v)
                .map(|(pk, x)| -0.5 * x * x / pk - 0.5 * (2.0 * PI * pk).ln())
                .sum(),
        }
    }

    fn sample_one(&self, rng: &mut SimRng, out: &mut [f64]) {
        match self {
            Self::Bkw { spec, t0 } => sample_bkw(spec, *t0, rng, out),
            Self::BiMaxwellian2d => {
                let c = if rng.random::<f64>() < 0.5 {
                    &BIMAX_CENTERS[0]
                } else {
                    &BIMAX_CENTERS[1]
                };
                for k in 0..2 {
                    out[k] = c[k] + rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::RosenbluthShell3d { sigma, s } => sample_rosenbluth(*sigma, *s, rng, out),
            Self::AnisotropicGaussian { p } => {
                for (o, pk) in out.iter_mut().zip(p) {
                    *o = pk.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bkw { spec, t0 } => write!(f, "bkw:{}:{}:{}:{}", spec.dim, spec.bkw_b, spec.c_gamma, t0),
            Self::BiMaxwellian2d => write!(f, "bi_maxwellian_2d"),
            Self::RosenbluthShell3d { sigma, s } => write!(f, "rosenbluth_shell_3d:{sigma}:{s}"),
            Self::AnisotropicGaussian { p } => {
                let ps: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                write!(f, "anisotropic_gaussian:{}", ps.join(","))
            }
        }
    }
}

impl FromStr for InitialCondition {
    type Err = LandauError;

    /// Parses `bkw:<d>:<B>:<C>[:<t0>]`, `bi_maxwellian_2d`,
    /// `rosenbluth_shell_3d[:<sigma>:<S>]` or `anisotropic_gaussian:<p1>,<p2>,...`.
    fn from_str(id: &str) -> Result<Self> {
        let unknown = || LandauError::UnknownPreset(id.to_string());
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| unknown());
        let mut parts = id.split(':');
        let head = parts.next().ok_or_else(unknown)?;
        let rest: Vec<&str> = parts.collect();
        let ic = match (head, rest.len()) {
            ("bkw", 3) | ("bkw", 4) => {
                let dim = rest[0].trim().parse::<usize>().map_err(|_| unknown())?;
                let spec = BkwSpec::new(dim, num(rest[1])?, num(rest[2])?)?;
                let t0 = if rest.len() == 4 { num(rest[3])? } else { spec.earliest_time() };
                Self::Bkw { spec, t0 }
            }
            ("bi_maxwellian_2d", 0) => Self::BiMaxwellian2d,
            ("rosenbluth_shell_3d", 0) => Self::rosenbluth(),
            ("rosenbluth_shell_3d", 2) => Self::RosenbluthShell3d {
                sigma: num(rest[0])?,
                s: num(rest[1])?,
            },
            ("anisotropic_gaussian", 1) => Self::AnisotropicGaussian {
                p: rest[0].split(',').map(num).collect::<Result<_>>()?,
            },
            _ => return Err(unknown()),
        };
        ic.validate()?;
        Ok(ic)
    }
}

/// Normalizer `Z = 4π ∫ r² exp(-S (r-σ)²/σ²) dr` in closed form.
pub fn rosenbluth_norm(sigma: f64, s: f64) -> f64 {
    let a = s / (sigma * sigma);
    let e = (-s).exp();
    let i0 = 0.5 * (PI / a).sqrt() * (1.0 + statrs::function::erf::erf(sigma * a.sqrt()));
    4.0 * PI * (sigma * e / (2.0 * a) + i0 * (1.0 / (2.0 * a) + sigma * sigma))
}

/// Returns `(∫ r^{d-1} q, ∫ r^{d+1} q)` by composite Simpson on `[0, 12]`.
fn radial_moments(q: impl Fn(f64) -> f64, dim: usize) -> (f64, f64) {
    let n = 24_000;
    let h = 12.0 / n as f64;
    let (mut m0, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let r = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let base = r.powi(dim as i32 - 1) * q(r);
        m0 += w * base;
        m2 += w * base * r * r;
    }
    (m0 * h / 3.0, m2 * h / 3.0)
}

fn gaussian_vec(rng: &mut SimRng, scale: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = scale * rng.sample::<f64, _>(StandardNormal);
    }
}

/// BKW by rejection from an isotropic Gaussian whose radial mode matches the
/// analytic radial mode of the target.
fn sample_bkw(spec: &BkwSpec, t0: f64, rng: &mut SimRng, out: &mut [f64]) {
    let (k, a, b) = spec.profile(t0).expect("validated initial time");
    let d = spec.dim as f64;
    if b == 0.0 {
        gaussian_vec(rng, k.sqrt(), out);
        return;
    }
    // radial mode x = r² solves b x² + (a − (d+1) b K) x − (d−1) a K = 0
    let qb = a - (d + 1.0) * b * k;
    let x_mode = (-qb + (qb * qb + 4.0 * b * (d - 1.0) * a * k).sqrt()) / (2.0 * b);
    let s2 = x_mode / (d - 1.0);
    // f/g = (s²/K)^{d/2} (a + b x) e^{-c x}
    let c = 0.5 / k - 0.5 / s2;
    let x_star = (1.0 / c - a / b).max(0.0);
    let bound = (a + b * x_star) * (-c * x_star).exp();
    let s = s2.sqrt();
    loop {
        gaussian_vec(rng, s, out);
        let x: f64 = out.iter().map(|v| v * v).sum();
        let ratio = (a + b * x) * (-c * x).exp() / bound;
        if rng.random::<f64>() < ratio {
            return;
        }
    }
}

/// Shell by rejection from an isotropic Gaussian with matching radial mode.
fn sample_rosenbluth(sigma: f64, s: f64, rng: &mut SimRng, out: &mut [f64]) {
    let r_mode = 0.5 * sigma * (1.0 + (1.0 + 4.0 / s).sqrt());
    let s2 = r_mode * r_mode / 2.0;
    let log_ratio = |r: f64| -s * (r - sigma).powi(2) / (sigma * sigma) + r * r / (2.0 * s2);
    let r_star = (2.0 * s / sigma) / (2.0 * s / (sigma * sigma) - 1.0 / s2);
    let log_bound = log_ratio(r_star);
    let scale = s2.sqrt();
    loop {
        gaussian_vec(rng, scale, out);
        let r = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rng.random::<f64>().ln() < log_ratio(r) - log_bound {
            return;
        }
    }
}

/// Draws `n` i.i.d. particles and records the exact initial log-density.
pub fn sample_initial(ic: &InitialCondition, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(LandauError::EmptyEnsemble(n));
    }
    ic.validate()?;
    let d = ic.dim();
    let mut rng = stream_rng(seed, Stream::Sampling, 0);
    let mut velocities = vec![0.0; n * d];
    for chunk in velocities.chunks_exact_mut(d) {
        ic.sample_one(&mut rng, chunk);
    }
    let log_density = velocities.chunks_exact(d).map(|v| ic.log_density(v)).collect();
    ParticleEnsemble::new(d, velocities, log_density, 0.0)
}

/// Per-step macroscopic diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub entropy_estimate: f64,
    /// JKO objective consistent with the particle update just applied.
    pub loss_value: f64,
    /// Mean batch loss over the final training epoch.
    pub train_loss: f64,
    pub guard_hits: u64,
    pub wall_ms: f64,
}

/// Sums with pairwise splitting; reproducible for a fixed input order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn moments(ens: &ParticleEnsemble) -> DiagnosticsRecord {
    let n = ens.len() as f64;
    let d = ens.dim();
    let momentum = (0..d)
        .map(|k| {
            let col: Vec<f64> = ens.velocities.iter().skip(k).step_by(d).copied().collect();
            pairwise_sum(&col) / n
        })
        .collect();
    let sq: Vec<f64> = ens.velocities.chunks_exact(d).map(|v| v.iter().map(|x| x * x).sum()).collect();
    DiagnosticsRecord {
        step: 0,
        time: ens.time,
        mass: 1.0,
        momentum,
        energy: pairwise_sum(&sq) / n,
        entropy_estimate: pairwise_sum(&ens.log_density) / n,
        loss_value: 0.0,
        train_loss: 0.0,
        guard_hits: 0,
        wall_ms: 0.0,
    }
}

/// Second moment about the origin, `(1/N) Σ v_i ⊗ v_i`.
pub fn covariance(ens: &ParticleEnsemble) -> Vec<f64> {
    let d = ens.dim();
    let mut p = vec![0.0; d * d];
    for v in ens.velocities.chunks_exact(d) {
        for a in 0..d {
            for b in a..d {
                p[a * d + b] += v[a] * v[b];
            }
        }
    }
    let n = ens.len() as f64;
    for a in 0..d {
        for b in a..d {
            p[a * d + b] /= n;
            p[b * d + a] = p[a * d + b];
        }
    }
    p
}

const ENSEMBLE_MAGIC: &[u8; 8] = b"LJKOENS1";

#[derive(Serialize, Deserialize)]
struct EnsembleJson {
    n: usize,
    dim: usize,
    time: f64,
    preset: String,
    velocities: Vec<Vec<f64>>,
    log_density: Vec<f64>,
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| LandauError::io(path, e))?;
    f.write_all(bytes).map_err(|e| LandauError::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| LandauError::io(path, e))?;
    Ok(buf)
}

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(LandauError::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(LandauError::Checkpoint("trailing bytes".into()));
        }
        Ok(())
    }
}

/// Writes `<stem>.bin` (little-endian) and its `<stem>.json` debugging twin.
///
/// Binary layout: magic `LJKOENS1`, `u64 N`, `u64 d`, `f64 time`,
/// `u64 len` + UTF-8 preset id, then `N·d` velocities row-major and `N`
/// log-densities, all `f64`.
pub fn write_ensemble_checkpoint(ens: &ParticleEnsemble, preset: &str, stem: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(48 + preset.len() + 8 * (ens.velocities.len() + ens.len()));
    bytes.extend_from_slice(ENSEMBLE_MAGIC);
    bytes.extend_from_slice(&(ens.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(ens.dim as u64).to_le_bytes());
    bytes.extend_from_slice(&ens.time.to_le_bytes());
    bytes.extend_from_slice(&(preset.len() as u64).to_le_bytes());
    bytes.extend_from_slice(preset.as_bytes());
    for x in ens.velocities.iter().chain(&ens.log_density) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_bytes(&stem.with_extension("bin"), &bytes)?;

    let json = EnsembleJson {
        n: ens.len(),
        dim: ens.dim,
        time: ens.time,
        preset: preset.to_string(),
        velocities: ens.velocities.chunks_exact(ens.dim).map(|v| v.to_vec()).collect(),
        log_density: ens.log_density.clone(),
    };
    write_bytes(&stem.with_extension("json"), serde_json::to_string_pretty(&json)?.as_bytes())
}

/// Reads a binary ensemble checkpoint; returns the ensemble and preset id.
pub fn read_ensemble_checkpoint(path: &Path) -> Result<(ParticleEnsemble, String)> {
    let buf = read_bytes(path)?;
    let mut c = Cursor::new(&buf);
    if c.take(8)? != ENSEMBLE_MAGIC {
        return Err(LandauError::Checkpoint("not an ensemble checkpoint".into()));
    }
    let n = c.u64()? as usize;
    let d = c.u64()? as usize;
    let time = c.f64()?;
    let len = c.u64()? as usize;
    let preset = String::from_utf8(c.take(len)?.to_vec())
        .map_err(|_| LandauError::Checkpoint("preset id is not UTF-8".into()))?;
    let velocities = c.f64s(n * d)?;
    let log_density = c.f64s(n)?;
    c.finish()?;
    Ok((ParticleEnsemble::new(d, velocities, log_density, time)?, preset))
}

/// Reads the JSON twin of an ensemble checkpoint.
pub fn read_ensemble_json(path: &Path) -> Result<(ParticleEnsemble, String)> {
    let json: EnsembleJson = serde_json::from_slice(&read_bytes(path)?)?;
    let velocities: Vec<f64> = json.velocities.into_iter().flatten().collect();
    Ok((
        ParticleEnsemble::new(json.dim, velocities, json.log_density, json.time)?,
        json.preset,
    ))
}
