//! Mini-batch training with random reshuffling: plain SGD-RR and Adamax-RR,
//! plus an empirical harness for the SGD-RR convergence shape on synthetic
//! double-sum objectives.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{LandauError, Result};
use crate::kernels::KernelSpec;
use crate::losses::{loss_and_grad, LossBatch, Scheme, TildeRange};
use crate::net::VectorFieldNet;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    SgdRr,
    AdamaxRr,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::SgdRr => "sgd_rr",
            Optimizer::AdamaxRr => "adamax_rr",
        })
    }
}

impl FromStr for Optimizer {
    type Err = LandauError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd_rr" | "sgd" => Ok(Optimizer::SgdRr),
            "adamax_rr" | "adamax" => Ok(Optimizer::AdamaxRr),
            other => Err(LandauError::InvalidConfig(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn adamax(batch_size: usize, epochs: usize, lr: f64) -> Self {
        Self {
            batch_size,
            epochs,
            lr,
            optimizer: Optimizer::AdamaxRr,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
        }
    }

    pub fn sgd(batch_size: usize, epochs: usize, lr: f64) -> Self {
        Self {
            optimizer: Optimizer::SgdRr,
            ..Self::adamax(batch_size, epochs, lr)
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(LandauError::OutOfRange {
                key: key.into(),
                reason,
            })
        };
        if self.batch_size == 0 || self.batch_size > n {
            return bad("batch_size", format!("need 1 <= B <= N = {n}, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs", "need at least one epoch".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        for (k, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(k, format!("must lie in (0, 1), got {b}"));
            }
        }
        Ok(())
    }
}

/// A double-sum objective `ℓ(θ) = (1/N²) Σ_{i,j} ℓ_ij(θ)` whose batch
/// restriction `(1/b²) Σ_{i,j∈C} ℓ_ij` and its gradient can be evaluated.
pub trait Objective {
    fn num_samples(&self) -> usize;
    fn batch_loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)>;
}

/// The training problem of one JKO step.
pub struct JkoObjective<'a> {
    pub ens: &'a ParticleEnsemble,
    pub spec: &'a KernelSpec,
    pub scheme: Scheme,
    pub tau: f64,
    pub range: TildeRange,
}

impl Objective for JkoObjective<'_> {
    fn num_samples(&self) -> usize {
        self.ens.len()
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let net = VectorFieldNet::from_params(self.ens.dim(), params.to_vec())?;
        let batch = LossBatch::new(batch.to_vec(), self.scheme, self.tau, self.ens.len())?;
        let out = loss_and_grad(&net, self.ens, self.spec, &batch, self.range)?;
        Ok((out.value, out.grad))
    }
}

/// Uniformly random permutation of `[n]` cut into `⌈n/b⌉` contiguous
/// batches; only the last may be shorter.
pub fn reshuffle_partition(n: usize, b: usize, rng: &mut SimRng) -> Result<Vec<Vec<usize>>> {
    if b == 0 || b > n {
        return Err(LandauError::InvalidBatch(format!("need 1 <= b <= n, got b = {b}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    Ok(perm.chunks(b).map(|c| c.to_vec()).collect())
}

/// Per-epoch training record, one JSONL line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    /// Mean squared batch-gradient norm over the epoch.
    pub grad_norm_sq: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamaxState {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub t: u64,
}

impl AdamaxState {
    pub fn new(p: usize) -> Self {
        Self {
            m: vec![0.0; p],
            u: vec![0.0; p],
            t: 0,
        }
    }
}

const ADAMAX_EPS: f64 = 1e-8;

fn checked_grad(grad: &[f64], batch: usize) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(LandauError::non_finite(format!("gradient entry {i} in batch {batch}"))),
        None => Ok(()),
    }
}

fn epoch<O: Objective + ?Sized>(
    params: &mut [f64],
    obj: &O,
    cfg: &TrainConfig,
    rng: &mut SimRng,
    epoch_index: usize,
    mut step: impl FnMut(&mut [f64], &[f64], usize),
) -> Result<EpochStats> {
    let start = Instant::now();
    let n = obj.num_samples();
    let batches = reshuffle_partition(n, cfg.batch_size, rng)?;
    let mut losses = Vec::with_capacity(batches.len());
    let mut norms = Vec::with_capacity(batches.len());
    for (q, batch) in batches.iter().enumerate() {
        let (loss, grad) = obj.batch_loss_grad(params, batch)?;
        checked_grad(&grad, q)?;
        losses.push(loss);
        norms.push(grad.iter().map(|g| g * g).sum::<f64>());
        step(params, &grad, batch.len());
    }
    let k = batches.len() as f64;
    Ok(EpochStats {
        epoch: epoch_index,
        loss: losses.iter().sum::<f64>() / k,
        grad_norm_sq: norms.iter().sum::<f64>() / k,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// One SGD-RR pass; a batch of size `b` steps by `α b / N`.
pub fn sgd_rr_epoch<O: Objective + ?Sized>(
    params: &mut [f64],
    obj: &O,
    cfg: &TrainConfig,
    rng: &mut SimRng,
    epoch_index: usize,
) -> Result<EpochStats> {
    let n = obj.num_samples() as f64;
    epoch(params, obj, cfg, rng, epoch_index, |p, g, b| {
        let step = cfg.lr * b as f64 / n;
        for (x, gx) in p.iter_mut().zip(g) {
            *x -= step * gx;
        }
    })
}

/// One Adamax-RR pass with bias-corrected first moment.
pub fn adamax_rr_epoch<O: Objective + ?Sized>(
    params: &mut [f64],
    obj: &O,
    cfg: &TrainConfig,
    state: &mut AdamaxState,
    rng: &mut SimRng,
    epoch_index: usize,
) -> Result<EpochStats> {
    if state.m.len() != params.len() {
        *state = AdamaxState::new(params.len());
    }
    epoch(params, obj, cfg, rng, epoch_index, |p, g, _| {
        state.t += 1;
        let lr = cfg.lr / (1.0 - cfg.beta1.powi(state.t as i32));
        for i in 0..p.len() {
            state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
            state.u[i] = (cfg.beta2 * state.u[i]).max(g[i].abs());
            p[i] -= lr * state.m[i] / (state.u[i] + ADAMAX_EPS);
        }
    })
}

/// Runs `cfg.epochs` epochs, optionally logging each as a JSON line.
/// Optimizer state starts fresh. With `zero_wall`, logged wall times are 0.
pub fn train<O: Objective + ?Sized>(
    params: &mut [f64],
    obj: &O,
    cfg: &TrainConfig,
    rng: &mut SimRng,
    mut log: Option<&mut dyn Write>,
    zero_wall: bool,
) -> Result<Vec<EpochStats>> {
    cfg.validate(obj.num_samples())?;
    let mut state = AdamaxState::new(params.len());
    let mut out = Vec::with_capacity(cfg.epochs);
    for k in 0..cfg.epochs {
        let mut stats = match cfg.optimizer {
            Optimizer::SgdRr => sgd_rr_epoch(params, obj, cfg, rng, k)?,
            Optimizer::AdamaxRr => adamax_rr_epoch(params, obj, cfg, &mut state, rng, k)?,
        };
        if zero_wall {
            stats.wall_ms = 0.0;
        }
        if let Some(w) = log.as_deref_mut() {
            let line = serde_json::to_string(&stats)?;
            writeln!(w, "{line}").map_err(|e| LandauError::io("training log", e))?;
        }
        out.push(stats);
    }
    Ok(out)
}

/// Synthetic double sum with `ℓ_ij = ½ (g_i + g_j)`,
/// `g_i(θ) = ½ a_i |θ − c_i|²`. Its full gradient is known in closed form,
/// `L = max a_i`, and batch noise is set by the spread of `(a_i, c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFamily {
    pub dim: usize,
    pub a: Vec<f64>,
    /// Row-major `N × dim` centres.
    pub c: Vec<f64>,
}

/// An objective whose full gradient and minimizer are known exactly.
pub trait ExactGradient: Objective {
    fn full_gradient(&self, theta: &[f64]) -> Vec<f64>;
    fn minimizer(&self) -> Vec<f64>;
}

impl ExactGradient for QuadraticFamily {
    fn full_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.a.len() as f64;
        let mut g = vec![0.0; self.dim];
        for (ai, ci) in self.a.iter().zip(self.c.chunks_exact(self.dim)) {
            for k in 0..self.dim {
                g[k] += ai * (theta[k] - ci[k]) / n;
            }
        }
        g
    }

    fn minimizer(&self) -> Vec<f64> {
        let sa: f64 = self.a.iter().sum();
        let mut t = vec![0.0; self.dim];
        for (ai, ci) in self.a.iter().zip(self.c.chunks_exact(self.dim)) {
            for k in 0..self.dim {
                t[k] += ai * ci[k] / sa;
            }
        }
        t
    }
}

impl Objective for QuadraticFamily {
    fn num_samples(&self) -> usize {
        self.a.len()
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        // (1/b²) Σ_{i,j∈C} ½(g_i + g_j) = (1/b) Σ_{i∈C} g_i
        let b = batch.len() as f64;
        let mut loss = 0.0;
        let mut g = vec![0.0; self.dim];
        for &i in batch {
            let ci = &self.c[i * self.dim..(i + 1) * self.dim];
            for k in 0..self.dim {
                let r = params[k] - ci[k];
                loss += 0.5 * self.a[i] * r * r / b;
                g[k] += self.a[i] * r / b;
            }
        }
        Ok((loss, g))
    }
}

/// Symmetric double sum `ℓ_ij = ½ a_ij |θ − c_ij|²` with `ℓ_ii = 0`, the
/// same pair structure as the JKO loss. A batch sees only its own pairs, so
/// each epoch targets a partition-dependent point.
#[derive(Debug, Clone, PartialEq)]
pub struct PairQuadratic {
    pub n: usize,
    pub dim: usize,
    /// Row-major `N × N`, symmetric, zero diagonal.
    pub a: Vec<f64>,
    /// Row-major `N × N × dim`, symmetric in `(i, j)`.
    pub c: Vec<f64>,
}

impl PairQuadratic {
    /// `a_ij ~ U[0.5, 1.5]`, `c_ij ~ U[-1, 1]^dim`, symmetrized.
    pub fn random(n: usize, dim: usize, rng: &mut SimRng) -> Self {
        let mut a = vec![0.0; n * n];
        let mut c = vec![0.0; n * n * dim];
        for i in 0..n {
            for j in (i + 1)..n {
                let aij = 0.5 + rng.random::<f64>();
                a[i * n + j] = aij;
                a[j * n + i] = aij;
                for k in 0..dim {
                    let cij = 2.0 * rng.random::<f64>() - 1.0;
                    c[(i * n + j) * dim + k] = cij;
                    c[(j * n + i) * dim + k] = cij;
                }
            }
        }
        Self { n, dim, a, c }
    }

    /// Smoothness constant `L = max a_ij`.
    pub fn smoothness(&self) -> f64 {
        self.a.iter().fold(0.0, |m, &x| m.max(x))
    }

    /// `σ² = (1/N²) Σ_ij |∇ℓ_ij(θ*) − ∇ℓ(θ*)|²`, with `∇ℓ(θ*) = 0`.
    pub fn sigma_sq(&self) -> f64 {
        let t = self.minimizer();
        let mut s = 0.0;
        for p in 0..self.n * self.n {
            for k in 0..self.dim {
                let g = self.a[p] * (t[k] - self.c[p * self.dim + k]);
                s += g * g;
            }
        }
        s / (self.n * self.n) as f64
    }
}

impl Objective for PairQuadratic {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let b2 = (batch.len() * batch.len()) as f64;
        let mut loss = 0.0;
        let mut g = vec![0.0; self.dim];
        for &i in batch {
            for &j in batch {
                let p = i * self.n + j;
                let cp = &self.c[p * self.dim..(p + 1) * self.dim];
                for k in 0..self.dim {
                    let r = params[k] - cp[k];
                    loss += 0.5 * self.a[p] * r * r / b2;
                    g[k] += self.a[p] * r / b2;
                }
            }
        }
        Ok((loss, g))
    }
}

impl ExactGradient for PairQuadratic {
    fn full_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n2 = (self.n * self.n) as f64;
        let mut g = vec![0.0; self.dim];
        for p in 0..self.n * self.n {
            for k in 0..self.dim {
                g[k] += self.a[p] * (theta[k] - self.c[p * self.dim + k]) / n2;
            }
        }
        g
    }

    fn minimizer(&self) -> Vec<f64> {
        let sa: f64 = self.a.iter().sum();
        (0..self.dim)
            .map(|k| {
                (0..self.n * self.n)
                    .map(|p| self.a[p] * self.c[p * self.dim + k])
                    .sum::<f64>()
                    / sa
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessRow {
    pub alpha: f64,
    pub epochs: usize,
    /// `(1/K) Σ_{k<K} |∇ℓ(θ_k)|²` at epoch starts.
    pub avg_grad_sq: f64,
    /// Mean of `|∇ℓ(θ_k)|²` over the second half of the run.
    pub tail_grad_sq: f64,
}

/// Runs SGD-RR from `theta0` for every `(α, K)` pair and measures the exact
/// full-gradient norm at the start of each epoch, averaged over `reps`
/// independent seeds.
pub fn convergence_harness<O: ExactGradient>(
    obj: &O,
    theta0: &[f64],
    alphas: &[f64],
    epochs: &[usize],
    batch_size: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<HarnessRow>> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        for &k in epochs {
            let cfg = TrainConfig::sgd(batch_size, k, alpha);
            cfg.validate(obj.num_samples())?;
            let (mut avg, mut tail) = (0.0, 0.0);
            for r in 0..reps {
                let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Harness, r as u64);
                let mut theta = theta0.to_vec();
                let mut norms = Vec::with_capacity(k);
                for e in 0..k {
                    let g = obj.full_gradient(&theta);
                    norms.push(g.iter().map(|x| x * x).sum::<f64>());
                    sgd_rr_epoch(&mut theta, obj, &cfg, &mut rng, e)?;
                }
                avg += norms.iter().sum::<f64>() / k as f64;
                let half = &norms[k / 2..];
                tail += half.iter().sum::<f64>() / half.len() as f64;
            }
            rows.push(HarnessRow {
                alpha,
                epochs: k,
                avg_grad_sq: avg / reps as f64,
                tail_grad_sq: tail / reps as f64,
            });
        }
    }
    Ok(rows)
}

/// Mean `|∇ℓ(θ_k)|²` at epoch starts over `epochs` epochs after `burn_in`,
/// starting from the minimizer and averaged over `reps` seeds. This is the
/// noise floor that SGD-RR settles on at step parameter `α`.
pub fn stationary_floor<O: ExactGradient>(
    obj: &O,
    alpha: f64,
    batch_size: usize,
    burn_in: usize,
    epochs: usize,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = TrainConfig::sgd(batch_size, burn_in + epochs, alpha);
    cfg.validate(obj.num_samples())?;
    let start = obj.minimizer();
    let mut total = 0.0;
    for r in 0..reps {
        let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Harness, r as u64);
        let mut theta = start.clone();
        for e in 0..burn_in + epochs {
            if e >= burn_in {
                total += obj.full_gradient(&theta).iter().map(|x| x * x).sum::<f64>();
            }
            sgd_rr_epoch(&mut theta, obj, &cfg, &mut rng, e)?;
        }
    }
    Ok(total / (reps * epochs) as f64)
}
