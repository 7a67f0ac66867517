//! Particle and log-density updates and the outer JKO loop.
//!
//! One step with a trained field `u`:
//!
//! ```text
//! v_i ← v_i − c Σ_j A(v_i − v_j)(u(v_i) − u(v_j))
//! log f_i ← log f_i + c Σ_j h_ij(u; x)
//! ```
//!
//! with `c = τ/N` for the full update and `x = v^{n+1}` for the implicit
//! scheme, `x = v^n` otherwise. Pair forces are antisymmetric, so momentum is
//! conserved up to roundoff for any batching.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    moments, pairwise_sum, sample_initial, write_ensemble_checkpoint, DiagnosticsRecord, InitialCondition,
    ParticleEnsemble,
};
use crate::error::{LandauError, Result};
use crate::kernels::{add_apply, dot, KernelSpec};
use crate::losses::{Scheme, TildeRange};
use crate::net::{InitMode, VectorField, VectorFieldNet};
use crate::optim::{reshuffle_partition, train, EpochStats, JkoObjective, TrainConfig};
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};

/// Per-batch coefficient of the random-batch update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbmNorm {
    /// `τ (N−1) / (N (b−1))`: the expected increment equals the full one.
    #[default]
    Unbiased,
    /// `τ / b`.
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutput {
    pub ensemble: ParticleEnsemble,
    /// `(τ/N) Σ_i c_i Σ_j d²_ij + 2 h_ij` at the positions used for `h`;
    /// the entropy estimate changes by at most half of this over `τ`.
    pub loss_value: f64,
    pub guard_hits: u64,
}

fn update_core<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    tau: f64,
    scheme: Scheme,
    batches: &[Vec<usize>],
    coef: impl Fn(usize) -> f64 + Sync,
) -> Result<UpdateOutput> {
    let d = ens.dim();
    let n = ens.len();
    if spec.dim != d || field.dim() != d {
        return Err(LandauError::DimensionMismatch {
            expected: d,
            got: if spec.dim != d { spec.dim } else { field.dim() },
        });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LandauError::OutOfRange {
            key: "tau".into(),
            reason: format!("must be positive, got {tau}"),
        });
    }
    let v = ens.velocities();
    let u: Vec<f64> = v.par_chunks(d).flat_map_iter(|x| field.eval(x)).collect();
    if let Some(i) = u.iter().position(|x| !x.is_finite()) {
        return Err(LandauError::non_finite(format!("field value at particle {}", i / d)));
    }

    // owner batch of every particle
    let mut owner = vec![0usize; n];
    for (b, batch) in batches.iter().enumerate() {
        for &i in batch {
            owner[i] = b;
        }
    }

    let mut new_v = v.to_vec();
    new_v.par_chunks_mut(d).enumerate().for_each(|(i, out)| {
        let batch = &batches[owner[i]];
        let c = coef(batch.len());
        if c == 0.0 {
            return;
        }
        let vi = &v[i * d..(i + 1) * d];
        let ui = &u[i * d..(i + 1) * d];
        let mut z = vec![0.0; d];
        let mut du = vec![0.0; d];
        for &j in batch {
            for k in 0..d {
                z[k] = vi[k] - v[j * d + k];
                du[k] = ui[k] - u[j * d + k];
            }
            add_apply(&z, &du, -c, spec, out);
        }
    });
    if let Some(i) = new_v.iter().position(|x| !x.is_finite()).map(|k| k / d) {
        return Err(LandauError::non_finite(format!(
            "updated velocity of particle {i} (batch of {})",
            batches[owner[i]].len()
        )));
    }

    let x: &[f64] = if scheme == Scheme::Implicit { &new_v } else { v };
    let (w, jac): (Vec<f64>, Vec<f64>) = {
        let parts: Vec<(Vec<f64>, Vec<f64>)> = x.par_chunks(d).map(|p| field.eval_jac(p)).collect();
        let mut w = Vec::with_capacity(n * d);
        let mut j = Vec::with_capacity(n * d * d);
        for (a, b) in parts {
            w.extend(a);
            j.extend(b);
        }
        (w, j)
    };

    // per particle: (c Σ h_ij, c Σ d²_ij + 2 h_ij, guard hits)
    let df = d as f64;
    let rows: Vec<(f64, f64, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let batch = &batches[owner[i]];
            let c = coef(batch.len());
            if c == 0.0 {
                return (0.0, 0.0, 0);
            }
            let xi = &x[i * d..(i + 1) * d];
            let wi = &w[i * d..(i + 1) * d];
            let ji = &jac[i * d * d..(i + 1) * d * d];
            let tr: f64 = (0..d).map(|a| ji[a * d + a]).sum();
            let mut z = vec![0.0; d];
            let mut dl = vec![0.0; d];
            let mut hs = Vec::with_capacity(batch.len());
            let mut ls = Vec::with_capacity(batch.len());
            let mut guard = 0;
            for &j in batch {
                if j == i {
                    continue;
                }
                for k in 0..d {
                    z[k] = xi[k] - x[j * d + k];
                    dl[k] = wi[k] - w[j * d + k];
                }
                let Some((cr2, cg)) = spec.radial(dot(&z, &z)) else {
                    guard += 1;
                    continue;
                };
                let zd = dot(&z, &dl);
                let mut zjz = 0.0;
                for a in 0..d {
                    zjz += z[a] * dot(&ji[a * d..(a + 1) * d], &z);
                }
                let h = cr2 * tr - cg * zjz - (df - 1.0) * cg * zd;
                let d2 = 0.5 * (cr2 * dot(&dl, &dl) - cg * zd * zd);
                hs.push(h);
                ls.push(d2 + 2.0 * h);
            }
            (c * pairwise_sum(&hs), c * pairwise_sum(&ls), guard)
        })
        .collect();

    let mut log_density = ens.log_density().to_vec();
    for (i, (lf, row)) in log_density.iter_mut().zip(&rows).enumerate() {
        *lf += row.0;
        if lf.is_nan() || *lf == f64::INFINITY {
            return Err(LandauError::non_finite(format!("log-density of particle {i}")));
        }
    }
    let per: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let loss_value = tau / n as f64 * pairwise_sum(&per);
    let guard_hits = rows.iter().map(|r| r.2).sum();
    Ok(UpdateOutput {
        ensemble: ParticleEnsemble::new(d, new_v, log_density, ens.time() + tau)?,
        loss_value,
        guard_hits,
    })
}

/// Full `O(N²)` update.
pub fn full_update<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    tau: f64,
    scheme: Scheme,
) -> Result<UpdateOutput> {
    let n = ens.len();
    let all = vec![(0..n).collect::<Vec<_>>()];
    let c = tau / n as f64;
    update_core(field, ens, spec, tau, scheme, &all, |_| c)
}

/// Random-batch update: pairs interact only within a random partition into
/// batches of `b_prime`. `b_prime = N` delegates to [`full_update`].
#[allow(clippy::too_many_arguments)]
pub fn rbm_update<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    tau: f64,
    b_prime: usize,
    scheme: Scheme,
    norm: RbmNorm,
    rng: &mut SimRng,
) -> Result<UpdateOutput> {
    let n = ens.len();
    if b_prime == 0 || b_prime > n {
        return Err(LandauError::InvalidBatch(format!("need 1 <= B' <= N = {n}, got {b_prime}")));
    }
    if b_prime == n {
        return full_update(field, ens, spec, tau, scheme);
    }
    let batches = reshuffle_partition(n, b_prime, rng)?;
    let nf = n as f64;
    let coef = move |b: usize| match norm {
        RbmNorm::Unbiased if b > 1 => tau * (nf - 1.0) / (nf * (b as f64 - 1.0)),
        RbmNorm::Unbiased => 0.0,
        RbmNorm::Batch => tau / b as f64,
    };
    update_core(field, ens, spec, tau, scheme, &batches, coef)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub initial: InitialCondition,
    pub kernel: KernelSpec,
    pub n: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    /// `None` for the full update.
    pub rbm_batch: Option<usize>,
    pub rbm_norm: RbmNorm,
    pub first: TrainConfig,
    pub later: TrainConfig,
    pub warm_start: bool,
    pub tilde_range: TildeRange,
    pub seed: u64,
    /// Checkpoint every this many steps; 0 writes only the final state.
    pub checkpoint_every: usize,
    /// Zero wall-clock columns so that outputs are byte-reproducible.
    pub deterministic: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(LandauError::OutOfRange {
                key: key.into(),
                reason,
            })
        };
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", format!("must be positive, got {}", self.tau));
        }
        if self.n == 0 {
            return bad("n", "must be positive".into());
        }
        if let Some(b) = self.rbm_batch {
            if b == 0 || b > self.n {
                return bad("rbm_batch", format!("need 1 <= B' <= N = {}, got {b}", self.n));
            }
        }
        if self.kernel.dim != self.initial.dim() {
            return Err(LandauError::DimensionMismatch {
                expected: self.initial.dim(),
                got: self.kernel.dim,
            });
        }
        self.first.validate(self.n)?;
        self.later.validate(self.n)?;
        Ok(())
    }

    fn train_config(&self, step: usize) -> TrainConfig {
        let base = if step == 0 || !self.warm_start {
            &self.first
        } else {
            &self.later
        };
        TrainConfig {
            seed: derive_seed(self.seed, Stream::Training, step as u64),
            ..base.clone()
        }
    }
}

/// Result of one JKO step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub net: VectorFieldNet,
    pub ensemble: ParticleEnsemble,
    pub record: DiagnosticsRecord,
    pub epochs: Vec<EpochStats>,
}

/// Trains a field for step `step` and applies it. `prev` supplies the
/// warm-start parameters. The input ensemble is never modified.
pub fn jko_step(
    ens: &ParticleEnsemble,
    cfg: &RunConfig,
    step: usize,
    prev: Option<&[f64]>,
) -> Result<StepOutput> {
    let start = Instant::now();
    let d = ens.dim();
    let mode = match prev {
        Some(p) if step > 0 && cfg.warm_start => InitMode::WarmStart(p.to_vec()),
        _ => InitMode::TruncatedNormal,
    };
    let mut net = VectorFieldNet::init(d, mode, derive_seed(cfg.seed, Stream::NetInit, step as u64))?;
    let tcfg = cfg.train_config(step);
    let obj = JkoObjective {
        ens,
        spec: &cfg.kernel,
        scheme: cfg.scheme,
        tau: cfg.tau,
        range: cfg.tilde_range,
    };
    let mut rng = stream_rng(cfg.seed, Stream::Training, step as u64);
    let epochs = train(net.params_mut(), &obj, &tcfg, &mut rng, None, cfg.deterministic)?;
    let net = VectorFieldNet::from_params(d, net.into_params())?;

    let out = match cfg.rbm_batch {
        None => full_update(&net, ens, &cfg.kernel, cfg.tau, cfg.scheme)?,
        Some(b) => {
            let mut rng = stream_rng(cfg.seed, Stream::Update, step as u64);
            rbm_update(&net, ens, &cfg.kernel, cfg.tau, b, cfg.scheme, cfg.rbm_norm, &mut rng)?
        }
    };
    let mut record = moments(&out.ensemble);
    record.step = step + 1;
    record.loss_value = out.loss_value;
    record.train_loss = epochs.last().map_or(f64::NAN, |e| e.loss);
    record.guard_hits = out.guard_hits;
    record.wall_ms = if cfg.deterministic {
        0.0
    } else {
        start.elapsed().as_secs_f64() * 1e3
    };
    Ok(StepOutput {
        net,
        ensemble: out.ensemble,
        record,
        epochs,
    })
}

/// Where [`run`] writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Appended to every CSV/JSONL row.
    pub manifest_hash: String,
}

/// Summary of a finished (or failed) run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub final_ensemble: ParticleEnsemble,
    pub final_params: Option<Vec<f64>>,
    /// Set when a step failed; the trajectory ends at the last good state.
    pub failure: Option<String>,
}

/// Borrowed view handed to the per-step observer.
pub struct StepView<'a> {
    pub step: usize,
    pub ensemble: &'a ParticleEnsemble,
    pub record: &'a DiagnosticsRecord,
    pub net: Option<&'a VectorFieldNet>,
}

pub fn diagnostics_header(dim: usize) -> String {
    let mut cols = vec!["step".to_string(), "time".into(), "mass".into(), "energy".into()];
    cols.extend((0..dim).map(|k| format!("momentum_{k}")));
    cols.extend(
        ["entropy_estimate", "loss", "train_loss", "guard_hits", "wall_ms", "manifest"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

pub fn diagnostics_row(r: &DiagnosticsRecord, manifest: &str) -> String {
    let mut cols = vec![r.step.to_string(), r.time.to_string(), r.mass.to_string(), r.energy.to_string()];
    cols.extend(r.momentum.iter().map(|m| m.to_string()));
    cols.extend([
        r.entropy_estimate.to_string(),
        r.loss_value.to_string(),
        r.train_loss.to_string(),
        r.guard_hits.to_string(),
        r.wall_ms.to_string(),
        manifest.to_string(),
    ]);
    cols.join(",")
}

#[derive(Serialize)]
struct EpochLine<'a> {
    step: usize,
    #[serde(flatten)]
    stats: &'a EpochStats,
    manifest: &'a str,
}

struct Sinks {
    dir: PathBuf,
    manifest: String,
    diag: fs::File,
    train: fs::File,
}

impl Sinks {
    fn open(out: &RunOutput, dim: usize) -> Result<Self> {
        fs::create_dir_all(out.dir.join("checkpoints")).map_err(|e| LandauError::io(&out.dir, e))?;
        let create = |name: &str| {
            let p = out.dir.join(name);
            fs::File::create(&p).map_err(|e| LandauError::io(p, e))
        };
        let mut diag = create("diagnostics.csv")?;
        writeln!(diag, "{}", diagnostics_header(dim)).map_err(|e| LandauError::io(&out.dir, e))?;
        Ok(Self {
            dir: out.dir.clone(),
            manifest: out.manifest_hash.clone(),
            diag,
            train: create("train_log.jsonl")?,
        })
    }

    fn row(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.diag, "{}", diagnostics_row(r, &self.manifest)).map_err(|e| LandauError::io(&self.dir, e))
    }

    fn epochs(&mut self, step: usize, epochs: &[EpochStats]) -> Result<()> {
        for stats in epochs {
            let line = serde_json::to_string(&EpochLine {
                step,
                stats,
                manifest: &self.manifest,
            })?;
            writeln!(self.train, "{line}").map_err(|e| LandauError::io(&self.dir, e))?;
        }
        Ok(())
    }

    fn checkpoint(&self, tag: &str, ens: &ParticleEnsemble, preset: &str, net: Option<&VectorFieldNet>) -> Result<()> {
        let dir = self.dir.join("checkpoints");
        write_ensemble_checkpoint(ens, preset, &dir.join(format!("ensemble_{tag}")))?;
        if let Some(net) = net {
            net.write_checkpoint(&dir.join(format!("net_{tag}")))?;
        }
        Ok(())
    }
}

/// Samples the initial ensemble and runs `n_steps` JKO steps.
pub fn run(
    cfg: &RunConfig,
    out: Option<&RunOutput>,
    on_step: &mut dyn FnMut(&StepView) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let ens = sample_initial(&cfg.initial, cfg.n, derive_seed(cfg.seed, Stream::Sampling, 0))?;
    run_from(cfg, ens, out, on_step)
}

/// Runs `n_steps` JKO steps from a given ensemble. A failing step stops the
/// run: the error is recorded in the trajectory, the last good state is
/// checkpointed, and no error is returned.
pub fn run_from(
    cfg: &RunConfig,
    initial: ParticleEnsemble,
    out: Option<&RunOutput>,
    on_step: &mut dyn FnMut(&StepView) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let id = cfg.initial.to_string();
    let mut sinks = out.map(|o| Sinks::open(o, initial.dim())).transpose()?;
    let mut ens = initial;
    let mut record = moments(&ens);
    let mut records = vec![record.clone()];
    if let Some(s) = sinks.as_mut() {
        s.row(&record)?;
    }
    on_step(&StepView {
        step: 0,
        ensemble: &ens,
        record: &record,
        net: None,
    })?;
    let mut params: Option<Vec<f64>> = None;
    let mut last_net: Option<VectorFieldNet> = None;
    let mut failure = None;
    for step in 0..cfg.n_steps {
        match jko_step(&ens, cfg, step, params.as_deref()) {
            Ok(so) => {
                record = so.record;
                records.push(record.clone());
                if let Some(s) = sinks.as_mut() {
                    s.row(&record)?;
                    s.epochs(step, &so.epochs)?;
                    if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
                        s.checkpoint(&format!("{:05}", step + 1), &so.ensemble, &id, Some(&so.net))?;
                    }
                }
                ens = so.ensemble;
                on_step(&StepView {
                    step: step + 1,
                    ensemble: &ens,
                    record: &record,
                    net: Some(&so.net),
                })?;
                params = Some(so.net.params().to_vec());
                last_net = Some(so.net);
            }
            Err(e) => {
                failure = Some(format!("step {}: {e}", step + 1));
                break;
            }
        }
    }
    if let Some(s) = sinks.as_ref() {
        s.checkpoint("final", &ens, &id, last_net.as_ref())?;
    }
    Ok(Trajectory {
        records,
        final_ensemble: ens,
        final_params: params,
        failure,
    })
}

/// Convenience: path of the final ensemble checkpoint inside a run dir.
pub fn final_checkpoint(dir: &Path) -> PathBuf {
    dir.join("checkpoints").join("ensemble_final.bin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::AffineField;
    use crate::rng::seeded;
    use rand::RngExt;

    struct TwoPoint;

    impl VectorField for TwoPoint {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, v: &[f64]) -> Vec<f64> {
            vec![0.0, v[0]]
        }
        fn eval_jac(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
            (self.eval(v), vec![0.0, 0.0, 1.0, 0.0])
        }
    }

    fn random_ens(n: usize, d: usize, seed: u64) -> ParticleEnsemble {
        let mut rng = seeded(seed);
        let v: Vec<f64> = (0..n * d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        ParticleEnsemble::new(d, v, vec![-1.0; n], 0.0).unwrap()
    }

    #[test]
    fn two_particle_update() {
        let ens = ParticleEnsemble::new(2, vec![0.0, 0.0, 1.0, 0.0], vec![0.0; 2], 0.0).unwrap();
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let tau = 0.1;
        let out = full_update(&TwoPoint, &ens, &spec, tau, Scheme::Implicit).unwrap();
        let expect = [0.0, tau / 2.0, 1.0, -tau / 2.0];
        for (a, b) in out.ensemble.velocities().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(out.ensemble.time(), tau);
    }

    #[test]
    fn constant_field_changes_nothing() {
        let ens = random_ens(20, 3, 1);
        let spec = KernelSpec::new(3, -3.0, 0.1).unwrap();
        let c = AffineField::constant(vec![0.4, -1.0, 2.0]);
        let out = full_update(&c, &ens, &spec, 0.1, Scheme::Implicit).unwrap();
        assert_eq!(out.ensemble.velocities(), ens.velocities());
        assert_eq!(out.ensemble.log_density(), ens.log_density());
    }

    #[test]
    fn momentum_is_conserved() {
        let ens = random_ens(64, 2, 2);
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let net = VectorFieldNet::init(2, InitMode::TruncatedNormal, 3).unwrap();
        let before = moments(&ens).momentum;
        for scheme in Scheme::ALL {
            let a = full_update(&net, &ens, &spec, 0.1, scheme).unwrap();
            let b = rbm_update(&net, &ens, &spec, 0.1, 7, scheme, RbmNorm::Unbiased, &mut seeded(4)).unwrap();
            for e in [a.ensemble, b.ensemble] {
                for (x, y) in moments(&e).momentum.iter().zip(&before) {
                    assert!((x - y).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn rbm_with_full_batch_is_full_update() {
        let ens = random_ens(16, 2, 5);
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let net = VectorFieldNet::init(2, InitMode::TruncatedNormal, 6).unwrap();
        let a = full_update(&net, &ens, &spec, 0.05, Scheme::Implicit).unwrap();
        let b = rbm_update(&net, &ens, &spec, 0.05, 16, Scheme::Implicit, RbmNorm::Unbiased, &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        assert!(rbm_update(&net, &ens, &spec, 0.05, 17, Scheme::Implicit, RbmNorm::Unbiased, &mut seeded(1)).is_err());
    }

    /// Entropy change is bounded by half the update-consistent loss over τ.
    #[test]
    fn entropy_change_bounded_by_loss() {
        let ens = random_ens(40, 2, 8);
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let tau = 0.05;
        for seed in 0..4 {
            let net = VectorFieldNet::init(2, InitMode::TruncatedNormal, seed).unwrap();
            let out = full_update(&net, &ens, &spec, tau, Scheme::Implicit).unwrap();
            let dh = moments(&out.ensemble).entropy_estimate - moments(&ens).entropy_estimate;
            assert!(dh <= out.loss_value / (2.0 * tau) + 1e-14);
        }
    }

    fn tiny_config() -> RunConfig {
        let ic = InitialCondition::bkw(2, 0.5, 1.0 / 16.0).unwrap();
        RunConfig {
            preset: "test".into(),
            initial: ic,
            kernel: KernelSpec::new(2, 0.0, 1.0 / 16.0).unwrap(),
            n: 32,
            tau: 0.01,
            n_steps: 2,
            scheme: Scheme::Implicit,
            rbm_batch: None,
            rbm_norm: RbmNorm::Unbiased,
            first: TrainConfig::adamax(16, 3, 1e-3),
            later: TrainConfig::adamax(16, 1, 1e-4),
            warm_start: true,
            tilde_range: TildeRange::Batch,
            seed: 11,
            checkpoint_every: 1,
            deterministic: true,
        }
    }

    #[test]
    fn run_is_deterministic_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let out = RunOutput {
            dir: dir.path().join("a"),
            manifest_hash: "abc".into(),
        };
        let t1 = run(&cfg, Some(&out), &mut |_| Ok(())).unwrap();
        assert!(t1.failure.is_none());
        assert_eq!(t1.records.len(), 3);
        let out2 = RunOutput {
            dir: dir.path().join("b"),
            manifest_hash: "abc".into(),
        };
        let t2 = run(&cfg, Some(&out2), &mut |_| Ok(())).unwrap();
        assert_eq!(t1.final_ensemble, t2.final_ensemble);
        let read = |o: &RunOutput, f: &str| fs::read(o.dir.join(f)).unwrap();
        assert_eq!(read(&out, "diagnostics.csv"), read(&out2, "diagnostics.csv"));
        assert_eq!(read(&out, "train_log.jsonl"), read(&out2, "train_log.jsonl"));
        assert!(final_checkpoint(&out.dir).exists());
        assert!(out.dir.join("checkpoints/net_00002.bin").exists());
        let csv = String::from_utf8(read(&out, "diagnostics.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), diagnostics_header(2));
        assert!(csv.lines().nth(1).unwrap().ends_with(",abc"));
    }

    #[test]
    fn zero_steps_gives_initial_row() {
        let cfg = RunConfig {
            n_steps: 0,
            ..tiny_config()
        };
        let t = run(&cfg, None, &mut |_| Ok(())).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].step, 0);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.tau = -0.1;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.rbm_batch = Some(33);
        assert!(c.validate().is_err());
    }
}
