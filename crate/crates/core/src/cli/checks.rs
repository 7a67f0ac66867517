//! Fast invariant suite behind the `check` verb. Each check exercises the
//! public API on small random problems and reports a measured quantity
//! against its threshold.

use rand::RngExt;

use crate::dynamics::{full_update, rbm_update, RbmNorm};
use crate::ensemble::{moments, ParticleEnsemble};
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::losses::{batch_loss, jko_loss, loss_and_grad, LossBatch, Scheme, TildeRange};
use crate::net::{AffineField, InitMode, SumField, VectorFieldNet};
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn at_most(name: &'static str, measured: f64, threshold: f64) -> Self {
        Self {
            name,
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

fn random_ens(rng: &mut SimRng, n: usize, d: usize) -> Result<ParticleEnsemble> {
    let v: Vec<f64> = (0..n * d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    ParticleEnsemble::new(d, v, vec![0.0; n], 0.0)
}

/// Max relative error of analytic parameter gradients against central
/// differences, over all parameters and all schemes.
fn gradient_check(rng: &mut SimRng, seed: u64) -> Result<f64> {
    let ens = random_ens(rng, 8, 2)?;
    let spec = KernelSpec::new(2, 0.0, 1.0)?;
    let mut worst: f64 = 0.0;
    for scheme in Scheme::ALL {
        let batch = LossBatch::full(8, scheme, 0.1)?;
        let mut net = VectorFieldNet::init(2, InitMode::TruncatedNormal, seed)?;
        let g = loss_and_grad(&net, &ens, &spec, &batch, TildeRange::Batch)?.grad;
        let h = 1e-5;
        let scale = g.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        for k in 0..g.len() {
            let orig = net.params()[k];
            net.params_mut()[k] = orig + h;
            let lp = batch_loss(&net, &ens, &spec, &batch, TildeRange::Batch)?;
            net.params_mut()[k] = orig - h;
            let lm = batch_loss(&net, &ens, &spec, &batch, TildeRange::Batch)?;
            net.params_mut()[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            // relative to the gradient scale so that near-zero entries do not dominate
            worst = worst.max((fd - g[k]).abs() / scale.max(1e-300));
        }
    }
    Ok(worst)
}

/// Max relative change of the JKO loss when `a + b v` is added to the field.
fn null_space_check(rng: &mut SimRng, seed: u64) -> Result<f64> {
    let ens = random_ens(rng, 24, 3)?;
    let spec = KernelSpec::new(3, -3.0, 0.5)?;
    let net = VectorFieldNet::init(3, InitMode::TruncatedNormal, seed)?;
    let batch = LossBatch::full(24, Scheme::Implicit, 0.05)?;
    let base = jko_loss(&net, &ens, &spec, &batch)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let b = rng.random::<f64>() * 4.0 - 2.0;
        let extra = AffineField::scaled_identity(a, b);
        let shifted = jko_loss(&SumField { inner: &net, extra: &extra }, &ens, &spec, &batch)?;
        worst = worst.max((shifted - base).abs() / base.abs().max(1e-300));
    }
    Ok(worst)
}

/// Max change of the mean velocity over one full and one random-batch step.
fn momentum_check(rng: &mut SimRng, seed: u64) -> Result<f64> {
    let ens = random_ens(rng, 256, 2)?;
    let spec = KernelSpec::new(2, 0.0, 1.0)?;
    let net = VectorFieldNet::init(2, InitMode::TruncatedNormal, seed)?;
    let before = moments(&ens).momentum;
    let full = full_update(&net, &ens, &spec, 0.1, Scheme::Implicit)?;
    let rbm = rbm_update(&net, &ens, &spec, 0.1, 32, Scheme::Implicit, RbmNorm::Unbiased, rng)?;
    let mut worst: f64 = 0.0;
    for e in [full.ensemble, rbm.ensemble] {
        for (x, y) in moments(&e).momentum.iter().zip(&before) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// `ΔH − loss/(2τ)`, which the update keeps nonpositive.
fn entropy_check(rng: &mut SimRng, seed: u64) -> Result<f64> {
    let ens = random_ens(rng, 64, 2)?;
    let spec = KernelSpec::new(2, 0.0, 1.0)?;
    let tau = 0.05;
    let net = VectorFieldNet::init(2, InitMode::TruncatedNormal, seed)?;
    let out = full_update(&net, &ens, &spec, tau, Scheme::Implicit)?;
    let dh = moments(&out.ensemble).entropy_estimate - moments(&ens).entropy_estimate;
    Ok(dh - out.loss_value / (2.0 * tau))
}

/// Runs every check with streams derived from `seed`.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = stream_rng(seed, Stream::Harness, 0);
    Ok(vec![
        CheckOutcome::at_most("gradient_vs_finite_difference", gradient_check(&mut rng, seed)?, 1e-4),
        CheckOutcome::at_most("null_space_invariance", null_space_check(&mut rng, seed)?, 1e-10),
        CheckOutcome::at_most("momentum_conservation", momentum_check(&mut rng, seed)?, 1e-12),
        CheckOutcome::at_most("entropy_dissipation_bound", entropy_check(&mut rng, seed)?, 1e-12),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for o in run_checks(3).unwrap() {
            assert!(o.passed, "{o:?}");
        }
    }
}
