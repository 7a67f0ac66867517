//! Closed-form references and density reconstruction.
//!
//! * the BKW self-similar solution of the Maxwellian-kernel equation,
//! * its entropy by tensor-grid quadrature,
//! * the exact relaxation of the second-moment tensor for Maxwellian
//!   molecules,
//! * Gaussian kernel density estimation from a particle ensemble.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{LandauError, Result};

/// Quadrature half-width: integrals run over `[-8, 8]^d`.
pub const QUADRATURE_HALF_WIDTH: f64 = 8.0;

/// Default quadrature resolution per axis.
pub fn default_resolution(dim: usize) -> usize {
    if dim == 2 {
        400
    } else {
        160
    }
}

/// BKW solution parameters: `K(t) = 1 − B exp(−2 C_γ (d−1) t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkwSpec {
    pub dim: usize,
    pub bkw_b: f64,
    pub c_gamma: f64,
}

impl BkwSpec {
    pub fn new(dim: usize, bkw_b: f64, c_gamma: f64) -> Result<Self> {
        if dim < 2 {
            return Err(LandauError::UnsupportedDimension(dim));
        }
        if !(bkw_b > 0.0 && bkw_b <= 1.0) {
            return Err(LandauError::InvalidConfig(format!(
                "BKW parameter B must lie in (0, 1], got {bkw_b}"
            )));
        }
        if !(c_gamma > 0.0) {
            return Err(LandauError::InvalidConfig(format!(
                "c_gamma must be positive, got {c_gamma}"
            )));
        }
        Ok(Self { dim, bkw_b, c_gamma })
    }

    pub fn k(&self, t: f64) -> f64 {
        1.0 - self.bkw_b * (-2.0 * self.c_gamma * (self.dim as f64 - 1.0) * t).exp()
    }

    /// Smallest admissible `K`: below it the polynomial factor turns negative.
    pub fn k_threshold(&self) -> f64 {
        let d = self.dim as f64;
        d / (d + 2.0)
    }

    /// Earliest time at which the density is nonnegative.
    pub fn earliest_time(&self) -> f64 {
        let d = self.dim as f64;
        let target = 1.0 - self.k_threshold();
        if self.bkw_b <= target {
            0.0
        } else {
            (self.bkw_b / target).ln() / (2.0 * self.c_gamma * (d - 1.0))
        }
    }

    fn checked_k(&self, t: f64) -> Result<f64> {
        let k = self.k(t);
        // allow roundoff at the threshold itself
        if !(t >= 0.0) || k < self.k_threshold() - 1e-12 {
            return Err(LandauError::BkwOutOfRange {
                k,
                threshold: self.k_threshold(),
            });
        }
        Ok(k)
    }

    /// Profile coefficients `(K, a, b)` with `f = (2πK)^{-d/2} e^{-|v|²/2K} (a + b|v|²)`.
    pub(crate) fn profile(&self, t: f64) -> Result<(f64, f64, f64)> {
        let k = self.checked_k(t)?;
        let d = self.dim as f64;
        let a = (((d + 2.0) * k - d) / (2.0 * k)).max(0.0);
        let b = (1.0 - k) / (2.0 * k * k);
        Ok((k, a, b))
    }

    pub fn density(&self, t: f64, v: &[f64]) -> Result<f64> {
        let (k, a, b) = self.profile(t)?;
        Ok(bkw_profile(self.dim, k, a, b, v))
    }

    /// Log-density; `-inf` where the density vanishes.
    pub fn log_density(&self, t: f64, v: &[f64]) -> Result<f64> {
        let (k, a, b) = self.profile(t)?;
        let r2: f64 = v.iter().map(|x| x * x).sum();
        let d = self.dim as f64;
        Ok(-0.5 * d * (2.0 * PI * k).ln() - r2 / (2.0 * k) + (a + b * r2).ln())
    }
}

#[inline]
fn bkw_profile(dim: usize, k: f64, a: f64, b: f64, v: &[f64]) -> f64 {
    let r2: f64 = v.iter().map(|x| x * x).sum();
    (2.0 * PI * k).powf(-0.5 * dim as f64) * (-r2 / (2.0 * k)).exp() * (a + b * r2)
}

pub fn bkw_density(spec: &BkwSpec, t: f64, v: &[f64]) -> Result<f64> {
    if v.len() != spec.dim {
        return Err(LandauError::DimensionMismatch {
            expected: spec.dim,
            got: v.len(),
        });
    }
    spec.density(t, v)
}

/// Uniform tensor grid on `[-h, h]` with trapezoid weights.
fn axis(resolution: usize, half_width: f64) -> (Vec<f64>, Vec<f64>) {
    let step = 2.0 * half_width / (resolution as f64 - 1.0);
    let pts: Vec<f64> = (0..resolution).map(|i| -half_width + step * i as f64).collect();
    let w: Vec<f64> = (0..resolution)
        .map(|i| if i == 0 || i + 1 == resolution { 0.5 * step } else { step })
        .collect();
    (pts, w)
}

/// `∫ g(v) dv` over `[-8, 8]^d` (d ∈ {2, 3}) by the trapezoid rule.
pub fn grid_integral<F>(dim: usize, resolution: usize, g: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if resolution < 2 {
        return Err(LandauError::InvalidConfig("quadrature needs >= 2 points per axis".into()));
    }
    let (pts, w) = axis(resolution, QUADRATURE_HALF_WIDTH);
    let total = match dim {
        2 => (0..resolution)
            .into_par_iter()
            .map(|i| {
                let mut v = [pts[i], 0.0];
                let mut s = 0.0;
                for j in 0..resolution {
                    v[1] = pts[j];
                    s += w[j] * g(&v);
                }
                w[i] * s
            })
            .collect::<Vec<_>>(),
        3 => (0..resolution)
            .into_par_iter()
            .map(|i| {
                let mut v = [pts[i], 0.0, 0.0];
                let mut s = 0.0;
                for j in 0..resolution {
                    v[1] = pts[j];
                    let mut sj = 0.0;
                    for k in 0..resolution {
                        v[2] = pts[k];
                        sj += w[k] * g(&v);
                    }
                    s += w[j] * sj;
                }
                w[i] * s
            })
            .collect::<Vec<_>>(),
        d => return Err(LandauError::UnsupportedDimension(d)),
    };
    Ok(total.iter().sum())
}

/// `H(t) = ∫ f log f dv` for the BKW solution, with `0 log 0 = 0`.
pub fn bkw_entropy(spec: &BkwSpec, t: f64, resolution: usize) -> Result<f64> {
    let (k, a, b) = spec.profile(t)?;
    let dim = spec.dim;
    grid_integral(dim, resolution, |v| {
        let f = bkw_profile(dim, k, a, b, v);
        if f > 0.0 {
            f * f.ln()
        } else {
            0.0
        }
    })
}

/// Entropy `∫ M log M` of the standard Maxwellian in `d` dimensions.
pub fn maxwellian_entropy(dim: usize) -> f64 {
    -0.5 * dim as f64 * (1.0 + (2.0 * PI).ln())
}

/// Exact second-moment tensor for Maxwellian molecules started from
/// `diag(p0)`: entries relax to `E/d` at rate `4d`.
pub fn covariance_exact(p0: &[f64], t: f64) -> Vec<f64> {
    let d = p0.len();
    let energy: f64 = p0.iter().sum();
    let eq = energy / d as f64;
    let decay = (-4.0 * d as f64 * t).exp();
    let mut p = vec![0.0; d * d];
    for i in 0..d {
        p[i * d + i] = eq * (1.0 - decay) + p0[i] * decay;
    }
    p
}

/// Gaussian KDE `f(v) = (1/N) Σ ψ_ε(v − v_i)` at flat row-major query points.
pub fn kde_density(ens: &ParticleEnsemble, eps: f64, queries: &[f64]) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(LandauError::InvalidConfig(format!("KDE bandwidth must be positive, got {eps}")));
    }
    let d = ens.dim();
    if !queries.len().is_multiple_of(d) {
        return Err(LandauError::DimensionMismatch {
            expected: d,
            got: queries.len() % d,
        });
    }
    let norm = (2.0 * PI * eps * eps).powf(-0.5 * d as f64) / ens.len() as f64;
    let inv = 1.0 / (2.0 * eps * eps);
    let vel = ens.velocities();
    Ok(queries
        .par_chunks(d)
        .map(|q| {
            let mut s = 0.0;
            for p in vel.chunks_exact(d) {
                let r2: f64 = q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                s += (-r2 * inv).exp();
            }
            s * norm
        })
        .collect())
}

/// Relative L² error of the KDE reconstruction against the BKW density on
/// the grid `[-half_width, half_width]²` with `points` nodes per axis.
pub fn bkw_kde_error(
    ens: &ParticleEnsemble,
    spec: &BkwSpec,
    t: f64,
    eps: f64,
    half_width: f64,
    points: usize,
) -> Result<f64> {
    if ens.dim() != 2 || spec.dim != 2 {
        return Err(LandauError::UnsupportedDimension(ens.dim()));
    }
    let grid = square_grid(-half_width, half_width, points);
    let approx = kde_density(ens, eps, &grid)?;
    let exact = grid
        .chunks_exact(2)
        .map(|v| spec.density(t, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(relative_l2_error(&approx, &exact))
}

/// Median over particles of `|f_i − f(t, v_i)| / f(t, v_i)`, comparing the
/// transported densities with the BKW density at the particle locations.
pub fn bkw_pushforward_error(ens: &ParticleEnsemble, spec: &BkwSpec, t: f64) -> Result<f64> {
    if ens.dim() != spec.dim {
        return Err(LandauError::DimensionMismatch {
            expected: spec.dim,
            got: ens.dim(),
        });
    }
    let mut errs = Vec::with_capacity(ens.len());
    for (i, &lf) in ens.log_density().iter().enumerate() {
        let exact = spec.log_density(t, ens.velocity(i))?;
        if exact.is_finite() {
            errs.push((lf - exact).exp_m1().abs());
        }
    }
    if errs.is_empty() {
        return Err(LandauError::non_finite("BKW density at every particle"));
    }
    errs.sort_by(f64::total_cmp);
    let m = errs.len() / 2;
    Ok(if errs.len() % 2 == 1 {
        errs[m]
    } else {
        0.5 * (errs[m - 1] + errs[m])
    })
}

/// `‖a − b‖_F`.
pub fn frobenius_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "frobenius_error: shape mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Discrete relative L² error `‖approx − exact‖ / ‖exact‖` on a common grid.
pub fn relative_l2_error(approx: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(exact).map(|(a, e)| (a - e) * (a - e)).sum();
    let den: f64 = exact.iter().map(|e| e * e).sum();
    (num / den).sqrt()
}

/// Flat row-major points of the tensor grid `[lo, hi]²` with `n` points per axis.
pub fn square_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n as f64 - 1.0);
    let mut pts = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push(lo + step * i as f64);
            pts.push(lo + step * j as f64);
        }
    }
    pts
}

/// Points along one axis of `[lo, hi]`, all other coordinates fixed by `base`.
pub fn line_slice(base: &[f64], axis: usize, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n as f64 - 1.0);
    let mut pts = Vec::with_capacity(base.len() * n);
    for i in 0..n {
        let mut p = base.to_vec();
        p[axis] = lo + step * i as f64;
        pts.extend_from_slice(&p);
    }
    pts
}

/// Writes `(coordinates..., value)` rows as CSV.
pub fn write_grid_csv(path: &Path, dim: usize, points: &[f64], values: &[f64]) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..dim).map(|k| format!("v{}", k + 1)).collect();
    out.push_str(&header.join(","));
    out.push_str(",value\n");
    for (p, val) in points.chunks_exact(dim).zip(values) {
        for x in p {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{val}\n"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| LandauError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| LandauError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2() -> BkwSpec {
        BkwSpec::new(2, 0.5, 1.0 / 16.0).unwrap()
    }

    #[test]
    fn bkw_vanishes_at_origin_initially() {
        let f = bkw_density(&spec2(), 0.0, &[0.0, 0.0]).unwrap();
        assert!(f.abs() < 1e-18);
        assert_eq!(spec2().log_density(0.0, &[0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn bkw_large_time_is_maxwellian() {
        let s = spec2();
        let v = [0.7, -1.1];
        let f = bkw_density(&s, 1e4, &v).unwrap();
        let m = (-(0.49 + 1.21) / 2.0_f64).exp() / (2.0 * PI);
        assert!((f - m).abs() < 1e-14);
    }

    #[test]
    fn bkw_is_normalized() {
        let s = spec2();
        for t in [0.0, 1.0, 5.0] {
            let mass = grid_integral(2, 400, |v| s.density(t, v).unwrap()).unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "t={t}: mass {mass}");
        }
        let s3 = BkwSpec::new(3, 1.0, 3.0).unwrap();
        let t0 = s3.earliest_time();
        let mass = grid_integral(3, 160, |v| s3.density(t0, v).unwrap()).unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "3d mass {mass}");
    }

    #[test]
    fn bkw_rejects_negative_region() {
        let s = BkwSpec::new(3, 1.0, 3.0).unwrap();
        assert!(matches!(
            bkw_density(&s, 0.0, &[0.0; 3]),
            Err(LandauError::BkwOutOfRange { .. })
        ));
        let t0 = s.earliest_time();
        assert!((s.k(t0) - 0.6).abs() < 1e-12);
        assert!(bkw_density(&s, t0, &[0.0; 3]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn bkw_time_rescaling() {
        let base = spec2();
        let scaled = BkwSpec::new(2, 0.5, 3.0 / 16.0).unwrap();
        let v = [0.4, 1.3];
        let a = scaled.density(0.7, &v).unwrap();
        let b = base.density(0.7 * 3.0, &v).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn entropy_limits_and_monotonicity() {
        let s = spec2();
        let h_inf = bkw_entropy(&s, 500.0, 400).unwrap();
        assert!((h_inf - maxwellian_entropy(2)).abs() < 1e-8, "{h_inf}");
        assert!((maxwellian_entropy(2) + 1.0 + (2.0 * PI).ln()).abs() < 1e-15);

        let coarse = bkw_entropy(&s, 1.0, 400).unwrap();
        let fine = bkw_entropy(&s, 1.0, 800).unwrap();
        assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");

        let mut prev = f64::INFINITY;
        for i in 0..12 {
            let h = bkw_entropy(&s, i as f64 * 0.5, 200).unwrap();
            assert!(h <= prev + 1e-12);
            prev = h;
        }
        assert!(matches!(
            bkw_entropy(&BkwSpec::new(4, 0.5, 1.0).unwrap(), 1.0, 10),
            Err(LandauError::UnsupportedDimension(4))
        ));
    }

    #[test]
    fn covariance_exact_examples() {
        let mut p0 = vec![1.0; 10];
        p0[0] = 1.8;
        p0[1] = 0.2;
        let c0 = covariance_exact(&p0, 0.0);
        for i in 0..10 {
            assert_eq!(c0[i * 10 + i], p0[i]);
        }
        let c = covariance_exact(&p0, 0.05);
        assert!((c[0] - (1.0 + 0.8 * (-2.0_f64).exp())).abs() < 1e-14);
        assert!((c[0] - 1.10827).abs() < 1e-5);
        let cinf = covariance_exact(&p0, 1e3);
        for i in 0..10 {
            assert!((cinf[i * 10 + i] - 1.0).abs() < 1e-14);
        }
        for t in [0.0, 0.01, 0.3, 2.0] {
            let c = covariance_exact(&p0, t);
            let tr: f64 = (0..10).map(|i| c[i * 10 + i]).sum();
            assert!((tr - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frobenius_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(frobenius_error(&a, &a), 0.0);
        let b = [1.0, 2.0, 3.0, 7.0];
        assert_eq!(frobenius_error(&a, &b), 3.0);
        let x = [0.3, -1.2, 2.5, 0.01, 7.0, -3.3, 0.0, 1.0, 2.0];
        let y = [1.3, 0.2, -2.5, 0.5, 6.0, -3.0, 1.0, 1.5, 0.0];
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let e = x[i * 3 + j] - y[i * 3 + j];
                s += e * e;
            }
        }
        assert!((frobenius_error(&x, &y) - s.sqrt()).abs() <= 1e-15);
    }

    #[test]
    fn kde_single_particle_and_mass() {
        let ens = ParticleEnsemble::new(2, vec![0.5, -0.25], vec![0.0], 0.0).unwrap();
        let eps = 0.3;
        let at = kde_density(&ens, eps, &[0.5, -0.25]).unwrap();
        assert!((at[0] - 1.0 / (2.0 * PI * eps * eps)).abs() < 1e-13);
        assert!(kde_density(&ens, 0.0, &[0.0, 0.0]).is_err());

        let ens = ParticleEnsemble::new(2, vec![0.5, -0.25, -1.0, 2.0, 0.0, 0.1], vec![0.0; 3], 0.0)
            .unwrap();
        let mass = grid_integral(2, 400, |v| kde_density(&ens, eps, v).unwrap()[0]).unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn kde_translation_equivariance() {
        let v = vec![0.1, 0.2, -0.4, 1.0, 2.0, -1.5];
        let shift = [0.37, -1.21];
        let shifted: Vec<f64> = v.chunks(2).flat_map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
        let a = ParticleEnsemble::new(2, v, vec![0.0; 3], 0.0).unwrap();
        let b = ParticleEnsemble::new(2, shifted, vec![0.0; 3], 0.0).unwrap();
        let q = [0.3, 0.3];
        let qs = [0.3 + shift[0], 0.3 + shift[1]];
        let fa = kde_density(&a, 0.5, &q).unwrap()[0];
        let fb = kde_density(&b, 0.5, &qs).unwrap()[0];
        assert!((fa - fb).abs() < 1e-14 * fa.abs().max(1.0));
    }

    #[test]
    fn pushforward_error_of_exact_densities_is_zero() {
        let s = spec2();
        let vel = vec![0.3, -0.2, 1.1, 0.4, -0.9, 2.0];
        let ld: Vec<f64> = vel.chunks(2).map(|v| s.log_density(0.4, v).unwrap()).collect();
        let ens = ParticleEnsemble::new(2, vel.clone(), ld.clone(), 0.4).unwrap();
        assert!(bkw_pushforward_error(&ens, &s, 0.4).unwrap() < 1e-15);
        // one particle off by 10%: median of {0, 0, 0.1}
        let mut off = ld;
        off[2] += 1.1f64.ln();
        let ens = ParticleEnsemble::new(2, vel, off, 0.4).unwrap();
        assert!(bkw_pushforward_error(&ens, &s, 0.4).unwrap() < 1e-15);
    }

    #[test]
    fn kde_error_rejects_other_dimensions() {
        let s3 = BkwSpec::new(3, 1.0, 3.0).unwrap();
        let ens = ParticleEnsemble::new(3, vec![0.0; 3], vec![0.0], 0.0).unwrap();
        assert!(bkw_kde_error(&ens, &s3, 1.0, 0.3, 4.0, 11).is_err());
    }
}
