//! Collision-kernel mathematics.
//!
//! The Landau kernel is `A(z) = C_γ |z|^{γ+2} Π(z)` with `Π(z) = I − z zᵀ/|z|²`
//! the orthogonal projector onto `z⊥`. Matrices are returned as row-major
//! `Vec<f64>` of length `d²`.
//!
//! Every pairwise quantity is defined to be exactly zero when
//! `|z| <= min_dist`; this covers self-interaction (`z = 0`) and, for soft
//! potentials, near-coincident particles where `|z|^γ` blows up.

use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};

/// Default near-coincidence cutoff used for soft potentials (`γ < 0`).
pub const SOFT_MIN_DIST: f64 = 1e-10;

/// Parameters of the collision kernel `A(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    pub gamma: f64,
    pub c_gamma: f64,
    pub min_dist: f64,
}

impl KernelSpec {
    /// Builds a kernel with the default singularity guard for its `γ`.
    pub fn new(dim: usize, gamma: f64, c_gamma: f64) -> Result<Self> {
        let min_dist = if gamma < 0.0 { SOFT_MIN_DIST } else { 0.0 };
        Self::with_min_dist(dim, gamma, c_gamma, min_dist)
    }

    pub fn with_min_dist(dim: usize, gamma: f64, c_gamma: f64, min_dist: f64) -> Result<Self> {
        if dim < 2 {
            return Err(LandauError::InvalidKernel(format!("dim must be >= 2, got {dim}")));
        }
        let lower = -(dim as f64) - 1.0;
        if !(gamma >= lower && gamma <= 1.0) {
            return Err(LandauError::InvalidKernel(format!(
                "gamma must lie in [{lower}, 1], got {gamma}"
            )));
        }
        if !(c_gamma > 0.0 && c_gamma.is_finite()) {
            return Err(LandauError::InvalidKernel(format!(
                "c_gamma must be positive, got {c_gamma}"
            )));
        }
        if !(min_dist >= 0.0 && min_dist.is_finite()) {
            return Err(LandauError::InvalidKernel(format!(
                "min_dist must be nonnegative, got {min_dist}"
            )));
        }
        Ok(Self {
            dim,
            gamma,
            c_gamma,
            min_dist,
        })
    }

    /// Maxwellian kernel `C (|z|² I − z zᵀ)`.
    pub fn maxwellian(dim: usize, c_gamma: f64) -> Result<Self> {
        Self::new(dim, 0.0, c_gamma)
    }

    /// Radial factors `(C|z|^{γ+2}, C|z|^γ)` for a squared separation, or
    /// `None` when the pair is inside the guard radius.
    #[inline]
    pub(crate) fn radial(&self, r2: f64) -> Option<(f64, f64)> {
        let r = r2.sqrt();
        if r <= self.min_dist || r2 == 0.0 {
            return None;
        }
        let rg = if self.gamma == 0.0 {
            1.0
        } else if self.gamma == -3.0 {
            1.0 / (r2 * r)
        } else {
            r.powf(self.gamma)
        };
        Some((self.c_gamma * rg * r2, self.c_gamma * rg))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sub_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
}

fn check_len(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(LandauError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    Ok(())
}

/// `Π(z) = I − z zᵀ/|z|²`.
pub fn projection(z: &[f64]) -> Result<Vec<f64>> {
    let d = z.len();
    let r2 = dot(z, z);
    if r2 == 0.0 || !r2.is_finite() {
        return Err(LandauError::UndefinedProjection);
    }
    let mut p = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            let id = if a == b { 1.0 } else { 0.0 };
            p[a * d + b] = id - z[a] * z[b] / r2;
        }
    }
    Ok(p)
}

/// `A(z) = C_γ|z|^{γ+2} Π(z)`, or the zero matrix inside the guard radius.
pub fn collision_matrix(z: &[f64], spec: &KernelSpec) -> Vec<f64> {
    let d = z.len();
    let mut a = vec![0.0; d * d];
    if let Some((rg2, rg)) = spec.radial(dot(z, z)) {
        for i in 0..d {
            for j in 0..d {
                let id = if i == j { rg2 } else { 0.0 };
                a[i * d + j] = id - rg * z[i] * z[j];
            }
        }
    }
    a
}

/// `½ (u_i − u_j)ᵀ A(v_i − v_j) (u_i − u_j)`.
pub fn pair_quadratic(
    v_i: &[f64],
    v_j: &[f64],
    u_i: &[f64],
    u_j: &[f64],
    spec: &KernelSpec,
) -> Result<f64> {
    let d = spec.dim;
    for v in [v_i, v_j, u_i, u_j] {
        check_len(v, d)?;
    }
    let mut z = vec![0.0; d];
    let mut du = vec![0.0; d];
    sub_into(v_i, v_j, &mut z);
    sub_into(u_i, u_j, &mut du);
    Ok(quadratic_term(&z, &du, spec))
}

/// Log-determinant rate `A(z):∇u(v_i) − (d−1) C_γ |z|^γ z·(u_i − u_j)` with
/// `z = v_i − v_j`. `grad_u_i[a*d + b] = ∂u_a/∂v_b` at `v_i`.
pub fn pair_logdet_rate(
    v_i: &[f64],
    v_j: &[f64],
    u_i: &[f64],
    u_j: &[f64],
    grad_u_i: &[f64],
    spec: &KernelSpec,
) -> Result<f64> {
    let d = spec.dim;
    for v in [v_i, v_j, u_i, u_j] {
        check_len(v, d)?;
    }
    if grad_u_i.len() != d * d {
        return Err(LandauError::DimensionMismatch {
            expected: d * d,
            got: grad_u_i.len(),
        });
    }
    let mut z = vec![0.0; d];
    let mut du = vec![0.0; d];
    sub_into(v_i, v_j, &mut z);
    sub_into(u_i, u_j, &mut du);
    Ok(logdet_term(&z, &du, grad_u_i, spec))
}

pub(crate) fn quadratic_term(z: &[f64], du: &[f64], spec: &KernelSpec) -> f64 {
    match spec.radial(dot(z, z)) {
        Some((rg2, rg)) => {
            let zd = dot(z, du);
            0.5 * (rg2 * dot(du, du) - rg * zd * zd)
        }
        None => 0.0,
    }
}

pub(crate) fn logdet_term(z: &[f64], du: &[f64], jac: &[f64], spec: &KernelSpec) -> f64 {
    let d = z.len();
    match spec.radial(dot(z, z)) {
        Some((rg2, rg)) => {
            let mut tr = 0.0;
            let mut zjz = 0.0;
            for a in 0..d {
                tr += jac[a * d + a];
                let row = &jac[a * d..(a + 1) * d];
                zjz += z[a] * dot(row, z);
            }
            rg2 * tr - rg * zjz - (d as f64 - 1.0) * rg * dot(z, du)
        }
        None => 0.0,
    }
}

/// Accumulates `out += scale · A(z) x`. Returns `false` when guarded.
#[inline]
pub(crate) fn add_apply(z: &[f64], x: &[f64], scale: f64, spec: &KernelSpec, out: &mut [f64]) -> bool {
    match spec.radial(dot(z, z)) {
        Some((rg2, rg)) => {
            let zx = dot(z, x);
            for ((o, xa), za) in out.iter_mut().zip(x).zip(z) {
                *o += scale * (rg2 * xa - rg * zx * za);
            }
            true
        }
        None => false,
    }
}
