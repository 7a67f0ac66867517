//! Training objectives over an index batch `C ⊆ [N]` of size `B`.
//!
//! With `z = x_i − x_j` and `Δ = u(x_i) − u(x_j)` the pair terms are
//!
//! ```text
//! d²_ij = ½ Δᵀ A(z) Δ
//! h_ij  = A(z) : ∇u(x_i) − (d−1) C |z|^γ z·Δ
//! ```
//!
//! * implicit: `(τ²/B²) Σ_{i,j∈C} d²_ij + 2 h_ij` at `x = ṽ`, where
//!   `ṽ_i = v_i − (τ/B) Σ_{j∈C} A(v_i − v_j)(u(v_i) − u(v_j))`;
//! * explicit: the same sum at `x = v`;
//! * score: `(1/B) Σ_{i∈C} |u(v_i)|² + 2 ∇·u(v_i)`.
//!
//! The field `u` is trained on the rescaled problem, so the same field feeds
//! the particle update without any further factor of `τ`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{pairwise_sum, ParticleEnsemble};
use crate::error::{LandauError, Result};
use crate::kernels::{add_apply, dot, KernelSpec};
use crate::net::{Tape, VectorField, VectorFieldNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Implicit,
    Explicit,
    Score,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Implicit, Scheme::Explicit, Scheme::Score];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Implicit => "implicit",
            Scheme::Explicit => "explicit",
            Scheme::Score => "score",
        })
    }
}

impl FromStr for Scheme {
    type Err = LandauError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "implicit" => Ok(Scheme::Implicit),
            "explicit" => Ok(Scheme::Explicit),
            "score" => Ok(Scheme::Score),
            other => Err(LandauError::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Which particles the `j`-sum inside `ṽ` runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TildeRange {
    /// The training batch itself, normalized by `B`.
    #[default]
    Batch,
    /// All `N` particles, normalized by `N`.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub indices: Vec<usize>,
    pub scheme: Scheme,
    pub tau: f64,
}

impl LossBatch {
    pub fn new(indices: Vec<usize>, scheme: Scheme, tau: f64, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(LandauError::InvalidBatch("empty batch".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(LandauError::InvalidBatch(format!("tau must be positive, got {tau}")));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(LandauError::InvalidBatch(format!("index {i} out of range for N = {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(LandauError::InvalidBatch(format!("duplicate index {i}")));
            }
        }
        Ok(Self { indices, scheme, tau })
    }

    pub fn full(n: usize, scheme: Scheme, tau: f64) -> Result<Self> {
        Self::new((0..n).collect(), scheme, tau, n)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Loss value, parameter gradient and the number of guarded pairs met.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Vec<f64>,
    pub guard_hits: u64,
}

/// Particles per gradient-accumulation chunk; fixes the reduction order.
const CHUNK: usize = 16;

fn gather(ens: &ParticleEnsemble, idx: &[usize]) -> Vec<f64> {
    let d = ens.dim();
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(ens.velocity(i));
    }
    out
}

fn check_ens(spec: &KernelSpec, ens: &ParticleEnsemble, batch: &LossBatch) -> Result<()> {
    if spec.dim != ens.dim() {
        return Err(LandauError::DimensionMismatch {
            expected: spec.dim,
            got: ens.dim(),
        });
    }
    LossBatch::new(batch.indices.clone(), batch.scheme, batch.tau, ens.len()).map(|_| ())
}

/// `x_i − (τ/|R|) Σ_{j∈R} A(x_i − r_j)(w_i − s_j)` for each batch row.
fn tilde_core(
    spec: &KernelSpec,
    tau: f64,
    bv: &[f64],
    bu: &[f64],
    rv: &[f64],
    ru: &[f64],
) -> Vec<f64> {
    let d = spec.dim;
    let scale = -tau / (rv.len() / d) as f64;
    let mut out = bv.to_vec();
    out.par_chunks_mut(d).enumerate().for_each(|(i, o)| {
        let vi = &bv[i * d..(i + 1) * d];
        let ui = &bu[i * d..(i + 1) * d];
        let mut z = vec![0.0; d];
        let mut du = vec![0.0; d];
        for (vj, uj) in rv.chunks_exact(d).zip(ru.chunks_exact(d)) {
            for k in 0..d {
                z[k] = vi[k] - vj[k];
                du[k] = ui[k] - uj[k];
            }
            add_apply(&z, &du, scale, spec, o);
        }
    });
    out
}

fn eval_all<F: VectorField>(field: &F, xs: &[f64], d: usize) -> Vec<f64> {
    xs.par_chunks(d).flat_map_iter(|v| field.eval(v)).collect()
}

fn eval_all_jac<F: VectorField>(field: &F, xs: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let parts: Vec<(Vec<f64>, Vec<f64>)> = xs.par_chunks(d).map(|v| field.eval_jac(v)).collect();
    let mut u = Vec::with_capacity(xs.len());
    let mut j = Vec::with_capacity(xs.len() * d);
    for (a, b) in parts {
        u.extend(a);
        j.extend(b);
    }
    (u, j)
}

/// Intermediate positions `ṽ_i` for `i ∈ indices`, with the `j`-sum over
/// the same batch and normalized by its size. Flat `|indices| × d`.
pub fn tilde_positions<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    indices: &[usize],
    tau: f64,
) -> Result<Vec<f64>> {
    tilde_positions_in(field, ens, spec, indices, tau, TildeRange::Batch)
}

pub fn tilde_positions_in<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    indices: &[usize],
    tau: f64,
    range: TildeRange,
) -> Result<Vec<f64>> {
    let batch = LossBatch::new(indices.to_vec(), Scheme::Implicit, tau, ens.len())?;
    check_ens(spec, ens, &batch)?;
    let d = spec.dim;
    let bv = gather(ens, indices);
    match range {
        TildeRange::Batch => {
            let bu = eval_all(field, &bv, d);
            Ok(tilde_core(spec, tau, &bv, &bu, &bv, &bu))
        }
        TildeRange::Full => {
            let ru = eval_all(field, ens.velocities(), d);
            let bu: Vec<f64> = indices.iter().flat_map(|&i| ru[i * d..(i + 1) * d].to_vec()).collect();
            Ok(tilde_core(spec, tau, &bv, &bu, ens.velocities(), &ru))
        }
    }
}

/// Per-row pair sums and, optionally, the adjoints owned by row `i`
/// (unscaled; the caller multiplies by `τ²/B²`).
struct Row {
    value: f64,
    guard: u64,
    bad_pair: Option<usize>,
    gw: Vec<f64>,
    gj: Vec<f64>,
    gx: Vec<f64>,
}

fn pair_rows(spec: &KernelSpec, x: &[f64], w: &[f64], jac: &[f64], want_grad: bool) -> Vec<Row> {
    let d = spec.dim;
    let b = x.len() / d;
    let df = d as f64;
    let g = spec.gamma;
    (0..b)
        .into_par_iter()
        .map(|i| {
            let xi = &x[i * d..(i + 1) * d];
            let wi = &w[i * d..(i + 1) * d];
            let ji = &jac[i * d * d..(i + 1) * d * d];
            let tr_i: f64 = (0..d).map(|a| ji[a * d + a]).sum();
            let mut row = Row {
                value: 0.0,
                guard: 0,
                bad_pair: None,
                gw: vec![0.0; if want_grad { d } else { 0 }],
                gj: vec![0.0; if want_grad { d * d } else { 0 }],
                gx: vec![0.0; if want_grad { d } else { 0 }],
            };
            let mut z = vec![0.0; d];
            let mut dl = vec![0.0; d];
            let mut mz = vec![0.0; d];
            let mut mtz = vec![0.0; d];
            let mut terms = Vec::with_capacity(b);
            for j in 0..b {
                if j == i {
                    continue;
                }
                for k in 0..d {
                    z[k] = xi[k] - x[j * d + k];
                    dl[k] = wi[k] - w[j * d + k];
                }
                let r2 = dot(&z, &z);
                let Some((cr2, cg)) = spec.radial(r2) else {
                    row.guard += 1;
                    continue;
                };
                let zd = dot(&z, &dl);
                let dd = dot(&dl, &dl);
                let mut zjz = 0.0;
                for a in 0..d {
                    zjz += z[a] * dot(&ji[a * d..(a + 1) * d], &z);
                }
                let term = 0.5 * (cr2 * dd - cg * zd * zd) + 2.0 * (cr2 * tr_i - cg * zjz - (df - 1.0) * cg * zd);
                if !term.is_finite() && row.bad_pair.is_none() {
                    row.bad_pair = Some(j);
                }
                terms.push(term);
                if !want_grad {
                    continue;
                }
                let jj = &jac[j * d * d..(j + 1) * d * d];
                let cg2 = cg / r2;
                // M = J_i + J_j
                let mut tr_m = 0.0;
                let mut zmz = 0.0;
                for a in 0..d {
                    tr_m += ji[a * d + a] + jj[a * d + a];
                    let mut s = 0.0;
                    let mut st = 0.0;
                    for c in 0..d {
                        s += (ji[a * d + c] + jj[a * d + c]) * z[c];
                        st += (ji[c * d + a] + jj[c * d + a]) * z[c];
                    }
                    mz[a] = s;
                    mtz[a] = st;
                    zmz += z[a] * s;
                }
                for a in 0..d {
                    let a_delta = cr2 * dl[a] - cg * zd * z[a];
                    row.gw[a] += 2.0 * (a_delta - 2.0 * (df - 1.0) * cg * z[a]);
                    let q = 0.5 * ((g + 2.0) * cg * dd * z[a] - g * cg2 * zd * zd * z[a] - 2.0 * cg * zd * dl[a]);
                    let p = -(df - 1.0) * (g * cg2 * zd * z[a] + cg * dl[a]);
                    let r = (g + 2.0) * cg * tr_m * z[a] - g * cg2 * zmz * z[a] - cg * (mz[a] + mtz[a]);
                    row.gx[a] += 2.0 * (q + 2.0 * p + r);
                    for c in 0..d {
                        let id = if a == c { cr2 } else { 0.0 };
                        row.gj[a * d + c] += 2.0 * (id - cg * z[a] * z[c]);
                    }
                }
            }
            row.value = pairwise_sum(&terms);
            row
        })
        .collect()
}

fn finish_value(rows: &[Row], idx: &[usize], scale: f64) -> Result<(f64, u64)> {
    for (r, &i) in rows.iter().zip(idx) {
        if let Some(j) = r.bad_pair {
            return Err(LandauError::non_finite(format!("loss pair ({i}, {})", idx[j])));
        }
    }
    let vals: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let guard = rows.iter().map(|r| r.guard).sum();
    Ok((scale * pairwise_sum(&vals), guard))
}

/// Implicit or explicit JKO loss on the batch (value only).
pub fn jko_loss<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    batch: &LossBatch,
) -> Result<f64> {
    jko_loss_in(field, ens, spec, batch, TildeRange::Batch)
}

pub fn jko_loss_in<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    batch: &LossBatch,
    range: TildeRange,
) -> Result<f64> {
    check_ens(spec, ens, batch)?;
    let d = spec.dim;
    let x = match batch.scheme {
        Scheme::Implicit => tilde_positions_in(field, ens, spec, &batch.indices, batch.tau, range)?,
        Scheme::Explicit => gather(ens, &batch.indices),
        Scheme::Score => {
            return Err(LandauError::InvalidConfig("jko_loss needs the implicit or explicit scheme".into()))
        }
    };
    let (w, jac) = eval_all_jac(field, &x, d);
    let rows = pair_rows(spec, &x, &w, &jac, false);
    let b = batch.len() as f64;
    Ok(finish_value(&rows, &batch.indices, batch.tau * batch.tau / (b * b))?.0)
}

/// `(1/B) Σ |u(v_i)|² + 2 ∇·u(v_i)` over the batch.
pub fn score_loss<F: VectorField>(field: &F, ens: &ParticleEnsemble, indices: &[usize]) -> Result<f64> {
    LossBatch::new(indices.to_vec(), Scheme::Score, 1.0, ens.len())?;
    let d = ens.dim();
    let x = gather(ens, indices);
    let (w, jac) = eval_all_jac(field, &x, d);
    let terms: Vec<f64> = (0..indices.len())
        .map(|i| {
            let u = &w[i * d..(i + 1) * d];
            let tr: f64 = (0..d).map(|a| jac[i * d * d + a * d + a]).sum();
            dot(u, u) + 2.0 * tr
        })
        .collect();
    if let Some(i) = terms.iter().position(|t| !t.is_finite()) {
        return Err(LandauError::non_finite(format!("score term of particle {}", indices[i])));
    }
    Ok(pairwise_sum(&terms) / indices.len() as f64)
}

/// Loss for any scheme (value only).
pub fn batch_loss<F: VectorField>(
    field: &F,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    batch: &LossBatch,
    range: TildeRange,
) -> Result<f64> {
    match batch.scheme {
        Scheme::Score => score_loss(field, ens, &batch.indices),
        _ => jko_loss_in(field, ens, spec, batch, range),
    }
}

/// Backward through tapes in fixed chunks; returns the summed parameter
/// gradient and the per-tape input adjoints.
fn backward_chunks(
    net: &VectorFieldNet,
    tapes: &[Tape],
    gu: &[f64],
    gj: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let d = net.dim();
    let p = net.num_params();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = tapes
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = vec![0.0; p];
            let mut gx = Vec::with_capacity(chunk.len() * d);
            for (k, tape) in chunk.iter().enumerate() {
                let i = c * CHUNK + k;
                let gjx = gj.map(|g| &g[i * d * d..(i + 1) * d * d]);
                gx.extend(net.backward(tape, &gu[i * d..(i + 1) * d], gjx, &mut grad));
            }
            (grad, gx)
        })
        .collect();
    let mut grad = vec![0.0; p];
    let mut gx = Vec::with_capacity(tapes.len() * d);
    for (g, x) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        gx.extend(x);
    }
    (grad, gx)
}

fn tapes_at(net: &VectorFieldNet, xs: &[f64], with_jac: bool) -> Vec<Tape> {
    xs.par_chunks(net.dim()).map(|v| net.forward_tape(v, with_jac)).collect()
}

/// Batch loss and its exact parameter gradient, differentiating through
/// `u`, `∇_v u` and, for the implicit scheme, through `ṽ(θ)`.
pub fn loss_and_grad(
    net: &VectorFieldNet,
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    batch: &LossBatch,
    range: TildeRange,
) -> Result<LossOutput> {
    check_ens(spec, ens, batch)?;
    if net.dim() != ens.dim() {
        return Err(LandauError::DimensionMismatch {
            expected: ens.dim(),
            got: net.dim(),
        });
    }
    let d = spec.dim;
    let idx = &batch.indices;
    let b = idx.len();
    let bv = gather(ens, idx);

    if batch.scheme == Scheme::Score {
        let tapes = tapes_at(net, &bv, true);
        let inv_b = 1.0 / b as f64;
        let mut gu = Vec::with_capacity(b * d);
        let mut gj = vec![0.0; b * d * d];
        let mut terms = Vec::with_capacity(b);
        for (i, t) in tapes.iter().enumerate() {
            let u = t.output();
            let tr: f64 = (0..d).map(|a| t.jacobian()[a * d + a]).sum();
            let term = dot(u, u) + 2.0 * tr;
            if !term.is_finite() {
                return Err(LandauError::non_finite(format!("score term of particle {}", idx[i])));
            }
            terms.push(term);
            gu.extend(u.iter().map(|x| 2.0 * inv_b * x));
            for a in 0..d {
                gj[i * d * d + a * d + a] = 2.0 * inv_b;
            }
        }
        let (grad, _) = backward_chunks(net, &tapes, &gu, Some(&gj));
        return Ok(LossOutput {
            value: pairwise_sum(&terms) * inv_b,
            grad,
            guard_hits: 0,
        });
    }

    let implicit = batch.scheme == Scheme::Implicit;
    // reference set for the ṽ sum, its tapes, and batch positions inside it
    let (ref_v, ref_tapes, ref_pos): (Vec<f64>, Vec<Tape>, Vec<usize>) = if !implicit {
        (Vec::new(), Vec::new(), Vec::new())
    } else {
        match range {
            TildeRange::Batch => (bv.clone(), tapes_at(net, &bv, false), (0..b).collect()),
            TildeRange::Full => (ens.velocities().to_vec(), tapes_at(net, ens.velocities(), false), idx.clone()),
        }
    };
    let x = if implicit {
        let ru: Vec<f64> = ref_tapes.iter().flat_map(|t| t.output().to_vec()).collect();
        let bu: Vec<f64> = ref_pos.iter().flat_map(|&k| ru[k * d..(k + 1) * d].to_vec()).collect();
        tilde_core(spec, batch.tau, &bv, &bu, &ref_v, &ru)
    } else {
        bv.clone()
    };

    let tapes = tapes_at(net, &x, true);
    let w: Vec<f64> = tapes.iter().flat_map(|t| t.output().to_vec()).collect();
    let jac: Vec<f64> = tapes.iter().flat_map(|t| t.jacobian().to_vec()).collect();
    let rows = pair_rows(spec, &x, &w, &jac, true);
    let s = batch.tau * batch.tau / (b * b) as f64;
    let (value, guard_hits) = finish_value(&rows, idx, s)?;

    let gw: Vec<f64> = rows.iter().flat_map(|r| r.gw.iter().map(|g| s * g)).collect();
    let gj: Vec<f64> = rows.iter().flat_map(|r| r.gj.iter().map(|g| s * g)).collect();
    let (mut grad, gx_net) = backward_chunks(net, &tapes, &gw, Some(&gj));
    if !implicit {
        return Ok(LossOutput {
            value,
            grad,
            guard_hits,
        });
    }

    // total adjoint of ṽ: explicit kernel dependence plus the network input
    let gx: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.gx.iter().map(|g| s * g))
        .zip(&gx_net)
        .map(|(a, b)| a + b)
        .collect();

    // ṽ_i = v_i − (τ/|R|) Σ_{k∈R} A(v_i − r_k)(u_i − u_k)
    let nref = ref_v.len() / d;
    let mut in_batch = vec![None; nref];
    for (i, &k) in ref_pos.iter().enumerate() {
        in_batch[k] = Some(i);
    }
    let scale = batch.tau / nref as f64;
    let gu: Vec<f64> = (0..nref)
        .into_par_iter()
        .flat_map_iter(|k| {
            let rk = &ref_v[k * d..(k + 1) * d];
            let mut out = vec![0.0; d];
            let mut z = vec![0.0; d];
            for i in 0..b {
                for a in 0..d {
                    z[a] = bv[i * d + a] - rk[a];
                }
                add_apply(&z, &gx[i * d..(i + 1) * d], scale, spec, &mut out);
            }
            if let Some(i) = in_batch[k] {
                let g = &gx[i * d..(i + 1) * d];
                for j in 0..nref {
                    for a in 0..d {
                        z[a] = rk[a] - ref_v[j * d + a];
                    }
                    add_apply(&z, g, -scale, spec, &mut out);
                }
            }
            out
        })
        .collect();
    let (g2, _) = backward_chunks(net, &ref_tapes, &gu, None);
    for (a, b) in grad.iter_mut().zip(&g2) {
        *a += b;
    }
    Ok(LossOutput {
        value,
        grad,
        guard_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{AffineField, InitMode};
    use rand::RngExt;

    fn two_particles() -> ParticleEnsemble {
        ParticleEnsemble::new(2, vec![0.0, 0.0, 1.0, 0.0], vec![0.0; 2], 0.0).unwrap()
    }

    /// `u(v) = (0, v₂)`-style probe with `u₁ = 0`, `u₂ = (0, 1)`.
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

    #[test]
    fn tilde_examples() {
        let ens = two_particles();
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let zero = AffineField::constant(vec![0.0, 0.0]);
        assert_eq!(tilde_positions(&zero, &ens, &spec, &[0, 1], 0.1).unwrap(), ens.velocities());
        let tau = 0.2;
        let t = tilde_positions(&TwoPoint, &ens, &spec, &[0, 1], tau).unwrap();
        let expect = [0.0, tau / 2.0, 1.0, -tau / 2.0];
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let t = tilde_positions(&TwoPoint, &ens, &spec, &[0, 1], 1e-14).unwrap();
        for (a, b) in t.iter().zip(ens.velocities()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn batch_validation() {
        assert!(LossBatch::new(vec![], Scheme::Implicit, 0.1, 4).is_err());
        assert!(LossBatch::new(vec![0, 0], Scheme::Implicit, 0.1, 4).is_err());
        assert!(LossBatch::new(vec![4], Scheme::Implicit, 0.1, 4).is_err());
        assert!(LossBatch::new(vec![1], Scheme::Implicit, -0.1, 4).is_err());
        assert_eq!("score".parse::<Scheme>().unwrap(), Scheme::Score);
        assert!("euler".parse::<Scheme>().is_err());
    }

    fn random_ens(n: usize, d: usize, seed: u64) -> ParticleEnsemble {
        let mut rng = crate::rng::seeded(seed);
        let v: Vec<f64> = (0..n * d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        ParticleEnsemble::new(d, v, vec![0.0; n], 0.0).unwrap()
    }

    #[test]
    fn zero_and_affine_fields_give_zero() {
        let ens = random_ens(6, 2, 1);
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        for scheme in [Scheme::Implicit, Scheme::Explicit] {
            let batch = LossBatch::full(6, scheme, 0.1).unwrap();
            let zero = AffineField::constant(vec![0.0, 0.0]);
            assert_eq!(jko_loss(&zero, &ens, &spec, &batch).unwrap(), 0.0);
            let aff = AffineField::scaled_identity(vec![0.3, -1.2], 0.7);
            assert!(jko_loss(&aff, &ens, &spec, &batch).unwrap().abs() < 1e-15);
        }
        let zero = AffineField::constant(vec![0.0, 0.0]);
        assert_eq!(score_loss(&zero, &ens, &[0, 2, 4]).unwrap(), 0.0);
    }

    #[test]
    fn score_of_identity_field() {
        let ens = random_ens(5, 3, 2);
        let id = AffineField::scaled_identity(vec![0.0; 3], 1.0);
        let idx = [0, 1, 4];
        let expect: f64 = idx.iter().map(|&i| dot(ens.velocity(i), ens.velocity(i))).sum::<f64>() / 3.0 + 6.0;
        assert!((score_loss(&id, &ens, &idx).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn grad_is_zero_for_zero_net_explicit_bias_free() {
        let ens = random_ens(5, 2, 3);
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let net = VectorFieldNet::init(2, InitMode::Zero, 0).unwrap();
        let batch = LossBatch::full(5, Scheme::Explicit, 0.1).unwrap();
        let out = loss_and_grad(&net, &ens, &spec, &batch, TildeRange::Batch).unwrap();
        assert_eq!(out.value, 0.0);
        // the b4 adjoint is Σ_ij z_ij, zero by antisymmetry up to roundoff
        assert!(out.grad.iter().all(|g| g.abs() < 1e-14));
    }

    fn fd_check(spec: &KernelSpec, ens: &ParticleEnsemble, scheme: Scheme, range: TildeRange, take: usize, tol: f64) {
        let d = spec.dim;
        let mut net = VectorFieldNet::init(d, InitMode::TruncatedNormal, 4).unwrap();
        let mut rng = crate::rng::seeded(77);
        for x in net.params_mut() {
            *x += 0.2 * (rng.random::<f64>() - 0.5);
        }
        let idx: Vec<usize> = (0..ens.len()).map(|k| (5 * k + 3) % ens.len()).take(take).collect();
        let batch = LossBatch::new(idx, scheme, 0.3, ens.len()).unwrap();
        let out = loss_and_grad(&net, ens, spec, &batch, range).unwrap();
        let value = batch_loss(&net, ens, spec, &batch, range).unwrap();
        assert!((out.value - value).abs() <= 1e-13 * (1.0 + value.abs()));
        let e = 1e-5;
        let scale = out.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for i in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[i] += e;
            let mut m = net.clone();
            m.params_mut()[i] -= e;
            let fd = (batch_loss(&p, ens, spec, &batch, range).unwrap() - batch_loss(&m, ens, spec, &batch, range).unwrap())
                / (2.0 * e);
            let err = (fd - out.grad[i]).abs() / (fd.abs().max(1e-3 * scale));
            assert!(err < tol, "{scheme} param {i}: fd {fd} vs {}", out.grad[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = KernelSpec::new(2, 0.0, 1.0).unwrap();
        let ens = random_ens(8, 2, 9);
        for scheme in Scheme::ALL {
            fd_check(&spec, &ens, scheme, TildeRange::Batch, 8, 1e-5);
        }
        let ens = random_ens(16, 2, 10);
        fd_check(&spec, &ens, Scheme::Implicit, TildeRange::Batch, 5, 1e-5);
        fd_check(&spec, &ens, Scheme::Implicit, TildeRange::Full, 5, 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences_coulomb_3d() {
        let spec = KernelSpec::new(3, -3.0, 0.5).unwrap();
        let ens = random_ens(6, 3, 12);
        fd_check(&spec, &ens, Scheme::Implicit, TildeRange::Batch, 6, 1e-5);
    }
}
