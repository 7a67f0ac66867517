//! The vector field `u_θ: ℝ^d → ℝ^d`, a fixed `d → 32 → 32 → 32 → d` MLP
//! with swish hidden activations and an identity output layer.
//!
//! # Parameter layout
//!
//! Parameters live in one flat `Vec<f64>`, in this order (matrices
//! row-major, `W_l` maps layer `l-1` to layer `l`):
//!
//! | block | shape   |
//! |-------|---------|
//! | `W1`  | 32 × d  |
//! | `b1`  | 32      |
//! | `W2`  | 32 × 32 |
//! | `b2`  | 32      |
//! | `W3`  | 32 × 32 |
//! | `b3`  | 32      |
//! | `W4`  | d × 32  |
//! | `b4`  | d       |
//!
//! for a total of `65 d + 2144` entries.
//!
//! # Differentiation
//!
//! [`VectorFieldNet::forward_tape`] propagates the `d` input tangents
//! alongside the values, which yields the input Jacobian `∇_v u` exactly.
//! [`VectorFieldNet::backward`] then runs reverse mode over that augmented
//! computation: given adjoints for `u` and for `∇_v u` it accumulates the
//! parameter gradient and returns the adjoint of the input `v`. Second mixed
//! derivatives `∂²u/∂θ∂v` appear through the swish second derivative.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{read_bytes, write_bytes, Cursor};
use crate::error::{LandauError, Result};
use crate::rng::{stream_rng, Stream};

pub const HIDDEN: usize = 32;
const H: usize = HIDDEN;
const LAYERS: usize = 4;

type Row = [f64; H];

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(σ(x), σ'(x), σ''(x))` for `σ(x) = x·sigmoid(x)`.
#[inline]
fn swish3(x: f64) -> (f64, f64, f64) {
    let s = sigmoid(x);
    let ds = s * (1.0 - s);
    (x * s, s + x * ds, ds * (2.0 + x * (1.0 - 2.0 * s)))
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub const fn param_count(dim: usize) -> usize {
    65 * dim + 2144
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w: [usize; LAYERS],
    b: [usize; LAYERS],
}

impl Offsets {
    const fn new(d: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + H * d;
        let w2 = b1 + H;
        let b2 = w2 + H * H;
        let w3 = b2 + H;
        let b3 = w3 + H * H;
        let w4 = b3 + H;
        let b4 = w4 + d * H;
        Self {
            w: [w1, w2, w3, w4],
            b: [b1, b2, b3, b4],
        }
    }
}

#[derive(Debug, Clone)]
pub enum InitMode {
    /// Zero biases, weights `~ N(0, 1/fan_in)` truncated at two standard deviations.
    TruncatedNormal,
    /// Copy of previously trained parameters.
    WarmStart(Vec<f64>),
    /// All parameters zero (`u ≡ 0`).
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldNet {
    dim: usize,
    params: Vec<f64>,
    linear_probe: bool,
}

/// Forward record for one input: activations, their tangents and the output.
#[derive(Debug, Clone)]
pub struct Tape {
    with_jac: bool,
    input: Vec<f64>,
    h: [Row; 3],
    d1: [Row; 3],
    d2: [Row; 3],
    /// `Ȧ_l[k]` at `[l * dim + k]`.
    adot: Vec<Row>,
    /// `H_l[k] = σ'(a_l) ⊙ Ȧ_l[k]` at `[l * dim + k]`.
    hdot: Vec<Row>,
    output: Vec<f64>,
    /// `J[a * dim + b] = ∂u_a/∂v_b`.
    jacobian: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn jacobian(&self) -> &[f64] {
        assert!(self.with_jac, "tape was recorded without tangents");
        &self.jacobian
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

impl VectorFieldNet {
    pub fn init(dim: usize, mode: InitMode, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(LandauError::UnsupportedDimension(dim));
        }
        let n = param_count(dim);
        let params = match mode {
            InitMode::WarmStart(p) => {
                if p.len() != n {
                    return Err(LandauError::DimensionMismatch {
                        expected: n,
                        got: p.len(),
                    });
                }
                p
            }
            InitMode::Zero => vec![0.0; n],
            InitMode::TruncatedNormal => {
                let mut rng = stream_rng(seed, Stream::NetInit, 0);
                let mut p = vec![0.0; n];
                let off = Offsets::new(dim);
                let shapes = [(H, dim), (H, H), (H, H), (dim, H)];
                for (l, &(rows, fan_in)) in shapes.iter().enumerate() {
                    let std = 1.0 / (fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("positive std");
                    for w in &mut p[off.w[l]..off.w[l] + rows * fan_in] {
                        *w = loop {
                            let x: f64 = normal.sample(&mut rng);
                            if x.abs() <= 2.0 * std {
                                break x;
                            }
                        };
                    }
                }
                p
            }
        };
        Self::from_params(dim, params)
    }

    pub fn from_params(dim: usize, params: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(LandauError::UnsupportedDimension(dim));
        }
        if params.len() != param_count(dim) {
            return Err(LandauError::DimensionMismatch {
                expected: param_count(dim),
                got: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|x| !x.is_finite()) {
            return Err(LandauError::non_finite(format!("network parameter {i}")));
        }
        Ok(Self {
            dim,
            params,
            linear_probe: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Replaces every hidden activation by the identity. Used to check the
    /// Jacobian against the plain weight product.
    pub fn with_linear_probe(mut self) -> Self {
        self.linear_probe = true;
        self
    }

    #[inline]
    fn act(&self, x: f64) -> (f64, f64, f64) {
        if self.linear_probe {
            (x, 1.0, 0.0)
        } else {
            swish3(x)
        }
    }

    fn offsets(&self) -> Offsets {
        Offsets::new(self.dim)
    }

    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        self.forward_tape(v, false).output
    }

    pub fn input_jacobian(&self, v: &[f64]) -> Vec<f64> {
        self.forward_tape(v, true).jacobian
    }

    /// Evaluates `u(v)` and, if `with_jac`, the input Jacobian, recording what
    /// [`backward`](Self::backward) needs.
    pub fn forward_tape(&self, v: &[f64], with_jac: bool) -> Tape {
        let d = self.dim;
        assert_eq!(v.len(), d, "input dimension");
        let off = self.offsets();
        let p = &self.params;
        let nt = if with_jac { d } else { 0 };
        let mut tape = Tape {
            with_jac,
            input: v.to_vec(),
            h: [[0.0; H]; 3],
            d1: [[0.0; H]; 3],
            d2: [[0.0; H]; 3],
            adot: vec![[0.0; H]; 3 * nt],
            hdot: vec![[0.0; H]; 3 * nt],
            output: vec![0.0; d],
            jacobian: vec![0.0; if with_jac { d * d } else { 0 }],
        };

        // layer 1
        let w1 = &p[off.w[0]..off.w[0] + H * d];
        let b1 = &p[off.b[0]..off.b[0] + H];
        for r in 0..H {
            let row = &w1[r * d..(r + 1) * d];
            let a = b1[r] + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>();
            let (s, s1, s2) = self.act(a);
            tape.h[0][r] = s;
            tape.d1[0][r] = s1;
            tape.d2[0][r] = s2;
            for k in 0..nt {
                tape.adot[k][r] = row[k];
                tape.hdot[k][r] = s1 * row[k];
            }
        }

        // layers 2, 3
        for l in 1..3 {
            let w = &p[off.w[l]..off.w[l] + H * H];
            let b = &p[off.b[l]..off.b[l] + H];
            let (prev, cur) = tape.h.split_at_mut(l);
            let hin = &prev[l - 1];
            for r in 0..H {
                let row: &Row = w[r * H..(r + 1) * H].try_into().unwrap();
                let a = b[r] + dot32(row, hin);
                let (s, s1, s2) = self.act(a);
                cur[0][r] = s;
                tape.d1[l][r] = s1;
                tape.d2[l][r] = s2;
                for k in 0..nt {
                    let ad = dot32(row, &tape.hdot[(l - 1) * d + k]);
                    tape.adot[l * d + k][r] = ad;
                    tape.hdot[l * d + k][r] = s1 * ad;
                }
            }
        }

        // output layer
        let w4 = &p[off.w[3]..off.w[3] + d * H];
        let b4 = &p[off.b[3]..off.b[3] + d];
        for a in 0..d {
            let row: &Row = w4[a * H..(a + 1) * H].try_into().unwrap();
            tape.output[a] = b4[a] + dot32(row, &tape.h[2]);
            for k in 0..nt {
                tape.jacobian[a * d + k] = dot32(row, &tape.hdot[2 * d + k]);
            }
        }
        tape
    }

    /// Reverse pass. `gu` is the adjoint of `u(v)`, `gj` (optional, row-major
    /// `d × d`) the adjoint of `∇_v u`. Accumulates `∂/∂θ` into `grad` and
    /// returns the adjoint of `v`.
    pub fn backward(&self, tape: &Tape, gu: &[f64], gj: Option<&[f64]>, grad: &mut [f64]) -> Vec<f64> {
        let d = self.dim;
        assert_eq!(grad.len(), self.params.len());
        let nt = if gj.is_some() {
            assert!(tape.with_jac, "Jacobian adjoint needs a tape with tangents");
            d
        } else {
            0
        };
        let gj = gj.unwrap_or(&[]);
        let off = self.offsets();
        let p = &self.params;

        // output layer: u = W4 h3 + b4, J[:, k] = W4 H3[k]
        let w4 = &p[off.w[3]..off.w[3] + d * H];
        let mut g: Row = [0.0; H];
        let mut big_g: Vec<Row> = vec![[0.0; H]; nt];
        for a in 0..d {
            let gw = &mut grad[off.w[3] + a * H..off.w[3] + (a + 1) * H];
            let row = &w4[a * H..(a + 1) * H];
            axpy32(gu[a], &tape.h[2], gw);
            for r in 0..H {
                g[r] += row[r] * gu[a];
            }
            for k in 0..nt {
                let c = gj[a * d + k];
                if c != 0.0 {
                    axpy32(c, &tape.hdot[2 * d + k], gw);
                    for r in 0..H {
                        big_g[k][r] += row[r] * c;
                    }
                }
            }
            grad[off.b[3] + a] += gu[a];
        }

        let mut gv = vec![0.0; d];
        for l in (0..3).rev() {
            let s1 = &tape.d1[l];
            let s2 = &tape.d2[l];
            let mut ga: Row = [0.0; H];
            for r in 0..H {
                ga[r] = s1[r] * g[r];
            }
            let mut gadot: Vec<Row> = vec![[0.0; H]; nt];
            for k in 0..nt {
                let ad = &tape.adot[l * d + k];
                for r in 0..H {
                    gadot[k][r] = s1[r] * big_g[k][r];
                    ga[r] += s2[r] * big_g[k][r] * ad[r];
                }
            }
            for r in 0..H {
                grad[off.b[l] + r] += ga[r];
            }
            if l == 0 {
                let w1 = &p[off.w[0]..off.w[0] + H * d];
                for r in 0..H {
                    let gw = &mut grad[off.w[0] + r * d..off.w[0] + (r + 1) * d];
                    for c in 0..d {
                        gw[c] += ga[r] * tape.input[c];
                        gv[c] += w1[r * d + c] * ga[r];
                    }
                    for k in 0..nt {
                        gw[k] += gadot[k][r];
                    }
                }
            } else {
                let w = &p[off.w[l]..off.w[l] + H * H];
                let hin = &tape.h[l - 1];
                let mut g_prev: Row = [0.0; H];
                let mut big_prev: Vec<Row> = vec![[0.0; H]; nt];
                for r in 0..H {
                    let gw = &mut grad[off.w[l] + r * H..off.w[l] + (r + 1) * H];
                    let row = &w[r * H..(r + 1) * H];
                    axpy32(ga[r], hin, gw);
                    for c in 0..H {
                        g_prev[c] += row[c] * ga[r];
                    }
                    for k in 0..nt {
                        let c = gadot[k][r];
                        axpy32(c, &tape.hdot[(l - 1) * d + k], gw);
                        for cc in 0..H {
                            big_prev[k][cc] += row[cc] * c;
                        }
                    }
                }
                g = g_prev;
                big_g = big_prev;
            }
        }
        gv
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    ///
    /// Binary layout (little-endian): magic `LJKONET1`, `u64 d`, `u64 hidden`,
    /// `u64 layers`, `u64 P`, then `P` `f64` parameters in the flat layout.
    pub fn write_checkpoint(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(40 + 8 * self.params.len());
        bytes.extend_from_slice(NET_MAGIC);
        for x in [self.dim, HIDDEN, LAYERS, self.params.len()] {
            bytes.extend_from_slice(&(x as u64).to_le_bytes());
        }
        for x in &self.params {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        write_bytes(&stem.with_extension("bin"), &bytes)?;
        let json = NetJson {
            dim: self.dim,
            hidden: HIDDEN,
            layers: LAYERS,
            activation: "swish".into(),
            output_activation: "identity".into(),
            params: self.params.clone(),
        };
        write_bytes(&stem.with_extension("json"), serde_json::to_string(&json)?.as_bytes())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let buf = read_bytes(path)?;
        let mut c = Cursor::new(&buf);
        if c.take(8)? != NET_MAGIC {
            return Err(LandauError::Checkpoint("not a network checkpoint".into()));
        }
        let dim = c.u64()? as usize;
        let hidden = c.u64()? as usize;
        let layers = c.u64()? as usize;
        let n = c.u64()? as usize;
        if hidden != HIDDEN || layers != LAYERS || n != param_count(dim) {
            return Err(LandauError::Checkpoint(format!(
                "architecture mismatch: hidden={hidden}, layers={layers}, params={n}"
            )));
        }
        let params = c.f64s(n)?;
        c.finish()?;
        Self::from_params(dim, params)
    }
}

/// Anything that can stand in for `u` when evaluating losses and updates.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, v: &[f64]) -> Vec<f64>;
    /// `(u(v), ∇_v u(v))`, Jacobian row-major.
    fn eval_jac(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>);
}

impl VectorField for VectorFieldNet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, v: &[f64]) -> Vec<f64> {
        self.forward(v)
    }

    fn eval_jac(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.forward_tape(v, true);
        (t.output, t.jacobian)
    }
}

/// `u(v) = a + M v` with `M` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub a: Vec<f64>,
    pub m: Vec<f64>,
}

impl AffineField {
    pub fn constant(a: Vec<f64>) -> Self {
        let d = a.len();
        Self { a, m: vec![0.0; d * d] }
    }

    /// `a + b v`.
    pub fn scaled_identity(a: Vec<f64>, b: f64) -> Self {
        let d = a.len();
        let mut m = vec![0.0; d * d];
        for k in 0..d {
            m[k * d + k] = b;
        }
        Self { a, m }
    }
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn eval(&self, v: &[f64]) -> Vec<f64> {
        let d = self.a.len();
        (0..d)
            .map(|r| self.a[r] + (0..d).map(|c| self.m[r * d + c] * v[c]).sum::<f64>())
            .collect()
    }

    fn eval_jac(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.eval(v), self.m.clone())
    }
}

/// `inner(v) + extra(v)`.
pub struct SumField<'a, F: VectorField, G: VectorField> {
    pub inner: &'a F,
    pub extra: &'a G,
}

impl<F: VectorField, G: VectorField> VectorField for SumField<'_, F, G> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, v: &[f64]) -> Vec<f64> {
        let mut u = self.inner.eval(v);
        for (x, y) in u.iter_mut().zip(self.extra.eval(v)) {
            *x += y;
        }
        u
    }

    fn eval_jac(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut u, mut j) = self.inner.eval_jac(v);
        let (u2, j2) = self.extra.eval_jac(v);
        for (x, y) in u.iter_mut().zip(u2) {
            *x += y;
        }
        for (x, y) in j.iter_mut().zip(j2) {
            *x += y;
        }
        (u, j)
    }
}

const NET_MAGIC: &[u8; 8] = b"LJKONET1";

#[derive(Serialize, Deserialize)]
struct NetJson {
    dim: usize,
    hidden: usize,
    layers: usize,
    activation: String,
    output_activation: String,
    params: Vec<f64>,
}

#[inline]
fn dot32(a: &Row, b: &Row) -> f64 {
    let mut acc = [0.0; 4];
    for c in 0..H / 4 {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline]
fn axpy32(alpha: f64, x: &Row, y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    fn random_net(dim: usize, seed: u64) -> VectorFieldNet {
        let mut net = VectorFieldNet::init(dim, InitMode::TruncatedNormal, seed).unwrap();
        let mut rng = crate::rng::seeded(seed + 100);
        for x in net.params_mut() {
            *x += 0.1 * (rng.random::<f64>() - 0.5);
        }
        net
    }

    #[test]
    fn layout_size() {
        assert_eq!(param_count(2), 2274);
        let net = VectorFieldNet::init(3, InitMode::Zero, 0).unwrap();
        assert_eq!(net.num_params(), 65 * 3 + 2144);
        let o = Offsets::new(3);
        assert_eq!(o.b[3] + 3, param_count(3));
    }

    #[test]
    fn truncated_normal_init() {
        let d = 2;
        let net = VectorFieldNet::init(d, InitMode::TruncatedNormal, 5).unwrap();
        let o = Offsets::new(d);
        let p = net.params();
        for (l, (rows, fan_in)) in [(H, d), (H, H), (H, H), (d, H)].into_iter().enumerate() {
            let bound = 2.0 / (fan_in as f64).sqrt();
            assert!(p[o.w[l]..o.w[l] + rows * fan_in].iter().all(|w| w.abs() <= bound));
            let nb = if l == 3 { d } else { H };
            assert!(p[o.b[l]..o.b[l] + nb].iter().all(|b| *b == 0.0));
        }
        let again = VectorFieldNet::init(d, InitMode::TruncatedNormal, 5).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn warm_start_copies() {
        let a = random_net(2, 1);
        let b = VectorFieldNet::init(2, InitMode::WarmStart(a.params().to_vec()), 99).unwrap();
        assert_eq!(a.params(), b.params());
        assert!(VectorFieldNet::init(3, InitMode::WarmStart(a.params().to_vec()), 0).is_err());
        assert!(VectorFieldNet::init(1, InitMode::Zero, 0).is_err());
    }

    #[test]
    fn swish_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(1.0) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        for x in [-3.0, -0.4, 0.0, 0.7, 2.5] {
            let e = 1e-5;
            let (_, d1, d2) = swish3(x);
            let fd1 = (swish(x + e) - swish(x - e)) / (2.0 * e);
            let fd2 = (swish3(x + e).1 - swish3(x - e).1) / (2.0 * e);
            assert!((d1 - fd1).abs() < 1e-9);
            assert!((d2 - fd2).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_net() {
        let net = VectorFieldNet::init(2, InitMode::Zero, 0).unwrap();
        assert_eq!(net.forward(&[0.3, -2.0]), vec![0.0, 0.0]);
        assert_eq!(net.input_jacobian(&[0.3, -2.0]), vec![0.0; 4]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for d in [2, 3] {
            let net = random_net(d, 7);
            let v: Vec<f64> = (0..d).map(|k| 0.4 - 0.3 * k as f64).collect();
            let j = net.input_jacobian(&v);
            let e = 1e-5;
            for b in 0..d {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[b] += e;
                vm[b] -= e;
                let (up, um) = (net.forward(&vp), net.forward(&vm));
                for a in 0..d {
                    let fd = (up[a] - um[a]) / (2.0 * e);
                    let rel = (fd - j[a * d + b]).abs() / j[a * d + b].abs().max(1e-3);
                    assert!(rel < 1e-6, "d={d} ({a},{b}): {fd} vs {}", j[a * d + b]);
                }
            }
        }
    }

    #[test]
    fn linear_probe_jacobian_is_weight_product() {
        let d = 2;
        let net = random_net(d, 3).with_linear_probe();
        let o = Offsets::new(d);
        let p = net.params();
        let mat = |l: usize, rows: usize, cols: usize| {
            (0..rows)
                .map(|r| (0..cols).map(|c| p[o.w[l] + r * cols + c]).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let mul = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            (0..a.len())
                .map(|r| (0..b[0].len()).map(|c| (0..b.len()).map(|k| a[r][k] * b[k][c]).sum()).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let prod = mul(&mat(3, d, H), &mul(&mat(2, H, H), &mul(&mat(1, H, H), &mat(0, H, d))));
        let j = net.input_jacobian(&[1.3, -0.2]);
        for a in 0..d {
            for b in 0..d {
                assert!((j[a * d + b] - prod[a][b]).abs() < 1e-12);
            }
        }
    }

    /// Scalar `c·u + Σ G ⊙ J + k·v` through the tape, checked by finite differences.
    #[test]
    fn backward_matches_finite_differences() {
        let d = 2;
        let net = random_net(d, 11);
        let v = [0.7, -0.4];
        let cu = [0.3, -1.1];
        let cj = [0.5, -0.2, 0.9, 0.4];
        let scalar = |n: &VectorFieldNet, v: &[f64]| {
            let t = n.forward_tape(v, true);
            cu.iter().zip(t.output()).map(|(a, b)| a * b).sum::<f64>()
                + cj.iter().zip(t.jacobian()).map(|(a, b)| a * b).sum::<f64>()
        };
        let tape = net.forward_tape(&v, true);
        let mut grad = vec![0.0; net.num_params()];
        let gv = net.backward(&tape, &cu, Some(&cj), &mut grad);
        let e = 1e-5;
        for i in (0..net.num_params()).step_by(7) {
            let mut p = net.clone();
            p.params_mut()[i] += e;
            let mut m = net.clone();
            m.params_mut()[i] -= e;
            let fd = (scalar(&p, &v) - scalar(&m, &v)) / (2.0 * e);
            assert!((fd - grad[i]).abs() <= 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
        for c in 0..d {
            let mut vp = v;
            let mut vm = v;
            vp[c] += e;
            vm[c] -= e;
            let fd = (scalar(&net, &vp) - scalar(&net, &vm)) / (2.0 * e);
            assert!((fd - gv[c]).abs() <= 1e-7 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let net = random_net(3, 2);
        let stem = dir.path().join("net");
        net.write_checkpoint(&stem).unwrap();
        let back = VectorFieldNet::read_checkpoint(&stem.with_extension("bin")).unwrap();
        assert_eq!(back, net);
    }
}
