//! Property tests for the collision kernel against a direct reference
//! formula written out here.

use landau_jko::kernels::{collision_matrix, pair_logdet_rate, pair_quadratic, projection, KernelSpec};
use proptest::prelude::*;

fn vec_in(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

/// `C|z|^{γ+2} (I − z zᵀ/|z|²)`, entry by entry.
fn reference_a(z: &[f64], gamma: f64, c: f64) -> Vec<f64> {
    let d = z.len();
    let r2: f64 = z.iter().map(|x| x * x).sum();
    let r = r2.sqrt();
    let s = c * r.powf(gamma + 2.0);
    (0..d * d)
        .map(|k| {
            let (a, b) = (k / d, k % d);
            s * ((a == b) as u8 as f64 - z[a] * z[b] / r2)
        })
        .collect()
}

fn spec_strategy() -> impl Strategy<Value = KernelSpec> {
    (2usize..5, 0usize..4, 0.05f64..3.0).prop_map(|(d, g, c)| {
        let gamma = [0.0, 1.0, -3.0, -(d as f64)][g];
        KernelSpec::new(d, gamma, c).unwrap()
    })
}

fn far_from_zero(z: &[f64]) -> bool {
    z.iter().map(|x| x * x).sum::<f64>() > 1e-4
}

proptest! {
    #[test]
    fn projection_is_orthogonal_projector(z in (2usize..6).prop_flat_map(vec_in)) {
        prop_assume!(far_from_zero(&z));
        let d = z.len();
        let p = projection(&z).unwrap();
        for a in 0..d {
            let pz: f64 = (0..d).map(|b| p[a * d + b] * z[b]).sum();
            prop_assert!(pz.abs() <= 1e-12 * (1.0 + z.iter().map(|x| x.abs()).sum::<f64>()));
            for b in 0..d {
                prop_assert!((p[a * d + b] - p[b * d + a]).abs() <= 1e-12);
                let pp: f64 = (0..d).map(|k| p[a * d + k] * p[k * d + b]).sum();
                prop_assert!((pp - p[a * d + b]).abs() <= 1e-12);
            }
        }
        let tr: f64 = (0..d).map(|a| p[a * d + a]).sum();
        prop_assert!((tr - (d as f64 - 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn collision_matrix_matches_reference(spec in spec_strategy(), seed in any::<u64>()) {
        let mut rng = proptest::test_runner::TestRng::from_seed(
            proptest::test_runner::RngAlgorithm::ChaCha, &seed.to_le_bytes().repeat(4));
        let z: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        prop_assume!(far_from_zero(&z));
        let a = collision_matrix(&z, &spec);
        let r = reference_a(&z, spec.gamma, spec.c_gamma);
        let scale = r.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&r) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn collision_matrix_is_psd(spec in spec_strategy(), zw in (vec_in(4), vec_in(4))) {
        let d = spec.dim;
        let (z, w) = (&zw.0[..d], &zw.1[..d]);
        prop_assume!(far_from_zero(z));
        let a = collision_matrix(z, &spec);
        let q: f64 = (0..d * d).map(|k| w[k / d] * a[k] * w[k % d]).sum();
        prop_assert!(q >= -1e-12);
    }

    #[test]
    fn pair_quadratic_is_swap_symmetric(spec in spec_strategy(), v in prop::collection::vec(vec_in(4), 4)) {
        let d = spec.dim;
        let (vi, vj, ui, uj) = (&v[0][..d], &v[1][..d], &v[2][..d], &v[3][..d]);
        let a = pair_quadratic(vi, vj, ui, uj, &spec).unwrap();
        let b = pair_quadratic(vj, vi, uj, ui, &spec).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(a >= -1e-12);
    }

    #[test]
    fn null_space_fields_give_zero(
        spec in spec_strategy(),
        v in prop::collection::vec(vec_in(4), 3),
        b in -2.0f64..2.0,
    ) {
        let d = spec.dim;
        let (vi, vj, shift) = (&v[0][..d], &v[1][..d], &v[2][..d]);
        prop_assume!(far_from_zero(&vi.iter().zip(vj).map(|(x, y)| x - y).collect::<Vec<_>>()));
        let field = |x: &[f64]| -> Vec<f64> { x.iter().zip(shift).map(|(xk, a)| a + b * xk).collect() };
        let mut grad = vec![0.0; d * d];
        for k in 0..d {
            grad[k * d + k] = b;
        }
        let (ui, uj) = (field(vi), field(vj));
        let q = pair_quadratic(vi, vj, &ui, &uj, &spec).unwrap();
        let h = pair_logdet_rate(vi, vj, &ui, &uj, &grad, &spec).unwrap();
        let scale = reference_a(&vi.iter().zip(vj).map(|(x, y)| x - y).collect::<Vec<_>>(), spec.gamma, spec.c_gamma)
            .iter()
            .fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(q.abs() <= 1e-12 * scale * (1.0 + b * b));
        prop_assert!(h.abs() <= 1e-12 * scale * (1.0 + b.abs()));
    }

    #[test]
    fn homogeneity_in_separation(spec in spec_strategy(), z in vec_in(4), lam in 0.1f64..5.0) {
        let d = spec.dim;
        let z = &z[..d];
        prop_assume!(far_from_zero(z));
        let zl: Vec<f64> = z.iter().map(|x| lam * x).collect();
        let a = collision_matrix(z, &spec);
        let al = collision_matrix(&zl, &spec);
        let f = lam.powf(spec.gamma + 2.0);
        let scale = al.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&al) {
            prop_assert!((f * x - y).abs() <= 1e-11 * scale);
        }
    }
}

#[test]
fn guard_zeroes_coincident_pairs() {
    let spec = KernelSpec::new(3, -3.0, 1.0).unwrap();
    let z = [1e-12, 0.0, 0.0];
    assert!(collision_matrix(&z, &spec).iter().all(|&x| x == 0.0));
    let v = [0.2, 0.1, -0.3];
    assert_eq!(pair_quadratic(&v, &v, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &spec).unwrap(), 0.0);
}
