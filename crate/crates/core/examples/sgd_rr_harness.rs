//! SGD with random reshuffling on a synthetic double-sum quadratic with the
//! same pair structure as the JKO loss. Far from the optimum the averaged
//! squared gradient decays like `1/K`; the floor it settles on is measured
//! separately, starting from the minimizer.
//!
//! ```text
//! cargo run --release --example sgd_rr_harness
//! ```

use landau_jko::optim::{convergence_harness, stationary_floor, PairQuadratic};
use landau_jko::rng::seeded;

fn main() -> landau_jko::Result<()> {
    let (n, dim, b) = (64, 4, 8);
    let obj = PairQuadratic::random(n, dim, &mut seeded(7));
    println!("N = {n}, B = {b}, L = {:.3}, sigma^2 = {:.4}", obj.smoothness(), obj.sigma_sq());

    let theta0 = vec![5.0; dim];
    let alphas = [0.1, 0.2, 0.4];
    let rows = convergence_harness(&obj, &theta0, &alphas, &[4, 16, 64, 256], b, 8, 3)?;
    println!("{:>6} {:>6} {:>14}", "alpha", "K", "avg |grad|^2");
    for r in rows {
        println!("{:>6} {:>6} {:>14.4e}", r.alpha, r.epochs, r.avg_grad_sq);
    }

    println!("{:>6} {:>14} {:>12}", "alpha", "floor", "ratio");
    let mut prev: Option<f64> = None;
    for a in alphas {
        let f = stationary_floor(&obj, a, b, 100, 1000, 8, 5)?;
        let ratio = prev.map_or(String::from("-"), |p| format!("{:.2}", f / p));
        println!("{a:>6} {f:>14.4e} {ratio:>12}");
        prev = Some(f);
    }
    Ok(())
}
