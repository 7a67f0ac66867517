//! Kernel density reconstruction of exact BKW samples. The relative L² error
//! against the analytic density combines smoothing bias, which grows with
//! `ε`, and sampling noise, which shrinks with `N`.
//!
//! ```text
//! cargo run --release --example kde_reconstruction -- [t]
//! ```

use landau_jko::ensemble::{sample_initial, InitialCondition};
use landau_jko::oracles::{bkw_kde_error, BkwSpec};

fn main() -> landau_jko::Result<()> {
    let t: f64 = std::env::args().nth(1).map_or(0.0, |s| s.parse().expect("t must be a number"));
    let spec = BkwSpec::new(2, 0.5, 1.0 / 16.0)?;
    let ic = InitialCondition::Bkw { spec, t0: t };
    println!("BKW at t = {t}, K = {:.4}", spec.k(t));
    print!("{:>7}", "N \\ eps");
    let eps = [0.1, 0.2, 0.3, 0.4];
    for e in eps {
        print!(" {e:>8}");
    }
    println!();
    for n in [1024, 4096, 16384] {
        let ens = sample_initial(&ic, n, 11)?;
        print!("{n:>7}");
        for e in eps {
            print!(" {:>8.4}", bkw_kde_error(&ens, &spec, t, e, 4.0, 81)?);
        }
        println!();
    }
    Ok(())
}
