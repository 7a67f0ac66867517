//! 2D BKW solution in the weakly collisional regime.
//!
//! Runs the `bkw2d_weak` preset and prints energy, entropy and density
//! errors against the analytic solution.
//!
//! ```text
//! cargo run --release --example bkw_weak -- [steps] [out_dir]
//! ```

use std::path::PathBuf;

use landau_jko::cli::{run_experiment, ExperimentConfig, Scale};

fn main() -> landau_jko::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(50, |s| s.parse().expect("steps must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/bkw_weak".into()));

    let mut cfg = ExperimentConfig::from_preset("bkw2d_weak", Scale::Desk, 1)?;
    cfg.run.n_steps = steps;
    cfg.oracle_every = 5;
    let rep = run_experiment(&cfg, &out)?;

    println!("{:>5} {:>6} {:>9} {:>10} {:>10} {:>9} {:>9}", "step", "t", "energy", "H", "H exact", "KDE L2", "f median");
    for r in &rep.oracle {
        println!(
            "{:>5} {:>6.3} {:>9.5} {:>10.5} {:>10.5} {:>9.4} {:>9.4}",
            r.step,
            r.time,
            r.energy,
            r.entropy,
            r.entropy_exact.unwrap_or(f64::NAN),
            r.density_l2_error.unwrap_or(f64::NAN),
            r.pushforward_median_error.unwrap_or(f64::NAN),
        );
    }
    println!("artifacts in {}", rep.dir.display());
    Ok(())
}
