//! 2D Coulomb interaction (`γ = −3`) relaxing a bi-Maxwellian. There is no
//! closed-form solution. The run records energy (exact value 5) and entropy,
//! and writes KDE line slices through `y = −1` and `x = 0` at t = 0, 20, 40.
//!
//! ```text
//! cargo run --release --example coulomb_bimaxwellian -- [steps] [out_dir]
//! ```

use std::path::PathBuf;

use landau_jko::cli::{run_experiment, ExperimentConfig, Scale};

fn main() -> landau_jko::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(20, |s| s.parse().expect("steps must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/coulomb_bimaxwellian".into()));

    let mut cfg = ExperimentConfig::from_preset("bimax2d_coulomb", Scale::Desk, 1)?;
    cfg.run.n_steps = steps;
    let rep = run_experiment(&cfg, &out)?;
    for r in &rep.trajectory.records {
        println!(
            "step {:>4} t={:>6.2} energy={:.5} entropy={:.5} guard_hits={}",
            r.step, r.time, r.energy, r.entropy_estimate, r.guard_hits
        );
    }
    println!("slices and diagnostics in {}", rep.dir.display());
    Ok(())
}
