//! 3D Rosenbluth shell under Coulomb collisions, with random-batch particle
//! updates. Pass `strong` to run the `C = 10`, `τ = 1` regime instead.
//!
//! ```text
//! cargo run --release --example rosenbluth -- [weak|strong] [steps] [out_dir]
//! ```

use std::path::PathBuf;

use landau_jko::cli::{run_experiment, ExperimentConfig, Scale};

fn main() -> landau_jko::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = match args.next().as_deref() {
        Some("strong") => "rosenbluth3d_strong",
        _ => "rosenbluth3d",
    };
    let steps: usize = args.next().map_or(10, |s| s.parse().expect("steps must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| format!("runs/{preset}")));

    let mut cfg = ExperimentConfig::from_preset(preset, Scale::Desk, 1)?;
    cfg.run.n_steps = steps;
    let rep = run_experiment(&cfg, &out)?;
    let e0 = rep.trajectory.records[0].energy;
    for r in &rep.trajectory.records {
        println!(
            "step {:>3} t={:>5.1} energy={:.5} (rel. drift {:+.2e}) entropy={:.5}",
            r.step,
            r.time,
            r.energy,
            (r.energy - e0) / e0,
            r.entropy_estimate
        );
    }
    if let Some(f) = &rep.trajectory.failure {
        println!("stopped: {f}");
    }
    Ok(())
}
