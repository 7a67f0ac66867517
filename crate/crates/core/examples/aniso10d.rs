//! 10D anisotropic Gaussian with Maxwellian molecules. The second-moment
//! tensor relaxes at rate `4d`, and the run reports the Frobenius error
//! against it at every step.
//!
//! ```text
//! cargo run --release --example aniso10d -- [steps] [n] [out_dir]
//! ```

use std::path::PathBuf;

use landau_jko::cli::{run_experiment, ExperimentConfig, Scale};

fn main() -> landau_jko::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(50, |s| s.parse().expect("steps must be an integer"));
    let n: Option<usize> = args.next().map(|s| s.parse().expect("n must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/aniso10d".into()));

    let mut cfg = ExperimentConfig::from_preset("aniso10d", Scale::Desk, 1)?;
    cfg.run.n_steps = steps;
    if let Some(n) = n {
        // keep the published batch fractions
        let p = landau_jko::cli::Preset::named("aniso10d")?;
        cfg.run.n = n;
        cfg.run.first.batch_size = p.batch_for(p.paper_batch, n);
        cfg.run.later.batch_size = cfg.run.first.batch_size;
        cfg.run.rbm_batch = p.paper_rbm.map(|b| p.batch_for(b, n));
    }
    let rep = run_experiment(&cfg, &out)?;
    for r in &rep.oracle {
        println!(
            "step {:>3} t={:.3} energy={:.4} covariance error={:.4}",
            r.step,
            r.time,
            r.energy,
            r.covariance_error.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
