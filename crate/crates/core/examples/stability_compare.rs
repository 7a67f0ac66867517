//! Implicit, explicit and score schemes in the strongly collisional BKW
//! regime (`C = 5`). Each run goes to the same horizon. A run is flagged
//! divergent when it fails or its energy drifts by more than 10%.
//!
//! ```text
//! cargo run --release --example stability_compare -- [tau,tau,...] [out_dir]
//! ```

use std::path::PathBuf;

use landau_jko::cli::{compare_schemes, ExperimentConfig, Scale};
use landau_jko::losses::Scheme;

fn main() -> landau_jko::Result<()> {
    let mut args = std::env::args().skip(1);
    let taus: Vec<f64> = args
        .next()
        .unwrap_or_else(|| "0.1".into())
        .split(',')
        .map(|s| s.parse().expect("taus must be numbers"))
        .collect();
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/stability".into()));

    let cfg = ExperimentConfig::from_preset("bkw2d_strong", Scale::Desk, 1)?;
    let runs = compare_schemes(&cfg, &Scheme::ALL, &taus, &out)?;
    for r in &runs {
        let last = r.records.last().expect("initial record");
        println!(
            "{:>8} tau={:<5} t_end={:<5.2} energy={:<10.5} drift={:<9.2e} divergent={}{}",
            r.scheme,
            r.tau,
            last.time,
            last.energy,
            r.max_energy_drift,
            r.divergent,
            r.failure.as_deref().map(|f| format!(" ({f})")).unwrap_or_default()
        );
    }
    println!("merged trajectories in {}", out.join("comparison.csv").display());
    Ok(())
}
