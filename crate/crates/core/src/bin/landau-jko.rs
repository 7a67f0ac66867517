use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use landau_jko::cli::config::{parse_flag, ExperimentConfig, DEFAULT_SEED};
use landau_jko::cli::experiment::{dump_bkw_grid, dump_covariance};
use landau_jko::cli::{compare_schemes, run_checks, run_experiment, PRESET_NAMES};
use landau_jko::ensemble::{read_ensemble_checkpoint, read_ensemble_json};
use landau_jko::losses::Scheme;
use landau_jko::oracles::{kde_density, square_grid, write_grid_csv, BkwSpec};
use landau_jko::Result;

/// Thread count for the worker pool; defaults to all cores.
const THREADS_ENV: &str = "LANDAU_THREADS";

#[derive(Parser)]
#[command(name = "landau-jko", version, about = "JKO particle solver for the Landau equation")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name; shorthand for preset=<name>.
    #[arg(long)]
    preset: Option<String>,
    /// Restore the published particle counts.
    #[arg(long)]
    paper_scale: bool,
    /// Overrides applied after the config file, as key=value.
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut flags = Vec::new();
        if let Some(p) = &self.preset {
            flags.push(format!("preset={p}"));
        }
        if self.paper_scale {
            flags.push("scale=paper".into());
        }
        flags.extend(self.overrides.iter().cloned());
        for f in &flags {
            parse_flag(f)?;
        }
        ExperimentConfig::load(self.config.as_deref(), &flags)
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Run one preset and write diagnostics, oracle errors and checkpoints.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Run several schemes and time steps to a common horizon.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "implicit,explicit,score")]
        schemes: Vec<Scheme>,
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<f64>,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Evaluate reference solutions on a grid.
    #[command(subcommand)]
    Oracle(OracleVerb),
    /// Run the invariant suite.
    Check {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// List preset names.
    Presets,
}

#[derive(Subcommand)]
enum OracleVerb {
    /// 2D BKW density on a square grid; prints the quadrature entropy.
    Bkw {
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long, default_value_t = 0.0625)]
        c_gamma: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact second-moment diagonal for Maxwellian molecules.
    Covariance {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// KDE reconstruction of a 2D ensemble checkpoint (.bin or .json).
    Kde {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(verb: Verb) -> Result<bool> {
    match verb {
        Verb::Run { cfg, out } => {
            let cfg = cfg.resolve()?;
            print!("{}", cfg.echo());
            let rep = run_experiment(&cfg, &out)?;
            let last = rep.trajectory.records.last().expect("initial record");
            println!(
                "manifest {} | steps {} | energy {:.6} | entropy {:.6}",
                rep.manifest.hash, last.step, last.energy, last.entropy_estimate
            );
            if let Some(f) = &rep.trajectory.failure {
                println!("run stopped early: {f}");
                return Ok(false);
            }
            println!("wrote {}", rep.dir.display());
        }
        Verb::Compare { cfg, schemes, taus, out } => {
            let cfg = cfg.resolve()?;
            for r in compare_schemes(&cfg, &schemes, &taus, &out)? {
                println!(
                    "{:>8} tau={:<6} steps={:<4} max_energy_drift={:.3e} divergent={}",
                    r.scheme,
                    r.tau,
                    r.records.len() - 1,
                    r.max_energy_drift,
                    r.divergent
                );
            }
            println!("wrote {}", out.join("comparison.csv").display());
        }
        Verb::Oracle(o) => match o {
            OracleVerb::Bkw {
                b,
                c_gamma,
                t,
                half_width,
                points,
                out,
            } => {
                let spec = BkwSpec::new(2, b, c_gamma)?;
                let h = dump_bkw_grid(&spec, t, half_width, points, &out)?;
                println!("K(t) = {:.12} | entropy = {h:.12}", spec.k(t));
            }
            OracleVerb::Covariance { p, times, out } => dump_covariance(&p, &times, &out)?,
            OracleVerb::Kde {
                checkpoint,
                eps,
                half_width,
                points,
                out,
            } => {
                let (ens, id) = if checkpoint.extension().is_some_and(|e| e == "json") {
                    read_ensemble_json(&checkpoint)?
                } else {
                    read_ensemble_checkpoint(&checkpoint)?
                };
                if ens.dim() != 2 {
                    return Err(landau_jko::LandauError::UnsupportedDimension(ens.dim()));
                }
                let grid = square_grid(-half_width, half_width, points);
                let vals = kde_density(&ens, eps, &grid)?;
                write_grid_csv(&out, 2, &grid, &vals)?;
                println!("{id}: {} particles at t = {}", ens.len(), ens.time());
            }
        },
        Verb::Check { seed } => {
            let mut ok = true;
            for c in run_checks(seed)? {
                println!(
                    "{} {:<32} measured {:.3e} (<= {:.0e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.threshold
                );
                ok &= c.passed;
            }
            return Ok(ok);
        }
        Verb::Presets => {
            for p in PRESET_NAMES {
                println!("{p}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists, which cannot happen here
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    match execute(cli.verb) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
