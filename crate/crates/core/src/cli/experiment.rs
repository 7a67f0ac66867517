//! Experiment drivers: a single preset run with oracle comparisons, scheme
//! comparisons, and reference-solution dumps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cli::config::ExperimentConfig;
use crate::cli::presets::{OracleBinding, Preset};
use crate::dynamics::{run, RunOutput, StepView, Trajectory};
use crate::ensemble::{covariance, DiagnosticsRecord, InitialCondition};
use crate::error::{LandauError, Result};
use crate::losses::Scheme;
use crate::oracles::{
    bkw_entropy, bkw_kde_error, bkw_pushforward_error, covariance_exact, default_resolution, frobenius_error,
    kde_density, line_slice, square_grid, write_grid_csv, BkwSpec,
};

/// Half-width and resolution of the grid used for KDE density errors.
pub const KDE_GRID_HALF_WIDTH: f64 = 4.0;
pub const KDE_GRID_POINTS: usize = 81;

/// Relative energy drift above which a comparison run is flagged divergent.
pub const DIVERGENCE_DRIFT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub hash: String,
    pub preset: String,
    pub seed: u64,
    pub version: String,
    pub config: String,
}

impl Manifest {
    /// The hash covers the crate version and the full resolved config.
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let config = cfg.echo();
        let digest = Sha256::digest(format!("{version}\n{config}").as_bytes());
        let mut hash = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(hash, "{b:02x}");
        }
        Self {
            hash,
            preset: cfg.run.preset.clone(),
            seed: cfg.run.seed,
            version,
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| LandauError::io(dir, e))?;
        let cfg_path = dir.join("config.txt");
        fs::write(&cfg_path, &self.config).map_err(|e| LandauError::io(&cfg_path, e))?;
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| LandauError::io(&path, e))
    }
}

/// Oracle comparison at one step; `None` where the preset has no reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub energy_exact: f64,
    /// `|E − E_exact| / E_exact`.
    pub energy_error: f64,
    pub entropy: f64,
    pub entropy_exact: Option<f64>,
    pub entropy_error: Option<f64>,
    pub density_l2_error: Option<f64>,
    pub pushforward_median_error: Option<f64>,
    pub covariance_error: Option<f64>,
}

pub const ORACLE_HEADER: &str = "step,time,energy,energy_exact,energy_error,entropy,entropy_exact,entropy_error,\
density_l2_error,pushforward_median_error,covariance_error,manifest";

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl OracleRow {
    pub fn csv(&self, manifest: &str) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{manifest}",
            self.step,
            self.time,
            self.energy,
            self.energy_exact,
            self.energy_error,
            self.entropy,
            opt(self.entropy_exact),
            opt(self.entropy_error),
            opt(self.density_l2_error),
            opt(self.pushforward_median_error),
            opt(self.covariance_error),
        )
    }
}

/// Evaluates the references bound to a preset. Exact energies come from
/// the initial condition because energy is conserved.
pub struct OracleEvaluator {
    binding: OracleBinding,
    initial: InitialCondition,
    energy_exact: f64,
    kde_eps: f64,
}

impl OracleEvaluator {
    pub fn new(binding: OracleBinding, initial: &InitialCondition, kde_eps: f64) -> Self {
        Self {
            binding,
            initial: initial.clone(),
            energy_exact: initial.energy(),
            kde_eps,
        }
    }

    fn bkw(&self) -> Option<(BkwSpec, f64)> {
        match (&self.binding, &self.initial) {
            (OracleBinding::Bkw, InitialCondition::Bkw { spec, t0 }) => Some((*spec, *t0)),
            _ => None,
        }
    }

    pub fn evaluate(&self, view: &StepView) -> Result<OracleRow> {
        let r = view.record;
        let ens = view.ensemble;
        let mut row = OracleRow {
            step: r.step,
            time: r.time,
            energy: r.energy,
            energy_exact: self.energy_exact,
            energy_error: (r.energy - self.energy_exact).abs() / self.energy_exact,
            entropy: r.entropy_estimate,
            entropy_exact: None,
            entropy_error: None,
            density_l2_error: None,
            pushforward_median_error: None,
            covariance_error: None,
        };
        if let Some((spec, t0)) = self.bkw() {
            let t = t0 + r.time;
            let h = bkw_entropy(&spec, t, default_resolution(spec.dim))?;
            row.entropy_exact = Some(h);
            row.entropy_error = Some((r.entropy_estimate - h).abs());
            row.pushforward_median_error = Some(bkw_pushforward_error(ens, &spec, t)?);
            if spec.dim == 2 {
                row.density_l2_error = Some(bkw_kde_error(
                    ens,
                    &spec,
                    t,
                    self.kde_eps,
                    KDE_GRID_HALF_WIDTH,
                    KDE_GRID_POINTS,
                )?);
            }
        }
        if let (OracleBinding::Covariance, InitialCondition::AnisotropicGaussian { p }) =
            (&self.binding, &self.initial)
        {
            let exact = covariance_exact(p, r.time);
            row.covariance_error = Some(frobenius_error(&covariance(ens), &exact));
        }
        Ok(row)
    }
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub trajectory: Trajectory,
    pub oracle: Vec<OracleRow>,
}

fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| LandauError::io(path, e))?;
    writeln!(f, "{header}").map_err(|e| LandauError::io(path, e))?;
    for r in rows {
        writeln!(f, "{r}").map_err(|e| LandauError::io(path, e))?;
    }
    Ok(())
}

/// Runs a resolved config into `dir`: echoed config, manifest, diagnostics,
/// training log, oracle errors, checkpoints and any KDE slices.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let preset = Preset::named(&cfg.run.preset)?;
    let manifest = Manifest::new(cfg);
    manifest.write(dir)?;
    let out = RunOutput {
        dir: dir.to_path_buf(),
        manifest_hash: manifest.hash.clone(),
    };
    let evaluator = OracleEvaluator::new(preset.oracle, &cfg.run.initial, cfg.kde_eps);
    let last = cfg.run.n_steps;
    let tau = cfg.run.tau;
    let slices = preset.slices.clone().filter(|s| s.base.len() == cfg.run.initial.dim());
    let mut rows = Vec::new();
    let trajectory = run(&cfg.run, Some(&out), &mut |view| {
        if view.step % cfg.oracle_every == 0 || view.step == last {
            rows.push(evaluator.evaluate(view)?);
        }
        if let Some(s) = &slices {
            let t = view.record.time;
            if let Some(ts) = s.times.iter().find(|&&ts| (ts - t).abs() < 0.5 * tau) {
                write_slices(view, s.base.as_slice(), s.lo, s.hi, s.points, cfg.kde_eps, *ts, dir)?;
            }
        }
        Ok(())
    })?;
    let lines: Vec<String> = rows.iter().map(|r| r.csv(&manifest.hash)).collect();
    write_lines(&dir.join("oracle_errors.csv"), ORACLE_HEADER, &lines)?;
    Ok(ExperimentReport {
        dir: dir.to_path_buf(),
        manifest,
        trajectory,
        oracle: rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_slices(
    view: &StepView,
    base: &[f64],
    lo: f64,
    hi: f64,
    points: usize,
    eps: f64,
    t: f64,
    dir: &Path,
) -> Result<()> {
    let sdir = dir.join("slices");
    fs::create_dir_all(&sdir).map_err(|e| LandauError::io(&sdir, e))?;
    for axis in 0..base.len() {
        let pts = line_slice(base, axis, lo, hi, points);
        let vals = kde_density(view.ensemble, eps, &pts)?;
        write_grid_csv(
            &sdir.join(format!("kde_t{t}_axis{}.csv", axis + 1)),
            base.len(),
            &pts,
            &vals,
        )?;
    }
    Ok(())
}

/// One run of a scheme comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRun {
    pub scheme: Scheme,
    pub tau: f64,
    pub records: Vec<DiagnosticsRecord>,
    pub failure: Option<String>,
    /// `max_n |E_n − E_0| / E_0` over completed steps.
    pub max_energy_drift: f64,
    pub divergent: bool,
    pub manifest: String,
}

pub const COMPARISON_HEADER: &str = "scheme,tau,step,time,energy,entropy_estimate,divergent,manifest";

/// Runs every `(scheme, τ)` pair to the base config's horizon. All runs share
/// the base seed so that they start from the same particles. Failures are
/// recorded as divergent, never returned.
pub fn compare_schemes(
    base: &ExperimentConfig,
    schemes: &[Scheme],
    taus: &[f64],
    dir: &Path,
) -> Result<Vec<ComparisonRun>> {
    let horizon = base.run.tau * base.run.n_steps as f64;
    let mut jobs = Vec::new();
    for &scheme in schemes {
        for &tau in taus {
            let mut cfg = base.clone();
            cfg.run.scheme = scheme;
            cfg.run.tau = tau;
            cfg.run.n_steps = ((horizon / tau).round() as usize).max(1);
            cfg.validate()?;
            jobs.push(cfg);
        }
    }
    fs::create_dir_all(dir).map_err(|e| LandauError::io(dir, e))?;
    let runs: Vec<ComparisonRun> = jobs
        .par_iter()
        .map(|cfg| {
            let manifest = Manifest::new(cfg);
            let sub = dir.join(format!("{}_tau{}", cfg.run.scheme, cfg.run.tau));
            manifest.write(&sub)?;
            let out = RunOutput {
                dir: sub,
                manifest_hash: manifest.hash.clone(),
            };
            let traj = run(&cfg.run, Some(&out), &mut |_| Ok(()))?;
            let e0 = traj.records[0].energy;
            let drift = traj
                .records
                .iter()
                .map(|r| (r.energy - e0).abs() / e0)
                .fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
            let divergent = traj.failure.is_some() || !(drift <= DIVERGENCE_DRIFT);
            Ok(ComparisonRun {
                scheme: cfg.run.scheme,
                tau: cfg.run.tau,
                records: traj.records,
                failure: traj.failure,
                max_energy_drift: drift,
                divergent,
                manifest: manifest.hash,
            })
        })
        .collect::<Result<_>>()?;
    let mut lines = Vec::new();
    for r in &runs {
        for rec in &r.records {
            lines.push(format!(
                "{},{},{},{},{},{},{},{}",
                r.scheme, r.tau, rec.step, rec.time, rec.energy, rec.entropy_estimate, r.divergent, r.manifest
            ));
        }
    }
    write_lines(&dir.join("comparison.csv"), COMPARISON_HEADER, &lines)?;
    let summary: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.scheme,
                r.tau,
                r.records.len() - 1,
                r.max_energy_drift,
                r.divergent,
                r.failure.as_deref().unwrap_or("").replace(',', ";")
            )
        })
        .collect();
    write_lines(
        &dir.join("comparison_summary.csv"),
        "scheme,tau,steps_completed,max_energy_drift,divergent,failure",
        &summary,
    )?;
    Ok(runs)
}

/// Writes the BKW density on `[-half_width, half_width]²` and returns its
/// quadrature entropy.
pub fn dump_bkw_grid(spec: &BkwSpec, t: f64, half_width: f64, points: usize, path: &Path) -> Result<f64> {
    if spec.dim != 2 {
        return Err(LandauError::UnsupportedDimension(spec.dim));
    }
    let grid = square_grid(-half_width, half_width, points);
    let vals = grid.chunks_exact(2).map(|v| spec.density(t, v)).collect::<Result<Vec<_>>>()?;
    write_grid_csv(path, 2, &grid, &vals)?;
    bkw_entropy(spec, t, default_resolution(2))
}

/// Writes the diagonal of the exact second-moment tensor at each time.
pub fn dump_covariance(p0: &[f64], times: &[f64], path: &Path) -> Result<()> {
    let d = p0.len();
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((1..=d).map(|k| format!("p{k}{k}")))
        .collect();
    let lines: Vec<String> = times
        .iter()
        .map(|&t| {
            let p = covariance_exact(p0, t);
            std::iter::once(t.to_string())
                .chain((0..d).map(|k| p[k * d + k].to_string()))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    write_lines(path, &header.join(","), &lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{parse_pairs, ExperimentConfig};

    fn small(extra: &str) -> ExperimentConfig {
        let text = format!(
            "preset = bkw2d_weak\nn = 64\nsteps = 2\nbatch_size = 16\nfirst.epochs = 2\nlater.epochs = 1\n\
             deterministic = true\noracle_every = 1\n{extra}"
        );
        ExperimentConfig::resolve(&parse_pairs(&text).unwrap()).unwrap()
    }

    #[test]
    fn manifest_hash_tracks_config() {
        let a = Manifest::new(&small(""));
        let b = Manifest::new(&small(""));
        let c = Manifest::new(&small("seed = 3"));
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.hash.len(), 16);
    }

    #[test]
    fn experiment_bundle_is_complete_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("");
        let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
        let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
        assert_eq!(a.oracle.len(), 3);
        for name in ["config.txt", "manifest.json", "diagnostics.csv", "train_log.jsonl", "oracle_errors.csv"] {
            let fa = fs::read(a.dir.join(name)).unwrap();
            let fb = fs::read(b.dir.join(name)).unwrap();
            assert_eq!(fa, fb, "{name} differs");
        }
        let oracle = fs::read_to_string(a.dir.join("oracle_errors.csv")).unwrap();
        assert!(oracle.lines().skip(1).all(|l| l.ends_with(&a.manifest.hash)));
        assert!(a.oracle.iter().all(|r| r.entropy_exact.is_some() && r.density_l2_error.is_some()));
        assert!(a.dir.join("checkpoints/ensemble_final.bin").exists());
        let echoed = fs::read_to_string(a.dir.join("config.txt")).unwrap();
        let again = ExperimentConfig::resolve(&parse_pairs(&echoed).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn covariance_column_populated() {
        let text = "preset = aniso10d\nn = 64\nsteps = 1\nbatch_size = 16\nrbm_batch = 16\nfirst.epochs = 1\n\
                    deterministic = true";
        let cfg = ExperimentConfig::resolve(&parse_pairs(text).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rep = run_experiment(&cfg, dir.path()).unwrap();
        assert!(rep.oracle.iter().all(|r| r.covariance_error.is_some() && r.entropy_exact.is_none()));
    }

    #[test]
    fn comparison_rows_are_deterministic() {
        let cfg = small("");
        let dir = tempfile::tempdir().unwrap();
        let a = compare_schemes(&cfg, &[Scheme::Implicit, Scheme::Score], &[0.01], &dir.path().join("a")).unwrap();
        let b = compare_schemes(&cfg, &[Scheme::Implicit], &[0.01], &dir.path().join("b")).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].records, b[0].records);
        let csv = fs::read_to_string(dir.path().join("a/comparison.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn covariance_dump_starts_at_initial_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.csv");
        dump_covariance(&[1.8, 0.2], &[0.0, 1.0], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,1.8,0.2");
    }
}
