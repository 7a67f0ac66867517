//! Using the building blocks directly: sample particles, train a field on the
//! implicit JKO loss, and transport particles and densities with it.
//!
//! ```text
//! cargo run --release --example custom_field
//! ```

use landau_jko::dynamics::full_update;
use landau_jko::ensemble::{moments, sample_initial, InitialCondition};
use landau_jko::kernels::KernelSpec;
use landau_jko::losses::{Scheme, TildeRange};
use landau_jko::net::{InitMode, VectorFieldNet};
use landau_jko::optim::{train, JkoObjective, TrainConfig};
use landau_jko::rng::{stream_rng, Stream};

fn main() -> landau_jko::Result<()> {
    let seed = 5;
    let tau = 0.05;
    let ic = InitialCondition::AnisotropicGaussian { p: vec![1.6, 0.4] };
    let kernel = KernelSpec::maxwellian(2, 1.0)?;
    let mut ens = sample_initial(&ic, 1024, seed)?;
    let mut net = VectorFieldNet::init(2, InitMode::TruncatedNormal, seed)?;
    let cfg = TrainConfig::adamax(128, 20, 1e-3);

    for step in 0..5 {
        let obj = JkoObjective {
            ens: &ens,
            spec: &kernel,
            scheme: Scheme::Implicit,
            tau,
            range: TildeRange::Batch,
        };
        let mut rng = stream_rng(seed, Stream::Training, step);
        let stats = train(net.params_mut(), &obj, &cfg, &mut rng, None, true)?;
        let out = full_update(&net, &ens, &kernel, tau, Scheme::Implicit)?;
        ens = out.ensemble;
        let m = moments(&ens);
        println!(
            "step {} train loss {:.3e} energy {:.5} entropy {:.5} <v1²>-<v2²> {:.4}",
            step + 1,
            stats.last().map_or(f64::NAN, |s| s.loss),
            m.energy,
            m.entropy_estimate,
            landau_jko::ensemble::covariance(&ens)[0] - landau_jko::ensemble::covariance(&ens)[3],
        );
    }
    Ok(())
}
