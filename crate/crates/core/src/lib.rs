//! Structure-preserving particle solver for the homogeneous Landau equation.
//!
//! Each time step is a JKO step in the Landau metric. A small network is
//! trained to minimize a particle loss, and the particles and their densities
//! are then transported by the resulting vector field.
//!
//! Modules, bottom up:
//! - [`kernels`]: collision kernel `A(z) = C|z|^{γ+2} Π(z)` and pair terms.
//! - [`ensemble`]: particles, initial data, moments, checkpoints.
//! - [`net`]: the `d → 32 → 32 → 32 → d` field with hand-written backprop.
//! - [`losses`]: implicit, explicit and score losses with exact gradients.
//! - [`optim`]: SGD and Adamax with random reshuffling.
//! - [`dynamics`]: particle updates and the JKO driver.
//! - [`oracles`]: analytic references (BKW, covariance relaxation, KDE).
//! - [`cli`]: presets, flat configs and experiment drivers.

// Negated comparisons deliberately reject NaN; index loops over flat
// row-major buffers read better than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod losses;
pub mod net;
pub mod optim;
pub mod oracles;
pub mod rng;

pub use error::{LandauError, Result};
