//! Numerical laboratory for unstable entropy and unstable pressure of random
//! partially hyperbolic dynamical systems on T² and T³.
//!
//! Layering, bottom to top:
//!
//! * [`rds`]: driving system, symbol paths, fiber maps, skew product.
//! * [`oseledets`]: Lyapunov spectra, unstable bundles, hyperbolicity certificates.
//! * [`leafgeom`]: local unstable disks, leaf and Bowen metrics, leaf volume.
//! * [`thermo`]: potentials, separated sets, unstable pressure and its properties.
//! * [`measures`]: samplers, partitions, conditional information, entropy estimators.
//! * [`equilibria`]: geometric potential, variational checks, Gibbs u-state defects.

pub mod equilibria;
pub mod error;
pub mod leafgeom;
pub mod measures;
pub mod oseledets;
pub mod rds;
pub mod stats;
pub mod sysfile;
pub mod thermo;

pub use error::{Error, Result};
