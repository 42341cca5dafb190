//! Unstable pressure and unstable topological entropy.

pub mod potential;
pub mod pressure;
pub mod separated;
pub mod suite;

pub use potential::{birkhoff_sum, FiberBounds, Potential, PotentialKind, PreparedPotential, Term};
pub use pressure::{
    base_points, pressure_estimate, pressure_estimates, topological_entropy, EpsValue,
    PressureCell, PressureEstimate, PressureGrids,
};
pub use separated::{
    maximal_separated_set, maximal_separated_set_with, SeparatedSetResult, SeparationMethod,
};
pub use suite::{pressure_property_suite, PropertyCheck, PropertyReport};
