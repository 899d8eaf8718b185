//! Resonant averaging for planar Hamiltonian systems with decaying
//! oscillatory perturbations.
//!
//! The pipeline runs model → averaging → classifier, with the integrator and
//! analysis modules providing direct simulation and empirical checks of the
//! predicted asymptotics.

pub mod analysis;
pub mod averaging;
pub mod classifier;
pub mod integrator;
pub mod model;
pub mod quad;
pub mod scenario;
pub mod seriesring;
