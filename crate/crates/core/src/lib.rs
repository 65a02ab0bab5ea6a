//! Numerical laboratory for the MAP conditional entropy of LDPC ensembles.
//!
//! The crate is organised around five subsystems:
//!
//! * [`channel`] — binary-input memoryless symmetric channel models in the
//!   difference domain, their moment functionals and the high-noise regime
//!   checker.
//! * [`ensemble`] — degree distributions and graph samplers: standard
//!   configuration-model LDPC, Poisson, multi-Poisson and the two-parameter
//!   interpolating ensembles.
//! * [`exact_gibbs`] — exact finite-n MAP machinery by codeword enumeration:
//!   partition functions, (extrinsic) spin brackets, conditional entropy,
//!   GEXIT and correlation derivative formulas, Nishimori identity suites and
//!   the high-noise series.
//! * [`rs_solver`] — population-dynamics density evolution, the replica
//!   symmetric functional and MAP threshold upper bounds.
//! * [`interpolation`] — overlap parameters, remainder-term estimation, the
//!   sum rule at small blocklength and concentration diagnostics.
//!
//! Everything is deterministic given a 64-bit master seed; see [`rng`] for
//! the stream-splitting scheme.

pub mod channel;
pub mod ensemble;
pub mod exact_gibbs;
pub mod interpolation;
pub mod quad;
pub mod rng;
pub mod rs_solver;
pub mod stats;

pub use channel::ChannelModel;
pub use ensemble::{DegreeDistribution, TannerGraph};
pub use exact_gibbs::GibbsSystem;
pub use rs_solver::Population;
