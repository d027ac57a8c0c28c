//! Conformance testing for cyber-physical systems.
//!
//! Two black-box systems, a Model and an Implementation, are driven with the same initial
//! condition and input signal. Their output trajectories are `(T, J, (tau, eps))`-close when every
//! sample of one has a sample of the other with the same jump counter, within `tau` in time and
//! `eps` in value. This crate
//!
//! - checks closeness directly ([`conformance::is_close`]) and computes the tightest `eps` for a
//!   given `tau` (and vice versa),
//! - expresses closeness as an MTL formula whose robustness is positive exactly when the pair is
//!   close ([`conformance::conformance_robustness`]),
//! - searches initial conditions and parametrized inputs for non-conformant pairs by minimizing
//!   that robustness ([`falsify`]),
//! - and bisects for the smallest conformance degree ([`degree`]).

pub mod conformance;
pub mod degree;
pub mod falsify;
pub mod monitor;
pub mod systems;
pub mod tss;

pub use monitor::{Formula, Robustness, RobustnessKind};
pub use tss::{HybridTimestamp, ParallelTrace, TimedStateSequence};
