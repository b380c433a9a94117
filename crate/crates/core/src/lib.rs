//! Hegselmann-Krause consensus dynamics with finite-speed information propagation.
//!
//! Agents observe each other at retarded positions `x_j(t - tau_ij)`, where
//! the delay solves `c tau = |x_i(t) - x_j(t - tau)|`. The crate integrates
//! the resulting state-dependent delay system, provides a Picard reference
//! solver, and audits the invariants of the exact flow along every run.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod delay;
pub mod dynamics;
pub mod error;
pub mod history;
pub mod influence;
pub mod integrator;
pub mod scenarios;
mod vecops;

pub use analysis::{decay_certificate, Auditor, DecayCertificate, DecayRange};
pub use delay::{solve_delay, DelayResult};
pub use dynamics::{rhs, rhs_classical, Model, Point, SystemState};
pub use error::{Error, Result};
pub use history::Trajectory;
pub use influence::InfluenceFunction;
pub use integrator::{integrate, IntegrateOptions, Scheme, SimTrace};
