//! Trust-aware assistance seeking for human-supervised autonomy.
//!
//! A supervisor watches a robot collect objects; the robot either attempts
//! each trial autonomously or hands it over. The supervisor's latent trust
//! modulates whether they rely on the robot or interrupt it. This crate
//! implements:
//!
//! - [`model`]: the domain types, parameter tables, and file formats;
//! - [`iohmm`]: exact filtering, smoothing, Baum-Welch estimation, and
//!   Laplace parameter uncertainty for the trust IOHMM;
//! - [`simulant`]: a seeded closed-loop simulator that stands in for the
//!   human supervisor;
//! - [`solver`]: the belief-MDP reformulation, value iteration, threshold
//!   extraction, and the trust-agnostic baseline;
//! - [`eval`]: Monte Carlo policy comparison, t statistics, and the
//!   survey-mapping curve fits;
//! - [`cli`]: the `trust-pomdp` binary wiring the pipeline together.

pub mod cli;
pub mod eval;
pub mod iohmm;
pub mod model;
pub mod simulant;
pub mod solver;
