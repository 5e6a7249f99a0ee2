//! Inference and learning for the trust IOHMM.
//!
//! The hidden chain is the binary trust state; inputs are the robot action,
//! trial complexity, and the realized experience; the output is the human
//! action. Filtering conditions on the output sequence, smoothing and the
//! EM fit use a scaled forward-backward pass, and parameter uncertainty
//! comes from a finite-difference Laplace approximation at the fitted
//! optimum.

mod em;
mod filter;
mod laplace;

pub use em::{baum_welch_fit, FitConfig, FitDiagnostics, RestartSummary};
pub use filter::{
    belief_update, filter_step, forward_filter, log_likelihood, posterior_smoothing,
    BeliefTrajectory, Smoothed,
};
pub use laplace::{laplace_uncertainty, ParamUncertainty, UncertaintyReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IohmmError {
    /// The observed human action has probability zero under both trust
    /// states: the data cannot have been produced by these parameters.
    #[error("episode {episode_id} trial {t}: observation has zero likelihood under both trust states")]
    ZeroLikelihood { episode_id: u64, t: u32 },
    #[error("dataset contains no episodes")]
    EmptyDataset,
    #[error("initial parameters are invalid: {0}")]
    InvalidInit(String),
}
