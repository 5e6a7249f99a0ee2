//! Closed-loop generative environment: samples complexity, human actions,
//! task outcomes, experience labels, trust transitions, and rewards from
//! the fitted model, standing in for the human supervisor.
//!
//! Reproducibility contract: every episode owns three ChaCha8 streams
//! derived from its seed with [`split_seed`] — stream 0 draws complexity,
//! stream 1 the robot policy, stream 2 the human/outcome/trust model. A
//! dataset of `n` episodes derives episode `i`'s seed as
//! `split_seed(master_seed, i)`, so parallel simulation equals serial
//! simulation byte for byte.

use crate::iohmm::{filter_step, IohmmError};
use crate::model::{
    reward_for, Complexity, EnvConfig, Experience, HumanAction, ModelParams, RobotAction,
    TrialRecord, TrustState,
};
use crate::solver::Policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulantError {
    #[error("autonomous reliance requires a success outcome")]
    MissingOutcome,
    #[error("inconsistent trial triple: {action} with {human_action} and {experience}")]
    InconsistentTriple {
        action: RobotAction,
        human_action: HumanAction,
        experience: Experience,
    },
    #[error("fixed complexity schedule has {got} entries but the episode runs {expected} trials")]
    ScheduleLength { expected: usize, got: usize },
    #[error("policy belief update failed: {0}")]
    Belief(#[from] IohmmError),
}

/// SplitMix64 finalizer; stable stream derivation for episode and stream
/// indices.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexityMode {
    /// Bernoulli draws with the environment's `p_complex_high`.
    Iid,
    /// A fixed schedule; its length must equal the trial count.
    Fixed(Vec<Complexity>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialTrust {
    /// Draw from the model's initial trust probability.
    Sample,
    Forced(TrustState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_trials: usize,
    pub complexity_mode: ComplexityMode,
    pub initial_trust: InitialTrust,
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn iid(n_trials: usize, seed: u64) -> Self {
        EpisodeConfig {
            n_trials,
            complexity_mode: ComplexityMode::Iid,
            initial_trust: InitialTrust::Sample,
            seed,
        }
    }
}

/// Assistance-seeking policy followed by the simulated robot.
#[derive(Debug, Clone, PartialEq)]
pub enum RobotPolicy {
    /// Assist with a fixed per-complexity probability.
    Static {
        assist_prob_low: f64,
        assist_prob_high: f64,
    },
    /// Follow a solved belief-MDP policy, tracking the filtered belief.
    Threshold(Policy),
    AlwaysAutonomous,
    AlwaysAssist,
}

impl RobotPolicy {
    /// The data-collection protocol: assist with probability 0.10 in low
    /// and 0.33 in high complexity.
    pub fn data_collection() -> Self {
        RobotPolicy::Static {
            assist_prob_low: crate::model::DATA_COLLECTION_ASSIST_LOW,
            assist_prob_high: crate::model::DATA_COLLECTION_ASSIST_HIGH,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RobotPolicy::Static {
                assist_prob_low,
                assist_prob_high,
            } => format!("static:{assist_prob_low},{assist_prob_high}"),
            RobotPolicy::Threshold(policy) => {
                let fmt = |t: Option<f64>| match t {
                    Some(v) => format!("{v:.4}"),
                    None => "none".to_string(),
                };
                format!(
                    "threshold(low={},high={})",
                    fmt(policy.threshold(Complexity::Low)),
                    fmt(policy.threshold(Complexity::High))
                )
            }
            RobotPolicy::AlwaysAutonomous => "always-auto".to_string(),
            RobotPolicy::AlwaysAssist => "always-assist".to_string(),
        }
    }
}

/// Label the supervisor's experience of one trial.
///
/// `autonomous_success` must be present exactly when the robot acted
/// autonomously and the supervisor relied.
pub fn label_experience(
    action: RobotAction,
    human_action: HumanAction,
    complexity: Complexity,
    autonomous_success: Option<bool>,
) -> Result<Experience, SimulantError> {
    match (action, human_action) {
        (RobotAction::Autonomous, HumanAction::Rely) => match autonomous_success {
            Some(true) => Ok(Experience::Reliable),
            Some(false) => Ok(Experience::Faulty),
            None => Err(SimulantError::MissingOutcome),
        },
        (RobotAction::Autonomous, HumanAction::Interrupt) => Ok(Experience::Faulty),
        (RobotAction::SeekAssistance, _) => Ok(match complexity {
            Complexity::Low => Experience::Faulty,
            Complexity::High => Experience::Reliable,
        }),
    }
}

/// Score one trial.
pub fn trial_reward(
    action: RobotAction,
    human_action: HumanAction,
    experience: Experience,
    env: &EnvConfig,
) -> Result<i32, SimulantError> {
    reward_for(action, human_action, experience, env).ok_or(SimulantError::InconsistentTriple {
        action,
        human_action,
        experience,
    })
}

/// Simulate one trial: sample the human action from the observation table,
/// the outcome when the robot runs unassisted, then the trust transition.
///
/// Draw order on `rng`: human action, success (only for relied autonomous
/// attempts), next trust.
#[allow(clippy::too_many_arguments)]
pub fn step(
    params: &ModelParams,
    env: &EnvConfig,
    episode_id: u64,
    t: u32,
    trust: TrustState,
    complexity: Complexity,
    action: RobotAction,
    rng: &mut impl Rng,
) -> (TrialRecord, TrustState) {
    let p_rely = params.observation(trust, complexity, action);
    let human_action = if rng.random::<f64>() < p_rely {
        HumanAction::Rely
    } else {
        HumanAction::Interrupt
    };
    let autonomous_success = if (action, human_action) == (RobotAction::Autonomous, HumanAction::Rely)
    {
        Some(rng.random::<f64>() < env.success_prob(complexity))
    } else {
        None
    };
    let experience = label_experience(action, human_action, complexity, autonomous_success)
        .expect("outcome present exactly when required");
    let reward =
        trial_reward(action, human_action, experience, env).expect("triple is consistent");
    let p_high = params.trust_transition(trust, experience, complexity, action);
    let next_trust = if rng.random::<f64>() < p_high {
        TrustState::High
    } else {
        TrustState::Low
    };
    let record = TrialRecord {
        episode_id,
        t,
        complexity,
        robot_action: action,
        human_action,
        experience,
        reward,
    };
    (record, next_trust)
}

/// Run one closed-loop episode under the given policy.
///
/// Threshold policies act on the filtered belief maintained with the same
/// one-step update as the forward filter, fed by the realized human
/// actions and experiences. The episode-start experience state is
/// `Reliable` (the solved policies do not depend on it).
pub fn run_episode(
    params: &ModelParams,
    env: &EnvConfig,
    policy: &RobotPolicy,
    cfg: &EpisodeConfig,
    episode_id: u64,
) -> Result<Vec<TrialRecord>, SimulantError> {
    if let ComplexityMode::Fixed(schedule) = &cfg.complexity_mode {
        if schedule.len() != cfg.n_trials {
            return Err(SimulantError::ScheduleLength {
                expected: cfg.n_trials,
                got: schedule.len(),
            });
        }
    }
    let mut complexity_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 0));
    let mut policy_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 1));
    let mut model_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 2));

    let mut trust = match cfg.initial_trust {
        InitialTrust::Forced(t) => t,
        InitialTrust::Sample => {
            if model_rng.random::<f64>() < params.initial_trust_high() {
                TrustState::High
            } else {
                TrustState::Low
            }
        }
    };
    let mut belief = params.initial_trust_high();
    let mut experience_state = Experience::Reliable;

    let mut records = Vec::with_capacity(cfg.n_trials);
    for t in 0..cfg.n_trials {
        let complexity = match &cfg.complexity_mode {
            ComplexityMode::Fixed(schedule) => schedule[t],
            ComplexityMode::Iid => {
                if complexity_rng.random::<f64>() < env.p_complex_high {
                    Complexity::High
                } else {
                    Complexity::Low
                }
            }
        };
        let action = match policy {
            RobotPolicy::AlwaysAutonomous => RobotAction::Autonomous,
            RobotPolicy::AlwaysAssist => RobotAction::SeekAssistance,
            RobotPolicy::Static {
                assist_prob_low,
                assist_prob_high,
            } => {
                let p = match complexity {
                    Complexity::Low => *assist_prob_low,
                    Complexity::High => *assist_prob_high,
                };
                if policy_rng.random::<f64>() < p {
                    RobotAction::SeekAssistance
                } else {
                    RobotAction::Autonomous
                }
            }
            RobotPolicy::Threshold(solved) => {
                solved.action_for(belief, experience_state, complexity)
            }
        };
        let (record, next_trust) = step(
            params,
            env,
            episode_id,
            t as u32,
            trust,
            complexity,
            action,
            &mut model_rng,
        );
        if matches!(policy, RobotPolicy::Threshold(_)) {
            let (next_belief, _) = filter_step(params, belief, &record)?;
            belief = next_belief;
            experience_state = record.experience;
        }
        trust = next_trust;
        records.push(record);
    }
    Ok(records)
}

/// Simulate `n_episodes` independent episodes; episode `i` is assigned
/// `episode_id = i` and the seed `split_seed(cfg.seed, i)`.
pub fn simulate_dataset(
    params: &ModelParams,
    env: &EnvConfig,
    policy: &RobotPolicy,
    cfg: &EpisodeConfig,
    n_episodes: usize,
) -> Result<Vec<Vec<TrialRecord>>, SimulantError> {
    (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let episode_cfg = EpisodeConfig {
                seed: split_seed(cfg.seed, i as u64),
                ..cfg.clone()
            };
            run_episode(params, env, policy, &episode_cfg, i as u64)
        })
        .collect()
}
