//! POMDP assembly, belief-MDP discretization, value iteration, and the
//! trust-agnostic baseline.
//!
//! The planning state is `(belief bin, experience, complexity)` with the
//! robot action as the control. Belief propagation between bins uses the
//! same one-step update as the filter, followed by nearest-bin projection.

use crate::iohmm::belief_update;
use crate::model::{
    Complexity, EnvConfig, Experience, HumanAction, ModelParams, RobotAction, TrialRecord,
    TrustState,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("value iteration did not reach tolerance within {max_sweeps} sweeps (last change {last_delta:e})")]
    NonConvergence { max_sweeps: usize, last_delta: f64 },
    #[error("no autonomous trials in {0} complexity")]
    NoData(Complexity),
    #[error("policy file is invalid: {0}")]
    InvalidPolicyFile(String),
}

/// `P(E' = Reliable | o, C, a)`: the experience distribution given the
/// human action, complexity, and robot action.
///
/// Under assistance the experience depends only on the complexity;
/// autonomous attempts succeed at the environment rate when relied upon and
/// are faulty when interrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceModel {
    /// `[o][c][a]`
    table: [[[f64; 2]; 2]; 2],
}

impl ExperienceModel {
    pub fn p_reliable(&self, o: HumanAction, c: Complexity, a: RobotAction) -> f64 {
        self.table[o.index()][c.index()][a.index()]
    }
}

pub fn experience_model(env: &EnvConfig) -> ExperienceModel {
    let mut table = [[[0.0; 2]; 2]; 2];
    for o in HumanAction::ALL {
        for c in Complexity::ALL {
            for a in RobotAction::ALL {
                table[o.index()][c.index()][a.index()] = match (a, c, o) {
                    (RobotAction::Autonomous, _, HumanAction::Rely) => env.success_prob(c),
                    (RobotAction::Autonomous, _, HumanAction::Interrupt) => 0.0,
                    (RobotAction::SeekAssistance, Complexity::Low, _) => 0.0,
                    (RobotAction::SeekAssistance, Complexity::High, _) => 1.0,
                };
            }
        }
    }
    ExperienceModel { table }
}

/// `P(E' = Reliable | T, C, a)`, marginalized over the human action.
pub fn marginal_experience(
    params: &ModelParams,
    em: &ExperienceModel,
    trust: TrustState,
    complexity: Complexity,
    action: RobotAction,
) -> f64 {
    let p_rely = params.observation(trust, complexity, action);
    em.p_reliable(HumanAction::Rely, complexity, action) * p_rely
        + em.p_reliable(HumanAction::Interrupt, complexity, action) * (1.0 - p_rely)
}

/// Expected one-trial reward of the POMDP state `(T, E, C)` under `a`.
/// Seeking assistance earns the assistance reward outright.
pub fn pomdp_reward(
    params: &ModelParams,
    em: &ExperienceModel,
    env: &EnvConfig,
    trust: TrustState,
    complexity: Complexity,
    action: RobotAction,
) -> f64 {
    match action {
        RobotAction::SeekAssistance => env.reward_assist as f64,
        RobotAction::Autonomous => {
            let p_rely = params.observation(trust, complexity, action);
            let p_reliable = em.p_reliable(HumanAction::Rely, complexity, action);
            env.reward_success as f64 * p_reliable * p_rely
                + env.reward_failure as f64 * (1.0 - p_reliable) * p_rely
                + env.reward_interrupt as f64 * (1.0 - p_rely)
        }
    }
}

/// Evenly spaced belief bins over `[0, 1]`, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefGrid {
    n_bins: usize,
}

impl BeliefGrid {
    pub fn uniform(n_bins: usize) -> Self {
        assert!(n_bins >= 2, "a belief grid needs at least the endpoints");
        BeliefGrid { n_bins }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn center(&self, bin: usize) -> f64 {
        bin as f64 / (self.n_bins - 1) as f64
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(|i| self.center(i))
    }

    /// Nearest bin; exact midpoints round up.
    pub fn project(&self, belief: f64) -> usize {
        let scaled = belief.clamp(0.0, 1.0) * (self.n_bins - 1) as f64;
        (scaled.round() as usize).min(self.n_bins - 1)
    }

    /// Split a belief over its two neighboring bins, linearly in the
    /// distance to each center. Nearest-bin rounding here systematically
    /// biases the solved threshold low and does not settle under grid
    /// refinement; the interpolated operator is stable.
    pub fn interpolate(&self, belief: f64) -> [(usize, f64); 2] {
        let scaled = belief.clamp(0.0, 1.0) * (self.n_bins - 1) as f64;
        let lower = (scaled.floor() as usize).min(self.n_bins - 1);
        let upper = (lower + 1).min(self.n_bins - 1);
        let upper_weight = scaled - lower as f64;
        [(lower, 1.0 - upper_weight), (upper, upper_weight)]
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_bins - 1) as f64
    }
}

/// Discretized belief-MDP over `(belief bin, experience, complexity)`.
#[derive(Debug, Clone)]
pub struct BeliefMdp {
    pub grid: BeliefGrid,
    pub discount: f64,
    /// `[state][action]` -> `(next_state, probability)` pairs: one per
    /// `(E', C')` combination and interpolation neighbor. Rows sum to one.
    transitions: Vec<[[(usize, f64); 8]; 2]>,
    /// `[state][action]` expected one-trial reward.
    rewards: Vec<[f64; 2]>,
}

impl BeliefMdp {
    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn state_index(&self, bin: usize, e: Experience, c: Complexity) -> usize {
        (bin * 2 + e.index()) * 2 + c.index()
    }

    pub fn decode(&self, state: usize) -> (usize, Experience, Complexity) {
        let c = Complexity::ALL[state % 2];
        let e = Experience::ALL[(state / 2) % 2];
        (state / 4, e, c)
    }

    pub fn reward(&self, state: usize, action: RobotAction) -> f64 {
        self.rewards[state][action.index()]
    }

    pub fn successors(&self, state: usize, action: RobotAction) -> &[(usize, f64); 8] {
        &self.transitions[state][action.index()]
    }
}

/// Assemble the belief-MDP: experience probabilities are belief-weighted
/// mixtures over trust, next beliefs follow the one-step update per
/// realized experience and spread over the two neighboring bins, and the
/// next complexity is drawn independently.
pub fn build_belief_mdp(params: &ModelParams, env: &EnvConfig, grid: &BeliefGrid) -> BeliefMdp {
    let em = experience_model(env);
    let n_states = grid.n_bins() * 4;
    let mut mdp = BeliefMdp {
        grid: grid.clone(),
        discount: env.discount,
        transitions: vec![[[(0, 0.0); 8]; 2]; n_states],
        rewards: vec![[0.0; 2]; n_states],
    };
    for bin in 0..grid.n_bins() {
        let b = grid.center(bin);
        for e in Experience::ALL {
            for c in Complexity::ALL {
                let state = mdp.state_index(bin, e, c);
                for a in RobotAction::ALL {
                    mdp.rewards[state][a.index()] = b
                        * pomdp_reward(params, &em, env, TrustState::High, c, a)
                        + (1.0 - b) * pomdp_reward(params, &em, env, TrustState::Low, c, a);

                    let p_reliable = b * marginal_experience(params, &em, TrustState::High, c, a)
                        + (1.0 - b) * marginal_experience(params, &em, TrustState::Low, c, a);
                    let mut entry = 0;
                    for e_next in Experience::ALL {
                        let p_e = match e_next {
                            Experience::Reliable => p_reliable,
                            Experience::Faulty => 1.0 - p_reliable,
                        };
                        let spread = grid.interpolate(belief_update(params, b, e_next, c, a));
                        for c_next in Complexity::ALL {
                            let p_c = match c_next {
                                Complexity::High => env.p_complex_high,
                                Complexity::Low => 1.0 - env.p_complex_high,
                            };
                            for (next_bin, weight) in spread {
                                mdp.transitions[state][a.index()][entry] = (
                                    mdp.state_index(next_bin, e_next, c_next),
                                    p_e * p_c * weight,
                                );
                                entry += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    mdp
}

/// Greedy policy over the belief-MDP with its value function and the
/// per-complexity belief thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub grid: BeliefGrid,
    pub discount: f64,
    pub actions: Vec<RobotAction>,
    pub values: Vec<f64>,
    /// Smallest bin center per complexity at which every experience variant
    /// chooses the autonomous action; `None` if there is no such bin.
    pub thresholds: [Option<f64>; 2],
    pub sweeps: usize,
}

impl Policy {
    pub fn state_index(&self, bin: usize, e: Experience, c: Complexity) -> usize {
        (bin * 2 + e.index()) * 2 + c.index()
    }

    pub fn action(&self, bin: usize, e: Experience, c: Complexity) -> RobotAction {
        self.actions[self.state_index(bin, e, c)]
    }

    /// Action for an arbitrary belief, via nearest-bin projection.
    pub fn action_for(&self, belief: f64, e: Experience, c: Complexity) -> RobotAction {
        self.action(self.grid.project(belief), e, c)
    }

    pub fn threshold(&self, c: Complexity) -> Option<f64> {
        self.thresholds[c.index()]
    }
}

fn q_value(mdp: &BeliefMdp, values: &[f64], state: usize, action: RobotAction) -> f64 {
    let future: f64 = mdp
        .successors(state, action)
        .iter()
        .map(|&(next, p)| p * values[next])
        .sum();
    mdp.reward(state, action) + mdp.discount * future
}

/// Greedy action with ties broken toward seeking assistance.
fn greedy_action(mdp: &BeliefMdp, values: &[f64], state: usize) -> RobotAction {
    let q_auto = q_value(mdp, values, state, RobotAction::Autonomous);
    let q_assist = q_value(mdp, values, state, RobotAction::SeekAssistance);
    if q_auto > q_assist {
        RobotAction::Autonomous
    } else {
        RobotAction::SeekAssistance
    }
}

const MAX_SWEEPS: usize = 100_000;

/// Jacobi value iteration to sup-norm tolerance `tol`.
pub fn value_iteration(mdp: &BeliefMdp, tol: f64) -> Result<Policy, SolverError> {
    let n = mdp.n_states();
    let mut values = vec![0.0f64; n];
    let mut sweeps = 0;
    let mut last_delta = f64::INFINITY;
    while sweeps < MAX_SWEEPS {
        let new_values: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|s| {
                RobotAction::ALL
                    .iter()
                    .map(|&a| q_value(mdp, &values, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        last_delta = values
            .iter()
            .zip(&new_values)
            .map(|(old, new)| (new - old).abs())
            .fold(0.0f64, f64::max);
        values = new_values;
        sweeps += 1;
        if last_delta < tol {
            let actions: Vec<RobotAction> =
                (0..n).map(|s| greedy_action(mdp, &values, s)).collect();
            let mut thresholds = [None; 2];
            for c in Complexity::ALL {
                thresholds[c.index()] = (0..mdp.grid.n_bins())
                    .find(|&bin| {
                        Experience::ALL.iter().all(|&e| {
                            actions[mdp.state_index(bin, e, c)] == RobotAction::Autonomous
                        })
                    })
                    .map(|bin| mdp.grid.center(bin));
            }
            return Ok(Policy {
                grid: mdp.grid.clone(),
                discount: mdp.discount,
                actions,
                values,
                thresholds,
                sweeps,
            });
        }
    }
    Err(SolverError::NonConvergence {
        max_sweeps: MAX_SWEEPS,
        last_delta,
    })
}

/// Expected one-trial rewards of the trust-agnostic policy, given the
/// empirical interruption probabilities per complexity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    /// `[complexity]` expected reward of attempting autonomously.
    pub expected_autonomous: [f64; 2],
    /// `[complexity]` expected reward of seeking assistance.
    pub expected_assist: [f64; 2],
    /// Per-complexity best action (assistance on ties).
    pub argmax: [RobotAction; 2],
}

impl BaselineReport {
    pub fn expected(&self, action: RobotAction, c: Complexity) -> f64 {
        match action {
            RobotAction::Autonomous => self.expected_autonomous[c.index()],
            RobotAction::SeekAssistance => self.expected_assist[c.index()],
        }
    }

    pub fn best(&self, c: Complexity) -> RobotAction {
        self.argmax[c.index()]
    }
}

pub fn trust_agnostic_baseline(
    interrupt_prob_low: f64,
    interrupt_prob_high: f64,
    env: &EnvConfig,
) -> BaselineReport {
    let mut expected_autonomous = [0.0; 2];
    let mut expected_assist = [0.0; 2];
    let mut argmax = [RobotAction::SeekAssistance; 2];
    for c in Complexity::ALL {
        let q = match c {
            Complexity::Low => interrupt_prob_low,
            Complexity::High => interrupt_prob_high,
        };
        let p_success = env.success_prob(c);
        let auto = env.reward_success as f64 * (1.0 - q) * p_success
            + env.reward_failure as f64 * (1.0 - q) * (1.0 - p_success)
            + env.reward_interrupt as f64 * q;
        let assist = env.reward_assist as f64;
        expected_autonomous[c.index()] = auto;
        expected_assist[c.index()] = assist;
        argmax[c.index()] = if auto > assist {
            RobotAction::Autonomous
        } else {
            RobotAction::SeekAssistance
        };
    }
    BaselineReport {
        expected_autonomous,
        expected_assist,
        argmax,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterruptEstimate {
    pub q_low: f64,
    pub q_high: f64,
    /// `[complexity]` interruption counts over autonomous trials.
    pub interrupts: [u64; 2],
    /// `[complexity]` autonomous trial counts.
    pub autonomous_trials: [u64; 2],
}

/// Empirical interruption probability per complexity over autonomous trials.
pub fn empirical_interrupt_probs(
    dataset: &[Vec<TrialRecord>],
) -> Result<InterruptEstimate, SolverError> {
    let mut interrupts = [0u64; 2];
    let mut autonomous_trials = [0u64; 2];
    for rec in dataset.iter().flatten() {
        if rec.robot_action == RobotAction::Autonomous {
            autonomous_trials[rec.complexity.index()] += 1;
            if rec.human_action == HumanAction::Interrupt {
                interrupts[rec.complexity.index()] += 1;
            }
        }
    }
    for c in Complexity::ALL {
        if autonomous_trials[c.index()] == 0 {
            return Err(SolverError::NoData(c));
        }
    }
    Ok(InterruptEstimate {
        q_low: interrupts[Complexity::Low.index()] as f64
            / autonomous_trials[Complexity::Low.index()] as f64,
        q_high: interrupts[Complexity::High.index()] as f64
            / autonomous_trials[Complexity::High.index()] as f64,
        interrupts,
        autonomous_trials,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyStateEntry {
    bin: usize,
    belief: f64,
    experience: Experience,
    complexity: Complexity,
    action: RobotAction,
    value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ThresholdEntry {
    low: Option<f64>,
    high: Option<f64>,
}

/// On-disk policy format: grid spec, per-state action and value, and the
/// extracted thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    grid_bins: usize,
    discount: f64,
    sweeps: usize,
    thresholds: ThresholdEntry,
    states: Vec<PolicyStateEntry>,
}

impl PolicyFile {
    pub fn new(policy: &Policy) -> Self {
        let mut states = Vec::with_capacity(policy.actions.len());
        for bin in 0..policy.grid.n_bins() {
            for e in Experience::ALL {
                for c in Complexity::ALL {
                    let idx = policy.state_index(bin, e, c);
                    states.push(PolicyStateEntry {
                        bin,
                        belief: policy.grid.center(bin),
                        experience: e,
                        complexity: c,
                        action: policy.actions[idx],
                        value: policy.values[idx],
                    });
                }
            }
        }
        PolicyFile {
            grid_bins: policy.grid.n_bins(),
            discount: policy.discount,
            sweeps: policy.sweeps,
            thresholds: ThresholdEntry {
                low: policy.thresholds[Complexity::Low.index()],
                high: policy.thresholds[Complexity::High.index()],
            },
            states,
        }
    }

    pub fn into_policy(self) -> Result<Policy, SolverError> {
        if self.grid_bins < 2 {
            return Err(SolverError::InvalidPolicyFile(
                "grid needs at least 2 bins".to_string(),
            ));
        }
        let grid = BeliefGrid::uniform(self.grid_bins);
        let n = self.grid_bins * 4;
        let mut actions = vec![None; n];
        let mut values = vec![0.0; n];
        for entry in &self.states {
            if entry.bin >= self.grid_bins {
                return Err(SolverError::InvalidPolicyFile(format!(
                    "bin {} out of range",
                    entry.bin
                )));
            }
            let idx = (entry.bin * 2 + entry.experience.index()) * 2 + entry.complexity.index();
            if actions[idx].is_some() {
                return Err(SolverError::InvalidPolicyFile(format!(
                    "duplicate state entry for bin {}",
                    entry.bin
                )));
            }
            actions[idx] = Some(entry.action);
            values[idx] = entry.value;
        }
        if actions.iter().any(Option::is_none) {
            return Err(SolverError::InvalidPolicyFile(
                "policy file does not cover every state".to_string(),
            ));
        }
        Ok(Policy {
            grid,
            discount: self.discount,
            actions: actions.into_iter().map(Option::unwrap).collect(),
            values,
            thresholds: [self.thresholds.low, self.thresholds.high],
            sweeps: self.sweeps,
        })
    }
}
