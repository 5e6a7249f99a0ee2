//! Shared test helpers: an exhaustive trust-path oracle for filtering and
//! smoothing, and generators for random valid parameters and episodes.
//!
//! The oracle sums over every trust sequence directly and never touches
//! the library's forward-backward code path.

use rand::Rng;
use trust_pomdp::model::{
    reward_for, Complexity, EnvConfig, Experience, HumanAction, ModelParams, RobotAction,
    TrialRecord, TrustState,
};

pub struct OracleResult {
    pub log_likelihood: f64,
    /// `P(T_t = High | trials 0..t-1)`, one entry per time point.
    pub predicted_beliefs: Vec<f64>,
    /// `P(T_t | whole episode)`, indexed by `TrustState::index()`.
    pub gamma: Vec<[f64; 2]>,
    /// `P(T_t, T_{t+1} | whole episode)`.
    pub xi: Vec<[[f64; 2]; 2]>,
}

fn observation_likelihood(params: &ModelParams, rec: &TrialRecord, trust: TrustState) -> f64 {
    let p_rely = params.observation(trust, rec.complexity, rec.robot_action);
    match rec.human_action {
        HumanAction::Rely => p_rely,
        HumanAction::Interrupt => 1.0 - p_rely,
    }
}

fn transition(params: &ModelParams, rec: &TrialRecord, from: TrustState, to: TrustState) -> f64 {
    let p_high = params.trust_transition(from, rec.experience, rec.complexity, rec.robot_action);
    match to {
        TrustState::High => p_high,
        TrustState::Low => 1.0 - p_high,
    }
}

fn prior(params: &ModelParams, t: TrustState) -> f64 {
    match t {
        TrustState::High => params.initial_trust_high(),
        TrustState::Low => 1.0 - params.initial_trust_high(),
    }
}

/// Weight of the trust path `states` over the first `upto` trials.
fn path_weight(
    params: &ModelParams,
    episode: &[TrialRecord],
    states: &[TrustState],
    upto: usize,
) -> f64 {
    let mut w = prior(params, states[0]);
    for t in 0..upto {
        w *= observation_likelihood(params, &episode[t], states[t]);
        w *= transition(params, &episode[t], states[t], states[t + 1]);
    }
    w
}

fn paths(len: usize) -> impl Iterator<Item = Vec<TrustState>> {
    (0..(1usize << len)).map(move |bits| {
        (0..len)
            .map(|i| {
                if bits & (1 << i) != 0 {
                    TrustState::High
                } else {
                    TrustState::Low
                }
            })
            .collect()
    })
}

/// Exhaustive enumeration over all `2^(n+1)` trust paths.
pub fn enumerate_episode(params: &ModelParams, episode: &[TrialRecord]) -> OracleResult {
    let n = episode.len();

    // full-episode posteriors
    let mut total = 0.0;
    let mut gamma = vec![[0.0f64; 2]; n + 1];
    let mut xi = vec![[[0.0f64; 2]; 2]; n];
    for path in paths(n + 1) {
        let w = path_weight(params, episode, &path, n);
        total += w;
        for (t, &state) in path.iter().enumerate() {
            gamma[t][state.index()] += w;
        }
        for t in 0..n {
            xi[t][path[t].index()][path[t + 1].index()] += w;
        }
    }
    for g in &mut gamma {
        g[0] /= total;
        g[1] /= total;
    }
    for pair in &mut xi {
        for row in pair.iter_mut() {
            for cell in row.iter_mut() {
                *cell /= total;
            }
        }
    }

    // predicted beliefs use only the factors before each time point
    let mut predicted_beliefs = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let mut mass = 0.0;
        let mut high = 0.0;
        for path in paths(t + 1) {
            let w = path_weight(params, episode, &path, t);
            mass += w;
            if path[t] == TrustState::High {
                high += w;
            }
        }
        predicted_beliefs.push(high / mass);
    }

    OracleResult {
        log_likelihood: total.ln(),
        predicted_beliefs,
        gamma,
        xi,
    }
}

/// Valid random tables: interior observation probabilities (so no zero
/// likelihoods), arbitrary transitions, assistance observations clamped.
pub fn random_params(rng: &mut impl Rng) -> ModelParams {
    let initial = rng.random_range(0.05..=0.95);
    let mut tt = [[[[0.0; 2]; 2]; 2]; 2];
    for row in tt.iter_mut().flatten().flatten() {
        for cell in row.iter_mut() {
            *cell = rng.random_range(0.0..=1.0);
        }
    }
    let mut obs = [[[0.0; 2]; 2]; 2];
    for t in 0..2 {
        for c in 0..2 {
            obs[t][c][RobotAction::Autonomous.index()] = rng.random_range(0.05..=0.95);
        }
    }
    ModelParams::new(
        initial,
        |t, e, c, a| tt[t.index()][e.index()][c.index()][a.index()],
        |t, c, a| obs[t.index()][c.index()][a.index()],
    )
}

/// A random episode satisfying every trial-record invariant; it need not
/// be probable under any particular parameters.
pub fn random_episode(rng: &mut impl Rng, episode_id: u64, len: usize) -> Vec<TrialRecord> {
    let env = EnvConfig::reference();
    (0..len as u32)
        .map(|t| {
            let complexity = if rng.random::<f64>() < 0.5 {
                Complexity::Low
            } else {
                Complexity::High
            };
            let robot_action = if rng.random::<f64>() < 0.5 {
                RobotAction::Autonomous
            } else {
                RobotAction::SeekAssistance
            };
            let human_action =
                if robot_action == RobotAction::SeekAssistance || rng.random::<f64>() < 0.5 {
                    HumanAction::Interrupt
                } else {
                    HumanAction::Rely
                };
            let experience = match (robot_action, human_action, complexity) {
                (RobotAction::Autonomous, HumanAction::Rely, _) => {
                    if rng.random::<f64>() < 0.5 {
                        Experience::Reliable
                    } else {
                        Experience::Faulty
                    }
                }
                (RobotAction::Autonomous, HumanAction::Interrupt, _) => Experience::Faulty,
                (RobotAction::SeekAssistance, _, Complexity::Low) => Experience::Faulty,
                (RobotAction::SeekAssistance, _, Complexity::High) => Experience::Reliable,
            };
            TrialRecord {
                episode_id,
                t,
                complexity,
                robot_action,
                human_action,
                experience,
                reward: reward_for(robot_action, human_action, experience, &env)
                    .expect("generated triples are consistent"),
            }
        })
        .collect()
}
