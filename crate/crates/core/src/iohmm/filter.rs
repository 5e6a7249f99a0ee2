//! Forward filtering and forward-backward smoothing over one episode.

use super::IohmmError;
use crate::model::{
    Complexity, Experience, HumanAction, ModelParams, RobotAction, TrialRecord, TrustState,
};

/// Filtered belief trajectory of one episode.
///
/// `beliefs[t]` is `P(T_t = High | trials 0..t)`, so the vector has one
/// entry more than the episode (the prior comes first). The log-likelihood
/// is the natural log of the probability of the observed human actions.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTrajectory {
    pub beliefs: Vec<f64>,
    pub log_likelihood: f64,
}

/// One-step belief propagation given the realized experience:
///
/// `b' = P(T'=H | T=H, E', C, a) * b + P(T'=H | T=L, E', C, a) * (1 - b)`
///
/// Affine in `b` and maps `[0, 1]` into `[0, 1]` for any valid tables.
pub fn belief_update(
    params: &ModelParams,
    b: f64,
    experience_next: Experience,
    complexity: Complexity,
    action: RobotAction,
) -> f64 {
    let from_high = params.trust_transition(TrustState::High, experience_next, complexity, action);
    let from_low = params.trust_transition(TrustState::Low, experience_next, complexity, action);
    from_high * b + from_low * (1.0 - b)
}

/// Likelihood of the recorded human action under each trust state,
/// returned as `(low, high)`.
fn observation_likelihoods(params: &ModelParams, rec: &TrialRecord) -> (f64, f64) {
    let p_rely_low = params.observation(TrustState::Low, rec.complexity, rec.robot_action);
    let p_rely_high = params.observation(TrustState::High, rec.complexity, rec.robot_action);
    match rec.human_action {
        HumanAction::Rely => (p_rely_low, p_rely_high),
        HumanAction::Interrupt => (1.0 - p_rely_low, 1.0 - p_rely_high),
    }
}

/// Advance the filtered belief through one recorded trial: reweight by the
/// observation likelihood, renormalize, then propagate with the realized
/// experience. Returns the next belief and the log of the normalizer.
pub fn filter_step(
    params: &ModelParams,
    b: f64,
    rec: &TrialRecord,
) -> Result<(f64, f64), IohmmError> {
    let (like_low, like_high) = observation_likelihoods(params, rec);
    let norm = like_high * b + like_low * (1.0 - b);
    if norm <= 0.0 {
        return Err(IohmmError::ZeroLikelihood {
            episode_id: rec.episode_id,
            t: rec.t,
        });
    }
    let filtered = like_high * b / norm;
    let next = belief_update(
        params,
        filtered,
        rec.experience,
        rec.complexity,
        rec.robot_action,
    );
    Ok((next, norm.ln()))
}

/// Run the exact filter over an episode, starting from the initial trust
/// probability.
pub fn forward_filter(
    params: &ModelParams,
    episode: &[TrialRecord],
) -> Result<BeliefTrajectory, IohmmError> {
    let mut b = params.initial_trust_high();
    let mut beliefs = Vec::with_capacity(episode.len() + 1);
    beliefs.push(b);
    let mut log_likelihood = 0.0;
    for rec in episode {
        let (next, ln_norm) = filter_step(params, b, rec)?;
        log_likelihood += ln_norm;
        b = next;
        beliefs.push(b);
    }
    Ok(BeliefTrajectory {
        beliefs,
        log_likelihood,
    })
}

/// Sum of per-episode log-likelihoods over a dataset.
pub fn log_likelihood(
    params: &ModelParams,
    dataset: &[Vec<TrialRecord>],
) -> Result<f64, IohmmError> {
    let mut total = 0.0;
    for episode in dataset {
        total += forward_filter(params, episode)?.log_likelihood;
    }
    Ok(total)
}

/// Smoothed posteriors of one episode.
///
/// With `n` trials there are `n + 1` trust time points. `gamma[t][T]` is
/// `P(T_t = T | whole episode)`; `xi[t][T][T']` is the pairwise posterior
/// over the transition from time `t` to `t + 1`. Indexing follows
/// `TrustState::index()` (low = 0, high = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub gamma: Vec<[f64; 2]>,
    pub xi: Vec<[[f64; 2]; 2]>,
    pub log_likelihood: f64,
}

/// Scaled forward-backward pass. The terminal trust state has no
/// observation attached; its emission likelihood is one.
pub fn posterior_smoothing(
    params: &ModelParams,
    episode: &[TrialRecord],
) -> Result<Smoothed, IohmmError> {
    let n = episode.len();
    let pi = [
        1.0 - params.initial_trust_high(),
        params.initial_trust_high(),
    ];

    // emission likelihood for time point t (1.0 past the last trial)
    let emit = |t: usize| -> [f64; 2] {
        if t < n {
            let (low, high) = observation_likelihoods(params, &episode[t]);
            [low, high]
        } else {
            [1.0, 1.0]
        }
    };
    // transition matrix applied between time points t and t+1
    let trans = |t: usize, from: usize, to: usize| -> f64 {
        let rec = &episode[t];
        let from_state = TrustState::ALL[from];
        let p_high =
            params.trust_transition(from_state, rec.experience, rec.complexity, rec.robot_action);
        if to == TrustState::High.index() {
            p_high
        } else {
            1.0 - p_high
        }
    };
    let zero_likelihood = |t: usize| -> IohmmError {
        let rec = &episode[t.min(n.saturating_sub(1))];
        IohmmError::ZeroLikelihood {
            episode_id: rec.episode_id,
            t: rec.t,
        }
    };

    // forward pass, normalized per step
    let mut alpha = vec![[0.0f64; 2]; n + 1];
    let mut scale = vec![0.0f64; n + 1];
    let e0 = emit(0);
    for s in 0..2 {
        alpha[0][s] = pi[s] * e0[s];
    }
    scale[0] = alpha[0][0] + alpha[0][1];
    if scale[0] <= 0.0 {
        return Err(zero_likelihood(0));
    }
    for s in 0..2 {
        alpha[0][s] /= scale[0];
    }
    for t in 1..=n {
        let et = emit(t);
        for to in 0..2 {
            let predicted: f64 = (0..2).map(|from| alpha[t - 1][from] * trans(t - 1, from, to)).sum();
            alpha[t][to] = predicted * et[to];
        }
        scale[t] = alpha[t][0] + alpha[t][1];
        if scale[t] <= 0.0 {
            return Err(zero_likelihood(t));
        }
        for s in 0..2 {
            alpha[t][s] /= scale[t];
        }
    }

    // backward pass with the same scaling
    let mut beta = vec![[1.0f64; 2]; n + 1];
    for t in (0..n).rev() {
        let enext = emit(t + 1);
        for from in 0..2 {
            beta[t][from] = (0..2)
                .map(|to| trans(t, from, to) * enext[to] * beta[t + 1][to])
                .sum::<f64>()
                / scale[t + 1];
        }
    }

    let gamma: Vec<[f64; 2]> = (0..=n)
        .map(|t| [alpha[t][0] * beta[t][0], alpha[t][1] * beta[t][1]])
        .collect();
    let xi: Vec<[[f64; 2]; 2]> = (0..n)
        .map(|t| {
            let enext = emit(t + 1);
            let mut pair = [[0.0; 2]; 2];
            for (from, row) in pair.iter_mut().enumerate() {
                for (to, cell) in row.iter_mut().enumerate() {
                    *cell = alpha[t][from] * trans(t, from, to) * enext[to] * beta[t + 1][to]
                        / scale[t + 1];
                }
            }
            pair
        })
        .collect();

    Ok(Smoothed {
        gamma,
        xi,
        log_likelihood: scale.iter().map(|c| c.ln()).sum(),
    })
}
