//! Multi-episode Baum-Welch estimation of the IOHMM tables.

use super::filter::posterior_smoothing;
use super::IohmmError;
use crate::model::{
    observation_param_name, transition_param_name, validate_params, Complexity, Experience,
    HumanAction, ModelParams, RobotAction, TrialRecord, TrustState,
};
use crate::simulant::split_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Absolute log-likelihood change below which an EM run stops.
    pub tol: f64,
    pub seed: u64,
    /// Restart 0 starts from the supplied initial parameters; later
    /// restarts draw tables uniformly in `[0.05, 0.95]`.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartSummary {
    pub restart_index: usize,
    pub final_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    /// M-step updates applied by the winning restart.
    pub iterations: usize,
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    pub restart_index: usize,
    pub restarts: Vec<RestartSummary>,
    /// `(complexity, action)` contexts absent from the dataset; a nonempty
    /// list means parts of the model are unidentifiable.
    pub missing_contexts: Vec<String>,
    /// Parameters whose conditioning context never occurs; they keep their
    /// initialization value.
    pub unidentifiable: Vec<String>,
}

/// Expected sufficient statistics of one episode.
#[derive(Clone)]
struct EpisodeStats {
    sort_key: (u64, usize),
    gamma0_high: f64,
    trans_num: [[[[f64; 2]; 2]; 2]; 2],
    trans_den: [[[[f64; 2]; 2]; 2]; 2],
    obs_rely: [[[f64; 2]; 2]; 2],
    obs_total: [[[f64; 2]; 2]; 2],
    log_likelihood: f64,
}

fn episode_stats(
    params: &ModelParams,
    index: usize,
    episode: &[TrialRecord],
) -> Result<EpisodeStats, IohmmError> {
    let smoothed = posterior_smoothing(params, episode)?;
    let mut stats = EpisodeStats {
        sort_key: (
            episode.first().map(|r| r.episode_id).unwrap_or(u64::MAX),
            index,
        ),
        gamma0_high: smoothed.gamma[0][TrustState::High.index()],
        trans_num: [[[[0.0; 2]; 2]; 2]; 2],
        trans_den: [[[[0.0; 2]; 2]; 2]; 2],
        obs_rely: [[[0.0; 2]; 2]; 2],
        obs_total: [[[0.0; 2]; 2]; 2],
        log_likelihood: smoothed.log_likelihood,
    };
    for (t, rec) in episode.iter().enumerate() {
        let (e, c, a) = (
            rec.experience.index(),
            rec.complexity.index(),
            rec.robot_action.index(),
        );
        for from in 0..2 {
            let to_high = smoothed.xi[t][from][TrustState::High.index()];
            let total = smoothed.xi[t][from][0] + smoothed.xi[t][from][1];
            stats.trans_num[from][e][c][a] += to_high;
            stats.trans_den[from][e][c][a] += total;
        }
        for trust in 0..2 {
            let weight = smoothed.gamma[t][trust];
            stats.obs_total[trust][c][a] += weight;
            if rec.human_action == HumanAction::Rely {
                stats.obs_rely[trust][c][a] += weight;
            }
        }
    }
    Ok(stats)
}

/// One EM pass over the whole dataset: smoothed statistics per episode,
/// reduced in a canonical order so the result does not depend on episode
/// order or on how the parallel E-step was scheduled.
fn e_step(
    params: &ModelParams,
    dataset: &[Vec<TrialRecord>],
) -> Result<(EpisodeStats, f64), IohmmError> {
    let mut per_episode = dataset
        .par_iter()
        .enumerate()
        .map(|(i, ep)| episode_stats(params, i, ep))
        .collect::<Result<Vec<_>, _>>()?;
    per_episode.sort_by_key(|s| s.sort_key);

    let mut total = EpisodeStats {
        sort_key: (0, 0),
        gamma0_high: 0.0,
        trans_num: [[[[0.0; 2]; 2]; 2]; 2],
        trans_den: [[[[0.0; 2]; 2]; 2]; 2],
        obs_rely: [[[0.0; 2]; 2]; 2],
        obs_total: [[[0.0; 2]; 2]; 2],
        log_likelihood: 0.0,
    };
    for s in &per_episode {
        total.gamma0_high += s.gamma0_high;
        total.log_likelihood += s.log_likelihood;
        for t in 0..2 {
            for e in 0..2 {
                for c in 0..2 {
                    for a in 0..2 {
                        total.trans_num[t][e][c][a] += s.trans_num[t][e][c][a];
                        total.trans_den[t][e][c][a] += s.trans_den[t][e][c][a];
                    }
                }
            }
            for c in 0..2 {
                for a in 0..2 {
                    total.obs_rely[t][c][a] += s.obs_rely[t][c][a];
                    total.obs_total[t][c][a] += s.obs_total[t][c][a];
                }
            }
        }
    }
    let ll = total.log_likelihood;
    Ok((total, ll))
}

/// Re-estimate the tables from expected counts. Contexts with zero
/// expected counts keep the previous iterate's value; the assistance
/// observation entries are clamped to zero afterwards.
fn m_step(previous: &ModelParams, stats: &EpisodeStats, n_episodes: usize) -> ModelParams {
    let initial = stats.gamma0_high / n_episodes as f64;
    let params = ModelParams::new(
        initial,
        |t, e, c, a| {
            let den = stats.trans_den[t.index()][e.index()][c.index()][a.index()];
            if den > 0.0 {
                stats.trans_num[t.index()][e.index()][c.index()][a.index()] / den
            } else {
                previous.trust_transition(t, e, c, a)
            }
        },
        |t, c, a| {
            let den = stats.obs_total[t.index()][c.index()][a.index()];
            if den > 0.0 {
                stats.obs_rely[t.index()][c.index()][a.index()] / den
            } else {
                previous.observation(t, c, a)
            }
        },
    );
    params.with_assist_observation_clamped()
}

struct EmRun {
    params: ModelParams,
    trace: Vec<f64>,
    converged: bool,
}

fn em_run(
    dataset: &[Vec<TrialRecord>],
    init: &ModelParams,
    max_iters: usize,
    tol: f64,
) -> Result<EmRun, IohmmError> {
    let mut params = init.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    loop {
        let (stats, ll) = e_step(&params, dataset)?;
        if let Some(&previous) = trace.last() {
            trace.push(ll);
            if (ll - previous).abs() < tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if trace.len() > max_iters {
            break;
        }
        params = m_step(&params, &stats, dataset.len());
    }
    Ok(EmRun {
        params,
        trace,
        converged,
    })
}

fn random_init(seed: u64, restart: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, restart as u64));
    let initial = rng.random_range(0.05..=0.95);
    let mut tt = [[[[0.0; 2]; 2]; 2]; 2];
    for t in 0..2 {
        for e in 0..2 {
            for c in 0..2 {
                for a in 0..2 {
                    tt[t][e][c][a] = rng.random_range(0.05..=0.95);
                }
            }
        }
    }
    let mut obs = [[[0.0; 2]; 2]; 2];
    for t in 0..2 {
        for c in 0..2 {
            for a in 0..2 {
                obs[t][c][a] = rng.random_range(0.05..=0.95);
            }
        }
    }
    ModelParams::new(
        initial,
        |t, e, c, a| tt[t.index()][e.index()][c.index()][a.index()],
        |t, c, a| obs[t.index()][c.index()][a.index()],
    )
    .with_assist_observation_clamped()
}

/// Swap the trust labels if the fitted "high" state relies less than the
/// fitted "low" state under autonomous operation. The two labels are
/// exchangeable in the likelihood; this pins the reporting convention.
fn canonicalize_labels(params: ModelParams) -> ModelParams {
    let reliance = |t: TrustState| -> f64 {
        Complexity::ALL
            .iter()
            .map(|&c| params.observation(t, c, RobotAction::Autonomous))
            .sum()
    };
    if reliance(TrustState::High) < reliance(TrustState::Low) {
        params.relabeled_swapped()
    } else {
        params
    }
}

fn dataset_context_flags(dataset: &[Vec<TrialRecord>]) -> (Vec<String>, Vec<String>) {
    let mut ca_counts = [[0u64; 2]; 2];
    let mut eca_counts = [[[0u64; 2]; 2]; 2];
    for rec in dataset.iter().flatten() {
        ca_counts[rec.complexity.index()][rec.robot_action.index()] += 1;
        eca_counts[rec.experience.index()][rec.complexity.index()][rec.robot_action.index()] += 1;
    }
    let mut missing = Vec::new();
    for c in Complexity::ALL {
        for a in RobotAction::ALL {
            if ca_counts[c.index()][a.index()] == 0 {
                missing.push(format!("c={c},a={a}"));
            }
        }
    }
    let mut unidentifiable = Vec::new();
    for e in Experience::ALL {
        for c in Complexity::ALL {
            for a in RobotAction::ALL {
                if eca_counts[e.index()][c.index()][a.index()] == 0 {
                    for t in TrustState::ALL {
                        unidentifiable.push(transition_param_name(t, e, c, a));
                    }
                }
            }
        }
    }
    for c in Complexity::ALL {
        for a in RobotAction::ALL {
            if ca_counts[c.index()][a.index()] == 0 {
                for t in TrustState::ALL {
                    unidentifiable.push(observation_param_name(t, c, a));
                }
            }
        }
    }
    (missing, unidentifiable)
}

/// Fit the IOHMM by expectation maximization with random restarts,
/// returning the highest-likelihood fit and its diagnostics.
pub fn baum_welch_fit(
    dataset: &[Vec<TrialRecord>],
    init: &ModelParams,
    config: &FitConfig,
) -> Result<(ModelParams, FitDiagnostics), IohmmError> {
    if dataset.is_empty() {
        return Err(IohmmError::EmptyDataset);
    }
    let violations = validate_params(init);
    if !violations.is_empty() {
        return Err(IohmmError::InvalidInit(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }

    let n_restarts = config.restarts.max(1);
    let runs = (0..n_restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                init.clone()
            } else {
                random_init(config.seed, r)
            };
            em_run(dataset, &start, config.max_iters, config.tol)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let restarts: Vec<RestartSummary> = runs
        .iter()
        .enumerate()
        .map(|(i, run)| RestartSummary {
            restart_index: i,
            final_log_likelihood: *run.trace.last().expect("trace is never empty"),
            iterations: run.trace.len() - 1,
            converged: run.converged,
        })
        .collect();
    let best_index = restarts
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.final_log_likelihood
                .partial_cmp(&b.final_log_likelihood)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    let best = &runs[best_index];

    let (missing_contexts, unidentifiable) = dataset_context_flags(dataset);
    let diagnostics = FitDiagnostics {
        iterations: best.trace.len() - 1,
        log_likelihood_trace: best.trace.clone(),
        converged: best.converged,
        restart_index: best_index,
        restarts,
        missing_contexts,
        unidentifiable,
    };
    Ok((canonicalize_labels(best.params.clone()), diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EnvConfig;
    use crate::simulant::{
        simulate_dataset, ComplexityMode, EpisodeConfig, InitialTrust, RobotPolicy,
    };

    fn small_dataset(seed: u64, episodes: usize, trials: usize) -> Vec<Vec<TrialRecord>> {
        simulate_dataset(
            &ModelParams::reference(),
            &EnvConfig::reference(),
            &RobotPolicy::data_collection(),
            &EpisodeConfig {
                n_trials: trials,
                complexity_mode: ComplexityMode::Iid,
                initial_trust: InitialTrust::Sample,
                seed,
            },
            episodes,
        )
        .unwrap()
    }

    #[test]
    fn trace_is_monotone_from_truth() {
        let dataset = small_dataset(11, 1, 60);
        let (_, diag) = baum_welch_fit(
            &dataset,
            &ModelParams::reference(),
            &FitConfig {
                restarts: 1,
                max_iters: 50,
                ..FitConfig::default()
            },
        )
        .unwrap();
        for pair in diag.log_likelihood_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "trace decreased: {pair:?}");
        }
    }

    #[test]
    fn restart_selection_takes_the_best() {
        let dataset = small_dataset(3, 4, 40);
        let (_, diag) = baum_welch_fit(
            &dataset,
            &ModelParams::reference(),
            &FitConfig {
                restarts: 2,
                max_iters: 40,
                seed: 5,
                ..FitConfig::default()
            },
        )
        .unwrap();
        let best = diag.restarts[diag.restart_index].final_log_likelihood;
        for r in &diag.restarts {
            assert!(best >= r.final_log_likelihood);
        }
        assert_eq!(
            diag.log_likelihood_trace.last().copied().unwrap(),
            best
        );
    }

    #[test]
    fn episode_order_does_not_change_the_fit() {
        let mut dataset = small_dataset(17, 5, 30);
        let config = FitConfig {
            restarts: 1,
            max_iters: 30,
            ..FitConfig::default()
        };
        let (fit_a, _) = baum_welch_fit(&dataset, &ModelParams::reference(), &config).unwrap();
        dataset.reverse();
        let (fit_b, _) = baum_welch_fit(&dataset, &ModelParams::reference(), &config).unwrap();
        assert_eq!(fit_a.to_param_vec(), fit_b.to_param_vec());
    }

    #[test]
    fn missing_context_is_reported() {
        // All-assist data never exercises autonomous contexts.
        let dataset = simulate_dataset(
            &ModelParams::reference(),
            &EnvConfig::reference(),
            &RobotPolicy::AlwaysAssist,
            &EpisodeConfig {
                n_trials: 10,
                complexity_mode: ComplexityMode::Iid,
                initial_trust: InitialTrust::Sample,
                seed: 2,
            },
            3,
        )
        .unwrap();
        let (_, diag) = baum_welch_fit(
            &dataset,
            &ModelParams::reference(),
            &FitConfig {
                restarts: 1,
                max_iters: 5,
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert!(diag
            .missing_contexts
            .iter()
            .any(|c| c.contains("a=auto")));
        assert!(diag
            .unidentifiable
            .iter()
            .any(|p| p.starts_with("obs.") && p.ends_with(".auto")));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let err = baum_welch_fit(&[], &ModelParams::reference(), &FitConfig::default());
        assert!(matches!(err, Err(IohmmError::EmptyDataset)));
    }
}
