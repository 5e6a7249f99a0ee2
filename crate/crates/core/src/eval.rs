//! Monte Carlo policy comparison, test statistics, and the survey-mapping
//! curve fits.

use crate::model::{EnvConfig, ModelParams};
use crate::simulant::{split_seed, EpisodeConfig, RobotPolicy, SimulantError};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} samples per group, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("logistic fit needs at least 3 points with distinct inputs")]
    TooFewPoints,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("belief {belief} outside the invertible range (0, {limit})")]
    OutOfRange { belief: f64, limit: f64 },
    #[error("fitted slope is zero; the inverse mapping is undefined")]
    ZeroSlope,
    #[error(transparent)]
    Simulant(#[from] SimulantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestSummary {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    /// Both samples were constant with different means; `t` is infinite
    /// and `p` is zero.
    pub infinite_t: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Pooled-variance two-sample t-test; two-sided p-value through the
/// regularized incomplete beta function.
pub fn two_sample_t_test(xs: &[f64], ys: &[f64]) -> Result<TTestSummary, EvalError> {
    for sample in [xs, ys] {
        if sample.len() < 2 {
            return Err(EvalError::TooFewSamples {
                need: 2,
                got: sample.len(),
            });
        }
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mx, my) = (mean(xs), mean(ys));
    let df = nx + ny - 2.0;
    let pooled_var = (sum_sq_dev(xs, mx) + sum_sq_dev(ys, my)) / df;
    if pooled_var <= 0.0 {
        // Both samples constant: identical means are indistinguishable,
        // different means are infinitely separated.
        return Ok(if mx == my {
            TTestSummary {
                t: 0.0,
                p: 1.0,
                df,
                infinite_t: false,
            }
        } else {
            TTestSummary {
                t: if mx > my { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                df,
                infinite_t: true,
            }
        });
    }
    let t = (mx - my) / (pooled_var * (1.0 / nx + 1.0 / ny)).sqrt();
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    Ok(TTestSummary {
        t,
        p,
        df,
        infinite_t: false,
    })
}

/// Welch's unequal-variance variant with Welch-Satterthwaite degrees of
/// freedom.
pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<TTestSummary, EvalError> {
    for sample in [xs, ys] {
        if sample.len() < 2 {
            return Err(EvalError::TooFewSamples {
                need: 2,
                got: sample.len(),
            });
        }
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mx, my) = (mean(xs), mean(ys));
    let (vx, vy) = (sum_sq_dev(xs, mx) / (nx - 1.0), sum_sq_dev(ys, my) / (ny - 1.0));
    let se2 = vx / nx + vy / ny;
    if se2 <= 0.0 {
        return Ok(if mx == my {
            TTestSummary {
                t: 0.0,
                p: 1.0,
                df: nx + ny - 2.0,
                infinite_t: false,
            }
        } else {
            TTestSummary {
                t: if mx > my { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                df: nx + ny - 2.0,
                infinite_t: true,
            }
        });
    }
    let df = se2 * se2
        / ((vx / nx) * (vx / nx) / (nx - 1.0) + (vy / ny) * (vy / ny) / (ny - 1.0));
    let t = (mx - my) / se2.sqrt();
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    Ok(TTestSummary {
        t,
        p,
        df,
        infinite_t: false,
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rewards are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Paired-seed Monte Carlo comparison of two policies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub policy_a: String,
    pub policy_b: String,
    pub n_participants: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub samples_a: Vec<f64>,
    pub samples_b: Vec<f64>,
    pub mean_a: f64,
    pub mean_b: f64,
    pub median_a: f64,
    pub median_b: f64,
    pub t: f64,
    pub p: f64,
    pub infinite_t: bool,
}

/// Simulate `n_participants` episodes per policy. Participant `i` uses the
/// episode seed `split_seed(seed, i)` in both arms, so arms face the same
/// complexity sequences; the reported statistic is the pooled two-sample
/// t-test over cumulative rewards.
pub fn monte_carlo_compare(
    params: &ModelParams,
    env: &EnvConfig,
    policy_a: &RobotPolicy,
    policy_b: &RobotPolicy,
    n_participants: usize,
    n_trials: usize,
    seed: u64,
) -> Result<ComparisonReport, EvalError> {
    if n_participants < 2 {
        return Err(EvalError::TooFewSamples {
            need: 2,
            got: n_participants,
        });
    }
    let run_arm = |policy: &RobotPolicy| -> Result<Vec<f64>, SimulantError> {
        (0..n_participants)
            .into_par_iter()
            .map(|i| {
                let cfg = EpisodeConfig::iid(n_trials, split_seed(seed, i as u64));
                let records =
                    crate::simulant::run_episode(params, env, policy, &cfg, i as u64)?;
                Ok(records.iter().map(|r| r.reward as f64).sum())
            })
            .collect()
    };
    let samples_a = run_arm(policy_a)?;
    let samples_b = run_arm(policy_b)?;
    let test = two_sample_t_test(&samples_a, &samples_b)?;
    Ok(ComparisonReport {
        policy_a: policy_a.describe(),
        policy_b: policy_b.describe(),
        n_participants,
        n_trials,
        seed,
        mean_a: mean(&samples_a),
        mean_b: mean(&samples_b),
        median_a: median(&samples_a),
        median_b: median(&samples_b),
        t: test.t,
        p: test.p,
        infinite_t: test.infinite_t,
        samples_a,
        samples_b,
    })
}

/// Least-squares logistic curve `y = L / (1 + exp(-k (r - r0)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub amplitude: f64,
    pub slope: f64,
    pub center: f64,
    pub rss: f64,
    /// All responses were equal; the returned curve is constant.
    #[serde(default)]
    pub flat: bool,
}

/// Coarse search grid preceding Gauss-Newton refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticGrid {
    pub amplitudes: Vec<f64>,
    pub slopes: Vec<f64>,
    pub centers: Vec<f64>,
}

impl Default for LogisticGrid {
    fn default() -> Self {
        let steps = |from: f64, to: f64, step: f64| {
            let n = ((to - from) / step).round() as usize;
            (0..=n).map(|i| from + i as f64 * step).collect::<Vec<_>>()
        };
        LogisticGrid {
            amplitudes: steps(0.5, 1.0, 0.05),
            slopes: steps(0.1, 5.0, 0.1),
            centers: steps(0.0, 10.0, 0.25),
        }
    }
}

fn logistic(amplitude: f64, slope: f64, center: f64, r: f64) -> f64 {
    amplitude / (1.0 + (-slope * (r - center)).exp())
}

fn logistic_rss(points: &[(f64, f64)], amplitude: f64, slope: f64, center: f64) -> f64 {
    points
        .iter()
        .map(|&(r, y)| {
            let d = y - logistic(amplitude, slope, center, r);
            d * d
        })
        .sum()
}

const GAUSS_NEWTON_STEPS: usize = 200;

/// Grid search over `(L, k, r0)` followed by damped Gauss-Newton
/// refinement; returns the best residual sum of squares found.
pub fn fit_logistic(
    points: &[(f64, f64)],
    grid: &LogisticGrid,
) -> Result<LogisticFit, EvalError> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints);
    }
    let mut rs: Vec<f64> = points.iter().map(|&(r, _)| r).collect();
    rs.sort_by(|a, b| a.partial_cmp(b).expect("inputs are finite"));
    rs.dedup();
    if rs.len() < 3 {
        return Err(EvalError::TooFewPoints);
    }

    let first_y = points[0].1;
    if points.iter().all(|&(_, y)| y == first_y) {
        let center = points.iter().map(|&(r, _)| r).sum::<f64>() / points.len() as f64;
        return Ok(LogisticFit {
            amplitude: first_y,
            slope: 0.0,
            center,
            rss: 0.0,
            flat: true,
        });
    }

    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for &amplitude in &grid.amplitudes {
        for &slope in &grid.slopes {
            for &center in &grid.centers {
                let rss = logistic_rss(points, amplitude, slope, center);
                if rss < best.0 {
                    best = (rss, amplitude, slope, center);
                }
            }
        }
    }
    let (grid_rss, mut amplitude, mut slope, mut center) = best;
    let mut rss = grid_rss;

    for _ in 0..GAUSS_NEWTON_STEPS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for &(r, y) in points {
            let s = 1.0 / (1.0 + (-slope * (r - center)).exp());
            let f = amplitude * s;
            let residual = y - f;
            let jac = Vector3::new(
                s,
                amplitude * s * (1.0 - s) * (r - center),
                -amplitude * s * (1.0 - s) * slope,
            );
            jtj += jac * jac.transpose();
            jtr += jac * residual;
        }
        let Some(delta) = jtj.lu().solve(&jtr) else {
            break;
        };
        // step-halving line search
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let candidate = (
                amplitude + scale * delta[0],
                slope + scale * delta[1],
                center + scale * delta[2],
            );
            let candidate_rss = logistic_rss(points, candidate.0, candidate.1, candidate.2);
            if candidate_rss.is_finite() && candidate_rss < rss {
                amplitude = candidate.0;
                slope = candidate.1;
                center = candidate.2;
                rss = candidate_rss;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved || rss < 1e-30 {
            break;
        }
    }

    // keep the refined parameters only while they describe a probability
    // curve; otherwise fall back to the best grid point
    if !(amplitude > 0.0 && amplitude <= 1.0 && slope.is_finite() && center.is_finite()) {
        let (_, a, k, r0) = best;
        return Ok(LogisticFit {
            amplitude: a,
            slope: k,
            center: r0,
            rss: grid_rss,
            flat: false,
        });
    }
    Ok(LogisticFit {
        amplitude,
        slope,
        center,
        rss,
        flat: false,
    })
}

/// Ordinary least squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
}

pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit, EvalError> {
    if points.len() < 2 {
        return Err(EvalError::TooFewSamples {
            need: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean_r = points.iter().map(|&(r, _)| r).sum::<f64>() / n;
    let mean_y = points.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|&(r, _)| (r - mean_r) * (r - mean_r)).sum();
    if sxx == 0.0 {
        return Err(EvalError::DegenerateFit(
            "all inputs are equal; the slope is undetermined".to_string(),
        ));
    }
    let sxy: f64 = points
        .iter()
        .map(|&(r, y)| (r - mean_r) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_r;
    let rss = points
        .iter()
        .map(|&(r, y)| {
            let d = y - (slope * r + intercept);
            d * d
        })
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        rss,
    })
}

/// Invert the fitted logistic: the survey score whose predicted belief is
/// `belief`. Monotone in the belief for positive slopes.
pub fn belief_to_survey(fit: &LogisticFit, belief: f64) -> Result<f64, EvalError> {
    if fit.slope == 0.0 {
        return Err(EvalError::ZeroSlope);
    }
    let limit = fit.amplitude.min(1.0);
    if belief <= 0.0 || belief >= limit {
        return Err(EvalError::OutOfRange { belief, limit });
    }
    Ok(fit.center - (fit.amplitude / belief - 1.0).ln() / fit.slope)
}
