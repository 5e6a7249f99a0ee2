//! Parameter standard errors from a Laplace approximation at the fitted
//! optimum.
//!
//! The Hessian of the log-likelihood is estimated by finite differences in
//! raw probability space. Standard errors are `sqrt(diag((-H)^{-1}))`;
//! `sqrt(diag(-H))` is also recorded for comparison with reports that use
//! that literal expression.

use super::filter::log_likelihood;
use super::IohmmError;
use crate::model::{
    param_names, Complexity, Experience, ModelParams, RobotAction, TrialRecord, TrustState,
    N_PARAMS,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamUncertainty {
    pub name: String,
    pub estimate: f64,
    /// `sqrt` of the corresponding diagonal entry of `(-H)^{-1}`; absent
    /// for unidentifiable parameters.
    pub std_error: Option<f64>,
    /// The literal `sqrt(diag(-H))` value.
    pub literal_std_error: Option<f64>,
    pub identifiable: bool,
    /// Estimate within two finite-difference steps of 0 or 1; differenced
    /// one-sidedly.
    pub boundary: bool,
    /// Occurrences of the parameter's conditioning context in the dataset.
    pub context_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub params: Vec<ParamUncertainty>,
    /// `-H` was not positive definite over the identifiable block and a
    /// pseudo-inverse was used.
    pub used_pseudo_inverse: bool,
    pub step: f64,
}

impl UncertaintyReport {
    pub fn by_name(&self, name: &str) -> Option<&ParamUncertainty> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Occurrences of each parameter's conditioning context, in canonical
/// parameter order.
fn context_counts(dataset: &[Vec<TrialRecord>]) -> Vec<u64> {
    let mut eca = [[[0u64; 2]; 2]; 2];
    let mut ca = [[0u64; 2]; 2];
    for rec in dataset.iter().flatten() {
        eca[rec.experience.index()][rec.complexity.index()][rec.robot_action.index()] += 1;
        ca[rec.complexity.index()][rec.robot_action.index()] += 1;
    }
    let mut counts = Vec::with_capacity(N_PARAMS);
    counts.push(dataset.len() as u64);
    for _t in TrustState::ALL {
        for e in Experience::ALL {
            for c in Complexity::ALL {
                for a in RobotAction::ALL {
                    counts.push(eca[e.index()][c.index()][a.index()]);
                }
            }
        }
    }
    for _t in TrustState::ALL {
        for c in Complexity::ALL {
            for a in RobotAction::ALL {
                counts.push(ca[c.index()][a.index()]);
            }
        }
    }
    counts
}

/// Offset direction per coordinate: 0 for central differences, +1/-1 for
/// one-sided differences away from the nearest boundary.
fn directions(theta: &[f64], step: f64) -> Vec<i8> {
    theta
        .iter()
        .map(|&x| {
            if x < 2.0 * step {
                1
            } else if x > 1.0 - 2.0 * step {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Estimate parameter uncertainty at `params`, which should be a local
/// maximum of the dataset log-likelihood.
pub fn laplace_uncertainty(
    params: &ModelParams,
    dataset: &[Vec<TrialRecord>],
    step: f64,
) -> Result<UncertaintyReport, IohmmError> {
    if dataset.is_empty() {
        return Err(IohmmError::EmptyDataset);
    }
    let theta = params.to_param_vec();
    let names = param_names();
    let counts = context_counts(dataset);
    let dirs = directions(&theta, step);

    let eval = |offsets: &[(usize, f64)]| -> Result<f64, IohmmError> {
        let mut point = theta.clone();
        for &(i, d) in offsets {
            point[i] += d;
        }
        let perturbed = ModelParams::from_param_vec(&point).expect("length preserved");
        log_likelihood(&perturbed, dataset)
    };
    let f0 = eval(&[])?;

    // Parameters are identifiable only if their conditioning context occurs;
    // rows of the Hessian that come out exactly flat are dropped as well.
    let candidate: Vec<usize> = (0..N_PARAMS).filter(|&i| counts[i] > 0).collect();
    let k = candidate.len();

    // full Hessian over the candidate set, entry by entry
    let entries: Vec<((usize, usize), f64)> = {
        let pairs: Vec<(usize, usize)> = (0..k)
            .flat_map(|ai| (ai..k).map(move |bi| (ai, bi)))
            .collect();
        pairs
            .into_par_iter()
            .map(|(ai, bi)| {
                let i = candidate[ai];
                let j = candidate[bi];
                let (di, dj) = (dirs[i], dirs[j]);
                let h = step;
                let value = if ai == bi {
                    if di == 0 {
                        (eval(&[(i, h)])? - 2.0 * f0 + eval(&[(i, -h)])?) / (h * h)
                    } else {
                        let d = di as f64;
                        (f0 - 2.0 * eval(&[(i, d * h)])? + eval(&[(i, 2.0 * d * h)])?) / (h * h)
                    }
                } else {
                    match (di, dj) {
                        (0, 0) => {
                            (eval(&[(i, h), (j, h)])? - eval(&[(i, h), (j, -h)])?
                                - eval(&[(i, -h), (j, h)])?
                                + eval(&[(i, -h), (j, -h)])?)
                                / (4.0 * h * h)
                        }
                        (d, 0) => {
                            let d = d as f64;
                            (eval(&[(i, d * h), (j, h)])? - eval(&[(i, d * h), (j, -h)])?
                                - eval(&[(j, h)])?
                                + eval(&[(j, -h)])?)
                                / (2.0 * d * h * h)
                        }
                        (0, d) => {
                            let d = d as f64;
                            (eval(&[(j, d * h), (i, h)])? - eval(&[(j, d * h), (i, -h)])?
                                - eval(&[(i, h)])?
                                + eval(&[(i, -h)])?)
                                / (2.0 * d * h * h)
                        }
                        (da, db) => {
                            let (da, db) = (da as f64, db as f64);
                            (eval(&[(i, da * h), (j, db * h)])? - eval(&[(i, da * h)])?
                                - eval(&[(j, db * h)])?
                                + f0)
                                / (da * db * h * h)
                        }
                    }
                };
                Ok(((ai, bi), value))
            })
            .collect::<Result<Vec<_>, IohmmError>>()?
    };
    let mut hessian = DMatrix::<f64>::zeros(k, k);
    for ((ai, bi), value) in entries {
        hessian[(ai, bi)] = value;
        hessian[(bi, ai)] = value;
    }

    // drop flat rows: zero curvature means the data carries no information
    let scale = hessian.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let kept: Vec<usize> = (0..k)
        .filter(|&ai| (0..k).any(|bi| hessian[(ai, bi)].abs() > 1e-12 * scale))
        .collect();

    let m = kept.len();
    let mut neg_h = DMatrix::<f64>::zeros(m, m);
    for (r, &ai) in kept.iter().enumerate() {
        for (s, &bi) in kept.iter().enumerate() {
            neg_h[(r, s)] = -hessian[(ai, bi)];
        }
    }
    let (covariance, used_pseudo_inverse) =
        match nalgebra::linalg::Cholesky::new(neg_h.clone()) {
            Some(chol) => (chol.inverse(), false),
            None => (
                neg_h
                    .pseudo_inverse(1e-10)
                    .unwrap_or_else(|_| DMatrix::zeros(m, m)),
                true,
            ),
        };

    let mut std_errors: Vec<Option<f64>> = vec![None; N_PARAMS];
    let mut literal: Vec<Option<f64>> = vec![None; N_PARAMS];
    let mut identifiable = vec![false; N_PARAMS];
    for (r, &ai) in kept.iter().enumerate() {
        let i = candidate[ai];
        identifiable[i] = true;
        std_errors[i] = Some(covariance[(r, r)].max(0.0).sqrt());
        literal[i] = Some((-hessian[(ai, ai)]).max(0.0).sqrt());
    }

    let rows = (0..N_PARAMS)
        .map(|i| ParamUncertainty {
            name: names[i].clone(),
            estimate: theta[i],
            std_error: std_errors[i],
            literal_std_error: literal[i],
            identifiable: identifiable[i],
            boundary: dirs[i] != 0,
            context_count: counts[i],
        })
        .collect();
    Ok(UncertaintyReport {
        params: rows,
        used_pseudo_inverse,
        step,
    })
}
