//! Cause assignment for target individuals.
//!
//! The symptom likelihood `P(x_i | y, age, sex)` integrates the factors out
//! by Monte Carlo over `η̃ ~ N(0, I_2K)`. Products of probit terms are summed
//! in log space and averaged with a max-shifted log-sum-exp, and one set of
//! factor draws is shared by all causes for an individual.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VaError};
use crate::math::{log_norm_cdf, log_sum_exp, normalize_log_weights};
use crate::model::{cell_values, CovariateVector, Loadings, ModelParams, Standardizer, N_CELLS};
use crate::samplers::{fill_standard_normal, sample_categorical, RngStream};

/// `r × dim` independent standard normals, row-major.
pub fn draw_factor_samples(r: usize, dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut out = vec![0.0; r * dim];
    fill_standard_normal(&mut out, rng);
    out
}

/// Per-draw log products `Σ_{j observed} ln Φ(±(B_yj·w + Λ̃_yj·η̃_r))`.
pub fn log_products(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
    x_row: &[u8],
    mask_row: &[bool],
    draws: &[f64],
) -> Vec<f64> {
    let k2 = 2 * loadings.n_factors();
    let r = draws.len() / k2;
    let mut terms: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    let mut row = vec![0.0; k2];
    for j in 0..loadings.n_symptoms() {
        if mask_row[j] {
            continue;
        }
        loadings.effective_row(y, j, w, &mut row);
        let sign = if x_row[j] == 1 { 1.0 } else { -1.0 };
        terms.push((sign, loadings.mean(y, j, w), row.clone()));
    }
    (0..r)
        .map(|t| {
            let eta = &draws[t * k2..(t + 1) * k2];
            terms
                .iter()
                .map(|(sign, mean, row)| {
                    let lp = mean + row.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>();
                    log_norm_cdf(sign * lp)
                })
                .sum()
        })
        .collect()
}

/// `ln P̂(x | y, w)` from a fixed set of factor draws.
pub fn log_mc_marginal(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
    x_row: &[u8],
    mask_row: &[bool],
    draws: &[f64],
) -> f64 {
    let logs = log_products(loadings, y, w, x_row, mask_row, draws);
    log_sum_exp(&logs) - (logs.len() as f64).ln()
}

/// Monte Carlo estimate of `P(x | y, w)` with `r` fresh factor draws.
pub fn mc_marginal_likelihood(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
    x_row: &[u8],
    mask_row: &[bool],
    r: usize,
    rng: &mut RngStream,
) -> f64 {
    mc_marginal_with_se(loadings, y, w, x_row, mask_row, r, rng).0
}

/// Estimate and its Monte Carlo standard error.
pub fn mc_marginal_with_se(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
    x_row: &[u8],
    mask_row: &[bool],
    r: usize,
    rng: &mut RngStream,
) -> (f64, f64) {
    let draws = draw_factor_samples(r.max(1), 2 * loadings.n_factors(), rng);
    let logs = log_products(loadings, y, w, x_row, mask_row, &draws);
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (0.0, 0.0);
    }
    let vals: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let (mean, sd) = crate::math::mean_sd(&vals);
    let scale = max.exp();
    (mean * scale, sd / (vals.len() as f64).sqrt() * scale)
}

/// Cause posterior of one individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausePosterior {
    pub probs: Vec<f64>,
    pub label: usize,
    /// The unnormalized posterior vanished for every cause and a uniform
    /// vector was used instead.
    pub fallback: bool,
}

/// Unnormalized `ln [P(x | y, age, sex) P(age, sex | y) P(y)]` for every
/// cause. Missing age or sex is summed out over the compatible demographic
/// cells, each with its own covariates.
pub fn cause_log_weights(
    params: &ModelParams,
    standardizer: &Standardizer,
    x_row: &[u8],
    mask_row: &[bool],
    age: Option<u8>,
    sex: Option<u8>,
    draws: &[f64],
) -> Vec<f64> {
    let cat = &params.categorical;
    let cells: Vec<usize> = (0..N_CELLS)
        .filter(|&c| {
            let (a, s) = cell_values(c);
            age.is_none_or(|v| v == a) && sex.is_none_or(|v| v == s)
        })
        .collect();
    (0..params.n_causes())
        .map(|y| {
            let per_cell: Vec<f64> = cells
                .iter()
                .map(|&c| {
                    let (a, s) = cell_values(c);
                    let w = standardizer.covariates(a, s);
                    log_mc_marginal(&params.loadings, y, &w, x_row, mask_row, draws)
                        + cat.demog[y][c].ln()
                })
                .collect();
            log_sum_exp(&per_cell) + cat.cause_prior[y].ln()
        })
        .collect()
}

/// Normalize log weights into a cause posterior, falling back to uniform.
pub fn posterior_from_log_weights(mut log_w: Vec<f64>) -> (Vec<f64>, bool) {
    if normalize_log_weights(&mut log_w) {
        (log_w, false)
    } else {
        let l = log_w.len();
        (vec![1.0 / l as f64; l], true)
    }
}

/// Posterior over causes for one individual plus a sampled label.
#[allow(clippy::too_many_arguments)]
pub fn predict_cause(
    params: &ModelParams,
    standardizer: &Standardizer,
    x_row: &[u8],
    mask_row: &[bool],
    age: Option<u8>,
    sex: Option<u8>,
    r: usize,
    rng: &mut RngStream,
) -> CausePosterior {
    let draws = draw_factor_samples(r.max(1), 2 * params.n_factors(), rng);
    let log_w = cause_log_weights(params, standardizer, x_row, mask_row, age, sex, &draws);
    let (probs, fallback) = posterior_from_log_weights(log_w);
    if fallback {
        log::warn!("cause posterior vanished for every cause; using uniform");
    }
    let label = sample_categorical(&probs, rng);
    CausePosterior { probs, label, fallback }
}

/// Empirical cause fractions of sampled labels.
pub fn csmf_draw(labels: &[usize], n_causes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(VaError::Domain("cause fractions of an empty target set".into()));
    }
    let mut counts = vec![0usize; n_causes];
    for &l in labels {
        if l >= n_causes {
            return Err(VaError::Domain(format!("label {l} outside {n_causes} causes")));
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{probit_marginal, CategoricalModels, ShrinkagePrecisions};

    fn params(l: usize, p: usize, k: usize) -> ModelParams {
        ModelParams {
            loadings: Loadings::zeros(l, p, k),
            precisions: ShrinkagePrecisions::ones(p),
            categorical: CategoricalModels::uniform(l),
        }
    }

    #[test]
    fn all_missing_gives_empty_product() {
        let l = Loadings::zeros(2, 3, 1);
        let mut rng = RngStream::new(1, 0);
        let w = CovariateVector::standardized(0.0, 0.0);
        let v = mc_marginal_likelihood(&l, 0, &w, &[1, 0, 1], &[true; 3], 50, &mut rng);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn zero_factor_loadings_are_exact_for_any_r() {
        let mut l = Loadings::zeros(1, 1, 2);
        l.b_mut(0, 0).copy_from_slice(&[0.3, -0.8, 0.4]);
        let w = CovariateVector::standardized(0.7, -0.2);
        let exact = probit_marginal(&l, 0, &w, 0);
        for r in [1, 7, 100] {
            let mut rng = RngStream::new(3, r as u64);
            let (v, se) = mc_marginal_with_se(&l, 0, &w, &[1], &[false], r, &mut rng);
            assert!((v - exact).abs() < 1e-14);
            assert!(se.abs() < 1e-14);
        }
    }

    #[test]
    fn single_cause_is_certain() {
        let p = params(1, 2, 1);
        let mut rng = RngStream::new(1, 0);
        let post = predict_cause(&p, &Standardizer::identity(), &[1, 0], &[false, false], Some(0), None, 10, &mut rng);
        assert_eq!(post.probs, vec![1.0]);
        assert_eq!(post.label, 0);
    }

    #[test]
    fn uninformative_inputs_give_uniform_posterior() {
        let mut p = params(3, 2, 1);
        for (t, v) in p.loadings.as_mut_slice().iter_mut().enumerate() {
            *v = (t as f64).sin();
        }
        p.categorical.demog = vec![[0.1, 0.2, 0.3, 0.4]; 3];
        let mut rng = RngStream::new(1, 0);
        let post = predict_cause(&p, &Standardizer::identity(), &[0, 0], &[true, true], None, Some(1), 20, &mut rng);
        for v in &post.probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rescaling_log_weights_does_not_change_posterior() {
        let w = vec![-3.0, -1.5, -7.25];
        let (a, _) = posterior_from_log_weights(w.clone());
        let (b, _) = posterior_from_log_weights(w.iter().map(|v| v - 800.0).collect());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        let (u, fb) = posterior_from_log_weights(vec![f64::NEG_INFINITY; 4]);
        assert!(fb);
        assert_eq!(u, vec![0.25; 4]);
    }

    #[test]
    fn csmf_counts_labels() {
        let v = csmf_draw(&[0, 0, 1], 3).unwrap();
        assert_eq!(v, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(csmf_draw(&[2, 2], 3).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(csmf_draw(&[1, 0, 0], 3).unwrap(), v);
        assert!(csmf_draw(&[], 3).is_err());
        let s: f64 = csmf_draw(&[0, 1, 2, 1, 1, 0, 2], 3).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn many_symptoms_do_not_underflow() {
        let p = 400;
        let mut par = params(2, p, 1);
        for y in 0..2 {
            for j in 0..p {
                par.loadings.b_mut(y, j)[0] = if y == 0 { 3.0 } else { -3.0 };
            }
        }
        let x = vec![1u8; p];
        let m = vec![false; p];
        let draws = draw_factor_samples(50, 2, &mut RngStream::new(2, 0));
        let lw = cause_log_weights(&par, &Standardizer::identity(), &x, &m, Some(0), Some(0), &draws);
        assert!(lw.iter().all(|v| v.is_finite()));
        let (probs, fb) = posterior_from_log_weights(lw);
        assert!(!fb);
        assert!((probs[0] - 1.0).abs() < 1e-12);
    }
}
