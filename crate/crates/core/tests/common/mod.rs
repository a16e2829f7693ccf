//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vafactor_core::data::{Record, Split, VaDataset};
use vafactor_core::gibbs::{GibbsSampler, ModelState};
use vafactor_core::math::norm_cdf;
use vafactor_core::samplers::RngStream;

/// Small random dataset; `miss` is the MCAR rate for symptoms, `demog_miss`
/// for age and sex. Every cause gets at least one training row.
pub fn random_dataset(
    n_train: usize,
    n_target: usize,
    p: usize,
    l: usize,
    miss: f64,
    demog_miss: f64,
    seed: u64,
) -> VaDataset {
    let mut rng = RngStream::new(seed, 99);
    let mut records = Vec::new();
    for i in 0..n_train + n_target {
        let split = if i < n_train { Split::Training } else { Split::Target };
        let cause = if i < l { i } else { (rng.open_uniform() * l as f64) as usize % l };
        let mut bit = |prob_missing: f64| {
            if rng.open_uniform() < prob_missing {
                None
            } else {
                Some(u8::from(rng.open_uniform() < 0.5))
            }
        };
        let symptoms = (0..p).map(|_| bit(miss)).collect();
        records.push(Record {
            id: format!("i{i}"),
            symptoms,
            age: bit(demog_miss),
            sex: bit(demog_miss),
            cause: Some(cause),
            split,
        });
    }
    VaDataset::new(
        (0..p).map(|j| format!("s{j}")).collect(),
        (0..l).map(|y| format!("c{y}")).collect(),
        records,
    )
    .unwrap()
}

/// Sampler state with every continuous quantity set to arbitrary values.
pub fn scrambled_state(sampler: &GibbsSampler<'_>, data: &VaDataset, seed: u64) -> ModelState {
    let mut st = sampler.initial_state().unwrap();
    let mut rng = RngStream::new(seed, 7);
    for v in st.params.loadings.as_mut_slice() {
        *v = 0.7 * rng.standard_normal();
    }
    for v in st.latent.eta_tilde.iter_mut() {
        *v = rng.standard_normal();
    }
    for i in 0..data.n() {
        let (x, m) = (data.x_row(i).to_vec(), data.mask_row(i).to_vec());
        for (j, z) in st.latent.z_row_mut(i).iter_mut().enumerate() {
            let mag = 0.05 + rng.open_uniform() * 2.0;
            *z = if m[j] { 0.0 } else if x[j] == 1 { mag } else { -mag };
        }
    }
    let pr = &mut st.params.precisions;
    for v in pr.phi_b.iter_mut().flatten().chain(pr.phi_lambda.iter_mut()).chain(pr.phi_c.iter_mut().flatten()) {
        *v = 0.2 + 2.0 * rng.open_uniform();
    }
    for row in st.params.categorical.demog.iter_mut() {
        let raw: Vec<f64> = (0..4).map(|_| 0.1 + rng.open_uniform()).collect();
        let s: f64 = raw.iter().sum();
        for (c, r) in row.iter_mut().zip(raw) {
            *c = r / s;
        }
    }
    st
}

/// Design row written out term by term:
/// `(1, age, sex, η_1..η_K, γ_1..γ_K, age·γ, sex·γ)`.
pub fn oracle_design(state: &ModelState, i: usize, k: usize) -> Vec<f64> {
    let w = state.covariates[i].w();
    let eta = state.latent.eta(i);
    let (e, g) = (&eta[..k], &eta[k..]);
    let mut a = vec![1.0, w[1], w[2]];
    a.extend_from_slice(e);
    a.extend_from_slice(g);
    a.extend(g.iter().map(|v| w[1] * v));
    a.extend(g.iter().map(|v| w[2] * v));
    a
}

/// Prior precision diagonal written out from the shrinkage parameters.
pub fn oracle_prior_diag(state: &ModelState, j: usize, k: usize) -> Vec<f64> {
    let pr = &state.params.precisions;
    let mut d = pr.phi_b[j].to_vec();
    d.extend(vec![pr.phi_lambda[j]; k]);
    for q in 0..3 {
        d.extend(vec![pr.phi_c[j][q]; k]);
    }
    d
}

/// Generalized-least-squares posterior of `β_yj` via an explicit LU inverse:
/// `Σ* = (A'A + Σ0⁻¹)⁻¹`, `μ* = Σ* A'z`.
pub fn oracle_loading_posterior(
    data: &VaDataset,
    state: &ModelState,
    rows: &[usize],
    y: usize,
    j: usize,
    k: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let used: Vec<usize> =
        rows.iter().copied().filter(|&i| state.labels[i] == y && !data.mask_row(i)[j]).collect();
    let d = 3 + 4 * k;
    let a = DMatrix::from_fn(used.len(), d, |r, c| oracle_design(state, used[r], k)[c]);
    let z = DVector::from_iterator(used.len(), used.iter().map(|&i| state.latent.z_row(i)[j]));
    let prior = DMatrix::from_diagonal(&DVector::from_vec(oracle_prior_diag(state, j, k)));
    let cov = (a.transpose() * &a + prior).try_inverse().expect("invertible");
    let mean = &cov * a.transpose() * z;
    (mean, cov)
}

/// Effective loading row of symptom `j` for row `i`, assembled from the raw
/// blocks: `(Λ_yj, C1_yj + age·C2_yj + sex·C3_yj)`.
pub fn oracle_effective_row(state: &ModelState, i: usize, j: usize, k: usize) -> Vec<f64> {
    let y = state.labels[i];
    let w = state.covariates[i].w();
    let l = &state.params.loadings;
    let mut row = l.lambda(y, j).to_vec();
    for t in 0..k {
        row.push(l.c(0, y, j)[t] + w[1] * l.c(1, y, j)[t] + w[2] * l.c(2, y, j)[t]);
    }
    row
}

/// `(Λ̃'Λ̃ + I)⁻¹` and `(Λ̃'Λ̃ + I)⁻¹ Λ̃'(z − Bw)` over observed symptoms.
pub fn oracle_factor_posterior(
    data: &VaDataset,
    state: &ModelState,
    i: usize,
    k: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let obs: Vec<usize> = (0..data.p()).filter(|&j| !data.mask_row(i)[j]).collect();
    let y = state.labels[i];
    let w = state.covariates[i].w();
    let lt = DMatrix::from_fn(obs.len(), 2 * k, |r, c| oracle_effective_row(state, i, obs[r], k)[c]);
    let resid = DVector::from_iterator(
        obs.len(),
        obs.iter().map(|&j| {
            let b = state.params.loadings.b(y, j);
            state.latent.z_row(i)[j] - (b[0] * w[0] + b[1] * w[1] + b[2] * w[2])
        }),
    );
    let cov = (lt.transpose() * &lt + DMatrix::identity(2 * k, 2 * k)).try_inverse().expect("invertible");
    let mean = &cov * lt.transpose() * resid;
    (mean, cov)
}

/// Product of probit terms `Π_j Φ(±μ_j)` over observed symptoms, in plain
/// (not log) arithmetic, for given covariates.
pub fn oracle_probit_product(data: &VaDataset, state: &ModelState, i: usize, w: [f64; 3], k: usize) -> f64 {
    let y = state.labels[i];
    let eta = state.latent.eta(i);
    let l = &state.params.loadings;
    let mut prod = 1.0;
    for j in 0..data.p() {
        if data.mask_row(i)[j] {
            continue;
        }
        let b = l.b(y, j);
        let mut mu = b[0] * w[0] + b[1] * w[1] + b[2] * w[2];
        for t in 0..k {
            mu += l.lambda(y, j)[t] * eta[t];
            mu += (l.c(0, y, j)[t] + w[1] * l.c(1, y, j)[t] + w[2] * l.c(2, y, j)[t]) * eta[k + t];
        }
        prod *= if data.x_row(i)[j] == 1 { norm_cdf(mu) } else { 1.0 - norm_cdf(mu) };
    }
    prod
}

pub fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(series: &[f64], batches: usize) -> f64 {
    let size = series.len() / batches;
    let means: Vec<f64> =
        (0..batches).map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}
