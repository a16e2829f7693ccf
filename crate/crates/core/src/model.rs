//! Model quantities and deterministic model math.
//!
//! Latent utilities follow
//!
//! ```text
//! x_ij = 1(z_ij > 0)
//! z_i  = B_y w_i + Λ_y η_i + D_y(w_i) γ_i + ε_i,   ε_i ~ N(0, I_p)
//! D_y(w) = C_y^(1) + C_y^(2) age_std + C_y^(3) sex_std
//! ```
//!
//! with `w_i = (1, age_std, sex_std)` and `η̃_i = (η_i, γ_i) ~ N(0, I_2K)`.
//! Every `(cause, symptom)` pair owns one coefficient row
//! `β_yj = (B_yj·, Λ_yj·, C^(1)_yj·, C^(2)_yj·, C^(3)_yj·)` of length
//! `3 + 4K`, laid out exactly as the design vector returned by
//! [`design_vector`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::VaDataset;
use crate::error::{Result, VaError};
use crate::math::{log_norm_cdf, norm_cdf};

/// Number of covariates in `w` (intercept, age, sex).
pub const N_COVARIATES: usize = 3;

/// Number of (age, sex) demographic cells.
pub const N_CELLS: usize = 4;

/// Cell index for raw binary age/sex: (0,0)=0, (0,1)=1, (1,0)=2, (1,1)=3.
pub fn demog_cell(age: u8, sex: u8) -> usize {
    2 * age as usize + sex as usize
}

/// Inverse of [`demog_cell`].
pub fn cell_values(cell: usize) -> (u8, u8) {
    ((cell / 2) as u8, (cell % 2) as u8)
}

/// Frozen centering and scaling for age and sex, computed from training rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub age_mean: f64,
    pub age_sd: f64,
    pub sex_mean: f64,
    pub sex_sd: f64,
}

impl Standardizer {
    /// No-op scaling: standardized values equal the raw 0/1 values.
    pub fn identity() -> Self {
        Standardizer { age_mean: 0.0, age_sd: 1.0, sex_mean: 0.0, sex_sd: 1.0 }
    }

    /// Mean and population SD over observed training values. A covariate that
    /// is constant (or entirely missing) in training gets sd = 1.
    pub fn from_training(data: &VaDataset) -> Self {
        let rows: Vec<usize> = data.training_rows();
        let stats = |vals: &[Option<u8>]| {
            let obs: Vec<f64> = rows.iter().filter_map(|&i| vals[i]).map(f64::from).collect();
            if obs.is_empty() {
                return (0.0, 1.0);
            }
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / obs.len() as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            (mean, sd)
        };
        let (age_mean, age_sd) = stats(&data.age);
        let (sex_mean, sex_sd) = stats(&data.sex);
        Standardizer { age_mean, age_sd, sex_mean, sex_sd }
    }

    pub fn covariates(&self, age: u8, sex: u8) -> CovariateVector {
        CovariateVector {
            w: [
                1.0,
                (f64::from(age) - self.age_mean) / self.age_sd,
                (f64::from(sex) - self.sex_mean) / self.sex_sd,
            ],
            raw_age: Some(age),
            raw_sex: Some(sex),
        }
    }

    /// Covariates for every demographic cell, indexed by [`demog_cell`].
    pub fn cell_covariates(&self) -> [CovariateVector; N_CELLS] {
        std::array::from_fn(|c| {
            let (a, s) = cell_values(c);
            self.covariates(a, s)
        })
    }
}

/// `w = (1, age_std, sex_std)` with the raw values it was built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector {
    w: [f64; N_COVARIATES],
    pub raw_age: Option<u8>,
    pub raw_sex: Option<u8>,
}

impl CovariateVector {
    /// Covariates from already-standardized values.
    pub fn standardized(age_std: f64, sex_std: f64) -> Self {
        CovariateVector { w: [1.0, age_std, sex_std], raw_age: None, raw_sex: None }
    }

    pub fn w(&self) -> &[f64; N_COVARIATES] {
        &self.w
    }

    pub fn age_std(&self) -> f64 {
        self.w[1]
    }

    pub fn sex_std(&self) -> f64 {
        self.w[2]
    }
}

/// Regression coefficients `B`, static loadings `Λ` and covariate-interaction
/// loadings `C^(1..3)` for every cause and symptom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    n_causes: usize,
    n_symptoms: usize,
    n_factors: usize,
    coef: Vec<f64>,
}

impl Loadings {
    pub fn zeros(n_causes: usize, n_symptoms: usize, n_factors: usize) -> Self {
        let d = coef_dim(n_factors);
        Loadings { n_causes, n_symptoms, n_factors, coef: vec![0.0; n_causes * n_symptoms * d] }
    }

    pub fn n_causes(&self) -> usize {
        self.n_causes
    }

    pub fn n_symptoms(&self) -> usize {
        self.n_symptoms
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    /// Length of one coefficient row, `3 + 4K`.
    pub fn coef_dim(&self) -> usize {
        coef_dim(self.n_factors)
    }

    /// Full coefficient row `β_yj`.
    pub fn row(&self, y: usize, j: usize) -> &[f64] {
        let d = self.coef_dim();
        let start = (y * self.n_symptoms + j) * d;
        &self.coef[start..start + d]
    }

    pub fn row_mut(&mut self, y: usize, j: usize) -> &mut [f64] {
        let d = self.coef_dim();
        let start = (y * self.n_symptoms + j) * d;
        &mut self.coef[start..start + d]
    }

    pub fn b(&self, y: usize, j: usize) -> &[f64] {
        &self.row(y, j)[..N_COVARIATES]
    }

    pub fn lambda(&self, y: usize, j: usize) -> &[f64] {
        let k = self.n_factors;
        &self.row(y, j)[N_COVARIATES..N_COVARIATES + k]
    }

    /// `C^(q+1)_yj·` for `q` in `0..3`.
    pub fn c(&self, q: usize, y: usize, j: usize) -> &[f64] {
        let k = self.n_factors;
        let start = N_COVARIATES + k * (1 + q);
        &self.row(y, j)[start..start + k]
    }

    pub fn b_mut(&mut self, y: usize, j: usize) -> &mut [f64] {
        &mut self.row_mut(y, j)[..N_COVARIATES]
    }

    pub fn lambda_mut(&mut self, y: usize, j: usize) -> &mut [f64] {
        let k = self.n_factors;
        &mut self.row_mut(y, j)[N_COVARIATES..N_COVARIATES + k]
    }

    pub fn c_mut(&mut self, q: usize, y: usize, j: usize) -> &mut [f64] {
        let k = self.n_factors;
        let start = N_COVARIATES + k * (1 + q);
        &mut self.row_mut(y, j)[start..start + k]
    }

    /// Every coefficient, row-major over `(y, j)`.
    pub fn as_slice(&self) -> &[f64] {
        &self.coef
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coef
    }

    /// `B_yj· w`.
    pub fn mean(&self, y: usize, j: usize, w: &CovariateVector) -> f64 {
        dot(self.b(y, j), w.w())
    }

    /// Row `j` of `Λ̃_y = [Λ_y | D_y]`, written into `out` (length `2K`).
    pub fn effective_row(&self, y: usize, j: usize, w: &CovariateVector, out: &mut [f64]) {
        let k = self.n_factors;
        out[..k].copy_from_slice(self.lambda(y, j));
        let (c1, c2, c3) = (self.c(0, y, j), self.c(1, y, j), self.c(2, y, j));
        for g in 0..k {
            out[k + g] = c1[g] + c2[g] * w.age_std() + c3[g] * w.sex_std();
        }
    }

    fn check_cause(&self, y: usize) -> Result<()> {
        if y >= self.n_causes {
            return Err(VaError::Dimension(format!(
                "cause index {y} out of range for {} causes",
                self.n_causes
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.coef.iter().all(|v| v.is_finite())
    }
}

pub fn coef_dim(n_factors: usize) -> usize {
    N_COVARIATES + 4 * n_factors
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Design vector `a = (w, η, γ, age_std·γ, sex_std·γ)` matching the layout of
/// a coefficient row, so that `β_yj · a` is the linear predictor of `z_ij`.
pub fn design_vector(w: &CovariateVector, eta_tilde: &[f64], out: &mut [f64]) {
    let k = eta_tilde.len() / 2;
    debug_assert_eq!(out.len(), coef_dim(k));
    out[..N_COVARIATES].copy_from_slice(w.w());
    let (eta, gamma) = eta_tilde.split_at(k);
    out[N_COVARIATES..N_COVARIATES + k].copy_from_slice(eta);
    for g in 0..k {
        out[N_COVARIATES + k + g] = gamma[g];
        out[N_COVARIATES + 2 * k + g] = w.age_std() * gamma[g];
        out[N_COVARIATES + 3 * k + g] = w.sex_std() * gamma[g];
    }
}

/// `Λ̃_y = [Λ_y | D_y]` as a `p × 2K` matrix.
pub fn assemble_effective_loading(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
) -> Result<DMatrix<f64>> {
    loadings.check_cause(y)?;
    let (p, k) = (loadings.n_symptoms, loadings.n_factors);
    let mut out = DMatrix::zeros(p, 2 * k);
    let mut row = vec![0.0; 2 * k];
    for j in 0..p {
        loadings.effective_row(y, j, w, &mut row);
        for (c, v) in row.iter().enumerate() {
            out[(j, c)] = *v;
        }
    }
    Ok(out)
}

/// `cov(z) = Λ_y Λ_y' + D_y D_y' + I_p`.
pub fn implied_covariance(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
) -> Result<DMatrix<f64>> {
    let lt = assemble_effective_loading(loadings, y, w)?;
    let p = lt.nrows();
    Ok(&lt * lt.transpose() + DMatrix::identity(p, p))
}

/// Closed-form `P(x_j = 1 | y, w) = Φ(B_yj·w / √(1 + ‖Λ̃_yj·‖²))`, the exact
/// single-symptom marginal with the factors integrated out.
pub fn probit_marginal(loadings: &Loadings, y: usize, w: &CovariateVector, j: usize) -> f64 {
    let k = loadings.n_factors;
    let mut row = vec![0.0; 2 * k];
    loadings.effective_row(y, j, w, &mut row);
    let norm2: f64 = row.iter().map(|v| v * v).sum();
    norm_cdf(loadings.mean(y, j, w) / (1.0 + norm2).sqrt())
}

/// `ln P(x_i | y, w, η̃)`: sum of probit log terms over observed symptoms.
pub fn log_lik_given_factors(
    loadings: &Loadings,
    y: usize,
    w: &CovariateVector,
    eta_tilde: &[f64],
    x_row: &[u8],
    mask_row: &[bool],
) -> f64 {
    let mut a = vec![0.0; loadings.coef_dim()];
    design_vector(w, eta_tilde, &mut a);
    let mut total = 0.0;
    for j in 0..loadings.n_symptoms {
        if mask_row[j] {
            continue;
        }
        let eta = dot(loadings.row(y, j), &a);
        total += log_norm_cdf(if x_row[j] == 1 { eta } else { -eta });
    }
    total
}

/// Linear predictor `β_yj · a`.
pub fn linear_predictor(loadings: &Loadings, y: usize, j: usize, design: &[f64]) -> f64 {
    dot(loadings.row(y, j), design)
}

/// Per-symptom precisions of the normal-gamma (Cauchy) shrinkage prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePrecisions {
    pub phi_b: Vec<[f64; 3]>,
    pub phi_lambda: Vec<f64>,
    pub phi_c: Vec<[f64; 3]>,
}

impl ShrinkagePrecisions {
    pub fn ones(n_symptoms: usize) -> Self {
        ShrinkagePrecisions {
            phi_b: vec![[1.0; 3]; n_symptoms],
            phi_lambda: vec![1.0; n_symptoms],
            phi_c: vec![[1.0; 3]; n_symptoms],
        }
    }

    /// Diagonal of the prior precision `Σ0⁻¹` for symptom `j`, in coefficient
    /// row layout.
    pub fn prior_precision(&self, j: usize, n_factors: usize) -> Vec<f64> {
        let k = n_factors;
        let mut d = Vec::with_capacity(coef_dim(k));
        d.extend_from_slice(&self.phi_b[j]);
        d.extend(std::iter::repeat_n(self.phi_lambda[j], k));
        for q in 0..3 {
            d.extend(std::iter::repeat_n(self.phi_c[j][q], k));
        }
        d
    }

    pub fn all_positive(&self) -> bool {
        self.phi_b.iter().flatten().chain(&self.phi_lambda).chain(self.phi_c.iter().flatten())
            .all(|&v| v > 0.0 && v.is_finite())
    }
}

/// Latent utilities and factors for every individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    n_symptoms: usize,
    n_factors: usize,
    /// `n × p`, meaningful only where the symptom is observed.
    pub z: Vec<f64>,
    /// `n × 2K`.
    pub eta_tilde: Vec<f64>,
}

impl LatentState {
    pub fn zeros(n: usize, n_symptoms: usize, n_factors: usize) -> Self {
        LatentState {
            n_symptoms,
            n_factors,
            z: vec![0.0; n * n_symptoms],
            eta_tilde: vec![0.0; n * 2 * n_factors],
        }
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.n_symptoms..(i + 1) * self.n_symptoms]
    }

    pub fn z_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.z[i * self.n_symptoms..(i + 1) * self.n_symptoms]
    }

    pub fn eta(&self, i: usize) -> &[f64] {
        let d = 2 * self.n_factors;
        &self.eta_tilde[i * d..(i + 1) * d]
    }

    pub fn eta_mut(&mut self, i: usize) -> &mut [f64] {
        let d = 2 * self.n_factors;
        &mut self.eta_tilde[i * d..(i + 1) * d]
    }

    /// `z_ij ≥ 0` where `x_ij = 1` and `z_ij ≤ 0` where `x_ij = 0`, over
    /// observed cells of the listed rows.
    pub fn signs_consistent(&self, data: &VaDataset, rows: &[usize]) -> bool {
        rows.iter().all(|&i| {
            let (x, m, z) = (data.x_row(i), data.mask_row(i), self.z_row(i));
            (0..data.p()).all(|j| m[j] || if x[j] == 1 { z[j] >= 0.0 } else { z[j] <= 0.0 })
        })
    }
}

/// Dirichlet-distributed categorical sub-models: `P(age, sex | y)` and `P(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalModels {
    /// `L × 4` table over cells ordered as in [`demog_cell`].
    pub demog: Vec<[f64; N_CELLS]>,
    pub cause_prior: Vec<f64>,
    pub concentration_demog: [f64; N_CELLS],
    pub concentration_cause: Vec<f64>,
}

impl CategoricalModels {
    /// Tables set to their Dirichlet prior means.
    pub fn prior_means(concentration_demog: [f64; N_CELLS], concentration_cause: Vec<f64>) -> Self {
        let dsum: f64 = concentration_demog.iter().sum();
        let row = concentration_demog.map(|a| a / dsum);
        let csum: f64 = concentration_cause.iter().sum();
        CategoricalModels {
            demog: vec![row; concentration_cause.len()],
            cause_prior: concentration_cause.iter().map(|a| a / csum).collect(),
            concentration_demog,
            concentration_cause,
        }
    }

    pub fn uniform(n_causes: usize) -> Self {
        Self::prior_means([1.0; N_CELLS], vec![1.0; n_causes])
    }

    pub fn n_causes(&self) -> usize {
        self.cause_prior.len()
    }

    /// `P(age, sex | y)` summed over the missing coordinates.
    pub fn demog_prob(&self, y: usize, age: Option<u8>, sex: Option<u8>) -> f64 {
        (0..N_CELLS)
            .filter(|&c| {
                let (a, s) = cell_values(c);
                age.is_none_or(|v| v == a) && sex.is_none_or(|v| v == s)
            })
            .map(|c| self.demog[y][c])
            .sum()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let ok = |v: &[f64]| {
            v.iter().all(|&p| (0.0..=1.0).contains(&p)) && (v.iter().sum::<f64>() - 1.0).abs() <= tol
        };
        self.demog.iter().all(|r| ok(r)) && ok(&self.cause_prior)
    }
}

/// Everything the sampler draws except the per-individual latents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub loadings: Loadings,
    pub precisions: ShrinkagePrecisions,
    pub categorical: CategoricalModels,
}

impl ModelParams {
    pub fn n_causes(&self) -> usize {
        self.loadings.n_causes()
    }

    pub fn n_symptoms(&self) -> usize {
        self.loadings.n_symptoms()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.n_factors()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loadings_with(p: usize, k: usize) -> Loadings {
        Loadings::zeros(2, p, k)
    }

    #[test]
    fn zero_interaction_gives_static_loading_only() {
        let mut l = loadings_with(2, 1);
        l.lambda_mut(0, 0)[0] = 0.7;
        l.lambda_mut(0, 1)[0] = -0.2;
        let m = assemble_effective_loading(&l, 0, &CovariateVector::standardized(0.3, -1.2)).unwrap();
        assert_eq!(m[(0, 0)], 0.7);
        assert_eq!(m[(1, 0)], -0.2);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 1)], 0.0);
    }

    #[test]
    fn zero_covariates_give_first_interaction_block() {
        let mut l = loadings_with(2, 1);
        l.c_mut(0, 1, 0)[0] = 1.5;
        l.c_mut(1, 1, 0)[0] = 9.0;
        l.c_mut(2, 1, 1)[0] = 9.0;
        let m = assemble_effective_loading(&l, 1, &CovariateVector::standardized(0.0, 0.0)).unwrap();
        assert_eq!(m[(0, 1)], 1.5);
        assert_eq!(m[(1, 1)], 0.0);
    }

    #[test]
    fn hand_evaluated_interaction_loading() {
        // C1 = [[1],[0]], C2 = [[2],[1]], C3 = [[0],[3]], age 0.5, sex -0.5
        let mut l = loadings_with(2, 1);
        l.c_mut(0, 0, 0)[0] = 1.0;
        l.c_mut(1, 0, 0)[0] = 2.0;
        l.c_mut(1, 0, 1)[0] = 1.0;
        l.c_mut(2, 0, 1)[0] = 3.0;
        let m = assemble_effective_loading(&l, 0, &CovariateVector::standardized(0.5, -0.5)).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 1)], -1.0);
    }

    #[test]
    fn out_of_range_cause_is_structural_error() {
        let l = loadings_with(2, 1);
        assert!(assemble_effective_loading(&l, 5, &CovariateVector::standardized(0.0, 0.0)).is_err());
    }

    #[test]
    fn covariance_examples() {
        let mut l = loadings_with(2, 1);
        let w = CovariateVector::standardized(0.1, 0.2);
        let id = implied_covariance(&l, 0, &w).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));
        l.lambda_mut(0, 0)[0] = 1.0;
        l.lambda_mut(0, 1)[0] = 1.0;
        let c = implied_covariance(&l, 0, &w).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn probit_marginal_examples() {
        let mut l = loadings_with(1, 1);
        let w = CovariateVector::standardized(0.0, 0.0);
        assert!((probit_marginal(&l, 0, &w, 0) - 0.5).abs() < 1e-15);
        l.b_mut(0, 0)[0] = 1.0;
        assert!((probit_marginal(&l, 0, &w, 0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        // ‖Λ̃‖² = 3 via Λ = 1, C1 = √2
        l.lambda_mut(0, 0)[0] = 1.0;
        l.c_mut(0, 0, 0)[0] = 2f64.sqrt();
        assert!((probit_marginal(&l, 0, &w, 0) - 0.691_462_461_274_013_1).abs() < 1e-12);
    }

    #[test]
    fn design_vector_reproduces_decomposed_predictor() {
        let mut l = loadings_with(3, 2);
        for (t, v) in l.as_mut_slice().iter_mut().enumerate() {
            *v = ((t * 37 % 11) as f64 - 5.0) / 7.0;
        }
        let w = CovariateVector::standardized(0.8, -1.1);
        let eta = [0.3, -0.4, 1.2, 0.05];
        let mut a = vec![0.0; l.coef_dim()];
        design_vector(&w, &eta, &mut a);
        let mut row = vec![0.0; 4];
        for j in 0..3 {
            l.effective_row(1, j, &w, &mut row);
            let direct = l.mean(1, j, &w) + row.iter().zip(&eta).map(|(r, e)| r * e).sum::<f64>();
            assert!((linear_predictor(&l, 1, j, &a) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn standardizer_uses_training_rows_only_and_guards_zero_variance() {
        use crate::data::{Record, Split};
        let rec = |age, sex, split, cause| Record {
            id: String::new(),
            symptoms: vec![Some(0)],
            age: Some(age),
            sex: Some(sex),
            cause,
            split,
        };
        let ds = VaDataset::new(
            vec!["s".into()],
            vec!["a".into(), "b".into()],
            vec![
                rec(0, 1, Split::Training, Some(0)),
                rec(1, 1, Split::Training, Some(1)),
                rec(1, 0, Split::Target, None),
                rec(1, 0, Split::Target, None),
            ],
        )
        .unwrap();
        let s = Standardizer::from_training(&ds);
        assert_eq!(s.age_mean, 0.5);
        assert_eq!(s.age_sd, 0.5);
        assert_eq!(s.sex_mean, 1.0);
        assert_eq!(s.sex_sd, 1.0);
        let w = s.covariates(1, 0);
        assert_eq!(w.w(), &[1.0, 1.0, -1.0]);
    }

    #[test]
    fn demog_prob_marginalizes_missing_coordinates() {
        let mut cat = CategoricalModels::uniform(1);
        cat.demog[0] = [0.1, 0.2, 0.3, 0.4];
        assert!((cat.demog_prob(0, Some(1), None) - 0.7).abs() < 1e-15);
        assert!((cat.demog_prob(0, None, Some(0)) - 0.4).abs() < 1e-15);
        assert!((cat.demog_prob(0, None, None) - 1.0).abs() < 1e-15);
        assert_eq!(cat.demog_prob(0, Some(0), Some(1)), 0.2);
    }
}
