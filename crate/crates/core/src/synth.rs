//! Synthetic datasets drawn from the model itself, for recovery experiments,
//! benchmarks and tests.

use serde::{Deserialize, Serialize};

use crate::data::{Record, Split, VaDataset};
use crate::error::{Result, VaError};
use crate::model::{
    cell_values, CategoricalModels, Loadings, ModelParams, ShrinkagePrecisions, Standardizer, N_CELLS,
};
use crate::samplers::{sample_categorical, sample_dirichlet, RngStream};

/// Scales of the random parameter draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamScales {
    /// SD of each `B` entry.
    pub b: f64,
    /// SD of each `Λ` entry.
    pub lambda: f64,
    /// SD of each `C^(q)` entry.
    pub c: f64,
    /// Symmetric Dirichlet concentration of each cause's demographic table.
    pub demog_concentration: f64,
}

impl Default for ParamScales {
    fn default() -> Self {
        ParamScales { b: 1.0, lambda: 0.8, c: 0.4, demog_concentration: 4.0 }
    }
}

/// Independent normal loadings and Dirichlet demographic tables. The cause
/// prior is uniform.
pub fn random_params(
    n_causes: usize,
    n_symptoms: usize,
    n_factors: usize,
    scales: &ParamScales,
    rng: &mut RngStream,
) -> Result<ModelParams> {
    let mut loadings = Loadings::zeros(n_causes, n_symptoms, n_factors);
    for y in 0..n_causes {
        for j in 0..n_symptoms {
            for v in loadings.b_mut(y, j) {
                *v = scales.b * rng.standard_normal();
            }
            for v in loadings.lambda_mut(y, j) {
                *v = scales.lambda * rng.standard_normal();
            }
            for q in 0..3 {
                for v in loadings.c_mut(q, y, j) {
                    *v = scales.c * rng.standard_normal();
                }
            }
        }
    }
    let mut categorical = CategoricalModels::uniform(n_causes);
    for row in categorical.demog.iter_mut() {
        let d = sample_dirichlet(&[scales.demog_concentration; N_CELLS], rng)?;
        row.copy_from_slice(&d);
    }
    Ok(ModelParams { loadings, precisions: ShrinkagePrecisions::ones(n_symptoms), categorical })
}

/// Standardizer implied by the population age/sex marginals under `csmf`.
pub fn population_standardizer(params: &ModelParams, csmf: &[f64]) -> Standardizer {
    let mut pa = 0.0;
    let mut ps = 0.0;
    for (y, &py) in csmf.iter().enumerate() {
        for c in 0..N_CELLS {
            let (a, s) = cell_values(c);
            pa += py * params.categorical.demog[y][c] * f64::from(a);
            ps += py * params.categorical.demog[y][c] * f64::from(s);
        }
    }
    let sd = |p: f64| {
        let v = p * (1.0 - p);
        if v > 0.0 {
            v.sqrt()
        } else {
            1.0
        }
    };
    Standardizer { age_mean: pa, age_sd: sd(pa), sex_mean: ps, sex_sd: sd(ps) }
}

/// Sizes, cause fractions and missingness of a synthetic study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_training: usize,
    pub n_target: usize,
    pub training_csmf: Vec<f64>,
    pub target_csmf: Vec<f64>,
    /// MCAR probability for each symptom cell.
    pub symptom_missing: f64,
    /// MCAR probability for age and for sex, independently.
    pub demog_missing: f64,
}

/// A synthetic dataset together with the truth it was drawn from.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: VaDataset,
    pub params: ModelParams,
    pub standardizer: Standardizer,
    /// Empirical cause fractions of the target rows.
    pub target_csmf: Vec<f64>,
}

/// One individual `(y, age, sex, x)` from the generative model.
pub fn sample_individual(
    params: &ModelParams,
    standardizer: &Standardizer,
    y: usize,
    rng: &mut RngStream,
) -> (u8, u8, Vec<u8>) {
    let cell = sample_categorical(&params.categorical.demog[y], rng);
    let (a, s) = cell_values(cell);
    let w = standardizer.covariates(a, s);
    let k2 = 2 * params.n_factors();
    let eta: Vec<f64> = (0..k2).map(|_| rng.standard_normal()).collect();
    let mut row = vec![0.0; k2];
    let x = (0..params.n_symptoms())
        .map(|j| {
            params.loadings.effective_row(y, j, &w, &mut row);
            let z = params.loadings.mean(y, j, &w)
                + row.iter().zip(&eta).map(|(r, e)| r * e).sum::<f64>()
                + rng.standard_normal();
            u8::from(z > 0.0)
        })
        .collect();
    (a, s, x)
}

/// Draw training and target individuals from `params`. Target rows keep
/// their true cause.
pub fn generate(
    params: &ModelParams,
    standardizer: &Standardizer,
    config: &SynthConfig,
    rng: &mut RngStream,
) -> Result<SynthData> {
    let l = params.n_causes();
    if config.training_csmf.len() != l || config.target_csmf.len() != l {
        return Err(VaError::Dimension("synthetic CSMF length differs from cause count".into()));
    }
    let p = params.n_symptoms();
    let mut records = Vec::with_capacity(config.n_training + config.n_target);
    let mut target_counts = vec![0usize; l];
    for (split, n, csmf) in [
        (Split::Training, config.n_training, &config.training_csmf),
        (Split::Target, config.n_target, &config.target_csmf),
    ] {
        for _ in 0..n {
            let y = sample_categorical(csmf, rng);
            let (a, s, x) = sample_individual(params, standardizer, y, rng);
            if split == Split::Target {
                target_counts[y] += 1;
            }
            let mut miss = |prob: f64| rng.open_uniform() < prob;
            let symptoms = x.into_iter().map(|v| if miss(config.symptom_missing) { None } else { Some(v) }).collect();
            let age = if miss(config.demog_missing) { None } else { Some(a) };
            let sex = if miss(config.demog_missing) { None } else { Some(s) };
            records.push(Record { id: format!("r{}", records.len()), symptoms, age, sex, cause: Some(y), split });
        }
    }
    let symptom_names = (0..p).map(|j| format!("s{}", j + 1)).collect();
    let cause_labels = (0..l).map(|y| format!("c{}", y + 1)).collect();
    let dataset = VaDataset::new(symptom_names, cause_labels, records)?;
    let n_t = config.n_target.max(1) as f64;
    Ok(SynthData {
        dataset,
        params: params.clone(),
        standardizer: *standardizer,
        target_csmf: target_counts.into_iter().map(|c| c as f64 / n_t).collect(),
    })
}
