//! Gibbs sampler for the age/sex-dependent probit factor model.
//!
//! One sweep runs, in order:
//!
//! 1. coefficient rows `β_yj` from their conjugate normal,
//! 2. factors `η̃_i`,
//! 3. – 5. shrinkage precisions `φ_B`, `φ_Λ`, `φ_C`,
//! 6. latent utilities `z_ij` (truncated normals, observed cells only),
//! 7. demographic tables `P(age, sex | y)`,
//! 8. missing age/sex, followed by a refresh of the affected `z_i`,
//!
//! then the cause-prior update (relevance mode) and, for target rows, cause
//! prediction. Every unit of every step draws from a stream keyed by
//! `(seed, sweep, step, unit)` so output is independent of the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::VaDataset;
use crate::error::{Result, VaError};
use crate::math::normalize_log_weights;
use crate::model::{
    cell_values, coef_dim, demog_cell, design_vector, linear_predictor, log_lik_given_factors,
    CategoricalModels, CovariateVector, LatentState, Loadings, ModelParams, ShrinkagePrecisions,
    Standardizer, N_CELLS,
};
use crate::predict::{csmf_draw, predict_cause, CausePosterior};
use crate::samplers::{
    sample_categorical, sample_dirichlet, sample_gamma, sample_truncated_normal, GaussianPrecision,
    RngStream, Support,
};

/// Stream identifiers for each step of a sweep.
pub mod step {
    pub const INIT: u64 = 0;
    pub const LOADINGS: u64 = 1;
    pub const FACTORS: u64 = 2;
    pub const PRECISIONS: u64 = 3;
    pub const LATENT: u64 = 6;
    pub const DEMOG: u64 = 7;
    pub const IMPUTE: u64 = 8;
    pub const PREDICT: u64 = 9;
    pub const CAUSE_PRIOR: u64 = 10;
    pub const RELEVANCE: u64 = 11;
    pub const CV: u64 = 12;
    pub const SYNTH: u64 = 13;
}

/// How `P(y)` evolves during the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausePriorUpdate {
    /// Held at the Dirichlet prior mean (cause-fraction estimation).
    Fixed,
    /// `Dirichlet(a_l + n_l / n)` over training labels.
    TrainingFractions,
    /// `Dirichlet(a_l + n_l)` over training labels.
    TrainingCounts,
    /// `Dirichlet(a_l + n_l)` over the current sampled target labels, so the
    /// prior tracks the target cause fractions. Targets are predicted at
    /// every sweep in this mode.
    TargetLabels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Number of static factors `K`; the interaction factor count equals `K`.
    pub n_factors: usize,
    /// Sweeps after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Monte Carlo size for the marginal likelihood of a symptom vector.
    pub mc_samples: usize,
    /// Monte Carlo size for conditional mutual information.
    pub relevance_samples: usize,
    pub seed: u64,
    /// Whether target rows (with sampled causes) enter the parameter updates.
    pub transductive: bool,
    /// Defaults to all ones when absent.
    pub dirichlet_cause_concentration: Option<Vec<f64>>,
    pub dirichlet_demog_concentration: [f64; N_CELLS],
    pub cause_prior_update: CausePriorUpdate,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_factors: 1,
            iterations: 10_000,
            burn_in: 1_000,
            thin: 20,
            mc_samples: 1_000,
            relevance_samples: 10_000,
            seed: 0,
            transductive: false,
            dirichlet_cause_concentration: None,
            dirichlet_demog_concentration: [1.0; N_CELLS],
            cause_prior_update: CausePriorUpdate::Fixed,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VaError::Config(m.to_string()));
        if self.n_factors == 0 {
            return bad("K must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.mc_samples == 0 || self.relevance_samples == 0 {
            return bad("Monte Carlo sizes must be at least 1");
        }
        if self.dirichlet_demog_concentration.iter().any(|&a| !(a > 0.0)) {
            return bad("demographic concentrations must be positive");
        }
        if let Some(c) = &self.dirichlet_cause_concentration {
            if c.iter().any(|&a| !(a > 0.0)) {
                return bad("cause concentrations must be positive");
            }
        }
        Ok(())
    }

    pub fn cause_concentration(&self, n_causes: usize) -> Result<Vec<f64>> {
        match &self.dirichlet_cause_concentration {
            None => Ok(vec![1.0; n_causes]),
            Some(c) if c.len() == n_causes => Ok(c.clone()),
            Some(c) => Err(VaError::Config(format!(
                "cause concentration has {} entries for {n_causes} causes",
                c.len()
            ))),
        }
    }

    pub fn kept_count(&self) -> usize {
        self.iterations / self.thin
    }
}

/// Full sampler state for one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: ModelParams,
    pub latent: LatentState,
    /// Current (observed or imputed) raw age for every row.
    pub age: Vec<u8>,
    pub sex: Vec<u8>,
    /// Current cause of every row; target rows hold their last sampled label.
    pub labels: Vec<usize>,
    pub covariates: Vec<CovariateVector>,
}

/// Numerical-repair bookkeeping. Every move is Gibbs, so there is no
/// acceptance rate to track.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairLog {
    /// Cholesky factorizations that needed diagonal jitter.
    pub jitter: u64,
    /// Imputations whose likelihood vanished for both values.
    pub impute_fallback: u64,
    /// Predictions whose unnormalized posterior vanished for every cause.
    pub predict_fallback: u64,
}

impl RepairLog {
    fn add(&mut self, other: RepairLog) {
        self.jitter += other.jitter;
        self.impute_fallback += other.impute_fallback;
        self.predict_fallback += other.predict_fallback;
    }
}

/// Shape and rate of one gamma full conditional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

/// Full conditionals of every shrinkage precision given the loadings.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionConditionals {
    pub phi_b: Vec<[GammaParams; 3]>,
    pub phi_lambda: Vec<GammaParams>,
    pub phi_c: Vec<[GammaParams; 3]>,
}

/// `φ_Bjq ~ Ga(0.5(L+1), 0.5(Σ_y B²_yjq + 1))`,
/// `φ_Λj ~ Ga(0.5(LK+1), 0.5(Σ_y Σ_k Λ²_yjk + 1))`,
/// `φ_Cjq ~ Ga(0.5(LK+1), 0.5(Σ_y Σ_k C^(q)²_yjk + 1))`.
pub fn precision_conditionals(loadings: &Loadings) -> PrecisionConditionals {
    let (l, p, k) = (loadings.n_causes(), loadings.n_symptoms(), loadings.n_factors());
    let shape_b = 0.5 * (l as f64 + 1.0);
    let shape_lk = 0.5 * ((l * k) as f64 + 1.0);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut out = PrecisionConditionals {
        phi_b: Vec::with_capacity(p),
        phi_lambda: Vec::with_capacity(p),
        phi_c: Vec::with_capacity(p),
    };
    for j in 0..p {
        out.phi_b.push(std::array::from_fn(|q| GammaParams {
            shape: shape_b,
            rate: 0.5 * ((0..l).map(|y| loadings.b(y, j)[q].powi(2)).sum::<f64>() + 1.0),
        }));
        out.phi_lambda.push(GammaParams {
            shape: shape_lk,
            rate: 0.5 * ((0..l).map(|y| sq(loadings.lambda(y, j))).sum::<f64>() + 1.0),
        });
        out.phi_c.push(std::array::from_fn(|q| GammaParams {
            shape: shape_lk,
            rate: 0.5 * ((0..l).map(|y| sq(loadings.c(q, y, j))).sum::<f64>() + 1.0),
        }));
    }
    out
}

/// Which demographic coordinate is being imputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Demographic {
    Age,
    Sex,
}

/// Gibbs sampler bound to a dataset.
#[derive(Clone, Debug)]
pub struct GibbsSampler<'a> {
    data: &'a VaDataset,
    config: ChainConfig,
    standardizer: Standardizer,
    /// Rows entering steps 1–8.
    active: Vec<usize>,
    target: Vec<usize>,
    training: Vec<usize>,
}

impl<'a> GibbsSampler<'a> {
    /// Sampler with standardization computed from the training rows.
    pub fn new(data: &'a VaDataset, config: ChainConfig) -> Result<Self> {
        let standardizer = Standardizer::from_training(data);
        Self::with_standardizer(data, config, standardizer)
    }

    pub fn with_standardizer(
        data: &'a VaDataset,
        config: ChainConfig,
        standardizer: Standardizer,
    ) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        config.cause_concentration(data.n_causes())?;
        let training = data.training_rows();
        let target = data.target_rows();
        let mut active = training.clone();
        if config.transductive {
            active.extend(&target);
            active.sort_unstable();
        }
        Ok(GibbsSampler { data, config, standardizer, active, target, training })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn active_rows(&self) -> &[usize] {
        &self.active
    }

    fn stream(&self, sweep: u64, step: u64, unit: usize) -> RngStream {
        RngStream::keyed(self.config.seed, sweep, step, unit as u64)
    }

    /// Neutral starting point: zero loadings, unit precisions, `η̃ ~ N(0, I)`,
    /// `z = ±0.5` matching `x`, missing age/sex drawn from the training
    /// marginal and tables at their prior means.
    pub fn initial_state(&self) -> Result<ModelState> {
        let data = self.data;
        let (n, p, l, k) = (data.n(), data.p(), data.n_causes(), self.config.n_factors);
        let categorical = CategoricalModels::prior_means(
            self.config.dirichlet_demog_concentration,
            self.config.cause_concentration(l)?,
        );
        let mut latent = LatentState::zeros(n, p, k);
        let freq = |vals: &[Option<u8>]| {
            let obs: Vec<u8> = self.training.iter().filter_map(|&i| vals[i]).collect();
            if obs.is_empty() {
                0.5
            } else {
                obs.iter().map(|&v| f64::from(v)).sum::<f64>() / obs.len() as f64
            }
        };
        let (age_freq, sex_freq) = (freq(&data.age), freq(&data.sex));
        let mut age = vec![0u8; n];
        let mut sex = vec![0u8; n];
        let mut labels = vec![0usize; n];
        for i in 0..n {
            let mut rng = self.stream(0, step::INIT, i);
            for v in latent.eta_mut(i) {
                *v = rng.standard_normal();
            }
            let (x, m) = (data.x_row(i), data.mask_row(i));
            for (j, z) in latent.z_row_mut(i).iter_mut().enumerate() {
                *z = if m[j] { 0.0 } else if x[j] == 1 { 0.5 } else { -0.5 };
            }
            age[i] = data.age[i].unwrap_or_else(|| u8::from(rng.open_uniform() < age_freq));
            sex[i] = data.sex[i].unwrap_or_else(|| u8::from(rng.open_uniform() < sex_freq));
            labels[i] = match data.cause[i] {
                Some(c) if data.split[i] == crate::data::Split::Training => c,
                _ => sample_categorical(&categorical.cause_prior, &mut rng),
            };
        }
        let covariates = (0..n).map(|i| self.standardizer.covariates(age[i], sex[i])).collect();
        Ok(ModelState {
            params: ModelParams {
                loadings: Loadings::zeros(l, p, k),
                precisions: ShrinkagePrecisions::ones(p),
                categorical,
            },
            latent,
            age,
            sex,
            labels,
            covariates,
        })
    }

    fn design_vectors(&self, state: &ModelState) -> Vec<f64> {
        let d = coef_dim(self.config.n_factors);
        let mut out = vec![0.0; self.data.n() * d];
        for &i in &self.active {
            design_vector(&state.covariates[i], state.latent.eta(i), &mut out[i * d..(i + 1) * d]);
        }
        out
    }

    fn rows_by_cause(&self, state: &ModelState) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.data.n_causes()];
        for &i in &self.active {
            groups[state.labels[i]].push(i);
        }
        groups
    }

    fn loading_conditional_with(
        &self,
        state: &ModelState,
        design: &[f64],
        rows: &[usize],
        y: usize,
        j: usize,
    ) -> Result<GaussianPrecision> {
        let d = coef_dim(self.config.n_factors);
        let prior = state.params.precisions.prior_precision(j, self.config.n_factors);
        let mut q = DMatrix::from_diagonal(&DVector::from_vec(prior));
        let mut b = DVector::zeros(d);
        for &i in rows {
            if self.data.mask_row(i)[j] {
                continue;
            }
            let a = &design[i * d..(i + 1) * d];
            let z = state.latent.z_row(i)[j];
            for r in 0..d {
                b[r] += a[r] * z;
                for c in 0..=r {
                    q[(r, c)] += a[r] * a[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                q[(c, r)] = q[(r, c)];
            }
        }
        GaussianPrecision::new(q, b, &format!("loadings y={y} j={j}"))
    }

    /// Conjugate normal full conditional of `β_yj` (step 1).
    pub fn loading_conditional(&self, state: &ModelState, y: usize, j: usize) -> Result<GaussianPrecision> {
        let design = self.design_vectors(state);
        let rows = &self.rows_by_cause(state)[y];
        self.loading_conditional_with(state, &design, rows, y, j)
    }

    /// Step 1.
    pub fn update_loadings(&self, state: &mut ModelState, sweep: u64) -> Result<RepairLog> {
        let (l, p) = (self.data.n_causes(), self.data.p());
        let design = self.design_vectors(state);
        let groups = self.rows_by_cause(state);
        let st: &ModelState = state;
        let draws: Vec<Result<(DVector<f64>, u32)>> = (0..l * p)
            .into_par_iter()
            .map(|unit| {
                let (y, j) = (unit / p, unit % p);
                let cond = self.loading_conditional_with(st, &design, &groups[y], y, j)?;
                let mut rng = self.stream(sweep, step::LOADINGS, unit);
                Ok((cond.sample(&mut rng), cond.jitters()))
            })
            .collect();
        let mut log = RepairLog::default();
        for (unit, res) in draws.into_iter().enumerate() {
            let (beta, jit) = res?;
            log.jitter += u64::from(jit);
            state.params.loadings.row_mut(unit / p, unit % p).copy_from_slice(beta.as_slice());
        }
        Ok(log)
    }

    /// Full conditional of `η̃_i` (step 2), using only observed symptoms.
    pub fn factor_conditional(&self, state: &ModelState, i: usize) -> Result<GaussianPrecision> {
        let k2 = 2 * self.config.n_factors;
        let y = state.labels[i];
        let w = &state.covariates[i];
        let loadings = &state.params.loadings;
        let mut q = DMatrix::identity(k2, k2);
        let mut b = DVector::zeros(k2);
        let mut row = vec![0.0; k2];
        let (m, z) = (self.data.mask_row(i), state.latent.z_row(i));
        for j in 0..self.data.p() {
            if m[j] {
                continue;
            }
            loadings.effective_row(y, j, w, &mut row);
            let resid = z[j] - loadings.mean(y, j, w);
            for r in 0..k2 {
                b[r] += row[r] * resid;
                for c in 0..k2 {
                    q[(r, c)] += row[r] * row[c];
                }
            }
        }
        GaussianPrecision::new(q, b, &format!("factors i={i}"))
    }

    /// Step 2.
    pub fn update_factors(&self, state: &mut ModelState, sweep: u64) -> Result<RepairLog> {
        let st: &ModelState = state;
        let draws: Vec<Result<(DVector<f64>, u32)>> = self
            .active
            .par_iter()
            .map(|&i| {
                let cond = self.factor_conditional(st, i)?;
                let mut rng = self.stream(sweep, step::FACTORS, i);
                Ok((cond.sample(&mut rng), cond.jitters()))
            })
            .collect();
        let mut log = RepairLog::default();
        for (&i, res) in self.active.iter().zip(draws) {
            let (eta, jit) = res?;
            log.jitter += u64::from(jit);
            state.latent.eta_mut(i).copy_from_slice(eta.as_slice());
        }
        Ok(log)
    }

    /// Steps 3–5.
    pub fn update_precisions(&self, state: &mut ModelState, sweep: u64) -> Result<()> {
        let cond = precision_conditionals(&state.params.loadings);
        let prec = &mut state.params.precisions;
        for j in 0..self.data.p() {
            let mut rng = self.stream(sweep, step::PRECISIONS, j);
            for q in 0..3 {
                prec.phi_b[j][q] = sample_gamma(cond.phi_b[j][q].shape, cond.phi_b[j][q].rate, &mut rng)?;
            }
            prec.phi_lambda[j] = sample_gamma(cond.phi_lambda[j].shape, cond.phi_lambda[j].rate, &mut rng)?;
            for q in 0..3 {
                prec.phi_c[j][q] = sample_gamma(cond.phi_c[j][q].shape, cond.phi_c[j][q].rate, &mut rng)?;
            }
        }
        Ok(())
    }

    /// Location `B_yj·w_i + Λ̃_yj·η̃_i` of the step-6 truncated normal.
    pub fn latent_mean(&self, state: &ModelState, i: usize, j: usize) -> f64 {
        let d = coef_dim(self.config.n_factors);
        let mut a = vec![0.0; d];
        design_vector(&state.covariates[i], state.latent.eta(i), &mut a);
        linear_predictor(&state.params.loadings, state.labels[i], j, &a)
    }

    /// Redraw `z_i·` on observed cells given the current parameters.
    fn draw_latent_row(
        &self,
        state: &ModelState,
        i: usize,
        w: &CovariateVector,
        rng: &mut RngStream,
    ) -> Vec<f64> {
        let d = coef_dim(self.config.n_factors);
        let mut a = vec![0.0; d];
        design_vector(w, state.latent.eta(i), &mut a);
        let y = state.labels[i];
        let (x, m) = (self.data.x_row(i), self.data.mask_row(i));
        let mut z = state.latent.z_row(i).to_vec();
        for j in 0..self.data.p() {
            if m[j] {
                continue;
            }
            let mean = linear_predictor(&state.params.loadings, y, j, &a);
            let support = if x[j] == 1 { Support::Positive } else { Support::Negative };
            z[j] = sample_truncated_normal(mean, support, rng);
        }
        z
    }

    /// Step 6.
    pub fn update_latent_z(&self, state: &mut ModelState, sweep: u64) {
        let st: &ModelState = state;
        let rows: Vec<Vec<f64>> = self
            .active
            .par_iter()
            .map(|&i| {
                let mut rng = self.stream(sweep, step::LATENT, i);
                self.draw_latent_row(st, i, &st.covariates[i], &mut rng)
            })
            .collect();
        for (&i, z) in self.active.iter().zip(rows) {
            state.latent.z_row_mut(i).copy_from_slice(&z);
        }
    }

    /// Dirichlet parameters `a + counts` of each cause's demographic table.
    pub fn demog_concentrations(&self, state: &ModelState) -> Vec<[f64; N_CELLS]> {
        let mut conc = vec![self.config.dirichlet_demog_concentration; self.data.n_causes()];
        for &i in &self.active {
            conc[state.labels[i]][demog_cell(state.age[i], state.sex[i])] += 1.0;
        }
        conc
    }

    /// Step 7.
    pub fn update_demog_probs(&self, state: &mut ModelState, sweep: u64) -> Result<()> {
        for (y, conc) in self.demog_concentrations(state).into_iter().enumerate() {
            let mut rng = self.stream(sweep, step::DEMOG, y);
            let draw = sample_dirichlet(&conc, &mut rng)?;
            state.params.categorical.demog[y].copy_from_slice(&draw);
        }
        Ok(())
    }

    /// Two-point conditional of a missing age (or sex) given the cause, the
    /// symptoms, the other coordinate and `η̃_i`. The flag reports the
    /// fallback to the demographic table alone when the likelihood vanished.
    pub fn imputation_probabilities(
        &self,
        state: &ModelState,
        i: usize,
        which: Demographic,
    ) -> ([f64; 2], bool) {
        self.imputation_probabilities_at(state, i, which, state.age[i], state.sex[i])
    }

    fn imputation_probabilities_at(
        &self,
        state: &ModelState,
        i: usize,
        which: Demographic,
        age: u8,
        sex: u8,
    ) -> ([f64; 2], bool) {
        let y = state.labels[i];
        let cat = &state.params.categorical;
        let cell_of = |v: u8| match which {
            Demographic::Age => (v, sex),
            Demographic::Sex => (age, v),
        };
        let log_prior = |v: u8| {
            let (a, s) = cell_of(v);
            cat.demog[y][demog_cell(a, s)].ln()
        };
        let mut logw = [0u8, 1].map(|v| {
            let (a, s) = cell_of(v);
            let w = self.standardizer.covariates(a, s);
            log_lik_given_factors(
                &state.params.loadings,
                y,
                &w,
                state.latent.eta(i),
                self.data.x_row(i),
                self.data.mask_row(i),
            ) + log_prior(v)
        });
        if normalize_log_weights(&mut logw) {
            return (logw, false);
        }
        let mut prior = [0u8, 1].map(log_prior);
        if !normalize_log_weights(&mut prior) {
            prior = [0.5, 0.5];
        }
        (prior, true)
    }

    /// Step 8. Age is drawn before sex. Rows whose covariates were imputed
    /// get `z_i·` redrawn under the new covariates so that `z` stays a draw
    /// from its conditional.
    pub fn impute_demographics(&self, state: &mut ModelState, sweep: u64) -> RepairLog {
        let data = self.data;
        let rows: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&i| data.age[i].is_none() || data.sex[i].is_none())
            .collect();
        let st: &ModelState = state;
        let results: Vec<(u8, u8, Vec<f64>, u64)> = rows
            .par_iter()
            .map(|&i| {
                let mut rng = self.stream(sweep, step::IMPUTE, i);
                let (mut age, mut sex) = (st.age[i], st.sex[i]);
                let mut fallbacks = 0;
                if data.age[i].is_none() {
                    let (probs, fb) = self.imputation_probabilities_at(st, i, Demographic::Age, age, sex);
                    fallbacks += u64::from(fb);
                    age = sample_categorical(&probs, &mut rng) as u8;
                }
                if data.sex[i].is_none() {
                    let (probs, fb) = self.imputation_probabilities_at(st, i, Demographic::Sex, age, sex);
                    fallbacks += u64::from(fb);
                    sex = sample_categorical(&probs, &mut rng) as u8;
                }
                let w = self.standardizer.covariates(age, sex);
                let z = self.draw_latent_row(st, i, &w, &mut rng);
                (age, sex, z, fallbacks)
            })
            .collect();
        let mut log = RepairLog::default();
        for (&i, (a, s, z, fb)) in rows.iter().zip(results) {
            if fb > 0 {
                log::debug!("imputation fallback for row {i} at sweep {sweep}");
            }
            log.impute_fallback += fb;
            state.age[i] = a;
            state.sex[i] = s;
            state.covariates[i] = self.standardizer.covariates(a, s);
            state.latent.z_row_mut(i).copy_from_slice(&z);
        }
        log
    }

    /// Dirichlet parameters of the relevance-mode cause prior update.
    pub fn cause_prior_concentration(&self, state: &ModelState) -> Result<Vec<f64>> {
        let l = self.data.n_causes();
        let mut conc = self.config.cause_concentration(l)?;
        let mut counts = vec![0.0; l];
        if self.config.cause_prior_update == CausePriorUpdate::TargetLabels {
            for &i in &self.target {
                counts[state.labels[i]] += 1.0;
            }
        } else {
            for &i in &self.training {
                if let Some(c) = self.data.cause[i] {
                    counts[c] += 1.0;
                }
            }
        }
        let n = self.training.len().max(1) as f64;
        for (a, c) in conc.iter_mut().zip(counts) {
            *a += match self.config.cause_prior_update {
                CausePriorUpdate::TrainingFractions => c / n,
                CausePriorUpdate::TrainingCounts | CausePriorUpdate::TargetLabels => c,
                CausePriorUpdate::Fixed => 0.0,
            };
        }
        Ok(conc)
    }

    /// Relevance-mode replacement of the prediction step.
    pub fn update_cause_prior(&self, state: &mut ModelState, sweep: u64) -> Result<()> {
        if self.config.cause_prior_update == CausePriorUpdate::Fixed {
            return Ok(());
        }
        let conc = self.cause_prior_concentration(state)?;
        let mut rng = self.stream(sweep, step::CAUSE_PRIOR, 0);
        state.params.categorical.cause_prior = sample_dirichlet(&conc, &mut rng)?;
        Ok(())
    }

    /// Steps 1–8 plus the cause-prior update.
    pub fn sweep(&self, state: &mut ModelState, sweep: u64) -> Result<RepairLog> {
        let mut log = self.update_loadings(state, sweep)?;
        log.add(self.update_factors(state, sweep)?);
        self.update_precisions(state, sweep)?;
        self.update_latent_z(state, sweep);
        self.update_demog_probs(state, sweep)?;
        log.add(self.impute_demographics(state, sweep));
        self.update_cause_prior(state, sweep)?;
        Ok(log)
    }

    /// Cause posterior and a sampled label for every target row.
    pub fn predict_targets(&self, state: &ModelState, sweep: u64) -> Vec<CausePosterior> {
        let params = &state.params;
        let r = self.config.mc_samples;
        self.target
            .par_iter()
            .map(|&i| {
                let mut rng = self.stream(sweep, step::PREDICT, i);
                predict_cause(
                    params,
                    &self.standardizer,
                    self.data.x_row(i),
                    self.data.mask_row(i),
                    self.data.age[i],
                    self.data.sex[i],
                    r,
                    &mut rng,
                )
            })
            .collect()
    }

    /// Burn-in, then `iterations` sweeps keeping every `thin`-th. Target rows
    /// are predicted at every sweep in transductive or target-label mode and
    /// at kept sweeps otherwise.
    pub fn run(&self) -> Result<ChainOutput> {
        let mut state = self.initial_state()?;
        let total = self.config.burn_in + self.config.iterations;
        let l = self.data.n_causes();
        let mut kept = Vec::with_capacity(self.config.kept_count());
        let mut prob_sums = vec![vec![0.0; l]; self.target.len()];
        let mut repairs = RepairLog::default();
        for s in 0..total {
            let sweep = s as u64 + 1;
            let wrap = |e: VaError| VaError::Sweep { sweep: s, source: Box::new(e) };
            repairs.add(self.sweep(&mut state, sweep).map_err(wrap)?);
            let post = s + 1 - self.config.burn_in.min(s + 1);
            let is_kept = s >= self.config.burn_in && post % self.config.thin == 0;
            let every = self.config.transductive || self.config.cause_prior_update == CausePriorUpdate::TargetLabels;
            let predictions = if !self.target.is_empty() && (every || is_kept) {
                let preds = self.predict_targets(&state, sweep);
                repairs.predict_fallback += preds.iter().filter(|p| p.fallback).count() as u64;
                if every {
                    for (&i, p) in self.target.iter().zip(&preds) {
                        state.labels[i] = p.label;
                    }
                }
                Some(preds)
            } else {
                None
            };
            if is_kept {
                let (csmf, labels) = match &predictions {
                    Some(preds) => {
                        for (acc, p) in prob_sums.iter_mut().zip(preds) {
                            acc.iter_mut().zip(&p.probs).for_each(|(a, v)| *a += v);
                        }
                        let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
                        (Some(csmf_draw(&labels, l)?), labels)
                    }
                    None => (None, Vec::new()),
                };
                kept.push(KeptDraw { sweep: s, params: state.params.clone(), csmf, target_labels: labels });
            }
        }
        if repairs != RepairLog::default() {
            log::info!("numerical repairs during chain: {repairs:?}");
        }
        let denom = kept.len().max(1) as f64;
        let individual_probs = prob_sums
            .into_iter()
            .map(|v| v.into_iter().map(|s| s / denom).collect())
            .collect();
        Ok(ChainOutput {
            config: self.config.clone(),
            standardizer: self.standardizer,
            target_rows: self.target.clone(),
            kept,
            individual_probs,
            repairs,
            final_state: state,
        })
    }
}

/// Parameters kept at one thinned sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeptDraw {
    /// Zero-based sweep index including burn-in.
    pub sweep: usize,
    pub params: ModelParams,
    /// Cause fractions of the sampled target labels, when targets exist.
    pub csmf: Option<Vec<f64>>,
    pub target_labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub config: ChainConfig,
    pub standardizer: Standardizer,
    pub target_rows: Vec<usize>,
    pub kept: Vec<KeptDraw>,
    /// Mean cause posterior over kept sweeps, one vector per target row.
    pub individual_probs: Vec<Vec<f64>>,
    pub repairs: RepairLog,
    pub final_state: ModelState,
}

impl ChainOutput {
    /// Per-kept-sweep CSMF draws (empty without target rows).
    pub fn csmf_draws(&self) -> Vec<Vec<f64>> {
        self.kept.iter().filter_map(|k| k.csmf.clone()).collect()
    }

    /// Posterior-mean CSMF.
    pub fn csmf_mean(&self) -> Option<Vec<f64>> {
        let draws = self.csmf_draws();
        let first = draws.first()?;
        let mut mean = vec![0.0; first.len()];
        for d in &draws {
            mean.iter_mut().zip(d).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= draws.len() as f64);
        Some(mean)
    }
}

/// Convenience wrapper around [`GibbsSampler::run`].
pub fn run_chain(data: &VaDataset, config: &ChainConfig) -> Result<ChainOutput> {
    GibbsSampler::new(data, config.clone())?.run()
}

/// All four `(age, sex)` cells, in table order.
pub fn cells() -> impl Iterator<Item = (usize, u8, u8)> {
    (0..N_CELLS).map(|c| {
        let (a, s) = cell_values(c);
        (c, a, s)
    })
}
