//! Information-theoretic relevance of each predictor to the cause.
//!
//! Predictors are indexed with age and sex first, then the symptoms. All
//! logarithms are natural; reported values are divided by the cause entropy
//! `H(y)`, which makes them base-free.
//!
//! * Mutual information of a single predictor is exact given the model
//!   parameters: a symptom's marginal uses the closed-form probit marginal
//!   summed over the demographic cells, age and sex use the Dirichlet tables.
//! * Conditional mutual information is a Monte Carlo average over samples
//!   `(y, x̃)` from the generative model. The joint evaluations inside each
//!   log ratio share one set of factor draws per estimator.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VaError};
use crate::math::{log_norm_cdf, log_sum_exp, mean_sd};
use crate::model::{cell_values, demog_cell, probit_marginal, ModelParams, Standardizer, N_CELLS};
use crate::predict::draw_factor_samples;
use crate::samplers::{sample_categorical, RngStream};

/// One predictor of the cause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predictor {
    Age,
    Sex,
    Symptom(usize),
}

impl Predictor {
    /// Position in the predictor list `(age, sex, x_1, …, x_p)`.
    pub fn index(self) -> usize {
        match self {
            Predictor::Age => 0,
            Predictor::Sex => 1,
            Predictor::Symptom(j) => j + 2,
        }
    }

    pub fn from_index(t: usize) -> Self {
        match t {
            0 => Predictor::Age,
            1 => Predictor::Sex,
            t => Predictor::Symptom(t - 2),
        }
    }

    pub fn all(n_symptoms: usize) -> Vec<Predictor> {
        (0..n_symptoms + 2).map(Predictor::from_index).collect()
    }
}

fn xlogx_ratio(p: f64, q: f64) -> f64 {
    if p > 0.0 {
        p * (p / q).ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    if dist.is_empty()
        || dist.iter().any(|&p| !(0.0..=1.0).contains(&p))
        || (dist.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(VaError::Domain(format!("not a probability vector: {dist:?}")));
    }
    Ok(-dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
}

/// Mutual information of a joint table (rows and columns are the two
/// variables; entries must sum to one).
pub fn discrete_mutual_information(joint: &[Vec<f64>]) -> f64 {
    let cols = joint.first().map_or(0, Vec::len);
    let row_m: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let col_m: Vec<f64> = (0..cols).map(|c| joint.iter().map(|r| r[c]).sum()).collect();
    let mut mi = 0.0;
    for (r, row) in joint.iter().enumerate() {
        for (c, &p) in row.iter().enumerate() {
            mi += xlogx_ratio(p, row_m[r] * col_m[c]);
        }
    }
    mi
}

/// `P(y, x̃_j = v)` as an `L × 2` table.
pub fn predictor_joint(params: &ModelParams, standardizer: &Standardizer, predictor: Predictor) -> Vec<Vec<f64>> {
    let cat = &params.categorical;
    let cells = standardizer.cell_covariates();
    (0..params.n_causes())
        .map(|y| {
            let mut row = vec![0.0; 2];
            for c in 0..N_CELLS {
                let (a, s) = cell_values(c);
                let pc = cat.cause_prior[y] * cat.demog[y][c];
                match predictor {
                    Predictor::Age => row[a as usize] += pc,
                    Predictor::Sex => row[s as usize] += pc,
                    Predictor::Symptom(j) => {
                        let p1 = probit_marginal(&params.loadings, y, &cells[c], j);
                        row[1] += pc * p1;
                        row[0] += pc * (1.0 - p1);
                    }
                }
            }
            row
        })
        .collect()
}

/// `I(y; x̃_j)` in nats.
pub fn mutual_information(params: &ModelParams, standardizer: &Standardizer, predictor: Predictor) -> f64 {
    discrete_mutual_information(&predictor_joint(params, standardizer, predictor))
}

/// Conditional mutual information estimate for one predictor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmiEstimate {
    /// Monte Carlo mean of the log ratios (nats).
    pub value: f64,
    /// Monte Carlo standard deviation of `value`.
    pub mc_sd: f64,
    /// Samples whose joint evaluation was exactly zero and were skipped.
    pub skipped: usize,
    pub samples: usize,
}

/// Symptom-likelihood evaluator over a fixed set of factor draws.
///
/// For every `(y, cell, draw, j)` the linear predictor is precomputed, so a
/// likelihood for any symptom vector costs one pass of table lookups.
pub struct LikelihoodEvaluator<'a> {
    params: &'a ModelParams,
    n_draws: usize,
    p: usize,
    /// `ln Φ(μ)` and `ln Φ(-μ)`, indexed `[(y, cell, draw, j)]`.
    log_pos: Vec<f64>,
    log_neg: Vec<f64>,
}

impl<'a> LikelihoodEvaluator<'a> {
    pub fn new(params: &'a ModelParams, standardizer: &Standardizer, draws: &[f64]) -> Self {
        let (l, p, k2) = (params.n_causes(), params.n_symptoms(), 2 * params.n_factors());
        let n_draws = draws.len() / k2;
        let cells = standardizer.cell_covariates();
        let mut log_pos = vec![0.0; l * N_CELLS * n_draws * p];
        let mut log_neg = vec![0.0; log_pos.len()];
        let mut row = vec![0.0; k2];
        for y in 0..l {
            for (c, w) in cells.iter().enumerate() {
                for j in 0..p {
                    params.loadings.effective_row(y, j, w, &mut row);
                    let mean = params.loadings.mean(y, j, w);
                    for t in 0..n_draws {
                        let eta = &draws[t * k2..(t + 1) * k2];
                        let mu = mean + row.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>();
                        let at = ((y * N_CELLS + c) * n_draws + t) * p + j;
                        log_pos[at] = log_norm_cdf(mu);
                        log_neg[at] = log_norm_cdf(-mu);
                    }
                }
            }
        }
        LikelihoodEvaluator { params, n_draws, p, log_pos, log_neg }
    }

    fn term(&self, y: usize, cell: usize, t: usize, j: usize, v: u8) -> f64 {
        let at = ((y * N_CELLS + cell) * self.n_draws + t) * self.p + j;
        if v == 1 {
            self.log_pos[at]
        } else {
            self.log_neg[at]
        }
    }

    /// `ln P̂(x | y, cell)`.
    pub fn log_lik(&self, x: &[u8], y: usize, cell: usize) -> f64 {
        let logs: Vec<f64> = (0..self.n_draws)
            .map(|t| (0..self.p).map(|j| self.term(y, cell, t, j, x[j])).sum())
            .collect();
        log_sum_exp(&logs) - (self.n_draws as f64).ln()
    }

    /// `[ln P̂(x | y, cell), ln P̂(x with x_0 flipped | …), …]`.
    pub fn log_lik_with_flips(&self, x: &[u8], y: usize, cell: usize) -> Vec<f64> {
        let sums: Vec<f64> = (0..self.n_draws)
            .map(|t| (0..self.p).map(|j| self.term(y, cell, t, j, x[j])).sum())
            .collect();
        let ln_r = (self.n_draws as f64).ln();
        let mut out = Vec::with_capacity(self.p + 1);
        out.push(log_sum_exp(&sums) - ln_r);
        let mut buf = vec![0.0; self.n_draws];
        for j in 0..self.p {
            for t in 0..self.n_draws {
                buf[t] = sums[t] - self.term(y, cell, t, j, x[j]) + self.term(y, cell, t, j, 1 - x[j]);
            }
            out.push(log_sum_exp(&buf) - ln_r);
        }
        out
    }

    /// Unnormalized log joint `ln P(y) + ln P(cell | y) + ln P̂(x | y, cell)`.
    fn log_prior(&self, y: usize, cell: usize) -> f64 {
        let cat = &self.params.categorical;
        cat.cause_prior[y].ln() + cat.demog[y][cell].ln()
    }
}

/// Largest symptom count for which per-configuration likelihoods are cached.
const CACHE_MAX_SYMPTOMS: usize = 20;

/// Samples per parallel block of the CMI estimator.
const CMI_BLOCK: usize = 500;

/// Monte Carlo estimator of `I(y; x̃_j | x̃_{-j})`.
pub struct CmiEstimator<'a> {
    eval: LikelihoodEvaluator<'a>,
    standardizer: Standardizer,
}

#[derive(Default, Clone)]
struct CmiAccum {
    sum: f64,
    sum_sq: f64,
    used: usize,
    skipped: usize,
}

impl<'a> CmiEstimator<'a> {
    /// Estimator whose inner likelihoods use `inner_draws` factor samples
    /// taken from `rng`.
    pub fn new(params: &'a ModelParams, standardizer: &Standardizer, inner_draws: usize, rng: &mut RngStream) -> Self {
        let draws = draw_factor_samples(inner_draws.max(1), 2 * params.n_factors(), rng);
        Self::with_draws(params, standardizer, &draws)
    }

    pub fn with_draws(params: &'a ModelParams, standardizer: &Standardizer, draws: &[f64]) -> Self {
        CmiEstimator { eval: LikelihoodEvaluator::new(params, standardizer, draws), standardizer: *standardizer }
    }

    pub fn evaluator(&self) -> &LikelihoodEvaluator<'a> {
        &self.eval
    }

    /// One generative sample `(y, age, sex, x)` with fresh factors and noise.
    fn sample(&self, rng: &mut RngStream) -> (usize, u8, u8, Vec<u8>) {
        let params = self.eval.params;
        let cat = &params.categorical;
        let y = sample_categorical(&cat.cause_prior, rng);
        let cell = sample_categorical(&cat.demog[y], rng);
        let (a, s) = cell_values(cell);
        let w = self.standardizer.covariates(a, s);
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
        (y, a, s, x)
    }

    fn run_block(&self, predictors: &[Predictor], n: usize, rng: &mut RngStream) -> Vec<CmiAccum> {
        let l = self.eval.params.n_causes();
        let p = self.eval.p;
        let caching = p <= CACHE_MAX_SYMPTOMS;
        let mut cache: HashMap<(usize, usize, u64), Vec<f64>> = HashMap::new();
        let mut acc = vec![CmiAccum::default(); predictors.len()];
        let needs_flips = predictors.iter().any(|p| matches!(p, Predictor::Symptom(_)));
        let lik = |x: &[u8], y: usize, cell: usize, flips: bool, cache: &mut HashMap<_, Vec<f64>>| -> Vec<f64> {
            if caching {
                let key = (y, cell, x.iter().enumerate().fold(0u64, |b, (j, &v)| b | (u64::from(v) << j)));
                cache.entry(key).or_insert_with(|| self.eval.log_lik_with_flips(x, y, cell)).clone()
            } else if flips {
                self.eval.log_lik_with_flips(x, y, cell)
            } else {
                vec![self.eval.log_lik(x, y, cell)]
            }
        };
        for _ in 0..n {
            let (y_r, a_r, s_r, x_r) = self.sample(rng);
            let cell_r = demog_cell(a_r, s_r);
            let cell_age_flip = demog_cell(1 - a_r, s_r);
            let cell_sex_flip = demog_cell(a_r, 1 - s_r);
            let mut here = Vec::with_capacity(l);
            let mut age_alt = Vec::with_capacity(l);
            let mut sex_alt = Vec::with_capacity(l);
            for y in 0..l {
                here.push(lik(&x_r, y, cell_r, needs_flips, &mut cache));
                age_alt.push(lik(&x_r, y, cell_age_flip, false, &mut cache)[0]);
                sex_alt.push(lik(&x_r, y, cell_sex_flip, false, &mut cache)[0]);
            }
            for (slot, pred) in predictors.iter().enumerate() {
                // table[y][v] = ln joint with the predictor set to v; v_r is the sampled value
                let (table, v_r): (Vec<[f64; 2]>, usize) = match *pred {
                    Predictor::Age => (
                        (0..l)
                            .map(|y| {
                                let mut t = [0.0; 2];
                                t[a_r as usize] = self.eval.log_prior(y, cell_r) + here[y][0];
                                t[1 - a_r as usize] = self.eval.log_prior(y, cell_age_flip) + age_alt[y];
                                t
                            })
                            .collect(),
                        a_r as usize,
                    ),
                    Predictor::Sex => (
                        (0..l)
                            .map(|y| {
                                let mut t = [0.0; 2];
                                t[s_r as usize] = self.eval.log_prior(y, cell_r) + here[y][0];
                                t[1 - s_r as usize] = self.eval.log_prior(y, cell_sex_flip) + sex_alt[y];
                                t
                            })
                            .collect(),
                        s_r as usize,
                    ),
                    Predictor::Symptom(j) => {
                        let v = x_r[j] as usize;
                        (
                            (0..l)
                                .map(|y| {
                                    let base = self.eval.log_prior(y, cell_r);
                                    let mut t = [0.0; 2];
                                    t[v] = base + here[y][0];
                                    t[1 - v] = base + here[y][1 + j];
                                    t
                                })
                                .collect(),
                            v,
                        )
                    }
                };
                let a = &mut acc[slot];
                let own = table[y_r][v_r];
                if own == f64::NEG_INFINITY {
                    a.skipped += 1;
                    continue;
                }
                let all: Vec<f64> = table.iter().flat_map(|t| t.iter().copied()).collect();
                let col: Vec<f64> = table.iter().map(|t| t[v_r]).collect();
                let term = own + log_sum_exp(&all) - log_sum_exp(&table[y_r]) - log_sum_exp(&col);
                a.sum += term;
                a.sum_sq += term * term;
                a.used += 1;
            }
        }
        acc
    }

    fn finish(acc: Vec<CmiAccum>) -> Vec<CmiEstimate> {
        acc.into_iter()
            .map(|a| {
                let n = a.used as f64;
                let mean = if a.used > 0 { a.sum / n } else { f64::NAN };
                let var = if a.used > 1 { (a.sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
                CmiEstimate { value: mean, mc_sd: (var / n.max(1.0)).sqrt(), skipped: a.skipped, samples: a.used + a.skipped }
            })
            .collect()
    }

    /// Sequential estimate drawing all `r_tilde` samples from `rng`.
    pub fn estimate_with_rng(&self, predictors: &[Predictor], r_tilde: usize, rng: &mut RngStream) -> Vec<CmiEstimate> {
        Self::finish(self.run_block(predictors, r_tilde, rng))
    }

    /// Parallel estimate; block `b` draws from stream `(seed, sweep, step, b + 1)`.
    pub fn estimate(&self, predictors: &[Predictor], r_tilde: usize, seed: u64, sweep: u64, step: u64) -> Vec<CmiEstimate> {
        let blocks = r_tilde.div_ceil(CMI_BLOCK);
        let parts: Vec<Vec<CmiAccum>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let n = CMI_BLOCK.min(r_tilde - b * CMI_BLOCK);
                let mut rng = RngStream::keyed(seed, sweep, step, b as u64 + 1);
                self.run_block(predictors, n, &mut rng)
            })
            .collect();
        let mut total = vec![CmiAccum::default(); predictors.len()];
        for part in parts {
            for (t, a) in total.iter_mut().zip(part) {
                t.sum += a.sum;
                t.sum_sq += a.sum_sq;
                t.used += a.used;
                t.skipped += a.skipped;
            }
        }
        Self::finish(total)
    }
}

/// Monte Carlo `I(y; x̃_j | x̃_{-j})` for one predictor with `inner_r` shared
/// factor draws and `r_tilde` generative samples, all from `rng`.
pub fn conditional_mutual_information(
    params: &ModelParams,
    standardizer: &Standardizer,
    predictor: Predictor,
    inner_r: usize,
    r_tilde: usize,
    rng: &mut RngStream,
) -> CmiEstimate {
    let est = CmiEstimator::new(params, standardizer, inner_r, rng);
    est.estimate_with_rng(&[predictor], r_tilde, rng)[0]
}

/// Fully enumerated joint `P̂(y, x̃)` for small symptom counts.
///
/// Configurations are bit-encoded: bit 0 is age, bit 1 sex, bit `2 + j`
/// symptom `j`.
#[derive(Clone, Debug)]
pub struct ExactJoint {
    n_causes: usize,
    n_predictors: usize,
    /// `prob[y * 2^(p+2) + u]`
    prob: Vec<f64>,
}

/// Symptom limit for exhaustive enumeration.
pub const MAX_ENUM_SYMPTOMS: usize = 16;

impl ExactJoint {
    /// Enumerate every configuration with likelihoods from `eval`.
    pub fn from_evaluator(eval: &LikelihoodEvaluator<'_>) -> Result<Self> {
        let p = eval.p;
        if p > MAX_ENUM_SYMPTOMS {
            return Err(VaError::Domain(format!("enumeration limited to {MAX_ENUM_SYMPTOMS} symptoms, got {p}")));
        }
        let l = eval.params.n_causes();
        let size = 1usize << (p + 2);
        let mut prob = vec![0.0; l * size];
        let mut x = vec![0u8; p];
        for y in 0..l {
            for u in 0..size {
                let (a, s) = ((u & 1) as u8, ((u >> 1) & 1) as u8);
                for (j, v) in x.iter_mut().enumerate() {
                    *v = ((u >> (j + 2)) & 1) as u8;
                }
                let cell = demog_cell(a, s);
                prob[y * size + u] = (eval.log_prior(y, cell) + eval.log_lik(&x, y, cell)).exp();
            }
        }
        Ok(ExactJoint { n_causes: l, n_predictors: p + 2, prob })
    }

    /// Joint from arbitrary per-configuration probabilities
    /// (`f(y, u) = P(y, x̃ = u)`).
    pub fn from_fn(n_causes: usize, n_symptoms: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let size = 1usize << (n_symptoms + 2);
        let prob = (0..n_causes * size).map(|t| f(t / size, t % size)).collect();
        ExactJoint { n_causes, n_predictors: n_symptoms + 2, prob }
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().sum()
    }

    fn entropy_of(&self, keep_y: bool, mask: usize) -> f64 {
        let size = 1usize << self.n_predictors;
        let mut m: HashMap<(usize, usize), f64> = HashMap::new();
        for y in 0..self.n_causes {
            for u in 0..size {
                let key = (if keep_y { y } else { 0 }, u & mask);
                *m.entry(key).or_insert(0.0) += self.prob[y * size + u];
            }
        }
        -m.values().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    /// `I(y; x̃_A | x̃_B)` for predictor bit masks `A` and `B`.
    pub fn conditional_mi(&self, a: usize, b: usize) -> f64 {
        self.entropy_of(true, b) + self.entropy_of(false, a | b) - self.entropy_of(false, b) - self.entropy_of(true, a | b)
    }

    pub fn all_mask(&self) -> usize {
        (1usize << self.n_predictors) - 1
    }

    pub fn mutual_information(&self, predictor: Predictor) -> f64 {
        self.conditional_mi(1 << predictor.index(), 0)
    }

    pub fn conditional_mutual_information(&self, predictor: Predictor) -> f64 {
        let bit = 1 << predictor.index();
        self.conditional_mi(bit, self.all_mask() & !bit)
    }
}

/// Dependence between the cause and one symptom inside each (age, sex) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlGroups {
    pub symptom: usize,
    /// `D_KL{P(y, x_j | cell) ‖ P(y | cell) P(x_j | cell)}`; `None` when the
    /// cell has zero probability.
    pub cells: [Option<f64>; N_CELLS],
    pub cell_probs: [f64; N_CELLS],
    /// Cell-probability-weighted sum over defined cells.
    pub weighted: f64,
    pub undefined_cells: usize,
}

/// Groupwise KL divergence for symptom `j`.
pub fn kl_by_group(params: &ModelParams, standardizer: &Standardizer, j: usize) -> Result<KlGroups> {
    if j >= params.n_symptoms() {
        return Err(VaError::Domain(format!("symptom index {j} out of range")));
    }
    let cat = &params.categorical;
    let cells = standardizer.cell_covariates();
    let l = params.n_causes();
    let mut out = KlGroups { symptom: j, cells: [None; N_CELLS], cell_probs: [0.0; N_CELLS], weighted: 0.0, undefined_cells: 0 };
    for (c, w) in cells.iter().enumerate() {
        let pc: f64 = (0..l).map(|y| cat.cause_prior[y] * cat.demog[y][c]).sum();
        out.cell_probs[c] = pc;
        if pc <= 0.0 {
            out.undefined_cells += 1;
            continue;
        }
        let table: Vec<Vec<f64>> = (0..l)
            .map(|y| {
                let py = cat.cause_prior[y] * cat.demog[y][c] / pc;
                let p1 = probit_marginal(&params.loadings, y, w, j);
                vec![py * (1.0 - p1), py * p1]
            })
            .collect();
        let kl = discrete_mutual_information(&table);
        out.cells[c] = Some(kl);
        out.weighted += pc * kl;
    }
    Ok(out)
}

/// Relevance measures computed from one kept parameter draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceDraw {
    pub cause_entropy: f64,
    /// `I(y; x̃_j)` in nats, by predictor index.
    pub mi: Vec<f64>,
    pub cmi: Vec<CmiEstimate>,
    pub kl: Vec<KlGroups>,
}

impl RelevanceDraw {
    pub fn standardized_mi(&self) -> Vec<f64> {
        self.mi.iter().map(|v| v / self.cause_entropy).collect()
    }

    pub fn standardized_cmi(&self) -> Vec<f64> {
        self.cmi.iter().map(|c| c.value / self.cause_entropy).collect()
    }
}

/// Every relevance measure for one parameter draw. Inner factor draws come
/// from stream unit 0 of `(seed, sweep, step)`, generative samples from the
/// following units.
pub fn relevance_for_draw(
    params: &ModelParams,
    standardizer: &Standardizer,
    inner_r: usize,
    r_tilde: usize,
    seed: u64,
    sweep: u64,
    step: u64,
) -> Result<RelevanceDraw> {
    let cause_entropy = entropy(&params.categorical.cause_prior)?;
    if cause_entropy <= 0.0 {
        return Err(VaError::Domain(
            "cause entropy is zero (a single cause carries all mass); standardized relevance is undefined".into(),
        ));
    }
    let preds = Predictor::all(params.n_symptoms());
    let mi = preds.iter().map(|&pr| mutual_information(params, standardizer, pr)).collect();
    let mut rng = RngStream::keyed(seed, sweep, step, 0);
    let est = CmiEstimator::new(params, standardizer, inner_r, &mut rng);
    let cmi = est.estimate(&preds, r_tilde, seed, sweep, step);
    let kl = (0..params.n_symptoms()).map(|j| kl_by_group(params, standardizer, j)).collect::<Result<_>>()?;
    Ok(RelevanceDraw { cause_entropy, mi, cmi, kl })
}

/// Posterior summary of one predictor across kept draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorRelevance {
    pub predictor: String,
    pub mi_mean: f64,
    pub mi_sd: f64,
    pub cmi_mean: f64,
    pub cmi_sd: f64,
    /// Average within-draw Monte Carlo SD of the standardized CMI.
    pub cmi_mc_sd: f64,
    pub skipped_fraction: f64,
    pub mi_rank: usize,
    pub cmi_rank: usize,
}

/// Posterior summary of one symptom's groupwise KL divergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub symptom: String,
    /// Mean and SD per cell over draws where the cell is defined.
    pub cell_mean: [Option<f64>; N_CELLS],
    pub cell_sd: [Option<f64>; N_CELLS],
    pub weighted_mean: f64,
    pub weighted_sd: f64,
    pub undefined_draws: usize,
}

/// Relevance draws across the chain and their summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub predictor_names: Vec<String>,
    pub draws: Vec<RelevanceDraw>,
}

fn ranks_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &t) in order.iter().enumerate() {
        rank[t] = r + 1;
    }
    rank
}

impl RelevanceReport {
    /// Standardized MI and CMI as posterior mean ± SD, ranked by mean.
    pub fn predictor_summary(&self) -> Vec<PredictorRelevance> {
        let n_pred = self.predictor_names.len();
        let col = |f: &dyn Fn(&RelevanceDraw, usize) -> f64, t: usize| -> Vec<f64> {
            self.draws.iter().map(|d| f(d, t)).collect()
        };
        let mut rows: Vec<PredictorRelevance> = (0..n_pred)
            .map(|t| {
                let (mi_mean, mi_sd) = mean_sd(&col(&|d, t| d.mi[t] / d.cause_entropy, t));
                let (cmi_mean, cmi_sd) = mean_sd(&col(&|d, t| d.cmi[t].value / d.cause_entropy, t));
                let (cmi_mc_sd, _) = mean_sd(&col(&|d, t| d.cmi[t].mc_sd / d.cause_entropy, t));
                let skipped: usize = self.draws.iter().map(|d| d.cmi[t].skipped).sum();
                let total: usize = self.draws.iter().map(|d| d.cmi[t].samples).sum();
                PredictorRelevance {
                    predictor: self.predictor_names[t].clone(),
                    mi_mean,
                    mi_sd,
                    cmi_mean,
                    cmi_sd,
                    cmi_mc_sd,
                    skipped_fraction: if total > 0 { skipped as f64 / total as f64 } else { 0.0 },
                    mi_rank: 0,
                    cmi_rank: 0,
                }
            })
            .collect();
        let mi_ranks = ranks_desc(&rows.iter().map(|r| r.mi_mean).collect::<Vec<_>>());
        let cmi_ranks = ranks_desc(&rows.iter().map(|r| r.cmi_mean).collect::<Vec<_>>());
        for (t, r) in rows.iter_mut().enumerate() {
            r.mi_rank = mi_ranks[t];
            r.cmi_rank = cmi_ranks[t];
        }
        rows
    }

    pub fn kl_summary(&self) -> Vec<KlSummary> {
        let p = self.draws.first().map_or(0, |d| d.kl.len());
        (0..p)
            .map(|j| {
                let mut cell_mean = [None; N_CELLS];
                let mut cell_sd = [None; N_CELLS];
                for c in 0..N_CELLS {
                    let vals: Vec<f64> = self.draws.iter().filter_map(|d| d.kl[j].cells[c]).collect();
                    if !vals.is_empty() {
                        let (m, s) = mean_sd(&vals);
                        cell_mean[c] = Some(m);
                        cell_sd[c] = Some(s);
                    }
                }
                let (weighted_mean, weighted_sd) =
                    mean_sd(&self.draws.iter().map(|d| d.kl[j].weighted).collect::<Vec<_>>());
                KlSummary {
                    symptom: self.predictor_names[j + 2].clone(),
                    cell_mean,
                    cell_sd,
                    weighted_mean,
                    weighted_sd,
                    undefined_draws: self.draws.iter().filter(|d| d.kl[j].undefined_cells > 0).count(),
                }
            })
            .collect()
    }
}
