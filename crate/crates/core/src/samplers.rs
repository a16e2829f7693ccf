//! Random-variate generation with reproducible, keyed streams.
//!
//! Every parallel unit of work draws from its own [`RngStream`] keyed by
//! `(seed, sweep, step, unit)`, so results never depend on how work is
//! scheduled across threads.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Result, VaError};
use crate::math::log_sum_exp;

/// Seeded ChaCha stream identified by `(seed, stream_id)` or by a full key.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

const ROOT_STREAM_TAG: u64 = u64::MAX;

impl RngStream {
    /// Stream for worker `stream_id`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::from_key(seed, [ROOT_STREAM_TAG, 0, stream_id])
    }

    /// Stream for one unit of one step of one sweep.
    pub fn keyed(seed: u64, sweep: u64, step: u64, unit: u64) -> Self {
        debug_assert!(sweep != ROOT_STREAM_TAG);
        Self::from_key(seed, [sweep, step, unit])
    }

    fn from_key(seed: u64, key: [u64; 3]) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        for (t, k) in key.iter().enumerate() {
            bytes[8 * (t + 1)..8 * (t + 2)].copy_from_slice(&k.to_le_bytes());
        }
        RngStream { seed, stream_id: key[2], rng: ChaCha8Rng::from_seed(bytes) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform on the open interval (0, 1).
    pub fn open_uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Which half-line a truncated normal is restricted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// `[0, ∞)`
    Positive,
    /// `(-∞, 0]`
    Negative,
}

/// Lower bound above which the exponential-proposal sampler is used.
const TAIL_SWITCH: f64 = 0.47;

/// Draw from `N(mean, 1)` restricted to the given half-line.
pub fn sample_truncated_normal(mean: f64, support: Support, rng: &mut RngStream) -> f64 {
    match support {
        Support::Positive => mean + standard_normal_above(-mean, rng),
        Support::Negative => -(-mean + standard_normal_above(mean, rng)),
    }
}

/// Standard normal restricted to `[lower, ∞)`.
fn standard_normal_above(lower: f64, rng: &mut RngStream) -> f64 {
    if lower <= TAIL_SWITCH {
        loop {
            let z = rng.standard_normal();
            if z >= lower {
                return z;
            }
        }
    }
    // Exponential proposal with the optimal rate.
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lower + e / rate;
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.open_uniform() <= accept {
            return z;
        }
    }
}

/// `Ga(shape, rate)` with mean `shape / rate`.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_gamma(shape, rate)?;
    Ok(sample_log_gamma_unit(shape, rng).exp() / rate)
}

fn check_gamma(shape: f64, rate: f64) -> Result<()> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(VaError::Domain(format!(
            "gamma requires positive finite shape and rate, got shape={shape}, rate={rate}"
        )));
    }
    Ok(())
}

/// `ln G` for `G ~ Ga(shape, 1)`. Marsaglia–Tsang for shape ≥ 1; smaller
/// shapes draw at `shape + 1` and apply the `U^(1/shape)` boost in log space.
fn sample_log_gamma_unit(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        let boost = rng.open_uniform().ln() / shape;
        return sample_log_gamma_unit(shape + 1.0, rng) + boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open_uniform();
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d.ln() + v.ln();
        }
    }
}

/// Draw a probability vector from `Dirichlet(concentration)`.
pub fn sample_dirichlet(concentration: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(VaError::Domain("Dirichlet needs at least one concentration".into()));
    }
    if let Some(bad) = concentration.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
        return Err(VaError::Domain(format!("Dirichlet concentration must be positive, got {bad}")));
    }
    if concentration.len() == 1 {
        return Ok(vec![1.0]);
    }
    let logs: Vec<f64> = concentration.iter().map(|&a| sample_log_gamma_unit(a, rng)).collect();
    let total = log_sum_exp(&logs);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - total).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Cholesky factor with the diagonal-jitter repair policy: on failure add
/// `1e-10 · trace / d` to the diagonal and retry, at most three times.
/// Returns the factor and the number of jitters applied.
pub fn cholesky_with_jitter(
    matrix: DMatrix<f64>,
    context: &str,
) -> Result<(Cholesky<f64, Dyn>, u32)> {
    let d = matrix.nrows();
    let bump = 1e-10 * matrix.trace().abs().max(f64::MIN_POSITIVE) / d.max(1) as f64;
    let mut m = matrix;
    for attempt in 0..=3u32 {
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Ok((ch, attempt));
        }
        for t in 0..d {
            m[(t, t)] += bump;
        }
    }
    Err(VaError::Numerical(format!("matrix not positive definite after jitter ({context})")))
}

/// Gaussian in information form: precision `Q` and linear term `b`, so that
/// the mean is `Q⁻¹ b` and the covariance `Q⁻¹`.
#[derive(Clone, Debug)]
pub struct GaussianPrecision {
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
    jitters: u32,
}

impl GaussianPrecision {
    pub fn new(precision: DMatrix<f64>, linear: DVector<f64>, context: &str) -> Result<Self> {
        let (chol, jitters) = cholesky_with_jitter(precision, context)?;
        let mean = chol.solve(&linear);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(VaError::Numerical(format!("non-finite posterior mean ({context})")));
        }
        Ok(GaussianPrecision { chol, mean, jitters })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Number of jitter repairs the factorization needed.
    pub fn jitters(&self) -> u32 {
        self.jitters
    }

    /// `mean + L⁻ᵀ ε` with `Q = L Lᵀ`, `ε ~ N(0, I)`.
    pub fn sample(&self, rng: &mut RngStream) -> DVector<f64> {
        let d = self.mean.len();
        let eps = DVector::from_iterator(d, (0..d).map(|_| rng.standard_normal()));
        let dev = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + dev
    }
}

/// Draw from `N(mean, covariance)`.
pub fn sample_mvn(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(VaError::Dimension(format!(
            "covariance is {}x{}, mean has length {d}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let (chol, _) = cholesky_with_jitter(covariance.clone(), "sample_mvn")?;
    let eps = DVector::from_iterator(d, (0..d).map(|_| rng.standard_normal()));
    Ok(mean + chol.l() * eps)
}

/// Fill `out` with independent standard normals.
pub fn fill_standard_normal(out: &mut [f64], rng: &mut RngStream) {
    for v in out.iter_mut() {
        *v = rng.standard_normal();
    }
}

/// Index drawn from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (t, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return t;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
