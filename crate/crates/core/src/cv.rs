//! Choice of the factor count `K` by stratified cross-validation.
//!
//! Each candidate is scored by the mean held-out log posterior probability
//! of the true cause, averaged over folds. Short chains keep this tractable.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Split, VaDataset};
use crate::error::{Result, VaError};
use crate::gibbs::{step, ChainConfig, GibbsSampler};
use crate::samplers::RngStream;

/// Fold count and the reduced chain budget used inside cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 5, iterations: 2_000, burn_in: 500, thin: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub selected: usize,
    pub scores: Vec<KScore>,
    /// Plain-language definition of the score, recorded in manifests.
    pub score_definition: String,
}

pub const SCORE_DEFINITION: &str =
    "mean over folds of the mean held-out log posterior probability of the true cause";

/// Stratified fold index for every training row (`None` for other rows).
/// Rows of each cause are shuffled and dealt round-robin, continuing the
/// deal where the previous cause stopped.
pub fn stratified_folds(data: &VaDataset, folds: usize, seed: u64) -> Result<Vec<Option<usize>>> {
    if folds < 2 {
        return Err(VaError::Config("cross-validation needs at least 2 folds".into()));
    }
    let mut rng = RngStream::keyed(seed, 0, step::CV, 0);
    let mut out = vec![None; data.n()];
    let mut next = 0;
    for cause in 0..data.n_causes() {
        let mut rows: Vec<usize> =
            data.training_rows().into_iter().filter(|&i| data.cause[i] == Some(cause)).collect();
        if rows.len() == 1 {
            return Err(VaError::Data(format!(
                "cause '{}' has a single training row; every fold split would leave it unseen",
                data.cause_labels[cause]
            )));
        }
        rows.shuffle(&mut rng);
        for i in rows {
            out[i] = Some(next % folds);
            next += 1;
        }
    }
    Ok(out)
}

/// Score one candidate on one fold.
fn fold_score(data: &VaDataset, fold_of: &[Option<usize>], fold: usize, config: &ChainConfig) -> Result<f64> {
    let rows: Vec<usize> = (0..data.n()).filter(|&i| fold_of[i].is_some()).collect();
    let sub = data.subset(&rows, |i| if fold_of[i] == Some(fold) { Split::Target } else { Split::Training })?;
    let out = GibbsSampler::new(&sub, config.clone())?.run()?;
    let truth: Vec<usize> = out.target_rows.iter().map(|&i| sub.cause[i].expect("training rows have causes")).collect();
    if truth.is_empty() {
        return Err(VaError::Data(format!("fold {fold} is empty")));
    }
    let total: f64 = out
        .individual_probs
        .iter()
        .zip(&truth)
        .map(|(probs, &y)| probs[y].max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / truth.len() as f64)
}

/// Pick the best `K` among `candidates`; ties go to the smallest.
pub fn select_k(data: &VaDataset, candidates: &[usize], base: &ChainConfig, cv: &CvConfig) -> Result<KSelection> {
    if candidates.is_empty() {
        return Err(VaError::Config("no candidate K values".into()));
    }
    let fold_of = stratified_folds(data, cv.folds, base.seed)?;
    let jobs: Vec<(usize, usize)> =
        candidates.iter().flat_map(|&k| (0..cv.folds).map(move |f| (k, f))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, f)| {
            let config = ChainConfig {
                n_factors: k,
                iterations: cv.iterations,
                burn_in: cv.burn_in,
                thin: cv.thin,
                transductive: false,
                seed: base.seed.wrapping_add(f as u64 + 1),
                ..base.clone()
            };
            fold_score(data, &fold_of, f, &config)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<KScore> = candidates
        .iter()
        .enumerate()
        .map(|(t, &k)| {
            let fold_scores = scores[t * cv.folds..(t + 1) * cv.folds].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / cv.folds as f64;
            KScore { k, fold_scores, mean }
        })
        .collect();
    let selected = best_k(&out.iter().map(|s| (s.k, s.mean)).collect::<Vec<_>>()).expect("candidates are nonempty");
    out.sort_by_key(|s| s.k);
    for s in &out {
        log::info!("K = {}: mean held-out score {:.5}", s.k, s.mean);
    }
    Ok(KSelection { selected, scores: out, score_definition: SCORE_DEFINITION.into() })
}

/// Tie rule applied to precomputed scores.
pub fn best_k(scores: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, s) in scores {
        best = match best {
            Some((bk, bs)) if bs > s || (bs == s && bk < k) => Some((bk, bs)),
            _ => Some((k, s)),
        };
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn toy(n_per: usize) -> VaDataset {
        let mut records = Vec::new();
        for c in 0..3 {
            for t in 0..n_per {
                records.push(Record {
                    id: format!("{c}-{t}"),
                    symptoms: vec![Some((t % 2) as u8), Some(c as u8 % 2)],
                    age: Some((t % 2) as u8),
                    sex: Some(((t / 2) % 2) as u8),
                    cause: Some(c),
                    split: Split::Training,
                });
            }
        }
        VaDataset::new(vec!["a".into(), "b".into()], vec!["x".into(), "y".into(), "z".into()], records).unwrap()
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let d = toy(10);
        let f = stratified_folds(&d, 5, 3).unwrap();
        for fold in 0..5 {
            assert_eq!(f.iter().filter(|v| **v == Some(fold)).count(), 6);
        }
        for c in 0..3 {
            for fold in 0..5 {
                let n = (0..d.n()).filter(|&i| d.cause[i] == Some(c) && f[i] == Some(fold)).count();
                assert_eq!(n, 2);
            }
        }
    }

    #[test]
    fn singleton_cause_is_an_error() {
        let mut d = toy(3);
        d.cause[0] = Some(0);
        let rows: Vec<usize> = (2..d.n()).collect();
        let d = d.subset(&rows, |_| Split::Training).unwrap();
        assert!(stratified_folds(&d, 5, 0).is_err());
    }

    #[test]
    fn ties_go_to_smallest_k() {
        assert_eq!(best_k(&[(3, -1.0), (2, -1.0), (1, -2.0)]), Some(2));
        assert_eq!(best_k(&[(1, -1.0), (2, -0.5)]), Some(2));
        assert_eq!(best_k(&[]), None);
    }

    #[test]
    fn single_candidate_is_selected_with_scores() {
        let d = toy(10);
        let base = ChainConfig { mc_samples: 20, ..ChainConfig::default() };
        let cv = CvConfig { folds: 2, iterations: 20, burn_in: 10, thin: 5 };
        let s = select_k(&d, &[2], &base, &cv).unwrap();
        assert_eq!(s.selected, 2);
        assert_eq!(s.scores[0].fold_scores.len(), 2);
        assert!(s.scores[0].mean.is_finite());
    }
}
