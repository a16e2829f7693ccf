//! Evaluation and exploratory statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::VaDataset;
use crate::error::{Result, VaError};
use crate::math::quantile_sorted;

/// `1 − Σ|P₀ − P| / (2 (1 − min P₀))`.
pub fn csmf_accuracy(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(VaError::Domain(format!(
            "cause fraction lengths differ: {} vs {}",
            truth.len(),
            estimate.len()
        )));
    }
    let min = truth.iter().copied().fold(f64::INFINITY, f64::min);
    if truth.is_empty() || min >= 1.0 {
        return Err(VaError::Domain("CSMF accuracy needs min P0 < 1".into()));
    }
    let l1: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b).abs()).sum();
    Ok(1.0 - l1 / (2.0 * (1.0 - min)))
}

/// Cramér's V on the pairwise-complete contingency table, with the
/// unadjusted Pearson statistic. `None` when either column has fewer than
/// two observed levels after filtering.
pub fn cramers_v(a: &[Option<u32>], b: &[Option<u32>]) -> Option<f64> {
    let mut table: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut rows: BTreeMap<u32, f64> = BTreeMap::new();
    let mut cols: BTreeMap<u32, f64> = BTreeMap::new();
    let mut n = 0.0;
    for (u, v) in a.iter().zip(b) {
        if let (Some(u), Some(v)) = (u, v) {
            *table.entry((*u, *v)).or_default() += 1.0;
            *rows.entry(*u).or_default() += 1.0;
            *cols.entry(*v).or_default() += 1.0;
            n += 1.0;
        }
    }
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let mut chi2 = 0.0;
    for (&r, &nr) in &rows {
        for (&c, &nc) in &cols {
            let expected = nr * nc / n;
            let observed = table.get(&(r, c)).copied().unwrap_or(0.0);
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    let k = (rows.len().min(cols.len()) - 1) as f64;
    Some((chi2 / n / k).sqrt().min(1.0))
}

/// Equal-tailed central interval of `draws` at `level`.
pub fn central_interval(draws: &[f64], level: f64) -> (f64, f64) {
    let mut s = draws.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

/// Fraction of causes whose true fraction lies inside the central interval
/// of its posterior draws. `draws` holds one CSMF vector per kept sweep.
pub fn interval_coverage(draws: &[Vec<f64>], truth: &[f64], level: f64) -> Result<f64> {
    if draws.len() < 2 {
        return Err(VaError::Domain("interval coverage needs at least two draws".into()));
    }
    if draws.iter().any(|d| d.len() != truth.len()) {
        return Err(VaError::Dimension("draw length differs from number of causes".into()));
    }
    let covered = (0..truth.len())
        .filter(|&l| {
            let col: Vec<f64> = draws.iter().map(|d| d[l]).collect();
            let (lo, hi) = central_interval(&col, level);
            lo <= truth[l] && truth[l] <= hi
        })
        .count();
    Ok(covered as f64 / truth.len() as f64)
}

/// Accuracy and coverage of an estimated CSMF against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub csmf_accuracy: f64,
    pub coverage: f64,
    pub level: f64,
    pub true_csmf: Vec<f64>,
    pub estimated_csmf: Vec<f64>,
}

pub fn evaluate_csmf(draws: &[Vec<f64>], truth: &[f64], level: f64) -> Result<EvalReport> {
    let first = draws.first().ok_or_else(|| VaError::Domain("no CSMF draws".into()))?;
    let mut mean = vec![0.0; first.len()];
    for d in draws {
        mean.iter_mut().zip(d).for_each(|(m, v)| *m += v / draws.len() as f64);
    }
    Ok(EvalReport {
        csmf_accuracy: csmf_accuracy(truth, &mean)?,
        coverage: interval_coverage(draws, truth, level)?,
        level,
        true_csmf: truth.to_vec(),
        estimated_csmf: mean,
    })
}

/// Demographic subgroup used for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Age(u8),
    Sex(u8),
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Age(0), Group::Age(1), Group::Sex(0), Group::Sex(1)];

    pub fn contains(self, data: &VaDataset, i: usize) -> bool {
        match self {
            Group::Age(v) => data.age[i] == Some(v),
            Group::Sex(v) => data.sex[i] == Some(v),
        }
    }

    pub fn label(self) -> String {
        match self {
            Group::Age(v) => format!("age={v}"),
            Group::Sex(v) => format!("sex={v}"),
        }
    }
}

/// Cramér's V of one symptom pair within one (cause, group).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairAssociation {
    pub cause: usize,
    pub group: Group,
    pub a: usize,
    pub b: usize,
    pub v: Option<f64>,
    /// Pairwise-complete rows.
    pub n: usize,
}

/// Symmetric `p × p` Cramér's V matrix over `rows`, unit diagonal where the
/// symptom is non-constant.
pub fn cramers_v_matrix(data: &VaDataset, rows: &[usize]) -> Vec<Vec<Option<f64>>> {
    let p = data.p();
    let cols: Vec<Vec<Option<u32>>> =
        (0..p).map(|j| rows.iter().map(|&i| data.symptom(i, j).map(u32::from)).collect()).collect();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a..p).map(move |b| (a, b))).collect();
    let vals: Vec<Option<f64>> = pairs.par_iter().map(|&(a, b)| cramers_v(&cols[a], &cols[b])).collect();
    let mut m = vec![vec![None; p]; p];
    for (&(a, b), v) in pairs.iter().zip(vals) {
        m[a][b] = v;
        m[b][a] = v;
    }
    m
}

/// Every symptom pair `a < b` for every training cause and group:
/// `p(p−1)/2` rows per (cause, group).
pub fn pair_associations(data: &VaDataset) -> Vec<PairAssociation> {
    let training = data.training_rows();
    let p = data.p();
    let mut out = Vec::new();
    for cause in 0..data.n_causes() {
        for group in Group::ALL {
            let rows: Vec<usize> = training
                .iter()
                .copied()
                .filter(|&i| data.cause[i] == Some(cause) && group.contains(data, i))
                .collect();
            let cols: Vec<Vec<Option<u32>>> =
                (0..p).map(|j| rows.iter().map(|&i| data.symptom(i, j).map(u32::from)).collect()).collect();
            let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect();
            let rows_out: Vec<PairAssociation> = pairs
                .par_iter()
                .map(|&(a, b)| PairAssociation {
                    cause,
                    group,
                    a,
                    b,
                    v: cramers_v(&cols[a], &cols[b]),
                    n: cols[a].iter().zip(&cols[b]).filter(|(u, v)| u.is_some() && v.is_some()).count(),
                })
                .collect();
            out.extend(rows_out);
        }
    }
    out
}

/// Between-group difference of one pair's association within a cause.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub cause: usize,
    /// `"age"` or `"sex"`.
    pub factor: String,
    pub a: usize,
    pub b: usize,
    pub v0: Option<f64>,
    pub v1: Option<f64>,
    /// `|v1 − v0|`, undefined when either side is.
    pub abs_diff: Option<f64>,
}

pub fn pair_differences(assoc: &[PairAssociation]) -> Vec<PairDifference> {
    let index: BTreeMap<(usize, Group, usize, usize), Option<f64>> =
        assoc.iter().map(|r| ((r.cause, r.group, r.a, r.b), r.v)).collect();
    let mut out = Vec::new();
    for r in assoc {
        let (factor, other) = match r.group {
            Group::Age(0) => ("age", Group::Age(1)),
            Group::Sex(0) => ("sex", Group::Sex(1)),
            _ => continue,
        };
        let v1 = index.get(&(r.cause, other, r.a, r.b)).copied().flatten();
        out.push(PairDifference {
            cause: r.cause,
            factor: factor.into(),
            a: r.a,
            b: r.b,
            v0: r.v,
            v1,
            abs_diff: r.v.zip(v1).map(|(x, y)| (y - x).abs()),
        });
    }
    out
}

/// Age and sex composition of one cause in the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemogProportions {
    pub cause: usize,
    pub n: usize,
    /// Share with age = 1 among rows with observed age.
    pub age1: Option<f64>,
    pub sex1: Option<f64>,
    pub age_missing: usize,
    pub sex_missing: usize,
}

pub fn demog_proportions(data: &VaDataset) -> Vec<DemogProportions> {
    let training = data.training_rows();
    (0..data.n_causes())
        .map(|cause| {
            let rows: Vec<usize> = training.iter().copied().filter(|&i| data.cause[i] == Some(cause)).collect();
            let share = |col: &[Option<u8>]| {
                let obs: Vec<u8> = rows.iter().filter_map(|&i| col[i]).collect();
                (!obs.is_empty()).then(|| obs.iter().filter(|&&v| v == 1).count() as f64 / obs.len() as f64)
            };
            DemogProportions {
                cause,
                n: rows.len(),
                age1: share(&data.age),
                sex1: share(&data.sex),
                age_missing: rows.iter().filter(|&&i| data.age[i].is_none()).count(),
                sex_missing: rows.iter().filter(|&&i| data.sex[i].is_none()).count(),
            }
        })
        .collect()
}
