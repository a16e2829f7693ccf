//! In-memory verbal-autopsy dataset.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VaError};

/// Role of an individual in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Target,
}

/// Binary symptom matrix with a missingness mask, binary age/sex and cause
/// labels.
///
/// Causes are dense indices `0..n_causes` into `cause_labels`. For training
/// rows `cause` is the observed label. For target rows it holds the ground
/// truth when one was supplied; the sampler never reads it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaDataset {
    pub ids: Vec<String>,
    pub symptom_names: Vec<String>,
    pub cause_labels: Vec<String>,
    x: Vec<u8>,
    missing: Vec<bool>,
    pub age: Vec<Option<u8>>,
    pub sex: Vec<Option<u8>>,
    pub cause: Vec<Option<usize>>,
    pub split: Vec<Split>,
}

/// One row handed to [`VaDataset::new`]. `None` symptom cells are missing.
#[derive(Clone, Debug)]
pub struct Record {
    pub id: String,
    pub symptoms: Vec<Option<u8>>,
    pub age: Option<u8>,
    pub sex: Option<u8>,
    pub cause: Option<usize>,
    pub split: Split,
}

impl VaDataset {
    pub fn new(
        symptom_names: Vec<String>,
        cause_labels: Vec<String>,
        records: Vec<Record>,
    ) -> Result<Self> {
        let p = symptom_names.len();
        let n = records.len();
        let mut ds = VaDataset {
            ids: Vec::with_capacity(n),
            symptom_names,
            cause_labels,
            x: Vec::with_capacity(n * p),
            missing: Vec::with_capacity(n * p),
            age: Vec::with_capacity(n),
            sex: Vec::with_capacity(n),
            cause: Vec::with_capacity(n),
            split: Vec::with_capacity(n),
        };
        for rec in records {
            if rec.symptoms.len() != p {
                return Err(VaError::Dimension(format!(
                    "row '{}' has {} symptoms, expected {p}",
                    rec.id,
                    rec.symptoms.len()
                )));
            }
            for s in &rec.symptoms {
                ds.x.push(s.unwrap_or(0));
                ds.missing.push(s.is_none());
            }
            ds.ids.push(rec.id);
            ds.age.push(rec.age);
            ds.sex.push(rec.sex);
            ds.cause.push(rec.cause);
            ds.split.push(rec.split);
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = (self.n(), self.p());
        if p == 0 {
            return Err(VaError::Data("at least one symptom column is required".into()));
        }
        if self.n_causes() < 2 {
            return Err(VaError::Data("at least two causes are required".into()));
        }
        if self.x.len() != n * p || self.missing.len() != n * p {
            return Err(VaError::Dimension("symptom matrix size".into()));
        }
        for i in 0..n {
            if self.split[i] == Split::Training && self.cause[i].is_none() {
                return Err(VaError::Data(format!(
                    "training row '{}' has no cause",
                    self.ids[i]
                )));
            }
            if let Some(c) = self.cause[i] {
                if c >= self.n_causes() {
                    return Err(VaError::Data(format!(
                        "row '{}' has cause index {c} outside the label map",
                        self.ids[i]
                    )));
                }
            }
            for v in [self.age[i], self.sex[i]].into_iter().flatten() {
                if v > 1 {
                    return Err(VaError::Data(format!("row '{}': age/sex must be 0 or 1", self.ids[i])));
                }
            }
        }
        if self.x.iter().any(|&v| v > 1) {
            return Err(VaError::Data("symptoms must be binary".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn p(&self) -> usize {
        self.symptom_names.len()
    }

    pub fn n_causes(&self) -> usize {
        self.cause_labels.len()
    }

    /// Symptom values for row `i`; entries under a missing mask are 0.
    pub fn x_row(&self, i: usize) -> &[u8] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    /// Missingness mask for row `i` (`true` = missing).
    pub fn mask_row(&self, i: usize) -> &[bool] {
        let p = self.p();
        &self.missing[i * p..(i + 1) * p]
    }

    pub fn symptom(&self, i: usize, j: usize) -> Option<u8> {
        let k = i * self.p() + j;
        (!self.missing[k]).then_some(self.x[k])
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn training_rows(&self) -> Vec<usize> {
        self.rows_in(Split::Training)
    }

    pub fn target_rows(&self) -> Vec<usize> {
        self.rows_in(Split::Target)
    }

    /// Predictor names with age and sex prepended to the symptoms.
    pub fn predictor_names(&self) -> Vec<String> {
        let mut names = vec!["age".to_string(), "sex".to_string()];
        names.extend(self.symptom_names.iter().cloned());
        names
    }

    pub fn symptom_missing_rate(&self) -> f64 {
        if self.missing.is_empty() {
            return 0.0;
        }
        self.missing.iter().filter(|&&m| m).count() as f64 / self.missing.len() as f64
    }

    pub fn age_missing_rate(&self) -> f64 {
        missing_rate(&self.age)
    }

    pub fn sex_missing_rate(&self) -> f64 {
        missing_rate(&self.sex)
    }

    /// New dataset holding `rows` in the given order with their splits
    /// replaced by `split_of`.
    pub fn subset(&self, rows: &[usize], split_of: impl Fn(usize) -> Split) -> Result<Self> {
        let records = rows
            .iter()
            .map(|&i| Record {
                id: self.ids[i].clone(),
                symptoms: (0..self.p()).map(|j| self.symptom(i, j)).collect(),
                age: self.age[i],
                sex: self.sex[i],
                cause: self.cause[i],
                split: split_of(i),
            })
            .collect();
        VaDataset::new(self.symptom_names.clone(), self.cause_labels.clone(), records)
    }

    /// Empirical cause fractions over the given rows (rows without a cause
    /// are skipped).
    pub fn cause_fractions(&self, rows: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_causes()];
        let mut total = 0.0;
        for &i in rows {
            if let Some(c) = self.cause[i] {
                counts[c] += 1.0;
                total += 1.0;
            }
        }
        if total > 0.0 {
            counts.iter_mut().for_each(|c| *c /= total);
        }
        counts
    }
}

fn missing_rate(v: &[Option<u8>]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().filter(|a| a.is_none()).count() as f64 / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, s: Vec<Option<u8>>, cause: Option<usize>, split: Split) -> Record {
        Record { id: id.into(), symptoms: s, age: Some(0), sex: None, cause, split }
    }

    #[test]
    fn mask_matches_missing_cells() {
        let ds = VaDataset::new(
            vec!["a".into(), "b".into()],
            vec!["c1".into(), "c2".into()],
            vec![
                rec("1", vec![Some(1), None], Some(0), Split::Training),
                rec("2", vec![None, Some(0)], None, Split::Target),
            ],
        )
        .unwrap();
        assert_eq!(ds.mask_row(0), &[false, true]);
        assert_eq!(ds.mask_row(1), &[true, false]);
        assert_eq!(ds.symptom(0, 0), Some(1));
        assert_eq!(ds.symptom(1, 0), None);
        assert_eq!(ds.training_rows(), vec![0]);
        assert_eq!(ds.target_rows(), vec![1]);
        assert!((ds.symptom_missing_rate() - 0.5).abs() < 1e-15);
        assert_eq!(ds.sex_missing_rate(), 1.0);
        assert_eq!(ds.predictor_names(), vec!["age", "sex", "a", "b"]);
    }

    #[test]
    fn training_row_without_cause_is_rejected() {
        let err = VaDataset::new(
            vec!["a".into()],
            vec!["c1".into(), "c2".into()],
            vec![rec("1", vec![Some(1)], None, Split::Training)],
        );
        assert!(matches!(err, Err(VaError::Data(_))));
    }

    #[test]
    fn single_cause_is_rejected() {
        let err = VaDataset::new(
            vec!["a".into()],
            vec!["c1".into()],
            vec![rec("1", vec![Some(1)], Some(0), Split::Training)],
        );
        assert!(err.is_err());
    }
}
