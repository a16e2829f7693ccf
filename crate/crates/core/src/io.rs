//! CSV ingestion, serialization helpers and the flat key-value config format.
//!
//! Input files have a header row with `id`, `cause`, `age` and `sex` columns
//! (in any position); every other column is a binary symptom, kept in file
//! order. Symptom cells are `0`, `1` or the missing token.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Record, Split, VaDataset};
use crate::error::{Result, VaError};

/// How the raw age column becomes binary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeRule {
    /// Already 0/1.
    Binary,
    /// `age >= cutoff` is 1 ("late"), below is 0 ("early").
    Threshold(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub train: PathBuf,
    pub target: Option<PathBuf>,
    pub missing_token: String,
    pub age_rule: AgeRule,
    /// Cause label order; defaults to the sorted distinct training causes.
    pub cause_labels: Option<Vec<String>>,
}

impl IngestSpec {
    pub fn new(train: impl Into<PathBuf>, age_rule: AgeRule) -> Self {
        IngestSpec { train: train.into(), target: None, missing_token: ".".into(), age_rule, cause_labels: None }
    }
}

const ROLE_COLUMNS: [&str; 4] = ["id", "cause", "age", "sex"];

struct RawTable {
    file: String,
    symptom_names: Vec<String>,
    rows: Vec<RawRow>,
}

struct RawRow {
    line: usize,
    id: String,
    cause: String,
    age: String,
    sex: String,
    symptoms: Vec<String>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| VaError::Parse {
            file: file.clone(),
            row: 1,
            column: name.into(),
            message: "required column missing from header".into(),
        })
    };
    let [id_c, cause_c, age_c, sex_c] = [find("id")?, find("cause")?, find("age")?, find("sex")?];
    let symptom_cols: Vec<usize> =
        (0..headers.len()).filter(|c| !ROLE_COLUMNS.contains(&headers[*c].as_str())).collect();
    let symptom_names = symptom_cols.iter().map(|&c| headers[c].clone()).collect();
    let mut rows = Vec::new();
    for (t, rec) in reader.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("").to_string();
        rows.push(RawRow {
            line: t + 2,
            id: get(id_c),
            cause: get(cause_c),
            age: get(age_c),
            sex: get(sex_c),
            symptoms: symptom_cols.iter().map(|&c| get(c)).collect(),
        });
    }
    Ok(RawTable { file, symptom_names, rows })
}

fn parse_binary(cell: &str, token: &str, file: &str, row: usize, column: &str) -> Result<Option<u8>> {
    match cell {
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        c if c == token => Ok(None),
        c => Err(VaError::Parse {
            file: file.into(),
            row,
            column: column.into(),
            message: format!("expected 0, 1 or '{token}', found '{c}'"),
        }),
    }
}

fn parse_age(cell: &str, spec: &IngestSpec, file: &str, row: usize) -> Result<Option<u8>> {
    if cell.is_empty() || cell == spec.missing_token {
        return Ok(None);
    }
    match spec.age_rule {
        AgeRule::Binary => parse_binary(cell, &spec.missing_token, file, row, "age"),
        AgeRule::Threshold(cut) => match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(u8::from(v >= cut))),
            _ => Err(VaError::Parse {
                file: file.into(),
                row,
                column: "age".into(),
                message: format!("expected a numeric age, found '{cell}'"),
            }),
        },
    }
}

fn records_from(
    table: &RawTable,
    spec: &IngestSpec,
    split: Split,
    labels: &BTreeMap<String, usize>,
) -> Result<Vec<Record>> {
    let token = spec.missing_token.as_str();
    table
        .rows
        .iter()
        .map(|r| {
            let symptoms = r
                .symptoms
                .iter()
                .zip(&table.symptom_names)
                .map(|(cell, name)| parse_binary(cell, token, &table.file, r.line, name))
                .collect::<Result<Vec<_>>>()?;
            let age = parse_age(&r.age, spec, &table.file, r.line)?;
            let sex = if r.sex.is_empty() {
                None
            } else {
                parse_binary(&r.sex, token, &table.file, r.line, "sex")?
            };
            let cause = if r.cause.is_empty() || r.cause == token {
                if split == Split::Training {
                    return Err(VaError::Parse {
                        file: table.file.clone(),
                        row: r.line,
                        column: "cause".into(),
                        message: "training row without a cause".into(),
                    });
                }
                None
            } else {
                Some(*labels.get(&r.cause).ok_or_else(|| VaError::Parse {
                    file: table.file.clone(),
                    row: r.line,
                    column: "cause".into(),
                    message: format!("cause '{}' is not in the label map", r.cause),
                })?)
            };
            Ok(Record { id: r.id.clone(), symptoms, age, sex, cause, split })
        })
        .collect()
}

/// Read the training file and optional target file into one dataset.
pub fn ingest(spec: &IngestSpec) -> Result<VaDataset> {
    let train = read_raw(&spec.train)?;
    let label_list: Vec<String> = match &spec.cause_labels {
        Some(l) => l.clone(),
        None => train
            .rows
            .iter()
            .filter(|r| !r.cause.is_empty() && r.cause != spec.missing_token)
            .map(|r| r.cause.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let labels: BTreeMap<String, usize> = label_list.iter().enumerate().map(|(t, l)| (l.clone(), t)).collect();
    if labels.len() != label_list.len() {
        return Err(VaError::Config("duplicate entries in the cause label map".into()));
    }
    let mut records = records_from(&train, spec, Split::Training, &labels)?;
    if let Some(path) = &spec.target {
        let target = read_raw(path)?;
        if target.symptom_names != train.symptom_names {
            return Err(VaError::Data(format!(
                "symptom columns of {} differ from the training file",
                target.file
            )));
        }
        records.extend(records_from(&target, spec, Split::Target, &labels)?);
    }
    VaDataset::new(train.symptom_names, label_list, records)
}

/// Rows of one split in the ingestible CSV layout (binary age).
pub fn dataset_csv(data: &VaDataset, split: Split, missing_token: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ROLE_COLUMNS.to_vec();
    header.extend(data.symptom_names.iter().map(String::as_str));
    w.write_record(&header)?;
    let opt = |v: Option<u8>| v.map_or(missing_token.to_string(), |v| v.to_string());
    for i in data.rows_in(split) {
        let mut row = vec![
            data.ids[i].clone(),
            data.cause[i].map_or(String::new(), |c| data.cause_labels[c].clone()),
            opt(data.age[i]),
            opt(data.sex[i]),
        ];
        row.extend((0..data.p()).map(|j| opt(data.symptom(i, j))));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| VaError::Io(e.into_error()))
}

pub fn write_dataset_csv(data: &VaDataset, split: Split, missing_token: &str, path: &Path) -> Result<()> {
    write_atomic(path, &dataset_csv(data, split, missing_token)?)
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; a repeated key keeps its last value.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (t, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| VaError::Config(format!("line {}: expected key = value, found '{line}'", t + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(VaError::Config(format!("line {}: empty key", t + 1)));
        }
        out.insert(k.replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}
