//! End-to-end runs behind the command-line subcommands.
//!
//! Each run is a pure function of its input files and [`RunSettings`]; the
//! settings are stored in `manifest.json` so that [`replay`] regenerates the
//! same outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cv::{select_k, CvConfig, KSelection};
use crate::data::{Split, VaDataset};
use crate::error::{Result, VaError};
use crate::evalmetrics::{demog_proportions, evaluate_csmf, pair_associations, pair_differences, EvalReport};
use crate::gibbs::{step, CausePriorUpdate, ChainConfig, ChainOutput, GibbsSampler};
use crate::io::{fmt_f64, fmt_opt, ingest, write_atomic, write_json_atomic, AgeRule, IngestSpec};
use crate::math::{mean_sd, quantile_sorted};
use crate::relevance::{relevance_for_draw, RelevanceReport};
use crate::snapshot::{write_snapshot, Snapshot};

/// Candidate factor counts when `k` is not fixed.
pub const DEFAULT_CANDIDATE_KS: [usize; 5] = [1, 2, 3, 4, 5];

/// Everything a run depends on besides the input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub ingest: IngestSpec,
    /// `n_factors` is overwritten by `k` or the cross-validated choice.
    pub chain: ChainConfig,
    pub k: Option<usize>,
    pub candidate_ks: Vec<usize>,
    pub cv: CvConfig,
    /// Explicit cause-prior mode; otherwise fixed for fitting and
    /// training-fraction updates for relevance.
    pub cause_prior_update: Option<CausePriorUpdate>,
    /// Central interval level for summaries and coverage.
    pub level: f64,
}

/// Every key accepted in a config file (and, with dashes, as a CLI flag).
pub const CONFIG_KEYS: &[&str] = &[
    "train",
    "target",
    "missing_token",
    "age_cutoff",
    "age_binary",
    "cause_labels",
    "k",
    "candidate_ks",
    "iterations",
    "burn_in",
    "thin",
    "mc_r",
    "mc_r_tilde",
    "seed",
    "transductive",
    "cause_prior_update",
    "dirichlet_cause",
    "dirichlet_demog",
    "cv_folds",
    "cv_iterations",
    "cv_burn_in",
    "cv_thin",
    "level",
];

fn parse_val<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| VaError::Config(format!("cannot parse {key} = '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_val(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(VaError::Config(format!("{key} must be true or false, found '{v}'"))),
    }
}

impl RunSettings {
    /// Build settings from resolved key-value pairs. `train` and an age rule
    /// (`age_cutoff` or `age_binary = true`) are required.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(VaError::Config(format!("unknown configuration key '{k}'")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let train = get("train").ok_or_else(|| VaError::Config("training file (train) is required".into()))?;
        let binary = get("age_binary").map(|v| parse_bool("age_binary", v)).transpose()?.unwrap_or(false);
        let age_rule = match (get("age_cutoff"), binary) {
            (Some(_), true) => {
                return Err(VaError::Config("give either age_cutoff or age_binary, not both".into()))
            }
            (Some(c), false) => AgeRule::Threshold(parse_val("age_cutoff", c)?),
            (None, true) => AgeRule::Binary,
            (None, false) => {
                return Err(VaError::Config(
                    "the early/late age cutoff has no default: set age_cutoff, or age_binary = true for 0/1 ages"
                        .into(),
                ))
            }
        };
        let ingest = IngestSpec {
            train: PathBuf::from(train),
            target: get("target").filter(|t| !t.is_empty()).map(PathBuf::from),
            missing_token: get("missing_token").unwrap_or(".").to_string(),
            age_rule,
            cause_labels: get("cause_labels").map(|v| v.split(',').map(|s| s.trim().to_string()).collect()),
        };
        let mut chain = ChainConfig::default();
        let mut cv = CvConfig::default();
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse_val($key, v)?;
                }
            };
        }
        set!("iterations", chain.iterations);
        set!("burn_in", chain.burn_in);
        set!("thin", chain.thin);
        set!("mc_r", chain.mc_samples);
        set!("mc_r_tilde", chain.relevance_samples);
        set!("seed", chain.seed);
        set!("cv_folds", cv.folds);
        set!("cv_iterations", cv.iterations);
        set!("cv_burn_in", cv.burn_in);
        set!("cv_thin", cv.thin);
        if let Some(v) = get("transductive") {
            chain.transductive = parse_bool("transductive", v)?;
        }
        if let Some(v) = get("dirichlet_cause") {
            chain.dirichlet_cause_concentration = Some(parse_list("dirichlet_cause", v)?);
        }
        if let Some(v) = get("dirichlet_demog") {
            let d: Vec<f64> = parse_list("dirichlet_demog", v)?;
            chain.dirichlet_demog_concentration = d
                .try_into()
                .map_err(|_| VaError::Config("dirichlet_demog needs four values".into()))?;
        }
        let cause_prior_update = get("cause_prior_update")
            .map(|v| match v {
                "fixed" => Ok(CausePriorUpdate::Fixed),
                "fractions" => Ok(CausePriorUpdate::TrainingFractions),
                "counts" => Ok(CausePriorUpdate::TrainingCounts),
                "target" => Ok(CausePriorUpdate::TargetLabels),
                _ => Err(VaError::Config(format!("cause_prior_update must be fixed, fractions, counts or target, found '{v}'"))),
            })
            .transpose()?;
        let k = get("k").map(|v| parse_val("k", v)).transpose()?;
        if let Some(k) = k {
            chain.n_factors = k;
        }
        let candidate_ks = match get("candidate_ks") {
            Some(v) => parse_list("candidate_ks", v)?,
            None => DEFAULT_CANDIDATE_KS.to_vec(),
        };
        let level = get("level").map(|v| parse_val("level", v)).transpose()?.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(VaError::Config("level must lie in (0, 1)".into()));
        }
        chain.validate()?;
        Ok(RunSettings { ingest, chain, k, candidate_ks, cv, cause_prior_update, level })
    }
}

/// Shape and missingness of the ingested data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestFingerprint {
    pub n_training: usize,
    pub n_target: usize,
    pub n_symptoms: usize,
    pub cause_labels: Vec<String>,
    pub symptom_missing_rate: f64,
    pub age_missing_rate: f64,
    pub sex_missing_rate: f64,
}

impl IngestFingerprint {
    pub fn of(data: &VaDataset) -> Self {
        IngestFingerprint {
            n_training: data.training_rows().len(),
            n_target: data.target_rows().len(),
            n_symptoms: data.p(),
            cause_labels: data.cause_labels.clone(),
            symptom_missing_rate: data.symptom_missing_rate(),
            age_missing_rate: data.age_missing_rate(),
            sex_missing_rate: data.sex_missing_rate(),
        }
    }
}

/// Record of a run sufficient to repeat it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub settings: RunSettings,
    /// Chain configuration after K resolution.
    pub resolved_chain: Option<ChainConfig>,
    pub fingerprint: IngestFingerprint,
    pub k_selection: Option<KSelection>,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn manifest(command: &str, settings: &RunSettings, data: &VaDataset) -> RunManifest {
    RunManifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        settings: settings.clone(),
        resolved_chain: None,
        fingerprint: IngestFingerprint::of(data),
        k_selection: None,
        outputs: Vec::new(),
    }
}

/// Posterior summary of one cause fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsmfSummary {
    pub cause: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub causes: Vec<CsmfSummary>,
}

pub fn summarize_csmf(labels: &[String], draws: &[Vec<f64>]) -> PosteriorSummary {
    let causes = labels
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[l]).collect();
            let (mean, sd) = mean_sd(&col);
            col.sort_by(|a, b| a.total_cmp(b));
            CsmfSummary {
                cause: name.clone(),
                mean,
                sd,
                q025: quantile_sorted(&col, 0.025),
                q50: quantile_sorted(&col, 0.5),
                q975: quantile_sorted(&col, 0.975),
            }
        })
        .collect();
    PosteriorSummary { n_draws: draws.len(), causes }
}

/// Outcome of a `fit` run.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub summary: PosteriorSummary,
    pub eval: Option<EvalReport>,
    pub manifest: RunManifest,
    pub chain: ChainOutput,
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn resolve_k(settings: &RunSettings, data: &VaDataset, chain: &mut ChainConfig) -> Result<Option<KSelection>> {
    if settings.k.is_some() {
        return Ok(None);
    }
    let sel = select_k(data, &settings.candidate_ks, chain, &settings.cv)?;
    chain.n_factors = sel.selected;
    Ok(Some(sel))
}

/// Fit the model, predict targets and write `csmf_posterior.json`,
/// `individual_probs.csv`, `chain_trace.csv`, `params.snap`,
/// `manifest.json` and, with ground truth, `eval_report.json`.
pub fn run_fit_predict(settings: &RunSettings, out_dir: &Path) -> Result<FitResult> {
    let data = ingest(&settings.ingest)?;
    if data.target_rows().is_empty() {
        log::warn!("no target rows: fitting only, the CSMF posterior will be empty");
    }
    let mut chain = settings.chain.clone();
    chain.cause_prior_update = settings.cause_prior_update.unwrap_or(CausePriorUpdate::Fixed);
    let k_selection = resolve_k(settings, &data, &mut chain)?;
    let out = GibbsSampler::new(&data, chain.clone())?.run()?;
    fs::create_dir_all(out_dir)?;

    let draws = out.csmf_draws();
    let summary = summarize_csmf(&data.cause_labels, &draws);
    write_json_atomic(&out_dir.join("csmf_posterior.json"), &summary)?;

    let mut header = vec!["id".to_string()];
    header.extend(data.cause_labels.iter().cloned());
    let rows = out.target_rows.iter().zip(&out.individual_probs).map(|(&i, probs)| {
        std::iter::once(data.ids[i].clone()).chain(probs.iter().map(|&v| fmt_f64(v))).collect()
    });
    write_atomic(&out_dir.join("individual_probs.csv"), csv_text(&header, rows).as_bytes())?;

    header[0] = "sweep".into();
    let rows = out.kept.iter().filter_map(|k| {
        k.csmf.as_ref().map(|c| std::iter::once(k.sweep.to_string()).chain(c.iter().map(|&v| fmt_f64(v))).collect())
    });
    write_atomic(&out_dir.join("chain_trace.csv"), csv_text(&header, rows).as_bytes())?;

    write_snapshot(&out_dir.join("params.snap"), &Snapshot::from_kept(out.standardizer, &out.kept))?;

    let mut outputs: Vec<String> =
        ["csmf_posterior.json", "individual_probs.csv", "chain_trace.csv", "params.snap"].map(String::from).to_vec();
    let targets = data.target_rows();
    let eval = if !targets.is_empty() && targets.iter().all(|&i| data.cause[i].is_some()) && draws.len() >= 2 {
        let truth = data.cause_fractions(&targets);
        let report = evaluate_csmf(&draws, &truth, settings.level)?;
        write_json_atomic(&out_dir.join("eval_report.json"), &report)?;
        outputs.push("eval_report.json".into());
        Some(report)
    } else {
        None
    };

    let mut m = manifest("fit", settings, &data);
    m.resolved_chain = Some(chain);
    m.k_selection = k_selection;
    m.outputs = outputs;
    write_json_atomic(&out_dir.join(MANIFEST_FILE), &m)?;
    Ok(FitResult { summary, eval, manifest: m, chain: out })
}

/// Relevance from a training-only chain; writes `relevance.csv`,
/// `kl_groups.csv` and `manifest.json`.
pub fn run_relevance(settings: &RunSettings, out_dir: &Path) -> Result<RelevanceReport> {
    let full = ingest(&settings.ingest)?;
    let data = full.subset(&full.training_rows(), |_| Split::Training)?;
    let observed: std::collections::BTreeSet<usize> = data.cause.iter().flatten().copied().collect();
    if observed.len() < 2 {
        return Err(VaError::Domain(
            "only one cause is observed in training, so H(y) = 0 and standardized relevance is undefined".into(),
        ));
    }
    let mut chain = settings.chain.clone();
    chain.cause_prior_update = settings.cause_prior_update.unwrap_or(CausePriorUpdate::TrainingFractions);
    chain.transductive = false;
    let k_selection = resolve_k(settings, &data, &mut chain)?;
    let out = GibbsSampler::new(&data, chain.clone())?.run()?;
    let draws = out
        .kept
        .iter()
        .map(|k| {
            relevance_for_draw(
                &k.params,
                &out.standardizer,
                chain.mc_samples,
                chain.relevance_samples,
                chain.seed,
                k.sweep as u64 + 1,
                step::RELEVANCE,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let report = RelevanceReport { predictor_names: data.predictor_names(), draws };
    fs::create_dir_all(out_dir)?;
    write_relevance_files(&report, out_dir)?;
    let mut m = manifest("relevance", settings, &full);
    m.resolved_chain = Some(chain);
    m.k_selection = k_selection;
    m.outputs = vec!["relevance.csv".into(), "kl_groups.csv".into()];
    write_json_atomic(&out_dir.join(MANIFEST_FILE), &m)?;
    Ok(report)
}

pub fn write_relevance_files(report: &RelevanceReport, out_dir: &Path) -> Result<()> {
    let header: Vec<String> = [
        "predictor",
        "mi_mean",
        "mi_sd",
        "mi_rank",
        "cmi_mean",
        "cmi_sd",
        "cmi_rank",
        "cmi_mc_sd",
        "skipped_fraction",
    ]
    .map(String::from)
    .to_vec();
    let rows = report.predictor_summary().into_iter().map(|r| {
        vec![
            r.predictor,
            fmt_f64(r.mi_mean),
            fmt_f64(r.mi_sd),
            r.mi_rank.to_string(),
            fmt_f64(r.cmi_mean),
            fmt_f64(r.cmi_sd),
            r.cmi_rank.to_string(),
            fmt_f64(r.cmi_mc_sd),
            fmt_f64(r.skipped_fraction),
        ]
    });
    write_atomic(&out_dir.join("relevance.csv"), csv_text(&header, rows).as_bytes())?;

    let header: Vec<String> = ["symptom", "age", "sex", "kl_mean", "kl_sd"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for s in report.kl_summary() {
        for (c, a, sx) in crate::gibbs::cells() {
            rows.push(vec![s.symptom.clone(), a.to_string(), sx.to_string(), fmt_opt(s.cell_mean[c]), fmt_opt(s.cell_sd[c])]);
        }
        rows.push(vec![s.symptom.clone(), "all".into(), "all".into(), fmt_f64(s.weighted_mean), fmt_f64(s.weighted_sd)]);
    }
    write_atomic(&out_dir.join("kl_groups.csv"), csv_text(&header, rows).as_bytes())
}

/// Cramér's V diagnostics: `cramers_v.csv`, `cramers_v_diff.csv` and
/// `demog_props.csv`. Undefined values are written as `NA`.
pub fn run_diagnose(settings: &RunSettings, out_dir: &Path) -> Result<()> {
    let data = ingest(&settings.ingest)?;
    fs::create_dir_all(out_dir)?;
    let name = |j: usize| data.symptom_names[j].clone();
    let assoc = pair_associations(&data);
    let header: Vec<String> = ["cause", "group", "symptom_a", "symptom_b", "v", "n"].map(String::from).to_vec();
    let rows = assoc.iter().map(|r| {
        vec![data.cause_labels[r.cause].clone(), r.group.label(), name(r.a), name(r.b), fmt_opt(r.v), r.n.to_string()]
    });
    write_atomic(&out_dir.join("cramers_v.csv"), csv_text(&header, rows).as_bytes())?;

    let header: Vec<String> =
        ["cause", "factor", "symptom_a", "symptom_b", "v0", "v1", "abs_diff"].map(String::from).to_vec();
    let rows = pair_differences(&assoc).into_iter().map(|d| {
        vec![
            data.cause_labels[d.cause].clone(),
            d.factor,
            name(d.a),
            name(d.b),
            fmt_opt(d.v0),
            fmt_opt(d.v1),
            fmt_opt(d.abs_diff),
        ]
    });
    write_atomic(&out_dir.join("cramers_v_diff.csv"), csv_text(&header, rows).as_bytes())?;

    let header: Vec<String> =
        ["cause", "n", "age1_share", "sex1_share", "age_missing", "sex_missing"].map(String::from).to_vec();
    let rows = demog_proportions(&data).into_iter().map(|d| {
        vec![
            data.cause_labels[d.cause].clone(),
            d.n.to_string(),
            fmt_opt(d.age1),
            fmt_opt(d.sex1),
            d.age_missing.to_string(),
            d.sex_missing.to_string(),
        ]
    });
    write_atomic(&out_dir.join("demog_props.csv"), csv_text(&header, rows).as_bytes())?;

    let mut m = manifest("diagnose", settings, &data);
    m.outputs = vec!["cramers_v.csv".into(), "cramers_v_diff.csv".into(), "demog_props.csv".into()];
    write_json_atomic(&out_dir.join(MANIFEST_FILE), &m)
}

/// Cross-validated `K` over `settings.candidate_ks`; writes `k_selection.json`.
pub fn run_select_k(settings: &RunSettings, out_dir: &Path) -> Result<KSelection> {
    let full = ingest(&settings.ingest)?;
    let data = full.subset(&full.training_rows(), |_| Split::Training)?;
    let sel = select_k(&data, &settings.candidate_ks, &settings.chain, &settings.cv)?;
    fs::create_dir_all(out_dir)?;
    write_json_atomic(&out_dir.join("k_selection.json"), &sel)?;
    let mut m = manifest("select-k", settings, &full);
    m.k_selection = Some(sel.clone());
    m.outputs = vec!["k_selection.json".into()];
    write_json_atomic(&out_dir.join(MANIFEST_FILE), &m)?;
    Ok(sel)
}

/// Read a `chain_trace.csv`: cause labels and one CSMF vector per row.
pub fn read_trace(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let labels: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut draws = Vec::new();
    for (t, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .zip(&labels)
            .map(|(v, col)| {
                v.parse::<f64>().map_err(|_| VaError::Parse {
                    file: path.display().to_string(),
                    row: t + 2,
                    column: col.clone(),
                    message: format!("not a number: '{v}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        draws.push(row);
    }
    Ok((labels, draws))
}

/// Empirical cause fractions of the `cause` column of a CSV, in `labels`
/// order. Rows with an empty cause are ignored.
pub fn truth_from_csv(path: &Path, labels: &[String]) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r.headers()?.iter().position(|h| h == "cause").ok_or_else(|| VaError::Parse {
        file: path.display().to_string(),
        row: 1,
        column: "cause".into(),
        message: "required column missing from header".into(),
    })?;
    let mut counts = vec![0.0; labels.len()];
    for (t, rec) in r.records().enumerate() {
        let rec = rec?;
        let c = rec.get(col).unwrap_or("").trim();
        if c.is_empty() {
            continue;
        }
        let l = labels.iter().position(|x| x == c).ok_or_else(|| VaError::Parse {
            file: path.display().to_string(),
            row: t + 2,
            column: "cause".into(),
            message: format!("cause '{c}' is not among the trace causes"),
        })?;
        counts[l] += 1.0;
    }
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return Err(VaError::Data("truth file has no causes".into()));
    }
    Ok(counts.into_iter().map(|c| c / n).collect())
}

/// Score a CSMF trace against the causes in `truth_csv`; writes
/// `eval_report.json` into `out_dir`.
pub fn run_evaluate(trace: &Path, truth_csv: &Path, level: f64, out_dir: &Path) -> Result<EvalReport> {
    let (labels, draws) = read_trace(trace)?;
    let truth = truth_from_csv(truth_csv, &labels)?;
    let report = evaluate_csmf(&draws, &truth, level)?;
    fs::create_dir_all(out_dir)?;
    write_json_atomic(&out_dir.join("eval_report.json"), &report)?;
    Ok(report)
}

/// Rerun the command recorded in a manifest, writing into `out_dir`.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
    match m.command.as_str() {
        "fit" => {
            run_fit_predict(&m.settings, out_dir)?;
        }
        "relevance" => {
            run_relevance(&m.settings, out_dir)?;
        }
        "diagnose" => run_diagnose(&m.settings, out_dir)?,
        "select-k" => {
            run_select_k(&m.settings, out_dir)?;
        }
        other => return Err(VaError::Config(format!("manifest has unknown command '{other}'"))),
    }
    Ok(m)
}

/// Human-readable one-line-per-cause rendering of a summary.
pub fn format_summary(summary: &PosteriorSummary) -> String {
    let mut s = String::new();
    for c in &summary.causes {
        let _ = writeln!(s, "{:<20} {:.4} ({:.4}, {:.4})", c.cause, c.mean, c.q025, c.q975);
    }
    s
}
