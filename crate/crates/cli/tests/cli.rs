use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vafactor_core::io::write_dataset_csv;
use vafactor_core::synth::{generate, population_standardizer, random_params, ParamScales, SynthConfig};
use vafactor_core::{RngStream, Split};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vafactor"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).env("RUST_LOG", "warn").output().expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

/// Writes train.csv and target.csv (with true causes) into `dir`.
fn write_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = RngStream::new(42, 0);
    let params = random_params(3, 5, 1, &ParamScales::default(), &mut rng).unwrap();
    let csmf = vec![1.0 / 3.0; 3];
    let std = population_standardizer(&params, &csmf);
    let cfg = SynthConfig {
        n_training: 90,
        n_target: 30,
        training_csmf: csmf,
        target_csmf: vec![0.5, 0.3, 0.2],
        symptom_missing: 0.1,
        demog_missing: 0.05,
    };
    let synth = generate(&params, &std, &cfg, &mut rng).unwrap();
    let (train, target) = (dir.join("train.csv"), dir.join("target.csv"));
    write_dataset_csv(&synth.dataset, Split::Training, ".", &train).unwrap();
    write_dataset_csv(&synth.dataset, Split::Target, ".", &target).unwrap();
    (train, target)
}

const SMALL: &[&str] = &["--iterations", "40", "--burn-in", "10", "--thin", "5", "--mc-r", "20", "--seed", "3"];

fn fit_args<'a>(train: &'a str, target: &'a str, out: &'a str) -> Vec<&'a str> {
    let mut v = vec!["fit", "--train", train, "--target", target, "--age-binary", "--k", "1", "--out-dir", out];
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn fit_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let (train, target) = write_inputs(dir.path());
    let out = dir.path().join("fit");
    let res = run(&fit_args(train.to_str().unwrap(), target.to_str().unwrap(), out.to_str().unwrap()));
    assert!(res.status.success());
    for f in ["csmf_posterior.json", "individual_probs.csv", "chain_trace.csv", "params.snap", "manifest.json", "eval_report.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let post: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("csmf_posterior.json")).unwrap()).unwrap();
    let total: f64 = post["causes"].as_array().unwrap().iter().map(|c| c["mean"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let trace = std::fs::read_to_string(out.join("chain_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 40 / 5);
    assert!(String::from_utf8_lossy(&res.stdout).contains("CSMF accuracy"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (train, target) = write_inputs(dir.path());
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "# run settings\ntrain = {}\ntarget = {}\nage-binary = true\nk = 1\niterations = 30\nburn_in = 5\nthin = 3\nmc_r = 10\n",
            train.display(),
            target.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = run(&["fit", "--config", config.to_str().unwrap(), "--thin", "10", "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["settings"]["chain"]["iterations"], 30);
    assert_eq!(m["settings"]["chain"]["thin"], 10);
    let trace = std::fs::read_to_string(out.join("chain_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3);
}

#[test]
fn missing_age_rule_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_inputs(dir.path());
    let res = run(&["fit", "--train", train.to_str().unwrap(), "--k", "1", "--out-dir", dir.path().join("x").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("age"));
}

#[test]
fn unreadable_input_reports_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,cause,age,sex,s0\n1,a,0,1,7\n").unwrap();
    let res = run(&["fit", "--train", bad.to_str().unwrap(), "--age-binary", "--k", "1", "--out-dir", dir.path().join("x").to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad.csv"), "{err}");
}

#[test]
fn replay_and_evaluate_reproduce_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (train, target) = write_inputs(dir.path());
    let out = dir.path().join("fit");
    assert!(run(&fit_args(train.to_str().unwrap(), target.to_str().unwrap(), out.to_str().unwrap())).status.success());
    let again = dir.path().join("again");
    let res = run(&["replay", "--manifest", out.join("manifest.json").to_str().unwrap(), "--out-dir", again.to_str().unwrap()]);
    assert!(res.status.success());
    assert_eq!(
        std::fs::read(out.join("csmf_posterior.json")).unwrap(),
        std::fs::read(again.join("csmf_posterior.json")).unwrap()
    );

    let eval_dir = dir.path().join("eval");
    let res = run(&[
        "evaluate",
        "--trace",
        out.join("chain_trace.csv").to_str().unwrap(),
        "--truth",
        target.to_str().unwrap(),
        "--out-dir",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let a: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval_report.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&std::fs::read(eval_dir.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(a["csmf_accuracy"], b["csmf_accuracy"]);
}

#[test]
fn relevance_diagnose_and_select_k() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_inputs(dir.path());
    let train = train.to_str().unwrap();

    let out = dir.path().join("rel");
    let mut args = vec!["relevance", "--train", train, "--age-binary", "--k", "1", "--mc-r-tilde", "200", "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    assert!(run(&args).status.success());
    let rel = std::fs::read_to_string(out.join("relevance.csv")).unwrap();
    assert_eq!(rel.lines().count(), 1 + 2 + 5);
    assert!(out.join("kl_groups.csv").is_file());

    let out = dir.path().join("diag");
    assert!(run(&["diagnose", "--train", train, "--age-binary", "--out-dir", out.to_str().unwrap()]).status.success());
    for f in ["cramers_v.csv", "cramers_v_diff.csv", "demog_props.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    let out = dir.path().join("sk");
    let conf = dir.path().join("cv.conf");
    std::fs::write(&conf, "cv_folds = 2\ncv_iterations = 20\ncv_burn_in = 5\ncv_thin = 5\n").unwrap();
    let res = run(&[
        "select-k",
        "--config",
        conf.to_str().unwrap(),
        "--train",
        train,
        "--age-binary",
        "--candidates",
        "1,2",
        "--mc-r",
        "10",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let sel: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("k_selection.json")).unwrap()).unwrap();
    assert!([1, 2].contains(&sel["selected"].as_u64().unwrap()));
    assert_eq!(sel["scores"].as_array().unwrap().len(), 2);
}
