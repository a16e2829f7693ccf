use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vafactor_core::io::parse_key_values;
use vafactor_core::pipeline::{
    format_summary, replay, run_diagnose, run_evaluate, run_fit_predict, run_relevance, run_select_k, RunSettings,
};

/// Cause-of-death distribution estimation for verbal-autopsy data.
#[derive(Parser, Debug)]
#[command(name = "vafactor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the model and estimate the target cause distribution.
    Fit(RunArgs),
    /// Standardized mutual information and conditional mutual information of every predictor.
    Relevance(RunArgs),
    /// Cramér's V tables of symptom pairs by cause and demographic group.
    Diagnose(RunArgs),
    /// Choose the factor count by stratified cross-validation.
    SelectK(RunArgs),
    /// Score a CSMF trace against known causes.
    Evaluate(EvalArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Factor count; cross-validated over the candidates when absent.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated candidate factor counts.
    #[arg(long)]
    candidates: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Monte Carlo draws for the symptom marginal likelihood.
    #[arg(long)]
    mc_r: Option<usize>,
    /// Monte Carlo samples for conditional mutual information.
    #[arg(long)]
    mc_r_tilde: Option<usize>,
    /// Let target rows with sampled causes enter the parameter updates.
    #[arg(long)]
    transductive: bool,
    /// `fixed`, `fractions`, `counts` or `target`.
    #[arg(long)]
    cause_prior_update: Option<String>,
    #[arg(long)]
    missing_token: Option<String>,
    /// Raw ages at or above this value are "late" (1).
    #[arg(long)]
    age_cutoff: Option<f64>,
    /// The age column is already 0/1.
    #[arg(long)]
    age_binary: bool,
    #[arg(long, default_value = "vafactor-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// `chain_trace.csv` from a fit.
    #[arg(long)]
    trace: PathBuf,
    /// CSV with a `cause` column holding the true causes.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value = "vafactor-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "vafactor-out")]
    out_dir: PathBuf,
}

impl RunArgs {
    fn settings(&self) -> Result<RunSettings> {
        let mut map: BTreeMap<String, String> = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                parse_key_values(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut set = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("train", path(&self.train));
        set("target", path(&self.target));
        set("seed", self.seed.map(|v| v.to_string()));
        set("k", self.k.map(|v| v.to_string()));
        set("candidate_ks", self.candidates.clone());
        set("iterations", self.iterations.map(|v| v.to_string()));
        set("burn_in", self.burn_in.map(|v| v.to_string()));
        set("thin", self.thin.map(|v| v.to_string()));
        set("mc_r", self.mc_r.map(|v| v.to_string()));
        set("mc_r_tilde", self.mc_r_tilde.map(|v| v.to_string()));
        set("transductive", self.transductive.then(|| "true".to_string()));
        set("cause_prior_update", self.cause_prior_update.clone());
        set("missing_token", self.missing_token.clone());
        set("age_cutoff", self.age_cutoff.map(|v| v.to_string()));
        set("age_binary", self.age_binary.then(|| "true".to_string()));
        Ok(RunSettings::from_map(&map)?)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => {
            let settings = args.settings()?;
            let fit = run_fit_predict(&settings, &args.out_dir).context("fit failed")?;
            print!("{}", format_summary(&fit.summary));
            if let Some(e) = fit.eval {
                println!("CSMF accuracy {:.4}, coverage {:.3}", e.csmf_accuracy, e.coverage);
            }
        }
        Command::Relevance(args) => {
            let settings = args.settings()?;
            let report = run_relevance(&settings, &args.out_dir).context("relevance failed")?;
            for r in report.predictor_summary() {
                println!("{:<20} MI {:.4} (rank {:>3})  CMI {:.4} (rank {:>3})", r.predictor, r.mi_mean, r.mi_rank, r.cmi_mean, r.cmi_rank);
            }
        }
        Command::Diagnose(args) => {
            let settings = args.settings()?;
            run_diagnose(&settings, &args.out_dir).context("diagnose failed")?;
        }
        Command::SelectK(args) => {
            let settings = args.settings()?;
            let sel = run_select_k(&settings, &args.out_dir).context("select-k failed")?;
            println!("selected K = {}", sel.selected);
        }
        Command::Evaluate(args) => {
            let e = run_evaluate(&args.trace, &args.truth, args.level, &args.out_dir).context("evaluate failed")?;
            println!("CSMF accuracy {:.4}, coverage {:.3}", e.csmf_accuracy, e.coverage);
        }
        Command::Replay(args) => {
            let m = replay(&args.manifest, &args.out_dir).context("replay failed")?;
            println!("replayed '{}' into {}", m.command, args.out_dir.display());
        }
    }
    Ok(())
}
