//! Command-line front end: `train`, `predict`, `evaluate`, `synth`.
//!
//! Failures print one JSON line `{"error": kind, "message": ...}` on stderr
//! and exit 1. Usage errors exit 2.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{MidaError, Result};
use crate::io;
use crate::metrics::{pr_aupr, roc_auc, threshold_metrics, write_curve_csv, ScoredLabel};
use crate::model::{Dataset, Hyperparams, UserBag};
use crate::solver::{fit, predict};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "mida", version, about = "Multi-instance domain adaptation classifier")]
pub struct Cli {
    /// Worker threads for per-user work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it with its residual trace.
    Train(TrainArgs),
    /// Score users with a fitted model.
    Predict(PredictArgs),
    /// Compute metrics and ROC/PR curves from scores and labels.
    Evaluate(EvaluateArgs),
    /// Write a synthetic reports/tweets/labels corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 0.01)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    /// Initial ADMM penalty.
    #[arg(long, default_value_t = 20.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub partitions: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Outer ADMM iterations.
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_fista: usize,
    #[arg(long, default_value_t = 50)]
    pub max_ccp: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_abs: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_rel: f64,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub adaptive_rho: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    pub fn to_hyper(&self) -> Hyperparams {
        Hyperparams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            rho0: self.rho,
            partitions: self.partitions,
            eta: self.eta,
            max_outer: self.max_iter,
            max_fista: self.max_fista,
            max_ccp: self.max_ccp,
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            adaptive_rho: self.adaptive_rho,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub tweets: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV (default: `trace.csv` next to the model).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Hold out this fraction of users (seeded by `--seed`) and train on the rest.
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Held-out user list (default: `holdout.csv` next to the model).
    #[arg(long)]
    pub holdout_out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tweets: PathBuf,
    /// Score CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV with a `user_id` column; only these users are scored.
    #[arg(long)]
    pub only_users: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// ROC points (default: `roc.csv` next to `--out`).
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// PR points (default: `pr.csv` next to `--out`).
    #[arg(long)]
    pub pr: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for reports.csv, tweets.csv, labels.csv and ground_truth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n_users: usize,
    #[arg(long, default_value_t = 0.36)]
    pub positive_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub min_tweets: usize,
    #[arg(long, default_value_t = 8)]
    pub max_tweets: usize,
    #[arg(long, default_value_t = 50)]
    pub n_keywords: usize,
    #[arg(long, default_value_t = 10)]
    pub n_signal: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_reports: usize,
    #[arg(long, default_value_t = 0.15)]
    pub background_rate: f64,
    #[arg(long, default_value_t = 0.8)]
    pub signal_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    pub report_shift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn sibling(of: &Path, name: &str) -> PathBuf {
    of.parent().map_or_else(|| PathBuf::from(name), |d| d.join(name))
}

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

/// Seeded split into (train, held-out) bag indices; held-out users are the
/// first `round(fraction * n)` of a shuffled order.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MidaError::Config("holdout fraction must lie in (0, 1)".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = (fraction * n as f64).round() as usize;
    let mut held = order[..n_hold].to_vec();
    let mut train = order[n_hold..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok((train, held))
}

fn pruned(data: Dataset) -> Result<Dataset> {
    let bags = data.bags.iter().map(io::prune_bag).collect();
    Dataset::new(data.vocabulary, bags, data.reports)
}

fn train(args: &TrainArgs) -> Result<()> {
    let hyper = args.hyper.to_hyper();
    let mut data = pruned(io::load_dataset(&args.reports, &args.tweets, &args.labels)?)?;
    if let Some(frac) = args.holdout_fraction {
        let (train_idx, held) = holdout_split(data.bags.len(), frac, hyper.seed)?;
        let ids: BTreeSet<String> = held.iter().map(|&i| data.bags[i].user_id.clone()).collect();
        let path = args.holdout_out.clone().unwrap_or_else(|| sibling(&args.out, "holdout.csv"));
        io::save_user_list(&path, &ids)?;
        data = data.subset(&train_idx);
    }
    let (model, trace) = fit(&data, &hyper, None)?;
    for w in &trace.warnings {
        warn(w);
    }
    io::save_model(&model, &args.out)?;
    io::save_trace(&args.trace.clone().unwrap_or_else(|| sibling(&args.out, "trace.csv")), &trace)?;
    println!(
        "{}",
        json!({
            "model": args.out,
            "outer_iterations": model.trace_summary.outer_iterations,
            "converged": model.trace_summary.converged,
            "final_r_primal": model.trace_summary.final_r_primal,
            "final_objective": model.trace_summary.final_objective,
        })
    );
    Ok(())
}

fn predict_cmd(args: &PredictArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let vocab = io::read_tweet_vocabulary(&args.tweets)?;
    if vocab != model.vocabulary {
        return Err(MidaError::Validation {
            file: args.tweets.clone(),
            message: "tweet columns do not match the model vocabulary".into(),
            offenders: vocab
                .keywords()
                .iter()
                .filter(|k| model.vocabulary.position(k).is_none())
                .cloned()
                .collect(),
        });
    }
    let only = args.only_users.as_deref().map(io::load_user_list).transpose()?;
    let mut scores = BTreeMap::new();
    for (user, counts) in io::load_tweets(&args.tweets, &vocab)? {
        if only.as_ref().is_some_and(|o| !o.contains(&user)) {
            continue;
        }
        let bag = io::prune_bag(&UserBag::new(user.clone(), counts, 0)?);
        scores.insert(user, predict(&model, &bag)?);
    }
    io::save_scores(&args.out, &scores)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let scores = io::load_scores(&args.scores)?;
    let labels: BTreeMap<String, u8> = io::load_labels(&args.labels)?.into_iter().collect();
    let missing: Vec<String> = scores.keys().filter(|u| !labels.contains_key(*u)).cloned().collect();
    if !missing.is_empty() {
        return Err(MidaError::Validation {
            file: args.labels.clone(),
            message: "scored users without a label".into(),
            offenders: missing,
        });
    }
    let scored: Vec<ScoredLabel> = scores.iter().map(|(u, &s)| ScoredLabel::new(s, labels[u])).collect();
    let tm = threshold_metrics(&scored, args.threshold)?;
    let mut report = json!({
        "n": scored.len(),
        "threshold": args.threshold,
        "acc": tm.acc,
        "pr": tm.pr,
        "re": tm.re,
        "fs": tm.fs,
        "auc": null,
        "aupr": null,
    });
    let curves = roc_auc(&scored).and_then(|roc| Ok((roc, pr_aupr(&scored)?)));
    if let Ok(((auc, roc), (aupr, pr))) = &curves {
        report["auc"] = json!(auc);
        report["aupr"] = json!(aupr);
        write_curve(&args.roc.clone().unwrap_or_else(|| sibling(&args.out, "roc.csv")), roc)?;
        write_curve(&args.pr.clone().unwrap_or_else(|| sibling(&args.out, "pr.csv")), pr)?;
    }
    let text = serde_json::to_string_pretty(&report).expect("metrics serialize") + "\n";
    std::fs::write(&args.out, text).map_err(|source| MidaError::Io { path: args.out.clone(), source })?;
    curves.map(|_| ())
}

fn write_curve(path: &Path, points: &[crate::metrics::CurvePoint]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| MidaError::Io { path: path.to_path_buf(), source })?;
    write_curve_csv(points, file).map_err(|e| MidaError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_users: args.n_users,
        positive_fraction: args.positive_fraction,
        tweets_per_user: args.min_tweets..=args.max_tweets,
        n_keywords: args.n_keywords,
        n_signal: args.n_signal,
        n_reports: args.n_reports,
        background_rate: args.background_rate,
        signal_rate: args.signal_rate,
        report_shift: args.report_shift,
        seed: args.seed,
    };
    let out = generate(&cfg)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| MidaError::Io { path: dir.clone(), source })?;
    let d = &out.dataset;
    io::save_reports(&dir.join("reports.csv"), &d.reports, &d.vocabulary)?;
    io::save_tweets(&dir.join("tweets.csv"), &d.bags, &d.vocabulary)?;
    io::save_labels(&dir.join("labels.csv"), &d.bags)?;
    let truth = json!({
        "vocabulary": d.vocabulary,
        "beta": out.ground_truth,
        "adverse_index": out.adverse_index,
    });
    let path = dir.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&truth).expect("ground truth serializes") + "\n";
    std::fs::write(&path, text).map_err(|source| MidaError::Io { path, source })
}

pub fn run(cli: &Cli) -> Result<()> {
    let body = || match &cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| MidaError::Config(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}
