use std::path::PathBuf;
use std::process::ExitCode;

use bape::baselines::{self, LossMode, TrainConfig};
use bape::classifier::{AdjustmentPolicy, BapeModel, BayesClassifier, ClassPriors, KappaMode, TargetPriors};
use bape::datagen::{self, CenterMode, LongTailSpec, TruthConfig};
use bape::estimation::{EstimationMode, PriorHyper};
use bape::harness::{self, ExperimentConfig, PriorDirections, ReportFormat, SavedModel, SplitThresholds};
use bape::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bape", version, about = "vMF Bayes classifiers and long-tail baselines on fixed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic long-tailed feature file
    Generate(GenerateArgs),
    /// Fit BAPE or a baseline on a feature file and write the classifier JSON
    Fit(FitArgs),
    /// Score a classifier JSON on a feature file
    Eval(EvalArgs),
    /// Run a full experiment from a JSON config
    Compare(CompareArgs),
    /// Export sphere-projected features (and predictions) as CSV
    DumpEmbeddings(DumpArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    n_head: u64,
    #[arg(long, default_value_t = 100.0)]
    gamma: f64,
    #[arg(long, default_value_t = 16)]
    p: usize,
    #[arg(long, default_value_t = 10.0)]
    kappa_min: f64,
    #[arg(long, default_value_t = 30.0)]
    kappa_max: f64,
    /// etf or random
    #[arg(long, default_value = "etf")]
    centers: CenterMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training file; `.csv` selects the CSV format
    #[arg(long)]
    out: PathBuf,
    /// Also write a balanced test set with this many samples per class
    #[arg(long, requires = "test_out")]
    test_per_class: Option<u64>,
    #[arg(long, requires = "test_per_class")]
    test_out: Option<PathBuf>,
    /// Write the generating mixture as JSON
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long, default_value_t = 40.0)]
    alpha_hat: f64,
    #[arg(long, default_value_t = 8.0)]
    beta_hat: f64,
    /// paper or exact
    #[arg(long, default_value = "paper")]
    estimation: EstimationMode,
    /// class-means, or etf (only meaningful with the --seed the data was generated with)
    #[arg(long, default_value = "class-means")]
    prior_directions: PriorDirections,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Train on raw features instead of sphere-projected ones
    #[arg(long)]
    raw_features: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// bape, softmax or logit_adjusted
    #[arg(long, default_value = "bape")]
    method: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight of the logit-adjusted loss
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// uniform, file (class frequencies of --input) or imbalance:<gamma>
    #[arg(long)]
    adjust_priors: Option<String>,
    /// keep, shared-mean or fixed:<value>
    #[arg(long)]
    kappa_mode: Option<KappaMode>,
    #[arg(long, default_value_t = 100)]
    many: u64,
    #[arg(long, default_value_t = 20)]
    few: u64,
    /// Write the scores as JSON instead of printing them
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run this single seed instead of the configured list
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha_hat: Option<f64>,
    #[arg(long)]
    beta_hat: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    estimation: Option<EstimationMode>,
    /// Report path; `.csv` selects CSV. Without it JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    many: Option<f64>,
    medium: Option<f64>,
    few: Option<f64>,
    n: usize,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = LongTailSpec::new(a.k, a.n_head, a.gamma)?;
    let truth = TruthConfig { p: a.p, kappa_range: (a.kappa_min, a.kappa_max), center_mode: a.centers };
    let (train, gt) = datagen::generate(&spec, &truth, a.seed)?;
    datagen::write_features(&a.out, &train)?;
    if let (Some(n), Some(path)) = (a.test_per_class, &a.test_out) {
        datagen::write_features(path, &gt.sample_test(&vec![n; a.k], a.seed)?)?;
    }
    if let Some(path) = &a.truth_out {
        std::fs::write(path, serde_json::to_string_pretty(&gt)?).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    }
    eprintln!("wrote {} samples, class sizes {:?}", train.len(), train.class_counts());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let data = datagen::read_features(&a.input)?;
    let model = match a.method.as_str() {
        "bape" => {
            let hyper = PriorHyper::new(a.prior.alpha_hat, a.prior.beta_hat)?;
            let frame = harness::prior_frame(&data, a.prior.prior_directions, a.seed)?;
            let mut model = BapeModel::new(hyper, &frame, data.class_counts(), a.prior.estimation)?;
            let units = data.unit_rows()?;
            let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
            model.observe(&units, &labels)?;
            let fit = model.fit()?;
            if !fit.excluded.is_empty() {
                eprintln!("excluded degenerate classes: {:?}", fit.excluded);
            }
            SavedModel::Bape(fit.classifier.to_doc())
        }
        method => {
            let mode: LossMode = method.parse()?;
            let cfg = TrainConfig {
                lr: a.train.lr,
                epochs: a.train.epochs,
                batch_size: a.train.batch_size,
                weight_decay: a.train.weight_decay,
                temperature: a.train.temperature,
                normalize_features: !a.train.raw_features,
                mode,
                rng_seed: a.seed,
                ..TrainConfig::default()
            };
            let mut trainer = baselines::Trainer::new(&data, cfg)?;
            if mode == LossMode::LogitAdjusted {
                trainer = trainer.with_loss_weight(a.eta)?;
            }
            for epoch in 0..cfg.epochs {
                let loss = trainer.run_epoch(epoch, |_| Ok(()))?;
                eprintln!("epoch {epoch}: loss {loss:.6}");
            }
            SavedModel::Linear(trainer.into_classifier().to_doc())
        }
    };
    model.write(&a.out)
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = SavedModel::read(&a.model)?;
    let data = datagen::read_features(&a.input)?;
    let thresholds = SplitThresholds { many: a.many, few: a.few };
    let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    let (preds, counts) = match model {
        SavedModel::Bape(doc) => {
            let mut clf = BayesClassifier::from_doc(&doc)?;
            if a.adjust_priors.is_some() || a.kappa_mode.is_some() {
                let target = match a.adjust_priors.as_deref() {
                    None | Some("uniform") => TargetPriors::Uniform,
                    Some("file") => {
                        let counts: Vec<u64> = clf.labels().iter().map(|&l| data.class_counts().get(l).copied().unwrap_or(0)).collect();
                        TargetPriors::Explicit(ClassPriors::from_counts(&counts)?)
                    }
                    Some(other) => match other.strip_prefix("imbalance:") {
                        Some(g) => TargetPriors::Imbalance(g.parse().map_err(|_| Error::InvalidConfig(format!("bad imbalance factor {g:?}")))?),
                        None => return Err(Error::InvalidConfig(format!("unknown --adjust-priors value {other:?}"))),
                    },
                };
                clf = clf.adjust(&AdjustmentPolicy::new(target, a.kappa_mode.unwrap_or_default())?)?;
            }
            let preds = data.unit_rows()?.iter().map(|z| clf.predict(z)).collect::<Result<Vec<_>>>()?;
            let counts = clf.counts().map(|c| {
                let mut full = vec![0u64; data.num_classes().max(clf.labels().iter().max().map_or(0, |m| m + 1))];
                for (&l, &n) in clf.labels().iter().zip(c) {
                    full[l] = n;
                }
                full
            });
            (preds, counts)
        }
        SavedModel::Linear(doc) => {
            if a.adjust_priors.is_some() || a.kappa_mode.is_some() {
                return Err(Error::InvalidConfig("prior and kappa adjustment apply to bape classifiers only".into()));
            }
            let clf = baselines::LinearClassifier::from_doc(&doc)?;
            let preds = (0..data.len()).map(|i| clf.predict(data.unit_row(i)?.as_slice())).collect::<Result<Vec<_>>>()?;
            (preds, None)
        }
    };
    let report = match counts {
        Some(c) => {
            let s = harness::split_accuracy(&preds, &labels, &c, thresholds)?;
            EvalReport { accuracy: s.all, many: s.many, medium: s.medium, few: s.few, n: data.len() }
        }
        None => {
            let hits = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
            EvalReport { accuracy: hits as f64 / data.len().max(1) as f64, many: None, medium: None, few: None, n: data.len() }
        }
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io { path: path.clone(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn compare(a: CompareArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::read(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(v) = a.alpha_hat {
        cfg.prior.alpha_hat = v;
    }
    if let Some(v) = a.beta_hat {
        cfg.prior.beta_hat = v;
    }
    if let Some(v) = a.eta {
        cfg.eta = v;
    }
    if let Some(v) = a.estimation {
        cfg.estimation = v;
    }
    cfg.validate()?;
    let rows = harness::run_experiment(&cfg)?;
    if let Some(out) = &cfg.output {
        if let Some(p) = &out.json {
            harness::emit_report(&rows, ReportFormat::Json, p)?;
        }
        if let Some(p) = &out.csv {
            harness::emit_report(&rows, ReportFormat::Csv, p)?;
        }
    }
    match &a.out {
        Some(path) => harness::emit_report(&rows, ReportFormat::for_path(path), path),
        None => {
            print!("{}", harness::report_json(&rows)?);
            Ok(())
        }
    }
}

fn dump(a: DumpArgs) -> Result<()> {
    let data = datagen::read_features(&a.input)?;
    let model = a.model.as_ref().map(SavedModel::read).transpose()?;
    harness::dump_embeddings(&data, model.as_ref(), &a.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
        Command::DumpEmbeddings(a) => dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
