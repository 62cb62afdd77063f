//! Configuration and command implementations behind the `holdscan` binary.
//!
//! Every command reads a [`RunConfig`]: a flat TOML file of `key = value`
//! pairs (all optional) with command-line flags taking precedence. Every file a
//! command writes records the tool version and a hash of the effective
//! configuration: CSV files in a leading `#` comment line, JSON files in the
//! `tool` and `config_hash` fields.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invalid input data,
//! 3 numeric or protocol failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{
    load_external_proba, predict_proba, read_model, select_best_checkpoint, train, write_model,
    write_predictions, ClassifierError, ExternalProba, FeatureSpec, TrainConfig,
};
use crate::compliance::{
    audit_corpus, gold_predictions, AuditConfig, AuditError, CorpusAudit, PredictedLabels,
};
use crate::corpus::{
    generate_synthetic, ingest_holds, ingest_transcripts, stratified_split, validate_transcripts,
    write_holds, write_transcripts, ColumnMapping, Corpus, CorpusError, FoldPlan, GeneratorProfile,
    Label, SplitMode, TurnKey, NUM_CLASSES,
};
use crate::decision::{decide, DecisionRule};
use crate::metrics::{evaluate, MetricsError};
use crate::tuning::{
    run_cross_validation, run_cross_validation_external, shared_threshold_search, sweep, CvRun,
    FoldPredictions, SweepGrid, SweepResult, TuningError,
};
use crate::TOOL_VERSION;

/// Effective settings of a run. Every key may appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required by every command that draws random numbers.
    pub seed: Option<u64>,
    pub folds: usize,
    pub test_fold: usize,
    pub split_mode: SplitMode,
    /// Size of the synthetic corpus used when no transcripts are given.
    pub calls: usize,
    /// Generator profile (TOML); the built-in profile when absent.
    pub profile: Option<PathBuf>,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub class_weights: [f64; 3],
    pub constant_fraction: f64,

    pub hash_dim: usize,
    pub char_ngram_min: usize,
    pub char_ngram_max: usize,
    pub word_unigrams: bool,
    pub lowercase: bool,
    pub max_tokens: usize,

    /// Decision threshold for commands that turn probabilities into labels.
    pub threshold: Option<f64>,

    pub pre_window_ms: u64,
    pub post_window_ms: u64,
    pub grace_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let spec = FeatureSpec::default();
        let audit = AuditConfig::default();
        RunConfig {
            seed: None,
            folds: 10,
            test_fold: 0,
            split_mode: SplitMode::Row,
            calls: 1000,
            profile: None,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            class_weights: train.class_weights,
            constant_fraction: train.constant_fraction,
            hash_dim: spec.hash_dim,
            char_ngram_min: spec.char_ngram_min,
            char_ngram_max: spec.char_ngram_max,
            word_unigrams: spec.word_unigrams,
            lowercase: spec.lowercase,
            max_tokens: spec.max_tokens,
            threshold: None,
            pre_window_ms: audit.pre_window_ms,
            post_window_ms: audit.post_window_ms,
            grace_ms: audit.grace_ms,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(io_error(path))?)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Usage("a seed is required: pass --seed or set `seed` in the config".into())
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            class_weights: self.class_weights,
            seed: self.seed()?,
            constant_fraction: self.constant_fraction,
        })
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            hash_dim: self.hash_dim,
            char_ngram_min: self.char_ngram_min,
            char_ngram_max: self.char_ngram_max,
            word_unigrams: self.word_unigrams,
            lowercase: self.lowercase,
            max_tokens: self.max_tokens,
        }
    }

    pub fn audit_config(&self) -> AuditConfig {
        AuditConfig {
            pre_window_ms: self.pre_window_ms,
            post_window_ms: self.post_window_ms,
            grace_ms: self.grace_ms,
        }
    }

    pub fn rule(&self) -> Result<DecisionRule, CliError> {
        let t = self.threshold.ok_or_else(|| {
            CliError::Usage("a threshold is required: pass --threshold or set `threshold`".into())
        })?;
        DecisionRule::new(t).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// SHA-256 (hex) of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The line recorded at the top of every output file.
    pub fn provenance(&self) -> String {
        format!("{TOOL_VERSION} config {}", self.hash())
    }

    /// Applies command-line overrides.
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            )*};
        }
        set!(
            folds,
            test_fold,
            split_mode,
            calls,
            epochs,
            batch_size,
            learning_rate,
            weight_decay,
            constant_fraction,
            hash_dim,
            max_tokens,
            pre_window_ms,
            post_window_ms,
            grace_ms
        );
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(t) = o.threshold {
            self.threshold = Some(t);
        }
        if let Some(p) = &o.profile {
            self.profile = Some(p.clone());
        }
        if let Some(w) = o.class_weights {
            self.class_weights = w.0;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn is_io_csv(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(_))
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { path, source } => CliError::Io { path, source },
            CorpusError::Csv(ref c) if is_io_csv(c) => CliError::Usage(e.to_string()),
            CorpusError::InvalidProfile(_) | CorpusError::InvalidFolds(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Io { path, source } => CliError::Io { path, source },
            ClassifierError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ClassifierError::Csv(ref c) if is_io_csv(c) => CliError::Usage(e.to_string()),
            ClassifierError::MalformedRow { .. }
            | ClassifierError::DuplicateKey { .. }
            | ClassifierError::ModelFormat(_)
            | ClassifierError::UnlabeledExample { .. }
            | ClassifierError::Csv(_) => CliError::Data(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TuningError> for CliError {
    fn from(e: TuningError) -> Self {
        match e {
            TuningError::Corpus(c) => c.into(),
            TuningError::Classifier(c) => c.into(),
            TuningError::UnknownAxis(_)
            | TuningError::BadGridValue(_)
            | TuningError::EmptyGrid
            | TuningError::TooFewFolds(_) => CliError::Usage(e.to_string()),
            TuningError::MissingPrediction { .. } => CliError::Data(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        CliError::Data(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Output helpers

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_error(path))?))
}

/// Writes `payload` as pretty JSON with `tool` and `config_hash` fields added.
pub fn write_json<T: Serialize>(
    path: &Path,
    config: &RunConfig,
    payload: &T,
) -> Result<(), CliError> {
    let mut value = serde_json::to_value(payload).map_err(|e| CliError::Numeric(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Numeric("JSON payload is not an object".into()))?;
    obj.insert("tool".into(), TOOL_VERSION.into());
    obj.insert("config_hash".into(), config.hash().into());
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &value).map_err(|e| CliError::Numeric(e.to_string()))?;
    writeln!(out).map_err(io_error(path))?;
    out.flush().map_err(io_error(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes()).map_err(io_error(path))?;
    out.flush().map_err(io_error(path))
}

/// Writes rows as CSV behind a provenance comment.
fn write_csv(
    path: &Path,
    config: &RunConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut out = create(path)?;
    writeln!(out, "# {}", config.provenance()).map_err(io_error(path))?;
    let mut wtr = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Numeric(e.to_string());
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.write_record(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_error(path))
}

/// Per-fold class counts in the layout of a dataset summary table.
pub fn fold_table(plan: &FoldPlan, labels: &[Label]) -> String {
    let mut text = format!(
        "{:<6} {:>10} {:>8} {:>8} {:>8}\n",
        "Fold", "Irrelevant", "Opening", "Closing", "Total"
    );
    let mut totals = [0usize; NUM_CLASSES];
    for (fold, counts) in plan.class_counts(labels).iter().enumerate() {
        let mark = if fold == plan.test_fold {
            " (test)"
        } else {
            ""
        };
        text.push_str(&format!(
            "{:<6} {:>10} {:>8} {:>8} {:>8}{mark}\n",
            fold,
            counts[0],
            counts[1],
            counts[2],
            counts.iter().sum::<usize>()
        ));
        for c in 0..NUM_CLASSES {
            totals[c] += counts[c];
        }
    }
    text.push_str(&format!(
        "{:<6} {:>10} {:>8} {:>8} {:>8}\n",
        "Total",
        totals[0],
        totals[1],
        totals[2],
        totals.iter().sum::<usize>()
    ));
    text
}

fn corpus_summary(corpus: &Corpus) -> String {
    let c = corpus.class_counts();
    let unlabeled = corpus.num_turns() - c.iter().sum::<usize>();
    let holds: usize = corpus.calls.iter().map(|call| call.holds.len()).sum();
    let mut text = format!(
        "calls {}\nturns {}\n",
        corpus.calls.len(),
        corpus.num_turns()
    );
    text.push_str(&format!(
        "irrelevant {}\nopening {}\nclosing {}\n",
        c[0], c[1], c[2]
    ));
    if unlabeled > 0 {
        text.push_str(&format!("unlabeled {unlabeled}\n"));
    }
    if holds > 0 {
        text.push_str(&format!("holds {holds}\n"));
    }
    text
}

// ---------------------------------------------------------------------------
// Inputs

pub fn load_corpus(transcripts: &Path, holds: Option<&Path>) -> Result<Corpus, CliError> {
    let mut corpus = ingest_transcripts(transcripts, &ColumnMapping::default())?;
    if let Some(h) = holds {
        ingest_holds(&mut corpus, h)?;
    }
    Ok(corpus)
}

fn profile(config: &RunConfig) -> Result<GeneratorProfile, CliError> {
    match &config.profile {
        Some(p) => Ok(GeneratorProfile::from_file(p)?),
        None => Ok(GeneratorProfile::default()),
    }
}

/// The corpus at `transcripts`, or a synthetic one built from the config.
pub fn corpus_or_synthetic(
    config: &RunConfig,
    transcripts: Option<&Path>,
) -> Result<Corpus, CliError> {
    match transcripts {
        Some(path) => load_corpus(path, None),
        None => Ok(generate_synthetic(config.calls, config.seed()?, &profile(config)?)?.0),
    }
}

fn plan_for(
    config: &RunConfig,
    corpus: &Corpus,
    plan: Option<&Path>,
) -> Result<FoldPlan, CliError> {
    let plan = match plan {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_error(path))?;
            serde_json::from_str::<FoldPlan>(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => stratified_split(corpus, config.folds, config.seed()?, config.split_mode)?
            .with_test_fold(config.test_fold)?,
    };
    plan.check_against(corpus)?;
    Ok(plan)
}

/// Probabilities for every turn of `corpus`, in corpus order.
fn aligned(corpus: &Corpus, proba: &ExternalProba) -> Result<Vec<crate::ProbTriple>, CliError> {
    corpus
        .turns()
        .map(|t| {
            proba.get(&TurnKey::of(t)).copied().ok_or_else(|| {
                CliError::Data(format!(
                    "no prediction for call {} turn {}",
                    t.call_id, t.turn_index
                ))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Commands

/// Checks a transcript file. Returns the summary on success and the
/// diagnostics (one per line, with line numbers) as a data error otherwise.
pub fn cmd_validate(transcripts: &Path, holds: Option<&Path>) -> Result<String, CliError> {
    let file = File::open(transcripts).map_err(io_error(transcripts))?;
    let mut corpus = validate_transcripts(file, &ColumnMapping::default()).map_err(|diags| {
        let lines: Vec<String> = diags
            .iter()
            .map(|d| match d.line {
                Some(line) => format!("{}:{line}: {}", transcripts.display(), d.error),
                None => format!("{}: {}", transcripts.display(), d.error),
            })
            .collect();
        CliError::Data(lines.join("\n"))
    })?;
    if let Some(h) = holds {
        ingest_holds(&mut corpus, h)?;
    }
    Ok(corpus_summary(&corpus))
}

/// Histogram data for rows per call, words per row by class, and the joint
/// distribution of opening and closing counts per call.
pub fn cmd_stats(config: &RunConfig, corpus: &Corpus, out: &Path) -> Result<String, CliError> {
    let labels = corpus.gold_labels()?;
    let mut rows_per_call: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for call in &corpus.calls {
        *rows_per_call.entry(call.turns.len()).or_default() += 1;
        let count = |l: Label| call.turns.iter().filter(|t| t.label == Some(l)).count();
        *joint
            .entry((count(Label::Opening), count(Label::Closing)))
            .or_default() += 1;
    }
    let mut words: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (turn, label) in corpus.turns().zip(&labels) {
        *words.entry((label.index(), turn.word_count())).or_default() += 1;
    }

    let to_rows = |m: &BTreeMap<usize, usize>| -> Vec<Vec<String>> {
        m.iter()
            .map(|(k, v)| vec![k.to_string(), v.to_string()])
            .collect()
    };
    write_csv(
        &out.join("rows_per_call.csv"),
        config,
        &["rows", "calls"],
        &to_rows(&rows_per_call),
    )?;
    let word_rows: Vec<Vec<String>> = words
        .iter()
        .map(|((l, w), n)| vec![l.to_string(), w.to_string(), n.to_string()])
        .collect();
    write_csv(
        &out.join("words_per_row.csv"),
        config,
        &["label", "words", "rows"],
        &word_rows,
    )?;
    let joint_rows: Vec<Vec<String>> = joint
        .iter()
        .map(|((o, c), n)| vec![o.to_string(), c.to_string(), n.to_string()])
        .collect();
    write_csv(
        &out.join("joint_counts.csv"),
        config,
        &["openings", "closings", "calls"],
        &joint_rows,
    )?;

    let max_o = joint.keys().map(|k| k.0).max().unwrap_or(0);
    let max_c = joint.keys().map(|k| k.1).max().unwrap_or(0);
    let mut text = corpus_summary(corpus);
    text.push_str("\ncalls by openings (rows) x closings (columns)\n");
    text.push_str(&format!("{:>4}", ""));
    for c in 0..=max_c {
        text.push_str(&format!(" {c:>5}"));
    }
    text.push('\n');
    for o in 0..=max_o {
        text.push_str(&format!("{o:>4}"));
        for c in 0..=max_c {
            text.push_str(&format!(" {:>5}", joint.get(&(o, c)).copied().unwrap_or(0)));
        }
        text.push('\n');
    }
    Ok(text)
}

/// Writes `transcripts.csv`, `holds.csv` and `ledger.json` for a synthetic corpus.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let (corpus, ledger) = generate_synthetic(config.calls, config.seed()?, &profile(config)?)?;
    let comment = config.provenance();
    let path = out.join("transcripts.csv");
    let mut w = create(&path)?;
    write_transcripts(&corpus, &mut w, Some(&comment))?;
    w.flush().map_err(io_error(&path))?;
    let path = out.join("holds.csv");
    let mut w = create(&path)?;
    write_holds(&corpus, &mut w, Some(&comment))?;
    w.flush().map_err(io_error(&path))?;
    write_json(&out.join("ledger.json"), config, &ledger)?;

    let s = ledger.summary();
    Ok(format!(
        "{}violations: missing_opening {} missing_closing {} unregistered_hold {}\n",
        corpus_summary(&corpus),
        s.missing_opening,
        s.missing_closing,
        s.unregistered_hold
    ))
}

/// Writes the fold plan as JSON and returns the per-fold class table.
pub fn cmd_split(config: &RunConfig, corpus: &Corpus, out: &Path) -> Result<String, CliError> {
    let plan = plan_for(config, corpus, None)?;
    write_json(out, config, &plan)?;
    Ok(fold_table(&plan, &corpus.gold_labels()?))
}

/// Trains on every fold except `validation_fold` and the test fold, scores
/// each epoch on `validation_fold` and writes the best checkpoint.
pub fn cmd_train(
    config: &RunConfig,
    corpus: &Corpus,
    plan: Option<&Path>,
    validation_fold: Option<usize>,
    out: &Path,
) -> Result<String, CliError> {
    let plan = plan_for(config, corpus, plan)?;
    let v = match validation_fold {
        Some(v) if v == plan.test_fold || v >= plan.k => {
            return Err(CliError::Usage(format!(
                "validation fold {v} must be a non-test fold below {}",
                plan.k
            )))
        }
        Some(v) => v,
        None => *plan
            .non_test_folds()
            .first()
            .ok_or_else(|| CliError::Usage("need at least two folds".into()))?,
    };
    let turns: Vec<_> = corpus.turns().collect();
    let folds = plan.folds();
    let pick = |keep: &dyn Fn(usize) -> bool| -> Vec<_> {
        turns
            .iter()
            .zip(&folds)
            .filter(|(_, &f)| keep(f))
            .map(|(t, _)| *t)
            .collect()
    };
    let train_set = pick(&|f| f != v && f != plan.test_fold);
    let validation = pick(&|f| f == v);
    let mut train_config = config.train_config()?;
    train_config.seed = train_config.seed.wrapping_add(v as u64);
    let checkpoints = train(
        &train_set,
        &train_config,
        &config.feature_spec(),
        &validation,
    )?;
    let best = select_best_checkpoint(&checkpoints)?;
    let mut w = create(out)?;
    write_model(best, &mut w, Some(&config.provenance()))?;

    let mut text = format!(
        "{:>5} {:>12} {:>14}\n",
        "epoch", "train_loss", "validation_auc"
    );
    for cp in &checkpoints {
        let mark = if cp.epoch == best.epoch { " *" } else { "" };
        text.push_str(&format!(
            "{:>5} {:>12.6} {:>14.6}{mark}\n",
            cp.epoch, cp.train_loss, cp.validation_auc
        ));
    }
    Ok(text)
}

/// Scores every turn with a saved model and writes a predictions CSV.
pub fn cmd_predict(
    config: &RunConfig,
    corpus: &Corpus,
    model: &Path,
    out: &Path,
) -> Result<String, CliError> {
    let cp = read_model(File::open(model).map_err(io_error(model))?)?;
    let turns: Vec<_> = corpus.turns().collect();
    let probs = predict_proba(&cp, &turns, &cp.spec)?;
    let keys: Vec<TurnKey> = turns.iter().map(|t| TurnKey::of(t)).collect();
    let mut w = create(out)?;
    write_predictions(&mut w, keys.iter().zip(&probs), Some(&config.provenance()))?;
    w.flush().map_err(io_error(out))?;
    Ok(format!(
        "{} predictions written to {}\n",
        probs.len(),
        out.display()
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub mean_f1: f64,
    pub folds: usize,
}

/// Chooses the shared threshold on the non-test folds of the plan.
pub fn cmd_tune_threshold(
    config: &RunConfig,
    corpus: &Corpus,
    predictions: &Path,
    plan: Option<&Path>,
) -> Result<ThresholdReport, CliError> {
    let plan = plan_for(config, corpus, plan)?;
    let probs = aligned(corpus, &load_external_proba(predictions)?)?;
    let labels = corpus.gold_labels()?;
    let folds: Vec<FoldPredictions> = plan
        .non_test_folds()
        .into_iter()
        .map(|v| {
            let idx = plan.members(v);
            FoldPredictions::new(
                idx.iter().map(|&i| probs[i]).collect(),
                idx.iter().map(|&i| labels[i]).collect(),
            )
        })
        .collect::<Result<_, _>>()?;
    let choice = shared_threshold_search(&folds)?;
    Ok(ThresholdReport {
        threshold: choice.threshold,
        mean_f1: choice.mean_f1,
        folds: folds.len(),
    })
}

/// Scores predictions at the configured threshold, on the test fold when a
/// plan is given and on every turn otherwise.
pub fn cmd_evaluate(
    config: &RunConfig,
    corpus: &Corpus,
    predictions: &Path,
    plan: Option<&Path>,
) -> Result<crate::MetricBundle, CliError> {
    let rule = config.rule()?;
    let probs = aligned(corpus, &load_external_proba(predictions)?)?;
    let labels = corpus.gold_labels()?;
    let idx: Vec<usize> = match plan {
        Some(p) => {
            let plan = plan_for(config, corpus, Some(p))?;
            plan.members(plan.test_fold)
        }
        None => (0..probs.len()).collect(),
    };
    let p: Vec<_> = idx.iter().map(|&i| probs[i]).collect();
    let l: Vec<_> = idx.iter().map(|&i| labels[i]).collect();
    Ok(evaluate(&l, &p, &rule)?)
}

/// Runs one cross-validation per grid value; writes `sweep.json` and `sweep.txt`.
pub fn cmd_sweep(
    config: &RunConfig,
    corpus: &Corpus,
    axis: &str,
    values: &[String],
    out: &Path,
) -> Result<SweepResult, CliError> {
    let values: Vec<&str> = values.iter().map(String::as_str).collect();
    let grid = SweepGrid::parse(axis, &values)?;
    let plan = plan_for(config, corpus, None)?;
    let (result, _) = sweep(
        corpus,
        &plan,
        &config.train_config()?,
        &config.feature_spec(),
        &grid,
    )?;
    write_json(&out.join("sweep.json"), config, &result)?;
    write_text(&out.join("sweep.txt"), &result.to_table())?;
    Ok(result)
}

/// Predicted labels per call: gold labels, or predictions at the configured threshold.
pub fn audit_labels(
    config: &RunConfig,
    corpus: &Corpus,
    predictions: Option<&Path>,
) -> Result<PredictedLabels, CliError> {
    let Some(path) = predictions else {
        return Ok(gold_predictions(corpus)?);
    };
    let rule = config.rule()?;
    let proba = load_external_proba(path)?;
    corpus
        .calls
        .iter()
        .map(|call| {
            let labels = call
                .turns
                .iter()
                .map(|t| {
                    proba
                        .get(&TurnKey::of(t))
                        .map(|p| decide(p, &rule))
                        .ok_or_else(|| {
                            CliError::Data(format!(
                                "no prediction for call {} turn {}",
                                t.call_id, t.turn_index
                            ))
                        })
                })
                .collect::<Result<_, _>>()?;
            Ok((call.call_id.clone(), labels))
        })
        .collect()
}

/// Audits every call; writes `audit.json` and `audit.txt`.
pub fn cmd_audit(
    config: &RunConfig,
    corpus: &Corpus,
    predictions: Option<&Path>,
    out: &Path,
) -> Result<CorpusAudit, CliError> {
    let labels = audit_labels(config, corpus, predictions)?;
    let audit = audit_corpus(corpus, &labels, &config.audit_config())?;
    write_json(&out.join("audit.json"), config, &audit)?;
    write_text(&out.join("audit.txt"), &audit.to_text())?;
    Ok(audit)
}

/// Split, cross-validate, choose the threshold, evaluate and report.
///
/// Writes `fold_plan.json`, `checkpoints/fold_<v>.model` (trained mode only),
/// `training_curve.csv` (trained mode only), `metrics.json` and `table.txt`.
pub fn cmd_pipeline(
    config: &RunConfig,
    corpus: &Corpus,
    external_proba: Option<&Path>,
    out: &Path,
) -> Result<CvRun, CliError> {
    let plan = plan_for(config, corpus, None)?;
    write_json(&out.join("fold_plan.json"), config, &plan)?;
    let run = match external_proba {
        Some(path) => run_cross_validation_external(corpus, &plan, &load_external_proba(path)?)?,
        None => {
            let run = run_cross_validation(
                corpus,
                &plan,
                &config.train_config()?,
                &config.feature_spec(),
            )?;
            for (fold, cp) in run.folds.iter().zip(&run.checkpoints) {
                let path = out
                    .join("checkpoints")
                    .join(format!("fold_{}.model", fold.validation_fold));
                let mut w = create(&path)?;
                write_model(cp, &mut w, Some(&config.provenance()))?;
            }
            let rows: Vec<Vec<String>> = run
                .folds
                .iter()
                .flat_map(|f| {
                    f.curve.iter().map(move |c| {
                        vec![
                            f.validation_fold.to_string(),
                            c.epoch.to_string(),
                            c.train_loss.to_string(),
                            c.validation_auc.to_string(),
                        ]
                    })
                })
                .collect();
            write_csv(
                &out.join("training_curve.csv"),
                config,
                &["validation_fold", "epoch", "train_loss", "validation_auc"],
                &rows,
            )?;
            run
        }
    };
    write_json(&out.join("metrics.json"), config, &run)?;
    write_text(&out.join("table.txt"), &run.to_table())?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// Argument parsing

/// `w0,w1,w2` on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights(pub [f64; 3]);

impl std::str::FromStr for ClassWeights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad weight {p:?}"))
            })
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [a, b, c] => Ok(ClassWeights([*a, *b, *c])),
            _ => Err("expected three comma-separated weights w0,w1,w2".into()),
        }
    }
}

/// Flags that override config keys; accepted by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (flat TOML of `key = value`)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub test_fold: Option<usize>,
    /// row or call_grouped
    #[arg(long, global = true)]
    pub split_mode: Option<SplitMode>,
    /// Number of synthetic calls
    #[arg(long, global = true)]
    pub calls: Option<usize>,
    /// Generator profile (TOML)
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub weight_decay: Option<f64>,
    /// w0,w1,w2
    #[arg(long, global = true)]
    pub class_weights: Option<ClassWeights>,
    #[arg(long, global = true)]
    pub constant_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub hash_dim: Option<usize>,
    #[arg(long, global = true)]
    pub max_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub pre_window_ms: Option<u64>,
    #[arg(long, global = true)]
    pub post_window_ms: Option<u64>,
    #[arg(long, global = true)]
    pub grace_ms: Option<u64>,
}

#[derive(Debug, Parser)]
#[command(
    name = "holdscan",
    version,
    about = "Detect on-hold scripts in call transcripts and audit hold compliance"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a transcript file and summarize it
    Validate {
        transcripts: PathBuf,
        #[arg(long)]
        holds: Option<PathBuf>,
    },
    /// Emit rows-per-call, words-per-row and script-count histogram data
    Stats {
        transcripts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with holds and its violation ledger
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratify turns into folds
    Split {
        transcripts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the baseline on one fold arrangement and save the best checkpoint
    Train {
        transcripts: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        validation_fold: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score turns with a saved model
    Predict {
        transcripts: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose the shared threshold on the validation folds
    TuneThreshold {
        transcripts: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions at a threshold
    Evaluate {
        transcripts: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Restrict to the plan's test fold
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate once per value of a hyperparameter
    Sweep {
        /// Transcripts; a synthetic corpus is generated when omitted
        transcripts: Option<PathBuf>,
        /// class_weights or learning_rate
        #[arg(long)]
        axis: String,
        /// Grid values; class weights as w0 or w0,w1,w2
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match predicted scripts against registered holds
    Audit {
        transcripts: PathBuf,
        #[arg(long)]
        holds: PathBuf,
        /// Audit the gold labels instead of predictions
        #[arg(long, conflicts_with = "predictions")]
        gold: bool,
        #[arg(long, required_unless_present = "gold")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split, cross-validate, tune the threshold, evaluate and report
    Pipeline {
        /// Transcripts; a synthetic corpus is generated when omitted
        transcripts: Option<PathBuf>,
        /// Use these probabilities instead of training
        #[arg(long)]
        external_proba: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command line and returns what to print on stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let mut config = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&cli.overrides);

    match cli.command {
        Command::Validate { transcripts, holds } => cmd_validate(&transcripts, holds.as_deref()),
        Command::Stats { transcripts, out } => {
            cmd_stats(&config, &load_corpus(&transcripts, None)?, &out)
        }
        Command::Generate { out } => cmd_generate(&config, &out),
        Command::Split { transcripts, out } => {
            cmd_split(&config, &load_corpus(&transcripts, None)?, &out)
        }
        Command::Train {
            transcripts,
            plan,
            validation_fold,
            out,
        } => cmd_train(
            &config,
            &load_corpus(&transcripts, None)?,
            plan.as_deref(),
            validation_fold,
            &out,
        ),
        Command::Predict {
            transcripts,
            model,
            out,
        } => cmd_predict(&config, &load_corpus(&transcripts, None)?, &model, &out),
        Command::TuneThreshold {
            transcripts,
            predictions,
            plan,
            out,
        } => {
            let report = cmd_tune_threshold(
                &config,
                &load_corpus(&transcripts, None)?,
                &predictions,
                plan.as_deref(),
            )?;
            if let Some(out) = out {
                write_json(&out, &config, &report)?;
            }
            pretty(&report)
        }
        Command::Evaluate {
            transcripts,
            predictions,
            plan,
            out,
        } => {
            let bundle = cmd_evaluate(
                &config,
                &load_corpus(&transcripts, None)?,
                &predictions,
                plan.as_deref(),
            )?;
            if let Some(out) = out {
                write_json(&out, &config, &bundle)?;
            }
            pretty(&bundle)
        }
        Command::Sweep {
            transcripts,
            axis,
            values,
            out,
        } => {
            let corpus = corpus_or_synthetic(&config, transcripts.as_deref())?;
            Ok(cmd_sweep(&config, &corpus, &axis, &values, &out)?.to_table())
        }
        Command::Audit {
            transcripts,
            holds,
            predictions,
            out,
            ..
        } => {
            let corpus = load_corpus(&transcripts, Some(&holds))?;
            let audit = cmd_audit(&config, &corpus, predictions.as_deref(), &out)?;
            let s = audit.summary;
            Ok(format!(
                "calls {}\nmissing_opening {}\nmissing_closing {}\nunregistered_hold {}\n",
                audit.reports.len(),
                s.missing_opening,
                s.missing_closing,
                s.unregistered_hold
            ))
        }
        Command::Pipeline {
            transcripts,
            external_proba,
            out,
        } => {
            let corpus = corpus_or_synthetic(&config, transcripts.as_deref())?;
            let run = cmd_pipeline(&config, &corpus, external_proba.as_deref(), &out)?;
            Ok(format!(
                "shared threshold {:.6} (validation F1-macro {:.4})\n{}",
                run.shared_threshold,
                run.validation_mean_f1,
                run.to_table()
            ))
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Numeric(e.to_string()))
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
