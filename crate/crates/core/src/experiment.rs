//! Experiment driver: configuration, the bigram/merge/eval/synth/inspect
//! operations, and their file outputs.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::constraints::ConstraintSchedule;
use crate::corpus::{read_corpus, read_corpus_into, read_lexicon, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::format::{read_model, write_model};
use crate::inference::{evaluate_corpus, EvaluationReport, OovPolicy, ScoreMode};
use crate::merging::{
    build_trivial_model, corpus_loglik, premerge_affixes, run_merging, EvalSet, MergeOptions,
    MergeRecord, StopCriterion, StopReason,
};
use crate::model::{probabilities, validate, CountModel, ProbabilityView};
use crate::ngram::{build_bigram, smooth_view, BigramConfig};
use crate::synth::{generate, SynthParams, Synthetic};

pub const MODEL_FILE: &str = "model.mm";
pub const BIGRAM_FILE: &str = "bigram.mm";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    Trivial,
    Bigram,
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Start::Trivial => "trivial",
            Start::Bigram => "bigram",
        })
    }
}

impl std::str::FromStr for Start {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(Start::Trivial),
            "bigram" => Ok(Start::Bigram),
            _ => Err(Error::Config(format!(
                "unknown start {s:?} (expected trivial|bigram)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train_path: PathBuf,
    pub test_path: Option<PathBuf>,
    /// Scored once on the final model; never used for stopping.
    pub extra_test_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    /// Schedule text; resolved once the lexicon is loaded.
    pub schedule: String,
    pub stop: StopCriterion,
    pub start: Start,
    pub mode: ScoreMode,
    pub oov_policy: OovPolicy,
    /// Additive smoothing for reported evaluations; 0 disables it.
    pub smoothing_alpha: f64,
    pub log_every: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub reviterbi_every: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_path: PathBuf::new(),
            test_path: None,
            extra_test_path: None,
            lexicon_path: None,
            schedule: "none".into(),
            stop: StopCriterion::TargetStates(1),
            start: Start::Trivial,
            mode: ScoreMode::Viterbi,
            oov_policy: OovPolicy::Floor,
            smoothing_alpha: 0.0,
            log_every: 100,
            seed: 0,
            output_dir: PathBuf::from("."),
            reviterbi_every: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "train_path",
        "test_path",
        "extra_test_path",
        "lexicon_path",
        "schedule",
        "stop",
        "start",
        "mode",
        "oov_policy",
        "smoothing_alpha",
        "log_every",
        "seed",
        "output_dir",
        "reviterbi_every",
    ];

    /// Sets one field from its textual form. An empty value clears an
    /// optional field.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "train_path" => self.train_path = PathBuf::from(value),
            "test_path" => self.test_path = optional_path(value),
            "extra_test_path" => self.extra_test_path = optional_path(value),
            "lexicon_path" => self.lexicon_path = optional_path(value),
            "schedule" => self.schedule = value.to_string(),
            "stop" => self.stop = value.parse()?,
            "start" => self.start = value.parse()?,
            "mode" => self.mode = value.parse().map_err(Error::Config)?,
            "oov_policy" => self.oov_policy = value.parse().map_err(Error::Config)?,
            "smoothing_alpha" => self.smoothing_alpha = parse_num(key, value)?,
            "log_every" => self.log_every = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "reviterbi_every" => {
                self.reviterbi_every = match value {
                    "" | "0" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text).map_err(|e| match e {
            Error::Format { line, message } => {
                Error::at(path, Error::Config(format!("line {line}: {message}")))
            }
            other => Error::at(path, other),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_path.as_os_str().is_empty() {
            return Err(Error::Config("train_path is required".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        BigramConfig::new(self.smoothing_alpha)?;
        if matches!(self.stop, StopCriterion::HeldOutMinimum { .. }) && self.test_path.is_none() {
            return Err(Error::Config(
                "held_out_minimum stopping needs test_path".into(),
            ));
        }
        Ok(())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::at(path, e.into()))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| {
        Error::at(
            path,
            Error::Decode {
                offset: e.utf8_error().valid_up_to(),
            },
        )
    })
}

pub fn load_corpus(path: &Path) -> Result<(Vocabulary, Corpus)> {
    read_corpus(&read_bytes(path)?).map_err(|e| Error::at(path, e))
}

/// Reads a corpus against an existing vocabulary; unseen words get fresh
/// ids beyond the model's vocabulary and so count as out-of-vocabulary.
pub fn load_corpus_with(path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let mut vocab = vocab.clone();
    read_corpus_into(&read_bytes(path)?, &mut vocab).map_err(|e| Error::at(path, e))
}

pub fn load_model(path: &Path) -> Result<(CountModel, Vocabulary)> {
    read_model(&read_text(path)?).map_err(|e| Error::at(path, e))
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::at(&tmp, e.into()))?;
    fs::rename(&tmp, path).map_err(|e| Error::at(path, e.into()))
}

fn view_for(model: &CountModel, alpha: f64) -> Result<ProbabilityView> {
    if alpha > 0.0 {
        smooth_view(model, &BigramConfig::new(alpha)?)
    } else {
        probabilities(model)
    }
}

fn write_report(out: &mut String, prefix: &str, r: &EvaluationReport) {
    let _ = writeln!(out, "{prefix}_tokens = {}", r.token_count);
    let _ = writeln!(out, "{prefix}_log10_prob = {}", r.total_log10_prob);
    let _ = writeln!(out, "{prefix}_lp = {}", r.log_perplexity);
    let _ = writeln!(out, "{prefix}_pp = {}", r.perplexity);
    let _ = writeln!(out, "{prefix}_oov = {}", r.oov_tokens);
    let _ = writeln!(
        out,
        "{prefix}_zero_prob_utterances = {}",
        r.zero_prob_utterances
    );
}

/// Renders an evaluation as `key = value` lines.
pub fn render_report(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode = {}", r.mode);
    let _ = writeln!(out, "oov_policy = {}", r.oov_policy);
    write_report(&mut out, "eval", r);
    if r.is_infinite() {
        out.push_str("warning = infinite log perplexity\n");
    }
    out
}

#[derive(Clone, Debug)]
pub struct BigramReport {
    pub states: usize,
    pub model_path: PathBuf,
    pub train: EvaluationReport,
    pub test: Option<EvaluationReport>,
    /// Present when `smoothing_alpha > 0`.
    pub smoothed_train: Option<EvaluationReport>,
    pub smoothed_test: Option<EvaluationReport>,
}

impl fmt::Display for BigramReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "states = {}", self.states);
        let _ = writeln!(out, "model = {}", self.model_path.display());
        write_report(&mut out, "train", &self.train);
        if let Some(r) = &self.test {
            write_report(&mut out, "test", r);
        }
        if let Some(r) = &self.smoothed_train {
            write_report(&mut out, "smoothed_train", r);
        }
        if let Some(r) = &self.smoothed_test {
            write_report(&mut out, "smoothed_test", r);
        }
        f.write_str(&out)
    }
}

/// Builds the word-bigram baseline, writes it to `output_dir` and scores
/// the training and (optional) test corpora.
pub fn cmd_bigram(config: &RunConfig) -> Result<BigramReport> {
    config.validate()?;
    let (vocab, train) = load_corpus(&config.train_path)?;
    let test = match &config.test_path {
        Some(p) => Some(load_corpus_with(p, &vocab)?),
        None => None,
    };
    let (model, _) = build_bigram(&train, vocab.len());
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::at(&config.output_dir, e.into()))?;
    let model_path = config.output_dir.join(BIGRAM_FILE);
    write_atomic(&model_path, &write_model(&model, &vocab))?;

    let (mode, oov) = (config.mode, config.oov_policy);
    let view = probabilities(&model)?;
    let eval = |v: &ProbabilityView, c: &Corpus| evaluate_corpus(v, c, mode, oov);
    let mut report = BigramReport {
        states: model.num_states(),
        model_path,
        train: eval(&view, &train),
        test: test.as_ref().map(|t| eval(&view, t)),
        smoothed_train: None,
        smoothed_test: None,
    };
    if config.smoothing_alpha > 0.0 {
        let sv = view_for(&model, config.smoothing_alpha)?;
        report.smoothed_train = Some(eval(&sv, &train));
        report.smoothed_test = test.as_ref().map(|t| eval(&sv, t));
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct MergeSummary {
    pub start: Start,
    pub schedule: String,
    pub stop: StopCriterion,
    pub reason: StopReason,
    pub constraint_exhausted: bool,
    pub premerges: usize,
    /// Merges performed by the greedy search, excluding premerges.
    pub merges: u64,
    pub initial_states: usize,
    pub final_states: usize,
    /// States of the written model (the held-out best when applicable).
    pub model_states: usize,
    /// Merge index at which the written model was taken.
    pub model_merge: u64,
    pub train: EvaluationReport,
    pub test: Option<EvaluationReport>,
    pub extra_test: Option<EvaluationReport>,
    pub lexicon_unknown_words: usize,
}

impl fmt::Display for MergeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "start = {}", self.start);
        let _ = writeln!(out, "schedule = {}", self.schedule);
        let _ = writeln!(out, "stop = {}", self.stop);
        let _ = writeln!(out, "stop_reason = {}", self.reason);
        let _ = writeln!(out, "constraint_exhausted = {}", self.constraint_exhausted);
        let _ = writeln!(out, "premerges = {}", self.premerges);
        let _ = writeln!(out, "merges = {}", self.merges);
        let _ = writeln!(out, "initial_states = {}", self.initial_states);
        let _ = writeln!(out, "final_states = {}", self.final_states);
        let _ = writeln!(out, "model_states = {}", self.model_states);
        let _ = writeln!(out, "model_merge = {}", self.model_merge);
        let _ = writeln!(out, "mode = {}", self.train.mode);
        let _ = writeln!(out, "oov_policy = {}", self.train.oov_policy);
        write_report(&mut out, "train", &self.train);
        if let Some(r) = &self.test {
            write_report(&mut out, "test", r);
        }
        if let Some(r) = &self.extra_test {
            write_report(&mut out, "extra_test", r);
        }
        if self.lexicon_unknown_words > 0 {
            let _ = writeln!(
                out,
                "lexicon_unknown_words = {}",
                self.lexicon_unknown_words
            );
        }
        f.write_str(&out)
    }
}

/// Builds the starting model, premerges affixes (trivial start only),
/// runs the merge schedule and writes the chosen model, the trace and a
/// summary to `output_dir`.
pub fn cmd_merge(config: &RunConfig) -> Result<MergeSummary> {
    config.validate()?;
    let (vocab, train) = load_corpus(&config.train_path)?;
    let test = match &config.test_path {
        Some(p) => Some(load_corpus_with(p, &vocab)?),
        None => None,
    };
    let extra = match &config.extra_test_path {
        Some(p) => Some(load_corpus_with(p, &vocab)?),
        None => None,
    };
    let lexicon = match &config.lexicon_path {
        Some(p) => Some(Arc::new(
            read_lexicon(&read_bytes(p)?, &vocab).map_err(|e| Error::at(p, e))?,
        )),
        None => None,
    };
    let schedule = ConstraintSchedule::parse(&config.schedule, lexicon.as_ref())?;

    let (mut model, mut paths) = match config.start {
        Start::Trivial => build_trivial_model(&train, vocab.len()),
        Start::Bigram => build_bigram(&train, vocab.len()),
    };
    let initial_states = model.num_states();
    let tokens = train.total_tokens() as f64;
    let lp_of = |loglik: f64| -loglik / std::f64::consts::LN_10 / tokens;

    let mut records = Vec::new();
    let mut premerges = 0;
    if config.start == Start::Trivial {
        let mut loglik = corpus_loglik(&model);
        let mut states = model.num_states();
        for (i, m) in premerge_affixes(&mut model, &mut paths, &train)
            .into_iter()
            .enumerate()
        {
            loglik += m.delta;
            states -= 1;
            records.push(MergeRecord {
                merge: i as u64 + 1,
                states,
                train_lp: lp_of(loglik),
                test_lp: None,
                delta: m.delta,
                q1: m.q1,
                q2: m.q2,
            });
        }
        premerges = records.len();
        paths.relabel(&model);
    }

    let mut opts = MergeOptions::new(schedule.clone(), config.stop);
    opts.log_every = config.log_every;
    opts.prior_merges = premerges as u64;
    opts.reviterbi_every = config.reviterbi_every;
    opts.eval = test.as_ref().map(|corpus| EvalSet {
        corpus,
        mode: config.mode,
        oov: config.oov_policy,
    });
    let outcome = run_merging(&mut model, &mut paths, &train, &opts)?;
    let merges = outcome.trace.records.len() as u64;
    let final_states = model.num_states();
    records.extend(outcome.trace.records);
    let trace = crate::merging::MergeTrace { records };

    let (chosen, model_merge) = match outcome.best {
        Some((best, _, at)) => (best, at),
        None => (model, premerges as u64 + merges),
    };
    let violations = validate(&chosen);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }

    let view = view_for(&chosen, config.smoothing_alpha)?;
    let eval = |c: &Corpus| evaluate_corpus(&view, c, config.mode, config.oov_policy);
    let summary = MergeSummary {
        start: config.start,
        schedule: schedule.to_string(),
        stop: config.stop,
        reason: outcome.reason,
        constraint_exhausted: outcome.reason == StopReason::ConstraintExhausted,
        premerges,
        merges,
        initial_states,
        final_states,
        model_states: chosen.num_states(),
        model_merge,
        train: eval(&train),
        test: test.as_ref().map(eval),
        extra_test: extra.as_ref().map(eval),
        lexicon_unknown_words: lexicon.map_or(0, |l| l.warning_count()),
    };

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::at(dir, e.into()))?;
    write_atomic(&dir.join(MODEL_FILE), &write_model(&chosen, &vocab))?;
    write_atomic(&dir.join(TRACE_FILE), &trace.to_csv())?;
    write_atomic(&dir.join(SUMMARY_FILE), &summary.to_string())?;
    Ok(summary)
}

/// Scores a corpus with a stored model. `alpha > 0` evaluates the
/// additively smoothed model.
pub fn cmd_eval(
    model_path: &Path,
    corpus_path: &Path,
    mode: ScoreMode,
    oov: OovPolicy,
    alpha: f64,
) -> Result<EvaluationReport> {
    BigramConfig::new(alpha)?;
    let (model, vocab) = load_model(model_path)?;
    let corpus = load_corpus_with(corpus_path, &vocab)?;
    let view = view_for(&model, alpha).map_err(|e| Error::at(model_path, e))?;
    Ok(evaluate_corpus(&view, &corpus, mode, oov))
}

/// Where `cmd_synth` writes its outputs. The test corpus and generator
/// model are optional.
#[derive(Clone, Debug, Default)]
pub struct SynthOutputs {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

pub fn cmd_synth(params: &SynthParams, out: &SynthOutputs) -> Result<Synthetic> {
    let synth = generate(params)?;
    write_atomic(&out.train, &synth.render(&synth.train))?;
    if let Some(p) = &out.test {
        write_atomic(p, &synth.render(&synth.test))?;
    }
    if let Some(p) = &out.model {
        write_atomic(p, &write_model(&synth.generator, &synth.vocab))?;
    }
    Ok(synth)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelStats {
    pub states: usize,
    pub vocab: usize,
    pub transition_cells: usize,
    pub emission_cells: usize,
    pub utterances: u64,
    pub tokens: u64,
    pub max_out_degree: usize,
    pub max_emissions: usize,
}

impl fmt::Display for ModelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states = {}", self.states)?;
        writeln!(f, "vocab = {}", self.vocab)?;
        writeln!(f, "transition_cells = {}", self.transition_cells)?;
        writeln!(f, "emission_cells = {}", self.emission_cells)?;
        writeln!(f, "utterances = {}", self.utterances)?;
        writeln!(f, "tokens = {}", self.tokens)?;
        writeln!(f, "max_out_degree = {}", self.max_out_degree)?;
        writeln!(f, "max_emissions = {}", self.max_emissions)
    }
}

pub fn model_stats(model: &CountModel) -> ModelStats {
    use crate::model::StateId;
    let live: Vec<StateId> = model.live_states().collect();
    ModelStats {
        states: live.len(),
        vocab: model.vocab_size(),
        transition_cells: model.transitions(StateId::START).len()
            + live
                .iter()
                .map(|&s| model.transitions(s).len())
                .sum::<usize>(),
        emission_cells: live.iter().map(|&s| model.emissions(s).len()).sum(),
        utterances: model.visits(StateId::START),
        tokens: model.total_emissions(),
        max_out_degree: live
            .iter()
            .map(|&s| model.transitions(s).len())
            .max()
            .unwrap_or(0),
        max_emissions: live
            .iter()
            .map(|&s| model.emissions(s).len())
            .max()
            .unwrap_or(0),
    }
}

pub fn cmd_inspect(model_path: &Path) -> Result<ModelStats> {
    let (model, _) = load_model(model_path)?;
    Ok(model_stats(&model))
}
