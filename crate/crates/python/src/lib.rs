//! Python bindings for the `statemerge` crate.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use statemerge::constraints::ConstraintSchedule;
use statemerge::corpus::{
    read_corpus, read_corpus_into, Corpus as CoreCorpus, TokenId, Vocabulary,
};
use statemerge::format::{read_model, write_model};
use statemerge::inference::{self, EvaluationReport, OovPolicy, ScoreMode};
use statemerge::merging::{
    build_trivial_model, corpus_loglik, delta_loglik, premerge_affixes, reviterbi, run_merging,
    EvalSet, MergeOptions, StopCriterion, StoredPaths,
};
use statemerge::model::{probabilities, validate, CountModel, ProbabilityView, StateId};
use statemerge::ngram::{build_bigram, smooth_view, BigramConfig};
use statemerge::synth::{generate, SynthParams};
use statemerge::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::Invalid(_) | Error::Inconsistent { .. } | Error::Contract(_)) => {
            PyRuntimeError::new_err(e.to_string())
        }
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

/// A tokenized corpus with its own vocabulary.
#[pyclass(module = "statemerge_py", skip_from_py_object)]
#[derive(Clone)]
struct Corpus {
    vocab: Vocabulary,
    corpus: CoreCorpus,
}

#[pymethods]
impl Corpus {
    /// One utterance per line, tokens separated by whitespace.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let (vocab, corpus) = read_corpus(text.as_bytes()).map_err(to_py)?;
        Ok(Self { vocab, corpus })
    }

    #[getter]
    fn total_tokens(&self) -> u64 {
        self.corpus.total_tokens()
    }

    #[getter]
    fn total_utterances(&self) -> u64 {
        self.corpus.total_utterances()
    }

    #[getter]
    fn distinct(&self) -> usize {
        self.corpus.distinct()
    }

    fn words(&self) -> Vec<String> {
        self.vocab.words().map(|(_, w)| w.to_string()).collect()
    }

    fn to_text(&self) -> String {
        self.corpus.to_text(&self.vocab)
    }

    fn __len__(&self) -> usize {
        self.corpus.total_utterances() as usize
    }
}

impl Corpus {
    /// The same utterances tokenized against `vocab`.
    fn under(&self, vocab: &Vocabulary) -> PyResult<CoreCorpus> {
        let mut v = vocab.clone();
        read_corpus_into(self.corpus.to_text(&self.vocab).as_bytes(), &mut v).map_err(to_py)
    }
}

#[pyclass(module = "statemerge_py", get_all, skip_from_py_object)]
#[derive(Clone)]
struct Report {
    total_log10_prob: f64,
    token_count: u64,
    log_perplexity: f64,
    perplexity: f64,
    oov_tokens: u64,
    zero_prob_utterances: u64,
}

#[pymethods]
impl Report {
    fn __repr__(&self) -> String {
        format!(
            "Report(tokens={}, log_perplexity={}, oov_tokens={})",
            self.token_count, self.log_perplexity, self.oov_tokens
        )
    }
}

impl From<EvaluationReport> for Report {
    fn from(r: EvaluationReport) -> Self {
        Self {
            total_log10_prob: r.total_log10_prob,
            token_count: r.token_count,
            log_perplexity: r.log_perplexity,
            perplexity: r.perplexity,
            oov_tokens: r.oov_tokens,
            zero_prob_utterances: r.zero_prob_utterances,
        }
    }
}

/// (merge, states, train_lp, test_lp or None, delta, q1, q2)
type TraceRow = (u64, usize, f64, Option<f64>, f64, u32, u32);

/// Outcome of a merging run.
#[pyclass(module = "statemerge_py", get_all)]
struct MergeResult {
    stop_reason: String,
    trace: Vec<TraceRow>,
    /// Held-out best model, when held-out stopping was used.
    best: Option<Py<Model>>,
    best_test_lp: Option<f64>,
}

/// Count-based Markov model. Models built from a corpus remember the
/// state path of every utterance, which merging needs.
#[pyclass(module = "statemerge_py", skip_from_py_object)]
#[derive(Clone)]
struct Model {
    model: CountModel,
    vocab: Vocabulary,
    paths: Option<StoredPaths>,
}

impl Model {
    fn view(&self, alpha: f64) -> PyResult<ProbabilityView> {
        if alpha > 0.0 {
            smooth_view(&self.model, &BigramConfig::new(alpha).map_err(to_py)?).map_err(to_py)
        } else {
            probabilities(&self.model).map_err(to_py)
        }
    }

    fn tokens(&self, words: &[String]) -> Vec<TokenId> {
        // Unknown words map past the vocabulary and count as OOV.
        let unknown = TokenId(self.vocab.len() as u32);
        words
            .iter()
            .map(|w| self.vocab.get(w).unwrap_or(unknown))
            .collect()
    }
}

#[pymethods]
impl Model {
    /// One dedicated state chain per distinct utterance.
    #[staticmethod]
    fn trivial(corpus: &Corpus) -> Self {
        let (model, paths) = build_trivial_model(&corpus.corpus, corpus.vocab.len());
        Self {
            model,
            vocab: corpus.vocab.clone(),
            paths: Some(paths),
        }
    }

    /// Word-bigram model: one state per word type.
    #[staticmethod]
    fn bigram(corpus: &Corpus) -> Self {
        let (model, paths) = build_bigram(&corpus.corpus, corpus.vocab.len());
        Self {
            model,
            vocab: corpus.vocab.clone(),
            paths: Some(paths),
        }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let (model, vocab) = read_model(text).map_err(to_py)?;
        Ok(Self {
            model,
            vocab,
            paths: None,
        })
    }

    fn to_text(&self) -> String {
        write_model(&self.model, &self.vocab)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.model.vocab_size()
    }

    fn states(&self) -> Vec<u32> {
        self.model.live_states().map(|s| s.0).collect()
    }

    /// Viterbi-count log-likelihood (natural log) of the training counts.
    fn loglik(&self) -> f64 {
        corpus_loglik(&self.model)
    }

    /// Descriptions of every structural defect; empty when valid.
    fn validate(&self) -> Vec<String> {
        validate(&self.model)
            .iter()
            .map(|v| v.to_string())
            .collect()
    }

    /// Likelihood change of merging states `q1` and `q2`.
    fn delta(&self, q1: u32, q2: u32) -> PyResult<f64> {
        delta_loglik(&self.model, StateId(q1), StateId(q2)).map_err(to_py)
    }

    /// Applies the likelihood-preserving prefix and suffix merges;
    /// returns how many were made.
    fn premerge(&mut self, corpus: &Corpus) -> PyResult<usize> {
        let train = corpus.under(&self.vocab)?;
        let paths = self
            .paths
            .as_mut()
            .ok_or_else(|| PyValueError::new_err("premerge needs a model built from a corpus"))?;
        let n = premerge_affixes(&mut self.model, paths, &train).len();
        paths.relabel(&self.model);
        Ok(n)
    }

    /// Greedy merging in place. `schedule` uses the `kind[:budget],...`
    /// syntax; `stop` is e.g. `target_states:10` or `held_out_minimum:50`.
    #[pyo3(signature = (corpus, schedule="none", stop="target_states:1", test=None, mode="viterbi", oov="floor", log_every=100))]
    #[allow(clippy::too_many_arguments)]
    fn merge(
        &mut self,
        py: Python<'_>,
        corpus: &Corpus,
        schedule: &str,
        stop: &str,
        test: Option<&Corpus>,
        mode: &str,
        oov: &str,
        log_every: u64,
    ) -> PyResult<MergeResult> {
        let train = corpus.under(&self.vocab)?;
        let test = test.map(|t| t.under(&self.vocab)).transpose()?;
        let mut opts = MergeOptions::new(
            ConstraintSchedule::parse(schedule, None).map_err(to_py)?,
            stop.parse::<StopCriterion>().map_err(to_py)?,
        );
        let (mode, oov): (ScoreMode, OovPolicy) = (parse(mode)?, parse(oov)?);
        opts.log_every = log_every;
        opts.eval = test.as_ref().map(|corpus| EvalSet { corpus, mode, oov });
        let mut paths = match self.paths.take() {
            Some(p) => p,
            None => {
                let (m, p) = reviterbi(&self.model, &train).map_err(to_py)?;
                self.model = m;
                p
            }
        };
        let outcome = run_merging(&mut self.model, &mut paths, &train, &opts);
        self.paths = Some(paths);
        let outcome = outcome.map_err(to_py)?;
        let best = match &outcome.best {
            Some((m, _, _)) => Some(Py::new(
                py,
                Model {
                    model: m.clone(),
                    vocab: self.vocab.clone(),
                    paths: None,
                },
            )?),
            None => None,
        };
        Ok(MergeResult {
            stop_reason: outcome.reason.to_string(),
            trace: outcome
                .trace
                .records
                .iter()
                .map(|r| {
                    (
                        r.merge, r.states, r.train_lp, r.test_lp, r.delta, r.q1.0, r.q2.0,
                    )
                })
                .collect(),
            best,
            best_test_lp: outcome.best.map(|b| b.1),
        })
    }

    /// Natural-log probability of a word sequence.
    #[pyo3(signature = (words, mode="forward", oov="strict", alpha=0.0))]
    fn score(&self, words: Vec<String>, mode: &str, oov: &str, alpha: f64) -> PyResult<f64> {
        let view = self.view(alpha)?;
        Ok(inference::score(
            &view,
            &self.tokens(&words),
            parse(mode)?,
            parse(oov)?,
        ))
    }

    /// Best state path and its natural-log probability.
    #[pyo3(signature = (words, oov="strict"))]
    fn viterbi(&self, words: Vec<String>, oov: &str) -> PyResult<(f64, Vec<u32>)> {
        let view = self.view(0.0)?;
        let r = inference::viterbi(&view, &self.tokens(&words), parse(oov)?);
        Ok((r.log_prob, r.path.iter().map(|s| s.0).collect()))
    }

    #[pyo3(signature = (corpus, mode="viterbi", oov="floor", alpha=0.0))]
    fn evaluate(&self, corpus: &Corpus, mode: &str, oov: &str, alpha: f64) -> PyResult<Report> {
        let view = self.view(alpha)?;
        let c = corpus.under(&self.vocab)?;
        Ok(inference::evaluate_corpus(&view, &c, parse(mode)?, parse(oov)?).into())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(states={}, vocab={})",
            self.model.num_states(),
            self.model.vocab_size()
        )
    }
}

/// Samples a random generator; returns (train corpus, test corpus or
/// None, generator).
#[pyfunction]
#[pyo3(signature = (states, alphabet, utterances, test_utterances=0, seed=0))]
fn synth(
    states: usize,
    alphabet: usize,
    utterances: usize,
    test_utterances: usize,
    seed: u64,
) -> PyResult<(Corpus, Option<Corpus>, Model)> {
    let s = generate(&SynthParams {
        states,
        alphabet,
        utterances,
        test_utterances,
        seed,
    })
    .map_err(to_py)?;
    let train = Corpus {
        vocab: s.vocab.clone(),
        corpus: s.train_corpus().map_err(to_py)?,
    };
    let test = if s.test.is_empty() {
        None
    } else {
        let mut vocab = s.vocab.clone();
        let corpus = read_corpus_into(s.render(&s.test).as_bytes(), &mut vocab).map_err(to_py)?;
        Some(Corpus { vocab, corpus })
    };
    let generator = Model {
        model: s.generator,
        vocab: s.vocab,
        paths: None,
    };
    Ok((train, test, generator))
}

#[pymodule]
fn statemerge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_class::<Report>()?;
    m.add_class::<MergeResult>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
