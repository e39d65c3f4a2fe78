//! Word-bigram Markov models: one state per word type.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, TokenId};
use crate::error::{Error, Result};
use crate::merging::StoredPaths;
use crate::model::{CountModel, LogRow, ProbabilityView, StateId};

/// Additive smoothing applied when evaluating a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BigramConfig {
    pub smoothing_alpha: f64,
}

impl BigramConfig {
    pub fn new(smoothing_alpha: f64) -> Result<Self> {
        if smoothing_alpha.is_nan() || smoothing_alpha < 0.0 || !smoothing_alpha.is_finite() {
            return Err(Error::Config(format!(
                "smoothing alpha must be a non-negative number, got {smoothing_alpha}"
            )));
        }
        Ok(Self { smoothing_alpha })
    }
}

/// Bigram model with relative-frequency counts, plus each utterance's
/// (unique) state path. States are numbered by ascending token id.
pub fn build_bigram(corpus: &Corpus, vocab_size: usize) -> (CountModel, StoredPaths) {
    let mut model = CountModel::new(vocab_size);
    let state_of: BTreeMap<TokenId, StateId> = corpus
        .token_types()
        .into_iter()
        .map(|t| (t, model.add_state()))
        .collect();
    let mut paths = Vec::with_capacity(corpus.distinct());
    for utt in corpus.utterances() {
        let path: Vec<StateId> = utt.tokens.iter().map(|t| state_of[t]).collect();
        model.record_path(&path, &utt.tokens, utt.count);
        paths.push(path);
    }
    (model, StoredPaths::new(paths))
}

fn smoothed_row(
    cells: impl Iterator<Item = (u32, u64)>,
    domain: usize,
    alpha: f64,
    excluded: Option<u32>,
) -> LogRow {
    let cells: Vec<(u32, u64)> = cells.collect();
    let total: u64 = cells.iter().map(|c| c.1).sum();
    let denom = (total as f64 + alpha * domain as f64).ln();
    let mut entries: Vec<(u32, f64)> = cells
        .into_iter()
        .map(|(k, c)| (k, (c as f64 + alpha).ln() - denom))
        .collect();
    if let Some(k) = excluded {
        entries.push((k, f64::NEG_INFINITY));
    }
    entries.sort_by_key(|e| e.0);
    LogRow {
        entries,
        default: alpha.ln() - denom,
    }
}

/// Additively smoothed probabilities: `(c + alpha) / (C + alpha * D)` where
/// `D` is the size of the row's outcome domain (proper states plus the end
/// state for transitions, the vocabulary for emissions). Evaluation only.
pub fn smooth_view(model: &CountModel, config: &BigramConfig) -> Result<ProbabilityView> {
    let alpha = config.smoothing_alpha;
    if alpha <= 0.0 {
        return Err(Error::Contract(
            "smooth_view needs alpha > 0; use probabilities() for raw estimates".into(),
        ));
    }
    let violations = crate::model::validate(model);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let states: Vec<StateId> = model.live_states().collect();
    let n = states.len();
    let dense: BTreeMap<StateId, u32> = states
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i as u32))
        .chain(std::iter::once((StateId::END, n as u32)))
        .collect();
    let row = |s: StateId| model.transitions(s).iter().map(|(t, &c)| (dense[t], c));

    // The start state cannot reach the end state directly.
    let start = smoothed_row(row(StateId::START), n, alpha, Some(n as u32));
    let trans = states
        .iter()
        .map(|&s| smoothed_row(row(s), n + 1, alpha, None))
        .collect();
    let emit = states
        .iter()
        .map(|&s| {
            smoothed_row(
                model.emissions(s).iter().map(|(t, &c)| (t.0, c)),
                model.vocab_size(),
                alpha,
                None,
            )
        })
        .collect();
    Ok(ProbabilityView::from_parts(model, start, trans, emit))
}
