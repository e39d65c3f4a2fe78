//! Greedy state merging under the Viterbi-count approximation.
//!
//! Every distinct utterance keeps the state path it was assigned when the
//! model was built. Merging two states relabels those paths, so the corpus
//! likelihood is a function of the counts alone and the effect of a merge
//! can be computed from the rows it touches.

mod premerge;
mod run;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::inference::{viterbi, OovPolicy};
use crate::model::{probabilities, CountModel, StateId};

pub use premerge::premerge_affixes;
pub use run::{
    run_merging, EvalSet, MergeOptions, MergeOutcome, MergeRecord, MergeTrace, StopCriterion,
    StopReason,
};

/// One state path per distinct utterance, in corpus order.
///
/// Paths may mention retired states; [`StoredPaths::resolved`] maps them
/// through the model's merge history.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredPaths {
    paths: Vec<Vec<StateId>>,
}

impl StoredPaths {
    pub fn new(paths: Vec<Vec<StateId>>) -> Self {
        Self { paths }
    }

    pub fn paths(&self) -> &[Vec<StateId>] {
        &self.paths
    }

    /// Rewrites every stored state to its live representative.
    pub fn relabel(&mut self, model: &CountModel) {
        for path in &mut self.paths {
            for s in path.iter_mut() {
                *s = model.resolve(*s);
            }
        }
    }

    pub fn resolved(&self, model: &CountModel) -> Vec<Vec<StateId>> {
        let mut copy = self.clone();
        copy.relabel(model);
        copy.paths
    }

    /// Counts implied by the (relabelled) paths.
    pub fn recount(&self, corpus: &Corpus, model: &CountModel) -> CountModel {
        CountModel::from_paths(corpus, &self.resolved(model), model.vocab_size())
    }
}

/// A merge that was applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppliedMerge {
    pub q1: StateId,
    pub q2: StateId,
    pub merged: StateId,
    pub delta: f64,
}

/// One dedicated state chain per distinct utterance.
pub fn build_trivial_model(corpus: &Corpus, vocab_size: usize) -> (CountModel, StoredPaths) {
    let mut model = CountModel::new(vocab_size);
    let mut paths = Vec::with_capacity(corpus.distinct());
    for utt in corpus.utterances() {
        let path: Vec<StateId> = utt.tokens.iter().map(|_| model.add_state()).collect();
        model.record_path(&path, &utt.tokens, utt.count);
        paths.push(path);
    }
    (model, StoredPaths::new(paths))
}

#[inline]
pub(crate) fn xlnx(c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        let x = c as f64;
        x * x.ln()
    }
}

/// Likelihood gain from pooling two counts into one cell:
/// `(x+y) ln(x+y) - x ln x - y ln y`, never negative.
#[inline]
pub(crate) fn pool_gain(x: u64, y: u64) -> f64 {
    if x == 0 || y == 0 {
        return 0.0;
    }
    let (xf, yf) = (x as f64, y as f64);
    xf * (yf / xf).ln_1p() + yf * (xf / yf).ln_1p()
}

fn row_term<'a>(counts: impl Iterator<Item = &'a u64>) -> f64 {
    let mut total = 0u64;
    let mut sum = 0.0;
    for &c in counts {
        total += c;
        sum += xlnx(c);
    }
    sum - xlnx(total)
}

/// Viterbi-count log-likelihood (natural log) of the training corpus:
/// `sum over rows of (sum_j c_j ln c_j - C ln C)`.
pub fn corpus_loglik(model: &CountModel) -> f64 {
    let mut ll = row_term(model.transitions(StateId::START).values());
    for s in model.live_states() {
        ll += row_term(model.transitions(s).values());
        ll += row_term(model.emissions(s).values());
    }
    ll
}

/// Sum of pool gains over keys present in both sorted maps, skipping `skip`.
fn shared_gain<K: Ord + Copy>(
    a: &std::collections::BTreeMap<K, u64>,
    b: &std::collections::BTreeMap<K, u64>,
    skip: impl Fn(K) -> bool,
) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut gain = 0.0;
    for (k, &x) in small {
        if skip(*k) {
            continue;
        }
        if let Some(&y) = large.get(k) {
            gain += pool_gain(x, y);
        }
    }
    gain
}

/// Log-likelihood change of merging two live proper states, evaluated
/// locally without touching the model. Callers guarantee `q1 != q2`, both
/// live and proper.
pub(crate) fn delta_unchecked(model: &CountModel, q1: StateId, q2: StateId) -> f64 {
    let (o1, o2) = (model.transitions(q1), model.transitions(q2));
    let (e1, e2) = (model.emissions(q1), model.emissions(q2));
    let v1: u64 = o1.values().sum();
    let v2: u64 = o2.values().sum();
    let w1: u64 = e1.values().sum();
    let w2: u64 = e2.values().sum();

    let mut gain = 0.0;
    // Predecessor rows: cells r->q1 and r->q2 become one.
    let (p1, p2) = (model.predecessors(q1), model.predecessors(q2));
    let (ps, pl) = if p1.len() <= p2.len() {
        (p1, p2)
    } else {
        (p2, p1)
    };
    for &r in ps {
        if r == q1 || r == q2 || !pl.contains(&r) {
            continue;
        }
        gain += pool_gain(model.transition(r, q1), model.transition(r, q2));
    }
    gain += shared_gain(e1, e2, |_| false);
    gain += shared_gain(o1, o2, |t| t == q1 || t == q2);
    // All cells among {q1, q2} collapse into the merged self-loop.
    let cell = |a: &std::collections::BTreeMap<StateId, u64>, t| a.get(&t).copied().unwrap_or(0);
    let loops = [cell(o1, q1), cell(o1, q2), cell(o2, q1), cell(o2, q2)];
    let mut acc = 0u64;
    for c in loops {
        gain += pool_gain(acc, c);
        acc += c;
    }
    gain - pool_gain(v1, v2) - pool_gain(w1, w2)
}

fn check_pair(model: &CountModel, q1: StateId, q2: StateId) -> Result<()> {
    for q in [q1, q2] {
        if q.is_special() {
            return Err(Error::Contract(format!(
                "start and end states cannot be merged (got {q})"
            )));
        }
        if !model.is_live(q) {
            return Err(Error::Contract(format!("state {q} is not live")));
        }
    }
    if q1 == q2 {
        return Err(Error::Contract(format!(
            "cannot merge state {q1} with itself"
        )));
    }
    Ok(())
}

/// `corpus_loglik(merge(q1, q2)) - corpus_loglik(model)`.
pub fn delta_loglik(model: &CountModel, q1: StateId, q2: StateId) -> Result<f64> {
    check_pair(model, q1, q2)?;
    Ok(delta_unchecked(model, q1.min(q2), q1.max(q2)))
}

/// Replaces `q1` and `q2` by a fresh state with pooled counts. Stored paths
/// follow lazily through the model's merge history.
pub fn apply_merge(
    model: &mut CountModel,
    _paths: &mut StoredPaths,
    q1: StateId,
    q2: StateId,
) -> Result<StateId> {
    check_pair(model, q1, q2)?;
    Ok(model.merge_states(q1.min(q2), q1.max(q2)))
}

/// Re-parses the corpus with the current probabilities and rebuilds counts
/// from the new best paths. State ids are preserved; states no path uses
/// any more are dropped.
pub fn reviterbi(model: &CountModel, corpus: &Corpus) -> Result<(CountModel, StoredPaths)> {
    let view = probabilities(model)?;
    let paths: Vec<Vec<StateId>> = corpus
        .utterances()
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let r = viterbi(&view, &u.tokens, OovPolicy::Strict);
            if r.path.is_empty() {
                Err(Error::NoPath { index: i })
            } else {
                Ok(r.path)
            }
        })
        .collect::<Result<_>>()?;

    let mut rebuilt = model.clone();
    rebuilt.reset_counts();
    for (u, path) in corpus.utterances().iter().zip(&paths) {
        rebuilt.record_path(path, &u.tokens, u.count);
    }
    rebuilt.prune_unvisited();
    Ok((rebuilt, StoredPaths::new(paths)))
}
