//! Scoring output sequences: all-paths (forward) and best-path (Viterbi)
//! probabilities, and corpus perplexity reports.

use std::f64::consts::LN_10;
use std::fmt;

use rayon::prelude::*;

use crate::corpus::{Corpus, TokenId};
use crate::model::{LogRow, ProbabilityView, StateId};

/// Emission probability charged for an out-of-vocabulary token under
/// [`OovPolicy::Floor`].
pub const OOV_FLOOR: f64 = 1e-6;

/// How tokens that no state can emit are scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OovPolicy {
    /// Zero probability: the utterance scores `-inf`.
    Strict,
    /// Any state emits the token with probability [`OOV_FLOOR`].
    Floor,
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovPolicy::Strict => "strict",
            OovPolicy::Floor => "floor",
        })
    }
}

impl std::str::FromStr for OovPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(OovPolicy::Strict),
            "floor" => Ok(OovPolicy::Floor),
            _ => Err(format!("unknown OOV policy {s:?} (expected strict|floor)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    Forward,
    Viterbi,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Forward => "forward",
            ScoreMode::Viterbi => "viterbi",
        })
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(ScoreMode::Forward),
            "viterbi" => Ok(ScoreMode::Viterbi),
            _ => Err(format!("unknown mode {s:?} (expected forward|viterbi)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceScore {
    /// Natural log; `-inf` when no path exists.
    pub log_prob: f64,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiResult {
    pub log_prob: f64,
    /// Empty when the sequence has no path.
    pub path: Vec<StateId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub total_log10_prob: f64,
    /// Emitted tokens only; end transitions are scored but not counted.
    pub token_count: u64,
    pub log_perplexity: f64,
    pub perplexity: f64,
    pub oov_tokens: u64,
    /// Utterance occurrences with zero probability.
    pub zero_prob_utterances: u64,
    pub mode: ScoreMode,
    pub oov_policy: OovPolicy,
}

impl EvaluationReport {
    pub fn is_infinite(&self) -> bool {
        self.log_perplexity.is_infinite()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Emitting states for one position, as (dense index, ln p(token | state)).
fn emitters(view: &ProbabilityView, token: TokenId, oov: OovPolicy) -> Vec<(u32, f64)> {
    let n = view.states.len() as u32;
    if !view.knows_token(token) {
        return match oov {
            OovPolicy::Strict => Vec::new(),
            OovPolicy::Floor => (0..n).map(|i| (i, OOV_FLOOR.ln())).collect(),
        };
    }
    if view.emit.iter().all(LogRow::is_sparse) {
        view.emitters
            .get(&token)
            .map(|idx| {
                idx.iter()
                    .map(|&i| (i, view.emit[i as usize].get(token.0)))
                    .collect()
            })
            .unwrap_or_default()
    } else {
        (0..n)
            .map(|i| (i, view.emit[i as usize].get(token.0)))
            .filter(|e| e.1 > f64::NEG_INFINITY)
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Combine {
    Sum,
    Max,
}

/// Shared dynamic program. Returns the final log score and, in `Max` mode,
/// the best path.
fn run_dp(
    view: &ProbabilityView,
    seq: &[TokenId],
    oov: OovPolicy,
    combine: Combine,
) -> (f64, Vec<StateId>) {
    if seq.is_empty() {
        return (f64::NEG_INFINITY, Vec::new());
    }
    let n = view.states.len();
    let dense = !view.is_sparse();
    let mut emit_score = vec![f64::NEG_INFINITY; n];
    let mut acc = vec![f64::NEG_INFINITY; n];
    let mut bp = vec![u32::MAX; n];
    // Active states after each position, sorted by dense index.
    let mut active: Vec<(u32, f64)> = Vec::new();
    let mut backptrs: Vec<Vec<(u32, u32)>> = Vec::new();

    for (t, &tok) in seq.iter().enumerate() {
        let em = emitters(view, tok, oov);
        if em.is_empty() {
            return (f64::NEG_INFINITY, Vec::new());
        }
        for &(j, le) in &em {
            emit_score[j as usize] = le;
        }
        let mut relax = |from: u32, j: u32, score: f64| {
            let ju = j as usize;
            let le = emit_score[ju];
            if le == f64::NEG_INFINITY || score == f64::NEG_INFINITY {
                return;
            }
            let cand = score + le;
            match combine {
                Combine::Sum => acc[ju] = log_add(acc[ju], cand),
                Combine::Max => {
                    if cand > acc[ju] {
                        acc[ju] = cand;
                        bp[ju] = from;
                    }
                }
            }
        };
        let prev: Vec<(u32, f64, &LogRow)> = if t == 0 {
            vec![(u32::MAX, 0.0, &view.start)]
        } else {
            active
                .iter()
                .map(|&(i, s)| (i, s, &view.trans[i as usize]))
                .collect()
        };
        for &(from, score, row) in &prev {
            if dense || !row.is_sparse() {
                for &(j, _) in &em {
                    relax(from, j, score + row.get(j));
                }
            } else {
                for &(j, lt) in &row.entries {
                    if (j as usize) < n {
                        relax(from, j, score + lt);
                    }
                }
            }
        }
        let mut next = Vec::with_capacity(em.len());
        let mut ptrs = Vec::new();
        for &(j, _) in &em {
            let ju = j as usize;
            if acc[ju] > f64::NEG_INFINITY {
                next.push((j, acc[ju]));
                if combine == Combine::Max {
                    ptrs.push((j, bp[ju]));
                }
            }
            acc[ju] = f64::NEG_INFINITY;
            bp[ju] = u32::MAX;
            emit_score[ju] = f64::NEG_INFINITY;
        }
        next.sort_by_key(|e| e.0);
        ptrs.sort_by_key(|e| e.0);
        if next.is_empty() {
            return (f64::NEG_INFINITY, Vec::new());
        }
        active = next;
        backptrs.push(ptrs);
    }

    let end = view.end_index();
    let mut best = f64::NEG_INFINITY;
    let mut best_state = u32::MAX;
    for &(i, s) in &active {
        let cand = s + view.trans[i as usize].get(end);
        match combine {
            Combine::Sum => best = log_add(best, cand),
            Combine::Max => {
                if cand > best {
                    best = cand;
                    best_state = i;
                }
            }
        }
    }
    if combine == Combine::Sum || best == f64::NEG_INFINITY {
        return (best, Vec::new());
    }
    let mut path = vec![StateId::START; seq.len()];
    let mut cur = best_state;
    for t in (0..seq.len()).rev() {
        path[t] = view.state_at(cur);
        let ptrs = &backptrs[t];
        let k = ptrs
            .binary_search_by_key(&cur, |e| e.0)
            .expect("backpointer");
        cur = ptrs[k].1;
    }
    (best, path)
}

/// All-paths probability of `seq`.
pub fn forward(view: &ProbabilityView, seq: &[TokenId], oov: OovPolicy) -> SequenceScore {
    let (log_prob, _) = run_dp(view, seq, oov, Combine::Sum);
    SequenceScore {
        log_prob,
        len: seq.len(),
    }
}

/// Best single state path for `seq`. Ties go to the smallest predecessor id.
pub fn viterbi(view: &ProbabilityView, seq: &[TokenId], oov: OovPolicy) -> ViterbiResult {
    let (log_prob, path) = run_dp(view, seq, oov, Combine::Max);
    ViterbiResult { log_prob, path }
}

pub fn score(view: &ProbabilityView, seq: &[TokenId], mode: ScoreMode, oov: OovPolicy) -> f64 {
    match mode {
        ScoreMode::Forward => forward(view, seq, oov).log_prob,
        ScoreMode::Viterbi => viterbi(view, seq, oov).log_prob,
    }
}

/// Scores every utterance (weighted by multiplicity) and reports base-10
/// log perplexity per emitted token.
pub fn evaluate_corpus(
    view: &ProbabilityView,
    corpus: &Corpus,
    mode: ScoreMode,
    oov: OovPolicy,
) -> EvaluationReport {
    let per_utt: Vec<(f64, u64)> = corpus
        .utterances()
        .par_iter()
        .map(|u| {
            let lp = score(view, &u.tokens, mode, oov);
            let oov_n = u.tokens.iter().filter(|&&t| !view.knows_token(t)).count() as u64;
            (lp, oov_n)
        })
        .collect();

    let mut total_ln = 0.0;
    let mut oov_tokens = 0;
    let mut zero_prob = 0;
    for (u, &(lp, oov_n)) in corpus.utterances().iter().zip(&per_utt) {
        oov_tokens += oov_n * u.count;
        if lp == f64::NEG_INFINITY {
            zero_prob += u.count;
        }
        total_ln += lp * u.count as f64;
    }
    let total_log10_prob = total_ln / LN_10;
    let token_count = corpus.total_tokens();
    let log_perplexity = -total_log10_prob / token_count as f64;
    EvaluationReport {
        total_log10_prob,
        token_count,
        log_perplexity,
        perplexity: 10f64.powf(log_perplexity),
        oov_tokens,
        zero_prob_utterances: zero_prob,
        mode,
        oov_policy: oov,
    }
}
