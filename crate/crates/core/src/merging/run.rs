use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::LN_10;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use super::{corpus_loglik, delta_unchecked, reviterbi, StoredPaths};
use crate::constraints::{signature, ClassKey, ConstraintKind, ConstraintSchedule};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::inference::{evaluate_corpus, OovPolicy, ScoreMode};
use crate::model::{probabilities, CountModel, StateId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopCriterion {
    /// Stop before a merge would push training log perplexity above this.
    TrainLpThreshold(f64),
    /// Stop once this many proper states remain.
    TargetStates(usize),
    /// Stop after this many merges in the current run.
    MaxMerges(u64),
    /// Stop once held-out log perplexity has not improved for this many
    /// merges; the best model seen is kept.
    HeldOutMinimum { patience: u64 },
}

impl fmt::Display for StopCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopCriterion::TrainLpThreshold(v) => write!(f, "train_lp_threshold:{v}"),
            StopCriterion::TargetStates(n) => write!(f, "target_states:{n}"),
            StopCriterion::MaxMerges(n) => write!(f, "max_merges:{n}"),
            StopCriterion::HeldOutMinimum { patience } => write!(f, "held_out_minimum:{patience}"),
        }
    }
}

impl std::str::FromStr for StopCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("stop criterion {s:?} needs name:value")))?;
        let bad = || Error::Config(format!("bad value in stop criterion {s:?}"));
        Ok(match name.trim() {
            "train_lp_threshold" => {
                StopCriterion::TrainLpThreshold(value.trim().parse().map_err(|_| bad())?)
            }
            "target_states" => {
                StopCriterion::TargetStates(value.trim().parse().map_err(|_| bad())?)
            }
            "max_merges" => StopCriterion::MaxMerges(value.trim().parse().map_err(|_| bad())?),
            "held_out_minimum" => StopCriterion::HeldOutMinimum {
                patience: value.trim().parse().map_err(|_| bad())?,
            },
            other => return Err(Error::Config(format!("unknown stop criterion {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    MaxMerges,
    Threshold,
    HeldOutMinimum,
    ConstraintExhausted,
    SingleState,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::TargetReached => "target_reached",
            StopReason::MaxMerges => "max_merges",
            StopReason::Threshold => "threshold",
            StopReason::HeldOutMinimum => "held_out_minimum",
            StopReason::ConstraintExhausted => "constraint_exhausted",
            StopReason::SingleState => "single_state",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeRecord {
    /// 1-based, counting merges applied before this run.
    pub merge: u64,
    /// Proper states after the merge.
    pub states: usize,
    pub train_lp: f64,
    pub test_lp: Option<f64>,
    pub delta: f64,
    pub q1: StateId,
    pub q2: StateId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeTrace {
    pub records: Vec<MergeRecord>,
}

impl MergeTrace {
    pub const CSV_HEADER: &'static str = "merge,states,train_lp,test_lp,delta,q1,q2";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let test = r.test_lp.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.merge, r.states, r.train_lp, test, r.delta, r.q1, r.q2
            );
        }
        out
    }
}

/// Held-out data scored during merging.
#[derive(Clone, Copy, Debug)]
pub struct EvalSet<'a> {
    pub corpus: &'a Corpus,
    pub mode: ScoreMode,
    pub oov: OovPolicy,
}

#[derive(Clone, Debug)]
pub struct MergeOptions<'a> {
    pub schedule: ConstraintSchedule,
    pub stop: StopCriterion,
    pub eval: Option<EvalSet<'a>>,
    /// Held-out log perplexity is sampled every this many merges.
    pub log_every: u64,
    /// Merges already applied (e.g. affix premerges); they count toward
    /// stage budgets and trace numbering.
    pub prior_merges: u64,
    /// Re-parse the training corpus every this many merges.
    pub reviterbi_every: Option<u64>,
}

impl<'a> MergeOptions<'a> {
    pub fn new(schedule: ConstraintSchedule, stop: StopCriterion) -> Self {
        Self {
            schedule,
            stop,
            eval: None,
            log_every: 100,
            prior_merges: 0,
            reviterbi_every: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub trace: MergeTrace,
    pub reason: StopReason,
    /// Held-out log perplexity before the first merge, when evaluated.
    pub initial_test_lp: Option<f64>,
    /// Model with the lowest held-out log perplexity (held-out stopping
    /// only), with that value and the merge index it was reached at.
    pub best: Option<(CountModel, f64, u64)>,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    delta: f64,
    a: StateId,
    b: StateId,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Largest delta first, then the lexicographically smallest pair.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .delta
            .total_cmp(&self.delta)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// Memoized deltas for the allowed pairs of one constraint stage.
struct CandidateCache {
    kind: ConstraintKind,
    key_of: HashMap<StateId, ClassKey>,
    classes: BTreeMap<ClassKey, BTreeSet<StateId>>,
    delta: HashMap<(StateId, StateId), f64>,
    queue: BTreeSet<Candidate>,
}

impl CandidateCache {
    fn build(model: &CountModel, kind: ConstraintKind) -> Result<Self> {
        let mut cache = Self {
            kind,
            key_of: HashMap::new(),
            classes: BTreeMap::new(),
            delta: HashMap::new(),
            queue: BTreeSet::new(),
        };
        for s in model.live_states() {
            cache.assign(model, s)?;
        }
        let mut pairs = Vec::new();
        for class in cache.classes.values() {
            let v: Vec<StateId> = class.iter().copied().collect();
            for (i, &a) in v.iter().enumerate() {
                pairs.extend(v[i + 1..].iter().map(|&b| (a, b)));
            }
        }
        cache.insert_pairs(model, pairs);
        Ok(cache)
    }

    fn assign(&mut self, model: &CountModel, s: StateId) -> Result<()> {
        let key = signature(model, s, &self.kind)?;
        self.classes.entry(key.clone()).or_default().insert(s);
        self.key_of.insert(s, key);
        Ok(())
    }

    fn insert_pairs(&mut self, model: &CountModel, pairs: Vec<(StateId, StateId)>) {
        let scored: Vec<Candidate> = pairs
            .into_par_iter()
            .map(|(a, b)| Candidate {
                delta: delta_unchecked(model, a, b),
                a,
                b,
            })
            .collect();
        for c in scored {
            self.delta.insert((c.a, c.b), c.delta);
            self.queue.insert(c);
        }
    }

    /// Drops `s` and every cached pair involving it.
    fn forget(&mut self, s: StateId) {
        let Some(key) = self.key_of.remove(&s) else {
            return;
        };
        if let Some(class) = self.classes.get_mut(&key) {
            class.remove(&s);
            for &t in class.iter() {
                let pair = (s.min(t), s.max(t));
                if let Some(d) = self.delta.remove(&pair) {
                    self.queue.remove(&Candidate {
                        delta: d,
                        a: pair.0,
                        b: pair.1,
                    });
                }
            }
            if class.is_empty() {
                self.classes.remove(&key);
            }
        }
    }

    fn refresh(&mut self, model: &CountModel, states: &BTreeSet<StateId>) -> Result<()> {
        for &s in states {
            self.forget(s);
        }
        let live: Vec<StateId> = states
            .iter()
            .copied()
            .filter(|&s| model.is_live(s))
            .collect();
        for &s in &live {
            self.assign(model, s)?;
        }
        let mut pairs = BTreeSet::new();
        for &s in &live {
            for &t in &self.classes[&self.key_of[&s]] {
                if t != s {
                    pairs.insert((s.min(t), s.max(t)));
                }
            }
        }
        self.insert_pairs(model, pairs.into_iter().collect());
        Ok(())
    }

    fn best(&self) -> Option<Candidate> {
        self.queue.first().copied()
    }
}

/// States whose cached deltas a merge of `q1` and `q2` can invalidate.
fn neighbourhood(model: &CountModel, q1: StateId, q2: StateId) -> BTreeSet<StateId> {
    let mut set = BTreeSet::new();
    for q in [q1, q2] {
        set.insert(q);
        set.extend(model.predecessors(q).iter().copied());
        set.extend(model.transitions(q).keys().copied());
    }
    set.retain(|s| !s.is_special());
    set
}

struct StageCursor {
    index: usize,
    used: u64,
}

impl StageCursor {
    fn new(schedule: &ConstraintSchedule, mut prior: u64) -> Self {
        let stages = schedule.stages();
        let mut index = 0;
        while index + 1 < stages.len() {
            match stages[index].budget {
                Some(b) if prior >= b => {
                    prior -= b;
                    index += 1;
                }
                _ => break,
            }
        }
        Self { index, used: prior }
    }

    fn budget_spent(&self, schedule: &ConstraintSchedule) -> bool {
        matches!(schedule.stages()[self.index].budget, Some(b) if self.used >= b)
    }

    fn is_last(&self, schedule: &ConstraintSchedule) -> bool {
        self.index + 1 >= schedule.stages().len()
    }
}

fn train_lp(loglik: f64, tokens: u64) -> f64 {
    -loglik / LN_10 / tokens as f64
}

fn test_lp(model: &CountModel, eval: &EvalSet<'_>) -> Result<f64> {
    let view = probabilities(model)?;
    Ok(evaluate_corpus(&view, eval.corpus, eval.mode, eval.oov).log_perplexity)
}

/// Greedy merging: repeatedly applies the allowed merge with the largest
/// (least negative) likelihood change until the stop criterion fires.
pub fn run_merging(
    model: &mut CountModel,
    paths: &mut StoredPaths,
    train: &Corpus,
    opts: &MergeOptions<'_>,
) -> Result<MergeOutcome> {
    if opts.log_every == 0 {
        return Err(Error::Config("log_every must be at least 1".into()));
    }
    let held_out = matches!(opts.stop, StopCriterion::HeldOutMinimum { .. });
    if held_out && opts.eval.is_none() {
        return Err(Error::Config(
            "held-out stopping needs an evaluation corpus".into(),
        ));
    }
    let tokens = train.total_tokens();
    let schedule = &opts.schedule;
    let mut cursor = StageCursor::new(schedule, opts.prior_merges);
    let mut cache = CandidateCache::build(model, schedule.stages()[cursor.index].kind.clone())?;
    let mut loglik = corpus_loglik(model);
    let mut trace = MergeTrace::default();
    let mut merges_run = 0u64;
    let mut best: Option<(CountModel, f64, u64)> = None;

    let initial_test_lp = match &opts.eval {
        Some(eval) => Some(test_lp(model, eval)?),
        None => None,
    };
    if held_out {
        if let Some(lp) = initial_test_lp.filter(|v| v.is_finite()) {
            best = Some((model.clone(), lp, opts.prior_merges));
        }
    }

    let reason = loop {
        if model.num_states() < 2 {
            break StopReason::SingleState;
        }
        match opts.stop {
            StopCriterion::TargetStates(n) if model.num_states() <= n => {
                break StopReason::TargetReached
            }
            StopCriterion::MaxMerges(n) if merges_run >= n => break StopReason::MaxMerges,
            _ => {}
        }
        if cursor.budget_spent(schedule) && !cursor.is_last(schedule) {
            cursor = StageCursor {
                index: cursor.index + 1,
                used: 0,
            };
            cache = CandidateCache::build(model, schedule.stages()[cursor.index].kind.clone())?;
            continue;
        }
        let Some(cand) = cache.best() else {
            if cursor.is_last(schedule) {
                break StopReason::ConstraintExhausted;
            }
            cursor = StageCursor {
                index: cursor.index + 1,
                used: 0,
            };
            cache = CandidateCache::build(model, schedule.stages()[cursor.index].kind.clone())?;
            continue;
        };
        if let StopCriterion::TrainLpThreshold(limit) = opts.stop {
            if train_lp(loglik + cand.delta, tokens) > limit {
                break StopReason::Threshold;
            }
        }

        let touched = neighbourhood(model, cand.a, cand.b);
        let merged = model.merge_states(cand.a, cand.b);
        loglik += cand.delta;
        merges_run += 1;
        cursor.used += 1;
        let merge_index = opts.prior_merges + merges_run;

        let reparse =
            matches!(opts.reviterbi_every, Some(n) if n > 0 && merges_run.is_multiple_of(n));
        if reparse {
            let (m2, p2) = reviterbi(model, train)?;
            *model = m2;
            *paths = p2;
            loglik = corpus_loglik(model);
            cache = CandidateCache::build(model, schedule.stages()[cursor.index].kind.clone())?;
        } else {
            let mut refresh = touched;
            refresh.insert(merged);
            cache.refresh(model, &refresh)?;
        }

        let finished = model.num_states() < 2;
        let sample = merges_run.is_multiple_of(opts.log_every) || finished;
        let test = match (&opts.eval, sample) {
            (Some(eval), true) => Some(test_lp(model, eval)?),
            _ => None,
        };
        trace.records.push(MergeRecord {
            merge: merge_index,
            states: model.num_states(),
            train_lp: train_lp(loglik, tokens),
            test_lp: test,
            delta: cand.delta,
            q1: cand.a,
            q2: cand.b,
        });

        if let (StopCriterion::HeldOutMinimum { patience }, Some(lp)) = (opts.stop, test) {
            if lp.is_finite() && best.as_ref().is_none_or(|b| lp < b.1) {
                best = Some((model.clone(), lp, merge_index));
            }
            if let Some((_, _, at)) = &best {
                if merge_index - at >= patience {
                    break StopReason::HeldOutMinimum;
                }
            }
        }
    };

    // Make sure the final state of the run carries a held-out sample.
    if let (Some(eval), Some(last)) = (&opts.eval, trace.records.last_mut()) {
        if last.test_lp.is_none() {
            last.test_lp = Some(test_lp(model, eval)?);
        }
    }
    paths.relabel(model);
    Ok(MergeOutcome {
        trace,
        reason,
        initial_test_lp,
        best,
    })
}
