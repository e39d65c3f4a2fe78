//! Count-based first-order Markov models with discrete outputs.
//!
//! The canonical representation is integer sufficient statistics: how often
//! each state was visited, how often each transition was taken and how often
//! each token was emitted. Maximum-likelihood probabilities are derived on
//! demand through [`ProbabilityView`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::corpus::{Corpus, TokenId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

impl StateId {
    pub const START: StateId = StateId(0);
    pub const END: StateId = StateId(1);
    /// First id handed out to a proper (emitting) state.
    pub const FIRST_PROPER: u32 = 2;

    pub fn is_special(self) -> bool {
        self.0 < Self::FIRST_PROPER
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StateId::START => f.write_str("S"),
            StateId::END => f.write_str("E"),
            StateId(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Slot {
    out: BTreeMap<StateId, u64>,
    preds: BTreeSet<StateId>,
    emit: BTreeMap<TokenId, u64>,
    visits: u64,
    alive: bool,
    merged_into: Option<StateId>,
}

/// Markov model stored as visit, transition and emission counts.
#[derive(Clone, Debug)]
pub struct CountModel {
    slots: Vec<Slot>,
    live: BTreeSet<StateId>,
    vocab_size: usize,
}

impl PartialEq for CountModel {
    fn eq(&self, other: &Self) -> bool {
        if self.live != other.live || self.vocab_size != other.vocab_size {
            return false;
        }
        std::iter::once(StateId::START)
            .chain(self.live.iter().copied())
            .all(|s| {
                let (a, b) = (&self.slots[s.index()], &other.slots[s.index()]);
                a.out == b.out && a.emit == b.emit && a.visits == b.visits
            })
    }
}

impl Eq for CountModel {}

impl CountModel {
    /// Empty model with only the start and end states.
    pub fn new(vocab_size: usize) -> Self {
        let start = Slot {
            alive: true,
            ..Slot::default()
        };
        let end = start.clone();
        Self {
            slots: vec![start, end],
            live: BTreeSet::new(),
            vocab_size,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn set_vocab_size(&mut self, n: usize) {
        self.vocab_size = n;
    }

    pub fn add_state(&mut self) -> StateId {
        let id = StateId(self.slots.len() as u32);
        self.slots.push(Slot {
            alive: true,
            ..Slot::default()
        });
        self.live.insert(id);
        id
    }

    /// Makes `id` a live proper state, growing the id space as needed.
    pub fn ensure_state(&mut self, id: StateId) {
        if id.is_special() {
            return;
        }
        while self.slots.len() <= id.index() {
            self.slots.push(Slot::default());
        }
        let slot = &mut self.slots[id.index()];
        if !slot.alive {
            slot.alive = true;
            slot.merged_into = None;
            self.live.insert(id);
        }
    }

    /// Id the next call to [`CountModel::add_state`] would return.
    pub fn next_id(&self) -> StateId {
        StateId(self.slots.len() as u32)
    }

    pub fn add_transition(&mut self, from: StateId, to: StateId, count: u64) {
        if count == 0 {
            return;
        }
        *self.slots[from.index()].out.entry(to).or_insert(0) += count;
        self.slots[to.index()].preds.insert(from);
    }

    pub fn add_emission(&mut self, state: StateId, token: TokenId, count: u64) {
        if count == 0 {
            return;
        }
        *self.slots[state.index()].emit.entry(token).or_insert(0) += count;
    }

    pub fn add_visits(&mut self, state: StateId, count: u64) {
        self.slots[state.index()].visits += count;
    }

    pub fn set_visits(&mut self, state: StateId, count: u64) {
        self.slots[state.index()].visits = count;
    }

    /// Records one traversal of `path` emitting `tokens`, `count` times.
    pub fn record_path(&mut self, path: &[StateId], tokens: &[TokenId], count: u64) {
        debug_assert_eq!(path.len(), tokens.len());
        let mut prev = StateId::START;
        self.add_visits(StateId::START, count);
        for (&state, &token) in path.iter().zip(tokens) {
            self.add_transition(prev, state, count);
            self.add_emission(state, token, count);
            self.add_visits(state, count);
            prev = state;
        }
        self.add_transition(prev, StateId::END, count);
    }

    /// Rebuilds a model from explicit state paths, one per distinct utterance.
    pub fn from_paths(corpus: &Corpus, paths: &[Vec<StateId>], vocab_size: usize) -> Self {
        let mut model = Self::new(vocab_size);
        for (utt, path) in corpus.utterances().iter().zip(paths) {
            for &s in path {
                model.ensure_state(s);
            }
            model.record_path(path, &utt.tokens, utt.count);
        }
        model
    }

    pub fn num_states(&self) -> usize {
        self.live.len()
    }

    pub fn live_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.live.iter().copied()
    }

    pub fn is_live(&self, s: StateId) -> bool {
        self.live.contains(&s)
    }

    pub fn transitions(&self, s: StateId) -> &BTreeMap<StateId, u64> {
        &self.slots[s.index()].out
    }

    pub fn transition(&self, from: StateId, to: StateId) -> u64 {
        self.slots
            .get(from.index())
            .and_then(|slot| slot.out.get(&to))
            .copied()
            .unwrap_or(0)
    }

    pub fn emissions(&self, s: StateId) -> &BTreeMap<TokenId, u64> {
        &self.slots[s.index()].emit
    }

    pub fn visits(&self, s: StateId) -> u64 {
        self.slots.get(s.index()).map_or(0, |slot| slot.visits)
    }

    pub fn predecessors(&self, s: StateId) -> &BTreeSet<StateId> {
        &self.slots[s.index()].preds
    }

    /// Follows the merge history of a retired state to its live successor.
    pub fn resolve(&self, mut s: StateId) -> StateId {
        while let Some(next) = self.slots.get(s.index()).and_then(|x| x.merged_into) {
            s = next;
        }
        s
    }

    /// The state `s` was directly merged into, if it has been retired.
    pub fn merged_into(&self, s: StateId) -> Option<StateId> {
        self.slots.get(s.index()).and_then(|x| x.merged_into)
    }

    pub fn total_visits(&self) -> u64 {
        self.live.iter().map(|&s| self.visits(s)).sum()
    }

    pub fn total_transitions(&self) -> u64 {
        std::iter::once(StateId::START)
            .chain(self.live.iter().copied())
            .map(|s| self.slots[s.index()].out.values().sum::<u64>())
            .sum()
    }

    pub fn total_emissions(&self) -> u64 {
        self.live
            .iter()
            .map(|&s| self.slots[s.index()].emit.values().sum::<u64>())
            .sum()
    }

    /// Replaces `a` and `b` by a fresh state holding their summed counts.
    ///
    /// Transitions among `a` and `b` become self-loops of the new state;
    /// incoming cells from other states are redirected and summed.
    pub(crate) fn merge_states(&mut self, a: StateId, b: StateId) -> StateId {
        let m = self.add_state();
        let sa = std::mem::take(&mut self.slots[a.index()]);
        let sb = std::mem::take(&mut self.slots[b.index()]);
        let relabel = |t: StateId| if t == a || t == b { m } else { t };

        let mut out = BTreeMap::new();
        for (&t, &c) in sa.out.iter().chain(sb.out.iter()) {
            *out.entry(relabel(t)).or_insert(0) += c;
        }
        let mut emit = sa.emit;
        for (t, c) in sb.emit {
            *emit.entry(t).or_insert(0) += c;
        }
        let mut preds: BTreeSet<StateId> = sa
            .preds
            .iter()
            .chain(sb.preds.iter())
            .copied()
            .filter(|&r| r != a && r != b)
            .collect();
        if out.contains_key(&m) {
            preds.insert(m);
        }

        for &r in &preds {
            if r == m {
                continue;
            }
            let row = &mut self.slots[r.index()].out;
            let c = row.remove(&a).unwrap_or(0) + row.remove(&b).unwrap_or(0);
            row.insert(m, c);
        }
        for &t in out.keys() {
            if t == m {
                continue;
            }
            let p = &mut self.slots[t.index()].preds;
            p.remove(&a);
            p.remove(&b);
            p.insert(m);
        }

        let slot = &mut self.slots[m.index()];
        slot.out = out;
        slot.emit = emit;
        slot.preds = preds;
        slot.visits = sa.visits + sb.visits;
        for retired in [a, b] {
            self.slots[retired.index()].merged_into = Some(m);
            self.live.remove(&retired);
        }
        m
    }

    /// Clears all counts while keeping the set of live states.
    pub(crate) fn reset_counts(&mut self) {
        for slot in &mut self.slots {
            slot.out.clear();
            slot.preds.clear();
            slot.emit.clear();
            slot.visits = 0;
        }
    }

    /// Drops proper states with no visits and no counts.
    pub(crate) fn prune_unvisited(&mut self) {
        let dead: Vec<StateId> = self
            .live
            .iter()
            .copied()
            .filter(|&s| {
                let slot = &self.slots[s.index()];
                slot.visits == 0
                    && slot.out.is_empty()
                    && slot.emit.is_empty()
                    && slot.preds.is_empty()
            })
            .collect();
        for s in dead {
            self.slots[s.index()].alive = false;
            self.live.remove(&s);
        }
    }
}

/// One failed model invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub state: StateId,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    TransitionBalance { visits: u64, row_total: u64 },
    EmissionBalance { visits: u64, row_total: u64 },
    IntoStart { from: StateId },
    OutOfEnd,
    StartToEnd,
    EmissionFromSpecial,
    DanglingTarget { to: StateId },
    TokenOutOfRange { token: TokenId },
    UtteranceCount { expected: u64, found: u64 },
    TokenCount { expected: u64, found: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.state;
        match &self.kind {
            ViolationKind::TransitionBalance { visits, row_total } => write!(
                f,
                "state {s}: {visits} visits but outgoing transitions sum to {row_total}"
            ),
            ViolationKind::EmissionBalance { visits, row_total } => write!(
                f,
                "state {s}: {visits} visits but emissions sum to {row_total}"
            ),
            ViolationKind::IntoStart { from } => {
                write!(f, "state {s}: transition from {from} into the start state")
            }
            ViolationKind::OutOfEnd => write!(f, "state {s}: end state has outgoing transitions"),
            ViolationKind::StartToEnd => {
                write!(
                    f,
                    "state {s}: start state transitions directly to the end state"
                )
            }
            ViolationKind::EmissionFromSpecial => {
                write!(f, "state {s}: start/end state has emissions")
            }
            ViolationKind::DanglingTarget { to } => {
                write!(f, "state {s}: transition to non-live state {to}")
            }
            ViolationKind::TokenOutOfRange { token } => {
                write!(f, "state {s}: emits token {token} outside the vocabulary")
            }
            ViolationKind::UtteranceCount { expected, found } => write!(
                f,
                "state {s}: start visits {found} differ from corpus utterance count {expected}"
            ),
            ViolationKind::TokenCount { expected, found } => write!(
                f,
                "state {s}: total visits {found} differ from corpus token count {expected}"
            ),
        }
    }
}

/// Checks every structural invariant; an empty list means the model is valid.
pub fn validate(model: &CountModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |state, kind| out.push(Violation { state, kind });

    let start = &model.slots[StateId::START.index()];
    let start_total: u64 = start.out.values().sum();
    if start_total != start.visits {
        push(
            StateId::START,
            ViolationKind::TransitionBalance {
                visits: start.visits,
                row_total: start_total,
            },
        );
    }
    if !start.emit.is_empty() {
        push(StateId::START, ViolationKind::EmissionFromSpecial);
    }
    if start.out.contains_key(&StateId::END) {
        push(StateId::START, ViolationKind::StartToEnd);
    }
    let end = &model.slots[StateId::END.index()];
    if !end.out.is_empty() {
        push(StateId::END, ViolationKind::OutOfEnd);
    }
    if !end.emit.is_empty() {
        push(StateId::END, ViolationKind::EmissionFromSpecial);
    }

    for s in std::iter::once(StateId::START).chain(model.live_states()) {
        for &to in model.transitions(s).keys() {
            if to == StateId::START {
                push(to, ViolationKind::IntoStart { from: s });
            } else if to != StateId::END && !model.is_live(to) {
                push(s, ViolationKind::DanglingTarget { to });
            }
        }
    }

    for s in model.live_states() {
        let slot = &model.slots[s.index()];
        let t: u64 = slot.out.values().sum();
        if t != slot.visits {
            push(
                s,
                ViolationKind::TransitionBalance {
                    visits: slot.visits,
                    row_total: t,
                },
            );
        }
        let e: u64 = slot.emit.values().sum();
        if e != slot.visits {
            push(
                s,
                ViolationKind::EmissionBalance {
                    visits: slot.visits,
                    row_total: e,
                },
            );
        }
        for &tok in slot.emit.keys() {
            if tok.index() >= model.vocab_size {
                push(s, ViolationKind::TokenOutOfRange { token: tok });
            }
        }
    }
    out
}

/// Count conservation against the corpus the model was trained on.
pub fn check_conservation(model: &CountModel, corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let u = model.visits(StateId::START);
    if u != corpus.total_utterances() {
        out.push(Violation {
            state: StateId::START,
            kind: ViolationKind::UtteranceCount {
                expected: corpus.total_utterances(),
                found: u,
            },
        });
    }
    let l = model.total_visits();
    if l != corpus.total_tokens() {
        out.push(Violation {
            state: StateId::END,
            kind: ViolationKind::TokenCount {
                expected: corpus.total_tokens(),
                found: l,
            },
        });
    }
    out
}

/// Sparse row of log-probabilities with a fill value for absent cells.
#[derive(Clone, Debug)]
pub(crate) struct LogRow {
    /// Sorted by key.
    pub(crate) entries: Vec<(u32, f64)>,
    pub(crate) default: f64,
}

impl LogRow {
    pub(crate) fn get(&self, key: u32) -> f64 {
        match self.entries.binary_search_by_key(&key, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => self.default,
        }
    }

    pub(crate) fn is_sparse(&self) -> bool {
        self.default == f64::NEG_INFINITY
    }
}

/// Immutable log-probability snapshot of a model (natural log).
///
/// Proper states are densely indexed in ascending id order; the end state
/// takes the index after the last proper state.
#[derive(Clone, Debug)]
pub struct ProbabilityView {
    pub(crate) states: Vec<StateId>,
    pub(crate) index: HashMap<StateId, u32>,
    pub(crate) start: LogRow,
    pub(crate) trans: Vec<LogRow>,
    pub(crate) emit: Vec<LogRow>,
    /// For each token, the dense indices of states that emit it with nonzero
    /// explicit probability.
    pub(crate) emitters: HashMap<TokenId, Vec<u32>>,
    pub(crate) vocab_size: usize,
}

impl ProbabilityView {
    pub(crate) fn from_parts(
        model: &CountModel,
        start: LogRow,
        trans: Vec<LogRow>,
        emit: Vec<LogRow>,
    ) -> Self {
        let states: Vec<StateId> = model.live_states().collect();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i as u32))
            .collect();
        let mut emitters: HashMap<TokenId, Vec<u32>> = HashMap::new();
        for (i, row) in emit.iter().enumerate() {
            for &(tok, _) in &row.entries {
                emitters.entry(TokenId(tok)).or_default().push(i as u32);
            }
        }
        Self {
            states,
            index,
            start,
            trans,
            emit,
            emitters,
            vocab_size: model.vocab_size(),
        }
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub(crate) fn end_index(&self) -> u32 {
        self.states.len() as u32
    }

    fn dense(&self, s: StateId) -> Option<u32> {
        if s == StateId::END {
            Some(self.end_index())
        } else {
            self.index.get(&s).copied()
        }
    }

    /// `ln p(to | from)`; `-inf` for impossible transitions.
    pub fn log_trans(&self, from: StateId, to: StateId) -> f64 {
        let Some(t) = self.dense(to) else {
            return f64::NEG_INFINITY;
        };
        if from == StateId::START {
            return self.start.get(t);
        }
        match self.index.get(&from) {
            Some(&f) => self.trans[f as usize].get(t),
            None => f64::NEG_INFINITY,
        }
    }

    /// `ln p(token | state)`; `-inf` when the state never emits it.
    pub fn log_emit(&self, state: StateId, token: TokenId) -> f64 {
        match self.index.get(&state) {
            Some(&i) => self.emit[i as usize].get(token.0),
            None => f64::NEG_INFINITY,
        }
    }

    /// Whether any state assigns nonzero probability to `token`.
    pub fn knows_token(&self, token: TokenId) -> bool {
        if token.index() >= self.vocab_size {
            return false;
        }
        self.emitters.contains_key(&token) || self.emit.iter().any(|r| !r.is_sparse())
    }

    /// Explicit (nonzero-count) outgoing cells of `from`.
    pub fn trans_row(&self, from: StateId) -> Vec<(StateId, f64)> {
        let row = if from == StateId::START {
            &self.start
        } else {
            match self.index.get(&from) {
                Some(&i) => &self.trans[i as usize],
                None => return Vec::new(),
            }
        };
        row.entries
            .iter()
            .map(|&(t, lp)| (self.state_at(t), lp))
            .collect()
    }

    pub(crate) fn state_at(&self, dense: u32) -> StateId {
        if dense == self.end_index() {
            StateId::END
        } else {
            self.states[dense as usize]
        }
    }

    pub(crate) fn is_sparse(&self) -> bool {
        self.start.is_sparse()
            && self.trans.iter().all(LogRow::is_sparse)
            && self.emit.iter().all(LogRow::is_sparse)
    }

    /// Sum of probabilities of each outgoing transition row, including the
    /// mass assigned to cells without explicit entries.
    pub fn trans_row_mass(&self, from: StateId) -> f64 {
        let n_targets = self.states.len() + 1;
        let row = if from == StateId::START {
            &self.start
        } else {
            &self.trans[self.index[&from] as usize]
        };
        row_mass(row, n_targets)
    }

    pub fn emit_row_mass(&self, state: StateId) -> f64 {
        row_mass(&self.emit[self.index[&state] as usize], self.vocab_size)
    }
}

fn row_mass(row: &LogRow, domain: usize) -> f64 {
    let explicit: f64 = row.entries.iter().map(|e| e.1.exp()).sum();
    let rest = domain.saturating_sub(row.entries.len()) as f64;
    explicit + rest * row.default.exp()
}

fn ml_row<K: Copy>(cells: impl Iterator<Item = (K, u64)>, map: impl Fn(K) -> u32) -> LogRow {
    let cells: Vec<(K, u64)> = cells.filter(|c| c.1 > 0).collect();
    let total: u64 = cells.iter().map(|c| c.1).sum();
    let ln_total = (total as f64).ln();
    let mut entries: Vec<(u32, f64)> = cells
        .into_iter()
        .map(|(k, c)| (map(k), (c as f64).ln() - ln_total))
        .collect();
    entries.sort_by_key(|e| e.0);
    LogRow {
        entries,
        default: f64::NEG_INFINITY,
    }
}

/// Maximum-likelihood log probabilities derived from the counts.
pub fn probabilities(model: &CountModel) -> Result<ProbabilityView> {
    let violations = validate(model);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    for s in model.live_states() {
        if model.visits(s) == 0
            && (!model.transitions(s).is_empty() || !model.emissions(s).is_empty())
        {
            return Err(Error::Inconsistent { state: s });
        }
    }
    let states: Vec<StateId> = model.live_states().collect();
    let n = states.len() as u32;
    let index: HashMap<StateId, u32> = states
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i as u32))
        .collect();
    let dense = |s: StateId| if s == StateId::END { n } else { index[&s] };

    let start = ml_row(
        model
            .transitions(StateId::START)
            .iter()
            .map(|(&k, &c)| (k, c)),
        dense,
    );
    let trans = states
        .iter()
        .map(|&s| ml_row(model.transitions(s).iter().map(|(&k, &c)| (k, c)), dense))
        .collect();
    let emit = states
        .iter()
        .map(|&s| ml_row(model.emissions(s).iter().map(|(&k, &c)| (k, c)), |t| t.0))
        .collect();
    Ok(ProbabilityView::from_parts(model, start, trans, emit))
}
