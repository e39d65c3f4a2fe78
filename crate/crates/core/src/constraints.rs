//! Equivalence-class constraints on which states may merge, and cascades
//! of progressively weaker constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::corpus::{AmbiguityLexicon, TokenId};
use crate::error::{Error, Result};
use crate::model::{CountModel, StateId};

#[derive(Clone, Debug)]
pub enum ConstraintKind {
    /// Every pair of proper states may merge.
    None,
    /// Same set of emitted tokens.
    Unigram,
    /// Same emitted tokens, and predecessors emit the same tokens.
    Bigram,
    /// Emitted tokens share one lexicon ambiguity class.
    Ambiguity(Arc<AmbiguityLexicon>),
}

impl ConstraintKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::Unigram => "unigram",
            ConstraintKind::Bigram => "bigram",
            ConstraintKind::Ambiguity(_) => "ambiguity",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for ConstraintKind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ConstraintKind::Ambiguity(a), ConstraintKind::Ambiguity(b)) => a == b,
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

/// Opaque equivalence-class key; states with equal keys may merge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassKey {
    All,
    Outputs(Vec<TokenId>),
    Bigram {
        outputs: Vec<TokenId>,
        pred_outputs: Vec<TokenId>,
        from_start: bool,
    },
    Tags(Vec<String>),
    /// Matches no other state.
    Unique(StateId),
}

fn outputs(model: &CountModel, state: StateId) -> Vec<TokenId> {
    model
        .emissions(state)
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&t, _)| t)
        .collect()
}

pub fn signature(model: &CountModel, state: StateId, kind: &ConstraintKind) -> Result<ClassKey> {
    if state.is_special() || !model.is_live(state) {
        return Err(Error::Contract(format!(
            "signature requested for non-proper state {state}"
        )));
    }
    Ok(match kind {
        ConstraintKind::None => ClassKey::All,
        ConstraintKind::Unigram => ClassKey::Outputs(outputs(model, state)),
        ConstraintKind::Bigram => {
            let mut pred_outputs = BTreeSet::new();
            let mut from_start = false;
            for &r in model.predecessors(state) {
                if r == StateId::START {
                    from_start = true;
                } else {
                    pred_outputs.extend(outputs(model, r));
                }
            }
            ClassKey::Bigram {
                outputs: outputs(model, state),
                pred_outputs: pred_outputs.into_iter().collect(),
                from_start,
            }
        }
        ConstraintKind::Ambiguity(lexicon) => {
            let mut common: Option<&BTreeSet<String>> = None;
            let mut agree = true;
            for tok in outputs(model, state) {
                let tags = lexicon.tags(tok).ok_or_else(|| {
                    Error::Config(format!("token id {tok} is missing from the lexicon"))
                })?;
                match common {
                    None => common = Some(tags),
                    Some(c) if c != tags => agree = false,
                    Some(_) => {}
                }
            }
            match common {
                Some(tags) if agree => ClassKey::Tags(tags.iter().cloned().collect()),
                _ => ClassKey::Unique(state),
            }
        }
    })
}

/// Disjoint classes covering all live proper states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintPartition {
    classes: Vec<Vec<StateId>>,
}

impl ConstraintPartition {
    pub fn from_classes(classes: Vec<Vec<StateId>>) -> Self {
        Self {
            classes: classes.into_iter().filter(|c| !c.is_empty()).collect(),
        }
    }

    pub fn classes(&self) -> &[Vec<StateId>] {
        &self.classes
    }

    /// `sum |C_i| (|C_i| - 1) / 2`.
    pub fn candidate_count(&self) -> u64 {
        self.classes
            .iter()
            .map(|c| {
                let n = c.len() as u64;
                n * n.saturating_sub(1) / 2
            })
            .sum()
    }

    /// Every allowed pair `(a, b)` with `a < b`.
    pub fn candidates(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        self.classes.iter().flat_map(|c| {
            c.iter()
                .enumerate()
                .flat_map(move |(i, &a)| c[i + 1..].iter().map(move |&b| (a.min(b), a.max(b))))
        })
    }
}

pub fn partition(model: &CountModel, kind: &ConstraintKind) -> Result<ConstraintPartition> {
    let mut groups: BTreeMap<ClassKey, Vec<StateId>> = BTreeMap::new();
    for s in model.live_states() {
        groups
            .entry(signature(model, s, kind)?)
            .or_default()
            .push(s);
    }
    Ok(ConstraintPartition::from_classes(
        groups.into_values().collect(),
    ))
}

/// One cascade stage. `budget: None` runs until no candidate remains.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub kind: ConstraintKind,
    pub budget: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSchedule {
    stages: Vec<Stage>,
}

impl ConstraintSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("constraint schedule is empty".into()));
        }
        if stages.iter().any(|s| s.budget == Some(0)) {
            return Err(Error::Config("stage budgets must be positive".into()));
        }
        Ok(Self { stages })
    }

    pub fn unconstrained() -> Self {
        Self {
            stages: vec![Stage {
                kind: ConstraintKind::None,
                budget: None,
            }],
        }
    }

    /// Parses `kind[:budget],...`, e.g. `unigram:12500,none`.
    pub fn parse(text: &str, lexicon: Option<&Arc<AmbiguityLexicon>>) -> Result<Self> {
        let mut stages = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, budget) = match part.split_once(':') {
                Some((n, b)) => {
                    let b: u64 = b
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad stage budget in {part:?}")))?;
                    (n.trim(), Some(b))
                }
                None => (part, None),
            };
            let kind = match name {
                "none" => ConstraintKind::None,
                "unigram" => ConstraintKind::Unigram,
                "bigram" => ConstraintKind::Bigram,
                "ambiguity" => ConstraintKind::Ambiguity(
                    lexicon
                        .cloned()
                        .ok_or_else(|| Error::Config("ambiguity stage needs a lexicon".into()))?,
                ),
                other => return Err(Error::Config(format!("unknown constraint {other:?}"))),
            };
            stages.push(Stage { kind, budget });
        }
        Self::new(stages)
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Stage active after `merges_done` merges when every budgeted stage
    /// uses its full budget.
    pub fn advance(&self, merges_done: u64) -> &ConstraintKind {
        let mut covered = 0u64;
        for stage in &self.stages {
            match stage.budget {
                Some(b) => {
                    covered += b;
                    if merges_done < covered {
                        return &stage.kind;
                    }
                }
                None => return &stage.kind,
            }
        }
        &self.stages[self.stages.len() - 1].kind
    }
}

impl fmt::Display for ConstraintSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match s.budget {
                Some(b) => write!(f, "{}:{b}", s.kind)?,
                None => write!(f, "{}", s.kind)?,
            }
        }
        Ok(())
    }
}
