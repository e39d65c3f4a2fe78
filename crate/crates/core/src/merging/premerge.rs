use std::collections::HashMap;

use super::{delta_unchecked, AppliedMerge, StoredPaths};
use crate::corpus::{Corpus, TokenId};
use crate::model::{CountModel, StateId};

/// Merges that provably leave the corpus likelihood unchanged are only
/// applied when the computed delta stays below this bound.
const ZERO_DELTA: f64 = 1e-12;

fn try_merge(
    model: &mut CountModel,
    a: StateId,
    b: StateId,
    done: &mut Vec<AppliedMerge>,
) -> Option<StateId> {
    let (q1, q2) = (a.min(b), a.max(b));
    let delta = delta_unchecked(model, q1, q2);
    if delta.abs() >= ZERO_DELTA {
        return None;
    }
    let merged = model.merge_states(q1, q2);
    done.push(AppliedMerge {
        q1,
        q2,
        merged,
        delta,
    });
    Some(merged)
}

/// Collapses shared utterance prefixes and then shared deterministic
/// suffixes of the trivial model. Every merge applied here has zero
/// likelihood change.
pub fn premerge_affixes(
    model: &mut CountModel,
    paths: &mut StoredPaths,
    corpus: &Corpus,
) -> Vec<AppliedMerge> {
    let mut done = Vec::new();

    // Prefix trie: (parent node, token) -> node id, node -> representative.
    let mut children: HashMap<(usize, TokenId), usize> = HashMap::new();
    let mut rep: Vec<StateId> = vec![StateId::START];
    for (utt, path) in corpus.utterances().iter().zip(paths.paths()) {
        let mut node = 0usize;
        for (&tok, &state) in utt.tokens.iter().zip(path) {
            let state = model.resolve(state);
            node = match children.get(&(node, tok)) {
                Some(&child) => {
                    let existing = model.resolve(rep[child]);
                    if existing != state {
                        if let Some(m) = try_merge(model, existing, state, &mut done) {
                            rep[child] = m;
                        }
                    }
                    child
                }
                None => {
                    rep.push(state);
                    let id = rep.len() - 1;
                    children.insert((node, tok), id);
                    id
                }
            };
        }
    }

    // Deterministic suffixes: states whose only continuation is a fixed
    // token sequence to the end, keyed by that sequence.
    let mut suffix_rep: HashMap<&[TokenId], StateId> = HashMap::new();
    for (utt, path) in corpus.utterances().iter().zip(paths.paths()) {
        let mut next = StateId::END;
        for j in (0..utt.tokens.len()).rev() {
            let state = model.resolve(path[j]);
            let out = model.transitions(state);
            let chain = out.len() == 1
                && out.contains_key(&next)
                && model.emissions(state).len() == 1
                && model.emissions(state).contains_key(&utt.tokens[j]);
            if !chain {
                break;
            }
            let key = &utt.tokens[j..];
            next = match suffix_rep.get(key).map(|&r| model.resolve(r)) {
                Some(existing) if existing != state => {
                    match try_merge(model, existing, state, &mut done) {
                        Some(m) => {
                            suffix_rep.insert(key, m);
                            m
                        }
                        None => break,
                    }
                }
                Some(existing) => existing,
                None => {
                    suffix_rep.insert(key, state);
                    state
                }
            };
        }
    }
    paths.relabel(model);
    done
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_corpus;
    use crate::merging::{build_trivial_model, corpus_loglik};
    use crate::model::validate;

    #[test]
    fn toy_corpus_reaches_three_states() {
        let (_, corpus) = read_corpus(b"a b\na c\na b a c\n").unwrap();
        let (mut m, mut p) = build_trivial_model(&corpus, 3);
        let merges = premerge_affixes(&mut m, &mut p, &corpus);
        assert_eq!(merges.len(), 4);
        assert!(merges.iter().all(|d| d.delta.abs() < 1e-12));
        assert_eq!(m.num_states(), 4);
        assert!(validate(&m).is_empty());
        assert!((corpus_loglik(&m) - (1.0f64 / 27.0).ln()).abs() < 1e-12);
        // {1,3,5}: initial 'a' state used by all three utterances.
        let first = m.resolve(StateId(2));
        assert_eq!(m.visits(first), 3);
        // {4,8}: final 'c' states.
        assert_eq!(m.resolve(StateId(5)), m.resolve(StateId(9)));
        assert_eq!(p.recount(&corpus, &m), m);
    }

    #[test]
    fn shared_prefix_merges_first_state() {
        let (_, corpus) = read_corpus(b"a b\na c\n").unwrap();
        let (mut m, mut p) = build_trivial_model(&corpus, 3);
        let merges = premerge_affixes(&mut m, &mut p, &corpus);
        assert_eq!(merges.len(), 1);
        assert_eq!((merges[0].q1, merges[0].q2), (StateId(2), StateId(4)));
        assert_eq!(merges[0].delta, 0.0);
    }
}
