#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statemerge::corpus::{read_corpus, Corpus, TokenId, Vocabulary};
use statemerge::model::{CountModel, ProbabilityView, StateId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random corpus over `alphabet` single-letter words, read back through
/// the text reader.
pub fn random_corpus(
    rng: &mut ChaCha8Rng,
    alphabet: usize,
    utterances: usize,
    max_len: usize,
) -> (Vocabulary, Corpus) {
    let text = random_text(rng, alphabet, utterances, max_len);
    read_corpus(text.as_bytes()).unwrap()
}

pub fn random_text(
    rng: &mut ChaCha8Rng,
    alphabet: usize,
    utterances: usize,
    max_len: usize,
) -> String {
    let mut text = String::new();
    for _ in 0..utterances {
        let len = rng.gen_range(1..=max_len);
        let words: Vec<String> = (0..len)
            .map(|_| ((b'a' + rng.gen_range(0..alphabet) as u8) as char).to_string())
            .collect();
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    text
}

/// Random balanced count model; every state can reach the end state.
pub fn random_model(rng: &mut ChaCha8Rng, states: usize, vocab: usize) -> CountModel {
    let mut m = CountModel::new(vocab);
    let ids: Vec<StateId> = (0..states).map(|_| m.add_state()).collect();
    let mut start = 0;
    for &s in &ids {
        if rng.gen_bool(0.7) || start == 0 {
            let c = rng.gen_range(1..=5);
            m.add_transition(StateId::START, s, c);
            start += c;
        }
    }
    m.add_visits(StateId::START, start);
    for &s in &ids {
        let mut trans = Vec::new();
        for &t in &ids {
            if rng.gen_bool(0.6) {
                trans.push((t, rng.gen_range(1..=5)));
            }
        }
        trans.push((StateId::END, rng.gen_range(1..=5)));
        let mut emit = Vec::new();
        for t in 0..vocab as u32 {
            if rng.gen_bool(0.6) {
                emit.push((TokenId(t), rng.gen_range(1..=5u64)));
            }
        }
        if emit.is_empty() {
            emit.push((TokenId(rng.gen_range(0..vocab as u32)), 1));
        }
        let tt: u64 = trans.iter().map(|t| t.1).sum();
        let et: u64 = emit.iter().map(|e| e.1).sum();
        for (to, c) in trans {
            m.add_transition(s, to, c * et);
        }
        for (tok, c) in emit {
            m.add_emission(s, tok, c * tt);
        }
        m.add_visits(s, tt * et);
    }
    m
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Exhaustive (log path-sum, log path-max) over all state sequences.
pub fn brute_force(view: &ProbabilityView, seq: &[TokenId]) -> (f64, f64) {
    let states = view.states();
    let n = states.len();
    let mut sum = f64::NEG_INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut idx = vec![0usize; seq.len()];
    loop {
        let mut lp = 0.0;
        let mut prev = StateId::START;
        for (k, &tok) in seq.iter().enumerate() {
            let s = states[idx[k]];
            lp += view.log_trans(prev, s) + view.log_emit(s, tok);
            prev = s;
        }
        lp += view.log_trans(prev, StateId::END);
        if lp > f64::NEG_INFINITY {
            sum = log_add(sum, lp);
            max = max.max(lp);
        }
        let mut k = 0;
        loop {
            if k == seq.len() {
                return (sum, max);
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// All sequences over `vocab` tokens of exactly `len` tokens.
pub fn all_sequences(vocab: usize, len: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..vocab as u32).map(move |t| {
                    let mut s = s.clone();
                    s.push(TokenId(t));
                    s
                })
            })
            .collect();
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a == b) || (a - b).abs() < tol
}
