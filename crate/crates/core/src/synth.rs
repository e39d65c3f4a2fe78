//! Random Markov models and corpora sampled from them.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{probabilities, CountModel, StateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthParams {
    pub states: usize,
    pub alphabet: usize,
    pub utterances: usize,
    /// Extra utterances sampled after the training ones, for held-out use.
    pub test_utterances: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub generator: CountModel,
    pub vocab: Vocabulary,
    pub train: Vec<Vec<TokenId>>,
    pub test: Vec<Vec<TokenId>>,
}

impl Synthetic {
    pub fn render(&self, utterances: &[Vec<TokenId>]) -> String {
        let mut out = String::new();
        for u in utterances {
            let words: Vec<&str> = u
                .iter()
                .map(|&t| self.vocab.word(t).expect("generated token"))
                .collect();
            out.push_str(&words.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn train_corpus(&self) -> Result<Corpus> {
        Corpus::from_sequences(self.train.iter().cloned())
    }
}

const MAX_LEN: usize = 60;

fn distinct_states(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut picks = rand::seq::index::sample(rng, n, k.min(n)).into_vec();
    picks.sort_unstable();
    picks
}

/// Samples a sparse random generator and draws utterances from it.
pub fn generate(params: &SynthParams) -> Result<Synthetic> {
    if params.states == 0 || params.alphabet == 0 || params.utterances == 0 {
        return Err(Error::Config(
            "states, alphabet and utterances must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.states;
    let mut vocab = Vocabulary::new();
    let width = params.alphabet.to_string().len();
    for i in 0..params.alphabet {
        vocab.intern(&format!("w{i:0width$}"));
    }

    // Emission supports: every token has a home state, some get a second.
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in 0..params.alphabet {
        support[t % n].push(t);
        if rng.gen_bool(0.15) {
            let extra = rng.gen_range(0..n);
            if !support[extra].contains(&t) {
                support[extra].push(t);
            }
        }
    }
    for (s, toks) in support.iter_mut().enumerate() {
        if toks.is_empty() {
            toks.push(s % params.alphabet);
        }
        toks.sort_unstable();
    }

    let mut model = CountModel::new(params.alphabet);
    let ids: Vec<StateId> = (0..n).map(|_| model.add_state()).collect();

    let k = rng.gen_range(2..=3);
    let first = distinct_states(&mut rng, n, k);
    let mut start_total = 0;
    for &s in &first {
        let c = rng.gen_range(1..=10);
        model.add_transition(StateId::START, ids[s], c);
        start_total += c;
    }
    model.add_visits(StateId::START, start_total);

    for s in 0..n {
        let k = rng.gen_range(2..=3);
        let succ = distinct_states(&mut rng, n, k);
        let mut trans: Vec<(StateId, u64)> = succ
            .iter()
            .map(|&t| (ids[t], rng.gen_range(1..=10)))
            .collect();
        let body: u64 = trans.iter().map(|t| t.1).sum();
        trans.push((StateId::END, (body / 5).max(1)));
        let emit: Vec<(TokenId, u64)> = support[s]
            .iter()
            .map(|&t| (TokenId(t as u32), rng.gen_range(1..=10)))
            .collect();
        // Scale both rows to a common total so counts stay balanced.
        let tt: u64 = trans.iter().map(|t| t.1).sum();
        let et: u64 = emit.iter().map(|e| e.1).sum();
        for (to, c) in trans {
            model.add_transition(ids[s], to, c * et);
        }
        for (tok, c) in emit {
            model.add_emission(ids[s], tok, c * tt);
        }
        model.add_visits(ids[s], tt * et);
    }

    let sample_rows = |s: StateId| -> (Vec<StateId>, WeightedIndex<u64>) {
        let row = model.transitions(s);
        let targets = row.keys().copied().collect();
        let weights = WeightedIndex::new(row.values().copied()).expect("positive weights");
        (targets, weights)
    };
    let start_row = sample_rows(StateId::START);
    let trans_rows: Vec<_> = ids.iter().map(|&s| sample_rows(s)).collect();
    let emit_rows: Vec<(Vec<TokenId>, WeightedIndex<u64>)> = ids
        .iter()
        .map(|&s| {
            let row = model.emissions(s);
            (
                row.keys().copied().collect(),
                WeightedIndex::new(row.values().copied()).expect("positive weights"),
            )
        })
        .collect();

    let draw = |rng: &mut ChaCha8Rng| -> Vec<TokenId> {
        loop {
            let mut out = Vec::new();
            let (targets, w) = &start_row;
            let mut state = targets[w.sample(rng)];
            while state != StateId::END && out.len() <= MAX_LEN {
                let i = (state.0 - StateId::FIRST_PROPER) as usize;
                let (toks, ew) = &emit_rows[i];
                out.push(toks[ew.sample(rng)]);
                let (targets, tw) = &trans_rows[i];
                state = targets[tw.sample(rng)];
            }
            if state == StateId::END {
                return out;
            }
        }
    };
    let train = (0..params.utterances).map(|_| draw(&mut rng)).collect();
    let test = (0..params.test_utterances)
        .map(|_| draw(&mut rng))
        .collect();
    debug_assert!(probabilities(&model).is_ok());
    Ok(Synthetic {
        generator: model,
        vocab,
        train,
        test,
    })
}
