//! Line-oriented text format for count models.
//!
//! ```text
//! MM1 states=2 vocab=3
//! V 0 a
//! T S 2 3
//! T 2 3 4
//! M 2 0 4
//! ```
//!
//! `S` and `E` denote the start and end states. Counts rather than
//! probabilities are stored, so a write/read cycle is exact.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{validate, CountModel, StateId};

const MAGIC: &str = "MM1";

pub fn write_model(model: &CountModel, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC} states={} vocab={}",
        model.num_states(),
        vocab.len()
    );
    for (id, word) in vocab.words() {
        let _ = writeln!(out, "V {id} {word}");
    }
    for s in std::iter::once(StateId::START).chain(model.live_states()) {
        for (to, c) in model.transitions(s) {
            let _ = writeln!(out, "T {s} {to} {c}");
        }
    }
    for s in model.live_states() {
        for (tok, c) in model.emissions(s) {
            let _ = writeln!(out, "M {s} {tok} {c}");
        }
    }
    out
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

fn parse_state(field: &str, line: usize) -> Result<StateId> {
    match field {
        "S" => Ok(StateId::START),
        "E" => Ok(StateId::END),
        _ => {
            let n: u32 = field
                .parse()
                .map_err(|_| format_err(line, format!("bad state id {field:?}")))?;
            if n < StateId::FIRST_PROPER {
                return Err(format_err(line, format!("state id {n} is reserved")));
            }
            Ok(StateId(n))
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| format_err(line, format!("bad {what} {field:?}")))
}

fn header_value(field: Option<&str>, key: &str) -> Option<usize> {
    field?.strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

pub fn read_model(text: &str) -> Result<(CountModel, Vocabulary)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(1, "missing header"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(format_err(1, format!("expected {MAGIC} header")));
    }
    let n_states = header_value(fields.next(), "states")
        .ok_or_else(|| format_err(1, "header lacks states=<n>"))?;
    let n_vocab = header_value(fields.next(), "vocab")
        .ok_or_else(|| format_err(1, "header lacks vocab=<n>"))?;

    let mut vocab = Vocabulary::new();
    let mut model = CountModel::new(n_vocab);
    let mut seen_states = BTreeSet::new();
    for (no, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["V", id, word] => {
                let id: u32 = parse_num(id, "token id", no)?;
                if id as usize != vocab.len() {
                    return Err(format_err(no, format!("token id {id} out of order")));
                }
                if vocab.get(word).is_some() {
                    return Err(format_err(no, format!("duplicate word {word:?}")));
                }
                vocab.intern(word);
            }
            ["T", from, to, count] => {
                let from = parse_state(from, no)?;
                let to = parse_state(to, no)?;
                let count: u64 = parse_num(count, "count", no)?;
                for s in [from, to] {
                    if !s.is_special() {
                        model.ensure_state(s);
                        seen_states.insert(s);
                    }
                }
                model.add_transition(from, to, count);
                model.add_visits(from, count);
            }
            ["M", state, tok, count] => {
                let state = parse_state(state, no)?;
                let tok: u32 = parse_num(tok, "token id", no)?;
                let count: u64 = parse_num(count, "count", no)?;
                if !state.is_special() {
                    model.ensure_state(state);
                    seen_states.insert(state);
                }
                model.add_emission(state, TokenId(tok), count);
            }
            _ => return Err(format_err(no, format!("unrecognised line {line:?}"))),
        }
    }
    if vocab.len() != n_vocab {
        return Err(format_err(
            1,
            format!("header declares {n_vocab} words, found {}", vocab.len()),
        ));
    }
    if seen_states.len() != n_states {
        return Err(format_err(
            1,
            format!(
                "header declares {n_states} states, found {}",
                seen_states.len()
            ),
        ));
    }
    let violations = validate(&model);
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    Ok((model, vocab))
}
