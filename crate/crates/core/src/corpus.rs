//! Corpus and lexicon ingestion.
//!
//! Tokens are whitespace-separated and opaque: no case folding or
//! punctuation handling is applied. Identical utterances are folded into a
//! single entry carrying a multiplicity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Dense token identifier, assigned in order of first appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijection between token strings and dense ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, word: &str) -> TokenId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = TokenId(self.words.len() as u32);
        self.words.push(word.to_owned());
        self.index.insert(word.to_owned(), id);
        id
    }

    pub fn get(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (TokenId(i as u32), w.as_str()))
    }
}

/// A distinct utterance and how often it occurred.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub tokens: Vec<TokenId>,
    pub count: u64,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Distinct utterances with multiplicities, in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    total_tokens: u64,
    total_utterances: u64,
}

impl Corpus {
    /// Builds a corpus from raw token sequences, folding duplicates.
    ///
    /// Empty sequences are skipped.
    pub fn from_sequences<I>(sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<TokenId>>,
    {
        let mut builder = CorpusBuilder::default();
        for seq in sequences {
            builder.push(seq, 1);
        }
        builder.finish()
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// Number of emitted tokens counted with multiplicity (`l`).
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Number of utterances counted with multiplicity (`u`).
    pub fn total_utterances(&self) -> u64 {
        self.total_utterances
    }

    pub fn distinct(&self) -> usize {
        self.utterances.len()
    }

    /// Token ids occurring anywhere in the corpus, ascending.
    pub fn token_types(&self) -> BTreeSet<TokenId> {
        self.utterances
            .iter()
            .flat_map(|u| u.tokens.iter().copied())
            .collect()
    }

    /// Renders the corpus back to text, one line per occurrence.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for utt in &self.utterances {
            let line = utt
                .tokens
                .iter()
                .map(|&t| vocab.word(t).unwrap_or("<unk>"))
                .collect::<Vec<_>>()
                .join(" ");
            for _ in 0..utt.count {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Default)]
struct CorpusBuilder {
    utterances: Vec<Utterance>,
    seen: HashMap<Vec<TokenId>, usize>,
}

impl CorpusBuilder {
    fn push(&mut self, tokens: Vec<TokenId>, count: u64) {
        if tokens.is_empty() {
            return;
        }
        match self.seen.get(&tokens) {
            Some(&i) => self.utterances[i].count += count,
            None => {
                self.seen.insert(tokens.clone(), self.utterances.len());
                self.utterances.push(Utterance { tokens, count });
            }
        }
    }

    fn finish(self) -> Result<Corpus> {
        if self.utterances.is_empty() {
            return Err(Error::EmptyInput);
        }
        let total_tokens = self
            .utterances
            .iter()
            .map(|u| u.len() as u64 * u.count)
            .sum();
        let total_utterances = self.utterances.iter().map(|u| u.count).sum();
        Ok(Corpus {
            utterances: self.utterances,
            total_tokens,
            total_utterances,
        })
    }
}

fn decode(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })
}

/// Reads a corpus with a fresh vocabulary.
pub fn read_corpus(bytes: &[u8]) -> Result<(Vocabulary, Corpus)> {
    let mut vocab = Vocabulary::new();
    let corpus = read_corpus_into(bytes, &mut vocab)?;
    Ok((vocab, corpus))
}

/// Reads a corpus, interning new tokens into an existing vocabulary.
///
/// Used for held-out data so that ids line up with a training vocabulary.
pub fn read_corpus_into(bytes: &[u8], vocab: &mut Vocabulary) -> Result<Corpus> {
    let text = decode(bytes)?;
    let mut builder = CorpusBuilder::default();
    for line in text.lines() {
        let tokens: Vec<TokenId> = line
            .split([' ', '\t', '\r'])
            .filter(|t| !t.is_empty())
            .map(|t| vocab.intern(t))
            .collect();
        builder.push(tokens, 1);
    }
    builder.finish()
}

/// Possible syntactic tags per word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AmbiguityLexicon {
    entries: BTreeMap<TokenId, BTreeSet<String>>,
    unknown: BTreeMap<String, BTreeSet<String>>,
}

impl AmbiguityLexicon {
    pub fn tags(&self, token: TokenId) -> Option<&BTreeSet<String>> {
        self.entries.get(&token)
    }

    pub fn entries(&self) -> &BTreeMap<TokenId, BTreeSet<String>> {
        &self.entries
    }

    /// Entries whose word is not in the vocabulary the lexicon was read against.
    pub fn unknown_words(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.unknown
    }

    pub fn warning_count(&self) -> usize {
        self.unknown.len()
    }

    pub fn insert(&mut self, token: TokenId, tags: BTreeSet<String>) {
        self.entries.insert(token, tags);
    }
}

/// Parses `word TAB tag (TAB tag)*` lines; `#` lines are comments.
pub fn read_lexicon(bytes: &[u8], vocab: &Vocabulary) -> Result<AmbiguityLexicon> {
    let text = decode(bytes)?;
    let mut lexicon = AmbiguityLexicon::default();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let word = fields.next().unwrap_or_default().trim();
        if word.is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: "missing word".into(),
            });
        }
        let tags: BTreeSet<String> = fields
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect();
        if tags.is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: format!("word {word:?} has no tags"),
            });
        }
        if !seen.insert(word.to_owned()) {
            return Err(Error::Format {
                line: line_no,
                message: format!("duplicate entry for {word:?}"),
            });
        }
        match vocab.get(word) {
            Some(id) => {
                lexicon.entries.insert(id, tags);
            }
            None => {
                lexicon.unknown.insert(word.to_owned(), tags);
            }
        }
    }
    Ok(lexicon)
}
