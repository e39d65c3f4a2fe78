//! Induction of discrete-output Markov model structure by greedy state
//! merging, with n-gram baselines and perplexity evaluation.
//!
//! The usual pipeline reads a corpus, builds the trivial model (one state
//! chain per distinct utterance), collapses shared prefixes and suffixes,
//! and then merges states greedily under a cascade of constraints:
//!
//! ```
//! use statemerge::constraints::ConstraintSchedule;
//! use statemerge::corpus::read_corpus;
//! use statemerge::merging::{
//!     build_trivial_model, corpus_loglik, premerge_affixes, run_merging, MergeOptions,
//!     StopCriterion,
//! };
//!
//! let (vocab, corpus) = read_corpus(b"a b\na c\na b a c\n").unwrap();
//! let (mut model, mut paths) = build_trivial_model(&corpus, vocab.len());
//! let pre = premerge_affixes(&mut model, &mut paths, &corpus);
//! let mut opts = MergeOptions::new(ConstraintSchedule::unconstrained(), StopCriterion::TargetStates(2));
//! opts.prior_merges = pre.len() as u64;
//! run_merging(&mut model, &mut paths, &corpus, &opts).unwrap();
//! assert_eq!(model.num_states(), 2);
//! assert!((corpus_loglik(&model) - (27.0f64 / 4096.0).ln()).abs() < 1e-10);
//! ```

pub mod constraints;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod format;
pub mod inference;
pub mod merging;
pub mod model;
pub mod ngram;
pub mod synth;

pub use error::{Error, Result};
