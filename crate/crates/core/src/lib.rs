//! Subword dictionary learning and word segmentation.
//!
//! The crate ingests a raw text corpus, learns a subword codebook either by
//! a frequency-ranked byte-pair-encoding scheme, a per-length-capped variant
//! of it, or by importing an externally produced subword list, and then fits
//! unigram/bigram subword probabilities over word-segmentation lattices by
//! expectation-maximization or by hard (best-path) counting. A small weighted
//! finite-state transducer engine provides the lattice machinery: composition,
//! trimming, topological sorting, output projection, exhaustive path
//! enumeration, forward-backward and best-path search.
//!
//! The trained model segments words into subwords, decorates them with
//! context markers so that segmented text can be losslessly recombined into
//! words, and reports out-of-vocabulary statistics.
//!
//! With the default `parallel` feature, per-word and per-line work is
//! distributed with rayon; results are bit-identical to the sequential
//! build because all floating-point reductions happen in a fixed order.

pub mod apply;
pub mod corpus;
pub mod dictionary;
pub mod error;
pub mod estimator;
pub mod graphs;
mod parallel;
pub mod wfst;

pub use corpus::{
    build_vocabulary, count_char_ngrams, load_corpus, CharMode, Corpus, NgramCountTable,
    WordVocabulary,
};
pub use dictionary::{import_external, learn_bpe, learn_extended_bpe, SubwordDictionary};
pub use error::{Error, Result};
pub use estimator::{segment_best, train_ml, train_viterbi, TrainOptions, TrainingReport};
pub use graphs::{BigramModel, LatticeBuilder, ModelParams};
