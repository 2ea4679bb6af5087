//! Unigram/bigram model estimation over segmentation lattices.
//!
//! Soft training re-estimates the model from posterior-weighted subword
//! and subword-pair counts gathered over every segmentation of every
//! vocabulary word; hard training keeps only the best-scoring segmentation
//! per word and counts it once. Both run a fixed number of iterations
//! (fifteen by default), rebuilding lattice weights from the current model
//! each round, and record the total corpus log-likelihood per iteration.
//!
//! Counts are accumulated in vocabulary order after the per-word lattice
//! work completes, so results do not depend on how many threads ran the
//! per-word pass.

use std::collections::HashMap;

use crate::corpus::{CharMode, WordVocabulary};
use crate::dictionary::SubwordDictionary;
use crate::error::{Error, Result};
use crate::graphs::{BigramModel, LatticeBuilder, ModelParams};
use crate::parallel;
use crate::wfst::{enumerate_paths, forward_backward, shortest_path, EPSILON};

pub const DEFAULT_ITERATIONS: usize = 15;
pub const DEFAULT_PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Number of re-estimation rounds.
    pub iterations: usize,
    /// Probability floor applied (with renormalization) after every update,
    /// keeping all subwords and transitions reachable. `None` reproduces
    /// the bare update equations.
    pub floor: Option<f64>,
    /// Scale each word's contribution by its corpus frequency instead of
    /// counting each word type once.
    pub frequency_weighted: bool,
    /// Stop early when the log-likelihood gain falls below this threshold.
    pub early_stop_tol: Option<f64>,
    pub char_mode: CharMode,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: DEFAULT_ITERATIONS,
            floor: Some(DEFAULT_PROB_FLOOR),
            frequency_weighted: false,
            early_stop_tol: None,
            char_mode: CharMode::Codepoint,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    /// Total corpus log-likelihood under the model that entered each
    /// iteration.
    pub log_likelihoods: Vec<f64>,
    pub iterations_run: usize,
    /// Best segmentation of every segmentable vocabulary word under the
    /// final model, in vocabulary order.
    pub segmentations: Vec<(String, Vec<String>)>,
    /// Words with no dictionary segmentation, excluded from estimation.
    pub excluded: Vec<String>,
}

/// All segmentations of one word with their posteriors.
#[derive(Debug, Clone)]
pub struct WordPosteriors {
    pub word: String,
    /// (subword ids, posterior), in canonical path order; posteriors sum
    /// to one.
    pub segmentations: Vec<(Vec<u32>, f64)>,
}

/// Posterior-weighted subword and adjacent-pair counts.
#[derive(Debug, Clone)]
pub struct ExpectedCounts {
    /// Indexed by dictionary id.
    pub unigram: Vec<f64>,
    /// Keyed by (context, next).
    pub bigram: HashMap<(u32, u32), f64>,
}

impl ExpectedCounts {
    pub fn zero(dict_len: usize) -> ExpectedCounts {
        ExpectedCounts {
            unigram: vec![0.0; dict_len],
            bigram: HashMap::new(),
        }
    }
}

fn label_to_id(label: u32) -> u32 {
    debug_assert_ne!(label, EPSILON);
    label - 1
}

/// Computes the posterior of every segmentation of `word` under `theta`:
/// the path score divided by the summed score of all paths. The normalizer
/// comes from forward-backward over the lattice; path enumeration supplies
/// the segmentations themselves.
pub fn compute_posteriors(
    word: &str,
    theta: &ModelParams,
    builder: &LatticeBuilder,
) -> Result<WordPosteriors> {
    let lattice = builder.build(word, theta)?;
    let (_, total) = forward_backward(&lattice.fst)?;
    let paths = enumerate_paths(&lattice.fst)?;
    let segmentations = paths
        .paths
        .iter()
        .map(|p| {
            let ids: Vec<u32> = p.labels.iter().map(|&l| label_to_id(l)).collect();
            (ids, (total - p.weight).exp())
        })
        .collect();
    Ok(WordPosteriors {
        word: word.to_owned(),
        segmentations,
    })
}

/// Accumulates expected subword and adjacent-pair counts over a posterior
/// set, each word counted once.
pub fn expected_counts(posteriors: &[WordPosteriors], dict_len: usize) -> ExpectedCounts {
    let mut counts = ExpectedCounts::zero(dict_len);
    for wp in posteriors {
        for (ids, gamma) in &wp.segmentations {
            for &z in ids {
                counts.unigram[z as usize] += gamma;
            }
            for pair in ids.windows(2) {
                *counts.bigram.entry((pair[0], pair[1])).or_insert(0.0) += gamma;
            }
        }
    }
    counts
}

/// Normalizes expected counts into new model parameters: the unigram mass
/// is the count share of each subword, each bigram row is its count share
/// within the context. Contexts with no mass fall back to the uniform
/// conditional. With a floor, probabilities are clamped from below and
/// renormalized.
pub fn reestimate_ml(
    counts: &ExpectedCounts,
    dict: &SubwordDictionary,
    floor: Option<f64>,
) -> Result<ModelParams> {
    let mut pairs: Vec<((u32, u32), f64)> = counts.bigram.iter().map(|(&k, &v)| (k, v)).collect();
    pairs.sort_unstable_by_key(|&(k, _)| k);
    reestimate_from_counts(&counts.unigram, &pairs, dict, floor)
}

/// Normalizes hard counts taken from one best segmentation per word.
pub fn reestimate_viterbi(
    best_paths: &[Vec<u32>],
    dict: &SubwordDictionary,
    floor: Option<f64>,
) -> Result<ModelParams> {
    let mut unigram = vec![0u64; dict.len()];
    let mut bigram: HashMap<(u32, u32), u64> = HashMap::new();
    for path in best_paths {
        for &z in path {
            unigram[z as usize] += 1;
        }
        for pair in path.windows(2) {
            *bigram.entry((pair[0], pair[1])).or_insert(0) += 1;
        }
    }
    let unigram: Vec<f64> = unigram.into_iter().map(|c| c as f64).collect();
    let mut pairs: Vec<((u32, u32), f64)> =
        bigram.into_iter().map(|(k, v)| (k, v as f64)).collect();
    pairs.sort_unstable_by_key(|&(k, _)| k);
    reestimate_from_counts(&unigram, &pairs, dict, floor)
}

/// Shared normalization step. `bigram_pairs` must be sorted by key so the
/// row sums are formed in a fixed order.
fn reestimate_from_counts(
    unigram: &[f64],
    bigram_pairs: &[((u32, u32), f64)],
    dict: &SubwordDictionary,
    floor: Option<f64>,
) -> Result<ModelParams> {
    debug_assert_eq!(unigram.len(), dict.len());
    let total: f64 = unigram.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidParameter(
            "expected counts are all zero".into(),
        ));
    }
    let mut phi: Vec<f64> = unigram.iter().map(|c| c / total).collect();
    if let Some(eps) = floor {
        for p in &mut phi {
            if *p < eps {
                *p = eps;
            }
        }
        let z: f64 = phi.iter().sum();
        for p in &mut phi {
            *p /= z;
        }
    }

    let mut bigram = BigramModel::uniform(dict.len());
    let mut i = 0;
    while i < bigram_pairs.len() {
        let ctx = bigram_pairs[i].0 .0;
        let mut j = i;
        let mut row_total = 0.0;
        while j < bigram_pairs.len() && bigram_pairs[j].0 .0 == ctx {
            row_total += bigram_pairs[j].1;
            j += 1;
        }
        if row_total > 0.0 {
            let mut probs: HashMap<u32, f64> = HashMap::with_capacity(j - i);
            for &((_, next), c) in &bigram_pairs[i..j] {
                probs.insert(next, c / row_total);
            }
            let default = match floor {
                Some(eps) => {
                    let mut explicit = 0.0;
                    for &((_, next), c) in &bigram_pairs[i..j] {
                        let p = (c / row_total).max(eps);
                        probs.insert(next, p);
                        explicit += p;
                    }
                    let missing = (dict.len() - probs.len()) as f64;
                    let z = explicit + eps * missing;
                    for p in probs.values_mut() {
                        *p /= z;
                    }
                    eps / z
                }
                None => 0.0,
            };
            bigram.insert_row(ctx, probs, default);
        }
        i = j;
    }
    Ok(ModelParams {
        dict: dict.with_phi(phi),
        bigram,
    })
}

/// The best segmentation of `word` under `theta`, with exact weight ties
/// broken by the canonical label-sequence order.
pub fn segment_best(
    word: &str,
    theta: &ModelParams,
    builder: &LatticeBuilder,
) -> Result<Vec<String>> {
    let lattice = builder.build(word, theta)?;
    let best = shortest_path(&lattice.fst).map_err(|e| match e {
        Error::NoAcceptingPath => Error::Unsegmentable {
            word: word.to_owned(),
        },
        other => other,
    })?;
    Ok(best.paths[0]
        .labels
        .iter()
        .map(|&l| theta.dict.entry(label_to_id(l)).to_owned())
        .collect())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TrainMode {
    Ml,
    Viterbi,
}

/// Per-word result of one estimation pass.
struct WordPass {
    log_likelihood: f64,
    /// Soft mode: (context, subword, posterior) per lattice arc.
    arc_stats: Vec<(Option<u32>, u32, f64)>,
    /// Hard mode: the best path's subword ids.
    best_path: Vec<u32>,
}

/// Soft (expectation-based) training over all segmentation paths.
pub fn train_ml(
    vocab: &WordVocabulary,
    dict: &SubwordDictionary,
    opts: &TrainOptions,
) -> Result<(ModelParams, TrainingReport)> {
    run_training(vocab, dict, opts, TrainMode::Ml)
}

/// Hard training: only the best segmentation per word contributes counts.
pub fn train_viterbi(
    vocab: &WordVocabulary,
    dict: &SubwordDictionary,
    opts: &TrainOptions,
) -> Result<(ModelParams, TrainingReport)> {
    run_training(vocab, dict, opts, TrainMode::Viterbi)
}

fn run_training(
    vocab: &WordVocabulary,
    dict: &SubwordDictionary,
    opts: &TrainOptions,
    mode: TrainMode,
) -> Result<(ModelParams, TrainingReport)> {
    if vocab.is_empty() {
        return Err(Error::EmptyInput("vocabulary is empty".into()));
    }
    let builder = LatticeBuilder::new(dict, opts.char_mode);
    let mut theta = ModelParams::uniform_init(dict.clone());

    let all_words: Vec<(String, u64)> = vocab
        .sorted_entries()
        .into_iter()
        .map(|(w, c)| (w.to_owned(), c))
        .collect();
    // Words alive under the initial model stay alive: their own posterior
    // mass keeps every subword they use above zero.
    let alive: Vec<bool> =
        parallel::map_slice(&all_words, |(w, _)| builder.build(w, &theta).is_ok());
    let mut words: Vec<(String, u64)> = Vec::new();
    let mut excluded: Vec<String> = Vec::new();
    for ((w, c), ok) in all_words.into_iter().zip(alive) {
        if ok {
            words.push((w, c));
        } else {
            excluded.push(w);
        }
    }
    if words.is_empty() {
        return Err(Error::EmptyInput(
            "no vocabulary word is segmentable".into(),
        ));
    }

    let mut log_likelihoods: Vec<f64> = Vec::with_capacity(opts.iterations);
    for _iter in 0..opts.iterations {
        let passes: Vec<Result<WordPass>> = parallel::map_slice(&words, |(w, _)| {
            let lattice = builder.build(w, &theta)?;
            let (posteriors, total) = forward_backward(&lattice.fst)?;
            let mut pass = WordPass {
                log_likelihood: -total,
                arc_stats: Vec::new(),
                best_path: Vec::new(),
            };
            match mode {
                TrainMode::Ml => {
                    for (s, row) in posteriors.iter().enumerate() {
                        let ctx = lattice.context(s);
                        for (a, &p) in lattice.fst.arcs(s).iter().zip(row) {
                            pass.arc_stats.push((ctx, label_to_id(a.olabel), p));
                        }
                    }
                }
                TrainMode::Viterbi => {
                    let best = shortest_path(&lattice.fst)?;
                    pass.best_path = best.paths[0]
                        .labels
                        .iter()
                        .map(|&l| label_to_id(l))
                        .collect();
                }
            }
            Ok(pass)
        });

        // Deterministic reduction in vocabulary order.
        let mut unigram = vec![0.0f64; dict.len()];
        let mut bigram: HashMap<(u32, u32), f64> = HashMap::new();
        let mut ll = 0.0f64;
        for (pass, (_, count)) in passes.into_iter().zip(&words) {
            let pass = pass?;
            let scale = if opts.frequency_weighted {
                *count as f64
            } else {
                1.0
            };
            ll += scale * pass.log_likelihood;
            match mode {
                TrainMode::Ml => {
                    for (ctx, z, p) in pass.arc_stats {
                        unigram[z as usize] += scale * p;
                        if let Some(c) = ctx {
                            *bigram.entry((c, z)).or_insert(0.0) += scale * p;
                        }
                    }
                }
                TrainMode::Viterbi => {
                    for &z in &pass.best_path {
                        unigram[z as usize] += scale;
                    }
                    for pair in pass.best_path.windows(2) {
                        *bigram.entry((pair[0], pair[1])).or_insert(0.0) += scale;
                    }
                }
            }
        }
        log_likelihoods.push(ll);
        if let Some(tol) = opts.early_stop_tol {
            let k = log_likelihoods.len();
            if k >= 2 && log_likelihoods[k - 1] - log_likelihoods[k - 2] < tol {
                break;
            }
        }
        let mut pairs: Vec<((u32, u32), f64)> = bigram.into_iter().collect();
        pairs.sort_unstable_by_key(|&(k, _)| k);
        theta = reestimate_from_counts(&unigram, &pairs, dict, opts.floor)?;
    }

    let segmentations: Vec<(String, Vec<String>)> = {
        let segs = parallel::map_slice(&words, |(w, _)| segment_best(w, &theta, &builder));
        words
            .iter()
            .zip(segs)
            .map(|((w, _), seg)| Ok((w.clone(), seg?)))
            .collect::<Result<_>>()?
    };

    let iterations_run = log_likelihoods.len();
    Ok((
        theta,
        TrainingReport {
            log_likelihoods,
            iterations_run,
            segmentations,
            excluded,
        },
    ))
}
