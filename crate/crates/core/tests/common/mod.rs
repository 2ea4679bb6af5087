//! Independent oracles shared by the integration tests: brute-force
//! segmentation enumeration, direct probability-space path scoring, an
//! enumeration-based soft trainer, and random model generators. Nothing
//! here touches the lattice or transducer code paths it is used to check.
#![allow(dead_code)] // each test target uses a different subset

use std::collections::HashMap;

use rand::Rng;
use subseg::dictionary::SubwordDictionary;
use subseg::graphs::{BigramModel, ModelParams};

/// Every decomposition of `word` into dictionary entries, as id sequences.
pub fn brute_force_segmentations(word: &str, dict: &SubwordDictionary) -> Vec<Vec<u32>> {
    fn recurse(
        rest: &str,
        dict: &SubwordDictionary,
        current: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if rest.is_empty() {
            out.push(current.clone());
            return;
        }
        for (id, entry) in dict.entries().iter().enumerate() {
            if let Some(tail) = rest.strip_prefix(entry.as_str()) {
                current.push(id as u32);
                recurse(tail, dict, current, out);
                current.pop();
            }
        }
    }
    let mut out = Vec::new();
    recurse(word, dict, &mut Vec::new(), &mut out);
    out
}

/// Probability of a subword sequence: the first unigram times, for every
/// following subword, its conditional bigram times its unigram. Computed
/// as a plain product in probability space.
pub fn score_sequence(ids: &[u32], theta: &ModelParams) -> f64 {
    let mut p = theta.dict.prob(ids[0]);
    for w in ids.windows(2) {
        p *= theta.bigram.prob(w[0], w[1]) * theta.dict.prob(w[1]);
    }
    p
}

/// Unigram and adjacent-pair expected counts.
pub type CountsOracle = (Vec<f64>, HashMap<(u32, u32), f64>);

/// Expected unigram / adjacent-pair counts of one word from brute-force
/// enumeration under `theta`, each path weighted by its normalized score.
pub fn enumeration_counts(word: &str, theta: &ModelParams) -> Option<CountsOracle> {
    let segs = brute_force_segmentations(word, &theta.dict);
    let scores: Vec<f64> = segs.iter().map(|s| score_sequence(s, theta)).collect();
    let total: f64 = scores.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let mut unigram = vec![0.0; theta.dict.len()];
    let mut pairs: HashMap<(u32, u32), f64> = HashMap::new();
    for (seg, score) in segs.iter().zip(&scores) {
        let gamma = score / total;
        for &z in seg {
            unigram[z as usize] += gamma;
        }
        for w in seg.windows(2) {
            *pairs.entry((w[0], w[1])).or_insert(0.0) += gamma;
        }
    }
    Some((unigram, pairs))
}

/// A soft trainer written entirely on top of brute-force enumeration:
/// scores every segmentation in probability space, normalizes, pools the
/// weighted counts over the vocabulary and renormalizes, with the uniform
/// fallback for unseen contexts and no probability floor. Returns the
/// per-iteration total log-likelihood and the final parameters.
pub type EmOracle = (Vec<f64>, Vec<f64>, HashMap<u32, HashMap<u32, f64>>);

pub fn enumeration_em(
    vocab: &[(String, u64)],
    dict: &SubwordDictionary,
    iterations: usize,
    frequency_weighted: bool,
) -> EmOracle {
    let per_word: Vec<(Vec<Vec<u32>>, f64)> = vocab
        .iter()
        .map(|(w, c)| {
            let segs = brute_force_segmentations(w, dict);
            assert!(!segs.is_empty(), "oracle vocabulary must be segmentable");
            let scale = if frequency_weighted { *c as f64 } else { 1.0 };
            (segs, scale)
        })
        .collect();

    let mut phi: Vec<f64> = dict.phi().to_vec();
    let mut bigram: HashMap<u32, HashMap<u32, f64>> = HashMap::new();
    let n = dict.len() as f64;
    let bprob = |bigram: &HashMap<u32, HashMap<u32, f64>>, c: u32, z: u32| -> f64 {
        match bigram.get(&c) {
            Some(row) => row.get(&z).copied().unwrap_or(0.0),
            None => 1.0 / n,
        }
    };

    let mut lls = Vec::new();
    for _ in 0..iterations {
        let mut unigram = vec![0.0; dict.len()];
        let mut pair_counts: HashMap<(u32, u32), f64> = HashMap::new();
        let mut ll = 0.0;
        for (segs, scale) in &per_word {
            let scores: Vec<f64> = segs
                .iter()
                .map(|seg| {
                    let mut p = phi[seg[0] as usize];
                    for w in seg.windows(2) {
                        p *= bprob(&bigram, w[0], w[1]) * phi[w[1] as usize];
                    }
                    p
                })
                .collect();
            let total: f64 = scores.iter().sum();
            ll += scale * total.ln();
            for (seg, score) in segs.iter().zip(&scores) {
                let gamma = score / total;
                for &z in seg {
                    unigram[z as usize] += scale * gamma;
                }
                for w in seg.windows(2) {
                    *pair_counts.entry((w[0], w[1])).or_insert(0.0) += scale * gamma;
                }
            }
        }
        lls.push(ll);
        let total: f64 = unigram.iter().sum();
        phi = unigram.iter().map(|c| c / total).collect();
        // Rows with zero mass are dropped so they fall back to the uniform
        // conditional, like the implementation under test.
        let mut keys: Vec<(u32, u32)> = pair_counts.keys().copied().collect();
        keys.sort_unstable();
        let mut row_totals: HashMap<u32, f64> = HashMap::new();
        for &(c, z) in &keys {
            *row_totals.entry(c).or_insert(0.0) += pair_counts[&(c, z)];
        }
        let mut rows: HashMap<u32, HashMap<u32, f64>> = HashMap::new();
        for &(c, z) in &keys {
            let rt = row_totals[&c];
            if rt > 0.0 {
                rows.entry(c)
                    .or_default()
                    .insert(z, pair_counts[&(c, z)] / rt);
            }
        }
        bigram = rows;
    }
    (lls, phi, bigram)
}

/// A random dictionary: the whole alphabet plus up to `extra` random
/// multi-character entries, with random positive counts.
pub fn random_dict<R: Rng>(rng: &mut R, alphabet: &[char], extra: usize) -> SubwordDictionary {
    let mut entries: Vec<(String, u64)> = alphabet
        .iter()
        .map(|c| (c.to_string(), rng.gen_range(1..50)))
        .collect();
    let mut seen: std::collections::HashSet<String> =
        entries.iter().map(|(s, _)| s.clone()).collect();
    for _ in 0..extra {
        let len = rng.gen_range(2..=4);
        let s: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        if seen.insert(s.clone()) {
            entries.push((s, rng.gen_range(1..50)));
        }
    }
    SubwordDictionary::from_counts(entries).unwrap()
}

/// Random parameters for a dictionary: a random positive unigram mass and
/// fully-specified random bigram rows for every context.
pub fn random_theta<R: Rng>(rng: &mut R, dict: &SubwordDictionary) -> ModelParams {
    let n = dict.len();
    let mut phi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let z: f64 = phi.iter().sum();
    for p in &mut phi {
        *p /= z;
    }
    let mut rows = Vec::new();
    for c in 0..n as u32 {
        let mut row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let rz: f64 = row.iter().sum();
        for p in &mut row {
            *p /= rz;
        }
        let probs: HashMap<u32, f64> = row
            .into_iter()
            .enumerate()
            .map(|(i, p)| (i as u32, p))
            .collect();
        rows.push((c, probs, 0.0));
    }
    let bigram = BigramModel::from_rows(n, rows).unwrap();
    ModelParams {
        dict: dict.with_phi(phi),
        bigram,
    }
}

/// A random word over `alphabet`, biased toward dictionary substrings so a
/// decent share of the samples is segmentable.
pub fn random_word<R: Rng>(
    rng: &mut R,
    alphabet: &[char],
    dict: &SubwordDictionary,
    max_units: usize,
) -> String {
    let target = rng.gen_range(1..=max_units);
    let mut word = String::new();
    while word.chars().count() < target {
        if rng.gen_bool(0.6) && !dict.is_empty() {
            let id = rng.gen_range(0..dict.len());
            word.push_str(dict.entry(id as u32));
        } else {
            word.push(alphabet[rng.gen_range(0..alphabet.len())]);
        }
    }
    word.chars().take(max_units).collect()
}
