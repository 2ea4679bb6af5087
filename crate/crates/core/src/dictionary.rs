//! Subword dictionary construction.
//!
//! Two learners build the codebook from the character n-gram tables: a
//! frequency-ranked merge that keeps adding the globally most frequent
//! n-gram until the requested size is reached, and a capped variant that
//! admits at most a fixed number of codewords per length. Both start from
//! the full character inventory, so any word over the training alphabet
//! stays segmentable. A third entry point imports a codebook produced by an
//! external tool.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use crate::corpus::{tie_break_cmp, CharMode, NgramCountTable};
use crate::error::{Error, Result};

/// Subword codebook with its unigram probability mass.
#[derive(Debug, Clone)]
pub struct SubwordDictionary {
    entries: Vec<String>,
    phi: Vec<f64>,
    index: HashMap<String, u32>,
}

/// Formats a probability with 12 significant digits.
pub(crate) fn format_prob(p: f64) -> String {
    format!("{p:.11e}")
}

impl SubwordDictionary {
    /// Builds a dictionary from raw counts; probabilities are the counts
    /// normalized to sum to one.
    pub fn from_counts(pairs: Vec<(String, u64)>) -> Result<SubwordDictionary> {
        let total: u64 = pairs.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            return Err(Error::EmptyInput(
                "dictionary has no counted entries".into(),
            ));
        }
        let weights = pairs
            .into_iter()
            .map(|(s, c)| (s, c as f64 / total as f64))
            .collect();
        Self::from_probs(weights)
    }

    /// Builds a dictionary from entry/probability pairs. Entries must be
    /// unique and non-empty; probabilities must be non-negative and sum to
    /// one within 1e-9.
    pub fn from_probs(pairs: Vec<(String, f64)>) -> Result<SubwordDictionary> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("dictionary has no entries".into()));
        }
        let mut entries = Vec::with_capacity(pairs.len());
        let mut phi = Vec::with_capacity(pairs.len());
        let mut index = HashMap::with_capacity(pairs.len());
        for (s, p) in pairs {
            if s.is_empty() {
                return Err(Error::InvalidParameter("empty subword".into()));
            }
            if p.is_nan() || p < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "negative or NaN probability for subword {s:?}"
                )));
            }
            if index.insert(s.clone(), entries.len() as u32).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate subword {s:?}")));
            }
            entries.push(s);
            phi.push(p);
        }
        let sum: f64 = phi.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "subword probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(SubwordDictionary {
            entries,
            phi,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.phi[id as usize]
    }

    pub fn entry(&self, id: u32) -> &str {
        &self.entries[id as usize]
    }

    pub fn id(&self, subword: &str) -> Option<u32> {
        self.index.get(subword).copied()
    }

    pub fn contains(&self, subword: &str) -> bool {
        self.index.contains_key(subword)
    }

    /// Same entries with a replacement probability vector.
    pub fn with_phi(&self, phi: Vec<f64>) -> SubwordDictionary {
        assert_eq!(phi.len(), self.entries.len());
        SubwordDictionary {
            entries: self.entries.clone(),
            phi,
            index: self.index.clone(),
        }
    }

    /// Entries in insertion order, one `subword<TAB>probability` per line.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        for (s, &p) in self.entries.iter().zip(&self.phi) {
            writeln!(out, "{s}\t{}", format_prob(p))?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(mut source: R) -> Result<SubwordDictionary> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let subword = fields.next().unwrap_or("").to_owned();
            let prob: f64 = fields
                .next()
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: "missing probability".into(),
                })?
                .parse()
                .map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: "probability is not a number".into(),
                })?;
            pairs.push((subword, prob));
        }
        SubwordDictionary::from_probs(pairs)
    }
}

/// Bookkeeping from a learner run.
#[derive(Debug, Clone, Default)]
pub struct LearnStats {
    /// Codewords appended, indexed by unit length minus one.
    pub additions: Vec<usize>,
    /// Entries removed by the substring-deletion rule.
    pub deletions: usize,
}

impl LearnStats {
    pub fn additions_of_length(&self, l: usize) -> usize {
        self.additions.get(l - 1).copied().unwrap_or(0)
    }

    pub fn total_additions(&self) -> usize {
        self.additions.iter().sum()
    }
}

/// Working state of the greedy learners: entries stay in insertion order,
/// deletions are tombstones so indices remain stable.
struct Codebook {
    entries: Vec<(String, u64)>,
    deleted: Vec<bool>,
    index: HashMap<String, usize>,
    live: usize,
    char_mode: CharMode,
    stats: LearnStats,
}

impl Codebook {
    fn new(char_mode: CharMode) -> Codebook {
        Codebook {
            entries: Vec::new(),
            deleted: Vec::new(),
            index: HashMap::new(),
            live: 0,
            char_mode,
            stats: LearnStats::default(),
        }
    }

    fn add(&mut self, text: &str, count: u64) {
        debug_assert!(!self.index.contains_key(text));
        let idx = self.entries.len();
        self.entries.push((text.to_owned(), count));
        self.deleted.push(false);
        self.index.insert(text.to_owned(), idx);
        self.live += 1;
        let len = self.char_mode.unit_count(text);
        if self.stats.additions.len() < len {
            self.stats.additions.resize(len, 0);
        }
        self.stats.additions[len - 1] += 1;
    }

    /// Removes every live multi-character entry that is a proper substring
    /// of `codeword` (aligned to character units) and has the same count.
    /// Single characters are never removed, so the full alphabet survives.
    fn apply_deletion_rule(&mut self, codeword: &str, count: u64) {
        let units = self.char_mode.split(codeword);
        let k = units.len();
        for i in 0..k {
            for j in (i + 2)..=k {
                if i == 0 && j == k {
                    continue; // the codeword itself
                }
                let sub = units[i..j].concat();
                if let Some(&idx) = self.index.get(&sub) {
                    if !self.deleted[idx] && self.entries[idx].1 == count {
                        self.deleted[idx] = true;
                        self.live -= 1;
                        self.stats.deletions += 1;
                    }
                }
            }
        }
    }

    fn finish(self) -> Result<(SubwordDictionary, LearnStats)> {
        let pairs = self
            .entries
            .into_iter()
            .zip(self.deleted)
            .filter(|&(_, dead)| !dead)
            .map(|((s, c), _)| (s, c))
            .collect();
        Ok((SubwordDictionary::from_counts(pairs)?, self.stats))
    }
}

fn seed_alphabet(book: &mut Codebook, psi: &NgramCountTable) -> Result<()> {
    if psi.table(1).is_empty() {
        return Err(Error::EmptyInput("corpus has no characters".into()));
    }
    for (ch, count) in psi.table(1) {
        book.add(ch, *count);
    }
    Ok(())
}

/// Learns a dictionary of at most `n` codewords: the character inventory
/// first, then repeatedly the most frequent remaining n-gram of length >= 2,
/// with the substring-deletion rule applied after each addition. Counts are
/// normalized into the probability mass at the end.
pub fn learn_bpe(psi: &NgramCountTable, n: usize) -> Result<SubwordDictionary> {
    learn_bpe_with_stats(psi, n).map(|(d, _)| d)
}

pub fn learn_bpe_with_stats(
    psi: &NgramCountTable,
    n: usize,
) -> Result<(SubwordDictionary, LearnStats)> {
    if psi.table(1).is_empty() {
        return Err(Error::EmptyInput("corpus has no characters".into()));
    }
    if n < psi.alphabet_size() {
        return Err(Error::InvalidParameter(format!(
            "dictionary size {n} is smaller than the character set ({})",
            psi.alphabet_size()
        )));
    }
    let mut book = Codebook::new(psi.char_mode());
    seed_alphabet(&mut book, psi)?;

    // One cursor per length; each table is already sorted by descending
    // count with the canonical tie-break.
    let mut cursors: Vec<usize> = vec![0; psi.max_len() + 1];
    while book.live < n {
        let mut best: Option<(&str, u64)> = None;
        let mut best_len = 0;
        for l in 2..=psi.max_len() {
            let table = psi.table(l);
            if cursors[l] >= table.len() {
                continue;
            }
            let (gram, count) = &table[cursors[l]];
            let better = match best {
                None => true,
                Some((bg, bc)) => *count > bc || (*count == bc && tie_break_cmp(gram, bg).is_lt()),
            };
            if better {
                best = Some((gram, *count));
                best_len = l;
            }
        }
        let Some((gram, count)) = best else { break };
        let gram = gram.to_owned();
        cursors[best_len] += 1;
        book.add(&gram, count);
        book.apply_deletion_rule(&gram, count);
    }
    book.finish()
}

/// Learns a dictionary with at most `caps[l-1]` additions of length-`l`
/// codewords, lengths processed in ascending order. The first cap bounds the
/// character inventory and must cover it; caps count additions, not the
/// post-deletion net size.
pub fn learn_extended_bpe(psi: &NgramCountTable, caps: &[usize]) -> Result<SubwordDictionary> {
    learn_extended_bpe_with_stats(psi, caps).map(|(d, _)| d)
}

pub fn learn_extended_bpe_with_stats(
    psi: &NgramCountTable,
    caps: &[usize],
) -> Result<(SubwordDictionary, LearnStats)> {
    if psi.table(1).is_empty() {
        return Err(Error::EmptyInput("corpus has no characters".into()));
    }
    if caps.is_empty() {
        return Err(Error::InvalidParameter("no length caps given".into()));
    }
    if caps[0] < psi.alphabet_size() {
        return Err(Error::InvalidParameter(format!(
            "length-1 cap {} is smaller than the character set ({})",
            caps[0],
            psi.alphabet_size()
        )));
    }
    let mut book = Codebook::new(psi.char_mode());
    seed_alphabet(&mut book, psi)?;

    for l in 2..=psi.max_len().min(caps.len()) {
        let cap = caps[l - 1];
        let table = psi.table(l);
        for (gram, count) in table.iter().take(cap) {
            book.add(gram, *count);
            book.apply_deletion_rule(gram, *count);
        }
    }
    book.finish()
}

/// Imports an external subword list: one `subword` or `subword<TAB>count`
/// per line. Duplicate subwords merge their counts. The probability mass is
/// the normalized counts, or uniform when no line carries a count.
pub fn import_external<R: BufRead>(source: R) -> Result<SubwordDictionary> {
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut counted_lines = 0usize;
    let mut plain_lines = 0usize;
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\n');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let subword = fields.next().unwrap_or("").to_owned();
        if subword.is_empty() || subword.contains(char::is_whitespace) {
            return Err(Error::Parse {
                line: i + 1,
                msg: "malformed subword".into(),
            });
        }
        let count = match fields.next() {
            Some(c) => {
                counted_lines += 1;
                Some(c.parse::<u64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: "count is not a non-negative integer".into(),
                })?)
            }
            None => {
                plain_lines += 1;
                None
            }
        };
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "too many fields".into(),
            });
        }
        if !counts.contains_key(&subword) {
            order.push(subword.clone());
        }
        *counts.entry(subword).or_insert(0) += count.unwrap_or(1);
    }
    if order.is_empty() {
        return Err(Error::EmptyInput("external dictionary is empty".into()));
    }
    if counted_lines > 0 && plain_lines > 0 {
        return Err(Error::Parse {
            line: 0,
            msg: "mixed counted and uncounted lines".into(),
        });
    }
    if counted_lines > 0 {
        let pairs = order.into_iter().map(|s| {
            let c = counts[&s];
            (s, c)
        });
        SubwordDictionary::from_counts(pairs.collect())
    } else {
        let n = order.len() as f64;
        SubwordDictionary::from_probs(order.into_iter().map(|s| (s, 1.0 / n)).collect())
    }
}
