//! Corpus ingestion: tokenization, word vocabulary and character n-gram
//! count tables.
//!
//! A "character" here is a configurable unit: a Unicode code point by
//! default, or an extended grapheme cluster for scripts where combining
//! sequences should be treated as single units.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};

use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};
use crate::parallel;

/// Unit of text treated as one "character" by counting and segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CharMode {
    #[default]
    Codepoint,
    Grapheme,
}

impl CharMode {
    /// Splits `s` into its units, in order.
    pub fn split<'a>(&self, s: &'a str) -> Vec<&'a str> {
        match self {
            CharMode::Codepoint => {
                let mut out = Vec::with_capacity(s.len());
                let mut iter = s.char_indices().peekable();
                while let Some((start, _)) = iter.next() {
                    let end = iter.peek().map_or(s.len(), |&(i, _)| i);
                    out.push(&s[start..end]);
                }
                out
            }
            CharMode::Grapheme => s.graphemes(true).collect(),
        }
    }

    pub fn unit_count(&self, s: &str) -> usize {
        match self {
            CharMode::Codepoint => s.chars().count(),
            CharMode::Grapheme => s.graphemes(true).count(),
        }
    }

    pub fn parse(name: &str) -> Result<CharMode> {
        match name {
            "codepoint" => Ok(CharMode::Codepoint),
            "grapheme" => Ok(CharMode::Grapheme),
            other => Err(Error::InvalidParameter(format!(
                "unknown char mode {other:?} (expected codepoint or grapheme)"
            ))),
        }
    }
}

/// Canonical order used for every count tie-break in the crate: shorter
/// string first (in code points), then lexicographic by code point.
pub fn tie_break_cmp(a: &str, b: &str) -> Ordering {
    a.chars()
        .count()
        .cmp(&b.chars().count())
        .then_with(|| a.cmp(b))
}

/// Orders `(key, count)` pairs by descending count, then [`tie_break_cmp`].
pub fn count_order(a: &(String, u64), b: &(String, u64)) -> Ordering {
    b.1.cmp(&a.1).then_with(|| tie_break_cmp(&a.0, &b.0))
}

/// A tokenized text corpus. Lines are split on newlines, tokens on runs of
/// whitespace; lines without tokens are dropped.
#[derive(Debug, Clone)]
pub struct Corpus {
    lines: Vec<String>,
    tokens: Vec<Vec<String>>,
    char_mode: CharMode,
}

impl Corpus {
    pub fn from_text(text: &str, char_mode: CharMode) -> Corpus {
        let mut lines = Vec::new();
        let mut tokens = Vec::new();
        for raw in text.lines() {
            let toks: Vec<String> = raw.split_whitespace().map(str::to_owned).collect();
            if toks.is_empty() {
                continue;
            }
            lines.push(raw.to_owned());
            tokens.push(toks);
        }
        Corpus {
            lines,
            tokens,
            char_mode,
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// Tokens of each retained line, in input order.
    pub fn tokens(&self) -> &[Vec<String>] {
        &self.tokens
    }

    pub fn char_mode(&self) -> CharMode {
        self.char_mode
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Reads a UTF-8 corpus from `source`. Invalid UTF-8 is reported with the
/// byte offset of the first offending byte.
pub fn load_corpus<R: Read>(mut source: R, char_mode: CharMode) -> Result<Corpus> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 {
        offset: e.utf8_error().valid_up_to(),
    })?;
    Ok(Corpus::from_text(&text, char_mode))
}

/// Word types of a corpus with their token frequencies.
#[derive(Debug, Clone, Default)]
pub struct WordVocabulary {
    counts: HashMap<String, u64>,
    total: u64,
}

impl WordVocabulary {
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> WordVocabulary {
        let mut map = HashMap::new();
        for (w, c) in counts {
            *map.entry(w).or_insert(0) += c;
        }
        let total = map.values().sum();
        WordVocabulary { counts: map, total }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Total token count over the corpus.
    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    /// Entries ordered by descending count, then canonical tie-break. This
    /// is the iteration order used everywhere downstream.
    pub fn sorted_entries(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(w, &c)| (w.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| tie_break_cmp(a.0, b.0)));
        v
    }

    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        for (w, c) in self.sorted_entries() {
            writeln!(out, "{w}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(source: R) -> Result<WordVocabulary> {
        let mut text = String::new();
        let mut source = source;
        source.read_to_string(&mut text)?;
        let mut counts = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or("");
            let count: u64 = fields
                .next()
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: "missing count field".into(),
                })?
                .parse()
                .map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: "count is not an integer".into(),
                })?;
            if word.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty word".into(),
                });
            }
            *counts.entry(word.to_owned()).or_insert(0) += count;
        }
        Ok(WordVocabulary::from_counts(counts))
    }
}

/// Builds the word vocabulary of a corpus.
pub fn build_vocabulary(corpus: &Corpus) -> WordVocabulary {
    let partials = parallel::map_chunks(corpus.tokens(), |lines| {
        let mut map: HashMap<String, u64> = HashMap::new();
        for line in lines {
            for tok in line {
                *map.entry(tok.clone()).or_insert(0) += 1;
            }
        }
        map
    });
    let mut counts: HashMap<String, u64> = HashMap::new();
    for part in partials {
        for (w, c) in part {
            *counts.entry(w).or_insert(0) += c;
        }
    }
    WordVocabulary::from_counts(counts)
}

/// How much one word type contributes to the n-gram tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountWeighting {
    /// Each occurrence of a word counts (corpus token frequency).
    #[default]
    TokenFrequency,
    /// Each distinct word counts once.
    WordType,
}

/// Per-length character n-gram counts of a corpus. N-grams never cross a
/// word boundary. Each table is sorted by descending count with the
/// canonical tie-break, so iteration order is deterministic.
#[derive(Debug, Clone)]
pub struct NgramCountTable {
    max_len: usize,
    char_mode: CharMode,
    tables: Vec<Vec<(String, u64)>>,
}

pub const DEFAULT_MAX_NGRAM: usize = 7;

impl NgramCountTable {
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn char_mode(&self) -> CharMode {
        self.char_mode
    }

    /// Entries of length `l` (1-based), descending by count.
    pub fn table(&self, l: usize) -> &[(String, u64)] {
        &self.tables[l - 1]
    }

    /// Distinct characters of the corpus, in table order.
    pub fn alphabet(&self) -> impl Iterator<Item = &str> {
        self.tables[0].iter().map(|(s, _)| s.as_str())
    }

    pub fn alphabet_size(&self) -> usize {
        self.tables[0].len()
    }

    pub fn total(&self, l: usize) -> u64 {
        self.table(l).iter().map(|&(_, c)| c).sum()
    }

    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        for l in 1..=self.max_len {
            for (gram, count) in self.table(l) {
                writeln!(out, "{l}\t{gram}\t{count}")?;
            }
        }
        Ok(())
    }
}

/// Counts in-word character n-grams up to `max_len` units, weighted by
/// token frequency.
pub fn count_char_ngrams(corpus: &Corpus, max_len: usize) -> NgramCountTable {
    count_char_ngrams_weighted(corpus, max_len, CountWeighting::TokenFrequency)
}

pub fn count_char_ngrams_weighted(
    corpus: &Corpus,
    max_len: usize,
    weighting: CountWeighting,
) -> NgramCountTable {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mode = corpus.char_mode();
    let vocab = build_vocabulary(corpus);
    let words: Vec<(String, u64)> = vocab.counts.iter().map(|(w, &c)| (w.clone(), c)).collect();

    let partials = parallel::map_chunks(&words, |chunk| {
        let mut maps: Vec<HashMap<String, u64>> = vec![HashMap::new(); max_len];
        for (word, freq) in chunk {
            let weight = match weighting {
                CountWeighting::TokenFrequency => *freq,
                CountWeighting::WordType => 1,
            };
            let units = mode.split(word);
            for l in 1..=max_len.min(units.len()) {
                let map = &mut maps[l - 1];
                for window in units.windows(l) {
                    *map.entry(window.concat()).or_insert(0) += weight;
                }
            }
        }
        maps
    });

    let mut merged: Vec<HashMap<String, u64>> = vec![HashMap::new(); max_len];
    for maps in partials {
        for (l, map) in maps.into_iter().enumerate() {
            for (gram, count) in map {
                *merged[l].entry(gram).or_insert(0) += count;
            }
        }
    }

    let tables = merged
        .into_iter()
        .map(|map| {
            let mut v: Vec<(String, u64)> = map.into_iter().collect();
            v.sort_by(count_order);
            v
        })
        .collect();

    NgramCountTable {
        max_len,
        char_mode: mode,
        tables,
    }
}
