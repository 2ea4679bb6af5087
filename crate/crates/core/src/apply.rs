//! Applying a trained model to text: segmenting, context marking,
//! recombining and out-of-vocabulary metrics.
//!
//! Context markers distinguish word-internal subwords from standalone
//! words: a prefix renders as `s+`, an infix as `+s+`, a suffix as `+s`
//! and a singleton as plain `s`. Recombination strips the markers and is
//! the exact inverse of marking.

use std::collections::HashMap;

use crate::corpus::{Corpus, WordVocabulary};
use crate::dictionary::SubwordDictionary;
use crate::error::{Error, Result};
use crate::estimator::segment_best;
use crate::graphs::{LatticeBuilder, ModelParams};
use crate::parallel;

pub const MARKER: char = '+';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Singleton,
    Prefix,
    Infix,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedToken {
    pub text: String,
    pub role: TokenRole,
}

impl MarkedToken {
    pub fn render(&self) -> String {
        match self.role {
            TokenRole::Singleton => self.text.clone(),
            TokenRole::Prefix => format!("{}+", self.text),
            TokenRole::Infix => format!("+{}+", self.text),
            TokenRole::Suffix => format!("+{}", self.text),
        }
    }

    /// Reads a rendered token back. Marker-only or empty-core tokens are
    /// kept as singletons so malformed input degrades gracefully.
    pub fn parse(token: &str) -> MarkedToken {
        let leading = token.len() > 1 && token.starts_with(MARKER);
        let trailing = token.len() > 1 && token.ends_with(MARKER);
        let core_start = usize::from(leading);
        let core_end = token.len() - usize::from(trailing);
        if core_start >= core_end {
            return MarkedToken {
                text: token.to_owned(),
                role: TokenRole::Singleton,
            };
        }
        let core = &token[core_start..core_end];
        let role = match (leading, trailing) {
            (false, false) => TokenRole::Singleton,
            (false, true) => TokenRole::Prefix,
            (true, true) => TokenRole::Infix,
            (true, false) => TokenRole::Suffix,
        };
        MarkedToken {
            text: core.to_owned(),
            role,
        }
    }
}

/// Decorates a segmentation with context markers: a single piece stays a
/// singleton, otherwise the first piece is a prefix, the last a suffix and
/// everything in between an infix. Errors when a piece contains the
/// reserved marker character.
pub fn mark_context(seg: &[String]) -> Result<Vec<MarkedToken>> {
    if seg.is_empty() {
        return Err(Error::InvalidParameter("empty segmentation".into()));
    }
    for piece in seg {
        if piece.contains(MARKER) {
            return Err(Error::ReservedMarker {
                subword: piece.clone(),
            });
        }
    }
    if seg.len() == 1 {
        return Ok(vec![MarkedToken {
            text: seg[0].clone(),
            role: TokenRole::Singleton,
        }]);
    }
    Ok(seg
        .iter()
        .enumerate()
        .map(|(i, piece)| {
            let role = if i == 0 {
                TokenRole::Prefix
            } else if i + 1 == seg.len() {
                TokenRole::Suffix
            } else {
                TokenRole::Infix
            };
            MarkedToken {
                text: piece.clone(),
                role,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct RecombineOutcome {
    pub words: Vec<String>,
    /// Suffixes or infixes that arrived with no word open; they are
    /// emitted as standalone words.
    pub malformed: usize,
    /// A word was still open at the end (or when a non-continuation
    /// arrived) and was closed implicitly.
    pub dangling: usize,
}

/// Joins marked tokens back into words: a prefix opens a word, infixes
/// extend it, a suffix closes it, singletons stand alone. Dangling open
/// words are closed where they stand and counted.
pub fn recombine(tokens: &[MarkedToken]) -> RecombineOutcome {
    let mut out = RecombineOutcome::default();
    let mut open: Option<String> = None;
    for tok in tokens {
        match tok.role {
            TokenRole::Prefix => {
                if let Some(w) = open.take() {
                    out.dangling += 1;
                    out.words.push(w);
                }
                open = Some(tok.text.clone());
            }
            TokenRole::Infix => match open.as_mut() {
                Some(w) => w.push_str(&tok.text),
                None => {
                    out.malformed += 1;
                    out.words.push(tok.text.clone());
                }
            },
            TokenRole::Suffix => match open.take() {
                Some(mut w) => {
                    w.push_str(&tok.text);
                    out.words.push(w);
                }
                None => {
                    out.malformed += 1;
                    out.words.push(tok.text.clone());
                }
            },
            TokenRole::Singleton => {
                if let Some(w) = open.take() {
                    out.dangling += 1;
                    out.words.push(w);
                }
                out.words.push(tok.text.clone());
            }
        }
    }
    if let Some(w) = open.take() {
        out.dangling += 1;
        out.words.push(w);
    }
    out
}

/// Parses a whitespace-separated line of rendered tokens and recombines it.
pub fn recombine_line(line: &str) -> RecombineOutcome {
    let tokens: Vec<MarkedToken> = line.split_whitespace().map(MarkedToken::parse).collect();
    recombine(&tokens)
}

#[derive(Debug, Clone, Default)]
pub struct SegmentStats {
    pub tokens: usize,
    /// Token occurrences passed through because they have no segmentation.
    pub unsegmentable: usize,
    /// The distinct unsegmentable tokens, sorted.
    pub flagged: Vec<String>,
}

/// Segments every token of the corpus with its best segmentation,
/// optionally context-marked. Unsegmentable tokens pass through unchanged.
/// Returns one rendered line per input line, pieces separated by single
/// spaces, token order preserved.
pub fn segment_text(
    corpus: &Corpus,
    theta: &ModelParams,
    mark: bool,
) -> Result<(Vec<String>, SegmentStats)> {
    let builder = LatticeBuilder::new(&theta.dict, corpus.char_mode());

    // Segment each distinct token once, in first-occurrence order.
    let mut distinct: Vec<String> = Vec::new();
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for line in corpus.tokens() {
        for tok in line {
            if seen.insert(tok.as_str()) {
                distinct.push(tok.clone());
            }
        }
    }
    let rendered: Vec<Option<String>> =
        parallel::map_slice(&distinct, |tok| match segment_best(tok, theta, &builder) {
            Ok(seg) => {
                let piece = if mark {
                    let marked = mark_context(&seg).ok()?;
                    marked
                        .iter()
                        .map(|t| t.render())
                        .collect::<Vec<_>>()
                        .join(" ")
                } else {
                    seg.join(" ")
                };
                Some(piece)
            }
            Err(_) => None,
        });

    let index: HashMap<&str, usize> = distinct
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let mut stats = SegmentStats::default();
    let mut lines_out = Vec::with_capacity(corpus.n_lines());
    for line in corpus.tokens() {
        let mut groups: Vec<&str> = Vec::with_capacity(line.len());
        for tok in line {
            stats.tokens += 1;
            match &rendered[index[tok.as_str()]] {
                Some(r) => groups.push(r),
                None => {
                    stats.unsegmentable += 1;
                    groups.push(tok);
                }
            }
        }
        lines_out.push(groups.join(" "));
    }
    let mut flagged: Vec<String> = distinct
        .iter()
        .enumerate()
        .filter(|&(i, _)| rendered[i].is_none())
        .map(|(_, t)| t.clone())
        .collect();
    flagged.sort_by(|a, b| crate::corpus::tie_break_cmp(a, b));
    stats.flagged = flagged;
    Ok((lines_out, stats))
}

#[derive(Debug, Clone)]
pub struct OovReport {
    /// Fraction of test token occurrences absent from the training
    /// vocabulary.
    pub oov_rate: f64,
    /// Fraction of test token occurrences with no dictionary segmentation,
    /// when a dictionary was supplied.
    pub unsegmentable_rate: Option<f64>,
    pub test_tokens: u64,
    pub oov_tokens: u64,
    pub unsegmentable_tokens: Option<u64>,
}

/// Token-level out-of-vocabulary rate of `test` against a training
/// vocabulary.
pub fn oov_rate(train: &WordVocabulary, test: &Corpus) -> Result<f64> {
    oov_report(train, test, None).map(|r| r.oov_rate)
}

/// Full out-of-vocabulary report; with a dictionary, also measures the
/// fraction of test tokens that cannot be segmented at all.
pub fn oov_report(
    train: &WordVocabulary,
    test: &Corpus,
    dict: Option<&SubwordDictionary>,
) -> Result<OovReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test corpus is empty".into()));
    }
    let mut total = 0u64;
    let mut oov = 0u64;
    for line in test.tokens() {
        for tok in line {
            total += 1;
            if !train.contains(tok) {
                oov += 1;
            }
        }
    }
    let (unseg_rate, unseg_tokens) = match dict {
        Some(d) => {
            let builder = LatticeBuilder::new(d, test.char_mode());
            let mut distinct: Vec<&str> = Vec::new();
            let mut counts: HashMap<&str, u64> = HashMap::new();
            for line in test.tokens() {
                for tok in line {
                    let e = counts.entry(tok.as_str()).or_insert(0);
                    if *e == 0 {
                        distinct.push(tok);
                    }
                    *e += 1;
                }
            }
            let segmentable = parallel::map_slice(&distinct, |tok| builder.is_segmentable(tok));
            let mut unseg = 0u64;
            for (tok, ok) in distinct.iter().zip(segmentable) {
                if !ok {
                    unseg += counts[tok];
                }
            }
            (Some(unseg as f64 / total as f64), Some(unseg))
        }
        None => (None, None),
    };
    Ok(OovReport {
        oov_rate: oov as f64 / total as f64,
        unsegmentable_rate: unseg_rate,
        test_tokens: total,
        oov_tokens: oov,
        unsegmentable_tokens: unseg_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, count_char_ngrams, CharMode};
    use crate::dictionary::learn_bpe;

    fn seg(pieces: &[&str]) -> Vec<String> {
        pieces.iter().map(|s| s.to_string()).collect()
    }

    fn render(tokens: &[MarkedToken]) -> String {
        tokens
            .iter()
            .map(MarkedToken::render)
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn mark_two_pieces() {
        let m = mark_context(&seg(&["ab", "ab"])).unwrap();
        assert_eq!(render(&m), "ab+ +ab");
    }

    #[test]
    fn mark_three_pieces() {
        let m = mark_context(&seg(&["a", "b", "ab"])).unwrap();
        assert_eq!(render(&m), "a+ +b+ +ab");
    }

    #[test]
    fn mark_singleton() {
        let m = mark_context(&seg(&["abab"])).unwrap();
        assert_eq!(render(&m), "abab");
    }

    #[test]
    fn mark_rejects_reserved_marker() {
        assert!(matches!(
            mark_context(&seg(&["a+b"])),
            Err(Error::ReservedMarker { .. })
        ));
    }

    #[test]
    fn recombine_round_trips() {
        for pieces in [vec!["ab", "ab"], vec!["abab"], vec!["a", "b", "a", "b"]] {
            let s = seg(&pieces);
            let out = recombine(&mark_context(&s).unwrap());
            assert_eq!(out.words, vec![pieces.concat()]);
            assert_eq!(out.malformed, 0);
            assert_eq!(out.dangling, 0);
        }
    }

    #[test]
    fn recombine_line_mixed() {
        let out = recombine_line("a+ +b+ +ab x");
        assert_eq!(out.words, vec!["abab".to_string(), "x".to_string()]);
    }

    #[test]
    fn recombine_flags_malformed_and_dangling() {
        let out = recombine_line("+ab x");
        assert_eq!(out.words, vec!["ab".to_string(), "x".to_string()]);
        assert_eq!(out.malformed, 1);

        let out = recombine_line("ab+ x");
        assert_eq!(out.words, vec!["ab".to_string(), "x".to_string()]);
        assert_eq!(out.dangling, 1);
    }

    #[test]
    fn parse_render_inverse() {
        for token in ["ab", "ab+", "+ab+", "+ab"] {
            let parsed = MarkedToken::parse(token);
            assert_eq!(parsed.render(), token);
        }
        // A bare marker survives as a singleton.
        assert_eq!(MarkedToken::parse("+").render(), "+");
    }

    fn toy_theta() -> ModelParams {
        let corpus = Corpus::from_text("abab aba\nabab\n", CharMode::Codepoint);
        let dict = learn_bpe(&count_char_ngrams(&corpus, 7), 3).unwrap();
        ModelParams::uniform_init(dict)
    }

    #[test]
    fn segment_text_marks_and_flags() {
        let theta = toy_theta();
        let corpus = Corpus::from_text("abab aba\nqq abab\n", CharMode::Codepoint);
        let (lines, stats) = segment_text(&corpus, &theta, true).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "ab+ +ab ab+ +a");
        assert_eq!(lines[1], "qq ab+ +ab");
        assert_eq!(stats.tokens, 4);
        assert_eq!(stats.unsegmentable, 1);
        assert_eq!(stats.flagged, vec!["qq".to_string()]);
    }

    #[test]
    fn segment_text_round_trip() {
        let theta = toy_theta();
        let corpus = Corpus::from_text("abab aba ba\nbb aab\n", CharMode::Codepoint);
        let (lines, _) = segment_text(&corpus, &theta, true).unwrap();
        for (line_out, line_in) in lines.iter().zip(corpus.tokens()) {
            let out = recombine_line(line_out);
            assert_eq!(&out.words, line_in);
        }
    }

    #[test]
    fn segment_text_preserves_token_count() {
        let theta = toy_theta();
        let corpus = Corpus::from_text("abab q aba\n", CharMode::Codepoint);
        let (lines, _) = segment_text(&corpus, &theta, true).unwrap();
        assert_eq!(recombine_line(&lines[0]).words.len(), 3);
    }

    #[test]
    fn oov_rate_examples() {
        let train =
            WordVocabulary::from_counts(vec![("abab".to_string(), 1), ("aba".to_string(), 1)]);
        let test = Corpus::from_text("abab ba", CharMode::Codepoint);
        assert!((oov_rate(&train, &test).unwrap() - 0.5).abs() < 1e-12);

        let covered = Corpus::from_text("abab aba abab", CharMode::Codepoint);
        assert_eq!(oov_rate(&train, &covered).unwrap(), 0.0);
    }

    #[test]
    fn oov_empty_test_errors() {
        let train = WordVocabulary::from_counts(vec![("a".to_string(), 1)]);
        let test = Corpus::from_text("", CharMode::Codepoint);
        assert!(matches!(oov_rate(&train, &test), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn subword_oov_zero_over_training_alphabet() {
        let corpus = Corpus::from_text("abab aba\nabab\n", CharMode::Codepoint);
        let vocab = build_vocabulary(&corpus);
        let dict = learn_bpe(&count_char_ngrams(&corpus, 7), 3).unwrap();
        let test = Corpus::from_text("bbbb baab ba", CharMode::Codepoint);
        let report = oov_report(&vocab, &test, Some(&dict)).unwrap();
        assert_eq!(report.unsegmentable_rate, Some(0.0));
        assert!(report.oov_rate > 0.0);
    }
}
