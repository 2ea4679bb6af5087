//! Special-purpose transducers for word segmentation and the composed
//! segmentation lattice.
//!
//! Three machines cooperate: a codebook transducer mapping character
//! sequences to subword labels (one looping path per dictionary entry), a
//! subword grammar acceptor scoring subword sequences with unigram and
//! bigram probabilities, and a per-word chain transducer mapping the word
//! symbol to its characters. Their composition, trimmed, topologically
//! sorted and output-projected, is an acyclic acceptor whose paths are
//! exactly the dictionary segmentations of the word, each weighted by the
//! grammar score of its subword sequence.
//!
//! [`LatticeBuilder`] produces the same lattice directly from positions and
//! bigram contexts without materializing the grammar acceptor, which keeps
//! training linear in lattice size instead of quadratic in dictionary size.
//! The composed route stays available (and tested) for inspection.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc as Shared;

use crate::corpus::CharMode;
use crate::dictionary::{format_prob, SubwordDictionary};
use crate::error::{Error, Result};
use crate::wfst::{
    compose, connect_topsort_map, project_output, Arc, Label, StateId, SymbolTable, Wfst, EPSILON,
};

/// Conditional bigram probabilities over subwords, stored sparsely: each
/// context row keeps its explicitly estimated entries plus one shared
/// default for everything else; contexts with no row fall back to the
/// uniform conditional 1/|dictionary|.
#[derive(Debug, Clone)]
pub struct BigramModel {
    rows: HashMap<u32, BigramRow>,
    dict_size: usize,
}

#[derive(Debug, Clone)]
pub struct BigramRow {
    pub probs: HashMap<u32, f64>,
    pub default: f64,
}

impl BigramRow {
    pub fn mass(&self, dict_size: usize) -> f64 {
        let explicit: f64 = {
            let mut ids: Vec<&u32> = self.probs.keys().collect();
            ids.sort_unstable();
            ids.iter().map(|id| self.probs[id]).sum()
        };
        explicit + self.default * (dict_size - self.probs.len()) as f64
    }
}

impl BigramModel {
    /// The uniform model: every conditional is 1/|dictionary|.
    pub fn uniform(dict_size: usize) -> BigramModel {
        BigramModel {
            rows: HashMap::new(),
            dict_size,
        }
    }

    pub fn dict_size(&self) -> usize {
        self.dict_size
    }

    /// True when no context has been estimated yet.
    pub fn is_uniform(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn prob(&self, context: u32, next: u32) -> f64 {
        match self.rows.get(&context) {
            Some(row) => row.probs.get(&next).copied().unwrap_or(row.default),
            None => 1.0 / self.dict_size as f64,
        }
    }

    pub fn row(&self, context: u32) -> Option<&BigramRow> {
        self.rows.get(&context)
    }

    pub fn contexts_sorted(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.rows.keys().copied().collect();
        v.sort_unstable();
        v
    }

    pub(crate) fn insert_row(&mut self, context: u32, probs: HashMap<u32, f64>, default: f64) {
        self.rows.insert(context, BigramRow { probs, default });
    }

    /// Builds a model from explicit rows, each `(context, entries, default)`
    /// with entries keyed by dictionary id. Every row must sum to one over
    /// the full dictionary within 1e-9.
    pub fn from_rows(
        dict_size: usize,
        rows: Vec<(u32, HashMap<u32, f64>, f64)>,
    ) -> Result<BigramModel> {
        let mut model = BigramModel::uniform(dict_size);
        for (ctx, probs, default) in rows {
            if ctx as usize >= dict_size || probs.keys().any(|&k| k as usize >= dict_size) {
                return Err(Error::InvalidParameter(format!(
                    "bigram row for context {ctx} references an id outside the dictionary"
                )));
            }
            model.insert_row(ctx, probs, default);
        }
        model.validate(1e-9)?;
        Ok(model)
    }

    /// Checks that every stored row sums to one within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (&ctx, row) in &self.rows {
            let mass = row.mass(self.dict_size);
            if (mass - 1.0).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "bigram row for context {ctx} sums to {mass}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// One `context<TAB>next<TAB>probability` line per explicitly stored
    /// pair, contexts and next-entries ordered by dictionary index. Rows
    /// whose explicit entries do not reach full mass (because the remainder
    /// sits in the shared default) are reconstructed exactly on load.
    pub fn write_tsv<W: Write>(&self, dict: &SubwordDictionary, out: &mut W) -> Result<()> {
        for ctx in self.contexts_sorted() {
            let row = &self.rows[&ctx];
            let mut ids: Vec<u32> = row.probs.keys().copied().collect();
            ids.sort_unstable();
            for next in ids {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    dict.entry(ctx),
                    dict.entry(next),
                    format_prob(row.probs[&next])
                )?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: Read>(dict: &SubwordDictionary, mut source: R) -> Result<BigramModel> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let mut rows: HashMap<u32, HashMap<u32, f64>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected 3 fields".into(),
                });
            }
            let ctx = dict.id(fields[0]).ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("context {:?} is not a dictionary entry", fields[0]),
            })?;
            let next = dict.id(fields[1]).ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("subword {:?} is not a dictionary entry", fields[1]),
            })?;
            let p: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: "probability is not a number".into(),
            })?;
            if !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "probability out of range".into(),
                });
            }
            rows.entry(ctx).or_default().insert(next, p);
        }
        let mut model = BigramModel::uniform(dict.len());
        let mut ctxs: Vec<u32> = rows.keys().copied().collect();
        ctxs.sort_unstable();
        for ctx in ctxs {
            let probs = rows.remove(&ctx).unwrap();
            let mut ids: Vec<u32> = probs.keys().copied().collect();
            ids.sort_unstable();
            let explicit: f64 = ids.iter().map(|id| probs[id]).sum();
            let missing = dict.len() - probs.len();
            let default = if missing > 0 {
                ((1.0 - explicit) / missing as f64).max(0.0)
            } else {
                0.0
            };
            let mass = explicit + default * missing as f64;
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "bigram row for {:?} sums to {mass}, expected 1",
                    dict.entry(ctx)
                )));
            }
            model.insert_row(ctx, probs, default);
        }
        Ok(model)
    }
}

/// The full segmentation model: subword dictionary with unigram mass, plus
/// the conditional bigram model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub dict: SubwordDictionary,
    pub bigram: BigramModel,
}

impl ModelParams {
    /// Initial model: the dictionary's own unigram mass and the uniform
    /// bigram conditionals.
    pub fn uniform_init(dict: SubwordDictionary) -> ModelParams {
        let bigram = BigramModel::uniform(dict.len());
        ModelParams { dict, bigram }
    }

    /// Negative-log weight of emitting `next` after `prev` (`None` at the
    /// start of a word): -ln phi(next) for the first subword, otherwise
    /// -ln(bigram(next|prev) * phi(next)). Infinite when the probability is
    /// zero. The grammar acceptor and the direct lattice builder both call
    /// this, so their weights agree bit for bit.
    pub fn arc_weight(&self, prev: Option<u32>, next: u32) -> f64 {
        let p = match prev {
            None => self.dict.prob(next),
            Some(c) => self.bigram.prob(c, next) * self.dict.prob(next),
        };
        -p.ln()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bigram.dict_size() != self.dict.len() {
            return Err(Error::InvalidParameter(format!(
                "bigram model sized for {} entries, dictionary has {}",
                self.bigram.dict_size(),
                self.dict.len()
            )));
        }
        self.bigram.validate(1e-9)
    }

    /// Writes `dictionary.tsv` and `bigram.tsv` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut d = Vec::new();
        self.dict.write_tsv(&mut d)?;
        fs::write(dir.join("dictionary.tsv"), d)?;
        let mut b = Vec::new();
        self.bigram.write_tsv(&self.dict, &mut b)?;
        fs::write(dir.join("bigram.tsv"), b)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<ModelParams> {
        let dict = SubwordDictionary::read_tsv(fs::File::open(dir.join("dictionary.tsv"))?)?;
        let bigram_path = dir.join("bigram.tsv");
        let bigram = if bigram_path.exists() {
            BigramModel::read_tsv(&dict, fs::File::open(bigram_path)?)?
        } else {
            BigramModel::uniform(dict.len())
        };
        Ok(ModelParams { dict, bigram })
    }
}

/// Character and subword symbol tables for a dictionary: characters sorted
/// by code point, subwords in dictionary order (so subword id `d` carries
/// label `d + 1`).
pub fn symbol_tables(
    dict: &SubwordDictionary,
    mode: CharMode,
) -> (Shared<SymbolTable>, Shared<SymbolTable>) {
    let mut units: BTreeSet<&str> = BTreeSet::new();
    for entry in dict.entries() {
        for u in mode.split(entry) {
            units.insert(u);
        }
    }
    let chars = SymbolTable::from_symbols(units);
    let subwords = SymbolTable::from_symbols(dict.entries());
    (Shared::new(chars), Shared::new(subwords))
}

fn subword_label(id: u32) -> Label {
    id + 1
}

/// Codebook transducer: a single loop state that is both start and final,
/// with one character-labeled path per dictionary entry returning to the
/// loop state. Every output label is epsilon except the last arc of each
/// path, which emits the subword. All weights are zero.
pub fn build_sd_wfst(
    dict: &SubwordDictionary,
    mode: CharMode,
    chars: &Shared<SymbolTable>,
    subwords: &Shared<SymbolTable>,
) -> Wfst {
    let mut m = Wfst::new(chars.clone(), subwords.clone());
    let loop_state = m.start();
    m.set_final(loop_state, 0.0);
    for (id, entry) in dict.entries().iter().enumerate() {
        let units = mode.split(entry);
        let out_label = subword_label(id as u32);
        let mut src = loop_state;
        for (i, unit) in units.iter().enumerate() {
            let ilabel = chars.label(unit).expect("dictionary unit in table");
            let last = i + 1 == units.len();
            let (olabel, dst) = if last {
                (out_label, loop_state)
            } else {
                (EPSILON, m.add_state())
            };
            m.add_arc(src, Arc::new(ilabel, olabel, 0.0, dst));
            src = dst;
        }
    }
    m
}

/// Grammar acceptor over subwords: a start state with one arc per subword
/// of positive unigram mass (weight -ln phi), one state per such subword,
/// and transition arcs weighted -ln(bigram * phi). Every subword state is
/// final with weight zero.
pub fn build_sg_wfst(theta: &ModelParams, subwords: &Shared<SymbolTable>) -> Wfst {
    let mut m = Wfst::new(subwords.clone(), subwords.clone());
    let start = m.start();
    let n = theta.dict.len() as u32;
    let mut state_of: Vec<Option<StateId>> = vec![None; n as usize];
    for z in 0..n {
        if theta.dict.prob(z) > 0.0 {
            let s = m.add_state();
            m.set_final(s, 0.0);
            state_of[z as usize] = Some(s);
        }
    }
    for z in 0..n {
        let Some(sz) = state_of[z as usize] else {
            continue;
        };
        m.add_arc(
            start,
            Arc::new(
                subword_label(z),
                subword_label(z),
                theta.arc_weight(None, z),
                sz,
            ),
        );
        for z2 in 0..n {
            let Some(sz2) = state_of[z2 as usize] else {
                continue;
            };
            let w = theta.arc_weight(Some(z), z2);
            if w.is_finite() {
                m.add_arc(sz, Arc::new(subword_label(z2), subword_label(z2), w, sz2));
            }
        }
    }
    m
}

/// Word transducer: a single chain whose first arc carries the word symbol
/// on the input side, epsilon afterwards, and the word's characters on the
/// output side. Errors when the word contains a character outside `chars`,
/// which makes it unsegmentable under the dictionary the table came from.
pub fn build_w_wfst(word: &str, mode: CharMode, chars: &Shared<SymbolTable>) -> Result<Wfst> {
    let units = mode.split(word);
    if units.is_empty() {
        return Err(Error::InvalidParameter("empty word".into()));
    }
    let isyms = Shared::new(SymbolTable::from_symbols([word]));
    let word_label = isyms.label(word).expect("just added");
    let mut m = Wfst::new(isyms, chars.clone());
    let mut src = m.start();
    for (i, unit) in units.iter().enumerate() {
        let olabel = chars.label(unit).ok_or_else(|| Error::Unsegmentable {
            word: word.to_owned(),
        })?;
        let ilabel = if i == 0 { word_label } else { EPSILON };
        let dst = m.add_state();
        m.add_arc(src, Arc::new(ilabel, olabel, 0.0, dst));
        src = dst;
    }
    m.set_final(src, 0.0);
    Ok(m)
}

/// Composes word, codebook and grammar machines, trims, topologically sorts
/// and projects onto output labels: an acyclic acceptor whose accepting
/// paths are exactly the dictionary segmentations of `word`, weighted by
/// the grammar. Errors when the word has no segmentation.
pub fn build_o_wfst(word: &str, sd: &Wfst, sg: &Wfst, mode: CharMode) -> Result<Wfst> {
    let w = build_w_wfst(word, mode, sd.isyms())?;
    let wsd = compose(&w, sd)?;
    let wsdsg = compose(&wsd, sg)?;
    let (connected, _) = connect_topsort_map(&wsdsg)?;
    if connected.final_states().next().is_none() {
        return Err(Error::Unsegmentable {
            word: word.to_owned(),
        });
    }
    Ok(project_output(&connected))
}

/// Segmentation lattice of one word: an acyclic acceptor over subword
/// labels, plus the bigram context (previous subword) of every state.
#[derive(Debug, Clone)]
pub struct SegmentationLattice {
    pub fst: Wfst,
    contexts: Vec<Option<u32>>,
    word: String,
}

impl SegmentationLattice {
    /// The subword emitted on the way into state `s`, `None` at the start.
    pub fn context(&self, s: StateId) -> Option<u32> {
        self.contexts[s]
    }

    pub fn word(&self) -> &str {
        &self.word
    }
}

/// Builds per-word segmentation lattices directly: states are (position,
/// last subword) pairs, arcs are dictionary matches at a position weighted
/// by [`ModelParams::arc_weight`]. The result has the same accepting paths
/// and weights as the composed machine route.
#[derive(Debug, Clone)]
pub struct LatticeBuilder {
    mode: CharMode,
    chars: Shared<SymbolTable>,
    subwords: Shared<SymbolTable>,
    // Prefix trie over unit labels; node 0 is the root.
    children: Vec<HashMap<Label, usize>>,
    entry_at: Vec<Option<u32>>,
    max_entry_units: usize,
    dict_len: usize,
}

impl LatticeBuilder {
    pub fn new(dict: &SubwordDictionary, mode: CharMode) -> LatticeBuilder {
        let (chars, subwords) = symbol_tables(dict, mode);
        let mut children: Vec<HashMap<Label, usize>> = vec![HashMap::new()];
        let mut entry_at: Vec<Option<u32>> = vec![None];
        let mut max_units = 0;
        for (id, entry) in dict.entries().iter().enumerate() {
            let mut node = 0usize;
            let units = mode.split(entry);
            max_units = max_units.max(units.len());
            for unit in &units {
                let label = chars.label(unit).expect("dictionary unit in table");
                node = match children[node].get(&label) {
                    Some(&n) => n,
                    None => {
                        let n = children.len();
                        children.push(HashMap::new());
                        entry_at.push(None);
                        children[node].insert(label, n);
                        n
                    }
                };
            }
            debug_assert!(entry_at[node].is_none(), "duplicate dictionary entry");
            entry_at[node] = Some(id as u32);
        }
        LatticeBuilder {
            mode,
            chars,
            subwords,
            children,
            entry_at,
            max_entry_units: max_units,
            dict_len: dict.len(),
        }
    }

    pub fn char_mode(&self) -> CharMode {
        self.mode
    }

    pub fn chars(&self) -> &Shared<SymbolTable> {
        &self.chars
    }

    pub fn subwords(&self) -> &Shared<SymbolTable> {
        &self.subwords
    }

    pub fn dict_len(&self) -> usize {
        self.dict_len
    }

    /// Word units as character labels; `None` when a unit never occurs in
    /// the dictionary, which makes the word unsegmentable.
    fn unit_labels(&self, word: &str) -> Option<Vec<Label>> {
        self.mode
            .split(word)
            .iter()
            .map(|u| self.chars.label(u))
            .collect()
    }

    /// Dictionary entries starting at `pos`, as (unit length, id), ordered
    /// by increasing length.
    fn matches_at(&self, units: &[Label], pos: usize) -> Vec<(usize, u32)> {
        let mut out = Vec::new();
        let mut node = 0usize;
        let end = units.len().min(pos + self.max_entry_units);
        for (len, &label) in units[pos..end].iter().enumerate() {
            match self.children[node].get(&label) {
                Some(&n) => node = n,
                None => break,
            }
            if let Some(id) = self.entry_at[node] {
                out.push((len + 1, id));
            }
        }
        out
    }

    /// Whether any dictionary segmentation of `word` exists. Probabilities
    /// play no role here.
    pub fn is_segmentable(&self, word: &str) -> bool {
        let Some(units) = self.unit_labels(word) else {
            return false;
        };
        if units.is_empty() {
            return false;
        }
        let n = units.len();
        let mut reach = vec![false; n + 1];
        reach[0] = true;
        for pos in 0..n {
            if !reach[pos] {
                continue;
            }
            for (len, _) in self.matches_at(&units, pos) {
                reach[pos + len] = true;
            }
        }
        reach[n]
    }

    /// Builds the segmentation lattice of `word` under `theta`, which must
    /// share the dictionary this builder was created from. Arcs whose
    /// probability is zero are omitted. Errors when no positive-probability
    /// segmentation remains.
    pub fn build(&self, word: &str, theta: &ModelParams) -> Result<SegmentationLattice> {
        assert_eq!(
            theta.dict.len(),
            self.dict_len,
            "model dictionary does not match the builder's dictionary"
        );
        let units = self.unit_labels(word).ok_or_else(|| Error::Unsegmentable {
            word: word.to_owned(),
        })?;
        if units.is_empty() {
            return Err(Error::InvalidParameter("empty word".into()));
        }
        let n = units.len();
        let mut raw = Wfst::new(self.subwords.clone(), self.subwords.clone());
        let mut contexts: Vec<Option<u32>> = vec![None];
        let mut ids: HashMap<(usize, u32), StateId> = HashMap::new();
        let mut by_pos: Vec<Vec<StateId>> = vec![Vec::new(); n + 1];
        by_pos[0].push(raw.start());

        for pos in 0..n {
            if by_pos[pos].is_empty() {
                continue;
            }
            let matches = self.matches_at(&units, pos);
            if matches.is_empty() {
                continue;
            }
            let sources = by_pos[pos].clone();
            for src in sources {
                let ctx = contexts[src];
                for &(len, d) in &matches {
                    let weight = theta.arc_weight(ctx, d);
                    if !weight.is_finite() {
                        continue;
                    }
                    let key = (pos + len, d);
                    let dst = match ids.get(&key) {
                        Some(&s) => s,
                        None => {
                            let s = raw.add_state();
                            contexts.push(Some(d));
                            ids.insert(key, s);
                            by_pos[pos + len].push(s);
                            s
                        }
                    };
                    raw.add_arc(
                        src,
                        Arc::new(subword_label(d), subword_label(d), weight, dst),
                    );
                }
            }
        }
        for &s in &by_pos[n] {
            raw.set_final(s, 0.0);
        }

        let (fst, mapping) = connect_topsort_map(&raw)?;
        if fst.final_states().next().is_none() {
            return Err(Error::Unsegmentable {
                word: word.to_owned(),
            });
        }
        let mut new_contexts: Vec<Option<u32>> = vec![None; fst.num_states()];
        for (old, ctx) in contexts.into_iter().enumerate() {
            if let Some(new) = mapping[old] {
                new_contexts[new] = ctx;
            }
        }
        Ok(SegmentationLattice {
            fst,
            contexts: new_contexts,
            word: word.to_owned(),
        })
    }
}
