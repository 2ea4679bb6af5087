//! A small weighted finite-state transducer engine over the negative-log
//! semiring.
//!
//! Arc weights are negative natural logarithms of probabilities, so a path
//! weight is the sum of its arc weights plus the final weight of its last
//! state, and sets of paths combine by log-sum-exp. Label 0 is reserved for
//! epsilon on both tapes.
//!
//! Machines are immutable once built; every query here is a pure function,
//! so shared machines can be inspected from many threads at once.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc as Shared;

use crate::error::{Error, Result};

pub type Label = u32;
pub type StateId = usize;

/// The reserved epsilon label.
pub const EPSILON: Label = 0;

/// Bidirectional symbol/label mapping. Label 0 is always `<eps>`.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, Label>,
}

impl SymbolTable {
    pub fn new() -> SymbolTable {
        let mut t = SymbolTable {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        t.add("<eps>");
        t
    }

    pub fn from_symbols<I, S>(symbols: I) -> SymbolTable
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut t = SymbolTable::new();
        for s in symbols {
            t.add(s.as_ref());
        }
        t
    }

    pub fn add(&mut self, symbol: &str) -> Label {
        if let Some(&l) = self.index.get(symbol) {
            return l;
        }
        let l = self.symbols.len() as Label;
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), l);
        l
    }

    pub fn label(&self, symbol: &str) -> Option<Label> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, label: Label) -> &str {
        &self.symbols[label as usize]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= 1
    }
}

impl Default for SymbolTable {
    fn default() -> Self {
        SymbolTable::new()
    }
}

impl PartialEq for SymbolTable {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}
impl Eq for SymbolTable {}

/// A transition: input label, output label, negative-log weight, target.
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: f64,
    pub next: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, weight: f64, next: StateId) -> Arc {
        Arc {
            ilabel,
            olabel,
            weight,
            next,
        }
    }
}

/// Weighted finite-state transducer.
#[derive(Debug, Clone)]
pub struct Wfst {
    start: StateId,
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<f64>>,
    isyms: Shared<SymbolTable>,
    osyms: Shared<SymbolTable>,
}

impl Wfst {
    /// Creates a machine with a single state 0, which is the start.
    pub fn new(isyms: Shared<SymbolTable>, osyms: Shared<SymbolTable>) -> Wfst {
        Wfst {
            start: 0,
            arcs: vec![Vec::new()],
            finals: vec![None],
            isyms,
            osyms,
        }
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        self.arcs.len() - 1
    }

    pub fn set_start(&mut self, s: StateId) {
        debug_assert!(s < self.arcs.len());
        self.start = s;
    }

    pub fn set_final(&mut self, s: StateId, weight: f64) {
        self.finals[s] = Some(weight);
    }

    pub fn add_arc(&mut self, s: StateId, arc: Arc) {
        debug_assert!(arc.next < self.arcs.len());
        self.arcs[s].push(arc);
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s]
    }

    pub fn final_weight(&self, s: StateId) -> Option<f64> {
        self.finals[s]
    }

    pub fn is_final(&self, s: StateId) -> bool {
        self.finals[s].is_some()
    }

    pub fn final_states(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.finals
            .iter()
            .enumerate()
            .filter_map(|(s, w)| w.map(|w| (s, w)))
    }

    pub fn isyms(&self) -> &Shared<SymbolTable> {
        &self.isyms
    }

    pub fn osyms(&self) -> &Shared<SymbolTable> {
        &self.osyms
    }

    /// Text form, one arc per line `src<TAB>dst<TAB>ilabel<TAB>olabel<TAB>weight`
    /// followed by `state<TAB>weight` lines for finals. State 0 is the start
    /// for machines produced by this crate.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        for (s, arcs) in self.arcs.iter().enumerate() {
            for a in arcs {
                writeln!(
                    out,
                    "{s}\t{}\t{}\t{}\t{}",
                    a.next,
                    self.isyms.symbol(a.ilabel),
                    self.osyms.symbol(a.olabel),
                    a.weight
                )?;
            }
        }
        for (s, w) in self.final_states() {
            writeln!(out, "{s}\t{w}")?;
        }
        Ok(())
    }

    pub fn to_text_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf)
            .expect("writing to a vec cannot fail");
        String::from_utf8(buf).expect("text form is UTF-8")
    }
}

/// Adds two probabilities given as negative logs: -ln(e^-a + e^-b).
pub(crate) fn nlog_add(a: f64, b: f64) -> f64 {
    if a.is_infinite() {
        return b;
    }
    if b.is_infinite() {
        return a;
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    lo - (-(hi - lo)).exp().ln_1p()
}

/// A set of accepted output-label sequences with their weights. Duplicate
/// sequences are merged by probability addition; `total` is the negative
/// log of the summed probability of all paths.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub paths: Vec<PathEntry>,
    pub total: f64,
    syms: Shared<SymbolTable>,
}

#[derive(Debug, Clone)]
pub struct PathEntry {
    pub labels: Vec<Label>,
    pub weight: f64,
}

impl PathEntry {
    pub fn probability(&self) -> f64 {
        (-self.weight).exp()
    }
}

impl PathSet {
    pub fn syms(&self) -> &Shared<SymbolTable> {
        &self.syms
    }

    /// Renders a path as its symbol strings.
    pub fn symbols(&self, index: usize) -> Vec<&str> {
        self.paths[index]
            .labels
            .iter()
            .map(|&l| self.syms.symbol(l))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Canonical order on label sequences: fewer labels first, then
/// lexicographic by symbol string.
pub(crate) fn label_seq_cmp(a: &[Label], b: &[Label], syms: &SymbolTable) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for (&x, &y) in a.iter().zip(b.iter()) {
            match syms.symbol(x).cmp(syms.symbol(y)) {
                Ordering::Equal => {}
                other => return other,
            }
        }
        Ordering::Equal
    })
}

/// Composes two transducers. The output symbol table of `a` must equal the
/// input symbol table of `b`. Epsilon transitions are handled with the
/// usual three-state filter so that each pair of compatible paths is
/// represented exactly once.
pub fn compose(a: &Wfst, b: &Wfst) -> Result<Wfst> {
    if a.osyms.as_ref() != b.isyms.as_ref() {
        return Err(Error::SymbolTableMismatch);
    }

    // Arcs of b grouped by input label for fast matching.
    let b_by_ilabel: Vec<HashMap<Label, Vec<usize>>> = (0..b.num_states())
        .map(|s| {
            let mut m: HashMap<Label, Vec<usize>> = HashMap::new();
            for (i, arc) in b.arcs(s).iter().enumerate() {
                m.entry(arc.ilabel).or_default().push(i);
            }
            m
        })
        .collect();

    type Key = (StateId, StateId, u8);
    fn intern(
        key: Key,
        ids: &mut HashMap<Key, StateId>,
        worklist: &mut Vec<Key>,
        out: &mut Wfst,
    ) -> StateId {
        if let Some(&id) = ids.get(&key) {
            return id;
        }
        let id = out.add_state();
        ids.insert(key, id);
        worklist.push(key);
        id
    }

    let mut out = Wfst::new(a.isyms.clone(), b.osyms.clone());
    // Filter states: 0 = free, 1 = only b may move alone, 2 = only a may
    // move alone. A matched (or paired-epsilon) move resets to 0.
    let mut ids: HashMap<Key, StateId> = HashMap::new();
    let mut worklist: Vec<Key> = Vec::new();
    ids.insert((a.start, b.start, 0), 0);
    worklist.push((a.start, b.start, 0));

    let mut head = 0usize;
    while head < worklist.len() {
        let (sa, sb, f) = worklist[head];
        head += 1;
        let id = ids[&(sa, sb, f)];
        if let (Some(fa), Some(fb)) = (a.final_weight(sa), b.final_weight(sb)) {
            out.set_final(id, fa + fb);
        }
        for arc_a in a.arcs(sa) {
            if arc_a.olabel != EPSILON {
                if let Some(matches) = b_by_ilabel[sb].get(&arc_a.olabel) {
                    for &bi in matches {
                        let arc_b = &b.arcs(sb)[bi];
                        let next = intern(
                            (arc_a.next, arc_b.next, 0),
                            &mut ids,
                            &mut worklist,
                            &mut out,
                        );
                        out.add_arc(
                            id,
                            Arc::new(
                                arc_a.ilabel,
                                arc_b.olabel,
                                arc_a.weight + arc_b.weight,
                                next,
                            ),
                        );
                    }
                }
            } else {
                if f == 0 {
                    // Both machines advance on a paired epsilon.
                    if let Some(matches) = b_by_ilabel[sb].get(&EPSILON) {
                        for &bi in matches {
                            let arc_b = &b.arcs(sb)[bi];
                            let next = intern(
                                (arc_a.next, arc_b.next, 0),
                                &mut ids,
                                &mut worklist,
                                &mut out,
                            );
                            out.add_arc(
                                id,
                                Arc::new(
                                    arc_a.ilabel,
                                    arc_b.olabel,
                                    arc_a.weight + arc_b.weight,
                                    next,
                                ),
                            );
                        }
                    }
                }
                if f == 0 || f == 2 {
                    let next = intern((arc_a.next, sb, 2), &mut ids, &mut worklist, &mut out);
                    out.add_arc(id, Arc::new(arc_a.ilabel, EPSILON, arc_a.weight, next));
                }
            }
        }
        if f == 0 || f == 1 {
            if let Some(matches) = b_by_ilabel[sb].get(&EPSILON) {
                for &bi in matches {
                    let arc_b = &b.arcs(sb)[bi];
                    let next = intern((sa, arc_b.next, 1), &mut ids, &mut worklist, &mut out);
                    out.add_arc(id, Arc::new(EPSILON, arc_b.olabel, arc_b.weight, next));
                }
            }
        }
    }
    Ok(out)
}

fn accessible(m: &Wfst) -> Vec<bool> {
    let mut seen = vec![false; m.num_states()];
    let mut stack = vec![m.start];
    seen[m.start] = true;
    while let Some(s) = stack.pop() {
        for a in m.arcs(s) {
            if !seen[a.next] {
                seen[a.next] = true;
                stack.push(a.next);
            }
        }
    }
    seen
}

fn coaccessible(m: &Wfst) -> Vec<bool> {
    let mut rev: Vec<Vec<StateId>> = vec![Vec::new(); m.num_states()];
    for s in 0..m.num_states() {
        for a in m.arcs(s) {
            rev[a.next].push(s);
        }
    }
    let mut seen = vec![false; m.num_states()];
    let mut stack: Vec<StateId> = m.final_states().map(|(s, _)| s).collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &p in &rev[s] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// Depth-first topological order of the states reachable from the start
/// within `keep`; errors if a cycle is reachable. The start comes first.
fn topo_order_filtered(m: &Wfst, keep: &[bool]) -> Result<Vec<StateId>> {
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let mut color = vec![WHITE; m.num_states()];
    let mut postorder = Vec::new();
    if !keep[m.start] {
        return Ok(Vec::new());
    }
    // Iterative DFS mirroring the recursive postorder.
    let mut stack: Vec<(StateId, usize)> = vec![(m.start, 0)];
    color[m.start] = GRAY;
    while let Some(&mut (s, ref mut idx)) = stack.last_mut() {
        let arcs = m.arcs(s);
        let mut advanced = false;
        while *idx < arcs.len() {
            let next = arcs[*idx].next;
            *idx += 1;
            if !keep[next] {
                continue;
            }
            match color[next] {
                WHITE => {
                    color[next] = GRAY;
                    stack.push((next, 0));
                    advanced = true;
                    break;
                }
                GRAY => return Err(Error::CyclicMachine),
                _ => {}
            }
        }
        if !advanced {
            color[s] = BLACK;
            postorder.push(s);
            stack.pop();
        }
    }
    postorder.reverse();
    Ok(postorder)
}

fn topo_order(m: &Wfst) -> Result<Vec<StateId>> {
    let keep = vec![true; m.num_states()];
    topo_order_filtered(m, &keep)
}

/// Removes states that are unreachable from the start or cannot reach a
/// final state, and renumbers the rest in topological order (start first).
/// The accepted path multiset is unchanged. Also returns the old-to-new
/// state mapping for callers that carry per-state annotations.
pub fn connect_topsort_map(m: &Wfst) -> Result<(Wfst, Vec<Option<StateId>>)> {
    let acc = accessible(m);
    let coacc = coaccessible(m);
    let keep: Vec<bool> = acc.iter().zip(&coacc).map(|(&a, &c)| a && c).collect();

    let mut mapping = vec![None; m.num_states()];
    let mut out = Wfst::new(m.isyms.clone(), m.osyms.clone());
    if !keep[m.start] {
        // No accepting path at all: a lone start state with no finals.
        return Ok((out, mapping));
    }
    let order = topo_order_filtered(m, &keep)?;
    debug_assert_eq!(order.first(), Some(&m.start));
    for (new, &old) in order.iter().enumerate() {
        let id = if new == 0 { 0 } else { out.add_state() };
        mapping[old] = Some(id);
    }
    for &old in &order {
        let new = mapping[old].unwrap();
        if let Some(w) = m.final_weight(old) {
            out.set_final(new, w);
        }
        for a in m.arcs(old) {
            if let Some(next) = mapping[a.next] {
                out.add_arc(new, Arc::new(a.ilabel, a.olabel, a.weight, next));
            }
        }
    }
    Ok((out, mapping))
}

pub fn connect_topsort(m: &Wfst) -> Result<Wfst> {
    connect_topsort_map(m).map(|(w, _)| w)
}

/// Replaces every arc's input label with its output label, turning the
/// machine into an acceptor over its output alphabet.
pub fn project_output(m: &Wfst) -> Wfst {
    let mut out = m.clone();
    out.isyms = m.osyms.clone();
    for arcs in &mut out.arcs {
        for a in arcs {
            a.ilabel = a.olabel;
        }
    }
    out
}

/// Enumerates every accepting path of an acyclic machine. Epsilon output
/// labels are dropped from the sequences; paths with identical sequences
/// are merged by probability addition. Paths come back in the canonical
/// sequence order.
pub fn enumerate_paths(m: &Wfst) -> Result<PathSet> {
    topo_order(m)?; // acyclicity check
    let mut merged: HashMap<Vec<Label>, f64> = HashMap::new();
    // Depth-first traversal carrying the label prefix and running weight.
    let mut labels: Vec<Label> = Vec::new();
    let mut marks: Vec<usize> = Vec::new();
    let mut stack: Vec<(StateId, usize, f64)> = vec![(m.start, 0, 0.0)];
    if let Some(wf) = m.final_weight(m.start) {
        merged.insert(Vec::new(), wf);
    }
    while let Some(&mut (s, ref mut idx, w)) = stack.last_mut() {
        let arcs = m.arcs(s);
        if *idx >= arcs.len() {
            stack.pop();
            if let Some(mark) = marks.pop() {
                labels.truncate(mark);
            }
            continue;
        }
        let a = &arcs[*idx];
        *idx += 1;
        marks.push(labels.len());
        if a.olabel != EPSILON {
            labels.push(a.olabel);
        }
        let w2 = w + a.weight;
        if let Some(wf) = m.final_weight(a.next) {
            let entry = merged.entry(labels.clone()).or_insert(f64::INFINITY);
            *entry = nlog_add(*entry, w2 + wf);
        }
        stack.push((a.next, 0, w2));
    }
    let mut paths: Vec<PathEntry> = merged
        .into_iter()
        .map(|(labels, weight)| PathEntry { labels, weight })
        .collect();
    paths.sort_by(|x, y| label_seq_cmp(&x.labels, &y.labels, &m.osyms));
    let mut total = f64::INFINITY;
    for p in &paths {
        total = nlog_add(total, p.weight);
    }
    Ok(PathSet {
        paths,
        total,
        syms: m.osyms.clone(),
    })
}

/// Forward-backward over an acyclic machine: returns, for every arc, the
/// probability that an accepting path passes through it, plus the negative
/// log of the total path probability. Arc posteriors are indexed as
/// `posteriors[state][arc_index]`.
pub fn forward_backward(m: &Wfst) -> Result<(Vec<Vec<f64>>, f64)> {
    let order = topo_order(m)?;
    let n = m.num_states();
    let mut alpha = vec![f64::INFINITY; n];
    alpha[m.start] = 0.0;
    for &s in &order {
        if alpha[s].is_infinite() {
            continue;
        }
        for a in m.arcs(s) {
            alpha[a.next] = nlog_add(alpha[a.next], alpha[s] + a.weight);
        }
    }
    let mut beta = vec![f64::INFINITY; n];
    for &s in order.iter().rev() {
        let mut acc = m.final_weight(s).unwrap_or(f64::INFINITY);
        for a in m.arcs(s) {
            acc = nlog_add(acc, a.weight + beta[a.next]);
        }
        beta[s] = acc;
    }
    let total = beta[m.start];
    let mut posteriors = vec![Vec::new(); n];
    for s in 0..n {
        let row: Vec<f64> = m
            .arcs(s)
            .iter()
            .map(|a| {
                let joint = alpha[s] + a.weight + beta[a.next];
                if total.is_finite() && joint.is_finite() {
                    (-(joint - total)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        posteriors[s] = row;
    }
    Ok((posteriors, total))
}

/// Finds the maximum-probability accepting path of an acyclic machine.
/// Exact weight ties are broken by the canonical order of the (epsilon-free)
/// output label sequences. Errors when no accepting path exists.
pub fn shortest_path(m: &Wfst) -> Result<PathSet> {
    let order = topo_order(m)?;
    let mut best: Vec<Option<(f64, Vec<Label>)>> = vec![None; m.num_states()];
    best[m.start] = Some((0.0, Vec::new()));
    for &s in &order {
        let Some((w0, labels)) = best[s].clone() else {
            continue;
        };
        for a in m.arcs(s) {
            let w = w0 + a.weight;
            let mut cand = labels.clone();
            if a.olabel != EPSILON {
                cand.push(a.olabel);
            }
            let replace = match &best[a.next] {
                None => true,
                Some((bw, bl)) => {
                    w < *bw || (w == *bw && label_seq_cmp(&cand, bl, &m.osyms).is_lt())
                }
            };
            if replace {
                best[a.next] = Some((w, cand));
            }
        }
    }
    let mut winner: Option<(f64, Vec<Label>)> = None;
    for (s, wf) in m.final_states() {
        if let Some((w, labels)) = &best[s] {
            let cand = (w + wf, labels.clone());
            let replace = match &winner {
                None => true,
                Some((bw, bl)) => {
                    cand.0 < *bw || (cand.0 == *bw && label_seq_cmp(&cand.1, bl, &m.osyms).is_lt())
                }
            };
            if replace {
                winner = Some(cand);
            }
        }
    }
    let (weight, labels) = winner.ok_or(Error::NoAcceptingPath)?;
    Ok(PathSet {
        paths: vec![PathEntry { labels, weight }],
        total: weight,
        syms: m.osyms.clone(),
    })
}
