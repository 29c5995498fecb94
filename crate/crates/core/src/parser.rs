//! Scannerless Earley parsing into derivation trees.
//!
//! The recognizer works directly on the bytes of the input: terminals are
//! literal strings matched byte-exactly, and with `%whitespace skip` any run
//! of ASCII whitespace may precede a terminal match. Nullable nonterminals
//! are advanced over at prediction time, so epsilon rules and left recursion
//! need no special casing.
//!
//! After recognition one canonical tree is read back from the chart. At every
//! node the smallest alternative index that completes over the span wins, and
//! among the ways to split the span over that alternative's symbols the
//! lexicographically leftmost split is taken. A derivation never revisits a
//! node (same nonterminal over the same span) on its own path, which keeps
//! cyclic grammars finite.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::grammar::{Grammar, Symbol};

const STACK_RED_ZONE: usize = 128 * 1024;
const STACK_GROW: usize = 4 * 1024 * 1024;

/// A derivation tree. Each nonterminal node records which alternative of its
/// rule was expanded; its children follow that alternative's symbols.
#[derive(Debug)]
pub enum DerivationTree {
    Terminal {
        literal: String,
    },
    Nonterminal {
        symbol: String,
        alternative: usize,
        children: Vec<DerivationTree>,
    },
}

impl Serialize for DerivationTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            DerivationTree::Terminal { literal } => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("t", literal)?;
                m.end()
            }
            DerivationTree::Nonterminal {
                symbol,
                alternative,
                children,
            } => {
                let mut m = s.serialize_map(Some(3))?;
                m.serialize_entry("n", symbol)?;
                m.serialize_entry("alt", alternative)?;
                m.serialize_entry("c", children)?;
                m.end()
            }
        }
    }
}

// Trees can be thousands of levels deep (long left-recursive inputs), so the
// structural traits avoid unbounded recursion.

impl Drop for DerivationTree {
    fn drop(&mut self) {
        if let DerivationTree::Nonterminal { children, .. } = self {
            let mut stack = std::mem::take(children);
            while let Some(mut node) = stack.pop() {
                if let DerivationTree::Nonterminal { children, .. } = &mut node {
                    stack.append(children);
                }
            }
        }
    }
}

impl PartialEq for DerivationTree {
    fn eq(&self, other: &Self) -> bool {
        let mut stack = vec![(self, other)];
        while let Some(pair) = stack.pop() {
            match pair {
                (
                    DerivationTree::Terminal { literal: a },
                    DerivationTree::Terminal { literal: b },
                ) => {
                    if a != b {
                        return false;
                    }
                }
                (
                    DerivationTree::Nonterminal {
                        symbol: s1,
                        alternative: a1,
                        children: c1,
                    },
                    DerivationTree::Nonterminal {
                        symbol: s2,
                        alternative: a2,
                        children: c2,
                    },
                ) => {
                    if s1 != s2 || a1 != a2 || c1.len() != c2.len() {
                        return false;
                    }
                    stack.extend(c1.iter().zip(c2));
                }
                _ => return false,
            }
        }
        true
    }
}

impl Eq for DerivationTree {}

impl Clone for DerivationTree {
    fn clone(&self) -> Self {
        stacker::maybe_grow(STACK_RED_ZONE, STACK_GROW, || match self {
            DerivationTree::Terminal { literal } => DerivationTree::terminal(literal.clone()),
            DerivationTree::Nonterminal {
                symbol,
                alternative,
                children,
            } => DerivationTree::node(symbol.clone(), *alternative, children.clone()),
        })
    }
}

impl DerivationTree {
    pub fn terminal(literal: impl Into<String>) -> Self {
        DerivationTree::Terminal {
            literal: literal.into(),
        }
    }

    pub fn node(
        symbol: impl Into<String>,
        alternative: usize,
        children: Vec<DerivationTree>,
    ) -> Self {
        DerivationTree::Nonterminal {
            symbol: symbol.into(),
            alternative,
            children,
        }
    }

    /// Terminal literals in left-to-right order.
    pub fn frontier(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t {
                DerivationTree::Terminal { literal } => out.push(literal.as_str()),
                DerivationTree::Nonterminal { children, .. } => stack.extend(children.iter().rev()),
            }
        }
        out
    }

    /// Number of nonterminal nodes, i.e. performed expansions.
    pub fn expansions(&self) -> usize {
        self.nodes()
            .filter(|t| matches!(t, DerivationTree::Nonterminal { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self, 1)];
        while let Some((t, d)) = stack.pop() {
            best = best.max(d);
            if let DerivationTree::Nonterminal { children, .. } = t {
                stack.extend(children.iter().map(|c| (c, d + 1)));
            }
        }
        best
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> impl Iterator<Item = &DerivationTree> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let t = stack.pop()?;
            if let DerivationTree::Nonterminal { children, .. } = t {
                stack.extend(children.iter().rev());
            }
            Some(t)
        })
    }
}

/// Readable indented rendering, one node per line.
impl fmt::Display for DerivationTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut stack = vec![(self, 0usize)];
        while let Some((t, indent)) = stack.pop() {
            match t {
                DerivationTree::Terminal { literal } => {
                    writeln!(f, "{:indent$}{literal:?}", "")?;
                }
                DerivationTree::Nonterminal {
                    symbol,
                    alternative,
                    children,
                } => {
                    writeln!(f, "{:indent$}{symbol} [{alternative}]", "")?;
                    stack.extend(children.iter().rev().map(|c| (c, indent + 2)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("no rule for nonterminal `{0}`")]
    UnknownNonterminal(String),
    #[error("`{symbol}` has no alternative {alternative}")]
    AlternativeOutOfRange { symbol: String, alternative: usize },
    #[error("children of `{symbol}` do not match alternative {alternative}")]
    ChildMismatch { symbol: String, alternative: usize },
    #[error("root is `{found}`, expected start symbol `{expected}`")]
    WrongRoot { expected: String, found: String },
    #[error("malformed tree JSON: {0}")]
    Json(String),
}

/// Checks that every nonterminal node follows its chosen alternative.
pub fn check_tree(tree: &DerivationTree, g: &Grammar) -> Result<(), TreeError> {
    for node in tree.nodes() {
        let DerivationTree::Nonterminal {
            symbol,
            alternative,
            children,
        } = node
        else {
            continue;
        };
        let rule = g
            .rule(symbol)
            .ok_or_else(|| TreeError::UnknownNonterminal(symbol.clone()))?;
        let alt = rule.alternatives.get(*alternative).ok_or_else(|| {
            TreeError::AlternativeOutOfRange {
                symbol: symbol.clone(),
                alternative: *alternative,
            }
        })?;
        let matches = alt.symbols.len() == children.len()
            && alt.symbols.iter().zip(children).all(|(s, c)| match (s, c) {
                (Symbol::Terminal(a), DerivationTree::Terminal { literal }) => a == literal,
                (Symbol::Nonterminal(a), DerivationTree::Nonterminal { symbol, .. }) => a == symbol,
                _ => false,
            });
        if !matches {
            return Err(TreeError::ChildMismatch {
                symbol: symbol.clone(),
                alternative: *alternative,
            });
        }
    }
    Ok(())
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Renders a tree as program input. With whitespace skipping enabled a single
/// space separates two terminals whose touching characters are both word
/// characters, so that re-parsing cannot fuse them.
pub fn serialize_tree(tree: &DerivationTree, g: &Grammar) -> Result<String, TreeError> {
    check_tree(tree, g)?;
    let mut out = String::new();
    for lit in tree.frontier() {
        if g.skip_whitespace() {
            if let (Some(&prev), Some(&next)) = (out.as_bytes().last(), lit.as_bytes().first()) {
                if is_word_byte(prev) && is_word_byte(next) {
                    out.push(' ');
                }
            }
        }
        out.push_str(lit);
    }
    Ok(out)
}

fn write_json(tree: &DerivationTree, out: &mut String) {
    stacker::maybe_grow(STACK_RED_ZONE, STACK_GROW, || match tree {
        DerivationTree::Terminal { literal } => {
            out.push_str("{\"t\":");
            out.push_str(&serde_json::to_string(literal).expect("strings serialize"));
            out.push('}');
        }
        DerivationTree::Nonterminal {
            symbol,
            alternative,
            children,
        } => {
            out.push_str("{\"n\":");
            out.push_str(&serde_json::to_string(symbol).expect("strings serialize"));
            out.push_str(&format!(",\"alt\":{alternative},\"c\":["));
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json(child, out);
            }
            out.push_str("]}");
        }
    })
}

/// Compact JSON: terminals are `{"t": ..}`, nonterminals
/// `{"n": .., "alt": .., "c": [..]}`.
pub fn tree_to_json(tree: &DerivationTree) -> String {
    let mut out = String::new();
    write_json(tree, &mut out);
    out
}

pub fn json_to_tree(json: &str) -> Result<DerivationTree, TreeError> {
    // serde recursion is not stack-checked, so give it a generous segment.
    stacker::grow(256 * 1024 * 1024, || {
        let mut de = serde_json::Deserializer::from_str(json);
        de.disable_recursion_limit();
        let value = serde::Deserialize::deserialize(&mut de)
            .map_err(|e: serde_json::Error| TreeError::Json(e.to_string()))?;
        de.end().map_err(|e| TreeError::Json(e.to_string()))?;
        value_to_tree(value)
    })
}

fn schema_error(what: &str) -> TreeError {
    TreeError::Json(format!("schema violation: {what}"))
}

fn value_to_tree(value: Value) -> Result<DerivationTree, TreeError> {
    stacker::maybe_grow(STACK_RED_ZONE, STACK_GROW, || {
        let Value::Object(mut map) = value else {
            return Err(schema_error("expected an object"));
        };
        if map.len() == 1 && map.contains_key("t") {
            return match map.remove("t") {
                Some(Value::String(literal)) => Ok(DerivationTree::terminal(literal)),
                _ => Err(schema_error("`t` must be a string")),
            };
        }
        if map.len() != 3 {
            return Err(schema_error("expected keys `t` or `n`, `alt`, `c`"));
        }
        let symbol = match map.remove("n") {
            Some(Value::String(s)) => s,
            _ => return Err(schema_error("`n` must be a string")),
        };
        let alternative = map
            .remove("alt")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| schema_error("`alt` must be a non-negative integer"))?;
        let children = match map.remove("c") {
            Some(Value::Array(items)) => items
                .into_iter()
                .map(value_to_tree)
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err(schema_error("`c` must be an array")),
        };
        Ok(DerivationTree::node(symbol, alternative as usize, children))
    })
}

// ---------------------------------------------------------------------------
// Recognizer
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{line}:{column}: unexpected {found}; expected one of {}", format_expected(.expected))]
    Syntax {
        /// Byte offset of the furthest failure.
        position: usize,
        line: usize,
        column: usize,
        found: String,
        expected: Vec<String>,
    },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. } => *position,
        }
    }
}

fn format_expected(expected: &[String]) -> String {
    if expected.is_empty() {
        return "end of input".into();
    }
    expected
        .iter()
        .map(|e| format!("{e:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub tree: DerivationTree,
    /// True when the input has more than one derivation along the canonical
    /// tree (some node completes with several alternatives or splits).
    pub ambiguous: bool,
}

#[derive(Clone, Copy)]
enum Sym {
    T(u32),
    N(u32),
}

struct CompiledAlt {
    nt: u32,
    index: usize,
    symbols: Vec<Sym>,
}

struct Compiled<'g> {
    grammar: &'g Grammar,
    alts: Vec<CompiledAlt>,
    alts_of: Vec<Vec<u32>>,
    terminals: Vec<&'g str>,
    nullable: Vec<bool>,
}

impl<'g> Compiled<'g> {
    fn new(grammar: &'g Grammar) -> Self {
        let mut terminal_ids: HashMap<&'g str, u32> = HashMap::new();
        let mut terminals = Vec::new();
        let mut alts = Vec::new();
        let mut alts_of = vec![Vec::new(); grammar.rules().len()];
        for (nt, rule) in grammar.rules().iter().enumerate() {
            for (index, alt) in rule.alternatives.iter().enumerate() {
                let symbols = alt
                    .symbols
                    .iter()
                    .map(|s| match s {
                        Symbol::Nonterminal(name) => {
                            Sym::N(grammar.rule_index(name).unwrap() as u32)
                        }
                        Symbol::Terminal(lit) => {
                            Sym::T(*terminal_ids.entry(lit).or_insert_with(|| {
                                terminals.push(lit.as_str());
                                (terminals.len() - 1) as u32
                            }))
                        }
                    })
                    .collect();
                alts_of[nt].push(alts.len() as u32);
                alts.push(CompiledAlt {
                    nt: nt as u32,
                    index,
                    symbols,
                });
            }
        }
        let mut nullable = vec![false; grammar.rules().len()];
        loop {
            let mut changed = false;
            for alt in &alts {
                if !nullable[alt.nt as usize]
                    && alt
                        .symbols
                        .iter()
                        .all(|s| matches!(s, Sym::N(n) if nullable[*n as usize]))
                {
                    nullable[alt.nt as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Compiled {
            grammar,
            alts,
            alts_of,
            terminals,
            nullable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    alt: u32,
    dot: u32,
    origin: u32,
}

#[derive(Default)]
struct EarleySet {
    items: Vec<Item>,
    seen: HashSet<Item>,
    waiting: HashMap<u32, Vec<Item>>,
    /// (nonterminal, origin) pairs completed at this position.
    completed_nt: HashSet<(u32, u32)>,
    /// (alternative, origin) pairs completed at this position.
    completed_alt: HashSet<(u32, u32)>,
    /// Origins of completed nonterminals, keyed by nonterminal.
    origins: HashMap<u32, Vec<u32>>,
}

impl EarleySet {
    fn add(&mut self, item: Item) -> bool {
        if self.seen.insert(item) {
            self.items.push(item);
            true
        } else {
            false
        }
    }
}

struct Chart<'a, 'g> {
    compiled: &'a Compiled<'g>,
    input: &'a [u8],
    skip_ws: bool,
    sets: Vec<EarleySet>,
}

fn is_layout(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n')
}

impl Chart<'_, '_> {
    fn skip(&self, mut pos: usize) -> usize {
        if self.skip_ws {
            while pos < self.input.len() && is_layout(self.input[pos]) {
                pos += 1;
            }
        }
        pos
    }

    /// End position of terminal `t` scanned at `pos`, if it matches.
    fn scan(&self, t: u32, pos: usize) -> Option<usize> {
        let start = self.skip(pos);
        let lit = self.compiled.terminals[t as usize].as_bytes();
        self.input[start..]
            .starts_with(lit)
            .then_some(start + lit.len())
    }

    fn advance(item: Item) -> Item {
        Item {
            dot: item.dot + 1,
            ..item
        }
    }

    fn has_item(&self, pos: usize, item: Item) -> bool {
        self.sets[pos].seen.contains(&item)
    }

    fn completed(&self, nt: u32, from: usize, to: usize) -> bool {
        self.sets[to].completed_nt.contains(&(nt, from as u32))
    }
}

/// Furthest failed terminal match, for diagnostics.
struct Failure {
    position: usize,
    expected: BTreeSet<u32>,
}

impl Failure {
    fn record(&mut self, position: usize, t: u32) {
        if position > self.position {
            self.position = position;
            self.expected.clear();
        }
        if position == self.position {
            self.expected.insert(t);
        }
    }
}

fn recognize<'a, 'g>(compiled: &'a Compiled<'g>, input: &'a str) -> (Chart<'a, 'g>, Failure) {
    let bytes = input.as_bytes();
    let mut chart = Chart {
        compiled,
        input: bytes,
        skip_ws: compiled.grammar.skip_whitespace(),
        sets: (0..=bytes.len()).map(|_| EarleySet::default()).collect(),
    };
    let mut failure = Failure {
        position: 0,
        expected: BTreeSet::new(),
    };
    let start = compiled
        .grammar
        .rule_index(compiled.grammar.start())
        .unwrap();
    for &alt in &compiled.alts_of[start] {
        chart.sets[0].add(Item {
            alt,
            dot: 0,
            origin: 0,
        });
    }

    for pos in 0..=bytes.len() {
        let mut i = 0;
        while i < chart.sets[pos].items.len() {
            let item = chart.sets[pos].items[i];
            i += 1;
            let alt = &compiled.alts[item.alt as usize];
            match alt.symbols.get(item.dot as usize) {
                None => {
                    let set = &mut chart.sets[pos];
                    set.completed_alt.insert((item.alt, item.origin));
                    if set.completed_nt.insert((alt.nt, item.origin)) {
                        set.origins.entry(alt.nt).or_default().push(item.origin);
                    }
                    let origin = item.origin as usize;
                    if origin == pos {
                        // Items waiting here on a nullable symbol were
                        // advanced when they were added.
                        continue;
                    }
                    let parents = chart.sets[origin]
                        .waiting
                        .get(&alt.nt)
                        .cloned()
                        .unwrap_or_default();
                    for parent in parents {
                        chart.sets[pos].add(Chart::advance(parent));
                    }
                }
                Some(&Sym::N(nt)) => {
                    let set = &mut chart.sets[pos];
                    set.waiting.entry(nt).or_default().push(item);
                    for &a in &compiled.alts_of[nt as usize] {
                        set.add(Item {
                            alt: a,
                            dot: 0,
                            origin: pos as u32,
                        });
                    }
                    if compiled.nullable[nt as usize] {
                        set.add(Chart::advance(item));
                    }
                }
                Some(&Sym::T(t)) => match chart.scan(t, pos) {
                    Some(end) => {
                        chart.sets[end].add(Chart::advance(item));
                    }
                    None => failure.record(chart.skip(pos), t),
                },
            }
        }
    }
    (chart, failure)
}

fn line_column(input: &str, position: usize) -> (usize, usize) {
    let before = &input[..position.min(input.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses `input` and returns the canonical derivation tree.
pub fn parse_input(g: &Grammar, input: &str) -> Result<ParseOutcome, ParseError> {
    let compiled = Compiled::new(g);
    let (chart, failure) = recognize(&compiled, input);
    let start = g.rule_index(g.start()).unwrap() as u32;

    let end = (0..=input.len()).rev().find(|&k| {
        chart.completed(start, 0, k)
            && chart.skip(k) == input.len()
            && (chart.skip_ws || k == input.len())
    });

    let Some(end) = end else {
        let furthest_set = (0..=input.len())
            .rev()
            .find(|&k| !chart.sets[k].items.is_empty())
            .unwrap_or(0);
        let position = if failure.expected.is_empty() {
            chart.skip(furthest_set)
        } else {
            failure.position.max(chart.skip(furthest_set))
        };
        let expected = if position == failure.position {
            failure
                .expected
                .iter()
                .map(|&t| compiled.terminals[t as usize].to_owned())
                .collect()
        } else {
            Vec::new()
        };
        let found = match input[position..].chars().next() {
            Some(c) => format!("{c:?}"),
            None => "end of input".into(),
        };
        let (line, column) = line_column(input, position);
        return Err(ParseError::Syntax {
            position,
            line,
            column,
            found,
            expected,
        });
    };

    let mut extractor = Extractor {
        chart: &chart,
        path: HashSet::new(),
        ambiguous: false,
    };
    let tree = extractor
        .build(start, 0, end)
        .expect("a completed start item always has an acyclic derivation");
    Ok(ParseOutcome {
        tree,
        ambiguous: extractor.ambiguous,
    })
}

struct Extractor<'c, 'a, 'g> {
    chart: &'c Chart<'a, 'g>,
    path: HashSet<(u32, usize, usize)>,
    ambiguous: bool,
}

impl Extractor<'_, '_, '_> {
    fn build(&mut self, nt: u32, from: usize, to: usize) -> Option<DerivationTree> {
        stacker::maybe_grow(STACK_RED_ZONE, STACK_GROW, || {
            self.build_inner(nt, from, to)
        })
    }

    fn build_inner(&mut self, nt: u32, from: usize, to: usize) -> Option<DerivationTree> {
        let chart = self.chart;
        let compiled = chart.compiled;
        let candidates: Vec<u32> = compiled.alts_of[nt as usize]
            .iter()
            .copied()
            .filter(|&a| chart.sets[to].completed_alt.contains(&(a, from as u32)))
            .collect();
        if candidates.len() > 1 {
            self.ambiguous = true;
        }
        self.path.insert((nt, from, to));
        let mut result = None;
        for alt in candidates {
            let layers = self.suffix_layers(alt, from, to);
            if self.count_splits(alt, &layers, 0, from, 2) > 1 {
                self.ambiguous = true;
            }
            if let Some(children) = self.children(alt, &layers, 0, from) {
                let info = &compiled.alts[alt as usize];
                result = Some(DerivationTree::node(
                    &compiled.grammar.rules()[nt as usize].lhs,
                    info.index,
                    children,
                ));
                break;
            }
        }
        self.path.remove(&(nt, from, to));
        result
    }

    /// `layers[k]` holds the positions `q` from which symbols `k..` of `alt`
    /// derive exactly `[q, to)`, restricted to positions the prefix reaches.
    fn suffix_layers(&self, alt: u32, from: usize, to: usize) -> Vec<Vec<usize>> {
        let chart = self.chart;
        let symbols = &chart.compiled.alts[alt as usize].symbols;
        let m = symbols.len();
        let mut layers = vec![Vec::new(); m + 1];
        layers[m].push(to);
        for k in (0..m).rev() {
            let item = Item {
                alt,
                dot: k as u32,
                origin: from as u32,
            };
            let mut found = BTreeSet::new();
            for &r in &layers[k + 1] {
                match symbols[k] {
                    Sym::N(nt) => {
                        if let Some(origins) = chart.sets[r].origins.get(&nt) {
                            for &q in origins {
                                let q = q as usize;
                                if q >= from && chart.has_item(q, item) {
                                    found.insert(q);
                                }
                            }
                        }
                    }
                    Sym::T(t) => {
                        let len = chart.compiled.terminals[t as usize].len();
                        if r < len + from {
                            continue;
                        }
                        let mut q = r - len;
                        loop {
                            if chart.has_item(q, item) && chart.scan(t, q) == Some(r) {
                                found.insert(q);
                            }
                            if !chart.skip_ws || q == from || !is_layout(chart.input[q - 1]) {
                                break;
                            }
                            q -= 1;
                        }
                    }
                }
            }
            layers[k] = found.into_iter().collect();
        }
        layers
    }

    fn derives(&self, sym: Sym, p: usize, q: usize) -> bool {
        match sym {
            Sym::T(t) => self.chart.scan(t, p) == Some(q),
            Sym::N(nt) => self.chart.completed(nt, p, q),
        }
    }

    fn count_splits(
        &self,
        alt: u32,
        layers: &[Vec<usize>],
        k: usize,
        p: usize,
        cap: usize,
    ) -> usize {
        let symbols = &self.chart.compiled.alts[alt as usize].symbols;
        if k == symbols.len() {
            return 1;
        }
        let mut total = 0;
        for &q in &layers[k + 1] {
            if q >= p && self.derives(symbols[k], p, q) {
                total += self.count_splits(alt, layers, k + 1, q, cap - total);
                if total >= cap {
                    return cap;
                }
            }
        }
        total
    }

    fn children(
        &mut self,
        alt: u32,
        layers: &[Vec<usize>],
        k: usize,
        p: usize,
    ) -> Option<Vec<DerivationTree>> {
        let compiled = self.chart.compiled;
        let symbols = &compiled.alts[alt as usize].symbols;
        if k == symbols.len() {
            return Some(Vec::with_capacity(symbols.len()));
        }
        for &q in &layers[k + 1] {
            if q < p || !self.derives(symbols[k], p, q) {
                continue;
            }
            let child = match symbols[k] {
                Sym::T(t) => DerivationTree::terminal(compiled.terminals[t as usize]),
                Sym::N(nt) => {
                    if self.path.contains(&(nt, p, q)) {
                        continue;
                    }
                    match self.build(nt, p, q) {
                        Some(tree) => tree,
                        None => continue,
                    }
                }
            };
            if let Some(mut rest) = self.children(alt, layers, k + 1, q) {
                rest.push(child);
                if k == 0 {
                    rest.reverse();
                }
                return Some(rest);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ARITHMETIC, JSON_LIKE};
    use crate::grammar::parse_grammar;

    fn n(symbol: &str, alt: usize, children: Vec<DerivationTree>) -> DerivationTree {
        DerivationTree::node(symbol, alt, children)
    }

    fn t(lit: &str) -> DerivationTree {
        DerivationTree::terminal(lit)
    }

    fn digit(d: usize) -> DerivationTree {
        n(
            "Factor",
            0,
            vec![n("Int", 1, vec![n("Digit", d, vec![t(&d.to_string())])])],
        )
    }

    /// The derivation of `1 + (2 * 3)`, written out by hand.
    pub(crate) fn sample_expression_tree() -> DerivationTree {
        n(
            "Expr",
            1,
            vec![
                n("Expr", 0, vec![n("Term", 0, vec![digit(1)])]),
                t("+"),
                n(
                    "Term",
                    0,
                    vec![n(
                        "Factor",
                        3,
                        vec![
                            t("("),
                            n(
                                "Expr",
                                0,
                                vec![n(
                                    "Term",
                                    1,
                                    vec![n("Term", 0, vec![digit(2)]), t("*"), digit(3)],
                                )],
                            ),
                            t(")"),
                        ],
                    )],
                ),
            ],
        )
    }

    #[test]
    fn parses_the_worked_example() {
        let g = parse_grammar(ARITHMETIC).unwrap();
        let out = parse_input(&g, "1 + (2 * 3)").unwrap();
        assert_eq!(out.tree, sample_expression_tree());
        assert!(!out.ambiguous);
        assert_eq!(out.tree.expansions(), 17);
    }

    #[test]
    fn single_terminal() {
        let g = parse_grammar(r#"S -> "a" ;"#).unwrap();
        let out = parse_input(&g, "a").unwrap();
        assert_eq!(out.tree, n("S", 0, vec![t("a")]));
    }

    #[test]
    fn failure_reports_furthest_position() {
        let g = parse_grammar(ARITHMETIC).unwrap();
        let err = parse_input(&g, ")(").unwrap_err();
        assert_eq!(err.position(), 0);
        let ParseError::Syntax { expected, .. } = &err;
        assert!(expected.contains(&"(".to_string()));
        assert!(!expected.contains(&")".to_string()));

        let err = parse_input(&g, "1 + ").unwrap_err();
        assert_eq!(err.position(), 4);
        let err = parse_input(&g, "12 3)").unwrap_err();
        assert_eq!(err.position(), 4);
        let ParseError::Syntax {
            line,
            column,
            found,
            ..
        } = err;
        assert_eq!((line, column), (1, 5));
        assert_eq!(found, "')'");
    }

    #[test]
    fn whitespace_is_significant_without_skip() {
        let g = parse_grammar(r#"S -> "a" "b" ;"#).unwrap();
        assert!(parse_input(&g, "ab").is_ok());
        assert!(parse_input(&g, "a b").is_err());
        assert!(parse_input(&g, "ab ").is_err());
    }

    #[test]
    fn leading_and_trailing_layout_is_skipped() {
        let g = parse_grammar(ARITHMETIC).unwrap();
        let out = parse_input(&g, "\n  7\t*\r\n8  \n").unwrap();
        assert_eq!(out.tree.frontier(), vec!["7", "*", "8"]);
    }

    #[test]
    fn epsilon_rules() {
        let g = parse_grammar(JSON_LIKE).unwrap();
        let out = parse_input(&g, r#"{"ab": [1, -20, [], {}], "": null}"#).unwrap();
        assert!(!out.ambiguous);
        let text = serialize_tree(&out.tree, &g).unwrap();
        assert_eq!(text, r#"{"a b":[1,-2 0,[],{}],"":null}"#);
        let again = parse_input(&g, &text).unwrap();
        assert_eq!(again.tree, out.tree);

        let g = parse_grammar(r#"S -> A A "x" A ; A -> | "a" ;"#).unwrap();
        let out = parse_input(&g, "x").unwrap();
        assert_eq!(
            out.tree,
            n(
                "S",
                0,
                vec![
                    n("A", 0, vec![]),
                    n("A", 0, vec![]),
                    t("x"),
                    n("A", 0, vec![])
                ]
            )
        );
        assert!(parse_input(&g, "").is_err());
        let g = parse_grammar(r#"S -> | "a" S ;"#).unwrap();
        assert_eq!(parse_input(&g, "").unwrap().tree, n("S", 0, vec![]));
    }

    #[test]
    fn ambiguity_is_canonicalized_and_flagged() {
        let g = parse_grammar(r#"E -> E "+" E | "1" ;"#).unwrap();
        let first = parse_input(&g, "1+1+1").unwrap();
        assert!(first.ambiguous);
        let one = || n("E", 1, vec![t("1")]);
        // Leftmost split: the first child E covers just "1".
        assert_eq!(
            first.tree,
            n(
                "E",
                0,
                vec![one(), t("+"), n("E", 0, vec![one(), t("+"), one()])]
            )
        );
        for _ in 0..3 {
            assert_eq!(parse_input(&g, "1+1+1").unwrap(), first);
        }

        let g = parse_grammar(r#"S -> A | B ; A -> "x" ; B -> "x" ;"#).unwrap();
        let out = parse_input(&g, "x").unwrap();
        assert!(out.ambiguous);
        assert_eq!(out.tree, n("S", 0, vec![n("A", 0, vec![t("x")])]));
    }

    #[test]
    fn cyclic_grammar_terminates() {
        let g = parse_grammar(r#"A -> A | B | "a" ; B -> A ;"#).unwrap();
        let out = parse_input(&g, "a").unwrap();
        assert!(out.ambiguous);
        assert_eq!(out.tree.frontier(), vec!["a"]);
        // A -> A and A -> B -> A would revisit the root span.
        assert_eq!(out.tree, n("A", 2, vec![t("a")]));
    }

    #[test]
    fn long_left_recursive_input() {
        let g = parse_grammar(ARITHMETIC).unwrap();
        let input = vec!["7"; 5000].join("+");
        assert!(input.len() >= 9999);
        let out = parse_input(&g, &input).unwrap();
        assert_eq!(out.tree.frontier().len(), 9999);
        assert!(!out.ambiguous);
        assert_eq!(out.tree.depth(), 5000 + 5);
    }

    #[test]
    fn serialize_inserts_space_only_between_word_characters() {
        let g = parse_grammar(ARITHMETIC).unwrap();
        assert_eq!(
            serialize_tree(&sample_expression_tree(), &g).unwrap(),
            "1+(2*3)"
        );
        let tree = parse_input(&g, "12 - -3").unwrap().tree;
        assert_eq!(serialize_tree(&tree, &g).unwrap(), "1 2--3");

        let g = parse_grammar(r#"S -> "ab" "cd" ;"#).unwrap();
        let tree = parse_input(&g, "abcd").unwrap().tree;
        assert_eq!(serialize_tree(&tree, &g).unwrap(), "abcd");
        assert_eq!(serialize_tree(&t("a"), &g).unwrap(), "a");
    }

    #[test]
    fn serialize_rejects_invalid_trees() {
        let g = parse_grammar(ARITHMETIC).unwrap();
        assert!(matches!(
            serialize_tree(&n("Digit", 10, vec![t("0")]), &g),
            Err(TreeError::AlternativeOutOfRange { .. })
        ));
        assert!(matches!(
            serialize_tree(&n("Digit", 1, vec![t("0")]), &g),
            Err(TreeError::ChildMismatch { .. })
        ));
        assert!(matches!(
            serialize_tree(&n("Nope", 0, vec![]), &g),
            Err(TreeError::UnknownNonterminal(_))
        ));
    }

    #[test]
    fn json_schema() {
        assert_eq!(tree_to_json(&t("a")), r#"{"t":"a"}"#);
        let json = tree_to_json(&sample_expression_tree());
        assert!(json.starts_with(r#"{"n":"Expr","alt":1,"c":[{"n":"Expr","alt":0,"c":["#));
        assert_eq!(json_to_tree(&json).unwrap(), sample_expression_tree());
        assert_eq!(
            json_to_tree(r#" { "c": [ {"t":"\"q\""} ], "alt": 0, "n": "S" } "#).unwrap(),
            n("S", 0, vec![t("\"q\"")])
        );
        for bad in [
            "",
            "[]",
            r#"{"t":1}"#,
            r#"{"t":"a","x":0}"#,
            r#"{"n":"S","alt":-1,"c":[]}"#,
            r#"{"n":"S","c":[]}"#,
            r#"{"t":"a"} x"#,
        ] {
            assert!(json_to_tree(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn deep_json_round_trips() {
        let mut tree = t("x");
        for _ in 0..20_000 {
            tree = n("S", 0, vec![tree]);
        }
        let json = tree_to_json(&tree);
        assert_eq!(json_to_tree(&json).unwrap(), tree);
    }
}
