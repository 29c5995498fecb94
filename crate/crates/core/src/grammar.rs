//! Context-free grammars with optional per-alternative probabilities.
//!
//! A grammar is an ordered list of rules. Each rule maps a nonterminal to an
//! ordered list of alternatives; the position of an alternative in that list is
//! its identity everywhere else in the crate (counts, trees, inversion).
//!
//! The textual format:
//!
//! ```text
//! # comment
//! %start Expr ;
//! %whitespace skip ;
//! Expr  -> Term | Expr "+" Term ;
//! Digit -> 0.5 "0" | "1" ;
//! ```
//!
//! A bare number at the start of an alternative is its probability. Terminals
//! are always double-quoted; an alternative with no symbols is epsilon.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

/// Slack allowed when checking that probabilities sum to one.
pub const PROBABILITY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Symbol {
    Nonterminal(String),
    Terminal(String),
}

impl Symbol {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Symbol::Terminal(_))
    }

    pub fn as_nonterminal(&self) -> Option<&str> {
        match self {
            Symbol::Nonterminal(name) => Some(name),
            Symbol::Terminal(_) => None,
        }
    }
}

/// One right-hand side of a rule.
///
/// `count` is the number of times this alternative was observed when the
/// probability was learned from a corpus. It is kept alongside the float so
/// that learned probabilities can be reproduced exactly as `count / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub symbols: Vec<Symbol>,
    pub probability: Option<f64>,
    pub count: Option<u64>,
}

impl Alternative {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Alternative {
            symbols,
            probability: None,
            count: None,
        }
    }

    pub fn with_probability(mut self, p: f64) -> Self {
        self.probability = Some(p);
        self
    }

    pub fn is_epsilon(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().filter_map(Symbol::as_nonterminal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub lhs: String,
    pub alternatives: Vec<Alternative>,
}

impl Rule {
    /// Total observations behind a learned rule, if every alternative has one.
    pub fn total_count(&self) -> Option<u64> {
        self.alternatives
            .iter()
            .map(|a| a.count)
            .try_fold(0u64, |acc, c| c.map(|c| acc + c))
    }

    /// The learned probability of alternative `index` as an exact fraction
    /// `(count, total)`. `None` when the rule carries no counts or was never
    /// observed.
    pub fn exact_probability(&self, index: usize) -> Option<(u64, u64)> {
        let total = self.total_count()?;
        if total == 0 {
            return None;
        }
        Some((self.alternatives.get(index)?.count?, total))
    }

    fn specified_sum(&self) -> f64 {
        self.alternatives.iter().filter_map(|a| a.probability).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GrammarOptions {
    /// Skip ASCII whitespace between terminal matches when parsing.
    pub skip_whitespace: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate rule for nonterminal `{0}`")]
    DuplicateRule(String),
    #[error("nonterminal `{name}` is referenced in rule `{rule}` but never defined")]
    UndefinedNonterminal { name: String, rule: String },
    #[error("start symbol `{0}` has no rule")]
    UndefinedStart(String),
    #[error("grammar has no rules")]
    Empty,
    #[error("rule `{0}` has no alternatives")]
    EmptyRule(String),
    #[error("probabilities in rule `{rule}` sum to {sum}, which exceeds 1")]
    ProbabilitySum { rule: String, sum: f64 },
    #[error("probability {value} in rule `{rule}` is outside [0, 1]")]
    ProbabilityRange { rule: String, value: f64 },
    #[error("nonterminal `{0}` cannot derive any finite terminal string")]
    NonProductive(String),
    #[error("invalid nonterminal name `{0}`")]
    InvalidName(String),
    #[error("empty terminal literal in rule `{0}`")]
    EmptyTerminal(String),
}

/// An immutable context-free grammar.
#[derive(Debug, Clone)]
pub struct Grammar {
    rules: Vec<Rule>,
    start: String,
    options: GrammarOptions,
    index: HashMap<String, usize>,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules && self.start == other.start && self.options == other.options
    }
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Grammar {
    /// Builds a grammar, checking the structural invariants: unique rules,
    /// every referenced nonterminal defined, start defined, well-formed names
    /// and terminals, and per-rule probability sums of at most one.
    ///
    /// Productivity is not checked here; see [`Grammar::validate`].
    pub fn new(
        rules: Vec<Rule>,
        start: impl Into<String>,
        options: GrammarOptions,
    ) -> Result<Self, GrammarError> {
        let start = start.into();
        if rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut index = HashMap::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            if !is_identifier(&rule.lhs) {
                return Err(GrammarError::InvalidName(rule.lhs.clone()));
            }
            if index.insert(rule.lhs.clone(), i).is_some() {
                return Err(GrammarError::DuplicateRule(rule.lhs.clone()));
            }
        }
        for rule in &rules {
            if rule.alternatives.is_empty() {
                return Err(GrammarError::EmptyRule(rule.lhs.clone()));
            }
            for alt in &rule.alternatives {
                for sym in &alt.symbols {
                    match sym {
                        Symbol::Nonterminal(name) if !index.contains_key(name) => {
                            return Err(GrammarError::UndefinedNonterminal {
                                name: name.clone(),
                                rule: rule.lhs.clone(),
                            });
                        }
                        Symbol::Terminal(lit) if lit.is_empty() => {
                            return Err(GrammarError::EmptyTerminal(rule.lhs.clone()));
                        }
                        _ => {}
                    }
                }
                if let Some(p) = alt.probability {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(GrammarError::ProbabilityRange {
                            rule: rule.lhs.clone(),
                            value: p,
                        });
                    }
                }
            }
            let sum = rule.specified_sum();
            if sum > 1.0 + PROBABILITY_EPSILON {
                return Err(GrammarError::ProbabilitySum {
                    rule: rule.lhs.clone(),
                    sum,
                });
            }
        }
        if !index.contains_key(&start) {
            return Err(GrammarError::UndefinedStart(start));
        }
        Ok(Grammar {
            rules,
            start,
            options,
            index,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn options(&self) -> GrammarOptions {
        self.options
    }

    pub fn skip_whitespace(&self) -> bool {
        self.options.skip_whitespace
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.index.get(name).map(|&i| &self.rules[i])
    }

    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Returns a copy with the rules replaced. The rule names, order and
    /// alternative shapes must be unchanged; only annotations may differ.
    pub(crate) fn with_rules(&self, rules: Vec<Rule>) -> Grammar {
        debug_assert_eq!(rules.len(), self.rules.len());
        Grammar {
            rules,
            start: self.start.clone(),
            options: self.options,
            index: self.index.clone(),
        }
    }

    /// True when every alternative carries a probability and each rule sums
    /// to one.
    pub fn is_normalized(&self) -> bool {
        self.rules.iter().all(|r| {
            r.alternatives.iter().all(|a| a.probability.is_some())
                && (r.specified_sum() - 1.0).abs() <= PROBABILITY_EPSILON
        })
    }

    /// Fills in unspecified probabilities: the complement of the specified
    /// mass is split evenly over the unspecified alternatives. A rule without
    /// any annotation becomes uniform. Count provenance is preserved.
    pub fn normalize_probabilities(&self) -> Grammar {
        let rules = self
            .rules
            .iter()
            .map(|rule| {
                let unspecified = rule
                    .alternatives
                    .iter()
                    .filter(|a| a.probability.is_none())
                    .count();
                let mut rule = rule.clone();
                if unspecified > 0 {
                    let rest = (1.0 - rule.specified_sum()).max(0.0) / unspecified as f64;
                    for alt in &mut rule.alternatives {
                        alt.probability.get_or_insert(rest);
                    }
                }
                rule
            })
            .collect();
        self.with_rules(rules)
    }

    /// Minimum number of expansions needed to derive a terminal string from
    /// each nonterminal, or `None` where no finite derivation exists. Indexed
    /// like [`Grammar::rules`].
    pub(crate) fn min_costs(&self) -> Vec<Option<u64>> {
        let mut cost: Vec<Option<u64>> = vec![None; self.rules.len()];
        loop {
            let mut changed = false;
            for (i, rule) in self.rules.iter().enumerate() {
                let best = rule
                    .alternatives
                    .iter()
                    .filter_map(|alt| self.alternative_cost(alt, &cost))
                    .min();
                if let Some(best) = best {
                    if cost[i].is_none_or(|c| best < c) {
                        cost[i] = Some(best);
                        changed = true;
                    }
                }
            }
            if !changed {
                return cost;
            }
        }
    }

    /// `1 + Σ cost(child)` for the nonterminals of `alt`, or `None` if any
    /// child has no known cost.
    pub(crate) fn alternative_cost(&self, alt: &Alternative, cost: &[Option<u64>]) -> Option<u64> {
        alt.nonterminals()
            .try_fold(1u64, |acc, name| Some(acc + cost[self.index[name]]?))
    }

    fn reachable(&self) -> HashSet<&str> {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([self.start.as_str()]);
        seen.insert(self.start.as_str());
        while let Some(name) = queue.pop_front() {
            for alt in &self.rules[self.index[name]].alternatives {
                for child in alt.nonterminals() {
                    if seen.insert(child) {
                        queue.push_back(child);
                    }
                }
            }
        }
        seen
    }

    /// Reports unreachable nonterminals (warnings), non-productive
    /// nonterminals and probability-sum violations (errors).
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let reachable = self.reachable();
        for rule in &self.rules {
            if !reachable.contains(rule.lhs.as_str()) {
                out.push(Diagnostic {
                    severity: Severity::Warning,
                    nonterminal: rule.lhs.clone(),
                    kind: DiagnosticKind::Unreachable,
                });
            }
        }
        for (rule, cost) in self.rules.iter().zip(self.min_costs()) {
            if cost.is_none() {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    nonterminal: rule.lhs.clone(),
                    kind: DiagnosticKind::NonProductive,
                });
            }
        }
        for rule in &self.rules {
            let sum = rule.specified_sum();
            let complete = rule.alternatives.iter().all(|a| a.probability.is_some());
            let bad = sum > 1.0 + PROBABILITY_EPSILON
                || (complete && (sum - 1.0).abs() > PROBABILITY_EPSILON);
            if bad {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    nonterminal: rule.lhs.clone(),
                    kind: DiagnosticKind::ProbabilitySum(sum),
                });
            }
        }
        out
    }

    /// Fails with the first error-level diagnostic, if any.
    pub fn check(&self) -> Result<(), GrammarError> {
        match self
            .validate()
            .into_iter()
            .find(|d| d.severity == Severity::Error)
        {
            None => Ok(()),
            Some(d) => Err(match d.kind {
                DiagnosticKind::NonProductive => GrammarError::NonProductive(d.nonterminal),
                DiagnosticKind::ProbabilitySum(sum) => GrammarError::ProbabilitySum {
                    rule: d.nonterminal,
                    sum,
                },
                DiagnosticKind::Unreachable => unreachable!("warnings are filtered"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    Unreachable,
    NonProductive,
    ProbabilitySum(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub nonterminal: String,
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.kind {
            DiagnosticKind::Unreachable => write!(
                f,
                "{level}: `{}` is unreachable from the start symbol",
                self.nonterminal
            ),
            DiagnosticKind::NonProductive => write!(
                f,
                "{level}: `{}` cannot derive a finite terminal string",
                self.nonterminal
            ),
            DiagnosticKind::ProbabilitySum(sum) => write!(
                f,
                "{level}: probabilities of `{}` sum to {sum}",
                self.nonterminal
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Literal(String),
    Arrow,
    Bar,
    Semi,
    Directive(String),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Next token with its starting line and column.
    fn next(&mut self) -> Result<Option<(Token, usize, usize)>, GrammarError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek_char() else {
            return Ok(None);
        };
        let token = match c {
            '|' => {
                self.bump();
                Token::Bar
            }
            ';' => {
                self.bump();
                Token::Semi
            }
            '-' => {
                self.bump();
                if self.peek_char() != Some('>') {
                    return Err(self.error(line, col, "expected `->`"));
                }
                self.bump();
                Token::Arrow
            }
            '"' => Token::Literal(self.literal(line, col)?),
            '%' => {
                self.bump();
                let word = self.word();
                if word.is_empty() {
                    return Err(self.error(line, col, "expected directive name after `%`"));
                }
                Token::Directive(word)
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while matches!(self.peek_char(), Some(c) if c.is_ascii_digit() || c == '.') {
                    self.bump();
                }
                let text = &self.src[start..self.pos];
                let value: f64 = text
                    .parse()
                    .map_err(|_| self.error(line, col, format!("malformed number `{text}`")))?;
                Token::Number(value)
            }
            c if c.is_ascii_alphabetic() => Token::Ident(self.word()),
            other => {
                return Err(self.error(line, col, format!("unexpected character `{other}`")));
            }
        };
        Ok(Some((token, line, col)))
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek_char(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        self.src[start..self.pos].to_owned()
    }

    fn literal(&mut self, line: usize, col: usize) -> Result<String, GrammarError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error(line, col, "unterminated string literal")),
                Some('"') => break,
                Some('\\') => {
                    let (el, ec) = (self.line, self.col);
                    let escaped = match self.bump() {
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        other => {
                            let shown = other.map(String::from).unwrap_or_default();
                            return Err(self.error(el, ec, format!("unknown escape `\\{shown}`")));
                        }
                    };
                    out.push(escaped);
                }
                Some(c) => out.push(c),
            }
        }
        if out.is_empty() {
            return Err(self.error(line, col, "terminal literal must not be empty"));
        }
        Ok(out)
    }
}

struct Tokens<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Option<(Token, usize, usize)>>,
}

impl Tokens<'_> {
    fn peek(&mut self) -> Result<Option<&Token>, GrammarError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().unwrap().as_ref().map(|(t, _, _)| t))
    }

    fn next(&mut self) -> Result<Option<(Token, usize, usize)>, GrammarError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next(),
        }
    }

    fn here(&self) -> (usize, usize) {
        match &self.peeked {
            Some(Some((_, l, c))) => (*l, *c),
            _ => (self.lexer.line, self.lexer.col),
        }
    }

    fn expect(&mut self, want: &Token, what: &str) -> Result<(), GrammarError> {
        let (line, column) = self.here();
        match self.next()? {
            Some((t, _, _)) if &t == want => Ok(()),
            _ => Err(GrammarError::Syntax {
                line,
                column,
                message: format!("expected {what}"),
            }),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, GrammarError> {
        let (line, column) = self.here();
        match self.next()? {
            Some((Token::Ident(name), _, _)) => Ok(name),
            _ => Err(GrammarError::Syntax {
                line,
                column,
                message: format!("expected {what}"),
            }),
        }
    }
}

/// Parses grammar-file text.
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut tokens = Tokens {
        lexer: Lexer::new(text),
        peeked: None,
    };
    let mut rules: Vec<Rule> = Vec::new();
    let mut start = None;
    let mut options = GrammarOptions::default();

    while let Some((token, line, column)) = tokens.next()? {
        match token {
            Token::Directive(name) => match name.as_str() {
                "start" => {
                    start = Some(tokens.ident("start symbol name")?);
                    tokens.expect(&Token::Semi, "`;`")?;
                }
                "whitespace" => {
                    let (l, c) = tokens.here();
                    let mode = tokens.ident("`skip`")?;
                    if mode != "skip" {
                        return Err(GrammarError::Syntax {
                            line: l,
                            column: c,
                            message: format!("unknown whitespace mode `{mode}`"),
                        });
                    }
                    options.skip_whitespace = true;
                    tokens.expect(&Token::Semi, "`;`")?;
                }
                other => {
                    return Err(GrammarError::Syntax {
                        line,
                        column,
                        message: format!("unknown directive `%{other}`"),
                    });
                }
            },
            Token::Ident(lhs) => {
                if rules.iter().any(|r| r.lhs == lhs) {
                    return Err(GrammarError::DuplicateRule(lhs));
                }
                tokens.expect(&Token::Arrow, "`->`")?;
                let mut alternatives = vec![parse_alternative(&mut tokens)?];
                loop {
                    let (l, c) = tokens.here();
                    match tokens.next()? {
                        Some((Token::Bar, _, _)) => {
                            alternatives.push(parse_alternative(&mut tokens)?)
                        }
                        Some((Token::Semi, _, _)) => break,
                        _ => {
                            return Err(GrammarError::Syntax {
                                line: l,
                                column: c,
                                message: "expected `|` or `;`".into(),
                            })
                        }
                    }
                }
                rules.push(Rule { lhs, alternatives });
            }
            _ => {
                return Err(GrammarError::Syntax {
                    line,
                    column,
                    message: "expected a rule or a directive".into(),
                })
            }
        }
    }

    let start = match start {
        Some(s) => s,
        None => rules.first().ok_or(GrammarError::Empty)?.lhs.clone(),
    };
    Grammar::new(rules, start, options)
}

fn parse_alternative(tokens: &mut Tokens<'_>) -> Result<Alternative, GrammarError> {
    let mut alt = Alternative::new(Vec::new());
    if let Some(Token::Number(_)) = tokens.peek()? {
        let (line, column) = tokens.here();
        let Some((Token::Number(p), _, _)) = tokens.next()? else {
            unreachable!()
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(GrammarError::Syntax {
                line,
                column,
                message: format!("probability {p} is outside [0, 1]"),
            });
        }
        alt.probability = Some(p);
    }
    loop {
        match tokens.peek()? {
            Some(Token::Ident(_)) | Some(Token::Literal(_)) => match tokens.next()? {
                Some((Token::Ident(name), _, _)) => alt.symbols.push(Symbol::Nonterminal(name)),
                Some((Token::Literal(lit), _, _)) => alt.symbols.push(Symbol::Terminal(lit)),
                _ => unreachable!(),
            },
            Some(Token::Number(_)) => {
                let (line, column) = tokens.here();
                return Err(GrammarError::Syntax {
                    line,
                    column,
                    message: "a probability may only appear at the start of an alternative".into(),
                });
            }
            _ => return Ok(alt),
        }
    }
}

fn write_literal(out: &mut String, lit: &str) {
    out.push('"');
    for c in lit.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Renders a grammar in the text format. Probabilities use the shortest
/// decimal representation that reads back to the same `f64`.
pub fn serialize_grammar(g: &Grammar) -> String {
    let mut out = String::new();
    if g.start != g.rules[0].lhs {
        let _ = writeln!(out, "%start {} ;", g.start);
    }
    if g.options.skip_whitespace {
        out.push_str("%whitespace skip ;\n");
    }
    if !out.is_empty() {
        out.push('\n');
    }
    for rule in &g.rules {
        let _ = write!(out, "{} ->", rule.lhs);
        for (i, alt) in rule.alternatives.iter().enumerate() {
            if i > 0 {
                out.push_str(" |");
            }
            if let Some(p) = alt.probability {
                let _ = write!(out, " {p}");
            }
            for sym in &alt.symbols {
                out.push(' ');
                match sym {
                    Symbol::Nonterminal(name) => out.push_str(name),
                    Symbol::Terminal(lit) => write_literal(&mut out, lit),
                }
            }
        }
        out.push_str(" ;\n");
    }
    out
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_grammar(self))
    }
}
