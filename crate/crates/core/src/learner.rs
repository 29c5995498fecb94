//! Learning alternative probabilities from a corpus.
//!
//! Counts are the source of truth: a learned grammar carries, per
//! alternative, how often it was expanded across all derivation trees, and
//! its probability is `count / total` for the rule. Rules that never occur
//! fall back to a uniform distribution.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, GrammarError};
use crate::parser::{parse_input, DerivationTree, ParseError, TreeError};

/// Expansion counts per nonterminal and alternative index, in grammar order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountTable {
    counts: IndexMap<String, Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct RuleCounts {
    total: u64,
    alts: Vec<u64>,
}

impl CountTable {
    /// All-zero table shaped like `g`.
    pub fn for_grammar(g: &Grammar) -> Self {
        CountTable {
            counts: g
                .rules()
                .iter()
                .map(|r| (r.lhs.clone(), vec![0; r.alternatives.len()]))
                .collect(),
        }
    }

    pub fn count(&self, nonterminal: &str, alternative: usize) -> u64 {
        self.counts
            .get(nonterminal)
            .and_then(|c| c.get(alternative))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self, nonterminal: &str) -> u64 {
        self.counts.get(nonterminal).map_or(0, |c| c.iter().sum())
    }

    pub fn alternatives(&self, nonterminal: &str) -> Option<&[u64]> {
        self.counts.get(nonterminal).map(Vec::as_slice)
    }

    /// Total number of expansions over all nonterminals.
    pub fn grand_total(&self) -> u64 {
        self.counts.values().flatten().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u64])> {
        self.counts.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Adds the expansions of one tree. The tree is validated against `g`
    /// first, so a failed call leaves the table untouched.
    pub fn add_tree(&mut self, tree: &DerivationTree, g: &Grammar) -> Result<(), TreeError> {
        crate::parser::check_tree(tree, g)?;
        for node in tree.nodes() {
            if let DerivationTree::Nonterminal {
                symbol,
                alternative,
                ..
            } = node
            {
                let alts = self
                    .counts
                    .entry(symbol.clone())
                    .or_insert_with(|| vec![0; g.rule(symbol).unwrap().alternatives.len()]);
                alts[*alternative] += 1;
            }
        }
        Ok(())
    }

    /// Adds `other` into `self`. Merging is associative and commutative.
    pub fn merge(&mut self, other: &CountTable) {
        for (name, alts) in &other.counts {
            let mine = self.counts.entry(name.clone()).or_default();
            if mine.len() < alts.len() {
                mine.resize(alts.len(), 0);
            }
            for (m, o) in mine.iter_mut().zip(alts) {
                *m += o;
            }
        }
    }

    /// `{ "<Nonterminal>": { "total": n, "alts": [c0, c1, ...] }, ... }`
    pub fn to_json(&self) -> String {
        let report: IndexMap<&str, RuleCounts> = self
            .counts
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str(),
                    RuleCounts {
                        total: v.iter().sum(),
                        alts: v.clone(),
                    },
                )
            })
            .collect();
        serde_json::to_string_pretty(&report).expect("count report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, LearnError> {
        let report: IndexMap<String, RuleCounts> =
            serde_json::from_str(json).map_err(|e| LearnError::CountsFormat(e.to_string()))?;
        let mut counts = IndexMap::with_capacity(report.len());
        for (name, rule) in report {
            if rule.alts.iter().sum::<u64>() != rule.total {
                return Err(LearnError::CountsFormat(format!(
                    "total of `{name}` does not match its alternatives"
                )));
            }
            counts.insert(name, rule.alts);
        }
        Ok(CountTable { counts })
    }
}

/// Counts alternative expansions over a set of trees.
pub fn count_expansions<'t>(
    trees: impl IntoIterator<Item = &'t DerivationTree>,
    g: &Grammar,
) -> Result<CountTable, TreeError> {
    let mut table = CountTable::for_grammar(g);
    for tree in trees {
        table.add_tree(tree, g)?;
    }
    Ok(table)
}

/// Annotates `g` with probabilities derived from `counts`. Each alternative
/// keeps its count so the probability stays reproducible as a fraction.
pub fn annotate(g: &Grammar, counts: &CountTable) -> Grammar {
    let rules = g
        .rules()
        .iter()
        .map(|rule| {
            let total = counts.total(&rule.lhs);
            let n = rule.alternatives.len();
            let mut rule = rule.clone();
            for (i, alt) in rule.alternatives.iter_mut().enumerate() {
                let c = counts.count(&rule.lhs, i);
                alt.count = Some(c);
                alt.probability = Some(if total == 0 {
                    1.0 / n as f64
                } else {
                    c as f64 / total as f64
                });
            }
            rule
        })
        .collect();
    g.with_rules(rules)
}

/// One corpus member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub name: String,
    pub text: String,
}

impl Sample {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Sample {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// What to do with samples the grammar cannot parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnparsablePolicy {
    Abort,
    Skip,
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("{name}: {error}")]
    Unparsable { name: String, error: ParseError },
    #[error("malformed counts report: {0}")]
    CountsFormat(String),
}

#[derive(Debug, Clone)]
pub struct CorpusCounts {
    pub counts: CountTable,
    /// Samples left out under [`UnparsablePolicy::Skip`].
    pub skipped: Vec<(String, ParseError)>,
    /// Samples whose parse was ambiguous and got canonicalized.
    pub ambiguous: Vec<String>,
    pub parsed: usize,
}

/// Parses every sample and accumulates expansion counts. Samples are parsed
/// on all available cores; the result does not depend on corpus order.
pub fn count_corpus(
    g: &Grammar,
    corpus: &[Sample],
    policy: UnparsablePolicy,
) -> Result<CorpusCounts, LearnError> {
    g.check()?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(corpus.len().max(1));
    let chunk = corpus.len().div_ceil(workers).max(1);
    let results: Vec<Vec<Result<(bool, DerivationTree), ParseError>>> = std::thread::scope(|s| {
        let handles: Vec<_> = corpus
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|sample| parse_input(g, &sample.text).map(|o| (o.ambiguous, o.tree)))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("parser thread panicked"))
            .collect()
    });

    let mut out = CorpusCounts {
        counts: CountTable::for_grammar(g),
        skipped: Vec::new(),
        ambiguous: Vec::new(),
        parsed: 0,
    };
    for (sample, result) in corpus.iter().zip(results.into_iter().flatten()) {
        match result {
            Ok((ambiguous, tree)) => {
                out.counts
                    .add_tree(&tree, g)
                    .expect("parser produces trees that follow the grammar");
                out.parsed += 1;
                if ambiguous {
                    out.ambiguous.push(sample.name.clone());
                }
            }
            Err(error) => match policy {
                UnparsablePolicy::Abort => {
                    return Err(LearnError::Unparsable {
                        name: sample.name.clone(),
                        error,
                    })
                }
                UnparsablePolicy::Skip => out.skipped.push((sample.name.clone(), error)),
            },
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub grammar: Grammar,
    pub corpus: CorpusCounts,
}

/// Learns a probabilistic grammar from `corpus`. An empty corpus yields
/// uniform probabilities everywhere.
pub fn learn(
    g: &Grammar,
    corpus: &[Sample],
    policy: UnparsablePolicy,
) -> Result<Learned, LearnError> {
    let corpus = count_corpus(g, corpus, policy)?;
    Ok(Learned {
        grammar: annotate(g, &corpus.counts),
        corpus,
    })
}

/// Reads every regular file of `dir` as a sample, sorted by file name.
/// Suite bookkeeping files (`manifest.json`, `*.tree.json`) are ignored.
pub fn read_corpus_dir(dir: &Path) -> io::Result<Vec<Sample>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.json" || name.ends_with(".tree.json") || !entry.file_type()?.is_file()
        {
            continue;
        }
        paths.push((name, entry.path()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|(name, path)| {
            let text = fs::read_to_string(&path)
                .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            Ok(Sample::new(name, text))
        })
        .collect()
}

/// Nonterminals that never occurred in the counted trees.
pub fn unobserved(g: &Grammar, counts: &CountTable) -> Vec<String> {
    let seen: HashSet<&str> = counts
        .iter()
        .filter(|(_, alts)| alts.iter().any(|&c| c > 0))
        .map(|(k, _)| k)
        .collect();
    g.rules()
        .iter()
        .filter(|r| !seen.contains(r.lhs.as_str()))
        .map(|r| r.lhs.clone())
        .collect()
}
