//! Size-bounded generation from a probabilistic grammar.
//!
//! Generation runs in two phases. Phase 1 expands open nonterminals in
//! breadth-first order, picking each alternative with its probability, until
//! the expansion budget is spent. Phase 2 closes every nonterminal still open
//! along the cheapest way to a terminal string, ignoring probabilities, so the
//! tree is always complete and generation always terminates.
//!
//! Closure prefers alternatives the grammar can actually choose: where the
//! positive-probability alternatives alone can terminate a nonterminal,
//! closure stays inside them, and only falls back to zero-probability
//! alternatives where nothing else terminates.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded per input from
//! `(seed, index)`: stream `index` of the generator keyed by `seed`. The
//! algorithm is fixed and platform independent, so suites reproduce
//! byte-for-byte.

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar::{serialize_grammar, Grammar, GrammarError, Symbol};
use crate::parser::{serialize_tree, tree_to_json, DerivationTree, TreeError};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("grammar is not normalized (rule `{0}`)")]
    Unnormalized(String),
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Phase-1 budget of nonterminal expansions per tree.
    pub max_expansions: usize,
    pub seed: u64,
    /// Number of inputs in a suite.
    pub count: usize,
}

impl GeneratorConfig {
    pub fn new(max_expansions: usize, seed: u64, count: usize) -> Result<Self, GenerateError> {
        if max_expansions == 0 {
            return Err(GenerateError::Config(
                "max_expansions must be at least 1".into(),
            ));
        }
        if count == 0 {
            return Err(GenerateError::Config("count must be at least 1".into()));
        }
        Ok(GeneratorConfig {
            max_expansions,
            seed,
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinCost {
    /// Fewest expansions that derive a terminal string.
    pub min_size: u64,
    /// Alternatives achieving `min_size`, ascending.
    pub min_alts: Vec<usize>,
}

/// Minimum expansion cost per nonterminal, in grammar order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinCostTable {
    entries: IndexMap<String, MinCost>,
}

impl MinCostTable {
    pub fn get(&self, nonterminal: &str) -> Option<&MinCost> {
        self.entries.get(nonterminal)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &MinCost)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Least fixpoint of `cost(S) = 1 + min over alternatives of the summed
/// costs of their nonterminals`. Fails on the first non-productive
/// nonterminal.
pub fn min_expansion_cost(g: &Grammar) -> Result<MinCostTable, GenerateError> {
    let costs = g.min_costs();
    let mut entries = IndexMap::with_capacity(g.rules().len());
    for (rule, cost) in g.rules().iter().zip(&costs) {
        let Some(min_size) = *cost else {
            return Err(GrammarError::NonProductive(rule.lhs.clone()).into());
        };
        let min_alts = rule
            .alternatives
            .iter()
            .enumerate()
            .filter(|(_, alt)| g.alternative_cost(alt, &costs) == Some(min_size))
            .map(|(i, _)| i)
            .collect();
        entries.insert(rule.lhs.clone(), MinCost { min_size, min_alts });
    }
    Ok(MinCostTable { entries })
}

/// Phase-2 choices per rule.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Closure {
    /// Expansions needed to close this nonterminal under the closure policy.
    cost: u64,
    alts: Vec<usize>,
}

fn closure_plan(g: &Grammar) -> Result<Vec<Closure>, GenerateError> {
    let rules = g.rules();
    let positive = |r: usize, a: usize| rules[r].alternatives[a].probability.unwrap_or(0.0) > 0.0;
    let alt_cost = |r: usize, a: usize, cost: &[Option<u64>]| {
        g.alternative_cost(&rules[r].alternatives[a], cost)
    };

    // Costs using positive-probability alternatives only.
    let mut restricted: Vec<Option<u64>> = vec![None; rules.len()];
    loop {
        let mut changed = false;
        for r in 0..rules.len() {
            let best = (0..rules[r].alternatives.len())
                .filter(|&a| positive(r, a))
                .filter_map(|a| alt_cost(r, a, &restricted))
                .min();
            if best.is_some_and(|b| restricted[r].is_none_or(|c| b < c)) {
                restricted[r] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // The rest may use any alternative; closable-by-positive nonterminals keep
    // their restricted cost.
    let mut cost = restricted.clone();
    loop {
        let mut changed = false;
        for r in (0..rules.len()).filter(|&r| restricted[r].is_none()) {
            let best = (0..rules[r].alternatives.len())
                .filter_map(|a| alt_cost(r, a, &cost))
                .min();
            if best.is_some_and(|b| cost[r].is_none_or(|c| b < c)) {
                cost[r] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    rules
        .iter()
        .enumerate()
        .map(|(r, rule)| {
            let c = cost[r].ok_or_else(|| GrammarError::NonProductive(rule.lhs.clone()))?;
            let alts = (0..rule.alternatives.len())
                .filter(|&a| restricted[r].is_none() || positive(r, a))
                .filter(|&a| alt_cost(r, a, &cost) == Some(c))
                .collect();
            Ok(Closure { cost: c, alts })
        })
        .collect()
}

/// The RNG for input `index` of a suite seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerationStats {
    pub phase1_expansions: usize,
    pub phase2_expansions: usize,
    /// Summed closure cost of the nonterminals left open when phase 1 ended.
    pub closure_bound: u64,
    /// Summed minimum expansion cost of those same nonterminals.
    pub open_min_cost: u64,
}

impl GenerationStats {
    pub fn total_expansions(&self) -> usize {
        self.phase1_expansions + self.phase2_expansions
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedTree {
    pub tree: DerivationTree,
    pub stats: GenerationStats,
    /// Alternatives chosen during phase 1, as `(rule index, alternative)`.
    pub phase1_choices: Vec<(usize, usize)>,
}

struct Node {
    rule: usize,
    alternative: usize,
    children: Vec<Slot>,
}

enum Slot {
    Terminal(String),
    Node(usize),
}

/// A grammar prepared for generation.
#[derive(Debug, Clone)]
pub struct Generator<'g> {
    grammar: &'g Grammar,
    closure: Vec<Closure>,
    min_cost: Vec<u64>,
}

impl<'g> Generator<'g> {
    /// Requires a normalized grammar in which every nonterminal is productive.
    pub fn new(grammar: &'g Grammar) -> Result<Self, GenerateError> {
        if let Some(rule) = grammar.rules().iter().find(|r| {
            let complete = r.alternatives.iter().all(|a| a.probability.is_some());
            let sum: f64 = r.alternatives.iter().filter_map(|a| a.probability).sum();
            !complete || (sum - 1.0).abs() > crate::grammar::PROBABILITY_EPSILON
        }) {
            return Err(GenerateError::Unnormalized(rule.lhs.clone()));
        }
        let table = min_expansion_cost(grammar)?;
        Ok(Generator {
            grammar,
            closure: closure_plan(grammar)?,
            min_cost: table.iter().map(|(_, c)| c.min_size).collect(),
        })
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    fn choose<R: RngCore>(&self, rule: usize, rng: &mut R) -> usize {
        let alts = &self.grammar.rules()[rule].alternatives;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (i, alt) in alts.iter().enumerate() {
            let p = alt.probability.unwrap_or(0.0);
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some(i);
            if u < acc {
                return i;
            }
        }
        last.expect("a normalized rule has a positive alternative")
    }

    fn expand(
        &self,
        nodes: &mut Vec<Node>,
        id: usize,
        alternative: usize,
        open: &mut VecDeque<usize>,
    ) {
        let rule = &self.grammar.rules()[nodes[id].rule];
        let mut children = Vec::with_capacity(rule.alternatives[alternative].symbols.len());
        for sym in &rule.alternatives[alternative].symbols {
            match sym {
                Symbol::Terminal(lit) => children.push(Slot::Terminal(lit.clone())),
                Symbol::Nonterminal(name) => {
                    let child = nodes.len();
                    nodes.push(Node {
                        rule: self.grammar.rule_index(name).unwrap(),
                        alternative: usize::MAX,
                        children: Vec::new(),
                    });
                    open.push_back(child);
                    children.push(Slot::Node(child));
                }
            }
        }
        nodes[id].alternative = alternative;
        nodes[id].children = children;
    }

    /// Generates one complete tree. Phase 1 performs at most
    /// `max_expansions` expansions.
    pub fn generate_tree<R: RngCore>(&self, max_expansions: usize, rng: &mut R) -> GeneratedTree {
        let start = self.grammar.rule_index(self.grammar.start()).unwrap();
        let mut nodes = vec![Node {
            rule: start,
            alternative: usize::MAX,
            children: Vec::new(),
        }];
        let mut open = VecDeque::from([0]);
        let mut stats = GenerationStats::default();
        let mut phase1_choices = Vec::new();

        while stats.phase1_expansions < max_expansions {
            let Some(id) = open.pop_front() else { break };
            let alt = self.choose(nodes[id].rule, rng);
            phase1_choices.push((nodes[id].rule, alt));
            self.expand(&mut nodes, id, alt, &mut open);
            stats.phase1_expansions += 1;
        }

        stats.closure_bound = open
            .iter()
            .map(|&id| self.closure[nodes[id].rule].cost)
            .sum();
        stats.open_min_cost = open.iter().map(|&id| self.min_cost[nodes[id].rule]).sum();
        while let Some(id) = open.pop_front() {
            let alts = &self.closure[nodes[id].rule].alts;
            let alt = alts[rng.random_range(0..alts.len())];
            self.expand(&mut nodes, id, alt, &mut open);
            stats.phase2_expansions += 1;
        }

        GeneratedTree {
            tree: self.assemble(nodes),
            stats,
            phase1_choices,
        }
    }

    /// Builds the tree bottom-up; children always have larger ids than
    /// their parent.
    fn assemble(&self, nodes: Vec<Node>) -> DerivationTree {
        let mut built: Vec<Option<DerivationTree>> = Vec::with_capacity(nodes.len());
        built.resize_with(nodes.len(), || None);
        for (id, node) in nodes.into_iter().enumerate().rev() {
            let children = node
                .children
                .into_iter()
                .map(|slot| match slot {
                    Slot::Terminal(lit) => DerivationTree::terminal(lit),
                    Slot::Node(child) => built[child].take().unwrap(),
                })
                .collect();
            built[id] = Some(DerivationTree::node(
                &self.grammar.rules()[node.rule].lhs,
                node.alternative,
                children,
            ));
        }
        built[0].take().unwrap()
    }
}

/// One generated input.
#[derive(Debug, Clone)]
pub struct GeneratedInput {
    pub index: usize,
    pub tree: DerivationTree,
    pub text: String,
    pub stats: GenerationStats,
}

/// Generates `cfg.count` inputs. Input `i` draws from [`stream_rng`]
/// `(cfg.seed, i)`, so the suite is deterministic and independent of how the
/// work is scheduled.
pub fn generate_suite(
    g: &Grammar,
    cfg: &GeneratorConfig,
) -> Result<Vec<GeneratedInput>, GenerateError> {
    let generator = Generator::new(g)?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cfg.count);
    let per_worker = cfg.count.div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let generator = &generator;
                s.spawn(move || {
                    let lo = w * per_worker;
                    let hi = ((w + 1) * per_worker).min(cfg.count);
                    (lo..hi)
                        .map(|index| {
                            let mut rng = stream_rng(cfg.seed, index as u64);
                            let out = generator.generate_tree(cfg.max_expansions, &mut rng);
                            let text = serialize_tree(&out.tree, g)?;
                            Ok(GeneratedInput {
                                index,
                                tree: out.tree,
                                text,
                                stats: out.stats,
                            })
                        })
                        .collect::<Result<Vec<_>, GenerateError>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(cfg.count);
        for h in handles {
            out.extend(h.join().expect("generator thread panicked")?);
        }
        Ok(out)
    })
}

/// Contents of `manifest.json` in a suite directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// SHA-256 of the serialized grammar, hex.
    pub grammar_hash: String,
    pub seed: u64,
    pub max_expansions: usize,
    pub count: usize,
}

pub fn grammar_hash(g: &Grammar) -> String {
    hex::encode(Sha256::digest(serialize_grammar(g).as_bytes()))
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn input_file_name(index: usize) -> String {
    format!("{index:04}.txt")
}

/// Writes `NNNN.txt` per input, optionally `NNNN.tree.json`, and the
/// manifest.
pub fn write_suite(
    dir: &Path,
    g: &Grammar,
    cfg: &GeneratorConfig,
    suite: &[GeneratedInput],
    emit_trees: bool,
) -> Result<Manifest, GenerateError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| GenerateError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for input in suite {
        let path = dir.join(input_file_name(input.index));
        fs::write(&path, &input.text).map_err(io_err(&path))?;
        if emit_trees {
            let path = dir.join(format!("{:04}.tree.json", input.index));
            fs::write(&path, tree_to_json(&input.tree)).map_err(io_err(&path))?;
        }
    }
    let manifest = Manifest {
        grammar_hash: grammar_hash(g),
        seed: cfg.seed,
        max_expansions: cfg.max_expansions,
        count: cfg.count,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}
