//! Grammar-based test input generation driven by probabilities learned from
//! sample inputs.
//!
//! The pipeline: parse a corpus with a context-free grammar, count which
//! alternative every nonterminal expanded to, turn the counts into a
//! probabilistic grammar ([`learner`]), optionally invert those probabilities
//! so rare and unseen alternatives dominate ([`inverter`]), and generate
//! size-bounded inputs from the result ([`generator`]). [`analysis`] compares
//! how two input suites exercise the grammar.

pub mod analysis;
pub mod fixtures;
pub mod generator;
pub mod grammar;
pub mod inverter;
pub mod learner;
pub mod parser;

pub use analysis::{
    ks_compare, suite_distribution, uncovered_keys, FrequencyDistribution, KsReport,
};
pub use generator::{generate_suite, min_expansion_cost, Generator, GeneratorConfig};
pub use grammar::{
    parse_grammar, serialize_grammar, Alternative, Grammar, GrammarError, Rule, Symbol,
};
pub use inverter::invert;
pub use learner::{count_expansions, learn, read_corpus_dir, CountTable, Sample, UnparsablePolicy};
pub use parser::{
    json_to_tree, parse_input, serialize_tree, tree_to_json, DerivationTree, ParseError,
};
