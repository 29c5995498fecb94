//! Probability inversion.
//!
//! Each rule's weights are replaced by their reciprocals and renormalized, so
//! frequent alternatives become rare and rare ones frequent. A zero weight has
//! an infinite reciprocal: when a rule has unseen alternatives they share all
//! of the probability mass equally and every seen alternative drops to zero.

use thiserror::Error;

use crate::grammar::{Alternative, Grammar, Rule, PROBABILITY_EPSILON};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvertError {
    #[error("rule `{0}` is not normalized; every alternative needs a probability and they must sum to 1")]
    Unnormalized(String),
}

/// Weights used for inversion: the learned counts when the whole rule has
/// them, otherwise the probabilities.
fn weights(rule: &Rule) -> Vec<f64> {
    match rule.total_count() {
        Some(total) if total > 0 => rule
            .alternatives
            .iter()
            .map(|a| a.count.unwrap() as f64)
            .collect(),
        _ => rule
            .alternatives
            .iter()
            .map(|a| a.probability.unwrap())
            .collect(),
    }
}

/// Inverts one rule's weights into probabilities.
pub fn invert_weights(weights: &[f64]) -> Vec<f64> {
    let zeros = weights.iter().filter(|&&w| w == 0.0).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        return weights
            .iter()
            .map(|&w| if w == 0.0 { share } else { 0.0 })
            .collect();
    }
    let reciprocals: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
    let sum: f64 = reciprocals.iter().sum();
    reciprocals.into_iter().map(|r| r / sum).collect()
}

fn check_rule(rule: &Rule) -> Result<(), InvertError> {
    let mut sum = 0.0;
    for alt in &rule.alternatives {
        match alt.probability {
            Some(p) => sum += p,
            None => return Err(InvertError::Unnormalized(rule.lhs.clone())),
        }
    }
    if (sum - 1.0).abs() > PROBABILITY_EPSILON {
        return Err(InvertError::Unnormalized(rule.lhs.clone()));
    }
    Ok(())
}

/// Inverts every rule of a normalized grammar. The result carries no counts.
pub fn invert(g: &Grammar) -> Result<Grammar, InvertError> {
    let rules = g
        .rules()
        .iter()
        .map(|rule| {
            check_rule(rule)?;
            let inverted = invert_weights(&weights(rule));
            Ok(Rule {
                lhs: rule.lhs.clone(),
                alternatives: rule
                    .alternatives
                    .iter()
                    .zip(inverted)
                    .map(|(alt, p)| Alternative::new(alt.symbols.clone()).with_probability(p))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(g.with_rules(rules))
}
