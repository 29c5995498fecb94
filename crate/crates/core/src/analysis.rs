//! Comparing how two input suites exercise a grammar.
//!
//! A suite's footprint is the relative frequency with which each
//! `(nonterminal, alternative)` key is used across the derivation trees of its
//! inputs. Two footprints are compared with a smoothed bootstrapped
//! two-sample Kolmogorov-Smirnov test: each frequency vector is smoothed with
//! a Gaussian kernel density estimate, both estimates are resampled, and the
//! KS statistic is computed on the resampled points.
//!
//! Both estimates are sampled with common random numbers: draw `k` picks the
//! same key index and the same kernel offset for `a` and `b`. Swapping the
//! arguments therefore swaps the two samples, which makes the statistic
//! exactly symmetric, and identical distributions yield identical samples and
//! a statistic of exactly 0.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::generator::stream_rng;
use crate::grammar::Grammar;
use crate::learner::{
    count_corpus, CorpusCounts, CountTable, LearnError, Sample, UnparsablePolicy,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("at least 10 resamples are required, got {0}")]
    TooFewResamples(usize),
    #[error("frequency distribution `{0}` is empty")]
    EmptyDistribution(&'static str),
    #[error("frequency distributions are over different keys")]
    KeyMismatch,
}

/// Relative usage frequency per `(nonterminal, alternative)` key, in grammar
/// order. Values sum to 1 unless the suite used no key at all.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDistribution {
    pub keys: Vec<(String, usize)>,
    pub values: Vec<f64>,
}

impl FrequencyDistribution {
    pub fn from_counts(counts: &CountTable) -> Self {
        let total = counts.grand_total();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (nt, alts) in counts.iter() {
            for (i, &c) in alts.iter().enumerate() {
                keys.push((nt.to_string(), i));
                values.push(if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                });
            }
        }
        FrequencyDistribution { keys, values }
    }

    /// True when no key was used.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn get(&self, nonterminal: &str, alternative: usize) -> Option<f64> {
        self.keys
            .iter()
            .position(|(n, a)| n == nonterminal && *a == alternative)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone)]
pub struct SuiteDistribution {
    pub distribution: FrequencyDistribution,
    pub corpus: CorpusCounts,
}

/// Parses every input of a suite and normalizes the expansion counts.
/// Ordering of the suite does not affect the result.
pub fn suite_distribution(
    g: &Grammar,
    suite: &[Sample],
    policy: UnparsablePolicy,
) -> Result<SuiteDistribution, LearnError> {
    let corpus = count_corpus(g, suite, policy)?;
    Ok(SuiteDistribution {
        distribution: FrequencyDistribution::from_counts(&corpus.counts),
        corpus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub bootstrap_samples: usize,
    pub bandwidth: f64,
}

const MIN_BANDWIDTH: f64 = 1e-6;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. Falls
/// back to the standard deviation when the IQR is zero, and never returns
/// less than `1e-6`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * (n as f64).powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Two-sample KS statistic `sup |F_a - F_b|` of the empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic p-value of a two-sample KS statistic.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    kolmogorov_q(lambda)
}

/// `Q(x) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev_term = 0.0f64;
    for k in 1..=100 {
        let term = sign * 2.0 * (a2 * (k * k) as f64).exp();
        sum += term;
        if term.abs() <= 1e-3 * prev_term.abs() || term.abs() <= 1e-10 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev_term = term;
    }
    1.0
}

/// Smoothed bootstrapped two-sample KS test between two frequency
/// distributions over the same keys. The kernel bandwidth is Silverman's rule
/// applied to the pooled values of both distributions.
pub fn ks_compare(
    a: &FrequencyDistribution,
    b: &FrequencyDistribution,
    resamples: usize,
    seed: u64,
) -> Result<KsReport, AnalysisError> {
    if resamples < 10 {
        return Err(AnalysisError::TooFewResamples(resamples));
    }
    if a.keys != b.keys {
        return Err(AnalysisError::KeyMismatch);
    }
    if a.values.is_empty() || a.is_empty() {
        return Err(AnalysisError::EmptyDistribution("a"));
    }
    if b.is_empty() {
        return Err(AnalysisError::EmptyDistribution("b"));
    }
    let pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    let bandwidth = silverman_bandwidth(&pooled);

    let mut rng = stream_rng(seed, 0);
    let mut xa = Vec::with_capacity(resamples);
    let mut xb = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let k = rng.random_range(0..a.values.len());
        let z: f64 = rng.sample(StandardNormal);
        xa.push(a.values[k] + bandwidth * z);
        xb.push(b.values[k] + bandwidth * z);
    }
    let statistic = ks_statistic(&xa, &xb);
    Ok(KsReport {
        statistic,
        p_value: ks_p_value(statistic, resamples, resamples),
        bootstrap_samples: resamples,
        bandwidth,
    })
}

/// Keys never used by `sample` but used by `other`.
pub fn uncovered_keys(
    sample: &FrequencyDistribution,
    other: &FrequencyDistribution,
) -> Vec<(String, usize)> {
    other
        .keys
        .iter()
        .zip(&other.values)
        .filter(|&(key, &v)| {
            v > 0.0
                && sample
                    .keys
                    .iter()
                    .position(|k| k == key)
                    .is_none_or(|i| sample.values[i] == 0.0)
        })
        .map(|(key, _)| key.clone())
        .collect()
}

/// The comparison report written by `pcfgen compare`.
pub fn report_json(report: &KsReport, uncovered: &[(String, usize)]) -> String {
    let json = |v: serde_json::Value| v.to_string();
    let pairs: Vec<String> = uncovered
        .iter()
        .map(|(n, a)| format!("[{}, {a}]", json(n.as_str().into())))
        .collect();
    format!(
        "{{\n  \"statistic\": {},\n  \"p_value\": {},\n  \"uncovered\": [{}],\n  \"resamples\": {},\n  \"bandwidth\": {}\n}}\n",
        json(report.statistic.into()),
        json(report.p_value.into()),
        pairs.join(", "),
        report.bootstrap_samples,
        json(report.bandwidth.into()),
    )
}

/// Per-key frequencies of both suites, one row per key.
pub fn frequency_csv(a: &FrequencyDistribution, b: &FrequencyDistribution) -> String {
    let mut out = String::from("nonterminal,alternative,frequency_a,frequency_b\n");
    for (i, (nt, alt)) in a.keys.iter().enumerate() {
        let fb = b.get(nt, *alt).unwrap_or(0.0);
        out.push_str(&format!("{nt},{alt},{},{fb}\n", a.values[i]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{ARITHMETIC, ARITHMETIC_INVERTED, ARITHMETIC_LEARNED};
    use crate::generator::{generate_suite, GeneratorConfig};
    use crate::grammar::parse_grammar;
    use proptest::prelude::*;

    fn arithmetic() -> Grammar {
        parse_grammar(ARITHMETIC).unwrap()
    }

    fn dist(texts: &[&str]) -> FrequencyDistribution {
        let suite: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Sample::new(i.to_string(), *t))
            .collect();
        suite_distribution(&arithmetic(), &suite, UnparsablePolicy::Abort)
            .unwrap()
            .distribution
    }

    fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
        let ecdf =
            |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
        a.iter()
            .chain(b)
            .map(|&t| (ecdf(a, t) - ecdf(b, t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sample_frequencies_follow_node_counts() {
        let d = dist(&["1 + (2 * 3)"]);
        assert_eq!(d.keys.len(), 22);
        assert_eq!(d.get("Expr", 0), Some(2.0 / 17.0));
        assert_eq!(d.get("Expr", 1), Some(1.0 / 17.0));
        assert_eq!(d.get("Factor", 0), Some(3.0 / 17.0));
        assert_eq!(d.get("Digit", 2), Some(1.0 / 17.0));
        assert_eq!(d.get("Digit", 0), Some(0.0));
        assert!((d.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn permutation_and_duplicates() {
        assert_eq!(dist(&["1", "2 * 3"]), dist(&["2 * 3", "1"]));
        assert_eq!(dist(&["7 - 1"]), dist(&["7 - 1", "7 - 1"]));
    }

    #[test]
    fn empty_suite_is_flagged() {
        let d = dist(&[]);
        assert!(d.is_empty());
        assert_eq!(d.keys.len(), 22);
        let full = dist(&["1"]);
        assert_eq!(
            ks_compare(&d, &full, 100, 0),
            Err(AnalysisError::EmptyDistribution("a"))
        );
        assert_eq!(
            ks_compare(&full, &d, 100, 0),
            Err(AnalysisError::EmptyDistribution("b"))
        );
        assert_eq!(
            ks_compare(&full, &full, 9, 0),
            Err(AnalysisError::TooFewResamples(9))
        );
    }

    #[test]
    fn identical_distributions_give_zero() {
        let d = dist(&["1 + (2 * 3)"]);
        let r = ks_compare(&d, &d, 1000, 3).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.bootstrap_samples, 1000);
        assert!(r.bandwidth > 0.0);
    }

    #[test]
    fn separated_masses_approach_one() {
        // All mass on one key against mass spread thin over the others.
        let keys: Vec<_> = (0..100).map(|i| ("S".to_string(), i)).collect();
        let mut va = vec![0.0; 100];
        va[0] = 1.0;
        let mut vb = vec![1.0 / 99.0; 100];
        vb[0] = 0.0;
        let a = FrequencyDistribution {
            keys: keys.clone(),
            values: va,
        };
        let b = FrequencyDistribution { keys, values: vb };
        let r = ks_compare(&a, &b, 1000, 0).unwrap();
        assert!(r.statistic > 0.8, "{}", r.statistic);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn probabilistic_suite_is_closer_than_inverse() {
        let sample = dist(&["1 + (2 * 3)"]);
        let g = arithmetic();
        let suite = |text: &str| {
            let pg = parse_grammar(text).unwrap();
            let cfg = GeneratorConfig::new(40, 11, 100).unwrap();
            let inputs: Vec<_> = generate_suite(&pg, &cfg)
                .unwrap()
                .into_iter()
                .map(|i| Sample::new(i.index.to_string(), i.text))
                .collect();
            suite_distribution(&g, &inputs, UnparsablePolicy::Abort)
                .unwrap()
                .distribution
        };
        let prob = suite(ARITHMETIC_LEARNED);
        let inv = suite(ARITHMETIC_INVERTED);
        let near = ks_compare(&sample, &prob, 1000, 1).unwrap().statistic;
        let far = ks_compare(&sample, &inv, 1000, 1).unwrap().statistic;
        assert!(near < far, "{near} vs {far}");
        assert!(uncovered_keys(&sample, &prob).is_empty());
        let unc = uncovered_keys(&sample, &inv);
        assert!(unc.contains(&("Expr".to_string(), 2)));
        assert!(unc.contains(&("Digit".to_string(), 0)));
    }

    #[test]
    fn uncovered_edge_cases() {
        let a = dist(&["1 + (2 * 3)"]);
        assert!(uncovered_keys(&a, &a).is_empty());
        assert!(uncovered_keys(&a, &dist(&["1 + 2"])).is_empty());
        assert_eq!(
            uncovered_keys(&a, &dist(&["4 / 1"])),
            vec![("Term".to_string(), 2), ("Digit".to_string(), 4)]
        );
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(silverman_bandwidth(&[0.5; 8]), 1e-6);
        // sd = sqrt(2.5), IQR = 2 for 1..5, so IQR/1.34 wins.
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((h - 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn p_value_limits() {
        assert_eq!(ks_p_value(0.0, 100, 100), 1.0);
        assert!(ks_p_value(1.0, 1000, 1000) < 1e-12);
        // Q(1.36) is about 0.049.
        let d = 1.36 / (500f64.sqrt() + 0.12 + 0.11 / 500f64.sqrt());
        assert!((ks_p_value(d, 1000, 1000) - 0.0494).abs() < 1e-3);
    }

    #[test]
    fn report_and_csv_formats() {
        let a = dist(&["1"]);
        let b = dist(&["2"]);
        let r = ks_compare(&a, &b, 10, 0).unwrap();
        let text = report_json(&r, &uncovered_keys(&a, &b));
        assert!(
            text.contains("\n  \"uncovered\": [[\"Digit\", 2]],\n"),
            "{text}"
        );
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["uncovered"], serde_json::json!([["Digit", 2]]));
        assert_eq!(json["resamples"], 10);
        let csv = frequency_csv(&a, &b);
        assert_eq!(csv.lines().count(), 23);
        assert!(csv.contains("\nDigit,1,0.2,0\n"));
    }

    proptest! {
        #[test]
        fn merge_walk_matches_brute_force(
            a in prop::collection::vec(prop_oneof![0.0..1.0, Just(0.5)], 1..40),
            b in prop::collection::vec(prop_oneof![0.0..1.0, Just(0.5)], 1..40),
        ) {
            let d = ks_statistic(&a, &b);
            prop_assert!((d - brute_force_ks(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(d, ks_statistic(&b, &a));
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn comparison_is_symmetric(
            va in prop::collection::vec(0u32..5, 6),
            vb in prop::collection::vec(0u32..5, 6),
            seed in any::<u64>(),
        ) {
            prop_assume!(va.iter().any(|&x| x > 0) && vb.iter().any(|&x| x > 0));
            let norm = |v: &[u32]| {
                let s: u32 = v.iter().sum();
                v.iter().map(|&x| x as f64 / s as f64).collect::<Vec<_>>()
            };
            let keys: Vec<_> = (0..6).map(|i| ("S".to_string(), i)).collect();
            let a = FrequencyDistribution { keys: keys.clone(), values: norm(&va) };
            let b = FrequencyDistribution { keys, values: norm(&vb) };
            let ab = ks_compare(&a, &b, 50, seed).unwrap();
            let ba = ks_compare(&b, &a, 50, seed).unwrap();
            prop_assert_eq!(ab.statistic, ba.statistic);
            prop_assert_eq!(ks_compare(&a, &a, 50, seed).unwrap().statistic, 0.0);
        }
    }
}
