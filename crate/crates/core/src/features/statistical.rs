//! Statistical level: LM probability and rank statistics, word and character
//! entropy, and frequency statistics.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ngram::TokenScorer;
use crate::text::Tokenized;

pub const STAT_DIM: usize = 15;

/// Upper bounds of the first three rank buckets; the last bucket is open.
pub const RANK_BUCKETS: [usize; 3] = [10, 100, 1000];

pub const STAT_NAMES: [&str; STAT_DIM] = [
    "mean_log_prob",
    "prob_variance",
    "mean_rank",
    "median_rank",
    "frac_top10",
    "rank_bucket_1_10",
    "rank_bucket_11_100",
    "rank_bucket_101_1000",
    "rank_bucket_gt_1000",
    "h_word",
    "h_char",
    "type_token_ratio",
    "mean_sentence_len",
    "var_sentence_len",
    "hapax_frac",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StatFeatures {
    pub mean_log_prob: f64,
    /// Population variance of the per-token natural-log probabilities.
    pub prob_variance: f64,
    pub mean_rank: f64,
    /// Lower median for even token counts.
    pub median_rank: f64,
    pub frac_top10: f64,
    pub rank_bucket_fracs: [f64; 4],
    pub h_word: f64,
    pub h_char: f64,
    pub type_token_ratio: f64,
    pub mean_sentence_len: f64,
    pub var_sentence_len: f64,
    /// Types seen exactly once, over distinct types.
    pub hapax_frac: f64,
}

impl StatFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let b = &self.rank_bucket_fracs;
        vec![
            self.mean_log_prob,
            self.prob_variance,
            self.mean_rank,
            self.median_rank,
            self.frac_top10,
            b[0],
            b[1],
            b[2],
            b[3],
            self.h_word,
            self.h_char,
            self.type_token_ratio,
            self.mean_sentence_len,
            self.var_sentence_len,
            self.hapax_frac,
        ]
    }
}

/// Shannon entropy in bits of a probability vector; `0·log 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    if let Some(p) = dist.iter().find(|&&p| p < 0.0 || p.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "distribution has negative or NaN mass {p}"
        )));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "distribution sums to {total}, not 1"
        )));
    }
    Ok(dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0))
}

/// Entropy in bits of the empirical distribution given by `counts` over `n`.
/// Counts are summed in sorted order so the result does not depend on the
/// order they arrive in.
pub fn entropy_of_counts(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    sorted
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

fn counts_of<'a, I: IntoIterator<Item = K>, K: std::hash::Hash + Eq + 'a>(
    items: I,
) -> (HashMap<K, usize>, usize) {
    let mut m = HashMap::new();
    let mut n = 0;
    for it in items {
        *m.entry(it).or_insert(0) += 1;
        n += 1;
    }
    (m, n)
}

pub fn word_entropy(tokens: &[String]) -> f64 {
    let (m, n) = counts_of(tokens.iter());
    entropy_of_counts(&m.into_values().collect::<Vec<_>>(), n)
}

pub fn char_entropy(tokens: &[String]) -> f64 {
    let (m, n) = counts_of(tokens.iter().flat_map(|t| t.chars()));
    entropy_of_counts(&m.into_values().collect::<Vec<_>>(), n)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0))
}

pub fn rank_bucket(rank: usize) -> usize {
    RANK_BUCKETS
        .iter()
        .position(|&hi| rank <= hi)
        .unwrap_or(RANK_BUCKETS.len())
}

pub fn extract_statistical<S: TokenScorer + ?Sized>(
    doc: &Tokenized,
    scorer: &S,
) -> Result<StatFeatures> {
    let tokens = &doc.tokens;
    if tokens.is_empty() {
        return Err(Error::Empty("document has no tokens".into()));
    }
    let scores = scorer.score(tokens);
    let n = scores.len() as f64;
    let log_probs: Vec<f64> = scores.iter().map(|s| s.log_prob).collect();
    let (mean_log_prob, prob_variance) = mean_var(&log_probs);

    let mut ranks: Vec<usize> = scores.iter().map(|s| s.rank).collect();
    let mean_rank = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
    ranks.sort_unstable();
    let median_rank = ranks[(ranks.len() - 1) / 2] as f64;
    let mut buckets = [0usize; 4];
    for &r in &ranks {
        buckets[rank_bucket(r)] += 1;
    }
    let rank_bucket_fracs = buckets.map(|c| c as f64 / n);

    let (types, _) = counts_of(tokens.iter());
    let hapax = types.values().filter(|&&c| c == 1).count();
    let sent_lens: Vec<f64> = doc.sentences.iter().map(|s| s.len() as f64).collect();
    let (mean_sentence_len, var_sentence_len) = mean_var(&sent_lens);

    Ok(StatFeatures {
        mean_log_prob,
        prob_variance,
        mean_rank,
        median_rank,
        frac_top10: rank_bucket_fracs[0],
        rank_bucket_fracs,
        h_word: word_entropy(tokens),
        h_char: char_entropy(tokens),
        type_token_ratio: types.len() as f64 / n,
        mean_sentence_len,
        var_sentence_len,
        hapax_frac: hapax as f64 / types.len() as f64,
    })
}
