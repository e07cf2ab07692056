//! Add-k smoothed n-gram language model.
//!
//! Contexts are the previous `order - 1` token ids, left-padded with a
//! begin-of-sequence marker that is never predicted. The vocabulary is the
//! sorted set of observed tokens plus [`UNK`]; out-of-vocabulary tokens are
//! scored as [`UNK`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
const BOS: u32 = u32::MAX;
const FORMAT: &str = "hierdetect-ngram";
const FORMAT_VERSION: u32 = 1;

/// Score of one token under its context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenScore {
    /// Natural-log conditional probability.
    pub log_prob: f64,
    /// 1-based rank of the token in the descending-probability vocabulary.
    pub rank: usize,
}

/// Anything that can assign per-token log-probabilities and ranks.
pub trait TokenScorer {
    fn score(&self, tokens: &[String]) -> Vec<TokenScore>;
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    smoothing_k: f64,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    unk: u32,
    counts: HashMap<Vec<u32>, ContextCounts>,
}

impl NgramModel {
    pub fn fit<S: AsRef<[String]>>(corpus: &[S], order: usize, smoothing_k: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("n-gram order must be ≥ 1".into()));
        }
        if !(smoothing_k > 0.0 && smoothing_k.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing k must be positive, got {smoothing_k}"
            )));
        }
        if corpus.iter().all(|s| s.as_ref().is_empty()) {
            return Err(Error::Empty("n-gram training corpus has no tokens".into()));
        }
        let mut vocab: Vec<String> = corpus
            .iter()
            .flat_map(|s| s.as_ref().iter().cloned())
            .chain(std::iter::once(UNK.to_string()))
            .collect();
        vocab.sort();
        vocab.dedup();
        let ids: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let unk = ids[UNK];
        let mut model = NgramModel {
            order,
            smoothing_k,
            vocab,
            ids,
            unk,
            counts: HashMap::new(),
        };
        for seq in corpus {
            let ids = model.encode(seq.as_ref());
            for (pos, &tok) in ids.iter().enumerate() {
                let ctx = model.context(&ids, pos);
                let entry = model.counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(tok).or_default() += 1;
            }
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| *self.ids.get(t).unwrap_or(&self.unk))
            .collect()
    }

    fn context(&self, ids: &[u32], pos: usize) -> Vec<u32> {
        let n = self.order - 1;
        (0..n)
            .map(|j| {
                let back = n - j;
                if pos >= back {
                    ids[pos - back]
                } else {
                    BOS
                }
            })
            .collect()
    }

    fn count(&self, ctx: &[u32], tok: u32) -> (u64, u64) {
        match self.counts.get(ctx) {
            Some(c) => (c.next.get(&tok).copied().unwrap_or(0), c.total),
            None => (0, 0),
        }
    }

    /// P(token | context) where `context` holds the preceding tokens (only
    /// the last `order - 1` are used; shorter contexts are BOS-padded).
    pub fn prob(&self, context: &[String], token: &str) -> f64 {
        let ctx = self.context_of(context);
        let tok = *self.ids.get(token).unwrap_or(&self.unk);
        self.prob_ids(&ctx, tok)
    }

    fn context_of(&self, context: &[String]) -> Vec<u32> {
        let ids = self.encode(context);
        let mut full = ids.clone();
        full.push(self.unk);
        self.context(&full, ids.len())
    }

    fn prob_ids(&self, ctx: &[u32], tok: u32) -> f64 {
        let (c, total) = self.count(ctx, tok);
        let v = self.vocab.len() as f64;
        (c as f64 + self.smoothing_k) / (total as f64 + self.smoothing_k * v)
    }

    /// Conditional distribution over the whole vocabulary, in vocab order.
    pub fn distribution(&self, context: &[String]) -> Vec<f64> {
        let ctx = self.context_of(context);
        (0..self.vocab.len() as u32)
            .map(|t| self.prob_ids(&ctx, t))
            .collect()
    }

    fn rank_ids(&self, ctx: &[u32], tok: u32) -> usize {
        // Probability is monotone in the raw count; ties go to the
        // lexicographically smaller token, which is the smaller id.
        let Some(cc) = self.counts.get(ctx) else {
            return tok as usize + 1;
        };
        let own = cc.next.get(&tok).copied().unwrap_or(0);
        let mut ahead = 0usize;
        if own > 0 {
            for (&t, &c) in &cc.next {
                if c > own || (c == own && t < tok) {
                    ahead += 1;
                }
            }
        } else {
            // every observed successor is ahead, plus unseen tokens with a
            // smaller id
            let observed_before = cc.next.keys().filter(|&&t| t < tok).count();
            ahead = cc.next.len() + (tok as usize - observed_before);
        }
        ahead + 1
    }

    /// Per-token perplexity of a set of sequences.
    pub fn perplexity<S: AsRef<[String]>>(&self, seqs: &[S]) -> f64 {
        let mut nll = 0.0;
        let mut n = 0usize;
        for s in seqs {
            for sc in self.score(s.as_ref()) {
                nll -= sc.log_prob;
                n += 1;
            }
        }
        (nll / n.max(1) as f64).exp()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&s)?)
    }

    pub(crate) fn to_file(&self) -> NgramFile {
        let mut counts: BTreeMap<Vec<u32>, BTreeMap<u32, u64>> = BTreeMap::new();
        for (ctx, cc) in &self.counts {
            counts.insert(ctx.clone(), cc.next.iter().map(|(&k, &v)| (k, v)).collect());
        }
        NgramFile {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            order: self.order,
            smoothing_k: self.smoothing_k,
            vocab: self.vocab.clone(),
            counts: counts
                .into_iter()
                .map(|(context, next)| CountRow {
                    context,
                    next: next.into_iter().collect(),
                })
                .collect(),
        }
    }

    pub(crate) fn from_file(f: NgramFile) -> Result<Self> {
        if f.format != FORMAT || f.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported n-gram model format {} v{}",
                f.format, f.version
            )));
        }
        if f.order == 0 || !(f.smoothing_k > 0.0) {
            return Err(Error::Checkpoint("invalid order or smoothing k".into()));
        }
        let ids: HashMap<String, u32> = f
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let unk = *ids
            .get(UNK)
            .ok_or_else(|| Error::Checkpoint("vocabulary lacks the UNK token".into()))?;
        let v = f.vocab.len() as u32;
        let mut counts = HashMap::new();
        for row in f.counts {
            let ok_ctx =
                row.context.len() == f.order - 1 && row.context.iter().all(|&t| t < v || t == BOS);
            if !ok_ctx || row.next.iter().any(|&(t, _)| t >= v) {
                return Err(Error::Checkpoint(
                    "count table references unknown ids".into(),
                ));
            }
            let next: HashMap<u32, u64> = row.next.into_iter().collect();
            let total = next.values().sum();
            counts.insert(row.context, ContextCounts { total, next });
        }
        Ok(NgramModel {
            order: f.order,
            smoothing_k: f.smoothing_k,
            vocab: f.vocab,
            ids,
            unk,
            counts,
        })
    }
}

impl TokenScorer for NgramModel {
    fn score(&self, tokens: &[String]) -> Vec<TokenScore> {
        let ids = self.encode(tokens);
        (0..ids.len())
            .map(|pos| {
                let ctx = self.context(&ids, pos);
                TokenScore {
                    log_prob: self.prob_ids(&ctx, ids[pos]).ln(),
                    rank: self.rank_ids(&ctx, ids[pos]),
                }
            })
            .collect()
    }
}

/// Serialized model layout: context ids use `4294967295` for the
/// begin-of-sequence pad; rows and successors are sorted by id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NgramFile {
    format: String,
    version: u32,
    order: usize,
    smoothing_k: f64,
    vocab: Vec<String>,
    counts: Vec<CountRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CountRow {
    context: Vec<u32>,
    next: Vec<(u32, u64)>,
}
