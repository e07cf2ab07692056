//! Syntactic level: relation histogram, tree shape, Yngve depth, a
//! dependency analogue of Frazier complexity, and hashed POS n-grams.
//!
//! Layout (100 slots): 32 hashed DEPREL fractions, then `avg_tree_depth`,
//! `branching_factor`, `yngve_depth`, `frazier_score`, then 64 hashed POS
//! n-gram fractions for n in {2, 3, 4}.
//!
//! Hashing is FNV-1a-64 modulo the slot count. A relation label is hashed as
//! its UTF-8 bytes; a POS n-gram is hashed as its tags joined with `|`
//! (e.g. `DET|NOUN|VERB`). N-grams never cross sentence boundaries.

use crate::features::conllu::ParsedSentence;
use crate::text::hash_slot;

pub const DEPREL_SLOTS: usize = 32;
pub const POS_SLOTS: usize = 64;
pub const TREE_STATS: usize = 4;
pub const SYN_DIM: usize = DEPREL_SLOTS + TREE_STATS + POS_SLOTS;
pub const POS_NGRAM_ORDERS: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct SynFeatures {
    pub deprel_freq: Vec<f64>,
    pub avg_tree_depth: f64,
    pub branching_factor: f64,
    pub yngve_depth: f64,
    pub frazier_score: f64,
    pub pos_ngram_vec: Vec<f64>,
    /// Set when the document had no parse; all values are then zero.
    pub missing_parse: bool,
}

impl SynFeatures {
    pub fn missing() -> Self {
        SynFeatures {
            deprel_freq: vec![0.0; DEPREL_SLOTS],
            avg_tree_depth: 0.0,
            branching_factor: 0.0,
            yngve_depth: 0.0,
            frazier_score: 0.0,
            pos_ngram_vec: vec![0.0; POS_SLOTS],
            missing_parse: true,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(SYN_DIM);
        v.extend_from_slice(&self.deprel_freq);
        v.extend_from_slice(&[
            self.avg_tree_depth,
            self.branching_factor,
            self.yngve_depth,
            self.frazier_score,
        ]);
        v.extend_from_slice(&self.pos_ngram_vec);
        v
    }
}

/// Depth of every token (root = 0), in token order.
pub fn depths(sent: &ParsedSentence) -> Vec<usize> {
    let toks = sent.tokens();
    let mut memo: Vec<Option<usize>> = vec![None; toks.len()];
    fn depth_of(
        i: usize,
        toks: &[crate::features::conllu::DepToken],
        memo: &mut [Option<usize>],
    ) -> usize {
        if let Some(d) = memo[i] {
            return d;
        }
        let d = match toks[i].head {
            0 => 0,
            h => depth_of(h - 1, toks, memo) + 1,
        };
        memo[i] = Some(d);
        d
    }
    (0..toks.len())
        .map(|i| depth_of(i, toks, &mut memo))
        .collect()
}

fn dependents(sent: &ParsedSentence) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); sent.len()];
    for (i, t) in sent.tokens().iter().enumerate() {
        if t.head > 0 {
            out[t.head - 1].push(i);
        }
    }
    out
}

/// (mean token depth, mean dependent count over tokens with ≥1 dependent).
pub fn tree_depth_stats(sent: &ParsedSentence) -> (f64, f64) {
    if sent.is_empty() {
        return (0.0, 0.0);
    }
    let d = depths(sent);
    let avg = d.iter().sum::<usize>() as f64 / d.len() as f64;
    let deps = dependents(sent);
    let heads: Vec<usize> = deps.iter().map(Vec::len).filter(|&c| c > 0).collect();
    let branching = if heads.is_empty() {
        0.0
    } else {
        heads.iter().sum::<usize>() as f64 / heads.len() as f64
    };
    (avg, branching)
}

/// Sum of token depths over sentence length.
pub fn yngve(sent: &ParsedSentence) -> f64 {
    if sent.is_empty() {
        return 0.0;
    }
    depths(sent).iter().sum::<usize>() as f64 / sent.len() as f64
}

/// Mean over tokens of the number of consecutive leftmost-dependent links
/// walking from the token toward the root. A link counts when the child is
/// the lowest-indexed dependent of its head; the walk stops at the first
/// link that does not.
pub fn frazier(sent: &ParsedSentence) -> f64 {
    if sent.is_empty() {
        return 0.0;
    }
    let deps = dependents(sent);
    let toks = sent.tokens();
    let total: usize = (0..toks.len())
        .map(|start| {
            let mut cur = start;
            let mut chain = 0;
            while toks[cur].head != 0 {
                let head = toks[cur].head - 1;
                if deps[head].first() != Some(&cur) {
                    break;
                }
                chain += 1;
                cur = head;
            }
            chain
        })
        .sum();
    total as f64 / toks.len() as f64
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Raw hashed POS n-gram counts (before normalization).
pub fn pos_ngram_counts(sents: &[ParsedSentence]) -> Vec<f64> {
    let mut v = vec![0.0; POS_SLOTS];
    for s in sents {
        let tags: Vec<&str> = s.tokens().iter().map(|t| t.upos.as_str()).collect();
        for n in POS_NGRAM_ORDERS {
            for w in tags.windows(n) {
                v[hash_slot(&w.join("|"), POS_SLOTS)] += 1.0;
            }
        }
    }
    v
}

pub fn pos_ngrams(sents: &[ParsedSentence]) -> Vec<f64> {
    let mut v = pos_ngram_counts(sents);
    l1_normalize(&mut v);
    v
}

/// Document-level features. Tree metrics are unweighted means over
/// sentences; the relation histogram pools all tokens.
pub fn extract_syntactic(sents: &[ParsedSentence]) -> SynFeatures {
    if sents.is_empty() {
        return SynFeatures::missing();
    }
    let mut deprel_freq = vec![0.0; DEPREL_SLOTS];
    let (mut depth, mut branch, mut yng, mut fraz) = (0.0, 0.0, 0.0, 0.0);
    for s in sents {
        for t in s.tokens() {
            deprel_freq[hash_slot(&t.deprel, DEPREL_SLOTS)] += 1.0;
        }
        let (d, b) = tree_depth_stats(s);
        depth += d;
        branch += b;
        yng += yngve(s);
        fraz += frazier(s);
    }
    l1_normalize(&mut deprel_freq);
    let n = sents.len() as f64;
    SynFeatures {
        deprel_freq,
        avg_tree_depth: depth / n,
        branching_factor: branch / n,
        yngve_depth: yng / n,
        frazier_score: fraz / n,
        pos_ngram_vec: pos_ngrams(sents),
        missing_parse: false,
    }
}
