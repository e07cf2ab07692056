//! Lexicon-based synonym replacement and the before/after comparison.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::detector::{Annotations, Detector};
use crate::error::{Error, Result};
use crate::eval::metrics::Metrics;
use crate::eval::protocols::evaluate;
use crate::text::normalize_word;

pub type Lexicon = BTreeMap<String, Vec<String>>;

/// Reads a lexicon JSON object mapping a word to its synonyms.
pub fn read_lexicon(path: &std::path::Path) -> Result<Lexicon> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaceStats {
    pub eligible: usize,
    pub replaced: usize,
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut c = replacement.chars();
        match c.next() {
            Some(f) => f.to_uppercase().chain(c).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

/// Replaces each eligible word with probability `rate`. A word is eligible
/// when its normalized form has at least one synonym. Surrounding
/// punctuation and the original whitespace are kept, so sentence
/// boundaries do not move.
pub fn synonym_replace<R: Rng>(
    text: &str,
    rate: f64,
    lexicon: &Lexicon,
    rng: &mut R,
) -> (String, ReplaceStats) {
    let mut out = String::with_capacity(text.len());
    let mut stats = ReplaceStats::default();
    let mut rest = text;
    while !rest.is_empty() {
        let ws = rest.len() - rest.trim_start().len();
        out.push_str(&rest[..ws]);
        rest = &rest[ws..];
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let chunk = &rest[..end];
        rest = &rest[end..];
        let syns = normalize_word(chunk)
            .and_then(|w| lexicon.get(&w))
            .filter(|s| !s.is_empty());
        let Some(syns) = syns else {
            out.push_str(chunk);
            continue;
        };
        stats.eligible += 1;
        if rate > 0.0 && rng.gen::<f64>() < rate {
            let pick = &syns[rng.gen_range(0..syns.len())];
            let start = chunk.find(|c: char| !is_edge_punct(c)).unwrap_or(0);
            let stop = chunk
                .rfind(|c: char| !is_edge_punct(c))
                .map_or(chunk.len(), |i| {
                    i + chunk[i..].chars().next().map_or(1, char::len_utf8)
                });
            let core = &chunk[start..stop];
            out.push_str(&chunk[..start]);
            out.push_str(&match_case(core, pick));
            out.push_str(&chunk[stop..]);
            stats.replaced += 1;
        } else {
            out.push_str(chunk);
        }
    }
    (out, stats)
}

fn is_edge_punct(c: char) -> bool {
    normalize_word(&c.to_string()).is_none()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub perturbation: String,
    pub rate: f64,
    pub seed: u64,
    pub before: Metrics,
    pub after: Metrics,
    /// after − before.
    pub accuracy_delta: f64,
    pub stats: ReplaceStats,
}

/// Perturbs every test document, re-extracts features and compares.
/// Perturbed documents keep their ids, so file annotations (parses,
/// embeddings) of the originals are reused.
pub fn robustness_eval(
    det: &Detector,
    test: &[&Document],
    ann: &Annotations,
    rate: f64,
    lexicon: &Lexicon,
    seed: u64,
) -> Result<RobustnessReport> {
    if lexicon.is_empty() {
        return Err(Error::InvalidArgument("synonym lexicon is empty".into()));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} outside [0, 1]"
        )));
    }
    let before = evaluate(det, test, ann)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ReplaceStats::default();
    let perturbed: Vec<Document> = test
        .iter()
        .map(|d| {
            let (text, s) = synonym_replace(&d.text, rate, lexicon, &mut rng);
            stats.eligible += s.eligible;
            stats.replaced += s.replaced;
            let mut p = (*d).clone();
            p.word_count = crate::text::tokenize(&text).len();
            p.text = text;
            p
        })
        .collect();
    let refs: Vec<&Document> = perturbed.iter().collect();
    let after = evaluate(det, &refs, ann)?;
    Ok(RobustnessReport {
        perturbation: "synonym_replace".into(),
        rate,
        seed,
        before,
        after,
        accuracy_delta: after.accuracy - before.accuracy,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        [("big", vec!["large"]), ("cat", vec!["feline", "moggy"])]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.into_iter().map(String::from).collect()))
            .collect()
    }

    #[test]
    fn replaces_cores_and_keeps_punctuation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, s) = synonym_replace("The  Big cat, sat.\n\"cat!\"", 1.0, &lex(), &mut rng);
        assert_eq!(
            s,
            ReplaceStats {
                eligible: 3,
                replaced: 3
            }
        );
        assert!(t.starts_with("The  Large "), "{t}");
        assert!(t.contains(", sat.\n\""));
        assert!(t.ends_with("!\""));
        assert_eq!(crate::text::split_sentences(&t).len(), 2);
    }

    #[test]
    fn zero_rate_and_identity_lexicon_are_no_ops() {
        let text = "A big cat.  Another big cat!";
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(synonym_replace(text, 0.0, &lex(), &mut rng).0, text);
        let ident: Lexicon = [("big".to_string(), vec!["big".to_string()])].into();
        assert_eq!(synonym_replace(text, 1.0, &ident, &mut rng).0, text);
    }
}
