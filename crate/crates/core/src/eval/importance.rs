//! Permutation importance of a feature level: shuffle that level's block
//! across test documents and measure the accuracy drop.
//!
//! Drops are raw accuracy differences. They are not normalized and need not
//! sum to anything.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::detector::{Annotations, Detector};
use crate::error::{Error, Result};
use crate::eval::metrics::mean_std;
use crate::fusion::{Level, LevelFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainImportance {
    pub n_docs: usize,
    pub baseline_accuracy: f64,
    pub mean_drop: f64,
    pub std_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub group: Level,
    pub n_permutations: usize,
    pub seed: u64,
    pub baseline_accuracy: f64,
    pub mean_drop: f64,
    /// Sample standard deviation over permutations.
    pub std_drop: f64,
    pub drops: Vec<f64>,
    pub per_domain: BTreeMap<String, DomainImportance>,
}

fn accuracy_by(
    det: &Detector,
    feats: &[LevelFeatures],
    labels: &[Label],
    domains: &[&str],
) -> Result<(f64, BTreeMap<String, (usize, usize)>)> {
    let mut correct = 0;
    let mut by_domain: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ((f, &y), &dom) in feats.iter().zip(labels).zip(domains) {
        let ok = det.predict_normalized(f)?.predicted() == y;
        correct += ok as usize;
        let e = by_domain.entry(dom.to_string()).or_default();
        e.0 += ok as usize;
        e.1 += 1;
    }
    Ok((correct as f64 / feats.len() as f64, by_domain))
}

/// Works on already-normalized features.
pub fn permutation_importance_features(
    det: &Detector,
    feats: &[LevelFeatures],
    labels: &[Label],
    domains: &[&str],
    group: Level,
    n_permutations: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if n_permutations < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_permutations must be ≥ 2, got {n_permutations}"
        )));
    }
    if feats.is_empty() || feats.len() != labels.len() || feats.len() != domains.len() {
        return Err(Error::InvalidArgument(
            "importance needs equal, non-empty features, labels and domains".into(),
        ));
    }
    let (base, base_dom) = accuracy_by(det, feats, labels, domains)?;
    let g = group.index();
    let mut drops = Vec::with_capacity(n_permutations);
    let mut dom_drops: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in 0..n_permutations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let mut order: Vec<usize> = (0..feats.len()).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<LevelFeatures> = feats
            .iter()
            .zip(&order)
            .map(|(f, &src)| {
                let mut f = f.clone();
                f.levels[g] = feats[src].levels[g].clone();
                f
            })
            .collect();
        let (acc, dom) = accuracy_by(det, &permuted, labels, domains)?;
        drops.push(base - acc);
        for (d, (c, n)) in dom {
            let b = base_dom[&d].0 as f64 / n as f64;
            dom_drops
                .entry(d)
                .or_default()
                .push(b - c as f64 / n as f64);
        }
    }
    let (mean_drop, std_drop) = mean_std(&drops);
    let per_domain = dom_drops
        .into_iter()
        .map(|(d, v)| {
            let (m, s) = mean_std(&v);
            let (c, n) = base_dom[&d];
            (
                d,
                DomainImportance {
                    n_docs: n,
                    baseline_accuracy: c as f64 / n as f64,
                    mean_drop: m,
                    std_drop: s,
                },
            )
        })
        .collect();
    Ok(ImportanceReport {
        group,
        n_permutations,
        seed,
        baseline_accuracy: base,
        mean_drop,
        std_drop,
        drops,
        per_domain,
    })
}

pub fn permutation_importance(
    det: &Detector,
    test: &[&Document],
    ann: &Annotations,
    group: Level,
    n_permutations: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    let feats: Vec<LevelFeatures> = test
        .iter()
        .map(|d| det.normalized(d, ann))
        .collect::<Result<_>>()?;
    let labels: Vec<Label> = test.iter().map(|d| d.label).collect();
    let domains: Vec<&str> = test.iter().map(|d| d.domain.as_str()).collect();
    permutation_importance_features(det, &feats, &labels, &domains, group, n_permutations, seed)
}
