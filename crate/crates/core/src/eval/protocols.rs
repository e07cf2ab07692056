//! In-domain, cross-domain and ablation protocols.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label};
use crate::detector::{Annotations, Detector, FeatureConfig};
use crate::error::{Error, Result};
use crate::eval::baselines::{baseline_detect, BaselineKind};
use crate::eval::metrics::{compute_metrics, mean_std, Metrics};
use crate::fusion::{AblationConfig, Level};
use crate::training::TrainingConfig;

/// Name used for the fusion detector in report rows.
pub const FUSION_NAME: &str = "fusion";

pub fn evaluate(det: &Detector, test: &[&Document], ann: &Annotations) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test split".into()));
    }
    let pred = det.predict(test, ann)?;
    let gold: Vec<Label> = test.iter().map(|d| d.label).collect();
    compute_metrics(&pred, &gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRow {
    pub detector: String,
    pub metrics: Metrics,
}

/// Fusion detector plus the requested baselines on one train/test pair.
pub fn compare_detectors(
    train: &[&Document],
    test: &[&Document],
    ann: &Annotations,
    fcfg: &FeatureConfig,
    tcfg: &TrainingConfig,
    baselines: &[BaselineKind],
) -> Result<Vec<DetectorRow>> {
    let (det, _) = Detector::fit(train, ann, fcfg, tcfg, &AblationConfig::COMPLETE)?;
    let mut rows = vec![DetectorRow {
        detector: FUSION_NAME.into(),
        metrics: evaluate(&det, test, ann)?,
    }];
    for (k, m) in baseline_detect(baselines, train, test, fcfg)? {
        rows.push(DetectorRow {
            detector: k.name().into(),
            metrics: m,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainRow {
    /// `"A→B"`: trained on A, evaluated on B.
    pub direction: String,
    pub detector: String,
    pub metrics: Metrics,
}

fn check_disjoint(a: &Corpus, b: &Corpus) -> Result<()> {
    let ids: BTreeSet<&str> = a.docs().iter().map(|d| d.id.as_str()).collect();
    let shared: Vec<&str> = b
        .docs()
        .iter()
        .map(|d| d.id.as_str())
        .filter(|id| ids.contains(id))
        .collect();
    if !shared.is_empty() {
        let shown: Vec<&str> = shared.iter().take(5).copied().collect();
        return Err(Error::Protocol(format!(
            "{} document id(s) appear in both corpora, e.g. {}",
            shared.len(),
            shown.join(", ")
        )));
    }
    Ok(())
}

/// Trains everything (LM, thresholds, network) on `a` alone and evaluates
/// on `b`.
pub fn cross_domain_eval(
    (name_a, a): (&str, &Corpus),
    (name_b, b): (&str, &Corpus),
    ann: &Annotations,
    fcfg: &FeatureConfig,
    tcfg: &TrainingConfig,
    baselines: &[BaselineKind],
) -> Result<Vec<CrossDomainRow>> {
    check_disjoint(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("cross-domain corpus".into()));
    }
    let train: Vec<&Document> = a.docs().iter().collect();
    let test: Vec<&Document> = b.docs().iter().collect();
    let direction = format!("{name_a}→{name_b}");
    Ok(
        compare_detectors(&train, &test, ann, fcfg, tcfg, baselines)?
            .into_iter()
            .map(|r| CrossDomainRow {
                direction: direction.clone(),
                detector: r.detector,
                metrics: r.metrics,
            })
            .collect(),
    )
}

/// Both directions, A→B rows first.
pub fn cross_domain_both(
    a: (&str, &Corpus),
    b: (&str, &Corpus),
    ann: &Annotations,
    fcfg: &FeatureConfig,
    tcfg: &TrainingConfig,
    baselines: &[BaselineKind],
) -> Result<Vec<CrossDomainRow>> {
    let mut rows = cross_domain_eval(a, b, ann, fcfg, tcfg, baselines)?;
    rows.extend(cross_domain_eval(b, a, ann, fcfg, tcfg, baselines)?);
    Ok(rows)
}

/// The six component-analysis configurations, in table order.
pub fn ablation_preset() -> Vec<AblationConfig> {
    let cfg = |sem, syn, stat, adaptive| AblationConfig {
        use_semantic: sem,
        use_syntactic: syn,
        use_statistical: stat,
        adaptive_fusion: adaptive,
    };
    vec![
        cfg(true, false, false, true),
        cfg(true, true, false, true),
        cfg(true, false, true, true),
        cfg(false, true, true, true),
        cfg(true, true, true, false),
        cfg(true, true, true, true),
    ]
}

/// Single-level configurations, one per level.
pub fn single_level_configs() -> Vec<AblationConfig> {
    Level::ALL
        .iter()
        .map(|&l| AblationConfig::only(l))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub config: AblationConfig,
    pub seeds: Vec<u64>,
    /// One entry per seed.
    pub metrics: Vec<Metrics>,
    pub mean_accuracy: f64,
    /// Sample standard deviation over training seeds.
    pub std_accuracy: f64,
}

/// One full train + evaluation per (config, seed).
pub fn ablate(
    configs: &[AblationConfig],
    train: &[&Document],
    test: &[&Document],
    ann: &Annotations,
    fcfg: &FeatureConfig,
    tcfg: &TrainingConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one seed".into(),
        ));
    }
    for c in configs {
        c.validate()?;
    }
    configs
        .iter()
        .map(|c| {
            let metrics = seeds
                .iter()
                .map(|&seed| {
                    let t = TrainingConfig {
                        seed,
                        ..tcfg.clone()
                    };
                    let (det, _) = Detector::fit(train, ann, fcfg, &t, c)?;
                    evaluate(&det, test, ann)
                })
                .collect::<Result<Vec<_>>>()?;
            let accs: Vec<f64> = metrics.iter().map(|m| m.accuracy).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&accs);
            Ok(AblationRow {
                label: c.label(),
                config: *c,
                seeds: seeds.to_vec(),
                metrics,
                mean_accuracy,
                std_accuracy,
            })
        })
        .collect()
}
