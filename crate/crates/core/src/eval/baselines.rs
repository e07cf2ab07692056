//! Zero-shot style baselines over LM token scores: mean log-probability,
//! mean log-rank and word entropy with a single learned threshold, and a
//! logistic regression over the four rank-bucket fractions.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::detector::{fit_scorer, FeatureConfig};
use crate::error::{Error, Result};
use crate::eval::metrics::{compute_metrics, Metrics};
use crate::features::statistical::{rank_bucket, word_entropy};
use crate::ngram::{TokenScore, TokenScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LogProb,
    LogRank,
    Entropy,
    Gltr,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::LogProb,
        BaselineKind::LogRank,
        BaselineKind::Entropy,
        BaselineKind::Gltr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::LogProb => "log_prob",
            BaselineKind::LogRank => "log_rank",
            BaselineKind::Entropy => "entropy",
            BaselineKind::Gltr => "gltr",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline `{s}`")))
    }
}

/// What a baseline sees of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub tokens: Vec<String>,
    pub scores: Vec<TokenScore>,
}

impl ScoredDoc {
    pub fn mean_log_prob(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.log_prob))
    }

    /// Mean natural log of the 1-based ranks.
    pub fn mean_log_rank(&self) -> f64 {
        mean(self.scores.iter().map(|s| (s.rank as f64).ln()))
    }

    pub fn word_entropy(&self) -> f64 {
        word_entropy(&self.tokens)
    }

    pub fn bucket_fracs(&self) -> [f64; 4] {
        let mut b = [0.0; 4];
        for s in &self.scores {
            b[rank_bucket(s.rank)] += 1.0;
        }
        let n = self.scores.len().max(1) as f64;
        b.map(|c| c / n)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// `ai` iff value ≥ threshold.
    AtLeast,
    /// `ai` iff value ≤ threshold.
    AtMost,
}

/// Single-scalar decision rule. Thresholds are drawn from the training
/// values themselves (plus ±∞), so the rule is invariant under any strictly
/// increasing transform of the scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub polarity: Polarity,
}

impl ThresholdRule {
    pub fn predict(&self, x: f64) -> Label {
        let ai = match self.polarity {
            Polarity::AtLeast => x >= self.threshold,
            Polarity::AtMost => x <= self.threshold,
        };
        if ai {
            Label::Ai
        } else {
            Label::Human
        }
    }

    /// Maximizes training accuracy. Ties go to the lower threshold, then to
    /// `AtLeast`.
    pub fn fit(values: &[f64], labels: &[Label]) -> Result<Self> {
        if values.is_empty() || values.len() != labels.len() {
            return Err(Error::InvalidArgument(
                "threshold fit needs equal, non-empty values and labels".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("baseline scalar".into()));
        }
        let mut cands: Vec<f64> = values.to_vec();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        cands.insert(0, f64::NEG_INFINITY);
        cands.push(f64::INFINITY);
        let mut best: Option<(usize, ThresholdRule)> = None;
        for &t in &cands {
            for polarity in [Polarity::AtLeast, Polarity::AtMost] {
                let rule = ThresholdRule {
                    threshold: t,
                    polarity,
                };
                let correct = values
                    .iter()
                    .zip(labels)
                    .filter(|(&v, &y)| rule.predict(v) == y)
                    .count();
                if best.as_ref().is_none_or(|b| correct > b.0) {
                    best = Some((correct, rule));
                }
            }
        }
        Ok(best.expect("at least two candidates").1)
    }
}

/// Logistic regression on z-scored rank-bucket fractions, fitted by
/// full-batch gradient descent from zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GltrModel {
    pub mean: [f64; 4],
    pub std: [f64; 4],
    pub weights: [f64; 4],
    pub bias: f64,
}

const GLTR_STEPS: usize = 2000;
const GLTR_LR: f64 = 0.5;

impl GltrModel {
    pub fn fit(x: &[[f64; 4]], labels: &[Label]) -> Result<Self> {
        if x.is_empty() || x.len() != labels.len() {
            return Err(Error::InvalidArgument(
                "gltr fit needs equal, non-empty inputs".into(),
            ));
        }
        let n = x.len() as f64;
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for r in x {
            for j in 0..4 {
                mean[j] += r[j] / n;
            }
        }
        for r in x {
            for j in 0..4 {
                std[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        let std = std.map(|v| if v.sqrt() < 1e-12 { 1.0 } else { v.sqrt() });
        let z: Vec<[f64; 4]> = x
            .iter()
            .map(|r| std::array::from_fn(|j| (r[j] - mean[j]) / std[j]))
            .collect();
        let mut m = GltrModel {
            mean,
            std,
            weights: [0.0; 4],
            bias: 0.0,
        };
        for _ in 0..GLTR_STEPS {
            let mut gw = [0.0; 4];
            let mut gb = 0.0;
            for (r, &y) in z.iter().zip(labels) {
                let err = m.prob_z(r) - y.index() as f64;
                for j in 0..4 {
                    gw[j] += err * r[j] / n;
                }
                gb += err / n;
            }
            for j in 0..4 {
                m.weights[j] -= GLTR_LR * gw[j];
            }
            m.bias -= GLTR_LR * gb;
        }
        Ok(m)
    }

    fn prob_z(&self, z: &[f64; 4]) -> f64 {
        let s: f64 = self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        1.0 / (1.0 + (-s).exp())
    }

    /// P(ai) for raw bucket fractions.
    pub fn prob(&self, x: &[f64; 4]) -> f64 {
        let z = std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j]);
        self.prob_z(&z)
    }

    pub fn predict(&self, x: &[f64; 4]) -> Label {
        if self.prob(x) > 0.5 {
            Label::Ai
        } else {
            Label::Human
        }
    }
}

/// A fitted baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Threshold {
        scalar: BaselineKind,
        rule: ThresholdRule,
    },
    Gltr(GltrModel),
}

fn scalar(kind: BaselineKind, d: &ScoredDoc) -> f64 {
    match kind {
        BaselineKind::LogProb => d.mean_log_prob(),
        BaselineKind::LogRank => d.mean_log_rank(),
        BaselineKind::Entropy => d.word_entropy(),
        BaselineKind::Gltr => unreachable!("gltr has no single scalar"),
    }
}

impl Baseline {
    pub fn fit(kind: BaselineKind, train: &[ScoredDoc], labels: &[Label]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("baseline training split".into()));
        }
        Ok(match kind {
            BaselineKind::Gltr => {
                let x: Vec<[f64; 4]> = train.iter().map(ScoredDoc::bucket_fracs).collect();
                Baseline::Gltr(GltrModel::fit(&x, labels)?)
            }
            k => {
                let v: Vec<f64> = train.iter().map(|d| scalar(k, d)).collect();
                Baseline::Threshold {
                    scalar: k,
                    rule: ThresholdRule::fit(&v, labels)?,
                }
            }
        })
    }

    pub fn predict(&self, doc: &ScoredDoc) -> Label {
        match self {
            Baseline::Threshold { scalar: k, rule } => rule.predict(scalar(*k, doc)),
            Baseline::Gltr(m) => m.predict(&doc.bucket_fracs()),
        }
    }
}

/// Scores a train/test pair with an LM fitted on the training documents
/// only (training documents out-of-fold, as for the detector).
pub fn score_split(
    train: &[&Document],
    test: &[&Document],
    cfg: &FeatureConfig,
) -> Result<(Vec<ScoredDoc>, Vec<ScoredDoc>)> {
    let (lm, train_scores) = fit_scorer(train, cfg)?;
    let tok = |d: &Document| d.tokenized(cfg.max_tokens).tokens;
    let tr = train
        .iter()
        .zip(train_scores)
        .map(|(d, scores)| ScoredDoc {
            tokens: tok(d),
            scores,
        })
        .collect();
    let te = test
        .iter()
        .map(|d| {
            let tokens = tok(d);
            ScoredDoc {
                scores: lm.score(&tokens),
                tokens,
            }
        })
        .collect();
    Ok((tr, te))
}

/// Fits every requested baseline on `train` and evaluates on `test`.
pub fn baseline_detect(
    kinds: &[BaselineKind],
    train: &[&Document],
    test: &[&Document],
    cfg: &FeatureConfig,
) -> Result<Vec<(BaselineKind, Metrics)>> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("baseline train or test split".into()));
    }
    let (tr, te) = score_split(train, test, cfg)?;
    let train_labels: Vec<Label> = train.iter().map(|d| d.label).collect();
    let test_labels: Vec<Label> = test.iter().map(|d| d.label).collect();
    kinds
        .iter()
        .map(|&k| {
            let b = Baseline::fit(k, &tr, &train_labels)?;
            let pred: Vec<Label> = te.iter().map(|d| b.predict(d)).collect();
            Ok((k, compute_metrics(&pred, &test_labels)?))
        })
        .collect()
}
