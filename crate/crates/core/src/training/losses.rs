//! The four loss terms and their gradients.
//!
//! All terms are batch means. `L_total = L_cls + λ1 L_con + λ2 L_cons + λ3 L_div`.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::fusion::{FusionTrace, N_CLASSES, N_LEVELS};

/// Posterior floor applied before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub contrastive: f64,
    pub consistency: f64,
    pub diversity: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            contrastive: 0.1,
            consistency: 0.05,
            diversity: 0.01,
            tau: 0.07,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classification: f64,
    pub contrastive: f64,
    pub consistency: f64,
    pub diversity: f64,
    pub total: f64,
    /// No anchor in the batch had a positive; the contrastive term is 0.
    pub contrastive_skipped: bool,
}

impl LossBreakdown {
    pub fn assemble(
        classification: f64,
        contrastive: f64,
        consistency: f64,
        diversity: f64,
        w: &LossWeights,
        contrastive_skipped: bool,
    ) -> Self {
        LossBreakdown {
            classification,
            contrastive,
            consistency,
            diversity,
            total: classification
                + w.contrastive * contrastive
                + w.consistency * consistency
                + w.diversity * diversity,
            contrastive_skipped,
        }
    }

    /// |L_total − weighted sum of the terms|.
    pub fn identity_residual(&self, w: &LossWeights) -> f64 {
        (self.total
            - (self.classification
                + w.contrastive * self.contrastive
                + w.consistency * self.consistency
                + w.diversity * self.diversity))
            .abs()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("classification", self.classification),
            ("contrastive", self.contrastive),
            ("consistency", self.consistency),
            ("diversity", self.diversity),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} loss ({v})")));
            }
        }
        Ok(())
    }
}

/// `−ln max(posterior[label], 1e-12)`.
pub fn classification(posterior: &[f64; N_CLASSES], label: Label) -> f64 {
    -posterior[label.index()].max(PROB_FLOOR).ln()
}

/// Cross-entropy and its gradient w.r.t. the logits (`p − onehot`, zero in
/// the clamped region).
pub fn cross_entropy_with_grad(
    posterior: &[f64; N_CLASSES],
    label: Label,
) -> (f64, [f64; N_CLASSES]) {
    let y = label.index();
    let loss = classification(posterior, label);
    if posterior[y] < PROB_FLOOR {
        return (loss, [0.0; N_CLASSES]);
    }
    let g = std::array::from_fn(|c| posterior[c] - if c == y { 1.0 } else { 0.0 });
    (loss, g)
}

/// `‖p − q‖²` between the fused and semantic-only posteriors.
pub fn consistency(p: &[f64; N_CLASSES], q: &[f64; N_CLASSES]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Loss with its gradients w.r.t. `p` and `q`.
pub fn consistency_with_grad(
    p: &[f64; N_CLASSES],
    q: &[f64; N_CLASSES],
) -> (f64, [f64; N_CLASSES], [f64; N_CLASSES]) {
    let dp: [f64; N_CLASSES] = std::array::from_fn(|c| 2.0 * (p[c] - q[c]));
    (consistency(p, q), dp, dp.map(|x| -x))
}

fn neg_entropy_nats(alpha: &[f64; N_LEVELS]) -> f64 {
    alpha
        .iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| a * a.ln())
        .sum()
}

/// `ln 3 − mean entropy (nats)` of the attention vectors.
pub fn diversity(alphas: &[[f64; N_LEVELS]]) -> f64 {
    if alphas.is_empty() {
        return 0.0;
    }
    let h = alphas.iter().map(neg_entropy_nats).sum::<f64>() / alphas.len() as f64;
    ((N_LEVELS as f64).ln() + h).max(0.0)
}

/// Per-example diversity and its gradient w.r.t. α (`ln α + 1`).
pub fn diversity_with_grad(alpha: &[f64; N_LEVELS]) -> (f64, [f64; N_LEVELS]) {
    let loss = (N_LEVELS as f64).ln() + neg_entropy_nats(alpha);
    let g = alpha.map(|a| a.max(f64::MIN_POSITIVE).ln() + 1.0);
    (loss, g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contrastive {
    pub loss: f64,
    pub skipped: bool,
    pub valid_anchors: usize,
    /// Gradient of `loss` w.r.t. each embedding.
    pub grads: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const NORM_FLOOR: f64 = 1e-12;

fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// `d cos(a, b) / d a`, accumulated as `scale ·` into `out`.
fn add_cosine_grad(out: &mut [f64], a: &[f64], b: &[f64], na: f64, nb: f64, cos: f64, scale: f64) {
    if na < NORM_FLOOR || nb < NORM_FLOOR || scale == 0.0 {
        return;
    }
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o += scale * (y / (na * nb) - cos * x / (na * na));
    }
}

/// The positive chosen for each anchor: the most similar same-label
/// candidate, lowest index on ties. `None` when the anchor is not valid.
fn positives(sim: &[Vec<f64>], labels: &[Label]) -> Vec<Option<usize>> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            if n < 3 {
                return None;
            }
            let mut best: Option<usize> = None;
            for j in (0..n).filter(|&j| j != i && labels[j] == labels[i]) {
                if best.is_none_or(|b| sim[i][j] > sim[i][b]) {
                    best = Some(j);
                }
            }
            best
        })
        .collect()
}

/// Single-positive InfoNCE over cosine similarities, averaged over valid
/// anchors. An anchor is valid when it has a same-label candidate and at
/// least one other candidate; the denominator runs over every `k ≠ i`.
pub fn contrastive_with_grad(h: &[Vec<f64>], labels: &[Label], tau: f64) -> Contrastive {
    let n = h.len();
    let norms: Vec<f64> = h.iter().map(|v| norm(v)).collect();
    let sim: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| cosine(&h[i], &h[k], norms[i], norms[k]))
                .collect()
        })
        .collect();
    let pos = positives(&sim, labels);
    let valid = pos.iter().flatten().count();
    let mut grads = vec![vec![0.0; h.first().map_or(0, Vec::len)]; n];
    if valid == 0 {
        return Contrastive {
            loss: 0.0,
            skipped: true,
            valid_anchors: 0,
            grads,
        };
    }
    let m = valid as f64;
    let mut total = 0.0;
    for (i, j) in pos
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|j| (i, j)))
    {
        let logits: Vec<(usize, f64)> = (0..n)
            .filter(|&k| k != i)
            .map(|k| (k, sim[i][k] / tau))
            .collect();
        let mx = logits.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l.1 - mx).exp()).sum();
        let lse = mx + z.ln();
        total += lse - sim[i][j] / tau;
        for &(k, l) in &logits {
            let w = (l - lse).exp();
            let ds = (w - if k == j { 1.0 } else { 0.0 }) / (tau * m);
            let s = sim[i][k];
            let (hi, hk) = (h[i].clone(), &h[k]);
            add_cosine_grad(&mut grads[i], &hi, hk, norms[i], norms[k], s, ds);
            add_cosine_grad(&mut grads[k], hk, &hi, norms[k], norms[i], s, ds);
        }
    }
    Contrastive {
        loss: total / m,
        skipped: false,
        valid_anchors: valid,
        grads,
    }
}

pub fn contrastive(h: &[Vec<f64>], labels: &[Label], tau: f64) -> (f64, bool) {
    let c = contrastive_with_grad(h, labels, tau);
    (c.loss, c.skipped)
}

/// Full breakdown for traces that were already computed.
pub fn breakdown(traces: &[FusionTrace], labels: &[Label], w: &LossWeights) -> LossBreakdown {
    let b = traces.len().max(1) as f64;
    let cls = traces
        .iter()
        .zip(labels)
        .map(|(t, &l)| classification(&t.posterior, l))
        .sum::<f64>()
        / b;
    let cons = traces
        .iter()
        .map(|t| consistency(&t.posterior, &t.semantic_posterior))
        .sum::<f64>()
        / b;
    let alphas: Vec<[f64; N_LEVELS]> = traces.iter().map(|t| t.alpha).collect();
    let finals: Vec<Vec<f64>> = traces.iter().map(|t| t.final_repr.clone()).collect();
    let (con, skipped) = contrastive(&finals, labels, w.tau);
    LossBreakdown::assemble(cls, con, cons, diversity(&alphas), w, skipped)
}
