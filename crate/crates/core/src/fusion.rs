//! Adaptive attention + gating fusion network with a two-class head.
//!
//! For each level `i` with input `F_i`:
//!
//! ```text
//! P_i     = tanh(W_i F_i + b_i)                 projection to d_h
//! s_i     = a · P_i + c_i                       attention score
//! α       = softmax(s)
//! F_fused = Σ α_i P_i
//! g_i     = σ(G_i P_i + e_i)                    gate
//! x       = (1/3) Σ g_i ⊙ P_i + F_fused         residual is F_fused
//! F_final = LayerNorm(x)  (population variance, ε = 1e-5, affine γ/β)
//! logits  = C F_final + c0,  posterior = softmax(logits)
//! ```
//!
//! With adaptive fusion disabled, α is fixed at 1/3 and every gate is 1.
//! Disabled levels see a zero input and their parameter block is frozen.
//! Gradients are exact and hand-derived; see [`backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::training::losses::{self, LossBreakdown, LossWeights};

pub const N_LEVELS: usize = 3;
pub const N_CLASSES: usize = 2;
pub const LN_EPS: f64 = 1e-5;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Semantic,
    Syntactic,
    Statistical,
}

impl Level {
    pub const ALL: [Level; N_LEVELS] = [Level::Semantic, Level::Syntactic, Level::Statistical];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Semantic => "semantic",
            Level::Syntactic => "syntactic",
            Level::Statistical => "statistical",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Level::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature level `{s}`")))
    }
}

/// The three per-level feature vectors of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFeatures {
    pub levels: [Vec<f64>; N_LEVELS],
}

impl LevelFeatures {
    pub fn new(semantic: Vec<f64>, syntactic: Vec<f64>, statistical: Vec<f64>) -> Self {
        LevelFeatures {
            levels: [semantic, syntactic, statistical],
        }
    }

    pub fn get(&self, level: Level) -> &[f64] {
        &self.levels[level.index()]
    }

    pub fn dims(&self) -> [usize; N_LEVELS] {
        [
            self.levels[0].len(),
            self.levels[1].len(),
            self.levels[2].len(),
        ]
    }
}

/// Which levels feed the network and whether attention/gating are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationConfig {
    pub use_semantic: bool,
    pub use_syntactic: bool,
    pub use_statistical: bool,
    pub adaptive_fusion: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig::COMPLETE
    }
}

impl AblationConfig {
    pub const COMPLETE: AblationConfig = AblationConfig {
        use_semantic: true,
        use_syntactic: true,
        use_statistical: true,
        adaptive_fusion: true,
    };

    pub fn only(level: Level) -> Self {
        let mut c = AblationConfig {
            use_semantic: false,
            use_syntactic: false,
            use_statistical: false,
            adaptive_fusion: true,
        };
        c.set(level, true);
        c
    }

    pub fn enabled(&self, level: Level) -> bool {
        match level {
            Level::Semantic => self.use_semantic,
            Level::Syntactic => self.use_syntactic,
            Level::Statistical => self.use_statistical,
        }
    }

    pub fn set(&mut self, level: Level, on: bool) {
        match level {
            Level::Semantic => self.use_semantic = on,
            Level::Syntactic => self.use_syntactic = on,
            Level::Statistical => self.use_statistical = on,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if Level::ALL.iter().any(|&l| self.enabled(l)) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "ablation config disables every feature level".into(),
            ))
        }
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = Level::ALL
            .iter()
            .filter(|&&l| self.enabled(l))
            .map(|l| l.name())
            .collect();
        let mut s = names.join("+");
        if !self.adaptive_fusion {
            s.push_str(" (fixed fusion)");
        }
        s
    }
}

/// Dense row-major matrix; vectors are `n × 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    fn glorot<R: Rng>(
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            if yr != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += w * yr;
                }
            }
        }
        out
    }

    /// `self += a bᵀ`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (row, &ar) in self.data.chunks_exact_mut(self.cols).zip(a) {
            if ar != 0.0 {
                for (w, bv) in row.iter_mut().zip(b) {
                    *w += ar * bv;
                }
            }
        }
    }

    pub fn add_vec(&mut self, v: &[f64]) {
        for (w, x) in self.data.iter_mut().zip(v) {
            *w += x;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBlock {
    pub proj_w: Matrix,
    pub proj_b: Matrix,
    pub att_bias: Matrix,
    pub gate_w: Matrix,
    pub gate_b: Matrix,
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub hidden: usize,
    pub levels: [LevelBlock; N_LEVELS],
    pub att_w: Matrix,
    pub ln_gain: Matrix,
    pub ln_bias: Matrix,
    pub cls_w: Matrix,
    pub cls_b: Matrix,
}

impl FusionParams {
    /// Glorot-uniform weights, zero biases, unit LayerNorm gain.
    pub fn init(seed: u64, hidden: usize, dims: [usize; N_LEVELS]) -> Result<Self> {
        if hidden < 2 {
            return Err(Error::InvalidArgument(format!(
                "hidden size must be ≥ 2, got {hidden}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "feature dimensions must be positive, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = |dim: usize| LevelBlock {
            proj_w: Matrix::glorot(hidden, dim, dim, hidden, &mut rng),
            proj_b: Matrix::zeros(hidden, 1),
            att_bias: Matrix::zeros(1, 1),
            gate_w: Matrix::glorot(hidden, hidden, hidden, hidden, &mut rng),
            gate_b: Matrix::zeros(hidden, 1),
        };
        let levels = [block(dims[0]), block(dims[1]), block(dims[2])];
        let att_w = Matrix::glorot(hidden, 1, hidden, 1, &mut rng);
        let cls_w = Matrix::glorot(N_CLASSES, hidden, hidden, N_CLASSES, &mut rng);
        Ok(FusionParams {
            hidden,
            levels,
            att_w,
            ln_gain: Matrix::filled(hidden, 1, 1.0),
            ln_bias: Matrix::zeros(hidden, 1),
            cls_w,
            cls_b: Matrix::zeros(N_CLASSES, 1),
        })
    }

    pub fn dims(&self) -> [usize; N_LEVELS] {
        [
            self.levels[0].proj_w.cols,
            self.levels[1].proj_w.cols,
            self.levels[2].proj_w.cols,
        ]
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        z
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(5 * N_LEVELS + 5);
        for (l, b) in Level::ALL.iter().zip(&self.levels) {
            let n = l.name();
            out.push((format!("{n}.proj_w"), &b.proj_w));
            out.push((format!("{n}.proj_b"), &b.proj_b));
            out.push((format!("{n}.att_bias"), &b.att_bias));
            out.push((format!("{n}.gate_w"), &b.gate_w));
            out.push((format!("{n}.gate_b"), &b.gate_b));
        }
        out.push(("att_w".into(), &self.att_w));
        out.push(("ln_gain".into(), &self.ln_gain));
        out.push(("ln_bias".into(), &self.ln_bias));
        out.push(("cls_w".into(), &self.cls_w));
        out.push(("cls_b".into(), &self.cls_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::with_capacity(5 * N_LEVELS + 5);
        for (l, b) in Level::ALL.iter().zip(self.levels.iter_mut()) {
            let n = l.name();
            out.push((format!("{n}.proj_w"), &mut b.proj_w));
            out.push((format!("{n}.proj_b"), &mut b.proj_b));
            out.push((format!("{n}.att_bias"), &mut b.att_bias));
            out.push((format!("{n}.gate_w"), &mut b.gate_w));
            out.push((format!("{n}.gate_b"), &mut b.gate_b));
        }
        out.push(("att_w".into(), &mut self.att_w));
        out.push(("ln_gain".into(), &mut self.ln_gain));
        out.push(("ln_bias".into(), &mut self.ln_bias));
        out.push(("cls_w".into(), &mut self.cls_w));
        out.push(("cls_b".into(), &mut self.cls_b));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Zeroes the gradient of every tensor an ablation keeps fixed.
    pub fn mask_frozen(&mut self, ablation: &AblationConfig) {
        for level in Level::ALL {
            let b = &mut self.levels[level.index()];
            if !ablation.enabled(level) {
                b.proj_w.fill(0.0);
                b.proj_b.fill(0.0);
                b.att_bias.fill(0.0);
                b.gate_w.fill(0.0);
                b.gate_b.fill(0.0);
            }
            if !ablation.adaptive_fusion {
                b.att_bias.fill(0.0);
                b.gate_w.fill(0.0);
                b.gate_b.fill(0.0);
            }
        }
        if !ablation.adaptive_fusion {
            self.att_w.fill(0.0);
        }
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &FusionParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace {
    pub inputs: [Vec<f64>; N_LEVELS],
    pub projections: [Vec<f64>; N_LEVELS],
    pub scores: [f64; N_LEVELS],
    pub alpha: [f64; N_LEVELS],
    pub gates: [Vec<f64>; N_LEVELS],
    pub fused: Vec<f64>,
    pub pre_norm: Vec<f64>,
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    pub final_repr: Vec<f64>,
    pub logits: [f64; N_CLASSES],
    pub posterior: [f64; N_CLASSES],
    /// Posterior of the classifier applied to the semantic projection alone.
    pub semantic_posterior: [f64; N_CLASSES],
}

impl FusionTrace {
    pub fn predicted(&self) -> Label {
        if self.posterior[1] > self.posterior[0] {
            Label::Ai
        } else {
            Label::Human
        }
    }
}

pub fn softmax<const N: usize>(x: [f64; N]) -> [f64; N] {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = x.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// LayerNorm without the affine part: returns (x̂, 1/σ).
pub fn layer_norm(x: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    (x.iter().map(|v| (v - mean) * inv).collect(), inv)
}

fn check_shapes(params: &FusionParams, feats: &LevelFeatures) -> Result<()> {
    if params.dims() != feats.dims() {
        return Err(Error::Shape(format!(
            "features have dims {:?}, network expects {:?}",
            feats.dims(),
            params.dims()
        )));
    }
    for (l, v) in Level::ALL.iter().zip(&feats.levels) {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{} features", l.name())));
        }
    }
    Ok(())
}

fn classify(params: &FusionParams, h: &[f64]) -> [f64; N_CLASSES] {
    let l = params.cls_w.matvec(h);
    [l[0] + params.cls_b.data[0], l[1] + params.cls_b.data[1]]
}

pub fn forward(
    params: &FusionParams,
    feats: &LevelFeatures,
    ablation: &AblationConfig,
) -> Result<FusionTrace> {
    check_shapes(params, feats)?;
    let d = params.hidden;
    let inputs: [Vec<f64>; N_LEVELS] = std::array::from_fn(|i| {
        if ablation.enabled(Level::ALL[i]) {
            feats.levels[i].clone()
        } else {
            vec![0.0; feats.levels[i].len()]
        }
    });
    let projections: [Vec<f64>; N_LEVELS] = std::array::from_fn(|i| {
        let b = &params.levels[i];
        b.proj_w
            .matvec(&inputs[i])
            .iter()
            .zip(&b.proj_b.data)
            .map(|(z, bias)| (z + bias).tanh())
            .collect()
    });
    let scores: [f64; N_LEVELS] = std::array::from_fn(|i| {
        params
            .att_w
            .data
            .iter()
            .zip(&projections[i])
            .map(|(a, p)| a * p)
            .sum::<f64>()
            + params.levels[i].att_bias.data[0]
    });
    let alpha = if ablation.adaptive_fusion {
        softmax(scores)
    } else {
        [1.0 / N_LEVELS as f64; N_LEVELS]
    };
    let gates: [Vec<f64>; N_LEVELS] = std::array::from_fn(|i| {
        if ablation.adaptive_fusion {
            let b = &params.levels[i];
            b.gate_w
                .matvec(&projections[i])
                .iter()
                .zip(&b.gate_b.data)
                .map(|(u, e)| sigmoid(u + e))
                .collect()
        } else {
            vec![1.0; d]
        }
    });
    let mut fused = vec![0.0; d];
    let mut pre_norm = vec![0.0; d];
    for i in 0..N_LEVELS {
        for k in 0..d {
            fused[k] += alpha[i] * projections[i][k];
            pre_norm[k] += gates[i][k] * projections[i][k] / N_LEVELS as f64;
        }
    }
    for (x, f) in pre_norm.iter_mut().zip(&fused) {
        *x += f;
    }
    let (normalized, inv_std) = layer_norm(&pre_norm, LN_EPS);
    let final_repr: Vec<f64> = normalized
        .iter()
        .zip(params.ln_gain.data.iter().zip(&params.ln_bias.data))
        .map(|(x, (g, b))| g * x + b)
        .collect();
    let logits = classify(params, &final_repr);
    let posterior = softmax(logits);
    let semantic_posterior = softmax(classify(params, &projections[0]));
    Ok(FusionTrace {
        inputs,
        projections,
        scores,
        alpha,
        gates,
        fused,
        pre_norm,
        normalized,
        inv_std,
        final_repr,
        logits,
        posterior,
        semantic_posterior,
    })
}

/// Gradient of the softmax-composed loss w.r.t. the logits, given the
/// gradient w.r.t. the probabilities.
fn softmax_backward<const N: usize>(p: &[f64; N], dp: &[f64; N]) -> [f64; N] {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    std::array::from_fn(|i| p[i] * (dp[i] - dot))
}

/// Exact gradients of `B · L_total` for a batch of `B` examples, where
/// `L_total` is the batch-mean multi-task loss. Per-example terms therefore
/// contribute summed gradients; the contrastive term contributes `B` times
/// the gradient of its anchor mean. Frozen tensors get zero gradient.
pub fn backward(
    params: &FusionParams,
    batch: &[(&LevelFeatures, Label)],
    weights: &LossWeights,
    ablation: &AblationConfig,
) -> Result<(LossBreakdown, FusionParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("backward on an empty batch".into()));
    }
    let traces: Vec<FusionTrace> = batch
        .iter()
        .map(|(f, _)| forward(params, f, ablation))
        .collect::<Result<_>>()?;
    let labels: Vec<Label> = batch.iter().map(|b| b.1).collect();
    let bsz = batch.len() as f64;

    let finals: Vec<Vec<f64>> = traces.iter().map(|t| t.final_repr.clone()).collect();
    let contrast = losses::contrastive_with_grad(&finals, &labels, weights.tau);

    let mut cls_sum = 0.0;
    let mut cons_sum = 0.0;
    let mut div_sum = 0.0;
    let d = params.hidden;
    let mut grad = params.zeros_like();

    for (b, (trace, &label)) in traces.iter().zip(&labels).enumerate() {
        let (ce, dlogits_ce) = losses::cross_entropy_with_grad(&trace.posterior, label);
        cls_sum += ce;
        let (cons, dp, dq) =
            losses::consistency_with_grad(&trace.posterior, &trace.semantic_posterior);
        cons_sum += cons;
        let (div, dalpha_div) = if ablation.adaptive_fusion {
            losses::diversity_with_grad(&trace.alpha)
        } else {
            (losses::diversity(&[trace.alpha]), [0.0; N_LEVELS])
        };
        div_sum += div;

        // classifier head on F_final
        let dp_logits = softmax_backward(&trace.posterior, &dp.map(|x| weights.consistency * x));
        let dlogits: [f64; N_CLASSES] = std::array::from_fn(|c| dlogits_ce[c] + dp_logits[c]);
        grad.cls_w.add_outer(&dlogits, &trace.final_repr);
        grad.cls_b.add_vec(&dlogits);
        let mut dy = params.cls_w.matvec_t(&dlogits);
        let scale = weights.contrastive * bsz;
        for (g, c) in dy.iter_mut().zip(&contrast.grads[b]) {
            *g += scale * c;
        }

        // semantic-only pathway of the consistency term
        let dq_logits = softmax_backward(
            &trace.semantic_posterior,
            &dq.map(|x| weights.consistency * x),
        );
        grad.cls_w.add_outer(&dq_logits, &trace.projections[0]);
        grad.cls_b.add_vec(&dq_logits);
        let mut dproj: [Vec<f64>; N_LEVELS] = std::array::from_fn(|_| vec![0.0; d]);
        for (dpk, v) in dproj[0].iter_mut().zip(params.cls_w.matvec_t(&dq_logits)) {
            *dpk += v;
        }

        // LayerNorm
        let mut dxhat = vec![0.0; d];
        for k in 0..d {
            grad.ln_gain.data[k] += dy[k] * trace.normalized[k];
            grad.ln_bias.data[k] += dy[k];
            dxhat[k] = dy[k] * params.ln_gain.data[k];
        }
        let n = d as f64;
        let mean_dxhat = dxhat.iter().sum::<f64>() / n;
        let mean_dxhat_xhat = dxhat
            .iter()
            .zip(&trace.normalized)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n;
        let dx: Vec<f64> = (0..d)
            .map(|k| {
                trace.inv_std * (dxhat[k] - mean_dxhat - trace.normalized[k] * mean_dxhat_xhat)
            })
            .collect();

        // x = (1/3) Σ g_i ⊙ P_i + Σ α_i P_i
        let third = 1.0 / N_LEVELS as f64;
        let mut dalpha = dalpha_div.map(|x| weights.diversity * x);
        for i in 0..N_LEVELS {
            let p = &trace.projections[i];
            let g = &trace.gates[i];
            for k in 0..d {
                dproj[i][k] += dx[k] * (third * g[k] + trace.alpha[i]);
            }
            if ablation.adaptive_fusion {
                dalpha[i] += dx.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
                let du: Vec<f64> = (0..d)
                    .map(|k| third * dx[k] * p[k] * g[k] * (1.0 - g[k]))
                    .collect();
                let blk = &params.levels[i];
                grad.levels[i].gate_w.add_outer(&du, p);
                grad.levels[i].gate_b.add_vec(&du);
                for (dpk, v) in dproj[i].iter_mut().zip(blk.gate_w.matvec_t(&du)) {
                    *dpk += v;
                }
            }
        }
        if ablation.adaptive_fusion {
            let ds = softmax_backward(&trace.alpha, &dalpha);
            for i in 0..N_LEVELS {
                grad.att_w.add_vec(
                    &trace.projections[i]
                        .iter()
                        .map(|p| ds[i] * p)
                        .collect::<Vec<_>>(),
                );
                grad.levels[i].att_bias.data[0] += ds[i];
                for (dpk, a) in dproj[i].iter_mut().zip(&params.att_w.data) {
                    *dpk += ds[i] * a;
                }
            }
        }

        // P_i = tanh(W_i F_i + b_i)
        for i in 0..N_LEVELS {
            let dz: Vec<f64> = dproj[i]
                .iter()
                .zip(&trace.projections[i])
                .map(|(g, p)| g * (1.0 - p * p))
                .collect();
            grad.levels[i].proj_w.add_outer(&dz, &trace.inputs[i]);
            grad.levels[i].proj_b.add_vec(&dz);
        }
    }
    grad.mask_frozen(ablation);

    let breakdown = LossBreakdown::assemble(
        cls_sum / bsz,
        contrast.loss,
        cons_sum / bsz,
        div_sum / bsz,
        weights,
        contrast.skipped,
    );
    Ok((breakdown, grad))
}

/// Loss of a batch without gradients (same objective as [`backward`]).
pub fn batch_loss(
    params: &FusionParams,
    batch: &[(&LevelFeatures, Label)],
    weights: &LossWeights,
    ablation: &AblationConfig,
) -> Result<LossBreakdown> {
    let traces: Vec<FusionTrace> = batch
        .iter()
        .map(|(f, _)| forward(params, f, ablation))
        .collect::<Result<_>>()?;
    let labels: Vec<Label> = batch.iter().map(|b| b.1).collect();
    Ok(losses::breakdown(&traces, &labels, weights))
}
