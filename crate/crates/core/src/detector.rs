//! End-to-end detector: feature extraction for all three levels, z-score
//! normalization, the trained fusion network, and a self-describing
//! checkpoint.
//!
//! The statistical level needs an LM. Training documents are scored
//! out-of-fold: each one is scored by an LM fitted without its fold, so the
//! classifier never sees in-sample probabilities that held-out documents
//! cannot have. Everything else is scored by the LM fitted on the whole
//! training set, which is the one stored in the checkpoint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};
use crate::features::conllu::ParseMap;
use crate::features::semantic::{self, EmbeddingMap, SentenceEmbeddings, DEFAULT_EMBED_DIM};
use crate::features::statistical::{self, StatFeatures, STAT_DIM};
use crate::features::syntactic::{self, SynFeatures, SYN_DIM};
use crate::fusion::{
    self, AblationConfig, FusionParams, FusionTrace, Level, LevelFeatures, N_LEVELS,
};
use crate::ngram::{NgramFile, NgramModel, TokenScore, TokenScorer};
use crate::text::{self, Tokenized, MAX_TOKENS};
use crate::training::{self, EpochLog, StepLog, TrainingConfig};

const CHECKPOINT_FORMAT: &str = "hierdetect-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProvider {
    /// Character-3-gram hashing, computed on the fly.
    Hashed,
    /// Vectors read from an embedding file.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmCorpus {
    Human,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub lm_order: usize,
    pub lm_smoothing_k: f64,
    /// Which training documents the LM is fitted on.
    pub lm_train_on: LmCorpus,
    /// Folds for out-of-fold scoring of training documents; below 2 the
    /// full LM scores everything.
    pub lm_crossfit_folds: usize,
    pub embedding_provider: EmbeddingProvider,
    /// Dimension of hashed embeddings (ignored for file embeddings).
    pub embed_dim: usize,
    pub max_tokens: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            lm_order: 3,
            lm_smoothing_k: 1.0,
            lm_train_on: LmCorpus::Human,
            lm_crossfit_folds: 5,
            embedding_provider: EmbeddingProvider::Hashed,
            embed_dim: DEFAULT_EMBED_DIM,
            max_tokens: MAX_TOKENS,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lm_order == 0 || !(self.lm_smoothing_k > 0.0) {
            return Err(Error::InvalidArgument(
                "lm_order must be ≥ 1 and lm_smoothing_k positive".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be ≥ 1".into()));
        }
        if self.embedding_provider == EmbeddingProvider::Hashed
            && self.embed_dim < semantic::MIN_HASHED_DIM
        {
            return Err(Error::InvalidArgument(format!(
                "embed_dim must be ≥ {}",
                semantic::MIN_HASHED_DIM
            )));
        }
        Ok(())
    }
}

/// Optional per-document annotations, keyed by document id.
#[derive(Debug, Clone, Default)]
pub struct Annotations {
    pub parses: Option<ParseMap>,
    pub embeddings: Option<EmbeddingMap>,
}

/// Scores computed elsewhere, replayed in order.
struct Precomputed<'a>(&'a [TokenScore]);

impl TokenScorer for Precomputed<'_> {
    fn score(&self, tokens: &[String]) -> Vec<TokenScore> {
        debug_assert_eq!(tokens.len(), self.0.len());
        self.0.to_vec()
    }
}

/// Typed features of one document before flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct DocFeatures {
    pub semantic: semantic::SemFeatures,
    pub syntactic: SynFeatures,
    pub statistical: StatFeatures,
}

impl DocFeatures {
    pub fn flatten(&self) -> LevelFeatures {
        LevelFeatures::new(
            self.semantic.to_vec(),
            self.syntactic.to_vec(),
            self.statistical.to_vec(),
        )
    }
}

fn sentence_embeddings(
    doc: &Document,
    tok: &Tokenized,
    ann: &Annotations,
    cfg: &FeatureConfig,
) -> Result<SentenceEmbeddings> {
    match cfg.embedding_provider {
        EmbeddingProvider::Hashed => {
            semantic::embed_hashed(&doc.id, &tok.sentence_strings(), cfg.embed_dim)
        }
        EmbeddingProvider::File => {
            let map = ann.embeddings.as_ref().ok_or_else(|| {
                Error::Embeddings("provider is `file` but no embeddings were loaded".into())
            })?;
            let emb = map.get(&doc.id).ok_or_else(|| {
                Error::Embeddings(format!("no embeddings for document `{}`", doc.id))
            })?;
            let expected = text::sentence_tokens(&doc.text).len();
            if emb.vectors.len() != expected {
                return Err(Error::Embeddings(format!(
                    "document `{}` has {} sentence vectors but {expected} sentences",
                    doc.id,
                    emb.vectors.len()
                )));
            }
            // Truncation may have dropped trailing sentences.
            Ok(SentenceEmbeddings {
                doc_id: emb.doc_id.clone(),
                vectors: emb.vectors[..tok.sentences.len()].to_vec(),
            })
        }
    }
}

pub fn semantic_level(
    doc: &Document,
    ann: &Annotations,
    cfg: &FeatureConfig,
) -> Result<semantic::SemFeatures> {
    let tok = doc.tokenized(cfg.max_tokens);
    semantic::extract_semantic(&sentence_embeddings(doc, &tok, ann, cfg)?)
}

/// Zeros with the missing-parse flag when the document has no parse.
pub fn syntactic_level(doc: &Document, ann: &Annotations) -> SynFeatures {
    match ann.parses.as_ref().and_then(|p| p.get(&doc.id)) {
        Some(sents) => syntactic::extract_syntactic(sents),
        None => SynFeatures::missing(),
    }
}

pub fn statistical_level<S: TokenScorer + ?Sized>(
    doc: &Document,
    cfg: &FeatureConfig,
    scorer: &S,
) -> Result<StatFeatures> {
    let tok = doc.tokenized(cfg.max_tokens);
    statistical::extract_statistical(&tok, scorer)
        .map_err(|e| Error::InvalidArgument(format!("document `{}`: {e}", doc.id)))
}

/// Extracts all three levels with the given token scorer.
pub fn extract_document<S: TokenScorer + ?Sized>(
    doc: &Document,
    ann: &Annotations,
    cfg: &FeatureConfig,
    scorer: &S,
) -> Result<DocFeatures> {
    Ok(DocFeatures {
        semantic: semantic_level(doc, ann, cfg)?,
        syntactic: syntactic_level(doc, ann),
        statistical: statistical_level(doc, cfg, scorer)?,
    })
}

/// Expected per-level dimensions for a feature config.
pub fn level_dims(cfg: &FeatureConfig, ann: &Annotations) -> Result<[usize; N_LEVELS]> {
    let d = match cfg.embedding_provider {
        EmbeddingProvider::Hashed => cfg.embed_dim,
        EmbeddingProvider::File => ann
            .embeddings
            .as_ref()
            .and_then(|m| m.values().next())
            .map(SentenceEmbeddings::dim)
            .ok_or_else(|| Error::Embeddings("no embeddings loaded".into()))?,
    };
    Ok([d + 2, SYN_DIM, STAT_DIM])
}

fn lm_training_docs<'a>(docs: &[&'a Document], cfg: &FeatureConfig) -> Vec<&'a Document> {
    docs.iter()
        .copied()
        .filter(|d| cfg.lm_train_on == LmCorpus::All || d.label == Label::Human)
        .collect()
}

fn fit_lm(docs: &[&Document], cfg: &FeatureConfig) -> Result<NgramModel> {
    let seqs: Vec<Vec<String>> = docs
        .iter()
        .map(|d| d.tokenized(cfg.max_tokens).tokens)
        .collect();
    NgramModel::fit(&seqs, cfg.lm_order, cfg.lm_smoothing_k)
}

/// LM fitted on the training documents, plus per-document token scores for
/// those documents (out-of-fold when cross-fitting is on). Fold `f` holds
/// the documents at positions `i` with `i % folds == f`.
pub fn fit_scorer(
    train: &[&Document],
    cfg: &FeatureConfig,
) -> Result<(NgramModel, Vec<Vec<TokenScore>>)> {
    let lm_docs = lm_training_docs(train, cfg);
    if lm_docs.is_empty() {
        return Err(Error::Empty(format!(
            "no training documents for the LM (lm_train_on = {:?})",
            cfg.lm_train_on
        )));
    }
    let full = fit_lm(&lm_docs, cfg)?;
    let folds = cfg.lm_crossfit_folds.min(train.len());
    let tokens: Vec<Vec<String>> = train
        .iter()
        .map(|d| d.tokenized(cfg.max_tokens).tokens)
        .collect();
    if folds < 2 {
        let scores = tokens.iter().map(|t| full.score(t)).collect();
        return Ok((full, scores));
    }
    let mut scores = vec![Vec::new(); train.len()];
    for f in 0..folds {
        let rest: Vec<&Document> = train
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != f)
            .map(|(_, d)| *d)
            .collect();
        let rest_lm = lm_training_docs(&rest, cfg);
        let lm = if rest_lm.is_empty() {
            full.clone()
        } else {
            fit_lm(&rest_lm, cfg)?
        };
        for i in (f..train.len()).step_by(folds) {
            scores[i] = lm.score(&tokens[i]);
        }
    }
    Ok((full, scores))
}

/// Extracts raw features for training documents with out-of-fold LM scores.
pub fn extract_training_features(
    train: &[&Document],
    ann: &Annotations,
    cfg: &FeatureConfig,
) -> Result<(NgramModel, Vec<DocFeatures>)> {
    let (lm, scores) = fit_scorer(train, cfg)?;
    let feats = train
        .iter()
        .zip(&scores)
        .map(|(d, s)| extract_document(d, ann, cfg, &Precomputed(s)))
        .collect::<Result<_>>()?;
    Ok((lm, feats))
}

/// Per-slot z-scoring fitted on training features. Slots with (near) zero
/// spread keep their centering but are not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [Vec<f64>; N_LEVELS],
    pub std: [Vec<f64>; N_LEVELS],
}

const MIN_STD: f64 = 1e-12;

impl Normalizer {
    pub fn fit(data: &[LevelFeatures]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::Empty("normalizer fit".into()))?;
        let dims = first.dims();
        let n = data.len() as f64;
        let mut mean: [Vec<f64>; N_LEVELS] = dims.map(|d| vec![0.0; d]);
        let mut std: [Vec<f64>; N_LEVELS] = dims.map(|d| vec![0.0; d]);
        for f in data {
            if f.dims() != dims {
                return Err(Error::Shape(format!("{:?} vs {dims:?}", f.dims())));
            }
            for l in 0..N_LEVELS {
                for (m, x) in mean[l].iter_mut().zip(&f.levels[l]) {
                    *m += x;
                }
            }
        }
        mean.iter_mut().flatten().for_each(|m| *m /= n);
        for f in data {
            for l in 0..N_LEVELS {
                for ((s, x), m) in std[l].iter_mut().zip(&f.levels[l]).zip(&mean[l]) {
                    *s += (x - m).powi(2);
                }
            }
        }
        for s in std.iter_mut().flatten() {
            *s = (*s / n).sqrt();
            if *s < MIN_STD {
                *s = 1.0;
            }
        }
        Ok(Normalizer { mean, std })
    }

    pub fn dims(&self) -> [usize; N_LEVELS] {
        [self.mean[0].len(), self.mean[1].len(), self.mean[2].len()]
    }

    pub fn apply(&self, f: &LevelFeatures) -> Result<LevelFeatures> {
        if f.dims() != self.dims() {
            return Err(Error::Shape(format!(
                "features have dims {:?}, normalizer expects {:?}",
                f.dims(),
                self.dims()
            )));
        }
        Ok(LevelFeatures {
            levels: std::array::from_fn(|l| {
                f.levels[l]
                    .iter()
                    .zip(self.mean[l].iter().zip(&self.std[l]))
                    .map(|(x, (m, s))| (x - m) / s)
                    .collect()
            }),
        })
    }
}

/// Result of running the detector on one document.
#[derive(Debug, Clone)]
pub struct Detection {
    pub label: Label,
    pub trace: FusionTrace,
    pub features: DocFeatures,
}

impl Detection {
    pub fn posterior(&self) -> [f64; 2] {
        self.trace.posterior
    }

    pub fn alpha(&self) -> [f64; N_LEVELS] {
        self.trace.alpha
    }
}

#[derive(Debug, Clone)]
pub struct TrainingLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub feature_config: FeatureConfig,
    pub training_config: TrainingConfig,
    pub ablation: AblationConfig,
    pub lm: NgramModel,
    pub normalizer: Normalizer,
    pub params: FusionParams,
}

/// Splits training positions into (fit, validation) by label, using the
/// training seed. Validation takes `round(n · frac)` of each class.
fn validation_split(train: &[&Document], frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if frac <= 0.0 {
        return ((0..train.len()).collect(), Vec::new());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x7a11_da7e);
    let mut val = vec![false; train.len()];
    for label in [Label::Human, Label::Ai] {
        let mut idx: Vec<usize> = (0..train.len())
            .filter(|&i| train[i].label == label)
            .collect();
        idx.shuffle(&mut rng);
        let take = (idx.len() as f64 * frac).round() as usize;
        idx.iter().take(take).for_each(|&i| val[i] = true);
    }
    let (v, t): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| val[i]);
    (t, v)
}

impl Detector {
    pub fn fit(
        train: &[&Document],
        ann: &Annotations,
        feature_config: &FeatureConfig,
        training_config: &TrainingConfig,
        ablation: &AblationConfig,
    ) -> Result<(Detector, TrainingLog)> {
        feature_config.validate()?;
        training_config.validate()?;
        ablation.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("training split".into()));
        }
        let (lm, feats) = extract_training_features(train, ann, feature_config)?;
        let raw: Vec<LevelFeatures> = feats.iter().map(DocFeatures::flatten).collect();
        let (fit_idx, val_idx) = validation_split(
            train,
            training_config.validation_fraction,
            training_config.seed,
        );
        let fit_raw: Vec<LevelFeatures> = fit_idx.iter().map(|&i| raw[i].clone()).collect();
        let normalizer = Normalizer::fit(&fit_raw)?;
        let examples = |idx: &[usize]| -> Result<Vec<training::Example>> {
            idx.iter()
                .map(|&i| Ok((normalizer.apply(&raw[i])?, train[i].label)))
                .collect()
        };
        let fit_set = examples(&fit_idx)?;
        let val_set = examples(&val_idx)?;
        let val = (!val_set.is_empty()).then_some(val_set.as_slice());
        let outcome = training::train_network(&fit_set, val, training_config, ablation)?;
        let det = Detector {
            feature_config: feature_config.clone(),
            training_config: training_config.clone(),
            ablation: *ablation,
            lm,
            normalizer,
            params: outcome.params,
        };
        let log = TrainingLog {
            steps: outcome.steps,
            epochs: outcome.epochs,
            best_epoch: outcome.best_epoch,
        };
        Ok((det, log))
    }

    pub fn dims(&self) -> [usize; N_LEVELS] {
        self.params.dims()
    }

    /// Raw features of an unseen document, scored by the full LM.
    pub fn features(&self, doc: &Document, ann: &Annotations) -> Result<DocFeatures> {
        extract_document(doc, ann, &self.feature_config, &self.lm)
    }

    pub fn normalized(&self, doc: &Document, ann: &Annotations) -> Result<LevelFeatures> {
        self.normalizer.apply(&self.features(doc, ann)?.flatten())
    }

    pub fn predict_normalized(&self, feats: &LevelFeatures) -> Result<FusionTrace> {
        fusion::forward(&self.params, feats, &self.ablation)
    }

    pub fn detect(&self, doc: &Document, ann: &Annotations) -> Result<Detection> {
        let features = self.features(doc, ann)?;
        let trace = self.predict_normalized(&self.normalizer.apply(&features.flatten())?)?;
        Ok(Detection {
            label: trace.predicted(),
            trace,
            features,
        })
    }

    pub fn predict(&self, docs: &[&Document], ann: &Annotations) -> Result<Vec<Label>> {
        docs.iter()
            .map(|d| Ok(self.detect(d, ann)?.label))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: self.dims(),
            feature_config: self.feature_config.clone(),
            training_config: self.training_config.clone(),
            ablation: self.ablation,
            normalizer: self.normalizer.clone(),
            params: self.params.clone(),
            lm: self.lm.to_file(),
        };
        Ok(serde_json::to_string(&ck)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)
            .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} v{}",
                ck.format, ck.version
            )));
        }
        let expect_syn_stat = [SYN_DIM, STAT_DIM];
        if ck.dims[1..] != expect_syn_stat
            || ck.params.dims() != ck.dims
            || ck.normalizer.dims() != ck.dims
        {
            return Err(Error::Checkpoint(format!(
                "feature layout {:?} does not match this build's extractors or the stored tensors",
                ck.dims
            )));
        }
        if ck.feature_config.embedding_provider == EmbeddingProvider::Hashed
            && ck.dims[0] != ck.feature_config.embed_dim + 2
        {
            return Err(Error::Checkpoint(format!(
                "semantic layout {} does not match hashed embed_dim {}",
                ck.dims[0], ck.feature_config.embed_dim
            )));
        }
        if !ck.params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(Detector {
            feature_config: ck.feature_config,
            training_config: ck.training_config,
            ablation: ck.ablation,
            lm: NgramModel::from_file(ck.lm)?,
            normalizer: ck.normalizer,
            params: ck.params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Fails unless features produced with `ann` fit this checkpoint.
    pub fn check_annotations(&self, ann: &Annotations) -> Result<()> {
        let dims = level_dims(&self.feature_config, ann)?;
        if dims != self.dims() {
            return Err(Error::Shape(format!(
                "extractors produce {dims:?}, checkpoint expects {:?}",
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn level_enabled(&self, level: Level) -> bool {
        self.ablation.enabled(level)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dims: [usize; N_LEVELS],
    feature_config: FeatureConfig,
    training_config: TrainingConfig,
    ablation: AblationConfig,
    normalizer: Normalizer,
    params: FusionParams,
    lm: NgramFile,
}
