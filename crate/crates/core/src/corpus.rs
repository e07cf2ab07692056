//! Labeled text corpora: line-delimited JSON ingestion, stratified splits and
//! a synthetic generator for desk-scale experiments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Ai,
}

impl Label {
    /// Class index used by the classifier head: human = 0, ai = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Human => 0,
            Label::Ai => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Human
        } else {
            Label::Ai
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Ai => "ai",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Label::Human),
            "ai" => Ok(Label::Ai),
            other => Err(Error::InvalidArgument(format!("unknown label `{other}`"))),
        }
    }
}

/// On-disk record. Unknown keys are kept in `extra` and written back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    label: Label,
    domain: String,
    dataset: String,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub domain: String,
    pub dataset: String,
    pub word_count: usize,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: Label,
        domain: impl Into<String>,
        dataset: impl Into<String>,
    ) -> Self {
        let text = text.into();
        let word_count = text::tokenize(&text).len();
        Document {
            id: id.into(),
            text,
            label,
            domain: domain.into(),
            dataset: dataset.into(),
            word_count,
            extra: serde_json::Map::new(),
        }
    }

    /// Sentences as token lists, untruncated.
    pub fn sentences(&self) -> Vec<Vec<String>> {
        text::sentence_tokens(&self.text)
    }

    pub fn tokenized(&self, max_tokens: usize) -> text::Tokenized {
        text::Tokenized::new(&self.text, max_tokens)
    }

    fn from_record(r: Record) -> Self {
        let mut doc = Document::new(r.id, r.text, r.label, r.domain, r.dataset);
        doc.extra = r.extra;
        doc
    }

    fn to_record(&self) -> Record {
        Record {
            id: self.id.clone(),
            text: self.text.clone(),
            label: self.label,
            domain: self.domain.clone(),
            dataset: self.dataset.clone(),
            extra: self.extra.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
    /// Records dropped by the minimum-length filter at ingestion.
    pub filtered: usize,
}

impl Corpus {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if index.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus {
            docs,
            index,
            filtered: 0,
        })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Documents for a list of ids, in the list's order.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&Document>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown document id `{id}`")))
            })
            .collect()
    }

    pub fn subset(&self, ids: &[String]) -> Result<Corpus> {
        Corpus::from_documents(self.select(ids)?.into_iter().cloned().collect())
    }

    pub fn count(&self, label: Label) -> usize {
        self.docs.iter().filter(|d| d.label == label).count()
    }

    pub fn ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.id.clone()).collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.docs {
            let line = serde_json::to_string(&d.to_record())?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a corpus file, keeping records with at least `min_words` tokens.
pub fn ingest(path: &Path, min_words: usize) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    let mut filtered = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        let doc = Document::from_record(record);
        if doc.word_count >= min_words {
            docs.push(doc);
        } else {
            filtered += 1;
        }
    }
    let mut corpus = Corpus::from_documents(docs)?;
    corpus.filtered = filtered;
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    Label,
    LabelAndDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn write(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Stratified, seeded train/test split. Each stratum contributes
/// `round(n * test_fraction)` documents to the test side; both sides keep
/// corpus order.
pub fn split(
    corpus: &Corpus,
    test_fraction: f64,
    seed: u64,
    stratify_by: Stratify,
) -> Result<CorpusSplit> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot split an empty corpus".into()));
    }
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} outside [0, 1]"
        )));
    }
    let mut strata: BTreeMap<(Label, &str), Vec<usize>> = BTreeMap::new();
    for (i, d) in corpus.docs().iter().enumerate() {
        let domain = match stratify_by {
            Stratify::Label => "",
            Stratify::LabelAndDomain => d.domain.as_str(),
        };
        strata.entry((d.label, domain)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; corpus.len()];
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let take = (members.len() as f64 * test_fraction).round() as usize;
        for &i in members.iter().take(take) {
            in_test[i] = true;
        }
    }
    let mut out = CorpusSplit {
        train: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (d, &t) in corpus.docs().iter().zip(&in_test) {
        if t {
            out.test.push(d.id.clone());
        } else {
            out.train.push(d.id.clone());
        }
    }
    if out.train.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} leaves the train split empty"
        )));
    }
    if out.test.is_empty() && test_fraction > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} leaves the test split empty"
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Synthetic corpora

const SYNTH_VOCAB: usize = 2400;
const SYNTH_ZIPF: f64 = 1.1;
const SUCCESSORS: usize = 6;
const SUCCESSOR_BONUS: f64 = 2.0;
const VOCAB_SEED: u64 = 0x5eed_70c4;
const CALIBRATION_SEED: u64 = 0xca1_1b8a7e;
pub const SYNTH_DOMAINS: [&str; 4] = ["geography", "biology", "physics", "chess"];

fn synth_vocabulary() -> Vec<String> {
    const ONSETS: [&str; 16] = [
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
    ];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut rng = ChaCha8Rng::seed_from_u64(VOCAB_SEED);
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(SYNTH_VOCAB);
    while words.len() < SYNTH_VOCAB {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        if rng.gen_bool(0.3) {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// First-order word model: Zipfian unigram logits plus a fixed successor
/// bonus per previous word, all divided by a temperature.
struct WordModel {
    cdf: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
    succ_factor: f64,
    successors: Vec<[usize; SUCCESSORS]>,
}

impl WordModel {
    fn new(temperature: f64, successors: &[[usize; SUCCESSORS]]) -> Self {
        let weights: Vec<f64> = (0..SYNTH_VOCAB)
            .map(|r| (-SYNTH_ZIPF * ((r + 1) as f64).ln() / temperature).exp())
            .collect();
        let mut cdf = Vec::with_capacity(SYNTH_VOCAB);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cdf.push(acc);
        }
        WordModel {
            cdf,
            total: acc,
            weights,
            succ_factor: (SUCCESSOR_BONUS / temperature).exp() - 1.0,
            successors: successors.to_vec(),
        }
    }

    fn sample_base<R: Rng>(&self, rng: &mut R) -> usize {
        let u = rng.gen::<f64>() * self.total;
        self.cdf.partition_point(|&c| c <= u).min(SYNTH_VOCAB - 1)
    }

    fn next<R: Rng>(&self, prev: Option<usize>, rng: &mut R) -> usize {
        let Some(p) = prev else {
            return self.sample_base(rng);
        };
        let succ = &self.successors[p];
        let extra: Vec<f64> = succ
            .iter()
            .map(|&w| self.weights[w] * self.succ_factor)
            .collect();
        let extra_total: f64 = extra.iter().sum();
        let u = rng.gen::<f64>() * (self.total + extra_total);
        if u < extra_total {
            let mut acc = 0.0;
            for (&w, e) in succ.iter().zip(&extra) {
                acc += e;
                if u < acc {
                    return w;
                }
            }
            succ[SUCCESSORS - 1]
        } else {
            self.sample_base(rng)
        }
    }

    fn sentence<R: Rng>(&self, rng: &mut R, len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut prev = None;
        for _ in 0..len {
            let w = self.next(prev, rng);
            out.push(w);
            prev = Some(w);
        }
        out
    }

    fn document<R: Rng>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        let n_sent = rng.gen_range(5..=9);
        (0..n_sent)
            .map(|_| {
                let len = rng.gen_range(10..=20);
                self.sentence(rng, len)
            })
            .collect()
    }
}

fn successor_table() -> Vec<[usize; SUCCESSORS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(VOCAB_SEED ^ 0xff);
    (0..SYNTH_VOCAB)
        .map(|_| {
            let mut s = [0; SUCCESSORS];
            for slot in &mut s {
                // successors skew toward frequent words
                let r: f64 = rng.gen();
                *slot = ((r * r) * 400.0) as usize;
            }
            s
        })
        .collect()
}

fn mean_doc_entropy(model: &WordModel, docs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let mut total = 0.0;
    for _ in 0..docs {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut n = 0;
        for sent in model.document(&mut rng) {
            for w in sent {
                *counts.entry(w).or_default() += 1;
                n += 1;
            }
        }
        let c: Vec<usize> = counts.into_values().collect();
        total += crate::features::statistical::entropy_of_counts(&c, n);
    }
    total / docs as f64
}

/// Finds the temperature whose mean per-document word entropy sits
/// `gap` bits below the temperature-1 model.
fn calibrate_temperature(gap: f64, successors: &[[usize; SUCCESSORS]]) -> Result<f64> {
    if gap == 0.0 {
        return Ok(1.0);
    }
    const SIM_DOCS: usize = 48;
    let target = mean_doc_entropy(&WordModel::new(1.0, successors), SIM_DOCS) - gap;
    let (mut lo, mut hi) = (0.02_f64, 1.0_f64);
    if mean_doc_entropy(&WordModel::new(lo, successors), SIM_DOCS) > target {
        return Err(Error::InvalidArgument(format!(
            "entropy_gap {gap} exceeds what the synthetic generator can produce"
        )));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if mean_doc_entropy(&WordModel::new(mid, successors), SIM_DOCS) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn render(doc: &[Vec<usize>], vocab: &[String]) -> String {
    let mut out = String::new();
    for (i, sent) in doc.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        for (j, &w) in sent.iter().enumerate() {
            let word = &vocab[w];
            if j == 0 {
                let mut chars = word.chars();
                if let Some(c) = chars.next() {
                    out.extend(c.to_uppercase());
                    out.push_str(chars.as_str());
                }
            } else {
                out.push(' ');
                out.push_str(word);
            }
        }
        out.push('.');
    }
    out
}

/// Generates `n_per_class` human and ai documents. Human text comes from the
/// temperature-1 word model; ai text from a colder model whose mean
/// per-document word entropy is lower by about `entropy_gap` bits.
pub fn generate_synthetic(n_per_class: usize, entropy_gap: f64, seed: u64) -> Result<Corpus> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be ≥ 1".into()));
    }
    if !(entropy_gap >= 0.0 && entropy_gap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "entropy_gap must be a non-negative real, got {entropy_gap}"
        )));
    }
    let vocab = synth_vocabulary();
    let successors = successor_table();
    let human = WordModel::new(1.0, &successors);
    let ai = WordModel::new(
        calibrate_temperature(entropy_gap, &successors)?,
        &successors,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        for (label, model) in [(Label::Human, &human), (Label::Ai, &ai)] {
            let text = render(&model.document(&mut rng), &vocab);
            docs.push(Document::new(
                format!("syn-{seed}-{}-{i:05}", label.as_str()),
                text,
                label,
                SYNTH_DOMAINS[i % SYNTH_DOMAINS.len()],
                "synthetic",
            ));
        }
    }
    Corpus::from_documents(docs)
}

/// Synonym lexicon over the synthetic vocabulary: each of the 800 most
/// frequent words maps to one other vocabulary word.
pub fn synthetic_lexicon(seed: u64) -> BTreeMap<String, Vec<String>> {
    let vocab = synth_vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vocab
        .iter()
        .take(800)
        .map(|w| {
            let mut other = rng.gen_range(0..SYNTH_VOCAB);
            if vocab[other] == *w {
                other = (other + 1) % SYNTH_VOCAB;
            }
            (w.clone(), vec![vocab[other].clone()])
        })
        .collect()
}
