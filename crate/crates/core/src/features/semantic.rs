//! Semantic level: sentence embeddings from a provider, pooled by mean, plus
//! the variance of adjacent-sentence cosine similarities.
//!
//! Layout (D + 2 slots): mean sentence embedding, `consistency_var`,
//! `adjacent_sim_mean`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::fnv1a64;

pub const DEFAULT_EMBED_DIM: usize = 64;
pub const MIN_HASHED_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbeddings {
    pub doc_id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl SentenceEmbeddings {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemFeatures {
    pub mean_embedding: Vec<f64>,
    pub consistency_var: f64,
    pub adjacent_sim_mean: f64,
    /// True when fewer than two sentences made the consistency fields
    /// conventional (0 variance, similarity 1).
    pub by_convention: bool,
}

impl SemFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.mean_embedding.clone();
        v.push(self.consistency_var);
        v.push(self.adjacent_sim_mean);
        v
    }
}

/// Character-3-gram hashed bag, L2-normalized. Each gram's UTF-8 bytes are
/// hashed with FNV-1a-64 modulo `dim`.
pub fn hash_sentence(sentence: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let chars: Vec<char> = sentence.chars().collect();
    let mut buf = String::new();
    for w in chars.windows(3) {
        buf.clear();
        buf.extend(w);
        v[(fnv1a64(buf.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Native embedding provider over normalized sentence strings.
pub fn embed_hashed(doc_id: &str, sentences: &[String], dim: usize) -> Result<SentenceEmbeddings> {
    if dim < MIN_HASHED_DIM {
        return Err(Error::InvalidArgument(format!(
            "hashed embedding dim must be ≥ {MIN_HASHED_DIM}, got {dim}"
        )));
    }
    Ok(SentenceEmbeddings {
        doc_id: doc_id.to_string(),
        vectors: sentences.iter().map(|s| hash_sentence(s, dim)).collect(),
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Population variance and mean of adjacent-sentence cosine similarities.
/// Pairs involving a zero vector have similarity 0.
pub fn consistency(emb: &SentenceEmbeddings) -> (f64, f64, bool) {
    if emb.vectors.len() < 2 {
        return (0.0, 1.0, true);
    }
    let sims: Vec<f64> = emb
        .vectors
        .windows(2)
        .map(|w| cosine(&w[0], &w[1]))
        .collect();
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (var.max(0.0), mean, false)
}

pub fn extract_semantic(emb: &SentenceEmbeddings) -> Result<SemFeatures> {
    if emb.vectors.is_empty() {
        return Err(Error::Empty(format!(
            "no sentence vectors for `{}`",
            emb.doc_id
        )));
    }
    let d = emb.dim();
    let n = emb.vectors.len() as f64;
    let mut mean = vec![0.0; d];
    for v in &emb.vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let (var, sim, conv) = consistency(emb);
    Ok(SemFeatures {
        mean_embedding: mean,
        consistency_var: var,
        adjacent_sim_mean: sim,
        by_convention: conv,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRecord {
    doc_id: String,
    sentence_index: usize,
    vector: Vec<f64>,
}

pub type EmbeddingMap = BTreeMap<String, SentenceEmbeddings>;

/// Reads the line-delimited embedding format. Every vector in the file must
/// share one dimension and each document's indices must be dense from 0.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMap> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut staged: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: n + 1,
                reason: e.to_string(),
            })?;
        if rec.vector.is_empty() || rec.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Embeddings(format!(
                "line {}: vector must be non-empty and finite",
                n + 1
            )));
        }
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(Error::Embeddings(format!(
                    "line {}: dimension {} differs from {d}",
                    n + 1,
                    rec.vector.len()
                )))
            }
            _ => {}
        }
        let slot = staged.entry(rec.doc_id.clone()).or_default();
        if slot.insert(rec.sentence_index, rec.vector).is_some() {
            return Err(Error::Embeddings(format!(
                "document `{}` repeats sentence index {}",
                rec.doc_id, rec.sentence_index
            )));
        }
    }
    staged
        .into_iter()
        .map(|(doc_id, by_index)| {
            if by_index.keys().enumerate().any(|(i, &k)| i != k) {
                return Err(Error::Embeddings(format!(
                    "document `{doc_id}` has missing sentence indices"
                )));
            }
            let vectors = by_index.into_values().collect();
            Ok((doc_id.clone(), SentenceEmbeddings { doc_id, vectors }))
        })
        .collect()
}

pub fn save_embeddings<'a, I>(path: &Path, embeddings: I) -> Result<()>
where
    I: IntoIterator<Item = &'a SentenceEmbeddings>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for emb in embeddings {
        for (i, v) in emb.vectors.iter().enumerate() {
            let rec = EmbeddingRecord {
                doc_id: emb.doc_id.clone(),
                sentence_index: i,
                vector: v.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn emb(vectors: Vec<Vec<f64>>) -> SentenceEmbeddings {
        SentenceEmbeddings {
            doc_id: "d".into(),
            vectors,
        }
    }

    #[test]
    fn hashed_vectors_are_unit_and_deterministic() {
        let s = vec!["the cat sat".to_string(), "the cat sat".to_string()];
        let e = embed_hashed("d", &s, 64).unwrap();
        assert_eq!(e.vectors[0], e.vectors[1]);
        let norm: f64 = e.vectors[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_eq!(hash_sentence("ab", 16), vec![0.0; 16]);
        assert!(embed_hashed("d", &s, 4).is_err());
    }

    #[test]
    fn disjoint_alphabets_are_orthogonal() {
        let (a, b) = ("abc abd bca", "xyz wxy zyx");
        let grams = |s: &str| -> HashSet<String> {
            let c: Vec<char> = s.chars().collect();
            c.windows(3).map(|w| w.iter().collect()).collect()
        };
        let (ga, gb) = (grams(a), grams(b));
        assert!(ga.is_disjoint(&gb));
        let slots = |g: &HashSet<String>| -> HashSet<u64> {
            g.iter().map(|x| fnv1a64(x.as_bytes()) % 4096).collect()
        };
        assert!(
            slots(&ga).is_disjoint(&slots(&gb)),
            "hash collision in fixture"
        );
        assert_eq!(
            cosine(&hash_sentence(a, 4096), &hash_sentence(b, 4096)),
            0.0
        );
    }

    #[test]
    fn consistency_examples() {
        let v = vec![0.6, 0.8];
        let (var, mean, conv) = consistency(&emb(vec![v.clone(), v.clone(), v.clone()]));
        assert!(var.abs() < 1e-15 && (mean - 1.0).abs() < 1e-12 && !conv);
        let (var, _, _) = consistency(&emb(vec![vec![1.0, 0.0], vec![0.3, 0.7]]));
        assert_eq!(var, 0.0);
        let (var, mean, _) =
            consistency(&emb(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert_eq!((var, mean), (0.25, 0.5));
        assert_eq!(consistency(&emb(vec![vec![1.0]])), (0.0, 1.0, true));
        let (_, mean, _) = consistency(&emb(vec![vec![0.0, 0.0], vec![1.0, 0.0]]));
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn pooled_features() {
        let f = extract_semantic(&emb(vec![vec![0.5, -1.0]])).unwrap();
        assert_eq!(f.mean_embedding, vec![0.5, -1.0]);
        assert_eq!(f.to_vec().len(), 4);
        let f = extract_semantic(&emb(vec![vec![0.5, -1.0], vec![-0.5, 1.0]])).unwrap();
        assert_eq!(f.mean_embedding, vec![0.0, 0.0]);
        let f = extract_semantic(&emb(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ]))
        .unwrap();
        assert_eq!(f.mean_embedding, vec![1.0 / 3.0, 2.0 / 3.0, 0.0]);
        assert_eq!((f.consistency_var, f.adjacent_sim_mean), (0.25, 0.5));
        assert!(extract_semantic(&emb(vec![])).is_err());
    }

    #[test]
    fn embedding_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        let docs: Vec<SentenceEmbeddings> = (0..3)
            .map(|i| SentenceEmbeddings {
                doc_id: format!("d{i}"),
                vectors: (0..=i)
                    .map(|j| vec![0.1 * j as f64, -1.0 / 3.0, 1e-17])
                    .collect(),
            })
            .collect();
        save_embeddings(&p, &docs).unwrap();
        let back = load_embeddings(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back["d2"], docs[2]);

        std::fs::write(&p, "{\"doc_id\":\"a\",\"sentence_index\":0,\"vector\":[1,2]}\n{\"doc_id\":\"a\",\"sentence_index\":1,\"vector\":[1]}\n").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::Embeddings(_))));
        std::fs::write(&p, "{\"doc_id\":\"a\",\"sentence_index\":0,\"vector\":[1,2]}\n{\"doc_id\":\"a\",\"sentence_index\":2,\"vector\":[1,0]}\n").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::Embeddings(_))));
    }

    fn rotation(dim: usize, seed: u64) -> Vec<Vec<f64>> {
        // Gram-Schmidt on a seeded random matrix
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                q.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        q
    }

    proptest! {
        #[test]
        fn consistency_is_rotation_invariant(
            vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 2..7),
            seed in any::<u64>(),
        ) {
            let r = rotation(6, seed);
            let rotated: Vec<Vec<f64>> = vs
                .iter()
                .map(|v| r.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect())
                .collect();
            let (v1, m1, _) = consistency(&emb(vs));
            let (v2, m2, _) = consistency(&emb(rotated));
            prop_assert!((v1 - v2).abs() < 1e-9 && (m1 - m2).abs() < 1e-9);
            prop_assert!(v1 >= 0.0);
        }
    }
}
