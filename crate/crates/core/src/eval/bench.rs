//! Per-stage wall-clock timing of detection.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::detector::{self, Annotations, Detector, DocFeatures};
use crate::error::{Error, Result};

pub const STAGES: [&str; 4] = ["semantic", "syntactic", "statistical", "fusion"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    /// Median over repetitions of the stage time for all documents.
    pub total_ms: f64,
    pub ms_per_doc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub docs: usize,
    pub repetitions: usize,
    pub stages: Vec<StageTiming>,
    /// Median over repetitions of the summed stage times.
    pub total_ms: f64,
    pub total_ms_per_doc: f64,
    /// Model tensors, LM tables and the largest per-document feature set.
    pub working_set_estimate_bytes: u64,
    /// Peak resident set size of the process, where the OS reports it.
    pub peak_rss_bytes: Option<u64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn peak_rss() -> Option<u64> {
    let s = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = s.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn working_set(det: &Detector, largest_doc: usize) -> u64 {
    let f64s =
        det.params.num_params() as u64 + det.normalizer.dims().iter().sum::<usize>() as u64 * 2;
    let lm = det.lm.to_file();
    let lm_bytes = serde_json::to_vec(&lm).map_or(0, |v| v.len() as u64);
    f64s * 8 + lm_bytes + largest_doc as u64 * 8
}

/// Runs the four stages over `docs` for each repetition. Each extraction
/// stage tokenizes on its own, as the levels run independently.
pub fn benchmark(
    det: &Detector,
    docs: &[&Document],
    ann: &Annotations,
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::InvalidArgument(format!(
            "repetitions must be ≥ 3, got {repetitions}"
        )));
    }
    if docs.is_empty() {
        return Err(Error::Empty("benchmark documents".into()));
    }
    let cfg = &det.feature_config;
    let mut per_stage = vec![Vec::with_capacity(repetitions); STAGES.len()];
    let mut totals = Vec::with_capacity(repetitions);
    let mut largest = 0;
    for _ in 0..repetitions {
        let mut t = [0.0f64; 4];
        for d in docs {
            let s = Instant::now();
            let semantic = detector::semantic_level(d, ann, cfg)?;
            t[0] += s.elapsed().as_secs_f64();
            let s = Instant::now();
            let syntactic = detector::syntactic_level(d, ann);
            t[1] += s.elapsed().as_secs_f64();
            let s = Instant::now();
            let statistical = detector::statistical_level(d, cfg, &det.lm)?;
            t[2] += s.elapsed().as_secs_f64();
            let s = Instant::now();
            let feats = DocFeatures {
                semantic,
                syntactic,
                statistical,
            }
            .flatten();
            let trace = det.predict_normalized(&det.normalizer.apply(&feats)?)?;
            t[3] += s.elapsed().as_secs_f64();
            std::hint::black_box(trace);
            largest = largest.max(feats.dims().iter().sum::<usize>());
        }
        let ms = t.map(|x| x * 1e3);
        for (v, x) in per_stage.iter_mut().zip(ms) {
            v.push(x);
        }
        totals.push(ms.iter().sum::<f64>());
    }
    let n = docs.len() as f64;
    let stages = STAGES
        .iter()
        .zip(per_stage.iter_mut())
        .map(|(name, v)| {
            let m = median(v);
            StageTiming {
                stage: name.to_string(),
                total_ms: m,
                ms_per_doc: m / n,
            }
        })
        .collect();
    let total_ms = median(&mut totals);
    Ok(BenchReport {
        docs: docs.len(),
        repetitions,
        stages,
        total_ms,
        total_ms_per_doc: total_ms / n,
        working_set_estimate_bytes: working_set(det, largest),
        peak_rss_bytes: peak_rss(),
    })
}
