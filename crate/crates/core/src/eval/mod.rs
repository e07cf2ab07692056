//! Metrics, baselines and the evaluation protocols.

pub mod baselines;
pub mod bench;
pub mod importance;
pub mod metrics;
pub mod protocols;
pub mod robustness;

pub use baselines::{baseline_detect, BaselineKind};
pub use bench::{benchmark, BenchReport};
pub use importance::{permutation_importance, ImportanceReport};
pub use metrics::{compute_metrics, Metrics};
pub use protocols::{ablate, ablation_preset, cross_domain_both, cross_domain_eval, evaluate};
pub use robustness::{robustness_eval, synonym_replace, RobustnessReport};
