//! Importance–diversity token selection.
//!
//! Given `N` token embeddings and a per-token importance score, [`id_select`]
//! keeps `T` tokens by repeatedly taking the highest-scoring one and damping the
//! scores of tokens close to it in cosine distance. Importance can come from a
//! `[CLS]` attention row, cross-modal query/key attention, or a unified score that
//! weights `[CLS]` saliency by instruction relevance.
//!
//! Inputs are exchanged as IDSL tensor files bundled by a JSON case manifest; see
//! [`tensor`] and [`case`]. Baseline rules ([`baselines`]) and quality
//! [`metrics`] support comparisons, and [`synth`] generates clustered test cases.

pub mod baselines;
pub mod bench;
pub mod case;
pub mod error;
pub mod importance;
pub mod kernel;
pub mod metrics;
pub mod selection;
pub mod synth;
pub mod tensor;

pub use baselines::{maxmin_select, random_select, topk_select, MaxMinInit};
pub use case::{load_case, write_case, Case, CaseManifest};
pub use error::{Error, Result};
pub use importance::{resolve_importance, ImportanceKind, ImportanceSource, ScoreVector};
pub use metrics::{compute_report, MetricsReport};
pub use selection::{
    id_select, select, Method, SelectionConfig, SelectionResult, StepRecord, DEFAULT_GAMMA,
};
pub use synth::{synth_case, SynthSpec};
pub use tensor::{read_tensor, write_tensor, MatrixView, Tensor};
