//! Token importance estimators: `[CLS]` saliency, cross-modal attention and the
//! unified instruction-aware score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::error::{Error, Result};
use crate::kernel::{self, NORM_EPS};
use crate::synth::softmax_f64;
use crate::tensor::{check_finite, MatrixView, Tensor};

/// Per-token importance scores. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f32>);

impl ScoreVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest score; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f32)> = None;
        for (i, &v) in self.0.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl TryFrom<Tensor> for ScoreVector {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        if t.rank() != 1 {
            return Err(Error::Shape(format!(
                "score vector must be rank 1, got shape {:?}",
                t.shape()
            )));
        }
        Ok(Self(t.into_data()))
    }
}

/// Which estimator produces the initial scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceKind {
    Cls,
    Cross,
    Unified,
    External,
}

impl ImportanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceKind::Cls => "cls",
            ImportanceKind::Cross => "cross",
            ImportanceKind::Unified => "unified",
            ImportanceKind::External => "external",
        }
    }
}

impl fmt::Display for ImportanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImportanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(Self::Cls),
            "cross" => Ok(Self::Cross),
            "unified" => Ok(Self::Unified),
            "external" => Ok(Self::External),
            other => Err(Error::Validation(format!(
                "unknown importance source `{other}` (expected cls, cross, unified or external)"
            ))),
        }
    }
}

/// An importance estimator, with the caller's scores for [`ImportanceSource::External`].
#[derive(Debug, Clone, PartialEq)]
pub enum ImportanceSource {
    Cls,
    Cross,
    Unified,
    External(ScoreVector),
}

impl ImportanceSource {
    pub fn kind(&self) -> ImportanceKind {
        match self {
            ImportanceSource::Cls => ImportanceKind::Cls,
            ImportanceSource::Cross => ImportanceKind::Cross,
            ImportanceSource::Unified => ImportanceKind::Unified,
            ImportanceSource::External(_) => ImportanceKind::External,
        }
    }
}

fn attention_logits_softmax(query: &[f32], keys: MatrixView<'_>) -> Result<Vec<f64>> {
    let d = query.len();
    if d == 0 {
        return Err(Error::Shape("query dimension must be at least 1".into()));
    }
    if keys.rows() == 0 {
        return Err(Error::Empty("attention needs at least one key"));
    }
    if keys.cols() != d {
        return Err(Error::Shape(format!(
            "query has dimension {d} but keys are {}x{}",
            keys.rows(),
            keys.cols()
        )));
    }
    check_finite(query)?;
    check_finite(keys.as_slice())?;
    let scale = (d as f64).sqrt();
    let logits: Vec<f64> = keys
        .iter_rows()
        .map(|k| kernel::dot(query, k) / scale)
        .collect();
    Ok(softmax_f64(&logits))
}

/// `softmax_j(query . keys[j] / sqrt(d))`, computed with max subtraction in f64.
pub fn scaled_softmax_attention(query: &[f32], keys: MatrixView<'_>) -> Result<ScoreVector> {
    let probs = attention_logits_softmax(query, keys)?;
    Ok(ScoreVector(probs.into_iter().map(|p| p as f32).collect()))
}

/// Per-head scaled softmax attention (`sqrt(d_h)` scale), averaged over heads.
///
/// `q_heads` is `H x d_h`, `k_heads` is `H x N x d_h`.
pub fn multi_head_cross_attention(q_heads: &Tensor, k_heads: &Tensor) -> Result<ScoreVector> {
    let (h, dh, n) = match (q_heads.shape(), k_heads.shape()) {
        (&[h, dh], &[kh, n, kd]) if kh == h && kd == dh => (h, dh, n),
        (q, k) => {
            return Err(Error::Shape(format!(
                "multi-head query shape {q:?} does not match key shape {k:?}"
            )))
        }
    };
    if h == 0 {
        return Err(Error::Shape("at least one head is required".into()));
    }
    let mut mean = vec![0.0f64; n];
    for head in 0..h {
        let query = &q_heads.data()[head * dh..(head + 1) * dh];
        let keys = MatrixView::new(&k_heads.data()[head * n * dh..(head + 1) * n * dh], n, dh)?;
        let probs = attention_logits_softmax(query, keys)?;
        for (m, p) in mean.iter_mut().zip(probs) {
            *m += p;
        }
    }
    Ok(ScoreVector(
        mean.into_iter().map(|m| (m / h as f64) as f32).collect(),
    ))
}

/// Cosine similarity of every vision embedding with the instruction feature.
pub fn instruction_relevance(
    vision_embeddings: MatrixView<'_>,
    text_feature: &[f32],
) -> Result<ScoreVector> {
    if vision_embeddings.cols() != text_feature.len() {
        return Err(Error::Shape(format!(
            "vision_embeddings are {}x{} but text_feature has length {}",
            vision_embeddings.rows(),
            vision_embeddings.cols(),
            text_feature.len()
        )));
    }
    let text_norm = kernel::norm(text_feature);
    if text_norm <= NORM_EPS {
        return Err(Error::Validation(format!(
            "text_feature has near-zero norm ({text_norm:e})"
        )));
    }
    let norms = kernel::row_norms(vision_embeddings)?;
    Ok(ScoreVector(
        vision_embeddings
            .iter_rows()
            .zip(norms)
            .map(|(row, n)| kernel::cosine_with_norms(row, text_feature, n, text_norm) as f32)
            .collect(),
    ))
}

/// Affine rescale onto `[0, 1]`. A constant input maps to all ones, so a
/// relevance signal that carries no information leaves saliency untouched.
pub fn min_max_normalize(scores: &ScoreVector) -> Result<ScoreVector> {
    if scores.is_empty() {
        return Err(Error::Empty(
            "min-max normalization of an empty score vector",
        ));
    }
    let (min, max) = scores
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    let range = max - min;
    let out = if range > 0.0 {
        scores
            .values()
            .iter()
            .map(|&v| ((v as f64 - min) / range) as f32)
            .collect()
    } else {
        vec![1.0; scores.len()]
    };
    Ok(ScoreVector(out))
}

/// Elementwise product of normalized relevance and `[CLS]` saliency, in f32.
pub fn unified_score(
    relevance_norm: &ScoreVector,
    cls_saliency: &ScoreVector,
) -> Result<ScoreVector> {
    if relevance_norm.len() != cls_saliency.len() {
        return Err(Error::Shape(format!(
            "relevance has length {} but saliency has length {}",
            relevance_norm.len(),
            cls_saliency.len()
        )));
    }
    Ok(ScoreVector(
        relevance_norm
            .values()
            .iter()
            .zip(cls_saliency.values())
            .map(|(&r, &s)| r * s)
            .collect(),
    ))
}

/// Produces the initial scores for `case` from the requested estimator.
pub fn resolve_importance(case: &Case, source: &ImportanceSource) -> Result<ScoreVector> {
    let n = case.n_tokens();
    let missing = |field| Error::MissingField {
        source_kind: source.kind().as_str(),
        field,
    };
    let cls = || -> Result<ScoreVector> {
        let t = case
            .cls_attention
            .as_ref()
            .ok_or_else(|| missing("cls_attention"))?;
        expect_len(ScoreVector::try_from(t.clone())?, n, "cls_attention")
    };

    match source {
        ImportanceSource::Cls => cls(),
        ImportanceSource::Cross => {
            let q = case
                .cross_query
                .as_ref()
                .ok_or_else(|| missing("cross_query"))?;
            let k = case
                .cross_keys
                .as_ref()
                .ok_or_else(|| missing("cross_keys"))?;
            let scores = match q.rank() {
                1 => scaled_softmax_attention(q.data(), k.as_matrix()?)?,
                _ => multi_head_cross_attention(q, k)?,
            };
            expect_len(scores, n, "cross_keys")
        }
        ImportanceSource::Unified => {
            let text = case
                .text_feature
                .as_ref()
                .ok_or_else(|| missing("text_feature"))?;
            let vision = case
                .vision_embeddings
                .as_ref()
                .ok_or_else(|| missing("vision_embeddings"))?;
            let saliency = cls()?;
            let relevance = instruction_relevance(vision.as_matrix()?, text.data())?;
            let relevance = expect_len(relevance, n, "vision_embeddings")?;
            unified_score(&min_max_normalize(&relevance)?, &saliency)
        }
        ImportanceSource::External(scores) => {
            check_finite(scores.values())?;
            expect_len(scores.clone(), n, "external scores")
        }
    }
}

fn expect_len(scores: ScoreVector, n: usize, what: &str) -> Result<ScoreVector> {
    if scores.len() != n {
        return Err(Error::Shape(format!(
            "{what} yields {} scores but the case has {n} tokens",
            scores.len()
        )));
    }
    Ok(scores)
}
