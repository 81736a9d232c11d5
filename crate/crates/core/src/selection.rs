//! Importance–diversity selection.
//!
//! Tokens are picked one at a time by highest current score. After each pick,
//! every remaining token `j` has its score reduced by `w * S_i`, where `S_i` is
//! the picked token's score and `w = exp(-gamma * d^2)` with `d` the cosine
//! distance between the two tokens. The picked score is then set to `-inf`.
//! Near-duplicates of a picked token therefore lose almost all of its score,
//! while distant tokens are left essentially untouched.
//!
//! Each step costs one dot product per remaining token, so a full run is
//! `O(N * T * D)` time and `O(N)` extra memory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, MaxMinInit};
use crate::case::Case;
use crate::error::{Error, Result};
use crate::importance::{resolve_importance, ImportanceSource, ScoreVector};
use crate::kernel;
use crate::tensor::MatrixView;

pub const DEFAULT_GAMMA: f64 = 20.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Number of tokens to keep. Clamped to `N` at selection time.
    pub budget: usize,
    pub gamma: f64,
    #[serde(default)]
    pub tie_rule: TieRule,
    /// Subtract `max(S_i, 0)` instead of `S_i`, so a picked token whose score has
    /// already gone negative cannot raise its neighbours.
    #[serde(default)]
    pub clamp_negative_source: bool,
    #[serde(default)]
    pub trace: bool,
}

impl SelectionConfig {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            gamma: DEFAULT_GAMMA,
            tie_rule: TieRule::LowestIndex,
            clamp_negative_source: false,
            trace: false,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_clamp_negative_source(mut self, clamp: bool) -> Self {
        self.clamp_negative_source = clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Validation("budget must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Validation(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// One iteration of the selection loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub picked: usize,
    /// Score of the picked token at the moment it was picked.
    pub score: f64,
    /// Remaining scores that went from non-negative to negative in this update.
    pub suppressed_below_zero: usize,
    /// The picked score was negative, so the verbatim update raised neighbours.
    pub negative_source: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Indices in pick order.
    pub picked: Vec<usize>,
    /// The same indices in ascending (original positional) order.
    pub retained: Vec<usize>,
    pub trace: Option<Vec<StepRecord>>,
}

impl SelectionResult {
    pub fn from_picked(picked: Vec<usize>) -> Self {
        let mut retained = picked.clone();
        retained.sort_unstable();
        Self {
            picked,
            retained,
            trace: None,
        }
    }

    pub fn len(&self) -> usize {
        self.picked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.picked.is_empty()
    }
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine distance between lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = kernel::checked_norm(u, 0)?;
    let nv = kernel::checked_norm(v, 1)?;
    Ok(kernel::cosine_distance_with_norms(u, v, nu, nv))
}

/// `exp(-gamma * dist^2)`.
#[inline]
pub fn suppression_weight(dist: f64, gamma: f64) -> f64 {
    (-gamma * dist * dist).exp()
}

/// Counters reported by one score update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub suppressed_below_zero: usize,
    pub negative_source: bool,
}

/// Tokens with their norms precomputed, ready for repeated score updates.
#[derive(Debug, Clone)]
pub struct Suppressor<'a> {
    tokens: MatrixView<'a>,
    norms: Vec<f64>,
}

impl<'a> Suppressor<'a> {
    pub fn new(tokens: MatrixView<'a>) -> Result<Self> {
        let norms = kernel::row_norms(tokens)?;
        Ok(Self { tokens, norms })
    }

    /// Applies the update for `picked` in place and marks it selected with `-inf`.
    ///
    /// Entries already equal to `-inf` are treated as selected and left alone.
    pub fn apply(
        &self,
        scores: &mut [f64],
        picked: usize,
        gamma: f64,
        clamp_negative_source: bool,
    ) -> UpdateStats {
        let raw_source = scores[picked];
        let source = if clamp_negative_source {
            raw_source.max(0.0)
        } else {
            raw_source
        };
        let anchor = self.tokens.row(picked);
        let anchor_norm = self.norms[picked];
        let mut stats = UpdateStats {
            suppressed_below_zero: 0,
            negative_source: raw_source < 0.0,
        };

        for (j, score) in scores.iter_mut().enumerate() {
            if j == picked || *score == f64::NEG_INFINITY {
                continue;
            }
            let dist = kernel::cosine_distance_with_norms(
                anchor,
                self.tokens.row(j),
                anchor_norm,
                self.norms[j],
            );
            let before = *score;
            *score -= suppression_weight(dist, gamma) * source;
            if before >= 0.0 && *score < 0.0 {
                stats.suppressed_below_zero += 1;
            }
        }
        scores[picked] = f64::NEG_INFINITY;
        stats
    }
}

/// Standalone score update for a single pick. `scores` holds `-inf` for tokens
/// selected earlier.
pub fn update_scores(
    scores: &mut [f64],
    picked: usize,
    tokens: MatrixView<'_>,
    gamma: f64,
    clamp_negative_source: bool,
) -> Result<UpdateStats> {
    if scores.len() != tokens.rows() {
        return Err(Error::Shape(format!(
            "{} scores for {} tokens",
            scores.len(),
            tokens.rows()
        )));
    }
    if picked >= scores.len() {
        return Err(Error::IndexOutOfRange {
            index: picked,
            len: scores.len(),
        });
    }
    if !scores[picked].is_finite() {
        return Err(Error::Validation(format!(
            "score of picked token {picked} is {}",
            scores[picked]
        )));
    }
    let suppressor = Suppressor::new(tokens)?;
    Ok(suppressor.apply(scores, picked, gamma, clamp_negative_source))
}

/// Highest finite score, lowest index on ties.
fn argmax_remaining(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Runs importance–diversity selection over `tokens` (`N x D`) with initial `scores`.
pub fn id_select(
    tokens: MatrixView<'_>,
    scores: &ScoreVector,
    config: &SelectionConfig,
) -> Result<SelectionResult> {
    config.validate()?;
    let n = tokens.rows();
    if n == 0 {
        return Err(Error::Empty("id_select needs at least one token"));
    }
    if scores.len() != n {
        return Err(Error::Shape(format!(
            "{} scores for {n} tokens",
            scores.len()
        )));
    }
    let suppressor = Suppressor::new(tokens)?;
    let mut working: Vec<f64> = scores.values().iter().map(|&s| s as f64).collect();
    let budget = config.budget.min(n);

    let mut picked = Vec::with_capacity(budget);
    let mut trace = config.trace.then(|| Vec::with_capacity(budget));
    while picked.len() < budget {
        let i = argmax_remaining(&working).expect("a token remains while below budget");
        let score = working[i];
        picked.push(i);
        let stats = suppressor.apply(&mut working, i, config.gamma, config.clamp_negative_source);
        if let Some(trace) = trace.as_mut() {
            trace.push(StepRecord {
                picked: i,
                score,
                suppressed_below_zero: stats.suppressed_below_zero,
                negative_source: stats.negative_source,
            });
        }
    }

    let mut result = SelectionResult::from_picked(picked);
    result.trace = trace;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Id,
    Topk,
    Maxmin,
    Random,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Id => "id",
            Method::Topk => "topk",
            Method::Maxmin => "maxmin",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(Method::Id),
            "topk" => Ok(Method::Topk),
            "maxmin" => Ok(Method::Maxmin),
            "random" => Ok(Method::Random),
            other => Err(Error::Validation(format!(
                "unknown method `{other}` (expected id, topk, maxmin or random)"
            ))),
        }
    }
}

/// Resolves importance on `case` and dispatches to the requested selection rule.
///
/// `maxmin` starts from the highest-scoring token when `source` resolves on the
/// case and from token 0 otherwise. `random` ignores `source` and uses `seed`
/// (0 when absent).
pub fn select(
    case: &Case,
    source: &ImportanceSource,
    config: &SelectionConfig,
    method: Method,
    seed: Option<u64>,
) -> Result<SelectionResult> {
    case.validate()?;
    config.validate()?;
    let tokens = case.tokens.as_matrix()?;
    match method {
        Method::Id => {
            let scores = resolve_importance(case, source)?;
            id_select(tokens, &scores, config)
        }
        Method::Topk => {
            let scores = resolve_importance(case, source)?;
            baselines::topk_select(&scores, config.budget)
        }
        Method::Maxmin => match resolve_importance(case, source) {
            Ok(scores) => baselines::maxmin_select(
                tokens,
                config.budget,
                MaxMinInit::ArgmaxScore,
                Some(&scores),
            ),
            Err(Error::MissingField { .. }) => {
                baselines::maxmin_select(tokens, config.budget, MaxMinInit::IndexZero, None)
            }
            Err(e) => Err(e),
        },
        Method::Random => baselines::random_select(tokens.rows(), config.budget, seed.unwrap_or(0)),
    }
}
