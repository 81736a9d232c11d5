//! Reference selection rules: top-k by importance, greedy max-min diversity and
//! uniform random.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::importance::ScoreVector;
use crate::kernel;
use crate::selection::SelectionResult;
use crate::synth::pinned_rng;
use crate::tensor::MatrixView;

/// Starting token for [`maxmin_select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxMinInit {
    /// Highest score, lowest index on ties.
    ArgmaxScore,
    IndexZero,
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(Error::Validation("budget must be at least 1".into()));
    }
    Ok(())
}

/// The `min(budget, N)` highest scores, in descending score order (ties by index).
pub fn topk_select(scores: &ScoreVector, budget: usize) -> Result<SelectionResult> {
    check_budget(budget)?;
    if scores.is_empty() {
        return Err(Error::Empty("top-k over an empty score vector"));
    }
    let values = scores.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable: equal scores keep ascending index order.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order.truncate(budget.min(values.len()));
    Ok(SelectionResult::from_picked(order))
}

/// Greedy farthest-point selection under cosine distance.
///
/// Starting from `init`, repeatedly adds the token whose minimum distance to the
/// current set is largest; ties go to the lowest index.
pub fn maxmin_select(
    tokens: MatrixView<'_>,
    budget: usize,
    init: MaxMinInit,
    scores: Option<&ScoreVector>,
) -> Result<SelectionResult> {
    check_budget(budget)?;
    let n = tokens.rows();
    if n == 0 {
        return Err(Error::Empty("max-min selection needs at least one token"));
    }
    let norms = kernel::row_norms(tokens)?;
    let first = match init {
        MaxMinInit::IndexZero => 0,
        MaxMinInit::ArgmaxScore => {
            let scores = scores.ok_or_else(|| {
                Error::Validation("argmax-score initialization requires scores".into())
            })?;
            if scores.len() != n {
                return Err(Error::Shape(format!(
                    "{} scores for {n} tokens",
                    scores.len()
                )));
            }
            scores.argmax().expect("non-empty scores")
        }
    };

    let budget = budget.min(n);
    let mut picked = Vec::with_capacity(budget);
    let mut selected = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut current = first;
    loop {
        picked.push(current);
        selected[current] = true;
        if picked.len() == budget {
            break;
        }
        let anchor = tokens.row(current);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if selected[j] {
                continue;
            }
            let d =
                kernel::cosine_distance_with_norms(anchor, tokens.row(j), norms[current], norms[j]);
            if d < nearest[j] {
                nearest[j] = d;
            }
            if best.is_none_or(|(_, b)| nearest[j] > b) {
                best = Some((j, nearest[j]));
            }
        }
        current = best.expect("unselected token remains").0;
    }
    Ok(SelectionResult::from_picked(picked))
}

/// `min(budget, n)` distinct indices drawn without replacement from the pinned generator.
pub fn random_select(n: usize, budget: usize, seed: u64) -> Result<SelectionResult> {
    check_budget(budget)?;
    if n == 0 {
        return Err(Error::Empty("random selection over zero tokens"));
    }
    let mut rng = pinned_rng(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let (chosen, _) = indices.partial_shuffle(&mut rng, budget.min(n));
    Ok(SelectionResult::from_picked(chosen.to_vec()))
}
