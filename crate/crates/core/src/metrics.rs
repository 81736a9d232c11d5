//! Quality measures for a selection: diversity, redundancy, coverage and how much
//! importance mass it keeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::ScoreVector;
use crate::kernel;
use crate::tensor::MatrixView;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when fewer than two tokens are selected.
    pub min_pairwise_distance: Option<f64>,
    /// `None` when fewer than two tokens are selected.
    pub mean_pairwise_similarity: Option<f64>,
    /// `None` when no non-negative score vector is available.
    pub importance_retention: Option<f64>,
    pub mean_nearest_selected_distance: f64,
    pub n_selected: usize,
    /// Why any optional metric was skipped.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

fn check_indices(tokens: MatrixView<'_>, selection: &[usize]) -> Result<()> {
    match selection.iter().find(|&&i| i >= tokens.rows()) {
        Some(&index) => Err(Error::IndexOutOfRange {
            index,
            len: tokens.rows(),
        }),
        None => Ok(()),
    }
}

fn selected_pairs<F>(tokens: MatrixView<'_>, selection: &[usize], mut f: F) -> Result<()>
where
    F: FnMut(f64),
{
    if selection.len() < 2 {
        return Err(Error::Validation(format!(
            "pairwise metric needs at least 2 selected tokens, got {}",
            selection.len()
        )));
    }
    check_indices(tokens, selection)?;
    let norms = selection
        .iter()
        .map(|&i| kernel::checked_norm(tokens.row(i), i))
        .collect::<Result<Vec<_>>>()?;
    for a in 0..selection.len() {
        for b in a + 1..selection.len() {
            f(kernel::cosine_with_norms(
                tokens.row(selection[a]),
                tokens.row(selection[b]),
                norms[a],
                norms[b],
            ));
        }
    }
    Ok(())
}

/// Smallest cosine distance between any two selected tokens.
pub fn min_pairwise_distance(tokens: MatrixView<'_>, selection: &[usize]) -> Result<f64> {
    let mut min = f64::INFINITY;
    selected_pairs(tokens, selection, |cos| min = min.min(1.0 - cos))?;
    Ok(min)
}

/// Mean cosine similarity over unordered selected pairs.
pub fn mean_pairwise_similarity(tokens: MatrixView<'_>, selection: &[usize]) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    selected_pairs(tokens, selection, |cos| {
        sum += cos;
        count += 1;
    })?;
    Ok(sum / count as f64)
}

/// Selected score mass over the best achievable mass with the same number of tokens.
pub fn importance_retention(initial: &ScoreVector, selection: &[usize]) -> Result<f64> {
    let values = initial.values();
    if let Some(i) = values.iter().position(|&v| v < 0.0) {
        return Err(Error::Validation(format!(
            "importance retention is undefined for negative scores (score {i} = {})",
            values[i]
        )));
    }
    if let Some(&index) = selection.iter().find(|&&i| i >= values.len()) {
        return Err(Error::IndexOutOfRange {
            index,
            len: values.len(),
        });
    }
    let kept: f64 = selection.iter().map(|&i| values[i] as f64).sum();
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let best: f64 = sorted.iter().take(selection.len()).sum();
    if best <= 0.0 {
        return Err(Error::Validation(
            "importance retention is undefined: the top scores sum to zero".into(),
        ));
    }
    Ok(kept / best)
}

/// Mean over all tokens of the cosine distance to the nearest selected token.
pub fn mean_nearest_selected_distance(tokens: MatrixView<'_>, selection: &[usize]) -> Result<f64> {
    if selection.is_empty() {
        return Err(Error::Empty("coverage of an empty selection"));
    }
    if tokens.rows() == 0 {
        return Err(Error::Empty("coverage over zero tokens"));
    }
    check_indices(tokens, selection)?;
    let norms = kernel::row_norms(tokens)?;
    let mut is_selected = vec![false; tokens.rows()];
    for &s in selection {
        is_selected[s] = true;
    }
    let total: f64 = (0..tokens.rows())
        .map(|j| {
            if is_selected[j] {
                return 0.0;
            }
            selection
                .iter()
                .map(|&s| {
                    kernel::cosine_distance_with_norms(
                        tokens.row(j),
                        tokens.row(s),
                        norms[j],
                        norms[s],
                    )
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / tokens.rows() as f64)
}

/// Computes every metric that is defined for the inputs.
///
/// Pairwise metrics are skipped below two selected tokens and importance
/// retention is skipped without scores or with negative scores; each skip adds a
/// warning. Out-of-range indices and zero-norm tokens are errors.
pub fn compute_report(
    tokens: MatrixView<'_>,
    selection: &[usize],
    initial_scores: Option<&ScoreVector>,
) -> Result<MetricsReport> {
    check_indices(tokens, selection)?;
    let mut warnings = Vec::new();
    let (min_pairwise_distance, mean_pairwise_similarity) = if selection.len() < 2 {
        warnings.push(format!(
            "pairwise metrics skipped: {} token(s) selected",
            selection.len()
        ));
        (None, None)
    } else {
        (
            Some(min_pairwise_distance(tokens, selection)?),
            Some(mean_pairwise_similarity(tokens, selection)?),
        )
    };
    let importance_retention = match initial_scores {
        None => {
            warnings.push("importance_retention skipped: no importance scores".into());
            None
        }
        Some(scores) => match importance_retention(scores, selection) {
            Ok(r) => Some(r),
            Err(Error::Validation(msg)) => {
                warnings.push(format!("importance_retention skipped: {msg}"));
                None
            }
            Err(e) => return Err(e),
        },
    };
    Ok(MetricsReport {
        min_pairwise_distance,
        mean_pairwise_similarity,
        importance_retention,
        mean_nearest_selected_distance: mean_nearest_selected_distance(tokens, selection)?,
        n_selected: selection.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(deg: f64) -> [f32; 2] {
        let r = deg.to_radians();
        [r.cos() as f32, r.sin() as f32]
    }

    fn tokens(angles: &[f64]) -> Vec<f32> {
        angles.iter().flat_map(|&a| unit(a)).collect()
    }

    #[test]
    fn pairwise_examples() {
        let data = tokens(&[0.0, 0.0, 90.0, 180.0, 60.0]);
        let m = MatrixView::new(&data, 5, 2).unwrap();
        assert!(min_pairwise_distance(m, &[0, 1]).unwrap().abs() < 1e-12);
        assert!((min_pairwise_distance(m, &[0, 2]).unwrap() - 1.0).abs() < 1e-7);
        assert!((min_pairwise_distance(m, &[0, 2, 3]).unwrap() - 1.0).abs() < 1e-7);
        assert!((mean_pairwise_similarity(m, &[0, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert!((mean_pairwise_similarity(m, &[0, 3]).unwrap() + 1.0).abs() < 1e-12);
        assert!((mean_pairwise_similarity(m, &[0, 4]).unwrap() - 0.5).abs() < 1e-7);
        assert!(min_pairwise_distance(m, &[0]).is_err());
        assert!(mean_pairwise_similarity(m, &[0, 9]).is_err());
    }

    #[test]
    fn retention_examples() {
        let s = ScoreVector::new(vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(importance_retention(&s, &[0, 1]).unwrap(), 1.0);
        assert!((importance_retention(&s, &[0, 3]).unwrap() - 5.0 / 7.0).abs() < 1e-12);
        assert_eq!(importance_retention(&s, &[3, 2, 1, 0]).unwrap(), 1.0);
        let neg = ScoreVector::new(vec![1.0, -1.0]).unwrap();
        assert!(importance_retention(&neg, &[0]).is_err());
        let zero = ScoreVector::new(vec![0.0, 0.0]).unwrap();
        assert!(importance_retention(&zero, &[0]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let data = tokens(&[0.0, 90.0]);
        let m = MatrixView::new(&data, 2, 2).unwrap();
        assert_eq!(mean_nearest_selected_distance(m, &[0, 1]).unwrap(), 0.0);
        assert!((mean_nearest_selected_distance(m, &[0]).unwrap() - 0.5).abs() < 1e-7);
        assert!(mean_nearest_selected_distance(m, &[]).is_err());
    }

    #[test]
    fn report_skips_undefined_metrics() {
        let data = tokens(&[0.0, 90.0, 45.0]);
        let m = MatrixView::new(&data, 3, 2).unwrap();
        let r = compute_report(m, &[1], None).unwrap();
        assert_eq!(r.min_pairwise_distance, None);
        assert_eq!(r.importance_retention, None);
        assert_eq!(r.n_selected, 1);
        assert_eq!(r.warnings.len(), 2);
        let neg = ScoreVector::new(vec![-1.0, 0.5, 0.2]).unwrap();
        assert_eq!(
            compute_report(m, &[0, 1], Some(&neg))
                .unwrap()
                .importance_retention,
            None
        );
        assert!(compute_report(m, &[3], None).is_err());
    }
}
