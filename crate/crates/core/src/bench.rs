//! Wall-clock timing of [`id_select`] over a grid of token counts and budgets.

use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::importance::ScoreVector;
use crate::selection::{id_select, SelectionConfig};
use crate::synth::{synth_case, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub n_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub dim: usize,
    pub gamma: f64,
    pub reps: usize,
    pub seed: u64,
}

/// One CSV row: timings for a single `(n, t)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub t: usize,
    pub dim: usize,
    pub reps: usize,
    pub median_ns: u64,
    pub p90_ns: u64,
    /// Hash of the picked index sequence; identical across repetitions.
    pub checksum: u64,
}

pub const CSV_HEADER: &str = "n,t,dim,reps,median_ns,p90_ns,checksum";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.t, self.dim, self.reps, self.median_ns, self.p90_ns, self.checksum
        )
    }
}

/// Synthetic geometry used for every benchmark case.
pub fn bench_spec(n: usize, dim: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n_tokens: n,
        dim,
        n_clusters: n.min(16),
        cluster_spread: 0.05,
        seed,
        score_noise: 0.1,
    }
}

/// FNV-1a over the little-endian bytes of each index.
pub fn checksum(indices: &[usize]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    indices
        .iter()
        .flat_map(|&i| (i as u64).to_le_bytes())
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// `(median, p90)` of the samples; median averages the middle pair, p90 is nearest-rank.
pub fn median_p90(samples: &mut [u64]) -> (u64, u64) {
    assert!(!samples.is_empty());
    samples.sort_unstable();
    let len = samples.len();
    let median = if len % 2 == 1 {
        samples[len / 2]
    } else {
        (samples[len / 2 - 1] + samples[len / 2]) / 2
    };
    let rank = (0.9 * len as f64).ceil() as usize;
    (median, samples[rank.clamp(1, len) - 1])
}

pub fn run_bench(params: &BenchParams) -> Result<Vec<BenchRow>> {
    if params.n_list.is_empty() || params.t_list.is_empty() {
        return Err(Error::Validation("n and t lists must be non-empty".into()));
    }
    if params.n_list.contains(&0) || params.t_list.contains(&0) {
        return Err(Error::Validation(
            "n and t values must be at least 1".into(),
        ));
    }
    if params.reps == 0 || params.dim == 0 {
        return Err(Error::Validation("reps and dim must be at least 1".into()));
    }

    let mut rows = Vec::with_capacity(params.n_list.len() * params.t_list.len());
    for &n in &params.n_list {
        let case = synth_case(&bench_spec(n, params.dim, params.seed))?;
        let tokens = case.tokens.as_matrix()?;
        let scores =
            ScoreVector::try_from(case.cls_attention.clone().expect("synth sets attention"))?;
        for &t in &params.t_list {
            let config = SelectionConfig::new(t).with_gamma(params.gamma);
            // Untimed warm-up also fixes the reference checksum.
            let reference = checksum(&id_select(tokens, &scores, &config)?.picked);
            let mut samples = Vec::with_capacity(params.reps);
            for _ in 0..params.reps {
                let start = Instant::now();
                let result = id_select(black_box(tokens), black_box(&scores), &config)?;
                let elapsed = start.elapsed().as_nanos().max(1) as u64;
                let sum = checksum(black_box(&result.picked));
                if sum != reference {
                    return Err(Error::Validation(format!(
                        "selection for n={n} t={t} is not deterministic"
                    )));
                }
                samples.push(elapsed);
            }
            let (median_ns, p90_ns) = median_p90(&mut samples);
            rows.push(BenchRow {
                n,
                t,
                dim: params.dim,
                reps: params.reps,
                median_ns,
                p90_ns,
                checksum: reference,
            });
        }
    }
    Ok(rows)
}
