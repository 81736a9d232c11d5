//! Seeded synthetic cases with clustered token geometry.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64`, whose output stream is fixed across platforms. Gaussians use
//! the Box–Muller transform on pairs of 53-bit uniforms, so a given seed
//! reproduces the same bytes everywhere.
//!
//! Draw order: `n_clusters * dim` center coordinates, then `dim` noise values per
//! token in index order, then one score-noise value per token.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case::Case;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The pinned pseudo-random generator used for synthesis and random selection.
pub type PinnedRng = ChaCha8Rng;

pub fn pinned_rng(seed: u64) -> PinnedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal sampler using Box–Muller, caching the second value of each pair.
#[derive(Debug)]
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(radius * theta.sin());
        radius * theta.cos()
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_tokens: usize,
    pub dim: usize,
    pub n_clusters: usize,
    /// Std of the isotropic per-token noise added to its cluster center.
    pub cluster_spread: f64,
    pub seed: u64,
    /// Std of the Gaussian noise added to each token's attention logit.
    pub score_noise: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("dim must be at least 1".into()));
        }
        if self.n_clusters == 0 {
            return Err(Error::Validation("n_clusters must be at least 1".into()));
        }
        if self.n_clusters > self.n_tokens {
            return Err(Error::Validation(format!(
                "n_clusters ({}) exceeds n_tokens ({})",
                self.n_clusters, self.n_tokens
            )));
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("score_noise", self.score_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Cluster that token `i` belongs to. Tokens are dealt round-robin.
    pub fn cluster_of(&self, token: usize) -> usize {
        token % self.n_clusters
    }

    /// Attention logit shared by every token of cluster `k` before noise.
    ///
    /// Cluster 0 is the most salient; logits fall linearly to `-(K-1)/K`.
    pub fn base_logit(&self, cluster: usize) -> f64 {
        -(cluster as f64) / self.n_clusters as f64
    }
}

/// Generates tokens and a `[CLS]` attention row; deterministic per seed.
pub fn synth_case(spec: &SynthSpec) -> Result<Case> {
    spec.validate()?;
    let SynthSpec {
        n_tokens,
        dim,
        n_clusters,
        cluster_spread,
        seed,
        score_noise,
    } = *spec;
    let mut gauss = BoxMuller::new(pinned_rng(seed));

    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| gauss.sample()).collect();
            normalized(&v)
        })
        .collect();

    let mut tokens = Vec::with_capacity(n_tokens * dim);
    for i in 0..n_tokens {
        let center = &centers[spec.cluster_of(i)];
        let raw: Vec<f64> = center
            .iter()
            .map(|&c| c + cluster_spread * gauss.sample())
            .collect();
        tokens.extend(normalized(&raw).into_iter().map(|x| x as f32));
    }

    let logits: Vec<f64> = (0..n_tokens)
        .map(|i| spec.base_logit(spec.cluster_of(i)) + score_noise * gauss.sample())
        .collect();
    let attention = softmax_f64(&logits);

    let case = Case::new(Tensor::matrix(n_tokens, dim, tokens)?)
        .with_cls_attention(Tensor::vector(
            attention.into_iter().map(|p| p as f32).collect(),
        )?)
        .with_label(format!(
            "synth n={n_tokens} dim={dim} clusters={n_clusters} spread={cluster_spread} \
             score_noise={score_noise} seed={seed}"
        ));
    case.validate()?;
    Ok(case)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        // Only reachable when every Gaussian draw is exactly zero.
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        e
    }
}

pub(crate) fn softmax_f64(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
