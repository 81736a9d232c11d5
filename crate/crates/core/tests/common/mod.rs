//! Test-only reference implementations. Nothing here calls into the library's
//! selection or kernel code.

#![allow(dead_code)]

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::Rng;

use idsel::synth::{pinned_rng, BoxMuller, PinnedRng};

/// Straight-line transliteration of the selection loop: argmax (lowest index on
/// ties), then `S_j <- S_j - exp(-gamma * d^2) * S_i` for every other unselected
/// `j`, then `S_i <- -inf`. Norms and dot products are recomputed naively.
#[allow(clippy::needless_range_loop, clippy::assign_op_pattern)]
pub fn reference_id_select(
    tokens: &[f32],
    dim: usize,
    scores: &[f32],
    budget: usize,
    gamma: f64,
) -> Vec<usize> {
    let n = scores.len();
    let row = |i: usize| &tokens[i * dim..(i + 1) * dim];
    let mut s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
    let mut r: Vec<usize> = Vec::new();
    let target = budget.min(n);
    while r.len() < target {
        let mut i = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            if r.contains(&j) {
                continue;
            }
            if i == usize::MAX || s[j] > best {
                i = j;
                best = s[j];
            }
        }
        r.push(i);
        for j in 0..n {
            if j == i || r.contains(&j) {
                continue;
            }
            let (a, b) = (row(i), row(j));
            let mut dot = 0.0f64;
            let mut na = 0.0f64;
            let mut nb = 0.0f64;
            for k in 0..dim {
                dot += a[k] as f64 * b[k] as f64;
                na += a[k] as f64 * a[k] as f64;
                nb += b[k] as f64 * b[k] as f64;
            }
            let d = 1.0 - dot / (na.sqrt() * nb.sqrt());
            let w = (-gamma * d * d).exp();
            s[j] = s[j] - w * s[i];
        }
        s[i] = f64::NEG_INFINITY;
    }
    r
}

pub fn naive_cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Greedy max-min that recomputes every candidate's distance to the whole
/// selected set at each step.
pub fn reference_maxmin(tokens: &[f32], dim: usize, first: usize, budget: usize) -> Vec<usize> {
    let n = tokens.len() / dim;
    let row = |i: usize| &tokens[i * dim..(i + 1) * dim];
    let mut picked = vec![first];
    while picked.len() < budget.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|j| !picked.contains(j)) {
            let m = picked
                .iter()
                .map(|&p| naive_cosine_distance(row(p), row(j)))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((j, m));
            }
        }
        picked.push(best.unwrap().0);
    }
    picked
}

/// A randomized selection problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub dim: usize,
    pub tokens: Vec<f32>,
    pub scores: Vec<f32>,
    pub budget: usize,
}

/// Half of the instances are clustered (tight Gaussian blobs), half isotropic.
pub fn random_instance(seed: u64, max_n: usize, max_dim: usize, max_t: usize) -> Instance {
    let mut rng: PinnedRng = pinned_rng(seed ^ 0x5eed_0fac_e000_0000);
    let n = rng.random_range(1..=max_n);
    let dim = rng.random_range(1..=max_dim);
    let budget = rng.random_range(1..=max_t);
    let clustered = rng.random_bool(0.5);
    let scores: Vec<f32> = (0..n).map(|_| rng.random::<f32>()).collect();
    let k = rng.random_range(1..=n.min(8));
    let mut g = BoxMuller::new(rng);
    let centers: Vec<f64> = (0..k * dim).map(|_| g.sample()).collect();
    let mut tokens = Vec::with_capacity(n * dim);
    for i in 0..n {
        loop {
            let row: Vec<f32> = (0..dim)
                .map(|c| {
                    if clustered {
                        (centers[(i % k) * dim + c] + 0.1 * g.sample()) as f32
                    } else {
                        g.sample() as f32
                    }
                })
                .collect();
            let norm: f64 = row.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            if norm > 1e-3 {
                tokens.extend(row);
                break;
            }
        }
    }
    Instance {
        n,
        dim,
        tokens,
        scores,
        budget,
    }
}

/// Exact `(mantissa, exponent)` with `value = mantissa * 2^exponent`.
fn decode(x: f64) -> (BigInt, i64) {
    assert!(x.is_finite());
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    (BigInt::from(sign) * BigInt::from(m), e)
}

const FIXED_BITS: i64 = 400;

fn to_fixed(x: f64) -> BigInt {
    let (m, e) = decode(x);
    let shift = e + FIXED_BITS;
    assert!(shift >= 0, "value too small for the fixed-point oracle");
    m << (shift as usize)
}

/// `exp(-gamma * dist^2)` for the exact binary values of `gamma` and `dist`,
/// in fixed point with [`FIXED_BITS`] fractional bits.
fn exp_neg_fixed(gamma: f64, dist: f64) -> BigInt {
    let one = BigInt::one() << FIXED_BITS as usize;
    let g = to_fixed(gamma);
    let d = to_fixed(dist);
    let x = (((g * &d) >> FIXED_BITS as usize) * &d) >> FIXED_BITS as usize;
    // exp(x) by Taylor series; every term is non-negative so truncation only
    // loses the last few bits of FIXED_BITS.
    let mut term = one.clone();
    let mut sum = one.clone();
    let mut k = 1u32;
    while !term.is_zero() {
        term = ((term * &x) >> FIXED_BITS as usize) / BigInt::from(k);
        sum += &term;
        k += 1;
    }
    (one.clone() * one) / sum
}

/// Whether `value` is within `ulps` units in the last place of the exactly
/// evaluated `exp(-gamma * dist^2)`.
pub fn weight_within_ulps(value: f64, gamma: f64, dist: f64, ulps: u32) -> bool {
    let exact = exp_neg_fixed(gamma, dist);
    let (_, e) = decode(value);
    let ulp = BigInt::one() << ((e + FIXED_BITS) as usize);
    let diff = (to_fixed(value) - exact).abs();
    diff <= ulp * BigInt::from(ulps)
}

/// Reference value as f64 (for messages only).
pub fn exp_neg_reference(gamma: f64, dist: f64) -> f64 {
    let exact = exp_neg_fixed(gamma, dist);
    let mag: BigUint = exact.magnitude().clone();
    let bits = mag.bits() as i64;
    let shift = (bits - 60).max(0);
    let top = (mag >> shift as usize)
        .iter_u64_digits()
        .next()
        .unwrap_or(0);
    top as f64 * 2f64.powi((shift - FIXED_BITS) as i32)
}

pub fn seeded(seed: u64) -> PinnedRng {
    pinned_rng(seed)
}

/// A case exercising every manifest field, consistent with all invariants.
pub fn full_case(seed: u64) -> idsel::Case {
    use idsel::{Case, Tensor};
    let mut rng = pinned_rng(seed);
    let (n, d, dv, h, dh) = (6, 4, 3, 2, 5);
    let mut vals =
        |len: usize| -> Vec<f32> { (0..len).map(|_| rng.random_range(0.1f32..1.0)).collect() };
    let attention = vals(n);
    let total: f32 = attention.iter().sum();
    Case::new(Tensor::matrix(n, d, vals(n * d)).unwrap())
        .with_cls_attention(Tensor::vector(attention.iter().map(|a| a / total).collect()).unwrap())
        .with_cross(
            Tensor::new(vec![h, dh], vals(h * dh)).unwrap(),
            Tensor::new(vec![h, n, dh], vals(h * n * dh)).unwrap(),
        )
        .with_instruction(
            Tensor::matrix(n, dv, vals(n * dv)).unwrap(),
            Tensor::vector(vals(dv)).unwrap(),
        )
        .with_label("full")
}

/// Every single-field corruption of the manifest at `manifest_path`, written as
/// sibling JSON files. Returns `(description, path)` pairs.
pub fn manifest_corruptions(manifest_path: &std::path::Path) -> Vec<(String, std::path::PathBuf)> {
    use idsel::Tensor;
    use serde_json::{json, Value};

    let dir = manifest_path.parent().unwrap();
    let valid: serde_json::Map<String, Value> =
        serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
    idsel::write_tensor(
        &Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
        dir.join("rank4.idsl"),
    )
    .unwrap();
    std::fs::write(dir.join("garbage.idsl"), b"not a tensor").unwrap();

    // Removing these breaks the schema: tokens is required, the cross pair
    // travels together, and text_feature needs vision_embeddings.
    let required = ["tokens", "cross_query", "cross_keys", "vision_embeddings"];
    let mut variants: Vec<(String, Value)> = Vec::new();
    for key in valid.keys() {
        for bad in [json!(7), json!(true), Value::Null, json!([]), json!({})] {
            let mut m = valid.clone();
            m.insert(key.clone(), bad.clone());
            variants.push((format!("{key} retyped to {bad}"), Value::Object(m)));
        }
        let mut m = valid.clone();
        let v = m.remove(key).unwrap();
        m.insert(format!("{key}_"), v);
        variants.push((format!("{key} renamed"), Value::Object(m)));
        if required.contains(&key.as_str()) {
            let mut m = valid.clone();
            m.remove(key);
            variants.push((format!("{key} dropped"), Value::Object(m)));
        }
        if key != "label" {
            for target in ["missing.idsl", "rank4.idsl", "garbage.idsl"] {
                let mut m = valid.clone();
                m.insert(key.clone(), json!(target));
                variants.push((format!("{key} -> {target}"), Value::Object(m)));
            }
        }
    }
    variants.push(("not an object".into(), json!(["tokens"])));
    variants
        .into_iter()
        .enumerate()
        .map(|(i, (desc, value))| {
            let path = dir.join(format!("corrupt_{i}.json"));
            std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
            (desc, path)
        })
        .collect()
}

/// Random tensor of rank 0..=3 with at most `max_numel` elements.
pub fn random_tensor(seed: u64, max_numel: usize) -> idsel::Tensor {
    let mut rng = pinned_rng(seed);
    let rank = rng.random_range(0..=3usize);
    let mut shape = Vec::with_capacity(rank);
    let mut numel = 1usize;
    for _ in 0..rank {
        let cap = (max_numel / numel).max(1);
        let dim = rng.random_range(0..=cap.min(200));
        shape.push(dim);
        numel *= dim.max(1);
    }
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            // Any finite bit pattern, including subnormals and negative zero.
            loop {
                let v = f32::from_bits(rng.random::<u32>());
                if v.is_finite() {
                    break v;
                }
            }
        })
        .collect();
    idsel::Tensor::new(shape, data).unwrap()
}
