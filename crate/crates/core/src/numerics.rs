//! Small numeric helpers shared across the crate: order-canonical
//! reductions, stable log-sigmoid, softmax, and seed derivation.

/// Sum in a canonical order so the result is invariant under any
/// permutation of the inputs. Sorting by the IEEE total order makes the
/// accumulation sequence a pure function of the input multiset.
pub fn canonical_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.iter().sum()
}

/// Mean with the same permutation-invariance guarantee as [`canonical_sum`].
pub fn canonical_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    canonical_sum(values) / values.len() as f64
}

/// Max-shifted softmax with a canonical-order denominator, so the output
/// weights are an exact function of the score multiset per position.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let denom = canonical_sum(&exps);
    exps.iter().map(|e| e / denom).collect()
}

/// Log-softmax (max-shifted); plain accumulation is fine here since no
/// permutation invariance is required of callers.
pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_denom = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - max - log_denom).collect()
}

/// Numerically stable log(sigmoid(x)). Branches on the sign so that large
/// |x| never overflows the intermediate exponential.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// FNV-1a over bytes; used to fold strings into seed material.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a list of component labels.
/// Deterministic, platform-independent, and order-sensitive.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = splitmix64(master);
    for &p in parts {
        z = splitmix64(z ^ splitmix64(p));
    }
    z
}
