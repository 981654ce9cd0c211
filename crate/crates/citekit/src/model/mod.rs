//! Pluggable model clients.
//!
//! Everything model-dependent in the pipeline goes through one of four
//! capability traits, each with a deterministic seeded mock so the whole
//! toolkit runs offline. Live implementations speak the common
//! chat-completion HTTP schema (see [`http`]).

#[cfg(feature = "http")]
pub mod http;
pub mod mock;

use crate::error::{Error, Result};

/// Free-form text generation: prompt in, completion out.
pub trait GeneratorClient: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String>;
}

/// Sum of token log-probabilities of `continuation` given `context`.
/// Always finite and ≤ 0.
pub trait ScorerClient: Send + Sync {
    fn score_sequence(&self, context: &str, continuation: &str) -> Result<f64>;
}

/// Text to fixed-dimension unit vector.
pub trait EmbedderClient: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>>;
    fn dim(&self) -> usize;
}

/// Entailment score of `claim` given `premise`, in [0, 1].
pub trait EntailmentClient: Send + Sync {
    fn entail(&self, premise: &str, claim: &str) -> Result<f64>;

    /// Score plus the boolean decision at threshold `tau`.
    fn entails(&self, premise: &str, claim: &str, tau: f64) -> Result<(f64, bool)> {
        let score = self.entail(premise, claim)?;
        Ok((score, score >= tau))
    }
}

/// Generator backed by a plain function. Handy for scripting exact behavior
/// in tests and small tools.
pub struct FnGenerator<F: Fn(&str) -> Result<String> + Send + Sync>(pub F);

impl<F: Fn(&str) -> Result<String> + Send + Sync> GeneratorClient for FnGenerator<F> {
    fn generate(&self, prompt: &str) -> Result<String> {
        (self.0)(prompt)
    }
}

/// Cosine similarity in [-1, 1]. Vectors must share a dimension.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Contract(format!(
            "embedding dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += a as f64 * b as f64;
        nu += a as f64 * a as f64;
        nv += b as f64 * b as f64;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// FNV-1a over framed parts, mixed with a seed and passed through a 64-bit
/// finalizer. The deterministic randomness source for every mock client; no
/// ambient RNG. The finalizer matters: plain FNV barely diffuses the last
/// few input bytes into the top bits, which skews mocks whose inputs differ
/// only at the tail (e.g. numbered candidate titles).
pub fn fnv1a64(seed: u64, parts: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(PRIME);
    for part in parts {
        for &b in part.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0x1f; // frame separator
        h = h.wrapping_mul(PRIME);
    }
    mix64(h)
}

/// Murmur3-style avalanche finalizer.
fn mix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    h
}

/// Map a hash to a uniform f64 in [0, 1).
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identity_is_one() {
        let v = vec![0.6f32, 0.8];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_dim_mismatch_is_contract_violation() {
        let e = cosine(&[1.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
    }

    #[test]
    fn fnv_is_seed_and_order_sensitive() {
        assert_ne!(fnv1a64(1, &["a", "b"]), fnv1a64(2, &["a", "b"]));
        assert_ne!(fnv1a64(1, &["a", "b"]), fnv1a64(1, &["b", "a"]));
        assert_ne!(fnv1a64(1, &["ab", ""]), fnv1a64(1, &["a", "b"]));
    }

    #[test]
    fn unit_f64_in_range() {
        for i in 0..100 {
            let u = unit_f64(fnv1a64(i, &["x"]));
            assert!((0.0..1.0).contains(&u));
        }
    }
}
