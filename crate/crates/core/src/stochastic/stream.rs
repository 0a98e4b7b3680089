use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator handed to sample oracles.
pub type SampleRng = ChaCha8Rng;

/// What a substream is used for. Kept in the key so that, e.g., the
/// stopping index of outer step `k` never shares draws with its gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamPurpose {
    Gradient,
    Stopping,
    Estimate,
    Diagnostic,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Gradient => 0x67,
            StreamPurpose::Stopping => 0x73,
            StreamPurpose::Estimate => 0x65,
            StreamPurpose::Diagnostic => 0x64,
        }
    }
}

/// Address of an independent substream: root seed plus a `(k, j, s)` path
/// (outer step, inner step, sample index).
///
/// The generator for an address is seeded from a hash of the full key, so
/// a draw depends only on its address and never on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub root_seed: u64,
    pub purpose: StreamPurpose,
    pub path: [u64; 3],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            purpose: StreamPurpose::Gradient,
            path: [0; 3],
        }
    }

    pub fn with_purpose(self, purpose: StreamPurpose) -> Self {
        Self { purpose, ..self }
    }

    pub fn outer(self, k: u64) -> Self {
        Self {
            path: [k, 0, 0],
            ..self
        }
    }

    pub fn step(self, j: u64) -> Self {
        Self {
            path: [self.path[0], j, 0],
            ..self
        }
    }

    pub fn sample(self, s: u64) -> Self {
        Self {
            path: [self.path[0], self.path[1], s],
            ..self
        }
    }

    /// Fresh generator positioned at the start of this substream.
    pub fn rng(&self) -> SampleRng {
        let mut state = self.root_seed;
        let mut mix = splitmix64(&mut state);
        for word in [self.purpose.tag(), self.path[0], self.path[1], self.path[2]] {
            state ^= word.wrapping_mul(0xd6e8_feb8_6659_fd93) ^ mix;
            mix = splitmix64(&mut state);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Uniform draw from `{1, ..., n_k}`.
pub fn draw_stopping(n_k: u64, stream: &RngStream) -> Result<u64> {
    if n_k < 1 {
        return Err(Error::Parameter(
            "iteration limit must be at least 1".into(),
        ));
    }
    Ok(stream.rng().random_range(1..=n_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn degenerate_support() {
        let s = RngStream::new(3).with_purpose(StreamPurpose::Stopping);
        for k in 0..50 {
            assert_eq!(draw_stopping(1, &s.outer(k)).unwrap(), 1);
        }
        assert!(draw_stopping(0, &s).is_err());
    }

    #[test]
    fn same_address_same_draw() {
        let s = RngStream::new(964113).outer(4).step(2).sample(9);
        assert_eq!(
            draw_stopping(1000, &s).unwrap(),
            draw_stopping(1000, &s).unwrap()
        );
        let a: f64 = s.rng().random();
        let b: f64 = s.rng().random();
        assert_eq!(a, b);
        let other: f64 = s.sample(10).rng().random();
        assert_ne!(a, other);
    }

    #[test]
    fn stopping_draws_are_uniform() {
        let base = RngStream::new(421507).with_purpose(StreamPurpose::Stopping);
        let mut counts = [0u64; 7];
        let draws = 100_000u64;
        for k in 0..draws {
            let r = draw_stopping(7, &base.outer(k)).unwrap();
            counts[(r - 1) as usize] += 1;
        }
        let expected = draws as f64 / 7.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - ChiSquared::new(6.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi-square p = {p}");
    }

    #[test]
    fn adjacent_substreams_uncorrelated() {
        let base = RngStream::new(107785).outer(1).step(1);
        let n = 100_000u64;
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in 0..n {
            let x: f64 = base.sample(s).rng().random();
            let y: f64 = base.sample(s + 1).rng().random();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() < 0.01, "corr = {corr}");
    }
}
