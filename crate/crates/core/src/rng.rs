//! Reproducible random substreams.
//!
//! Every uniform variate used by the estimators is addressed by
//! `(seed, level, stratum, index)`. The address maps onto a ChaCha8 key
//! (seed), stream id (level, stratum) and word position (index), so any
//! sample can be regenerated independently of the order or the thread on
//! which it is drawn.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Identifies one substream of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub level: u32,
    pub stratum: u32,
}

impl StreamKey {
    pub fn new(level: usize, stratum: usize) -> Self {
        Self {
            level: level as u32,
            stratum: stratum as u32,
        }
    }

    fn stream_id(self) -> u64 {
        (u64::from(self.level) << 32) | u64::from(self.stratum)
    }
}

/// Counter-based access to the uniform variates of one substream.
#[derive(Debug, Clone)]
pub struct SubStream {
    seed: u64,
    key: StreamKey,
}

impl SubStream {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        Self { seed, key }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Uniform variate on `(0, 1]` at position `index`.
    pub fn uniform(&self, index: u64) -> f64 {
        let mut rng = self.rng_at(index);
        to_unit_interval(rng.next_u64())
    }

    /// A sequential generator positioned at `index`.
    pub fn rng_at(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.key.stream_id());
        // one u64 consumes two 32-bit words
        rng.set_word_pos(u128::from(index) * 2);
        rng
    }
}

/// Maps 53 random bits onto `(0, 1]`.
pub fn to_unit_interval(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * INV_2_53
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential_draws() {
        let s = SubStream::new(42, StreamKey::new(3, 1));
        let mut seq = s.rng_at(0);
        for i in 0..64 {
            let expected = to_unit_interval(seq.next_u64());
            assert_eq!(s.uniform(i).to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let a = SubStream::new(7, StreamKey::new(0, 0));
        let b = SubStream::new(7, StreamKey::new(0, 1));
        let c = SubStream::new(7, StreamKey::new(1, 0));
        let d = SubStream::new(8, StreamKey::new(0, 0));
        let u = a.uniform(0);
        assert_ne!(u, b.uniform(0));
        assert_ne!(u, c.uniform(0));
        assert_ne!(u, d.uniform(0));
    }

    #[test]
    fn unit_interval_bounds() {
        assert_eq!(to_unit_interval(u64::MAX), 1.0);
        assert!(to_unit_interval(0) > 0.0);
    }
}
