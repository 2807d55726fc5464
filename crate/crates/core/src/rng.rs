//! Counter-based random streams.
//!
//! Every draw in a simulation is a pure function of
//! `(seed, replicate, time step, purpose, lane)`. The key is hashed into a
//! 64-bit stream id and the stream itself is SplitMix64: the k-th output is
//! `mix(id + (k+1)·γ)`, so any substream can be opened directly without
//! touching its neighbours. This makes results independent of how work is
//! spread over threads.

use std::f64::consts::TAU;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const KEY_INIT: u64 = 0x6a09_e667_f3bc_c909;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(acc: u64, word: u64) -> u64 {
    mix64(acc ^ mix64(word.wrapping_add(GAMMA)))
}

/// What a substream is used for. Keeps selection, mutation and
/// initialization draws of the same step disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init,
    Select,
    Mutate,
    Other(u64),
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Select => 2,
            Purpose::Mutate => 3,
            Purpose::Other(c) => 0x100 + c,
        }
    }
}

/// A SplitMix64 stream addressed by a hashed key.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn from_key(words: &[u64]) -> Self {
        let id = words.iter().fold(KEY_INIT, |acc, &w| absorb(acc, w));
        RngStream {
            id,
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::from_key(&[seed])
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.id.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1].
    #[inline]
    fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Box–Muller transform. Each pair of uniforms
    /// yields two normals; the second is returned by the next call.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    /// Uniform integer in `0..n` (n > 0), by Lemire's multiply-shift with
    /// rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

/// The family of substreams belonging to one replicate.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateStreams {
    seed: u64,
    replicate: u64,
}

impl ReplicateStreams {
    pub fn new(seed: u64, replicate: u64) -> Self {
        ReplicateStreams { seed, replicate }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    /// Stream for `(t, purpose, lane)`; lane is usually a particle index.
    pub fn stream(&self, t: u64, purpose: Purpose, lane: u64) -> RngStream {
        RngStream::from_key(&[self.seed, self.replicate, t, purpose.code(), lane])
    }

    pub fn init(&self, particle: usize) -> RngStream {
        self.stream(0, Purpose::Init, particle as u64)
    }

    pub fn select(&self, t: usize) -> RngStream {
        self.stream(t as u64, Purpose::Select, 0)
    }

    pub fn mutate(&self, t: usize, particle: usize) -> RngStream {
        self.stream(t as u64, Purpose::Mutate, particle as u64)
    }

    /// All mutation streams of step `t`; `lanes.lane(i)` equals
    /// `mutate(t, i)` but hashes the shared key prefix only once.
    pub fn mutation_lanes(&self, t: usize) -> StreamLanes {
        StreamLanes {
            prefix: [self.seed, self.replicate, t as u64, Purpose::Mutate.code()]
                .iter()
                .fold(KEY_INIT, |acc, &w| absorb(acc, w)),
        }
    }
}

/// Streams sharing every key word but the last.
#[derive(Debug, Clone, Copy)]
pub struct StreamLanes {
    prefix: u64,
}

impl StreamLanes {
    #[inline]
    pub fn lane(&self, lane: usize) -> RngStream {
        RngStream {
            id: absorb(self.prefix, lane as u64),
            counter: 0,
            spare_normal: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanes_match_direct_streams() {
        let s = ReplicateStreams::new(9, 4);
        let lanes = s.mutation_lanes(17);
        for i in [0, 1, 250] {
            let (mut a, mut b) = (lanes.lane(i), s.mutate(17, i));
            for _ in 0..4 {
                assert_eq!(a.next_u64(), b.next_u64());
            }
        }
    }

    #[test]
    fn same_key_same_stream() {
        let mut a = RngStream::from_key(&[1, 2, 3]);
        let mut b = RngStream::from_key(&[1, 2, 3]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_keys_differ() {
        let s = ReplicateStreams::new(7, 0);
        let x = s.mutate(3, 0).next_u64();
        assert_ne!(x, s.mutate(3, 1).next_u64());
        assert_ne!(x, s.mutate(4, 0).next_u64());
        assert_ne!(x, s.select(3).next_u64());
        assert_ne!(x, ReplicateStreams::new(7, 1).mutate(3, 0).next_u64());
    }

    #[test]
    fn uniform_moments() {
        let mut r = RngStream::seeded(11);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        // stderr of the mean is sqrt(1/12/n) ≈ 6.5e-4
        assert!((mean - 0.5).abs() < 4.0 * 6.5e-4);
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn normal_moments() {
        let mut r = RngStream::seeded(5);
        let n = 200_000;
        let (mut s, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = r.standard_normal();
            s += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
        let nf = n as f64;
        assert!((s / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!((s4 / nf - 3.0).abs() < 0.1);
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut r = RngStream::seeded(3);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[r.below(5) as usize] += 1;
        }
        for c in counts {
            // binomial sd ≈ 89
            assert!((c as f64 - 10_000.0).abs() < 400.0);
        }
    }
}
