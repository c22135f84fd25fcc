use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Seeded random stream identified by `(seed, stream)`.
///
/// Each named stream maps to its own ChaCha stream, so sub-tasks that draw
/// from different streams never perturb each other's sequences.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: String,
    inner: ChaCha8Rng,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64, stream: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(stream));
        Rng {
            seed,
            stream: stream.to_string(),
            inner,
        }
    }

    /// Independent child stream `"<stream>/<name>"` on the same seed.
    pub fn derive(&self, name: &str) -> Rng {
        Rng::new(self.seed, &format!("{}/{}", self.stream, name))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> &str {
        &self.stream
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Domain("seeded_shuffle: n must be at least 1".into()));
        }
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        Ok(p)
    }

    pub fn choice(&mut self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::Domain("seeded_choice: n must be at least 1".into()));
        }
        Ok(self.below(n))
    }

    /// Point on the unit sphere in `R^d`.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| self.normal()).collect();
            let n = crate::numcore::norm(&v);
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

pub fn seeded_shuffle(rng: &mut Rng, n: usize) -> Result<Vec<usize>> {
    rng.permutation(n)
}

pub fn seeded_choice(rng: &mut Rng, n: usize) -> Result<usize> {
    rng.choice(n)
}
