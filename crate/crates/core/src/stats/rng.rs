//! Counter-based random streams.
//!
//! Every draw is a function of `(root seed, stream id, word position)`. Stream ids are
//! derived from a [`StreamKey`] naming the sampler stage, the block indices and the sweep,
//! so the values a block sees do not depend on which worker runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sampler stage tag mixed into stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Stage {
    Init = 1,
    Mixture = 2,
    LocusEffects = 3,
    Lambda = 4,
    Covariance = 5,
    SubjectLambda = 6,
    Intercept = 7,
    EnvCoefficient = 8,
    LambdaMean = 9,
    Customer = 10,
    Dish = 11,
    Precision = 12,
    Simulation = 13,
    Calibration = 14,
    Bootstrap = 15,
    Test = 16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub stage: Stage,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub sweep: u64,
}

impl StreamKey {
    pub fn new(stage: Stage, a: usize, b: usize, c: usize, sweep: u64) -> Self {
        Self {
            stage,
            a: a as u64,
            b: b as u64,
            c: c as u64,
            sweep,
        }
    }

    /// 64-bit stream id (splitmix64 chained over the fields).
    pub fn id(&self) -> u64 {
        let mut h = splitmix(self.stage as u64);
        for v in [self.a, self.b, self.c, self.sweep] {
            h = splitmix(h ^ v);
        }
        h
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha8 stream selected by id under a root seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
    root: u64,
    id: u64,
}

impl RngStream {
    pub fn new(root: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        rng.set_stream(id);
        Self { rng, root, id }
    }

    pub fn keyed(root: u64, key: StreamKey) -> Self {
        Self::new(root, key.id())
    }

    /// Positions a stream at an explicit counter, reproducing any earlier state.
    pub fn at(root: u64, id: u64, counter: u128) -> Self {
        let mut s = Self::new(root, id);
        s.rng.set_word_pos(counter);
        s
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random bits in [0, 1)
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.next_u32() & 1 == 1
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}
