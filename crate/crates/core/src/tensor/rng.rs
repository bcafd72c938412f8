use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::scalar::Scalar;

/// Seeded, platform-stable random stream.
///
/// Backed by ChaCha20, so identical seeds and call sequences reproduce
/// bit-identical draws on every platform. Independent streams are derived
/// by label with [`RngStream::substream`]. Not shareable between threads;
/// derive one substream per worker instead.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `label`; does not advance `self`.
    pub fn substream(&self, label: &str) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ fnv1a(label.as_bytes())))
    }

    /// Independent stream keyed by `label` and an index, e.g. one per trial.
    pub fn substream_indexed(&self, label: &str, index: u64) -> RngStream {
        RngStream::new(splitmix64(
            splitmix64(self.seed ^ fnv1a(label.as_bytes())) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ))
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform<T: Scalar>(&mut self) -> T {
        T::of(self.uniform_f64())
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn normal_f64(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let x = 2.0 * self.uniform_f64() - 1.0;
            let y = 2.0 * self.uniform_f64() - 1.0;
            let s = x * x + y * y;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(y * f);
                return x * f;
            }
        }
    }

    pub fn normal<T: Scalar>(&mut self) -> T {
        T::of(self.normal_f64())
    }

    pub fn sample_gaussian<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn sample_uniform<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.uniform()).collect()
    }

    /// Uniform integer in `0..n`.
    ///
    /// # Panics
    /// If `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n as u64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<X>(&mut self, xs: &mut [X]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// Draws an index from unnormalized log-weights.
    pub fn categorical_log(&mut self, log_weights: &[f64]) -> usize {
        let lse = crate::tensor::log_sum_exp(log_weights);
        let u = self.uniform_f64();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &lw) in log_weights.iter().enumerate() {
            let p = (lw - lse).exp();
            if p > 0.0 {
                last = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
