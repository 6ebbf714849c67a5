//! Hierarchical, counter-based random streams.
//!
//! Every piece of randomness in the crate is drawn from a [`RandomStream`]
//! addressed by a 64-bit root seed and a slash-separated path such as
//! `sweep/p-8.0/train/seq3`. The ChaCha key is derived by hashing
//! `(seed, path)`, so a stream's output depends only on its address and draw
//! index, never on scheduling. Parallel work items therefore reproduce
//! bit-identically: fork one child stream per work item instead of sharing.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

pub struct RandomStream {
    seed: u64,
    path: String,
    rng: ChaCha12Rng,
}

impl RandomStream {
    /// Root stream of an experiment.
    pub fn new(seed: u64, path: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(b"/");
        hasher.update(path.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        RandomStream {
            seed,
            path: path.to_string(),
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Child stream at `path/label`, independent of this stream's draw
    /// position. Forking the same label twice yields the same child; labels
    /// must be unique among siblings.
    pub fn fork(&self, label: &str) -> Self {
        RandomStream::new(self.seed, &format!("{}/{}", self.path, label))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.path
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// One circularly-symmetric complex Gaussian draw with total variance
    /// `variance` (each quadrature carries half).
    pub fn cscg(&mut self, variance: f64) -> Complex64 {
        let s = (variance / 2.0).sqrt();
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }
}

/// i.i.d. CSCG samples; real and imaginary parts each have variance
/// `variance / 2`, reproducible per stream.
pub fn cscg_samples(stream: &mut RandomStream, n: usize, variance: f64) -> Result<Vec<Complex64>> {
    if !(variance >= 0.0) {
        return Err(Error::Domain(format!(
            "CSCG variance must be nonnegative, got {variance}"
        )));
    }
    Ok((0..n).map(|_| stream.cscg(variance)).collect())
}
