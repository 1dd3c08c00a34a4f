use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Draws gradient-check points away from kinks and saturation.
///
/// Every pre-activation entry has `|z| >= min_abs`, every row holds both
/// signs, and every `α·p + β` has `|u| <= max_u`. Single-signed rows put
/// `p` within `ε` of 0 or 1, where the `ε`-free analytic derivative is
/// exactly zero but the forward's is of order `ε`.
///
/// Entries are built with a magnitude in `[min_abs, 1]` and a random sign;
/// quantities that depend on other draws (hidden pre-activations, BN
/// outputs) go through [`Self::retry`].
#[derive(Debug, Clone)]
pub struct PointSampler {
    rng: ChaCha8Rng,
    pub min_abs: f64,
    pub max_u: f64,
    pub max_attempts: usize,
}

impl PointSampler {
    pub fn new(seed: u64) -> Self {
        PointSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            min_abs: 0.01,
            max_u: 10.0,
            max_attempts: 10_000,
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn seed(&mut self) -> u64 {
        self.rng.random()
    }

    /// One entry with `min_abs <= |z| <= 1`.
    pub fn entry(&mut self) -> f64 {
        let mag = self.rng.random_range(self.min_abs..=1.0);
        if self.rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    }

    /// `n` rows of width `d >= 2`, each with both signs present.
    pub fn tensor(&mut self, n: usize, d: usize) -> Tensor {
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            loop {
                let row: Vec<f64> = (0..d).map(|_| self.entry()).collect();
                if mixed_signs(&row) {
                    data.extend(row);
                    break;
                }
            }
        }
        Tensor::new(vec![n, d], data).expect("sampler shapes are positive")
    }

    /// Margin and mixed-sign conditions on every row of `z`.
    pub fn admissible_z(&self, z: &Tensor) -> bool {
        z.data().iter().all(|v| v.abs() >= self.min_abs)
            && (0..z.rows()).all(|i| mixed_signs(z.row(i)))
    }

    pub fn admissible_margin(&self, values: &[f64]) -> bool {
        values.iter().all(|v| v.abs() >= self.min_abs)
    }

    pub fn admissible_u(&self, u: &[f64]) -> bool {
        u.iter().all(|v| v.abs() <= self.max_u)
    }

    /// Calls `draw` until it returns `Some`, up to `max_attempts` times.
    pub fn retry<T, F>(&mut self, what: &str, mut draw: F) -> Result<T>
    where
        F: FnMut(&mut Self) -> Result<Option<T>>,
    {
        for _ in 0..self.max_attempts {
            if let Some(v) = draw(self)? {
                return Ok(v);
            }
        }
        Err(Error::Numeric(format!(
            "no admissible {what} point after {} attempts",
            self.max_attempts
        )))
    }
}

fn mixed_signs(row: &[f64]) -> bool {
    row.iter().any(|&v| v > 0.0) && row.iter().any(|&v| v < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_respect_the_margin() {
        let mut s = PointSampler::new(1);
        let t = s.tensor(200, 8);
        assert!(s.admissible_z(&t));
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
        assert!(t.data().iter().any(|&v| v < 0.0) && t.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn retry_gives_up() {
        let mut s = PointSampler::new(0);
        s.max_attempts = 3;
        let mut calls = 0;
        let r: Result<()> = s.retry("never", |_| {
            calls += 1;
            Ok(None)
        });
        assert!(matches!(r, Err(Error::Numeric(_))));
        assert_eq!(calls, 3);
    }

    #[test]
    fn same_seed_same_points() {
        let a = PointSampler::new(7).tensor(3, 4);
        let b = PointSampler::new(7).tensor(3, 4);
        assert_eq!(a, b);
    }
}
