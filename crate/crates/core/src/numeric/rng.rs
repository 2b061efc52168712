use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Mat;

/// Seeded ChaCha8 stream. Not used for anything secret; ChaCha8 is chosen
/// because its output for a given seed is fixed across platforms and
/// crate versions, which keeps every seeded artifact reproducible.
#[derive(Clone, Debug)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Generator for stream `stream` of `seed`. Streams of one seed do not
    /// overlap, so parallel workers can each take one.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self(inner)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn normal_mat(&mut self, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |_, _| self.normal())
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.0);
        p
    }
}

/// `n` standard-normal draws. `n == 0` yields an empty vector.
pub fn normal_sample(rng: &mut Rng, n: usize) -> Vec<f64> {
    rng.normal_vec(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = normal_sample(&mut Rng::new(99), 64);
        let b = normal_sample(&mut Rng::new(99), 64);
        assert_eq!(a, b);
        assert_ne!(a, normal_sample(&mut Rng::new(100), 64));
    }

    #[test]
    fn moments_are_standard() {
        let xs = normal_sample(&mut Rng::new(2024), 100_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.03, "var {var}");
    }

    #[test]
    fn derived_streams_differ() {
        let a = Rng::derive(7, 0).normal_vec(16);
        assert_eq!(a, Rng::derive(7, 0).normal_vec(16));
        assert_ne!(a, Rng::derive(7, 1).normal_vec(16));
    }

    #[test]
    fn zero_draws_is_empty() {
        assert!(normal_sample(&mut Rng::new(0), 0).is_empty());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(5);
        assert!((0..10_000)
            .map(|_| rng.uniform())
            .all(|u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn permutation_is_bijective() {
        let mut p = Rng::new(3).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
