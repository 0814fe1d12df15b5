use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per independent generator stream.
pub const MC_CHUNK: usize = 4096;

/// Smallest sample count accepted by [`mc_background_gradient`].
pub const MC_MIN_SAMPLES: usize = 10_000;

/// Fixed primitive colors of the single-ray test configuration.
pub const MC_COLORS: [f64; 3] = [0.2, -0.1, 0.4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub s: f64,
    pub n_samples: usize,
    pub estimate: f64,
    pub standard_error: f64,
    pub analytic: f64,
}

impl McEstimate {
    /// Distance from the analytic value in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.standard_error > 0.0 {
            (self.estimate - self.analytic).abs() / self.standard_error
        } else if self.estimate == self.analytic {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// One draw of the background-scale gradient on a single ray with a fully
/// consistent target (zero residual from the primitives).
///
/// With a background color `c ~ U(-1, 1)` the gradient is
/// `(1 - s)·c·Σc_p + (s - 1)·c²`, whose mean is `(s - 1)/3`.
pub fn background_gradient_sample(s: f64, c: f64) -> f64 {
    let cp: f64 = MC_COLORS.iter().sum();
    (1.0 - s) * c * cp + (s - 1.0) * c * c
}

/// Monte-Carlo estimate of the expected background-scale gradient.
///
/// Samples are split into chunks of [`MC_CHUNK`], each drawn from its own
/// stream of a counter-based generator, so the result is independent of the
/// thread count.
pub fn mc_background_gradient(s: f64, n_samples: usize, seed: u64) -> Result<McEstimate> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!("background scale s must lie in [0, 1], got {s}")));
    }
    if n_samples < MC_MIN_SAMPLES {
        return Err(Error::invalid(format!("need at least {MC_MIN_SAMPLES} samples, got {n_samples}")));
    }
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..len {
                let g = background_gradient_sample(s, rng.random_range(-1.0..1.0));
                sum += g;
                sq += g * g;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        s,
        n_samples,
        estimate: mean,
        standard_error: (var / n).sqrt(),
        analytic: (s - 1.0) / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_variance_is_one_third() {
        // independent check of Var(U(-1, 1)) used by the analytic value
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 200_000;
        let v: f64 = (0..n).map(|_| rng.random_range(-1.0f64..1.0).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 1.0 / 3.0).abs() < 5e-3);
    }

    #[test]
    fn estimates_match_analytic() {
        for s in [0.0, 0.5, 1.0] {
            let e = mc_background_gradient(s, 100_000, 5).unwrap();
            assert!(e.z_score() <= 3.0, "{e:?}");
        }
        let e = mc_background_gradient(0.5, 100_000, 5).unwrap();
        assert!((e.analytic + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn converged_case_is_exactly_zero() {
        let e = mc_background_gradient(1.0, 10_000, 1).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.z_score(), 0.0);
    }

    #[test]
    fn independent_of_thread_count() {
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| mc_background_gradient(0.25, 50_000, 3).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn rejects_small_samples_and_bad_s() {
        assert!(mc_background_gradient(0.5, 100, 0).is_err());
        assert!(mc_background_gradient(1.5, 100_000, 0).is_err());
    }
}
