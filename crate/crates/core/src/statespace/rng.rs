use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};

/// Stream id of process-noise draws within a trajectory.
pub const PROCESS_STREAM: u64 = 0;
/// Stream id of measurement-noise draws within a trajectory.
pub const MEASUREMENT_STREAM: u64 = 1;

/// Independent counter-based substream `stream` of the generator keyed by `seed`.
///
/// Streams never overlap, so adding a channel leaves the draws of the
/// existing ones untouched.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws from `St(ν, μ, τ²)` as a scale mixture: `λ ~ Inv-Gamma(ν/2, ντ²/2)`
/// followed by `x ~ N(μ, λ)`.
pub fn sample_student_compound<R: Rng + ?Sized>(nu: f64, mu: f64, tau2: f64, rng: &mut R) -> Result<f64> {
    if !(nu > 0.0 && nu.is_finite()) || !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "student compound requires nu > 0 and tau2 > 0 (got {nu}, {tau2})"
        )));
    }
    // 1/λ ~ Gamma(shape ν/2, scale 2/(ντ²))
    let precision = Gamma::new(0.5 * nu, 2.0 / (nu * tau2))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    let lambda = 1.0 / precision;
    let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
    Ok(mu + lambda.sqrt() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| substream(7, 0).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(substream(7, 0).next_u64(), substream(7, 1).next_u64());
        assert_ne!(substream(7, 0).next_u64(), substream(8, 0).next_u64());
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = substream(1, 0);
        assert!(sample_student_compound(0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(sample_student_compound(1.0, 0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn variance_matches_student_formula() {
        let mut rng = substream(11, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_student_compound(5.0, 0.0, 1.0, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = 5.0 / 3.0;
        assert!((var - expected).abs() / expected < 0.05, "var {var}");
    }

    #[test]
    fn location_shift() {
        let mut rng = substream(12, 0);
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_student_compound(5.0, 3.0, 1.0, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (5.0f64 / 3.0 / n as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * se, "mean {mean}");
    }
}
