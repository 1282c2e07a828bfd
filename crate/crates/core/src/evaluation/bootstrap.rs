use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::Hyperparams;

use super::EvalReport;

pub const DEFAULT_BOOTSTRAP: usize = 10_000;
/// Two-sided coverage of the percentile interval.
pub const CONFIDENCE: f64 = 0.95;

/// Paired comparison of held-out losses; differences are `A − B`, so a
/// negative interval favours `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub model_a: Hyperparams,
    pub model_b: Hyperparams,
    pub mean_difference: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// The interval excludes zero.
    pub reliable: bool,
    pub n_boot: usize,
    pub seed: u64,
}

/// Percentile interval of the mean paired difference `a − b`, resampling
/// indices with replacement. Replicate `k` draws from its own stream of the
/// seed, so `(b, a)` gives exactly the negated, reversed interval.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_boot: usize, seed: u64) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!(
            "{} vs {} sentences",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() || n_boot == 0 {
        return Err(Error::Empty);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let mut replicates: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += d[rng.random_range(0..n)];
            }
            sum / n as f64
        })
        .collect();
    replicates.sort_by(f64::total_cmp);
    let (lo, hi) = percentile_interval(&replicates, (1.0 - CONFIDENCE) / 2.0);
    Ok((lo, hi, mean))
}

/// Linear-interpolation quantiles at `q` and `1 − q`, computed from opposite
/// ends with the same arithmetic so the interval negates exactly.
fn percentile_interval(sorted: &[f64], q: f64) -> (f64, f64) {
    let n = sorted.len();
    let h = q * (n - 1) as f64;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    let j = (i + 1).min(n - 1);
    let lo = sorted[i] + frac * (sorted[j] - sorted[i]);
    let (ri, rj) = (n - 1 - i, n - 1 - j);
    let hi = sorted[ri] - frac * (sorted[ri] - sorted[rj]);
    (lo, hi)
}

/// Compares two grid points of `report` on their per-sentence held-out losses.
pub fn bootstrap_compare(
    report: &EvalReport,
    model_a: Hyperparams,
    model_b: Hyperparams,
    n_boot: usize,
    seed: u64,
) -> Result<ComparisonRecord> {
    let a = report.sentence_losses(model_a)?;
    let b = report.sentence_losses(model_b)?;
    let (ci_lower, ci_upper, mean_difference) = paired_bootstrap(&a, &b, n_boot, seed)?;
    Ok(ComparisonRecord {
        model_a,
        model_b,
        mean_difference,
        ci_lower,
        ci_upper,
        reliable: ci_lower > 0.0 || ci_upper < 0.0,
        n_boot,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_comparison_is_exactly_zero() {
        let a = [0.3, 1.2, 0.01, 4.0];
        assert_eq!(paired_bootstrap(&a, &a, 500, 1).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_difference_collapses() {
        let a: Vec<f64> = (0..50).map(|x| x as f64 * 0.37).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.125).collect();
        let (lo, hi, mean) = paired_bootstrap(&a, &b, 1000, 2).unwrap();
        for v in [lo, hi, mean] {
            assert!((v - 0.125).abs() < 1e-9);
        }
    }

    #[test]
    fn swapping_models_negates_and_reverses() {
        let a: Vec<f64> = (0..40).map(|x| ((x * 7) % 11) as f64 / 3.0).collect();
        let b: Vec<f64> = (0..40).map(|x| ((x * 5) % 13) as f64 / 4.0).collect();
        for n_boot in [1, 2, 7, 1000] {
            let (lo, hi, m) = paired_bootstrap(&a, &b, n_boot, 9).unwrap();
            let (lo2, hi2, m2) = paired_bootstrap(&b, &a, n_boot, 9).unwrap();
            assert_eq!((lo, hi), (-hi2, -lo2));
            assert!((m + m2).abs() < 1e-15);
        }
    }

    #[test]
    fn percentiles_match_a_direct_computation() {
        let sorted: Vec<f64> = (0..101).map(|x| x as f64).collect();
        assert_eq!(percentile_interval(&sorted, 0.025), (2.5, 97.5));
        assert_eq!(percentile_interval(&[4.0], 0.025), (4.0, 4.0));
    }

    #[test]
    fn mismatched_lengths_are_pairing_errors() {
        assert!(matches!(
            paired_bootstrap(&[1.0], &[1.0, 2.0], 10, 0),
            Err(Error::Pairing(_))
        ));
    }
}
