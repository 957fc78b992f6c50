//! Objective values to utilities.
//!
//! The ranking table gives the best `μ = ⌈λ/4⌉` samples `2λ/μ`, the worst
//! `μ` samples `0` and everything in between `λ/μ`. Tied objective values
//! share the mean of the weights their rank positions would get.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// `2λ/μ`, `λ/μ`, `0` with `μ = ⌈λ/4⌉`.
    Ranking,
    /// `λ/μ` for the best `μ = ⌈λ/4⌉`, `0` otherwise (UMDA / PBIL selection).
    Truncation,
    /// `exp(-f)`.
    Bounded,
}

impl WeightScheme {
    pub fn utilities(self, f_values: &[f64], minimize: bool) -> Result<UtilityBatch> {
        match self {
            WeightScheme::Ranking => ranking_utilities(f_values, minimize),
            WeightScheme::Truncation => truncation_utilities(f_values, minimize),
            WeightScheme::Bounded => bounded_utilities(f_values),
        }
    }
}

/// Utilities of one batch in sample order, with their mean and population
/// variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityBatch {
    utilities: Vec<f64>,
    mean_w: f64,
    var_w: f64,
}

impl UtilityBatch {
    pub fn from_utilities(utilities: Vec<f64>) -> Result<Self> {
        if utilities.is_empty() {
            return Err(Error::InvalidParameter("empty utility batch".into()));
        }
        check_finite(&utilities)?;
        let (mean_w, var_w) = mean_var(&utilities);
        Ok(UtilityBatch { utilities, mean_w, var_w })
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }

    pub fn mean_w(&self) -> f64 {
        self.mean_w
    }

    pub fn var_w(&self) -> f64 {
        self.var_w
    }

    /// `w_i - μ_W`.
    pub fn centered(&self) -> Vec<f64> {
        self.utilities.iter().map(|w| w - self.mean_w).collect()
    }

    /// Rescales to unit mean as `λ w_i / Σ w`. When `c·w` is exactly
    /// representable the result is bit-identical for `w` and `c·w`.
    /// Returns `None` when the utilities sum to zero.
    pub fn normalized(&self) -> Option<UtilityBatch> {
        let sum: f64 = self.utilities.iter().sum();
        if sum == 0.0 || !sum.is_finite() {
            return None;
        }
        let lambda = self.utilities.len() as f64;
        let utilities: Vec<f64> = self.utilities.iter().map(|w| lambda * w / sum).collect();
        let (mean_w, var_w) = mean_var(&utilities);
        Some(UtilityBatch { utilities, mean_w, var_w })
    }

    /// Multiplies every utility by `c`.
    pub fn scaled(&self, c: f64) -> Result<UtilityBatch> {
        UtilityBatch::from_utilities(self.utilities.iter().map(|w| c * w).collect())
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Number of promising samples, `⌈λ/4⌉`.
pub fn mu(lambda: usize) -> usize {
    lambda.div_ceil(4)
}

pub fn ranking_utilities(f_values: &[f64], minimize: bool) -> Result<UtilityBatch> {
    let lambda = f_values.len();
    let mu = mu(lambda);
    let (l, m) = (lambda as f64, mu as f64);
    rank_with_table(f_values, minimize, |rank| {
        if rank < mu {
            2.0 * l / m
        } else if rank < lambda - mu {
            l / m
        } else {
            0.0
        }
    })
}

pub fn truncation_utilities(f_values: &[f64], minimize: bool) -> Result<UtilityBatch> {
    let lambda = f_values.len();
    let mu = mu(lambda);
    let w = lambda as f64 / mu as f64;
    rank_with_table(f_values, minimize, |rank| if rank < mu { w } else { 0.0 })
}

pub fn bounded_utilities(f_values: &[f64]) -> Result<UtilityBatch> {
    check_finite(f_values)?;
    UtilityBatch::from_utilities(f_values.iter().map(|f| (-f).exp()).collect())
}

/// Assigns `table(rank)` (rank 0 is best, `table` non-increasing) with tie
/// averaging.
fn rank_with_table(f_values: &[f64], minimize: bool, table: impl Fn(usize) -> f64) -> Result<UtilityBatch> {
    let lambda = f_values.len();
    if lambda < 2 {
        return Err(Error::InvalidParameter(format!("ranking needs at least 2 samples, got {lambda}")));
    }
    check_finite(f_values)?;

    let mut order: Vec<usize> = (0..lambda).collect();
    // Stable on original index.
    if minimize {
        order.sort_by(|&a, &b| f_values[a].total_cmp(&f_values[b]));
    } else {
        order.sort_by(|&a, &b| f_values[b].total_cmp(&f_values[a]));
    }

    let mut utilities = vec![0.0; lambda];
    let mut start = 0;
    while start < lambda {
        let f = f_values[order[start]];
        let mut end = start + 1;
        while end < lambda && f_values[order[end]] == f {
            end += 1;
        }
        let w = if end - start == 1 {
            table(start)
        } else {
            // The clamp keeps rounding from breaking monotonicity.
            let mean = (start..end).map(&table).sum::<f64>() / (end - start) as f64;
            mean.clamp(table(end - 1), table(start))
        };
        for &i in &order[start..end] {
            utilities[i] = w;
        }
        start = end;
    }
    UtilityBatch::from_utilities(utilities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ranking_lambda4() {
        let b = ranking_utilities(&[1.0, 2.0, 3.0, 4.0], true).unwrap();
        assert_eq!(b.utilities(), &[8.0, 4.0, 4.0, 0.0]);
        assert_eq!(b.mean_w(), 4.0);
        assert_eq!(b.var_w(), 8.0);
    }

    #[test]
    fn ranking_lambda2_centers_to_cga() {
        let b = ranking_utilities(&[5.0, 7.0], true).unwrap();
        assert_eq!(b.utilities(), &[4.0, 0.0]);
        assert_eq!(b.centered(), vec![2.0, -2.0]);
        let b = ranking_utilities(&[7.0, 5.0], true).unwrap();
        assert_eq!(b.centered(), vec![-2.0, 2.0]);
    }

    #[test]
    fn full_tie_averages() {
        let b = ranking_utilities(&[1.0; 4], true).unwrap();
        assert_eq!(b.utilities(), &[4.0; 4]);
        assert_eq!(b.var_w(), 0.0);
    }

    #[test]
    fn partial_tie() {
        // ranks 1,2 tied: (4 + 4) / 2; ranks 0 and 3 alone
        let b = ranking_utilities(&[0.0, 2.0, 2.0, 3.0], true).unwrap();
        assert_eq!(b.utilities(), &[8.0, 4.0, 4.0, 0.0]);
        let b = ranking_utilities(&[0.0, 0.0, 2.0, 3.0], true).unwrap();
        assert_eq!(b.utilities(), &[6.0, 6.0, 4.0, 0.0]);
    }

    #[test]
    fn maximize_reverses() {
        let b = ranking_utilities(&[1.0, 2.0, 3.0, 4.0], false).unwrap();
        assert_eq!(b.utilities(), &[0.0, 4.0, 4.0, 8.0]);
    }

    #[test]
    fn ranking_errors() {
        assert!(ranking_utilities(&[1.0], true).is_err());
        assert!(matches!(ranking_utilities(&[1.0, f64::NAN], true), Err(Error::NonFinite { index: 1, .. })));
        assert!(ranking_utilities(&[1.0, f64::INFINITY], true).is_err());
    }

    #[test]
    fn truncation_table() {
        let b = truncation_utilities(&[3.0, 1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 8.0], true).unwrap();
        // μ = 2, weight 4
        assert_eq!(b.utilities(), &[0.0, 4.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.mean_w(), 1.0);
    }

    #[test]
    fn bounded_examples() {
        let b = bounded_utilities(&[0.0, 0.0]).unwrap();
        assert_eq!(b.utilities(), &[1.0, 1.0]);
        assert_eq!(b.var_w(), 0.0);
        let b = bounded_utilities(&[0.0, 2f64.ln()]).unwrap();
        assert_relative_eq!(b.utilities()[1], 0.5, max_relative = 1e-15);
        let b = bounded_utilities(&[4f64.ln(), 4f64.ln()]).unwrap();
        assert_relative_eq!(b.utilities()[0], 0.25, max_relative = 1e-15);
        assert!(bounded_utilities(&[f64::NAN]).is_err());
    }

    #[test]
    fn normalized_has_unit_mean() {
        let b = ranking_utilities(&[3.0, 1.0, 2.0, 9.0, 4.0], true).unwrap();
        let n = b.normalized().unwrap();
        assert_relative_eq!(n.mean_w(), 1.0, max_relative = 1e-15);
        assert!(UtilityBatch::from_utilities(vec![0.0, 0.0]).unwrap().normalized().is_none());
    }

    proptest! {
        #[test]
        fn sum_property_without_ties(k in 1usize..30) {
            let lambda = 4 * k;
            let f: Vec<f64> = (0..lambda).map(|i| ((i * 7919) % lambda) as f64).collect();
            let b = ranking_utilities(&f, true).unwrap();
            let mu = mu(lambda) as f64;
            let l = lambda as f64;
            prop_assert!((b.mean_w() - l / mu).abs() < 1e-12 * l);
            prop_assert!((b.var_w() - 2.0 * l / mu).abs() < 1e-9 * l);
            prop_assert!((b.utilities().iter().sum::<f64>() - l * l / mu).abs() < 1e-9 * l * l);
        }

        #[test]
        fn batch_statistics(f in proptest::collection::vec(-5i32..5, 2..40)) {
            let f: Vec<f64> = f.into_iter().map(f64::from).collect();
            let b = ranking_utilities(&f, true).unwrap();
            let n = b.len() as f64;
            let mean = b.utilities().iter().sum::<f64>() / n;
            let var = b.utilities().iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((mean - b.mean_w()).abs() < 1e-12 * (1.0 + mean.abs()));
            prop_assert!((var - b.var_w()).abs() < 1e-9 * (1.0 + var));
            prop_assert!(b.mean_w() > 0.0);
        }

        #[test]
        fn permutation_equivariance(f in proptest::collection::vec(-4i32..4, 2..30), seed in any::<u64>()) {
            let f: Vec<f64> = f.into_iter().map(f64::from).collect();
            let mut perm: Vec<usize> = (0..f.len()).collect();
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = crate::rng::splitmix64(s);
                perm.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let permuted: Vec<f64> = perm.iter().map(|&i| f[i]).collect();
            let a = ranking_utilities(&f, true).unwrap();
            let b = ranking_utilities(&permuted, true).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(b.utilities()[j], a.utilities()[i]);
            }
        }

        #[test]
        fn monotone_in_f(f in proptest::collection::vec(-6i32..6, 2..30)) {
            let f: Vec<f64> = f.into_iter().map(f64::from).collect();
            let b = ranking_utilities(&f, true).unwrap();
            for i in 0..f.len() {
                for j in 0..f.len() {
                    if f[i] < f[j] {
                        prop_assert!(b.utilities()[i] >= b.utilities()[j]);
                    }
                }
            }
        }

        #[test]
        fn scale_covariance(f in proptest::collection::vec(-6i32..6, 2..30), c in 0.1f64..50.0) {
            let f: Vec<f64> = f.into_iter().map(f64::from).collect();
            let b = ranking_utilities(&f, true).unwrap();
            let s = b.scaled(c).unwrap();
            prop_assert!((s.mean_w() - c * b.mean_w()).abs() <= 1e-12 * c * b.mean_w());
            prop_assert!((s.var_w().sqrt() - c * b.var_w().sqrt()).abs() <= 1e-9 * (1.0 + c * b.var_w().sqrt()));
        }
    }
}
