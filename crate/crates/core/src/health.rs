//! Health component: daily counts with a log-linear relative risk.
//!
//! ```text
//! O[t] ~ Poisson(lambda[t] * E)
//! log lambda[t] = b0 + sum_p b[p] mu[t - lag, p] + sum_i s_i(Z[t, i]) + delta * I[t] + eps[t]
//! ```

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{GammaPrior, PriorSet, ScalePrior};
use crate::splines::{SmoothCoefficients, SplineBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthParams {
    pub beta0: f64,
    /// Effects per original concentration unit.
    pub beta: Vec<f64>,
    pub smooths: Vec<SmoothCoefficients>,
    /// Holiday contrast; workdays are the reference level.
    pub delta: f64,
    pub epsilon: Vec<f64>,
    pub sigma_eps: f64,
}

impl HealthParams {
    pub fn null(n_pollutants: usize, n_days: usize) -> Self {
        Self {
            beta0: 0.0,
            beta: vec![0.0; n_pollutants],
            smooths: Vec::new(),
            delta: 0.0,
            epsilon: vec![0.0; n_days],
            sigma_eps: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthPriors {
    /// Standard deviation for the intercept, holiday contrast and linear
    /// spline terms.
    pub coefficient_sd: f64,
    /// Prior standard deviation of each pollutant effect, per standardized
    /// concentration unit.
    pub beta_sd: f64,
    /// When true, the effect prior on original units is `beta_sd / sd_p`.
    pub rescale_beta: bool,
    pub sigma_eps: ScalePrior,
    pub smoothing_precision: GammaPrior,
}

impl HealthPriors {
    pub fn new(set: PriorSet, beta_sd: f64, rescale_beta: bool) -> Self {
        Self {
            coefficient_sd: set.coefficient_sd(),
            beta_sd,
            rescale_beta,
            sigma_eps: set.scale_prior(),
            smoothing_precision: set.smoothing_precision(),
        }
    }
}

/// Period-average daily count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCount(pub f64);

pub fn expected_count(outcome: &[u64]) -> Result<ExpectedCount> {
    if outcome.is_empty() {
        return Err(Error::NonPositiveRate(f64::NAN));
    }
    let e = outcome.iter().map(|&o| o as f64).sum::<f64>() / outcome.len() as f64;
    if !(e > 0.0) {
        return Err(Error::NonPositiveRate(e));
    }
    Ok(ExpectedCount(e))
}

/// `log lambda` on day `t` (0-based), reading exposures from row `t - lag`
/// of `mu_original`.
pub fn linear_predictor(
    params: &HealthParams,
    mu_original: &DMatrix<f64>,
    bases: &[SplineBasis],
    holiday: &[bool],
    t: usize,
    lag: usize,
) -> Result<f64> {
    if t < lag {
        return Err(Error::LagUnavailable { day: t, lag });
    }
    if params.beta.len() != mu_original.ncols() || params.smooths.len() != bases.len() {
        return Err(Error::DimensionMismatch(
            "effects, exposures and smooths disagree".into(),
        ));
    }
    let exposure: f64 = params
        .beta
        .iter()
        .enumerate()
        .map(|(p, b)| b * mu_original[(t - lag, p)])
        .sum();
    let mut smooth = 0.0;
    for (basis, c) in bases.iter().zip(&params.smooths) {
        if c.b.len() != basis.n_knots() {
            return Err(Error::DimensionMismatch("smooth coefficient count".into()));
        }
        smooth += c.alpha * basis.linear[t]
            + c.b
                .iter()
                .enumerate()
                .map(|(k, b)| b * basis.matrix[(t, k)])
                .sum::<f64>();
    }
    let hol = if holiday.get(t).copied().unwrap_or(false) {
        params.delta
    } else {
        0.0
    };
    let eps = params.epsilon.get(t).copied().unwrap_or(0.0);
    Ok(params.beta0 + exposure + smooth + hol + eps)
}

/// Poisson log-likelihood with the full `-ln O!` normalization.
pub fn health_loglik(outcome: &[u64], lambda: &[f64], expected: f64) -> Result<f64> {
    if outcome.len() != lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} counts, {} rates",
            outcome.len(),
            lambda.len()
        )));
    }
    if !(expected > 0.0 && expected.is_finite()) {
        return Err(Error::NonPositiveRate(expected));
    }
    let mut total = 0.0;
    for (&o, &l) in outcome.iter().zip(lambda) {
        let rate = l * expected;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::NonPositiveRate(rate));
        }
        total += poisson_log_pmf(o, rate.ln(), rate);
    }
    Ok(total)
}

/// `ln Pois(o | rate)` given both the rate and its logarithm.
#[inline]
pub(crate) fn poisson_log_pmf(o: u64, log_rate: f64, rate: f64) -> f64 {
    o as f64 * log_rate - rate - ln_factorial(o)
}

/// Percent change in risk for an IQR increase: `(exp(beta * iqr) - 1) * 100`.
pub fn percent_increase(beta: f64, iqr: f64) -> f64 {
    (beta * iqr).exp_m1() * 100.0
}

const FACTORIAL_TABLE: usize = 1024;

/// `ln(n!)`, tabulated below 1024 and from Stirling's series above.
pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(FACTORIAL_TABLE);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..FACTORIAL_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    if (n as usize) < FACTORIAL_TABLE {
        return table[n as usize];
    }
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::basis;
    use proptest::prelude::*;

    #[test]
    fn predictor_examples() {
        let mu = DMatrix::from_column_slice(3, 1, &[10.0, 10.0, 10.0]);
        let null = HealthParams::null(1, 3);
        assert_eq!(linear_predictor(&null, &mu, &[], &[], 1, 1).unwrap(), 0.0);

        let mut p = HealthParams::null(1, 3);
        p.beta0 = 0.1;
        p.beta = vec![0.01];
        let lp = linear_predictor(&p, &mu, &[], &[false, false, false], 1, 1).unwrap();
        assert!((lp - 0.2).abs() < 1e-15);

        p.delta = 0.05;
        let lp = linear_predictor(&p, &mu, &[], &[false, true, false], 1, 1).unwrap();
        assert!((lp - 0.25).abs() < 1e-15);

        assert!(matches!(
            linear_predictor(&p, &mu, &[], &[], 0, 1),
            Err(Error::LagUnavailable { day: 0, lag: 1 })
        ));
    }

    #[test]
    fn predictor_includes_smooths() {
        let b = basis(&[0.0, 1.0, 2.0], &[1.0]);
        let mut p = HealthParams::null(1, 3);
        p.smooths = vec![SmoothCoefficients {
            alpha: 2.0,
            b: vec![3.0],
            variance: 1.0,
        }];
        let mu = DMatrix::zeros(3, 1);
        let lp = linear_predictor(&p, &mu, std::slice::from_ref(&b), &[], 2, 1).unwrap();
        assert!((lp - (2.0 * 1.0 + 3.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn loglik_examples() {
        let n = 7;
        let ll = health_loglik(&vec![0; n], &vec![1.0; n], 1.0).unwrap();
        assert!((ll + n as f64).abs() < 1e-12);

        let ll = health_loglik(&[2], &[1.0], 2.0).unwrap();
        assert!((ll - (2f64.ln() - 2.0)).abs() < 1e-12);

        assert!(matches!(
            health_loglik(&[1], &[0.0], 1.0),
            Err(Error::NonPositiveRate(_))
        ));
    }

    #[test]
    fn poisson_score_root_is_count_over_expected() {
        let (o, e) = (7u64, 2.5);
        let f = |l: f64| health_loglik(&[o], &[l], e).unwrap();
        let mle = o as f64 / e;
        for d in [1e-3, 1e-2, 0.1] {
            assert!(f(mle) > f(mle + d));
            assert!(f(mle) > f(mle - d));
        }
    }

    #[test]
    fn percent_increase_examples() {
        assert_eq!(percent_increase(0.0, 23.65), 0.0);
        let b = 1.0940f64.ln() / 23.65;
        assert_eq!(format!("{:.2}", percent_increase(b, 23.65)), "9.40");
        assert!((percent_increase(2f64.ln() / 8.0, 8.0) - 100.0).abs() < 1e-10);
    }

    #[test]
    fn expected_count_examples() {
        assert_eq!(expected_count(&[37, 37, 37]).unwrap().0, 37.0);
        assert_eq!(expected_count(&[28, 47]).unwrap().0, 37.5);
        // Median 37 but a right-skewed sample: the mean is not the median.
        let skewed = [28, 32, 37, 42, 80];
        assert_eq!(crate::dataset::quantile(&skewed.map(|v| v as f64), 0.5), 37.0);
        assert_eq!(expected_count(&skewed).unwrap().0, 43.8);
        assert!(expected_count(&[]).is_err());
        assert!(expected_count(&[0, 0]).is_err());
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        for n in [0u64, 1, 2, 10, 170, 1023, 1024, 5000, 100_000] {
            let direct: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            assert!(
                (ln_factorial(n) - direct).abs() <= 1e-9 * direct.max(1.0),
                "n={n}"
            );
        }
    }

    proptest! {
        #[test]
        fn intercept_shift_scales_rates(c in -2.0f64..2.0, b0 in -1.0f64..1.0, b in -0.1f64..0.1) {
            let mu = DMatrix::from_fn(6, 2, |i, j| (i * 3 + j) as f64 * 0.7);
            let mut p = HealthParams::null(2, 6);
            p.beta0 = b0;
            p.beta = vec![b, -b];
            let mut q = p.clone();
            q.beta0 += c;
            for t in 1..6 {
                let l1 = linear_predictor(&p, &mu, &[], &[], t, 1).unwrap().exp();
                let l2 = linear_predictor(&q, &mu, &[], &[], t, 1).unwrap().exp();
                prop_assert!((l2 / l1 - c.exp()).abs() < 1e-12 * c.exp());
            }
        }

        #[test]
        fn percent_increase_is_monotone(b1 in 0.0f64..0.2, db in 1e-6f64..0.1, iqr in 0.1f64..50.0, di in 1e-3f64..10.0) {
            prop_assert!(percent_increase(b1 + db, iqr) > percent_increase(b1, iqr));
            if b1 > 0.0 {
                prop_assert!(percent_increase(b1, iqr + di) > percent_increase(b1, iqr));
            }
        }

        #[test]
        fn loglik_finite_for_positive_rates(
            counts in prop::collection::vec(0u64..500, 1..20),
            log_l in -5.0f64..5.0,
        ) {
            let lambda = vec![log_l.exp(); counts.len()];
            prop_assert!(health_loglik(&counts, &lambda, 3.0).unwrap().is_finite());
        }
    }
}
