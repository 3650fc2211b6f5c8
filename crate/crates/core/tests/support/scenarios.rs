//! Small fits with known answers, shared by the correctness tests and the
//! acceptance report.

#![allow(dead_code)]

use h2m_core::dataset::ScalingParams;
use h2m_core::diagnostics::{mc_error, pooled};
use h2m_core::mcmc::{
    chain_tree, mh_step, run_exposure_stage, run_model_serial, update_covariance, FixedExposure, KnotCounts, ModelConfig,
    ModelData, Variant,
};
use h2m_core::pollutant::PollutantPriors;
use h2m_core::rng::{sample_normal, sample_poisson, sample_uniform, SeedTree};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, InverseGamma, Normal};

use super::{local_level_smoother, poisson_glm, quantile};

/// Largest discrepancy between log-density differences of the scalar
/// inverse-Wishart posterior and the matching inverse-gamma, over five
/// points, after conditioning on 40 simulated residuals.
pub fn iw_scalar_reduction_error() -> f64 {
    let mut rng = SeedTree::new(11).stream();
    let residuals: Vec<f64> = (0..40).map(|_| 0.7 * sample_normal(&mut rng)).collect();
    let scatter: f64 = residuals.iter().map(|r| r * r).sum();
    let prior = PollutantPriors::new(Default::default(), &DMatrix::identity(1, 1)).unwrap();
    let posterior = PollutantPriors {
        iw_dof: prior.iw_dof + residuals.len() as f64,
        iw_scale: &prior.iw_scale + DMatrix::from_element(1, 1, scatter),
        ..prior
    };
    let ig = InverseGamma::new(posterior.iw_dof / 2.0, posterior.iw_scale[(0, 0)] / 2.0).unwrap();
    let iw = |x: f64| {
        posterior.iw_log_density(
            &DMatrix::from_element(1, 1, x.sqrt()),
            &DMatrix::from_element(1, 1, 1.0 / x),
        )
    };
    let points = [0.2, 0.35, 0.5, 0.8, 1.5];
    points
        .iter()
        .map(|&x| ((iw(x) - iw(points[0])) - (ig.ln_pdf(x) - ig.ln_pdf(points[0]))).abs())
        .fold(0.0, f64::max)
}

/// Two regions, `[0, 1)` with mass 0.25 and `[1, 2)` with mass 0.75, targeted
/// by the random-walk kernel. Returns the probability-flow imbalance
/// `|pi_a P(a->b) - pi_b P(b->a)|` and the occupancy error of region `b` in a
/// long run.
pub fn two_point_balance() -> (f64, f64) {
    let (pa, pb) = (0.25_f64, 0.75_f64);
    let log_target = |v: &DVector<f64>| match v[0] {
        x if (0.0..1.0).contains(&x) => pa.ln(),
        x if (1.0..2.0).contains(&x) => pb.ln(),
        _ => f64::NEG_INFINITY,
    };
    let scale = 0.8;
    let n = 200_000;
    let mut rng = SeedTree::new(12).child("flow").stream();
    let mut moves = [0usize; 2];
    for (region, count) in moves.iter_mut().enumerate() {
        for _ in 0..n {
            let start = DVector::from_element(1, region as f64 + sample_uniform(&mut rng));
            let out = mh_step(log_target, &start, scale, &mut rng).unwrap();
            if (out.point[0] >= 1.0) != (region == 1) {
                *count += 1;
            }
        }
    }
    let flow_ab = pa * moves[0] as f64 / n as f64;
    let flow_ba = pb * moves[1] as f64 / n as f64;

    let mut rng = SeedTree::new(12).child("chain").stream();
    let mut x = DVector::from_element(1, 0.5);
    let mut in_b = 0usize;
    for _ in 0..n {
        x = mh_step(log_target, &x, scale, &mut rng).unwrap().point;
        in_b += (x[0] >= 1.0) as usize;
    }
    ((flow_ab - flow_ba).abs(), (in_b as f64 / n as f64 - pb).abs())
}

fn intercept_only(t: usize) -> DMatrix<f64> {
    DMatrix::from_element(t, 1, 1.0)
}

/// Fit with no outcome so the effect posterior equals its Normal(0, 0.1)
/// prior; returns the largest quantile error over seven probabilities.
pub fn prior_recovery_error() -> f64 {
    let t = 50;
    let mut rng = SeedTree::new(13).stream();
    let y = DMatrix::from_fn(t, 1, |_, _| sample_normal(&mut rng));
    let data = ModelData::from_parts(
        y,
        DMatrix::from_element(t, 1, true),
        ScalingParams::identity(vec!["x".into()]),
        Vec::new(),
        Vec::new(),
        intercept_only(t),
        Vec::new(),
    )
    .unwrap();
    let config = ModelConfig {
        variant: Variant::Me,
        knots: KnotCounts::NONE,
        overdispersion: false,
        burn_in: 200,
        retained: 40_000,
        chains: 1,
        seed: 13,
        ..Default::default()
    };
    let chains = run_model_serial(&config, &data).unwrap();
    let draws = pooled(&chains, "beta", 0);
    let prior = Normal::new(0.0, config.beta_prior_sd).unwrap();
    [0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975]
        .iter()
        .map(|&p| (quantile(&draws, p) - prior.inverse_cdf(p)).abs())
        .fold(0.0, f64::max)
}

/// Posterior mean of each health coefficient against the Poisson maximum
/// likelihood fit on the same design, in Monte Carlo standard errors.
pub struct GlmComparison {
    pub names: Vec<&'static str>,
    pub posterior_mean: Vec<f64>,
    pub oracle: Vec<f64>,
    pub mc_error: Vec<f64>,
}

impl GlmComparison {
    pub fn max_z(&self) -> f64 {
        (0..self.names.len())
            .map(|i| (self.posterior_mean[i] - self.oracle[i]).abs() / self.mc_error[i])
            .fold(0.0, f64::max)
    }
}

/// Observed-exposure fit with flat effect priors against a Poisson GLM on
/// `[1, x1(t-1), x2(t-1), holiday(t)]`.
pub fn glm_oracle_comparison() -> GlmComparison {
    let t = 1200;
    let mut rng = SeedTree::new(14).child("data").stream();
    let mut x = DMatrix::zeros(t, 2);
    for j in 0..2 {
        let mut v = 0.0;
        for i in 0..t {
            v = 0.7 * v + 0.71 * sample_normal(&mut rng);
            x[(i, j)] = v;
        }
    }
    let holiday: Vec<bool> = (0..t).map(|i| i % 7 == 6).collect();
    let truth = [30.0_f64.ln(), 0.08, -0.05, -0.1];
    let outcome: Vec<u64> = (0..t)
        .map(|i| {
            let lagged = i.saturating_sub(1);
            let eta = truth[0]
                + truth[1] * x[(lagged, 0)]
                + truth[2] * x[(lagged, 1)]
                + truth[3] * holiday[i] as u8 as f64;
            sample_poisson(&mut rng, eta.exp()).unwrap()
        })
        .collect();

    let design = DMatrix::from_fn(t - 1, 4, |i, j| match j {
        0 => 1.0,
        1 | 2 => x[(i, j - 1)],
        _ => holiday[i + 1] as u8 as f64,
    });
    let mle = poisson_glm(&design, &outcome[1..], 0.0);

    let data = ModelData::from_parts(
        x,
        DMatrix::from_element(t, 2, true),
        ScalingParams::identity(vec!["x1".into(), "x2".into()]),
        outcome,
        holiday,
        intercept_only(t),
        Vec::new(),
    )
    .unwrap();
    let config = ModelConfig {
        variant: Variant::Me,
        knots: KnotCounts::NONE,
        overdispersion: false,
        beta_prior_sd: 100.0,
        burn_in: 500,
        retained: 20_000,
        chains: 1,
        seed: 14,
        ..Default::default()
    };
    let chains = run_model_serial(&config, &data).unwrap();
    let series = [pooled(&chains, "beta", 0), pooled(&chains, "beta", 1), pooled(&chains, "delta", 0)];
    GlmComparison {
        names: vec!["beta_x1", "beta_x2", "holiday"],
        posterior_mean: series.iter().map(|d| d.iter().sum::<f64>() / d.len() as f64).collect(),
        oracle: vec![mle[1], mle[2], mle[3]],
        mc_error: series.iter().map(|d| mc_error(d).unwrap()).collect(),
    }
}

/// Local-level exposure fit with known variances against the smoother.
pub struct LocalLevelComparison {
    pub posterior_mean: Vec<f64>,
    pub smoother_mean: Vec<f64>,
    pub smoother_sd: Vec<f64>,
    pub mc_error: Vec<f64>,
}

impl LocalLevelComparison {
    pub fn z_scores(&self) -> Vec<f64> {
        (0..self.posterior_mean.len())
            .map(|t| (self.posterior_mean[t] - self.smoother_mean[t]).abs() / self.mc_error[t])
            .collect()
    }

    pub fn max_z(&self) -> f64 {
        self.z_scores().into_iter().fold(0.0, f64::max)
    }
}

/// One pollutant, a random-walk latent level with innovation variance 0.3
/// and measurement variance 0.5, every ninth day missing.
pub fn local_level_comparison() -> LocalLevelComparison {
    let (q, r) = (0.3_f64, 0.5_f64);
    let t = 50;
    let mut rng = SeedTree::new(15).child("data").stream();
    let mut level = 0.0;
    let mut y = DMatrix::zeros(t, 1);
    let mut observed = DMatrix::from_element(t, 1, true);
    for i in 0..t {
        level += q.sqrt() * sample_normal(&mut rng);
        y[(i, 0)] = level + r.sqrt() * sample_normal(&mut rng);
        observed[(i, 0)] = i % 9 != 4;
    }
    let obs: Vec<Option<f64>> = (0..t).map(|i| observed[(i, 0)].then(|| y[(i, 0)])).collect();
    let (smoother_mean, smoother_var) = local_level_smoother(&obs, q, r);

    let data = ModelData::from_parts(
        y,
        observed,
        ScalingParams::identity(vec!["x".into()]),
        Vec::new(),
        Vec::new(),
        DMatrix::zeros(t, 0),
        Vec::new(),
    )
    .unwrap();
    let config = ModelConfig {
        variant: Variant::H2m,
        knots: KnotCounts::NONE,
        overdispersion: false,
        mean_terms: Some(0),
        burn_in: 100,
        retained: 5000,
        chains: 1,
        seed: 15,
        fixed: FixedExposure {
            sigma: Some(vec![r.sqrt()]),
            innovation_cov: Some(vec![vec![q]]),
            gamma: None,
        },
        ..Default::default()
    };
    let stage = run_exposure_stage(&config, &data, &chain_tree(config.seed, 0)).unwrap();
    let per_day: Vec<Vec<f64>> =
        (0..t).map(|i| stage.mu_draws.iter().map(|m| m[(i, 0)]).collect()).collect();
    LocalLevelComparison {
        posterior_mean: per_day.iter().map(|d| d.iter().sum::<f64>() / d.len() as f64).collect(),
        smoother_mean,
        smoother_sd: smoother_var.iter().map(|v| v.sqrt()).collect(),
        mc_error: per_day.iter().map(|d| mc_error(d).unwrap()).collect(),
    }
}

/// Draws of the scalar conjugate covariance update after 30 residuals with
/// scatter 12, and the inverse-gamma they should follow.
pub fn scalar_covariance_draws(n: usize) -> (Vec<f64>, InverseGamma) {
    let (t_eff, scatter) = (30, 12.0);
    let mut rng = SeedTree::new(16).stream();
    let s = DMatrix::from_element(1, 1, scatter);
    let draws = (0..n)
        .map(|_| update_covariance(&s, t_eff, &DMatrix::identity(1, 1), 1.0, &mut rng).unwrap()[(0, 0)])
        .collect();
    let ig = InverseGamma::new((1.0 + t_eff as f64) / 2.0, (1.0 + scatter) / 2.0).unwrap();
    (draws, ig)
}

/// Largest gap between the generating innovation correlation and the
/// empirical correlation of day-to-day latent changes over 2000 days.
pub fn innovation_correlation_error(seed: u64) -> f64 {
    use h2m_core::simulation::{simulate_dataset, SimulationConfig};
    let config = SimulationConfig { n_days: 2000, ..SimulationConfig::full() };
    let sim = simulate_dataset(&config, seed).unwrap();
    let t = sim.latent.nrows();
    let diffs = DMatrix::from_fn(t - 1, sim.latent.ncols(), |i, j| sim.latent[(i + 1, j)] - sim.latent[(i, j)]);
    let empirical = super::correlation(&diffs);
    (empirical - config.correlation_matrix()).amax()
}
