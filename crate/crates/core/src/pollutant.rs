//! Exposure component: noisy measurements of a latent concentration whose
//! mean depends on meteorology plus a multivariate random-walk residual.
//!
//! ```text
//! Y[t,p]  ~ N(mu[t,p], sigma[p]^2)
//! mu[t,p] = g0[p] + g1[p] temp + g2[p] temp^2 + g3[p] rhum + g4[p] rhum^2 + theta[t,p]
//! theta[t] ~ MVN(rho * theta[t - lag], Sigma)      (rho = 1 by default)
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScalingParams;
use crate::error::{Error, Result};
use crate::linalg::{self, LN_2PI};
use crate::priors::{PriorSet, ScalePrior};
use crate::rng::sample_normal;

/// Number of meteorological mean terms including the intercept.
pub const FULL_MEAN_TERMS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct PollutantParams {
    /// `P x q`; column order intercept, temp, temp^2, rhum, rhum^2
    /// (`q = 1` keeps only the intercept).
    pub gamma: DMatrix<f64>,
    /// `T x P` latent residual process.
    pub theta: DMatrix<f64>,
    /// Measurement-error standard deviation per pollutant.
    pub sigma: Vec<f64>,
    /// Innovation covariance.
    pub innovation_cov: DMatrix<f64>,
}

impl PollutantParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(&s) = self.sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::NonPositiveScale(s));
        }
        if self.innovation_cov != self.innovation_cov.transpose() {
            return Err(Error::SingularCovariance);
        }
        linalg::cholesky_lower(&self.innovation_cov).map_err(|_| Error::SingularCovariance)?;
        Ok(())
    }
}

/// Mean-model covariates for one day: `[1, temp, temp^2, rhum, rhum^2]`
/// truncated to `terms` entries.
pub fn mean_covariates(temperature: f64, humidity: f64, terms: usize) -> Vec<f64> {
    let full = [
        1.0,
        temperature,
        temperature * temperature,
        humidity,
        humidity * humidity,
    ];
    full[..terms.min(FULL_MEAN_TERMS)].to_vec()
}

/// Latent mean of pollutant `p` on day `t`.
///
/// `temperature` and `humidity` must be on the scale the coefficients were
/// fitted on.
pub fn pollutant_mean(
    params: &PollutantParams,
    temperature: f64,
    humidity: f64,
    t: usize,
    p: usize,
) -> f64 {
    let x = mean_covariates(temperature, humidity, params.gamma.ncols());
    let fixed: f64 = x
        .iter()
        .enumerate()
        .map(|(j, v)| params.gamma[(p, j)] * v)
        .sum();
    fixed + params.theta[(t, p)]
}

/// Gaussian log-likelihood of the observed cells.
pub fn measurement_loglik(
    y: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    mu: &DMatrix<f64>,
    sigma: &[f64],
) -> Result<f64> {
    if y.shape() != mu.shape() || y.shape() != observed.shape() || sigma.len() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Y {:?}, mask {:?}, mu {:?}, {} scales",
            y.shape(),
            observed.shape(),
            mu.shape(),
            sigma.len()
        )));
    }
    if let Some(&s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::NonPositiveScale(s));
    }
    let mut total = 0.0;
    for (p, &s) in sigma.iter().enumerate() {
        let ln_s = s.ln();
        for t in 0..y.nrows() {
            if observed[(t, p)] {
                let z = (y[(t, p)] - mu[(t, p)]) / s;
                total += -0.5 * LN_2PI - ln_s - 0.5 * z * z;
            }
        }
    }
    Ok(total)
}

/// MVN log-density of `theta_t` centered at `theta_prev`.
pub fn latent_transition_logdensity(
    theta_t: &DVector<f64>,
    theta_prev: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64> {
    if theta_t.len() != cov.nrows() || theta_prev.len() != cov.nrows() {
        return Err(Error::DimensionMismatch("transition dimensions".into()));
    }
    let l = linalg::cholesky_lower(cov).map_err(|_| Error::SingularCovariance)?;
    Ok(linalg::mvn_logpdf_chol(theta_t, theta_prev, &l))
}

/// Standardized latent means back to original units, column by column.
pub fn back_transform(mu_std: &DMatrix<f64>, scaling: &ScalingParams) -> DMatrix<f64> {
    DMatrix::from_fn(mu_std.nrows(), mu_std.ncols(), |t, p| {
        scaling.to_original(p, mu_std[(t, p)])
    })
}

/// Posterior-predictive draw for a missing measurement.
pub fn impute_missing<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    mu + sigma * sample_normal(rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PollutantPriors {
    pub coefficient_sd: f64,
    pub sigma: ScalePrior,
    pub iw_dof: f64,
    pub iw_scale: DMatrix<f64>,
}

impl PollutantPriors {
    /// Priors for `P` pollutants given the empirical correlation matrix:
    /// `d = P`, scale `D = d * correlation`.
    pub fn new(set: PriorSet, correlation: &DMatrix<f64>) -> Result<Self> {
        let p = correlation.nrows();
        let dof = p as f64;
        let iw_scale = correlation * dof;
        linalg::cholesky_lower(&iw_scale)?;
        Ok(Self {
            coefficient_sd: set.coefficient_sd(),
            sigma: set.scale_prior(),
            iw_dof: dof,
            iw_scale,
        })
    }

    /// Inverse-Wishart log-density of `cov` up to a constant.
    pub fn iw_log_density(&self, cov_chol: &DMatrix<f64>, cov_inv: &DMatrix<f64>) -> f64 {
        let p = cov_inv.nrows() as f64;
        let tr = (&self.iw_scale * cov_inv).trace();
        -0.5 * (self.iw_dof + p + 1.0) * linalg::log_det_from_chol(cov_chol) - 0.5 * tr
    }
}
