//! Generic update kernels shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{sample_inverse_wishart, sample_normal, sample_uniform, standard_normal_vector};

/// Target acceptance for scalar random-walk blocks.
pub const SCALAR_TARGET: f64 = 0.44;
/// Target acceptance for multivariate blocks.
pub const BLOCK_TARGET: f64 = 0.234;

#[derive(Clone, Debug, PartialEq)]
pub struct MhOutcome {
    pub point: DVector<f64>,
    pub log_target: f64,
    pub accepted: bool,
}

/// Metropolis accept/reject given the log ratio; non-finite ratios reject.
#[inline]
pub(crate) fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || sample_uniform(rng).ln() < log_ratio
}

/// One Gaussian random-walk Metropolis step with isotropic proposal sd
/// `scale`.
pub fn mh_step<R, F>(
    mut log_target: F,
    current: &DVector<f64>,
    scale: f64,
    rng: &mut R,
) -> Result<MhOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    let lp = log_target(current);
    if !lp.is_finite() {
        return Err(Error::NonFiniteCurrentTarget);
    }
    let proposal = current + standard_normal_vector(rng, current.len()) * scale;
    let lp_new = log_target(&proposal);
    if lp_new.is_finite() && accept(rng, lp_new - lp) {
        Ok(MhOutcome {
            point: proposal,
            log_target: lp_new,
            accepted: true,
        })
    } else {
        Ok(MhOutcome {
            point: current.clone(),
            log_target: lp,
            accepted: false,
        })
    }
}

/// Scalar random-walk step when the current log target is already known.
pub(crate) fn mh_scalar<R, F>(
    current: f64,
    current_lp: f64,
    scale: f64,
    rng: &mut R,
    mut log_target: F,
) -> (f64, f64, bool)
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let proposal = current + scale * sample_normal(rng);
    let lp = log_target(proposal);
    if lp.is_finite() && accept(rng, lp - current_lp) {
        (proposal, lp, true)
    } else {
        (current, current_lp, false)
    }
}

/// Robbins-Monro update of a proposal scale on the log scale.
///
/// The gain shrinks like `1 / sqrt(round + 1)`, so the scale settles once the
/// observed acceptance rate hovers around `target`.
pub fn adapt_scale(acceptance_rate: f64, scale: f64, target: f64, round: usize) -> f64 {
    let gain = 1.0 / ((round + 1) as f64).sqrt();
    scale * ((acceptance_rate - target) * gain).exp()
}

/// Proposal scale with window bookkeeping: adapts during burn-in and counts
/// acceptances after it is frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveScale {
    pub scale: f64,
    pub target: f64,
    pub cap: f64,
    window_accepted: u64,
    window_proposed: u64,
    kept_accepted: u64,
    kept_proposed: u64,
    rounds: usize,
    frozen: bool,
}

impl AdaptiveScale {
    pub fn new(scale: f64, target: f64) -> Self {
        Self {
            scale,
            target,
            cap: f64::INFINITY,
            window_accepted: 0,
            window_proposed: 0,
            kept_accepted: 0,
            kept_proposed: 0,
            rounds: 0,
            frozen: false,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self.scale = self.scale.min(cap);
        self
    }

    #[inline]
    pub fn record(&mut self, accepted: bool) {
        self.record_many(accepted as u64, 1);
    }

    #[inline]
    pub fn record_many(&mut self, accepted: u64, proposed: u64) {
        self.window_accepted += accepted;
        self.window_proposed += proposed;
        self.kept_accepted += accepted;
        self.kept_proposed += proposed;
    }

    /// Close an adaptation window.
    pub fn end_window(&mut self) {
        if !self.frozen && self.window_proposed > 0 {
            let rate = self.window_accepted as f64 / self.window_proposed as f64;
            self.scale = adapt_scale(rate, self.scale, self.target, self.rounds).min(self.cap);
            self.rounds += 1;
        }
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    /// Stop adapting and restart the acceptance count.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.window_accepted = 0;
        self.window_proposed = 0;
        self.kept_accepted = 0;
        self.kept_proposed = 0;
    }

    /// Acceptance rate since the last `freeze` (or since creation).
    pub fn acceptance(&self) -> Option<f64> {
        (self.kept_proposed > 0).then(|| self.kept_accepted as f64 / self.kept_proposed as f64)
    }
}

/// Gaussian full conditional `N(Q^{-1} b, Q^{-1})` in precision form.
#[derive(Clone, Debug)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianConditional {
    /// Build from precision `q` and linear term `b`.
    pub fn from_precision(q: DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if q.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient);
        }
        let chol = Cholesky::new(q).ok_or(Error::RankDeficient)?;
        let mean = chol.solve(b);
        Ok(Self { mean, chol })
    }

    /// `L^{-T} z`, a zero-mean draw with covariance `Q^{-1}`.
    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(rng, self.mean.len());
        self.chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.mean + self.noise(rng)
    }

    /// Preconditioned Crank-Nicolson proposal around the conditional mean;
    /// it leaves this Gaussian invariant, and `s = 1` is an independent draw.
    pub fn pcn<R: Rng + ?Sized>(&self, current: &DVector<f64>, s: f64, rng: &mut R) -> DVector<f64> {
        let keep = (1.0 - s * s).max(0.0).sqrt();
        &self.mean + (current - &self.mean) * keep + self.noise(rng) * s
    }
}

/// Exact draw from the conjugate Gaussian conditional of a linear model
/// `y = X c + e`, `e ~ N(0, noise_var I)`, prior `c ~ N(0, P0^{-1})`.
pub fn update_gaussian_block<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
    prior_precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(gaussian_block_conditional(x, y, noise_var, prior_precision)?.draw(rng))
}

pub fn gaussian_block_conditional(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
    prior_precision: &DMatrix<f64>,
) -> Result<GaussianConditional> {
    if x.nrows() != y.len() || prior_precision.shape() != (x.ncols(), x.ncols()) {
        return Err(Error::DimensionMismatch("gaussian block dimensions".into()));
    }
    if !(noise_var > 0.0) {
        return Err(Error::NonPositiveScale(noise_var));
    }
    let q = x.tr_mul(x) / noise_var + prior_precision;
    let b = x.tr_mul(y) / noise_var;
    GaussianConditional::from_precision(q, &b)
}

/// Conjugate inverse-Wishart draw for an innovation covariance:
/// `IW(prior_scale + s, prior_dof + t_eff)`.
pub fn update_covariance<R: Rng + ?Sized>(
    s: &DMatrix<f64>,
    t_eff: usize,
    prior_scale: &DMatrix<f64>,
    prior_dof: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let psi = linalg::symmetrize(&(prior_scale + s));
    linalg::cholesky_lower(&psi).map_err(|_| Error::SingularScale)?;
    sample_inverse_wishart(rng, &psi, prior_dof + t_eff as f64)
}
