//! Exposure-component updates: latent residuals, mean coefficients,
//! measurement-error scales and the innovation covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, BandCholesky, SymBand, LN_2PI};
use crate::mcmc::config::ModelConfig;
use crate::mcmc::data::ModelData;
use crate::mcmc::kernels::{self, AdaptiveScale, GaussianConditional};
use crate::pollutant::{measurement_loglik, PollutantPriors};
use crate::rng::standard_normal_vector;

pub(crate) const MEAN_TERM_NAMES: [&str; 5] = ["intercept", "temp", "temp2", "rhum", "rhum2"];
const SIGMA_INIT_FLOOR: f64 = 0.05;

#[derive(Clone, Debug)]
pub(crate) struct ExposureState {
    /// `P x q`
    pub gamma: DMatrix<f64>,
    /// `T x P`
    pub theta: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub prec: DMatrix<f64>,
    pub cov_chol: DMatrix<f64>,
    /// `T x P` standardized latent concentrations.
    pub mu: DMatrix<f64>,
}

impl ExposureState {
    fn set_cov(&mut self, cov: DMatrix<f64>) -> Result<()> {
        self.cov_chol = linalg::cholesky_lower(&cov).map_err(|_| Error::SingularCovariance)?;
        self.prec = linalg::spd_inverse(&cov).map_err(|_| Error::SingularCovariance)?;
        self.cov = cov;
        Ok(())
    }
}

/// Gaussian conditional of a run of latent days, banded precision form.
pub(crate) struct BandGaussian {
    pub mean: DVector<f64>,
    chol: BandCholesky,
}

impl BandGaussian {
    fn from_canonical(q: &SymBand, h: &DVector<f64>) -> Result<Self> {
        let chol = BandCholesky::factor(q).map_err(|_| Error::SingularCovariance)?;
        let mean = chol.solve(h);
        Ok(Self { mean, chol })
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.chol.solve_upper(&standard_normal_vector(rng, self.mean.len()))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.mean + self.noise(rng)
    }

    pub fn pcn<R: Rng + ?Sized>(&self, current: &DVector<f64>, s: f64, rng: &mut R) -> DVector<f64> {
        let keep = (1.0 - s * s).max(0.0).sqrt();
        &self.mean + (current - &self.mean) * keep + self.noise(rng) * s
    }
}

pub(crate) struct ExposureModel<'a> {
    pub data: &'a ModelData,
    pub lag: usize,
    pub rho: f64,
    pub priors: PollutantPriors,
    fixed_sigma: Option<Vec<f64>>,
    fixed_cov: Option<DMatrix<f64>>,
    fixed_gamma: Option<DMatrix<f64>>,
    obs_days: Vec<Vec<usize>>,
}

impl<'a> ExposureModel<'a> {
    pub fn new(data: &'a ModelData, config: &ModelConfig) -> Result<Self> {
        let p = data.n_pollutants();
        let q = data.n_mean_terms();
        let priors = PollutantPriors::new(config.prior_set, &data.correlation)?;
        let fixed_sigma = match &config.fixed.sigma {
            Some(s) if s.len() != p => {
                return Err(Error::InvalidConfig(format!("fixed sigma needs {p} entries")))
            }
            Some(s) if s.iter().any(|v| !(*v > 0.0)) => {
                return Err(Error::InvalidConfig("fixed sigma must be positive".into()))
            }
            other => other.clone(),
        };
        let fixed_cov = match &config.fixed.innovation_cov {
            Some(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::InvalidConfig(format!("fixed innovation_cov must be {p}x{p}")));
                }
                let m = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
                linalg::cholesky_lower(&m).map_err(|_| {
                    Error::InvalidConfig("fixed innovation_cov is not positive definite".into())
                })?;
                Some(linalg::symmetrize(&m))
            }
            None => None,
        };
        let fixed_gamma = match &config.fixed.gamma {
            Some(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != q) {
                    return Err(Error::InvalidConfig(format!("fixed gamma must be {p}x{q}")));
                }
                Some(DMatrix::from_fn(p, q, |i, j| rows[i][j]))
            }
            None => None,
        };
        let obs_days = (0..p)
            .map(|j| (0..data.n_days()).filter(|&t| data.observed[(t, j)]).collect())
            .collect();
        Ok(Self {
            data,
            lag: config.lag,
            rho: config.autoregressive,
            priors,
            fixed_sigma,
            fixed_cov,
            fixed_gamma,
            obs_days,
        })
    }

    pub fn n_days(&self) -> usize {
        self.data.n_days()
    }

    pub fn n_pollutants(&self) -> usize {
        self.data.n_pollutants()
    }

    fn q(&self) -> usize {
        self.data.n_mean_terms()
    }

    pub fn samples_gamma(&self) -> bool {
        self.fixed_gamma.is_none() && self.q() > 0
    }

    pub fn samples_sigma(&self) -> bool {
        self.fixed_sigma.is_none()
    }

    pub fn samples_cov(&self) -> bool {
        self.fixed_cov.is_none()
    }

    #[inline]
    fn fixed_mean(&self, gamma: &DMatrix<f64>, t: usize, p: usize) -> f64 {
        let x = &self.data.mean_design;
        (0..x.ncols()).map(|j| x[(t, j)] * gamma[(p, j)]).sum()
    }

    pub fn refresh_mu(&self, s: &mut ExposureState) {
        for p in 0..self.n_pollutants() {
            for t in 0..self.n_days() {
                s.mu[(t, p)] = self.fixed_mean(&s.gamma, t, p) + s.theta[(t, p)];
            }
        }
    }

    pub fn init(&self) -> Result<ExposureState> {
        let (t_len, p_len, q) = (self.n_days(), self.n_pollutants(), self.q());
        let data = self.data;
        let gamma = match &self.fixed_gamma {
            Some(g) => g.clone(),
            None => {
                let mut g = DMatrix::zeros(p_len, q);
                if q > 0 {
                    let weak = DMatrix::identity(q, q) * 1e-8;
                    for p in 0..p_len {
                        let days = &self.obs_days[p];
                        let x = DMatrix::from_fn(days.len(), q, |i, j| data.mean_design[(days[i], j)]);
                        let y = DVector::from_fn(days.len(), |i, _| data.y[(days[i], p)]);
                        let fit = kernels::gaussian_block_conditional(&x, &y, 1.0, &weak)?;
                        g.row_mut(p).copy_from(&fit.mean.transpose());
                    }
                }
                g
            }
        };
        let mut theta = DMatrix::zeros(t_len, p_len);
        for p in 0..p_len {
            let mut last = 0.0;
            for t in 0..t_len {
                if data.observed[(t, p)] {
                    last = data.y[(t, p)] - self.fixed_mean(&gamma, t, p);
                }
                theta[(t, p)] = last;
            }
        }
        let sigma = match &self.fixed_sigma {
            Some(s) => s.clone(),
            None => (0..p_len)
                .map(|p| {
                    let diffs: Vec<f64> = (1..t_len).map(|t| theta[(t, p)] - theta[(t - 1, p)]).collect();
                    let sd = if diffs.len() >= 2 {
                        crate::dataset::mean_sd(&diffs).1
                    } else {
                        0.0
                    };
                    (sd / 2.0).max(SIGMA_INIT_FLOOR)
                })
                .collect(),
        };
        let cov = self.fixed_cov.clone().unwrap_or_else(|| data.correlation.clone());
        let mut s = ExposureState {
            gamma,
            theta,
            sigma,
            cov: DMatrix::zeros(p_len, p_len),
            prec: DMatrix::zeros(p_len, p_len),
            cov_chol: DMatrix::zeros(p_len, p_len),
            mu: DMatrix::zeros(t_len, p_len),
        };
        s.set_cov(cov)?;
        self.refresh_mu(&mut s);
        Ok(s)
    }

    /// Canonical form `(Q, h)` of the exposure-only conditional of the
    /// latent residuals on days `a..b`, ordered day-major.
    pub fn theta_canonical(&self, s: &ExposureState, a: usize, b: usize) -> (SymBand, DVector<f64>) {
        let p_len = self.n_pollutants();
        let t_len = self.n_days();
        let (lag, rho) = (self.lag, self.rho);
        let n = (b - a) * p_len;
        let bw = ((lag + 1) * p_len - 1).min(n.saturating_sub(1));
        let mut q = SymBand::zeros(n, bw);
        let mut h = DVector::zeros(n);
        let idx = |t: usize, p: usize| (t - a) * p_len + p;
        let lam = &s.prec;

        for t in a..b {
            for p in 0..p_len {
                if self.data.observed[(t, p)] {
                    let w = 1.0 / (s.sigma[p] * s.sigma[p]);
                    q.add(idx(t, p), idx(t, p), w);
                    h[idx(t, p)] += (self.data.y[(t, p)] - self.fixed_mean(&s.gamma, t, p)) * w;
                }
            }
        }
        let add_diag_block = |q: &mut SymBand, t: usize, scale: f64| {
            for i in 0..p_len {
                for j in 0..=i {
                    q.add(idx(t, i), idx(t, j), scale * lam[(i, j)]);
                }
            }
        };
        for t in a..b.min(lag) {
            add_diag_block(&mut q, t, 1.0);
        }
        for t in a.max(lag)..(b + lag).min(t_len) {
            let prev = t - lag;
            let cur_in = t < b;
            let prev_in = prev >= a && prev < b;
            if cur_in {
                add_diag_block(&mut q, t, 1.0);
            }
            if prev_in {
                add_diag_block(&mut q, prev, rho * rho);
            }
            if cur_in && prev_in {
                for i in 0..p_len {
                    for j in 0..p_len {
                        q.add(idx(t, i), idx(prev, j), -rho * lam[(i, j)]);
                    }
                }
            } else if cur_in {
                for i in 0..p_len {
                    let v: f64 = (0..p_len).map(|j| lam[(i, j)] * s.theta[(prev, j)]).sum();
                    h[idx(t, i)] += rho * v;
                }
            } else if prev_in {
                for i in 0..p_len {
                    let v: f64 = (0..p_len).map(|j| lam[(i, j)] * s.theta[(t, j)]).sum();
                    h[idx(prev, i)] += rho * v;
                }
            }
        }
        (q, h)
    }

    pub fn theta_block(&self, s: &ExposureState, a: usize, b: usize) -> Result<BandGaussian> {
        let (q, h) = self.theta_canonical(s, a, b);
        BandGaussian::from_canonical(&q, &h)
    }

    /// Current residuals on days `a..b`, flattened day-major.
    pub fn theta_slice(&self, s: &ExposureState, a: usize, b: usize) -> DVector<f64> {
        let p_len = self.n_pollutants();
        DVector::from_fn((b - a) * p_len, |i, _| s.theta[(a + i / p_len, i % p_len)])
    }

    /// Exact joint draw of every latent residual (exposure-only target).
    pub fn draw_theta_all<R: Rng + ?Sized>(&self, s: &mut ExposureState, rng: &mut R) -> Result<()> {
        let t_len = self.n_days();
        let p_len = self.n_pollutants();
        let x = self.theta_block(s, 0, t_len)?.draw(rng);
        for t in 0..t_len {
            for p in 0..p_len {
                s.theta[(t, p)] = x[t * p_len + p];
            }
        }
        self.refresh_mu(s);
        Ok(())
    }

    /// Joint shift of the mean coefficients and the residuals that leaves
    /// every latent concentration unchanged, drawn from its exact Gaussian
    /// conditional.
    pub fn ridge_move<R: Rng + ?Sized>(&self, s: &mut ExposureState, rng: &mut R) -> Result<()> {
        if !self.samples_gamma() {
            return Ok(());
        }
        let (t_len, p_len, q) = (self.n_days(), self.n_pollutants(), self.q());
        let x = &self.data.mean_design;
        let mut w_sum = DMatrix::<f64>::zeros(q, q);
        let mut r_sum = DMatrix::<f64>::zeros(p_len, q);
        let mut w = DVector::zeros(q);
        let mut r = DVector::zeros(p_len);
        for t in 0..t_len {
            for j in 0..q {
                w[j] = if t < self.lag {
                    x[(t, j)]
                } else {
                    x[(t, j)] - self.rho * x[(t - self.lag, j)]
                };
            }
            for p in 0..p_len {
                r[p] = if t < self.lag {
                    s.theta[(t, p)]
                } else {
                    s.theta[(t, p)] - self.rho * s.theta[(t - self.lag, p)]
                };
            }
            w_sum.ger(1.0, &w, &w, 1.0);
            r_sum.ger(1.0, &r, &w, 1.0);
        }
        let prior_prec = 1.0 / self.priors.coefficient_sd.powi(2);
        let lam_r = &s.prec * &r_sum;
        let n = q * p_len;
        let mut prec = DMatrix::zeros(n, n);
        let mut h = DVector::zeros(n);
        for j in 0..q {
            for p in 0..p_len {
                let row = j * p_len + p;
                h[row] = lam_r[(p, j)] - s.gamma[(p, j)] * prior_prec;
                for k in 0..q {
                    for pp in 0..p_len {
                        prec[(row, k * p_len + pp)] = w_sum[(j, k)] * s.prec[(p, pp)];
                    }
                }
                prec[(row, row)] += prior_prec;
            }
        }
        let c = GaussianConditional::from_precision(prec, &h)?.draw(rng);
        for j in 0..q {
            for p in 0..p_len {
                s.gamma[(p, j)] += c[j * p_len + p];
            }
        }
        for t in 0..t_len {
            for p in 0..p_len {
                let shift: f64 = (0..q).map(|j| c[j * p_len + p] * x[(t, j)]).sum();
                s.theta[(t, p)] -= shift;
            }
        }
        self.refresh_mu(s);
        Ok(())
    }

    /// Exposure-only Gaussian conditional of pollutant `p`'s mean
    /// coefficients.
    pub fn gamma_conditional(&self, s: &ExposureState, p: usize) -> Result<GaussianConditional> {
        let q = self.q();
        let days = &self.obs_days[p];
        let x = DMatrix::from_fn(days.len(), q, |i, j| self.data.mean_design[(days[i], j)]);
        let y = DVector::from_fn(days.len(), |i, _| self.data.y[(days[i], p)] - s.theta[(days[i], p)]);
        let prior = DMatrix::identity(q, q) / self.priors.coefficient_sd.powi(2);
        kernels::gaussian_block_conditional(&x, &y, s.sigma[p] * s.sigma[p], &prior)
    }

    pub fn update_gamma_exact<R: Rng + ?Sized>(&self, s: &mut ExposureState, rng: &mut R) -> Result<()> {
        if !self.samples_gamma() {
            return Ok(());
        }
        for p in 0..self.n_pollutants() {
            let draw = self.gamma_conditional(s, p)?.draw(rng);
            s.gamma.row_mut(p).copy_from(&draw.transpose());
        }
        self.refresh_mu(s);
        Ok(())
    }

    /// Random-walk Metropolis on `log sigma_p`, one pollutant at a time.
    pub fn update_sigma<R: Rng + ?Sized>(
        &self,
        s: &mut ExposureState,
        scales: &mut [AdaptiveScale],
        rng: &mut R,
    ) {
        if !self.samples_sigma() {
            return;
        }
        #[allow(clippy::needless_range_loop)]
        for p in 0..self.n_pollutants() {
            let days = &self.obs_days[p];
            let n = days.len() as f64;
            let ss: f64 = days
                .iter()
                .map(|&t| (self.data.y[(t, p)] - s.mu[(t, p)]).powi(2))
                .sum();
            let prior = self.priors.sigma;
            let target = |u: f64| -n * u - 0.5 * ss * (-2.0 * u).exp() + prior.log_density_log_sd(u);
            let u = s.sigma[p].ln();
            let (u_new, _, accepted) = kernels::mh_scalar(u, target(u), scales[p].scale, rng, target);
            scales[p].record(accepted);
            s.sigma[p] = u_new.exp();
        }
    }

    /// Sum of outer products of the transition residuals over all days.
    fn transition_scatter(&self, s: &ExposureState) -> DMatrix<f64> {
        let p_len = self.n_pollutants();
        let mut scatter = DMatrix::zeros(p_len, p_len);
        let mut r = DVector::zeros(p_len);
        for t in 0..self.n_days() {
            self.transition_residual(s, t, &mut r);
            scatter.ger(1.0, &r, &r, 1.0);
        }
        scatter
    }

    #[inline]
    fn transition_residual(&self, s: &ExposureState, t: usize, out: &mut DVector<f64>) {
        for p in 0..self.n_pollutants() {
            out[p] = if t < self.lag {
                s.theta[(t, p)]
            } else {
                s.theta[(t, p)] - self.rho * s.theta[(t - self.lag, p)]
            };
        }
    }

    pub fn update_cov<R: Rng + ?Sized>(&self, s: &mut ExposureState, rng: &mut R) -> Result<()> {
        if !self.samples_cov() {
            return Ok(());
        }
        let scatter = self.transition_scatter(s);
        let draw = kernels::update_covariance(
            &scatter,
            self.n_days(),
            &self.priors.iw_scale,
            self.priors.iw_dof,
            rng,
        )?;
        s.set_cov(draw)
    }

    /// Exposure log posterior up to a constant.
    pub fn log_density(&self, s: &ExposureState) -> Result<f64> {
        let p_len = self.n_pollutants() as f64;
        let mut lp = measurement_loglik(&self.data.y, &self.data.observed, &s.mu, &s.sigma)?;
        let mut r = DVector::zeros(self.n_pollutants());
        let mut quad = 0.0;
        for t in 0..self.n_days() {
            self.transition_residual(s, t, &mut r);
            let z = s
                .cov_chol
                .solve_lower_triangular(&r)
                .ok_or(Error::SingularCovariance)?;
            quad += z.norm_squared();
        }
        let t_len = self.n_days() as f64;
        lp += -0.5 * t_len * (p_len * LN_2PI + linalg::log_det_from_chol(&s.cov_chol)) - 0.5 * quad;
        if self.samples_gamma() {
            let sd = self.priors.coefficient_sd;
            lp += -0.5 * s.gamma.norm_squared() / (sd * sd);
        }
        if self.samples_sigma() {
            lp += s.sigma.iter().map(|&v| self.priors.sigma.log_density_sd(v)).sum::<f64>();
        }
        if self.samples_cov() {
            lp += self.priors.iw_log_density(&s.cov_chol, &s.prec);
        }
        Ok(lp)
    }
}
