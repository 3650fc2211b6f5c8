//! Health-component updates.
//!
//! The coefficient vector is laid out as
//! `[b0, b_1..b_P, delta?, (alpha, b_1..b_K) per smooth]`, with the pollutant
//! effects per standardized unit. Reported effects are mapped back to
//! original units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::health::ln_factorial;
use crate::mcmc::config::ModelConfig;
use crate::mcmc::data::ModelData;
use crate::mcmc::kernels::{self, AdaptiveScale};
use crate::priors::{GammaPrior, ScalePrior};
use crate::rng::{sample_gamma, sample_normal, standard_normal_vector};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub d: usize,
    pub n_beta: usize,
    pub holiday: Option<usize>,
    /// `(start, n_knots)`; `start` holds the linear coefficient.
    pub smooths: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub(crate) struct HealthState {
    pub phi: DVector<f64>,
    pub smooth_var: Vec<f64>,
    pub eps: Vec<f64>,
    pub sigma_eps: f64,
}

/// Local Gaussian approximation at one coefficient value.
struct NewtonPoint {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_target: f64,
}

impl NewtonPoint {
    /// Log density of `x` under `N(mean, F^{-1})`, dropping `2 pi` terms.
    fn log_proposal(&self, x: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let half_log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
        half_log_det - 0.5 * l.tr_mul(&(x - &self.mean)).norm_squared()
    }
}

const MAX_NEWTON_STEPS: usize = 100;

pub(crate) struct HealthModel<'a> {
    pub data: &'a ModelData,
    pub lag: usize,
    pub days: Vec<usize>,
    pub layout: Layout,
    fixed: DMatrix<f64>,
    outcome: Vec<f64>,
    ln_factorial_sum: f64,
    pub expected: f64,
    ln_expected: f64,
    prior_base: DMatrix<f64>,
    smoothing: GammaPrior,
    sigma_eps_prior: ScalePrior,
    pub overdispersion: bool,
}

impl<'a> HealthModel<'a> {
    /// `require_observed_lag` drops days whose lagged concentrations are not
    /// all observed.
    pub fn new(data: &'a ModelData, config: &ModelConfig, require_observed_lag: bool) -> Result<Self> {
        let lag = config.lag;
        let t_len = data.n_days();
        let p_len = data.n_pollutants();
        let days: Vec<usize> = if data.has_outcome() {
            (lag..t_len)
                .filter(|&t| {
                    !require_observed_lag || (0..p_len).all(|p| data.observed[(t - lag, p)])
                })
                .collect()
        } else {
            Vec::new()
        };

        let mut d = 1 + p_len;
        let holiday = data.has_holidays().then(|| {
            d += 1;
            d - 1
        });
        let mut smooths = Vec::new();
        for s in &data.smooths {
            smooths.push((d, s.basis.n_knots()));
            d += s.basis.n_coefficients();
        }
        let layout = Layout {
            d,
            n_beta: p_len,
            holiday,
            smooths,
        };

        let mut fixed = DMatrix::zeros(t_len, d);
        for t in 0..t_len {
            fixed[(t, 0)] = 1.0;
            if let Some(h) = layout.holiday {
                fixed[(t, h)] = if data.holiday[t] { 1.0 } else { 0.0 };
            }
            for (s, &(start, k)) in data.smooths.iter().zip(&layout.smooths) {
                fixed[(t, start)] = s.basis.linear[t];
                for j in 0..k {
                    fixed[(t, start + 1 + j)] = s.basis.matrix[(t, j)];
                }
            }
        }

        let coef_sd = config.prior_set.coefficient_sd();
        let coef_prec = 1.0 / (coef_sd * coef_sd);
        let mut prior_base = DMatrix::zeros(d, d);
        // The intercept prior applies on original units:
        // b0_orig = b0 - sum_p b_p * mean_p / sd_p.
        let mut v = DVector::zeros(d);
        v[0] = 1.0;
        for p in 0..p_len {
            v[1 + p] = -data.scaling.mean[p] / data.scaling.sd[p];
        }
        prior_base.ger(coef_prec, &v, &v, 1.0);
        for p in 0..p_len {
            let sd = if config.rescale_beta_prior {
                config.beta_prior_sd
            } else {
                config.beta_prior_sd * data.scaling.sd[p]
            };
            prior_base[(1 + p, 1 + p)] += 1.0 / (sd * sd);
        }
        if let Some(h) = layout.holiday {
            prior_base[(h, h)] += coef_prec;
        }
        for &(start, _) in &layout.smooths {
            prior_base[(start, start)] += coef_prec;
        }

        let outcome: Vec<f64> = data.outcome.iter().map(|&o| o as f64).collect();
        let ln_factorial_sum = days.iter().map(|&t| ln_factorial(data.outcome[t])).sum();
        Ok(Self {
            data,
            lag,
            days,
            layout,
            fixed,
            outcome,
            ln_factorial_sum,
            expected: data.expected,
            ln_expected: data.expected.ln(),
            prior_base,
            smoothing: config.prior_set.smoothing_precision(),
            sigma_eps_prior: config.prior_set.scale_prior(),
            overdispersion: config.overdispersion,
        })
    }

    pub fn init(&self) -> HealthState {
        HealthState {
            phi: DVector::zeros(self.layout.d),
            smooth_var: vec![1.0; self.layout.smooths.len()],
            eps: vec![0.0; self.data.n_days()],
            sigma_eps: 0.1,
        }
    }

    /// Design rows of the health days given standardized exposures.
    pub fn design(&self, expo: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.days.len();
        let mut x = DMatrix::zeros(n, self.layout.d);
        for (i, &t) in self.days.iter().enumerate() {
            for j in 0..self.layout.d {
                x[(i, j)] = self.fixed[(t, j)];
            }
            for p in 0..self.layout.n_beta {
                x[(i, 1 + p)] = expo[(t - self.lag, p)];
            }
        }
        x
    }

    pub fn effects<'s>(&self, st: &'s HealthState) -> nalgebra::DVectorView<'s, f64> {
        st.phi.rows(1, self.layout.n_beta)
    }

    pub fn prior_precision(&self, smooth_var: &[f64]) -> DMatrix<f64> {
        let mut p0 = self.prior_base.clone();
        for (&(start, k), &var) in self.layout.smooths.iter().zip(smooth_var) {
            for j in 0..k {
                p0[(start + 1 + j, start + 1 + j)] += 1.0 / var;
            }
        }
        p0
    }

    fn eps_on_days(&self, st: &HealthState) -> DVector<f64> {
        DVector::from_iterator(self.days.len(), self.days.iter().map(|&t| st.eps[t]))
    }

    /// `log lambda` on every health day.
    pub fn eta(&self, x: &DMatrix<f64>, st: &HealthState) -> DVector<f64> {
        x * &st.phi + self.eps_on_days(st)
    }

    fn newton_point(
        &self,
        x: &DMatrix<f64>,
        offset: &DVector<f64>,
        phi: &DVector<f64>,
        p0: &DMatrix<f64>,
    ) -> Option<NewtonPoint> {
        let eta = x * phi + offset;
        let mut resid = DVector::zeros(eta.len());
        let mut xw = x.clone();
        let mut loglik = 0.0;
        for i in 0..eta.len() {
            let w = self.expected * eta[i].exp();
            if !w.is_finite() {
                return None;
            }
            let o = self.outcome[self.days[i]];
            loglik += o * eta[i] - w;
            resid[i] = o - w;
            xw.row_mut(i).scale_mut(w.sqrt());
        }
        let p0_phi = p0 * phi;
        let grad = x.tr_mul(&resid) - &p0_phi;
        let fisher = xw.tr_mul(&xw) + p0;
        let chol = Cholesky::new(fisher)?;
        let mean = phi + chol.solve(&grad);
        Some(NewtonPoint {
            mean,
            chol,
            log_target: loglik - 0.5 * phi.dot(&p0_phi),
        })
    }

    /// Damped Newton iterations to the conditional mode of the coefficients,
    /// followed by one draw from the Gaussian approximation there.
    pub fn start_coefficients<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        st: &mut HealthState,
        rng: &mut R,
    ) -> Result<()> {
        let offset = self.eps_on_days(st);
        let p0 = self.prior_precision(&st.smooth_var);
        let point = |phi: &DVector<f64>| {
            self.newton_point(x, &offset, phi, &p0)
                .ok_or(Error::NonFiniteCurrentTarget)
        };
        let mut phi = st.phi.clone();
        let mut here = point(&phi)?;
        for _ in 0..MAX_NEWTON_STEPS {
            let step = &here.mean - &phi;
            let mut scale = 1.0;
            let (next, next_point) = loop {
                let cand = &phi + &step * scale;
                match self.newton_point(x, &offset, &cand, &p0) {
                    Some(pt) if pt.log_target >= here.log_target => break (cand, pt),
                    _ if scale < 1e-8 => break (phi.clone(), point(&phi)?),
                    _ => scale *= 0.5,
                }
            };
            let moved = (&next - &phi).amax();
            phi = next;
            here = next_point;
            if moved < 1e-10 {
                break;
            }
        }
        let z = standard_normal_vector(rng, self.layout.d);
        let step = here
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or(Error::NonFiniteCurrentTarget)?;
        st.phi = phi + step;
        Ok(())
    }

    /// Metropolis-Hastings step whose proposal is the Gaussian centred at a
    /// Newton step from the current value with the Fisher information as
    /// precision. Returns whether the move was accepted.
    pub fn update_coefficients<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        st: &mut HealthState,
        rng: &mut R,
    ) -> Result<bool> {
        let offset = self.eps_on_days(st);
        let p0 = self.prior_precision(&st.smooth_var);
        let here = self
            .newton_point(x, &offset, &st.phi, &p0)
            .ok_or(Error::NonFiniteCurrentTarget)?;
        let z = standard_normal_vector(rng, self.layout.d);
        let step = here
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .ok_or(Error::NonFiniteCurrentTarget)?;
        let proposal = &here.mean + step;
        let Some(there) = self.newton_point(x, &offset, &proposal, &p0) else {
            return Ok(false);
        };
        let log_ratio = there.log_target - here.log_target + there.log_proposal(&st.phi)
            - here.log_proposal(&proposal);
        if kernels::accept(rng, log_ratio) {
            st.phi = proposal;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Conjugate Gamma draw of each smooth's shrinkage precision.
    pub fn update_smooth_var<R: Rng + ?Sized>(&self, st: &mut HealthState, rng: &mut R) -> Result<()> {
        for (i, &(start, k)) in self.layout.smooths.iter().enumerate() {
            let ss: f64 = (0..k).map(|j| st.phi[start + 1 + j].powi(2)).sum();
            let precision = sample_gamma(
                rng,
                self.smoothing.shape + 0.5 * k as f64,
                self.smoothing.rate + 0.5 * ss,
            )?;
            st.smooth_var[i] = 1.0 / precision;
        }
        Ok(())
    }

    /// Per-day random-walk Metropolis on the overdispersion effects; days
    /// outside the likelihood are drawn from their prior. `base` is
    /// `x * phi` on the health days.
    pub fn update_eps<R: Rng + ?Sized>(
        &self,
        base: &DVector<f64>,
        st: &mut HealthState,
        scale: &mut AdaptiveScale,
        rng: &mut R,
    ) {
        if !self.overdispersion {
            return;
        }
        let inv_var = 1.0 / (st.sigma_eps * st.sigma_eps);
        let mut in_lik = vec![false; st.eps.len()];
        let mut accepted = 0;
        for (i, &t) in self.days.iter().enumerate() {
            in_lik[t] = true;
            let o = self.outcome[t];
            let e = st.eps[t];
            let prop = e + scale.scale * sample_normal(rng);
            let eta = base[i] + e;
            let d = prop - e;
            let log_ratio = o * d - self.expected * eta.exp() * d.exp_m1()
                - 0.5 * (prop * prop - e * e) * inv_var;
            if kernels::accept(rng, log_ratio) {
                st.eps[t] = prop;
                accepted += 1;
            }
        }
        scale.record_many(accepted, self.days.len() as u64);
        for (t, e) in st.eps.iter_mut().enumerate() {
            if !in_lik[t] {
                *e = st.sigma_eps * sample_normal(rng);
            }
        }
    }

    pub fn update_sigma_eps<R: Rng + ?Sized>(
        &self,
        st: &mut HealthState,
        scale: &mut AdaptiveScale,
        rng: &mut R,
    ) {
        if !self.overdispersion {
            return;
        }
        let n = st.eps.len() as f64;
        let ss: f64 = st.eps.iter().map(|e| e * e).sum();
        let prior = self.sigma_eps_prior;
        let target = |u: f64| -n * u - 0.5 * ss * (-2.0 * u).exp() + prior.log_density_log_sd(u);
        let u = st.sigma_eps.ln();
        let (u_new, _, accepted) = kernels::mh_scalar(u, target(u), scale.scale, rng, target);
        scale.record(accepted);
        st.sigma_eps = u_new.exp();
    }

    /// Poisson log-likelihood with all constants, given `eta` on the health
    /// days.
    pub fn loglik(&self, eta: &DVector<f64>) -> f64 {
        let mut ll = -self.ln_factorial_sum;
        for (i, &t) in self.days.iter().enumerate() {
            let o = self.outcome[t];
            ll += o * (eta[i] + self.ln_expected) - self.expected * eta[i].exp();
        }
        ll
    }

    pub fn deviance(&self, eta: &DVector<f64>) -> f64 {
        -2.0 * self.loglik(eta)
    }

    /// Health log posterior up to a constant.
    pub fn log_density(&self, eta: &DVector<f64>, st: &HealthState) -> f64 {
        let p0 = self.prior_precision(&st.smooth_var);
        let mut lp = self.loglik(eta) - 0.5 * st.phi.dot(&(&p0 * &st.phi));
        for (&(_, k), &var) in self.layout.smooths.iter().zip(&st.smooth_var) {
            let tau = 1.0 / var;
            lp += 0.5 * k as f64 * tau.ln() + (self.smoothing.shape - 1.0) * tau.ln()
                - self.smoothing.rate * tau;
        }
        if self.overdispersion {
            let n = st.eps.len() as f64;
            let ss: f64 = st.eps.iter().map(|e| e * e).sum();
            lp += -n * st.sigma_eps.ln() - 0.5 * ss / (st.sigma_eps * st.sigma_eps)
                + self.sigma_eps_prior.log_density_sd(st.sigma_eps);
        }
        lp
    }

    /// Intercept and effects on original concentration units.
    pub fn original_effects(&self, phi: &DVector<f64>) -> (f64, Vec<f64>) {
        let s = &self.data.scaling;
        let mut b0 = phi[0];
        let beta = (0..self.layout.n_beta)
            .map(|p| {
                b0 -= phi[1 + p] * s.mean[p] / s.sd[p];
                phi[1 + p] / s.sd[p]
            })
            .collect();
        (b0, beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ScalingParams;
    use crate::rng::SeedTree;

    fn data(t: usize) -> ModelData {
        let y = DMatrix::from_fn(t, 1, |i, _| (i as f64 * 0.37).sin());
        let outcome = (0..t).map(|i| 3 + (i % 5) as u64).collect();
        let scaling = ScalingParams { names: vec!["x".into()], mean: vec![2.0], sd: vec![4.0] };
        ModelData::from_parts(
            y,
            DMatrix::from_element(t, 1, true),
            scaling,
            outcome,
            vec![],
            DMatrix::from_element(t, 1, 1.0),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn effects_map_back_to_original_units() {
        let d = data(10);
        let model = HealthModel::new(&d, &ModelConfig::default(), false).unwrap();
        let phi = DVector::from_vec(vec![0.3, 0.8]);
        let (b0, beta) = model.original_effects(&phi);
        assert!((beta[0] - 0.2).abs() < 1e-15);
        // eta at standardized z equals b0 + beta * (z * sd + mean).
        let z = 0.7;
        assert!((0.3 + 0.8 * z - (b0 + beta[0] * (z * 4.0 + 2.0))).abs() < 1e-14);
    }

    #[test]
    fn health_days_skip_the_lag() {
        let d = data(10);
        let cfg = ModelConfig { lag: 2, ..Default::default() };
        let model = HealthModel::new(&d, &cfg, false).unwrap();
        assert_eq!(model.days, (2..10).collect::<Vec<_>>());
    }

    #[test]
    fn loglik_matches_direct_poisson_sum() {
        let d = data(8);
        let model = HealthModel::new(&d, &ModelConfig::default(), false).unwrap();
        let eta = DVector::from_fn(model.days.len(), |i, _| 0.1 * i as f64 - 0.2);
        let direct: f64 = model
            .days
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                crate::health::health_loglik(&[d.outcome[t]], &[eta[i].exp()], d.expected).unwrap()
            })
            .sum();
        assert!((model.loglik(&eta) - direct).abs() < 1e-10);
    }

    #[test]
    fn prior_only_proposal_is_exact() {
        // Without data the Newton proposal is the prior itself, so every
        // move is accepted.
        let mut d = data(6);
        d.outcome.clear();
        let model = HealthModel::new(&d, &ModelConfig::default(), false).unwrap();
        let mut rng = SeedTree::new(1).stream();
        let mut st = model.init();
        let x = model.design(&d.y);
        for _ in 0..50 {
            assert!(model.update_coefficients(&x, &mut st, &mut rng).unwrap());
        }
    }
}
