//! Synthetic datasets and the replicated estimator-comparison study.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, quantile_sorted, TimeSeriesDataset};
use crate::diagnostics::pooled;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mcmc::{self, KnotCounts, ModelConfig, ModelData, Variant};
use crate::rng::{sample_normal, sample_poisson, sample_uniform, standard_normal_vector, SeedTree};
use crate::splines;

/// Innovation correlation of six pollutants observed in Greater London.
pub const LONDON_CORRELATION: [[f64; 6]; 6] = [
    [1.0, 0.737, -0.535, 0.442, 0.515, 0.630],
    [0.737, 1.0, -0.606, 0.510, 0.730, 0.659],
    [-0.535, -0.606, 1.0, -0.260, -0.394, -0.396],
    [0.442, 0.510, -0.260, 1.0, 0.390, 0.490],
    [0.515, 0.730, -0.394, 0.390, 1.0, 0.420],
    [0.630, 0.659, -0.396, 0.490, 0.420, 1.0],
];

pub const DEFAULT_RATE_CAP: f64 = 1e9;

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

fn consecutive_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n as u64)
        .map(|i| start.checked_add_days(Days::new(i)).expect("date in range"))
        .collect()
}

fn london_matrix() -> Vec<Vec<f64>> {
    LONDON_CORRELATION.iter().map(|r| r.to_vec()).collect()
}

/// Generator settings for the random-walk exposure study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_days: usize,
    /// Innovation covariance of the latent random walk (a correlation
    /// matrix).
    pub correlation: Vec<Vec<f64>>,
    pub measurement_variance: f64,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Column-standardize the latent series before the observation and
    /// outcome steps.
    pub stabilize: bool,
    /// Day offset between exposure and outcome; 0 is same-day.
    pub outcome_lag: usize,
    pub rate_cap: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SimulationConfig {
    /// 2000 days, 100 replicates, no stabilization.
    pub fn full() -> Self {
        Self {
            n_days: 2000,
            correlation: london_matrix(),
            measurement_variance: 0.1,
            beta: vec![0.2, 0.2, -0.2, 0.0, 0.0, 0.0],
            intercept: 1.0,
            replicates: 100,
            seed: 20_190_101,
            stabilize: false,
            outcome_lag: 1,
            rate_cap: DEFAULT_RATE_CAP,
        }
    }

    /// 500 days, 20 replicates, stabilized.
    pub fn desk() -> Self {
        Self {
            n_days: 500,
            replicates: 20,
            stabilize: true,
            ..Self::full()
        }
    }

    pub fn n_pollutants(&self) -> usize {
        self.beta.len()
    }

    pub fn pollutant_names(&self) -> Vec<String> {
        (1..=self.n_pollutants()).map(|i| format!("p{i}")).collect()
    }

    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let p = self.correlation.len();
        DMatrix::from_fn(p, p, |i, j| self.correlation[i].get(j).copied().unwrap_or(f64::NAN))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let p = self.n_pollutants();
        if p == 0 {
            return bad("beta must name at least one pollutant".into());
        }
        if self.n_days < 2 || self.n_days <= self.outcome_lag {
            return bad(format!("n_days must exceed max(1, outcome_lag), got {}", self.n_days));
        }
        if self.correlation.len() != p || self.correlation.iter().any(|r| r.len() != p) {
            return bad(format!("correlation must be {p}x{p}"));
        }
        let c = self.correlation_matrix();
        for i in 0..p {
            if (c[(i, i)] - 1.0).abs() > 1e-12 {
                return bad("correlation must have a unit diagonal".into());
            }
            for j in 0..i {
                if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 {
                    return bad("correlation must be symmetric".into());
                }
            }
        }
        if linalg::cholesky_lower(&c).is_err() {
            return bad("correlation must be positive definite".into());
        }
        if !(self.measurement_variance >= 0.0 && self.measurement_variance.is_finite()) {
            return bad("measurement_variance must be nonnegative".into());
        }
        if !(self.rate_cap > 0.0) {
            return bad("rate_cap must be positive".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        Ok(())
    }
}

/// One simulated panel together with what generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub pollutant_names: Vec<String>,
    /// True concentrations.
    pub latent: DMatrix<f64>,
    /// Measured concentrations.
    pub observed: DMatrix<f64>,
    pub outcome: Vec<u64>,
    pub config: SimulationConfig,
    pub seed: u64,
}

impl SimulatedData {
    pub fn n_days(&self) -> usize {
        self.outcome.len()
    }

    /// Panel with constant meteorology, no holidays and every value observed.
    pub fn to_dataset(&self) -> Result<TimeSeriesDataset> {
        let t = self.n_days();
        TimeSeriesDataset::new(
            consecutive_dates(start_date(), t),
            self.outcome.clone(),
            vec![0.0; t],
            vec![0.0; t],
            vec![false; t],
            self.pollutant_names.clone(),
            self.observed.clone(),
            DMatrix::from_element(t, self.pollutant_names.len(), true),
        )
    }
}

/// Random-walk latent exposures, noisy measurements and Poisson outcomes.
pub fn simulate_dataset(config: &SimulationConfig, seed: u64) -> Result<SimulatedData> {
    config.validate()?;
    let tree = SeedTree::new(seed).child("simulate");
    let (t_len, p) = (config.n_days, config.n_pollutants());
    let chol = linalg::cholesky_lower(&config.correlation_matrix())?;

    let mut rng = tree.child("latent").stream();
    let mut latent = DMatrix::zeros(t_len, p);
    let mut prev = DVector::zeros(p);
    for t in 0..t_len {
        let next = &prev + &chol * standard_normal_vector(&mut rng, p);
        latent.row_mut(t).copy_from(&next.transpose());
        prev = next;
    }
    if config.stabilize {
        for mut col in latent.column_iter_mut() {
            let (m, sd) = dataset::mean_sd(col.as_slice());
            col.apply(|v| *v = (*v - m) / sd);
        }
    }

    let mut rng = tree.child("measurement").stream();
    let me_sd = config.measurement_variance.sqrt();
    let mut observed = latent.clone();
    for j in 0..p {
        for t in 0..t_len {
            observed[(t, j)] += me_sd * sample_normal(&mut rng);
        }
    }

    let mut rng = tree.child("outcome").stream();
    let mut outcome = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let src = t.saturating_sub(config.outcome_lag);
        let eta = config.intercept
            + (0..p).map(|j| config.beta[j] * latent[(src, j)]).sum::<f64>();
        let rate = eta.exp();
        if !(rate <= config.rate_cap) {
            return Err(Error::OverflowRate {
                day: t,
                rate,
                cap: config.rate_cap,
            });
        }
        outcome.push(sample_poisson(&mut rng, rate)?);
    }
    Ok(SimulatedData {
        pollutant_names: config.pollutant_names(),
        latent,
        observed,
        outcome,
        config: config.clone(),
        seed,
    })
}

/// Posterior mean and 95% interval of one coefficient in one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Estimate {
    pub fn from_draws(draws: &[f64]) -> Self {
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: draws.iter().sum::<f64>() / draws.len() as f64,
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMetrics {
    pub bias: f64,
    pub rmse: f64,
    pub width: f64,
    pub coverage: f64,
    pub replicates: usize,
}

/// Bias, RMSE, mean interval width and coverage over replicates.
pub fn coefficient_metrics(estimates: &[Estimate], truth: f64) -> CoefficientMetrics {
    let n = estimates.len() as f64;
    let avg = |f: &dyn Fn(&Estimate) -> f64| estimates.iter().map(f).sum::<f64>() / n;
    CoefficientMetrics {
        bias: avg(&|e| e.mean) - truth,
        rmse: avg(&|e| (e.mean - truth).powi(2)).sqrt(),
        width: avg(&|e| e.upper - e.lower),
        coverage: avg(&|e| if e.covers(truth) { 1.0 } else { 0.0 }),
        replicates: estimates.len(),
    }
}

/// Generator, fitting settings and the variants to compare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub simulation: SimulationConfig,
    pub model: ModelConfig,
    pub variants: Vec<Variant>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl StudyConfig {
    pub fn desk() -> Self {
        Self {
            simulation: SimulationConfig::desk(),
            model: ModelConfig {
                burn_in: 5000,
                retained: 2000,
                chains: 2,
                ..ModelConfig::default()
            },
            variants: Variant::ALL.to_vec(),
        }
    }

    pub fn full() -> Self {
        Self {
            simulation: SimulationConfig::full(),
            model: ModelConfig::default(),
            variants: Variant::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        self.model.validate()?;
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("at least one variant is required".into()));
        }
        Ok(())
    }

    fn replicate_tree(&self, replicate: usize) -> SeedTree {
        SeedTree::new(self.simulation.seed).child("replicate").child(replicate)
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.replicate_tree(replicate).derived_u64()
    }

    /// Fit settings for one variant on one replicate. The generated data
    /// carry no confounders or extra-Poisson noise, so smooths and the
    /// overdispersion term are switched off.
    pub fn fit_config(&self, variant: Variant, replicate: usize) -> ModelConfig {
        ModelConfig {
            variant,
            knots: KnotCounts::NONE,
            overdispersion: false,
            seed: self.replicate_tree(replicate).child("fit").derived_u64(),
            ..self.model.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FitOutcome {
    Ok { estimates: Vec<Estimate> },
    Failed { code: String, message: String },
}

impl FitOutcome {
    fn failed(e: &Error) -> Self {
        FitOutcome::Failed {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    /// Keyed by variant name.
    pub fits: BTreeMap<String, FitOutcome>,
}

/// Posterior estimates of every pollutant coefficient from pooled chains.
pub fn beta_estimates(chains: &[mcmc::ChainDraws], n_pollutants: usize) -> Vec<Estimate> {
    (0..n_pollutants)
        .map(|j| Estimate::from_draws(&pooled(chains, "beta", j)))
        .collect()
}

fn fit_variant(study: &StudyConfig, sim: &SimulatedData, variant: Variant, r: usize) -> Result<Vec<Estimate>> {
    let cfg = study.fit_config(variant, r);
    let data = ModelData::from_dataset(&sim.to_dataset()?, &cfg)?;
    let chains = mcmc::run_model(&cfg, &data)?;
    Ok(beta_estimates(&chains, sim.pollutant_names.len()))
}

/// Simulate replicate `r` and fit every configured variant to it.
pub fn run_replicate(study: &StudyConfig, r: usize) -> ReplicateOutcome {
    let seed = study.replicate_seed(r);
    let mut fits = BTreeMap::new();
    match simulate_dataset(&study.simulation, seed) {
        Err(e) => {
            log::warn!("replicate {r}: simulation failed: {e}");
            for v in &study.variants {
                fits.insert(v.to_string(), FitOutcome::failed(&e));
            }
        }
        Ok(sim) => {
            for &v in &study.variants {
                let out = match fit_variant(study, &sim, v, r) {
                    Ok(estimates) => FitOutcome::Ok { estimates },
                    Err(e) => {
                        log::warn!("replicate {r}: {v} failed: {e}");
                        FitOutcome::failed(&e)
                    }
                };
                fits.insert(v.to_string(), out);
            }
        }
    }
    ReplicateOutcome {
        replicate: r,
        seed,
        fits,
    }
}

/// Bias, RMSE, width and coverage per variant and coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    pub coefficients: Vec<String>,
    pub truth: Vec<f64>,
    pub variants: Vec<Variant>,
    /// Keyed by variant name, one entry per coefficient.
    pub metrics: BTreeMap<String, Vec<CoefficientMetrics>>,
    pub completed: BTreeMap<String, usize>,
    /// Failure counts keyed by variant name, then error code.
    pub failures: BTreeMap<String, BTreeMap<String, usize>>,
}

pub const METRIC_NAMES: [&str; 4] = ["bias", "rmse", "width", "coverage"];

impl StudyMetrics {
    pub fn get(&self, variant: Variant, coefficient: usize) -> Option<&CoefficientMetrics> {
        self.metrics.get(variant.as_str())?.get(coefficient)
    }

    /// Long table: one row per metric and coefficient, one column per
    /// variant.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,coefficient");
        for v in &self.variants {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
        for metric in METRIC_NAMES {
            for (j, coef) in self.coefficients.iter().enumerate() {
                let _ = write!(s, "{metric},{coef}");
                for v in &self.variants {
                    let value = self.get(*v, j).map_or(f64::NAN, |m| match metric {
                        "bias" => m.bias,
                        "rmse" => m.rmse,
                        "width" => m.width,
                        _ => m.coverage,
                    });
                    let _ = write!(s, ",{value:.6}");
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Combine replicate outcomes, in replicate order, into study metrics.
pub fn aggregate(study: &StudyConfig, outcomes: &[ReplicateOutcome]) -> StudyMetrics {
    let truth = study.simulation.beta.clone();
    let p = truth.len();
    let mut sorted: Vec<&ReplicateOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.replicate);
    let mut metrics = BTreeMap::new();
    let mut completed = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for v in &study.variants {
        let name = v.to_string();
        let mut per_coef: Vec<Vec<Estimate>> = vec![Vec::new(); p];
        let mut fails: BTreeMap<String, usize> = BTreeMap::new();
        let mut ok = 0;
        for o in &sorted {
            match o.fits.get(&name) {
                Some(FitOutcome::Ok { estimates }) if estimates.len() == p => {
                    ok += 1;
                    for (j, e) in estimates.iter().enumerate() {
                        per_coef[j].push(*e);
                    }
                }
                Some(FitOutcome::Failed { code, .. }) => *fails.entry(code.clone()).or_default() += 1,
                _ => *fails.entry("Missing".into()).or_default() += 1,
            }
        }
        let m = if ok > 0 {
            per_coef
                .iter()
                .zip(&truth)
                .map(|(e, &b)| coefficient_metrics(e, b))
                .collect()
        } else {
            Vec::new()
        };
        metrics.insert(name.clone(), m);
        completed.insert(name.clone(), ok);
        failures.insert(name, fails);
    }
    StudyMetrics {
        coefficients: (1..=p).map(|j| format!("beta{j}")).collect(),
        truth,
        variants: study.variants.clone(),
        metrics,
        completed,
        failures,
    }
}

/// Run every replicate, concurrently where possible, and aggregate.
pub fn run_study(study: &StudyConfig) -> Result<(StudyMetrics, Vec<ReplicateOutcome>)> {
    study.validate()?;
    let outcomes: Vec<ReplicateOutcome> = (0..study.simulation.replicates)
        .into_par_iter()
        .map(|r| run_replicate(study, r))
        .collect();
    Ok((aggregate(study, &outcomes), outcomes))
}

/// Generator for a two-year panel with seasonal confounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfoundedConfig {
    pub n_days: usize,
    /// Effects per standard deviation of each pollutant.
    pub effects: Vec<f64>,
    pub base_rate: f64,
    pub holiday_effect: f64,
    pub sigma_eps: f64,
    /// Lag-one autocorrelation of the latent residuals.
    pub persistence: f64,
    /// Measurement-error variance relative to each pollutant's variance.
    pub measurement_variance: f64,
    pub missing_rate: f64,
    /// Knot counts of the bases the confounder curves are drawn on.
    pub knots: KnotCounts,
    /// Linear coefficients of the time, temperature and humidity curves.
    pub smooth_slopes: [f64; 3],
    /// Sd of the radial coefficients of each curve.
    pub smooth_sd: [f64; 3],
}

impl Default for ConfoundedConfig {
    fn default() -> Self {
        Self {
            n_days: 731,
            effects: vec![0.0, 0.07, 0.06, 0.0, 0.0, 0.0],
            base_rate: 37.0,
            holiday_effect: -0.03,
            sigma_eps: 0.05,
            persistence: 0.8,
            measurement_variance: 0.09,
            missing_rate: 0.03,
            knots: KnotCounts::default(),
            smooth_slopes: [-0.04, -0.1, 0.05],
            smooth_sd: [0.3, 0.3, 0.1],
        }
    }
}

const CONFOUNDED_NAMES: [&str; 6] = ["no2", "o3", "pm10", "pm25", "so2", "co"];
const CONFOUNDED_MEANS: [f64; 6] = [55.0, 32.0, 28.0, 18.0, 6.0, 0.45];
const CONFOUNDED_SDS: [f64; 6] = [17.0, 18.0, 12.0, 11.0, 3.0, 0.2];
/// Sign of each pollutant's seasonal and temperature response.
const SEASON_LOADING: [f64; 6] = [0.4, -0.5, 0.3, 0.3, 0.4, 0.4];
const TEMPERATURE_LOADING: [f64; 6] = [-0.2, 0.4, 0.1, 0.1, -0.1, -0.2];

/// A confounded panel and its generating truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfoundedData {
    pub dataset: TimeSeriesDataset,
    /// True effects per original unit.
    pub beta: Vec<f64>,
    /// True exposures in original units.
    pub latent: DMatrix<f64>,
    /// Sum of the time, temperature and humidity curves on each day.
    pub confounding: Vec<f64>,
}

/// A smooth drawn from the fitted model's own prior: a fixed slope on the
/// centered covariate plus radial coefficients `b_k ~ N(0, sd^2)`.
fn draw_smooth<R: rand::Rng + ?Sized>(
    z: &[f64],
    count: usize,
    slope: f64,
    sd: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Ok(vec![0.0; z.len()]);
    }
    let knots = splines::make_knots(z, count)?;
    let basis = splines::basis(z, &knots);
    let b: Vec<f64> = (0..count).map(|_| sd * sample_normal(rng)).collect();
    Ok((0..z.len())
        .map(|t| slope * basis.linear[t] + (0..count).map(|k| basis.matrix[(t, k)] * b[k]).sum::<f64>())
        .collect())
}

pub fn simulate_confounded(config: &ConfoundedConfig, seed: u64) -> Result<ConfoundedData> {
    let p = config.effects.len();
    if p == 0 || p > CONFOUNDED_NAMES.len() {
        return Err(Error::InvalidConfig(format!(
            "confounded generator supports 1 to 6 pollutants, got {p}"
        )));
    }
    let t_len = config.n_days;
    let tree = SeedTree::new(seed).child("confounded");
    let start = NaiveDate::from_ymd_opt(2011, 1, 1).expect("valid date");
    let dates = consecutive_dates(start, t_len);
    let season: Vec<f64> = (0..t_len)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 365.25).cos())
        .collect();

    let mut rng = tree.child("weather").stream();
    let temperature: Vec<f64> = season
        .iter()
        .map(|c| 12.0 - 7.0 * c + 2.0 * sample_normal(&mut rng))
        .collect();
    let humidity: Vec<f64> = season
        .iter()
        .map(|c| (75.0 + 8.0 * c + 6.0 * sample_normal(&mut rng)).clamp(30.0, 100.0))
        .collect();
    let holiday: Vec<bool> = dates
        .iter()
        .map(|d| matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect();
    let (tm, tsd) = dataset::mean_sd(&temperature);

    let corr = DMatrix::from_fn(p, p, |i, j| LONDON_CORRELATION[i][j]);
    let chol = linalg::cholesky_lower(&corr)? * (1.0 - config.persistence.powi(2)).sqrt();
    let mut rng = tree.child("latent").stream();
    let mut resid = DMatrix::zeros(t_len, p);
    let mut prev = &linalg::cholesky_lower(&corr)? * standard_normal_vector(&mut rng, p);
    for t in 0..t_len {
        if t > 0 {
            prev = config.persistence * &prev + &chol * standard_normal_vector(&mut rng, p);
        }
        resid.row_mut(t).copy_from(&prev.transpose());
    }
    let mut std_latent = DMatrix::zeros(t_len, p);
    for j in 0..p {
        for t in 0..t_len {
            let temp_z = (temperature[t] - tm) / tsd;
            std_latent[(t, j)] =
                SEASON_LOADING[j] * season[t] + TEMPERATURE_LOADING[j] * temp_z + resid[(t, j)];
        }
    }
    let latent = DMatrix::from_fn(t_len, p, |t, j| {
        CONFOUNDED_MEANS[j] + CONFOUNDED_SDS[j] * std_latent[(t, j)]
    });

    let mut rng = tree.child("measurement").stream();
    let me = config.measurement_variance.sqrt();
    let mut pollutants = latent.clone();
    let mut observed = DMatrix::from_element(t_len, p, true);
    for j in 0..p {
        for t in 0..t_len {
            pollutants[(t, j)] += me * CONFOUNDED_SDS[j] * sample_normal(&mut rng);
            if sample_uniform(&mut rng) < config.missing_rate {
                observed[(t, j)] = false;
                pollutants[(t, j)] = f64::NAN;
            }
        }
    }

    let time_z = splines::time_covariate(t_len);
    let temp_u = splines::unit_interval(&temperature);
    let rhum_u = splines::unit_interval(&humidity);
    let mut rng = tree.child("smooths").stream();
    let [slope_time, slope_temp, slope_rhum] = config.smooth_slopes;
    let [sd_time, sd_temp, sd_rhum] = config.smooth_sd;
    let s_time = draw_smooth(&time_z, config.knots.time, slope_time, sd_time, &mut rng)?;
    let s_temp = draw_smooth(&temp_u, config.knots.temperature, slope_temp, sd_temp, &mut rng)?;
    let s_rhum = draw_smooth(&rhum_u, config.knots.humidity, slope_rhum, sd_rhum, &mut rng)?;

    let confounding: Vec<f64> = (0..t_len).map(|t| s_time[t] + s_temp[t] + s_rhum[t]).collect();

    let mut rng = tree.child("outcome").stream();
    let mut outcome = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let src = t.saturating_sub(1);
        let exposure: f64 = (0..p).map(|j| config.effects[j] * std_latent[(src, j)]).sum();
        let eta = config.base_rate.ln()
            + exposure
            + confounding[t]
            + if holiday[t] { config.holiday_effect } else { 0.0 }
            + config.sigma_eps * sample_normal(&mut rng);
        outcome.push(sample_poisson(&mut rng, eta.exp())?);
    }

    let dataset = TimeSeriesDataset::new(
        dates,
        outcome,
        temperature,
        humidity,
        holiday,
        CONFOUNDED_NAMES[..p].iter().map(|s| s.to_string()).collect(),
        pollutants,
        observed,
    )?;
    let beta = (0..p).map(|j| config.effects[j] / CONFOUNDED_SDS[j]).collect();
    Ok(ConfoundedData {
        dataset,
        beta,
        latent,
        confounding,
    })
}
