use nalgebra::DMatrix;

use crate::dataset::{self, ScalingParams, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::health::expected_count;
use crate::mcmc::config::ModelConfig;
use crate::pollutant::{mean_covariates, FULL_MEAN_TERMS};
use crate::splines::{self, SplineBasis};

/// A smooth confounder term and its basis.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedBasis {
    pub name: String,
    pub basis: SplineBasis,
}

/// Everything a sampler reads, prepared once per fit.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelData {
    pub pollutant_names: Vec<String>,
    /// Standardized concentrations, `NaN` where missing.
    pub y: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    pub scaling: ScalingParams,
    /// Empirical correlation of the standardized concentrations.
    pub correlation: DMatrix<f64>,
    /// `T x q` exposure mean covariates.
    pub mean_design: DMatrix<f64>,
    pub outcome: Vec<u64>,
    pub expected: f64,
    pub holiday: Vec<bool>,
    pub smooths: Vec<NamedBasis>,
    /// Interquartile range of each pollutant in original units.
    pub iqr: Vec<f64>,
}

fn z_scores(values: &[f64]) -> Option<Vec<f64>> {
    let (m, sd) = dataset::mean_sd(values);
    (sd > 0.0).then(|| values.iter().map(|v| (v - m) / sd).collect())
}

impl ModelData {
    pub fn from_dataset(ds: &TimeSeriesDataset, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (std, scaling) = dataset::standardize(ds)?;
        let correlation = dataset::empirical_correlation(&std.values, &std.observed)?;
        let t = ds.n_days();

        let temp = z_scores(&ds.temperature);
        let rhum = z_scores(&ds.humidity);
        let q = config.mean_terms.unwrap_or(if temp.is_some() && rhum.is_some() {
            FULL_MEAN_TERMS
        } else {
            1
        });
        if (q > 1 && temp.is_none()) || (q > 3 && rhum.is_none()) {
            return Err(Error::InvalidConfig(format!(
                "{q} exposure mean terms requested but the meteorology is constant"
            )));
        }
        let temp_z = temp.unwrap_or_else(|| vec![0.0; t]);
        let rhum_z = rhum.unwrap_or_else(|| vec![0.0; t]);
        let mut mean_design = DMatrix::zeros(t, q);
        for i in 0..t {
            for (j, v) in mean_covariates(temp_z[i], rhum_z[i], q).into_iter().enumerate() {
                mean_design[(i, j)] = v;
            }
        }

        let mut smooths = Vec::new();
        let covariates = [
            ("time", config.knots.time, splines::time_covariate(t)),
            ("temp", config.knots.temperature, splines::unit_interval(&ds.temperature)),
            ("rhum", config.knots.humidity, splines::unit_interval(&ds.humidity)),
        ];
        for (name, count, z) in covariates {
            if count == 0 {
                continue;
            }
            let knots = splines::make_knots(&z, count)?;
            smooths.push(NamedBasis {
                name: name.to_string(),
                basis: splines::basis(&z, &knots),
            });
        }

        let iqr = dataset::descriptives(ds).pollutant_iqr();
        Ok(Self {
            pollutant_names: ds.pollutant_names.clone(),
            y: std.values,
            observed: std.observed,
            scaling,
            correlation,
            mean_design,
            outcome: ds.outcome.clone(),
            expected: expected_count(&ds.outcome)?.0,
            holiday: ds.holiday.clone(),
            smooths,
            iqr,
        })
    }

    /// Assemble data directly, with `y` already on the model scale.
    ///
    /// An empty `outcome` switches the health likelihood off.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        y: DMatrix<f64>,
        observed: DMatrix<bool>,
        scaling: ScalingParams,
        outcome: Vec<u64>,
        holiday: Vec<bool>,
        mean_design: DMatrix<f64>,
        smooths: Vec<NamedBasis>,
    ) -> Result<Self> {
        let (t, p) = y.shape();
        if observed.shape() != (t, p) || scaling.len() != p || mean_design.nrows() != t {
            return Err(Error::DimensionMismatch("model data parts disagree".into()));
        }
        if !(outcome.is_empty() || outcome.len() == t) || !(holiday.is_empty() || holiday.len() == t)
        {
            return Err(Error::DimensionMismatch("outcome or holiday length".into()));
        }
        if smooths.iter().any(|s| s.basis.n_days() != t) {
            return Err(Error::DimensionMismatch("smooth basis length".into()));
        }
        let masked = DMatrix::from_fn(t, p, |i, j| if observed[(i, j)] { y[(i, j)] } else { f64::NAN });
        let correlation = dataset::empirical_correlation(&masked, &observed)?;
        let expected = if outcome.is_empty() {
            1.0
        } else {
            expected_count(&outcome)?.0
        };
        let iqr = (0..p)
            .map(|j| {
                let col: Vec<f64> = (0..t)
                    .filter(|&i| observed[(i, j)])
                    .map(|i| scaling.to_original(j, masked[(i, j)]))
                    .collect();
                dataset::quantile(&col, 0.75) - dataset::quantile(&col, 0.25)
            })
            .collect();
        Ok(Self {
            pollutant_names: scaling.names.clone(),
            y: masked,
            observed,
            scaling,
            correlation,
            mean_design,
            holiday: if holiday.is_empty() { vec![false; t] } else { holiday },
            outcome,
            expected,
            smooths,
            iqr,
        })
    }

    pub fn n_days(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_pollutants(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_mean_terms(&self) -> usize {
        self.mean_design.ncols()
    }

    pub fn has_outcome(&self) -> bool {
        !self.outcome.is_empty()
    }

    pub fn has_holidays(&self) -> bool {
        self.holiday.iter().any(|&h| h)
    }
}
