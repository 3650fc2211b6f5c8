//! Convergence checks, DIC and posterior summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{quantile_sorted, ScalingParams};
use crate::error::{Error, Result};
use crate::health::{ln_factorial, percent_increase};
use crate::mcmc::{ChainDraws, ModelData};

/// R-hat above this value fails the convergence rule.
pub const RHAT_THRESHOLD: f64 = 1.05;
/// MC error above this fraction of the posterior sd fails the rule.
pub const MC_ERROR_FRACTION: f64 = 0.05;

pub const MIN_RHAT_DRAWS: usize = 10;
pub const MIN_MC_ERROR_DRAWS: usize = 100;

/// Blocks holding per-day latent values rather than parameters.
pub const LATENT_BLOCKS: [&str; 2] = ["mu", "y_imputed"];

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Potential scale reduction factor.
///
/// Chains of unequal length are truncated to the shortest one.
pub fn gelman_rubin<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::TooFewChains {
            needed: 2,
            found: chains.len(),
        });
    }
    let n = chains.iter().map(|c| c.as_ref().len()).min().unwrap_or(0);
    if n < MIN_RHAT_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_RHAT_DRAWS,
            found: n,
        });
    }
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c.as_ref()[..n]).collect();
    let means: Vec<f64> = trimmed.iter().map(|c| mean(c)).collect();
    let w = mean(&trimmed.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b = n as f64 * variance(&means);
    let nf = n as f64;
    let v_hat = (nf - 1.0) / nf * w + b / nf;
    if w > 0.0 {
        Ok((v_hat / w).sqrt())
    } else if b > 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0)
    }
}

/// Batch-means standard error of the mean, with `floor(sqrt(n))` batches.
pub fn mc_error(draws: &[f64]) -> Result<f64> {
    let n = draws.len();
    if n < MIN_MC_ERROR_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_MC_ERROR_DRAWS,
            found: n,
        });
    }
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let skip = n - batches * size;
    let batch_means: Vec<f64> = draws[skip..].chunks_exact(size).map(mean).collect();
    Ok((variance(&batch_means) / batches as f64).sqrt())
}

/// MC error of the mean pooled over chains.
fn pooled_mc_error(chains: &[&[f64]]) -> Result<f64> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut acc = 0.0;
    for c in chains {
        let se = mc_error(c)?;
        acc += (se * c.len() as f64).powi(2);
    }
    Ok(acc.sqrt() / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub mean_deviance: f64,
    pub plugin_deviance: f64,
    pub p_d: f64,
    pub dic: f64,
}

/// DIC from per-draw deviances and the deviance at the posterior mean.
pub fn dic(deviances: &[f64], plugin_deviance: f64) -> Result<DicReport> {
    if deviances.is_empty()
        || !plugin_deviance.is_finite()
        || deviances.iter().any(|d| !d.is_finite())
    {
        return Err(Error::NonFiniteDeviance);
    }
    let mean_deviance = mean(deviances);
    let p_d = mean_deviance - plugin_deviance;
    Ok(DicReport {
        mean_deviance,
        plugin_deviance,
        p_d,
        dic: mean_deviance + p_d,
    })
}

/// Poisson deviance `-2 log L` of `outcome` with rates `expected * exp(eta)`.
pub fn poisson_deviance(outcome: &[u64], expected: f64, eta: &[f64]) -> f64 {
    let ln_e = expected.ln();
    -2.0 * outcome
        .iter()
        .zip(eta)
        .map(|(&o, &h)| o as f64 * (h + ln_e) - expected * h.exp() - ln_factorial(o))
        .sum::<f64>()
}

/// DIC of a fit, plugging in the posterior mean of the log relative risk.
pub fn dic_from_chains(chains: &[ChainDraws], data: &ModelData) -> Result<DicReport> {
    let deviances = pooled(chains, "deviance", 0);
    let first = chains.first().ok_or(Error::TooFewChains {
        needed: 1,
        found: 0,
    })?;
    let days = &first.health_days;
    let total: usize = chains.iter().map(ChainDraws::n_draws).sum();
    let mut eta = vec![0.0; days.len()];
    for c in chains {
        let w = c.n_draws() as f64 / total as f64;
        for (e, m) in eta.iter_mut().zip(&c.eta_mean) {
            *e += w * m;
        }
    }
    let outcome: Vec<u64> = days.iter().map(|&t| data.outcome[t]).collect();
    dic(&deviances, poisson_deviance(&outcome, data.expected, &eta))
}

/// Draws of one column, chain by chain.
pub fn column_chains(chains: &[ChainDraws], block: &str, column: usize) -> Vec<Vec<f64>> {
    chains
        .iter()
        .filter_map(|c| c.block(block))
        .map(|b| b.column(column))
        .collect()
}

/// Draws of one column pooled across chains.
pub fn pooled(chains: &[ChainDraws], block: &str, column: usize) -> Vec<f64> {
    column_chains(chains, block, column).concat()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub block: String,
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub mc_error: Option<f64>,
    pub rhat: Option<f64>,
}

impl ParameterSummary {
    fn from_chains(block: &str, name: &str, chains: &[Vec<f64>]) -> Self {
        let all: Vec<f64> = chains.concat();
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        let slices: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        Self {
            block: block.to_string(),
            name: name.to_string(),
            mean: mean(&all),
            sd: if all.len() > 1 { variance(&all).sqrt() } else { 0.0 },
            q025: quantile_sorted(&sorted, 0.025),
            q50: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
            mc_error: pooled_mc_error(&slices).ok(),
            rhat: gelman_rubin(&slices).ok(),
        }
    }

    /// True when the parameter passes both convergence rules it can be
    /// checked against.
    pub fn converged(&self) -> bool {
        let rhat_ok = self.rhat.is_none_or(|r| r <= RHAT_THRESHOLD);
        let mc_ok = self.mc_error.is_none_or(|e| e <= MC_ERROR_FRACTION * self.sd);
        rhat_ok && mc_ok
    }
}

/// Percent increase in risk per IQR for one pollutant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentIncrease {
    pub pollutant: String,
    pub iqr: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Summarize per-draw values of `(exp(beta * iqr) - 1) * 100`.
pub fn percent_increase_summary(pollutant: &str, beta_draws: &[f64], iqr: f64) -> PercentIncrease {
    let mut pct: Vec<f64> = beta_draws.iter().map(|&b| percent_increase(b, iqr)).collect();
    let m = mean(&pct);
    pct.sort_by(f64::total_cmp);
    PercentIncrease {
        pollutant: pollutant.to_string(),
        iqr,
        mean: m,
        lower: quantile_sorted(&pct, 0.025),
        upper: quantile_sorted(&pct, 0.975),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
    pub percent_increase: Vec<PercentIncrease>,
    pub warnings: Vec<String>,
}

/// Pool draws across chains and summarize every recorded parameter.
///
/// `iqr` holds the interquartile range of each pollutant in original units.
/// Convergence problems become warnings rather than errors.
pub fn summarize(chains: &[ChainDraws], scaling: &ScalingParams, iqr: &[f64]) -> PosteriorSummary {
    let mut parameters = Vec::new();
    if let Some(first) = chains.first() {
        for block in &first.blocks {
            if LATENT_BLOCKS.contains(&block.name.as_str()) {
                continue;
            }
            for (j, col) in block.columns.iter().enumerate() {
                let per_chain = column_chains(chains, &block.name, j);
                if per_chain.iter().all(Vec::is_empty) {
                    continue;
                }
                parameters.push(ParameterSummary::from_chains(&block.name, col, &per_chain));
            }
        }
    }
    let mut warnings = Vec::new();
    for p in &parameters {
        if let Some(r) = p.rhat.filter(|&r| r > RHAT_THRESHOLD) {
            warnings.push(format!("{}:{} has R-hat {r:.3}", p.block, p.name));
        }
        if let Some(e) = p.mc_error.filter(|&e| e > MC_ERROR_FRACTION * p.sd) {
            warnings.push(format!(
                "{}:{} has MC error {e:.3e} above {:.0}% of its sd",
                p.block,
                p.name,
                MC_ERROR_FRACTION * 100.0
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let percent_increase = scaling
        .names
        .iter()
        .zip(iqr)
        .enumerate()
        .map(|(j, (name, &q))| percent_increase_summary(name, &pooled(chains, "beta", j), q))
        .collect();
    PosteriorSummary {
        parameters,
        percent_increase,
        warnings,
    }
}

const VARIANCE_BLOCKS: [&str; 4] = ["sigma", "innovation_cov", "smooth_variance", "sigma_eps"];

impl PosteriorSummary {
    pub fn parameter(&self, block: &str, name: &str) -> Option<&ParameterSummary> {
        self.parameters
            .iter()
            .find(|p| p.block == block && p.name == name)
    }

    /// Percent increase per IQR: one row per pollutant.
    pub fn effects_csv(&self) -> String {
        let mut s = String::from("pollutant,iqr,percent_increase,ci_lower,ci_upper\n");
        for r in &self.percent_increase {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{:.4},{:.4}",
                r.pollutant, r.iqr, r.mean, r.lower, r.upper
            );
        }
        s
    }

    /// Variance components with posterior mean and 95% interval.
    pub fn variance_csv(&self) -> String {
        let mut s = String::from("block,parameter,mean,ci_lower,ci_upper\n");
        for p in self
            .parameters
            .iter()
            .filter(|p| VARIANCE_BLOCKS.contains(&p.block.as_str()))
        {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6}",
                p.block, p.name, p.mean, p.q025, p.q975
            );
        }
        s
    }

    /// Every parameter with its convergence statistics.
    pub fn parameters_csv(&self) -> String {
        let mut s = String::from("block,parameter,mean,sd,q025,q50,q975,mc_error,rhat\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for p in &self.parameters {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                p.block,
                p.name,
                p.mean,
                p.sd,
                p.q025,
                p.q50,
                p.q975,
                opt(p.mc_error),
                opt(p.rhat)
            );
        }
        s
    }
}

/// One row of a convergence report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub parameter: String,
    pub rhat: f64,
    pub mc_error: f64,
    pub sd: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    pub passed: bool,
}

impl ConvergenceReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConvergenceEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,rhat,mc_error,sd,passed\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6e},{:.6e},{}",
                e.parameter, e.rhat, e.mc_error, e.sd, e.passed
            );
        }
        s
    }
}

/// Strict convergence check of every non-latent parameter.
///
/// Unlike [`summarize`], too few chains or draws is an error.
pub fn convergence_report(chains: &[ChainDraws]) -> Result<ConvergenceReport> {
    if chains.len() < 2 {
        return Err(Error::TooFewChains {
            needed: 2,
            found: chains.len(),
        });
    }
    let mut entries = Vec::new();
    for block in &chains[0].blocks {
        if LATENT_BLOCKS.contains(&block.name.as_str()) || block.name == "log_posterior" {
            continue;
        }
        for (j, col) in block.columns.iter().enumerate() {
            let per_chain = column_chains(chains, &block.name, j);
            let slices: Vec<&[f64]> = per_chain.iter().map(Vec::as_slice).collect();
            let rhat = gelman_rubin(&slices)?;
            let mc = pooled_mc_error(&slices)?;
            let all = per_chain.concat();
            let sd = variance(&all).sqrt();
            let rhat_ok = rhat <= RHAT_THRESHOLD || (sd == 0.0 && rhat.is_finite());
            entries.push(ConvergenceEntry {
                parameter: format!("{}:{col}", block.name),
                rhat,
                mc_error: mc,
                sd,
                passed: rhat_ok && mc <= MC_ERROR_FRACTION * sd,
            });
        }
    }
    let passed = entries.iter().all(|e| e.passed);
    Ok(ConvergenceReport { entries, passed })
}
