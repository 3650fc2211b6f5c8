use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::config::{ModelConfig, Variant};
use crate::mcmc::data::ModelData;
use crate::mcmc::draws::{ChainDraws, DrawBlock};
use crate::mcmc::exposure::{ExposureModel, ExposureState, MEAN_TERM_NAMES};
use crate::mcmc::kernels::{self, AdaptiveScale, BLOCK_TARGET, SCALAR_TARGET};
use crate::mcmc::response::{HealthModel, HealthState};
use crate::pollutant::impute_missing;
use crate::rng::SeedTree;

/// Seed path of chain `chain` under `master`.
pub fn chain_tree(master: u64, chain: usize) -> SeedTree {
    SeedTree::new(master).child("chain").child(chain)
}

/// Run one chain of the configured variant.
pub fn run_chain(config: &ModelConfig, data: &ModelData, chain: usize) -> Result<ChainDraws> {
    run_chain_with_tree(config, data, chain, &chain_tree(config.seed, chain))
}

pub fn run_chain_with_tree(
    config: &ModelConfig,
    data: &ModelData,
    chain: usize,
    tree: &SeedTree,
) -> Result<ChainDraws> {
    config.validate()?;
    log::debug!("chain {chain}: {} on {} days", config.variant, data.n_days());
    match config.variant {
        Variant::Me => run_me(config, data, chain, tree),
        Variant::H2m => run_cut(config, data, chain, tree),
        Variant::H2mJoint => run_joint(config, data, chain, tree),
    }
}

/// Run every chain, in parallel when a thread pool is available. The output
/// does not depend on scheduling.
pub fn run_model(config: &ModelConfig, data: &ModelData) -> Result<Vec<ChainDraws>> {
    config.validate()?;
    (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(config, data, c))
        .collect()
}

pub fn run_model_serial(config: &ModelConfig, data: &ModelData) -> Result<Vec<ChainDraws>> {
    config.validate()?;
    (0..config.chains).map(|c| run_chain(config, data, c)).collect()
}

/// Burn-in adaptation, freezing and thinning.
struct Schedule {
    burn_in: usize,
    thin: usize,
    window: usize,
    total: usize,
}

impl Schedule {
    fn new(config: &ModelConfig) -> Self {
        Self {
            burn_in: config.burn_in,
            thin: config.thin,
            window: config.adapt_window,
            total: config.total_iterations(),
        }
    }

    /// Advance bookkeeping after iteration `iter`; true when the state
    /// should be recorded.
    fn after(&self, iter: usize, scales: &mut Scales) -> bool {
        if iter < self.burn_in {
            if (iter + 1) % self.window == 0 {
                scales.end_window();
            }
            if iter + 1 == self.burn_in {
                scales.freeze();
            }
            false
        } else {
            (iter - self.burn_in + 1) % self.thin == 0
        }
    }
}

struct Scales {
    theta: AdaptiveScale,
    gamma: AdaptiveScale,
    sigma: Vec<AdaptiveScale>,
    coefficients: AdaptiveScale,
    eps: AdaptiveScale,
    sigma_eps: AdaptiveScale,
}

impl Scales {
    fn new(p: usize, burn_in: usize) -> Self {
        let mut s = Self {
            theta: AdaptiveScale::new(1.0, BLOCK_TARGET).with_cap(1.0),
            gamma: AdaptiveScale::new(1.0, BLOCK_TARGET).with_cap(1.0),
            sigma: vec![AdaptiveScale::new(0.1, SCALAR_TARGET); p],
            coefficients: AdaptiveScale::new(1.0, BLOCK_TARGET),
            eps: AdaptiveScale::new(0.1, SCALAR_TARGET),
            sigma_eps: AdaptiveScale::new(0.1, SCALAR_TARGET),
        };
        if burn_in == 0 {
            s.freeze();
        }
        s
    }

    fn all(&mut self) -> impl Iterator<Item = &mut AdaptiveScale> {
        [
            &mut self.theta,
            &mut self.gamma,
            &mut self.coefficients,
            &mut self.eps,
            &mut self.sigma_eps,
        ]
        .into_iter()
        .chain(self.sigma.iter_mut())
    }

    fn end_window(&mut self) {
        // The coefficient proposal has no free scale; only its counts matter.
        let keep = self.coefficients.scale;
        self.all().for_each(AdaptiveScale::end_window);
        self.coefficients.scale = keep;
    }

    fn freeze(&mut self) {
        self.all().for_each(AdaptiveScale::freeze);
    }

    fn report(&self, names: &[String]) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let mut put = |k: String, a: &AdaptiveScale| {
            if let Some(r) = a.acceptance() {
                out.insert(k, r);
            }
        };
        put("theta".into(), &self.theta);
        put("gamma".into(), &self.gamma);
        put("coefficients".into(), &self.coefficients);
        put("epsilon".into(), &self.eps);
        put("sigma_eps".into(), &self.sigma_eps);
        for (n, a) in names.iter().zip(&self.sigma) {
            put(format!("sigma[{n}]"), a);
        }
        out
    }
}

fn check_finite(lp: f64, iter: usize) -> Result<()> {
    if lp.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLogPosterior(iter))
    }
}

fn single(name: &str) -> DrawBlock {
    DrawBlock::new(name, vec![name.to_string()])
}

struct HealthRecorder {
    beta0: DrawBlock,
    beta: DrawBlock,
    delta: Option<DrawBlock>,
    smooths: Vec<DrawBlock>,
    smooth_variance: Option<DrawBlock>,
    sigma_eps: Option<DrawBlock>,
    deviance: DrawBlock,
    log_posterior: DrawBlock,
    eta_sum: DVector<f64>,
    n: usize,
}

impl HealthRecorder {
    fn new(model: &HealthModel) -> Self {
        let data = model.data;
        let smooths = data
            .smooths
            .iter()
            .map(|s| {
                let mut cols = vec!["alpha".to_string()];
                cols.extend((1..=s.basis.n_knots()).map(|k| format!("b{k}")));
                DrawBlock::new(format!("smooth_{}", s.name), cols)
            })
            .collect();
        Self {
            beta0: single("beta0"),
            beta: DrawBlock::new("beta", data.pollutant_names.clone()),
            delta: model.layout.holiday.map(|_| single("delta")),
            smooths,
            smooth_variance: (!data.smooths.is_empty()).then(|| {
                DrawBlock::new("smooth_variance", data.smooths.iter().map(|s| s.name.clone()).collect())
            }),
            sigma_eps: model.overdispersion.then(|| single("sigma_eps")),
            deviance: single("deviance"),
            log_posterior: single("log_posterior"),
            eta_sum: DVector::zeros(model.days.len()),
            n: 0,
        }
    }

    fn push(&mut self, model: &HealthModel, st: &HealthState, eta: &DVector<f64>, log_post: f64) {
        let (b0, beta) = model.original_effects(&st.phi);
        self.beta0.push_row(&[b0]);
        self.beta.push_row(&beta);
        if let (Some(block), Some(h)) = (&mut self.delta, model.layout.holiday) {
            block.push_row(&[st.phi[h]]);
        }
        for (block, &(start, k)) in self.smooths.iter_mut().zip(&model.layout.smooths) {
            block.push_row(st.phi.rows(start, k + 1).as_slice());
        }
        if let Some(block) = &mut self.smooth_variance {
            block.push_row(&st.smooth_var);
        }
        if let Some(block) = &mut self.sigma_eps {
            block.push_row(&[st.sigma_eps]);
        }
        self.deviance.push_row(&[model.deviance(eta)]);
        self.log_posterior.push_row(&[log_post]);
        self.eta_sum += eta;
        self.n += 1;
    }

    /// Blocks in reporting order, the log-posterior block kept apart.
    fn finish(self) -> (Vec<DrawBlock>, DrawBlock, DrawBlock, Vec<f64>) {
        let mut blocks = vec![self.beta0, self.beta];
        blocks.extend(self.delta);
        blocks.extend(self.smooths);
        blocks.extend(self.smooth_variance);
        blocks.extend(self.sigma_eps);
        let eta_mean = (self.eta_sum / self.n.max(1) as f64).iter().copied().collect();
        (blocks, self.deviance, self.log_posterior, eta_mean)
    }
}

struct ExposureRecorder {
    gamma: Option<DrawBlock>,
    sigma: DrawBlock,
    cov: DrawBlock,
    mu: Option<DrawBlock>,
    y_imputed: Option<DrawBlock>,
    every: usize,
    count: usize,
    mean: DMatrix<f64>,
    m2: DMatrix<f64>,
    n: usize,
}

impl ExposureRecorder {
    fn new(model: &ExposureModel, config: &ModelConfig) -> Self {
        let data = model.data;
        let names = &data.pollutant_names;
        let (t, p) = (data.n_days(), data.n_pollutants());
        let gamma = model.samples_gamma().then(|| {
            let q = data.n_mean_terms();
            let cols = names
                .iter()
                .flat_map(|n| MEAN_TERM_NAMES[..q].iter().map(move |term| format!("{n}:{term}")))
                .collect();
            DrawBlock::new("gamma", cols)
        });
        let mut cov_cols = Vec::new();
        for i in 0..p {
            for j in 0..=i {
                cov_cols.push(format!("{}:{}", names[i], names[j]));
            }
        }
        let every = config.store_latent_every;
        let cell_cols = |pred: &dyn Fn(usize, usize) -> bool| {
            let mut cols = Vec::new();
            for (j, n) in names.iter().enumerate() {
                for i in 0..t {
                    if pred(i, j) {
                        cols.push(format!("{n}[{i}]"));
                    }
                }
            }
            cols
        };
        let missing_cols = cell_cols(&|i, j| !data.observed[(i, j)]);
        Self {
            gamma,
            sigma: DrawBlock::new("sigma", names.clone()),
            cov: DrawBlock::new("innovation_cov", cov_cols),
            mu: (every > 0).then(|| DrawBlock::new("mu", cell_cols(&|_, _| true))),
            y_imputed: (every > 0 && !missing_cols.is_empty())
                .then(|| DrawBlock::new("y_imputed", missing_cols)),
            every,
            count: 0,
            mean: DMatrix::zeros(t, p),
            m2: DMatrix::zeros(t, p),
            n: 0,
        }
    }

    fn push<R: Rng + ?Sized>(&mut self, model: &ExposureModel, s: &ExposureState, rng: &mut R) {
        let data = model.data;
        let scaling = &data.scaling;
        let (t_len, p_len) = (data.n_days(), data.n_pollutants());
        if let Some(block) = &mut self.gamma {
            let row: Vec<f64> = (0..p_len)
                .flat_map(|p| (0..s.gamma.ncols()).map(move |j| (p, j)))
                .map(|(p, j)| s.gamma[(p, j)])
                .collect();
            block.push_row(&row);
        }
        let sig: Vec<f64> = (0..p_len).map(|p| s.sigma[p] * scaling.sd[p]).collect();
        self.sigma.push_row(&sig);
        let mut cov = Vec::new();
        for i in 0..p_len {
            for j in 0..=i {
                cov.push(s.cov[(i, j)]);
            }
        }
        self.cov.push_row(&cov);

        self.n += 1;
        let n = self.n as f64;
        for p in 0..p_len {
            for t in 0..t_len {
                let v = scaling.to_original(p, s.mu[(t, p)]);
                let d = v - self.mean[(t, p)];
                self.mean[(t, p)] += d / n;
                self.m2[(t, p)] += d * (v - self.mean[(t, p)]);
            }
        }

        self.count += 1;
        if self.every > 0 && self.count % self.every == 0 {
            if let Some(block) = &mut self.mu {
                let mut row = Vec::with_capacity(t_len * p_len);
                for p in 0..p_len {
                    for t in 0..t_len {
                        row.push(scaling.to_original(p, s.mu[(t, p)]));
                    }
                }
                block.push_row(&row);
            }
            if let Some(block) = &mut self.y_imputed {
                let mut row = Vec::new();
                for p in 0..p_len {
                    for t in 0..t_len {
                        if !data.observed[(t, p)] {
                            let z = impute_missing(s.mu[(t, p)], s.sigma[p], rng);
                            row.push(scaling.to_original(p, z));
                        }
                    }
                }
                block.push_row(&row);
            }
        }
    }

    fn finish(self) -> (Vec<DrawBlock>, Vec<DrawBlock>, Vec<f64>, Vec<f64>) {
        let mut blocks = Vec::new();
        blocks.extend(self.gamma);
        blocks.push(self.sigma);
        blocks.push(self.cov);
        let mut latent = Vec::new();
        latent.extend(self.mu);
        latent.extend(self.y_imputed);
        let denom = (self.n.max(2) - 1) as f64;
        let sd = self.m2.map(|v| (v / denom).sqrt());
        (
            blocks,
            latent,
            self.mean.as_slice().to_vec(),
            sd.as_slice().to_vec(),
        )
    }
}

fn health_sweep<R: Rng + ?Sized>(
    model: &HealthModel,
    x: &DMatrix<f64>,
    st: &mut HealthState,
    scales: &mut Scales,
    rng: &mut R,
) -> Result<()> {
    let accepted = model.update_coefficients(x, st, rng)?;
    scales.coefficients.record(accepted);
    model.update_smooth_var(st, rng)?;
    if model.overdispersion {
        let base = x * &st.phi;
        model.update_eps(&base, st, &mut scales.eps, rng);
        model.update_sigma_eps(st, &mut scales.sigma_eps, rng);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    config: &ModelConfig,
    chain: usize,
    tree: &SeedTree,
    health: HealthRecorder,
    exposure: Option<ExposureRecorder>,
    scales: &Scales,
    health_days: Vec<usize>,
    n_days: usize,
    names: &[String],
) -> ChainDraws {
    let (mut blocks, deviance, log_posterior, eta_mean) = health.finish();
    let mut latent_blocks = Vec::new();
    let (mut latent_mean, mut latent_sd) = (Vec::new(), Vec::new());
    if let Some(e) = exposure {
        let (b, l, m, s) = e.finish();
        blocks.extend(b);
        latent_blocks = l;
        latent_mean = m;
        latent_sd = s;
    }
    blocks.push(deviance);
    blocks.push(log_posterior);
    blocks.extend(latent_blocks);
    ChainDraws {
        chain,
        variant: config.variant,
        seed_path: tree.to_string(),
        blocks,
        acceptance: scales.report(names),
        health_days,
        eta_mean,
        latent_mean,
        latent_sd,
        n_days,
    }
}

fn run_me(config: &ModelConfig, data: &ModelData, chain: usize, tree: &SeedTree) -> Result<ChainDraws> {
    let hm = HealthModel::new(data, config, true)?;
    let mut rng = tree.child("health").stream();
    let mut st = hm.init();
    let mut scales = Scales::new(data.n_pollutants(), config.burn_in);
    let schedule = Schedule::new(config);
    let mut rec = HealthRecorder::new(&hm);
    let x = hm.design(&data.y);
    hm.start_coefficients(&x, &mut st, &mut rng)?;
    for iter in 0..schedule.total {
        health_sweep(&hm, &x, &mut st, &mut scales, &mut rng)?;
        let eta = hm.eta(&x, &st);
        let lp = hm.log_density(&eta, &st);
        check_finite(lp, iter)?;
        if schedule.after(iter, &mut scales) {
            rec.push(&hm, &st, &eta, lp);
        }
    }
    Ok(assemble(
        config,
        chain,
        tree,
        rec,
        None,
        &scales,
        hm.days.clone(),
        data.n_days(),
        &data.pollutant_names,
    ))
}

/// Exposure-only sweep: exact joint latent draw, ridge move, exact mean
/// coefficients, scale and covariance updates.
fn exposure_sweep<R: Rng + ?Sized>(
    em: &ExposureModel,
    s: &mut ExposureState,
    scales: &mut Scales,
    rng: &mut R,
) -> Result<()> {
    em.draw_theta_all(s, rng)?;
    em.ridge_move(s, rng)?;
    em.update_gamma_exact(s, rng)?;
    em.update_sigma(s, &mut scales.sigma, rng);
    em.update_cov(s, rng)
}

/// Stored output of the exposure-only stage.
pub struct ExposureStage {
    /// Standardized latent concentrations, one matrix per kept draw.
    pub mu_draws: Vec<DMatrix<f64>>,
    pub log_density: Vec<f64>,
    blocks: ExposureRecorder,
    scales: Scales,
}

impl ExposureStage {
    pub fn n_draws(&self) -> usize {
        self.mu_draws.len()
    }
}

/// First stage of the cut-feedback fit; it never reads the outcome.
pub fn run_exposure_stage(config: &ModelConfig, data: &ModelData, tree: &SeedTree) -> Result<ExposureStage> {
    config.validate()?;
    let em = ExposureModel::new(data, config)?;
    let mut rng = tree.child("exposure").stream();
    let mut impute_rng = tree.child("impute").stream();
    let mut s = em.init()?;
    let mut scales = Scales::new(data.n_pollutants(), config.burn_in);
    let schedule = Schedule::new(config);
    let mut rec = ExposureRecorder::new(&em, config);
    let mut mu_draws = Vec::with_capacity(config.n_draws());
    let mut log_density = Vec::with_capacity(config.n_draws());
    for iter in 0..schedule.total {
        exposure_sweep(&em, &mut s, &mut scales, &mut rng)?;
        let lp = em.log_density(&s)?;
        check_finite(lp, iter)?;
        if schedule.after(iter, &mut scales) {
            rec.push(&em, &s, &mut impute_rng);
            mu_draws.push(s.mu.clone());
            log_density.push(lp);
        }
    }
    Ok(ExposureStage {
        mu_draws,
        log_density,
        blocks: rec,
        scales,
    })
}

fn run_cut(config: &ModelConfig, data: &ModelData, chain: usize, tree: &SeedTree) -> Result<ChainDraws> {
    let stage = run_exposure_stage(config, data, tree)?;
    let hm = HealthModel::new(data, config, false)?;
    let mut rng = tree.child("health").stream();
    let mut st = hm.init();
    let mut scales = Scales::new(data.n_pollutants(), config.burn_in);
    let schedule = Schedule::new(config);
    let mut rec = HealthRecorder::new(&hm);
    let n = stage.n_draws();
    hm.start_coefficients(&hm.design(&stage.mu_draws[0]), &mut st, &mut rng)?;
    for iter in 0..schedule.total {
        let k = iter % n;
        let x = hm.design(&stage.mu_draws[k]);
        health_sweep(&hm, &x, &mut st, &mut scales, &mut rng)?;
        let eta = hm.eta(&x, &st);
        let lp = hm.log_density(&eta, &st) + stage.log_density[k];
        check_finite(lp, iter)?;
        if schedule.after(iter, &mut scales) {
            rec.push(&hm, &st, &eta, lp);
        }
    }
    let mut merged = stage.scales;
    merged.coefficients = scales.coefficients;
    merged.eps = scales.eps;
    merged.sigma_eps = scales.sigma_eps;
    Ok(assemble(
        config,
        chain,
        tree,
        rec,
        Some(stage.blocks),
        &merged,
        hm.days.clone(),
        data.n_days(),
        &data.pollutant_names,
    ))
}

/// Change in the Poisson log-likelihood when `log lambda` moves by `d` on
/// a day currently at `eta`.
#[inline]
fn poisson_delta(o: f64, expected: f64, eta: f64, d: f64) -> f64 {
    o * d - expected * eta.exp() * d.exp_m1()
}

fn run_joint(config: &ModelConfig, data: &ModelData, chain: usize, tree: &SeedTree) -> Result<ChainDraws> {
    let em = ExposureModel::new(data, config)?;
    let hm = HealthModel::new(data, config, false)?;
    let mut rng = tree.child("joint").stream();
    let mut impute_rng = tree.child("impute").stream();
    let (t_len, p_len) = (data.n_days(), data.n_pollutants());
    let lag = config.lag;
    let mut ex = em.init()?;
    let mut hs = hm.init();
    let mut scales = Scales::new(p_len, config.burn_in);
    let schedule = Schedule::new(config);
    let mut hrec = HealthRecorder::new(&hm);
    let mut erec = ExposureRecorder::new(&em, config);

    let mut slot = vec![usize::MAX; t_len];
    for (i, &t) in hm.days.iter().enumerate() {
        slot[t] = i;
    }
    let outcome: Vec<f64> = data.outcome.iter().map(|&o| o as f64).collect();
    let expected = hm.expected;
    let block_len = config.theta_block_len;

    let mut x = hm.design(&ex.mu);
    hm.start_coefficients(&x, &mut hs, &mut rng)?;
    let mut eta = hm.eta(&x, &hs);

    for iter in 0..schedule.total {
        // Latent residual blocks, offsets alternating between sweeps.
        let offset = if iter % 2 == 1 { block_len / 2 } else { 0 };
        let mut starts = Vec::new();
        if offset > 0 {
            starts.push(0);
        }
        let mut a = offset;
        while a < t_len {
            starts.push(a);
            a += block_len;
        }
        let effects: Vec<f64> = hm.effects(&hs).iter().copied().collect();
        for (k, &a) in starts.iter().enumerate() {
            let b = starts.get(k + 1).copied().unwrap_or(t_len);
            let cond = em.theta_block(&ex, a, b)?;
            let current = em.theta_slice(&ex, a, b);
            let proposal = cond.pcn(&current, scales.theta.scale, &mut rng);
            let mut log_ratio = 0.0;
            let mut deltas = Vec::new();
            for t in (a + lag)..(b + lag).min(t_len) {
                let i = slot[t];
                if i == usize::MAX {
                    continue;
                }
                let src = t - lag - a;
                let d: f64 = (0..p_len)
                    .map(|p| effects[p] * (proposal[src * p_len + p] - current[src * p_len + p]))
                    .sum();
                log_ratio += poisson_delta(outcome[t], expected, eta[i], d);
                deltas.push((i, d));
            }
            let accepted = kernels::accept(&mut rng, log_ratio);
            scales.theta.record(accepted);
            if accepted {
                for t in a..b {
                    for p in 0..p_len {
                        let v = proposal[(t - a) * p_len + p];
                        ex.mu[(t, p)] += v - ex.theta[(t, p)];
                        ex.theta[(t, p)] = v;
                    }
                }
                for (i, d) in deltas {
                    eta[i] += d;
                }
            }
        }

        em.ridge_move(&mut ex, &mut rng)?;

        if em.samples_gamma() {
            let design = &data.mean_design;
            #[allow(clippy::needless_range_loop)]
            for p in 0..p_len {
                let cond = em.gamma_conditional(&ex, p)?;
                let current = ex.gamma.row(p).transpose();
                let proposal = cond.pcn(&current, scales.gamma.scale, &mut rng);
                let step = &proposal - &current;
                let mut log_ratio = 0.0;
                let mut deltas = Vec::with_capacity(hm.days.len());
                for (i, &t) in hm.days.iter().enumerate() {
                    let dmu: f64 = (0..step.len()).map(|j| design[(t - lag, j)] * step[j]).sum();
                    let d = effects[p] * dmu;
                    log_ratio += poisson_delta(outcome[t], expected, eta[i], d);
                    deltas.push(d);
                }
                let accepted = kernels::accept(&mut rng, log_ratio);
                scales.gamma.record(accepted);
                if accepted {
                    ex.gamma.row_mut(p).copy_from(&proposal.transpose());
                    for (i, d) in deltas.into_iter().enumerate() {
                        eta[i] += d;
                    }
                    em.refresh_mu(&mut ex);
                }
            }
        }

        em.update_sigma(&mut ex, &mut scales.sigma, &mut rng);
        em.update_cov(&mut ex, &mut rng)?;

        x = hm.design(&ex.mu);
        health_sweep(&hm, &x, &mut hs, &mut scales, &mut rng)?;
        eta = hm.eta(&x, &hs);

        let lp = em.log_density(&ex)? + hm.log_density(&eta, &hs);
        check_finite(lp, iter)?;
        if schedule.after(iter, &mut scales) {
            hrec.push(&hm, &hs, &eta, lp);
            erec.push(&em, &ex, &mut impute_rng);
        }
    }
    Ok(assemble(
        config,
        chain,
        tree,
        hrec,
        Some(erec),
        &scales,
        hm.days.clone(),
        t_len,
        &data.pollutant_names,
    ))
}
