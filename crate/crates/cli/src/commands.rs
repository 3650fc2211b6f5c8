//! The four subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use h2m_core::dataset::{self, TimeSeriesDataset};
use h2m_core::diagnostics::{self, ConvergenceReport};
use h2m_core::mcmc::{self, ChainDraws, ModelData};
use h2m_core::simulation::{self, ReplicateOutcome, StudyMetrics};
use h2m_core::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::config::FileConfig;
use crate::manifest::{create_dir, read_json, write_json, write_text, RunManifest};

/// Fit the configured model to a dataset and write draws and summaries.
pub fn fit(config: &FileConfig, data_path: &Path, out: &Path) -> Result<RunManifest> {
    let model = config.model_config();
    model.validate()?;
    let mut manifest = RunManifest::new("fit", config, model.seed);
    let bytes = fs::read(data_path).map_err(|e| Error::Io {
        path: data_path.to_path_buf(),
        source: e,
    })?;
    manifest.data_hash = Some(dataset::content_hash(&bytes));
    let ds = manifest.time("load", || dataset::parse_dataset(&bytes, &config.data.schema()))?;
    create_dir(out)?;
    write_text(&out.join("descriptives.csv"), &dataset::descriptives(&ds).to_csv())?;

    let mut fits = Vec::new();
    if config.data.single_pollutant {
        for (j, name) in ds.pollutant_names.iter().enumerate() {
            let sub = ds.select_pollutants(&[j])?;
            let dir = out.join(name);
            let dic = fit_one(config, &sub, &dir, &mut manifest)?;
            fits.push(json!({ "pollutant": name, "dir": name, "dic": dic.dic }));
        }
    } else {
        let dic = fit_one(config, &ds, out, &mut manifest)?;
        fits.push(json!({ "dir": ".", "dic": dic.dic }));
    }
    manifest.status = "ok".into();
    manifest.details = json!({ "fits": fits });
    manifest.write(out)?;
    Ok(manifest)
}

fn fit_one(
    config: &FileConfig,
    ds: &TimeSeriesDataset,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<diagnostics::DicReport> {
    let model = config.model_config();
    create_dir(out)?;
    let data = ModelData::from_dataset(ds, &model)?;
    log::info!(
        "fitting {} to {} days of {}",
        model.variant,
        data.n_days(),
        data.pollutant_names.join(", ")
    );
    let chains = manifest.time("sample", || mcmc::run_model(&model, &data))?;
    manifest.time("write", || -> Result<()> {
        let draws = out.join("draws");
        for c in &chains {
            c.write_dir(&draws, config.mcmc.format)?;
        }
        Ok(())
    })?;
    let summary = diagnostics::summarize(&chains, &data.scaling, &data.iqr);
    write_json(&out.join("summary.json"), &summary)?;
    write_text(&out.join("effects.csv"), &summary.effects_csv())?;
    write_text(&out.join("variance.csv"), &summary.variance_csv())?;
    write_text(&out.join("parameters.csv"), &summary.parameters_csv())?;
    let dic = diagnostics::dic_from_chains(&chains, &data)?;
    write_json(&out.join("dic.json"), &dic)?;
    if let Some(text) = latent_csv(&chains, ds) {
        write_text(&out.join("latent.csv"), &text)?;
    }
    Ok(dic)
}

/// Posterior mean and sd of each latent concentration, pooled over chains.
fn latent_csv(chains: &[ChainDraws], ds: &TimeSeriesDataset) -> Option<String> {
    let first = chains.first()?;
    if first.latent_mean.is_empty() {
        return None;
    }
    let t_len = first.n_days;
    let k = chains.len() as f64;
    let mut s = String::from("date,pollutant,mean,sd\n");
    for (p, name) in ds.pollutant_names.iter().enumerate() {
        for t in 0..t_len {
            let i = p * t_len + t;
            let m = chains.iter().map(|c| c.latent_mean[i]).sum::<f64>() / k;
            // Pooled variance: within-chain variance plus spread of chain means.
            let v = chains
                .iter()
                .map(|c| c.latent_sd[i].powi(2) + (c.latent_mean[i] - m).powi(2))
                .sum::<f64>()
                / k;
            let _ = writeln!(s, "{},{name},{m:.6},{:.6}", ds.dates[t], v.sqrt());
        }
    }
    Some(s)
}

const SIMULATED_FILES: [&str; 3] = ["data.csv", "latent.csv", "truth.json"];

/// Simulate one dataset and write it with its generating truth.
pub fn simulate(config: &FileConfig, out: &Path) -> Result<RunManifest> {
    let sim_cfg = &config.simulation;
    sim_cfg.validate()?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("simulate", config, sim_cfg.seed);
    match manifest.time("simulate", || simulation::simulate_dataset(sim_cfg, sim_cfg.seed)) {
        Ok(sim) => {
            sim.to_dataset()?.write_csv(&out.join("data.csv"))?;
            let mut latent = String::from("date");
            for n in &sim.pollutant_names {
                let _ = write!(latent, ",{n}");
            }
            latent.push('\n');
            let ds = sim.to_dataset()?;
            for t in 0..sim.n_days() {
                let _ = write!(latent, "{}", ds.dates[t]);
                for p in 0..sim.pollutant_names.len() {
                    let _ = write!(latent, ",{}", sim.latent[(t, p)]);
                }
                latent.push('\n');
            }
            write_text(&out.join("latent.csv"), &latent)?;
            write_json(
                &out.join("truth.json"),
                &json!({ "seed": sim.seed, "simulation": sim_cfg }),
            )?;
            manifest.status = "ok".into();
            manifest.write(out)?;
            Ok(manifest)
        }
        Err(e) => {
            for f in SIMULATED_FILES {
                let _ = fs::remove_file(out.join(f));
            }
            manifest.status = "failed".into();
            manifest.details = json!({ "error": { "code": e.code(), "message": e.to_string() } });
            manifest.write(out)?;
            Err(e)
        }
    }
}

fn replicate_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("replicate_{r:04}.json"))
}

/// Run the replicated study, skipping replicates already stored in `out`.
pub fn study(config: &FileConfig, out: &Path) -> Result<(RunManifest, StudyMetrics)> {
    let study = config.study_config();
    study.validate()?;
    create_dir(out)?;
    let config_path = out.join("study_config.json");
    if config_path.exists() {
        let previous: FileConfig = read_json(&config_path)?;
        if previous.study_config() != study {
            return Err(Error::InvalidConfig(format!(
                "{} holds results of a different study; use a fresh output directory",
                out.display()
            )));
        }
    } else {
        write_json(&config_path, config)?;
    }
    let rep_dir = out.join("replicates");
    create_dir(&rep_dir)?;

    let mut manifest = RunManifest::new("study", config, study.simulation.seed);
    let n = study.simulation.replicates;
    let mut done: Vec<Option<ReplicateOutcome>> = (0..n)
        .map(|r| read_json(&replicate_path(&rep_dir, r)).ok())
        .collect();
    let skipped = done.iter().filter(|d| d.is_some()).count();
    if skipped > 0 {
        log::info!("resuming: {skipped} of {n} replicates already complete");
    }
    let pending: Vec<usize> = (0..n).filter(|&r| done[r].is_none()).collect();
    let write_lock = Mutex::new(());
    let fresh: Vec<Result<ReplicateOutcome>> = manifest.time("replicates", || {
        pending
            .par_iter()
            .map(|&r| {
                let outcome = simulation::run_replicate(&study, r);
                let _guard = write_lock.lock().expect("writer lock");
                write_json(&replicate_path(&rep_dir, r), &outcome)?;
                log::info!("replicate {r} done");
                Ok(outcome)
            })
            .collect()
    });
    for res in fresh {
        let o = res?;
        let r = o.replicate;
        done[r] = Some(o);
    }
    let outcomes: Vec<ReplicateOutcome> = done.into_iter().flatten().collect();
    let metrics = simulation::aggregate(&study, &outcomes);
    write_text(&out.join("metrics.csv"), &metrics.to_csv())?;
    write_json(&out.join("metrics.json"), &metrics)?;
    manifest.status = "ok".into();
    manifest.details = json!({
        "replicates": n,
        "resumed": skipped,
        "replicate_seeds": (0..n).map(|r| study.replicate_seed(r)).collect::<Vec<_>>(),
        "completed": metrics.completed,
        "failures": metrics.failures,
    });
    manifest.write(out)?;
    Ok((manifest, metrics))
}

/// Read stored draws and apply the convergence rule to every parameter.
pub fn diagnose(dir: &Path) -> Result<ConvergenceReport> {
    let draws = if dir.join("draws").is_dir() {
        dir.join("draws")
    } else {
        dir.to_path_buf()
    };
    let chains = ChainDraws::read_dir(&draws)?;
    diagnostics::convergence_report(&chains)
}
