use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chain_stream, derive_seed, fit_setting, simulate_replicate, write_report, Fitted, RunConfig};
use crate::error::{FusionError, Result};
use crate::evaluation::{
    beta_metrics, in_sample_rps, out_sample_rps, true_categories, CoefficientInterval, EvalReport, RpsSet,
    SettingReport,
};
use crate::io::write_json;

/// Results of one setting in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingOutcome {
    pub label: String,
    pub intervals: Vec<CoefficientInterval>,
    pub in_sample_rps: Option<Vec<f64>>,
    pub out_sample_rps: Option<Vec<f64>>,
    pub survivors: usize,
}

/// Results of every setting in one replicate, as checkpointed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    /// One-based replicate number.
    pub replicate: usize,
    pub settings: Vec<SettingOutcome>,
}

/// Parts of the configuration a checkpoint must agree with to be reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StudyFingerprint {
    mcmc: crate::mcmc::McmcConfig,
    sim: crate::simulator::SimConfig,
    prior: super::PriorOverrides,
    settings: Vec<String>,
}

fn fingerprint(cfg: &RunConfig) -> StudyFingerprint {
    StudyFingerprint {
        mcmc: cfg.mcmc.clone(),
        sim: cfg.sim_config(),
        prior: cfg.prior.clone(),
        settings: cfg.study.settings.iter().map(|s| s.label()).collect(),
    }
}

fn checkpoint_path(dir: &Path, replicate: usize) -> PathBuf {
    dir.join(format!("replicate_{replicate:04}.json"))
}

/// Simulates, fits and scores every configured setting for replicate
/// `replicate` (zero-based).
pub fn run_replicate(cfg: &RunConfig, replicate: usize) -> Result<ReplicateResult> {
    let r = replicate as u64;
    let mut settings = Vec::with_capacity(cfg.study.settings.len());
    for (k, spec) in cfg.study.settings.iter().enumerate() {
        let sim = simulate_replicate(cfg, r, spec.annotated_fraction)?;
        let mut mcmc = cfg.mcmc.clone();
        mcmc.seed = derive_seed(cfg.mcmc.seed, r, chain_stream(k));
        let fit = fit_setting(&sim.train, spec, &cfg.prior, &mcmc)?;
        let intervals = fit.fitted.intervals()?;
        let (in_rps, out_rps) = match &fit.fitted {
            Fitted::Model(chain) => {
                let in_rps = match chain.y_marginals {
                    Some(_) => Some(in_sample_rps(chain, &true_categories(&sim.train, &chain.sequence_ids)?)?),
                    None => None,
                };
                let ids: Vec<String> = sim.test.sequences.iter().map(|s| s.id.clone()).collect();
                let truth = true_categories(&sim.test, &ids)?;
                (in_rps, Some(out_sample_rps(chain, &sim.test.design(), &truth)?))
            }
            Fitted::Linear(_) => (None, None),
        };
        settings.push(SettingOutcome {
            label: spec.label(),
            intervals,
            in_sample_rps: in_rps,
            out_sample_rps: out_rps,
            survivors: fit.survivors,
        });
    }
    Ok(ReplicateResult {
        replicate: replicate + 1,
        settings,
    })
}

/// Runs or resumes a replicate study. Each finished replicate is
/// checkpointed under `out/checkpoints`; rerunning with the same
/// configuration skips replicates already there.
pub fn run_study(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ckpt = out.join("checkpoints");
    let fp_path = ckpt.join("study.json");
    let fp = fingerprint(cfg);
    if fp_path.exists() {
        let text = std::fs::read_to_string(&fp_path).map_err(|e| FusionError::io(&fp_path, e))?;
        let old: StudyFingerprint = serde_json::from_str(&text)?;
        if old != fp {
            return Err(FusionError::Config(format!(
                "{} holds checkpoints of a different study; remove it or choose another output",
                ckpt.display()
            )));
        }
    } else {
        write_json(&fp_path, &fp)?;
    }

    let results: Vec<Result<ReplicateResult>> = (0..cfg.study.replicates)
        .into_par_iter()
        .map(|r| {
            let path = checkpoint_path(&ckpt, r + 1);
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| FusionError::io(&path, e))?;
                return Ok(serde_json::from_str(&text)?);
            }
            let res = run_replicate(cfg, r).map_err(|e| FusionError::Replicate {
                replicate: r + 1,
                checkpoint: ckpt.clone(),
                source: Box::new(e),
            })?;
            write_json(&path, &res)?;
            Ok(res)
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = aggregate(cfg, &results)?;
    let mut files = write_report(&report, out, cfg.study.write_sequence_rps)?;
    files.push(fp_path);
    Ok(files)
}

/// Combines replicate results into a report, one entry per setting in
/// configuration order.
pub fn aggregate(cfg: &RunConfig, results: &[ReplicateResult]) -> Result<EvalReport> {
    let beta_true = cfg.sim_config().beta_true;
    let mut settings = Vec::new();
    for (k, spec) in cfg.study.settings.iter().enumerate() {
        let outcomes: Vec<&SettingOutcome> = results.iter().map(|r| &r.settings[k]).collect();
        let intervals: Vec<Vec<CoefficientInterval>> = outcomes.iter().map(|o| o.intervals.clone()).collect();
        let metrics = beta_metrics(&intervals, &beta_true)?;
        let gather = |f: fn(&SettingOutcome) -> &Option<Vec<f64>>| -> Option<RpsSet> {
            let rows: Option<Vec<Vec<f64>>> = outcomes.iter().map(|o| f(o).clone()).collect();
            rows.and_then(RpsSet::from_replicates)
        };
        settings.push(SettingReport {
            setting: spec.label(),
            replicates: outcomes.len(),
            in_sample_rps: gather(|o| &o.in_sample_rps),
            out_sample_rps: gather(|o| &o.out_sample_rps),
            relative_out_sample_rps: None,
            beta_mse: metrics.mse,
            beta_coverage: metrics.coverage,
            beta_detection: metrics.detection,
            survivor_counts: outcomes.iter().map(|o| o.survivors).collect(),
        });
    }
    let mut report = EvalReport {
        beta_true,
        reference_setting: None,
        settings,
    };
    if report
        .setting(&cfg.study.reference)
        .is_some_and(|s| s.out_sample_rps.is_some())
    {
        report.set_reference(&cfg.study.reference.clone())?;
    }
    Ok(report)
}
