//! Workflows behind the command-line modes.
//!
//! Every random stream is seeded from `mcmc.seed` with
//! [`derive_seed`]`(master, replicate, stream)`. Stream 0 generates data,
//! stream 1 subsamples images at ingestion, and the chain of the `k`-th
//! configured setting uses stream `2 + k`. Single fits and simulations use
//! replicate 0.

mod config;
mod report;
mod study;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_bayesian_linear, linear_responses, maximum_observed_dataset, LinearChain, LinearPrior};
use crate::error::{FusionError, Result};
use crate::evaluation::{
    coefficient_intervals, in_sample_rps, out_sample_rps, BetaMetrics, CoefficientInterval, EvalReport, RpsSet,
    SettingReport,
};
use crate::io::{
    export_dataset, fmt_f64, ingest, read_covariate_table, read_samples, read_y_marginals, write_acceptance,
    write_chain_summary, write_json, write_linear_samples, write_linear_summary, write_samples, write_trace,
    write_y_marginals, CsvTable, IngestOptions, Standardization,
};
use crate::mcmc::{posterior_predict, run_chain, ChainOutput, McmcConfig};
use crate::model::Dataset;
use crate::simulator::{covariate_pool_standard_normal, generate_dataset, SimOutput};

pub use config::{
    default_study_settings, Mode, PathsConfig, PriorOverrides, RunConfig, Setting, SettingSpec, StudyConfig,
    DEFAULT_INGEST_ZETA, DEFAULT_MAX_IMAGES,
};
pub use report::write_report;
pub use study::{run_study, ReplicateResult, SettingOutcome};

pub const DATA_STREAM: u64 = 0;
pub const INGEST_STREAM: u64 = 1;

/// Stream of the chain fitted for the `k`-th setting.
pub fn chain_stream(k: usize) -> u64 {
    2 + k as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one random stream of one replicate.
pub fn derive_seed(master: u64, replicate: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ stream)
}

/// Simulated training and test data of one replicate.
pub fn simulate_replicate(cfg: &RunConfig, replicate: u64, annotated_fraction: Option<f64>) -> Result<SimOutput> {
    let mut sim = cfg.sim_config();
    if let Some(f) = annotated_fraction {
        sim.annotated_fraction = f;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.mcmc.seed, replicate, DATA_STREAM));
    let pool = covariate_pool_standard_normal(sim.n_covariates(), sim.n_quality(), sim.pool_size, &mut rng);
    generate_dataset(&sim, &pool, &mut rng)
}

/// Output of one fitted setting.
#[derive(Debug, Clone)]
pub enum Fitted {
    Model(ChainOutput),
    Linear(LinearChain),
}

impl Fitted {
    pub fn intervals(&self) -> Result<Vec<CoefficientInterval>> {
        match self {
            Fitted::Model(c) => coefficient_intervals(c),
            Fitted::Linear(c) => coefficient_intervals(c),
        }
    }

    pub fn chain(&self) -> Option<&ChainOutput> {
        match self {
            Fitted::Model(c) => Some(c),
            Fitted::Linear(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SettingFit {
    pub fitted: Fitted,
    /// Sequences the fit used after thresholding.
    pub survivors: usize,
}

/// Fits one setting to `data` with the sampler seeded from `mcmc.seed`.
pub fn fit_setting(data: &Dataset, spec: &SettingSpec, prior: &PriorOverrides, mcmc: &McmcConfig) -> Result<SettingFit> {
    let policy = spec.policy()?;
    match spec.setting {
        Setting::Linear => {
            let policy = policy.expect("validated above");
            let (responses, x) = linear_responses(data, policy);
            let survivors = responses.len();
            let chain = fit_bayesian_linear(&responses, &x, &LinearPrior::default(), mcmc)?;
            Ok(SettingFit {
                fitted: Fitted::Linear(chain),
                survivors,
            })
        }
        Setting::Maximum => {
            let reduced = maximum_observed_dataset(data, policy.expect("validated above"));
            fit_model(&reduced, spec, prior, mcmc)
        }
        _ => fit_model(data, spec, prior, mcmc),
    }
}

fn fit_model(data: &Dataset, spec: &SettingSpec, prior: &PriorOverrides, mcmc: &McmcConfig) -> Result<SettingFit> {
    let variant = spec.setting.variant().expect("model settings have a variant");
    let prior = prior.build(data.categories, data.n_covariates(), data.n_quality(), data.n_annotators())?;
    let chain = run_chain(data, &prior, mcmc, variant)?;
    Ok(SettingFit {
        fitted: Fitted::Model(chain),
        survivors: data.len(),
    })
}

/// What `run` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub output: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Runs the configured mode and writes its artifacts under `paths.output`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.paths.output()?.to_path_buf();
    let files = match cfg.mode {
        Mode::Simulate => simulate(cfg, &out)?,
        Mode::Fit => fit(cfg, &out)?,
        Mode::Predict => predict(cfg, &out)?,
        Mode::Evaluate => evaluate(cfg, &out)?,
        Mode::Study => run_study(cfg, &out)?,
    };
    Ok(RunSummary {
        mode: cfg.mode,
        output: out,
        files,
    })
}

/// True parameters of a simulation in plain form; categories one-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthRecord {
    beta0: f64,
    beta: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<Vec<f64>>,
    nu: Vec<Vec<f64>>,
    nu_tilde: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    omega0: f64,
    omega: Vec<f64>,
    train_y: Vec<usize>,
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sim = simulate_replicate(cfg, 0, None)?;
    export_dataset(&sim.train, &out.join("train"))?;
    export_dataset(&sim.test, &out.join("test"))?;
    let t = &sim.truth;
    let truth = TruthRecord {
        beta0: t.beta0,
        beta: t.beta.clone(),
        theta: t.theta.interior().to_vec(),
        phi: t.phi.iter().map(|c| c.interior().to_vec()).collect(),
        nu: t.nu.clone(),
        nu_tilde: t.nu_tilde.clone(),
        alpha: t.alpha.clone(),
        omega0: t.omega0,
        omega: t.omega.clone(),
        train_y: t.y.iter().map(|y| y + 1).collect(),
    };
    write_json(&out.join("truth.json"), &truth)?;
    let mut files = Vec::new();
    for d in ["train", "test"] {
        for f in ["sequences.csv", "images.csv", "annotations.csv", "confidences.csv"] {
            files.push(out.join(d).join(f));
        }
    }
    files.push(out.join("truth.json"));
    Ok(files)
}

/// Metadata written next to the samples of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub setting: SettingSpec,
    pub categories: usize,
    pub n_covariates: usize,
    pub sequences: usize,
    pub survivors: usize,
    pub standardization: Option<Standardization>,
    /// Sequences whose images were subsampled at ingestion.
    pub capped: Vec<String>,
    pub mcmc: McmcConfig,
}

fn fit(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.setting_spec()?;
    let opts = IngestOptions {
        categories: cfg.categories,
        zeta: Some(cfg.zeta.unwrap_or(DEFAULT_INGEST_ZETA)),
        max_images: Some(cfg.max_images.unwrap_or(DEFAULT_MAX_IMAGES)),
        standardize: cfg.standardize,
        seed: derive_seed(cfg.mcmc.seed, 0, INGEST_STREAM),
    };
    let ingested = ingest(&cfg.paths.data()?, &opts)?;
    let data = &ingested.dataset;
    let mut mcmc = cfg.mcmc.clone();
    mcmc.seed = derive_seed(cfg.mcmc.seed, 0, chain_stream(0));
    let fit = fit_setting(data, &spec, &cfg.prior, &mcmc)?;
    let record = FitRecord {
        setting: spec,
        categories: data.n_categories(),
        n_covariates: data.n_covariates(),
        sequences: data.len(),
        survivors: fit.survivors,
        standardization: ingested.standardization.clone(),
        capped: ingested.capped.clone(),
        mcmc,
    };
    let mut files = vec![out.join("fit.json"), out.join("samples.csv"), out.join("summary.csv")];
    match &fit.fitted {
        Fitted::Model(chain) => {
            write_samples(chain, &files[1])?;
            write_chain_summary(chain, &files[2])?;
            files.push(out.join("acceptance.csv"));
            write_acceptance(chain, &files[3])?;
            files.push(out.join("trace.csv"));
            write_trace(chain, &files[4])?;
            if chain.y_marginals.is_some() {
                files.push(out.join("y_marginals.csv"));
                write_y_marginals(chain, &files[5])?;
            }
        }
        Fitted::Linear(chain) => {
            write_linear_samples(chain, &files[1])?;
            write_linear_summary(chain, &files[2])?;
        }
    }
    write_json(&files[0], &record)?;
    Ok(files)
}

fn load_fit(dir: &Path) -> Result<FitRecord> {
    let path = dir.join("fit.json");
    let text = std::fs::read_to_string(&path).map_err(|e| FusionError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_chain(dir: &Path, record: &FitRecord) -> Result<ChainOutput> {
    let variant = record.setting.setting.variant().ok_or_else(|| {
        FusionError::NotApplicable("the linear baseline has no ordinal predictive distribution".into())
    })?;
    let (iterations, samples) = read_samples(&dir.join("samples.csv"))?;
    Ok(ChainOutput {
        variant,
        sequence_ids: Vec::new(),
        iterations,
        samples,
        acceptance: Vec::new(),
        y_marginals: None,
        log_post_trace: Vec::new(),
    })
}

fn standardized(record: &FitRecord, x: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    match &record.standardization {
        Some(st) => x.iter().map(|r| st.apply(r)).collect(),
        None => Ok(x),
    }
}

/// Posterior predictive category probabilities for every grid row, plus
/// the probability of the two highest categories.
pub fn predict_rows(chain: &ChainOutput, x: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, f64)>> {
    x.iter()
        .map(|x0| {
            let pmf = posterior_predict(x0, chain)?;
            let high = pmf[pmf.len().saturating_sub(2)..].iter().sum();
            Ok((pmf, high))
        })
        .collect()
}

fn predict(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let dir = cfg.paths.require(&cfg.paths.fit, "fit")?;
    let record = load_fit(dir)?;
    let chain = load_chain(dir, &record)?;
    let grid = read_covariate_table(cfg.paths.require(&cfg.paths.grid, "grid")?, "row_id", None)?;
    let x = standardized(&record, grid.x)?;
    let rows = predict_rows(&chain, &x)?;
    let l = record.categories;
    let mut header = vec!["row_id".to_string()];
    header.extend((1..=l).map(|k| format!("p{k}")));
    header.push("p_high".into());
    let mut t = CsvTable::new(&header)?;
    for (id, (pmf, high)) in grid.ids.iter().zip(&rows) {
        let mut r = vec![id.clone()];
        r.extend(pmf.iter().map(|v| fmt_f64(*v)));
        r.push(fmt_f64(*high));
        t.row(r)?;
    }
    let path = out.join("predictions.csv");
    t.save(&path)?;
    Ok(vec![path])
}

fn evaluate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let dir = cfg.paths.require(&cfg.paths.fit, "fit")?;
    let record = load_fit(dir)?;
    let label = record.setting.label();
    let mut setting = SettingReport {
        setting: label,
        replicates: 1,
        in_sample_rps: None,
        out_sample_rps: None,
        relative_out_sample_rps: None,
        beta_mse: Vec::new(),
        beta_coverage: Vec::new(),
        beta_detection: Vec::new(),
        survivor_counts: vec![record.survivors],
    };
    let intervals = if record.setting.setting == Setting::Linear {
        coefficient_intervals(&read_linear_draws(&dir.join("samples.csv"))?)?
    } else {
        let chain = load_chain(dir, &record)?;
        let test = read_covariate_table(cfg.paths.require(&cfg.paths.test, "test")?, "sequence_id", Some(record.categories))?;
        let truth = test
            .true_y
            .ok_or_else(|| FusionError::Config("the test table needs a true_y column".into()))?;
        let x = standardized(&record, test.x)?;
        setting.out_sample_rps = RpsSet::from_replicates(vec![out_sample_rps(&chain, &x, &truth)?]);
        let marginals = dir.join("y_marginals.csv");
        let train = cfg.paths.sequences.clone().or_else(|| cfg.paths.data_dir.as_ref().map(|d| d.join("sequences.csv")));
        if let (true, Some(train)) = (marginals.exists(), train) {
            let table = read_covariate_table(&train, "sequence_id", Some(record.categories))?;
            if let Some(ys) = table.true_y {
                let (ids, rows) = read_y_marginals(&marginals)?;
                let by_id: std::collections::HashMap<&str, usize> =
                    table.ids.iter().map(String::as_str).zip(ys).collect();
                let truth = ids
                    .iter()
                    .map(|id| {
                        by_id
                            .get(id.as_str())
                            .copied()
                            .ok_or_else(|| FusionError::Config(format!("sequence {id} missing from the training table")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut with_marginals = chain.clone();
                with_marginals.y_marginals = Some(rows);
                setting.in_sample_rps = RpsSet::from_replicates(vec![in_sample_rps(&with_marginals, &truth)?]);
            }
        }
        coefficient_intervals(&chain)?
    };
    if let Some(beta_true) = &cfg.beta_true {
        let m: BetaMetrics = crate::evaluation::beta_metrics(&[intervals], beta_true)?;
        setting.beta_mse = m.mse;
        setting.beta_coverage = m.coverage;
        setting.beta_detection = m.detection;
    }
    let report = EvalReport {
        beta_true: cfg.beta_true.clone().unwrap_or_default(),
        reference_setting: None,
        settings: vec![setting],
    };
    write_report(&report, out, true)
}

fn read_linear_draws(path: &Path) -> Result<LinearChain> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let mut chain = LinearChain {
        beta0: Vec::new(),
        beta: Vec::new(),
        sigma2: Vec::new(),
    };
    let mut current = 0usize;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = || FusionError::data(&name, line, "malformed sample row");
        let it: usize = rec.get(0).and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        let v: f64 = rec.get(3).and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        if it != current {
            current = it;
            chain.beta.push(Vec::new());
        }
        let row = chain.beta.last_mut().ok_or_else(bad)?;
        match rec.get(1) {
            Some("beta0") => chain.beta0.push(v),
            Some("beta") => row.push(v),
            Some("sigma2") => chain.sigma2.push(v),
            _ => return Err(bad()),
        }
    }
    Ok(chain)
}
