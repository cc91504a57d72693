use std::fs;
use std::path::Path;

use camtrap_fusion::io::{export_dataset, write_json, write_samples};
use camtrap_fusion::mcmc::{ChainOutput, McmcConfig, Variant};
use camtrap_fusion::model::{ordinal_pmf, CutoffVector, ParamState};
use camtrap_fusion::run::{
    run, FitRecord, Mode, RunConfig, Setting, SettingSpec, StudyConfig,
};
use camtrap_fusion::simulator::SimConfig;
use camtrap_fusion::FusionError;
use tempfile::TempDir;

fn small_study(out: &Path, settings: Vec<SettingSpec>) -> RunConfig {
    let mut cfg = RunConfig::new(Mode::Study);
    cfg.mcmc = McmcConfig {
        iterations: 500,
        burnin: 250,
        ..McmcConfig::default()
    };
    cfg.sim = Some(SimConfig {
        n_train: 50,
        n_test: 60,
        ..SimConfig::default()
    });
    cfg.study = StudyConfig {
        replicates: 2,
        settings,
        reference: "full_50".into(),
        write_sequence_rps: true,
    };
    cfg.paths.output = Some(out.to_path_buf());
    cfg
}

fn default_settings() -> Vec<SettingSpec> {
    vec![
        SettingSpec::new(Setting::Full, None, Some(0.5)),
        SettingSpec::new(Setting::OrdinalOnly, None, Some(0.5)),
        SettingSpec::new(Setting::CompositionalOnly, None, None),
        SettingSpec::new(Setting::Maximum, Some(0.75), None),
        SettingSpec::new(Setting::Linear, Some(0.75), None),
    ]
}

const REPORT_FILES: [&str; 6] = [
    "report.json",
    "table_mse.csv",
    "table_coverage.csv",
    "table_detection.csv",
    "rps_replicates.csv",
    "rps_sequences.csv",
];

#[test]
fn study_smoke_is_deterministic_and_resumable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run(&small_study(a.path(), default_settings())).unwrap();
    run(&small_study(b.path(), default_settings())).unwrap();
    for f in REPORT_FILES {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs between runs");
    }
    let table = fs::read_to_string(a.path().join("table_mse.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(table.starts_with("setting,beta1,beta2,beta3,beta4,beta5,beta6\nfull_50,"));

    fs::remove_file(b.path().join("checkpoints/replicate_0002.json")).unwrap();
    fs::remove_file(b.path().join("report.json")).unwrap();
    run(&small_study(b.path(), default_settings())).unwrap();
    assert_eq!(
        fs::read(a.path().join("report.json")).unwrap(),
        fs::read(b.path().join("report.json")).unwrap()
    );

    let mut other = small_study(b.path(), default_settings());
    other.mcmc.seed += 1;
    assert!(matches!(run(&other), Err(FusionError::Config(_))));
}

#[test]
fn failing_replicate_is_reported_with_its_checkpoint() {
    let dir = TempDir::new().unwrap();
    let settings = vec![
        SettingSpec::new(Setting::Maximum, Some(0.75), None),
        SettingSpec::new(Setting::Linear, Some(0.75), None),
    ];
    let mut cfg = small_study(dir.path(), settings);
    cfg.sim.as_mut().unwrap().n_train = 5;
    match run(&cfg) {
        Err(FusionError::Replicate { replicate, checkpoint, .. }) => {
            assert_eq!(replicate, 1);
            assert_eq!(checkpoint, dir.path().join("checkpoints"));
        }
        other => panic!("expected a replicate failure, got {other:?}"),
    }
    assert!(dir.path().join("checkpoints/study.json").exists());
    assert!(!dir.path().join("report.json").exists());
}

fn one_sample_fit(dir: &Path) -> ParamState {
    let state = ParamState {
        beta0: 0.4,
        beta: vec![0.7, -0.2],
        theta: CutoffVector::from_increments(vec![-0.3, 0.2]),
        phi: vec![],
        nu: vec![],
        nu_tilde: vec![],
        alpha: vec![],
        omega0: 0.0,
        omega: vec![],
        y: vec![],
    };
    let chain = ChainOutput {
        variant: Variant::MaximumObserved,
        sequence_ids: vec![],
        iterations: vec![1],
        samples: vec![state.clone()],
        acceptance: vec![],
        y_marginals: None,
        log_post_trace: vec![],
    };
    write_samples(&chain, &dir.join("samples.csv")).unwrap();
    let record = FitRecord {
        setting: SettingSpec::new(Setting::Maximum, Some(0.9), None),
        categories: 4,
        n_covariates: 2,
        sequences: 1,
        survivors: 1,
        standardization: None,
        capped: vec![],
        mcmc: McmcConfig::default(),
    };
    write_json(&dir.join("fit.json"), &record).unwrap();
    state
}

#[test]
fn prediction_with_one_sample_matches_regression_pmf() {
    let dir = TempDir::new().unwrap();
    let fit = dir.path().join("fit");
    let state = one_sample_fit(&fit);
    let grid = [[0.0, 0.0], [1.5, -2.0], [-3.0, 0.5]];
    let mut text = String::from("row_id,x1,x2\n");
    for (i, r) in grid.iter().enumerate() {
        text.push_str(&format!("g{i},{},{}\n", r[0], r[1]));
    }
    fs::write(dir.path().join("grid.csv"), text).unwrap();
    let mut cfg = RunConfig::new(Mode::Predict);
    cfg.paths.fit = Some(fit);
    cfg.paths.grid = Some(dir.path().join("grid.csv"));
    cfg.paths.output = Some(dir.path().join("pred"));
    run(&cfg).unwrap();
    let out = fs::read_to_string(dir.path().join("pred/predictions.csv")).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("row_id,p1,p2,p3,p4,p_high"));
    for (line, x) in lines.zip(&grid) {
        let fields: Vec<f64> = line.split(',').skip(1).map(|f| f.parse().unwrap()).collect();
        let pmf = ordinal_pmf(state.linear_predictor(x), &state.theta).unwrap();
        for (a, b) in fields.iter().zip(&pmf) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((fields[4] - (pmf[2] + pmf[3])).abs() < 1e-15);
    }
}

#[test]
fn raw_scale_grid_reproduces_in_memory_predictions() {
    let dir = TempDir::new().unwrap();
    let mut sim = RunConfig::new(Mode::Simulate);
    sim.sim = Some(SimConfig {
        n_train: 40,
        n_test: 10,
        ..SimConfig::default()
    });
    sim.paths.output = Some(dir.path().join("data"));
    run(&sim).unwrap();
    let train = camtrap_fusion::io::ingest(
        &camtrap_fusion::io::DataPaths::in_dir(&dir.path().join("data/train")),
        &camtrap_fusion::io::IngestOptions::verbatim(),
    )
    .unwrap()
    .dataset;
    let mut raw = train.clone();
    for s in &mut raw.sequences {
        for (j, v) in s.x.iter_mut().enumerate() {
            *v = 3.0 * *v + j as f64;
        }
    }
    export_dataset(&raw, &dir.path().join("raw")).unwrap();

    let mut fit = RunConfig::new(Mode::Fit);
    fit.setting = Some(Setting::Full);
    fit.zeta = Some(1e-12);
    fit.mcmc = McmcConfig {
        iterations: 200,
        burnin: 100,
        ..McmcConfig::default()
    };
    fit.paths.data_dir = Some(dir.path().join("raw"));
    fit.paths.output = Some(dir.path().join("fit"));
    run(&fit).unwrap();

    let mut grid = String::from("row_id,x1,x2,x3,x4,x5,x6\n");
    for s in raw.sequences.iter().take(5) {
        let cells: Vec<String> = s.x.iter().map(|v| format!("{v}")).collect();
        grid.push_str(&format!("{},{}\n", s.id, cells.join(",")));
    }
    fs::write(dir.path().join("grid.csv"), grid).unwrap();
    let mut pred = RunConfig::new(Mode::Predict);
    pred.paths.fit = Some(dir.path().join("fit"));
    pred.paths.grid = Some(dir.path().join("grid.csv"));
    pred.paths.output = Some(dir.path().join("pred"));
    run(&pred).unwrap();

    let record: FitRecord =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit/fit.json")).unwrap()).unwrap();
    let st = record.standardization.expect("fit standardizes by default");
    let (_, samples) = camtrap_fusion::io::read_samples(&dir.path().join("fit/samples.csv")).unwrap();
    let chain = ChainOutput {
        variant: Variant::Full,
        sequence_ids: vec![],
        iterations: vec![],
        samples,
        acceptance: vec![],
        y_marginals: None,
        log_post_trace: vec![],
    };
    let out = fs::read_to_string(dir.path().join("pred/predictions.csv")).unwrap();
    for (line, s) in out.lines().skip(1).zip(&raw.sequences) {
        let expect = camtrap_fusion::mcmc::posterior_predict(&st.apply(&s.x).unwrap(), &chain).unwrap();
        let got: Vec<f64> = line.split(',').skip(1).take(5).map(|f| f.parse().unwrap()).collect();
        assert_eq!(got, expect);
    }
}

#[test]
fn config_file_round_trip_and_relative_paths() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "setting = \"maximum\"\nthreshold = 0.9\n[paths]\ndata_dir = \"data\"\noutput = \"out\"\n[mcmc]\niterations = 100\nburnin = 50\n",
    )
    .unwrap();
    let cfg = RunConfig::load_for_mode(&path, Mode::Fit).unwrap();
    assert_eq!(cfg.paths.data_dir.as_deref(), Some(dir.path().join("data").as_path()));
    assert_eq!(cfg.mcmc.iterations, 100);
    assert!(matches!(cfg.validate(), Err(FusionError::Config(_))), "missing data must be reported");
    assert!(RunConfig::load_for_mode(&path, Mode::Fit).is_ok());
    fs::write(&path, "mode = \"study\"\n").unwrap();
    assert!(RunConfig::load_for_mode(&path, Mode::Fit).is_err());
}
