use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::ThresholdPolicy;
use crate::error::{FusionError, Result};
use crate::io::DataPaths;
use crate::mcmc::{McmcConfig, Variant};
use crate::model::CategoryCount;
use crate::priors::{construct_accuracy_cutoffs, default_prior, PriorSpec};
use crate::simulator::SimConfig;

/// Smoothing applied to ingested confidences unless configured otherwise.
pub const DEFAULT_INGEST_ZETA: f64 = 1e-3;

/// Images kept per sequence at ingestion unless configured otherwise.
pub const DEFAULT_MAX_IMAGES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Fit,
    Evaluate,
    Predict,
    Study,
}

/// A fitted model or baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Bayesian linear regression on a confidence-derived continuous score.
    Linear,
    /// Ordinal regression on the median most-likely category.
    Maximum,
    OrdinalOnly,
    CompositionalOnly,
    Full,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Linear => "linear",
            Setting::Maximum => "maximum",
            Setting::OrdinalOnly => "ordinal_only",
            Setting::CompositionalOnly => "compositional_only",
            Setting::Full => "full",
        }
    }

    pub fn needs_threshold(self) -> bool {
        matches!(self, Setting::Linear | Setting::Maximum)
    }

    pub fn uses_annotations(self) -> bool {
        matches!(self, Setting::OrdinalOnly | Setting::Full)
    }

    /// Sampler variant; `None` for the linear baseline.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Setting::Linear => None,
            Setting::Maximum => Some(Variant::MaximumObserved),
            Setting::OrdinalOnly => Some(Variant::OrdinalOnly),
            Setting::CompositionalOnly => Some(Variant::CompositionalOnly),
            Setting::Full => Some(Variant::Full),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One setting of a replicate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub setting: Setting,
    pub threshold: Option<f64>,
    pub annotated_fraction: Option<f64>,
    /// Label in reports; derived from the other fields when absent.
    pub label: Option<String>,
}

impl SettingSpec {
    pub fn new(setting: Setting, threshold: Option<f64>, annotated_fraction: Option<f64>) -> Self {
        SettingSpec {
            setting,
            threshold,
            annotated_fraction,
            label: None,
        }
    }

    /// `full_50`, `maximum_99`, `compositional_only`, and so on.
    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let pct = |v: f64| format!("{}", (v * 100.0).round() as i64);
        match (self.threshold, self.annotated_fraction) {
            (Some(t), _) if self.setting.needs_threshold() => format!("{}_{}", self.setting, pct(t)),
            (_, Some(f)) if self.setting.uses_annotations() => format!("{}_{}", self.setting, pct(f)),
            _ => self.setting.name().to_string(),
        }
    }

    pub fn policy(&self) -> Result<Option<ThresholdPolicy>> {
        match (self.setting.needs_threshold(), self.threshold) {
            (true, Some(t)) => Ok(Some(ThresholdPolicy::new(t)?)),
            (true, None) => Err(FusionError::Config(format!(
                "setting {} needs a threshold",
                self.setting
            ))),
            (false, Some(_)) => Err(FusionError::Config(format!(
                "setting {} does not take a threshold",
                self.setting
            ))),
            (false, None) => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy()?;
        if let Some(f) = self.annotated_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(FusionError::Config(format!("annotated_fraction must lie in [0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

/// The thirteen settings of the reference simulation study.
pub fn default_study_settings() -> Vec<SettingSpec> {
    let mut out = Vec::new();
    for t in [0.75, 0.9, 0.99] {
        out.push(SettingSpec::new(Setting::Linear, Some(t), None));
    }
    for t in [0.75, 0.9, 0.99] {
        out.push(SettingSpec::new(Setting::Maximum, Some(t), None));
    }
    for f in [0.1, 0.2, 0.5] {
        out.push(SettingSpec::new(Setting::OrdinalOnly, None, Some(f)));
    }
    out.push(SettingSpec::new(Setting::CompositionalOnly, None, None));
    for f in [0.1, 0.2, 0.5] {
        out.push(SettingSpec::new(Setting::Full, None, Some(f)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub replicates: usize,
    pub settings: Vec<SettingSpec>,
    /// Label of the setting that relative out-of-sample RPS is computed against.
    pub reference: String,
    /// Also write every per-sequence RPS value.
    pub write_sequence_rps: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            replicates: 100,
            settings: default_study_settings(),
            reference: "full_50".into(),
            write_sequence_rps: true,
        }
    }
}

/// Optional replacements for individual prior hyperparameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    pub beta_sd: Option<f64>,
    pub intercept_sd: Option<f64>,
    pub omega_sd: Option<f64>,
    pub cutoff_log_var: Option<f64>,
    pub theta_tilde_means: Option<Vec<f64>>,
    pub phi_tilde_means: Option<Vec<Vec<f64>>>,
    pub nu_conditional_var: Option<f64>,
    pub alpha_concentration: Option<Vec<Vec<f64>>>,
    /// Also resets the annotation cutoff means unless those are given.
    pub annotator_accuracy: Option<f64>,
    pub end_cell_width: Option<f64>,
}

impl PriorOverrides {
    /// Default prior for the given dimensions with these overrides applied.
    pub fn build(&self, categories: CategoryCount, p: usize, q: usize, a: usize) -> Result<PriorSpec> {
        let mut spec = default_prior(categories, p, q, a);
        macro_rules! take {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    spec.$f = v.clone();
                }
            )*};
        }
        take!(
            beta_sd,
            intercept_sd,
            omega_sd,
            cutoff_log_var,
            theta_tilde_means,
            nu_conditional_var,
            alpha_concentration,
            end_cell_width
        );
        if let Some(acc) = self.annotator_accuracy {
            spec.annotator_accuracy = acc;
            spec.phi_tilde_means = construct_accuracy_cutoffs(categories, acc)?
                .phi
                .iter()
                .map(|c| c.increments().to_vec())
                .collect();
        }
        if let Some(v) = &self.phi_tilde_means {
            spec.phi_tilde_means = v.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// File locations. Relative paths are resolved against the directory of
/// the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding the standard table files.
    pub data_dir: Option<PathBuf>,
    pub sequences: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub confidences: Option<PathBuf>,
    /// Held-out `sequences.csv` with `true_y`, for evaluation.
    pub test: Option<PathBuf>,
    /// Covariate grid for prediction.
    pub grid: Option<PathBuf>,
    /// Output directory of an earlier fit.
    pub fit: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl PathsConfig {
    pub fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.data_dir,
            &mut self.sequences,
            &mut self.images,
            &mut self.annotations,
            &mut self.confidences,
            &mut self.test,
            &mut self.grid,
            &mut self.fit,
            &mut self.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Input tables: explicit files take precedence over `data_dir`. Missing
    /// optional tables inside `data_dir` are skipped.
    pub fn data(&self) -> Result<DataPaths> {
        let from_dir = |name: &str| {
            self.data_dir
                .as_ref()
                .map(|d| d.join(name))
                .filter(|p| p.exists())
        };
        let sequences = self
            .sequences
            .clone()
            .or_else(|| self.data_dir.as_ref().map(|d| d.join("sequences.csv")))
            .ok_or_else(|| FusionError::Config("paths.sequences or paths.data_dir is required".into()))?;
        Ok(DataPaths {
            sequences,
            images: self.images.clone().or_else(|| from_dir("images.csv")),
            annotations: self.annotations.clone().or_else(|| from_dir("annotations.csv")),
            confidences: self.confidences.clone().or_else(|| from_dir("confidences.csv")),
        })
    }

    pub fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| FusionError::Config("paths.output is required".into()))
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        let p = field
            .as_deref()
            .ok_or_else(|| FusionError::Config(format!("paths.{name} is required")))?;
        if !p.exists() {
            return Err(FusionError::Config(format!("paths.{name} does not exist: {}", p.display())));
        }
        Ok(p)
    }
}

/// Everything one invocation needs. `mcmc.seed` is the master seed from
/// which every random stream is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub setting: Option<Setting>,
    pub threshold: Option<f64>,
    pub annotated_fraction: Option<f64>,
    pub zeta: Option<f64>,
    pub categories: Option<usize>,
    pub max_images: Option<usize>,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub prior: PriorOverrides,
    #[serde(default)]
    pub study: StudyConfig,
    /// True coefficients for single-fit evaluation.
    pub beta_true: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            mode,
            setting: None,
            threshold: None,
            annotated_fraction: None,
            zeta: None,
            categories: None,
            max_images: None,
            standardize: true,
            paths: PathsConfig::default(),
            mcmc: McmcConfig::default(),
            sim: None,
            prior: PriorOverrides::default(),
            study: StudyConfig::default(),
            beta_true: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Parses a file and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FusionError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    /// Like [`RunConfig::load`], but `mode` may be omitted from the file and
    /// must agree with `mode` when present.
    pub fn load_for_mode(path: &Path, mode: Mode) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FusionError::io(path, e))?;
        let mut table: toml::Table = toml::from_str(&text)?;
        let name = toml::Value::try_from(mode).map_err(|e| FusionError::Config(e.to_string()))?;
        match table.get("mode") {
            Some(v) if *v != name => {
                return Err(FusionError::Config(format!(
                    "{} is a {v} configuration, not {name}",
                    path.display()
                )))
            }
            Some(_) => {}
            None => {
                table.insert("mode".into(), name);
            }
        }
        let mut cfg: RunConfig = table.try_into()?;
        cfg.paths.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Simulation settings with `annotated_fraction` applied.
    pub fn sim_config(&self) -> SimConfig {
        let mut sim = self.sim.clone().unwrap_or_default();
        if let Some(f) = self.annotated_fraction {
            sim.annotated_fraction = f;
        }
        if let Some(z) = self.zeta {
            sim.zeta = z;
        }
        sim
    }

    /// The single setting of a fit.
    pub fn setting_spec(&self) -> Result<SettingSpec> {
        let setting = self
            .setting
            .ok_or_else(|| FusionError::Config(format!("mode {:?} needs a setting", self.mode)))?;
        let spec = SettingSpec::new(setting, self.threshold, self.annotated_fraction);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        if let Some(z) = self.zeta {
            if !(z > 0.0 && z < 1.0) {
                return Err(FusionError::Config(format!("zeta must lie in (0, 1), got {z}")));
            }
        }
        if self.max_images == Some(0) {
            return Err(FusionError::Config("max_images must be positive".into()));
        }
        self.paths.output()?;
        match self.mode {
            Mode::Simulate => self.sim_config().validate(),
            Mode::Fit => {
                self.setting_spec()?;
                let data = self.paths.data()?;
                for (p, name) in [
                    (Some(&data.sequences), "sequences"),
                    (data.images.as_ref(), "images"),
                    (data.annotations.as_ref(), "annotations"),
                    (data.confidences.as_ref(), "confidences"),
                ] {
                    if let Some(p) = p {
                        if !p.exists() {
                            return Err(FusionError::Config(format!(
                                "paths.{name} does not exist: {}",
                                p.display()
                            )));
                        }
                    }
                }
                Ok(())
            }
            Mode::Predict => {
                self.paths.require(&self.paths.fit, "fit")?;
                self.paths.require(&self.paths.grid, "grid")?;
                Ok(())
            }
            Mode::Evaluate => {
                self.paths.require(&self.paths.fit, "fit")?;
                self.paths.require(&self.paths.test, "test")?;
                Ok(())
            }
            Mode::Study => {
                self.sim_config().validate()?;
                if self.study.replicates == 0 || self.study.settings.is_empty() {
                    return Err(FusionError::Config("a study needs replicates and settings".into()));
                }
                let mut labels = std::collections::HashSet::new();
                for s in &self.study.settings {
                    s.validate()?;
                    if !labels.insert(s.label()) {
                        return Err(FusionError::Config(format!("duplicate setting label {}", s.label())));
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        let labels: Vec<String> = default_study_settings().iter().map(SettingSpec::label).collect();
        assert_eq!(labels[0], "linear_75");
        assert_eq!(labels[5], "maximum_99");
        assert_eq!(labels[9], "compositional_only");
        assert_eq!(labels[12], "full_50");
    }

    #[test]
    fn threshold_required_iff_thresholded() {
        assert!(SettingSpec::new(Setting::Maximum, None, None).validate().is_err());
        assert!(SettingSpec::new(Setting::Full, Some(0.9), None).validate().is_err());
        assert!(SettingSpec::new(Setting::Linear, Some(0.9), None).validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("mode = \"fit\"\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("mode = \"fit\"\n[mcmc]\nitertions = 5\n").is_err());
        let cfg = RunConfig::from_toml("mode = \"study\"\n[mcmc]\niterations = 50\nburnin = 10\n").unwrap();
        assert_eq!(cfg.mcmc.iterations, 50);
        assert_eq!(cfg.study.replicates, 100);
    }

    #[test]
    fn overrides_apply() {
        let cats = CategoryCount::new(3).unwrap();
        let o = PriorOverrides {
            omega_sd: Some(1.0),
            annotator_accuracy: Some(0.8),
            ..PriorOverrides::default()
        };
        let spec = o.build(cats, 1, 1, 2).unwrap();
        let base = default_prior(cats, 1, 1, 2);
        assert_eq!(spec.omega_sd, 1.0);
        assert_ne!(spec.phi_tilde_means, base.phi_tilde_means);
        assert_eq!(spec.beta_sd, base.beta_sd);
    }
}
