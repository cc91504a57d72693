use std::path::PathBuf;
use std::process::ExitCode;

use camtrap_fusion::run::{run, Mode, RunConfig, Setting};
use camtrap_fusion::FusionError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "camtrap-fusion", version, about = "Fuse manual ordinal scores with AI confidences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training and test data.
    Simulate(Flags),
    /// Fit one setting to ingested data.
    Fit(Flags),
    /// Score a fit against held-out true categories.
    Evaluate(Flags),
    /// Posterior predictive probabilities over a covariate grid.
    Predict(Flags),
    /// Simulate, fit and score many replicates.
    Study(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Linear,
    Maximum,
    OrdinalOnly,
    CompositionalOnly,
    Full,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Linear => Setting::Linear,
            SettingArg::Maximum => Setting::Maximum,
            SettingArg::OrdinalOnly => Setting::OrdinalOnly,
            SettingArg::CompositionalOnly => Setting::CompositionalOnly,
            SettingArg::Full => Setting::Full,
        }
    }
}

/// Command-line values override the configuration file.
#[derive(Args)]
struct Flags {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    annotated_fraction: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long)]
    max_images: Option<usize>,
    /// Keep covariates on their original scale.
    #[arg(long)]
    no_standardize: bool,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Directory with sequences.csv and the optional image tables.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    sequences: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    confidences: Option<PathBuf>,
    /// Held-out sequences.csv with true_y.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory of an earlier fit.
    #[arg(long)]
    fit: Option<PathBuf>,
}

impl Flags {
    fn into_config(self, mode: Mode) -> Result<RunConfig, FusionError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load_for_mode(path, mode)?,
            None => RunConfig::new(mode),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {$(
                if let Some(v) = self.$flag {
                    cfg.$($field).+ = Some(v.into());
                }
            )*};
        }
        set!(
            setting => setting,
            threshold => threshold,
            annotated_fraction => annotated_fraction,
            zeta => zeta,
            categories => categories,
            max_images => max_images,
            output => paths.output,
            data_dir => paths.data_dir,
            sequences => paths.sequences,
            images => paths.images,
            annotations => paths.annotations,
            confidences => paths.confidences,
            test => paths.test,
            grid => paths.grid,
            fit => paths.fit,
        );
        if self.no_standardize {
            cfg.standardize = false;
        }
        if let Some(v) = self.seed {
            cfg.mcmc.seed = v;
        }
        if let Some(v) = self.iterations {
            cfg.mcmc.iterations = v;
        }
        if let Some(v) = self.burnin {
            cfg.mcmc.burnin = v;
        }
        if let Some(v) = self.thin {
            cfg.mcmc.thin = v;
        }
        if let Some(v) = self.replicates {
            cfg.study.replicates = v;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, flags) = match cli.command {
        Command::Simulate(f) => (Mode::Simulate, f),
        Command::Fit(f) => (Mode::Fit, f),
        Command::Evaluate(f) => (Mode::Evaluate, f),
        Command::Predict(f) => (Mode::Predict, f),
        Command::Study(f) => (Mode::Study, f),
    };
    match flags.into_config(mode).and_then(|cfg| run(&cfg)) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
