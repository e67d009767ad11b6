//! Command-line front end. Every verb loads and validates its configuration
//! before writing anything.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analyze::{
    cam_csv, class_activation_map, cluster_profiles, crosstab, elbow_scan, kmeans, Upsample, ELBOW_RESTARTS,
};
use crate::augment::{augment_set, AugmentConfig};
use crate::distill::{distance_shift_report, run_distillation, DistillConfig};
use crate::error::Error;
use crate::eval::roc_csv;
use crate::nn::{load_checkpoint, save_checkpoint, train, Checkpoint, Network, NetworkConfig, TrainConfig};
use crate::pipeline::{
    evaluate_network, regenerate_report, run_experiment, run_points, Axis, EvalTarget, ExperimentConfig,
};
use crate::rng;
use crate::spectra::{
    generate_cohort, load_dataset, oversample_minority, save_dataset, split_leave_subjects_out, CohortConfig, Dataset,
};

#[derive(Debug, Parser)]
#[command(
    name = "mrsdistill",
    version,
    about = "Data distillation and mixing augmentation for spectra classification"
)]
pub struct Cli {
    /// JSON configuration for the verb.
    #[arg(long, global = true, env = "MRSDISTILL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true, env = "MRSDISTILL_OUT")]
    pub out: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true, env = "MRSDISTILL_SEED")]
    pub seed: Option<u64>,
    /// Parallel fold x seed cells.
    #[arg(long, global = true, env = "MRSDISTILL_JOBS")]
    pub jobs: Option<usize>,
    /// -v info, -vv debug, -vvv trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort CSV.
    Generate,
    /// Leave-subjects-out fold assignment.
    Split(SplitArgs),
    /// Train a distillation network and harvest certain samples.
    Distill(DistillArgs),
    /// Mix (or noise-augment) a set of spectra.
    Augment(DataArg),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvalArgs),
    /// Class activation maps for one spectrum.
    Cam(CamArgs),
    /// k-means clustering, or an elbow scan over a k range.
    Cluster(ClusterArgs),
    /// Run an experiment; with --axis, sweep one parameter.
    Sweep(SweepArgs),
    /// Regenerate tables from a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Spectra CSV.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Balance classes by oversampling before distilling.
    #[arg(long)]
    pub oversample: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Validation CSV for best-epoch selection.
    #[arg(long)]
    pub valid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "true")]
    pub against: Against,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Against {
    True,
    Observed,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Row of the spectrum within the CSV.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Linear instead of nearest-neighbor upsampling.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub k: usize,
    /// Elbow scan over an inclusive range, e.g. 1-10.
    #[arg(long)]
    pub k_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// alpha, factor, max_epoch or strategy.
    #[arg(long)]
    pub axis: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory holding summary.json.
    #[arg(long)]
    pub run: PathBuf,
}

/// Network plus optimizer settings for the `train` verb.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainJob {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Domain(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    if !path.is_file() {
        return Err(CliError::Usage(format!("config file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Domain(Error::Config(format!("{}: {e}", path.display()))))
}

fn require_out(out: &Option<PathBuf>) -> CliResult<&Path> {
    out.as_deref()
        .ok_or_else(|| CliError::Usage("--out is required for this command".into()))
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file not found: {}", path.display())))
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).map_err(|e| Error::Io {
            path: d.into(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| {
        CliError::Domain(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    require_file(path)?;
    Ok(load_dataset(path)?)
}

fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("invalid k range {s:?}; expected e.g. 1-10"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let (a, b): (usize, usize) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg_path = cli.config.as_deref();
    match &cli.command {
        Command::Generate => {
            let mut cfg: CohortConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let out = require_out(&cli.out)?;
            let ds = generate_cohort(&cfg)?;
            save_dataset(&ds, out)?;
        }
        Command::Split(a) => {
            let ds = load_data(&a.data)?;
            let out = require_out(&cli.out)?;
            let folds = split_leave_subjects_out(&ds, a.folds, &mut rng::stream(cli.seed.unwrap_or(0), "folds", 0))?;
            write(out, json(&folds)?)?;
        }
        Command::Distill(a) => {
            let cfg: DistillConfig = load_config(cfg_path)?;
            cfg.validate()?;
            let out = require_out(&cli.out)?;
            let seed = cli.seed.unwrap_or(cfg.train.seed);
            let mut ds = load_data(&a.data)?;
            if a.oversample {
                ds = oversample_minority(&ds, &mut rng::stream(seed, "smote", 0))?;
            }
            let res = run_distillation(&ds, &cfg, seed, false)?;
            let real: Vec<usize> = (0..ds.len()).filter(|&i| !ds.spectra[i].synthetic).collect();
            let real_ds = ds.subset(&real, "real");
            let pos: std::collections::BTreeMap<usize, usize> = real.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let members: Vec<usize> = res.certain.member_indices.iter().map(|i| pos[i]).collect();
            write(&out.join("certain.json"), res.certain.to_json()? + "\n")?;
            let shift = distance_shift_report(&real_ds, &members, 20)?;
            write(&out.join("distance_shift.csv"), shift.to_csv())?;
            write(&out.join("distance_shift.json"), json(&shift)?)?;
            if !res.certain.is_empty() {
                save_dataset(
                    &ds.subset(&res.certain.member_indices, "certain"),
                    out.join("certain.csv"),
                )?;
            }
            let ck = Checkpoint {
                network: res.network,
                adam: None,
                log: Vec::new(),
            };
            save_checkpoint(&ck, out.join("distill.ckpt"))?;
            println!(
                "{}",
                serde_json::json!({"certain": res.certain.len(), "per_epoch": res.certain.per_epoch_counts})
            );
        }
        Command::Augment(a) => {
            let mut cfg: AugmentConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let out = require_out(&cli.out)?;
            let ds = load_data(&a.data)?;
            let aug = augment_set(&ds.spectra, &cfg)?;
            if aug.samples.is_empty() {
                return Err(CliError::Domain(Error::Argument(
                    "augmentation produced no samples".into(),
                )));
            }
            save_dataset(&Dataset::new("augmented", aug.samples)?, out)?;
            let mut prov = String::from("sample,target,partner\n");
            for (k, p) in aug.provenance.iter().enumerate() {
                prov += &format!(
                    "{k},{},{}\n",
                    p.target,
                    p.partner.map_or(String::new(), |x| x.to_string())
                );
            }
            write(&out.with_extension("provenance.csv"), prov)?;
        }
        Command::Train(a) => {
            let mut job: TrainJob = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                job.train.seed = s;
            }
            job.network.validate()?;
            job.train.validate()?;
            let out = require_out(&cli.out)?;
            let ds = load_data(&a.data)?;
            let valid = a.valid.as_deref().map(load_data).transpose()?;
            let net = Network::new(job.network.clone(), rng::derive_seed(job.train.seed, "init", 0))?;
            let res = train(net, &ds, valid.as_ref(), &job.train)?;
            let ck = Checkpoint {
                network: res.network,
                adam: Some(res.adam),
                log: res.log,
            };
            save_checkpoint(&ck, out)?;
        }
        Command::Evaluate(a) => {
            require_file(&a.model)?;
            let ck = load_checkpoint(&a.model)?;
            let ds = load_data(&a.data)?;
            let target = match a.against {
                Against::True => EvalTarget::True,
                Against::Observed => EvalTarget::Observed,
            };
            let (rep, _) = evaluate_network(&ck.network, &ds, target)?;
            if let Some(out) = &cli.out {
                write(&out.join("report.json"), json(&rep)?)?;
                write(&out.join("roc.csv"), roc_csv(&rep.roc_points))?;
            }
            println!(
                "{}",
                serde_json::json!({"auc": rep.auc, "sensitivity": rep.sensitivity, "specificity": rep.specificity, "patient_accuracy": rep.patient_accuracy})
            );
        }
        Command::Cam(a) => {
            require_file(&a.model)?;
            let out = require_out(&cli.out)?;
            let ck = load_checkpoint(&a.model)?;
            let ds = load_data(&a.data)?;
            let s = ds
                .spectra
                .get(a.index)
                .ok_or_else(|| CliError::Domain(Error::Argument(format!("no spectrum at row {}", a.index))))?;
            let mode = if a.linear { Upsample::Linear } else { Upsample::Nearest };
            let cams = (0..ck.network.config.n_classes)
                .map(|k| class_activation_map(&ck.network, s, k, mode))
                .collect::<crate::Result<Vec<_>>>()?;
            write(out, cam_csv(s, &cams))?;
        }
        Command::Cluster(a) => {
            let ds = load_data(&a.data)?;
            let out = require_out(&cli.out)?;
            let seed = cli.seed.unwrap_or(0);
            let pts: Vec<Vec<f64>> = ds.spectra.iter().map(|s| s.values.clone()).collect();
            if let Some(r) = &a.k_range {
                let ks = parse_range(r)?;
                let scan = elbow_scan(&pts, &ks, seed, ELBOW_RESTARTS)?;
                let mut csv = String::from("k,inertia,inertia_monotone\n");
                for p in &scan {
                    csv += &format!("{},{},{}\n", p.k, p.inertia, p.inertia_monotone);
                }
                write(&out.join("elbow.csv"), csv)?;
            }
            let res = kmeans(&pts, a.k, seed, 300, 0.0)?;
            write(&out.join("clusters.json"), json(&res)?)?;
            write(&out.join("centroids.csv"), res.centroid_csv())?;
            write(
                &out.join("crosstab.csv"),
                crosstab(&res.assignments, &ds.labels(), a.k)?.to_csv(),
            )?;
            write(&out.join("profiles.json"), json(&cluster_profiles(&pts, &res)?)?)?;
        }
        Command::Sweep(a) => {
            let mut cfg: ExperimentConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            if let Some(j) = cli.jobs {
                cfg.jobs = j;
            }
            cfg.validate()?;
            let axis: Option<Axis> = a
                .axis
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(|e: Error| CliError::Usage(e.to_string()))?;
            let out = require_out(&cli.out)?;
            let res = match (axis, &cfg.sweep) {
                (Some(ax), g) => {
                    let grid = g.clone().unwrap_or_default().restricted(ax);
                    run_points(&cfg, &cfg.grid_points(&grid), Some(out))?
                }
                (None, Some(g)) if !g.is_empty() => run_points(&cfg, &cfg.grid_points(g), Some(out))?,
                (None, _) => run_experiment(&cfg, Some(out))?,
            };
            if let Some(d) = &res.run_dir {
                println!("{}", d.display());
            }
            print!("{}", res.sweep_csv());
        }
        Command::Report(a) => {
            if !a.run.join("summary.json").is_file() {
                return Err(CliError::Usage(format!("no summary.json in {}", a.run.display())));
            }
            for p in regenerate_report(&a.run)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

/// Parses `argv`, runs the verb and maps the outcome to an exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("MRSDISTILL_LOG")
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
