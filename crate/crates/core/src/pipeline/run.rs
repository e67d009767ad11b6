use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{error, info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Arm, EvalTarget, ExperimentConfig, Point};
use crate::augment::{augment_set, AugmentConfig, Provenance};
use crate::distill::{distance_shift_report, run_distillation, CertainSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, roc_csv, summarize_cv, CvSummary, EvalReport};
use crate::nn::{predict_proba, save_checkpoint, train, Checkpoint, Network};
use crate::rng;
use crate::spectra::{
    generate_cohort, load_dataset, oversample_minority, split_leave_subjects_out, split_validation, Class, Dataset,
    Fold, Spectrum,
};

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_experiment_data(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        Some(p) => load_dataset(p),
        None => generate_cohort(&config.cohort),
    }
}

/// Reference label of a spectrum under `target`.
pub fn reference_label(s: &Spectrum, target: EvalTarget) -> Class {
    match target {
        EvalTarget::True => s.true_label.unwrap_or(s.label),
        EvalTarget::Observed => s.label,
    }
}

/// Per-patient diagnosis by majority of `labels`; ties resolve to healthy.
pub fn patient_labels(patient_ids: &[String], labels: &[Class]) -> BTreeMap<String, Class> {
    let mut votes: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for (p, l) in patient_ids.iter().zip(labels) {
        votes.entry(p.clone()).or_default()[l.index()] += 1;
    }
    votes
        .into_iter()
        .map(|(p, v)| (p, if v[1] > v[0] { Class::Tumor } else { Class::Healthy }))
        .collect()
}

/// Scores `net` on `test` against the configured reference labels.
pub fn evaluate_network(net: &Network, test: &Dataset, target: EvalTarget) -> Result<(EvalReport, Vec<[f64; 2]>)> {
    let probs = predict_proba(net, &test.spectra)?;
    let labels: Vec<Class> = test.spectra.iter().map(|s| reference_label(s, target)).collect();
    let ids: Vec<String> = test.spectra.iter().map(|s| s.patient_id.clone()).collect();
    let report = evaluate(&probs, &labels, &ids, &patient_labels(&ids, &labels))?;
    Ok((report, probs))
}

fn unique_patients<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> Vec<String> {
    spectra
        .into_iter()
        .map(|s| s.patient_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub fold: usize,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub train_patients: Vec<String>,
    pub valid_patients: Vec<String>,
    pub test_patients: Vec<String>,
}

/// Patients whose spectra reached each training-side stage of a cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub stages: BTreeMap<String, Vec<String>>,
}

pub fn cell_name(fold: usize, seed: u64) -> String {
    format!("fold{fold}_seed{seed}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: Point,
    pub label: String,
    pub summary: Option<CvSummary>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub points: Vec<PointSummary>,
    /// Run directory, when artifacts were written.
    #[serde(skip)]
    pub run_dir: Option<PathBuf>,
}

impl ExperimentResult {
    pub fn find(&self, label: &str) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.label == label)
    }

    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("strategy,alpha,factor,max_epoch,auc_mean,auc_std,patient_accuracy_mean,n_cells\n");
        for p in &self.points {
            let (m, sd, pa, n) = match &p.summary {
                Some(c) => (
                    c.auc.mean.to_string(),
                    c.auc.std.to_string(),
                    c.patient_accuracy.mean.to_string(),
                    c.per_fold.len(),
                ),
                None => ("NA".into(), "NA".into(), "NA".into(), 0),
            };
            let pt = p.point;
            let _ = writeln!(
                s,
                "{},{},{},{},{m},{sd},{pa},{n}",
                pt.strategy, pt.alpha, pt.factor, pt.max_epoch
            );
        }
        s
    }
}

struct Prepared {
    split: SplitRecord,
    /// Oversampled training set; real spectra first.
    train: Dataset,
    valid: Option<Dataset>,
    test: Dataset,
}

fn prepare_cell(
    data: &Dataset,
    fold_def: &Fold,
    fold: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<Prepared> {
    let (train_idx, valid_idx) = split_validation(
        data,
        &fold_def.train,
        config.validation_fraction,
        &mut rng::stream(config.split_seed, "validation", fold as u64),
    );
    let train_real = data.subset(&train_idx, format!("{}-train", data.name));
    let cell_seed = rng::derive_seed(seed, "cell", fold as u64);
    let train = oversample_minority(&train_real, &mut rng::stream(cell_seed, "smote", 0))?;
    let valid = (!valid_idx.is_empty()).then(|| data.subset(&valid_idx, format!("{}-valid", data.name)));
    let test = data.subset(&fold_def.test, format!("{}-test", data.name));
    let split = SplitRecord {
        fold,
        seed,
        train_patients: unique_patients(&train_real.spectra),
        valid_patients: valid.as_ref().map_or_else(Vec::new, |v| unique_patients(&v.spectra)),
        test_patients: fold_def.test_patients.clone(),
        train_indices: train_idx,
        valid_indices: valid_idx,
        test_indices: fold_def.test.clone(),
    };
    Ok(Prepared {
        split,
        train,
        valid,
        test,
    })
}

/// Certain members plus, for a class with no certain member, every real
/// training spectrum of that class.
fn augmentation_pool(train: &Dataset, certain: &CertainSet) -> (Vec<Spectrum>, Vec<Class>) {
    let mut pool: Vec<Spectrum> = certain
        .member_indices
        .iter()
        .map(|&i| train.spectra[i].clone())
        .collect();
    let mut filled = Vec::new();
    for class in Class::ALL {
        if !pool.iter().any(|s| s.label == class) {
            warn!("certain set holds no {class} spectra; using all {class} training spectra");
            pool.extend(
                train
                    .spectra
                    .iter()
                    .filter(|s| !s.synthetic && s.label == class)
                    .cloned(),
            );
            filled.push(class);
        }
    }
    (pool, filled)
}

fn provenance_csv(pool: &[Spectrum], prov: &[Provenance]) -> String {
    let mut s = String::from("sample,target,partner,target_patient,partner_patient\n");
    for (k, p) in prov.iter().enumerate() {
        let (partner, pp) = match p.partner {
            Some(j) => (j.to_string(), pool[j].patient_id.clone()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(s, "{k},{},{partner},{},{pp}", p.target, pool[p.target].patient_id);
    }
    s
}

fn predictions_csv(test: &Dataset, indices: &[usize], probs: &[[f64; 2]], target: EvalTarget) -> String {
    let mut s = String::from("index,patient_id,label,reference,prob_tumor\n");
    for ((sp, &i), p) in test.spectra.iter().zip(indices).zip(probs) {
        let _ = writeln!(
            s,
            "{i},{},{},{},{}",
            sp.patient_id,
            sp.label.index(),
            reference_label(sp, target).index(),
            p[1]
        );
    }
    s
}

#[derive(Serialize)]
struct CellStatus<'a> {
    cell: &'a str,
    certain_members: Option<usize>,
    filled_classes: BTreeMap<String, Vec<Class>>,
}

/// Runs every point on one fold x seed cell.
fn run_cell(
    data: &Dataset,
    fold_def: &Fold,
    fold: usize,
    seed: u64,
    points: &[Point],
    config: &ExperimentConfig,
    cell_dir: Option<&Path>,
) -> Result<Vec<Result<EvalReport>>> {
    let name = cell_name(fold, seed);
    info!("cell {name}: preparing");
    let prep = prepare_cell(data, fold_def, fold, seed, config)?;
    let cell_seed = rng::derive_seed(seed, "cell", fold as u64);
    let mut stages = StageRecord::default();
    stages
        .stages
        .insert("oversample".into(), unique_patients(&prep.train.spectra));
    if let Some(v) = &prep.valid {
        stages.stages.insert("validation".into(), unique_patients(&v.spectra));
    }
    if let Some(dir) = cell_dir {
        write_json(&dir.join("split.json"), &prep.split)?;
    }

    let max_e = points
        .iter()
        .filter(|p| p.needs_distillation())
        .map(|p| p.max_epoch)
        .max();
    let certain_full = match max_e {
        Some(e) => {
            let dcfg = crate::distill::DistillConfig {
                max_epoch: e,
                ..config.distill.clone()
            };
            info!("cell {name}: distilling for {e} epochs");
            let out = run_distillation(
                &prep.train,
                &dcfg,
                rng::derive_seed(cell_seed, "distill", 0),
                config.persist_checkpoints,
            )?;
            stages
                .stages
                .insert("distill".into(), unique_patients(&prep.train.spectra));
            stages.stages.insert(
                "certain".into(),
                unique_patients(out.certain.member_indices.iter().map(|&i| &prep.train.spectra[i])),
            );
            if let Some(dir) = cell_dir {
                let d = dir.join("distill");
                write_json(&d.join("certain.json"), &out.certain)?;
                let real: Vec<usize> = (0..prep.train.len())
                    .filter(|&i| !prep.train.spectra[i].synthetic)
                    .collect();
                let real_set = prep.train.subset(&real, "real");
                let pos: BTreeMap<usize, usize> = real.iter().enumerate().map(|(k, &i)| (i, k)).collect();
                let members: Vec<usize> = out.certain.member_indices.iter().map(|i| pos[i]).collect();
                if real_set.has_both_classes() {
                    let shift = distance_shift_report(&real_set, &members, 20)?;
                    write_file(&d.join("distance_shift.csv"), shift.to_csv())?;
                    write_json(&d.join("distance_shift.json"), &shift)?;
                }
                for (k, snap) in out.snapshots.iter().enumerate() {
                    let ck = Checkpoint {
                        network: snap.clone(),
                        adam: None,
                        log: Vec::new(),
                    };
                    save_checkpoint(&ck, d.join(format!("epoch{}.ckpt", k + 1)))?;
                }
            }
            Some(out.certain)
        }
        None => None,
    };
    if let Some(dir) = cell_dir {
        write_json(&dir.join("stages.json"), &stages)?;
    }

    let mut results = Vec::with_capacity(points.len());
    let mut filled_log = BTreeMap::new();
    for point in points {
        let label = point.label();
        let r = (|| -> Result<EvalReport> {
            let mut point_stages = StageRecord::default();
            let pdir = cell_dir.map(|d| d.join(&label));
            let train_set = match (point.strategy.strategy(), &certain_full) {
                (Some(strategy), Some(full)) => {
                    let certain = full.truncated(point.max_epoch);
                    let (pool, filled) = augmentation_pool(&prep.train, &certain);
                    filled_log.insert(label.clone(), filled);
                    let acfg = AugmentConfig {
                        strategy,
                        alpha: point.alpha,
                        factor: point.factor,
                        noise_sigma: config.augment.noise_sigma,
                        seed: rng::derive_seed(cell_seed, "augment", 0),
                    };
                    let aug = augment_set(&pool, &acfg)?;
                    point_stages.stages.insert("pool".into(), unique_patients(&pool));
                    point_stages
                        .stages
                        .insert("augment".into(), unique_patients(&aug.samples));
                    if let Some(d) = &pdir {
                        write_file(&d.join("provenance.csv"), provenance_csv(&pool, &aug.provenance))?;
                    }
                    let mut spectra = pool;
                    spectra.extend(aug.samples);
                    Dataset::new(format!("{}-{label}", data.name), spectra)?
                }
                _ => prep.train.clone(),
            };
            point_stages
                .stages
                .insert("primary".into(), unique_patients(&train_set.spectra));
            let net = Network::new(config.network.clone(), rng::derive_seed(cell_seed, "primary-init", 0))?;
            let mut tcfg = config.train.clone();
            tcfg.seed = rng::derive_seed(cell_seed, "primary-train", 0);
            info!("cell {name} / {label}: training on {} spectra", train_set.len());
            let outcome = train(net, &train_set, prep.valid.as_ref(), &tcfg)?;
            let (report, probs) = evaluate_network(&outcome.network, &prep.test, config.eval_against)?;
            info!("cell {name} / {label}: test AUC {:.4}", report.auc);
            if let Some(d) = &pdir {
                write_json(&d.join("stages.json"), &point_stages)?;
                write_json(&d.join("report.json"), &report)?;
                write_file(&d.join("roc.csv"), roc_csv(&report.roc_points))?;
                write_json(&d.join("train_log.json"), &outcome.log)?;
                write_file(
                    &d.join("predictions.csv"),
                    predictions_csv(&prep.test, &prep.split.test_indices, &probs, config.eval_against),
                )?;
                if config.persist_checkpoints {
                    let ck = Checkpoint {
                        network: outcome.network,
                        adam: None,
                        log: outcome.log,
                    };
                    save_checkpoint(&ck, d.join("model.ckpt"))?;
                }
            }
            Ok(report)
        })();
        if let Err(e) = &r {
            error!("cell {name} / {label} failed: {e}");
        }
        results.push(r);
    }
    if let Some(dir) = cell_dir {
        write_json(
            &dir.join("status.json"),
            &CellStatus {
                cell: &name,
                certain_members: certain_full.as_ref().map(CertainSet::len),
                filled_classes: filled_log,
            },
        )?;
    }
    Ok(results)
}

/// Deduplicates points that compute the same thing (the plain arm ignores
/// alpha, factor and epoch).
fn canonical(p: &Point) -> Point {
    match p.strategy {
        Arm::None => Point {
            strategy: Arm::None,
            alpha: 0.0,
            factor: 0,
            max_epoch: 0,
        },
        _ => *p,
    }
}

/// Runs `points` over every fold x seed cell. Artifacts go to
/// `out_root/run-<hash>` when `out_root` is given.
pub fn run_points(config: &ExperimentConfig, points: &[Point], out_root: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::argument("no parameter points to run"));
    }
    let data = load_experiment_data(config)?;
    let folds = split_leave_subjects_out(&data, config.folds, &mut rng::stream(config.split_seed, "folds", 0))?;
    let hash = config.hash();
    let run_dir = out_root.map(|r| r.join(format!("run-{}", &hash[..16])));
    if let Some(dir) = &run_dir {
        write_json(&dir.join("config.json"), config)?;
    }

    let mut unique: Vec<Point> = Vec::new();
    let mut slot = Vec::with_capacity(points.len());
    for p in points {
        let c = canonical(p);
        let k = match unique.iter().position(|u| u.label() == c.label()) {
            Some(k) => k,
            None => {
                unique.push(c);
                unique.len() - 1
            }
        };
        slot.push(k);
    }

    let cells: Vec<(usize, u64)> = config
        .seeds
        .iter()
        .flat_map(|&s| (0..folds.len()).map(move |f| (f, s)))
        .collect();
    let results: Mutex<Vec<Option<Vec<Result<EvalReport>>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let c = next.fetch_add(1, Ordering::SeqCst);
        if c >= cells.len() {
            break;
        }
        let (f, s) = cells[c];
        let dir = run_dir.as_ref().map(|d| d.join("cells").join(cell_name(f, s)));
        let r = run_cell(&data, &folds[f], f, s, &unique, config, dir.as_deref()).unwrap_or_else(|e| {
            error!("cell {} failed: {e}", cell_name(f, s));
            unique.iter().map(|_| Err(Error::Other(e.to_string()))).collect()
        });
        results.lock().expect("results lock")[c] = Some(r);
    };
    if config.jobs <= 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..config.jobs.min(cells.len()) {
                scope.spawn(worker);
            }
        });
    }
    let results = results.into_inner().expect("results lock");

    let mut summaries = Vec::with_capacity(points.len());
    for (p, &k) in points.iter().zip(&slot) {
        let mut reports = Vec::new();
        let mut missing = Vec::new();
        for (c, &(f, s)) in cells.iter().enumerate() {
            match results[c].as_ref().map(|r| &r[k]) {
                Some(Ok(rep)) => reports.push(rep.clone()),
                _ => missing.push(cell_name(f, s)),
            }
        }
        let summary = if reports.is_empty() {
            None
        } else {
            let mut s = summarize_cv(reports)?;
            s.missing = missing.clone();
            Some(s)
        };
        summaries.push(PointSummary {
            point: *p,
            label: p.label(),
            summary,
            missing,
        });
    }
    let result = ExperimentResult {
        config_hash: hash,
        points: summaries,
        run_dir: run_dir.clone(),
    };
    if let Some(dir) = &run_dir {
        write_json(&dir.join("summary.json"), &result)?;
        write_file(&dir.join("sweep.csv"), result.sweep_csv())?;
    }
    Ok(result)
}

/// One point per configured strategy.
pub fn run_experiment(config: &ExperimentConfig, out_root: Option<&Path>) -> Result<ExperimentResult> {
    run_points(config, &config.base_points(), out_root)
}

/// Every point of the sweep grid on shared folds.
pub fn run_sweep(config: &ExperimentConfig, out_root: Option<&Path>) -> Result<ExperimentResult> {
    let grid = config
        .sweep
        .as_ref()
        .filter(|g| !g.is_empty())
        .ok_or_else(|| Error::config("sweep grid is empty"))?;
    run_points(config, &config.grid_points(grid), out_root)
}
