use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::{read_json, write_file, ExperimentResult};
use crate::distill::{CertainSet, DistanceShiftReport};
use crate::error::{Error, Result};
use crate::eval::{summarize_cv, EvalReport};

fn cell_dirs(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let cells = run_dir.join("cells");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&cells).map_err(|e| Error::io(&cells, e))? {
        let p = entry.map_err(|e| Error::io(&cells, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn name_of(p: &Path) -> String {
    p.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

/// Rebuilds every table under `run_dir/tables` from persisted per-cell
/// artifacts; returns the written paths.
pub fn regenerate_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut summary: ExperimentResult = read_json(&run_dir.join("summary.json"))?;
    let cells = cell_dirs(run_dir)?;
    let tables = run_dir.join("tables");
    let mut written = Vec::new();

    let mut per_cell =
        String::from("cell,point,auc,sensitivity,specificity,youden_sensitivity,youden_specificity,patient_accuracy\n");
    for p in &mut summary.points {
        let mut reports = Vec::new();
        let mut missing = Vec::new();
        for c in &cells {
            let f = c.join(&p.label).join("report.json");
            if !f.exists() {
                missing.push(name_of(c));
                continue;
            }
            let r: EvalReport = read_json(&f)?;
            let _ = writeln!(
                per_cell,
                "{},{},{},{},{},{},{},{}",
                name_of(c),
                p.label,
                r.auc,
                r.sensitivity,
                r.specificity,
                r.youden.sensitivity,
                r.youden.specificity,
                r.patient_accuracy
            );
            reports.push(r);
        }
        p.summary = if reports.is_empty() {
            None
        } else {
            let mut s = summarize_cv(reports)?;
            s.missing = missing.clone();
            Some(s)
        };
        p.missing = missing;
    }
    let mut emit = |name: &str, text: String| -> Result<()> {
        let path = tables.join(name);
        write_file(&path, text)?;
        written.push(path);
        Ok(())
    };
    emit("sweep.csv", summary.sweep_csv())?;
    emit("cells.csv", per_cell)?;

    let mut counts = String::from("cell,epoch,collected,cumulative\n");
    let mut shift = String::from("cell,class,full_median,distilled_median\n");
    for c in &cells {
        let cf = c.join("distill").join("certain.json");
        if cf.exists() {
            let set: CertainSet = read_json(&cf)?;
            for (e, (n, cum)) in set.per_epoch_counts.iter().zip(&set.cumulative_counts).enumerate() {
                let _ = writeln!(counts, "{},{},{n},{cum}", name_of(c), e + 1);
            }
        }
        let sf = c.join("distill").join("distance_shift.json");
        if sf.exists() {
            let rep: DistanceShiftReport = read_json(&sf)?;
            for cls in &rep.classes {
                let dm = cls.distilled_median.map_or_else(|| "NA".to_string(), |m| m.to_string());
                let _ = writeln!(shift, "{},{},{},{dm}", name_of(c), cls.class, cls.full_median);
            }
        }
    }
    emit("distill_counts.csv", counts)?;
    emit("distance_shift_medians.csv", shift)?;
    Ok(written)
}
