use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{read_json, SplitRecord, StageRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub cells_checked: usize,
    pub stage_lists_checked: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.cells_checked > 0
    }
}

fn sorted_dirs(path: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn check_csv_patients(path: &Path, test: &BTreeSet<&str>, where_: &str, out: &mut AuditReport) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (n, line) in text.lines().enumerate().skip(1) {
        for field in line.split(',').skip(3) {
            if test.contains(field) {
                out.violations
                    .push(format!("{where_}: line {} uses test patient {field}", n + 1));
            }
        }
    }
    Ok(())
}

/// Checks every persisted training-side patient list of a run directory
/// against the cell's held-out test patients.
pub fn audit_run(run_dir: &Path) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    let cells = run_dir.join("cells");
    for cell in sorted_dirs(&cells)? {
        let split: SplitRecord = read_json(&cell.join("split.json"))?;
        let test: BTreeSet<&str> = split.test_patients.iter().map(String::as_str).collect();
        let name = cell.file_name().unwrap_or_default().to_string_lossy().to_string();
        report.cells_checked += 1;
        for p in split.train_patients.iter().chain(&split.valid_patients) {
            if test.contains(p.as_str()) {
                report
                    .violations
                    .push(format!("{name}: split puts test patient {p} on the training side"));
            }
        }
        let mut stage_files = vec![cell.join("stages.json")];
        for sub in sorted_dirs(&cell)? {
            let f = sub.join("stages.json");
            if f.exists() {
                stage_files.push(f);
            }
            let prov = sub.join("provenance.csv");
            if prov.exists() {
                check_csv_patients(&prov, &test, &format!("{name}/provenance"), &mut report)?;
            }
        }
        for f in stage_files {
            let rec: StageRecord = read_json(&f)?;
            for (stage, patients) in &rec.stages {
                report.stage_lists_checked += 1;
                for p in patients {
                    if test.contains(p.as_str()) {
                        report
                            .violations
                            .push(format!("{name}: stage {stage} ({}) saw test patient {p}", f.display()));
                    }
                }
            }
        }
    }
    Ok(report)
}
