//! ROC analysis, operating-point metrics, patient-wise accuracy and
//! cross-validation aggregation. Scores are tumor-class probabilities; the
//! positive class is [`Class::Tumor`].

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::Class;

/// Fixed operating threshold for reported sensitivity/specificity.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn class_totals(labels: &[Class]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&c| c == Class::Tumor).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::argument("rates undefined: labels must contain both classes"));
    }
    Ok((pos, neg))
}

/// `(FPR, TPR)` points from (0,0) to (1,1), one per distinct score threshold
/// in descending order; tied scores enter together.
pub fn roc_curve(scores: &[f64], labels: &[Class]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument("scores must be finite"));
    }
    let (pos, neg) = class_totals(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Class::Tumor => tp += 1,
                Class::Healthy => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under an ROC point list.
pub fn auc(roc_points: &[(f64, f64)]) -> f64 {
    roc_points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

pub fn auc_from_scores(scores: &[f64], labels: &[Class]) -> Result<f64> {
    Ok(auc(&roc_curve(scores, labels)?))
}

/// `(sensitivity, specificity)` when predicting tumor iff `score >= threshold`.
pub fn sen_spe_at(scores: &[f64], labels: &[Class], threshold: f64) -> Result<(f64, f64)> {
    let (pos, neg) = class_totals(labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &c) in scores.iter().zip(labels) {
        match (s >= threshold, c) {
            (true, Class::Tumor) => tp += 1,
            (false, Class::Healthy) => tn += 1,
            _ => {}
        }
    }
    Ok((tp as f64 / pos as f64, tn as f64 / neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Threshold maximizing `sensitivity + specificity - 1` (first maximum in
/// descending-threshold order).
pub fn youden_point(scores: &[f64], labels: &[Class]) -> Result<OperatingPoint> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut best: Option<(f64, OperatingPoint)> = None;
    for t in thresholds {
        let (sen, spe) = sen_spe_at(scores, labels, t)?;
        let j = sen + spe - 1.0;
        if best.as_ref().is_none_or(|(bj, _)| j > *bj) {
            best = Some((
                j,
                OperatingPoint {
                    threshold: t,
                    sensitivity: sen,
                    specificity: spe,
                },
            ));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| Error::argument("no scores"))
}

/// Patient-wise accuracy: average each patient's class-probability rows,
/// predict the argmax (exact ties go to class 0) and compare with the
/// patient's diagnosis.
pub fn patient_accuracy(
    probs: &[[f64; 2]],
    patient_ids: &[String],
    patient_labels: &BTreeMap<String, Class>,
) -> Result<f64> {
    if probs.len() != patient_ids.len() {
        return Err(Error::argument("probabilities and patient ids differ in length"));
    }
    let mut sums: BTreeMap<&str, ([f64; 2], usize)> = BTreeMap::new();
    for (p, id) in probs.iter().zip(patient_ids) {
        let e = sums.entry(id.as_str()).or_insert(([0.0; 2], 0));
        e.0[0] += p[0];
        e.0[1] += p[1];
        e.1 += 1;
    }
    if sums.is_empty() {
        return Err(Error::argument("no spectra"));
    }
    let mut correct = 0usize;
    for (id, (sum, n)) in &sums {
        let truth = patient_labels
            .get(*id)
            .ok_or_else(|| Error::argument(format!("no diagnosis for patient {id}")))?;
        let mean = [sum[0] / *n as f64, sum[1] / *n as f64];
        let predicted = if mean[1] > mean[0] {
            Class::Tumor
        } else {
            if mean[1] == mean[0] {
                debug!("patient {id}: tied mean probabilities, predicting class 0");
            }
            Class::Healthy
        };
        if predicted == *truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / sums.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_points: Vec<(f64, f64)>,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Threshold behind `sensitivity` / `specificity`.
    pub threshold: f64,
    pub youden: OperatingPoint,
    pub patient_accuracy: f64,
    pub n_spectra: usize,
    pub n_patients: usize,
}

/// Full report for per-spectrum probability rows against reference labels.
pub fn evaluate(
    probs: &[[f64; 2]],
    labels: &[Class],
    patient_ids: &[String],
    patient_labels: &BTreeMap<String, Class>,
) -> Result<EvalReport> {
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let roc_points = roc_curve(&scores, labels)?;
    let (sensitivity, specificity) = sen_spe_at(&scores, labels, DEFAULT_THRESHOLD)?;
    let n_patients = {
        let mut ids: Vec<&String> = patient_ids.iter().collect();
        ids.sort();
        ids.dedup();
        ids.len()
    };
    Ok(EvalReport {
        auc: auc(&roc_points),
        roc_points,
        sensitivity,
        specificity,
        threshold: DEFAULT_THRESHOLD,
        youden: youden_point(&scores, labels)?,
        patient_accuracy: patient_accuracy(probs, patient_ids, patient_labels)?,
        n_spectra: probs.len(),
        n_patients,
    })
}

/// ROC points as a two-column CSV.
pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (f, t) in points {
        s.push_str(&format!("{f},{t}\n"));
    }
    s
}

/// Mean and sample (n-1) standard deviation; a single value has std 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub per_fold: Vec<EvalReport>,
    pub auc: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub youden_sensitivity: MeanStd,
    pub youden_specificity: MeanStd,
    pub patient_accuracy: MeanStd,
    /// Labels of cells that failed and are absent from `per_fold`.
    #[serde(default)]
    pub missing: Vec<String>,
}

pub fn summarize_cv(per_fold: Vec<EvalReport>) -> Result<CvSummary> {
    if per_fold.is_empty() {
        return Err(Error::argument("no fold reports to summarize"));
    }
    let stat = |f: fn(&EvalReport) -> f64| MeanStd::of(&per_fold.iter().map(f).collect::<Vec<_>>());
    Ok(CvSummary {
        auc: stat(|r| r.auc),
        sensitivity: stat(|r| r.sensitivity),
        specificity: stat(|r| r.specificity),
        youden_sensitivity: stat(|r| r.youden.sensitivity),
        youden_specificity: stat(|r| r.youden.specificity),
        patient_accuracy: stat(|r| r.patient_accuracy),
        per_fold,
        missing: Vec::new(),
    })
}
