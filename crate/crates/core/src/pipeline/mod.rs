//! Cross-validated experiments: split, oversample, distill, augment, train
//! and evaluate per fold and seed, with every intermediate persisted.

mod audit;
mod config;
mod logistic;
mod report;
mod run;

pub use audit::{audit_run, AuditReport};
pub use config::{Arm, Axis, EvalTarget, ExperimentConfig, Point, SweepGrid};
pub use logistic::{baseline_logistic, fit_logistic, LogisticConfig, LogisticModel};
pub use report::regenerate_report;
pub use run::{
    cell_name, evaluate_network, load_experiment_data, patient_labels, reference_label, run_experiment, run_points,
    run_sweep, ExperimentResult, PointSummary, SplitRecord, StageRecord,
};
