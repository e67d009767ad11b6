//! Spectra, labeled patient-grouped datasets, and the synthetic cohort
//! generator that stands in for clinical acquisitions.

mod generate;
mod io;
mod smote;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{
    generate_cohort, generate_spectrum, ClassProfiles, CohortConfig, LabelNoiseMode, LabelNoiseSpec, MetabolitePeak,
    DEFAULT_COHORT_JSON,
};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use smote::{oversample_minority, smote_interpolate, SMOTE_NEIGHBORS};
pub use split::{split_leave_subjects_out, split_validation, Fold};

/// Number of samples in every spectrum.
pub const SPECTRUM_LEN: usize = 288;

/// Binary diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Class {
    Healthy = 0,
    Tumor = 1,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Healthy, Class::Tumor];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        match i {
            0 => Some(Class::Healthy),
            1 => Some(Class::Tumor),
            _ => None,
        }
    }

    pub fn opposite(self) -> Class {
        match self {
            Class::Healthy => Class::Tumor,
            Class::Tumor => Class::Healthy,
        }
    }
}

impl From<Class> for u8 {
    fn from(c: Class) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for Class {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Class::from_index(usize::from(v)).ok_or_else(|| format!("class must be 0 or 1, got {v}"))
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Class::Healthy => f.write_str("healthy"),
            Class::Tumor => f.write_str("tumor"),
        }
    }
}

/// One voxel's spectrum with its (possibly noisy) label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub patient_id: String,
    pub label: Class,
    /// Generator ground truth; `None` for real-world or synthesized samples.
    pub true_label: Option<Class>,
    /// Produced by oversampling or augmentation rather than acquisition.
    pub synthetic: bool,
}

impl Spectrum {
    pub fn new(values: Vec<f64>, patient_id: impl Into<String>, label: Class) -> Self {
        Spectrum {
            values,
            patient_id: patient_id.into(),
            label,
            true_label: None,
            synthetic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != SPECTRUM_LEN {
            return Err(Error::shape(format!(
                "spectrum of patient {:?} has {} values, expected {SPECTRUM_LEN}",
                self.patient_id,
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::argument(format!(
                "spectrum of patient {:?} has non-finite value at position {i}",
                self.patient_id
            )));
        }
        if self.patient_id.is_empty() {
            return Err(Error::argument("empty patient id"));
        }
        Ok(())
    }
}

/// A labeled, patient-grouped collection of spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub spectra: Vec<Spectrum>,
}

impl Dataset {
    /// Builds a dataset, checking that it is nonempty and every spectrum is well formed.
    pub fn new(name: impl Into<String>, spectra: Vec<Spectrum>) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            spectra,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spectra.is_empty() {
            return Err(Error::argument(format!("dataset {:?} is empty", self.name)));
        }
        self.spectra.iter().try_for_each(Spectrum::validate)
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn labels(&self) -> Vec<Class> {
        self.spectra.iter().map(|s| s.label).collect()
    }

    /// Distinct patient ids in order of first appearance.
    pub fn patients(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in &self.spectra {
            if seen.insert(s.patient_id.as_str()) {
                out.push(s.patient_id.clone());
            }
        }
        out
    }

    /// Spectrum indices grouped by patient id.
    pub fn patient_index(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.spectra.iter().enumerate() {
            map.entry(s.patient_id.as_str()).or_default().push(i);
        }
        map
    }

    /// Spectrum counts per observed label, indexed by [`Class::index`].
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for s in &self.spectra {
            counts[s.label.index()] += 1;
        }
        counts
    }

    pub fn has_both_classes(&self) -> bool {
        let c = self.class_counts();
        c[0] > 0 && c[1] > 0
    }

    /// Copies the listed spectra into a new dataset (indices may repeat).
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            spectra: indices.iter().map(|&i| self.spectra[i].clone()).collect(),
        }
    }

    /// Fraction of spectra whose observed label matches the generator ground
    /// truth, over spectra where the ground truth is known.
    pub fn clean_fraction(&self) -> Option<f64> {
        fraction_clean(self.spectra.iter())
    }
}

pub(crate) fn fraction_clean<'a>(spectra: impl Iterator<Item = &'a Spectrum>) -> Option<f64> {
    let (mut known, mut clean) = (0usize, 0usize);
    for s in spectra {
        if let Some(t) = s.true_label {
            known += 1;
            if t == s.label {
                clean += 1;
            }
        }
    }
    (known > 0).then(|| clean as f64 / known as f64)
}

/// Per-coordinate standard deviation (population) over a set of spectra.
pub fn coordinate_std<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> Vec<f64> {
    let mut n = 0usize;
    let mut mean = vec![0.0; SPECTRUM_LEN];
    let mut m2 = vec![0.0; SPECTRUM_LEN];
    for s in spectra {
        n += 1;
        for (j, &v) in s.values.iter().enumerate() {
            let d = v - mean[j];
            mean[j] += d / n as f64;
            m2[j] += d * (v - mean[j]);
        }
    }
    if n == 0 {
        return vec![0.0; SPECTRUM_LEN];
    }
    m2.into_iter().map(|s| (s / n as f64).sqrt()).collect()
}
