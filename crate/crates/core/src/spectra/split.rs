use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// One cross-validation fold: spectrum indices for training and testing plus
/// the held-out patient ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_patients: Vec<String>,
}

fn chunk_sizes(n: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..k).map(move |i| n / k + usize::from(i < n % k))
}

/// Leave-subjects-out k-fold split: patients are shuffled and dealt into `k`
/// sub-lists whose sizes differ by at most one; fold `i` tests on sub-list `i`.
pub fn split_leave_subjects_out<R: Rng + ?Sized>(dataset: &Dataset, k: usize, rng: &mut R) -> Result<Vec<Fold>> {
    let mut patients = dataset.patients();
    if k < 2 {
        return Err(Error::argument(format!(
            "k must be at least 2 (got {k}); a single fold leaves no training data"
        )));
    }
    if patients.len() < k {
        return Err(Error::argument(format!(
            "{} patients cannot be split into {k} folds",
            patients.len()
        )));
    }
    patients.shuffle(rng);

    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for size in chunk_sizes(patients.len(), k) {
        let held: BTreeSet<&str> = patients[start..start + size].iter().map(String::as_str).collect();
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..dataset.len()).partition(|&i| held.contains(dataset.spectra[i].patient_id.as_str()));
        let mut test_patients: Vec<String> = held.iter().map(|s| s.to_string()).collect();
        test_patients.sort();
        folds.push(Fold {
            train,
            test,
            test_patients,
        });
        start += size;
    }
    Ok(folds)
}

/// Splits `indices` patient-wise into (train, validation), holding out
/// `fraction` of the patients (at least one, never all).
pub fn split_validation<R: Rng + ?Sized>(
    dataset: &Dataset,
    indices: &[usize],
    fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut patients: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for &i in indices {
        let p = dataset.spectra[i].patient_id.as_str();
        if seen.insert(p) {
            patients.push(p);
        }
    }
    if patients.len() < 2 || fraction <= 0.0 {
        return (indices.to_vec(), Vec::new());
    }
    patients.shuffle(rng);
    let n_valid = ((patients.len() as f64 * fraction).round() as usize).clamp(1, patients.len() - 1);
    let held: BTreeSet<&str> = patients[..n_valid].iter().copied().collect();
    indices
        .iter()
        .partition(|&&i| !held.contains(dataset.spectra[i].patient_id.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spectra::{Class, Spectrum, SPECTRUM_LEN};

    fn cohort(patients: usize, voxels: usize) -> Dataset {
        let spectra = (0..patients)
            .flat_map(|p| {
                (0..voxels).map(move |_| Spectrum::new(vec![0.0; SPECTRUM_LEN], format!("p{p}"), Class::Healthy))
            })
            .collect();
        Dataset::new("t", spectra).unwrap()
    }

    #[test]
    fn forty_patients_ten_folds_four_each() {
        let ds = cohort(40, 3);
        let folds = split_leave_subjects_out(&ds, 10, &mut rng::seeded(1)).unwrap();
        assert_eq!(folds.len(), 10);
        for f in &folds {
            assert_eq!(f.test_patients.len(), 4);
            assert_eq!(f.test.len(), 12);
            assert_eq!(f.train.len(), 108);
        }
    }

    #[test]
    fn degenerate_k_rejected() {
        let ds = cohort(5, 2);
        assert!(split_leave_subjects_out(&ds, 1, &mut rng::seeded(1)).is_err());
        assert!(split_leave_subjects_out(&ds, 6, &mut rng::seeded(1)).is_err());
        assert!(split_leave_subjects_out(&ds, 5, &mut rng::seeded(1)).is_ok());
    }

    #[test]
    fn validation_split_is_patient_wise() {
        let ds = cohort(20, 4);
        let all: Vec<usize> = (0..ds.len()).collect();
        let (train, valid) = split_validation(&ds, &all, 0.1, &mut rng::seeded(4));
        assert_eq!(valid.len(), 8);
        assert_eq!(train.len() + valid.len(), ds.len());
        let vp: BTreeSet<_> = valid.iter().map(|&i| &ds.spectra[i].patient_id).collect();
        assert!(train.iter().all(|i| !vp.contains(&ds.spectra[*i].patient_id)));
    }
}
