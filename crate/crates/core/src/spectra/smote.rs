use log::warn;
use rand::Rng;

use super::{Class, Dataset, Spectrum};
use crate::error::{Error, Result};

/// Neighbors considered when picking an interpolation partner.
pub const SMOTE_NEIGHBORS: usize = 5;

/// Point on the segment from `a` to `b` at fraction `gap`.
pub fn smote_interpolate(a: &[f64], b: &[f64], gap: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + gap * (y - x)).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// SMOTE-style balancing: appends synthetic minority spectra, each on the
/// segment between a minority spectrum and one of its nearest minority
/// neighbors, until both classes have equal counts. Base spectra are cycled in
/// order; neighbor and interpolation fraction are drawn from `rng`.
pub fn oversample_minority<R: Rng + ?Sized>(train: &Dataset, rng: &mut R) -> Result<Dataset> {
    let counts = train.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::argument("oversampling needs both classes in the training set"));
    }
    if counts[0] == counts[1] {
        return Ok(train.clone());
    }
    let minority = if counts[0] < counts[1] {
        Class::Healthy
    } else {
        Class::Tumor
    };
    let needed = counts[minority.opposite().index()] - counts[minority.index()];
    let members: Vec<&Spectrum> = train.spectra.iter().filter(|s| s.label == minority).collect();

    let mut out = train.clone();
    out.spectra.reserve(needed);

    if members.len() == 1 {
        warn!("minority class {minority} has a single spectrum; duplicating instead of interpolating");
        for _ in 0..needed {
            let mut s = members[0].clone();
            s.synthetic = true;
            s.true_label = None;
            out.spectra.push(s);
        }
        return Ok(out);
    }

    let kappa = SMOTE_NEIGHBORS.min(members.len() - 1);
    let neighbors: Vec<Vec<usize>> = members
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut d: Vec<(f64, usize)> = members
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, b)| (squared_distance(&a.values, &b.values), j))
                .collect();
            d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            d.into_iter().take(kappa).map(|(_, j)| j).collect()
        })
        .collect();

    for n in 0..needed {
        let base = n % members.len();
        let partner = neighbors[base][rng.random_range(0..kappa)];
        let gap: f64 = rng.random();
        out.spectra.push(Spectrum {
            values: smote_interpolate(&members[base].values, &members[partner].values, gap),
            patient_id: members[base].patient_id.clone(),
            label: minority,
            true_label: None,
            synthetic: true,
        });
    }
    Ok(out)
}
