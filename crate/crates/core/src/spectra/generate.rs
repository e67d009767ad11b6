use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Class, Dataset, Spectrum, SPECTRUM_LEN};
use crate::error::{Error, Result};
use crate::rng;

/// Shipped default cohort description (peak table on a 4.3 to 0.5 ppm axis).
pub const DEFAULT_COHORT_JSON: &str = include_str!("../../config/cohort.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetabolitePeak {
    pub name: String,
    pub center_index: usize,
    /// Gaussian standard deviation in samples.
    pub width: f64,
    /// Closed interval the per-spectrum amplitude is drawn from.
    pub amplitude_range: [f64; 2],
}

impl MetabolitePeak {
    pub fn validate(&self) -> Result<()> {
        if self.center_index >= SPECTRUM_LEN {
            return Err(Error::config(format!(
                "peak {} center index {} outside [0, {SPECTRUM_LEN})",
                self.name, self.center_index
            )));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::config(format!("peak {} width must be positive", self.name)));
        }
        let [lo, hi] = self.amplitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config(format!(
                "peak {} amplitude range [{lo}, {hi}] is empty",
                self.name
            )));
        }
        Ok(())
    }

    fn draw_amplitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [lo, hi] = self.amplitude_range;
        let u: f64 = rng.random();
        lo + (hi - lo) * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelNoiseMode {
    None,
    /// Flip true-healthy spectra to tumor only.
    Asymmetric,
    /// Flip either class.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelNoiseSpec {
    pub mode: LabelNoiseMode,
    pub rate: f64,
}

impl Default for LabelNoiseSpec {
    fn default() -> Self {
        LabelNoiseSpec {
            mode: LabelNoiseMode::Asymmetric,
            rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfiles {
    pub healthy: Vec<MetabolitePeak>,
    pub tumor: Vec<MetabolitePeak>,
}

impl ClassProfiles {
    pub fn get(&self, class: Class) -> &[MetabolitePeak] {
        match class {
            Class::Healthy => &self.healthy,
            Class::Tumor => &self.tumor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_patients: usize,
    /// Inclusive range of voxel counts per patient.
    pub voxels_per_patient_range: [usize; 2],
    pub class_profiles: ClassProfiles,
    pub baseline_distortion_amplitude: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub label_noise: LabelNoiseSpec,
    /// Fraction of patients assigned the tumor class.
    #[serde(default = "default_tumor_fraction")]
    pub tumor_fraction: f64,
    /// Relative spread of a per-patient multiplicative gain on all peaks.
    #[serde(default)]
    pub patient_gain_sigma: f64,
    /// Partial-volume model of the label noise. When the upper bound is
    /// positive, every flippable spectrum gets a latent `z ~ U(0, 1)`, is
    /// blended with opposite-class tissue at fraction `lo + (hi - lo) z`, and
    /// flips with probability `min(1, 2 rate)` when `z >= 1/2` and
    /// `max(0, 2 rate - 1)` otherwise, so the mean flip rate is still `rate`.
    /// `[0, 0]` flips uniformly.
    #[serde(default)]
    pub partial_volume: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

fn default_tumor_fraction() -> f64 {
    0.5
}

impl Default for CohortConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_COHORT_JSON).expect("shipped cohort config parses")
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients < 2 {
            return Err(Error::config("n_patients must be at least 2"));
        }
        let [lo, hi] = self.voxels_per_patient_range;
        if lo < 1 || lo > hi {
            return Err(Error::config(format!("voxels_per_patient_range [{lo}, {hi}] invalid")));
        }
        for class in Class::ALL {
            let profile = self.class_profiles.get(class);
            if profile.is_empty() {
                return Err(Error::config(format!("class profile for {class} is empty")));
            }
            profile.iter().try_for_each(MetabolitePeak::validate)?;
        }
        for (name, v) in [
            ("baseline_distortion_amplitude", self.baseline_distortion_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("patient_gain_sigma", self.patient_gain_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be nonnegative")));
            }
        }
        let [c_lo, c_hi] = self.partial_volume;
        if !(0.0 <= c_lo && c_lo <= c_hi && c_hi <= 1.0) {
            return Err(Error::config(format!(
                "partial_volume [{c_lo}, {c_hi}] must be an interval within [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.label_noise.rate) {
            return Err(Error::config("label noise rate must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.tumor_fraction) {
            return Err(Error::config("tumor_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Synthesizes one spectrum: Gaussian peaks, a random cubic baseline and white
/// noise. The stream is consumed identically regardless of which terms are
/// zero, so a seed always maps to the same draws.
pub fn generate_spectrum<R: Rng + ?Sized>(
    patient_id: &str,
    class: Class,
    profile: &[MetabolitePeak],
    baseline_amp: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Spectrum> {
    generate_with_gain(patient_id, class, profile, 1.0, baseline_amp, noise_sigma, rng)
}

fn generate_with_gain<R: Rng + ?Sized>(
    patient_id: &str,
    class: Class,
    profile: &[MetabolitePeak],
    gain: f64,
    baseline_amp: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Spectrum> {
    if profile.is_empty() {
        return Err(Error::config("empty peak profile"));
    }
    if !(noise_sigma >= 0.0) || !(baseline_amp >= 0.0) {
        return Err(Error::config("noise and baseline amplitudes must be nonnegative"));
    }
    profile.iter().try_for_each(MetabolitePeak::validate)?;

    let mut values = vec![0.0; SPECTRUM_LEN];
    for peak in profile {
        let amp = gain * peak.draw_amplitude(rng);
        let c = peak.center_index as f64;
        let denom = 2.0 * peak.width * peak.width;
        for (i, v) in values.iter_mut().enumerate() {
            let d = i as f64 - c;
            *v += amp * (-d * d / denom).exp();
        }
    }

    let mut coeffs = [0.0; 4];
    for c in &mut coeffs {
        let u: f64 = rng.random();
        *c = (2.0 * u - 1.0) * baseline_amp;
    }
    let scale = 2.0 / (SPECTRUM_LEN - 1) as f64;
    for (i, v) in values.iter_mut().enumerate() {
        let t = i as f64 * scale - 1.0;
        *v += coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3]));
    }

    for v in &mut values {
        let z: f64 = StandardNormal.sample(rng);
        *v += noise_sigma * z;
    }

    Ok(Spectrum {
        values,
        patient_id: patient_id.to_owned(),
        label: class,
        true_label: Some(class),
        synthetic: false,
    })
}

/// Generates a patient-grouped cohort; a pure function of `config`.
pub fn generate_cohort(config: &CohortConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.n_patients;
    let mut rng = rng::stream(config.seed, "cohort", 0);

    let n_tumor = ((n as f64) * config.tumor_fraction).round() as usize;
    let mut classes: Vec<Class> = (0..n)
        .map(|i| if i < n_tumor { Class::Tumor } else { Class::Healthy })
        .collect();
    rand::seq::SliceRandom::shuffle(classes.as_mut_slice(), &mut rng);

    let width = (n.max(1) - 1).to_string().len().max(3);
    let [lo, hi] = config.voxels_per_patient_range;
    let gain_dist =
        Normal::new(1.0, config.patient_gain_sigma).map_err(|e| Error::config(format!("patient gain: {e}")))?;

    let mut spectra = Vec::new();
    let mut gains = Vec::with_capacity(n);
    let mut owner = Vec::new();
    for (p, &class) in classes.iter().enumerate() {
        let id = format!("P{p:0width$}");
        let voxels = rng.random_range(lo..=hi);
        let gain = gain_dist.sample(&mut rng).max(0.05);
        gains.push(gain);
        for _ in 0..voxels {
            owner.push(p);
            spectra.push(generate_with_gain(
                &id,
                class,
                config.class_profiles.get(class),
                gain,
                config.baseline_distortion_amplitude,
                config.noise_sigma,
                &mut rng,
            )?);
        }
    }

    let mut noise_rng = rng::stream(config.seed, "label-noise", 0);
    let mut mix_rng = rng::stream(config.seed, "partial-volume", 0);
    let [c_lo, c_hi] = config.partial_volume;
    let spec = config.label_noise;
    for (s, &p) in spectra.iter_mut().zip(&owner) {
        let u: f64 = noise_rng.random();
        let flippable = match spec.mode {
            LabelNoiseMode::None => false,
            LabelNoiseMode::Asymmetric => s.label == Class::Healthy,
            LabelNoiseMode::Symmetric => true,
        };
        if !flippable {
            continue;
        }
        let p_flip = if c_hi > 0.0 {
            let z: f64 = mix_rng.random();
            let w = c_lo + (c_hi - c_lo) * z;
            let other = s.label.opposite();
            let tissue = generate_with_gain(
                &s.patient_id,
                other,
                config.class_profiles.get(other),
                gains[p],
                0.0,
                0.0,
                &mut mix_rng,
            )?;
            for (v, o) in s.values.iter_mut().zip(&tissue.values) {
                *v = (1.0 - w) * *v + w * o;
            }
            if z >= 0.5 {
                (2.0 * spec.rate).min(1.0)
            } else {
                (2.0 * spec.rate - 1.0).max(0.0)
            }
        } else {
            spec.rate
        };
        if u < p_flip {
            s.label = s.label.opposite();
        }
    }

    Dataset::new(format!("cohort-{}", config.seed), spectra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_peak(amp: f64) -> Vec<MetabolitePeak> {
        vec![MetabolitePeak {
            name: "NAA".into(),
            center_index: 100,
            width: 4.0,
            amplitude_range: [amp, amp],
        }]
    }

    fn small_config(n: usize, voxels: usize) -> CohortConfig {
        CohortConfig {
            n_patients: n,
            voxels_per_patient_range: [voxels, voxels],
            ..CohortConfig::default()
        }
    }

    #[test]
    fn spectrum_has_expected_length() {
        let mut r = rng::seeded(1);
        let cfg = CohortConfig::default();
        let s = generate_spectrum("p", Class::Tumor, &cfg.class_profiles.tumor, 0.3, 0.1, &mut r).unwrap();
        assert_eq!(s.values.len(), SPECTRUM_LEN);
        assert!(s.values.iter().all(|v| v.is_finite()));
        assert_eq!(s.true_label, Some(Class::Tumor));
    }

    #[test]
    fn noiseless_single_peak_is_a_gaussian_bump() {
        let mut r = rng::seeded(3);
        let s = generate_spectrum("p", Class::Healthy, &single_peak(2.5), 0.0, 0.0, &mut r).unwrap();
        for (i, &v) in s.values.iter().enumerate() {
            let d = i as f64 - 100.0;
            let expected = 2.5 * (-d * d / 32.0).exp();
            assert!((v - expected).abs() < 1e-15);
        }
        let argmax = s.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 100);
        assert_eq!(s.values[100], 2.5);
    }

    #[test]
    fn same_seed_same_spectrum() {
        let cfg = CohortConfig::default();
        let a = generate_spectrum(
            "p",
            Class::Healthy,
            &cfg.class_profiles.healthy,
            0.2,
            0.05,
            &mut rng::seeded(9),
        )
        .unwrap();
        let b = generate_spectrum(
            "p",
            Class::Healthy,
            &cfg.class_profiles.healthy,
            0.2,
            0.05,
            &mut rng::seeded(9),
        )
        .unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn out_of_range_peak_is_config_error() {
        let mut peaks = single_peak(1.0);
        peaks[0].center_index = SPECTRUM_LEN;
        let err = generate_spectrum("p", Class::Healthy, &peaks, 0.0, 0.0, &mut rng::seeded(0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn cohort_counts_are_forced_by_fixed_voxel_range() {
        let ds = generate_cohort(&small_config(4, 5)).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.patients().len(), 4);
    }

    #[test]
    fn no_label_noise_keeps_labels() {
        let mut cfg = small_config(10, 3);
        cfg.label_noise = LabelNoiseSpec {
            mode: LabelNoiseMode::None,
            rate: 0.7,
        };
        let ds = generate_cohort(&cfg).unwrap();
        assert!(ds.spectra.iter().all(|s| Some(s.label) == s.true_label));
    }

    #[test]
    fn asymmetric_rate_one_flips_all_healthy() {
        let mut cfg = small_config(10, 3);
        cfg.label_noise = LabelNoiseSpec {
            mode: LabelNoiseMode::Asymmetric,
            rate: 1.0,
        };
        let ds = generate_cohort(&cfg).unwrap();
        assert!(ds.spectra.iter().any(|s| s.true_label == Some(Class::Healthy)));
        assert!(ds.spectra.iter().all(|s| s.label == Class::Tumor));
    }

    fn noise_config(rate: f64, partial_volume: [f64; 2]) -> CohortConfig {
        let mut cfg = small_config(200, 10);
        cfg.tumor_fraction = 0.0;
        cfg.label_noise = LabelNoiseSpec {
            mode: LabelNoiseMode::Asymmetric,
            rate,
        };
        cfg.partial_volume = partial_volume;
        cfg
    }

    fn flipped_fraction(ds: &Dataset) -> f64 {
        ds.spectra.iter().filter(|s| s.label != s.true_label.unwrap()).count() as f64 / ds.len() as f64
    }

    #[test]
    fn flipped_fraction_tracks_rate() {
        // 2000 healthy spectra: binomial std at most 0.0112, allow 4 sigma
        for pv in [[0.0, 0.0], [0.0, 0.8]] {
            for rate in [0.1, 0.2, 0.7] {
                let f = flipped_fraction(&generate_cohort(&noise_config(rate, pv)).unwrap());
                assert!((f - rate).abs() < 0.045, "pv {pv:?} rate {rate}: {f}");
            }
        }
    }

    #[test]
    fn partial_volume_rate_one_flips_everything() {
        let ds = generate_cohort(&noise_config(1.0, [0.0, 0.8])).unwrap();
        assert!(ds.spectra.iter().all(|s| s.label == Class::Tumor));
    }

    #[test]
    fn partial_volume_flips_the_most_mixed_spectra() {
        let cfg = noise_config(0.2, [0.0, 0.8]);
        let ds = generate_cohort(&cfg).unwrap();
        let lip = cfg
            .class_profiles
            .tumor
            .iter()
            .find(|p| p.name == "Lip1")
            .unwrap()
            .center_index;
        let mean = |flipped: bool| {
            let v: Vec<f64> = ds
                .spectra
                .iter()
                .filter(|s| (s.label == Class::Tumor) == flipped)
                .map(|s| s.values[lip])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > mean(false) + 0.1);
    }

    #[test]
    fn zero_partial_volume_matches_plain_flipping_stream() {
        let mut a = noise_config(0.2, [0.0, 0.0]);
        a.n_patients = 5;
        let plain = generate_cohort(&a).unwrap();
        let mut noise_free = a.clone();
        noise_free.label_noise.mode = LabelNoiseMode::None;
        let clean = generate_cohort(&noise_free).unwrap();
        for (x, y) in plain.spectra.iter().zip(&clean.spectra) {
            assert_eq!(x.values, y.values);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small_config(4, 3);
        cfg.partial_volume = [0.6, 0.2];
        assert!(generate_cohort(&cfg).is_err());
        let mut cfg = small_config(4, 3);
        cfg.partial_volume = [0.0, 1.5];
        assert!(generate_cohort(&cfg).is_err());
        assert!(generate_cohort(&small_config(1, 3)).is_err());
        let mut cfg = small_config(4, 3);
        cfg.voxels_per_patient_range = [0, 2];
        assert!(generate_cohort(&cfg).is_err());
        let mut cfg = small_config(4, 3);
        cfg.class_profiles.tumor.clear();
        assert!(generate_cohort(&cfg).is_err());
    }

    #[test]
    fn shipped_config_is_valid() {
        CohortConfig::default().validate().unwrap();
    }
}
