use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{batch_tensor, Network};
use crate::spectra::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    #[default]
    Nearest,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cam {
    pub class_index: usize,
    /// One value per position of the final feature map.
    pub raw: Vec<f64>,
    /// Stretched to the input length.
    pub upsampled: Vec<f64>,
    pub bias: f64,
    pub logit: f64,
}

fn upsample(raw: &[f64], len: usize, mode: Upsample) -> Vec<f64> {
    let r = raw.len();
    match mode {
        Upsample::Nearest => (0..len).map(|i| raw[i * r / len]).collect(),
        Upsample::Linear => {
            let scale = r as f64 / len as f64;
            (0..len)
                .map(|i| {
                    let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (r - 1) as f64);
                    let lo = pos.floor() as usize;
                    let hi = (lo + 1).min(r - 1);
                    let w = pos - lo as f64;
                    (1.0 - w) * raw[lo] + w * raw[hi]
                })
                .collect()
        }
    }
}

/// Class activation map of one spectrum for class `class_index`.
pub fn class_activation_map(net: &Network, spectrum: &Spectrum, class_index: usize, mode: Upsample) -> Result<Cam> {
    let n_classes = net.config.n_classes;
    if class_index >= n_classes {
        return Err(Error::argument(format!(
            "class index {class_index} out of range for {n_classes} classes"
        )));
    }
    let x = batch_tensor(std::iter::once(spectrum));
    let (features, logits) = net.forward_features(&x)?;
    let (_, len, ch) = features.dims3("final feature map")?;
    let w = net.param("dense.weight")?.data();
    let f = features.data();
    let raw: Vec<f64> = (0..len)
        .map(|t| (0..ch).map(|d| w[d * n_classes + class_index] * f[t * ch + d]).sum())
        .collect();
    Ok(Cam {
        class_index,
        upsampled: upsample(&raw, net.config.input_length, mode),
        raw,
        bias: net.param("dense.bias")?.data()[class_index],
        logit: logits.data()[class_index],
    })
}

/// Position, input value, then raw and upsampled map per class.
pub fn cam_csv(spectrum: &Spectrum, cams: &[Cam]) -> String {
    let mut s = String::from("position,input");
    for c in cams {
        let _ = write!(s, ",raw_{0},upsampled_{0}", c.class_index);
    }
    s.push('\n');
    let len = spectrum.values.len();
    for i in 0..len {
        let _ = write!(s, "{i},{}", spectrum.values[i]);
        for c in cams {
            let _ = write!(s, ",{},{}", c.raw[i * c.raw.len() / len], c.upsampled[i]);
        }
        s.push('\n');
    }
    s
}
