use serde::{Deserialize, Serialize};

use super::network::ParamMap;
use super::{Tensor, TrainConfig};
use crate::error::{Error, Result};

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamMap,
    pub v: ParamMap,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamMap) -> Self {
        let zeros = |p: &ParamMap| p.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape()))).collect();
        AdamState {
            m: zeros(params),
            v: zeros(params),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Every gradient is checked for finiteness
/// before any parameter is touched, so a bad step leaves the state intact.
pub fn adam_step(params: &mut ParamMap, grads: &ParamMap, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    for (name, g) in grads {
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Other(format!(
                "non-finite gradient in parameter {name} at element {i}"
            )));
        }
        let p = params
            .get(name)
            .ok_or_else(|| Error::State(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(Error::shape(format!(
                "gradient {name} {:?} vs parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon_adam;
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let m = state
            .m
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("no Adam moment for {name}")))?;
        let v = state
            .v
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("no Adam moment for {name}")))?;
        for (((pv, mv), vv), &gv) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, data: &[f64]) -> ParamMap {
        let mut m = ParamMap::new();
        m.insert(name.into(), Tensor::new(vec![data.len()], data.to_vec()).unwrap());
        m
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let cfg = TrainConfig::default();
        let mut p = one("w", &[1.0, 1.0, 1.0]);
        let g = one("w", &[0.3, -2.0, 1e-3]);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        let d = p["w"].data();
        let lr = cfg.learning_rate;
        assert!((d[0] - (1.0 - lr)).abs() < 1e-9);
        assert!((d[1] - (1.0 + lr)).abs() < 1e-9);
        assert!((d[2] - (1.0 - lr)).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let cfg = TrainConfig::default();
        let mut p = one("w", &[0.5, -0.25]);
        let g = one("w", &[0.0, 0.0]);
        let mut st = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        }
        assert_eq!(p["w"].data(), &[0.5, -0.25]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let cfg = TrainConfig::default();
        let mut p = one("block3.conv1", &[0.5]);
        let g = one("block3.conv1", &[f64::NAN]);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut st, &cfg).unwrap_err().to_string();
        assert!(err.contains("block3.conv1"));
        assert_eq!(st.t, 0);
    }
}
