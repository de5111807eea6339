use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Matrix, NumericError, ParamStore, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment estimates persist across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: HashMap<String, Matrix>,
    second: HashMap<String, Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter that has a gradient.
    /// Fails without touching anything if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &HashMap<String, Matrix>,
        precision: Precision,
    ) -> Result<(), NumericError> {
        for (name, g) in grads {
            if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
                return Err(NumericError::NonFinite(format!("gradient of {name} contains {bad}")));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for p in params.iter_mut().filter(|p| p.trainable) {
            let Some(g) = grads.get(&p.name) else { continue };
            if g.dim() != p.value.dim() {
                return Err(NumericError::Shape {
                    op: "adam",
                    shapes: vec![p.value.dim(), g.dim()],
                });
            }
            let m = self
                .first
                .entry(p.name.clone())
                .or_insert_with(|| Matrix::zeros(g.dim()));
            m.zip_mut_with(g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            let v = self
                .second
                .entry(p.name.clone())
                .or_insert_with(|| Matrix::zeros(g.dim()));
            v.zip_mut_with(g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            ndarray::Zip::from(&mut p.value)
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + eps));
            precision.round(&mut p.value);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", array![[x]], true).unwrap();
        s
    }

    fn grads(g: f64) -> HashMap<String, Matrix> {
        HashMap::from([("x".to_string(), array![[g]])])
    }

    #[test]
    fn zero_gradient_and_zero_lr_are_identity() {
        let mut s = store(1.5);
        Adam::new(AdamConfig::default()).step(&mut s, &grads(0.0), Precision::Double).unwrap();
        assert_eq!(s.value("x").unwrap()[[0, 0]], 1.5);
        let cfg = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        Adam::new(cfg).step(&mut s, &grads(3.0), Precision::Double).unwrap();
        assert_eq!(s.value("x").unwrap()[[0, 0]], 1.5);
    }

    #[test]
    fn two_steps_match_hand_unrolled_update() {
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut s = store(1.0);
        let mut opt = Adam::new(cfg);
        opt.step(&mut s, &grads(0.5), Precision::Double).unwrap();
        opt.step(&mut s, &grads(-0.2), Precision::Double).unwrap();

        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in [(1, 0.5f64), (2, -0.2)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.value("x").unwrap()[[0, 0]] - x).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig { lr: 0.1, eps: 0.0, ..AdamConfig::default() };
        let mut s = store(1.0);
        Adam::new(cfg).step(&mut s, &grads(0.5), Precision::Double).unwrap();
        assert!((s.value("x").unwrap()[[0, 0]] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut s = store(1.0);
        let err = Adam::new(AdamConfig::default()).step(&mut s, &grads(f64::NAN), Precision::Double);
        assert!(matches!(err, Err(NumericError::NonFinite(_))));
        assert_eq!(s.value("x").unwrap()[[0, 0]], 1.0);
    }

    #[test]
    fn single_precision_rounds() {
        let mut s = store(0.1);
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        Adam::new(cfg).step(&mut s, &grads(1.0), Precision::Single).unwrap();
        let x = s.value("x").unwrap()[[0, 0]];
        assert_eq!(x, x as f32 as f64);
    }
}
