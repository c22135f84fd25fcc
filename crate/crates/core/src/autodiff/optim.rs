use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Mat;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// AdamW optimizer state: decoupled weight decay, bias-corrected moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub weight_decay: f64,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        AdamW {
            weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every `(name, param)` with its gradient. Checks all
    /// gradients before touching any parameter.
    pub fn step(&mut self, params: &mut [(&str, &mut Mat)], grads: &[Mat], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Domain(format!(
                "adamw_step: {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if !(lr > 0.0) {
            return Err(Error::Domain(format!("adamw_step: learning rate must be > 0, got {lr}")));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adamw_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if let Some(i) = g.as_slice().iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter `{name}` (shape {:?}) has {} at flat index {i}",
                    g.shape(),
                    g.as_slice()[i]
                )));
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|(_, p)| Moments {
                    m: vec![0.0; p.len()],
                    v: vec![0.0; p.len()],
                })
                .collect();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        for (((_, p), g), mo) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            for (((w, &gi), m), v) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(&mut mo.m)
                .zip(&mut mo.v)
            {
                *w *= decay;
                *m = BETA1 * *m + (1.0 - BETA1) * gi;
                *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau learning-rate schedule plus early stopping, both driven
/// by a validation loss reported once per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub early_stop_patience: usize,
    best: f64,
    since_best: usize,
    since_reduce: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochVerdict {
    Improved,
    Continue,
    Stop,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, patience: usize, early_stop_patience: usize) -> Self {
        PlateauSchedule {
            lr,
            factor,
            patience,
            early_stop_patience,
            best: f64::INFINITY,
            since_best: 0,
            since_reduce: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> EpochVerdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            self.since_reduce = 0;
            return EpochVerdict::Improved;
        }
        self.since_best += 1;
        self.since_reduce += 1;
        if self.since_reduce > self.patience {
            self.lr *= self.factor;
            self.since_reduce = 0;
        }
        if self.since_best >= self.early_stop_patience {
            EpochVerdict::Stop
        } else {
            EpochVerdict::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut p = Mat::from_rows(&[[1.0, -2.0]]);
        let before = p.clone();
        let mut opt = AdamW::new(0.0);
        opt.step(&mut [("p", &mut p)], &[Mat::zeros(1, 2)], 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn decoupled_decay_arithmetic() {
        let mut p = Mat::scalar(1.0);
        let mut opt = AdamW::new(0.01);
        opt.step(&mut [("p", &mut p)], &[Mat::scalar(0.0)], 0.001).unwrap();
        assert!((p[(0, 0)] - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Mat::scalar(0.5);
        let mut opt = AdamW::new(0.0);
        opt.step(&mut [("p", &mut p)], &[Mat::scalar(1.0)], 0.001).unwrap();
        assert!((0.5 - p[(0, 0)] - 0.001).abs() < 1e-10);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = Mat::zeros(2, 2);
        let mut g = Mat::zeros(2, 2);
        g[(1, 0)] = f64::NAN;
        let mut opt = AdamW::new(0.0);
        let err = opt.step(&mut [("encoder.w1", &mut p)], &[g], 1e-3).unwrap_err();
        assert!(err.to_string().contains("encoder.w1"));
        assert_eq!(p, Mat::zeros(2, 2));
    }

    #[test]
    fn plateau_reduces_then_stops() {
        let mut s = PlateauSchedule::new(1.0, 0.1, 1, 3);
        assert_eq!(s.observe(1.0), EpochVerdict::Improved);
        assert_eq!(s.observe(1.0), EpochVerdict::Continue);
        assert_eq!(s.lr, 1.0);
        assert_eq!(s.observe(1.0), EpochVerdict::Continue);
        assert!((s.lr - 0.1).abs() < 1e-15);
        assert_eq!(s.observe(2.0), EpochVerdict::Stop);
    }
}
