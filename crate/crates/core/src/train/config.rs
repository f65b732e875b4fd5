use serde::{Deserialize, Serialize};

use super::loss::Regularization;
use super::optim::AdamParams;
use crate::error::{MassError, Result};
use crate::model::NetArch;
use crate::physics::SystemId;

/// Training hyperparameters. Defaults are the published settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub steps_per_phase: usize,
    pub warmup: usize,
    pub ema: f64,
    pub lambda_b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seeds: Vec<u64>,
    pub curriculum: Vec<SystemId>,
    /// A phase is correct when every active system's held-out ydot MSE is
    /// below this.
    pub loss_threshold: f64,
    pub hidden: usize,
    pub width: usize,
    /// Held-out samples per system for the correctness decision.
    pub eval_samples: usize,
    /// Samples per system in the shared analysis batch.
    pub analysis_samples: usize,
    /// Norm fraction for the significant-term trace.
    pub significance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            weight_decay: 0.01,
            beta1: 0.7,
            beta2: 0.8,
            eps: 1e-8,
            batch: 512,
            steps_per_phase: 10_000,
            warmup: 100,
            ema: 0.99,
            lambda_b: 0.5,
            lambda1: 0.1,
            lambda2: 0.01,
            seeds: vec![0],
            curriculum: vec![SystemId::Sho],
            loss_threshold: 5e-3,
            hidden: 4,
            width: 20,
            eval_samples: 4096,
            analysis_samples: 512,
            significance: 0.99,
        }
    }
}

impl TrainConfig {
    /// The four-system curriculum of the theory-switch experiments.
    pub fn standard_curriculum() -> Vec<SystemId> {
        vec![
            SystemId::Sho,
            SystemId::Pendulum,
            SystemId::Kepler,
            SystemId::Relativistic,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MassError::Config(msg));
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("lambda_b", self.lambda_b),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lr", self.lr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("ema", self.ema),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.eps > 0.0) || !(self.loss_threshold > 0.0) {
            return bad("eps and loss_threshold must be positive".into());
        }
        if !(self.significance > 0.0 && self.significance <= 1.0) {
            return bad(format!("significance must lie in (0, 1], got {}", self.significance));
        }
        for (name, v) in [
            ("batch", self.batch),
            ("steps_per_phase", self.steps_per_phase),
            ("hidden", self.hidden),
            ("width", self.width),
            ("eval_samples", self.eval_samples),
            ("analysis_samples", self.analysis_samples),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.curriculum.is_empty() {
            return bad("curriculum must name at least one system".into());
        }
        for (i, s) in self.curriculum.iter().enumerate() {
            if self.curriculum[..i].contains(s) {
                return bad(format!("system {s} appears twice in the curriculum"));
            }
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return bad(format!("seed {s} appears twice"));
            }
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            lambda_b: self.lambda_b,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn arch(&self, dim: usize) -> NetArch {
        NetArch {
            dim,
            hidden: self.hidden,
            width: self.width,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.lr, 5e-4);
        assert_eq!((c.beta1, c.beta2), (0.7, 0.8));
        assert_eq!(c.steps_per_phase, 10_000);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = TrainConfig::default();
        c.curriculum.clear();
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.ema = 1.5;
        assert!(c.validate().is_err());
    }
}
