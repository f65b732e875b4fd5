use crate::error::{MassError, Result};
use crate::model::{raw_term_matrix, FinalLayer, ScalarNet, TermBank, TermCatalog};
use crate::physics::{Batch, SystemId};

use super::config::TrainConfig;

/// Monitoring and evaluation results of one phase.
#[derive(Clone, Debug)]
pub struct PhaseMetrics {
    /// Systems active in this phase, in curriculum order.
    pub systems: Vec<SystemId>,
    /// `step_loss[step][j]`: training loss of active system `j` (head
    /// penalty excluded).
    pub step_loss: Vec<Vec<f64>>,
    /// Significant-term count of the EMA ydot row after every step.
    pub significant_trace: Vec<usize>,
    /// Held-out ydot MSE per active system under the EMA parameters.
    pub eval_mse: Vec<f64>,
    /// Step at which a non-finite loss stopped the phase.
    pub failed_at: Option<usize>,
    /// Seconds spent in the phase. Informational: excluded from equality
    /// and from persisted records.
    pub wall_clock: f64,
}

impl PartialEq for PhaseMetrics {
    fn eq(&self, other: &Self) -> bool {
        self.systems == other.systems
            && bitwise_eq(
                self.step_loss.iter().flatten(),
                other.step_loss.iter().flatten(),
            )
            && self.step_loss.iter().map(Vec::len).eq(other.step_loss.iter().map(Vec::len))
            && self.significant_trace == other.significant_trace
            && bitwise_eq(self.eval_mse.iter(), other.eval_mse.iter())
            && self.failed_at == other.failed_at
    }
}

/// Compares floats by bit pattern so NaN payloads compare equal to
/// themselves.
fn bitwise_eq<'a>(
    a: impl Iterator<Item = &'a f64>,
    b: impl Iterator<Item = &'a f64>,
) -> bool {
    a.map(|v| v.to_bits()).eq(b.map(|v| v.to_bits()))
}

impl PhaseMetrics {
    pub fn max_eval_mse(&self) -> f64 {
        self.eval_mse.iter().fold(0.0f64, |m, v| {
            if v.is_nan() || m.is_nan() {
                f64::NAN
            } else {
                m.max(*v)
            }
        })
    }
}

/// Raw terms of the shared analysis batch for one system.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationDump {
    pub system: SystemId,
    pub batch: Batch,
    /// Raw terms, flat `B x T x d`; NaN when the network could not be
    /// evaluated.
    pub terms: Vec<f64>,
}

/// Everything recorded at the end of one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRecord {
    pub phase: usize,
    pub metrics: PhaseMetrics,
    pub correct: bool,
    pub consistently_correct: bool,
    /// EMA networks of the active systems.
    pub nets: Vec<ScalarNet>,
    /// EMA head.
    pub head: FinalLayer,
    pub dumps: Vec<ActivationDump>,
}

impl PhaseRecord {
    pub fn systems(&self) -> &[SystemId] {
        &self.metrics.systems
    }

    fn position(&self, system: SystemId) -> Result<usize> {
        self.metrics
            .systems
            .iter()
            .position(|s| *s == system)
            .ok_or_else(|| MassError::MissingArtifact {
                phase: self.phase,
                artifact: format!("system {system}"),
            })
    }

    pub fn net(&self, system: SystemId) -> Result<&ScalarNet> {
        Ok(&self.nets[self.position(system)?])
    }

    pub fn dump(&self, system: SystemId) -> Result<&ActivationDump> {
        self.dumps
            .iter()
            .find(|d| d.system == system)
            .ok_or_else(|| MassError::MissingArtifact {
                phase: self.phase,
                artifact: format!("activation dump for {system}"),
            })
    }

    pub fn eval_mse(&self, system: SystemId) -> Result<f64> {
        Ok(self.metrics.eval_mse[self.position(system)?])
    }

    /// Term bank of the dumped analysis batch under the phase's head.
    pub fn bank(&self, system: SystemId) -> Result<TermBank> {
        let dump = self.dump(system)?;
        Ok(TermBank {
            n: dump.batch.len(),
            dim: dump.batch.dim,
            activations: dump.terms.clone(),
            weights_ydot: self.head.ydot.clone(),
            weights_xdot: self.head.xdot.clone(),
        })
    }

    /// Term bank of an arbitrary batch, recomputed from the snapshot.
    pub fn bank_for(&self, system: SystemId, batch: &Batch) -> Result<TermBank> {
        let net = self.net(system)?;
        Ok(TermBank {
            n: batch.len(),
            dim: batch.dim,
            activations: raw_term_matrix(net, batch)?,
            weights_ydot: self.head.ydot.clone(),
            weights_xdot: self.head.xdot.clone(),
        })
    }
}

/// One seed trained through a curriculum.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub seed: u64,
    pub catalog_hash: String,
    pub code_version: String,
    pub phases: Vec<PhaseRecord>,
}

impl RunRecord {
    pub fn new_empty(config: TrainConfig, seed: u64) -> Self {
        RunRecord {
            config,
            seed,
            catalog_hash: TermCatalog::standard().hash(),
            code_version: crate::CODE_VERSION.to_string(),
            phases: Vec::new(),
        }
    }

    pub fn last_phase(&self) -> Option<&PhaseRecord> {
        self.phases.last()
    }

    pub fn phase(&self, k: usize) -> Result<&PhaseRecord> {
        self.phases.get(k).ok_or_else(|| MassError::MissingArtifact {
            phase: k,
            artifact: "phase record".into(),
        })
    }

    pub fn correct_flags(&self) -> Vec<bool> {
        self.phases.iter().map(|p| p.correct).collect()
    }

    /// Incorrect at some phase and correct at a later one.
    pub fn has_revival(&self) -> bool {
        let flags = self.correct_flags();
        flags
            .iter()
            .enumerate()
            .any(|(i, c)| !c && flags[i + 1..].iter().any(|c| *c))
    }
}
