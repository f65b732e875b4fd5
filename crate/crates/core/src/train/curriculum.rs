use std::time::Instant;

use log::debug;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::loss::{head_penalty_grad, system_loss_grad, ydot_mse, LossWorkspace};
use super::optim::{adamw_step, ema_update, lr_schedule, AdamState};
use super::record::{ActivationDump, PhaseMetrics, PhaseRecord, RunRecord};
use crate::analysis::significant_count;
use crate::error::Result;
use crate::model::{raw_term_matrix, term_bank, FinalLayer, ScalarNet, N_TERMS};
use crate::physics::{sample_batch, Batch, SystemId};
use crate::seed::derived_rng;

/// Seed of the analysis batch shared by every run, so cross-seed analyses
/// compare activations on identical points.
pub const ANALYSIS_SEED: u64 = 0x4D41_5353;

/// The shared analysis batch of `system`.
pub fn analysis_batch(system: SystemId, n: usize) -> Result<Batch> {
    sample_batch(
        &system.spec(),
        n,
        &mut derived_rng(ANALYSIS_SEED, "analysis", system.index() as u64),
    )
}

/// The held-out evaluation batch of `system` for a run seeded with `seed`.
pub fn heldout_batch(seed: u64, system: SystemId, n: usize) -> Result<Batch> {
    sample_batch(
        &system.spec(),
        n,
        &mut derived_rng(seed, "heldout", system.index() as u64),
    )
}

/// Held-out ydot MSE of `net` + `head`, or `+inf` when evaluation fails.
pub fn evaluate_mse(net: &ScalarNet, head: &FinalLayer, batch: &Batch) -> f64 {
    match term_bank(net, batch, head) {
        Ok(bank) => {
            let (_, ydot) = bank.predict();
            let mse = ydot_mse(&ydot, &batch.ydot, batch.dim);
            if mse.is_finite() {
                mse
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

struct SystemState {
    id: SystemId,
    net: ScalarNet,
    ema: ScalarNet,
    adam: AdamState,
    grad: Vec<f64>,
    ws: LossWorkspace,
    heldout: Batch,
}

/// Trains one seed through the configured curriculum.
pub fn run_curriculum(config: &TrainConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    let reg = config.regularization();
    let hp = config.adam();
    let mut snapshot = config.clone();
    snapshot.seeds = vec![seed];
    let mut record = RunRecord::new_empty(snapshot, seed);

    let mut head = FinalLayer::init(&mut derived_rng(seed, "head", 0));
    let mut head_ema = head.clone();
    let mut head_adam = AdamState::new(2 * N_TERMS);
    let mut head_grad = vec![0.0; 2 * N_TERMS];
    let mut batch_rng = derived_rng(seed, "batches", 0);
    let mut systems: Vec<SystemState> = Vec::new();
    let mut previous_failed = false;
    let mut consistent = true;

    for (phase, &id) in config.curriculum.iter().enumerate() {
        let started = Instant::now();
        let arch = config.arch(id.dim());
        let net = ScalarNet::init(arch, &mut derived_rng(seed, "net", phase as u64));
        systems.push(SystemState {
            id,
            ema: net.clone(),
            adam: AdamState::new(net.params.len()),
            grad: vec![0.0; net.params.len()],
            net,
            ws: LossWorkspace::new(),
            heldout: heldout_batch(seed, id, config.eval_samples)?,
        });
        if previous_failed {
            head_adam.reset();
            for s in &mut systems {
                s.adam.reset();
            }
        }

        let mut metrics = PhaseMetrics {
            systems: systems.iter().map(|s| s.id).collect(),
            step_loss: Vec::with_capacity(config.steps_per_phase),
            significant_trace: Vec::with_capacity(config.steps_per_phase),
            eval_mse: Vec::new(),
            failed_at: None,
            wall_clock: 0.0,
        };

        for step in 0..config.steps_per_phase {
            let lr = lr_schedule(step, config.steps_per_phase, config.warmup, config.lr);
            head_grad.fill(0.0);
            let mut losses = Vec::with_capacity(systems.len());
            let mut finite = true;
            for s in &mut systems {
                let batch = sample_batch(&s.id.spec(), config.batch, &mut batch_rng)?;
                s.grad.fill(0.0);
                match system_loss_grad(&mut s.ws, &s.net, &head, &batch, &reg, &mut s.grad, &mut head_grad) {
                    Ok(l) => losses.push(l.total()),
                    Err(_) => {
                        finite = false;
                        losses.push(f64::NAN);
                    }
                }
            }
            head_penalty_grad(&head, reg.lambda1, &mut head_grad);
            finite = finite
                && head_grad.iter().all(|g| g.is_finite())
                && systems.iter().all(|s| s.grad.iter().all(|g| g.is_finite()));
            if !finite {
                debug!("seed {seed} phase {phase}: non-finite loss at step {step}");
                metrics.failed_at = Some(step);
                metrics.step_loss.push(losses);
                break;
            }
            for s in &mut systems {
                adamw_step(&mut s.net.params, &s.grad, &mut s.adam, lr, &hp);
                ema_update(&mut s.ema.params, &s.net.params, config.ema);
            }
            let mut flat = head.to_flat();
            adamw_step(&mut flat, &head_grad, &mut head_adam, lr, &hp);
            head = FinalLayer::from_flat(&flat)?;
            ema_update(&mut head_ema.ydot, &head.ydot, config.ema);
            ema_update(&mut head_ema.xdot, &head.xdot, config.ema);
            metrics.step_loss.push(losses);
            metrics
                .significant_trace
                .push(significant_count(&head_ema.ydot, config.significance).unwrap_or(0));
        }

        metrics.eval_mse = systems
            .iter()
            .map(|s| evaluate_mse(&s.ema, &head_ema, &s.heldout))
            .collect();
        let worst = metrics.max_eval_mse();
        let correct = metrics.failed_at.is_none() && worst < config.loss_threshold;
        consistent = consistent && correct;
        previous_failed = metrics.failed_at.is_some();

        let mut dumps = Vec::with_capacity(systems.len());
        for s in &systems {
            let batch = analysis_batch(s.id, config.analysis_samples)?;
            let terms = raw_term_matrix(&s.ema, &batch)
                .unwrap_or_else(|_| vec![f64::NAN; batch.len() * N_TERMS * batch.dim]);
            dumps.push(ActivationDump {
                system: s.id,
                batch,
                terms,
            });
        }
        metrics.wall_clock = started.elapsed().as_secs_f64();
        debug!(
            "seed {seed} phase {phase}: worst held-out mse {worst:.3e}, correct {correct}, {:.1}s",
            metrics.wall_clock
        );
        record.phases.push(PhaseRecord {
            phase,
            metrics,
            correct,
            consistently_correct: consistent,
            nets: systems.iter().map(|s| s.ema.clone()).collect(),
            head: head_ema.clone(),
            dumps,
        });
    }
    Ok(record)
}

/// Outcome of one seed within a sweep.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub seed: u64,
    pub result: std::result::Result<RunRecord, String>,
}

/// Runs every seed independently; results come back in seed-list order
/// whatever the completion order.
pub fn sweep(config: &TrainConfig, seeds: &[u64]) -> Result<Vec<SweepEntry>> {
    let mut cfg = config.clone();
    cfg.seeds = seeds.to_vec();
    cfg.validate()?;
    Ok(seeds
        .par_iter()
        .map(|&seed| SweepEntry {
            seed,
            result: run_curriculum(&cfg, seed).map_err(|e| e.to_string()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            batch: 16,
            steps_per_phase: 5,
            warmup: 2,
            eval_samples: 32,
            analysis_samples: 8,
            width: 6,
            hidden: 2,
            curriculum: vec![SystemId::Sho, SystemId::Pendulum],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_seeds_give_identical_records() {
        let a = run_curriculum(&tiny(), 3).unwrap();
        let b = run_curriculum(&tiny(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.phases.len(), 2);
        assert_eq!(a.phases[1].metrics.step_loss[0].len(), 2);
        let c = run_curriculum(&tiny(), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frozen_weights_are_never_correct() {
        let cfg = TrainConfig {
            lr: 0.0,
            ..tiny()
        };
        let r = run_curriculum(&cfg, 0).unwrap();
        assert!(r.phases.iter().all(|p| !p.correct));
    }

    #[test]
    fn sweep_preserves_seed_order() {
        let cfg = TrainConfig {
            curriculum: vec![SystemId::Sho],
            ..tiny()
        };
        let out = sweep(&cfg, &[5, 1]).unwrap();
        assert_eq!(out[0].seed, 5);
        assert_eq!(out[0].result.as_ref().unwrap(), &run_curriculum(&cfg, 5).unwrap());
    }
}
