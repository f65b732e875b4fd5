//! Cross-seed aggregates of the per-run analyses.

use std::fmt::Write as _;

use log::warn;

use super::distill::{distill_control, distill_lagrangian};
use super::reference::{fit_reference_activations, Formulation};
use super::theory::{classify_theory, TheoryFit, TheoryLabel};
use crate::error::{MassError, Result};
use crate::physics::SystemId;
use crate::seed::derived_rng;
use crate::train::RunRecord;

/// System added at `phase` of `run`.
pub fn newest_system(run: &RunRecord, phase: usize) -> Option<SystemId> {
    run.phases.get(phase).and_then(|p| p.systems().last().copied())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Theory label of one seed's system at one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryRow {
    pub seed: u64,
    pub phase: usize,
    pub system: SystemId,
    pub correct: bool,
    /// `None` when the fit itself was degenerate.
    pub fit: Option<TheoryFit>,
}

/// Label shares among the correct seeds of one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryFraction {
    pub phase: usize,
    pub system: SystemId,
    pub correct_seeds: usize,
    pub hamiltonian: f64,
    pub lagrangian: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryCensus {
    pub rows: Vec<TheoryRow>,
    pub fractions: Vec<TheoryFraction>,
}

impl TheoryCensus {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("seed,phase,system,correct,label,c0,c1,c2,r2\n");
        for r in &self.rows {
            match &r.fit {
                Some(f) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.seed,
                    r.phase,
                    r.system,
                    r.correct,
                    f.label.name(),
                    f.c0,
                    f.c1,
                    f.c2,
                    f.r2
                ),
                None => writeln!(out, "{},{},{},{},degenerate,,,,", r.seed, r.phase, r.system, r.correct),
            }
            .expect("write to string");
        }
        out
    }

    pub fn fractions_csv(&self) -> String {
        let mut out = String::from("phase,system,correct_seeds,frac_hamiltonian,frac_lagrangian\n");
        for f in &self.fractions {
            writeln!(
                out,
                "{},{},{},{},{}",
                f.phase, f.system, f.correct_seeds, f.hamiltonian, f.lagrangian
            )
            .expect("write to string");
        }
        out
    }

    pub fn fraction(&self, phase: usize) -> Option<&TheoryFraction> {
        self.fractions.iter().find(|f| f.phase == phase)
    }
}

/// Classifies the newest system of every phase; fractions count correct
/// seeds only, degenerate fits excluded from both labels.
pub fn theory_census(runs: &[RunRecord]) -> Result<TheoryCensus> {
    if runs.is_empty() {
        return Err(MassError::NoRuns);
    }
    let n_phases = runs.iter().map(|r| r.phases.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut fractions = Vec::new();
    for phase in 0..n_phases {
        let mut system = None;
        let (mut correct, mut ham, mut lag) = (0usize, 0usize, 0usize);
        for run in runs {
            let Some(sys) = newest_system(run, phase) else {
                continue;
            };
            system.get_or_insert(sys);
            let ok = run.phases[phase].correct;
            let fit = match classify_theory(run, phase, sys) {
                Ok(f) => Some(f),
                Err(e) => {
                    warn!("seed {} phase {phase}: no theory label ({e})", run.seed);
                    None
                }
            };
            if ok {
                correct += 1;
                match fit.as_ref().map(|f| f.label) {
                    Some(TheoryLabel::Hamiltonian) => ham += 1,
                    Some(TheoryLabel::Lagrangian) => lag += 1,
                    _ => {}
                }
            }
            rows.push(TheoryRow {
                seed: run.seed,
                phase,
                system: sys,
                correct: ok,
                fit,
            });
        }
        if let Some(system) = system {
            let frac = |k: usize| if correct > 0 { k as f64 / correct as f64 } else { f64::NAN };
            fractions.push(TheoryFraction {
                phase,
                system,
                correct_seeds: correct,
                hamiltonian: frac(ham),
                lagrangian: frac(lag),
            });
        }
    }
    Ok(TheoryCensus { rows, fractions })
}

/// Mean and spread of reference-fit R² over the correct seeds of a phase.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePoint {
    pub phase: usize,
    pub system: SystemId,
    pub seeds: usize,
    pub r2_lagrangian: (f64, f64),
    pub r2_hamiltonian: (f64, f64),
}

pub fn reference_curve_csv(points: &[ReferencePoint]) -> String {
    let mut out = String::from("phase,system,seeds,r2_lagrangian_mean,r2_lagrangian_std,r2_hamiltonian_mean,r2_hamiltonian_std\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.phase,
            p.system,
            p.seeds,
            p.r2_lagrangian.0,
            p.r2_lagrangian.1,
            p.r2_hamiltonian.0,
            p.r2_hamiltonian.1
        )
        .expect("write to string");
    }
    out
}

/// Reference-fit R² of the newest system per phase over correct seeds.
pub fn reference_curve(runs: &[RunRecord]) -> Result<Vec<ReferencePoint>> {
    if runs.is_empty() {
        return Err(MassError::NoRuns);
    }
    let n_phases = runs.iter().map(|r| r.phases.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for phase in 0..n_phases {
        let mut system = None;
        let (mut rl, mut rh) = (Vec::new(), Vec::new());
        for run in runs {
            let Some(sys) = newest_system(run, phase) else {
                continue;
            };
            system.get_or_insert(sys);
            if !run.phases[phase].correct {
                continue;
            }
            let l = fit_reference_activations(run, phase, sys, Formulation::Lagrangian);
            let h = fit_reference_activations(run, phase, sys, Formulation::Hamiltonian);
            match (l, h) {
                (Ok(l), Ok(h)) if l.is_finite() && h.is_finite() => {
                    rl.push(l);
                    rh.push(h);
                }
                (l, h) => warn!("seed {} phase {phase}: reference fit skipped ({l:?}, {h:?})", run.seed),
            }
        }
        if let Some(system) = system {
            out.push(ReferencePoint {
                phase,
                system,
                seeds: rl.len(),
                r2_lagrangian: mean_std(&rl),
                r2_hamiltonian: mean_std(&rh),
            });
        }
    }
    Ok(out)
}

/// Distillation of one seed plus its random-term controls.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillRow {
    pub seed: u64,
    pub r2_train: f64,
    pub r2_test: f64,
    /// Reference-fit R² of the same seed, Lagrangian then Hamiltonian.
    pub reference: (f64, f64),
    /// Held-out R² of each control fit, with the term pair used.
    pub controls: Vec<((usize, usize), f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillTable {
    pub phase: usize,
    pub system: SystemId,
    pub rows: Vec<DistillRow>,
    /// Seeds skipped, with the reason.
    pub skipped: Vec<(u64, String)>,
}

impl DistillTable {
    pub fn mean_r2_test(&self) -> f64 {
        mean_std(&self.rows.iter().map(|r| r.r2_test).collect::<Vec<_>>()).0
    }

    pub fn mean_r2_train(&self) -> f64 {
        mean_std(&self.rows.iter().map(|r| r.r2_train).collect::<Vec<_>>()).0
    }

    /// Mean reference-fit R², Lagrangian then Hamiltonian.
    pub fn mean_reference(&self) -> (f64, f64) {
        let l: Vec<f64> = self.rows.iter().map(|r| r.reference.0).collect();
        let h: Vec<f64> = self.rows.iter().map(|r| r.reference.1).collect();
        (mean_std(&l).0, mean_std(&h).0)
    }

    /// Share of control fits with held-out R² at most zero.
    pub fn control_failure_rate(&self) -> f64 {
        let all: Vec<f64> = self.rows.iter().flat_map(|r| r.controls.iter().map(|c| c.1)).collect();
        if all.is_empty() {
            return f64::NAN;
        }
        all.iter().filter(|r| **r <= 0.0 || r.is_nan()).count() as f64 / all.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,kind,term_p,term_q,r2_train,r2_test,r2_reference_l,r2_reference_h\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},target,,,{},{},{},{}",
                r.seed, r.r2_train, r.r2_test, r.reference.0, r.reference.1
            )
            .expect("write to string");
            for ((p, q), r2) in &r.controls {
                writeln!(out, "{},control,{p},{q},,{r2},,", r.seed).expect("write to string");
            }
        }
        out
    }
}

/// Two-term distillation of `system` at `phase` on the correct seeds, with
/// `controls` random-term control fits per seed.
pub fn distill_table(runs: &[RunRecord], phase: usize, system: SystemId, controls: usize) -> Result<DistillTable> {
    if runs.is_empty() {
        return Err(MassError::NoRuns);
    }
    let mut table = DistillTable {
        phase,
        system,
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for run in runs {
        let Some(rec) = run.phases.get(phase) else {
            continue;
        };
        if !rec.systems().contains(&system) || !rec.correct {
            continue;
        }
        match distill_lagrangian(run, phase, system) {
            Ok(d) => {
                let mut rng = derived_rng(run.seed, "distill-control", phase as u64);
                let mut ctl = Vec::with_capacity(controls);
                for _ in 0..controls {
                    match distill_control(run, phase, system, &mut rng) {
                        Ok((pq, c)) => ctl.push((pq, c.r2_test)),
                        Err(e) => warn!("seed {}: control fit failed ({e})", run.seed),
                    }
                }
                let refit = |f| fit_reference_activations(run, phase, system, f).unwrap_or(f64::NAN);
                table.rows.push(DistillRow {
                    seed: run.seed,
                    r2_train: d.r2_train,
                    r2_test: d.r2_test,
                    reference: (refit(Formulation::Lagrangian), refit(Formulation::Hamiltonian)),
                    controls: ctl,
                });
            }
            Err(e) => table.skipped.push((run.seed, e.to_string())),
        }
    }
    Ok(table)
}
