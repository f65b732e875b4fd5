use nalgebra::DMatrix;

use super::linalg::{lstsq, pooled_r2};
use crate::error::{MassError, Result};
use crate::model::scalar_values;
use crate::physics::SystemId;
use crate::train::RunRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TheoryLabel {
    /// Kinetic and potential coefficients share a sign (`S ~ T + V`).
    Hamiltonian,
    /// Opposite signs (`S ~ T - V`).
    Lagrangian,
    /// One of the coefficients vanished.
    Degenerate,
}

impl TheoryLabel {
    pub fn from_coefficients(c1: f64, c2: f64) -> TheoryLabel {
        let p = c1 * c2;
        if p > 0.0 {
            TheoryLabel::Hamiltonian
        } else if p < 0.0 {
            TheoryLabel::Lagrangian
        } else {
            TheoryLabel::Degenerate
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TheoryLabel::Hamiltonian => "hamiltonian",
            TheoryLabel::Lagrangian => "lagrangian",
            TheoryLabel::Degenerate => "degenerate",
        }
    }
}

/// `S ~ c0 + c1 T + c2 V` over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub label: TheoryLabel,
    pub r2: f64,
}

/// Collinearity cutoff on the standardized design.
const COLLINEAR_RCOND: f64 = 1e-8;

/// Least squares of `s` on `[1, kinetic, potential]`.
pub fn fit_theory(s: &[f64], kinetic: &[f64], potential: &[f64]) -> Result<TheoryFit> {
    let n = s.len();
    if kinetic.len() != n || potential.len() != n {
        return Err(MassError::Shape("S, T and V must have equal length".into()));
    }
    if n < 3 {
        return Err(MassError::Degenerate(format!("{n} samples cannot fix three coefficients")));
    }
    if s.iter().chain(kinetic).chain(potential).any(|v| !v.is_finite()) {
        return Err(MassError::Degenerate("non-finite S, T or V".into()));
    }
    // Collinearity is judged on centered, unit-variance T and V so that the
    // intercept and units do not mask it.
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        (m, sd)
    };
    let (mt, st) = std(kinetic);
    let (mv, sv) = std(potential);
    if !(st > 0.0 && sv > 0.0) {
        return Err(MassError::Degenerate("T or V is constant on the batch".into()));
    }
    let z = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            (kinetic[i] - mt) / st
        } else {
            (potential[i] - mv) / sv
        }
    });
    let sing = z.singular_values();
    if sing.min() < COLLINEAR_RCOND * sing.max() {
        return Err(MassError::Degenerate("T and V are collinear on the batch".into()));
    }
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => kinetic[i],
        _ => potential[i],
    });
    let b = DMatrix::from_column_slice(n, 1, s);
    let c = lstsq(&a, &b)?;
    let r2 = pooled_r2(&(&a * &c), &b);
    Ok(TheoryFit {
        c0: c[0],
        c1: c[1],
        c2: c[2],
        label: TheoryLabel::from_coefficients(c[1], c[2]),
        r2,
    })
}

/// Fits the learned `S` of `system` at `phase` on the analysis batch.
pub fn classify_theory(run: &RunRecord, phase: usize, system: SystemId) -> Result<TheoryFit> {
    let rec = run.phase(phase)?;
    let net = rec.net(system)?;
    let batch = &rec.dump(system)?.batch;
    let s = scalar_values(net, batch).map_err(|_| MassError::DegenerateRun {
        seed: run.seed,
        reason: format!("S of {system} is not finite at phase {phase}"),
    })?;
    let spec = system.spec();
    let (mut t, mut v) = (Vec::with_capacity(s.len()), Vec::with_capacity(s.len()));
    for i in 0..batch.len() {
        t.push(spec.kinetic(batch.x_row(i), batch.y_row(i)));
        v.push(spec.potential(batch.x_row(i), batch.y_row(i)));
    }
    fit_theory(&s, &t, &v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv() -> (Vec<f64>, Vec<f64>) {
        let t = (0..40).map(|i| (i as f64 * 0.31).sin().powi(2)).collect();
        let v = (0..40).map(|i| (i as f64 * 0.17).cos() + 0.1 * i as f64).collect();
        (t, v)
    }

    #[test]
    fn sign_rule_examples() {
        let (t, v) = tv();
        let h: Vec<f64> = t.iter().zip(&v).map(|(a, b)| a + b).collect();
        let f = fit_theory(&h, &t, &v).unwrap();
        assert_eq!(f.label, TheoryLabel::Hamiltonian);
        assert!((f.r2 - 1.0).abs() < 1e-12);

        let l: Vec<f64> = t.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert_eq!(fit_theory(&l, &t, &v).unwrap().label, TheoryLabel::Lagrangian);

        let s: Vec<f64> = t.iter().zip(&v).map(|(a, b)| 2.0 * a + 0.5 * b + 3.0).collect();
        let f = fit_theory(&s, &t, &v).unwrap();
        assert_eq!(f.label, TheoryLabel::Hamiltonian);
        assert!((f.c0 - 3.0).abs() < 1e-9 && (f.c1 - 2.0).abs() < 1e-9 && (f.c2 - 0.5).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negating_s_keeps_the_label() {
        let (t, v) = tv();
        let l: Vec<f64> = t.iter().zip(&v).map(|(a, b)| a - b).collect();
        let neg: Vec<f64> = l.iter().map(|x| -x).collect();
        assert_eq!(fit_theory(&neg, &t, &v).unwrap().label, TheoryLabel::Lagrangian);
    }

    #[test]
    fn collinear_energies_are_degenerate() {
        let (t, _) = tv();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!(matches!(fit_theory(&t, &t, &v), Err(MassError::Degenerate(_))));
        assert_eq!(TheoryLabel::from_coefficients(0.0, 1.0), TheoryLabel::Degenerate);
    }
}
