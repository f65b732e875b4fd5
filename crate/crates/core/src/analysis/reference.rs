use nalgebra::DMatrix;

use super::linalg::{lstsq, pooled_r2, take_rows, train_test_split, with_intercept};
use super::significance::significant_indices;
use crate::error::{MassError, Result};
use crate::model::{TermBank, N_TERMS};
use crate::physics::{lagrangian_derivatives, Batch, SystemId, SystemSpec};
use crate::seed::derived_rng;
use crate::train::RunRecord;

/// Fraction of samples used to fit; the rest score the fit.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Formulation {
    Lagrangian,
    Hamiltonian,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Lagrangian => "lagrangian",
            Formulation::Hamiltonian => "hamiltonian",
        }
    }
}

/// Reference prediction terms of the analytic system, rows `(sample, axis)`.
///
/// Hamiltonian: the two canonical right-hand sides `-H_x` and `H_y`, with
/// `H = y . L_y - L` the energy. Lagrangian: the two Euler–Lagrange terms
/// `L_yy^-1 L_x` and `-L_yy^-1 L_yx y`.
pub fn reference_targets(spec: &SystemSpec, batch: &Batch, which: Formulation) -> Result<DMatrix<f64>> {
    let d = batch.dim;
    let mut out = DMatrix::zeros(batch.len() * d, 2);
    for s in 0..batch.len() {
        let (x, y) = (batch.x_row(s), batch.y_row(s));
        let der = lagrangian_derivatives(spec, x, y)?;
        let l_x = der.l_x();
        let l_yx = DMatrix::from_row_slice(d, d, &der.l_yx());
        let yv = DMatrix::from_column_slice(d, 1, y);
        match which {
            Formulation::Hamiltonian => {
                // H_x = L_yx^T y - L_x and H_y = L_yy y.
                let hx = l_yx.transpose() * &yv;
                let hy = DMatrix::from_row_slice(d, d, &der.l_yy()) * &yv;
                for i in 0..d {
                    out[(s * d + i, 0)] = l_x[i] - hx[i];
                    out[(s * d + i, 1)] = hy[i];
                }
            }
            Formulation::Lagrangian => {
                let m = DMatrix::from_row_slice(d, d, &der.l_yy());
                let lu = m.lu();
                let u = lu
                    .solve(&DMatrix::from_column_slice(d, 1, &l_x))
                    .ok_or(MassError::SingularMassMatrix {
                        condition: f64::INFINITY,
                    })?;
                let v = lu.solve(&(l_yx * &yv)).ok_or(MassError::SingularMassMatrix {
                    condition: f64::INFINITY,
                })?;
                for i in 0..d {
                    out[(s * d + i, 0)] = u[i];
                    out[(s * d + i, 1)] = -v[i];
                }
            }
        }
    }
    Ok(out)
}

/// Weighted ydot activations as a `(N d) x cols` matrix.
pub fn activation_rows(bank: &TermBank, cols: &[usize]) -> DMatrix<f64> {
    let d = bank.dim;
    let a = bank.weighted_activations();
    DMatrix::from_fn(bank.n * d, cols.len(), |r, j| {
        let (s, c) = (r / d, r % d);
        a[(s * N_TERMS + cols[j]) * d + c]
    })
}

/// Columns whose mean activation magnitude reaches `fraction` of the total.
pub fn significant_columns(bank: &TermBank, fraction: f64) -> Result<Vec<usize>> {
    let d = bank.dim;
    let a = bank.weighted_activations();
    let mut mean = vec![0.0; N_TERMS];
    for s in 0..bank.n {
        for (i, m) in mean.iter_mut().enumerate() {
            let v = &a[(s * N_TERMS + i) * d..][..d];
            *m += v.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
    }
    significant_indices(&mean, fraction)
}

/// Expands sample indices into `(sample, axis)` row indices.
pub fn sample_rows(samples: &[usize], d: usize) -> Vec<usize> {
    samples.iter().flat_map(|s| (0..d).map(move |c| s * d + c)).collect()
}

/// Regresses every target column on `[1 | acts]` over `train` rows and
/// returns the pooled R² on `test` rows.
pub fn heldout_r2(acts: &DMatrix<f64>, targets: &DMatrix<f64>, train: &[usize], test: &[usize]) -> Result<f64> {
    let a = with_intercept(acts);
    let coef = lstsq(&take_rows(&a, train), &take_rows(targets, train))?;
    let a_test = take_rows(&a, test);
    Ok(pooled_r2(&(&a_test * &coef), &take_rows(targets, test)))
}

/// Held-out R² of the significant activations of `system` against the
/// analytic reference terms of one formulation.
pub fn fit_reference_activations(
    run: &RunRecord,
    phase: usize,
    system: SystemId,
    which: Formulation,
) -> Result<f64> {
    let rec = run.phase(phase)?;
    let bank = rec.bank(system)?;
    if bank.activations.iter().any(|v| !v.is_finite()) {
        return Err(MassError::DegenerateRun {
            seed: run.seed,
            reason: format!("non-finite activations for {system} at phase {phase}"),
        });
    }
    let batch = &rec.dump(system)?.batch;
    let cols = significant_columns(&bank, 0.99)?;
    let acts = activation_rows(&bank, &cols);
    let targets = reference_targets(&system.spec(), batch, which)?;
    let (train, test) = train_test_split(
        batch.len(),
        TRAIN_FRACTION,
        &mut derived_rng(run.seed, "reference-split", system.index() as u64),
    );
    heldout_r2(&acts, &targets, &sample_rows(&train, bank.dim), &sample_rows(&test, bank.dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::PhasePoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sho_targets() {
        let spec = SystemId::Sho.spec();
        let b = Batch::from_points(&spec, &[PhasePoint::new(vec![0.5], vec![0.2])]).unwrap();
        let h = reference_targets(&spec, &b, Formulation::Hamiltonian).unwrap();
        assert!((h[(0, 0)] + 0.5).abs() < 1e-14 && (h[(0, 1)] - 0.2).abs() < 1e-14);
        let l = reference_targets(&spec, &b, Formulation::Lagrangian).unwrap();
        assert!((l[(0, 0)] + 0.5).abs() < 1e-14 && l[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn lagrangian_terms_sum_to_the_acceleration() {
        let spec = SystemId::DoublePendulum.spec();
        let pts = [PhasePoint::new(vec![0.3, -0.4], vec![0.5, 0.1])];
        let b = Batch::from_points(&spec, &pts).unwrap();
        let l = reference_targets(&spec, &b, Formulation::Lagrangian).unwrap();
        for i in 0..2 {
            assert!((l[(i, 0)] + l[(i, 1)] - b.ydot[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_columns_fit_perfectly_and_noise_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let t = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let noise = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let (train, test) = train_test_split(n, 0.8, &mut rng);
        let exact = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 2.0 * t[i] } else { noise[(i, 0)] });
        assert!((heldout_r2(&exact, &t, &train, &test).unwrap() - 1.0).abs() < 1e-12);
        let mut mean = 0.0;
        for trial in 0..50 {
            let mut r = ChaCha8Rng::seed_from_u64(100 + trial);
            let y = DMatrix::from_fn(n, 1, |_, _| r.random_range(-1.0..1.0));
            mean += heldout_r2(&noise, &y, &train, &test).unwrap() / 50.0;
        }
        assert!(mean <= 0.0, "mean held-out r2 of noise {mean}");
    }
}
