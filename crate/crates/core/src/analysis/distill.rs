//! Splitting the learned prediction `sum_j a_j` into two target terms with
//! `u_hat = sum c_j a_j`, `v_hat = sum d_j a_j` and `c_j + d_j = 1`.
//!
//! Substituting `d = 1 - c` turns the constrained problem into ordinary
//! least squares: with `s = A 1`, the optimum solves
//! `A^T A c = A^T (u + s - v) / 2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::linalg::{take_rows, train_test_split};
use super::reference::{activation_rows, sample_rows, TRAIN_FRACTION};
use crate::error::{MassError, Result};
use crate::model::catalog::{double_term, single_term, MAT_SXY, MAT_SYY_INV, VEC_SX, VEC_Y};
use crate::model::{raw_term_matrix, TermBank, N_TERMS};
use crate::physics::SystemId;
use crate::seed::derived_rng;
use crate::train::RunRecord;

/// Ridge added to the normal matrix, relative to its mean diagonal.
pub const DISTILL_RIDGE: f64 = 1e-10;

/// Catalog index of `S_yy^-1 S_x`.
pub const U_TERM: usize = single_term(MAT_SYY_INV, VEC_SX);
/// Catalog index of `S_yy^-1 S_xy y`.
pub const V_TERM: usize = double_term(MAT_SYY_INV, MAT_SXY, VEC_Y);

#[derive(Clone, Debug, PartialEq)]
pub struct DistillResult {
    pub c: Vec<f64>,
    /// `1 - c`, elementwise; `c_j + d_j` is 1 up to one rounding.
    pub d: Vec<f64>,
    pub r2_train: f64,
    pub r2_test: f64,
}

/// Mean of `(A c - u)^2 + (A (1 - c) - v)^2` over the listed rows.
pub fn distill_objective(a: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, c: &[f64], rows: &[usize]) -> f64 {
    let (res_u, res_v) = residuals(a, u, v, c, rows);
    (res_u + res_v) / rows.len() as f64
}

fn residuals(a: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, c: &[f64], rows: &[usize]) -> (f64, f64) {
    let mut ru = 0.0;
    let mut rv = 0.0;
    for &r in rows {
        let (mut uh, mut vh) = (0.0, 0.0);
        for (j, cj) in c.iter().enumerate() {
            uh += cj * a[(r, j)];
            vh += (1.0 - cj) * a[(r, j)];
        }
        ru += (uh - u[r]).powi(2);
        rv += (vh - v[r]).powi(2);
    }
    (ru, rv)
}

fn joint_r2(a: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, c: &[f64], rows: &[usize]) -> f64 {
    let (ru, rv) = residuals(a, u, v, c, rows);
    let n = rows.len() as f64;
    let mu = rows.iter().map(|r| u[*r]).sum::<f64>() / n;
    let mv = rows.iter().map(|r| v[*r]).sum::<f64>() / n;
    let tot: f64 = rows
        .iter()
        .map(|r| (u[*r] - mu).powi(2) + (v[*r] - mv).powi(2))
        .sum();
    if tot > 0.0 {
        1.0 - (ru + rv) / tot
    } else {
        f64::NAN
    }
}

/// Fits `c` on `train` rows and scores both splits jointly over `u` and `v`.
pub fn distill(a: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, train: &[usize], test: &[usize]) -> Result<DistillResult> {
    let p = a.ncols();
    let at = take_rows(a, train);
    let ones = DVector::from_element(p, 1.0);
    let s = &at * &ones;
    let rhs_vec = DVector::from_fn(train.len(), |i, _| 0.5 * (u[train[i]] + s[i] - v[train[i]]));
    let mut normal = at.transpose() * &at;
    let scale = normal.trace() / p.max(1) as f64;
    if !scale.is_finite() {
        return Err(MassError::SingularFit);
    }
    let ridge = DISTILL_RIDGE * if scale > 0.0 { scale } else { 1.0 };
    for i in 0..p {
        normal[(i, i)] += ridge;
    }
    let rhs = at.transpose() * rhs_vec;
    let chol = normal.cholesky().ok_or(MassError::SingularFit)?;
    let c: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    if c.iter().any(|x| !x.is_finite()) {
        return Err(MassError::SingularFit);
    }
    Ok(DistillResult {
        d: c.iter().map(|x| 1.0 - x).collect(),
        r2_train: joint_r2(a, u, v, &c, train),
        r2_test: joint_r2(a, u, v, &c, test),
        c,
    })
}

fn run_bank(run: &RunRecord, phase: usize, system: SystemId) -> Result<TermBank> {
    let bank = run.phase(phase)?.bank(system)?;
    if bank.activations.iter().any(|v| !v.is_finite()) {
        return Err(MassError::DegenerateRun {
            seed: run.seed,
            reason: format!("non-finite activations for {system} at phase {phase}"),
        });
    }
    Ok(bank)
}

fn column(terms: &[f64], n: usize, d: usize, term: usize, sign: f64) -> DVector<f64> {
    DVector::from_fn(n * d, |r, _| sign * terms[((r / d) * N_TERMS + term) * d + r % d])
}

fn distill_terms(run: &RunRecord, phase: usize, system: SystemId, bank: &TermBank, u: DVector<f64>, v: DVector<f64>) -> Result<DistillResult> {
    let cols: Vec<usize> = (0..N_TERMS).collect();
    let a = activation_rows(bank, &cols);
    let (train, test) = train_test_split(
        bank.n,
        TRAIN_FRACTION,
        &mut derived_rng(run.seed, "distill-split", (phase * 64 + system.index()) as u64),
    );
    distill(&a, &u, &v, &sample_rows(&train, bank.dim), &sample_rows(&test, bank.dim))
}

/// Raw terms of the run's `S` on the analysis batch with the stabilizers
/// removed, so inverses are plain (pseudo-)inverses of the Hessian blocks.
fn plain_terms(run: &RunRecord, phase: usize, system: SystemId) -> Result<Vec<f64>> {
    let rec = run.phase(phase)?;
    let mut net = rec.net(system)?.clone();
    net.set_stabilizers(0.0, 0.0, 0.0);
    let plain = raw_term_matrix(&net, &rec.dump(system)?.batch)?;
    if plain.iter().any(|v| !v.is_finite()) {
        return Err(MassError::DegenerateRun {
            seed: run.seed,
            reason: format!("terms of {system} are not finite at phase {phase}"),
        });
    }
    Ok(plain)
}

/// Splits the learned prediction into `S_yy^-1 S_x` and `-S_yy^-1 S_xy y`,
/// both evaluated on the run's own `S` with plain inverses, so that their
/// sum is the Euler–Lagrange acceleration of `S`.
pub fn distill_lagrangian(run: &RunRecord, phase: usize, system: SystemId) -> Result<DistillResult> {
    let bank = run_bank(run, phase, system)?;
    let plain = plain_terms(run, phase, system)?;
    let u = column(&plain, bank.n, bank.dim, U_TERM, 1.0);
    let v = column(&plain, bank.n, bank.dim, V_TERM, -1.0);
    distill_terms(run, phase, system, &bank, u, v)
}

/// Control: the same fit onto two random terms of `S` other than the
/// targets. Returns the chosen catalog indices with the fit.
pub fn distill_control(
    run: &RunRecord,
    phase: usize,
    system: SystemId,
    rng: &mut impl Rng,
) -> Result<((usize, usize), DistillResult)> {
    let bank = run_bank(run, phase, system)?;
    let plain = plain_terms(run, phase, system)?;
    let mut pick = |avoid: &[usize]| loop {
        let i = rng.random_range(0..N_TERMS);
        if !avoid.contains(&i) {
            break i;
        }
    };
    let p = pick(&[U_TERM, V_TERM]);
    let q = pick(&[U_TERM, V_TERM, p]);
    let u = column(&plain, bank.n, bank.dim, p, 1.0);
    let v = column(&plain, bank.n, bank.dim, q, 1.0);
    Ok(((p, q), distill_terms(run, phase, system, &bank, u, v)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TermCatalog;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_terms_are_named() {
        let cat = TermCatalog::standard();
        assert_eq!(cat.entries[U_TERM].name(), "S_yy^-1 S_x");
        assert_eq!(cat.entries[V_TERM].name(), "S_yy^-1 S_xy y");
    }

    #[test]
    fn exact_split_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 100;
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::from_fn(n, 5, |i, j| match j {
            0 => u[i],
            1 => v[i],
            _ => 0.0,
        });
        let (train, test) = train_test_split(n, 0.8, &mut rng);
        let r = distill(&a, &u, &v, &train, &test).unwrap();
        assert!((r.c[0] - 1.0).abs() < 1e-8 && r.c[1].abs() < 1e-8);
        assert!((r.d[1] - 1.0).abs() < 1e-8);
        assert!((r.r2_test - 1.0).abs() < 1e-9);
        assert!(r
            .c
            .iter()
            .zip(&r.d)
            .all(|(c, d)| (c + d - 1.0).abs() <= f64::EPSILON * c.abs().max(1.0)));
    }

    #[test]
    fn unrelated_targets_do_not_generalise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let a = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (train, test) = train_test_split(n, 0.8, &mut rng);
        let r = distill(&a, &u, &v, &train, &test).unwrap();
        assert!(r.r2_test <= 0.0, "{}", r.r2_test);
    }

    #[test]
    fn solution_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60;
        let a = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(n, |i, _| a[(i, 0)] + 0.1 * rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |i, _| a[(i, 1)] - a[(i, 2)]);
        let rows: Vec<usize> = (0..n).collect();
        let r = distill(&a, &u, &v, &rows, &rows).unwrap();
        let best = distill_objective(&a, &u, &v, &r.c, &rows);
        for _ in 0..100 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(best <= distill_objective(&a, &u, &v, &c, &rows) + 1e-12);
        }
    }
}
