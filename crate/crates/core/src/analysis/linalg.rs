use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{MassError, Result};

/// Relative singular-value cutoff of the least-squares solver.
pub const LSTSQ_RCOND: f64 = 1e-12;

/// Minimum-norm least-squares solution of `a x = b`, dropping singular
/// values below `LSTSQ_RCOND * sigma_max`.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return Ok(DMatrix::zeros(a.ncols(), b.ncols()));
    }
    svd.solve(b, LSTSQ_RCOND * smax)
        .map_err(|e| MassError::Degenerate(e.to_string()))
}

/// `1 - SS_res / SS_tot` pooled over every column of `target`; column means
/// are taken per column. `NaN` when the targets have no variance.
pub fn pooled_r2(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    let mut res = 0.0;
    let mut tot = 0.0;
    for j in 0..target.ncols() {
        let col = target.column(j);
        let mean = col.mean();
        for i in 0..target.nrows() {
            res += (pred[(i, j)] - col[i]).powi(2);
            tot += (col[i] - mean).powi(2);
        }
    }
    if tot > 0.0 {
        1.0 - res / tot
    } else {
        f64::NAN
    }
}

/// Rows of `m` listed in `idx`.
pub fn take_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Shuffled `(train, test)` row indices with `train_fraction` of the rows
/// in the first part.
pub fn train_test_split(n: usize, train_fraction: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = ((n as f64 * train_fraction).round() as usize).min(n);
    let test = idx.split_off(cut);
    (idx, test)
}

/// `[1 | m]`.
pub fn with_intercept(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols() + 1, |i, j| if j == 0 { 1.0 } else { m[(i, j - 1)] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_system_is_solved() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(3, 1, &[2.0, 3.0, 5.0]);
        let x = lstsq(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
        assert!((pooled_r2(&(&a * &x), &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_partitions_rows() {
        use rand::SeedableRng;
        let (a, b) = train_test_split(10, 0.8, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_columns_are_tolerated() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let x = lstsq(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }
}
