//! Euler–Lagrange accelerations of closed-form Lagrangians.

use nalgebra::{DMatrix, DVector};

use crate::autodiff::{Dual2, Scalar};
use crate::error::{MassError, Result};

/// Condition number above which `L_yy` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// A closed-form scalar `L(x, y)`, written once against [`Scalar`] so it can
/// be evaluated on plain floats or on forward duals.
pub trait Lagrangian {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S;
}

/// Value, gradient and Hessian of `L` at `(x, y)` in the stacked variables
/// `(x_1..x_d, y_1..y_d)`.
pub struct LagrangianDerivatives {
    pub dim: usize,
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `2d x 2d`.
    pub hess: Vec<f64>,
}

impl LagrangianDerivatives {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * 2 * self.dim + j]
    }

    pub fn l_x(&self) -> Vec<f64> {
        self.grad[..self.dim].to_vec()
    }

    pub fn l_yy(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d * d).map(|k| self.at(d + k / d, d + k % d)).collect()
    }

    /// `(L_yx)_{ij} = d^2 L / dy_i dx_j`.
    pub fn l_yx(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d * d).map(|k| self.at(d + k / d, k % d)).collect()
    }
}

fn derivatives_n<const N: usize, L: Lagrangian>(
    l: &L,
    x: &[f64],
    y: &[f64],
) -> LagrangianDerivatives {
    let d = N / 2;
    let xs: Vec<Dual2<N>> = (0..d).map(|i| Dual2::variable(x[i], i)).collect();
    let ys: Vec<Dual2<N>> = (0..d).map(|i| Dual2::variable(y[i], d + i)).collect();
    let out = l.eval(&xs, &ys);
    LagrangianDerivatives {
        dim: d,
        value: out.value,
        grad: out.grad.to_vec(),
        hess: out.hess.iter().flatten().copied().collect(),
    }
}

/// Exact first and second derivatives of `L` by forward-mode duals.
pub fn lagrangian_derivatives<L: Lagrangian>(
    l: &L,
    x: &[f64],
    y: &[f64],
) -> Result<LagrangianDerivatives> {
    let d = l.dim();
    if x.len() != d || y.len() != d {
        return Err(MassError::Shape(format!(
            "point of dimension {} for a Lagrangian of dimension {d}",
            x.len()
        )));
    }
    Ok(match d {
        1 => derivatives_n::<2, L>(l, x, y),
        2 => derivatives_n::<4, L>(l, x, y),
        3 => derivatives_n::<6, L>(l, x, y),
        4 => derivatives_n::<8, L>(l, x, y),
        6 => derivatives_n::<12, L>(l, x, y),
        _ => {
            return Err(MassError::Shape(format!(
                "unsupported Lagrangian dimension {d}"
            )))
        }
    })
}

/// Solves `L_yy a = L_x - L_yx y`, the Euler–Lagrange acceleration.
pub fn euler_lagrange_accel<L: Lagrangian>(l: &L, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let der = lagrangian_derivatives(l, x, y)?;
    let d = der.dim;
    let l_x = der.l_x();
    let l_yy = der.l_yy();
    let l_yx = der.l_yx();
    let mut rhs: Vec<f64> = (0..d)
        .map(|i| l_x[i] - (0..d).map(|j| l_yx[i * d + j] * y[j]).sum::<f64>())
        .collect();
    if d == 1 {
        let m = l_yy[0];
        if m == 0.0 || !m.is_finite() {
            return Err(MassError::SingularMassMatrix {
                condition: f64::INFINITY,
            });
        }
        rhs[0] /= m;
        return Ok(rhs);
    }
    let m = DMatrix::from_row_slice(d, d, &l_yy);
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let condition = if min == 0.0 { f64::INFINITY } else { max / min };
    if !(condition <= MAX_CONDITION) {
        return Err(MassError::SingularMassMatrix { condition });
    }
    let sol = m
        .lu()
        .solve(&DVector::from_vec(rhs))
        .ok_or(MassError::SingularMassMatrix { condition })?;
    Ok(sol.iter().copied().collect())
}
