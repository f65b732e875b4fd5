//! Stabilized Moore–Penrose pseudo-inverse `pinv(M + b I)` and its reverse
//! derivative.

use nalgebra::DMatrix;

use crate::autodiff::{ParamTape, Scalar, Var};

/// Relative singular-value cutoff.
pub const RCOND: f64 = 1e-10;

/// Pseudo-inverse of a row-major `d x d` matrix with cutoff
/// `RCOND * max singular value`. For symmetric matrices this equals the
/// eigendecomposition route with cutoff on `|eigenvalue|`.
pub fn pinv(a: &[f64], d: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), d * d);
    if d == 1 {
        let v = a[0];
        return vec![if v == 0.0 || !v.is_finite() { 0.0 } else { 1.0 / v }];
    }
    let m = DMatrix::from_row_slice(d, d, a);
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let smax = svd.singular_values.iter().fold(0.0f64, |acc, s| acc.max(*s));
    let cutoff = RCOND * smax;
    let mut out = vec![0.0; d * d];
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= cutoff || *s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..d {
            for j in 0..d {
                // (V S^-1 U^T)_{ij}
                out[i * d + j] += vt[(k, i)] * inv * u[(j, k)];
            }
        }
    }
    out
}

/// `pinv(M + b I)`.
pub fn stabilized_pinv(m: &[f64], b: f64, d: usize) -> Vec<f64> {
    pinv(&shifted(m, b, d), d)
}

pub(crate) fn shifted(m: &[f64], b: f64, d: usize) -> Vec<f64> {
    let mut a = m.to_vec();
    for i in 0..d {
        a[i * d + i] += b;
    }
    a
}

fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

fn transpose(a: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j];
        }
    }
    out
}

fn identity_minus(a: &[f64], d: usize) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().map(|v| -v).collect();
    for i in 0..d {
        out[i * d + i] += 1.0;
    }
    out
}

/// Given `P = pinv(A)` and the adjoint `G` of `P`, returns the adjoint of `A`
/// (constant-rank derivative of the pseudo-inverse):
/// `-P^T G P^T + (I - A P) G^T P P^T + P^T P G^T (I - P A)`.
pub fn pinv_backward(a: &[f64], p: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![-p[0] * g[0] * p[0]];
    }
    let pt = transpose(p, d);
    let gt = transpose(g, d);
    let q = identity_minus(&matmul(a, p, d), d);
    let r = identity_minus(&matmul(p, a, d), d);
    let t1 = matmul(&matmul(&pt, g, d), &pt, d);
    let t2 = matmul(&matmul(&q, &gt, d), &matmul(p, &pt, d), d);
    let t3 = matmul(&matmul(&matmul(&pt, p, d), &gt, d), &r, d);
    (0..d * d).map(|k| -t1[k] + t2[k] + t3[k]).collect()
}

/// Scalars that support the stabilized pseudo-inverse.
pub trait PinvScalar: Scalar {
    fn stabilized_pinv(m: &[Self], b: Self, d: usize) -> Vec<Self>;
}

impl PinvScalar for f64 {
    fn stabilized_pinv(m: &[f64], b: f64, d: usize) -> Vec<f64> {
        stabilized_pinv(m, b, d)
    }
}

impl<'t> PinvScalar for Var<'t> {
    fn stabilized_pinv(m: &[Var<'t>], b: Var<'t>, d: usize) -> Vec<Var<'t>> {
        let tape: &'t ParamTape = b.tape();
        let mv: Vec<f64> = m.iter().map(|v| v.value()).collect();
        let a = shifted(&mv, b.value(), d);
        let p = pinv(&a, d);
        let pt = transpose(&p, d);
        let q = identity_minus(&matmul(&a, &p, d), d);
        let r = identity_minus(&matmul(&p, &a, d), d);
        let ppt = matmul(&p, &pt, d);
        let ptp = matmul(&pt, &p, d);
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut parents = Vec::with_capacity(d * d + 1);
                let mut db = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        let partial = -p[i * d + k] * p[l * d + j]
                            + ppt[i * d + l] * q[k * d + j]
                            + r[i * d + l] * ptp[k * d + j];
                        if k == l {
                            db += partial;
                        }
                        parents.push((m[k * d + l], partial));
                    }
                }
                parents.push((b, db));
                out.push(tape.custom(p[i * d + j], &parents));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_cases() {
        assert_eq!(stabilized_pinv(&[2.0], 0.0, 1), vec![0.5]);
        assert_eq!(stabilized_pinv(&[0.0], 0.0, 1), vec![0.0]);
    }

    #[test]
    fn diagonal_with_shift() {
        let p = stabilized_pinv(&[4.0, 0.0, 0.0, 0.0], 1.0, 2);
        let expected = [0.2, 0.0, 0.0, 1.0];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_deficient_pinv_is_projector_inverse() {
        // A = u u^T with u = (1, 2)/sqrt(5) scaled by 3
        let a = [0.6, 1.2, 1.2, 2.4];
        let p = pinv(&a, 2);
        let proj = matmul(&p, &a, 2);
        let proj2 = matmul(&proj, &proj, 2);
        for k in 0..4 {
            assert!((proj2[k] - proj[k]).abs() < 1e-12);
        }
        // A P A = A
        let apa = matmul(&matmul(&a, &p, 2), &a, 2);
        for k in 0..4 {
            assert!((apa[k] - a[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_nonsymmetric_matrix() {
        let a = [1.3, -0.4, 0.7, 2.1];
        let g = [0.3, -1.1, 0.5, 0.9];
        let p = pinv(&a, 2);
        let abar = pinv_backward(&a, &p, &g, 2);
        let f = |m: &[f64]| -> f64 { pinv(m, 2).iter().zip(&g).map(|(x, y)| x * y).sum() };
        let h = 1e-6;
        for k in 0..4 {
            let mut up = a;
            let mut dn = a;
            up[k] += h;
            dn[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - abar[k]).abs() < 1e-7, "{k}: {fd} vs {}", abar[k]);
        }
    }
}
