//! Second-order input jets of the scalar network.
//!
//! Each unit carries its value, gradient and (packed upper-triangular)
//! Hessian with respect to the raw inputs `(x, y)`. The coefficients are
//! generic [`Scalar`]s, so running the propagation with tape variables makes
//! every derivative entry differentiable in the parameters.

use super::scalar::Scalar;
use super::tape::{ParamTape, Var};
use crate::error::{MassError, Result};
use crate::model::net::{NetArch, ScalarNet};
use crate::physics::PhasePoint;

/// `S` together with its exact gradient and Hessian in the raw inputs
/// `(x_1..x_d, y_1..y_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2<T> {
    pub dim: usize,
    pub value: T,
    pub grad: Vec<T>,
    /// Row-major `2d x 2d`, exactly symmetric.
    pub hess: Vec<T>,
}

impl<T: Copy> Jet2<T> {
    pub fn n(&self) -> usize {
        2 * self.dim
    }

    pub fn hess_at(&self, i: usize, j: usize) -> T {
        self.hess[i * self.n() + j]
    }

    pub fn s_x(&self) -> Vec<T> {
        self.grad[..self.dim].to_vec()
    }

    pub fn s_y(&self) -> Vec<T> {
        self.grad[self.dim..].to_vec()
    }

    fn block(&self, row0: usize, col0: usize) -> Vec<T> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.hess_at(row0 + i, col0 + j));
            }
        }
        out
    }

    /// `d x d` row-major second derivative blocks.
    pub fn s_xx(&self) -> Vec<T> {
        self.block(0, 0)
    }

    pub fn s_yy(&self) -> Vec<T> {
        self.block(self.dim, self.dim)
    }

    /// `(S_xy)_{ij} = d^2 S / dx_i dy_j`.
    pub fn s_xy(&self) -> Vec<T> {
        self.block(0, self.dim)
    }

    pub fn s_yx(&self) -> Vec<T> {
        self.block(self.dim, 0)
    }
}

/// Index table for packed upper-triangular storage of an `n x n` symmetric
/// matrix.
#[derive(Clone, Debug)]
pub struct Packing {
    pub n: usize,
    table: Vec<usize>,
}

impl Packing {
    pub fn new(n: usize) -> Self {
        let mut table = vec![0; n * n];
        let mut k = 0;
        for a in 0..n {
            for b in a..n {
                table[a * n + b] = k;
                table[b * n + a] = k;
                k += 1;
            }
        }
        Packing { n, table }
    }

    /// Number of packed entries.
    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn idx(&self, a: usize, b: usize) -> usize {
        self.table[a * self.n + b]
    }

    /// Coefficients per unit: value, gradient, packed Hessian.
    pub fn coeffs(&self) -> usize {
        1 + self.n + self.len()
    }

    /// `(a, b)` pairs in packed order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for a in 0..self.n {
            for b in a..self.n {
                out.push((a, b));
            }
        }
        out
    }
}

/// Augmented network input `(x, y, x*x, y*y, x*y)` (elementwise products).
pub fn augment(point: &PhasePoint) -> Vec<f64> {
    let (x, y) = (&point.x, &point.y);
    let mut out = Vec::with_capacity(5 * x.len());
    out.extend_from_slice(x);
    out.extend_from_slice(y);
    out.extend(x.iter().map(|v| v * v));
    out.extend(y.iter().map(|v| v * v));
    out.extend(x.iter().zip(y).map(|(a, b)| a * b));
    out
}

/// Jets of the augmented inputs with respect to the raw `(x, y)`, laid out
/// as `[unit][coeff]` with `coeffs()` entries per unit.
pub fn augment_jets(x: &[f64], y: &[f64], packing: &Packing, out: &mut [f64]) {
    let d = x.len();
    let n = 2 * d;
    let k = packing.coeffs();
    debug_assert_eq!(out.len(), 5 * d * k);
    out.fill(0.0);
    let h0 = 1 + n;
    for i in 0..d {
        let xi = &mut out[i * k..(i + 1) * k];
        xi[0] = x[i];
        xi[1 + i] = 1.0;

        let yi = &mut out[(d + i) * k..(d + i + 1) * k];
        yi[0] = y[i];
        yi[1 + d + i] = 1.0;

        let xx = &mut out[(2 * d + i) * k..(2 * d + i + 1) * k];
        xx[0] = x[i] * x[i];
        xx[1 + i] = 2.0 * x[i];
        xx[h0 + packing.idx(i, i)] = 2.0;

        let yy = &mut out[(3 * d + i) * k..(3 * d + i + 1) * k];
        yy[0] = y[i] * y[i];
        yy[1 + d + i] = 2.0 * y[i];
        yy[h0 + packing.idx(d + i, d + i)] = 2.0;

        let xy = &mut out[(4 * d + i) * k..(4 * d + i + 1) * k];
        xy[0] = x[i] * y[i];
        xy[1 + i] = y[i];
        xy[1 + d + i] = x[i];
        xy[h0 + packing.idx(i, d + i)] = 1.0;
    }
}

/// One unit's jet during generic propagation.
#[derive(Clone, Debug)]
struct UnitJet<T> {
    coeffs: Vec<T>,
}

fn check_finite<T: Scalar>(units: &[UnitJet<T>], layer: usize) -> Result<()> {
    if units
        .iter()
        .all(|u| u.coeffs.iter().all(|c| c.value().is_finite()))
    {
        Ok(())
    } else {
        Err(MassError::NonFiniteValue { layer })
    }
}

/// Softplus applied to a jet: `h = sp(z)`, `h' = s z'`,
/// `h'' = s(1-s) z' z'^T + s z''`.
fn softplus_jet<T: Scalar>(z: &UnitJet<T>, packing: &Packing) -> UnitJet<T> {
    let n = packing.n;
    let z0 = z.coeffs[0];
    let s = z0.sigmoid();
    let s2 = s * (s.constant_like(1.0) - s);
    let mut coeffs = Vec::with_capacity(z.coeffs.len());
    coeffs.push(z0.softplus());
    for a in 0..n {
        coeffs.push(s * z.coeffs[1 + a]);
    }
    for (a, b) in packing.pairs() {
        let ga = z.coeffs[1 + a];
        let gb = z.coeffs[1 + b];
        coeffs.push(s2 * ga * gb + s * z.coeffs[1 + n + packing.idx(a, b)]);
    }
    UnitJet { coeffs }
}

/// Propagates second-order jets through the network with parameters
/// `params` (laid out as in [`NetArch::layers`]).
pub fn eval_jet2_generic<T: Scalar>(
    arch: &NetArch,
    params: &[T],
    x: &[f64],
    y: &[f64],
) -> Result<Jet2<T>> {
    let d = arch.dim;
    if x.len() != d || y.len() != d {
        return Err(MassError::Shape(format!(
            "point of dimension {} for a net of dimension {d}",
            x.len()
        )));
    }
    if params.len() < arch.n_params() {
        return Err(MassError::Shape(format!(
            "{} parameters for an architecture needing {}",
            params.len(),
            arch.n_params()
        )));
    }
    let packing = Packing::new(2 * d);
    let k = packing.coeffs();
    let mut input = vec![0.0; 5 * d * k];
    augment_jets(x, y, &packing, &mut input);

    let layers = arch.layers();
    let first = layers[0];
    let zero = params[0].zero_like();
    let mut units: Vec<UnitJet<T>> = (0..first.outputs)
        .map(|j| {
            let coeffs = (0..k)
                .map(|c| {
                    let mut acc = if c == 0 {
                        params[first.bias + j]
                    } else {
                        zero
                    };
                    for i in 0..first.inputs {
                        let u = input[i * k + c];
                        if u != 0.0 {
                            acc = acc + params[first.weight + j * first.inputs + i] * u;
                        }
                    }
                    acc
                })
                .collect();
            UnitJet { coeffs }
        })
        .collect();
    check_finite(&units, 0)?;

    for (l, layer) in layers.iter().enumerate().skip(1) {
        let activated: Vec<UnitJet<T>> = units.iter().map(|u| softplus_jet(u, &packing)).collect();
        check_finite(&activated, l - 1)?;
        units = (0..layer.outputs)
            .map(|j| {
                let row = &params[layer.weight + j * layer.inputs..][..layer.inputs];
                let coeffs = (0..k)
                    .map(|c| {
                        let mut acc = if c == 0 { params[layer.bias + j] } else { zero };
                        for (w, h) in row.iter().zip(&activated) {
                            acc = acc + *w * h.coeffs[c];
                        }
                        acc
                    })
                    .collect();
                UnitJet { coeffs }
            })
            .collect();
        check_finite(&units, l)?;
    }

    let out = &units[0].coeffs;
    let n = packing.n;
    let mut hess = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            hess.push(out[1 + n + packing.idx(a, b)]);
        }
    }
    Ok(Jet2 {
        dim: d,
        value: out[0],
        grad: out[1..1 + n].to_vec(),
        hess,
    })
}

/// `S(x, y)` with exact first and second input derivatives.
pub fn eval_jet2(net: &ScalarNet, point: &PhasePoint) -> Result<Jet2<f64>> {
    eval_jet2_generic(&net.arch, &net.params, &point.x, &point.y)
}

/// Same as [`eval_jet2`] but recorded on `tape`, whose parameters starting at
/// `offset` are the network's.
pub fn eval_jet2_taped<'t>(
    tape: &'t ParamTape,
    arch: &NetArch,
    offset: usize,
    point: &PhasePoint,
) -> Result<Jet2<Var<'t>>> {
    let vars = tape.param_vars();
    let end = offset + arch.n_params();
    if end > vars.len() {
        return Err(MassError::Shape(format!(
            "tape holds {} parameters, net needs {}..{end}",
            vars.len(),
            offset
        )));
    }
    eval_jet2_generic(arch, &vars[offset..end], &point.x, &point.y)
}
