//! The 172-term derivative bank and the shared linear head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batched::{NetForward, CHUNK};
use super::catalog::{
    double_term, single_term, MAT_SXX, MAT_SXY, MAT_SYY, N_MATRICES, N_TERMS, N_VECTORS, VEC_SX,
    VEC_SY, VEC_X, VEC_Y,
};
use super::net::ScalarNet;
use super::pinv::{pinv, pinv_backward, shifted, PinvScalar};
use crate::autodiff::{Jet2, Packing};
use crate::error::{MassError, Result};
use crate::physics::Batch;

/// Half-width of the uniform initialisation of the head.
pub const HEAD_INIT: f64 = 0.05;

/// Shared final layer: one weight per term for each output channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalLayer {
    pub ydot: Vec<f64>,
    pub xdot: Vec<f64>,
}

impl FinalLayer {
    pub fn init(rng: &mut impl Rng) -> Self {
        let mut draw = || -> Vec<f64> {
            (0..N_TERMS)
                .map(|_| rng.random_range(-HEAD_INIT..HEAD_INIT))
                .collect()
        };
        let ydot = draw();
        let xdot = draw();
        FinalLayer { ydot, xdot }
    }

    pub fn zeros() -> Self {
        FinalLayer {
            ydot: vec![0.0; N_TERMS],
            xdot: vec![0.0; N_TERMS],
        }
    }

    /// `ydot = wy * t[iy]`, `xdot = wx * t[ix]`.
    pub fn one_hot(iy: usize, wy: f64, ix: usize, wx: f64) -> Self {
        let mut f = Self::zeros();
        f.ydot[iy] = wy;
        f.xdot[ix] = wx;
        f
    }

    pub fn n_params(&self) -> usize {
        2 * N_TERMS
    }

    /// Flat `[ydot.., xdot..]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.ydot.iter().chain(&self.xdot).copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * N_TERMS {
            return Err(MassError::Shape(format!(
                "final layer needs {} values, got {}",
                2 * N_TERMS,
                flat.len()
            )));
        }
        Ok(FinalLayer {
            ydot: flat[..N_TERMS].to_vec(),
            xdot: flat[N_TERMS..].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.ydot.iter().chain(&self.xdot).all(|w| w.is_finite())
    }
}

fn matvec<T: PinvScalar>(m: &[T], v: &[T], d: usize) -> Vec<T> {
    (0..d)
        .map(|i| {
            let mut acc = m[i * d] * v[0];
            for j in 1..d {
                acc = acc + m[i * d + j] * v[j];
            }
            acc
        })
        .collect()
}

/// All 172 raw terms for one sample, flat `T x d` in catalog order. Generic
/// so it can run on tape variables.
pub fn raw_terms<T: PinvScalar>(jet: &Jet2<T>, x: &[f64], y: &[f64], b: [T; 3]) -> Vec<T> {
    let d = jet.dim;
    let like = jet.value;
    let vecs: [Vec<T>; N_VECTORS] = [
        x.iter().map(|v| like.constant_like(*v)).collect(),
        y.iter().map(|v| like.constant_like(*v)).collect(),
        jet.s_x(),
        jet.s_y(),
    ];
    let (sxx, syy, sxy) = (jet.s_xx(), jet.s_yy(), jet.s_xy());
    let mats: [Vec<T>; N_MATRICES] = [
        sxx.clone(),
        syy.clone(),
        sxy.clone(),
        T::stabilized_pinv(&sxx, b[0], d),
        T::stabilized_pinv(&syy, b[1], d),
        T::stabilized_pinv(&sxy, b[2], d),
    ];
    let mut out: Vec<T> = Vec::with_capacity(N_TERMS * d);
    for v in &vecs {
        out.extend_from_slice(v);
    }
    let mut singles = Vec::with_capacity(N_MATRICES * N_VECTORS);
    for m in &mats {
        for v in &vecs {
            let t = matvec(m, v, d);
            out.extend_from_slice(&t);
            singles.push(t);
        }
    }
    for m in &mats {
        for m2 in 0..N_MATRICES {
            for v in 0..N_VECTORS {
                out.extend(matvec(m, &singles[m2 * N_VECTORS + v], d));
            }
        }
    }
    out
}

/// Reusable per-sample buffers for the f64 term bank and its reverse sweep.
pub struct TermScratch {
    pub d: usize,
    pub packing: Packing,
    vecs: Vec<f64>,
    mats: Vec<f64>,
    shifted: Vec<f64>,
    /// Raw terms, `T x d`.
    pub terms: Vec<f64>,
    /// Adjoints of the raw terms, `T x d`; filled by the caller before
    /// [`backward`](Self::backward), consumed (overwritten) by it.
    pub tbar: Vec<f64>,
    vbar: Vec<f64>,
    abar: Vec<f64>,
}

impl TermScratch {
    pub fn new(d: usize) -> Self {
        TermScratch {
            d,
            packing: Packing::new(2 * d),
            vecs: vec![0.0; N_VECTORS * d],
            mats: vec![0.0; N_MATRICES * d * d],
            shifted: vec![0.0; 3 * d * d],
            terms: vec![0.0; N_TERMS * d],
            tbar: vec![0.0; N_TERMS * d],
            vbar: vec![0.0; N_VECTORS * d],
            abar: vec![0.0; N_MATRICES * d * d],
        }
    }

    /// Computes the raw terms from one sample's output-jet coefficients.
    pub fn forward(&mut self, coeffs: &[f64], x: &[f64], y: &[f64], b: [f64; 3]) {
        if self.d == 1 {
            return self.forward_scalar(coeffs, x[0], y[0], b);
        }
        let d = self.d;
        let n = 2 * d;
        let h0 = 1 + n;
        let dd = d * d;
        self.vecs[VEC_X * d..][..d].copy_from_slice(x);
        self.vecs[VEC_Y * d..][..d].copy_from_slice(y);
        self.vecs[VEC_SX * d..][..d].copy_from_slice(&coeffs[1..1 + d]);
        self.vecs[VEC_SY * d..][..d].copy_from_slice(&coeffs[1 + d..1 + n]);
        for i in 0..d {
            for j in 0..d {
                self.mats[MAT_SXX * dd + i * d + j] = coeffs[h0 + self.packing.idx(i, j)];
                self.mats[MAT_SYY * dd + i * d + j] = coeffs[h0 + self.packing.idx(d + i, d + j)];
                self.mats[MAT_SXY * dd + i * d + j] = coeffs[h0 + self.packing.idx(i, d + j)];
            }
        }
        for m in 0..3 {
            let a = shifted(&self.mats[m * dd..(m + 1) * dd], b[m], d);
            let p = pinv(&a, d);
            self.shifted[m * dd..(m + 1) * dd].copy_from_slice(&a);
            self.mats[(3 + m) * dd..(4 + m) * dd].copy_from_slice(&p);
        }

        self.terms[..N_VECTORS * d].copy_from_slice(&self.vecs);
        for a in 0..N_MATRICES {
            let m = &self.mats[a * dd..(a + 1) * dd];
            for v in 0..N_VECTORS {
                let src = &self.vecs[v * d..(v + 1) * d];
                let dst = single_term(a, v) * d;
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += m[i * d + j] * src[j];
                    }
                    self.terms[dst + i] = acc;
                }
            }
        }
        for a in 0..N_MATRICES {
            let m = &self.mats[a * dd..(a + 1) * dd];
            for a2 in 0..N_MATRICES {
                for v in 0..N_VECTORS {
                    let src = single_term(a2, v) * d;
                    let dst = double_term(a, a2, v) * d;
                    for i in 0..d {
                        let mut acc = 0.0;
                        for j in 0..d {
                            acc += m[i * d + j] * self.terms[src + j];
                        }
                        self.terms[dst + i] = acc;
                    }
                }
            }
        }
    }

    /// Reverse sweep from `tbar` to the adjoints of the output-jet
    /// coefficients (added into `coeffs_bar`) and of the stabilizers.
    pub fn backward(&mut self, coeffs_bar: &mut [f64], bbar: &mut [f64; 3]) {
        if self.d == 1 {
            return self.backward_scalar(coeffs_bar, bbar);
        }
        let d = self.d;
        let n = 2 * d;
        let h0 = 1 + n;
        let dd = d * d;
        self.vbar.fill(0.0);
        self.abar.fill(0.0);

        for a in 0..N_MATRICES {
            for a2 in 0..N_MATRICES {
                for v in 0..N_VECTORS {
                    let t = double_term(a, a2, v) * d;
                    let u = single_term(a2, v) * d;
                    for i in 0..d {
                        let g = self.tbar[t + i];
                        if g == 0.0 {
                            continue;
                        }
                        for j in 0..d {
                            self.abar[a * dd + i * d + j] += g * self.terms[u + j];
                            self.tbar[u + j] += self.mats[a * dd + i * d + j] * g;
                        }
                    }
                }
            }
        }
        for a in 0..N_MATRICES {
            for v in 0..N_VECTORS {
                let t = single_term(a, v) * d;
                for i in 0..d {
                    let g = self.tbar[t + i];
                    if g == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        self.abar[a * dd + i * d + j] += g * self.vecs[v * d + j];
                        self.vbar[v * d + j] += self.mats[a * dd + i * d + j] * g;
                    }
                }
            }
        }
        for k in 0..N_VECTORS * d {
            self.vbar[k] += self.tbar[k];
        }

        for m in 0..3 {
            let g = &self.abar[(3 + m) * dd..(4 + m) * dd];
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let ab = pinv_backward(
                &self.shifted[m * dd..(m + 1) * dd],
                &self.mats[(3 + m) * dd..(4 + m) * dd],
                g,
                d,
            );
            for i in 0..d {
                bbar[m] += ab[i * d + i];
            }
            for k in 0..dd {
                self.abar[m * dd + k] += ab[k];
            }
        }

        for i in 0..d {
            coeffs_bar[1 + i] += self.vbar[VEC_SX * d + i];
            coeffs_bar[1 + d + i] += self.vbar[VEC_SY * d + i];
        }
        for i in 0..d {
            for j in 0..d {
                coeffs_bar[h0 + self.packing.idx(i, j)] += self.abar[MAT_SXX * dd + i * d + j];
                coeffs_bar[h0 + self.packing.idx(d + i, d + j)] +=
                    self.abar[MAT_SYY * dd + i * d + j];
                coeffs_bar[h0 + self.packing.idx(i, d + j)] += self.abar[MAT_SXY * dd + i * d + j];
            }
        }
    }
}

impl TermScratch {
    fn forward_scalar(&mut self, c: &[f64], x: f64, y: f64, b: [f64; 3]) {
        // d = 1: coefficients are [S, S_x, S_y, S_xx, S_xy, S_yy].
        let (sxx, sxy, syy) = (c[3], c[4], c[5]);
        self.vecs.copy_from_slice(&[x, y, c[1], c[2]]);
        let inv = |a: f64| if a == 0.0 || !a.is_finite() { 0.0 } else { 1.0 / a };
        let sh = [sxx + b[0], syy + b[1], sxy + b[2]];
        self.shifted.copy_from_slice(&sh);
        self.mats
            .copy_from_slice(&[sxx, syy, sxy, inv(sh[0]), inv(sh[1]), inv(sh[2])]);
        let t = &mut self.terms;
        t[..N_VECTORS].copy_from_slice(&self.vecs);
        for a in 0..N_MATRICES {
            let m = self.mats[a];
            for v in 0..N_VECTORS {
                t[single_term(a, v)] = m * self.vecs[v];
            }
        }
        for a in 0..N_MATRICES {
            let m = self.mats[a];
            for a2 in 0..N_MATRICES {
                for v in 0..N_VECTORS {
                    t[double_term(a, a2, v)] = m * t[single_term(a2, v)];
                }
            }
        }
    }

    fn backward_scalar(&mut self, cbar: &mut [f64], bbar: &mut [f64; 3]) {
        let mut abar = [0.0; N_MATRICES];
        let tb = &mut self.tbar;
        let t = &self.terms;
        for (a, ab) in abar.iter_mut().enumerate() {
            let m = self.mats[a];
            for a2 in 0..N_MATRICES {
                for v in 0..N_VECTORS {
                    let g = tb[double_term(a, a2, v)];
                    let u = single_term(a2, v);
                    *ab += g * t[u];
                    tb[u] += m * g;
                }
            }
        }
        let mut vbar = [0.0; N_VECTORS];
        vbar.copy_from_slice(&tb[..N_VECTORS]);
        for (a, ab) in abar.iter_mut().enumerate() {
            let m = self.mats[a];
            for v in 0..N_VECTORS {
                let g = tb[single_term(a, v)];
                *ab += g * self.vecs[v];
                vbar[v] += m * g;
            }
        }
        let mut mbar = [abar[0], abar[1], abar[2]];
        for m in 0..3 {
            let p = self.mats[3 + m];
            let g = -p * abar[3 + m] * p;
            mbar[m] += g;
            bbar[m] += g;
        }
        cbar[1] += vbar[VEC_SX];
        cbar[2] += vbar[VEC_SY];
        cbar[3] += mbar[MAT_SXX];
        cbar[4] += mbar[MAT_SXY];
        cbar[5] += mbar[MAT_SYY];
    }
}

/// Raw terms of one system's batch together with the head that reads them.
#[derive(Clone, Debug, PartialEq)]
pub struct TermBank {
    pub n: usize,
    pub dim: usize,
    /// Raw terms `t_i`, flat `N x T x d`.
    pub activations: Vec<f64>,
    pub weights_ydot: Vec<f64>,
    pub weights_xdot: Vec<f64>,
}

/// Evaluates the raw terms of every sample in `batch`.
pub fn raw_term_matrix(net: &ScalarNet, batch: &Batch) -> Result<Vec<f64>> {
    let d = net.arch.dim;
    if batch.dim != d {
        return Err(MassError::Shape(format!(
            "batch of dimension {} for a net of dimension {d}",
            batch.dim
        )));
    }
    let n = batch.len();
    let b = stabilizers(net);
    let mut scratch = TermScratch::new(d);
    let k = scratch.packing.coeffs();
    let mut out = vec![0.0; n * N_TERMS * d];
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let fwd = NetForward::run(
            &net.arch,
            &net.params,
            &batch.x[start * d..end * d],
            &batch.y[start * d..end * d],
        )?;
        for s in start..end {
            let c = &fwd.output()[(s - start) * k..(s - start + 1) * k];
            scratch.forward(c, batch.x_row(s), batch.y_row(s), b);
            out[s * N_TERMS * d..(s + 1) * N_TERMS * d].copy_from_slice(&scratch.terms);
        }
        start = end;
    }
    Ok(out)
}

/// Values of `S` at every sample of `batch`.
pub fn scalar_values(net: &ScalarNet, batch: &Batch) -> Result<Vec<f64>> {
    let d = net.arch.dim;
    if batch.dim != d {
        return Err(MassError::Shape(format!(
            "batch of dimension {} for a net of dimension {d}",
            batch.dim
        )));
    }
    let n = batch.len();
    let mut out = Vec::with_capacity(n);
    let mut fwd = NetForward::new();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        fwd.forward(
            &net.arch,
            &net.params,
            &batch.x[start * d..end * d],
            &batch.y[start * d..end * d],
        )?;
        let k = fwd.coeffs();
        out.extend(fwd.output().chunks(k).map(|c| c[0]));
        start = end;
    }
    Ok(out)
}

pub(crate) fn stabilizers(net: &ScalarNet) -> [f64; 3] {
    let s = net.arch.stabilizer_offset();
    [net.params[s], net.params[s + 1], net.params[s + 2]]
}

/// Builds the bank for `batch` under `net` and the shared `head`.
pub fn term_bank(net: &ScalarNet, batch: &Batch, head: &FinalLayer) -> Result<TermBank> {
    let activations = raw_term_matrix(net, batch)?;
    Ok(TermBank {
        n: batch.len(),
        dim: batch.dim,
        activations,
        weights_ydot: head.ydot.clone(),
        weights_xdot: head.xdot.clone(),
    })
}

impl TermBank {
    /// Raw term `i` for sample `s`.
    pub fn term(&self, s: usize, i: usize) -> &[f64] {
        let d = self.dim;
        &self.activations[(s * N_TERMS + i) * d..][..d]
    }

    fn combine(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.n * d];
        for s in 0..self.n {
            let row = &mut out[s * d..(s + 1) * d];
            for (i, wi) in w.iter().enumerate() {
                if *wi == 0.0 {
                    continue;
                }
                for (o, t) in row.iter_mut().zip(self.term(s, i)) {
                    *o += wi * t;
                }
            }
        }
        out
    }

    /// `(xdot_hat, ydot_hat)`, each flat `N x d`.
    pub fn predict(&self) -> (Vec<f64>, Vec<f64>) {
        (self.combine(&self.weights_xdot), self.combine(&self.weights_ydot))
    }

    /// `a_i = w_i t_i` on the ydot row, flat `N x T x d`.
    pub fn weighted_activations(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = self.activations.clone();
        for s in 0..self.n {
            for i in 0..N_TERMS {
                for v in &mut out[(s * N_TERMS + i) * d..][..d] {
                    *v *= self.weights_ydot[i];
                }
            }
        }
        out
    }
}
