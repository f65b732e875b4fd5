//! Batched second-order jet propagation through a [`NetArch`] and its reverse
//! sweep, both as dense matrix products.
//!
//! Every layer's activations are stored as a `units x (N * K)` row-major
//! matrix whose column `s * K + c` holds coefficient `c` (value, gradient,
//! packed Hessian) of sample `s`. Affine maps then act on all coefficients
//! at once and the bias touches only the value columns.

use matrixmultiply::dgemm;

use super::net::NetArch;
use crate::autodiff::{augment_jets, softplus_sigmoid_f64, Packing};
use crate::error::{MassError, Result};

/// Samples per forward pass when evaluating large batches.
pub const CHUNK: usize = 512;

/// `c (m x n) = alpha * a (m x k) * b (k x n) + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa);
    debug_assert!(b.len() > (k.max(1) - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the slices cover every strided index touched by the product, as
    // asserted above; matrixmultiply reads `a`/`b` and writes only `c`.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Stored forward pass, sufficient for the reverse sweep. Buffers are reused
/// across calls to [`forward`](Self::forward).
#[derive(Default)]
pub struct NetForward {
    n: usize,
    k: usize,
    packing: Option<Packing>,
    /// `inputs[l]` is the input matrix of affine layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation jets of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Sigmoid of each hidden pre-activation value, `units x N`.
    sig: Vec<Vec<f64>>,
    out: Vec<f64>,
    local: Vec<f64>,
    zbar: Vec<f64>,
    hbar: Vec<f64>,
}

#[inline]
fn softplus_block(zb: &[f64], hb: &mut [f64], n: usize, pairs: &[(usize, usize)]) -> f64 {
    let (sp, s) = softplus_sigmoid_f64(zb[0]);
    let s2 = s * (1.0 - s);
    hb[0] = sp;
    if n == 2 {
        let (g0, g1) = (zb[1], zb[2]);
        hb[1] = s * g0;
        hb[2] = s * g1;
        hb[3] = s2 * g0 * g0 + s * zb[3];
        hb[4] = s2 * g0 * g1 + s * zb[4];
        hb[5] = s2 * g1 * g1 + s * zb[5];
        return s;
    }
    for a in 0..n {
        hb[1 + a] = s * zb[1 + a];
    }
    for (p, (a, b)) in pairs.iter().enumerate() {
        hb[1 + n + p] = s2 * zb[1 + a] * zb[1 + b] + s * zb[1 + n + p];
    }
    s
}

/// Overwrites `hb` with the pre-activation adjoint of one block.
#[inline]
fn softplus_block_backward(
    zb: &[f64],
    s: f64,
    hb: &mut [f64],
    gbar: &mut [f64],
    n: usize,
    pairs: &[(usize, usize)],
) {
    let s2 = s * (1.0 - s);
    let s3 = s2 * (1.0 - 2.0 * s);
    if n == 2 {
        let (g0, g1) = (zb[1], zb[2]);
        let (h1, h2, p0, p1, p2) = (hb[1], hb[2], hb[3], hb[4], hb[5]);
        hb[0] = hb[0] * s
            + s2 * (h1 * g0 + h2 * g1)
            + p0 * (s3 * g0 * g0 + s2 * zb[3])
            + p1 * (s3 * g0 * g1 + s2 * zb[4])
            + p2 * (s3 * g1 * g1 + s2 * zb[5]);
        hb[1] = s * h1 + s2 * (2.0 * p0 * g0 + p1 * g1);
        hb[2] = s * h2 + s2 * (p1 * g0 + 2.0 * p2 * g1);
        hb[3] = s * p0;
        hb[4] = s * p1;
        hb[5] = s * p2;
        return;
    }
    let mut z0bar = hb[0] * s;
    for a in 0..n {
        let g = hb[1 + a];
        z0bar += s2 * g * zb[1 + a];
        gbar[a] = s * g;
    }
    for (p, (a, b)) in pairs.iter().enumerate() {
        let hp = hb[1 + n + p];
        if hp == 0.0 {
            continue;
        }
        let (ga, gb) = (zb[1 + a], zb[1 + b]);
        z0bar += hp * (s3 * ga * gb + s2 * zb[1 + n + p]);
        let q = s2 * hp;
        gbar[*a] += q * gb;
        gbar[*b] += q * ga;
        hb[1 + n + p] = s * hp;
    }
    hb[0] = z0bar;
    hb[1..1 + n].copy_from_slice(&gbar[..n]);
}

fn check_finite(m: &[f64], layer: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MassError::NonFiniteValue { layer })
    }
}

fn ensure(buf: &mut Vec<f64>, len: usize) {
    if buf.len() != len {
        buf.resize(len, 0.0);
    }
}

impl NetForward {
    pub fn new() -> Self {
        Self::default()
    }

    /// One-shot forward pass over `n = x.len() / d` samples.
    pub fn run(arch: &NetArch, params: &[f64], x: &[f64], y: &[f64]) -> Result<NetForward> {
        let mut f = NetForward::new();
        f.forward(arch, params, x, y)?;
        Ok(f)
    }

    /// Forward pass reusing this workspace's buffers.
    pub fn forward(&mut self, arch: &NetArch, params: &[f64], x: &[f64], y: &[f64]) -> Result<()> {
        let d = arch.dim;
        if x.len() != y.len() || x.len() % d != 0 {
            return Err(MassError::Shape(format!(
                "coordinate arrays of length {} and {} for dimension {d}",
                x.len(),
                y.len()
            )));
        }
        if params.len() < arch.n_params() {
            return Err(MassError::Shape(format!(
                "{} parameters for an architecture needing {}",
                params.len(),
                arch.n_params()
            )));
        }
        let n = x.len() / d;
        if self.packing.as_ref().map(|p| p.n) != Some(2 * d) {
            self.packing = Some(Packing::new(2 * d));
        }
        let packing = self.packing.as_ref().expect("packing set above");
        let k = packing.coeffs();
        let cols = n * k;
        let pairs = packing.pairs();
        self.n = n;
        self.k = k;

        let layers = arch.layers();
        let n_hidden = layers.len() - 1;
        self.inputs.resize_with(layers.len(), Vec::new);
        self.pre.resize_with(n_hidden, Vec::new);
        self.sig.resize_with(n_hidden, Vec::new);

        let width_in = arch.input_width();
        ensure(&mut self.inputs[0], width_in * cols);
        ensure(&mut self.local, width_in * k);
        for s in 0..n {
            augment_jets(&x[s * d..(s + 1) * d], &y[s * d..(s + 1) * d], packing, &mut self.local);
            for u in 0..width_in {
                self.inputs[0][u * cols + s * k..u * cols + (s + 1) * k]
                    .copy_from_slice(&self.local[u * k..(u + 1) * k]);
            }
        }

        for (l, layer) in layers.iter().enumerate() {
            let last = l + 1 == layers.len();
            let mut z = if last {
                std::mem::take(&mut self.out)
            } else {
                std::mem::take(&mut self.pre[l])
            };
            ensure(&mut z, layer.outputs * cols);
            gemm(
                layer.outputs,
                layer.inputs,
                cols,
                &params[layer.weight..],
                layer.inputs,
                1,
                &self.inputs[l],
                cols,
                1,
                0.0,
                &mut z,
                cols,
            );
            for j in 0..layer.outputs {
                let b = params[layer.bias + j];
                for s in 0..n {
                    z[j * cols + s * k] += b;
                }
            }
            let ok = check_finite(&z, l);
            if last {
                self.out = z;
                ok?;
            } else {
                ok?;
                let mut h = std::mem::take(&mut self.inputs[l + 1]);
                let mut sg = std::mem::take(&mut self.sig[l]);
                ensure(&mut h, layer.outputs * cols);
                ensure(&mut sg, layer.outputs * n);
                for ((zb, hb), sv) in z
                    .chunks_exact(k)
                    .zip(h.chunks_exact_mut(k))
                    .zip(sg.iter_mut())
                {
                    *sv = softplus_block(zb, hb, 2 * d, &pairs);
                }
                let ok = check_finite(&h, l);
                self.pre[l] = z;
                self.sig[l] = sg;
                self.inputs[l + 1] = h;
                ok?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coeffs(&self) -> usize {
        self.k
    }

    pub fn packing(&self) -> &Packing {
        self.packing.as_ref().expect("forward has run")
    }

    /// Output jets, `N x K`.
    pub fn output(&self) -> &[f64] {
        &self.out
    }

    /// Adds the parameter gradient implied by the output-jet adjoint
    /// `out_bar` (`N x K`) into `grad`.
    pub fn backward(&mut self, arch: &NetArch, params: &[f64], out_bar: &[f64], grad: &mut [f64]) {
        let (n, k) = (self.n, self.k);
        let cols = n * k;
        assert_eq!(out_bar.len(), cols, "adjoint shape");
        let pairs = self.packing().pairs();
        let dn = 2 * arch.dim;
        let mut gbar = vec![0.0; dn];
        let layers = arch.layers();
        let mut zbar = std::mem::take(&mut self.zbar);
        let mut hbar = std::mem::take(&mut self.hbar);
        zbar.clear();
        zbar.extend_from_slice(out_bar);
        for (l, layer) in layers.iter().enumerate().rev() {
            let a = &self.inputs[l];
            gemm(
                layer.outputs,
                cols,
                layer.inputs,
                &zbar,
                cols,
                1,
                a,
                1,
                cols,
                1.0,
                &mut grad[layer.weight..layer.weight + layer.outputs * layer.inputs],
                layer.inputs,
            );
            for j in 0..layer.outputs {
                let mut acc = 0.0;
                for s in 0..n {
                    acc += zbar[j * cols + s * k];
                }
                grad[layer.bias + j] += acc;
            }
            if l == 0 {
                break;
            }
            ensure(&mut hbar, layer.inputs * cols);
            gemm(
                layer.inputs,
                layer.outputs,
                cols,
                &params[layer.weight..],
                1,
                layer.inputs,
                &zbar,
                cols,
                1,
                0.0,
                &mut hbar,
                cols,
            );
            let z = &self.pre[l - 1];
            let sg = &self.sig[l - 1];
            for ((zb, hb), s) in z.chunks_exact(k).zip(hbar.chunks_exact_mut(k)).zip(sg) {
                softplus_block_backward(zb, *s, hb, &mut gbar, dn, &pairs);
            }
            std::mem::swap(&mut zbar, &mut hbar);
        }
        self.zbar = zbar;
        self.hbar = hbar;
    }
}
