//! The summed multi-system objective and its parameter gradient.
//!
//! Per system `j`:
//! `MSE(ydot) + MSE(xdot) + lambda_b |b_j|_1 + (lambda2 / T) mean_s sum_i |w_i t_i|`,
//! with the L1 activation term taken over both head rows; the head adds
//! `(lambda1 / T) |w|_1` once. MSE is the per-sample squared norm averaged
//! over the batch.

use serde::{Deserialize, Serialize};

use crate::autodiff::eval_jet2_generic;
use crate::error::{MassError, Result};
use crate::model::batched::NetForward;
use crate::model::catalog::N_TERMS;
use crate::model::net::NetArch;
use crate::model::pinv::PinvScalar;
use crate::model::termbank::{raw_terms, TermScratch};
use crate::model::{FinalLayer, ScalarNet};
use crate::physics::Batch;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub lambda_b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Regularization {
    pub const NONE: Regularization = Regularization {
        lambda_b: 0.0,
        lambda1: 0.0,
        lambda2: 0.0,
    };
}

/// Components of one system's loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SystemLoss {
    pub mse_ydot: f64,
    pub mse_xdot: f64,
    pub stabilizer: f64,
    pub activation: f64,
}

impl SystemLoss {
    pub fn total(&self) -> f64 {
        self.mse_ydot + self.mse_xdot + self.stabilizer + self.activation
    }
}

#[inline]
fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(lambda1 / T) |w|_1` over both head rows, with its gradient added into
/// `head_grad` (`[ydot.., xdot..]`).
pub fn head_penalty_grad(head: &FinalLayer, lambda1: f64, head_grad: &mut [f64]) -> f64 {
    let c = lambda1 / N_TERMS as f64;
    let mut value = 0.0;
    for (g, w) in head_grad.iter_mut().zip(head.ydot.iter().chain(&head.xdot)) {
        value += c * w.abs();
        *g += c * sgn(*w);
    }
    value
}

/// Buffers reused across calls to [`system_loss_grad`].
#[derive(Default)]
pub struct LossWorkspace {
    fwd: NetForward,
    scratch: Option<TermScratch>,
    out_bar: Vec<f64>,
}

impl LossWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Loss of one system on `batch`, adding `dL/dtheta` into `net_grad` and
/// `dL/dw` into `head_grad`. The head penalty is not included.
pub fn system_loss_grad(
    ws: &mut LossWorkspace,
    net: &ScalarNet,
    head: &FinalLayer,
    batch: &Batch,
    reg: &Regularization,
    net_grad: &mut [f64],
    head_grad: &mut [f64],
) -> Result<SystemLoss> {
    let arch = &net.arch;
    let d = arch.dim;
    if batch.dim != d {
        return Err(MassError::Shape(format!(
            "batch of dimension {} for a net of dimension {d}",
            batch.dim
        )));
    }
    let n = batch.len();
    let fwd = &mut ws.fwd;
    fwd.forward(arch, &net.params, &batch.x, &batch.y)?;
    let k = fwd.coeffs();
    let so = arch.stabilizer_offset();
    let b = [net.params[so], net.params[so + 1], net.params[so + 2]];
    if ws.scratch.as_ref().map(|s| s.d) != Some(d) {
        ws.scratch = Some(TermScratch::new(d));
    }
    let scratch = ws.scratch.as_mut().expect("scratch set above");
    let out_bar = &mut ws.out_bar;
    out_bar.clear();
    out_bar.resize(n * k, 0.0);
    let mut bbar = [0.0; 3];
    let inv_n = 1.0 / n as f64;
    let c2 = reg.lambda2 / N_TERMS as f64 * inv_n;
    let (wy, wx) = (&head.ydot, &head.xdot);
    let (gy_head, gx_head) = head_grad.split_at_mut(N_TERMS);
    let mut ey = vec![0.0; d];
    let mut ex = vec![0.0; d];
    let mut loss = SystemLoss::default();
    let mut act = 0.0;

    for s in 0..n {
        scratch.forward(&fwd.output()[s * k..(s + 1) * k], batch.x_row(s), batch.y_row(s), b);
        let t = &scratch.terms;
        ey.copy_from_slice(batch.ydot_row(s));
        ex.copy_from_slice(batch.xdot_row(s));
        ey.iter_mut().for_each(|v| *v = -*v);
        ex.iter_mut().for_each(|v| *v = -*v);
        for i in 0..N_TERMS {
            let ti = &t[i * d..(i + 1) * d];
            for c in 0..d {
                ey[c] += wy[i] * ti[c];
                ex[c] += wx[i] * ti[c];
            }
        }
        for c in 0..d {
            loss.mse_ydot += ey[c] * ey[c] * inv_n;
            loss.mse_xdot += ex[c] * ex[c] * inv_n;
            ey[c] *= 2.0 * inv_n;
            ex[c] *= 2.0 * inv_n;
        }
        for i in 0..N_TERMS {
            let (wyi, wxi) = (wy[i], wx[i]);
            let (ay, ax) = (wyi.abs(), wxi.abs());
            let (sy, sx) = (sgn(wyi), sgn(wxi));
            let mut gy = 0.0;
            let mut gx = 0.0;
            for c in 0..d {
                let tic = t[i * d + c];
                let at = tic.abs();
                act += (ay + ax) * at;
                gy += ey[c] * tic + c2 * at * sy;
                gx += ex[c] * tic + c2 * at * sx;
                scratch.tbar[i * d + c] = wyi * ey[c] + wxi * ex[c] + c2 * (ay + ax) * sgn(tic);
            }
            gy_head[i] += gy;
            gx_head[i] += gx;
        }
        scratch.backward(&mut out_bar[s * k..(s + 1) * k], &mut bbar);
    }
    loss.activation = c2 * act;

    for (m, bm) in b.iter().enumerate() {
        loss.stabilizer += reg.lambda_b * bm.abs();
        bbar[m] += reg.lambda_b * sgn(*bm);
    }
    fwd.backward(arch, &net.params, out_bar, net_grad);
    for m in 0..3 {
        net_grad[so + m] += bbar[m];
    }
    if !loss.total().is_finite() {
        return Err(MassError::NonFiniteValue {
            layer: arch.hidden + 1,
        });
    }
    Ok(loss)
}

/// Reference implementation of one system's loss (no head penalty) over any
/// scalar type, written directly from the definition; with tape variables it
/// yields the exact parameter gradient independently of the fused path.
pub fn system_loss_generic<T: PinvScalar>(
    arch: &NetArch,
    params: &[T],
    head: &[T],
    batch: &Batch,
    reg: &Regularization,
) -> Result<T> {
    let d = arch.dim;
    let n = batch.len();
    let so = arch.stabilizer_offset();
    let b = [params[so], params[so + 1], params[so + 2]];
    let zero = params[0].zero_like();
    let mut mse = zero;
    let mut act = zero;
    for s in 0..n {
        let x = batch.x_row(s);
        let y = batch.y_row(s);
        let jet = eval_jet2_generic(arch, params, x, y)?;
        let t = raw_terms(&jet, x, y, b);
        for c in 0..d {
            let mut py = zero - batch.ydot_row(s)[c];
            let mut px = zero - batch.xdot_row(s)[c];
            for i in 0..N_TERMS {
                py = py + head[i] * t[i * d + c];
                px = px + head[N_TERMS + i] * t[i * d + c];
                act = act + (head[i] * t[i * d + c]).abs() + (head[N_TERMS + i] * t[i * d + c]).abs();
            }
            mse = mse + py * py + px * px;
        }
    }
    let stab = (b[0].abs() + b[1].abs() + b[2].abs()) * reg.lambda_b;
    Ok(mse / n as f64 + stab + act * (reg.lambda2 / N_TERMS as f64 / n as f64))
}

/// Generic head penalty, the companion of [`system_loss_generic`].
pub fn head_penalty_generic<T: PinvScalar>(head: &[T], lambda1: f64) -> T {
    let mut acc = head[0].zero_like();
    for w in head {
        acc = acc + w.abs();
    }
    acc * (lambda1 / N_TERMS as f64)
}

/// Mean squared norm of the ydot residual (the correctness measure).
pub fn ydot_mse(pred: &[f64], target: &[f64], dim: usize) -> f64 {
    let n = target.len() / dim;
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{param_grad, ParamTape, Scalar};
    use crate::model::catalog::{VEC_X, VEC_Y};
    use crate::physics::{sample_batch, SystemId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fused(
        net: &ScalarNet,
        head: &FinalLayer,
        batch: &Batch,
        reg: &Regularization,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let mut gn = vec![0.0; net.params.len()];
        let mut gh = vec![0.0; 2 * N_TERMS];
        let mut ws = LossWorkspace::new();
        let l = system_loss_grad(&mut ws, net, head, batch, reg, &mut gn, &mut gh).unwrap();
        let p = head_penalty_grad(head, reg.lambda1, &mut gh);
        (l.total() + p, gn, gh)
    }

    #[test]
    fn perfect_one_hot_head_has_zero_loss_on_sho() {
        let spec = SystemId::Sho.spec();
        let batch = sample_batch(&spec, 64, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let net = ScalarNet::init(NetArch::new(1), &mut ChaCha8Rng::seed_from_u64(1));
        let head = FinalLayer::one_hot(VEC_X, -1.0, VEC_Y, 1.0);
        let (l, _, _) = fused(&net, &head, &batch, &Regularization::NONE);
        assert!(l.abs() < 1e-28);
    }

    #[test]
    fn zero_head_loss_is_target_energy() {
        let spec = SystemId::Pendulum.spec();
        let batch = sample_batch(&spec, 32, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let net = ScalarNet::init(NetArch::new(1), &mut ChaCha8Rng::seed_from_u64(4));
        let (l, _, _) = fused(&net, &FinalLayer::zeros(), &batch, &Regularization::NONE);
        let expected: f64 = batch
            .ydot
            .iter()
            .chain(&batch.xdot)
            .map(|v| v * v)
            .sum::<f64>()
            / 32.0;
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn head_penalty_hand_value() {
        let mut head = FinalLayer::zeros();
        head.ydot[7] = 1.0;
        let mut g = vec![0.0; 2 * N_TERMS];
        assert!((head_penalty_grad(&head, N_TERMS as f64, &mut g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fused_gradient_matches_tape_oracle() {
        for (id, seed) in [(SystemId::Beta, 2u64), (SystemId::DoublePendulum, 3)] {
            let spec = id.spec();
            let arch = NetArch::new(spec.dim);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = sample_batch(&spec, 4, &mut rng).unwrap();
            let mut net = ScalarNet::init(arch, &mut rng);
            net.set_stabilizers(0.2, 0.3, -0.25);
            let mut head = FinalLayer::init(&mut rng);
            head.ydot[3] = 0.0;
            let reg = Regularization {
                lambda_b: 0.5,
                lambda1: 0.1,
                lambda2: 0.01,
            };
            let (l, gn, gh) = fused(&net, &head, &batch, &reg);

            let mut all = net.params.clone();
            all.extend(head.to_flat());
            let tape = ParamTape::new(&all);
            let vars = tape.param_vars();
            let np = net.params.len();
            let loss = system_loss_generic(&arch, &vars[..np], &vars[np..], &batch, &reg).unwrap()
                + head_penalty_generic(&vars[np..], reg.lambda1);
            assert!((loss.value() - l).abs() < 1e-10 * (1.0 + l.abs()));
            let oracle = param_grad(&tape, loss).unwrap();
            for (k, (a, b)) in gn.iter().chain(&gh).zip(&oracle).enumerate() {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{id} param {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fused_gradient_matches_finite_differences() {
        let spec = SystemId::Relativistic.spec();
        let arch = NetArch::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = sample_batch(&spec, 8, &mut rng).unwrap();
        let net = ScalarNet::init(arch, &mut rng);
        let head = FinalLayer::init(&mut rng);
        let reg = Regularization::NONE;
        let (_, gn, _) = fused(&net, &head, &batch, &reg);
        let hf = head.to_flat();
        let f = |p: &[f64]| system_loss_generic(&arch, p, &hf, &batch, &reg).unwrap();
        for _ in 0..10 {
            let k = rng.random_range(0..net.params.len());
            let h = 1e-5 * (1.0 + net.params[k].abs());
            let mut up = net.params.clone();
            let mut dn = net.params.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - gn[k]).abs() <= 1e-4 * (1e-3 + fd.abs()), "{k}: {fd} vs {}", gn[k]);
        }
    }
}
