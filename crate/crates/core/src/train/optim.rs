//! AdamW, the per-phase warmup + cosine schedule, and parameter EMA.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moments of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }
}

/// One bias-corrected Adam step with decoupled weight decay:
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, hp: &AdamParams) {
    assert_eq!(params.len(), grads.len(), "gradient shape");
    assert_eq!(params.len(), state.m.len(), "moment shape");
    state.t += 1;
    let c1 = 1.0 - hp.beta1.powi(state.t as i32);
    let c2 = 1.0 - hp.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * (mhat / (vhat.sqrt() + hp.eps) + hp.weight_decay * params[i]);
    }
}

/// Learning rate at `step` within a phase: linear warmup to `base`, then a
/// half cosine reaching zero at the last step. Restarts every phase.
pub fn lr_schedule(step: usize, phase_len: usize, warmup: usize, base: f64) -> f64 {
    if step < warmup {
        return base * step as f64 / warmup as f64;
    }
    let span = phase_len.saturating_sub(1 + warmup).max(1) as f64;
    let p = ((step - warmup) as f64 / span).clamp(0.0, 1.0);
    (base * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())).max(0.0)
}

/// `ema <- p + decay * (ema - p)`.
pub fn ema_update(ema: &mut [f64], params: &[f64], decay: f64) {
    for (e, p) in ema.iter_mut().zip(params) {
        *e = p + decay * (*e - p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HP: AdamParams = AdamParams {
        beta1: 0.7,
        beta2: 0.8,
        eps: 1e-8,
        weight_decay: 0.01,
    };

    #[test]
    fn decay_only_step() {
        let mut p = vec![2.0, -1.0];
        let mut st = AdamState::new(2);
        adamw_step(&mut p, &[0.0, 0.0], &mut st, 1e-3, &HP);
        assert_eq!(p, vec![2.0 * (1.0 - 1e-3 * 0.01), -(1.0 - 1e-3 * 0.01)]);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = vec![0.3];
        let mut st = AdamState::new(1);
        adamw_step(&mut p, &[5.0], &mut st, 0.0, &HP);
        assert_eq!(p, vec![0.3]);
    }

    #[test]
    fn constant_gradient_gives_sign_step() {
        let hp = AdamParams {
            weight_decay: 0.0,
            ..HP
        };
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        let mut last = p.clone();
        for _ in 0..200 {
            last = p.clone();
            adamw_step(&mut p, &[3.0, -0.2], &mut st, 1e-3, &hp);
        }
        assert!(((p[0] - last[0]) + 1e-3).abs() < 1e-9);
        assert!(((p[1] - last[1]) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn schedule_examples() {
        assert!((lr_schedule(50, 10_000, 100, 5e-4) - 2.5e-4).abs() < 1e-18);
        assert!((lr_schedule(100, 10_000, 100, 5e-4) - 5e-4).abs() < 1e-18);
        assert!(lr_schedule(9_999, 10_000, 100, 5e-4) < 1e-8 * 5e-4);
        assert_eq!(lr_schedule(0, 10_000, 100, 5e-4), 0.0);
    }

    #[test]
    fn ema_contracts_geometrically() {
        let theta = vec![1.0, -2.0];
        let mut e = vec![3.0, 0.0];
        let d0 = ((e[0] - theta[0]) as f64).hypot(e[1] - theta[1]);
        for _ in 0..50 {
            ema_update(&mut e, &theta, 0.99);
        }
        let dn = ((e[0] - theta[0]) as f64).hypot(e[1] - theta[1]);
        assert!((dn - 0.99f64.powi(50) * d0).abs() < 1e-12);
    }
}
