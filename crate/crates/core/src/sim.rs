//! Fixed-step RK4 rollouts under analytic or learned accelerations.

use std::fmt::Write as _;

use crate::error::{MassError, Result};
use crate::model::{FinalLayer, NetForward, ScalarNet, TermScratch};
use crate::physics::{PhasePoint, SystemSpec};

/// Step used for rollouts unless overridden.
pub const DEFAULT_DT: f64 = 0.05;

/// Sampled states of one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Row-major `len x 2d`, each row `x.., y..`.
    pub states: Vec<f64>,
    /// Total energy per row when a system was supplied; NaN where the state
    /// left the system's domain.
    pub energies: Option<Vec<f64>>,
    /// Index of the first step whose state could not be computed. The
    /// trajectory stops before it.
    pub blowup: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * 2 * self.dim..(i + 1) * 2 * self.dim]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.state(i)[..self.dim]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.state(i)[self.dim..]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// `t, x0.., y0.., E` per row; `E` is empty without energies.
    pub fn to_csv(&self) -> String {
        let d = self.dim;
        let mut out = String::from("t");
        for p in ["x", "y"] {
            for i in 0..d {
                write!(out, ",{p}{i}").expect("write to string");
            }
        }
        out.push_str(",E\n");
        for i in 0..self.len() {
            write!(out, "{:e}", self.times[i]).expect("write to string");
            for v in self.state(i) {
                write!(out, ",{v:e}").expect("write to string");
            }
            match &self.energies {
                Some(e) => writeln!(out, ",{:e}", e[i]).expect("write to string"),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// One classical RK4 step of `x' = y, y' = field(x, y)`. `dt` may be
/// negative.
pub fn rk4_step<F>(field: &mut F, x: &[f64], y: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    let d = x.len();
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    let k1x = y.to_vec();
    let k1y = field(x, y)?;
    let (x2, y2) = (axpy(x, 0.5 * dt, &k1x), axpy(y, 0.5 * dt, &k1y));
    let k2y = field(&x2, &y2)?;
    let k2x = y2;
    let (x3, y3) = (axpy(x, 0.5 * dt, &k2x), axpy(y, 0.5 * dt, &k2y));
    let k3y = field(&x3, &y3)?;
    let k3x = y3;
    let (x4, y4) = (axpy(x, dt, &k3x), axpy(y, dt, &k3y));
    let k4y = field(&x4, &y4)?;
    let k4x = y4;
    let mut xn = x.to_vec();
    let mut yn = y.to_vec();
    for i in 0..d {
        xn[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        yn[i] += dt / 6.0 * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]);
    }
    Ok((xn, yn))
}

/// Integrates `steps` RK4 steps from `start`. A failing field or a
/// non-finite state ends the rollout and is recorded as `blowup`.
pub fn rk4_rollout<F>(
    mut field: F,
    start: &PhasePoint,
    dt: f64,
    steps: usize,
    spec: Option<&SystemSpec>,
) -> Result<Trajectory>
where
    F: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MassError::Config(format!("dt must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(MassError::Config("steps must be at least 1".into()));
    }
    let d = start.dim();
    let mut traj = Trajectory {
        dim: d,
        dt,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity((steps + 1) * 2 * d),
        energies: spec.map(|_| Vec::with_capacity(steps + 1)),
        blowup: None,
    };
    let energy = |x: &[f64], y: &[f64]| spec.map(|s| s.total_energy(x, y).unwrap_or(f64::NAN));
    let (mut x, mut y) = (start.x.clone(), start.y.clone());
    let push = |traj: &mut Trajectory, t: f64, x: &[f64], y: &[f64]| {
        traj.times.push(t);
        traj.states.extend_from_slice(x);
        traj.states.extend_from_slice(y);
        if let (Some(e), Some(v)) = (traj.energies.as_mut(), energy(x, y)) {
            e.push(v);
        }
    };
    push(&mut traj, 0.0, &x, &y);
    for k in 1..=steps {
        match rk4_step(&mut field, &x, &y, dt) {
            Ok((xn, yn)) if xn.iter().chain(&yn).all(|v| v.is_finite()) => {
                x = xn;
                y = yn;
                push(&mut traj, k as f64 * dt, &x, &y);
            }
            _ => {
                traj.blowup = Some(k);
                break;
            }
        }
    }
    Ok(traj)
}

/// Ground-truth accelerations of `spec`.
pub fn analytic_field(spec: &SystemSpec) -> impl FnMut(&[f64], &[f64]) -> Result<Vec<f64>> + '_ {
    move |x, y| spec.accel(x, y)
}

/// Accelerations predicted by a trained network through the ydot head.
pub struct MassField<'a> {
    net: &'a ScalarNet,
    head: &'a FinalLayer,
    fwd: NetForward,
    scratch: TermScratch,
}

impl<'a> MassField<'a> {
    pub fn new(net: &'a ScalarNet, head: &'a FinalLayer) -> Self {
        MassField {
            net,
            head,
            fwd: NetForward::new(),
            scratch: TermScratch::new(net.arch.dim),
        }
    }

    pub fn accel(&mut self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let d = self.net.arch.dim;
        self.fwd.forward(&self.net.arch, &self.net.params, x, y)?;
        let s = self.net.arch.stabilizer_offset();
        let p = &self.net.params;
        self.scratch.forward(self.fwd.output(), x, y, [p[s], p[s + 1], p[s + 2]]);
        let mut out = vec![0.0; d];
        for (i, w) in self.head.ydot.iter().enumerate() {
            for (o, t) in out.iter_mut().zip(&self.scratch.terms[i * d..(i + 1) * d]) {
                *o += w * t;
            }
        }
        Ok(out)
    }

    pub fn as_fn(&mut self) -> impl FnMut(&[f64], &[f64]) -> Result<Vec<f64>> + use<'_, 'a> {
        move |x, y| self.accel(x, y)
    }
}

/// Energy drift of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyDrift {
    /// Mean `|E(t + w) - E(t)|` over non-overlapping windows, divided by
    /// `|E(0)|` unless `absolute`.
    pub drift: f64,
    /// `E(0)` was zero, so the drift is not normalized.
    pub absolute: bool,
    pub windows: usize,
}

/// Drift over non-overlapping windows of `window` steps. NaN when no
/// energies were recorded or no full window fits.
pub fn energy_drift(traj: &Trajectory, window: usize) -> EnergyDrift {
    let nan = EnergyDrift {
        drift: f64::NAN,
        absolute: false,
        windows: 0,
    };
    let Some(e) = &traj.energies else {
        return nan;
    };
    if window == 0 || e.len() <= window {
        return nan;
    }
    let e0 = e[0];
    let absolute = e0 == 0.0;
    let scale = if absolute { 1.0 } else { e0.abs() };
    let mut sum = 0.0;
    let mut windows = 0;
    let mut t = 0;
    while t + window < e.len() {
        sum += (e[t + window] - e[t]).abs() / scale;
        windows += 1;
        t += window;
    }
    EnergyDrift {
        drift: sum / windows as f64,
        absolute,
        windows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::SystemId;
    use std::f64::consts::PI;

    fn sho_error(dt: f64) -> f64 {
        let spec = SystemId::Sho.spec();
        let steps = (2.0 * PI / dt).round() as usize;
        let t = steps as f64 * dt;
        let traj = rk4_rollout(analytic_field(&spec), &PhasePoint::new(vec![1.0], vec![0.0]), dt, steps, None).unwrap();
        let s = traj.last();
        ((s[0] - t.cos()).powi(2) + (s[1] + t.sin()).powi(2)).sqrt()
    }

    #[test]
    fn sho_period_matches_cosine() {
        let spec = SystemId::Sho.spec();
        let steps = (2.0 * PI / 0.05).round() as usize;
        let traj = rk4_rollout(analytic_field(&spec), &PhasePoint::new(vec![1.0], vec![0.0]), 0.05, steps, Some(&spec)).unwrap();
        let t = *traj.times.last().unwrap();
        assert!((traj.last()[0] - t.cos()).abs() < 1e-4);
        assert_eq!(traj.len(), steps + 1);
        assert!(traj.blowup.is_none());
    }

    #[test]
    fn fourth_order_convergence() {
        let r = sho_error(0.1) / sho_error(0.05);
        assert!((12.0..=20.0).contains(&r), "ratio {r}");
    }

    #[test]
    fn zero_field_keeps_rest_state() {
        let zero = |x: &[f64], _: &[f64]| Ok(vec![0.0; x.len()]);
        let traj = rk4_rollout(zero, &PhasePoint::new(vec![0.7], vec![0.0]), 0.05, 50, None).unwrap();
        assert!(traj.states.chunks(2).all(|s| s == [0.7, 0.0]));
    }

    #[test]
    fn forward_then_backward_returns() {
        let spec = SystemId::Sho.spec();
        let mut f = analytic_field(&spec);
        let (mut x, mut y) = (vec![0.3], vec![-0.8]);
        for _ in 0..200 {
            (x, y) = rk4_step(&mut f, &x, &y, 0.01).unwrap();
        }
        for _ in 0..200 {
            (x, y) = rk4_step(&mut f, &x, &y, -0.01).unwrap();
        }
        assert!((x[0] - 0.3).abs() < 1e-8 && (y[0] + 0.8).abs() < 1e-8);
    }

    #[test]
    fn failing_field_reports_blowup() {
        let mut calls = 0;
        let f = |x: &[f64], _: &[f64]| {
            calls += 1;
            if calls > 8 {
                Ok(vec![f64::NAN; x.len()])
            } else {
                Ok(vec![-x[0]])
            }
        };
        let traj = rk4_rollout(f, &PhasePoint::new(vec![1.0], vec![0.0]), 0.05, 10, None).unwrap();
        assert_eq!(traj.blowup, Some(3));
        assert_eq!(traj.len(), 3);
    }

    #[test]
    fn invalid_step_is_rejected() {
        let spec = SystemId::Sho.spec();
        let p = PhasePoint::new(vec![1.0], vec![0.0]);
        assert!(rk4_rollout(analytic_field(&spec), &p, 0.0, 5, None).is_err());
        assert!(rk4_rollout(analytic_field(&spec), &p, -0.1, 5, None).is_err());
    }

    #[test]
    fn drift_examples() {
        let mut traj = Trajectory {
            dim: 1,
            dt: 0.05,
            times: (0..=300).map(|i| i as f64 * 0.05).collect(),
            states: vec![0.0; 602],
            energies: Some(vec![2.0; 301]),
            blowup: None,
        };
        assert_eq!(energy_drift(&traj, 100).drift, 0.0);
        traj.energies = Some((0..=300).map(|i| 2.0 * (1.0 + 0.004 * i as f64 / 100.0)).collect());
        let d = energy_drift(&traj, 100);
        assert!((d.drift - 0.004).abs() < 1e-12);
        assert_eq!(d.windows, 3);
    }

    #[test]
    fn csv_layout() {
        let spec = SystemId::Sho.spec();
        let traj = rk4_rollout(analytic_field(&spec), &PhasePoint::new(vec![1.0], vec![0.0]), 0.1, 2, Some(&spec)).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x0,y0,E");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0e0,1e0,0e0,5e-1"));
    }
}
