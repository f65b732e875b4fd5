//! Analytic physical systems and i.i.d. dataset sampling.

mod lagrangian;
mod systems;

use std::fmt::Write as _;

use rand::Rng;

pub use lagrangian::{
    euler_lagrange_accel, lagrangian_derivatives, Lagrangian, LagrangianDerivatives, MAX_CONDITION,
};
pub use systems::{
    DomainKind, Interval, SampleDomain, SystemId, SystemSpec, KEPLER_SOFTENING,
    NBODY_MIN_SEPARATION, NBODY_SAMPLE_SEPARATION,
};

use crate::error::Result;

/// Generalized coordinates `x` and velocities `y` of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "x and y must share a dimension");
        PhasePoint { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// `n` samples of one system, row-major `n x d` arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xdot: Vec<f64>,
    pub ydot: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.x.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ydot_row(&self, i: usize) -> &[f64] {
        &self.ydot[i * self.dim..(i + 1) * self.dim]
    }

    pub fn xdot_row(&self, i: usize) -> &[f64] {
        &self.xdot[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        PhasePoint::new(self.x_row(i).to_vec(), self.y_row(i).to_vec())
    }

    pub fn points(&self) -> Vec<PhasePoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Builds a batch from points, filling `ydot` from the system.
    pub fn from_points(spec: &SystemSpec, points: &[PhasePoint]) -> Result<Batch> {
        let d = spec.dim;
        let mut batch = Batch {
            dim: d,
            x: Vec::with_capacity(points.len() * d),
            y: Vec::with_capacity(points.len() * d),
            xdot: Vec::with_capacity(points.len() * d),
            ydot: Vec::with_capacity(points.len() * d),
        };
        for p in points {
            let a = spec.accel(&p.x, &p.y)?;
            batch.x.extend_from_slice(&p.x);
            batch.y.extend_from_slice(&p.y);
            batch.xdot.extend_from_slice(&p.y);
            batch.ydot.extend_from_slice(&a);
        }
        Ok(batch)
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Batch {
        let n = n.min(self.len()) * self.dim;
        Batch {
            dim: self.dim,
            x: self.x[..n].to_vec(),
            y: self.y[..n].to_vec(),
            xdot: self.xdot[..n].to_vec(),
            ydot: self.ydot[..n].to_vec(),
        }
    }

    /// One row per sample: `x.., y.., ydot..`.
    pub fn to_csv(&self) -> String {
        let d = self.dim;
        let mut out = String::new();
        let header: Vec<String> = ["x", "y", "ydot"]
            .iter()
            .flat_map(|p| (0..d).map(move |i| format!("{p}{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let row = self
                .x_row(i)
                .iter()
                .chain(self.y_row(i))
                .chain(self.ydot_row(i));
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{v:e}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

fn draw_point(spec: &SystemSpec, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let dom = &spec.sample_domain;
    loop {
        let x: Vec<f64> = dom
            .x
            .iter()
            .map(|iv| {
                let v = rng.random_range(iv.lo..iv.hi);
                match dom.kind {
                    DomainKind::SignedMagnitude => {
                        if rng.random::<bool>() {
                            v
                        } else {
                            -v
                        }
                    }
                    _ => v,
                }
            })
            .collect();
        let y: Vec<f64> = dom.y.iter().map(|iv| rng.random_range(iv.lo..iv.hi)).collect();
        if let DomainKind::Separated { min_sep } = dom.kind {
            let bodies = spec.dim / 2;
            let ok = (0..bodies).all(|i| {
                (i + 1..bodies).all(|j| {
                    let r = ((x[2 * i] - x[2 * j]).powi(2) + (x[2 * i + 1] - x[2 * j + 1]).powi(2))
                        .sqrt();
                    r >= min_sep
                })
            });
            if !ok {
                continue;
            }
        }
        return (x, y);
    }
}

/// `n` uniform i.i.d. draws over the system's sampling domain.
pub fn sample_batch(spec: &SystemSpec, n: usize, rng: &mut impl Rng) -> Result<Batch> {
    let d = spec.dim;
    let mut batch = Batch {
        dim: d,
        x: Vec::with_capacity(n * d),
        y: Vec::with_capacity(n * d),
        xdot: Vec::with_capacity(n * d),
        ydot: Vec::with_capacity(n * d),
    };
    for _ in 0..n {
        let (x, y) = draw_point(spec, rng);
        let a = spec.accel(&x, &y)?;
        batch.xdot.extend_from_slice(&y);
        batch.x.extend(x);
        batch.y.extend(y);
        batch.ydot.extend(a);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_shape_and_convention() {
        for id in SystemId::ALL {
            let spec = id.spec();
            let b = sample_batch(&spec, 512, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(b.len(), 512);
            assert_eq!(b.xdot, b.y);
            assert_eq!(b.ydot.len(), 512 * spec.dim);
        }
    }

    #[test]
    fn seeded_batches_repeat() {
        let spec = SystemId::Beta.spec();
        let a = sample_batch(&spec, 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_batch(&spec, 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_mean_is_near_midpoint() {
        let spec = SystemId::Sho.spec();
        let n = 10_000;
        let b = sample_batch(&spec, n, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mean = b.x.iter().sum::<f64>() / n as f64;
        let iv = spec.sample_domain.x[0];
        let sigma = (iv.hi - iv.lo) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - iv.mid()).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn kepler_samples_avoid_the_origin() {
        let spec = SystemId::Kepler.spec();
        let b = sample_batch(&spec, 2000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(b.x.iter().all(|x| (0.5..2.5).contains(&x.abs())));
        assert!(b.x.iter().any(|x| *x < 0.0) && b.x.iter().any(|x| *x > 0.0));
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let spec = SystemId::DoublePendulum.spec();
        let b = sample_batch(&spec, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let csv = b.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x0,x1,y0,y1,ydot0,ydot1");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1].split(',').count(), 6);
    }
}
