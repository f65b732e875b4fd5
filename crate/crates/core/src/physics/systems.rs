use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lagrangian::{euler_lagrange_accel, Lagrangian};
use crate::autodiff::Scalar;
use crate::error::{MassError, Result};

/// Bound below which the Kepler potential is considered singular.
pub const KEPLER_SOFTENING: f64 = 0.1;
/// Minimum pairwise separation accepted by the n-body accelerations.
pub const NBODY_MIN_SEPARATION: f64 = 1e-3;
/// Minimum pairwise separation used when sampling n-body states.
pub const NBODY_SAMPLE_SEPARATION: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    Sho,
    Pendulum,
    Kepler,
    Relativistic,
    Alpha,
    Beta,
    DoublePendulum,
    SphericalPendulum,
    TwoBody,
    ThreeBody,
}

impl SystemId {
    pub const ALL: [SystemId; 10] = [
        SystemId::Sho,
        SystemId::Pendulum,
        SystemId::Kepler,
        SystemId::Relativistic,
        SystemId::Alpha,
        SystemId::Beta,
        SystemId::DoublePendulum,
        SystemId::SphericalPendulum,
        SystemId::TwoBody,
        SystemId::ThreeBody,
    ];

    /// Position in [`SystemId::ALL`].
    pub fn index(self) -> usize {
        SystemId::ALL
            .iter()
            .position(|s| *s == self)
            .expect("every id is listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemId::Sho => "sho",
            SystemId::Pendulum => "pendulum",
            SystemId::Kepler => "kepler",
            SystemId::Relativistic => "relativistic",
            SystemId::Alpha => "alpha",
            SystemId::Beta => "beta",
            SystemId::DoublePendulum => "double_pendulum",
            SystemId::SphericalPendulum => "spherical_pendulum",
            SystemId::TwoBody => "two_body",
            SystemId::ThreeBody => "three_body",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|s| s.name()).join(", ")
    }

    pub fn dim(self) -> usize {
        match self {
            SystemId::DoublePendulum | SystemId::SphericalPendulum => 2,
            SystemId::TwoBody => 4,
            SystemId::ThreeBody => 6,
            _ => 1,
        }
    }

    /// Velocity-dependent kinetic term `gamma = 1/sqrt(1 - y^2)`.
    pub fn is_relativistic(self) -> bool {
        matches!(
            self,
            SystemId::Relativistic | SystemId::Alpha | SystemId::Beta
        )
    }

    pub fn spec(self) -> SystemSpec {
        SystemSpec::new(self)
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = MassError;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| MassError::UnknownSystem {
                name: s.to_string(),
                valid: SystemId::valid_names(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// How points are drawn from the per-coordinate intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainKind {
    /// Independent uniform draws per coordinate.
    Box,
    /// Coordinate magnitudes drawn from the interval with a random sign.
    SignedMagnitude,
    /// Planar bodies `(x_1, y_1, x_2, y_2, ..)` kept at least `min_sep` apart
    /// by rejection.
    Separated { min_sep: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleDomain {
    pub kind: DomainKind,
    pub x: Vec<Interval>,
    pub y: Vec<Interval>,
}

/// One physical system: closed-form energies, Lagrangian and accelerations.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub id: SystemId,
    pub dim: usize,
    pub sample_domain: SampleDomain,
}

fn gamma(y: f64) -> f64 {
    1.0 / (1.0 - y * y).sqrt()
}

impl SystemSpec {
    pub fn new(id: SystemId) -> Self {
        let d = id.dim();
        let sample_domain = match id {
            SystemId::Sho | SystemId::Pendulum => SampleDomain {
                kind: DomainKind::Box,
                x: vec![Interval::new(-1.5, 1.5)],
                y: vec![Interval::new(-1.5, 1.5)],
            },
            SystemId::Relativistic | SystemId::Alpha | SystemId::Beta => SampleDomain {
                kind: DomainKind::Box,
                x: vec![Interval::new(-1.5, 1.5)],
                y: vec![Interval::new(-0.9, 0.9)],
            },
            SystemId::Kepler => SampleDomain {
                kind: DomainKind::SignedMagnitude,
                x: vec![Interval::new(0.5, 2.5)],
                y: vec![Interval::new(-1.5, 1.5)],
            },
            SystemId::DoublePendulum => SampleDomain {
                kind: DomainKind::Box,
                x: vec![Interval::new(-1.2, 1.2); 2],
                y: vec![Interval::new(-1.0, 1.0); 2],
            },
            SystemId::SphericalPendulum => SampleDomain {
                kind: DomainKind::Box,
                // polar angle kept off the sin(theta) = 0 coordinate singularity
                x: vec![Interval::new(0.3, 1.2), Interval::new(-1.2, 1.2)],
                y: vec![Interval::new(-1.0, 1.0); 2],
            },
            SystemId::TwoBody | SystemId::ThreeBody => SampleDomain {
                kind: DomainKind::Separated {
                    min_sep: NBODY_SAMPLE_SEPARATION,
                },
                x: vec![Interval::new(-1.5, 1.5); d],
                y: vec![Interval::new(-0.5, 0.5); d],
            },
        };
        SystemSpec {
            id,
            dim: d,
            sample_domain,
        }
    }

    fn domain_error(&self, reason: impl Into<String>) -> MassError {
        MassError::DomainError {
            system: self.id.name().to_string(),
            reason: reason.into(),
        }
    }

    pub fn check_domain(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(MassError::Shape(format!(
                "{} expects dimension {}, got {}",
                self.id,
                self.dim,
                x.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(self.domain_error("non-finite coordinate"));
        }
        match self.id {
            id if id.is_relativistic() => {
                if y[0].abs() >= 1.0 {
                    return Err(self.domain_error(format!("|y| = {} >= 1", y[0].abs())));
                }
            }
            SystemId::Kepler => {
                if x[0].abs() < KEPLER_SOFTENING {
                    return Err(self.domain_error(format!(
                        "|x| = {} below softening bound {KEPLER_SOFTENING}",
                        x[0].abs()
                    )));
                }
            }
            SystemId::TwoBody | SystemId::ThreeBody => {
                let bodies = self.dim / 2;
                for i in 0..bodies {
                    for j in i + 1..bodies {
                        let r = ((x[2 * i] - x[2 * j]).powi(2) + (x[2 * i + 1] - x[2 * j + 1]).powi(2))
                            .sqrt();
                        if r < NBODY_MIN_SEPARATION {
                            return Err(self.domain_error(format!(
                                "bodies {i} and {j} separated by {r}"
                            )));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Kinetic part `T(x, y)` of the conserved energy.
    pub fn kinetic(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.id {
            SystemId::Sho | SystemId::Pendulum | SystemId::Kepler => 0.5 * y[0] * y[0],
            SystemId::Relativistic | SystemId::Alpha | SystemId::Beta => gamma(y[0]),
            SystemId::DoublePendulum => {
                y[0] * y[0] + 0.5 * y[1] * y[1] + y[0] * y[1] * (x[0] - x[1]).cos()
            }
            SystemId::SphericalPendulum => {
                0.5 * y[0] * y[0] + 0.5 * x[0].sin().powi(2) * y[1] * y[1]
            }
            SystemId::TwoBody | SystemId::ThreeBody => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    /// Potential part `V(x, y)` of the conserved energy.
    pub fn potential(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.id {
            SystemId::Sho => 0.5 * x[0] * x[0],
            SystemId::Pendulum => 1.0 - x[0].cos(),
            SystemId::Kepler => -1.0 / x[0].abs(),
            SystemId::Relativistic => 0.5 * x[0] * x[0],
            SystemId::Alpha => 0.5 * x[0] * x[0] * gamma(y[0]),
            SystemId::Beta => 0.5 * x[0] * x[0] * (y[0].cos() + y[0] * y[0].sin()),
            SystemId::DoublePendulum => -2.0 * x[0].cos() - x[1].cos(),
            SystemId::SphericalPendulum => -x[0].cos(),
            SystemId::TwoBody | SystemId::ThreeBody => {
                let bodies = self.dim / 2;
                let mut v = 0.0;
                for i in 0..bodies {
                    for j in i + 1..bodies {
                        let r = ((x[2 * i] - x[2 * j]).powi(2) + (x[2 * i + 1] - x[2 * j + 1]).powi(2))
                            .sqrt();
                        v -= 1.0 / r;
                    }
                }
                v
            }
        }
    }

    pub fn total_energy(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_domain(x, y)?;
        Ok(self.kinetic(x, y) + self.potential(x, y))
    }

    /// Ground-truth `ydot`: force laws for the three classical systems, the
    /// Euler–Lagrange oracle on [`Lagrangian::eval`] for all others.
    pub fn accel(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(x, y)?;
        match self.id {
            SystemId::Sho => Ok(vec![-x[0]]),
            SystemId::Pendulum => Ok(vec![-x[0].sin()]),
            SystemId::Kepler => Ok(vec![-x[0].signum() / (x[0] * x[0])]),
            _ => euler_lagrange_accel(self, x, y),
        }
    }

    /// Initial condition used for rollouts of this system.
    pub fn default_initial_condition(&self) -> (Vec<f64>, Vec<f64>) {
        match self.id {
            SystemId::Sho | SystemId::Pendulum => (vec![1.0], vec![0.0]),
            // Unbound: every bound 1-D orbit ends in a collision.
            SystemId::Kepler => (vec![1.0], vec![1.5]),
            SystemId::Relativistic | SystemId::Alpha | SystemId::Beta => (vec![1.0], vec![0.0]),
            SystemId::DoublePendulum => (vec![0.5, 0.5], vec![0.0, 0.0]),
            SystemId::SphericalPendulum => (vec![1.0, 0.1], vec![0.0, 1.0]),
            SystemId::TwoBody => (vec![-1.0, 0.0, 1.0, 0.0], vec![0.0, 0.5, 0.0, -0.25]),
            SystemId::ThreeBody => (
                vec![-1.0, 0.25, 0.0, 0.0, 1.0, -0.25],
                vec![0.45, 0.43, -1.0, -0.9, 0.44, 0.43],
            ),
        }
    }
}

fn nbody_lagrangian<S: Scalar>(x: &[S], y: &[S]) -> S {
    let mut l = y[0] * y[0] * 0.5;
    for v in &y[1..] {
        l = l + *v * *v * 0.5;
    }
    let bodies = x.len() / 2;
    for i in 0..bodies {
        for j in i + 1..bodies {
            let dx = x[2 * i] - x[2 * j];
            let dy = x[2 * i + 1] - x[2 * j + 1];
            l = l + (dx * dx + dy * dy).sqrt().recip();
        }
    }
    l
}

impl Lagrangian for SystemSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let half = 0.5;
        match self.id {
            SystemId::Sho => (y[0] * y[0] - x[0] * x[0]) * half,
            SystemId::Pendulum => y[0] * y[0] * half + x[0].cos() - 1.0,
            SystemId::Kepler => y[0] * y[0] * half + x[0].abs().recip(),
            SystemId::Relativistic => -(-(y[0] * y[0]) + 1.0).sqrt() - x[0] * x[0] * half,
            SystemId::Alpha => -(-(y[0] * y[0]) + 1.0).sqrt() * (x[0] * x[0] * half + 1.0),
            SystemId::Beta => -(-(y[0] * y[0]) + 1.0).sqrt() - x[0] * x[0] * y[0].cos() * half,
            SystemId::DoublePendulum => {
                y[0] * y[0] + y[1] * y[1] * half + y[0] * y[1] * (x[0] - x[1]).cos()
                    + x[0].cos() * 2.0
                    + x[1].cos()
            }
            SystemId::SphericalPendulum => {
                let s = x[0].sin();
                y[0] * y[0] * half + s * s * y[1] * y[1] * half + x[0].cos()
            }
            SystemId::TwoBody | SystemId::ThreeBody => nbody_lagrangian(x, y),
        }
    }
}
