//! Second-order forward-mode numbers: a value together with its exact
//! gradient and Hessian with respect to `N` seeded inputs.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::{sigmoid_f64, softplus_f64, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2<const N: usize> {
    pub value: f64,
    pub grad: [f64; N],
    pub hess: [[f64; N]; N],
}

impl<const N: usize> Dual2<N> {
    pub fn constant(value: f64) -> Self {
        Dual2 {
            value,
            grad: [0.0; N],
            hess: [[0.0; N]; N],
        }
    }

    /// The `i`-th independent input, with value `value`.
    pub fn variable(value: f64, i: usize) -> Self {
        let mut d = Self::constant(value);
        d.grad[i] = 1.0;
        d
    }

    /// Applies a scalar function given its first three Taylor coefficients at
    /// the current value: `f(a)`, `f'(a)`, `f''(a)`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..N {
            out.grad[i] = f1 * self.grad[i];
            for j in 0..N {
                out.hess[i][j] = f2 * self.grad[i] * self.grad[j] + f1 * self.hess[i][j];
            }
        }
        out
    }
}

impl<const N: usize> Add for Dual2<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.value += rhs.value;
        for i in 0..N {
            self.grad[i] += rhs.grad[i];
            for j in 0..N {
                self.hess[i][j] += rhs.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Dual2<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<const N: usize> Neg for Dual2<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.value = -self.value;
        for i in 0..N {
            self.grad[i] = -self.grad[i];
            for j in 0..N {
                self.hess[i][j] = -self.hess[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for Dual2<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::constant(self.value * rhs.value);
        for i in 0..N {
            out.grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
            for j in 0..N {
                out.hess[i][j] = self.hess[i][j] * rhs.value
                    + self.value * rhs.hess[i][j]
                    + self.grad[i] * rhs.grad[j]
                    + rhs.grad[i] * self.grad[j];
            }
        }
        out
    }
}

impl<const N: usize> Div for Dual2<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<const N: usize> Add<f64> for Dual2<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.value += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual2<N> {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.value -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual2<N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.value * rhs, rhs, 0.0)
    }
}

impl<const N: usize> Div<f64> for Dual2<N> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<const N: usize> Scalar for Dual2<N> {
    fn constant_like(&self, c: f64) -> Self {
        Self::constant(c)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let a = self.value;
        self.chain(a.ln(), 1.0 / a, -1.0 / (a * a))
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }
    fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }
    fn abs(self) -> Self {
        if self.value < 0.0 {
            -self
        } else {
            self
        }
    }
    fn recip(self) -> Self {
        let a = self.value;
        self.chain(1.0 / a, -1.0 / (a * a), 2.0 / (a * a * a))
    }
    fn softplus(self) -> Self {
        let s = sigmoid_f64(self.value);
        self.chain(softplus_f64(self.value), s, s * (1.0 - s))
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.value);
        self.chain(s, s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s))
    }
}
