//! Reverse-mode tape over the network parameters.
//!
//! The first `n_params` nodes of a tape are the parameter leaves. Every other
//! node stores its primal value and the local partials with respect to its
//! parents, so a reverse sweep is a single pass over the node list in
//! reverse creation order.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::{sigmoid_f64, softplus_f64, Scalar};
use crate::error::{MassError, Result};

#[derive(Clone, Copy)]
struct Node {
    value: f64,
    start: u32,
    len: u32,
}

/// Append-only record of elementary operations on top of a parameter vector.
///
/// A tape is confined to one thread; build one per worker.
pub struct ParamTape {
    n_params: usize,
    nodes: RefCell<Vec<Node>>,
    edges: RefCell<Vec<(u32, f64)>>,
    adjoints: RefCell<Vec<f64>>,
}

/// Handle to a node on a [`ParamTape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t ParamTape,
    idx: u32,
}

impl ParamTape {
    pub fn new(parameters: &[f64]) -> Self {
        let nodes = parameters
            .iter()
            .map(|&value| Node {
                value,
                start: 0,
                len: 0,
            })
            .collect();
        ParamTape {
            n_params: parameters.len(),
            nodes: RefCell::new(nodes),
            edges: RefCell::new(Vec::new()),
            adjoints: RefCell::new(vec![0.0; parameters.len()]),
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Current parameter values.
    pub fn parameters(&self) -> Vec<f64> {
        self.nodes.borrow()[..self.n_params]
            .iter()
            .map(|n| n.value)
            .collect()
    }

    /// Adjoints left behind by the most recent reverse sweep.
    pub fn adjoints(&self) -> Vec<f64> {
        self.adjoints.borrow().clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param(&self, i: usize) -> Var<'_> {
        assert!(i < self.n_params, "parameter index {i} out of range");
        Var {
            tape: self,
            idx: i as u32,
        }
    }

    pub fn param_vars(&self) -> Vec<Var<'_>> {
        (0..self.n_params).map(|i| self.param(i)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(value, &[])
    }

    /// Records a node with arbitrary parents and local partials.
    pub fn custom<'t>(&'t self, value: f64, parents: &[(Var<'t>, f64)]) -> Var<'t> {
        let edges: Vec<(u32, f64)> = parents
            .iter()
            .map(|(v, d)| {
                debug_assert!(std::ptr::eq(v.tape, self));
                (v.idx, *d)
            })
            .collect();
        self.push(value, &edges)
    }

    fn push(&self, value: f64, parents: &[(u32, f64)]) -> Var<'_> {
        let mut edges = self.edges.borrow_mut();
        let start = edges.len() as u32;
        edges.extend_from_slice(parents);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            start,
            len: parents.len() as u32,
        });
        Var {
            tape: self,
            idx: (nodes.len() - 1) as u32,
        }
    }

    fn sweep(&self, output: u32) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let edges = self.edges.borrow();
        let mut adj = vec![0.0; output as usize + 1];
        adj[output as usize] = 1.0;
        for i in (0..=output as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            let range = node.start as usize..(node.start + node.len) as usize;
            for &(parent, partial) in &edges[range] {
                adj[parent as usize] += a * partial;
            }
        }
        adj.resize(self.n_params.max(adj.len()), 0.0);
        adj.truncate(self.n_params);
        adj
    }
}

/// Exact gradient of `loss` with respect to the tape's parameters.
///
/// The tape is not consumed; repeated calls give bitwise-identical results.
pub fn param_grad(tape: &ParamTape, loss: Var<'_>) -> Result<Vec<f64>> {
    if !std::ptr::eq(tape, loss.tape) || loss.idx as usize >= tape.len() {
        return Err(MassError::TapeMismatch);
    }
    let grad = tape.sweep(loss.idx);
    *tape.adjoints.borrow_mut() = grad.clone();
    Ok(grad)
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t ParamTape {
        self.tape
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        self.tape.push(value, &[(self.idx, partial)])
    }

    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        self.tape.push(value, &[(self.idx, da), (other.idx, db)])
    }

    /// Sum of many variables as one node.
    pub fn sum(tape: &'t ParamTape, terms: &[Var<'t>]) -> Var<'t> {
        let value = terms.iter().map(|v| v.value()).sum();
        let edges: Vec<(u32, f64)> = terms.iter().map(|v| (v.idx, 1.0)).collect();
        tape.push(value, &edges)
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        let v = self.value() + rhs.value();
        self.binary(rhs, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        let v = self.value() - rhs.value();
        self.binary(rhs, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, a / b, 1.0 / b, -a / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.value(), -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value() + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value() - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value() * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value() / rhs, 1.0 / rhs)
    }
}

impl<'t> Scalar for Var<'t> {
    fn constant_like(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn value(&self) -> f64 {
        self.tape.nodes.borrow()[self.idx as usize].value
    }

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        let a = self.value();
        self.unary(a.ln(), 1.0 / a)
    }

    fn sqrt(self) -> Self {
        let s = self.value().sqrt();
        self.unary(s, 0.5 / s)
    }

    fn sin(self) -> Self {
        let a = self.value();
        self.unary(a.sin(), a.cos())
    }

    fn cos(self) -> Self {
        let a = self.value();
        self.unary(a.cos(), -a.sin())
    }

    fn abs(self) -> Self {
        let a = self.value();
        let s = if a > 0.0 {
            1.0
        } else if a < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(a.abs(), s)
    }

    fn recip(self) -> Self {
        let a = self.value();
        self.unary(1.0 / a, -1.0 / (a * a))
    }

    fn softplus(self) -> Self {
        let a = self.value();
        self.unary(softplus_f64(a), sigmoid_f64(a))
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.value());
        self.unary(s, s * (1.0 - s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient_is_twice_theta() {
        let theta = [0.3, -1.2, 2.5];
        let tape = ParamTape::new(&theta);
        let vars = tape.param_vars();
        let squares: Vec<_> = vars.iter().map(|v| *v * *v).collect();
        let loss = Var::sum(&tape, &squares);
        let g = param_grad(&tape, loss).unwrap();
        for (gi, ti) in g.iter().zip(theta) {
            assert_eq!(*gi, 2.0 * ti);
        }
    }

    #[test]
    fn parameter_free_loss_has_zero_gradient() {
        let tape = ParamTape::new(&[1.0, 2.0]);
        let c = tape.constant(3.0);
        let loss = c * c + 1.0;
        assert_eq!(param_grad(&tape, loss).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn foreign_loss_is_rejected() {
        let a = ParamTape::new(&[1.0]);
        let b = ParamTape::new(&[1.0]);
        let loss = b.param(0) * 2.0;
        assert!(matches!(param_grad(&a, loss), Err(MassError::TapeMismatch)));
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let tape = ParamTape::new(&[0.7, -0.4]);
        let [a, b] = [tape.param(0), tape.param(1)];
        let loss = (a * b).softplus() + (a / b).sin() * b.exp();
        let g1 = param_grad(&tape, loss).unwrap();
        let g2 = param_grad(&tape, loss).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(tape.adjoints(), g2);
    }

    #[test]
    fn elementary_partials_match_finite_differences() {
        let f = |x: &[f64]| -> f64 {
            let (a, b) = (x[0], x[1]);
            (a * b).softplus() + (a / b).sin() * b.exp() + (a * a + 1.0).sqrt().ln()
                - b.sigmoid() * a.cos()
                + (a - b).abs()
                + b.recip()
        };
        let tape = ParamTape::new(&[0.7, -0.4]);
        let (a, b) = (tape.param(0), tape.param(1));
        let loss = (a * b).softplus() + (a / b).sin() * b.exp() + (a * a + 1.0).sqrt().ln()
            - b.sigmoid() * a.cos()
            + (a - b).abs()
            + b.recip();
        let g = param_grad(&tape, loss).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut p = [0.7, -0.4];
            let mut m = p;
            p[i] += h;
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{fd} vs {}", g[i]);
        }
    }
}
