use crate::error::{MassError, Result};
use crate::model::{TermBank, N_TERMS};
use crate::physics::{PhasePoint, SystemId};
use crate::train::RunRecord;

/// Weighted head activations `a_i = w_i t_i`, one row per sample.
///
/// For one-dimensional systems the entries are the signed activations; for
/// `d > 1` each entry is the Euclidean norm over the `d` components.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub values: Vec<f64>,
    pub sample_points: Vec<PhasePoint>,
}

impl ActivationMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, sample_points: Vec<PhasePoint>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(MassError::Shape(format!(
                "{} values for a {rows} x {cols} activation matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MassError::NonFiniteValue { layer: 0 });
        }
        Ok(ActivationMatrix {
            rows,
            cols,
            values,
            sample_points,
        })
    }

    pub fn from_bank(bank: &TermBank, sample_points: Vec<PhasePoint>) -> Result<Self> {
        let d = bank.dim;
        let a = bank.weighted_activations();
        let values = if d == 1 {
            a
        } else {
            a.chunks(d)
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect()
        };
        ActivationMatrix::new(bank.n, N_TERMS, values, sample_points)
    }

    /// Activations of `system` on the dumped analysis batch of `phase`.
    pub fn from_run(run: &RunRecord, phase: usize, system: SystemId) -> Result<Self> {
        let rec = run.phase(phase)?;
        let bank = rec.bank(system)?;
        if bank.activations.iter().any(|v| !v.is_finite()) {
            return Err(MassError::DegenerateRun {
                seed: run.seed,
                reason: format!("non-finite activations for {system} at phase {phase}"),
            });
        }
        ActivationMatrix::from_bank(&bank, rec.dump(system)?.batch.points())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Mean `|a_i|` over samples, per column.
    pub fn mean_abs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.values.chunks(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v.abs();
            }
        }
        for o in &mut out {
            *o /= self.rows.max(1) as f64;
        }
        out
    }

    /// The sub-matrix of the listed columns, in that order.
    pub fn select(&self, cols: &[usize]) -> ActivationMatrix {
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            values.extend(cols.iter().map(|c| self.get(r, *c)));
        }
        ActivationMatrix {
            rows: self.rows,
            cols: cols.len(),
            values,
            sample_points: self.sample_points.clone(),
        }
    }
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &[5.0; 4]), None);
    }

    #[test]
    fn selection_keeps_order() {
        let m = ActivationMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![]).unwrap();
        let s = m.select(&[2, 0]);
        assert_eq!(s.values, vec![3.0, 1.0, 6.0, 4.0]);
        assert_eq!(m.mean_abs(), vec![2.5, 3.5, 4.5]);
    }
}
