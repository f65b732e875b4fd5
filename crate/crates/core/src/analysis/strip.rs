use std::collections::BTreeSet;

use super::activations::ActivationMatrix;
use super::significance::significant_indices;
use crate::error::{MassError, Result};
use crate::physics::SystemId;
use crate::train::RunRecord;

/// Mean activation magnitude per term and seed, each row scaled to max 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationStrip {
    pub seeds: Vec<u64>,
    pub cols: usize,
    /// Row-major `seeds x cols`.
    pub values: Vec<f64>,
}

impl ActivationStrip {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Columns reaching `fraction` of row `i`'s total.
    pub fn support(&self, i: usize, fraction: f64) -> Result<BTreeSet<usize>> {
        Ok(significant_indices(self.row(i), fraction)?.into_iter().collect())
    }

    /// Jaccard index of the `fraction` supports of every distinct row pair.
    pub fn pairwise_jaccard(&self, fraction: f64) -> Result<Vec<f64>> {
        let sets: Vec<_> = (0..self.seeds.len())
            .map(|i| self.support(i, fraction))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                out.push(jaccard(&sets[i], &sets[j]));
            }
        }
        Ok(out)
    }
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Strip rows from activation matrices; zero rows stay zero.
pub fn strip_from_matrices(mats: &[(u64, ActivationMatrix)]) -> ActivationStrip {
    let cols = mats.first().map(|m| m.1.cols).unwrap_or(0);
    let mut values = Vec::with_capacity(mats.len() * cols);
    for (_, m) in mats {
        let mut row = m.mean_abs();
        let max = row.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            row.iter_mut().for_each(|v| *v /= max);
        }
        values.extend(row);
    }
    ActivationStrip {
        seeds: mats.iter().map(|m| m.0).collect(),
        cols,
        values,
    }
}

/// Activation strip of `system` at `phase`; runs whose activations are not
/// finite are skipped.
pub fn activation_strip(runs: &[RunRecord], phase: usize, system: SystemId) -> Result<ActivationStrip> {
    if runs.len() < 2 {
        return Err(MassError::Degenerate(format!(
            "an activation strip needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let mut mats = Vec::with_capacity(runs.len());
    for r in runs {
        match ActivationMatrix::from_run(r, phase, system) {
            Ok(m) => mats.push((r.seed, m)),
            Err(MassError::DegenerateRun { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(strip_from_matrices(&mats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_runs_give_identical_rows() {
        let m = ActivationMatrix::new(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 0.5], vec![]).unwrap();
        let s = strip_from_matrices(&[(0, m.clone()), (1, m)]);
        assert_eq!(s.row(0), s.row(1));
        assert_eq!(s.row(0), &[1.0, 0.5, 0.25][..]);
        assert_eq!(s.pairwise_jaccard(0.99).unwrap(), vec![1.0]);
    }

    #[test]
    fn one_hot_theory_is_a_single_column() {
        let m = ActivationMatrix::new(2, 3, vec![0.0, 4.0, 0.0, 0.0, -2.0, 0.0], vec![]).unwrap();
        let s = strip_from_matrices(&[(0, m)]);
        assert_eq!(s.row(0), &[0.0, 1.0, 0.0][..]);
        assert_eq!(s.support(0, 0.99).unwrap().into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn jaccard_examples() {
        let a: BTreeSet<usize> = [1, 2, 3].into();
        let b: BTreeSet<usize> = [2, 3, 4].into();
        assert_eq!(jaccard(&a, &b), 0.5);
    }
}
