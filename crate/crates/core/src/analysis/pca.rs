use log::warn;
use nalgebra::DMatrix;

use super::activations::{pearson, ActivationMatrix};
use crate::error::{MassError, Result};
use crate::physics::SystemId;
use crate::train::RunRecord;

/// Principal components of one centered activation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// Explained-variance ratios, descending; they sum to 1.
    pub explained: Vec<f64>,
    /// First-component loadings, one per column, signed so they sum to a
    /// non-negative value (ties broken by the largest-magnitude loading).
    pub loading: Vec<f64>,
    /// Projection of every centered row on the first component.
    pub projection: Vec<f64>,
}

pub fn pca(acts: &ActivationMatrix) -> Result<Pca> {
    let (n, t) = (acts.rows, acts.cols);
    let mut m = DMatrix::from_row_slice(n, t, &acts.values);
    for j in 0..t {
        let mean = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mean);
    }
    let total: f64 = m.iter().map(|v| v * v).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(MassError::Degenerate("activation matrix has rank 0".into()));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sq: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let sum: f64 = sq.iter().sum();
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|a, b| sq[*b].total_cmp(&sq[*a]));
    let explained: Vec<f64> = order.iter().map(|i| sq[*i] / sum).collect();

    let mut loading: Vec<f64> = v_t.row(order[0]).iter().copied().collect();
    let s: f64 = loading.iter().sum();
    let flip = if s.abs() > 1e-12 {
        s < 0.0
    } else {
        let big = loading
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        big < 0.0
    };
    if flip {
        loading.iter_mut().for_each(|v| *v = -*v);
    }
    let projection = (0..n)
        .map(|r| (0..t).map(|c| m[(r, c)] * loading[c]).sum())
        .collect();
    Ok(Pca {
        explained,
        loading,
        projection,
    })
}

/// Cross-seed agreement of first principal components.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaAgreement {
    /// Seeds kept, in input order.
    pub seeds: Vec<u64>,
    /// First-component explained-variance ratio per kept seed.
    pub explained_first: Vec<f64>,
    pub projections: Vec<Vec<f64>>,
    /// Row-major Pearson correlations of the projections.
    pub cross_corr: Vec<f64>,
    /// Seeds dropped as degenerate, with the reason.
    pub excluded: Vec<(u64, String)>,
}

impl PcaAgreement {
    pub fn corr_at(&self, i: usize, j: usize) -> f64 {
        self.cross_corr[i * self.seeds.len() + j]
    }

    /// `|rho|` of every unordered pair of distinct kept seeds.
    pub fn pairwise_abs(&self) -> Vec<f64> {
        let k = self.seeds.len();
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                out.push(self.corr_at(i, j).abs());
            }
        }
        out
    }
}

/// Agreement over labelled activation matrices that share sample points.
pub fn pca_agreement_matrices(mats: &[(u64, ActivationMatrix)]) -> Result<PcaAgreement> {
    if mats.is_empty() {
        return Err(MassError::NoRuns);
    }
    let reference = &mats[0].1.sample_points;
    if mats.iter().any(|(_, m)| &m.sample_points != reference) {
        return Err(MassError::Shape(
            "runs were analysed on different sample points".into(),
        ));
    }
    let mut out = PcaAgreement {
        seeds: Vec::new(),
        explained_first: Vec::new(),
        projections: Vec::new(),
        cross_corr: Vec::new(),
        excluded: Vec::new(),
    };
    for (seed, m) in mats {
        match pca(m) {
            Ok(p) => {
                out.seeds.push(*seed);
                out.explained_first.push(p.explained[0]);
                out.projections.push(p.projection);
            }
            Err(e) => {
                warn!("seed {seed} excluded from PCA agreement: {e}");
                out.excluded.push((*seed, e.to_string()));
            }
        }
    }
    let k = out.seeds.len();
    out.cross_corr = vec![0.0; k * k];
    for i in 0..k {
        out.cross_corr[i * k + i] = 1.0;
        for j in i + 1..k {
            let r = pearson(&out.projections[i], &out.projections[j]).unwrap_or(0.0);
            out.cross_corr[i * k + j] = r;
            out.cross_corr[j * k + i] = r;
        }
    }
    Ok(out)
}

/// PCA agreement of `system` at `phase` across runs.
pub fn pca_agreement(runs: &[RunRecord], phase: usize, system: SystemId) -> Result<PcaAgreement> {
    let mut mats = Vec::with_capacity(runs.len());
    let mut excluded = Vec::new();
    for r in runs {
        match ActivationMatrix::from_run(r, phase, system) {
            Ok(m) => mats.push((r.seed, m)),
            Err(MassError::DegenerateRun { seed, reason }) => excluded.push((seed, reason)),
            Err(e) => return Err(e),
        }
    }
    let mut out = pca_agreement_matrices(&mats)?;
    out.excluded.extend(excluded);
    Ok(out)
}
