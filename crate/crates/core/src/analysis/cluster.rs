use kodama::{linkage, Method};
use log::warn;

use super::activations::{pearson, ActivationMatrix};
use super::significance::significant_indices;
use crate::error::{MassError, Result};

/// Non-fatal conditions met while analysing.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisWarning {
    /// The column had zero variance; its correlations were set to 0.
    ConstantColumn { column: usize },
}

/// Clustered correlation map of the significant activations.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    /// Catalog indices of the kept columns in leaf order.
    pub columns: Vec<usize>,
    /// Row-major `k x k` Pearson correlations, rows and columns in leaf order.
    pub corr: Vec<f64>,
    /// Merge steps `(a, b, distance)`; labels `>= k` are earlier merges.
    pub merges: Vec<(usize, usize, f64)>,
    pub warnings: Vec<AnalysisWarning>,
}

impl ClusterResult {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn corr_at(&self, i: usize, j: usize) -> f64 {
        self.corr[i * self.columns.len() + j]
    }
}

/// Keeps the columns whose mean `|a_i|` reaches `fraction` of the total,
/// correlates them and orders them by average-linkage clustering on
/// `1 - |rho|`.
pub fn correlation_cluster(acts: &ActivationMatrix, fraction: f64) -> Result<ClusterResult> {
    let keep = significant_indices(&acts.mean_abs(), fraction)?;
    correlation_cluster_columns(acts, &keep)
}

/// [`correlation_cluster`] on an explicit column set.
pub fn correlation_cluster_columns(acts: &ActivationMatrix, keep: &[usize]) -> Result<ClusterResult> {
    let k = keep.len();
    if k < 2 {
        return Err(MassError::Degenerate(format!(
            "clustering needs at least 2 columns, got {k}"
        )));
    }
    let cols: Vec<Vec<f64>> = keep.iter().map(|c| acts.column(*c)).collect();
    let mut warnings = Vec::new();
    let constant: Vec<bool> = cols
        .iter()
        .zip(keep)
        .map(|(c, idx)| {
            let flat = c.iter().all(|v| *v == c[0]);
            if flat {
                warn!("activation column {idx} is constant; correlations set to 0");
                warnings.push(AnalysisWarning::ConstantColumn { column: *idx });
            }
            flat
        })
        .collect();
    let mut corr = vec![0.0; k * k];
    for i in 0..k {
        corr[i * k + i] = 1.0;
        for j in i + 1..k {
            let r = if constant[i] || constant[j] {
                0.0
            } else {
                pearson(&cols[i], &cols[j]).unwrap_or(0.0)
            };
            corr[i * k + j] = r;
            corr[j * k + i] = r;
        }
    }

    let mut condensed = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            condensed.push((1.0 - corr[i * k + j].abs()).max(0.0));
        }
    }
    let dendrogram = linkage(&mut condensed, k, Method::Average);
    let merges: Vec<(usize, usize, f64)> = dendrogram
        .steps()
        .iter()
        .map(|s| (s.cluster1, s.cluster2, s.dissimilarity))
        .collect();

    let mut order = Vec::with_capacity(k);
    let mut stack = vec![k + merges.len() - 1];
    while let Some(label) = stack.pop() {
        if label < k {
            order.push(label);
        } else {
            let (a, b, _) = merges[label - k];
            stack.push(b);
            stack.push(a);
        }
    }

    let mut sorted = vec![0.0; k * k];
    for (i, oi) in order.iter().enumerate() {
        for (j, oj) in order.iter().enumerate() {
            sorted[i * k + j] = corr[oi * k + oj];
        }
    }
    Ok(ClusterResult {
        columns: order.iter().map(|o| keep[*o]).collect(),
        corr: sorted,
        merges,
        warnings,
    })
}
