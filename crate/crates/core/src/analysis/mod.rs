//! Interpretability analyses over trained runs.

mod activations;
mod cluster;
mod distill;
pub mod linalg;
mod pca;
mod reference;
mod significance;
mod strip;
mod sweep;
mod theory;

pub use activations::{pearson, ActivationMatrix};
pub use cluster::{correlation_cluster, correlation_cluster_columns, AnalysisWarning, ClusterResult};
pub use distill::{
    distill, distill_control, distill_lagrangian, distill_objective, DistillResult, DISTILL_RIDGE,
    U_TERM, V_TERM,
};
pub use pca::{pca, pca_agreement, pca_agreement_matrices, Pca, PcaAgreement};
pub use reference::{
    activation_rows, fit_reference_activations, heldout_r2, reference_targets, sample_rows,
    significant_columns, Formulation, TRAIN_FRACTION,
};
pub use significance::{significant_count, significant_indices};
pub use strip::{activation_strip, jaccard, strip_from_matrices, ActivationStrip};
pub use theory::{classify_theory, fit_theory, TheoryFit, TheoryLabel};
pub use sweep::{
    distill_table, newest_system, reference_curve, reference_curve_csv, theory_census, DistillRow,
    DistillTable, ReferencePoint, TheoryCensus, TheoryFraction, TheoryRow,
};
