//! Per-system scalar networks, the term catalog and bank, and the shared
//! linear head.

pub mod batched;
pub mod catalog;
pub mod net;
pub mod pinv;
pub mod termbank;

pub use batched::NetForward;
pub use catalog::{TermCatalog, TermDescriptor, N_TERMS};
pub use net::{NetArch, ScalarNet, Stabilizer, STABILIZER_INIT};
pub use pinv::{pinv, pinv_backward, stabilized_pinv, PinvScalar, RCOND};
pub use termbank::{
    raw_term_matrix, raw_terms, scalar_values, term_bank, FinalLayer, TermBank, TermScratch,
};
