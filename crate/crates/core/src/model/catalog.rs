//! The fixed, ordered catalog of derivative terms.
//!
//! Vectors `V = [x, y, S_x, S_y]`, matrices
//! `A = [S_xx, S_yy, S_xy, S_xx^-1, S_yy^-1, S_xy^-1]`. Order: all `v`, then
//! all `A v` (matrix-major), then all `A1 A2 v` (lexicographic in
//! `(A1, A2, v)`), `4 + 24 + 144 = 172` terms for every dimension.

use sha2::{Digest, Sha256};

pub const N_VECTORS: usize = 4;
pub const N_MATRICES: usize = 6;
pub const N_TERMS: usize = N_VECTORS + N_MATRICES * N_VECTORS + N_MATRICES * N_MATRICES * N_VECTORS;

pub const VECTOR_NAMES: [&str; N_VECTORS] = ["x", "y", "S_x", "S_y"];
pub const MATRIX_NAMES: [&str; N_MATRICES] =
    ["S_xx", "S_yy", "S_xy", "S_xx^-1", "S_yy^-1", "S_xy^-1"];

pub const VEC_X: usize = 0;
pub const VEC_Y: usize = 1;
pub const VEC_SX: usize = 2;
pub const VEC_SY: usize = 3;
pub const MAT_SXX: usize = 0;
pub const MAT_SYY: usize = 1;
pub const MAT_SXY: usize = 2;
pub const MAT_SXX_INV: usize = 3;
pub const MAT_SYY_INV: usize = 4;
pub const MAT_SXY_INV: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TermDescriptor {
    /// 1, 2 or 3.
    pub kind: u8,
    /// Outer matrix first; unused slots are `None`.
    pub matrices: [Option<u8>; 2],
    pub vector: u8,
}

impl TermDescriptor {
    pub fn name(&self) -> String {
        let mut parts: Vec<&str> = self
            .matrices
            .iter()
            .flatten()
            .map(|m| MATRIX_NAMES[*m as usize])
            .collect();
        parts.push(VECTOR_NAMES[self.vector as usize]);
        parts.join(" ")
    }
}

/// Catalog index of a type-1 term `v`.
pub const fn vector_term(v: usize) -> usize {
    v
}

/// Catalog index of a type-2 term `A v`.
pub const fn single_term(a: usize, v: usize) -> usize {
    N_VECTORS + a * N_VECTORS + v
}

/// Catalog index of a type-3 term `A1 A2 v`.
pub const fn double_term(a1: usize, a2: usize, v: usize) -> usize {
    N_VECTORS + N_MATRICES * N_VECTORS + (a1 * N_MATRICES + a2) * N_VECTORS + v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermCatalog {
    pub entries: Vec<TermDescriptor>,
}

impl Default for TermCatalog {
    fn default() -> Self {
        Self::standard()
    }
}

impl TermCatalog {
    pub fn standard() -> Self {
        let mut entries = Vec::with_capacity(N_TERMS);
        for v in 0..N_VECTORS as u8 {
            entries.push(TermDescriptor {
                kind: 1,
                matrices: [None, None],
                vector: v,
            });
        }
        for a in 0..N_MATRICES as u8 {
            for v in 0..N_VECTORS as u8 {
                entries.push(TermDescriptor {
                    kind: 2,
                    matrices: [Some(a), None],
                    vector: v,
                });
            }
        }
        for a1 in 0..N_MATRICES as u8 {
            for a2 in 0..N_MATRICES as u8 {
                for v in 0..N_VECTORS as u8 {
                    entries.push(TermDescriptor {
                        kind: 3,
                        matrices: [Some(a1), Some(a2)],
                        vector: v,
                    });
                }
            }
        }
        TermCatalog { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name() == name)
    }

    /// One line per term: `index kind m1 m2 vector name`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let m = |k: usize| e.matrices[k].map_or("-".to_string(), |v| v.to_string());
            out.push_str(&format!(
                "{i} {} {} {} {} {}\n",
                e.kind,
                m(0),
                m(1),
                e.vector,
                e.name()
            ));
        }
        out
    }

    /// SHA-256 of [`serialize`](Self::serialize), lowercase hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.serialize().as_bytes()))
    }
}
