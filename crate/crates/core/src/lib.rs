//! Finite-dimensional system–environment dynamics: initial-state families,
//! assignment maps, reduced dynamics `Tr_E ∘ Ad_U ∘ Λ`, and Choi-matrix
//! complete-positivity checks.
//!
//! Operators are dense complex matrices in the row-major tensor convention
//! (`|i⟩ ⊗ |j⟩ ↦ i·d_b + j`). Linear maps act on row-major vectorizations.

pub mod channel;
pub mod consistency;
pub mod error;
pub mod families;
pub mod harness;
pub mod info;
pub mod linalg;
pub mod serde_matrix;
pub mod tensor;

pub use channel::{choi, is_cp, is_tp, ChannelMap, ChoiMatrix, KrausSet};
pub use consistency::{AssignmentMap, OperatorSubspace, UnitarySetSpec};
pub use error::{Error, Result};
pub use families::{FamilyParams, FamilySpec};
pub use linalg::CMatrix;
pub use tensor::{DensityMatrix, Factor, Operator, SpaceLayout, UnitaryOperator};
