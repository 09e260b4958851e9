//! Kinematic systems on matrix Lie groups: lifts, equivariance, invariance
//! classification, equivariant input extension, and the equivariant filter.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod eqf;
pub mod error;
pub mod kinematics;
pub mod lie;
pub mod linalg;
pub mod sim;
pub mod systems;

pub use error::{Error, Result};
pub use lie::{GroupElement, GroupKind, GroupSpec, SpecRef};
