//! bk-lab core: exact computational algebra for rank-2 Breuil-Kisin modules
//! with tame descent data over finite-field coefficients.
//!
//! The library is organized around an immutable [`context::ArithmeticContext`]
//! fixing the arithmetic setting, truncated-series semilinear algebra in
//! [`series`], the module types and their validation/classification in [`bk`],
//! Dieudonne extraction in [`dieudonne`], local-model pairs and the explicit
//! hyperspecial/Iwahori/cuspidal conversions in [`locmodel`], and the
//! deterministic enumeration and census harness in [`grid`].

pub mod error;
pub mod field;
pub mod linalg;
pub mod context;
pub mod series;
pub mod bk;
pub mod iso;
pub mod dieudonne;
pub mod locmodel;
pub mod extension;
pub mod grid;
pub mod census;
pub mod json;

pub use context::{build_context, ArithmeticContext, Ctx, Flavor, InertialCharacter, TameType};
pub use error::{BkError, Result};
