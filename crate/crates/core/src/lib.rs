//! KMS states of gauge actions on binary Cuntz-Pimsner families, computed at
//! desk scale: symbolic sequences on `{0,1}^Z`, the additive shift cocycle,
//! quasi-invariant measures and their functional-equation residuals, factor
//! type classification, and tail/Poisson boundaries of finite Markov
//! operators.

pub mod classify;
pub mod cocycle;
pub mod error;
pub mod kms;
pub mod markov;
pub mod measure;
pub mod num;
pub mod par;
pub mod symbolic;

pub use error::{Error, Result};
pub use num::{Arithmetic, Num, Rational};

/// Version tag written into every JSON document this crate produces.
pub const SCHEMA_VERSION: u32 = 1;

/// Default residual tolerance for float checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;
