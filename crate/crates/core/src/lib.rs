//! Stability margins for switched linear systems `ẋ = (A + Δ(t) A₀) x`.
//!
//! Lower bounds come from quadratic Lyapunov certificates of Kronecker-lifted
//! systems (homogeneous polynomial Lyapunov functions of the original state);
//! upper bounds come from worst-case bang-bang switching signals and the
//! monodromy matrices of the periodic segments they produce.

pub mod error;
pub mod hierarchy;
pub mod linalg;
pub mod lyapunov;
pub mod ode;
pub mod periodic;
pub mod sdp;
pub mod serde_util;
pub mod switching;

pub use error::{Error, Result};
