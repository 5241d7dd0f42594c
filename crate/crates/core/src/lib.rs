//! Pseudospectral simulation and resonance analysis for the damped, forced
//! generalized KdV equation on the torus,
//!
//! ```text
//! u_t + u_xxx + γu + (g(u))_x = f(x),   x ∈ 𝕋 = [0, 2π),
//! ```
//!
//! with polynomial `g(u) = Σ_{j≥2} a_j u^j`, mean-zero data and forcing.
//!
//! * [`spectral`]: Fourier fields, dealiased products, Sobolev norms, Airy flow.
//! * [`dynamics`]: the right-hand side and an integrating-factor RK4 solver.
//! * [`gauge`]: the translation gauge that removes the single-resonance term.
//! * [`resonance`]: `H_n`, case analysis, direct multilinear convolutions, the
//!   decompositions of the nonlinearity and the normal-form transform.
//! * [`diagnostics`]: conserved functionals, decay fits, absorbing balls and
//!   the refinement smoothing study.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod resonance;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
