//! Total mean curvatures of level hypersurfaces in Riemannian manifolds.
//!
//! Given a metric chart `(M, g)` and a scalar function `u` with nonvanishing
//! gradient, the level sets `Γ_t = u⁻¹(t)` foliate the region between
//! `Γ_0` and `Γ_1`. Their total `r`-th mean curvatures
//!
//! ```text
//! M_r(Γ_t) = ∫_{Γ_t} σ_r(κ_1, …, κ_{n−1})
//! ```
//!
//! (with `σ_r` the elementary symmetric polynomial of the principal
//! curvatures taken with respect to the normal `∇u/|∇u|`) satisfy a
//! comparison identity: the difference `M_r(Γ_1) − M_r(Γ_0)` equals a volume
//! integral of `(r+1)σ_{r+1}` plus curvature correction terms built from the
//! ambient Riemann tensor. This crate computes both sides independently —
//! the left by surface quadrature, the right by a coarea volume integral —
//! and also checks the pointwise exterior-derivative identity behind the
//! Stokes argument against a finite-difference oracle.
//!
//! Module layout:
//!
//! - [`metric`] — metric charts, Christoffel symbols, Riemann/sectional
//!   curvature in coordinates and in orthonormal frames.
//! - [`exterior`] — permutation signs, wedge products evaluated on tuples of
//!   tangent vectors, finite-difference exterior derivative.
//! - [`levelset`] — principal frames of level sets: unit normal, principal
//!   directions and curvatures, `σ_r`, total mean curvature.
//! - [`chernforms`] — the `(n−1)`-forms `Φ_r`, their closed-form exterior
//!   derivative, and the curvature correction sums.
//! - [`quadrature`] — Gauss–Legendre / trapezoidal product rules for surface
//!   and coarea volume integrals with refinement-based error estimates.
//! - [`scenarios`] — catalog of concrete `(M, g, u)` triples with level-set
//!   parametrizations and closed-form reference values.
//! - [`report`] — verification drivers and machine-readable reports.
//! - [`oracles`] — brute-force reference implementations used by tests.

pub mod chernforms;
pub mod error;
pub mod exterior;
pub mod levelset;
pub mod metric;
pub mod oracles;
pub mod quadrature;
pub mod report;
pub mod scenarios;
pub mod tensor;

pub use error::{Error, Result};
