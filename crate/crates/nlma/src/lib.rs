//! Nonlocal Monge-Ampère operator toolkit.
//!
//! Evaluates the fractional-order Monge-Ampère operator
//!
//!   MA u(x) = sup_{b ∈ ∂u(x)} inf_K ∫ (u(x+y) − u(x) − y·b) K(y) dy,
//!
//! where the infimum runs over all kernels K equidistributed with |y|^{−d−s},
//! s ∈ (1, 2). Convex inputs are sampled on uniform grids over a box with an
//! analytic cone tail, so sublevel-set measures extend beyond the box in
//! closed form. On top of the pointwise evaluator the crate provides the
//! radial-rearrangement cross-check, kernel variants (near-field pinned,
//! value-capped, localized), a spectral fractional Laplacian with the upper
//! barrier construction, and a damped fixed-point solver for the global
//! equation MA u = u − φ with barrier-certified output.
//!
//! Entry points: [`grid::GridFunction`] builders, [`operator::eval_ma`],
//! [`solver::solve_global`], and the `nlma` binary. Each major capability has
//! a runnable example under `examples/`.

pub mod cli;
pub mod cone;
pub mod error;
pub mod grid;
pub mod hull;
pub mod la;
pub mod num;
pub mod operator;
pub mod profile;
pub mod quad;
pub mod report;
pub mod solver;
pub mod spectral;
pub mod suites;

pub use error::Error;
pub use grid::GridFunction;

