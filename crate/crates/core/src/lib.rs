//! Best constants in L² approximation of Sobolev functions.
//!
//! The Kolmogorov n-widths `d_n` of `H^r(a,b)` are square roots of the
//! eigenvalues of the integral operator whose kernel is the Green's function
//! of the Dirichlet problem `(-1)^r φ^{(2r)} = μ φ`. The kernel is a scaled
//! B-spline, so it is evaluated with the Cox–de Boor recurrence and
//! discretized with the trapezoid rule on a uniform grid (Nyström method).
//!
//! Pipeline: [`kernel::Kernel`] → [`nystrom::assemble`] →
//! [`eigen::top_eigenpairs`] → [`nwidths`] / [`knots`] / [`convergence`].

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod cli;
pub mod convergence;
pub mod eigen;
mod error;
pub mod kernel;
pub mod knots;
pub mod nwidths;
pub mod nystrom;
pub mod output;

pub use error::{Error, Result};
pub use kernel::{Interval, Kernel};
