//! Lepage equivalents of first-order Lagrangians: a symbolic engine over jet
//! and Grassmann coordinates, plus a numeric minimal-surface workbench.

pub mod acceptance;
pub mod charts;
pub mod cli;
pub mod expr;
pub mod forms;
pub mod homogeneity;
pub mod lepage;
pub mod minimal;
pub mod quadrature;
pub mod variation;

pub use expr::{CoordSymbol, Expr, Rational};

/// Point assignment in double precision.
pub type Point64 = expr::PointAssignment<f64>;
/// Point assignment in single precision.
pub type Point32 = expr::PointAssignment<f32>;
/// Exact point assignment (sqrt-free, transcendental-free fragment).
pub type PointExact = expr::PointAssignment<Rational>;
/// Grid field in double precision.
pub type Grid64 = minimal::GridField<f64>;
/// Grid field in single precision.
pub type Grid32 = minimal::GridField<f32>;
