//! Heisenberg group geometry and numerical Kakeya experiments.
//!
//! The first Heisenberg group is modelled as `ℝ³` with the product
//! `(x1, x2, x3)·(x1', x2', x3') = (x1 + x1', x2 + x2', x3 + x3' + (x1 x2' - x2 x1')/2)`
//! and the Korányi metric `d(x, y) = ‖y⁻¹ x‖`, `‖x‖ = ((x1² + x2²)² + 16 x3²)^(1/4)`.
//!
//! Modules:
//! - [`heis`]: group law, gauge, dilations, rotations.
//! - [`tubes`]: horizontal segments, δ-tubes, direction nets, tube families.
//! - [`projection`]: the vertical projection onto `{x1 = 0}` and its action on tubes.
//! - [`parabola2d`]: planar parabola-arc neighbourhoods and their incidence integrals.
//! - [`grid`]: rasterization, Lᵖ integrals, Monte Carlo volumes, box counting, power-law fits.
//! - [`maxop`]: the discretized Kakeya maximal operator.
//! - [`experiments`]: the seeded scenario registry driving the CLI.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod heis;
pub mod maxop;
pub mod parabola2d;
pub mod projection;
pub mod roots;
pub mod sampling;
pub mod scalar;
pub mod tubes;

pub use error::{Error, Result};
pub use heis::{dilate, group_inv, group_mul, koranyi_dist, koranyi_norm, rotate, HPoint, Rotation2};
pub use scalar::Real;
pub use tubes::{Direction, Tube, TubeFamily};

pub type HPoint64 = HPoint<f64>;
pub type Tube64 = Tube<f64>;
pub type Direction64 = Direction<f64>;
