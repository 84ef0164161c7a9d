//! Discrete harmonic-analysis toolkit for Rubio de Francia type square
//! functions.
//!
//! Everything lives on the torus `[0, 1)` sampled on `N = 2^n` cells. The
//! Walsh side is exact (transforms are signed sums), the trigonometric side
//! is modelled with the DFT. On top of the transforms sit the balayage and
//! stopping-time machinery that turns Carleson sequences into sparse
//! families, Muckenhoupt characteristics, and the radial-weight checks.

pub mod dyadic;
pub mod error;
pub mod fourier;
pub mod radial;
pub mod rng;
pub mod signal;
pub mod sparse;
pub mod stats;
pub mod walsh;
pub mod weights;

pub use error::{Error, Result};
