//! Orbits of the Markoff-Hurwitz variety `x1^2 + ... + xn^2 = a x1 ... xn`
//! under the Vieta moves: exact and certified log-space arithmetic,
//! descent to orbit roots, pruned enumeration of orbit points in
//! sup-norm balls, the length/coordinate dictionary for one-sided
//! geodesics, and power-law fits of the resulting counts.
//!
//! ```
//! use markoff_core::engine::{count_ball, BallQuery, OrbitSpec};
//!
//! let n = count_ball(&OrbitSpec::markoff(), &BallQuery::radius(100)).unwrap();
//! assert_eq!(n.total, 29);
//! ```

mod error;
pub mod analysis;
pub mod descent;
pub mod engine;
pub mod geodesics;
pub mod numerics;
pub mod threshold;
pub mod variety;

pub use error::{Error, Result};
