//! Exact simulation of diffusion and jump-diffusion sample paths.
//!
//! The crate simulates finite-dimensional *skeletons* of sample paths of
//!
//! ```text
//! dX_t = alpha(X_t) dt + dW_t (+ jumps),    X_0 = x,  t in [0, T]
//! ```
//!
//! without discretisation error, by retrospective rejection sampling on
//! Brownian path space. A skeleton carries endpoint and interior path values
//! together with certified layer information (almost-sure bands on the path
//! minimum and maximum per sub-interval), which is enough to restore the
//! path at any further finite set of times exactly, and to drive
//! epsilon-strong simulation: monotone upper/lower staircases that enclose
//! the whole path to any tolerance.
//!
//! Module map:
//! - [`series`]: unbiased events from alternating Cauchy sequences (the
//!   engine behind every path-space probability here);
//! - [`brownian`]: elementary exact bridge samplers (interpolation,
//!   constrained minimum/maximum with its time, Bessel bridge, inverse
//!   Gaussian, biased endpoint rejection);
//! - [`model`]: the unit-volatility SDE abstraction, validation, and the
//!   Lamperti reduction from general volatility;
//! - [`layered`]: radial-layer ("Bessel approach") layered Brownian bridges;
//! - [`intersection`]: intersection layers - per-interval min/max bands -
//!   with exact midpoint sampling, dissection and refinement;
//! - [`exact`]: the diffusion exact algorithms (bounded, unbounded,
//!   adaptive) and skeleton restoration;
//! - [`jumps`]: jump-diffusion exact algorithms via Poisson thinning;
//! - [`eps_strong`]: epsilon-strong bounding processes and certified path
//!   functionals;
//! - [`euler`]: Euler-Maruyama reference sampler (approximate, for
//!   validation only);
//! - [`stats`]: the statistical tests used by the validation suites;
//! - [`presets`]: built-in example models and the text config loader;
//! - [`record`]: serialisable skeleton/staircase records.

// `!(a > b)` guards intentionally reject NaN where `a <= b` would not, and
// the quantile coefficients keep their published precision.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod brownian;
pub mod error;
pub mod eps_strong;
pub mod euler;
pub mod exact;
pub mod intersection;
pub mod jumps;
pub mod layered;
pub mod model;
pub mod numeric;
pub mod presets;
pub mod record;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
