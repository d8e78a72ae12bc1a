//! Fully data-driven anisotropic kernel density estimation on `R^d`.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical
//! piece of the toolkit:
//!
//! * [`kernel`]: moment-corrected compact kernels, their pair convolutions
//!   and the majorant kernel used by the empirical majorants.
//! * [`bandwidths`]: the dyadic bandwidth lattice.
//! * [`estimator`]: kernel and pair estimators, empirical majorants and the
//!   point-wise selection rule.
//! * [`oracle`]: every term of the point-wise oracle inequality, computed
//!   against a known density.
//! * [`regimes`]: smoothness aggregates, rate-zone classification and
//!   embedding exponents.
//! * [`densities`]: test densities, lower-bound constructions, packing sets,
//!   samplers and the strong maximal function.
//! * [`risk`]: Monte-Carlo `L_p` risk, rate fitting and the oracle gap.
//!
//! IO, configuration and parallel drivers live in the `anikde` crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` style guards are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric loops index several per-coordinate arrays in lockstep.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod bandwidths;
pub mod densities;
pub mod estimator;
pub mod kernel;
pub mod math;
pub mod oracle;
pub mod regimes;
pub mod risk;
pub mod rng;

mod error;

pub use bandwidths::{Bandwidth, BandwidthGrid, MAX_DIM};
pub use densities::SeparableDensity;

pub use error::{Error, Result};
pub use estimator::{Dataset, Estimator, KappaPolicy, PointwiseFit};

pub use kernel::KernelBank;
