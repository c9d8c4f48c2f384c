// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed;
pub mod conesim;
pub mod dist;
pub mod error;
pub mod gmc;
pub mod params;
pub mod quad;
pub mod rng;
pub mod specfn;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use params::{cone_geometry, make_params, Branch, ConeGeometry, Cosmology, LcftParams};
