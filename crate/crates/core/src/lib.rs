//! Building blocks for an ANN-based maximum power point tracker.
//!
//! The pipeline runs, in order:
//!
//! * [`solar`]: clear-sky irradiance over a day and pyranometer calibration,
//! * [`panel`]: PV module maximum power point and I-V curve,
//! * [`cuk`]: Cuk converter static gain, reflected load and averaged dynamics,
//! * [`dataset`]: the (irradiance, temperature, load) -> duty-cycle dataset,
//! * [`ann`]: a from-scratch multilayer perceptron trained with the delta rule,
//! * [`mppt`]: Perturb & Observe and ANN controllers in a closed-loop day run.
//!
//! Configuration and model files share the line-oriented `key = value` text
//! format implemented in [`kv`].

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ann;
pub mod cuk;
pub mod dataset;
pub mod error;
pub mod fmt;
pub mod kv;
pub mod mppt;
pub mod panel;
pub mod solar;
pub mod stats;

pub use error::{Error, Result};
