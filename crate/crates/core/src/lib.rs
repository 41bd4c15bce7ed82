//! Desk-scale simulator and analysis toolkit for correlation-spectroscopy
//! nanoscale NMR with shallow NV centres.
//!
//! Modules, bottom-up:
//! - [`model`]: constants, units and shared domain types
//! - [`pulse_filter`]: XY8 filter functions and depth calibration
//! - [`sampling`]: bandpass under-sampling plans, folding and de-aliasing
//! - [`correlation`]: the T₁-limited correlation signal
//! - [`spectral`]: periodograms, lineshape and envelope fits
//! - [`spin_bath`]: Monte Carlo of diffusing dipoles above the surface
//! - [`chemshift`]: chemical-shift stick spectra and resolvability
//! - [`diffusion`]: diffusion broadening and its fit
//! - [`scenario`]: configuration, validation and figure presets
//! - [`io`]: CSV/JSON readers and writers

pub mod chemshift;
pub mod correlation;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod lsq;
pub mod model;
pub mod pulse_filter;
pub mod sampling;
pub mod scenario;
pub mod spectral;
pub mod spin_bath;

pub use error::{Error, Result};
pub use model::{
    larmor_frequency, FieldConfig, Issue, NucleusSpec, NvSensor, SampleModel, Validate,
};
