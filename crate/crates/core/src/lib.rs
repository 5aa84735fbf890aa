#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod constants;
pub mod dsp;
pub mod error;
pub mod io;
pub mod psf;
pub mod runner;
pub mod scan;
pub mod snr_model;
pub mod spectra;

pub use error::{Error, Result};
