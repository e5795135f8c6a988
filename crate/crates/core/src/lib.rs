pub mod carleman;
pub mod cgo;
pub mod dn;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod fourier;
pub mod geometry;
pub mod gridfield;
pub mod potential;
pub mod record;
pub mod schedule;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
