//! Simulation and analysis of quantum phase imaging with spatially correlated
//! photon pairs.
//!
//! The crate models a degenerate SPDC source whose bi-photon wavefunction
//! factorizes into a narrow phase-matching term on the relative coordinate
//! and a pump-shaped term on the centroid coordinate. A transparent sample in
//! the source near field multiplies the centroid factor by its squared
//! complex transmittance, so coincidence-selected "correlation images"
//! diffract like a coherent beam at the pump wavelength with doubled sample
//! phase. The modules cover:
//!
//! - [`grid`], [`field`]: grids, complex fields, unitary DFTs, Fresnel propagation
//! - [`sample`]: transmittance/phase maps and built-in test targets
//! - [`model`]: pump and phase-matching factors, sample action, joint density
//! - [`events`], [`event_io`]: Monte Carlo event-camera streams and their format
//! - [`coinc`]: coincidence finding, 4D-marginal histograms, shift-and-sum
//! - [`retrieval`]: regularized TIE inversion and Fresnel Gerchberg-Saxton
//! - [`field_io`], [`image`]: binary field format, scalar maps, CSV helpers

pub mod coinc;
pub mod error;
pub mod event_io;
pub mod events;
pub mod fft;
pub mod field;
pub mod field_io;
pub mod grid;
pub mod image;
pub mod model;
pub mod retrieval;
pub mod sample;
pub mod stats;

pub use error::{Error, Result};
pub use field::{fresnel_propagate, ComplexField};
pub use grid::{Grid2D, SpatialFrequencyGrid};
pub use image::{Rect, ScalarImage};
pub use model::{BiphotonFactors, JointDensity, OpticalConfig};
pub use sample::{SampleMode, SampleTransmittance};
