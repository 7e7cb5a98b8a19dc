//! Terrestrial laser scanning landslide monitoring.
//!
//! The crate covers the full processing chain from raw station scans to a
//! deformation report:
//!
//! - [`cloud`]: point-cloud model, I/O, exact KD-tree, normals, downsampling
//! - [`registration`]: rigid fitting, ICP, binary shape descriptors, coarse,
//!   multi-view and multi-epoch (hybrid metric) registration
//! - [`ground_filter`]: sub-slope leveling plus cloth simulation, and a
//!   visibility-gradient alternative
//! - [`terrain`]: TIN DTMs, vertex-to-mesh deformation fields, rates, regions
//! - [`analysis`]: shape-angle classification, error budget, reporting
//! - [`synth`]: synthetic scenes with ground truth, benchmarks and the
//!   end-to-end pipeline

pub mod analysis;
pub mod cloud;
pub mod error;
pub mod ground_filter;
pub mod registration;
pub mod synth;
pub mod terrain;

pub use error::{Error, Result};
