//! Interpolation of spatially varying point-spread-function fields with
//! sliced optimal transport.
//!
//! PSF stamps are turned into point clouds in (intensity, row, column) space,
//! compared with approximated Wasserstein distances, embedded locally with
//! classical MDS, mapped over the field of view with thin-plate splines, and
//! recombined as approximate Wasserstein barycenters.
//!
//! | Module | Content |
//! |--------|---------|
//! | [`imaging`] | images, point clouds, splatting, moments, quality metrics |
//! | [`transport`] | 1D closed forms, Hungarian, sliced SGD, interpolation, barycenters |
//! | [`embedding`] | pairwise distance matrices and classical MDS |
//! | [`field`] | neighbor selection, thin-plate splines, barycentric weights, the full pipeline |
//! | [`baselines`] | inverse-distance-squared and PCA + thin-plate interpolators |
//! | [`analysis`] | ellipticity directional derivatives and PCA sensitivity |
//! | [`datagen`] | synthetic PSF fields |

pub mod analysis;
pub mod baselines;
pub mod datagen;
pub mod embedding;
mod error;
pub mod field;
pub mod imaging;
mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use imaging::{GroundMetric, Image, PointCloud};
