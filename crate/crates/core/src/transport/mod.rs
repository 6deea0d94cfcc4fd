//! Optimal-transport machinery between equal-size point clouds.
//!
//! - closed-form 1D assignment, distance and barycenter;
//! - exact assignment with the Hungarian algorithm;
//! - sliced-Wasserstein stochastic gradient descent with Hungarian seeding;
//! - straight and velocity-constrained displacement interpolation;
//! - sequential two-cloud approximation of multi-cloud barycenters.

mod barycenter;
mod hungarian;
mod interp;
mod one_d;
mod sliced;

pub use barycenter::{sequential_barycenter, BarycenterResult};
pub use hungarian::hungarian;
pub use interp::{
    displacement_interpolate, path_time_parameters, time_parameter_linear,
    velocity_constrained_interpolate, ConstrainedPath,
};
pub use one_d::{assignment_1d, barycenter_1d, sorting_permutation, wasserstein_1d};
pub use sliced::{
    discrepancy_support, hungarian_seed, seed_window_indices, sliced_transport, SlicedConfig,
    TransportResult,
};

use crate::error::{Error, Result};

/// Tolerance on the unit sum of barycentric weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A permutation pairing source point `i` with target point `sigma[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    /// Validates that `sigma` is a bijection of `0..sigma.len()`.
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let n = sigma.len();
        let mut seen = vec![false; n];
        for &s in &sigma {
            if s >= n || seen[s] {
                return Err(Error::InvalidInput(format!(
                    "not a permutation of 0..{n}: entry {s}"
                )));
            }
            seen[s] = true;
        }
        Ok(Self(sigma))
    }

    pub(crate) fn from_vec_unchecked(sigma: Vec<usize>) -> Self {
        debug_assert!(Assignment::new(sigma.clone()).is_ok());
        Self(sigma)
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &s)| i == s)
    }

    pub fn inverse(&self) -> Assignment {
        let mut inv = vec![0; self.0.len()];
        for (i, &s) in self.0.iter().enumerate() {
            inv[s] = i;
        }
        Assignment(inv)
    }
}

impl std::ops::Index<usize> for Assignment {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

pub(crate) fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidWeights("no weights".into()));
    }
    if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidWeights(format!(
            "weights must be finite and nonnegative, got {bad}"
        )));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}
