//! Field interpolation: neighbor selection, thin-plate mapping of embedded
//! coordinates over the field of view, barycentric weights and the complete
//! transport interpolation pipeline.

mod barycentric;
mod manifest;
mod tps;
mod train;

pub use barycentric::{barycentric_coordinates, project_simplex, BarycentricWeights, KKT_TOL};
pub use manifest::{load_samples, read_manifest, write_manifest, ManifestEntry};
pub use tps::{thin_plate_eval, thin_plate_fit, ThinPlateModel, ThinPlateSystem};
pub use train::{
    compute_beta, field_metric, neighbor_beta, train_interpolate, BetaRule, TrainConfig,
    TrainInterpolator, TrainOutput, DEFAULT_PCA_ENERGY,
};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// A PSF observed or estimated at a field position.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub pos: [f64; 2],
    pub img: Image,
}

impl FieldSample {
    pub fn new(pos: [f64; 2], img: Image) -> Self {
        Self { pos, img }
    }
}

pub(crate) fn sq_dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Indices of the `p` samples closest to `target`, nearest first; ties go
/// to the lower index.
pub fn nearest_neighbors(
    target: [f64; 2],
    samples: &[FieldSample],
    p: usize,
) -> Result<Vec<usize>> {
    if p == 0 || p > samples.len() {
        return Err(Error::InvalidInput(format!(
            "cannot pick {p} neighbors among {} samples",
            samples.len()
        )));
    }
    let mut d: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| (sq_dist2(target, s.pos), k))
        .collect();
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if p < d.len() {
        d.select_nth_unstable_by(p - 1, by);
        d.truncate(p);
    }
    d.sort_unstable_by(by);
    Ok(d.into_iter().map(|e| e.1).collect())
}
