use super::{check_weights, displacement_interpolate, sliced_transport, SlicedConfig};
use crate::error::{Error, Result};
use crate::imaging::{GroundMetric, PointCloud};

/// Approximate barycenter with per-step transport diagnostics.
#[derive(Clone, Debug)]
pub struct BarycenterResult {
    pub cloud: PointCloud,
    /// Final discrepancy of each pairwise transport, in fold order.
    pub discrepancies: Vec<usize>,
    pub iterations: Vec<usize>,
}

impl BarycenterResult {
    pub fn max_discrepancy(&self) -> usize {
        self.discrepancies.iter().copied().max().unwrap_or(0)
    }
}

/// Weighted barycenter approximated by a chain of two-cloud geodesic steps.
///
/// Clouds are visited by decreasing weight (ties by index, zero weights
/// skipped). The running barycenter `Z` of accumulated weight `w` moves toward
/// the next cloud `Y_i` to `t = w_i / (w + w_i)` along the displacement
/// interpolation given by `sliced_transport(Z, Y_i)`. Step `k` uses the random
/// stream `k` of `cfg.rng_seed`.
pub fn sequential_barycenter(
    clouds: &[PointCloud],
    w: &[f64],
    metric: GroundMetric,
    cfg: &SlicedConfig,
) -> Result<BarycenterResult> {
    if clouds.len() != w.len() {
        return Err(Error::LengthMismatch(clouds.len(), w.len()));
    }
    check_weights(w)?;
    let n = clouds[0].len();
    if let Some(c) = clouds.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch(n, c.len()));
    }
    let mut order: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));

    let mut z = clouds[order[0]].clone();
    let mut acc = w[order[0]];
    let mut discrepancies = Vec::with_capacity(order.len() - 1);
    let mut iterations = Vec::with_capacity(order.len() - 1);
    for (step, &k) in order.iter().enumerate().skip(1) {
        let r = sliced_transport(&z, &clouds[k], metric, &cfg.for_stream(step as u64))?;
        let t = w[k] / (acc + w[k]);
        z = displacement_interpolate(&z, &r.y_star, t)?;
        acc += w[k];
        discrepancies.push(r.discrepancy);
        iterations.push(r.iterations_used);
    }
    Ok(BarycenterResult {
        cloud: z,
        discrepancies,
        iterations,
    })
}
