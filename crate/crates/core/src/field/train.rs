use std::collections::HashMap;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{barycentric_coordinates, nearest_neighbors, sq_dist2, FieldSample, ThinPlateSystem};
use crate::baselines::extrinsic_dimension;
use crate::embedding::{mds_embed, pair_stream, select_dimension, DistanceMatrix};
use crate::error::{Error, Result};
use crate::imaging::{cloud_to_image, image_to_cloud, linf_distance, GroundMetric, PointCloud};
use crate::transport::{sequential_barycenter, sliced_transport, SlicedConfig};

/// Share of the total PCA variance that defines the extrinsic dimension when
/// none is configured.
pub const DEFAULT_PCA_ENERGY: f64 = 0.999;

/// Output mass drift above which images are renormalized.
const MASS_DRIFT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainConfig {
    /// Upper bound on the embedding dimension; estimated from the samples'
    /// PCA spectrum when `None`.
    pub d_ext: Option<usize>,
    pub sliced: SlicedConfig,
}

/// One interpolated PSF with its diagnostics.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub sample: FieldSample,
    /// Neighbor sample indices, nearest first.
    pub neighbors: Vec<usize>,
    /// Barycentric weights, aligned with `neighbors`.
    pub weights: Vec<f64>,
    /// Distance from the interpolated embedding point to the weighted one.
    pub residual: f64,
    /// Embedding dimension used.
    pub dim: usize,
    /// Worst assignment discrepancy over the barycenter steps.
    pub max_discrepancy: usize,
    /// `|Σ − 1|` before renormalization.
    pub mass_drift: f64,
    pub clamped_fraction: f64,
}

fn closest_pair(samples: &[FieldSample]) -> Result<(usize, usize)> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d = sq_dist2(samples[i].pos, samples[j].pos);
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    Ok((best.1, best.2))
}

/// Ground metric whose `β` is the largest pixel difference between the two
/// samples closest in the field of view.
pub fn compute_beta(samples: &[FieldSample]) -> Result<GroundMetric> {
    let (i, j) = closest_pair(samples)?;
    let beta = linf_distance(&samples[i].img, &samples[j].img)?;
    if beta == 0.0 {
        return Err(Error::Degenerate(format!(
            "closest samples {i} and {j} have identical images, beta would be 0"
        )));
    }
    GroundMetric::new(beta)
}

/// [`compute_beta`], falling back to the closest pair of distinct images, and
/// to `β = 1` when all images are identical.
pub fn field_metric(samples: &[FieldSample]) -> Result<GroundMetric> {
    match compute_beta(samples) {
        Err(Error::Degenerate(_)) => {}
        other => return other,
    }
    let mut best: Option<(f64, f64)> = None;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let beta = linf_distance(&samples[i].img, &samples[j].img)?;
            let d = sq_dist2(samples[i].pos, samples[j].pos);
            if beta > 0.0 && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, beta));
            }
        }
    }
    GroundMetric::new(best.map_or(1.0, |b| b.1))
}

/// Largest pixel difference between a sample and its nearest neighbor in
/// the field of view, over all samples.
pub fn neighbor_beta(samples: &[FieldSample]) -> Result<GroundMetric> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    let beta = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let j = nearest_neighbors(s.pos, samples, 2)?
                .into_iter()
                .find(|&j| j != k)
                .expect("two neighbors");
            linf_distance(&s.img, &samples[j].img)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if beta == 0.0 {
        return Err(Error::Degenerate(
            "every sample matches its nearest neighbor, beta would be 0".into(),
        ));
    }
    GroundMetric::new(beta)
}

/// How the ground-metric weight is derived from the observed samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BetaRule {
    /// [`compute_beta`]: only the closest pair is in the Euclidean regime.
    #[default]
    ClosestPair,
    /// [`neighbor_beta`]: every nearest-neighbor pair is in the Euclidean
    /// regime.
    NeighborMax,
}

impl BetaRule {
    /// Ground metric for `samples`; identical images fall back as in
    /// [`field_metric`].
    pub fn metric(self, samples: &[FieldSample]) -> Result<GroundMetric> {
        match self {
            BetaRule::ClosestPair => field_metric(samples),
            BetaRule::NeighborMax => match neighbor_beta(samples) {
                Err(Error::Degenerate(_)) => field_metric(samples),
                other => other,
            },
        }
    }
}

impl std::str::FromStr for BetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closest_pair" => Ok(BetaRule::ClosestPair),
            "neighbor_max" => Ok(BetaRule::NeighborMax),
            _ => Err(Error::Parse(format!(
                "unknown beta rule {s:?}, expected closest_pair or neighbor_max"
            ))),
        }
    }
}

impl std::fmt::Display for BetaRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BetaRule::ClosestPair => "closest_pair",
            BetaRule::NeighborMax => "neighbor_max",
        })
    }
}

/// Random stream of the barycenter computed for target `index`; disjoint
/// from the pair streams.
fn target_stream(index: usize) -> u64 {
    (1 << 63) | index as u64
}

/// Transport interpolation over a fixed set of samples, caching pairwise
/// distances across targets.
pub struct TrainInterpolator<'a> {
    samples: &'a [FieldSample],
    clouds: Vec<PointCloud>,
    metric: GroundMetric,
    cfg: SlicedConfig,
    d_ext: usize,
    cache: RwLock<HashMap<(usize, usize), f64>>,
}

impl<'a> TrainInterpolator<'a> {
    pub fn new(
        samples: &'a [FieldSample],
        metric: GroundMetric,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.sliced.validate()?;
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("no samples".into()))?;
        for s in samples {
            first.img.check_same_shape(&s.img)?;
            if s.pos.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite position {:?}",
                    s.pos
                )));
            }
        }
        let d_ext = match cfg.d_ext {
            Some(0) => return Err(Error::InvalidInput("d_ext must be >= 1".into())),
            Some(d) => d,
            None => {
                let imgs: Vec<_> = samples.iter().map(|s| s.img.clone()).collect();
                extrinsic_dimension(&imgs, DEFAULT_PCA_ENERGY)?.max(1)
            }
        };
        Ok(Self {
            samples,
            clouds: samples.iter().map(|s| image_to_cloud(&s.img)).collect(),
            metric,
            cfg: cfg.sliced.clone(),
            d_ext,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn metric(&self) -> GroundMetric {
        self.metric
    }

    pub fn d_ext(&self) -> usize {
        self.d_ext
    }

    /// Number of cached pairwise distances.
    pub fn cached_pairs(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    fn transport_sq(&self, i: usize, j: usize) -> Result<f64> {
        let r = sliced_transport(
            &self.clouds[i],
            &self.clouds[j],
            self.metric,
            &self.cfg.for_stream(pair_stream(i, j)),
        )?;
        Ok(r.distance * r.distance)
    }

    /// Squared approximated distance between samples `i` and `j`.
    pub fn distance_sq(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        let key = (i.min(j), i.max(j));
        if let Some(&d) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(d);
        }
        let d = self.transport_sq(key.0, key.1)?;
        self.cache.write().expect("cache lock").insert(key, d);
        Ok(d)
    }

    /// Fills the cache for all pairs within each neighborhood, in parallel.
    pub fn precompute(&self, neighborhoods: &[Vec<usize>]) -> Result<()> {
        let mut pairs: Vec<(usize, usize)> = {
            let cache = self.cache.read().expect("cache lock");
            neighborhoods
                .iter()
                .flat_map(|nb| {
                    nb.iter().enumerate().flat_map(move |(a, &i)| {
                        nb[a + 1..].iter().map(move |&j| (i.min(j), i.max(j)))
                    })
                })
                .filter(|k| k.0 != k.1 && !cache.contains_key(k))
                .collect()
        };
        pairs.sort_unstable();
        pairs.dedup();
        let values: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| self.transport_sq(i, j))
            .collect::<Result<_>>()?;
        self.cache
            .write()
            .expect("cache lock")
            .extend(pairs.into_iter().zip(values));
        Ok(())
    }

    /// Interpolates the PSF at `target` from its `p` nearest samples; `index`
    /// selects the random stream of the barycenter.
    pub fn interpolate(&self, target: [f64; 2], p: usize, index: usize) -> Result<TrainOutput> {
        self.interpolate_inner(target, p, index)
            .map_err(|e| Error::Target {
                index,
                source: Box::new(e),
            })
    }

    fn interpolate_inner(&self, target: [f64; 2], p: usize, index: usize) -> Result<TrainOutput> {
        if p < 3 {
            return Err(Error::InvalidInput(format!(
                "transport interpolation needs at least 3 neighbors, got {p}"
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite target {target:?}")));
        }
        let nb = nearest_neighbors(target, self.samples, p)?;
        let mut m = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a + 1..p {
                let d = self.distance_sq(nb[a], nb[b])?;
                m[(a, b)] = d;
                m[(b, a)] = d;
            }
        }
        let full = mds_embed(&DistanceMatrix::new(m)?, p)?;
        let dim = select_dimension(&full.eigenvalues, p, self.d_ext).max(1);
        let emb = full.truncated(dim);

        let positions: Vec<[f64; 2]> = nb.iter().map(|&k| self.samples[k].pos).collect();
        let tps = ThinPlateSystem::new(&positions)?;
        let r_u = (0..emb.dim())
            .map(|row| {
                let vals: Vec<f64> = emb.coords.row(row).iter().copied().collect();
                Ok(tps.fit(&vals)?.eval(target))
            })
            .collect::<Result<Vec<f64>>>()?;
        let bw = barycentric_coordinates(&DVector::from_vec(r_u), &emb.coords)?;

        let clouds: Vec<PointCloud> = nb.iter().map(|&k| self.clouds[k].clone()).collect();
        let bary = sequential_barycenter(
            &clouds,
            &bw.w,
            self.metric,
            &self.cfg.for_stream(target_stream(index)),
        )?;
        let (rows, cols) = self.samples[0].img.shape();
        let mut img = cloud_to_image(&bary.cloud, rows, cols)?;
        let mass = img.sum();
        let mass_drift = (mass - 1.0).abs();
        if mass_drift > MASS_DRIFT_TOL {
            img = img.normalized()?;
        }
        Ok(TrainOutput {
            sample: FieldSample::new(target, img),
            neighbors: nb,
            weights: bw.w,
            residual: bw.residual,
            dim,
            max_discrepancy: bary.max_discrepancy(),
            mass_drift,
            clamped_fraction: full.clamped_fraction,
        })
    }

    /// Interpolates every target in parallel; target `k` uses index `k`.
    pub fn interpolate_all(&self, targets: &[[f64; 2]], p: usize) -> Result<Vec<TrainOutput>> {
        let neighborhoods = targets
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                nearest_neighbors(t, self.samples, p).map_err(|e| Error::Target {
                    index: k,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.precompute(&neighborhoods)?;
        targets
            .par_iter()
            .enumerate()
            .map(|(k, &t)| self.interpolate(t, p, k))
            .collect()
    }
}

/// Transport interpolation of `samples` at each target from `p` neighbors.
pub fn train_interpolate(
    samples: &[FieldSample],
    targets: &[[f64; 2]],
    p: usize,
    metric: GroundMetric,
    cfg: &TrainConfig,
) -> Result<Vec<FieldSample>> {
    let interp = TrainInterpolator::new(samples, metric, cfg)?;
    Ok(interp
        .interpolate_all(targets, p)?
        .into_iter()
        .map(|o| o.sample)
        .collect())
}
