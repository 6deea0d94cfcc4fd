//! Sliced-Wasserstein transport between point clouds by stochastic gradient
//! descent, with optional exact pre-matching of a window around the centroids.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{hungarian, Assignment};
use crate::error::{Error, Result};
use crate::imaging::{GroundMetric, PointCloud};
use crate::rng::{derive_seed, rng_from};

/// Relative step length below which an iterate counts as stationary.
pub const STATIONARY_REL_STEP: f64 = 1e-9;
/// Consecutive stationary iterations required to stop.
pub const STATIONARY_STREAK: usize = 3;

/// Parameters of the sliced gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicedConfig {
    /// Projection directions drawn per iteration.
    pub num_directions: usize,
    pub max_iters: usize,
    pub step_size: f64,
    /// Step at iteration `n` is `step_size / n^a`; `0` keeps it constant.
    pub step_decay_exponent: f64,
    pub rng_seed: u64,
    /// `(rows, cols)` of the window matched exactly before the descent.
    pub init_window: Option<(usize, usize)>,
}

impl Default for SlicedConfig {
    fn default() -> Self {
        Self {
            num_directions: 30,
            max_iters: 2000,
            step_size: 2.0,
            step_decay_exponent: 0.0,
            rng_seed: 0,
            init_window: None,
        }
    }
}

impl SlicedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_directions == 0 {
            return Err(Error::InvalidInput("need at least one direction".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        let a = self.step_decay_exponent;
        if !(a == 0.0 || (a > 0.5 && a <= 1.0)) {
            return Err(Error::InvalidInput(format!(
                "step decay exponent must be 0 or in (1/2, 1], got {a}"
            )));
        }
        if let Some((h, w)) = self.init_window {
            if h == 0 || w == 0 {
                return Err(Error::InvalidInput("empty seeding window".into()));
            }
        }
        Ok(())
    }

    /// Same configuration with an independent random stream for `stream`.
    pub fn for_stream(&self, stream: u64) -> Self {
        Self {
            rng_seed: derive_seed(self.rng_seed, stream),
            ..self.clone()
        }
    }
}

/// Outcome of one sliced transport.
#[derive(Clone, Debug)]
pub struct TransportResult {
    /// Target cloud reordered so column `i` is matched to source point `i`.
    /// When the final discrepancy is nonzero this is the last iterate instead.
    pub y_star: PointCloud,
    /// Approximated `W_2`, i.e. `‖X − Y*‖` under the ground metric.
    pub distance: f64,
    /// Final assignment discrepancy `|D|`.
    pub discrepancy: usize,
    pub iterations_used: usize,
    /// The unanimous assignment, when the discrepancy is zero.
    pub assignment: Option<Assignment>,
    /// Discrepancy after each iteration.
    pub discrepancy_trace: Vec<usize>,
}

impl TransportResult {
    pub fn converged(&self) -> bool {
        self.discrepancy == 0
    }
}

/// Number of points whose assignment differs between at least two directions.
///
/// # Panics
///
/// If the assignments do not all have the same length.
pub fn discrepancy_support(assignments: &[Assignment]) -> usize {
    let Some(first) = assignments.first() else {
        return 0;
    };
    assert!(
        assignments.iter().all(|a| a.len() == first.len()),
        "assignments must have equal lengths"
    );
    (0..first.len())
        .filter(|&k| assignments.iter().any(|a| a[k] != first[k]))
        .count()
}

/// Indices of the `h·w` points nearest to an `h × w` pixel window centred on
/// the cloud's intensity-weighted centroid, in ascending order.
///
/// For an image-derived cloud these are exactly the pixels of the window.
pub fn seed_window_indices(cloud: &PointCloud, window: (usize, usize)) -> Result<Vec<usize>> {
    let (h, w) = window;
    let pts = cloud.points();
    if h == 0 || w == 0 || h * w > pts.len() {
        return Err(Error::InvalidInput(format!(
            "window {h}x{w} does not fit a cloud of {} points",
            pts.len()
        )));
    }
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let (mut mass, mut sr, mut sc) = (0.0, 0.0, 0.0);
    for p in pts {
        rmin = rmin.min(p[1]);
        rmax = rmax.max(p[1]);
        cmin = cmin.min(p[2]);
        cmax = cmax.max(p[2]);
        let m = p[0].max(0.0);
        mass += m;
        sr += m * p[1];
        sc += m * p[2];
    }
    let (rc, cc) = if mass > 0.0 {
        (sr / mass, sc / mass)
    } else {
        let n = pts.len() as f64;
        (
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
            pts.iter().map(|p| p[2]).sum::<f64>() / n,
        )
    };
    let (rlo, rhi, clo, chi) = (rmin.round(), rmax.round(), cmin.round(), cmax.round());
    if h as f64 > rhi - rlo + 1.0 || w as f64 > chi - clo + 1.0 {
        return Err(Error::InvalidInput(format!(
            "window {h}x{w} is larger than the image ({}x{})",
            rhi - rlo + 1.0,
            chi - clo + 1.0
        )));
    }
    let r0 = (rc - (h as f64 - 1.0) / 2.0)
        .round()
        .clamp(rlo, rhi - h as f64 + 1.0);
    let c0 = (cc - (w as f64 - 1.0) / 2.0)
        .round()
        .clamp(clo, chi - w as f64 + 1.0);
    let (r1, c1) = (r0 + h as f64 - 1.0, c0 + w as f64 - 1.0);
    let mut d: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let dr = (r0 - p[1]).max(p[1] - r1).max(0.0);
            let dc = (c0 - p[2]).max(p[2] - c1).max(0.0);
            (dr * dr + dc * dc, k)
        })
        .collect();
    d.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut idx: Vec<usize> = d[..h * w].iter().map(|e| e.1).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Initial iterate for the descent: the window points of `x` are replaced by
/// their exact optimal partners among the window points of `y`.
pub fn hungarian_seed(
    x: &PointCloud,
    y: &PointCloud,
    metric: GroundMetric,
    window: (usize, usize),
) -> Result<PointCloud> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let ind_x = seed_window_indices(x, window)?;
    let ind_y = seed_window_indices(y, window)?;
    let (xp, yp) = (x.points(), y.points());
    let cost = DMatrix::from_fn(ind_x.len(), ind_y.len(), |i, j| {
        metric.cost_sq(&xp[ind_x[i]], &yp[ind_y[j]])
    });
    let sigma = hungarian(&cost)?;
    let mut x0 = x.clone();
    let pts = x0.points_mut();
    for (i, &ix) in ind_x.iter().enumerate() {
        pts[ix] = yp[ind_y[sigma[i]]];
    }
    Ok(x0)
}

fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let u: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if n > 1e-12 {
            return [u[0] / n, u[1] / n, u[2] / n];
        }
    }
}

fn dot3(u: &[f64; 3], p: &[f64; 3]) -> f64 {
    u[0] * p[0] + u[1] * p[1] + u[2] * p[2]
}

/// Maps `f64` to `u64` so that integer order is `f64::total_cmp` order.
fn order_key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Indices of `vals` in `(value, index)` order, written to `items[..].1`.
///
/// Stable radix sort on the high 32 bits of the order key, then an insertion
/// pass that orders runs sharing those bits by full value.
fn sort_projections(vals: &[f64], items: &mut Vec<(u32, u32)>, buf: &mut Vec<(u32, u32)>) {
    items.clear();
    items.extend(
        vals.iter()
            .enumerate()
            .map(|(i, &v)| ((order_key(v) >> 32) as u32, i as u32)),
    );
    let n = items.len();
    let mut hist = [[0usize; 256]; 4];
    for &(k, _) in items.iter() {
        for (d, h) in hist.iter_mut().enumerate() {
            h[((k >> (8 * d)) & 0xff) as usize] += 1;
        }
    }
    buf.resize(n, (0, 0));
    for (d, h) in hist.iter_mut().enumerate() {
        if h.contains(&n) {
            continue;
        }
        let mut acc = 0;
        for c in h.iter_mut() {
            let k = *c;
            *c = acc;
            acc += k;
        }
        for &it in items.iter() {
            let slot = &mut h[((it.0 >> (8 * d)) & 0xff) as usize];
            buf[*slot] = it;
            *slot += 1;
        }
        std::mem::swap(items, buf);
    }
    for i in 1..n {
        let cur = items[i];
        if items[i - 1].0 != cur.0 {
            continue;
        }
        let v = vals[cur.1 as usize];
        let mut j = i;
        while j > 0
            && items[j - 1].0 == cur.0
            && vals[items[j - 1].1 as usize]
                .total_cmp(&v)
                .then(items[j - 1].1.cmp(&cur.1))
                .is_gt()
        {
            items[j] = items[j - 1];
            j -= 1;
        }
        items[j] = cur;
    }
}

/// Approximates the optimal assignment between `x` and `y` under `metric` by
/// descending `Z ↦ SW₂(Z, Y)²` from `x` (or from its Hungarian seed).
///
/// Each iteration draws fresh random directions, matches the sorted
/// projections of the iterate and of `y`, and steps along the average of the
/// per-direction gradients `u uᵀ(Z − Y∘σ_u)`. The descent stops once all
/// directions agree on the assignment and the iterate has been stationary for
/// a few iterations, or after `max_iters`.
pub fn sliced_transport(
    x: &PointCloud,
    y: &PointCloud,
    metric: GroundMetric,
    cfg: &SlicedConfig,
) -> Result<TransportResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    cfg.validate()?;
    let n = x.len();
    let ys = metric.to_scaled(y);
    let mut z = match cfg.init_window {
        Some(win) => metric.to_scaled(&hungarian_seed(x, y, metric, win)?),
        None => metric.to_scaled(x),
    };
    if z.iter().flatten().any(|v| !v.is_finite()) || ys.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "clouds must have finite coordinates".into(),
        ));
    }
    if z == ys {
        return Ok(TransportResult {
            y_star: y.clone(),
            distance: x.aligned_distance(y, metric)?,
            discrepancy: 0,
            iterations_used: 0,
            assignment: Some(Assignment::identity(n)),
            discrepancy_trace: Vec::new(),
        });
    }

    let mut rng = rng_from(cfg.rng_seed);
    let z0_norm = z.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let tol = STATIONARY_REL_STEP * z0_norm;
    let k = cfg.num_directions;

    let mut pz: Vec<(u32, u32)> = Vec::with_capacity(n);
    let mut py: Vec<(u32, u32)> = Vec::with_capacity(n);
    let mut buf: Vec<(u32, u32)> = Vec::with_capacity(n);
    let mut proj_z = vec![0.0; n];
    let mut proj_y = vec![0.0; n];
    let mut sigma_ref = vec![0u32; n];
    let mut disagree = vec![false; n];
    let mut grad = vec![[0.0f64; 3]; n];
    let mut trace = Vec::new();
    let mut streak = 0;
    let mut disc = n;

    for it in 1..=cfg.max_iters {
        grad.iter_mut().for_each(|g| *g = [0.0; 3]);
        disagree.iter_mut().for_each(|d| *d = false);
        for d in 0..k {
            let u = random_direction(&mut rng);
            for (v, p) in proj_z.iter_mut().zip(&z) {
                *v = dot3(&u, p);
            }
            for (v, p) in proj_y.iter_mut().zip(&ys) {
                *v = dot3(&u, p);
            }
            sort_projections(&proj_z, &mut pz, &mut buf);
            sort_projections(&proj_y, &mut py, &mut buf);
            for (a, b) in pz.iter().zip(&py) {
                let i = a.1 as usize;
                let r = proj_z[i] - proj_y[b.1 as usize];
                let g = &mut grad[i];
                g[0] += u[0] * r;
                g[1] += u[1] * r;
                g[2] += u[2] * r;
                if d == 0 {
                    sigma_ref[i] = b.1;
                } else if sigma_ref[i] != b.1 {
                    disagree[i] = true;
                }
            }
        }
        disc = disagree.iter().filter(|&&d| d).count();
        let eta = if cfg.step_decay_exponent == 0.0 {
            cfg.step_size
        } else {
            cfg.step_size / (it as f64).powf(cfg.step_decay_exponent)
        } / k as f64;
        let mut step_sq = 0.0;
        for (p, g) in z.iter_mut().zip(&grad) {
            for c in 0..3 {
                let s = eta * g[c];
                p[c] -= s;
                step_sq += s * s;
            }
        }
        trace.push(disc);
        if disc == 0 && step_sq.sqrt() <= tol {
            streak += 1;
            if streak >= STATIONARY_STREAK {
                break;
            }
        } else {
            streak = 0;
        }
    }

    let iterations_used = trace.len();
    let (y_star, assignment) = if disc == 0 {
        let yp = y.points();
        let sigma: Vec<usize> = sigma_ref.iter().map(|&j| j as usize).collect();
        let relabeled = PointCloud::new(sigma.iter().map(|&j| yp[j]).collect());
        (relabeled, Some(Assignment::from_vec_unchecked(sigma)))
    } else {
        (metric.from_scaled(&z), None)
    };
    let distance = x.aligned_distance(&y_star, metric)?;
    Ok(TransportResult {
        y_star,
        distance,
        discrepancy: disc,
        iterations_used,
        assignment,
        discrepancy_trace: trace,
    })
}
