//! Displacement interpolation between column-aligned point clouds.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::imaging::PointCloud;

/// Relative distance to the endpoint at which the constrained path stops.
pub const PATH_REL_TOL: f64 = 1e-10;

fn check_aligned(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

fn frob(a: &PointCloud, b: &PointCloud) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| crate::imaging::sq_dist3(p, q))
        .sum::<f64>()
        .sqrt()
}

/// Point `i` moves on the straight segment from `x[i]` to `y_star[i]`.
///
/// `t = 0` and `t = 1` return exact copies of the endpoints.
pub fn displacement_interpolate(x: &PointCloud, y_star: &PointCloud, t: f64) -> Result<PointCloud> {
    check_aligned(x, y_star)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!(
            "t must lie in [0, 1], got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    if t == 1.0 {
        return Ok(y_star.clone());
    }
    let pts = x
        .points()
        .iter()
        .zip(y_star.points())
        .map(|(p, q)| {
            [
                p[0] + t * (q[0] - p[0]),
                p[1] + t * (q[1] - p[1]),
                p[2] + t * (q[2] - p[2]),
            ]
        })
        .collect();
    Ok(PointCloud::new(pts))
}

/// `1 − ‖x_i − y*‖ / ‖x − y*‖`: elapsed fraction of a straight path.
pub fn time_parameter_linear(x_i: &PointCloud, x: &PointCloud, y_star: &PointCloud) -> Result<f64> {
    check_aligned(x, y_star)?;
    check_aligned(x_i, y_star)?;
    let total = frob(x, y_star);
    if total == 0.0 {
        return Err(Error::Degenerate("path endpoints coincide".into()));
    }
    Ok(1.0 - frob(x_i, y_star) / total)
}

/// Arc-length time of each vertex of a polygonal path.
///
/// `t_i` is one minus the length remaining after vertex `i` over the total
/// length, so the first vertex gets 0 and the last gets 1.
pub fn path_time_parameters(path: &[PointCloud]) -> Result<Vec<f64>> {
    if path.len() < 2 {
        return Err(Error::Degenerate(
            "a path needs at least two vertices".into(),
        ));
    }
    let mut seg = Vec::with_capacity(path.len() - 1);
    for w in path.windows(2) {
        check_aligned(&w[0], &w[1])?;
        seg.push(frob(&w[0], &w[1]));
    }
    let total: f64 = seg.iter().sum();
    if total == 0.0 {
        return Err(Error::Degenerate("path has zero length".into()));
    }
    let mut times = vec![0.0; path.len()];
    let mut remaining = total;
    for (i, s) in seg.iter().enumerate() {
        times[i] = 1.0 - remaining / total;
        remaining -= s;
    }
    times[0] = 0.0;
    times[path.len() - 1] = 1.0;
    Ok(times)
}

/// Polygonal path produced by [`velocity_constrained_interpolate`].
#[derive(Clone, Debug)]
pub struct ConstrainedPath {
    /// Iterates, starting at the source and ending exactly at the target.
    pub snapshots: Vec<PointCloud>,
    /// Arc-length time of each snapshot.
    pub times: Vec<f64>,
    /// Whether the iterates reached the target within [`PATH_REL_TOL`].
    pub converged: bool,
}

impl ConstrainedPath {
    /// Cloud at time `t`, linear between the two bracketing snapshots.
    pub fn at(&self, t: f64) -> Result<PointCloud> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "t must lie in [0, 1], got {t}"
            )));
        }
        let last = self.snapshots.len() - 1;
        if last == 0 || t == 1.0 {
            return Ok(self.snapshots[last].clone());
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, last);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let local = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        displacement_interpolate(
            &self.snapshots[k - 1],
            &self.snapshots[k],
            local.clamp(0.0, 1.0),
        )
    }
}

/// Default iteration cap for a path of length `dist` with step cap `mu_max`.
pub fn default_max_iters(dist: f64, mu_max: f64) -> usize {
    let by_length = 10.0 * (dist / mu_max).ceil();
    let by_rate = 100.0 * (1.0 / mu_max).ceil();
    by_length.max(by_rate).min(1e7) as usize
}

/// Moves `x` toward `y_star` with all points sharing one velocity direction
/// per step.
///
/// Each step projects the residual velocities `V = Y* − X_i` onto the leading
/// eigenvector `u` of the 3×3 matrix `V Vᵀ`, line-searches along the projected
/// field and caps the step at `mu_max`. Iterates until the residual drops
/// below [`PATH_REL_TOL`] of the initial one or `max_iters` is reached.
pub fn velocity_constrained_interpolate(
    x: &PointCloud,
    y_star: &PointCloud,
    mu_max: f64,
    max_iters: Option<usize>,
) -> Result<ConstrainedPath> {
    check_aligned(x, y_star)?;
    if !(mu_max > 0.0 && mu_max.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "mu_max must be positive, got {mu_max}"
        )));
    }
    let d0 = frob(x, y_star);
    if d0 == 0.0 {
        return Ok(ConstrainedPath {
            snapshots: vec![y_star.clone()],
            times: vec![1.0],
            converged: true,
        });
    }
    let cap = max_iters.unwrap_or_else(|| default_max_iters(d0, mu_max));
    let target = y_star.points();
    let mut snapshots = vec![x.clone()];
    let mut cur = x.points().to_vec();
    let mut converged = false;
    for _ in 0..cap {
        let v: Vec<Vector3<f64>> = cur
            .iter()
            .zip(target)
            .map(|(p, q)| Vector3::new(q[0] - p[0], q[1] - p[1], q[2] - p[2]))
            .collect();
        let gram: Matrix3<f64> = v.iter().map(|c| c * c.transpose()).sum();
        let eig = SymmetricEigen::new(gram);
        let mut top = 0;
        for k in 1..3 {
            if eig.eigenvalues[k] > eig.eigenvalues[top] {
                top = k;
            }
        }
        let u: Vector3<f64> = eig.eigenvectors.column(top).into();
        let uu = u.norm_squared();
        // projected field u uᵀ V / ‖u‖², with ⟨V̂, X_i − Y*⟩ = −‖V̂‖²
        let coef: Vec<f64> = v.iter().map(|c| u.dot(c) / uu).collect();
        let vhat_sq: f64 = coef.iter().map(|a| a * a).sum::<f64>() * uu;
        if vhat_sq == 0.0 {
            break;
        }
        let inner: f64 = -coef.iter().zip(&v).map(|(a, c)| a * u.dot(c)).sum::<f64>();
        let mu_opt = -inner / vhat_sq;
        let mu = mu_opt.min(mu_max);
        for (p, a) in cur.iter_mut().zip(&coef) {
            for c in 0..3 {
                p[c] += mu * a * u[c];
            }
        }
        let next = PointCloud::new(cur.clone());
        let residual = frob(&next, y_star);
        snapshots.push(next);
        if residual <= PATH_REL_TOL * d0 {
            converged = true;
            break;
        }
    }
    if snapshots.last() != Some(y_star) {
        snapshots.push(y_star.clone());
    }
    let times = path_time_parameters(&snapshots)?;
    Ok(ConstrainedPath {
        snapshots,
        times,
        converged,
    })
}
