use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};

/// `r² ln r` written in terms of `r²`, continuous at the origin.
fn kernel(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Thin-plate interpolant of one scalar surface.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinPlateModel {
    pub control_points: Vec<[f64; 2]>,
    /// `(a, b, c)` of the affine part `a·x + b·y + c`.
    pub affine: [f64; 3],
    pub kernel_weights: Vec<f64>,
}

impl ThinPlateModel {
    pub fn eval(&self, pos: [f64; 2]) -> f64 {
        let [a, b, c] = self.affine;
        let bend: f64 = self
            .control_points
            .iter()
            .zip(&self.kernel_weights)
            .map(|(u, w)| w * kernel(sq_dist(&pos, u)))
            .sum();
        a * pos[0] + b * pos[1] + c + bend
    }
}

/// Factorized thin-plate system for a fixed set of control points; solves
/// any number of value vectors.
#[derive(Clone, Debug)]
pub struct ThinPlateSystem {
    points: Vec<[f64; 2]>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ThinPlateSystem {
    /// Builds `[K P; Pᵀ 0]` with the side conditions `Σ a_j = Σ a_j x_j = Σ a_j y_j = 0`.
    pub fn new(points: &[[f64; 2]]) -> Result<Self> {
        check_geometry(points)?;
        let p = points.len();
        let mut m = DMatrix::zeros(p + 3, p + 3);
        for j in 0..p {
            for l in 0..p {
                m[(j, l)] = kernel(sq_dist(&points[j], &points[l]));
            }
            let row = [points[j][0], points[j][1], 1.0];
            for (k, v) in row.into_iter().enumerate() {
                m[(j, p + k)] = v;
                m[(p + k, j)] = v;
            }
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(format!(
                "thin-plate system is singular for control points {points:?}"
            )));
        }
        Ok(Self {
            points: points.to_vec(),
            lu,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn fit(&self, values: &[f64]) -> Result<ThinPlateModel> {
        let p = self.points.len();
        if values.len() != p {
            return Err(Error::LengthMismatch(p, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value {v}")));
        }
        let mut rhs = DVector::zeros(p + 3);
        rhs.rows_mut(0, p).copy_from_slice(values);
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("thin-plate system is singular".into()))?;
        Ok(ThinPlateModel {
            control_points: self.points.clone(),
            affine: [sol[p], sol[p + 1], sol[p + 2]],
            kernel_weights: sol.rows(0, p).iter().copied().collect(),
        })
    }
}

/// Rejects fewer than three points, coincident points and collinear layouts.
fn check_geometry(points: &[[f64; 2]]) -> Result<()> {
    let p = points.len();
    if p < 3 {
        return Err(Error::InvalidInput(format!(
            "thin-plate fit needs at least 3 control points, got {p}"
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite control point".into()));
    }
    for j in 0..p {
        for l in j + 1..p {
            if points[j] == points[l] {
                return Err(Error::Singular(format!(
                    "duplicate control points {j} and {l} at {:?}",
                    points[j]
                )));
            }
        }
    }
    let n = p as f64;
    let mx = points.iter().map(|q| q[0]).sum::<f64>() / n;
    let my = points.iter().map(|q| q[1]).sum::<f64>() / n;
    let mut cov = Matrix2::<f64>::zeros();
    for q in points {
        let (dx, dy) = (q[0] - mx, q[1] - my);
        cov[(0, 0)] += dx * dx;
        cov[(0, 1)] += dx * dy;
        cov[(1, 1)] += dy * dy;
    }
    cov[(1, 0)] = cov[(0, 1)];
    let ev = cov.symmetric_eigenvalues();
    let (lo, hi): (f64, f64) = (ev.min(), ev.max());
    if lo <= 1e-12 * hi {
        return Err(Error::Singular(format!(
            "control points are collinear: {points:?}"
        )));
    }
    Ok(())
}

/// Exact interpolant minimizing the bending energy.
pub fn thin_plate_fit(positions: &[[f64; 2]], values: &[f64]) -> Result<ThinPlateModel> {
    ThinPlateSystem::new(positions)?.fit(values)
}

pub fn thin_plate_eval(model: &ThinPlateModel, pos: [f64; 2]) -> f64 {
    model.eval(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, p: usize) -> Vec<[f64; 2]> {
        (0..p)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    }

    #[test]
    fn affine_values_have_no_bending() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 12);
        let f = |q: [f64; 2]| 0.7 * q[0] - 1.3 * q[1] + 0.25;
        let vals: Vec<f64> = pts.iter().map(|&q| f(q)).collect();
        let m = thin_plate_fit(&pts, &vals).unwrap();
        assert!(m.kernel_weights.iter().all(|w| w.abs() < 1e-10));
        assert!((m.affine[0] - 0.7).abs() < 1e-10);
        assert!((m.affine[1] + 1.3).abs() < 1e-10);
        assert!((m.affine[2] - 0.25).abs() < 1e-10);
        for _ in 0..20 {
            let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            assert!((m.eval(q) - f(q)).abs() < 1e-9);
        }
    }

    #[test]
    fn three_points_give_a_plane() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = thin_plate_fit(&pts, &[1.0, 3.0, -2.0]).unwrap();
        assert!(m.kernel_weights.iter().all(|w| w.abs() < 1e-12));
        assert!((m.eval([1.0, 1.0]) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn interpolates_control_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let pts = random_points(&mut rng, 10);
            let vals: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = thin_plate_fit(&pts, &vals).unwrap();
            for (q, v) in pts.iter().zip(&vals) {
                assert!((thin_plate_eval(&m, *q) - v).abs() <= 1e-8 * v.abs().max(1.0));
            }
            // side conditions
            let s0: f64 = m.kernel_weights.iter().sum();
            let sx: f64 = m
                .kernel_weights
                .iter()
                .zip(&pts)
                .map(|(w, q)| w * q[0])
                .sum();
            let sy: f64 = m
                .kernel_weights
                .iter()
                .zip(&pts)
                .map(|(w, q)| w * q[1])
                .sum();
            assert!(s0.abs() < 1e-9 && sx.abs() < 1e-9 && sy.abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_square_centre_is_the_mean() {
        let pts = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let vals = [0.3, -1.2, 2.5, 0.9];
        let m = thin_plate_fit(&pts, &vals).unwrap();
        let mean = vals.iter().sum::<f64>() / 4.0;
        assert!((m.eval([0.0, 0.0]) - mean).abs() < 1e-10);
    }

    #[test]
    fn degenerate_layouts_are_rejected() {
        let line = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(matches!(
            thin_plate_fit(&line, &[0.0; 4]),
            Err(Error::Singular(_))
        ));
        let dup = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            thin_plate_fit(&dup, &[0.0; 4]),
            Err(Error::Singular(_))
        ));
        assert!(thin_plate_fit(&[[0.0, 0.0], [1.0, 0.0]], &[0.0; 2]).is_err());
        let ok = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            thin_plate_fit(&ok, &[0.0; 2]),
            Err(Error::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn one_factorization_serves_many_surfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 8);
        let sys = ThinPlateSystem::new(&pts).unwrap();
        for _ in 0..5 {
            let vals: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(
                sys.fit(&vals).unwrap(),
                thin_plate_fit(&pts, &vals).unwrap()
            );
        }
    }
}
