use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stopping threshold on `‖w − P(w − ∇f/L)‖∞`.
pub const KKT_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 200_000;

/// Simplex-constrained least-squares weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycentricWeights {
    pub w: Vec<f64>,
    /// `‖r_u − Σ w_i r_i‖`.
    pub residual: f64,
}

/// Euclidean projection onto `{w ≥ 0, Σ w = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in s.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

struct Problem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Problem {
    fn objective(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.a * w)) - self.b.dot(w) + self.c
    }

    fn grad(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.a * w - &self.b
    }
}

fn kkt_residual(pb: &Problem, w: &DVector<f64>, lip: f64) -> f64 {
    let g = pb.grad(w);
    let step: Vec<f64> = w.iter().zip(g.iter()).map(|(x, d)| x - d / lip).collect();
    let p = project_simplex(&step);
    w.iter()
        .zip(&p)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Minimizer of `½‖r_u − Σ w_i r_i‖²` over the probability simplex, where the
/// `r_i` are the columns of `neighbors`.
///
/// Accelerated projected gradient from `w = 1/p` with restarts, followed by
/// an exact solve on the detected support when that does not increase the
/// objective.
pub fn barycentric_coordinates(
    r_u: &DVector<f64>,
    neighbors: &DMatrix<f64>,
) -> Result<BarycentricWeights> {
    let (d, p) = neighbors.shape();
    if p == 0 {
        return Err(Error::InvalidInput("no neighbors".into()));
    }
    if r_u.len() != d {
        return Err(Error::LengthMismatch(d, r_u.len()));
    }
    if r_u.iter().chain(neighbors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinates".into()));
    }
    let pb = Problem {
        a: neighbors.transpose() * neighbors,
        b: neighbors.transpose() * r_u,
        c: 0.5 * r_u.norm_squared(),
    };
    let lip = pb.a.symmetric_eigenvalues().max();
    let mut w = DVector::from_element(p, 1.0 / p as f64);
    if lip > 0.0 {
        let mut y = w.clone();
        let mut tk = 1.0f64;
        let mut f_prev = pb.objective(&w);
        for _ in 0..MAX_ITERS {
            let g = pb.grad(&y);
            let step: Vec<f64> = y.iter().zip(g.iter()).map(|(x, d)| x - d / lip).collect();
            let next = DVector::from_vec(project_simplex(&step));
            let f_next = pb.objective(&next);
            if f_next > f_prev {
                // restart momentum
                y = w.clone();
                tk = 1.0;
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            y = &next + (&next - &w) * ((tk - 1.0) / t_next);
            tk = t_next;
            w = next;
            f_prev = f_next;
            if kkt_residual(&pb, &w, lip) <= KKT_TOL {
                break;
            }
        }
        if let Some(polished) = polish(&pb, &w) {
            if pb.objective(&polished) <= pb.objective(&w) {
                w = polished;
            }
        }
    }
    let residual = (r_u - neighbors * &w).norm();
    Ok(BarycentricWeights {
        w: w.iter().copied().collect(),
        residual,
    })
}

/// Equality-constrained least squares restricted to the support of `w`.
fn polish(pb: &Problem, w: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let k = support.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            m[(r, c)] = pb.a[(i, j)];
        }
        m[(r, k)] = 1.0;
        m[(k, r)] = 1.0;
        rhs[r] = pb.b[i];
    }
    rhs[k] = 1.0;
    let sol = m.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) || sol.rows(0, k).iter().any(|&v| v < 0.0) {
        return None;
    }
    let mut out = DVector::zeros(w.len());
    for (r, &i) in support.iter().enumerate() {
        out[i] = sol[r];
    }
    let s = out.sum();
    Some(out / s)
}
