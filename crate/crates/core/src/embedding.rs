//! Pairwise transport distances and classical multidimensional scaling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{GroundMetric, PointCloud};
use crate::transport::{sliced_transport, SlicedConfig};

/// Eigenvalues at or below this fraction of the largest count as zero.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Symmetric matrix of squared distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    m: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Symmetrizes `m` by averaging it with its transpose and zeroes the diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "distance matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "squared distances must be finite and nonnegative, got {v}"
            )));
        }
        let mut s = (&m + m.transpose()) * 0.5;
        s.fill_diagonal(0.0);
        Ok(Self { m: s })
    }

    pub fn len(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }
}

/// Random-stream id of the transport between samples `i` and `j`; symmetric.
pub fn pair_stream(i: usize, j: usize) -> u64 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    ((a as u64) << 32) | b as u64
}

/// Squared sliced-transport distances over the upper triangle, in parallel.
/// Pair `(i, j)` uses the random stream [`pair_stream`]`(i, j)`.
pub fn pairwise_distance_matrix(
    clouds: &[PointCloud],
    metric: GroundMetric,
    cfg: &SlicedConfig,
) -> Result<DistanceMatrix> {
    let p = clouds.len();
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two clouds, got {p}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .collect();
    let d: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            sliced_transport(
                &clouds[i],
                &clouds[j],
                metric,
                &cfg.for_stream(pair_stream(i, j)),
            )
            .map(|r| r.distance * r.distance)
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(p, p);
    for (&(i, j), v) in pairs.iter().zip(d) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    DistanceMatrix::new(m)
}

/// `I − 𝟙𝟙ᵀ/p`.
pub fn centering_matrix(p: usize) -> DMatrix<f64> {
    let f = 1.0 / p as f64;
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 - f } else { -f })
}

/// Local Euclidean coordinates of `p` samples.
#[derive(Clone, Debug)]
pub struct Embedding {
    /// `d × p`, one column per sample.
    pub coords: DMatrix<f64>,
    /// All `p` Gram eigenvalues, nonincreasing, before clamping.
    pub eigenvalues: Vec<f64>,
    /// `Σ|λ₋| / Σ|λ|`: share of the spectrum lost to clamping negatives.
    pub clamped_fraction: f64,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.coords.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.coords.ncols()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.coords.column(i).into_owned()
    }

    /// The leading `d` coordinates (at least one row is kept).
    pub fn truncated(&self, d: usize) -> Embedding {
        let d = d.clamp(1, self.dim());
        Embedding {
            coords: self.coords.rows(0, d).into_owned(),
            eigenvalues: self.eigenvalues.clone(),
            clamped_fraction: self.clamped_fraction,
        }
    }
}

/// Classical MDS: eigendecomposition of `−½ C M C`.
///
/// Keeps the top `min(d_max, rank)` eigenpairs. Each eigenvector's entry of
/// largest magnitude is made positive. A matrix without positive spectrum
/// yields a one-dimensional zero embedding.
pub fn mds_embed(dist: &DistanceMatrix, d_max: usize) -> Result<Embedding> {
    let p = dist.len();
    if p == 0 {
        return Err(Error::InvalidInput("empty distance matrix".into()));
    }
    if d_max == 0 {
        return Err(Error::InvalidInput(
            "embedding dimension must be >= 1".into(),
        ));
    }
    let c = centering_matrix(p);
    let mut g = &c * dist.as_matrix() * &c * -0.5;
    g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let abs_total: f64 = eigenvalues.iter().map(|l| l.abs()).sum();
    let neg: f64 = eigenvalues.iter().filter(|l| **l < 0.0).map(|l| -l).sum();
    let clamped_fraction = if abs_total > 0.0 {
        neg / abs_total
    } else {
        0.0
    };

    let d = numerical_rank(&eigenvalues).min(d_max);
    if d == 0 {
        return Ok(Embedding {
            coords: DMatrix::zeros(1, p),
            eigenvalues,
            clamped_fraction,
        });
    }
    let mut coords = DMatrix::zeros(d, p);
    for (row, &k) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut lead = 0;
        for i in 1..p {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        let s = eigenvalues[row].max(0.0).sqrt() * sign;
        for i in 0..p {
            coords[(row, i)] = s * v[i];
        }
    }
    Ok(Embedding {
        coords,
        eigenvalues,
        clamped_fraction,
    })
}

fn numerical_rank(eigenvalues: &[f64]) -> usize {
    match eigenvalues.first() {
        Some(&top) if top > 0.0 => eigenvalues
            .iter()
            .filter(|&&l| l > RANK_REL_TOL * top)
            .count(),
        _ => 0,
    }
}

/// `min(p, d_ext)` truncated to the numerical rank of a nonincreasing spectrum.
pub fn select_dimension(eigenvalues: &[f64], p: usize, d_ext: usize) -> usize {
    p.min(d_ext).min(numerical_rank(eigenvalues))
}
