//! Comparison interpolators: inverse-distance-squared weighting and
//! component-wise thin-plate interpolation of PCA coefficients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::field::{nearest_neighbors, sq_dist2, FieldSample, ThinPlateSystem};
use crate::imaging::Image;

/// Principal components of a set of images.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    pub mean_image: Image,
    /// Orthonormal as pixel vectors.
    pub components: Vec<Image>,
    /// Sample variance captured by each component, nonincreasing.
    pub variances: Vec<f64>,
}

impl PcaBasis {
    pub fn q(&self) -> usize {
        self.components.len()
    }

    /// Inner products of `img − mean` with each component.
    pub fn project(&self, img: &Image) -> Result<Vec<f64>> {
        self.mean_image.check_same_shape(img)?;
        let centered: Vec<f64> = img
            .pixels()
            .iter()
            .zip(self.mean_image.pixels())
            .map(|(x, m)| x - m)
            .collect();
        Ok(self
            .components
            .iter()
            .map(|c| dot(c.pixels(), &centered))
            .collect())
    }

    /// `mean + Σ c_j P_j`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Image> {
        if coeffs.len() != self.q() {
            return Err(Error::LengthMismatch(self.q(), coeffs.len()));
        }
        let mut out = self.mean_image.clone();
        for (c, p) in coeffs.iter().zip(&self.components) {
            for (o, v) in out.pixels_mut().iter_mut().zip(p.pixels()) {
                *o += c * v;
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shapes(images: &[Image]) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("no images".into()))?;
    images
        .iter()
        .try_for_each(|img| first.check_same_shape(img))
}

/// Mean image and centered pixel matrix (`N × K`).
fn centered_matrix(images: &[Image]) -> (Image, DMatrix<f64>) {
    let k = images.len();
    let first = &images[0];
    let n = first.len();
    let mut mean = vec![0.0; n];
    for img in images {
        for (m, v) in mean.iter_mut().zip(img.pixels()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let x = DMatrix::from_fn(n, k, |r, c| images[c].pixels()[r] - mean[r]);
    let mean = Image::new(first.rows(), first.cols(), mean).expect("shape checked");
    (mean, x)
}

/// Eigenpairs of the `K × K` Gram matrix `XᵀX / (K − 1)`, nonincreasing.
fn gram_spectrum(x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let k = x.ncols();
    let norm = if k > 1 { (k - 1) as f64 } else { 1.0 };
    let mut g = x.transpose() * x / norm;
    g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vecs = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut lead = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[lead].abs() {
            lead = i;
        }
    }
    if v[lead] < 0.0 {
        v.neg_mut();
    }
}

/// Top-`q` principal components of mean-subtracted images, with the sample
/// covariance normalized by `1/(K − 1)`.
///
/// Directions beyond the rank of the data are completed with an orthonormal
/// basis of the remaining space built from the pixel axes in order.
pub fn pca_fit(samples: &[Image], q: usize) -> Result<PcaBasis> {
    check_shapes(samples)?;
    let k = samples.len();
    let n = samples[0].len();
    if q == 0 || q > k.min(n) {
        return Err(Error::InvalidInput(format!(
            "cannot keep {q} components of {k} images with {n} pixels"
        )));
    }
    let (mean_image, x) = centered_matrix(samples);
    let (vals, vecs) = gram_spectrum(&x);
    let top = vals.first().copied().unwrap_or(0.0);
    let norm = if k > 1 { (k - 1) as f64 } else { 1.0 };
    let mut comps: Vec<DVector<f64>> = Vec::with_capacity(q);
    let mut variances = Vec::with_capacity(q);
    for (j, &lam) in vals.iter().enumerate().take(q) {
        if lam <= 1e-12 * top || lam == 0.0 {
            break;
        }
        let mut v = &x * vecs.column(j) / (lam * norm).sqrt();
        // re-orthonormalize against rounding
        for c in &comps {
            let s = c.dot(&v);
            v.axpy(-s, c, 1.0);
        }
        v /= v.norm();
        fix_sign(&mut v);
        comps.push(v);
        variances.push(lam);
    }
    let mut axis = 0;
    while comps.len() < q {
        let mut v = DVector::zeros(n);
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for c in &comps {
                let s = c.dot(&v);
                v.axpy(-s, c, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-6 {
            v /= nv;
            fix_sign(&mut v);
            comps.push(v);
            variances.push(0.0);
        }
    }
    let (rows, cols) = mean_image.shape();
    let components = comps
        .into_iter()
        .map(|v| Image::new(rows, cols, v.iter().copied().collect()).expect("shape checked"))
        .collect();
    Ok(PcaBasis {
        mean_image,
        components,
        variances,
    })
}

pub fn pca_project(basis: &PcaBasis, img: &Image) -> Result<Vec<f64>> {
    basis.project(img)
}

pub fn pca_reconstruct(basis: &PcaBasis, coeffs: &[f64]) -> Result<Image> {
    basis.reconstruct(coeffs)
}

/// Sample variances along all principal directions, nonincreasing; at most
/// `K` entries.
pub fn explained_variance(samples: &[Image]) -> Result<Vec<f64>> {
    check_shapes(samples)?;
    let (_, x) = centered_matrix(samples);
    Ok(gram_spectrum(&x).0)
}

/// Smallest number of principal components capturing at least `energy` of
/// the total variance; `0` when the images are all identical.
pub fn extrinsic_dimension(samples: &[Image], energy: f64) -> Result<usize> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "energy must be in (0, 1], got {energy}"
        )));
    }
    let vals = explained_variance(samples)?;
    let total: f64 = vals.iter().sum();
    if total == 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (j, v) in vals.iter().enumerate() {
        acc += v;
        if acc >= energy * total {
            return Ok(j + 1);
        }
    }
    Ok(vals.len())
}

/// Inverse-distance-squared average of the `p` nearest sample images.
/// A sample at distance zero is returned as is.
pub fn idw_interpolate(samples: &[FieldSample], target: [f64; 2], p: usize) -> Result<Image> {
    let nb = nearest_neighbors(target, samples, p)?;
    let first = &samples[nb[0]];
    if sq_dist2(target, first.pos) == 0.0 {
        return Ok(first.img.clone());
    }
    let w: Vec<f64> = nb
        .iter()
        .map(|&k| 1.0 / sq_dist2(target, samples[k].pos))
        .collect();
    let total: f64 = w.iter().sum();
    let mut out = Image::zeros(first.img.rows(), first.img.cols());
    for (&k, wk) in nb.iter().zip(&w) {
        first.img.check_same_shape(&samples[k].img)?;
        for (o, v) in out.pixels_mut().iter_mut().zip(samples[k].img.pixels()) {
            *o += wk / total * v;
        }
    }
    Ok(out)
}

/// Thin-plate interpolation of each PCA coefficient over the `p` nearest
/// samples, reconstructed through `basis`. No renormalization is applied.
pub fn rbf_interpolate(
    samples: &[FieldSample],
    target: [f64; 2],
    p: usize,
    basis: &PcaBasis,
) -> Result<Image> {
    let nb = nearest_neighbors(target, samples, p)?;
    let positions: Vec<[f64; 2]> = nb.iter().map(|&k| samples[k].pos).collect();
    let system = ThinPlateSystem::new(&positions)?;
    let coeffs: Vec<Vec<f64>> = nb
        .iter()
        .map(|&k| basis.project(&samples[k].img))
        .collect::<Result<_>>()?;
    let at_target: Vec<f64> = (0..basis.q())
        .map(|j| {
            let vals: Vec<f64> = coeffs.iter().map(|c| c[j]).collect();
            Ok(system.fit(&vals)?.eval(target))
        })
        .collect::<Result<_>>()?;
    basis.reconstruct(&at_target)
}
