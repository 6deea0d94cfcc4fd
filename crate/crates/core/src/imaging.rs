//! Images, their point-cloud representation, and image-domain quality metrics.
//!
//! An `N_l × N_c` image becomes a cloud of `N = N_l·N_c` points in ℝ³: the
//! first coordinate is the pixel intensity, the other two are the pixel's
//! (line, column) position. Going back from a cloud to an image splats each
//! point's intensity over its four nearest lattice sites.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on the unit-mass invariant of PSF images.
pub const UNIT_MASS_TOL: f64 = 1e-9;

/// A row-major grid of real intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if pixels.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} image needs {} pixels, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        if let Some(k) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("pixel {k} is not finite")));
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        Self {
            rows,
            cols,
            pixels: vec![0.0; rows * cols],
        }
    }

    /// Builds an image by evaluating `f(row, col)` on every pixel.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                img.pixels[r * cols + c] = f(r, c);
            }
        }
        img
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.cols + col] = value;
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn norm_l1(&self) -> f64 {
        self.pixels.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels.iter().map(|v| v * factor).collect(),
        }
    }

    /// Returns a copy rescaled to unit total intensity.
    pub fn normalized(&self) -> Result<Image> {
        let s = self.sum();
        if s == 0.0 || !s.is_finite() {
            return Err(Error::Degenerate(
                "cannot normalize a zero-mass image".into(),
            ));
        }
        Ok(self.scaled(1.0 / s))
    }

    pub fn is_unit_mass(&self) -> bool {
        (self.sum() - 1.0).abs() <= UNIT_MASS_TOL
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Renders the image in the text exchange format: a `rows cols` header
    /// followed by one line per image row.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.pixels.len() * 24 + 16);
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for row in self.pixels.chunks(self.cols) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Image> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty image file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad image header {header:?}: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse(format!("bad image header {header:?}")));
        };
        let mut pixels = Vec::with_capacity(rows * cols);
        for (r, line) in lines.enumerate() {
            let before = pixels.len();
            for tok in line.split_whitespace() {
                let v = tok
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {r}: bad value {tok:?}: {e}")))?;
                pixels.push(v);
            }
            if pixels.len() - before != cols {
                return Err(Error::Parse(format!(
                    "row {r} has {} values, expected {cols}",
                    pixels.len() - before
                )));
            }
        }
        if pixels.len() != rows * cols {
            return Err(Error::Parse(format!(
                "expected {rows} rows, found {}",
                pixels.len() / cols.max(1)
            )));
        }
        Image::new(rows, cols, pixels)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Image::from_text(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Euclidean distance between two equally shaped images.
pub fn l2_distance(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Chebyshev (max-abs) distance between two equally shaped images.
pub fn linf_distance(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.pixels
        .iter()
        .zip(&b.pixels)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
}

/// A cloud of points in (intensity, line, column) space, each carrying mass 1/N.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.points
    }

    pub fn into_points(self) -> Vec<[f64; 3]> {
        self.points
    }

    pub fn intensity_sum(&self) -> f64 {
        self.points.iter().map(|p| p[0]).sum()
    }

    /// Frobenius distance between two column-aligned clouds under `metric`.
    pub fn aligned_distance(&self, other: &PointCloud, metric: GroundMetric) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(self
            .points
            .iter()
            .zip(&other.points)
            .map(|(p, q)| metric.cost_sq(p, q))
            .sum::<f64>()
            .sqrt())
    }

    /// Plain Frobenius distance between two column-aligned clouds.
    pub fn frobenius_distance(&self, other: &PointCloud) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(self
            .points
            .iter()
            .zip(&other.points)
            .map(|(p, q)| sq_dist3(p, q))
            .sum::<f64>()
            .sqrt())
    }
}

pub(crate) fn sq_dist3(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let d0 = p[0] - q[0];
    let d1 = p[1] - q[1];
    let d2 = p[2] - q[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Ground cost `C²(p,q) = (p₁−q₁)² + β²((p₂−q₂)² + (p₃−q₃)²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundMetric {
    beta: f64,
}

impl GroundMetric {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Degenerate(format!(
                "ground metric weight must be strictly positive, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cost_sq(&self, p: &[f64; 3], q: &[f64; 3]) -> f64 {
        let di = p[0] - q[0];
        let dr = p[1] - q[1];
        let dc = p[2] - q[2];
        di * di + self.beta * self.beta * (dr * dr + dc * dc)
    }

    /// Maps a cloud to the space where this metric is Euclidean.
    pub fn to_scaled(&self, cloud: &PointCloud) -> Vec<[f64; 3]> {
        cloud
            .points
            .iter()
            .map(|p| [p[0], p[1] * self.beta, p[2] * self.beta])
            .collect()
    }

    pub fn from_scaled(&self, points: &[[f64; 3]]) -> PointCloud {
        let inv = 1.0 / self.beta;
        PointCloud::new(
            points
                .iter()
                .map(|p| [p[0], p[1] * inv, p[2] * inv])
                .collect(),
        )
    }
}

/// Lattice cloud of an image: point `i` (0-based, row-major) is
/// `(x_i, ⌊i/N_c⌋, i mod N_c)`. Spatial coordinates are not scaled by β.
pub fn image_to_cloud(img: &Image) -> PointCloud {
    let cols = img.cols;
    PointCloud::new(
        img.pixels
            .iter()
            .enumerate()
            .map(|(i, &v)| [v, (i / cols) as f64, (i % cols) as f64])
            .collect(),
    )
}

/// Splats a cloud back onto an `rows × cols` grid.
///
/// Each point's intensity is shared among its four nearest lattice sites with
/// weights proportional to the inverse squared distance. A point sitting
/// exactly on a site deposits all of its intensity there.
pub fn cloud_to_image(cloud: &PointCloud, rows: usize, cols: usize) -> Result<Image> {
    if rows == 0 || cols == 0 || rows * cols != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "cloud of {} points cannot fill a {rows}x{cols} image",
            cloud.len()
        )));
    }
    let mut img = Image::zeros(rows, cols);
    // (squared distance, flat index) of candidate sites
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(25);
    for (k, p) in cloud.points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
            return Err(Error::InvalidInput(format!("point {k} is not finite")));
        }
        let (v, r, c) = (p[0], p[1], p[2]);
        let br = (r.floor().max(0.0) as usize).min(rows - 1);
        let bc = (c.floor().max(0.0) as usize).min(cols - 1);
        cand.clear();
        for i in br.saturating_sub(2)..(br + 4).min(rows) {
            for j in bc.saturating_sub(2)..(bc + 4).min(cols) {
                let dr = r - i as f64;
                let dc = c - j as f64;
                cand.push((dr * dr + dc * dc, i * cols + j));
            }
        }
        cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let near = &cand[..cand.len().min(4)];
        let coincident = near.iter().take_while(|s| s.0 == 0.0).count();
        if coincident > 0 {
            let share = v / coincident as f64;
            for s in &near[..coincident] {
                img.pixels[s.1] += share;
            }
            continue;
        }
        let inv_total: f64 = near.iter().map(|s| 1.0 / s.0).sum();
        for s in near {
            img.pixels[s.1] += v * ((1.0 / s.0) / inv_total);
        }
    }
    Ok(img)
}

/// Transport cost of two images under the identity assignment, `‖a − b‖₂`.
pub fn wasserstein_euclidean_floor(a: &Image, b: &Image) -> Result<f64> {
    l2_distance(a, b)
}

/// Intensity-weighted centroid and second-order central moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub centroid: (f64, f64),
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
}

pub fn central_moments(img: &Image) -> Result<Moments> {
    let mass = img.sum();
    if mass == 0.0 {
        return Err(Error::Degenerate("zero-mass image has no centroid".into()));
    }
    let (mut si, mut sj) = (0.0, 0.0);
    for r in 0..img.rows {
        for c in 0..img.cols {
            let v = img.get(r, c);
            si += r as f64 * v;
            sj += c as f64 * v;
        }
    }
    let (ic, jc) = (si / mass, sj / mass);
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for r in 0..img.rows {
        let di = r as f64 - ic;
        for c in 0..img.cols {
            let dj = c as f64 - jc;
            let v = img.get(r, c);
            mu20 += di * di * v;
            mu02 += dj * dj * v;
            mu11 += di * dj * v;
        }
    }
    Ok(Moments {
        mass,
        centroid: (ic, jc),
        mu20,
        mu02,
        mu11,
    })
}

/// Ellipticity vector `(e1, e2)` from second-order central moments.
pub fn ellipticity(img: &Image) -> Result<(f64, f64)> {
    let m = central_moments(img)?;
    let den = m.mu20 + m.mu02;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Degenerate(
            "ellipticity undefined: mu20 + mu02 vanishes".into(),
        ));
    }
    Ok(((m.mu20 - m.mu02) / den, 2.0 * m.mu11 / den))
}

/// Intensity-weighted RMS distance of pixels to the centroid, in pixels.
pub fn size(img: &Image) -> Result<f64> {
    let m = central_moments(img)?;
    Ok(((m.mu20 + m.mu02) / m.mass).max(0.0).sqrt())
}

/// Field-level reconstruction errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldMetrics {
    /// Mean Euclidean error on the ellipticity vector.
    pub e_gamma: f64,
    /// Mean absolute error on the size, in pixels.
    pub e_size: f64,
    /// Mean of per-image normalized squared errors.
    pub nmse: f64,
}

pub fn field_metrics(truth: &[Image], estimate: &[Image]) -> Result<FieldMetrics> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("no images to compare".into()));
    }
    if truth.len() != estimate.len() {
        return Err(Error::LengthMismatch(truth.len(), estimate.len()));
    }
    let (mut eg, mut es, mut nmse) = (0.0, 0.0, 0.0);
    for (t, e) in truth.iter().zip(estimate) {
        t.check_same_shape(e)?;
        let (t1, t2) = ellipticity(t)?;
        let (e1, e2) = ellipticity(e)?;
        eg += ((t1 - e1).powi(2) + (t2 - e2).powi(2)).sqrt();
        es += (size(t)? - size(e)?).abs();
        let norm = t.norm_l2().powi(2);
        if norm == 0.0 {
            return Err(Error::Degenerate("reference image has zero norm".into()));
        }
        nmse += l2_distance(t, e)?.powi(2) / norm;
    }
    let d = truth.len() as f64;
    Ok(FieldMetrics {
        e_gamma: eg / d,
        e_size: es / d,
        nmse: nmse / d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(rows: usize, cols: usize, ci: f64, cj: f64, si: f64, sj: f64, rho: f64) -> Image {
        // rho rotates the axes
        let (s, c) = rho.sin_cos();
        Image::from_fn(rows, cols, |i, j| {
            let di = i as f64 - ci;
            let dj = j as f64 - cj;
            let a = c * di + s * dj;
            let b = -s * di + c * dj;
            (-0.5 * (a * a / (si * si) + b * b / (sj * sj))).exp()
        })
    }

    #[test]
    fn cloud_of_small_images() {
        let img = Image::new(1, 2, vec![0.25, 0.75]).unwrap();
        assert_eq!(
            image_to_cloud(&img).points(),
            &[[0.25, 0.0, 0.0], [0.75, 0.0, 1.0]]
        );
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            image_to_cloud(&img).points(),
            &[
                [1.0, 0.0, 0.0],
                [2.0, 0.0, 1.0],
                [3.0, 1.0, 0.0],
                [4.0, 1.0, 1.0]
            ]
        );
    }

    #[test]
    fn splat_centre_point_spreads_evenly() {
        let mut pts = vec![[0.0, 0.0, 0.0]; 4];
        pts[0] = [1.0, 0.5, 0.5];
        let img = cloud_to_image(&PointCloud::new(pts), 2, 2).unwrap();
        for v in img.pixels() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn splat_rejects_bad_dimensions() {
        let cloud = PointCloud::new(vec![[1.0, 0.0, 0.0]; 3]);
        assert!(matches!(
            cloud_to_image(&cloud, 2, 2),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn splat_weights_follow_inverse_square_distance() {
        // point at (0, 0.25) in a 1x4 row: nearest sites 0,1,2,3 at d² 1/16, 9/16, 49/16, 121/16
        let mut pts = vec![[0.0, 0.0, 0.0]; 4];
        pts[0] = [1.0, 0.0, 0.25];
        let img = cloud_to_image(&PointCloud::new(pts), 1, 4).unwrap();
        let inv = [16.0, 16.0 / 9.0, 16.0 / 49.0, 16.0 / 121.0];
        let tot: f64 = inv.iter().sum();
        for (k, w) in inv.iter().enumerate() {
            assert!((img.pixels()[k] - w / tot).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_of_symmetric_and_delta_images() {
        let img = Image::new(3, 3, vec![0.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let m = central_moments(&img).unwrap();
        assert!((m.centroid.0 - 1.0).abs() < 1e-15 && (m.centroid.1 - 1.0).abs() < 1e-15);
        assert_eq!(m.mu11, 0.0);
        let mut delta = Image::zeros(4, 5);
        delta.set(2, 3, 0.7);
        let m = central_moments(&delta).unwrap();
        assert!(m.mu20.abs() < 1e-24 && m.mu02.abs() < 1e-24 && m.mu11.abs() < 1e-24);
        assert!(size(&delta).unwrap() < 1e-12);
        assert!(matches!(
            central_moments(&Image::zeros(2, 2)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gaussian_moments_match_analytic_values() {
        let img = gaussian(61, 41, 30.0, 20.0, 3.0, 1.5, 0.0);
        let m = central_moments(&img).unwrap();
        assert!((m.mu20 / m.mass - 9.0).abs() < 1e-6);
        assert!((m.mu02 / m.mass - 2.25).abs() < 1e-6);
        let iso = gaussian(41, 41, 20.0, 20.0, 2.0, 2.0, 0.0);
        assert!((size(&iso).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn ellipticity_cases() {
        let iso = gaussian(21, 21, 10.0, 10.0, 2.0, 2.0, 0.0);
        let (e1, e2) = ellipticity(&iso).unwrap();
        assert!(e1.abs() < 1e-12 && e2.abs() < 1e-12);

        let mut line = Image::zeros(5, 1);
        line.set(0, 0, 1.0);
        line.set(4, 0, 1.0);
        let (e1, e2) = ellipticity(&line).unwrap();
        assert_eq!((e1, e2), (1.0, 0.0));

        let rot = gaussian(41, 41, 20.0, 20.0, 3.0, 1.5, std::f64::consts::FRAC_PI_4);
        let (e1, e2) = ellipticity(&rot).unwrap();
        // (σa² − σb²)/(σa² + σb²) = 6.75 / 11.25
        assert!(e1.abs() < 1e-9);
        assert!((e2 - 0.6).abs() < 1e-6);

        let mut delta = Image::zeros(3, 3);
        delta.set(1, 1, 1.0);
        assert!(matches!(ellipticity(&delta), Err(Error::Degenerate(_))));
    }

    #[test]
    fn two_pixel_size_is_one() {
        let img = Image::new(1, 3, vec![1.0, 0.0, 1.0]).unwrap();
        assert!((size(&img).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn euclidean_floor_one_pixel() {
        let a = Image::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut b = a.clone();
        b.set(1, 0, 0.3 - 0.05);
        assert_eq!(wasserstein_euclidean_floor(&a, &a).unwrap(), 0.0);
        assert!((wasserstein_euclidean_floor(&a, &b).unwrap() - 0.05).abs() < 1e-15);
        assert!(wasserstein_euclidean_floor(&a, &Image::zeros(1, 4)).is_err());
    }

    #[test]
    fn identity_assignment_cost_matches_floor() {
        let a = gaussian(5, 4, 2.0, 1.5, 1.0, 1.3, 0.2);
        let b = gaussian(5, 4, 2.2, 1.4, 1.1, 0.9, 0.5);
        let (ca, cb) = (image_to_cloud(&a), image_to_cloud(&b));
        let metric = GroundMetric::new(0.37).unwrap();
        let brute: f64 = ca
            .points()
            .iter()
            .zip(cb.points())
            .map(|(p, q)| metric.cost_sq(p, q))
            .sum::<f64>()
            .sqrt();
        assert!((brute - wasserstein_euclidean_floor(&a, &b).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn field_metrics_cases() {
        let t = vec![gaussian(9, 9, 4.0, 4.0, 1.0, 2.0, 0.3)
            .normalized()
            .unwrap()];
        let m = field_metrics(&t, &t).unwrap();
        assert_eq!((m.e_gamma, m.e_size, m.nmse), (0.0, 0.0, 0.0));
        let doubled = vec![t[0].scaled(2.0)];
        let m = field_metrics(&t, &doubled).unwrap();
        assert!((m.nmse - 1.0).abs() < 1e-14);
        assert!(m.e_gamma < 1e-14 && m.e_size < 1e-12);
        assert!(field_metrics(&[], &[]).is_err());
        assert!(matches!(
            field_metrics(&t, &[]),
            Err(Error::LengthMismatch(1, 0))
        ));
    }

    #[test]
    fn field_metrics_match_direct_formulas() {
        let truth = [
            gaussian(11, 11, 5.0, 5.0, 1.0, 2.0, 0.1),
            gaussian(11, 11, 4.6, 5.2, 1.7, 1.2, 0.9),
            gaussian(11, 11, 5.3, 4.9, 1.3, 1.3, 0.0),
        ];
        let est = [
            gaussian(11, 11, 5.1, 5.0, 1.1, 2.0, 0.2),
            gaussian(11, 11, 4.6, 5.0, 1.5, 1.2, 0.8),
            gaussian(11, 11, 5.0, 4.9, 1.3, 1.4, 0.4),
        ];
        // independent recomputation with explicit double loops
        let raw = |img: &Image| {
            let (mut m, mut si, mut sj) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let v = img.get(i, j);
                    m += v;
                    si += i as f64 * v;
                    sj += j as f64 * v;
                }
            }
            let (ic, jc) = (si / m, sj / m);
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let v = img.get(i, j);
                    a += (i as f64 - ic).powi(2) * v;
                    b += (j as f64 - jc).powi(2) * v;
                    c += (i as f64 - ic) * (j as f64 - jc) * v;
                }
            }
            ((a - b) / (a + b), 2.0 * c / (a + b), ((a + b) / m).sqrt())
        };
        let (mut eg, mut es, mut nm) = (0.0, 0.0, 0.0);
        for (t, e) in truth.iter().zip(&est) {
            let (t1, t2, ts) = raw(t);
            let (e1, e2, esz) = raw(e);
            eg += ((t1 - e1).powi(2) + (t2 - e2).powi(2)).sqrt() / 3.0;
            es += (ts - esz).abs() / 3.0;
            let num: f64 = t
                .pixels()
                .iter()
                .zip(e.pixels())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let den: f64 = t.pixels().iter().map(|a| a * a).sum();
            nm += num / den / 3.0;
        }
        let m = field_metrics(&truth, &est).unwrap();
        assert!((m.e_gamma - eg).abs() < 1e-12);
        assert!((m.e_size - es).abs() < 1e-12);
        assert!((m.nmse - nm).abs() < 1e-12);
    }

    #[test]
    fn text_format_round_trip() {
        let img = gaussian(3, 4, 1.0, 1.5, 0.7, 1.1, 0.3);
        let text = img.to_text();
        assert!(text.starts_with("3 4\n"));
        assert_eq!(Image::from_text(&text).unwrap(), img);
        assert!(Image::from_text("2 2\n1 2\n3\n").is_err());
        assert!(Image::from_text("").is_err());
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(0.0f64..1.0, r * c)
                .prop_map(move |px| Image::new(r, c, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn lattice_round_trip_is_exact(img in arb_image()) {
            let back = cloud_to_image(&image_to_cloud(&img), img.rows(), img.cols()).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn splatting_conserves_intensity(
            pts in proptest::collection::vec((0.0f64..1.0, -1.5f64..5.5, -1.5f64..4.5), 20)
        ) {
            let cloud = PointCloud::new(pts.iter().map(|&(v, r, c)| [v, r, c]).collect());
            let img = cloud_to_image(&cloud, 5, 4).unwrap();
            let s_in: f64 = pts.iter().map(|p| p.0).sum();
            prop_assert!((img.sum() - s_in).abs() <= 1e-12 * s_in.max(1e-300));
        }

        #[test]
        fn shape_metrics_are_scale_invariant(img in arb_image(), k in 0.01f64..100.0) {
            prop_assume!(img.sum() > 1e-3);
            let scaled = img.scaled(k);
            if let (Ok(a), Ok(b)) = (ellipticity(&img), ellipticity(&scaled)) {
                prop_assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
            }
            prop_assert!((size(&img).unwrap() - size(&scaled).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn quarter_turn_symmetrized_image_has_zero_e1(
            px in proptest::collection::vec(1e-3f64..1.0, 25)
        ) {
            // 5x5 grid: quarter turns about the centre keep the lattice
            let img = Image::new(5, 5, px).unwrap();
            let rot = |m: &Image| Image::from_fn(5, 5, |i, j| m.get(4 - j, i));
            let mut sum = img.clone();
            let mut cur = img.clone();
            for _ in 0..3 {
                cur = rot(&cur);
                for (s, r) in sum.pixels_mut().iter_mut().zip(cur.pixels()) {
                    *s += r;
                }
            }
            let (e1, _) = ellipticity(&sum).unwrap();
            prop_assert!(e1.abs() < 1e-10);
        }

        #[test]
        fn floor_is_a_metric(
            a in proptest::collection::vec(-1.0f64..1.0, 12),
            b in proptest::collection::vec(-1.0f64..1.0, 12),
            c in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let (a, b, c) = (
                Image::new(3, 4, a).unwrap(),
                Image::new(3, 4, b).unwrap(),
                Image::new(3, 4, c).unwrap(),
            );
            let ab = wasserstein_euclidean_floor(&a, &b).unwrap();
            prop_assert_eq!(ab, wasserstein_euclidean_floor(&b, &a).unwrap());
            let ac = wasserstein_euclidean_floor(&a, &c).unwrap();
            let cb = wasserstein_euclidean_floor(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }
}
