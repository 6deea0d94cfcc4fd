//! Ellipticity derivatives along image-space directions and the sensitivity
//! of ellipticity to principal components.

use rayon::prelude::*;

use crate::baselines::PcaBasis;
use crate::error::{Error, Result};
use crate::imaging::Image;

/// Coordinate matrices `U_1 … U_6` with 1-based row `k` and column `l`:
/// `k`, `l`, `1`, `k² + l²`, `k² − l²`, `kl`.
pub fn ellipticity_inner_forms(rows: usize, cols: usize) -> [Image; 6] {
    let k = |i: usize| (i + 1) as f64;
    [
        Image::from_fn(rows, cols, |i, _| k(i)),
        Image::from_fn(rows, cols, |_, j| k(j)),
        Image::from_fn(rows, cols, |_, _| 1.0),
        Image::from_fn(rows, cols, |i, j| k(i) * k(i) + k(j) * k(j)),
        Image::from_fn(rows, cols, |i, j| k(i) * k(i) - k(j) * k(j)),
        Image::from_fn(rows, cols, |i, j| k(i) * k(j)),
    ]
}

/// `<U_m, x>` for `m = 1 … 6`, computed in one pass.
fn inner_products(x: &Image) -> [f64; 6] {
    let mut s = [0.0; 6];
    for r in 0..x.rows() {
        let k = (r + 1) as f64;
        for c in 0..x.cols() {
            let l = (c + 1) as f64;
            let v = x.get(r, c);
            s[0] += k * v;
            s[1] += l * v;
            s[2] += v;
            s[3] += (k * k + l * l) * v;
            s[4] += (k * k - l * l) * v;
            s[5] += k * l * v;
        }
    }
    s
}

/// Ellipticity written with the inner products `<U_m, x>`.
pub fn ellipticity_from_forms(img: &Image) -> Result<(f64, f64)> {
    let [u1, u2, u3, u4, u5, u6] = inner_products(img);
    let den = u4 * u3 - u1 * u1 - u2 * u2;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Degenerate("ellipticity denominator vanishes".into()));
    }
    Ok((
        (u5 * u3 - u1 * u1 + u2 * u2) / den,
        2.0 * (u6 * u3 - u1 * u2) / den,
    ))
}

/// `(d e_1/dt, d e_2/dt)` of `img + t·direction`, evaluated at `t`.
pub fn ellipticity_directional_derivative(
    img: &Image,
    direction: &Image,
    t: f64,
) -> Result<(f64, f64)> {
    img.check_same_shape(direction)?;
    let [x1, x2, x3, x4, x5, x6] = inner_products(img);
    let [p1, p2, p3, p4, p5, p6] = inner_products(direction);
    let (y1, y2, y3, y4, y5, y6) = (
        x1 + t * p1,
        x2 + t * p2,
        x3 + t * p3,
        x4 + t * p4,
        x5 + t * p5,
        x6 + t * p6,
    );
    let c_t = y4 * y3 - y1 * y1 - y2 * y2;
    if c_t == 0.0 || !c_t.is_finite() {
        return Err(Error::Degenerate(format!(
            "derivative denominator vanishes at t = {t}"
        )));
    }
    let a1 = x5 * p3 + x3 * p5 - 2.0 * (x1 * p1 - x2 * p2);
    let a2 = 2.0 * (p5 * p3 - p1 * p1 + p2 * p2);
    let b1 = 2.0 * (x6 * p3 + x3 * p6 - x1 * p2 - x2 * p1);
    let b2 = 4.0 * (p6 * p3 - p2 * p1);
    let d1 = x4 * p3 + x3 * p4 - 2.0 * (x1 * p1 + x2 * p2);
    let d2 = 2.0 * (p4 * p3 - p1 * p1 - p2 * p2);
    let e1 = (y5 * y3 - y1 * y1 + y2 * y2) / c_t;
    let e2 = 2.0 * (y6 * y3 - y1 * y2) / c_t;
    let dd = (d1 + d2 * t) / c_t;
    Ok(((a1 + a2 * t) / c_t - e1 * dd, (b1 + b2 * t) / c_t - e2 * dd))
}

/// Sensitivity of both ellipticity components to one principal component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentSensitivity {
    pub v_e1: f64,
    pub v_e2: f64,
    /// Standard deviation of the projections `<X_i, P_j>` over the set.
    pub disp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub per_component: Vec<ComponentSensitivity>,
}

/// Population standard deviation; exactly zero for constant input.
fn std_dev(v: &[f64]) -> f64 {
    if v.iter().all(|x| *x == v[0]) {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// For each component `P_j`: `disp_j / n · Σ_i |d e_k(X_i + t P_j)/dt (0)|`
/// over the `n` images `X_i`.
pub fn sensitivity(all_psfs: &[Image], basis: &PcaBasis) -> Result<SensitivityReport> {
    if all_psfs.is_empty() {
        return Err(Error::InvalidInput("no images".into()));
    }
    let n = all_psfs.len() as f64;
    let per_component = basis
        .components
        .par_iter()
        .map(|p| {
            let proj: Vec<f64> = all_psfs
                .iter()
                .map(|x| {
                    x.check_same_shape(p)?;
                    Ok(x.pixels().iter().zip(p.pixels()).map(|(a, b)| a * b).sum())
                })
                .collect::<Result<_>>()?;
            let disp = std_dev(&proj);
            let (mut s1, mut s2) = (0.0, 0.0);
            for x in all_psfs {
                let (d1, d2) = ellipticity_directional_derivative(x, p, 0.0)?;
                s1 += d1.abs();
                s2 += d2.abs();
            }
            Ok(ComponentSensitivity {
                v_e1: disp / n * s1,
                v_e2: disp / n * s2,
                disp,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityReport { per_component })
}
