//! Closed-form optimal transport on the real line.

use super::{check_weights, Assignment};
use crate::error::{Error, Result};

/// Indices that sort `x` ascending; ties keep index order.
pub fn sorting_permutation(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    idx
}

/// Optimal 1D assignment: the `k`-th smallest `x` goes to the `k`-th smallest `y`.
pub fn assignment_1d(x: &[f64], y: &[f64]) -> Result<Assignment> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let sx = sorting_permutation(x);
    let sy = sorting_permutation(y);
    let mut sigma = vec![0; x.len()];
    for (a, b) in sx.into_iter().zip(sy) {
        sigma[a] = b;
    }
    Ok(Assignment::from_vec_unchecked(sigma))
}

/// `W_p` between the uniform measures on `x` and `y`.
pub fn wasserstein_1d(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "exponent must be >= 1, got {p}"
        )));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let s: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b).abs().powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// `W_2` barycenter of 1D uniform measures: weighted average of sorted supports.
pub fn barycenter_1d<S: AsRef<[f64]>>(xs: &[S], w: &[f64]) -> Result<Vec<f64>> {
    if xs.len() != w.len() {
        return Err(Error::LengthMismatch(xs.len(), w.len()));
    }
    check_weights(w)?;
    let n = xs[0].as_ref().len();
    let mut out = vec![0.0; n];
    for (x, &wk) in xs.iter().zip(w) {
        let x = x.as_ref();
        if x.len() != n {
            return Err(Error::LengthMismatch(n, x.len()));
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        for (o, v) in out.iter_mut().zip(sorted) {
            *o += wk * v;
        }
    }
    Ok(out)
}
