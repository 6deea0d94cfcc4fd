use nalgebra::DMatrix;

use super::Assignment;
use crate::error::{Error, Result};

/// Exact minimum-cost perfect matching on a square cost matrix.
///
/// Shortest-augmenting-path form of the Hungarian method with row and column
/// potentials; `O(n³)`. Row `i` is matched to column `sigma[i]`.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Assignment> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "assignment needs a square cost matrix, got {}x{}",
            n,
            cost.ncols()
        )));
    }
    if let Some(v) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite cost {v}")));
    }
    // 1-based: column 0 is the virtual source of each augmentation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[row_of[j] - 1] = j - 1;
    }
    Ok(Assignment::from_vec_unchecked(sigma))
}
