//! Dense least squares by Householder QR.

use crate::error::{Error, Result};

/// Size, relative to the largest column norm, below which a diagonal entry
/// of R counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Solve `min ||A b - y||` for a row-major `rows x cols` matrix `a`.
///
/// The factorisation is applied directly to `A`; the normal equations are
/// never formed. Fails with [`Error::RankDeficient`] when a column is, to
/// working precision, a combination of the previous ones.
pub fn lstsq(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.len(), rows * cols, "matrix storage does not match its shape");
    assert_eq!(y.len(), rows, "right-hand side length does not match rows");
    if rows < cols || cols == 0 {
        return Err(Error::RankDeficient { rows, cols });
    }
    // column-major working copy
    let mut q: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a[i * cols + j]).collect()).collect();
    let max_norm = q.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let mut rhs = y.to_vec();
    let mut diag = vec![0.0; cols];

    for k in 0..cols {
        let (done, rest) = q.split_at_mut(k + 1);
        let v = &mut done[k][k..];
        let alpha = {
            let nrm = norm(v);
            if v[0] > 0.0 {
                -nrm
            } else {
                nrm
            }
        };
        if max_norm == 0.0 || alpha.abs() <= RANK_TOL * max_norm {
            return Err(Error::RankDeficient { rows, cols });
        }
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        for col in rest.iter_mut() {
            reflect(v, vtv, &mut col[k..]);
        }
        reflect(v, vtv, &mut rhs[k..]);
        diag[k] = alpha;
    }

    let mut beta = vec![0.0; cols];
    for k in (0..cols).rev() {
        let s: f64 = (k + 1..cols).map(|j| q[j][k] * beta[j]).sum();
        beta[k] = (rhs[k] - s) / diag[k];
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("least-squares coefficients"));
    }
    Ok(beta)
}

fn reflect(v: &[f64], vtv: f64, x: &mut [f64]) {
    let s = 2.0 * v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() / vtv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

fn norm(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}
