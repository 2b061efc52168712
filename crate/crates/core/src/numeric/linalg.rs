//! Singular value decomposition, Moore–Penrose pseudo-inverse and
//! least-squares solves.
//!
//! [`pinv`] runs on an in-crate one-sided Jacobi SVD. [`lstsq`] goes
//! through nalgebra's bidiagonal Golub–Kahan SVD instead, so the two can
//! serve as independent checks on each other.

use nalgebra::DMatrix;

use super::mat::{dot, Mat};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = u · diag(s) · vᵀ` with `k = min(rows, cols)` singular
/// triplets. Singular values are sorted in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = rel_tol * self.sigma_max();
        self.s.iter().filter(|&&s| s > cut).count()
    }
}

/// Default relative cutoff: `max(rows, cols) · ε`.
pub fn default_rel_tol(m: &Mat) -> f64 {
    m.rows().max(m.cols()) as f64 * f64::EPSILON
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &Mat) -> Result<Svd> {
    if m.is_empty() {
        return Err(Error::dims("svd of an empty matrix"));
    }
    if !m.is_finite() {
        return Err(Error::Numerical("svd input has non-finite entries".into()));
    }
    // Orthogonalize the columns of a tall matrix; transpose wide input.
    let wide = m.rows() < m.cols();
    let a = if wide { m.transpose() } else { m.clone() };
    let (rows, cols) = a.shape();

    // Columns of `a` and of `v`, each stored contiguously.
    let at = a.transpose();
    let mut work: Vec<Vec<f64>> = (0..cols).map(|j| at.row(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    // Columns below this squared norm are numerically zero.
    let negligible = (f64::EPSILON * a.frobenius()).powi(2);
    // Rounding in a length-`rows` dot product; a stricter threshold can cycle.
    let tol = rows as f64 * f64::EPSILON;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let (ap, aq) = (&work[p], &work[q]);
                    (dot(ap, ap), dot(aq, aq), dot(ap, aq))
                };
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps for a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }

    let mut triplets: Vec<(f64, usize)> = work
        .iter()
        .enumerate()
        .map(|(j, col)| (dot(col, col).sqrt(), j))
        .collect();
    triplets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let k = cols;
    let mut u = Mat::zeros(rows, k);
    let mut vm = Mat::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (out, &(sigma, j)) in triplets.iter().enumerate() {
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..rows {
                u[(i, out)] = work[j][i] / sigma;
            }
        }
        for i in 0..cols {
            vm[(i, out)] = v[j][i];
        }
    }

    Ok(if wide {
        Svd { u: vm, s, v: u }
    } else {
        Svd { u, s, v: vm }
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (xp, xq) = (&mut lo[p], &mut hi[0]);
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (ap, aq) = (*a, *b);
        *a = c * ap - s * aq;
        *b = s * ap + c * aq;
    }
}

/// Moore–Penrose pseudo-inverse via SVD, discarding singular values below
/// `rel_tol · σ_max`. Handles rank-deficient input in either orientation.
pub fn pinv(m: &Mat, rel_tol: f64) -> Result<Mat> {
    if !(rel_tol > 0.0) {
        return Err(Error::Config(format!(
            "pinv rel_tol must be > 0, got {rel_tol}"
        )));
    }
    let svd = svd(m)?;
    Ok(pinv_from_svd(&svd, rel_tol, m.shape()))
}

/// [`pinv`] with the default tolerance.
pub fn pinv_default(m: &Mat) -> Result<Mat> {
    pinv(m, default_rel_tol(m))
}

fn pinv_from_svd(svd: &Svd, rel_tol: f64, (rows, cols): (usize, usize)) -> Mat {
    let cut = rel_tol * svd.sigma_max();
    let mut out = Mat::zeros(cols, rows);
    for (t, &sigma) in svd.s.iter().enumerate() {
        if !(sigma > cut) {
            continue;
        }
        let inv = 1.0 / sigma;
        for i in 0..cols {
            let vi = svd.v[(i, t)] * inv;
            if vi == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vi * svd.u[(j, t)];
            }
        }
    }
    out
}

/// Minimum-norm least-squares solution of `a · x ≈ b`.
pub fn lstsq(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.rows() != b.rows() {
        return Err(Error::dims(format!(
            "lstsq: a is {}x{}, b is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.is_empty() {
        return Err(Error::dims("lstsq with an empty system matrix"));
    }
    let na = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let nb = DMatrix::from_row_slice(b.rows(), b.cols(), b.as_slice());
    let svd = na
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("lstsq: SVD did not converge".into()))?;
    let sigma_max = svd.singular_values.max();
    let cut = default_rel_tol(a) * sigma_max;
    let x = svd
        .solve(&nb, cut)
        .map_err(|e| Error::Numerical(format!("lstsq: {e}")))?;
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out[(i, j)] = x[(i, j)];
        }
    }
    Ok(out)
}

/// Max-norm residuals of the four Penrose conditions for a candidate
/// pseudo-inverse `x` of `m`:
/// `‖mxm − m‖`, `‖xmx − x‖`, `‖(mx)ᵀ − mx‖`, `‖(xm)ᵀ − xm‖`.
pub fn penrose_residuals(m: &Mat, x: &Mat) -> Result<[f64; 4]> {
    if m.rows() != x.cols() || m.cols() != x.rows() {
        return Err(Error::dims(format!(
            "penrose residuals: m is {}x{}, candidate is {}x{}",
            m.rows(),
            m.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let mx = m.matmul(x)?;
    let xm = x.matmul(m)?;
    let mxm = mx.matmul(m)?;
    let xmx = xm.matmul(x)?;
    Ok([
        mxm.max_abs_diff(m),
        xmx.max_abs_diff(x),
        mx.transpose().max_abs_diff(&mx),
        xm.transpose().max_abs_diff(&xm),
    ])
}
