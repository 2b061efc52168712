//! Fidelity measurements for kernel resizing, plus spectrum and local
//! entropy maps of images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, penrose_residuals, Mat, Rng, Tensor4};
use crate::resize::{build_resize_matrix, ResizeSemantics, Strategy};

/// Token-level comparison between an original kernel on Gaussian patches
/// `x` and a resized kernel on the resized patches `M x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub strategy: Strategy,
    pub src_patch: usize,
    pub dst_patch: usize,
    pub trials: usize,
    pub mean_abs_dot_error: f64,
    pub max_abs_dot_error: f64,
    /// Per slice: `‖resized tokens‖ / ‖original tokens‖` over all trials.
    pub mean_norm_ratio: f64,
    pub std_norm_ratio: f64,
    /// Monte Carlo estimate of `E (⟨x, ω⟩ − ⟨M x, ω̂⟩)²`, averaged over slices.
    pub expected_sq_loss: f64,
}

pub fn token_fidelity(
    k_old: &Tensor4,
    strategy: Strategy,
    dst_patch: usize,
    trials: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if trials == 0 {
        return Err(Error::Config(
            "token_fidelity needs at least one trial".into(),
        ));
    }
    let semantics = ResizeSemantics::HalfPixel;
    let k_new = strategy.resize(k_old, dst_patch, semantics)?;
    compare_kernels(k_old, &k_new, strategy, trials, seed)
}

/// Like [`token_fidelity`] for an already-resized kernel.
pub fn compare_kernels(
    k_old: &Tensor4,
    k_new: &Tensor4,
    strategy: Strategy,
    trials: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if trials == 0 {
        return Err(Error::Config(
            "fidelity comparison needs at least one trial".into(),
        ));
    }
    let [d0, d1, p, _] = k_old.dims();
    let [e0, e1, q, _] = k_new.dims();
    if (d0, d1) != (e0, e1) {
        return Err(Error::dims(format!(
            "kernels disagree on leading dims: {:?} vs {:?}",
            k_old.dims(),
            k_new.dims()
        )));
    }
    let m = build_resize_matrix((p, p), (q, q), ResizeSemantics::HalfPixel)?.into_matrix();
    let slices = k_old.slice_count();

    // (original, resized) token per slice, per trial; reduced below in trial order.
    let per_trial: Vec<Vec<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = Rng::derive(seed, t as u64).normal_vec(p * p);
            let mx = if p == q {
                x.clone()
            } else {
                m.matvec(&x).expect("operator shape")
            };
            k_old
                .slices()
                .zip(k_new.slices())
                .map(|(w, w_hat)| (dot(&x, w), dot(&mx, w_hat)))
                .collect()
        })
        .collect();

    let mut sum_err = 0.0;
    let mut max_err: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut norm_old = vec![0.0; slices];
    let mut norm_new = vec![0.0; slices];
    for row in &per_trial {
        for (s, &(a, b)) in row.iter().enumerate() {
            let e = (a - b).abs();
            sum_err += e;
            max_err = max_err.max(e);
            sum_sq += e * e;
            norm_old[s] += a * a;
            norm_new[s] += b * b;
        }
    }
    let ratios: Vec<f64> = norm_old
        .iter()
        .zip(&norm_new)
        .map(|(&o, &n)| {
            if o == 0.0 && n == 0.0 {
                1.0
            } else {
                (n / o).sqrt()
            }
        })
        .collect();
    let count = (trials * slices) as f64;
    let mean_ratio = ratios.iter().sum::<f64>() / slices as f64;
    let var_ratio = ratios.iter().map(|r| (r - mean_ratio).powi(2)).sum::<f64>() / slices as f64;

    let report = FidelityReport {
        strategy,
        src_patch: p,
        dst_patch: q,
        trials,
        mean_abs_dot_error: sum_err / count,
        max_abs_dot_error: max_err,
        mean_norm_ratio: mean_ratio,
        std_norm_ratio: var_ratio.sqrt(),
        expected_sq_loss: sum_sq / count,
    };
    let stats = [
        report.mean_abs_dot_error,
        report.max_abs_dot_error,
        report.mean_norm_ratio,
        report.std_norm_ratio,
        report.expected_sq_loss,
    ];
    if stats.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite fidelity statistics: {stats:?}"
        )));
    }
    Ok(report)
}

/// Closed-form `E (⟨x, ω⟩ − ⟨M x, ω̂⟩)² = ‖ω − Mᵀ ω̂‖²` for `x ∼ N(0, I)`,
/// for a single slice.
pub fn gaussian_slice_loss(m: &Mat, omega: &[f64], omega_hat: &[f64]) -> Result<f64> {
    let back = m.transpose().matvec(omega_hat)?;
    if back.len() != omega.len() {
        return Err(Error::dims(format!(
            "slice of length {} against operator with {} columns",
            omega.len(),
            back.len()
        )));
    }
    Ok(omega.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Max-norm residuals of the four Penrose conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenroseResiduals {
    /// `‖M X M − M‖`
    pub mxm: f64,
    /// `‖X M X − X‖`
    pub xmx: f64,
    /// `‖(M X)ᵀ − M X‖`
    pub mx_sym: f64,
    /// `‖(X M)ᵀ − X M‖`
    pub xm_sym: f64,
}

impl PenroseResiduals {
    pub fn max(&self) -> f64 {
        self.mxm.max(self.xmx).max(self.mx_sym).max(self.xm_sym)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.mxm, self.xmx, self.mx_sym, self.xm_sym]
    }
}

pub fn moore_penrose_residuals(m: &Mat, m_pinv: &Mat) -> Result<PenroseResiduals> {
    let [mxm, xmx, mx_sym, xm_sym] = penrose_residuals(m, m_pinv)?;
    Ok(PenroseResiduals {
        mxm,
        xmx,
        mx_sym,
        xm_sym,
    })
}

/// Real and imaginary parts of the 2-D DFT
/// `F[u, v] = Σ img[y, x] · exp(−2πi (u y / H + v x / W))`, uncentered.
pub fn dft2(img: &Mat) -> (Mat, Mat) {
    let (h, w) = img.shape();
    let (cw, sw) = twiddles(w);
    let (ch, sh) = twiddles(h);

    // Along rows.
    let mut re1 = Mat::zeros(h, w);
    let mut im1 = Mat::zeros(h, w);
    for y in 0..h {
        let row = img.row(y);
        for v in 0..w {
            let (mut r, mut i) = (0.0, 0.0);
            for (x, &val) in row.iter().enumerate() {
                let t = (v * x) % w;
                r += val * cw[t];
                i -= val * sw[t];
            }
            re1[(y, v)] = r;
            im1[(y, v)] = i;
        }
    }
    // Along columns.
    let mut re = Mat::zeros(h, w);
    let mut im = Mat::zeros(h, w);
    for u in 0..h {
        for y in 0..h {
            let t = (u * y) % h;
            let (c, s) = (ch[t], sh[t]);
            for v in 0..w {
                let (a, b) = (re1[(y, v)], im1[(y, v)]);
                // (a + ib)(c − is)
                re[(u, v)] += a * c + b * s;
                im[(u, v)] += b * c - a * s;
            }
        }
    }
    (re, im)
}

fn twiddles(n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip()
}

/// `|F|`, uncentered.
pub fn dft2_abs(img: &Mat) -> Mat {
    let (re, im) = dft2(img);
    Mat::from_fn(re.rows(), re.cols(), |i, j| re[(i, j)].hypot(im[(i, j)]))
}

/// Moves the zero-frequency bin to `(H/2, W/2)`.
pub fn fftshift(m: &Mat) -> Mat {
    let (h, w) = m.shape();
    let mut out = Mat::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            out[((i + h / 2) % h, (j + w / 2) % w)] = m[(i, j)];
        }
    }
    out
}

/// Centered log spectrum `log(1 + |F|)`.
pub fn dft2_magnitude(img: &Mat) -> Mat {
    fftshift(&dft2_abs(img)).map(f64::ln_1p)
}

/// Per-pixel Shannon entropy (bits) of the intensity histogram inside a
/// centered `window×window` neighbourhood, edges clamped. Intensities are
/// min-max normalized over the whole image into `bins` bins.
pub fn local_entropy(img: &Mat, window: usize, bins: usize) -> Result<Mat> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "entropy window must be odd, got {window}"
        )));
    }
    if bins < 2 {
        return Err(Error::Config(format!("need at least two bins, got {bins}")));
    }
    let (h, w) = img.shape();
    let lo = img.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img
        .as_slice()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(Mat::zeros(h, w));
    }
    let span = hi - lo;
    let binned: Vec<usize> = img
        .as_slice()
        .iter()
        .map(|&v| (((v - lo) / span * bins as f64) as usize).min(bins - 1))
        .collect();

    let r = (window / 2) as isize;
    let total = (window * window) as f64;
    let mut out = Mat::zeros(h, w);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            let mut counts = vec![0u32; bins];
            for (x, o) in row.iter_mut().enumerate() {
                counts.iter_mut().for_each(|c| *c = 0);
                for dy in -r..=r {
                    let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    for dx in -r..=r {
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        counts[binned[yy * w + xx]] += 1;
                    }
                }
                *o = counts
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let p = c as f64 / total;
                        -p * p.log2()
                    })
                    .sum::<f64>()
                    .max(0.0);
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::pinv_default;

    fn random_kernel(seed: u64, dims: [usize; 4]) -> Tensor4 {
        Tensor4::new(dims, Rng::new(seed).normal_vec(dims.iter().product())).unwrap()
    }

    #[test]
    fn pi_upsampling_is_exact() {
        let k = random_kernel(1, [4, 2, 4, 4]);
        let r = token_fidelity(&k, Strategy::Pi, 8, 200, 5).unwrap();
        assert!(r.max_abs_dot_error <= 1e-9, "{r:?}");
        assert!((r.mean_norm_ratio - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn identity_resize_has_zero_error() {
        let k = random_kernel(2, [3, 1, 4, 4]);
        for s in [Strategy::Pi, Strategy::Linear] {
            let r = token_fidelity(&k, s, 4, 50, 1).unwrap();
            assert_eq!(r.max_abs_dot_error, 0.0);
            assert_eq!(r.expected_sq_loss, 0.0);
            assert_eq!(r.mean_norm_ratio, 1.0);
        }
    }

    #[test]
    fn linear_upsampling_distorts_tokens() {
        let k = random_kernel(3, [4, 2, 4, 4]);
        let pi = token_fidelity(&k, Strategy::Pi, 8, 200, 5).unwrap();
        let lin = token_fidelity(&k, Strategy::Linear, 8, 200, 5).unwrap();
        assert!(lin.max_abs_dot_error > 1e-3);
        assert!(lin.max_abs_dot_error > pi.max_abs_dot_error);
        assert!(lin.mean_abs_dot_error > pi.mean_abs_dot_error);
    }

    #[test]
    fn pi_beats_linear_when_downsampling() {
        for seed in 0..5 {
            let k = random_kernel(seed, [2, 2, 8, 8]);
            let pi = token_fidelity(&k, Strategy::Pi, 4, 1000, seed).unwrap();
            let lin = token_fidelity(&k, Strategy::Linear, 4, 1000, seed).unwrap();
            assert!(pi.expected_sq_loss <= lin.expected_sq_loss);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let k = random_kernel(4, [2, 1, 4, 4]);
        let a = token_fidelity(&k, Strategy::Linear, 6, 100, 9).unwrap();
        assert_eq!(a, token_fidelity(&k, Strategy::Linear, 6, 100, 9).unwrap());
        assert!(token_fidelity(&k, Strategy::Pi, 6, 0, 9).is_err());
    }

    #[test]
    fn constant_image_spectrum_is_dc_only() {
        let img = Mat::new(6, 8, vec![2.0; 48]).unwrap();
        let f = fftshift(&dft2_abs(&img));
        for i in 0..6 {
            for j in 0..8 {
                let want = if (i, j) == (3, 4) { 96.0 } else { 0.0 };
                assert!(
                    (f[(i, j)] - want).abs() <= 1e-9,
                    "({i},{j}) = {}",
                    f[(i, j)]
                );
            }
        }
    }

    #[test]
    fn cosine_rows_peak_at_plus_minus_three() {
        let (h, w) = (4, 16);
        let img = Mat::from_fn(h, w, |_, x| {
            (2.0 * std::f64::consts::PI * 3.0 * x as f64 / w as f64).cos()
        });
        let f = fftshift(&dft2_abs(&img));
        let (cy, cx) = (h / 2, w / 2);
        // A real cosine splits its energy HW/2 between the ±3 bins.
        assert!((f[(cy, cx + 3)] - 32.0).abs() < 1e-9);
        assert!((f[(cy, cx - 3)] - 32.0).abs() < 1e-9);
        let total: f64 = f.as_slice().iter().sum();
        assert!((total - 64.0).abs() < 1e-8);
    }

    #[test]
    fn parseval_holds() {
        let img = Rng::new(6).normal_mat(7, 9);
        let f = dft2_abs(&img);
        let lhs: f64 = f.as_slice().iter().map(|v| v * v).sum::<f64>() / 63.0;
        let rhs: f64 = img.as_slice().iter().map(|v| v * v).sum();
        assert!((lhs - rhs).abs() <= 1e-6 * rhs);
    }

    #[test]
    fn log_magnitude_is_centered() {
        let img = Mat::new(4, 4, vec![1.0; 16]).unwrap();
        let m = dft2_magnitude(&img);
        assert!((m[(2, 2)] - 17f64.ln()).abs() < 1e-12);
        assert!(m[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn entropy_of_constant_image_is_zero() {
        let e = local_entropy(&Mat::new(5, 5, vec![3.0; 25]).unwrap(), 3, 8).unwrap();
        assert!(e.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn entropy_of_checkerboard_interior() {
        let img = Mat::from_fn(6, 6, |i, j| ((i + j) % 2) as f64);
        let e = local_entropy(&img, 3, 2).unwrap();
        let (a, b) = (5.0 / 9.0, 4.0 / 9.0);
        let want = -(a * f64::log2(a)) - b * f64::log2(b);
        for i in 1..5 {
            for j in 1..5 {
                assert!((e[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entropy_is_bounded() {
        let img = Rng::new(7).normal_mat(12, 10);
        let e = local_entropy(&img, 5, 16).unwrap();
        assert!(e
            .as_slice()
            .iter()
            .all(|&v| (0.0..=4.0 + 1e-12).contains(&v)));
        assert!(local_entropy(&img, 4, 16).is_err());
        assert!(local_entropy(&img, 3, 1).is_err());
    }

    #[test]
    fn penrose_residuals_for_pinv_and_wrong_inverse() {
        let m = Rng::new(8).normal_mat(12, 7);
        let p = pinv_default(&m).unwrap();
        assert!(moore_penrose_residuals(&m, &p).unwrap().max() <= 1e-8);
        assert!(moore_penrose_residuals(&m, &m.transpose()).unwrap().max() > 1e-3);
        let id = Mat::identity(3);
        assert_eq!(
            moore_penrose_residuals(&id, &id).unwrap().as_array(),
            [0.0; 4]
        );
        assert!(moore_penrose_residuals(&m, &m).is_err());
    }

    #[test]
    fn closed_form_loss_is_zero_for_pi_upsampling() {
        let m = build_resize_matrix((3, 3), (5, 5), ResizeSemantics::HalfPixel)
            .unwrap()
            .into_matrix();
        let omega = Rng::new(9).normal_vec(9);
        let proj = pinv_default(&m.transpose()).unwrap();
        let omega_hat = proj.matvec(&omega).unwrap();
        assert!(gaussian_slice_loss(&m, &omega, &omega_hat).unwrap() < 1e-20);
    }
}
