//! Bilinear resize operators and kernel resizing.
//!
//! A bilinear resize from `(h, w)` to `(h', w')` is linear in the image, so
//! it has an explicit matrix `M` of shape `(h'·w') × (h·w)` acting on
//! row-major vectorized images. Pseudo-inverse resizing maps every kernel
//! slice `ω` to `ω̂ = (Mᵀ)⁺ ω`. When the patch grows, `Mᵀ` has full row rank,
//! so `⟨M x, ω̂⟩ = ⟨x, Mᵀ (Mᵀ)⁺ ω⟩ = ⟨x, ω⟩` for every patch `x`: tokens are
//! recovered exactly. When it shrinks, `ω̂` is the least-squares best
//! approximation, which is optimal in expectation for white Gaussian patches.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{pinv_default, Mat, Tensor4};

/// Pixel-sampling convention of the resize operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResizeSemantics {
    /// Pixel centers at half-integers: `s = (t + 0.5)·src/dst − 0.5`,
    /// clamped to `[0, src − 1]`.
    #[default]
    #[serde(rename = "half_pixel")]
    HalfPixel,
}

impl ResizeSemantics {
    pub fn as_str(self) -> &'static str {
        match self {
            ResizeSemantics::HalfPixel => "half_pixel",
        }
    }
}

impl fmt::Display for ResizeSemantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResizeSemantics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_pixel" => Ok(ResizeSemantics::HalfPixel),
            other => Err(Error::Format(format!("unknown resize semantics {other:?}"))),
        }
    }
}

/// Interpolation taps along one axis: `(lo, hi, frac)` per target index,
/// meaning `(1 − frac)·src[lo] + frac·src[hi]`.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|t| {
            let s = ((t as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

fn check_dims(what: &str, dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::dims(format!(
            "{what}: zero-sized dimension in {dims:?}"
        )));
    }
    Ok(())
}

/// Separable bilinear resampling of an `H×W` grid to `dst = (H', W')`.
pub fn bilinear_resize_2d(img: &Mat, dst: (usize, usize)) -> Result<Mat> {
    let (h, w) = img.shape();
    check_dims("bilinear_resize_2d", &[h, w, dst.0, dst.1])?;
    let ty = axis_taps(h, dst.0);
    let tx = axis_taps(w, dst.1);
    Ok(Mat::from_fn(dst.0, dst.1, |i, j| {
        let (y0, y1, fy) = ty[i];
        let (x0, x1, fx) = tx[j];
        let top = (1.0 - fx) * img[(y0, x0)] + fx * img[(y0, x1)];
        let bottom = (1.0 - fx) * img[(y1, x0)] + fx * img[(y1, x1)];
        (1.0 - fy) * top + fy * bottom
    }))
}

/// An explicit bilinear resize matrix together with the shapes it maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ResizeOperator {
    pub src: (usize, usize),
    pub dst: (usize, usize),
    pub semantics: ResizeSemantics,
    m: Mat,
}

impl ResizeOperator {
    /// The `(H'·W') × (H·W)` matrix.
    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn into_matrix(self) -> Mat {
        self.m
    }

    /// Resizes a `src`-shaped grid by matrix multiplication.
    pub fn apply(&self, img: &Mat) -> Result<Mat> {
        if img.shape() != self.src {
            return Err(Error::dims(format!(
                "operator expects {:?} grid, got {:?}",
                self.src,
                img.shape()
            )));
        }
        let v = self.m.matvec(img.as_slice())?;
        Mat::new(self.dst.0, self.dst.1, v)
    }
}

/// Builds the resize matrix column by column: column `j` is the resized
/// `j`-th standard basis image.
pub fn build_resize_matrix(
    src: (usize, usize),
    dst: (usize, usize),
    semantics: ResizeSemantics,
) -> Result<ResizeOperator> {
    check_dims("build_resize_matrix", &[src.0, src.1, dst.0, dst.1])?;
    let n_src = src.0 * src.1;
    let n_dst = dst.0 * dst.1;
    let mut m = Mat::zeros(n_dst, n_src);
    let mut basis = Mat::zeros(src.0, src.1);
    for j in 0..n_src {
        basis.as_mut_slice()[j] = 1.0;
        let col = bilinear_resize_2d(&basis, dst)?;
        for (i, &v) in col.as_slice().iter().enumerate() {
            m[(i, j)] = v;
        }
        basis.as_mut_slice()[j] = 0.0;
    }
    Ok(ResizeOperator {
        src,
        dst,
        semantics,
        m,
    })
}

type ProjectionKey = (usize, usize, ResizeSemantics);

fn projection_cache() -> &'static Mutex<HashMap<ProjectionKey, Arc<Mat>>> {
    static CACHE: OnceLock<Mutex<HashMap<ProjectionKey, Arc<Mat>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// `(Mᵀ)⁺` for the square patch resize `patch → new_patch`, shape
/// `new_patch² × patch²`. Cached per `(patch, new_patch, semantics)`.
pub fn pi_projection(
    patch: usize,
    new_patch: usize,
    semantics: ResizeSemantics,
) -> Result<Arc<Mat>> {
    let key = (patch, new_patch, semantics);
    if let Some(p) = projection_cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(p));
    }
    let op = build_resize_matrix((patch, patch), (new_patch, new_patch), semantics)?;
    let proj = Arc::new(pinv_default(&op.matrix().transpose())?);
    projection_cache()
        .lock()
        .unwrap()
        .entry(key)
        .or_insert_with(|| Arc::clone(&proj));
    Ok(proj)
}

fn square_patch(k: &Tensor4) -> Result<usize> {
    let [d0, d1, p, q] = k.dims();
    if p != q {
        return Err(Error::dims(format!(
            "kernel patch must be square, got {p}x{q}"
        )));
    }
    check_dims("kernel", &[d0, d1, p])?;
    Ok(p)
}

/// Resizes every `P×P` slice of a `[D_out, C, P, P]` kernel to `P'×P'` with
/// the pseudo-inverse of the transposed resize matrix.
pub fn pi_resize_kernel(
    k_old: &Tensor4,
    new_patch: usize,
    semantics: ResizeSemantics,
) -> Result<Tensor4> {
    let p = square_patch(k_old)?;
    check_dims("pi_resize_kernel", &[new_patch])?;
    if !k_old.is_finite() {
        return Err(Error::Numerical("kernel has non-finite entries".into()));
    }
    if new_patch == p {
        return Ok(k_old.clone());
    }
    let proj = pi_projection(p, new_patch, semantics)?;
    let [d0, d1, _, _] = k_old.dims();
    let mut out = Tensor4::zeros([d0, d1, new_patch, new_patch]);
    let n_new = new_patch * new_patch;
    out.as_mut_slice()
        .par_chunks_mut(n_new)
        .zip(k_old.as_slice().par_chunks(p * p))
        .for_each(|(dst, omega)| {
            for (i, d) in dst.iter_mut().enumerate() {
                *d = crate::numeric::dot(proj.row(i), omega);
            }
        });
    Ok(out)
}

/// Baseline: bilinear-resizes each kernel slice as if it were an image.
pub fn linear_resize_kernel(
    k_old: &Tensor4,
    new_patch: usize,
    _semantics: ResizeSemantics,
) -> Result<Tensor4> {
    let p = square_patch(k_old)?;
    check_dims("linear_resize_kernel", &[new_patch])?;
    if new_patch == p {
        return Ok(k_old.clone());
    }
    let [d0, d1, _, _] = k_old.dims();
    let mut data = Vec::with_capacity(d0 * d1 * new_patch * new_patch);
    for slice in k_old.slices() {
        let grid = Mat::new(p, p, slice.to_vec())?;
        data.extend(bilinear_resize_2d(&grid, (new_patch, new_patch))?.into_vec());
    }
    Tensor4::new([d0, d1, new_patch, new_patch], data)
}

/// Kernel resizing strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Pi,
    Linear,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Pi => "pi",
            Strategy::Linear => "linear",
        }
    }

    pub fn resize(
        self,
        k: &Tensor4,
        new_patch: usize,
        semantics: ResizeSemantics,
    ) -> Result<Tensor4> {
        match self {
            Strategy::Pi => pi_resize_kernel(k, new_patch, semantics),
            Strategy::Linear => linear_resize_kernel(k, new_patch, semantics),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pi" => Ok(Strategy::Pi),
            "linear" => Ok(Strategy::Linear),
            other => Err(Error::Config(format!("unknown resize method {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{lstsq, Rng};

    const HP: ResizeSemantics = ResizeSemantics::HalfPixel;

    #[test]
    fn semantics_tag_round_trips() {
        let s = serde_json::to_string(&HP).unwrap();
        assert_eq!(s, "\"half_pixel\"");
        assert_eq!(serde_json::from_str::<ResizeSemantics>(&s).unwrap(), HP);
        assert_eq!(HP.as_str().parse::<ResizeSemantics>().unwrap(), HP);
        assert!("nearest".parse::<ResizeSemantics>().is_err());
    }

    #[test]
    fn same_size_is_identity() {
        let img = Rng::new(1).normal_mat(3, 5);
        assert_eq!(bilinear_resize_2d(&img, (3, 5)).unwrap(), img);
        let op = build_resize_matrix((2, 2), (2, 2), HP).unwrap();
        assert_eq!(op.matrix(), &Mat::identity(4));
    }

    #[test]
    fn single_pixel_broadcasts() {
        let img = Mat::from_rows(&[[2.5]]);
        let out = bilinear_resize_2d(&img, (3, 4)).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 2.5));
        let op = build_resize_matrix((1, 1), (2, 2), HP).unwrap();
        assert_eq!(op.matrix(), &Mat::new(4, 1, vec![1.0; 4]).unwrap());
    }

    #[test]
    fn two_by_two_to_four_by_four_by_hand() {
        // Source coordinates along each axis for 2 -> 4:
        // t=0: -0.25 -> 0, t=1: 0.25, t=2: 0.75, t=3: 1.25 -> 1.
        let img = Mat::from_rows(&[[0.0, 1.0], [2.0, 3.0]]);
        let out = bilinear_resize_2d(&img, (4, 4)).unwrap();
        let s = [0.0, 0.25, 0.75, 1.0];
        // f(y, x) = 2y + x is bilinear, so the resize reproduces it exactly.
        for i in 0..4 {
            for j in 0..4 {
                let want = 2.0 * s[i] + s[j];
                assert!((out[(i, j)] - want).abs() < 1e-15, "({i},{j})");
            }
        }
        assert_eq!(out[(0, 0)], 0.0);
        assert_eq!(out[(3, 3)], 3.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            bilinear_resize_2d(&Mat::zeros(2, 2), (0, 3)),
            Err(Error::Dimension(_))
        ));
        assert!(build_resize_matrix((0, 1), (1, 1), HP).is_err());
    }

    #[test]
    fn matrix_matches_direct_resize() {
        let op = build_resize_matrix((2, 2), (4, 4), HP).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let x = rng.normal_mat(2, 2);
            let diff = op
                .apply(&x)
                .unwrap()
                .max_abs_diff(&bilinear_resize_2d(&x, (4, 4)).unwrap());
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn rows_are_convex_weights() {
        for &(src, dst) in &[((3, 5), (7, 2)), ((8, 8), (4, 4)), ((4, 4), (16, 16))] {
            let op = build_resize_matrix(src, dst, HP).unwrap();
            let m = op.matrix();
            for i in 0..m.rows() {
                let s: f64 = m.row(i).iter().sum();
                assert!((s - 1.0).abs() <= 1e-12);
                assert!(m.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn pi_same_patch_is_unchanged() {
        let k = Tensor4::from_fn([2, 3, 4, 4], |[a, b, c, d]| {
            (a + 2 * b) as f64 - (c * d) as f64 * 0.1
        });
        assert_eq!(pi_resize_kernel(&k, 4, HP).unwrap(), k);
        assert_eq!(linear_resize_kernel(&k, 4, HP).unwrap(), k);
    }

    #[test]
    fn pi_upsampling_preserves_tokens() {
        let mut rng = Rng::new(21);
        let k = Tensor4::new([3, 2, 4, 4], rng.normal_vec(96)).unwrap();
        let k_new = pi_resize_kernel(&k, 8, HP).unwrap();
        let m = build_resize_matrix((4, 4), (8, 8), HP)
            .unwrap()
            .into_matrix();
        for _ in 0..100 {
            let x = rng.normal_vec(16);
            let mx = m.matvec(&x).unwrap();
            for (omega, omega_hat) in k.slices().zip(k_new.slices()) {
                let a = crate::numeric::dot(&x, omega);
                let b = crate::numeric::dot(&mx, omega_hat);
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn pi_downsampling_is_least_squares() {
        let mut rng = Rng::new(22);
        let k = Tensor4::new([2, 2, 8, 8], rng.normal_vec(256)).unwrap();
        let k_new = pi_resize_kernel(&k, 4, HP).unwrap();
        let mt = build_resize_matrix((8, 8), (4, 4), HP)
            .unwrap()
            .into_matrix()
            .transpose();
        for (omega, omega_hat) in k.slices().zip(k_new.slices()) {
            let want = lstsq(&mt, &Mat::column(omega)).unwrap();
            let diff = want.max_abs_diff(&Mat::column(omega_hat));
            assert!(diff <= 1e-8, "diff {diff}");
        }
    }

    #[test]
    fn linear_keeps_constants() {
        let k = Tensor4::new([1, 1, 4, 4], vec![0.75; 16]).unwrap();
        let up = linear_resize_kernel(&k, 8, HP).unwrap();
        assert!(up.as_slice().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn non_square_kernel_rejected() {
        let k = Tensor4::zeros([1, 1, 4, 3]);
        assert!(pi_resize_kernel(&k, 8, HP).is_err());
    }

    #[test]
    fn upsampled_kernel_returns_through_transpose_not_through_downsampling() {
        let k = Tensor4::new([2, 1, 4, 4], Rng::new(11).normal_vec(32)).unwrap();
        let up = pi_resize_kernel(&k, 8, HP).unwrap();
        let mt = build_resize_matrix((4, 4), (8, 8), HP)
            .unwrap()
            .into_matrix()
            .transpose();
        for (omega, omega_hat) in k.slices().zip(up.slices()) {
            let back = mt.matvec(omega_hat).unwrap();
            assert!(back.iter().zip(omega).all(|(a, b)| (a - b).abs() < 1e-10));
        }
        // The 8 -> 4 operator is not a left inverse of the 4 -> 8 one, so a
        // second PI resize does not undo the first.
        let down = pi_resize_kernel(&up, 4, HP).unwrap();
        assert!(down.max_abs_diff(&k) > 1e-2);
    }
}
