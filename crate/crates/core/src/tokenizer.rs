//! Patch tokenization, positional embeddings and the CLS slot.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{Mat, Tensor4};
use crate::resize::{bilinear_resize_2d, build_resize_matrix, ResizeSemantics};
use crate::wavegen::WavelengthSpec;

/// A `C×H×W` image with optional band wavelengths and ground sample distance.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCHW {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    pub lambdas: Option<WavelengthSpec>,
    /// Metres per pixel.
    pub gsd: Option<f64>,
}

impl ImageCHW {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::dims(format!(
                "image dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::dims(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
            lambdas: None,
            gsd: None,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    pub fn from_channels(channels: &[Mat]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::dims("image needs at least one channel"))?;
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(channels.len() * h * w);
        for c in channels {
            if c.shape() != (h, w) {
                return Err(Error::dims(format!(
                    "channel shapes differ: {:?} vs {:?}",
                    c.shape(),
                    (h, w)
                )));
            }
            data.extend_from_slice(c.as_slice());
        }
        Self::new(channels.len(), h, w, data)
    }

    /// Attaches band wavelengths; their count must equal the channel count.
    pub fn with_lambdas(mut self, lambdas: WavelengthSpec) -> Result<Self> {
        if lambdas.len() != self.channels {
            return Err(Error::SpectralMismatch {
                image_channels: self.channels,
                kernel_channels: lambdas.len(),
            });
        }
        self.lambdas = Some(lambdas);
        Ok(self)
    }

    pub fn with_gsd(mut self, gsd: f64) -> Self {
        self.gsd = Some(gsd);
        self
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> Mat {
        let n = self.height * self.width;
        Mat::new(
            self.height,
            self.width,
            self.data[c * n..(c + 1) * n].to_vec(),
        )
        .expect("channel slice has matching length")
    }

    /// `a·self + b·other`, elementwise.
    pub fn axpby(&self, a: f64, other: &ImageCHW, b: f64) -> Result<ImageCHW> {
        if self.dims() != other.dims() {
            return Err(Error::dims(format!(
                "image dims {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        ImageCHW::new(self.channels, self.height, self.width, data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// A token matrix with its patch-grid shape.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Mat,
    pub grid: (usize, usize),
    pub has_cls: bool,
}

impl TokenSequence {
    pub fn new(tokens: Mat, grid: (usize, usize), has_cls: bool) -> Result<Self> {
        let expected = grid.0 * grid.1 + usize::from(has_cls);
        if tokens.rows() != expected {
            return Err(Error::dims(format!(
                "{} token rows for grid {grid:?} (cls: {has_cls})",
                tokens.rows()
            )));
        }
        Ok(Self {
            tokens,
            grid,
            has_cls,
        })
    }

    /// Patch tokens, excluding the CLS row.
    pub fn num_patches(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }
}

/// Number of tokens a `height×width` image yields at patch size `patch`.
pub fn token_count(height: usize, width: usize, patch: usize) -> Result<usize> {
    let (gh, gw) = patch_grid(height, width, patch)?;
    Ok(gh * gw)
}

fn patch_grid(height: usize, width: usize, patch: usize) -> Result<(usize, usize)> {
    if patch == 0
        || !height.is_multiple_of(patch)
        || !width.is_multiple_of(patch)
        || height == 0
        || width == 0
    {
        return Err(Error::Tiling {
            height,
            width,
            patch,
        });
    }
    Ok((height / patch, width / patch))
}

/// Non-overlapping stride-`P` convolution of `img` with a `[D, C, P, P]`
/// kernel. Token `(i, j)` lands in row `i·(W/P) + j`.
pub fn patchify(img: &ImageCHW, kernel: &Tensor4, bias: &[f64]) -> Result<TokenSequence> {
    let [d, c, p, q] = kernel.dims();
    if p != q {
        return Err(Error::dims(format!(
            "kernel patch must be square, got {p}x{q}"
        )));
    }
    if c != img.channels {
        return Err(Error::SpectralMismatch {
            image_channels: img.channels,
            kernel_channels: c,
        });
    }
    if bias.len() != d {
        return Err(Error::dims(format!(
            "bias of length {} for {d} output features",
            bias.len()
        )));
    }
    let (gh, gw) = patch_grid(img.height, img.width, p)?;
    let mut tokens = Mat::zeros(gh * gw, d);
    tokens
        .as_mut_slice()
        .par_chunks_mut(d.max(1))
        .enumerate()
        .for_each(|(t, row)| {
            let (i, j) = (t / gw, t % gw);
            for (dd, out) in row.iter_mut().enumerate() {
                let mut acc = bias[dd];
                for ch in 0..c {
                    let w = kernel.slice(dd, ch);
                    for ky in 0..p {
                        let base = (ch * img.height + i * p + ky) * img.width + j * p;
                        let pixels = &img.data[base..base + p];
                        let weights = &w[ky * p..ky * p + p];
                        acc += pixels.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                *out = acc;
            }
        });
    TokenSequence::new(tokens, (gh, gw), false)
}

/// Resizes every `patch×patch` block of every channel independently to
/// `new_patch×new_patch` with the bilinear operator. The output is
/// `(H/patch·new_patch) × (W/patch·new_patch)`.
pub fn resize_image_per_patch(
    img: &ImageCHW,
    patch: usize,
    new_patch: usize,
    semantics: ResizeSemantics,
) -> Result<ImageCHW> {
    let (gh, gw) = patch_grid(img.height, img.width, patch)?;
    let op = build_resize_matrix((patch, patch), (new_patch, new_patch), semantics)?;
    let (nh, nw) = (gh * new_patch, gw * new_patch);
    let mut out = ImageCHW::zeros(img.channels, nh, nw)?;
    let mut block = Mat::zeros(patch, patch);
    for c in 0..img.channels {
        for bi in 0..gh {
            for bj in 0..gw {
                for y in 0..patch {
                    for x in 0..patch {
                        block[(y, x)] = img.get(c, bi * patch + y, bj * patch + x);
                    }
                }
                let resized = op.apply(&block)?;
                for y in 0..new_patch {
                    let row = (c * nh + bi * new_patch + y) * nw + bj * new_patch;
                    out.data[row..row + new_patch].copy_from_slice(resized.row(y));
                }
            }
        }
    }
    out.lambdas = img.lambdas.clone();
    out.gsd = img.gsd.map(|g| g * patch as f64 / new_patch as f64);
    Ok(out)
}

/// Positional embedding over a patch grid, with an optional CLS row kept apart.
#[derive(Clone, Debug, PartialEq)]
pub struct PosEmbed {
    pub grid: (usize, usize),
    pub data: Mat,
    pub cls_row: Option<Vec<f64>>,
}

impl PosEmbed {
    pub fn new(grid: (usize, usize), data: Mat, cls_row: Option<Vec<f64>>) -> Result<Self> {
        if data.rows() != grid.0 * grid.1 {
            return Err(Error::dims(format!(
                "{} positional rows for grid {grid:?}",
                data.rows()
            )));
        }
        if let Some(cls) = &cls_row {
            if cls.len() != data.cols() {
                return Err(Error::dims(format!(
                    "cls row of length {} for width {}",
                    cls.len(),
                    data.cols()
                )));
            }
        }
        Ok(Self {
            grid,
            data,
            cls_row,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

/// Bilinear resize of the positional grid, one embedding dimension at a time.
pub fn interp_pos_embed(pe: &PosEmbed, new_grid: (usize, usize)) -> Result<PosEmbed> {
    if new_grid == pe.grid {
        return Ok(pe.clone());
    }
    let d = pe.dim();
    let (gh, gw) = pe.grid;
    let mut out = Mat::zeros(new_grid.0 * new_grid.1, d);
    for k in 0..d {
        let plane = Mat::new(gh, gw, pe.data.col(k))?;
        let resized = bilinear_resize_2d(&plane, new_grid)?;
        for (i, &v) in resized.as_slice().iter().enumerate() {
            out[(i, k)] = v;
        }
    }
    PosEmbed::new(new_grid, out, pe.cls_row.clone())
}

/// Adds positional rows to the patch tokens and prepends the CLS token
/// (plus the embedding's CLS row, if it has one).
pub fn assemble(tokens: &TokenSequence, pe: &PosEmbed, cls: &[f64]) -> Result<TokenSequence> {
    if tokens.has_cls {
        return Err(Error::dims("tokens already carry a CLS row"));
    }
    if tokens.grid != pe.grid {
        return Err(Error::Alignment {
            tokens: tokens.grid,
            embed: pe.grid,
        });
    }
    let d = tokens.dim();
    if pe.dim() != d || cls.len() != d {
        return Err(Error::dims(format!(
            "token width {d}, positional width {}, cls length {}",
            pe.dim(),
            cls.len()
        )));
    }
    let mut out = Mat::zeros(tokens.len() + 1, d);
    let first = out.row_mut(0);
    first.copy_from_slice(cls);
    if let Some(extra) = &pe.cls_row {
        for (o, e) in first.iter_mut().zip(extra) {
            *o += e;
        }
    }
    let summed = tokens.tokens.add(&pe.data)?;
    out.as_mut_slice()[d..].copy_from_slice(summed.as_slice());
    TokenSequence::new(out, tokens.grid, true)
}
