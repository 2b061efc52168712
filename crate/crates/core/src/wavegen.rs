//! Wavelength-conditioned generation of patch-embedding kernels.
//!
//! Each band's central wavelength is sinusoidally encoded, refined by a
//! fully connected layer with GELU, and fed as one token into a small
//! transformer together with learnable weight-query tokens and a bias-query
//! token. The transformer output at each wavelength position (plus a skip
//! from the refined embedding) is projected to that band's `P×P` weights for
//! every output feature; the output at the bias-query position is projected
//! to the convolution bias.
//!
//! No sequence-position encoding is used, so permuting the bands permutes the
//! kernel's channel axis and leaves the bias unchanged, and one set of
//! generator weights serves any number of bands.

use serde::{Deserialize, Serialize};

use crate::encoder::{
    self, gelu, EncoderConfig, EncoderWeights, Linear, ParamSink, ParamVisitor, INIT_STD,
};
use crate::error::{Error, Result};
use crate::numeric::{Mat, Rng, Tensor4};
use crate::tokenizer::{patchify, ImageCHW, TokenSequence};

/// Base of the sinusoidal frequency ladder.
pub const WAVELENGTH_BASE: f64 = 10_000.0;
/// Micrometres to nanometres, applied before encoding.
pub const WAVELENGTH_SCALE: f64 = 1_000.0;

/// Central wavelengths of the image bands, in micrometres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WavelengthSpec(Vec<f64>);

impl WavelengthSpec {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Config("at least one wavelength is required".into()));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!(
                "wavelengths must be finite and positive, got {bad}"
            )));
        }
        Ok(Self(lambdas))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Band `i` of the result is band `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::dims(format!(
                "permutation of length {} for {} bands",
                perm.len(),
                self.len()
            )));
        }
        Self::new(perm.iter().map(|&i| self.0[i]).collect())
    }
}

impl TryFrom<Vec<f64>> for WavelengthSpec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WavelengthSpec> for Vec<f64> {
    fn from(s: WavelengthSpec) -> Self {
        s.0
    }
}

impl std::str::FromStr for WavelengthSpec {
    type Err = Error;

    /// Comma-separated micrometres, e.g. `0.49,0.56,0.665`.
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad wavelength {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

/// Sinusoidal encoding, one row per wavelength. Columns `2k` and `2k + 1`
/// hold `sin` and `cos` of `λ·1000 / 10000^(2k/D)`.
///
/// Accepts any finite values (including zero); validation of physical
/// wavelengths happens in [`WavelengthSpec`].
pub fn encode_wavelengths(lambdas: &[f64], dim: usize) -> Result<Mat> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "wavelength encoding width must be even and positive, got {dim}"
        )));
    }
    Ok(Mat::from_fn(lambdas.len(), dim, |i, j| {
        let k = (j / 2) as f64;
        let arg = lambdas[i] * WAVELENGTH_SCALE / WAVELENGTH_BASE.powf(2.0 * k / dim as f64);
        if j % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Width of the wavelength tokens.
    pub token_dim: usize,
    /// Output features of the generated convolution.
    pub out_dim: usize,
    /// Spatial size of the generated kernel.
    pub patch: usize,
    pub depth: usize,
    pub heads: usize,
    /// Learnable weight-query tokens prepended to the sequence as context.
    pub weight_queries: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            token_dim: 128,
            out_dim: 64,
            patch: 16,
            depth: 2,
            heads: 4,
            weight_queries: 8,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.token_dim;
        if d == 0 || !d.is_multiple_of(2) || self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "token_dim {d} must be even and divisible by heads {}",
                self.heads
            )));
        }
        if self.out_dim == 0 || self.patch == 0 {
            return Err(Error::Config(format!(
                "out_dim {} and patch {} must be positive",
                self.out_dim, self.patch
            )));
        }
        Ok(())
    }

    fn transformer(&self) -> EncoderConfig {
        EncoderConfig {
            depth: self.depth,
            heads: self.heads,
            dim: self.token_dim,
            seed: self.seed,
            ..EncoderConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorWeights {
    pub config: GeneratorConfig,
    /// `L × D`.
    pub weight_queries: Mat,
    pub bias_query: Vec<f64>,
    /// Refinement layer applied (with GELU) to the wavelength encoding.
    pub refine: Linear,
    pub transformer: EncoderWeights,
    /// `D → P²·D_out`.
    pub weight_head: Linear,
    /// `D → D_out`.
    pub bias_head: Linear,
}

/// Random generator weights, a pure function of the config and its seed.
pub fn init_generator(config: &GeneratorConfig) -> Result<GeneratorWeights> {
    config.validate()?;
    let d = config.token_dim;
    let mut rng = Rng::new(config.seed);
    let weight_queries = rng.normal_mat(config.weight_queries, d).scale(INIT_STD);
    let bias_query = rng
        .normal_vec(d)
        .into_iter()
        .map(|v| v * INIT_STD)
        .collect();
    let refine = Linear::random(&mut rng, d, d);
    let transformer = EncoderWeights::init_with(&config.transformer(), &mut rng)?;
    let weight_head = Linear::random(&mut rng, d, config.patch * config.patch * config.out_dim);
    let bias_head = Linear::random(&mut rng, d, config.out_dim);
    Ok(GeneratorWeights {
        config: config.clone(),
        weight_queries,
        bias_query,
        refine,
        transformer,
        weight_head,
        bias_head,
    })
}

impl GeneratorWeights {
    pub fn visit(&self, f: &mut ParamVisitor<'_>) {
        let q = &self.weight_queries;
        f(
            "weight_queries".into(),
            vec![q.rows(), q.cols()],
            q.as_slice(),
        );
        f(
            "bias_query".into(),
            vec![self.bias_query.len()],
            &self.bias_query,
        );
        encoder::visit_linear(&self.refine, "refine", f);
        self.transformer.visit_prefixed("transformer.", f);
        encoder::visit_linear(&self.weight_head, "weight_head", f);
        encoder::visit_linear(&self.bias_head, "bias_head", f);
    }

    pub fn visit_mut(&mut self, f: &mut ParamSink<'_>) -> Result<()> {
        let dims = [self.weight_queries.rows(), self.weight_queries.cols()];
        f("weight_queries", &dims, self.weight_queries.as_mut_slice())?;
        let n = [self.bias_query.len()];
        f("bias_query", &n, &mut self.bias_query)?;
        encoder::visit_linear_mut(&mut self.refine, "refine", f)?;
        self.transformer.visit_mut_prefixed("transformer.", f)?;
        encoder::visit_linear_mut(&mut self.weight_head, "weight_head", f)?;
        encoder::visit_linear_mut(&mut self.bias_head, "bias_head", f)
    }
}

/// Generated convolution: `[D_out, C, P, P]` weights plus one bias per
/// output feature.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicKernel {
    pub weights: Tensor4,
    pub bias: Vec<f64>,
    pub lambdas: WavelengthSpec,
}

impl DynamicKernel {
    pub fn patch(&self) -> usize {
        self.weights.dims()[2]
    }

    pub fn channels(&self) -> usize {
        self.weights.dims()[1]
    }
}

pub fn generate_kernel(w: &GeneratorWeights, spec: &WavelengthSpec) -> Result<DynamicKernel> {
    let cfg = &w.config;
    let (d, c, p, d_out) = (cfg.token_dim, spec.len(), cfg.patch, cfg.out_dim);
    let l = w.weight_queries.rows();

    let encoded = encode_wavelengths(spec.as_slice(), d)?;
    let refined = w.refine.forward(&encoded)?.map(gelu);

    let mut seq = Mat::zeros(l + c + 1, d);
    seq.as_mut_slice()[..l * d].copy_from_slice(w.weight_queries.as_slice());
    seq.as_mut_slice()[l * d..(l + c) * d].copy_from_slice(refined.as_slice());
    seq.row_mut(l + c).copy_from_slice(&w.bias_query);
    let z = w.transformer.forward_mat(&seq)?;

    let z_w = Mat::from_fn(c, d, |i, j| z[(l + i, j)] + refined[(i, j)]);
    let flat = w.weight_head.forward(&z_w)?;
    // Row c of `flat` is laid out (ky, kx, d_out); move it to [d_out, c, ky, kx].
    let weights = Tensor4::from_fn([d_out, c, p, p], |[o, ch, ky, kx]| {
        flat[(ch, (ky * p + kx) * d_out + o)]
    });

    let z_b = Mat::new(1, d, z.row(l + c).to_vec())?;
    let bias = w.bias_head.forward(&z_b)?.into_vec();

    Ok(DynamicKernel {
        weights,
        bias,
        lambdas: spec.clone(),
    })
}

/// Tokenizes `img` with a generated kernel.
pub fn embed_with_kernel(img: &ImageCHW, k: &DynamicKernel) -> Result<TokenSequence> {
    if img.channels() != k.channels() {
        return Err(Error::SpectralMismatch {
            image_channels: img.channels(),
            kernel_channels: k.channels(),
        });
    }
    patchify(img, &k.weights, &k.bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            token_dim: 16,
            out_dim: 6,
            patch: 4,
            depth: 2,
            heads: 4,
            weight_queries: 3,
            seed,
        }
    }

    fn spec(v: &[f64]) -> WavelengthSpec {
        WavelengthSpec::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_wavelength_encodes_to_sin0_cos0() {
        let e = encode_wavelengths(&[0.0], 8).unwrap();
        assert_eq!(e.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn encoding_is_row_wise() {
        let a = encode_wavelengths(&[0.49, 0.56, 0.665], 8).unwrap();
        let b = encode_wavelengths(&[0.665, 0.49, 0.56], 8).unwrap();
        assert_eq!(a.shape(), (3, 8));
        assert_eq!(b.row(0), a.row(2));
        assert_eq!(b.row(1), a.row(0));
        assert!(a.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(
            encode_wavelengths(&[0.5], 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(WavelengthSpec::new(vec![]).is_err());
        assert!(WavelengthSpec::new(vec![0.5, -1.0]).is_err());
        assert!(WavelengthSpec::new(vec![f64::NAN]).is_err());
        let s: WavelengthSpec = "0.49, 0.56,0.665".parse().unwrap();
        assert_eq!(s.as_slice(), &[0.49, 0.56, 0.665]);
        assert!(serde_json::from_str::<WavelengthSpec>("[0.0]").is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_generator(&tiny(9)).unwrap();
        assert_eq!(a, init_generator(&tiny(9)).unwrap());
        assert_ne!(
            a.weight_head,
            init_generator(&tiny(10)).unwrap().weight_head
        );
        assert_eq!(a.weight_head.d_out(), 4 * 4 * 6);
    }

    #[test]
    fn kernel_shape_for_any_band_count() {
        let w = init_generator(&tiny(1)).unwrap();
        for bands in [
            vec![0.665],
            vec![0.49, 0.56, 0.665],
            vec![0.8, 1.6, 2.2, 0.45, 0.9],
        ] {
            let k = generate_kernel(&w, &spec(&bands)).unwrap();
            assert_eq!(k.weights.dims(), [6, bands.len(), 4, 4]);
            assert_eq!(k.bias.len(), 6);
            assert!(k.weights.is_finite());
        }
    }

    #[test]
    fn band_permutation_permutes_channels() {
        let w = init_generator(&tiny(2)).unwrap();
        let base = spec(&[0.49, 0.56, 0.665, 0.842]);
        let perm = [2, 0, 3, 1];
        let k = generate_kernel(&w, &base).unwrap();
        let kp = generate_kernel(&w, &base.permuted(&perm).unwrap()).unwrap();
        let want = k.weights.permute_axis1(&perm).unwrap();
        let scale = want.max_abs();
        assert!(kp.weights.max_abs_diff(&want) <= 1e-6 * scale);
        for (a, b) in kp.bias.iter().zip(&k.bias) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn embedding_checks_channels() {
        let w = init_generator(&tiny(3)).unwrap();
        let k = generate_kernel(&w, &spec(&[0.5, 0.6])).unwrap();
        let img = ImageCHW::zeros(3, 8, 8).unwrap();
        assert!(matches!(
            embed_with_kernel(&img, &k),
            Err(Error::SpectralMismatch {
                image_channels: 3,
                kernel_channels: 2
            })
        ));
        let ok = embed_with_kernel(&ImageCHW::zeros(2, 8, 8).unwrap(), &k).unwrap();
        assert_eq!(ok.grid, (2, 2));
        assert_eq!(ok.tokens.row(0), &k.bias[..]);
    }

    #[test]
    fn config_validation() {
        let bad = GeneratorConfig {
            token_dim: 10,
            heads: 4,
            ..tiny(0)
        };
        assert!(init_generator(&bad).is_err());
    }
}
