//! Invariant suites behind `fleximo verify`.
//!
//! Every check measures one scalar (usually a worst-case error) and compares
//! it against a fixed tolerance. The check functions are parameterized so the
//! same code serves the quick CLI suites and the larger acceptance runs.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{moore_penrose_residuals, token_fidelity};
use crate::encoder::{EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::numeric::{dot, lstsq, pinv_default, Mat, Rng, Tensor4};
use crate::resize::{
    bilinear_resize_2d, build_resize_matrix, pi_resize_kernel, ResizeSemantics, Strategy,
};
use crate::tokenizer::{patchify, resize_image_per_patch, token_count, ImageCHW};
use crate::wavegen::{generate_kernel, init_generator, GeneratorConfig, WavelengthSpec};

const HP: ResizeSemantics = ResizeSemantics::HalfPixel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Pinv,
    Recovery,
    Equivariance,
    Tokens,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Pinv,
        Suite::Recovery,
        Suite::Equivariance,
        Suite::Tokens,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Pinv => "pinv",
            Suite::Recovery => "recovery",
            Suite::Equivariance => "equivariance",
            Suite::Tokens => "tokens",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

/// One measured property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    /// `"<="` or `">"`: how `value` must compare with `tolerance`.
    pub relation: String,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            passed: value <= tolerance,
            value,
            tolerance,
            relation: "<=".into(),
            detail: detail.into(),
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            passed: value > threshold,
            value,
            tolerance: threshold,
            relation: ">".into(),
            detail: detail.into(),
        }
    }

    pub fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            passed: ok,
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            relation: "<=".into(),
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Pinv => vec![
            operator_faithfulness(1..=6, 5, 1)?,
            row_stochasticity(1..=6)?,
            operator_penrose(1..=5, 1e-8)?,
            pinv_matches_lstsq(&[(6, 4), (4, 6), (9, 9)], 2)?,
        ],
        Suite::Recovery => vec![
            upsampling_recovery(&[(4, 8), (4, 16), (8, 16), (3, 7)], 200, 3)?,
            basis_recovery(&[2, 3, 4])?,
            downsampling_least_squares(&[(8, 4), (16, 8)], 4, 4)?,
            linear_baseline_worse(&[(4, 8), (3, 7)], 5, 5)?,
            transpose_round_trip(&[(4, 8), (3, 7), (5, 16)], 6)?,
        ],
        Suite::Equivariance => vec![
            generator_permutation(&[1, 2, 4, 12], 7)?,
            generator_determinism(8)?,
            encoder_permutation(9)?,
            encoder_attention_rows(10)?,
        ],
        Suite::Tokens => vec![
            token_count_table()?,
            patchify_oracle(11)?,
            end_to_end_recovery(4, 12)?,
        ],
    };
    Ok(SuiteReport::new(suite, checks))
}

/// Reference bilinear sample at target `(ty, tx)`, written out independently
/// of the resize module.
fn reference_sample(img: &Mat, dst: (usize, usize), ty: usize, tx: usize) -> f64 {
    let (h, w) = img.shape();
    let coord = |t: usize, src: usize, dst: usize| {
        let s = (t as f64 + 0.5) * (src as f64) / (dst as f64) - 0.5;
        let s = s.max(0.0).min((src - 1) as f64);
        let i0 = s as usize;
        let i1 = if i0 + 1 < src { i0 + 1 } else { i0 };
        (i0, i1, s - i0 as f64)
    };
    let (y0, y1, fy) = coord(ty, h, dst.0);
    let (x0, x1, fx) = coord(tx, w, dst.1);
    img[(y0, x0)] * (1.0 - fy) * (1.0 - fx)
        + img[(y0, x1)] * (1.0 - fy) * fx
        + img[(y1, x0)] * fy * (1.0 - fx)
        + img[(y1, x1)] * fy * fx
}

fn shape_pairs(
    sides: std::ops::RangeInclusive<usize>,
) -> impl Iterator<Item = ((usize, usize), (usize, usize))> {
    let shapes: Vec<(usize, usize)> = sides
        .clone()
        .flat_map(|h| sides.clone().map(move |w| (h, w)))
        .collect();
    let outer = shapes.clone();
    outer
        .into_iter()
        .flat_map(move |s| shapes.clone().into_iter().map(move |d| (s, d)))
}

/// `M·vec(x)` against the direct resize and a scalar reference, for every
/// pair of shapes with sides in `sides`.
pub fn operator_faithfulness(
    sides: std::ops::RangeInclusive<usize>,
    images: usize,
    seed: u64,
) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (src, dst) in shape_pairs(sides) {
        let op = build_resize_matrix(src, dst, HP)?;
        for _ in 0..images {
            let x = rng.normal_mat(src.0, src.1);
            let via_matrix = op.apply(&x)?;
            let direct = bilinear_resize_2d(&x, dst)?;
            worst = worst.max(via_matrix.max_abs_diff(&direct));
            for i in 0..dst.0 {
                for j in 0..dst.1 {
                    worst = worst.max((via_matrix[(i, j)] - reference_sample(&x, dst, i, j)).abs());
                }
            }
        }
        pairs += 1;
    }
    Ok(Check::at_most(
        "operator_faithfulness",
        worst,
        1e-12,
        format!("{pairs} shape pairs x {images} images"),
    ))
}

pub fn row_stochasticity(sides: std::ops::RangeInclusive<usize>) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut out_of_range = 0usize;
    for (src, dst) in shape_pairs(sides) {
        let op = build_resize_matrix(src, dst, HP)?;
        let m = op.matrix();
        for i in 0..m.rows() {
            let row = m.row(i);
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            out_of_range += row.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        }
        if src == dst && m != &Mat::identity(m.rows()) {
            out_of_range += 1;
        }
    }
    let mut c = Check::at_most(
        "row_stochasticity",
        worst,
        1e-12,
        format!("{out_of_range} entries outside [0, 1]"),
    );
    c.passed &= out_of_range == 0;
    Ok(c)
}

/// Penrose residuals of `pinv(M)` and `pinv(Mᵀ)` for every operator.
pub fn operator_penrose(sides: std::ops::RangeInclusive<usize>, tol: f64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    let mut count = 0;
    for (src, dst) in shape_pairs(sides) {
        let m = build_resize_matrix(src, dst, HP)?.into_matrix();
        for (label, a) in [("M", m.clone()), ("Mt", m.transpose())] {
            let r = moore_penrose_residuals(&a, &pinv_default(&a)?)?.max();
            count += 1;
            if r > worst {
                worst = r;
                where_ = format!("{label} {src:?}->{dst:?}");
            }
        }
    }
    Ok(Check::at_most(
        "operator_penrose",
        worst,
        tol,
        format!("{count} matrices, worst at {where_}"),
    ))
}

pub fn pinv_matches_lstsq(shapes: &[(usize, usize)], seed: u64) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for &(r, c) in shapes {
        let m = rng.normal_mat(r, c);
        let via_lstsq = lstsq(&m, &Mat::identity(r))?;
        worst = worst.max(pinv_default(&m)?.max_abs_diff(&via_lstsq));
    }
    Ok(Check::at_most(
        "pinv_matches_lstsq",
        worst,
        1e-10,
        format!("{shapes:?}"),
    ))
}

fn relative_token_error(m: &Mat, omega: &[f64], omega_hat: &[f64], x: &[f64]) -> Result<f64> {
    let a = dot(x, omega);
    let b = dot(&m.matvec(x)?, omega_hat);
    Ok((a - b).abs() / (1.0 + a.abs()))
}

/// `|⟨Mx, ω̂⟩ − ⟨x, ω⟩| / (1 + |⟨x, ω⟩|)` over random `ω` and `x`, plus every
/// standard basis `x`.
pub fn upsampling_recovery(pairs: &[(usize, usize)], draws: usize, seed: u64) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for &(p, q) in pairs {
        if q < p {
            return Err(Error::Config(format!("{p}->{q} is not upsampling")));
        }
        let m = build_resize_matrix((p, p), (q, q), HP)?.into_matrix();
        let k = Tensor4::new([draws, 1, p, p], rng.normal_vec(draws * p * p))?;
        let k_hat = pi_resize_kernel(&k, q, HP)?;
        for (omega, omega_hat) in k.slices().zip(k_hat.slices()) {
            let x = rng.normal_vec(p * p);
            worst = worst.max(relative_token_error(&m, omega, omega_hat, &x)?);
        }
        // Full basis against a handful of slices.
        let mut e = vec![0.0; p * p];
        for j in 0..p * p {
            e[j] = 1.0;
            for (omega, omega_hat) in k.slices().zip(k_hat.slices()).take(8) {
                worst = worst.max(relative_token_error(&m, omega, omega_hat, &e)?);
            }
            e[j] = 0.0;
        }
    }
    Ok(Check::at_most(
        "upsampling_recovery",
        worst,
        1e-10,
        format!("pairs {pairs:?}"),
    ))
}

/// Exact recovery over the full standard basis for both `x` and `ω`.
pub fn basis_recovery(patches: &[usize]) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for &p in patches {
        for q in [p + 1, 2 * p, 3 * p] {
            let m = build_resize_matrix((p, p), (q, q), HP)?.into_matrix();
            let n = p * p;
            let k = Tensor4::from_fn([n, 1, p, p], |[s, _, y, x]| {
                f64::from(u8::from(s == y * p + x))
            });
            let k_hat = pi_resize_kernel(&k, q, HP)?;
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                for (omega, omega_hat) in k.slices().zip(k_hat.slices()) {
                    worst = worst.max(relative_token_error(&m, omega, omega_hat, &e)?);
                }
                e[j] = 0.0;
            }
        }
    }
    Ok(Check::at_most(
        "basis_recovery",
        worst,
        1e-10,
        format!("patches {patches:?}"),
    ))
}

pub fn downsampling_least_squares(
    pairs: &[(usize, usize)],
    slices: usize,
    seed: u64,
) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for &(p, q) in pairs {
        let mt = build_resize_matrix((p, p), (q, q), HP)?
            .into_matrix()
            .transpose();
        let k = Tensor4::new([slices, 1, p, p], rng.normal_vec(slices * p * p))?;
        let k_hat = pi_resize_kernel(&k, q, HP)?;
        for (omega, omega_hat) in k.slices().zip(k_hat.slices()) {
            let want = lstsq(&mt, &Mat::column(omega))?;
            worst = worst.max(want.max_abs_diff(&Mat::column(omega_hat)));
        }
    }
    Ok(Check::at_most(
        "downsampling_least_squares",
        worst,
        1e-8,
        format!("pairs {pairs:?}"),
    ))
}

/// Linear-interpolated kernels must lose to PI on upsampling: the smallest
/// gap `max_err(linear) − max_err(PI)` across kernels has to be positive and
/// the linear error itself above 1e-3.
pub fn linear_baseline_worse(pairs: &[(usize, usize)], kernels: usize, seed: u64) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let mut min_linear = f64::INFINITY;
    let mut max_pi: f64 = 0.0;
    for &(p, q) in pairs {
        for i in 0..kernels {
            let k = Tensor4::new([4, 2, p, p], rng.normal_vec(8 * p * p))?;
            let s = seed.wrapping_add(i as u64);
            let pi = token_fidelity(&k, Strategy::Pi, q, 100, s)?;
            let lin = token_fidelity(&k, Strategy::Linear, q, 100, s)?;
            min_linear = min_linear.min(lin.max_abs_dot_error);
            max_pi = max_pi.max(pi.max_abs_dot_error);
        }
    }
    Ok(Check::above(
        "linear_baseline_worse",
        min_linear,
        max_pi.max(1e-3),
        format!("smallest linear max error vs largest PI max error {max_pi:.3e}"),
    ))
}

/// After upsampling with PI, applying `Mᵀ` returns the original slice.
pub fn transpose_round_trip(pairs: &[(usize, usize)], seed: u64) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for &(p, q) in pairs {
        let mt = build_resize_matrix((p, p), (q, q), HP)?
            .into_matrix()
            .transpose();
        let k = Tensor4::new([3, 2, p, p], rng.normal_vec(6 * p * p))?;
        let k_hat = pi_resize_kernel(&k, q, HP)?;
        for (omega, omega_hat) in k.slices().zip(k_hat.slices()) {
            let back = mt.matvec(omega_hat)?;
            let err = back
                .iter()
                .zip(omega)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err);
        }
    }
    Ok(Check::at_most(
        "transpose_round_trip",
        worst,
        1e-8,
        format!("pairs {pairs:?}"),
    ))
}

fn small_generator(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        token_dim: 32,
        out_dim: 16,
        patch: 4,
        depth: 2,
        heads: 4,
        weight_queries: 4,
        seed,
    }
}

const BANDS_UM: [f64; 12] = [
    0.443, 0.490, 0.560, 0.665, 0.705, 0.740, 0.783, 0.842, 0.865, 0.945, 1.610, 2.190,
];

/// Channel permutation equivariance (relative to the kernel's max entry)
/// and shape contract for each band count.
pub fn generator_permutation(band_counts: &[usize], seed: u64) -> Result<Check> {
    let cfg = small_generator(seed);
    let w = init_generator(&cfg)?;
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut shape_ok = true;
    for &c in band_counts {
        let spec = WavelengthSpec::new(BANDS_UM[..c.min(12)].to_vec())?;
        let k = generate_kernel(&w, &spec)?;
        shape_ok &= k.weights.dims() == [cfg.out_dim, spec.len(), cfg.patch, cfg.patch]
            && k.bias.len() == cfg.out_dim;
        let perm = rng.permutation(spec.len());
        let kp = generate_kernel(&w, &spec.permuted(&perm)?)?;
        let want = k.weights.permute_axis1(&perm)?;
        worst = worst.max(kp.weights.max_abs_diff(&want) / want.max_abs().max(f64::MIN_POSITIVE));
        let bias_scale = k
            .bias
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let bias_err = kp
            .bias
            .iter()
            .zip(&k.bias)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(bias_err / bias_scale);
    }
    let mut c = Check::at_most(
        "generator_permutation",
        worst,
        1e-6,
        format!("band counts {band_counts:?}, shapes ok: {shape_ok}"),
    );
    c.passed &= shape_ok;
    Ok(c)
}

pub fn generator_determinism(seed: u64) -> Result<Check> {
    let spec = WavelengthSpec::new(BANDS_UM[..4].to_vec())?;
    let a = generate_kernel(&init_generator(&small_generator(seed))?, &spec)?;
    let b = generate_kernel(&init_generator(&small_generator(seed))?, &spec)?;
    let same_bits = a
        .weights
        .as_slice()
        .iter()
        .chain(&a.bias)
        .zip(b.weights.as_slice().iter().chain(&b.bias))
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let other = generate_kernel(&init_generator(&small_generator(seed + 1))?, &spec)?;
    Ok(Check::flag(
        "generator_determinism",
        same_bits && other.weights != a.weights,
        "same seed gives identical bits, different seed differs",
    ))
}

fn small_encoder(seed: u64) -> EncoderConfig {
    EncoderConfig {
        depth: 3,
        heads: 4,
        dim: 16,
        seed,
        ..Default::default()
    }
}

pub fn encoder_permutation(seed: u64) -> Result<Check> {
    let w = EncoderWeights::init(&small_encoder(seed))?;
    let mut rng = Rng::new(seed);
    let x = rng.normal_mat(10, 16);
    let perm = rng.permutation(10);
    let a = w.forward_mat(&x)?.select_rows(&perm);
    let b = w.forward_mat(&x.select_rows(&perm))?;
    Ok(Check::at_most(
        "encoder_permutation",
        a.max_abs_diff(&b),
        1e-9,
        "10 tokens, depth 3",
    ))
}

pub fn encoder_attention_rows(seed: u64) -> Result<Check> {
    let w = EncoderWeights::init(&small_encoder(seed))?;
    let x = Rng::new(seed).normal_mat(9, 16).scale(5.0);
    let (_, trace) = w.forward_traced(&x)?;
    let worst = trace
        .iter()
        .flat_map(|p| (0..p.rows()).map(move |i| (p.row(i).iter().sum::<f64>() - 1.0).abs()))
        .fold(0.0f64, f64::max);
    Ok(Check::at_most(
        "encoder_attention_rows",
        worst,
        1e-12,
        format!("{} attention maps", trace.len()),
    ))
}

/// `(image side, patch) → tokens` rows from fine-tuning ablations.
pub const TOKEN_TABLE: [(usize, usize, usize); 9] = [
    (56, 4, 196),
    (112, 8, 196),
    (224, 8, 784),
    (224, 16, 196),
    (448, 16, 784),
    (896, 16, 3136),
    (896, 64, 196),
    (512, 8, 4096),
    (128, 4, 1024),
];

pub fn token_count_table() -> Result<Check> {
    let mismatches: Vec<String> = TOKEN_TABLE
        .iter()
        .filter_map(|&(side, p, want)| match token_count(side, side, p) {
            Ok(n) if n == want => None,
            other => Some(format!("({side},{p}) -> {other:?}, want {want}")),
        })
        .collect();
    Ok(Check::flag(
        "token_count_table",
        mismatches.is_empty(),
        mismatches.join("; "),
    ))
}

pub fn patchify_oracle(seed: u64) -> Result<Check> {
    let mut rng = Rng::new(seed);
    let (c, h, w, p, d) = (3, 16, 12, 4, 5);
    let img = ImageCHW::new(c, h, w, rng.normal_vec(c * h * w))?;
    let k = Tensor4::new([d, c, p, p], rng.normal_vec(d * c * p * p))?;
    let bias = rng.normal_vec(d);
    let toks = patchify(&img, &k, &bias)?;
    let mut worst: f64 = 0.0;
    for i in 0..h / p {
        for j in 0..w / p {
            for (o, &b) in bias.iter().enumerate() {
                let mut acc = b;
                for ch in 0..c {
                    for y in 0..p {
                        for x in 0..p {
                            acc += img.get(ch, i * p + y, j * p + x) * k.get([o, ch, y, x]);
                        }
                    }
                }
                worst = worst.max((toks.tokens[(i * (w / p) + j, o)] - acc).abs());
            }
        }
    }
    Ok(Check::at_most(
        "patchify_oracle",
        worst,
        1e-12,
        "3x16x12 image, P=4",
    ))
}

/// Tokens and encoder features from (image, kernel) versus (per-patch
/// resized image, PI-resized kernel) at twice the patch size.
pub fn end_to_end_recovery(patch: usize, seed: u64) -> Result<Check> {
    let (tok_err, feat_err) = end_to_end_errors(patch, 2 * patch, seed)?;
    let mut c = Check::at_most(
        "end_to_end_recovery",
        tok_err,
        1e-9,
        format!(
            "P {patch} -> {}, encoder max diff {feat_err:.3e} (tol 1e-8)",
            2 * patch
        ),
    );
    c.passed &= feat_err <= 1e-8;
    Ok(c)
}

/// Max token difference and max encoder-feature difference for the
/// end-to-end comparison.
pub fn end_to_end_errors(patch: usize, new_patch: usize, seed: u64) -> Result<(f64, f64)> {
    let gen_cfg = GeneratorConfig {
        patch,
        ..small_generator(seed)
    };
    let spec = WavelengthSpec::new(vec![0.49, 0.56, 0.665])?;
    let k = generate_kernel(&init_generator(&gen_cfg)?, &spec)?;
    let mut rng = Rng::new(seed);
    let (h, w) = (4 * patch, 3 * patch);
    let img = ImageCHW::new(3, h, w, rng.normal_vec(3 * h * w))?;

    let base = patchify(&img, &k.weights, &k.bias)?;
    let big_img = resize_image_per_patch(&img, patch, new_patch, HP)?;
    let big_k = pi_resize_kernel(&k.weights, new_patch, HP)?;
    let resized = patchify(&big_img, &big_k, &k.bias)?;
    let tok_err = base.tokens.max_abs_diff(&resized.tokens);

    let enc = EncoderWeights::init(&EncoderConfig {
        dim: gen_cfg.out_dim,
        ..small_encoder(seed)
    })?;
    let feat_err = enc
        .forward_mat(&base.tokens)?
        .max_abs_diff(&enc.forward_mat(&resized.tokens)?);
    Ok((tok_err, feat_err))
}
