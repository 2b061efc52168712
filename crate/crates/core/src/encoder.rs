//! Minimal pre-norm transformer encoder.
//!
//! Each block is `x + MHSA(LN(x))` followed by `x + MLP(LN(x))` with a GELU
//! MLP; a final layer norm closes the stack. No positional information is
//! injected here, so the forward pass is permutation-equivariant in the
//! token rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Mat, Rng};
use crate::tokenizer::TokenSequence;

pub(crate) const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub depth: usize,
    pub heads: usize,
    pub dim: usize,
    pub mlp_ratio: usize,
    pub ln_eps: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            heads: 4,
            dim: 128,
            mlp_ratio: 4,
            ln_eps: 1e-6,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::Config("mlp_ratio must be positive".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config(format!(
                "ln_eps must be > 0, got {}",
                self.ln_eps
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Affine map `x·w + b` applied row-wise; `w` is `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    pub(crate) fn random(rng: &mut Rng, d_in: usize, d_out: usize) -> Self {
        let w = rng.normal_mat(d_in, d_out).scale(INIT_STD);
        let b = rng
            .normal_vec(d_out)
            .into_iter()
            .map(|v| v * INIT_STD)
            .collect();
        Self { w, b }
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        let mut y = x.matmul(&self.w)?;
        for i in 0..y.rows() {
            for (o, b) in y.row_mut(i).iter_mut().zip(&self.b) {
                *o += b;
            }
        }
        Ok(y)
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl LayerNorm {
    fn new(dim: usize, eps: f64) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps,
        }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.clone();
        let n = x.cols() as f64;
        for i in 0..y.rows() {
            let row = y.row_mut(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        y
    }
}

/// Row-wise softmax of `q·kᵀ/√d_k`, max-subtracted.
pub fn attention_weights(q: &Mat, k: &Mat, d_k: usize) -> Result<Mat> {
    if q.cols() != d_k || k.cols() != d_k {
        return Err(Error::dims(format!(
            "attention: q is {:?}, k is {:?}, d_k = {d_k}",
            q.shape(),
            k.shape()
        )));
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut logits = q.matmul(&k.transpose())?.scale(scale);
    for i in 0..logits.rows() {
        let row = logits.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(logits)
}

/// Scaled dot-product attention `softmax(q·kᵀ/√d_k)·v`.
pub fn attention(q: &Mat, k: &Mat, v: &Mat, d_k: usize) -> Result<Mat> {
    if k.rows() != v.rows() {
        return Err(Error::dims(format!(
            "attention: {} keys but {} values",
            k.rows(),
            v.rows()
        )));
    }
    attention_weights(q, k, d_k)?.matmul(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Block {
    fn random(rng: &mut Rng, cfg: &EncoderConfig) -> Self {
        let d = cfg.dim;
        Self {
            ln1: LayerNorm::new(d, cfg.ln_eps),
            qkv: Linear::random(rng, d, 3 * d),
            proj: Linear::random(rng, d, d),
            ln2: LayerNorm::new(d, cfg.ln_eps),
            fc1: Linear::random(rng, d, cfg.mlp_ratio * d),
            fc2: Linear::random(rng, cfg.mlp_ratio * d, d),
        }
    }

    fn forward(&self, x: &Mat, heads: usize, trace: Option<&mut Vec<Mat>>) -> Result<Mat> {
        let d = x.cols();
        let hd = d / heads;
        let n = x.rows();
        let qkv = self.qkv.forward(&self.ln1.forward(x))?;
        let take = |offset: usize| Mat::from_fn(n, hd, |i, j| qkv[(i, offset + j)]);

        let mut mixed = Mat::zeros(n, d);
        let mut probs_out = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = take(h * hd);
            let k = take(d + h * hd);
            let v = take(2 * d + h * hd);
            let probs = attention_weights(&q, &k, hd)?;
            let out = probs.matmul(&v)?;
            for i in 0..n {
                mixed.row_mut(i)[h * hd..(h + 1) * hd].copy_from_slice(out.row(i));
            }
            probs_out.push(probs);
        }
        if let Some(t) = trace {
            t.extend(probs_out);
        }
        let x = x.add(&self.proj.forward(&mixed)?)?;
        let hidden = self.fc1.forward(&self.ln2.forward(&x))?.map(gelu);
        x.add(&self.fc2.forward(&hidden)?)
    }

    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        visit_ln(&self.ln1, &format!("{prefix}.ln1"), f);
        visit_linear(&self.qkv, &format!("{prefix}.qkv"), f);
        visit_linear(&self.proj, &format!("{prefix}.proj"), f);
        visit_ln(&self.ln2, &format!("{prefix}.ln2"), f);
        visit_linear(&self.fc1, &format!("{prefix}.fc1"), f);
        visit_linear(&self.fc2, &format!("{prefix}.fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamSink<'_>) -> Result<()> {
        visit_ln_mut(&mut self.ln1, &format!("{prefix}.ln1"), f)?;
        visit_linear_mut(&mut self.qkv, &format!("{prefix}.qkv"), f)?;
        visit_linear_mut(&mut self.proj, &format!("{prefix}.proj"), f)?;
        visit_ln_mut(&mut self.ln2, &format!("{prefix}.ln2"), f)?;
        visit_linear_mut(&mut self.fc1, &format!("{prefix}.fc1"), f)?;
        visit_linear_mut(&mut self.fc2, &format!("{prefix}.fc2"), f)
    }
}

/// Receives `(name, dims, values)` for each parameter, in a fixed order.
pub type ParamVisitor<'a> = dyn FnMut(String, Vec<usize>, &[f64]) + 'a;
/// Fills each parameter in place from `(name, dims)`.
pub type ParamSink<'a> = dyn FnMut(&str, &[usize], &mut [f64]) -> Result<()> + 'a;

pub(crate) fn visit_linear(l: &Linear, name: &str, f: &mut ParamVisitor<'_>) {
    f(
        format!("{name}.weight"),
        vec![l.w.rows(), l.w.cols()],
        l.w.as_slice(),
    );
    f(format!("{name}.bias"), vec![l.b.len()], &l.b);
}

pub(crate) fn visit_linear_mut(l: &mut Linear, name: &str, f: &mut ParamSink<'_>) -> Result<()> {
    let dims = [l.w.rows(), l.w.cols()];
    f(&format!("{name}.weight"), &dims, l.w.as_mut_slice())?;
    let n = [l.b.len()];
    f(&format!("{name}.bias"), &n, &mut l.b)
}

fn visit_ln(l: &LayerNorm, name: &str, f: &mut ParamVisitor<'_>) {
    f(format!("{name}.gamma"), vec![l.gamma.len()], &l.gamma);
    f(format!("{name}.beta"), vec![l.beta.len()], &l.beta);
}

fn visit_ln_mut(l: &mut LayerNorm, name: &str, f: &mut ParamSink<'_>) -> Result<()> {
    let n = [l.gamma.len()];
    f(&format!("{name}.gamma"), &n, &mut l.gamma)?;
    f(&format!("{name}.beta"), &n, &mut l.beta)
}

/// Encoder parameters: a deterministic function of the config (and its seed).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderWeights {
    pub config: EncoderConfig,
    pub blocks: Vec<Block>,
    pub final_ln: LayerNorm,
}

impl EncoderWeights {
    pub fn init(config: &EncoderConfig) -> Result<Self> {
        Self::init_with(config, &mut Rng::new(config.seed))
    }

    pub(crate) fn init_with(config: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let blocks = (0..config.depth)
            .map(|_| Block::random(rng, config))
            .collect();
        Ok(Self {
            config: config.clone(),
            blocks,
            final_ln: LayerNorm::new(config.dim, config.ln_eps),
        })
    }

    /// Forward pass over raw token rows.
    pub fn forward_mat(&self, x: &Mat) -> Result<Mat> {
        self.run(x, None)
    }

    /// Forward pass that also returns every attention-probability matrix,
    /// ordered by block then head.
    pub fn forward_traced(&self, x: &Mat) -> Result<(Mat, Vec<Mat>)> {
        let mut trace = Vec::new();
        let out = self.run(x, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(&self, x: &Mat, mut trace: Option<&mut Vec<Mat>>) -> Result<Mat> {
        if x.cols() != self.config.dim {
            return Err(Error::dims(format!(
                "encoder width {} but tokens have {} columns",
                self.config.dim,
                x.cols()
            )));
        }
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h, self.config.heads, trace.as_deref_mut())?;
        }
        Ok(self.final_ln.forward(&h))
    }

    /// Calls `f(name, dims, values)` for every parameter in a fixed order.
    pub fn visit(&self, f: &mut ParamVisitor<'_>) {
        self.visit_prefixed("", f)
    }

    pub(crate) fn visit_prefixed(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("{prefix}blocks.{i}"), f);
        }
        visit_ln(&self.final_ln, &format!("{prefix}final_ln"), f);
    }

    pub fn visit_mut(&mut self, f: &mut ParamSink<'_>) -> Result<()> {
        self.visit_mut_prefixed("", f)
    }

    pub(crate) fn visit_mut_prefixed(&mut self, prefix: &str, f: &mut ParamSink<'_>) -> Result<()> {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}blocks.{i}"), f)?;
        }
        visit_ln_mut(&mut self.final_ln, &format!("{prefix}final_ln"), f)
    }
}

/// Runs the encoder over a token sequence; grid and CLS flag carry over.
pub fn encoder_forward(w: &EncoderWeights, tokens: &TokenSequence) -> Result<TokenSequence> {
    let out = w.forward_mat(&tokens.tokens)?;
    TokenSequence::new(out, tokens.grid, tokens.has_cls)
}
