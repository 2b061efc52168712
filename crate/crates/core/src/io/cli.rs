//! `fleximo` subcommands.
//!
//! Exit codes: 0 on success, 1 on a domain error or a failed `verify`,
//! 2 on a usage error. Domain errors are printed to stderr as
//! `{"error": {"kind": ..., "message": ...}}`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::diagnostics::{dft2_magnitude, local_entropy, token_fidelity};
use crate::encoder::{EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::numeric::Mat;
use crate::resize::{build_resize_matrix, ResizeSemantics, Strategy};
use crate::tokenizer::patchify;
use crate::verify::{run_suite, Suite};
use crate::wavegen::{generate_kernel, init_generator, GeneratorConfig, WavelengthSpec};

use super::fkt::{fkt_read, fkt_write, DType, FktTensor};
use super::pgm::{read_pgm, write_pgm_preview};
use super::sidecar::{Role, SidecarMeta, REPORT_SCHEMA};
use super::weights::save_generator;

const HP: ResizeSemantics = ResizeSemantics::HalfPixel;

#[derive(Parser, Debug)]
#[command(
    name = "fleximo",
    version,
    about = "Resolution-adaptive patch embedding toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a patch-embedding kernel (and bias) from band wavelengths.
    GenKernel {
        /// Comma-separated central wavelengths in micrometres.
        #[arg(long)]
        wavelengths: WavelengthSpec,
        #[arg(long, default_value_t = 16)]
        patch: usize,
        #[arg(long, default_value_t = 64)]
        embed_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        token_dim: usize,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 8)]
        weight_queries: usize,
        #[arg(long, default_value = "f64")]
        dtype: DType,
        /// Also write the generator parameters to this directory.
        #[arg(long)]
        save_generator: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resize a kernel to a new patch size.
    ResizeKernel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value = "pi")]
        method: Strategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bilinear resize matrix between two square patch sizes.
    BuildOperator {
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut an image into patch tokens with a kernel.
    Tokenize {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        /// Bias file; defaults to the one named in the kernel sidecar, else zeros.
        #[arg(long)]
        bias: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the transformer encoder over a token file.
    Encode {
        #[arg(long)]
        tokens: PathBuf,
        /// Encoder configuration JSON; missing fields take defaults, a missing
        /// `dim` takes the token width.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run invariant suites; exit 0 iff every check passes.
    Verify {
        /// pinv, recovery, equivariance, tokens or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Token fidelity of PI and linear resizing for a kernel.
    Compare {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Centered log spectrum and local entropy maps of an image.
    Analyze {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 9)]
        entropy_window: usize,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        #[arg(long, default_value = "")]
        out_prefix: String,
    },
    /// Convert a binary PGM to a single-channel FKT image.
    PgmToFkt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "f64")]
        dtype: DType,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": {"kind": e.kind(), "message": e.to_string()}})
            );
            1
        }
    }
}

fn configure_threads() {
    let n = std::env::var("FLEXIMO_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    // Fails only if the pool already exists, which is fine.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenKernel {
            wavelengths,
            patch,
            embed_dim,
            seed,
            token_dim,
            depth,
            heads,
            weight_queries,
            dtype,
            save_generator: save_dir,
            out,
        } => {
            let config = GeneratorConfig {
                token_dim,
                out_dim: embed_dim,
                patch,
                depth,
                heads,
                weight_queries,
                seed,
            };
            let w = init_generator(&config)?;
            let k = generate_kernel(&w, &wavelengths)?;
            if let Some(dir) = save_dir {
                save_generator(dir, &w)?;
            }
            let mut meta = kernel_meta(&wavelengths, patch);
            meta.set("generator", serde_json::to_value(&config)?);
            write_kernel(
                &out,
                &FktTensor::from_tensor4(&k.weights, dtype),
                &k.bias,
                dtype,
                meta,
            )?;
            println!("wrote {} dims {:?}", out.display(), k.weights.dims());
            Ok(0)
        }
        Command::ResizeKernel {
            input,
            to,
            method,
            out,
        } => {
            let (t, meta) = fkt_read(&input)?;
            let k = t.to_tensor4()?;
            let mut meta = meta.unwrap_or_else(|| SidecarMeta::with_role(Role::Kernel));
            let bias = read_bias(&input, &meta, k.dims()[0])?;
            let resized = if k.dims()[2] == to && k.dims()[3] == to {
                t.clone()
            } else {
                FktTensor::from_tensor4(&method.resize(&k, to, HP)?, t.dtype)
            };
            meta.patch_size = Some(to);
            meta.semantics = Some(HP.as_str().into());
            meta.set("resized_from", k.dims()[2]);
            meta.set("resize_method", method.as_str());
            write_kernel(&out, &resized, &bias, t.dtype, meta)?;
            println!("wrote {} dims {:?}", out.display(), resized.dims);
            Ok(0)
        }
        Command::BuildOperator { from, to, out } => {
            let op = build_resize_matrix((from, from), (to, to), HP)?;
            let mut meta = SidecarMeta::with_role(Role::Operator);
            meta.semantics = Some(HP.as_str().into());
            meta.set("src", json!([from, from]));
            meta.set("dst", json!([to, to]));
            let t = FktTensor::from_mat(op.matrix(), DType::F64);
            fkt_write(&out, &t, Some(&meta))?;
            println!("wrote {} dims {:?}", out.display(), t.dims);
            Ok(0)
        }
        Command::Tokenize {
            image,
            kernel,
            bias,
            out,
        } => {
            let (img_t, img_meta) = fkt_read(&image)?;
            let img = img_t.to_image()?;
            let (k_t, k_meta) = fkt_read(&kernel)?;
            let k = k_t.to_tensor4()?;
            let k_meta = k_meta.unwrap_or_default();
            let bias = match bias {
                Some(path) => fkt_read(path)?.0.data,
                None => read_bias(&kernel, &k_meta, k.dims()[0])?,
            };
            if let (Some(a), Some(b)) = (
                img_meta.as_ref().and_then(|m| m.lambdas_um.as_ref()),
                k_meta.lambdas_um.as_ref(),
            ) {
                if a != b {
                    return Err(Error::Config(format!(
                        "image wavelengths {a:?} differ from kernel wavelengths {b:?}"
                    )));
                }
            }
            let toks = patchify(&img, &k, &bias)?;
            let mut meta = SidecarMeta::with_role(Role::Tokens);
            meta.patch_size = Some(k.dims()[2]);
            meta.set("grid", json!([toks.grid.0, toks.grid.1]));
            let t = FktTensor::from_mat(&toks.tokens, DType::F64);
            fkt_write(&out, &t, Some(&meta))?;
            println!("wrote {} dims {:?}", out.display(), t.dims);
            Ok(0)
        }
        Command::Encode {
            tokens,
            config,
            seed,
            out,
        } => {
            let (t, _) = fkt_read(&tokens)?;
            let x = t.to_mat()?;
            let mut value = match config {
                Some(path) => serde_json::from_str::<Value>(&fs::read_to_string(path)?)?,
                None => json!({}),
            };
            let obj = value
                .as_object_mut()
                .ok_or_else(|| Error::Config("encoder config must be a JSON object".into()))?;
            obj.entry("dim").or_insert(json!(x.cols()));
            if let Some(seed) = seed {
                obj.insert("seed".into(), json!(seed));
            }
            let config: EncoderConfig = serde_json::from_value(value)?;
            let w = EncoderWeights::init(&config)?;
            let y = w.forward_mat(&x)?;
            let mut meta = SidecarMeta::with_role(Role::Features);
            meta.set("encoder", serde_json::to_value(&config)?);
            let ft = FktTensor::from_mat(&y, DType::F64);
            fkt_write(&out, &ft, Some(&meta))?;
            println!("wrote {} dims {:?}", out.display(), ft.dims);
            Ok(0)
        }
        Command::Verify { suite, json } => {
            let suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse::<Suite>()?]
            };
            let mut reports = Vec::new();
            for s in suites {
                let r = run_suite(s)?;
                for c in &r.checks {
                    println!(
                        "{} {}/{}: {:.3e} {} {:.1e} {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        s.as_str(),
                        c.name,
                        c.value,
                        c.relation,
                        c.tolerance,
                        c.detail
                    );
                }
                reports.push(r);
            }
            let passed = reports.iter().all(|r| r.passed);
            let failed: Vec<String> = reports
                .iter()
                .flat_map(|r| {
                    r.failures()
                        .map(move |c| format!("{}/{}", r.suite.as_str(), c.name))
                })
                .collect();
            if let Some(path) = json {
                write_json(
                    &path,
                    &json!({"schema": REPORT_SCHEMA, "passed": passed, "failed": failed, "suites": reports}),
                )?;
            }
            if passed {
                Ok(0)
            } else {
                eprintln!("violated: {}", failed.join(", "));
                Ok(1)
            }
        }
        Command::Compare {
            kernel,
            to,
            trials,
            seed,
            json,
        } => {
            let k = fkt_read(&kernel)?.0.to_tensor4()?;
            let mut reports = Vec::new();
            for strategy in [Strategy::Pi, Strategy::Linear] {
                let r = token_fidelity(&k, strategy, to, trials, seed)?;
                println!(
                    "{:<6} {}->{}: max |dot err| {:.3e}, mean {:.3e}, norm ratio {:.6} +- {:.2e}, E sq loss {:.3e}",
                    strategy.as_str(),
                    r.src_patch,
                    r.dst_patch,
                    r.max_abs_dot_error,
                    r.mean_abs_dot_error,
                    r.mean_norm_ratio,
                    r.std_norm_ratio,
                    r.expected_sq_loss
                );
                reports.push(r);
            }
            if let Some(path) = json {
                write_json(
                    &path,
                    &json!({"schema": REPORT_SCHEMA, "seed": seed, "reports": reports}),
                )?;
            }
            Ok(0)
        }
        Command::Analyze {
            image,
            entropy_window,
            bins,
            out_prefix,
        } => {
            let img = fkt_read(&image)?.0.to_image()?;
            let (c, h, w) = img.dims();
            let mut spectrum = Vec::with_capacity(c * h * w);
            let mut entropy = Vec::with_capacity(c * h * w);
            let mut channels = Vec::new();
            for ch in 0..c {
                let plane = img.channel(ch);
                let s = dft2_magnitude(&plane);
                let e = local_entropy(&plane, entropy_window, bins)?;
                write_pgm_preview(format!("{out_prefix}spectrum_c{ch}.pgm"), &s)?;
                write_pgm_preview(format!("{out_prefix}entropy_c{ch}.pgm"), &e)?;
                channels.push(json!({
                    "channel": ch,
                    "spectrum_dc": s[(h / 2, w / 2)],
                    "spectrum_max": s.max_abs(),
                    "entropy_mean": mean(&e),
                    "entropy_max": e.max_abs(),
                }));
                spectrum.extend_from_slice(s.as_slice());
                entropy.extend_from_slice(e.as_slice());
            }
            let mut meta = SidecarMeta::with_role(Role::Spectrum);
            meta.set("scale", "log1p_magnitude_centered");
            fkt_write(
                format!("{out_prefix}spectrum.fkt"),
                &FktTensor::new(vec![c, h, w], DType::F64, spectrum)?,
                Some(&meta),
            )?;
            let mut meta = SidecarMeta::with_role(Role::Entropy);
            meta.set("window", entropy_window);
            meta.set("bins", bins);
            fkt_write(
                format!("{out_prefix}entropy.fkt"),
                &FktTensor::new(vec![c, h, w], DType::F64, entropy)?,
                Some(&meta),
            )?;
            write_json(
                Path::new(&format!("{out_prefix}summary.json")),
                &json!({
                    "schema": REPORT_SCHEMA,
                    "image": [c, h, w],
                    "entropy_window": entropy_window,
                    "bins": bins,
                    "channels": channels,
                }),
            )?;
            println!("wrote {out_prefix}spectrum.fkt, {out_prefix}entropy.fkt and previews");
            Ok(0)
        }
        Command::PgmToFkt { input, dtype, out } => {
            let m = read_pgm(&input)?;
            let t = FktTensor::from_mat(&m, dtype);
            fkt_write(&out, &t, Some(&SidecarMeta::with_role(Role::Image)))?;
            println!("wrote {} dims {:?}", out.display(), t.dims);
            Ok(0)
        }
    }
}

fn mean(m: &Mat) -> f64 {
    m.as_slice().iter().sum::<f64>() / m.as_slice().len().max(1) as f64
}

fn kernel_meta(spec: &WavelengthSpec, patch: usize) -> SidecarMeta {
    let mut meta = SidecarMeta::with_role(Role::Kernel);
    meta.lambdas_um = Some(spec.as_slice().to_vec());
    meta.patch_size = Some(patch);
    meta.semantics = Some(HP.as_str().into());
    meta
}

/// `dir/k.fkt` → `dir/k.bias.fkt`.
fn bias_path(kernel: &Path) -> PathBuf {
    let stem = kernel.file_stem().unwrap_or_default().to_string_lossy();
    kernel.with_file_name(format!("{stem}.bias.fkt"))
}

/// Writes kernel, sidecar and companion bias file.
fn write_kernel(
    out: &Path,
    kernel: &FktTensor,
    bias: &[f64],
    dtype: DType,
    mut meta: SidecarMeta,
) -> Result<()> {
    let bias_file = bias_path(out);
    let name = bias_file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    meta.set("bias_file", name);
    fkt_write(out, kernel, Some(&meta))?;
    fkt_write(
        &bias_file,
        &FktTensor::from_vec(bias, dtype),
        Some(&SidecarMeta::with_role(Role::Bias)),
    )
}

/// Bias named by the kernel sidecar, or zeros when there is none.
fn read_bias(kernel: &Path, meta: &SidecarMeta, d_out: usize) -> Result<Vec<f64>> {
    match meta.provenance_str("bias_file") {
        Some(name) => {
            let path = kernel.with_file_name(name);
            let (t, _) = fkt_read(&path)?;
            if t.data.len() != d_out {
                return Err(Error::dims(format!(
                    "bias {} has {} values, kernel has {d_out} outputs",
                    path.display(),
                    t.data.len()
                )));
            }
            Ok(t.data)
        }
        None => Ok(vec![0.0; d_out]),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
