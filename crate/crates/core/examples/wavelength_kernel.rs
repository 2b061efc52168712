//! Generate patch-embedding kernels from band wavelengths: RGB, a two-band
//! SAR-style input and a twelve-band multispectral input.
//!
//! cargo run --example wavelength_kernel

use fleximo::wavegen::{generate_kernel, init_generator, GeneratorConfig, WavelengthSpec};

fn main() -> fleximo::Result<()> {
    let config = GeneratorConfig {
        token_dim: 64,
        out_dim: 32,
        patch: 8,
        seed: 1,
        ..Default::default()
    };
    let w = init_generator(&config)?;

    let inputs: [(&str, &str); 3] = [
        ("rgb", "0.665,0.56,0.49"),
        ("sar", "55000,55000"),
        (
            "msi",
            "0.443,0.49,0.56,0.665,0.705,0.74,0.783,0.842,0.865,0.945,1.61,2.19",
        ),
    ];
    for (name, bands) in inputs {
        let spec: WavelengthSpec = bands.parse()?;
        let k = generate_kernel(&w, &spec)?;
        println!(
            "{name}: {} bands -> kernel {:?}, bias {}, max |w| {:.4}",
            spec.len(),
            k.weights.dims(),
            k.bias.len(),
            k.weights.max_abs()
        );
    }

    // Reordering the bands reorders the kernel's channel axis, nothing else.
    let spec: WavelengthSpec = "0.49,0.56,0.665".parse()?;
    let perm = [2, 0, 1];
    let a = generate_kernel(&w, &spec)?;
    let b = generate_kernel(&w, &spec.permuted(&perm)?)?;
    println!(
        "permuted bands: max diff {:.2e}",
        b.weights.max_abs_diff(&a.weights.permute_axis1(&perm)?)
    );
    Ok(())
}
