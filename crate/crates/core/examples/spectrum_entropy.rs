//! Centered log spectrum and local entropy of a synthetic scene, written as
//! PGM previews to the system temp directory.
//!
//! cargo run --release --example spectrum_entropy

use fleximo::diagnostics::{dft2_magnitude, local_entropy};
use fleximo::io::write_pgm_preview;
use fleximo::numeric::{Mat, Rng};

fn main() -> fleximo::Result<()> {
    let mut rng = Rng::new(2);
    // Smooth field on the left, texture on the right.
    let img = Mat::from_fn(64, 64, |y, x| {
        let smooth = ((x as f64) / 9.0).sin() + ((y as f64) / 13.0).cos();
        if x < 32 {
            smooth
        } else {
            smooth + rng.normal()
        }
    });
    let spectrum = dft2_magnitude(&img);
    let entropy = local_entropy(&img, 9, 64)?;

    let half_mean = |m: &Mat, right: bool| {
        let cols = if right { 32..64 } else { 0..32 };
        let n = (m.rows() * 32) as f64;
        (0..m.rows())
            .flat_map(|y| cols.clone().map(move |x| (y, x)))
            .map(|i| m[i])
            .sum::<f64>()
            / n
    };
    println!("spectrum DC (log1p) {:.3}", spectrum[(32, 32)]);
    println!(
        "mean local entropy: smooth half {:.3} bits, textured half {:.3} bits",
        half_mean(&entropy, false),
        half_mean(&entropy, true)
    );

    let dir = std::env::temp_dir();
    write_pgm_preview(dir.join("fleximo_spectrum.pgm"), &spectrum)?;
    write_pgm_preview(dir.join("fleximo_entropy.pgm"), &entropy)?;
    println!("previews in {}", dir.display());
    Ok(())
}
