//! Resize a random patch-embedding kernel with PI and with plain bilinear
//! interpolation, and check which one keeps the tokens.
//!
//! cargo run --example pi_resize

use fleximo::numeric::{dot, Rng, Tensor4};
use fleximo::resize::{bilinear_resize_2d, pi_resize_kernel, ResizeSemantics, Strategy};

fn main() -> fleximo::Result<()> {
    let hp = ResizeSemantics::HalfPixel;
    let mut rng = Rng::new(0);
    let k = Tensor4::new([4, 3, 8, 8], rng.normal_vec(4 * 3 * 64))?;

    for target in [16, 12, 4] {
        let pi = pi_resize_kernel(&k, target, hp)?;
        let lin = Strategy::Linear.resize(&k, target, hp)?;
        // One patch, resized the same way the image would be.
        let x = rng.normal_mat(8, 8);
        let mx = bilinear_resize_2d(&x, (target, target))?;
        let want = dot(x.as_slice(), k.slice(0, 0));
        println!(
            "8 -> {target:>2}: original token {want:+.4}, PI {:+.4}, linear {:+.4}",
            dot(mx.as_slice(), pi.slice(0, 0)),
            dot(mx.as_slice(), lin.slice(0, 0)),
        );
    }
    Ok(())
}
