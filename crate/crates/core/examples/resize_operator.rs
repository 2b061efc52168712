//! Build the explicit bilinear resize matrix, inspect it, and compute its
//! pseudo-inverse.
//!
//! cargo run --example resize_operator

use fleximo::diagnostics::moore_penrose_residuals;
use fleximo::numeric::{pinv_default, svd};
use fleximo::resize::{build_resize_matrix, ResizeSemantics};

fn main() -> fleximo::Result<()> {
    let op = build_resize_matrix((2, 2), (4, 4), ResizeSemantics::HalfPixel)?;
    println!("2x2 -> 4x4 operator:\n{:?}", op.matrix());

    for (src, dst) in [(4, 8), (8, 4), (5, 3)] {
        let m =
            build_resize_matrix((src, src), (dst, dst), ResizeSemantics::HalfPixel)?.into_matrix();
        let s = svd(&m)?;
        let p = pinv_default(&m)?;
        let r = moore_penrose_residuals(&m, &p)?;
        println!(
            "{src}x{src} -> {dst}x{dst}: shape {:?}, rank {}, sigma [{:.3}, {:.3}], Penrose max residual {:.1e}",
            m.shape(),
            s.rank(1e-12),
            s.s.last().unwrap(),
            s.sigma_max(),
            r.max()
        );
    }
    Ok(())
}
