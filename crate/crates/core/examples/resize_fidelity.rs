//! Monte Carlo token fidelity of PI and linear kernel resizing on Gaussian
//! patches, for upsampling and downsampling.
//!
//! cargo run --release --example resize_fidelity

use fleximo::diagnostics::token_fidelity;
use fleximo::numeric::{Rng, Tensor4};
use fleximo::resize::Strategy;

fn main() -> fleximo::Result<()> {
    let k = Tensor4::new([16, 3, 8, 8], Rng::new(9).normal_vec(16 * 3 * 64))?;
    println!(
        "{:<7} {:>5} {:>12} {:>12} {:>10} {:>12}",
        "method", "to", "max err", "mean err", "norm", "E sq loss"
    );
    for to in [4, 6, 8, 12, 16] {
        for strategy in [Strategy::Pi, Strategy::Linear] {
            let r = token_fidelity(&k, strategy, to, 1000, 7)?;
            println!(
                "{:<7} {:>5} {:>12.3e} {:>12.3e} {:>10.4} {:>12.3e}",
                strategy.as_str(),
                to,
                r.max_abs_dot_error,
                r.mean_abs_dot_error,
                r.mean_norm_ratio,
                r.expected_sq_loss
            );
        }
    }
    Ok(())
}
