//! Sequence length for common image sizes and patch sizes: the same scene
//! at a finer GSD needs a larger patch to keep the token count.
//!
//! cargo run --example token_counts

use fleximo::tokenizer::token_count;

fn main() -> fleximo::Result<()> {
    let sides = [56, 112, 128, 224, 448, 512, 896];
    let patches = [4, 8, 16, 32, 64];
    print!("{:>6}", "side");
    for p in patches {
        print!("{:>8}", format!("P={p}"));
    }
    println!();
    for side in sides {
        print!("{side:>6}");
        for p in patches {
            match token_count(side, side, p) {
                Ok(n) => print!("{n:>8}"),
                Err(_) => print!("{:>8}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
