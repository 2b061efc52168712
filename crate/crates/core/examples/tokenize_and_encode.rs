//! Patchify an image with a generated kernel, add positional embeddings and
//! a class token, and run the transformer encoder.
//!
//! cargo run --example tokenize_and_encode

use fleximo::encoder::{encoder_forward, EncoderConfig, EncoderWeights};
use fleximo::numeric::Rng;
use fleximo::tokenizer::{assemble, interp_pos_embed, ImageCHW, PosEmbed};
use fleximo::wavegen::{embed_with_kernel, generate_kernel, init_generator, GeneratorConfig};

fn main() -> fleximo::Result<()> {
    let dim = 32;
    let gen = init_generator(&GeneratorConfig {
        token_dim: 32,
        out_dim: dim,
        patch: 16,
        seed: 3,
        ..Default::default()
    })?;
    let kernel = generate_kernel(&gen, &"0.665,0.56,0.49".parse()?)?;

    let mut rng = Rng::new(4);
    let img = ImageCHW::new(3, 224, 224, rng.normal_vec(3 * 224 * 224))?.with_gsd(10.0);
    let tokens = embed_with_kernel(&img, &kernel)?;
    println!(
        "224x224 at P=16: {} tokens on a {:?} grid",
        tokens.len(),
        tokens.grid
    );

    // A table learned for a 7x7 grid, stretched to 14x14.
    let pe = PosEmbed::new(
        (7, 7),
        rng.normal_mat(49, dim).scale(0.02),
        Some(vec![0.0; dim]),
    )?;
    let pe = interp_pos_embed(&pe, tokens.grid)?;
    let cls = rng.normal_vec(dim);
    let seq = assemble(&tokens, &pe, &cls)?;

    let enc = EncoderWeights::init(&EncoderConfig {
        depth: 2,
        heads: 4,
        dim,
        seed: 5,
        ..Default::default()
    })?;
    let out = encoder_forward(&enc, &seq)?;
    println!(
        "encoder output {:?}, class token head {:?}",
        out.tokens.shape(),
        &out.tokens.row(0)[..4]
    );
    Ok(())
}
