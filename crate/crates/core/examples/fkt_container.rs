//! Write a kernel with its JSON sidecar, read both back, and show how
//! damaged files are rejected.
//!
//! cargo run --example fkt_container

use fleximo::io::{
    decode, encode, fkt_read, fkt_write, sidecar_path, DType, FktTensor, Role, SidecarMeta,
};
use fleximo::numeric::{Rng, Tensor4};

fn main() -> fleximo::Result<()> {
    let k = Tensor4::new([8, 2, 4, 4], Rng::new(0).normal_vec(256))?;
    let mut meta = SidecarMeta::with_role(Role::Kernel);
    meta.lambdas_um = Some(vec![0.842, 1.61]);
    meta.patch_size = Some(4);
    meta.semantics = Some("half_pixel".into());

    let path = std::env::temp_dir().join("fleximo_example_kernel.fkt");
    fkt_write(&path, &FktTensor::from_tensor4(&k, DType::F64), Some(&meta))?;
    let (back, back_meta) = fkt_read(&path)?;
    println!(
        "read {:?}, bit-exact: {}",
        back.dims,
        back.data == k.as_slice()
    );
    println!(
        "sidecar {}:\n{}",
        sidecar_path(&path).display(),
        serde_json::to_string_pretty(&back_meta)?
    );

    let bytes = encode(&back)?;
    println!("header bytes: {:02X?}", &bytes[..24]);
    let mut bad = bytes.clone();
    bad[3] = b'9';
    println!("bad magic: {}", decode(&bad).unwrap_err());
    println!(
        "truncated: {}",
        decode(&bytes[..bytes.len() - 8]).unwrap_err()
    );
    Ok(())
}
