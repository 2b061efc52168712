//! Files and the command line: FKT tensors, JSON sidecars, PGM import,
//! parameter directories and the `fleximo` subcommands.

pub mod cli;
pub mod fkt;
pub mod pgm;
pub mod sidecar;
pub mod weights;

pub use fkt::{decode, encode, fkt_read, fkt_write, DType, FktTensor};
pub use pgm::{decode_pgm, read_pgm, write_pgm_preview};
pub use sidecar::{sidecar_path, Role, SidecarMeta, REPORT_SCHEMA};
pub use weights::{load_encoder, load_generator, save_encoder, save_generator};
