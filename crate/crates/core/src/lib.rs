//! Resolution-adaptive patch embeddings for multispectral imagery.
//!
//! The crate covers two mechanisms and the machinery around them:
//!
//! - [`resize`]: explicit bilinear resize operators and pseudo-inverse
//!   resizing of patch-embedding kernels, which keeps token values intact
//!   when the patch size grows.
//! - [`wavegen`]: a small transformer hypernetwork that turns per-band
//!   central wavelengths into patch-embedding kernels for any channel count.
//!
//! [`tokenizer`] and [`encoder`] turn images into token sequences and run a
//! minimal ViT encoder over them, [`diagnostics`] measures token fidelity and
//! produces spectrum/entropy maps, and [`io`] holds the FKT tensor container,
//! sidecars and the command-line front end.

// A NaN must fail every threshold check, hence `!(x > tol)` in places.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod io;
pub mod numeric;
pub mod resize;
pub mod tokenizer;
pub mod verify;
pub mod wavegen;

pub use error::{Error, Result};
pub use numeric::{Mat, Rng, Tensor4};
