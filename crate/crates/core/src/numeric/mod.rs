//! Dense linear algebra and deterministic randomness shared by every module.

mod linalg;
mod mat;
mod rng;
mod tensor;

pub use linalg::{default_rel_tol, lstsq, penrose_residuals, pinv, pinv_default, svd, Svd};
pub use mat::{dot, matmul, Mat};
pub use rng::{normal_sample, Rng};
pub use tensor::Tensor4;
