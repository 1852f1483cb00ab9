//! Numerical primitives shared by every stage of the pipeline: seeded
//! randomness, Laplace noise, the standard normal CDF and quantile, and the
//! small dense symmetric linear algebra needed for correlation repair.

mod epsilon;
mod linalg;
mod normal;
mod rng;

pub use epsilon::Epsilon;
pub use linalg::{cholesky, cholesky_with_jitter, sym_eigen, Matrix, SymEigen, SymmetricMatrix};
pub use normal::{laplace, phi, phi_inv, U_CLAMP};
pub use rng::Rng;
