//! Dense matrices, similarity kernels, normalization and seeded randomness.

mod mat;
mod rng;
pub mod tensorfile;

pub use mat::{cosine_floored, cosine_sim, dot, l2_normalize_rows, norm, zscore_fit_apply, Mat, ZScore, EPS};
pub use rng::{seeded_choice, seeded_shuffle, Rng};
