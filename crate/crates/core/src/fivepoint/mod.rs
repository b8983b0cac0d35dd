//! Five-point relative pose: minimal solver, Sampson-scored RANSAC and
//! cheirality-based decomposition of the essential matrix.

mod decompose;
pub mod poly;
mod ransac;
mod solver;

pub use decompose::{decompose_essential, factorizations, triangulate_midpoint, PoseHypothesis};
pub use ransac::{ransac_essential, ransac_essential_with, sampson_error, RansacConfig, RansacResult};
pub use solver::{five_point, CandidateSet, CANDIDATE_RESIDUAL_TOL, NULL_SPACE_RATIO};
