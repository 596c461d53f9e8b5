//! Normalized-Cuts grouping of a boundary map: intervening-contour affinity,
//! the generalized eigenproblem `(D - W) v = lambda D v`, spectral boundary
//! strength and its blend with the detector output.

mod affinity;
mod eigs;
mod spectral;

pub use affinity::{intervening_contour, line_pixels, SparseAffinity, NEIGHBOUR_FLOOR};
pub use eigs::{generalized_eigs, tridiagonal_eigen, EigenEmbedding, EigenOptions, TRIVIAL_EIGENVALUE};
pub use spectral::{
    embedding_grid, fuse_spectral, read_embedding, spectral_boundaries, spectral_pb, write_embedding, EigenSidecar,
    NcutsConfig, SpectralResult,
};
