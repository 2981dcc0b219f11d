//! Sparse matrices, randomized truncated SVD and varimax rotation.

mod dense;
mod sparse;
mod subspace;
mod svd;
mod varimax;

pub use dense::DenseMatrix;
pub use sparse::{SparseMatrix, SparseVector};
pub use subspace::SubspaceModel;
pub use svd::{jacobi_svd, orthonormalize, reconstruction_error, truncated_svd, SvdParams, ThinSvd};
pub use varimax::{varimax, varimax_criterion, VarimaxParams, VarimaxResult};
