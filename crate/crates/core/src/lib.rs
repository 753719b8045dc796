//! Koopman-operator spectral analysis.
//!
//! The crate is organised around the data flow of a residual-based Koopman
//! analysis:
//!
//! * [`dynamics`] produces snapshot pairs `(x_i, y_i = F(x_i))`.
//! * [`dictionary`] maps states to observables, either from a fixed family or
//!   through a trainable tanh network with its own backpropagation and Adam.
//! * [`gram`] reduces the evaluated data to the Gram triple `(G, A, L)`.
//! * [`edmd`] solves for the Koopman matrix, its eigenpairs and modes.
//! * [`residual`] measures spectral residuals, filters eigenpairs and scans
//!   pseudospectra.
//! * [`reskoopnet`] trains a neural dictionary by minimising the summed
//!   squared residual of its own eigenpairs.
//! * [`hankel`] is the time-delay DMD baseline and [`preprocess`] holds the
//!   truncated SVD and Davies-Bouldin utilities.
//! * [`io`] reads and writes the snapshot, spectrum, mode and pseudospectrum
//!   file formats.

pub mod dictionary;
pub mod dynamics;
pub mod edmd;
pub mod error;
pub mod gram;
pub mod hankel;
pub mod io;
pub mod linalg;
pub mod preprocess;
pub mod reskoopnet;
pub mod residual;

pub use faer::c64;
pub use faer::Mat;

pub use dictionary::{
    AdamState, Dictionary, FixedDictionary, FixedKind, NeuralDictionary, NeuralGradients,
};
pub use dynamics::{SnapshotPairs, StatePoint, Trajectory};
pub use edmd::{EigenPair, KoopmanMatrix, ModeDecomposition, Spectrum};
pub use error::{KoopmanError, Result};
pub use gram::GramTriple;
pub use hankel::HankelMatrix;
pub use preprocess::SvdReducer;
pub use reskoopnet::{TrainConfig, TrainReport, TrainedModel};
pub use residual::PseudospectrumGrid;

/// Caps internal parallelism (the rayon pool and dense kernels) at `threads`.
/// The rayon pool can be configured once per process; later calls only
/// adjust the dense kernels.
pub fn limit_parallelism(threads: usize) {
    let threads = threads.max(1);
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    faer::set_global_parallelism(if threads == 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(threads)
    });
}
