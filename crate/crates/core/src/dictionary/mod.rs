//! Observable dictionaries `Psi: R^d -> R^{n_k}`.

mod adam;
mod fixed;
mod neural;

use faer::{Mat, MatRef};

use crate::error::{KoopmanError, Result};

pub use adam::AdamState;
pub use fixed::{monomial_exponents, FixedDictionary, FixedKind};
pub use neural::{DenseLayer, ForwardCache, NeuralDictionary, NeuralGradients, DICTIONARY_FORMAT_VERSION};

/// A map from states to a fixed-length vector of observables.
pub trait Dictionary {
    /// State dimension the dictionary accepts.
    fn dim(&self) -> usize;

    /// Number of observables produced per state.
    fn n_k(&self) -> usize;

    /// Evaluates the dictionary on every row of `states` (`m × d`), returning
    /// an `m × n_k` matrix.
    fn evaluate_batch(&self, states: MatRef<'_, f64>) -> Result<Mat<f64>>;
}

pub(crate) fn check_input(dim: usize, states: MatRef<'_, f64>) -> Result<()> {
    if states.ncols() != dim {
        return Err(KoopmanError::dims(format!(
            "dictionary expects {dim} state coordinates, got {}",
            states.ncols()
        )));
    }
    Ok(())
}
