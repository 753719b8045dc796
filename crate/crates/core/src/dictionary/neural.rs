use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, Dictionary};
use crate::error::{KoopmanError, Result};

pub const DICTIONARY_FORMAT_VERSION: u32 = 1;

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn weight_ref(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.weights, self.outputs, self.inputs)
    }

    /// `h W^T + 1 b^T`
    fn affine(&self, h: MatRef<'_, f64>) -> Mat<f64> {
        let mut z = h * self.weight_ref().transpose();
        for j in 0..self.outputs {
            let b = self.bias[j];
            for i in 0..z.nrows() {
                z[(i, j)] += b;
            }
        }
        z
    }
}

/// Trainable dictionary: a tanh MLP whose outputs follow the fixed
/// augmentation `(1, x_1, .., x_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDictionary {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

/// Per-layer values kept by the forward pass for [`NeuralDictionary::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Mat<f64>,
    pre_activations: Vec<Mat<f64>>,
    activations: Vec<Mat<f64>>,
}

impl ForwardCache {
    /// Number of cached layers (hidden layers plus the output layer).
    pub fn layer_count(&self) -> usize {
        self.pre_activations.len()
    }

    pub fn pre_activation(&self, layer: usize) -> MatRef<'_, f64> {
        self.pre_activations[layer].as_ref()
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NeuralGradients {
    /// Flat tensors in optimizer order: `w0, b0, w1, b1, ..`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn accumulate(&mut self, other: &NeuralGradients) {
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Augmentation {
    constant: bool,
    coordinates: bool,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryDoc {
    format_version: u32,
    layer_sizes: Vec<usize>,
    activation: String,
    augmentation: Augmentation,
    layers: Vec<LayerDoc>,
}

impl NeuralDictionary {
    /// Glorot-uniform initialized network `d -> hidden.. -> n_train` with
    /// zero biases.
    pub fn new(d: usize, hidden: &[usize], n_train: usize, seed: u64) -> Result<Self> {
        let mut dict = Self::zeros(d, hidden, n_train)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut dict.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(dict)
    }

    /// Network with every weight and bias zero.
    pub fn zeros(d: usize, hidden: &[usize], n_train: usize) -> Result<Self> {
        if d == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(KoopmanError::param(
                "neural dictionary needs d > 0 and at least one nonempty hidden layer",
            ));
        }
        let mut sizes = vec![d];
        sizes.extend_from_slice(hidden);
        sizes.push(n_train);
        let layers = sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Ok(Self { input_dim: d, layers })
    }

    /// `[d, hidden.., n_train]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn n_train(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Number of parameter-free leading columns (`1 + d`).
    pub fn n_augment(&self) -> usize {
        1 + self.input_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect()
    }

    /// Mutable flat tensors in optimizer order: `w0, b0, w1, b1, ..`.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_sizes().iter().sum()
    }

    fn forward_impl(&self, states: MatRef<'_, f64>, keep: bool) -> Result<(Mat<f64>, Option<ForwardCache>)> {
        check_input(self.input_dim, states)?;
        let m = states.nrows();
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act: Vec<Mat<f64>> = Vec::with_capacity(last);
        let mut output = Mat::zeros(0, 0);
        for (l, layer) in self.layers.iter().enumerate() {
            let h = if l == 0 { states } else { act[l - 1].as_ref() };
            let z = layer.affine(h);
            if l < last {
                act.push(Mat::from_fn(m, layer.outputs, |i, j| z[(i, j)].tanh()));
            } else if !keep {
                output = z;
                break;
            } else {
                output = z.clone();
            }
            if keep {
                pre.push(z);
            }
        }

        let d = self.input_dim;
        let n_k = self.n_k();
        let psi = Mat::from_fn(m, n_k, |i, j| {
            if j == 0 {
                1.0
            } else if j <= d {
                states[(i, j - 1)]
            } else {
                output[(i, j - 1 - d)]
            }
        });
        let cache = keep.then(|| ForwardCache {
            input: states.to_owned(),
            pre_activations: pre,
            activations: act,
        });
        Ok((psi, cache))
    }

    /// Evaluates the dictionary and keeps what the backward pass needs.
    pub fn forward_with_cache(&self, states: MatRef<'_, f64>) -> Result<(Mat<f64>, ForwardCache)> {
        let (psi, cache) = self.forward_impl(states, true)?;
        Ok((psi, cache.expect("cache requested")))
    }

    /// Reverse-mode gradient of a scalar loss given `dL/dPsi` for the cached
    /// batch. Columns of `d_psi` belonging to the augmentation are ignored.
    pub fn backward(&self, cache: &ForwardCache, d_psi: MatRef<'_, f64>) -> Result<NeuralGradients> {
        let m = cache.batch_size();
        if d_psi.nrows() != m || d_psi.ncols() != self.n_k() {
            return Err(KoopmanError::dims(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                d_psi.nrows(),
                d_psi.ncols(),
                m,
                self.n_k()
            )));
        }
        if cache.layer_count() != self.layers.len() {
            return Err(KoopmanError::dims("cache does not belong to this network"));
        }
        let n_layers = self.layers.len();
        let mut weights = vec![Vec::new(); n_layers];
        let mut biases = vec![Vec::new(); n_layers];
        let mut dz = d_psi.subcols(self.n_augment(), self.n_train()).to_owned();
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let h_prev = if l == 0 {
                cache.input.as_ref()
            } else {
                cache.activations[l - 1].as_ref()
            };
            let dw = dz.transpose() * h_prev;
            weights[l] = crate::linalg::to_row_major(dw.as_ref());
            biases[l] = (0..layer.outputs)
                .map(|j| (0..m).map(|i| dz[(i, j)]).sum())
                .collect();
            if l > 0 {
                let dh = &dz * layer.weight_ref();
                dz = Mat::from_fn(m, layer.inputs, |i, j| {
                    let a = h_prev[(i, j)];
                    dh[(i, j)] * (1.0 - a * a)
                });
            }
        }
        Ok(NeuralGradients { weights, biases })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DictionaryDoc {
            format_version: DICTIONARY_FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            activation: "tanh".into(),
            augmentation: Augmentation {
                constant: true,
                coordinates: true,
            },
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DictionaryDoc = serde_json::from_str(text)?;
        if doc.format_version != DICTIONARY_FORMAT_VERSION {
            return Err(KoopmanError::param(format!(
                "unsupported dictionary format version {}",
                doc.format_version
            )));
        }
        if !doc.augmentation.constant || !doc.augmentation.coordinates || doc.activation != "tanh" {
            return Err(KoopmanError::param(
                "dictionary must use tanh with constant and coordinate augmentation",
            ));
        }
        if doc.layer_sizes.len() < 3 || doc.layers.len() + 1 != doc.layer_sizes.len() {
            return Err(KoopmanError::dims("layer_sizes does not match the layer list"));
        }
        let hidden = &doc.layer_sizes[1..doc.layer_sizes.len() - 1];
        let mut dict = Self::zeros(doc.layer_sizes[0], hidden, *doc.layer_sizes.last().unwrap())?;
        for (layer, src) in dict.layers.iter_mut().zip(doc.layers) {
            if src.weights.len() != layer.weights.len() || src.bias.len() != layer.bias.len() {
                return Err(KoopmanError::dims("layer array length does not match layer sizes"));
            }
            layer.weights = src.weights;
            layer.bias = src.bias;
        }
        Ok(dict)
    }
}

impl Dictionary for NeuralDictionary {
    fn dim(&self) -> usize {
        self.input_dim
    }

    fn n_k(&self) -> usize {
        self.n_train() + 1 + self.input_dim
    }

    fn evaluate_batch(&self, states: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(self.forward_impl(states, false)?.0)
    }
}
