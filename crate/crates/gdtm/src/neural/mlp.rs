use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hidden-layer activation. `Identity` exists so an exactly linear network
/// can be assembled for the analytic-weight equivalence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected network with scalar output per row. Weights are stored
/// (input_dim x output_dim) per layer so a batch forward is `X * W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    hidden_activation: Activation,
}

/// Post-activation values of every layer (input first), kept for backward.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<DMatrix<f64>>,
}

/// Gradients of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub inputs: DMatrix<f64>,
}

impl MlpModel {
    /// Xavier-uniform initialized network with ReLU hidden layers.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_in, fan_out, |_, _| {
                rng.gen_range(-limit..limit)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        Ok(MlpModel { dims: dims.to_vec(), weights, biases, hidden_activation: Activation::Relu })
    }

    /// Builds a network from explicit parameters.
    pub fn from_parts(
        dims: Vec<usize>,
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        hidden_activation: Activation,
    ) -> Result<Self> {
        Self::validate_dims(&dims)?;
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} dims require {} weight/bias layers",
                dims.len(),
                dims.len() - 1
            )));
        }
        for l in 0..weights.len() {
            if weights[l].shape() != (dims[l], dims[l + 1]) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} weights are {:?}, expected ({}, {})",
                    weights[l].shape(),
                    dims[l],
                    dims[l + 1]
                )));
            }
            if biases[l].len() != dims[l + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} bias has {} entries, expected {}",
                    biases[l].len(),
                    dims[l + 1]
                )));
            }
        }
        if weights.iter().any(|w| w.iter().any(|x| !x.is_finite()))
            || biases.iter().any(|b| b.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Numerical("non-finite network parameters".into()));
        }
        Ok(MlpModel { dims, weights, biases, hidden_activation })
    }

    fn validate_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 {
            return Err(Error::InvalidSize("network needs at least input and output dims".into()));
        }
        if dims.iter().any(|d| *d == 0) {
            return Err(Error::InvalidSize("zero-width layer".into()));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::InvalidSize(format!(
                "output layer must have width 1, got {}",
                dims.last().unwrap()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Batch forward: rows are independent inputs.
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_trace(inputs)?.0)
    }

    pub fn forward_trace(&self, inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardTrace)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "inputs have width {}, model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(inputs.clone());
        for l in 0..layers {
            let mut z = activations[l].clone() * &self.weights[l];
            for mut row in z.row_iter_mut() {
                row += self.biases[l].transpose();
            }
            if l + 1 < layers && self.hidden_activation == Activation::Relu {
                z.apply(|x| *x = x.max(0.0));
            }
            activations.push(z);
        }
        let output = activations.last().unwrap().clone();
        Ok((output, ForwardTrace { activations }))
    }

    /// Exact reverse-mode gradients of the forward map for a scalar loss
    /// whose gradient with respect to the output is `upstream`.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &DMatrix<f64>) -> Result<MlpGradients> {
        let layers = self.weights.len();
        let output = &trace.activations[layers];
        if upstream.shape() != output.shape() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient is {:?}, output is {:?}",
                upstream.shape(),
                output.shape()
            )));
        }
        let mut grad_weights = vec![DMatrix::zeros(0, 0); layers];
        let mut grad_biases = vec![DVector::zeros(0); layers];
        let mut grad = upstream.clone();
        for l in (0..layers).rev() {
            let input_act = &trace.activations[l];
            grad_weights[l] = input_act.transpose() * &grad;
            grad_biases[l] = grad.row_sum().transpose();
            grad *= self.weights[l].transpose();
            if l > 0 && self.hidden_activation == Activation::Relu {
                // post-activation > 0 iff the preactivation was positive
                let act = &trace.activations[l];
                grad.zip_apply(act, |g, a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
        }
        Ok(MlpGradients { weights: grad_weights, biases: grad_biases, inputs: grad })
    }

    /// Parameters flattened layer by layer, weights row-major then bias.
    pub fn flatten_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in 0..self.weights.len() {
            let w = &self.weights[l];
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    out.push(w[(r, c)]);
                }
            }
            out.extend(self.biases[l].iter());
        }
        out
    }

    /// Writes back parameters in [`Self::flatten_parameters`] order.
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters supplied, model has {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut idx = 0;
        for l in 0..self.weights.len() {
            let (rows, cols) = self.weights[l].shape();
            for r in 0..rows {
                for c in 0..cols {
                    self.weights[l][(r, c)] = flat[idx];
                    idx += 1;
                }
            }
            for r in 0..self.biases[l].len() {
                self.biases[l][r] = flat[idx];
                idx += 1;
            }
        }
        Ok(())
    }
}

impl MlpGradients {
    /// Gradients flattened in the same order as
    /// [`MlpModel::flatten_parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            let w = &self.weights[l];
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    out.push(w[(r, c)]);
                }
            }
            out.extend(self.biases[l].iter());
        }
        out
    }
}
