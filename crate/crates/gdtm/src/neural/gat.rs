use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph};

/// Single-head graph attention layer.
///
/// Per directed pair (i, j) with j in neighbors(i) or j = i, the raw score is
/// LeakyReLU(a . [W f_i || W f_j]); each row of the attention matrix is the
/// softmax of its scores, so rows sum to one over the vertex's neighborhood
/// plus itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    /// d x input_dim feature transform.
    transform: DMatrix<f64>,
    /// Length 2d; first half scores the source vertex, second half the target.
    attention_vector: DVector<f64>,
    leaky_slope: f64,
}

/// Intermediate values of one attention evaluation, kept for backward.
#[derive(Debug, Clone)]
pub struct GatTrace {
    features: DMatrix<f64>,
    transformed: DMatrix<f64>,
    rows: Vec<RowTrace>,
}

#[derive(Debug, Clone)]
struct RowTrace {
    support: Vec<usize>,
    raw_scores: Vec<f64>,
    alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GatGradients {
    pub transform: DMatrix<f64>,
    pub attention_vector: DVector<f64>,
}

impl GatLayer {
    /// Xavier-uniform initialized layer; `width` is the attention feature
    /// dimension d.
    pub fn new(input_dim: usize, width: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return Err(Error::InvalidSize("attention layer needs nonzero dims".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t_limit = (6.0 / (input_dim + width) as f64).sqrt();
        let transform =
            DMatrix::from_fn(width, input_dim, |_, _| rng.gen_range(-t_limit..t_limit));
        let a_limit = (6.0 / (2 * width + 1) as f64).sqrt();
        let attention_vector =
            DVector::from_fn(2 * width, |_, _| rng.gen_range(-a_limit..a_limit));
        Ok(GatLayer { transform, attention_vector, leaky_slope: 0.2 })
    }

    pub fn from_parts(
        transform: DMatrix<f64>,
        attention_vector: DVector<f64>,
        leaky_slope: f64,
    ) -> Result<Self> {
        if attention_vector.len() != 2 * transform.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "attention vector has {} entries for width {}",
                attention_vector.len(),
                transform.nrows()
            )));
        }
        if transform.iter().any(|x| !x.is_finite())
            || attention_vector.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Numerical("non-finite attention parameters".into()));
        }
        Ok(GatLayer { transform, attention_vector, leaky_slope })
    }

    pub fn input_dim(&self) -> usize {
        self.transform.ncols()
    }

    pub fn width(&self) -> usize {
        self.transform.nrows()
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    pub fn attention_vector(&self) -> &DVector<f64> {
        &self.attention_vector
    }

    pub fn parameter_count(&self) -> usize {
        self.transform.len() + self.attention_vector.len()
    }

    /// V x V attention matrix over the graph's neighborhoods; zero where no
    /// edge exists and i != j.
    pub fn attention(&self, features: &FeatureMatrix, graph: &Graph) -> Result<DMatrix<f64>> {
        let neighbors = graph.neighbor_lists();
        Ok(self.attention_trace(features.data(), &neighbors)?.0)
    }

    /// Attention over explicit neighbor lists, returning the trace needed by
    /// [`Self::backward`]. `features` is V x input_dim.
    pub fn attention_trace(
        &self,
        features: &DMatrix<f64>,
        neighbors: &[Vec<usize>],
    ) -> Result<(DMatrix<f64>, GatTrace)> {
        let v = features.nrows();
        if features.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "features have width {}, attention expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        if neighbors.len() != v {
            return Err(Error::ShapeMismatch(format!(
                "{} neighbor lists for {} vertices",
                neighbors.len(),
                v
            )));
        }
        let d = self.width();
        let transformed = features * self.transform.transpose();
        let a_src = self.attention_vector.rows(0, d);
        let a_tgt = self.attention_vector.rows(d, d);
        let source_scores = &transformed * a_src;
        let target_scores = &transformed * a_tgt;

        let mut alpha = DMatrix::zeros(v, v);
        let mut rows = Vec::with_capacity(v);
        for i in 0..v {
            let mut support: Vec<usize> = neighbors[i].clone();
            if !support.contains(&i) {
                support.push(i);
            }
            let raw_scores: Vec<f64> = support
                .iter()
                .map(|&j| {
                    let s = source_scores[i] + target_scores[j];
                    if s > 0.0 {
                        s
                    } else {
                        self.leaky_slope * s
                    }
                })
                .collect();
            let max = raw_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = raw_scores.iter().map(|e| (e - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let alphas: Vec<f64> = exps.iter().map(|e| e / total).collect();
            for (idx, &j) in support.iter().enumerate() {
                alpha[(i, j)] = alphas[idx];
            }
            rows.push(RowTrace { support, raw_scores, alphas });
        }
        let trace = GatTrace { features: features.clone(), transformed, rows };
        Ok((alpha, trace))
    }

    /// Parameter gradients for a scalar loss with gradient `upstream` with
    /// respect to the attention matrix.
    pub fn backward(&self, trace: &GatTrace, upstream: &DMatrix<f64>) -> Result<GatGradients> {
        let v = trace.features.nrows();
        if upstream.shape() != (v, v) {
            return Err(Error::ShapeMismatch(format!(
                "upstream is {:?}, attention matrix is ({v}, {v})",
                upstream.shape()
            )));
        }
        let d = self.width();
        let mut d_source = DVector::zeros(v);
        let mut d_target = DVector::zeros(v);
        for (i, row) in trace.rows.iter().enumerate() {
            let g: Vec<f64> = row.support.iter().map(|&j| upstream[(i, j)]).collect();
            let weighted: f64 = row.alphas.iter().zip(&g).map(|(a, g)| a * g).sum();
            for (idx, &j) in row.support.iter().enumerate() {
                // softmax jacobian then LeakyReLU jacobian
                let de = row.alphas[idx] * (g[idx] - weighted);
                let ds = if row.raw_scores[idx] > 0.0 { de } else { de * self.leaky_slope };
                // raw score pre-activation s_ij = source[i] + target[j]; the
                // stored raw_scores are post-activation, sign is preserved
                // by LeakyReLU so the branch above is consistent.
                d_source[i] += ds;
                d_target[j] += ds;
            }
        }
        let a_src = self.attention_vector.rows(0, d).into_owned();
        let a_tgt = self.attention_vector.rows(d, d).into_owned();
        let mut d_attention = DVector::zeros(2 * d);
        d_attention.rows_mut(0, d).copy_from(&(trace.transformed.transpose() * &d_source));
        d_attention.rows_mut(d, d).copy_from(&(trace.transformed.transpose() * &d_target));
        let d_transformed = &d_source * a_src.transpose() + &d_target * a_tgt.transpose();
        let d_transform = d_transformed.transpose() * &trace.features;
        Ok(GatGradients { transform: d_transform, attention_vector: d_attention })
    }

    pub fn flatten_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for r in 0..self.transform.nrows() {
            for c in 0..self.transform.ncols() {
                out.push(self.transform[(r, c)]);
            }
        }
        out.extend(self.attention_vector.iter());
        out
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters supplied, layer has {}",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut idx = 0;
        for r in 0..self.transform.nrows() {
            for c in 0..self.transform.ncols() {
                self.transform[(r, c)] = flat[idx];
                idx += 1;
            }
        }
        for r in 0..self.attention_vector.len() {
            self.attention_vector[r] = flat[idx];
            idx += 1;
        }
        Ok(())
    }
}

impl GatGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in 0..self.transform.nrows() {
            for c in 0..self.transform.ncols() {
                out.push(self.transform[(r, c)]);
            }
        }
        out.extend(self.attention_vector.iter());
        out
    }
}
