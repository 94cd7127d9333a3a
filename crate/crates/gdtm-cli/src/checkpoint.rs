//! Model persistence. The JSON layout is fixed by struct order, so a
//! write -> read -> write cycle is byte-identical.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use gdtm::error::{Error, Result};
use gdtm::graph::AdjacencyKind;
use gdtm::neural::{Activation, GatLayer, MlpModel};
use gdtm::surrogate::{AdjacencyLayout, NormalizationScalers, SurrogateKind, SurrogateModel};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GatSection {
    pub width: usize,
    pub input_dim: usize,
    pub leaky_slope: f64,
    /// Row-major width x input_dim.
    pub transform: Vec<f64>,
    pub attention_vector: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalerSection {
    pub acceleration: f64,
    pub velocity: f64,
    pub displacement: f64,
    pub excitation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdjacencySection {
    pub kind: String,
    pub matrix_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub kind: String,
    pub layer_dims: Vec<usize>,
    pub hidden_activation: String,
    /// One row-major (input_dim x output_dim) array per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub gat: Option<GatSection>,
    pub scalers: ScalerSection,
    pub dt: f64,
    pub beta: f64,
    pub gamma: f64,
    pub training_seed: u64,
    pub adjacency: AdjacencySection,
    pub parameter_count: usize,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn matrix_from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} values for a {rows}x{cols} matrix, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl Checkpoint {
    pub fn from_model(model: &SurrogateModel, training_seed: u64) -> Self {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            kind: model.kind.name().to_string(),
            layer_dims: model.mlp.dims().to_vec(),
            hidden_activation: match model.mlp.hidden_activation() {
                Activation::Relu => "relu".into(),
                Activation::Identity => "identity".into(),
            },
            weights: model.mlp.weights().iter().map(matrix_rows).collect(),
            biases: model.mlp.biases().iter().map(|b| b.iter().copied().collect()).collect(),
            gat: model.gat.as_ref().map(|g| GatSection {
                width: g.width(),
                input_dim: g.input_dim(),
                leaky_slope: g.leaky_slope(),
                transform: matrix_rows(g.transform()),
                attention_vector: g.attention_vector().iter().copied().collect(),
            }),
            scalers: ScalerSection {
                acceleration: model.scalers.acceleration,
                velocity: model.scalers.velocity,
                displacement: model.scalers.displacement,
                excitation: model.scalers.excitation,
            },
            dt: model.dt,
            beta: model.beta,
            gamma: model.gamma,
            training_seed,
            adjacency: AdjacencySection {
                kind: match model.layout.kind {
                    AdjacencyKind::Homogeneous => "homogeneous".into(),
                    AdjacencyKind::Heterogeneous => "heterogeneous".into(),
                },
                matrix_count: model.layout.matrix_count,
            },
            parameter_count: model.parameter_count(),
        }
    }

    pub fn into_model(&self) -> Result<SurrogateModel> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint schema version {}",
                self.schema_version
            )));
        }
        let kind = match self.kind.as_str() {
            "homogeneous" => SurrogateKind::Homogeneous,
            "heterogeneous" => SurrogateKind::Heterogeneous,
            "gat" => SurrogateKind::Gat,
            other => return Err(Error::Parse(format!("unknown surrogate kind {other:?}"))),
        };
        let activation = match self.hidden_activation.as_str() {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            other => return Err(Error::Parse(format!("unknown activation {other:?}"))),
        };
        if self.weights.len() + 1 != self.layer_dims.len()
            || self.biases.len() != self.weights.len()
        {
            return Err(Error::Parse("checkpoint layer arrays do not match dims".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..self.weights.len() {
            weights.push(matrix_from_rows(
                self.layer_dims[l],
                self.layer_dims[l + 1],
                &self.weights[l],
            )?);
            if self.biases[l].len() != self.layer_dims[l + 1] {
                return Err(Error::Parse(format!(
                    "layer {l} bias has {} entries, expected {}",
                    self.biases[l].len(),
                    self.layer_dims[l + 1]
                )));
            }
            biases.push(DVector::from_vec(self.biases[l].clone()));
        }
        let mlp = MlpModel::from_parts(self.layer_dims.clone(), weights, biases, activation)?;
        let gat = match &self.gat {
            Some(section) => {
                let transform =
                    matrix_from_rows(section.width, section.input_dim, &section.transform)?;
                Some(GatLayer::from_parts(
                    transform,
                    DVector::from_vec(section.attention_vector.clone()),
                    section.leaky_slope,
                )?)
            }
            None => None,
        };
        if kind == SurrogateKind::Gat && gat.is_none() {
            return Err(Error::Parse("gat checkpoint is missing the attention section".into()));
        }
        let layout = AdjacencyLayout {
            kind: match self.adjacency.kind.as_str() {
                "homogeneous" => AdjacencyKind::Homogeneous,
                "heterogeneous" => AdjacencyKind::Heterogeneous,
                other => return Err(Error::Parse(format!("unknown adjacency kind {other:?}"))),
            },
            matrix_count: self.adjacency.matrix_count,
        };
        let model = SurrogateModel {
            kind,
            mlp,
            gat,
            scalers: NormalizationScalers {
                acceleration: self.scalers.acceleration,
                velocity: self.scalers.velocity,
                displacement: self.scalers.displacement,
                excitation: self.scalers.excitation,
            },
            dt: self.dt,
            beta: self.beta,
            gamma: self.gamma,
            layout,
        };
        if model.parameter_count() != self.parameter_count {
            return Err(Error::Parse(format!(
                "parameter count mismatch: checkpoint says {}, arrays hold {}",
                self.parameter_count,
                model.parameter_count()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("checkpoint serialization failed: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("malformed checkpoint: {e}")))
    }
}
