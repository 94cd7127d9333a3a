//! Surrogate training and autoregressive rollout.
//!
//! Training is one-step teacher forcing: the model maps aggregated normalized
//! state at step n plus normalized excitation at n+1 to normalized
//! acceleration at n+1. Rollout feeds each prediction through the shared
//! Newmark kinematic update and loops the integrated state back as the next
//! input, so a trained model needs nothing but an adjacency set to run on a
//! different topology.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{aggregate, AdjacencyKind, AdjacencySet, FeatureMatrix, Graph};
use crate::mdof::{kinematic_update, EpisodeRecord};
use crate::metrics::MetricReport;
use crate::neural::{
    smooth_l1, Activation, AdamConfig, AdamState, GatLayer, MlpModel,
};

/// Per-channel max-abs scales fitted on the training episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationScalers {
    pub acceleration: f64,
    pub velocity: f64,
    pub displacement: f64,
    pub excitation: f64,
}

/// Global max-abs per channel over all episodes and vertices; an identically
/// zero channel falls back to scale 1.
pub fn fit_scalers(episodes: &[EpisodeRecord]) -> Result<NormalizationScalers> {
    if episodes.is_empty() {
        return Err(Error::InvalidSize("cannot fit scalers on zero episodes".into()));
    }
    let max_abs = |select: fn(&EpisodeRecord) -> &DMatrix<f64>| -> f64 {
        let m = episodes.iter().map(|e| select(e).amax()).fold(0.0f64, f64::max);
        if m == 0.0 {
            1.0
        } else {
            m
        }
    };
    Ok(NormalizationScalers {
        acceleration: max_abs(|e| &e.acceleration),
        velocity: max_abs(|e| &e.velocity),
        displacement: max_abs(|e| &e.displacement),
        excitation: max_abs(|e| &e.excitation),
    })
}

/// One teacher-forcing sample for the aggregated (non-attention) kinds:
/// `input` is V x (2N+1), `target` the normalized acceleration at the next
/// step.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub episode: usize,
    pub input: DMatrix<f64>,
    pub target: DVector<f64>,
}

/// One teacher-forcing sample for the attention kind, kept un-aggregated
/// because the attention weights depend on the model parameters.
#[derive(Debug, Clone)]
pub struct GatSample {
    pub episode: usize,
    /// V x 2 normalized (velocity, displacement).
    pub features: DMatrix<f64>,
    /// Normalized excitation at the next step.
    pub excitation: DVector<f64>,
    pub target: DVector<f64>,
}

/// Training data for any surrogate kind.
#[derive(Debug, Clone)]
pub enum Dataset {
    Aggregated(Vec<TrainingSample>),
    PerVertex { samples: Vec<GatSample>, graph: Graph },
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Aggregated(s) => s.len(),
            Dataset::PerVertex { samples, .. } => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn episode_of(&self, index: usize) -> usize {
        match self {
            Dataset::Aggregated(s) => s[index].episode,
            Dataset::PerVertex { samples, .. } => samples[index].episode,
        }
    }

    pub fn episode_ids(&self) -> Vec<usize> {
        let mut ids = BTreeSet::new();
        for i in 0..self.len() {
            ids.insert(self.episode_of(i));
        }
        ids.into_iter().collect()
    }
}

/// Aggregated teacher-forcing dataset: for each episode of length T, exactly
/// T-1 samples pairing aggregated normalized state at n with normalized
/// excitation and acceleration at n+1.
pub fn build_dataset(
    episodes: &[EpisodeRecord],
    adj: &AdjacencySet,
    scalers: &NormalizationScalers,
) -> Result<Vec<TrainingSample>> {
    let v = adj.vertex_count();
    let width = 2 * adj.matrix_count() + 1;
    let mut samples = Vec::new();
    for (episode, record) in episodes.iter().enumerate() {
        if record.vertex_count() != v {
            return Err(Error::ShapeMismatch(format!(
                "episode {episode} has {} vertices, adjacency has {v}",
                record.vertex_count()
            )));
        }
        for n in 0..record.steps().saturating_sub(1) {
            let features = FeatureMatrix::from_state(
                &(record.velocity.row(n).transpose() / scalers.velocity),
                &(record.displacement.row(n).transpose() / scalers.displacement),
            )?;
            let aggregated = aggregate(adj, &features)?;
            let mut input = DMatrix::zeros(v, width);
            input.view_mut((0, 0), (v, width - 1)).copy_from(&aggregated);
            input
                .column_mut(width - 1)
                .copy_from(&(record.excitation.row(n + 1).transpose() / scalers.excitation));
            let target = record.acceleration.row(n + 1).transpose() / scalers.acceleration;
            samples.push(TrainingSample { episode, input, target });
        }
    }
    Ok(samples)
}

/// Un-aggregated dataset for the attention kind.
pub fn build_gat_dataset(
    episodes: &[EpisodeRecord],
    scalers: &NormalizationScalers,
) -> Result<Vec<GatSample>> {
    let mut samples = Vec::new();
    for (episode, record) in episodes.iter().enumerate() {
        let v = record.vertex_count();
        for n in 0..record.steps().saturating_sub(1) {
            let mut features = DMatrix::zeros(v, 2);
            features
                .column_mut(0)
                .copy_from(&(record.velocity.row(n).transpose() / scalers.velocity));
            features
                .column_mut(1)
                .copy_from(&(record.displacement.row(n).transpose() / scalers.displacement));
            samples.push(GatSample {
                episode,
                features,
                excitation: record.excitation.row(n + 1).transpose() / scalers.excitation,
                target: record.acceleration.row(n + 1).transpose() / scalers.acceleration,
            });
        }
    }
    Ok(samples)
}

/// Training schedule. `noise_std` adds zero-mean Gaussian noise to the state
/// inputs of each training batch (never to targets or the test split);
/// it is off by default.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub noise_std: f64,
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            seed: 7,
            train_fraction: 0.8,
            noise_std: 0.0,
            patience: 20,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch_size must be positive".into()));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(Error::InvalidParameter("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which graph representation a model expects at rollout time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjacencyLayout {
    pub kind: AdjacencyKind,
    pub matrix_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Homogeneous,
    Heterogeneous,
    Gat,
}

impl SurrogateKind {
    pub fn name(&self) -> &'static str {
        match self {
            SurrogateKind::Homogeneous => "homogeneous",
            SurrogateKind::Heterogeneous => "heterogeneous",
            SurrogateKind::Gat => "gat",
        }
    }
}

/// A trained (or trainable) surrogate: the MLP, the optional attention
/// layer, the scalers it was fitted with and the integration constants it
/// rolls out with. Holds no vertex-count-dependent state.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub mlp: MlpModel,
    pub gat: Option<GatLayer>,
    pub scalers: NormalizationScalers,
    pub dt: f64,
    pub beta: f64,
    pub gamma: f64,
    pub layout: AdjacencyLayout,
}

impl SurrogateModel {
    /// Homogeneous surrogate with the given hidden widths (input 3, output 1).
    pub fn new_homogeneous(
        hidden_dims: &[usize],
        scalers: NormalizationScalers,
        dt: f64,
        beta: f64,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![3];
        dims.extend_from_slice(hidden_dims);
        dims.push(1);
        Ok(SurrogateModel {
            kind: SurrogateKind::Homogeneous,
            mlp: MlpModel::new(&dims, seed)?,
            gat: None,
            scalers,
            dt,
            beta,
            gamma,
            layout: AdjacencyLayout { kind: AdjacencyKind::Homogeneous, matrix_count: 1 },
        })
    }

    /// Heterogeneous surrogate over `matrix_count` adjacency matrices
    /// (input 2N+1).
    pub fn new_heterogeneous(
        matrix_count: usize,
        hidden_dims: &[usize],
        scalers: NormalizationScalers,
        dt: f64,
        beta: f64,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        if matrix_count < 2 {
            return Err(Error::InvalidSize(
                "heterogeneous layout needs at least two matrices".into(),
            ));
        }
        let mut dims = vec![2 * matrix_count + 1];
        dims.extend_from_slice(hidden_dims);
        dims.push(1);
        Ok(SurrogateModel {
            kind: SurrogateKind::Heterogeneous,
            mlp: MlpModel::new(&dims, seed)?,
            gat: None,
            scalers,
            dt,
            beta,
            gamma,
            layout: AdjacencyLayout { kind: AdjacencyKind::Heterogeneous, matrix_count },
        })
    }

    /// Attention surrogate: dynamic edge weights over a single-matrix layout
    /// (input 3).
    pub fn new_gat(
        hidden_dims: &[usize],
        attention_width: usize,
        scalers: NormalizationScalers,
        dt: f64,
        beta: f64,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![3];
        dims.extend_from_slice(hidden_dims);
        dims.push(1);
        Ok(SurrogateModel {
            kind: SurrogateKind::Gat,
            mlp: MlpModel::new(&dims, seed)?,
            gat: Some(GatLayer::new(2, attention_width, seed ^ 0x9e3779b97f4a7c15)?),
            scalers,
            dt,
            beta,
            gamma,
            layout: AdjacencyLayout { kind: AdjacencyKind::Homogeneous, matrix_count: 1 },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.mlp.parameter_count() + self.gat.as_ref().map_or(0, |g| g.parameter_count())
    }

    fn check_consistency(&self) -> Result<()> {
        let expected = match self.kind {
            SurrogateKind::Homogeneous | SurrogateKind::Gat => 3,
            SurrogateKind::Heterogeneous => 2 * self.layout.matrix_count + 1,
        };
        if self.input_dim() != expected {
            return Err(Error::Incompatible(format!(
                "{} surrogate expects input width {expected}, network has {}",
                self.kind.name(),
                self.input_dim()
            )));
        }
        if self.kind == SurrogateKind::Gat && self.gat.is_none() {
            return Err(Error::Incompatible("gat surrogate is missing its attention layer".into()));
        }
        Ok(())
    }

    fn flatten_parameters(&self) -> Vec<f64> {
        let mut flat = self.mlp.flatten_parameters();
        if let Some(gat) = &self.gat {
            flat.extend(gat.flatten_parameters());
        }
        flat
    }

    fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        let mlp_count = self.mlp.parameter_count();
        self.mlp.set_parameters(&flat[..mlp_count])?;
        if let Some(gat) = &mut self.gat {
            gat.set_parameters(&flat[mlp_count..])?;
        }
        Ok(())
    }
}

/// Homogeneous surrogate whose network composes to the exact affine map of
/// uniform-chain physics in normalized units:
/// a = -(c/m) (A v) - (k/m) (A u) + E / m.
/// Hidden activations are disabled so the composition is exactly linear; no
/// training involved.
pub fn analytic_linear_surrogate(
    mass: f64,
    stiffness: f64,
    damping: f64,
    hidden_dims: &[usize],
    scalers: NormalizationScalers,
    dt: f64,
    beta: f64,
    gamma: f64,
) -> Result<SurrogateModel> {
    if mass <= 0.0 {
        return Err(Error::InvalidParameter("mass must be positive".into()));
    }
    let w_velocity = -(damping / mass) * scalers.velocity / scalers.acceleration;
    let w_displacement = -(stiffness / mass) * scalers.displacement / scalers.acceleration;
    let w_excitation = scalers.excitation / (mass * scalers.acceleration);

    let mut dims = vec![3];
    dims.extend_from_slice(hidden_dims);
    dims.push(1);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..dims.len() - 1 {
        let mut w = DMatrix::zeros(dims[l], dims[l + 1]);
        if l == 0 {
            w[(0, 0)] = w_velocity;
            w[(1, 0)] = w_displacement;
            w[(2, 0)] = w_excitation;
        } else {
            w[(0, 0)] = 1.0;
        }
        weights.push(w);
        biases.push(DVector::zeros(dims[l + 1]));
    }
    Ok(SurrogateModel {
        kind: SurrogateKind::Homogeneous,
        mlp: MlpModel::from_parts(dims, weights, biases, Activation::Identity)?,
        gat: None,
        scalers,
        dt,
        beta,
        gamma,
        layout: AdjacencyLayout { kind: AdjacencyKind::Homogeneous, matrix_count: 1 },
    })
}

/// Seeded episode-level split. `strata[i]` labels episode `ids[i]`; each
/// stratum is shuffled and cut at `train_fraction` separately, so a labeled
/// corpus keeps its mix on both sides. Returns (train ids, test ids).
pub fn split_episodes(
    ids: &[usize],
    strata: Option<&[usize]>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if ids.len() < 2 {
        return Err(Error::InvalidSize("need at least two episodes to split".into()));
    }
    if let Some(s) = strata {
        if s.len() != ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} strata labels for {} episodes",
                s.len(),
                ids.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = match strata {
        Some(s) => s.to_vec(),
        None => vec![0; ids.len()],
    };
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in distinct {
        let mut group: Vec<usize> = ids
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == label)
            .map(|(id, _)| *id)
            .collect();
        group.shuffle(&mut rng);
        let cut = ((group.len() as f64) * train_fraction).round() as usize;
        let cut = cut.clamp(1, group.len().saturating_sub(1).max(1));
        train.extend_from_slice(&group[..cut]);
        test.extend_from_slice(&group[cut..]);
    }
    if test.is_empty() {
        return Err(Error::InvalidSize("split produced an empty test set".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-epoch mean batch losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub train: f64,
    pub test: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    pub train_episodes: Vec<usize>,
    pub test_episodes: Vec<usize>,
}

/// Teacher-forced training with an internal unstratified episode-level
/// split. The model is left holding the best-test-loss parameters.
pub fn train(
    model: &mut SurrogateModel,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let ids = data.episode_ids();
    let (_, test_ids) = split_episodes(&ids, None, config.train_fraction, config.seed)?;
    train_on_split(model, data, &test_ids, config)
}

/// Teacher-forced training with an explicit test-episode set.
pub fn train_on_split(
    model: &mut SurrogateModel,
    data: &Dataset,
    test_episodes: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.check_consistency()?;
    if data.is_empty() {
        return Err(Error::InvalidSize("training dataset is empty".into()));
    }
    let test_set: BTreeSet<usize> = test_episodes.iter().copied().collect();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for i in 0..data.len() {
        if test_set.contains(&data.episode_of(i)) {
            test_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::InvalidSize(format!(
            "split left {} training and {} test samples",
            train_idx.len(),
            test_idx.len()
        )));
    }
    let train_episodes: BTreeSet<usize> =
        train_idx.iter().map(|&i| data.episode_of(i)).collect();

    let mut params = model.flatten_parameters();
    let mut adam = AdamState::new(params.len(), config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best_test_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();

    let mut order = train_idx.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut train_loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            model.set_parameters(&params)?;
            let (loss, grads) = batch_gradients(model, data, chunk, config.noise_std, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {epoch}: loss is not finite"
                )));
            }
            adam.step(&mut params, &grads)?;
            train_loss_sum += loss;
            batches += 1;
        }
        model.set_parameters(&params)?;
        let test_loss = dataset_loss(model, data, &test_idx)?;
        if !test_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training diverged at epoch {epoch}: test loss is not finite"
            )));
        }
        history.push(EpochLoss { train: train_loss_sum / batches as f64, test: test_loss });
        if test_loss < best_test_loss {
            best_test_loss = test_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
        }
        if epoch.saturating_sub(best_epoch) >= config.patience {
            break;
        }
    }
    model.set_parameters(&best_params)?;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_test_loss,
        train_episodes: train_episodes.into_iter().collect(),
        test_episodes: test_set.into_iter().collect(),
    })
}

/// Forward + backward over one batch; returns (loss, flattened gradients).
fn batch_gradients(
    model: &SurrogateModel,
    data: &Dataset,
    batch: &[usize],
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    match data {
        Dataset::Aggregated(samples) => {
            let v = samples[batch[0]].input.nrows();
            let width = samples[batch[0]].input.ncols();
            let mut inputs = DMatrix::zeros(batch.len() * v, width);
            let mut targets = DMatrix::zeros(batch.len() * v, 1);
            for (b, &idx) in batch.iter().enumerate() {
                inputs.view_mut((b * v, 0), (v, width)).copy_from(&samples[idx].input);
                targets.view_mut((b * v, 0), (v, 1)).copy_from(&samples[idx].target);
            }
            if noise_std > 0.0 {
                // state columns only; the excitation input stays exact
                for r in 0..inputs.nrows() {
                    for c in 0..width - 1 {
                        inputs[(r, c)] += noise_std * standard_normal(rng);
                    }
                }
            }
            let (out, trace) = model.mlp.forward_trace(&inputs)?;
            let (loss, upstream) = smooth_l1(&out, &targets, 1.0)?;
            let grads = model.mlp.backward(&trace, &upstream)?;
            Ok((loss, grads.flatten()))
        }
        Dataset::PerVertex { samples, graph } => {
            let gat = model
                .gat
                .as_ref()
                .ok_or_else(|| Error::Incompatible("dataset needs an attention layer".into()))?;
            let neighbors = graph.neighbor_lists();
            let grounded = grounded_flags(graph);
            let v = graph.vertex_count();
            let mut inputs = DMatrix::zeros(batch.len() * v, 3);
            let mut targets = DMatrix::zeros(batch.len() * v, 1);
            let mut per_sample = Vec::with_capacity(batch.len());
            for (b, &idx) in batch.iter().enumerate() {
                let sample = &samples[idx];
                let mut features = sample.features.clone();
                if noise_std > 0.0 {
                    for x in features.iter_mut() {
                        *x += noise_std * standard_normal(rng);
                    }
                }
                let (alpha, trace) = gat.attention_trace(&features, &neighbors)?;
                let row = gat_aggregate(&alpha, &features, &sample.excitation, &grounded);
                inputs.view_mut((b * v, 0), (v, 3)).copy_from(&row);
                targets.view_mut((b * v, 0), (v, 1)).copy_from(&sample.target);
                per_sample.push((features, alpha, trace));
            }
            let (out, trace) = model.mlp.forward_trace(&inputs)?;
            let (loss, upstream) = smooth_l1(&out, &targets, 1.0)?;
            let mlp_grads = model.mlp.backward(&trace, &upstream)?;

            let mut gat_transform = DMatrix::zeros(gat.width(), gat.input_dim());
            let mut gat_attention = DVector::zeros(2 * gat.width());
            for (b, (features, _alpha, gtrace)) in per_sample.iter().enumerate() {
                let gx = mlp_grads.inputs.view((b * v, 0), (v, 3));
                let mut d_alpha = DMatrix::zeros(v, v);
                for i in 0..v {
                    for j in 0..v {
                        if j == i {
                            if grounded[i] {
                                d_alpha[(i, i)] = -gx[(i, 0)] * features[(i, 0)]
                                    - gx[(i, 1)] * features[(i, 1)];
                            }
                        } else {
                            d_alpha[(i, j)] = gx[(i, 0)] * (features[(j, 0)] - features[(i, 0)])
                                + gx[(i, 1)] * (features[(j, 1)] - features[(i, 1)]);
                        }
                    }
                }
                let g = gat.backward(gtrace, &d_alpha)?;
                gat_transform += g.transform;
                gat_attention += g.attention_vector;
            }
            let mut flat = mlp_grads.flatten();
            for r in 0..gat_transform.nrows() {
                for c in 0..gat_transform.ncols() {
                    flat.push(gat_transform[(r, c)]);
                }
            }
            flat.extend(gat_attention.iter());
            Ok((loss, flat))
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::StandardNormal;
    rng.sample(StandardNormal)
}

/// Attention aggregation with the relative-motion sign convention:
/// row i holds [sum_j a_ij (v_j - v_i), sum_j a_ij (u_j - u_i), E_i].
/// At a grounded vertex the self coefficient weights the relative motion to
/// the fixed support, (0 - f_i); elsewhere the self term vanishes. Without
/// that term the boundary stiffness would be invisible to the network and
/// the rolled-out chain would behave as if unanchored.
fn gat_aggregate(
    alpha: &DMatrix<f64>,
    features: &DMatrix<f64>,
    excitation: &DVector<f64>,
    grounded: &[bool],
) -> DMatrix<f64> {
    let v = features.nrows();
    let mut out = DMatrix::zeros(v, 3);
    for i in 0..v {
        let mut acc0 = 0.0;
        let mut acc1 = 0.0;
        for j in 0..v {
            let a = alpha[(i, j)];
            if a == 0.0 {
                continue;
            }
            if j == i {
                if grounded[i] {
                    acc0 -= a * features[(i, 0)];
                    acc1 -= a * features[(i, 1)];
                }
            } else {
                acc0 += a * (features[(j, 0)] - features[(i, 0)]);
                acc1 += a * (features[(j, 1)] - features[(i, 1)]);
            }
        }
        out[(i, 0)] = acc0;
        out[(i, 1)] = acc1;
        out[(i, 2)] = excitation[i];
    }
    out
}

fn grounded_flags(graph: &Graph) -> Vec<bool> {
    let mut flags = vec![false; graph.vertex_count()];
    for &g in graph.grounded_vertices() {
        flags[g] = true;
    }
    flags
}

/// Ground attachments show up in a Laplacian-pattern matrix as positive row
/// surplus.
fn grounded_flags_from_adjacency(matrix: &DMatrix<f64>) -> Vec<bool> {
    (0..matrix.nrows())
        .map(|i| matrix.row(i).iter().sum::<f64>().abs() > 1e-9)
        .collect()
}

/// Mean Smooth-L1 loss over the given sample indices, evaluated in chunks.
fn dataset_loss(model: &SurrogateModel, data: &Dataset, indices: &[usize]) -> Result<f64> {
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(512) {
        let (inputs, targets) = assemble_inputs(model, data, chunk)?;
        let out = model.mlp.forward(&inputs)?;
        let (loss, _) = smooth_l1(&out, &targets, 1.0)?;
        loss_sum += loss * out.len() as f64;
        count += out.len();
    }
    Ok(loss_sum / count as f64)
}

fn assemble_inputs(
    model: &SurrogateModel,
    data: &Dataset,
    batch: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match data {
        Dataset::Aggregated(samples) => {
            let v = samples[batch[0]].input.nrows();
            let width = samples[batch[0]].input.ncols();
            let mut inputs = DMatrix::zeros(batch.len() * v, width);
            let mut targets = DMatrix::zeros(batch.len() * v, 1);
            for (b, &idx) in batch.iter().enumerate() {
                inputs.view_mut((b * v, 0), (v, width)).copy_from(&samples[idx].input);
                targets.view_mut((b * v, 0), (v, 1)).copy_from(&samples[idx].target);
            }
            Ok((inputs, targets))
        }
        Dataset::PerVertex { samples, graph } => {
            let gat = model
                .gat
                .as_ref()
                .ok_or_else(|| Error::Incompatible("dataset needs an attention layer".into()))?;
            let neighbors = graph.neighbor_lists();
            let grounded = grounded_flags(graph);
            let v = graph.vertex_count();
            let mut inputs = DMatrix::zeros(batch.len() * v, 3);
            let mut targets = DMatrix::zeros(batch.len() * v, 1);
            for (b, &idx) in batch.iter().enumerate() {
                let sample = &samples[idx];
                let (alpha, _) = gat.attention_trace(&sample.features, &neighbors)?;
                let row = gat_aggregate(&alpha, &sample.features, &sample.excitation, &grounded);
                inputs.view_mut((b * v, 0), (v, 3)).copy_from(&row);
                targets.view_mut((b * v, 0), (v, 1)).copy_from(&sample.target);
            }
            Ok((inputs, targets))
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    pub initial_displacement: Option<DVector<f64>>,
    pub initial_velocity: Option<DVector<f64>>,
    pub capture_attention: bool,
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub episode: EpisodeRecord,
    /// Per-step V x V attention matrices, present when the model is an
    /// attention surrogate and capture was requested.
    pub attention: Option<Vec<DMatrix<f64>>>,
}

/// Autoregressive simulation: predict the next acceleration, integrate it
/// with the Newmark kinematic update, feed the state back. Prediction slot t
/// pairs with excitation row t; slots >= 1 see the state from slot t-1.
pub fn rollout(
    model: &SurrogateModel,
    adj: &AdjacencySet,
    excitation: &DMatrix<f64>,
    options: &RolloutOptions,
) -> Result<RolloutResult> {
    model.check_consistency()?;
    if adj.kind() != model.layout.kind || adj.matrix_count() != model.layout.matrix_count {
        return Err(Error::Incompatible(format!(
            "model expects {:?} with {} matrices, adjacency is {:?} with {}",
            model.layout.kind,
            model.layout.matrix_count,
            adj.kind(),
            adj.matrix_count()
        )));
    }
    let v = adj.vertex_count();
    if excitation.ncols() != v {
        return Err(Error::ShapeMismatch(format!(
            "excitation has {} columns, adjacency has {v} vertices",
            excitation.ncols()
        )));
    }
    let steps = excitation.nrows();
    if steps == 0 {
        return Err(Error::InvalidSize("excitation must have at least one step".into()));
    }
    let mut u = match &options.initial_displacement {
        Some(u0) if u0.len() == v => u0.clone(),
        Some(u0) => {
            return Err(Error::ShapeMismatch(format!(
                "initial displacement has {} entries for {v} vertices",
                u0.len()
            )))
        }
        None => DVector::zeros(v),
    };
    let mut vel = match &options.initial_velocity {
        Some(v0) if v0.len() == v => v0.clone(),
        Some(v0) => {
            return Err(Error::ShapeMismatch(format!(
                "initial velocity has {} entries for {v} vertices",
                v0.len()
            )))
        }
        None => DVector::zeros(v),
    };

    let gat_neighbors = if model.kind == SurrogateKind::Gat {
        Some(neighbors_from_adjacency(adj.single()?))
    } else {
        None
    };
    let gat_grounded = if model.kind == SurrogateKind::Gat {
        Some(grounded_flags_from_adjacency(adj.single()?))
    } else {
        None
    };
    let mut captures: Vec<DMatrix<f64>> = Vec::new();

    let mut acc = DMatrix::zeros(steps, v);
    let mut vel_out = DMatrix::zeros(steps, v);
    let mut disp_out = DMatrix::zeros(steps, v);
    let mut prev_accel = DVector::zeros(v);

    for t in 0..steps {
        let exc_row = excitation.row(t).transpose() / model.scalers.excitation;
        let inputs = match model.kind {
            SurrogateKind::Homogeneous | SurrogateKind::Heterogeneous => {
                let features = FeatureMatrix::from_state(
                    &(&vel / model.scalers.velocity),
                    &(&u / model.scalers.displacement),
                )?;
                let aggregated = aggregate(adj, &features)?;
                let width = aggregated.ncols() + 1;
                let mut x = DMatrix::zeros(v, width);
                x.view_mut((0, 0), (v, width - 1)).copy_from(&aggregated);
                x.column_mut(width - 1).copy_from(&exc_row);
                x
            }
            SurrogateKind::Gat => {
                let gat = model.gat.as_ref().unwrap();
                let neighbors = gat_neighbors.as_ref().unwrap();
                let grounded = gat_grounded.as_ref().unwrap();
                let mut features = DMatrix::zeros(v, 2);
                features.column_mut(0).copy_from(&(&vel / model.scalers.velocity));
                features.column_mut(1).copy_from(&(&u / model.scalers.displacement));
                let (alpha, _) = gat.attention_trace(&features, neighbors)?;
                let x = gat_aggregate(&alpha, &features, &exc_row, grounded);
                if options.capture_attention {
                    captures.push(alpha);
                }
                x
            }
        };
        let pred = model.mlp.forward(&inputs)?;
        let accel = pred.column(0) * model.scalers.acceleration;
        if accel.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("rollout produced a non-finite value at step {t}")));
        }
        if t > 0 {
            let (u_next, v_next) = kinematic_update(
                &u,
                &vel,
                &prev_accel,
                &accel,
                model.dt,
                model.beta,
                model.gamma,
            );
            u = u_next;
            vel = v_next;
        }
        acc.row_mut(t).copy_from(&accel.transpose());
        vel_out.row_mut(t).copy_from(&vel.transpose());
        disp_out.row_mut(t).copy_from(&u.transpose());
        prev_accel = accel;
    }
    let episode = EpisodeRecord::new(model.dt, excitation.clone(), acc, vel_out, disp_out)?;
    Ok(RolloutResult {
        episode,
        attention: if options.capture_attention && !captures.is_empty() {
            Some(captures)
        } else {
            None
        },
    })
}

fn neighbors_from_adjacency(matrix: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let v = matrix.nrows();
    (0..v)
        .map(|i| (0..v).filter(|&j| j != i && matrix[(i, j)] != 0.0).collect())
        .collect()
}

/// Metrics over the flattened acceleration channels of two records.
pub fn evaluate_rollout(predicted: &EpisodeRecord, truth: &EpisodeRecord) -> Result<MetricReport> {
    if predicted.acceleration.shape() != truth.acceleration.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predicted acceleration is {:?}, truth is {:?}",
            predicted.acceleration.shape(),
            truth.acceleration.shape()
        )));
    }
    let flatten = |m: &DMatrix<f64>| -> Vec<f64> {
        let mut out = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.push(m[(r, c)]);
            }
        }
        out
    };
    MetricReport::from_series(&flatten(&truth.acceleration), &flatten(&predicted.acceleration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_chain_adjacency;
    use crate::mdof::{
        generate_excitation, newmark_solve, ExcitationKind, ExcitationSpec, MdofSystem,
        SolverConfig,
    };
    use approx::assert_relative_eq;

    fn small_scalers() -> NormalizationScalers {
        NormalizationScalers { acceleration: 1.0, velocity: 1.0, displacement: 1.0, excitation: 1.0 }
    }

    fn toy_episodes(count: usize, steps: usize) -> Vec<EpisodeRecord> {
        let config = SolverConfig::new(0.01, steps, 0.25, 0.5).unwrap();
        let system = MdofSystem::uniform_chain(3, 2000.0, 2.4e5, 2500.0, true).unwrap();
        (0..count)
            .map(|i| {
                let spec = ExcitationSpec {
                    kind: ExcitationKind::Random { seed: i as u64 },
                    target_vertex: i % 3,
                    amplitude: 200.0,
                };
                let f = generate_excitation(&spec, &config, 3).unwrap();
                newmark_solve(&system, &f, &config).unwrap()
            })
            .collect()
    }

    #[test]
    fn scalers_are_max_abs_with_zero_fallback() {
        let mut episodes = toy_episodes(1, 50);
        let s = fit_scalers(&episodes).unwrap();
        assert_relative_eq!(s.acceleration, episodes[0].acceleration.amax());
        assert_relative_eq!(s.excitation, episodes[0].excitation.amax());
        // zero out a channel: fallback to 1
        episodes[0].velocity.fill(0.0);
        let s = fit_scalers(&episodes).unwrap();
        assert_eq!(s.velocity, 1.0);
        assert!(fit_scalers(&[]).is_err());
    }

    #[test]
    fn scaled_training_data_has_unit_max() {
        let episodes = toy_episodes(3, 80);
        let s = fit_scalers(&episodes).unwrap();
        let m = episodes
            .iter()
            .map(|e| (&e.acceleration / s.acceleration).amax())
            .fold(0.0f64, f64::max);
        assert_relative_eq!(m, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dataset_counts_and_alignment() {
        let episodes = toy_episodes(2, 40);
        let adj = build_chain_adjacency(3, true).unwrap();
        let scalers = fit_scalers(&episodes).unwrap();
        let samples = build_dataset(&episodes, &adj, &scalers).unwrap();
        assert_eq!(samples.len(), 2 * 39);
        // target at sample n is acceleration row n+1, normalized
        let n = 17;
        let expected = episodes[0].acceleration.row(n + 1).transpose() / scalers.acceleration;
        assert_relative_eq!(samples[n].target, expected, epsilon = 1e-12);
        // excitation column is E at n+1
        let exc = episodes[0].excitation.row(n + 1).transpose() / scalers.excitation;
        assert_relative_eq!(samples[n].input.column(2).into_owned(), exc, epsilon = 1e-12);
    }

    #[test]
    fn dataset_of_two_step_episode_has_one_sample() {
        let episodes = toy_episodes(1, 2);
        let adj = build_chain_adjacency(3, true).unwrap();
        let samples = build_dataset(&episodes, &adj, &small_scalers()).unwrap();
        assert_eq!(samples.len(), 1);
    }

    #[test]
    fn split_is_seeded_and_stratified() {
        let ids: Vec<usize> = (0..30).collect();
        let strata: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let (train, test) = split_episodes(&ids, Some(&strata), 0.8, 7).unwrap();
        assert_eq!(train.len(), 24);
        assert_eq!(test.len(), 6);
        for label in 0..3 {
            let tn = test.iter().filter(|id| **id / 10 == label).count();
            assert_eq!(tn, 2, "stratum {label} must contribute 2 test episodes");
        }
        let (train2, test2) = split_episodes(&ids, Some(&strata), 0.8, 7).unwrap();
        assert_eq!((train, test), (train2, test2));
    }

    #[test]
    fn training_is_deterministic_and_learns_zero_targets() {
        let episodes = toy_episodes(3, 30);
        let adj = build_chain_adjacency(3, true).unwrap();
        let scalers = fit_scalers(&episodes).unwrap();
        let mut samples = build_dataset(&episodes, &adj, &scalers).unwrap();
        for s in &mut samples {
            s.target.fill(0.0);
        }
        let data = Dataset::Aggregated(samples);
        let config = TrainConfig {
            epochs: 400,
            batch_size: 16,
            seed: 3,
            patience: 400,
            adam: AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let mut model_a =
            SurrogateModel::new_homogeneous(&[16, 64], scalers, 0.01, 0.25, 0.5, 1).unwrap();
        let out_a = train(&mut model_a, &data, &config).unwrap();
        let mut model_b =
            SurrogateModel::new_homogeneous(&[16, 64], scalers, 0.01, 0.25, 0.5, 1).unwrap();
        let out_b = train(&mut model_b, &data, &config).unwrap();
        assert_eq!(out_a.history, out_b.history, "same seed must give identical history");
        let first = out_a.history.first().unwrap().test;
        let last = out_a.best_test_loss;
        assert!(last < first / 10.0, "loss should collapse on zero targets: {first} -> {last}");
    }

    #[test]
    fn analytic_surrogate_is_exactly_linear() {
        let scalers = NormalizationScalers {
            acceleration: 0.5,
            velocity: 0.04,
            displacement: 0.01,
            excitation: 1000.0,
        };
        let model = analytic_linear_surrogate(
            2000.0, 2.4e5, 2500.0, &[16, 64], scalers, 0.01, 0.25, 0.5,
        )
        .unwrap();
        // composed map on a probe input
        let wv = -(2500.0 / 2000.0) * scalers.velocity / scalers.acceleration;
        let wu = -(2.4e5 / 2000.0) * scalers.displacement / scalers.acceleration;
        let we = scalers.excitation / (2000.0 * scalers.acceleration);
        let x = DMatrix::from_row_slice(2, 3, &[0.3, -0.2, 0.9, -1.0, 0.4, 0.0]);
        let out = model.mlp.forward(&x).unwrap();
        for r in 0..2 {
            let expected = wv * x[(r, 0)] + wu * x[(r, 1)] + we * x[(r, 2)];
            assert_relative_eq!(out[(r, 0)], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn rollout_single_step_returns_initial_state_row() {
        let adj = build_chain_adjacency(3, true).unwrap();
        let model =
            SurrogateModel::new_homogeneous(&[8], small_scalers(), 0.01, 0.25, 0.5, 5).unwrap();
        let excitation = DMatrix::zeros(1, 3);
        let result = rollout(&model, &adj, &excitation, &RolloutOptions::default()).unwrap();
        assert_eq!(result.episode.steps(), 1);
        assert!(result.episode.velocity.iter().all(|x| *x == 0.0));
        assert!(result.episode.displacement.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn rollout_zero_model_is_a_fixed_point() {
        let adj = build_chain_adjacency(3, true).unwrap();
        let zero_mlp = MlpModel::from_parts(
            vec![3, 4, 1],
            vec![DMatrix::zeros(3, 4), DMatrix::zeros(4, 1)],
            vec![DVector::zeros(4), DVector::zeros(1)],
            Activation::Relu,
        )
        .unwrap();
        let model = SurrogateModel {
            kind: SurrogateKind::Homogeneous,
            mlp: zero_mlp,
            gat: None,
            scalers: small_scalers(),
            dt: 0.01,
            beta: 0.25,
            gamma: 0.5,
            layout: AdjacencyLayout { kind: AdjacencyKind::Homogeneous, matrix_count: 1 },
        };
        let excitation = DMatrix::zeros(50, 3);
        let result = rollout(&model, &adj, &excitation, &RolloutOptions::default()).unwrap();
        assert!(result.episode.acceleration.iter().all(|x| *x == 0.0));
        assert!(result.episode.displacement.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn rollout_is_causal_in_the_excitation() {
        let adj = build_chain_adjacency(3, true).unwrap();
        let model =
            SurrogateModel::new_homogeneous(&[16], small_scalers(), 0.01, 0.25, 0.5, 2).unwrap();
        let config = SolverConfig::new(0.01, 60, 0.25, 0.5).unwrap();
        let spec = ExcitationSpec {
            kind: ExcitationKind::Random { seed: 5 },
            target_vertex: 1,
            amplitude: 100.0,
        };
        let exc_a = generate_excitation(&spec, &config, 3).unwrap();
        let mut exc_b = exc_a.clone();
        let t_cut = 40;
        for t in t_cut..60 {
            exc_b[(t, 1)] += 37.0;
        }
        let ra = rollout(&model, &adj, &exc_a, &RolloutOptions::default()).unwrap();
        let rb = rollout(&model, &adj, &exc_b, &RolloutOptions::default()).unwrap();
        // predictions strictly before the first step that sees the change are identical
        for t in 0..t_cut {
            for vtx in 0..3 {
                assert_eq!(
                    ra.episode.acceleration[(t, vtx)],
                    rb.episode.acceleration[(t, vtx)],
                    "step {t}"
                );
            }
        }
        assert_ne!(ra.episode.acceleration, rb.episode.acceleration);
    }

    #[test]
    fn rollout_rejects_incompatible_layouts() {
        let g = Graph::chain_with_spring_types(3, &[0, 1], true).unwrap();
        let het = crate::graph::build_heterogeneous_adjacency(&g).unwrap();
        let model =
            SurrogateModel::new_homogeneous(&[8], small_scalers(), 0.01, 0.25, 0.5, 5).unwrap();
        let excitation = DMatrix::zeros(5, 3);
        assert!(matches!(
            rollout(&model, &het, &excitation, &RolloutOptions::default()),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn gat_rollout_captures_normalized_attention() {
        let adj = build_chain_adjacency(4, true).unwrap();
        let model =
            SurrogateModel::new_gat(&[16], 8, small_scalers(), 0.01, 0.25, 0.5, 9).unwrap();
        let mut excitation = DMatrix::zeros(30, 4);
        excitation[(0, 0)] = 500.0;
        let options = RolloutOptions { capture_attention: true, ..Default::default() };
        let result = rollout(&model, &adj, &excitation, &options).unwrap();
        let captures = result.attention.unwrap();
        assert_eq!(captures.len(), 30);
        for alpha in &captures {
            for i in 0..4 {
                let sum: f64 = alpha.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn evaluate_rollout_on_identical_records() {
        let episodes = toy_episodes(1, 30);
        let report = evaluate_rollout(&episodes[0], &episodes[0]).unwrap();
        assert_eq!(report.nmse, 0.0);
        assert_eq!(report.r_squared, 1.0);
        assert_eq!(report.peak_error_pct, 0.0);
        assert_eq!(report.sample_count, 30 * 3);
    }

    #[test]
    fn gat_training_gradients_match_finite_differences() {
        // end-to-end gradcheck through attention + aggregation + mlp
        let graph = Graph::chain(4, true).unwrap();
        let episodes = {
            let config = SolverConfig::new(0.01, 12, 0.25, 0.5).unwrap();
            let system = MdofSystem::uniform_chain(4, 2000.0, 2.4e5, 2500.0, true).unwrap();
            let spec = ExcitationSpec {
                kind: ExcitationKind::Random { seed: 1 },
                target_vertex: 2,
                amplitude: 300.0,
            };
            let f = generate_excitation(&spec, &config, 4).unwrap();
            vec![newmark_solve(&system, &f, &config).unwrap()]
        };
        let scalers = fit_scalers(&episodes).unwrap();
        let samples = build_gat_dataset(&episodes, &scalers).unwrap();
        let data = Dataset::PerVertex { samples, graph };
        let mut model = SurrogateModel::new_gat(&[5], 3, scalers, 0.01, 0.25, 0.5, 13).unwrap();
        let mut jitter = ChaCha8Rng::seed_from_u64(77);
        let jittered: Vec<f64> = model
            .flatten_parameters()
            .iter()
            .map(|p| p + jitter.gen_range(-0.05..0.05))
            .collect();
        model.set_parameters(&jittered).unwrap();

        // skip the zero-initial-state sample: zero features put every
        // attention score exactly on the LeakyReLU kink
        let batch: Vec<usize> = (1..7).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, grads) = batch_gradients(&model, &data, &batch, 0.0, &mut rng).unwrap();

        let base = model.flatten_parameters();
        let loss_at = |flat: &[f64]| -> f64 {
            let mut m = model.clone();
            m.set_parameters(flat).unwrap();
            let (inputs, targets) = assemble_inputs(&m, &data, &batch).unwrap();
            let out = m.mlp.forward(&inputs).unwrap();
            smooth_l1(&out, &targets, 1.0).unwrap().0
        };
        crate::neural::testutil::assert_gradients_match(loss_at, &base, &grads, 2, "gat pipeline");
    }
}
