//! The two-branch interaction network, its CNN-only ablation, and grid search.
//!
//! Branch A reads the `(2, L)` stacked expression pair as a two-channel
//! signal: three `conv1d -> batch norm -> ReLU -> dropout` blocks without
//! pooling, then a flatten and a dense projection to `branch_feature_dim`.
//! Branch B reads the length-`L` element-wise product through two
//! `dense -> batch norm -> ReLU -> dropout` blocks. The two feature vectors
//! are concatenated (late fusion) and mapped to two logits; the softmax of
//! column 1 is the interaction probability.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autonet::gradcheck::Differentiable;
use crate::autonet::{
    he_init, softmax, softmax_cross_entropy, Adam, LayerSpec, Mode, Parameter, Real, Sequential,
    Tensor,
};
use crate::data::{ExpressionMatrix, LabeledDataset, PairFeatures};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Rng};
use crate::trainer::{self, TrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Gener,
    CnnOnly,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Gener => "gener",
            Architecture::CnnOnly => "cnn_only",
        })
    }
}

fn default_filters() -> Vec<usize> {
    vec![32, 64, 64]
}
fn default_kernels() -> Vec<usize> {
    vec![7, 5, 3]
}
fn default_width() -> usize {
    128
}
fn default_dropout() -> f64 {
    0.3
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    64
}

/// Network hyperparameters. `length` is the number of expression conditions
/// (`L`); zero means "take it from the data".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerConfig {
    #[serde(default = "default_filters")]
    pub conv_filters: Vec<usize>,
    #[serde(default = "default_kernels")]
    pub conv_kernels: Vec<usize>,
    #[serde(default = "default_width")]
    pub branch_feature_dim: usize,
    #[serde(default = "default_width")]
    pub dense_units: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default, alias = "L")]
    pub length: usize,
}

impl Default for GenerConfig {
    fn default() -> Self {
        GenerConfig {
            conv_filters: default_filters(),
            conv_kernels: default_kernels(),
            branch_feature_dim: default_width(),
            dense_units: default_width(),
            dropout_rate: default_dropout(),
            lr: default_lr(),
            batch_size: default_batch(),
            length: 0,
        }
    }
}

impl GenerConfig {
    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.conv_filters.len() != 3 || self.conv_filters.contains(&0) {
            return fail(format!("conv_filters must be 3 positive integers, got {:?}", self.conv_filters));
        }
        if self.conv_kernels.len() != 3 || self.conv_kernels.iter().any(|k| k % 2 == 0) {
            return fail(format!("conv_kernels must be 3 odd integers, got {:?}", self.conv_kernels));
        }
        if self.branch_feature_dim == 0 || self.dense_units == 0 {
            return fail("branch widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be finite and >= 0", self.lr));
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2".into());
        }
        if self.length == 0 {
            return fail("input length L must be positive".into());
        }
        Ok(())
    }

    /// Length of the concatenated feature vector fed to the classifier.
    pub fn fusion_width(&self) -> usize {
        self.branch_feature_dim + self.dense_units
    }

    /// Short stable identifier of this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn conv_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut channels = 2;
        for (&filters, &kernel) in self.conv_filters.iter().zip(&self.conv_kernels) {
            specs.extend([
                LayerSpec::Conv1d {
                    in_channels: channels,
                    out_channels: filters,
                    kernel,
                },
                LayerSpec::batch_norm(filters),
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: self.dropout_rate },
            ]);
            channels = filters;
        }
        specs.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: channels * self.length,
                outputs: self.branch_feature_dim,
            },
            LayerSpec::Relu,
        ]);
        specs
    }

    fn dense_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut inputs = self.length;
        for _ in 0..2 {
            specs.extend([
                LayerSpec::Dense {
                    inputs,
                    outputs: self.dense_units,
                },
                LayerSpec::batch_norm(self.dense_units),
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: self.dropout_rate },
            ]);
            inputs = self.dense_units;
        }
        specs
    }
}

/// Both network inputs for a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `[n, 2, L]`
    pub stacked: Tensor<T>,
    /// `[n, L]`
    pub product: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn from_features(features: &[&PairFeatures], labels: Vec<usize>) -> Result<Self> {
        let n = features.len();
        let l = features.first().map_or(0, |f| f.width());
        let mut stacked = Vec::with_capacity(n * 2 * l);
        let mut product = Vec::with_capacity(n * l);
        for f in features {
            if f.width() != l {
                return Err(Error::ShapeMismatch("mixed feature widths in batch".into()));
            }
            stacked.extend(f.stacked.iter().map(|&v| T::from_f64(v)));
            product.extend(f.product.iter().map(|&v| T::from_f64(v)));
        }
        Ok(Batch {
            stacked: Tensor::from_vec(&[n, 2, l], stacked)?,
            product: Tensor::from_vec(&[n, l], product)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub architecture: Architecture,
    pub config: GenerConfig,
    pub conv_branch: Sequential<T>,
    pub dense_branch: Option<Sequential<T>>,
    pub head: Sequential<T>,
}

/// The full two-branch network, He-initialized from `seed`.
pub fn build_gener<T: Real>(config: &GenerConfig, seed: u64) -> Result<Network<T>> {
    Network::new(Architecture::Gener, config, seed)
}

/// Branch A alone followed by the two-way classifier.
pub fn build_cnn_only<T: Real>(config: &GenerConfig, seed: u64) -> Result<Network<T>> {
    Network::new(Architecture::CnnOnly, config, seed)
}

impl<T: Real> Network<T> {
    pub fn new(architecture: Architecture, config: &GenerConfig, seed: u64) -> Result<Self> {
        let mut net = Self::uninitialized(architecture, config)?;
        let mut rng = Rng::new(seed);
        he_init(&mut net.conv_branch, &mut rng);
        if let Some(dense) = &mut net.dense_branch {
            he_init(dense, &mut rng);
        }
        he_init(&mut net.head, &mut rng);
        Ok(net)
    }

    /// Correct shapes, zero weights; used when loading checkpoints.
    pub(crate) fn uninitialized(architecture: Architecture, config: &GenerConfig) -> Result<Self> {
        config.validate()?;
        let conv_branch = Sequential::from_specs(&config.conv_specs())?;
        let (dense_branch, fused) = match architecture {
            Architecture::Gener => (
                Some(Sequential::from_specs(&config.dense_specs())?),
                config.fusion_width(),
            ),
            Architecture::CnnOnly => (None, config.branch_feature_dim),
        };
        let head = Sequential::from_specs(&[LayerSpec::Dense {
            inputs: fused,
            outputs: 2,
        }])?;
        Ok(Network {
            architecture,
            config: config.clone(),
            conv_branch,
            dense_branch,
            head,
        })
    }

    pub fn input_length(&self) -> usize {
        self.config.length
    }

    /// Logits `[n, 2]`.
    pub fn forward(&mut self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        let l = self.input_length();
        if batch.stacked.shape() != [batch.len(), 2, l] || batch.product.shape() != [batch.len(), l] {
            return Err(Error::ShapeMismatch(format!(
                "network expects L={l}, batch has {:?}",
                batch.product.shape()
            )));
        }
        let a = self.conv_branch.forward(&batch.stacked, mode, rng)?;
        let fused = match &mut self.dense_branch {
            Some(dense) => {
                let b = dense.forward(&batch.product, mode, rng)?;
                Tensor::concat_columns(&a, &b)?
            }
            None => a,
        };
        self.head.forward(&fused, mode, rng)
    }

    pub fn backward(&mut self, grad_logits: &Tensor<T>) {
        let g = self.head.backward(grad_logits);
        match &mut self.dense_branch {
            Some(dense) => {
                let (ga, gb) = g.split_columns(self.config.branch_feature_dim);
                self.conv_branch.backward(&ga);
                dense.backward(&gb);
            }
            None => {
                self.conv_branch.backward(&g);
            }
        }
    }

    /// Softmax class probabilities in inference mode.
    pub fn predict_proba(&mut self, batch: &Batch<T>) -> Result<Tensor<T>> {
        let mut rng = Rng::new(0);
        let logits = self.forward(batch, Mode::Infer, &mut rng)?;
        Ok(softmax(&logits))
    }

    /// One optimization step on a batch; returns the batch loss.
    pub fn train_step(&mut self, batch: &Batch<T>, optimizer: &Adam, rng: &mut Rng) -> Result<T> {
        self.zero_grad();
        let logits = self.forward(batch, Mode::Train, rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.backward(&grad);
        for (_, p) in self.named_params_mut() {
            optimizer.step(p);
        }
        Ok(loss)
    }

    fn parts_mut(&mut self) -> Vec<(&'static str, &mut Sequential<T>)> {
        let mut parts = vec![("conv", &mut self.conv_branch)];
        if let Some(d) = &mut self.dense_branch {
            parts.push(("dense", d));
        }
        parts.push(("head", &mut self.head));
        parts
    }

    fn parts(&self) -> Vec<(&'static str, &Sequential<T>)> {
        let mut parts = vec![("conv", &self.conv_branch)];
        if let Some(d) = &self.dense_branch {
            parts.push(("dense", d));
        }
        parts.push(("head", &self.head));
        parts
    }

    /// Trainable parameters named `"{branch}.{layer}.{field}"`.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter<T>)> {
        self.parts_mut()
            .into_iter()
            .flat_map(|(prefix, seq)| {
                seq.named_params_mut()
                    .into_iter()
                    .map(move |(n, p)| (format!("{prefix}.{n}"), p))
            })
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Parameter<T>)> {
        self.parts()
            .into_iter()
            .flat_map(|(prefix, seq)| {
                seq.named_params()
                    .into_iter()
                    .map(move |(n, p)| (format!("{prefix}.{n}"), p))
            })
            .collect()
    }

    /// Trainable values followed by batch-norm running statistics, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .named_params()
            .into_iter()
            .map(|(n, p)| (n, &p.value))
            .collect();
        for (prefix, seq) in self.parts() {
            out.extend(
                seq.named_buffers()
                    .into_iter()
                    .map(|(n, t)| (format!("{prefix}.{n}"), t)),
            );
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for (prefix, seq) in self.parts_mut() {
            for (layer_idx, layer) in seq.layers.iter_mut().enumerate() {
                let (p, b) = split_layer(layer);
                params.extend(p.into_iter().map(|(n, t)| (format!("{prefix}.{layer_idx}.{n}"), t)));
                buffers.extend(b.into_iter().map(|(n, t)| (format!("{prefix}.{layer_idx}.{n}"), t)));
            }
        }
        params.extend(buffers);
        params
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for (_, seq) in self.parts_mut() {
            seq.set_dropout_frozen(frozen);
        }
    }

    pub fn activation_hash(&self) -> u64 {
        self.parts()
            .into_iter()
            .fold(0xCBF2_9CE4_8422_2325, |h, (_, seq)| seq.activation_hash(h))
    }
}

fn split_layer<T: Real>(
    layer: &mut crate::autonet::Layer<T>,
) -> (Vec<(&'static str, &mut Tensor<T>)>, Vec<(&'static str, &mut Tensor<T>)>) {
    use crate::autonet::Layer;
    match layer {
        Layer::Dense(l) => (vec![("weight", &mut l.weight.value), ("bias", &mut l.bias.value)], vec![]),
        Layer::Conv1d(l) => (vec![("weight", &mut l.weight.value), ("bias", &mut l.bias.value)], vec![]),
        Layer::BatchNorm(l) => (
            vec![("gamma", &mut l.gamma.value), ("beta", &mut l.beta.value)],
            vec![("running_mean", &mut l.running_mean), ("running_var", &mut l.running_var)],
        ),
        _ => (vec![], vec![]),
    }
}

/// Cross-entropy of a 64-bit network on a fixed batch in training mode
/// with frozen dropout masks, for gradient checking.
pub struct NetworkObjective {
    pub net: Network<f64>,
    pub batch: Batch<f64>,
    rng: Rng,
}

impl NetworkObjective {
    pub fn new(mut net: Network<f64>, batch: Batch<f64>, seed: u64) -> Self {
        net.set_dropout_frozen(true);
        NetworkObjective {
            net,
            batch,
            rng: Rng::new(seed),
        }
    }
}

impl Differentiable for NetworkObjective {
    fn param_names(&self) -> Vec<String> {
        self.net.named_params().into_iter().map(|(n, _)| n).collect()
    }

    fn param_mut(&mut self, index: usize) -> &mut Parameter<f64> {
        self.net.named_params_mut().swap_remove(index).1
    }

    fn loss(&mut self) -> Result<f64> {
        let logits = self.net.forward(&self.batch, Mode::Train, &mut self.rng)?;
        Ok(softmax_cross_entropy(&logits, &self.batch.labels)?.0)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.net.zero_grad();
        let logits = self.net.forward(&self.batch, Mode::Train, &mut self.rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &self.batch.labels)?;
        self.net.backward(&grad);
        Ok(loss)
    }

    fn activation_pattern(&self) -> u64 {
        self.net.activation_hash()
    }
}

/// Candidate values per hyperparameter; the grid is their Cartesian product
/// enumerated with `lr` outermost and `dense_units` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lr: Vec<f64>,
    pub dropout_rate: Vec<f64>,
    pub conv_filters: Vec<Vec<usize>>,
    pub dense_units: Vec<usize>,
}

impl GridSpec {
    pub fn points(&self, base: &GenerConfig) -> Result<Vec<GenerConfig>> {
        if self.lr.is_empty()
            || self.dropout_rate.is_empty()
            || self.conv_filters.is_empty()
            || self.dense_units.is_empty()
        {
            return Err(Error::EmptyGrid);
        }
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &dropout_rate in &self.dropout_rate {
                for filters in &self.conv_filters {
                    for &dense_units in &self.dense_units {
                        let cfg = GenerConfig {
                            lr,
                            dropout_rate,
                            conv_filters: filters.clone(),
                            dense_units,
                            ..base.clone()
                        };
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub index: usize,
    pub config_hash: String,
    pub config: GenerConfig,
    pub seed: u64,
    pub val_auroc: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
}

pub struct GridOutcome {
    /// Sorted best first.
    pub leaderboard: Vec<LeaderboardRow>,
    /// Full result of the winning point.
    pub best: trainer::RunOutcome,
}

/// Trains one model per grid point (seed `seed ^ index`) and ranks them by
/// validation micro-AUROC, then lower validation loss, then grid order.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    grid: &GridSpec,
    base: &GenerConfig,
    architecture: Architecture,
    matrix: &ExpressionMatrix,
    dataset: &LabeledDataset,
    opts: &TrainOptions,
    seed: u64,
    jobs: usize,
) -> Result<GridOutcome> {
    let points = grid.points(base)?;
    let run = |(index, cfg): (usize, &GenerConfig)| -> Result<(LeaderboardRow, trainer::RunOutcome)> {
        let point_seed = seed ^ index as u64;
        let out = trainer::train_configured(architecture, cfg, matrix, dataset, opts, point_seed)?;
        let best = out.history.best();
        let row = LeaderboardRow {
            index,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            seed: point_seed,
            val_auroc: best.val_auroc_micro,
            val_loss: best.val_loss,
            best_epoch: out.history.best_epoch,
        };
        Ok((row, out))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    let mut results: Vec<(LeaderboardRow, trainer::RunOutcome)> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by(|(a, _), (b, _)| {
        b.val_auroc
            .total_cmp(&a.val_auroc)
            .then(a.val_loss.total_cmp(&b.val_loss))
            .then(a.index.cmp(&b.index))
    });
    let mut results = results.into_iter();
    let (first_row, best) = results.next().expect("grid has at least one point");
    let mut leaderboard = vec![first_row];
    leaderboard.extend(results.map(|(r, _)| r));
    Ok(GridOutcome { leaderboard, best })
}

/// Leaderboard as CSV: hash, hyperparameters, validation AUROC and loss.
pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from("config_hash,lr,dropout_rate,conv_filters,dense_units,val_auroc,val_loss,best_epoch,seed\n");
    for r in rows {
        let filters: Vec<String> = r.config.conv_filters.iter().map(|f| f.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.config_hash,
            r.config.lr,
            r.config.dropout_rate,
            filters.join("-"),
            r.config.dense_units,
            r.val_auroc,
            r.val_loss,
            r.best_epoch,
            r.seed
        ));
    }
    out
}

/// Default model initialization seed derived from a run seed.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, stream::INIT)
}
