//! Training loop orchestration: batching, loss assembly, optimization,
//! checkpointing, and deterministic experiment configuration.
//!
//! Reproducibility contract: `(manifest, config)` fully determines the
//! parameters at every epoch. Shuffling draws a fresh generator per epoch
//! from the config seed, per-video gradients are computed independently
//! (possibly in parallel) and reduced in video order, and resuming from a
//! checkpoint continues the same trajectory bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_features, DatasetManifest};
use crate::error::TrainError;
use crate::losses::{LossBreakdown, LossToggles};
use crate::model::{
    forward, forward_backward, ACOutputs, FBOutputs, ModelDims, ModelGrads, ModelHyper,
    ModelParams, StreamFeatures, VideoLabel,
};
use crate::numcore::{derive_seed, optimizer_step, OptimizerState, SplitMix64};

/// Declarative training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub theta_h: f64,
    pub theta_l: f64,
    pub hidden: usize,
    pub kernel_size: usize,
    pub seed: u64,
    /// Epoch interval at which intermediate checkpoints are written.
    pub checkpoint_interval: usize,
    pub toggles: LossToggles,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            lambda: 1.0,
            alpha: 0.5,
            theta_h: 0.7,
            theta_l: 0.3,
            hidden: 64,
            kernel_size: 3,
            seed: 42,
            checkpoint_interval: 25,
            toggles: LossToggles::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrainError::Config("alpha must lie in [0, 1]".into()));
        }
        if !(self.theta_l < self.theta_h
            && self.theta_l > 0.0
            && self.theta_h < 1.0)
        {
            return Err(TrainError::Config(
                "need 0 < theta_l < theta_h < 1".into(),
            ));
        }
        if self.lambda < 0.0 {
            return Err(TrainError::Config("lambda must be >= 0".into()));
        }
        self.toggles.validate().map_err(TrainError::Num)?;
        Ok(())
    }

    pub fn hyper(&self) -> ModelHyper {
        ModelHyper {
            alpha: self.alpha,
            lambda: self.lambda,
            theta_h: self.theta_h,
            theta_l: self.theta_l,
        }
    }

    /// FNV-1a hash of the canonical TOML rendering; stored in checkpoints to
    /// flag config mismatches on resume.
    pub fn hash(&self) -> u64 {
        let text = toml::to_string(self).unwrap_or_default();
        fnv1a(text.as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// A dataset split loaded into memory.
pub struct LoadedVideo {
    pub video_id: String,
    pub features: StreamFeatures,
    pub label: VideoLabel,
}

pub struct LoadedDataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub videos: Vec<LoadedVideo>,
}

/// Loads every video of one split (features and labels) from a manifest
/// directory.
pub fn load_split(
    manifest: &DatasetManifest,
    dir: &Path,
    split: &str,
) -> Result<LoadedDataset, TrainError> {
    let records = manifest.split(split);
    if records.is_empty() {
        return Err(TrainError::Config(format!("split '{split}' has no videos")));
    }
    let feature_dim = records[0].feature_dim;
    let videos: Result<Vec<LoadedVideo>, TrainError> = records
        .par_iter()
        .map(|record| {
            let features = load_features(dir, record)?;
            let label = record.label(manifest.num_classes)?;
            Ok(LoadedVideo {
                video_id: record.video_id.clone(),
                features,
                label,
            })
        })
        .collect();
    Ok(LoadedDataset {
        num_classes: manifest.num_classes,
        feature_dim,
        videos: videos?,
    })
}

/// Model parameters, optimizer state, epoch counter, config hash and the
/// per-epoch loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub epoch: usize,
    pub config_hash: u64,
    pub history: Vec<LossBreakdown>,
}

/// Trains from scratch. Writes intermediate checkpoints into
/// `checkpoint_dir` (if given) every `checkpoint_interval` epochs.
pub fn train(
    dataset: &LoadedDataset,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    let dims = ModelDims {
        feature_dim: dataset.feature_dim,
        num_classes: dataset.num_classes,
        hidden: config.hidden,
        kernel_size: config.kernel_size,
    };
    let params = ModelParams::new(dims, config.hyper(), derive_seed(config.seed, 0x1217))
        .map_err(TrainError::Num)?;
    let optimizer = OptimizerState::new(params.param_count(), config.learning_rate);
    let start = Checkpoint {
        params,
        optimizer,
        epoch: 0,
        config_hash: config.hash(),
        history: Vec::new(),
    };
    train_from(dataset, config, start, checkpoint_dir)
}

/// Continues training from a checkpoint up to `config.epochs`. Resuming a
/// partial run reproduces the uninterrupted trajectory exactly, because the
/// shuffle stream is derived per epoch rather than carried across epochs.
pub fn train_from(
    dataset: &LoadedDataset,
    config: &TrainConfig,
    checkpoint: Checkpoint,
    checkpoint_dir: Option<&Path>,
) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    let expected_hash = config.hash();
    if checkpoint.config_hash != expected_hash {
        return Err(TrainError::Incompatible(format!(
            "checkpoint config hash {:#x} differs from current config {:#x}",
            checkpoint.config_hash, expected_hash
        )));
    }
    let Checkpoint {
        mut params,
        optimizer: mut opt,
        epoch: start_epoch,
        config_hash,
        mut history,
    } = checkpoint;
    if params.dims.feature_dim != dataset.feature_dim
        || params.dims.num_classes != dataset.num_classes
    {
        return Err(TrainError::Incompatible(format!(
            "checkpoint dims {}x{} vs dataset {}x{}",
            params.dims.feature_dim,
            params.dims.num_classes,
            dataset.feature_dim,
            dataset.num_classes
        )));
    }

    let n_videos = dataset.videos.len();
    for epoch in start_epoch..config.epochs {
        let mut order: Vec<usize> = (0..n_videos).collect();
        let mut shuffle_rng = SplitMix64::new(derive_seed(config.seed, 0x5AFE + epoch as u64));
        shuffle_rng.shuffle(&mut order);

        let mut epoch_losses = LossBreakdown::zero();
        for batch in order.chunks(config.batch_size) {
            // per-video work is pure; reduce in batch order afterwards
            let results: Vec<Result<(LossBreakdown, ModelGrads), TrainError>> = batch
                .par_iter()
                .map(|&vi| {
                    let video = &dataset.videos[vi];
                    let (breakdown, grads, _) = forward_backward(
                        &video.features,
                        &video.label,
                        &params,
                        config.toggles,
                    )
                    .map_err(TrainError::Num)?;
                    if !breakdown.is_finite() {
                        let component = first_non_finite(&breakdown);
                        return Err(TrainError::NonFiniteLoss {
                            component,
                            video_id: video.video_id.clone(),
                        });
                    }
                    Ok((breakdown, grads))
                })
                .collect();

            let mut batch_grads: Option<ModelGrads> = None;
            for result in results {
                let (breakdown, grads) = result?;
                epoch_losses.add(&breakdown);
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(total) => total.add_assign(&grads),
                }
            }
            if let Some(grads) = batch_grads {
                let mut flat = params.flatten();
                optimizer_step(&mut flat, &grads.flatten(), &mut opt)
                    .map_err(TrainError::Num)?;
                params.set_from_flat(&flat).map_err(TrainError::Num)?;
            }
        }
        epoch_losses.scale(1.0 / n_videos as f64);
        history.push(epoch_losses);

        let finished = epoch + 1;
        if let Some(dir) = checkpoint_dir {
            let due = config.checkpoint_interval > 0
                && finished % config.checkpoint_interval == 0;
            if due || finished == config.epochs {
                let snapshot = Checkpoint {
                    params: params.clone(),
                    optimizer: opt.clone(),
                    epoch: finished,
                    config_hash,
                    history: history.clone(),
                };
                save_checkpoint(&dir.join("checkpoint.bin"), &snapshot)?;
            }
        }
    }
    Ok(Checkpoint {
        params,
        optimizer: opt,
        epoch: config.epochs,
        config_hash,
        history,
    })
}

fn first_non_finite(b: &LossBreakdown) -> &'static str {
    if !b.l_cls_fb.is_finite() {
        "l_cls_fb"
    } else if !b.l_cls_ac.is_finite() {
        "l_cls_ac"
    } else if !b.l_g.is_finite() {
        "l_g"
    } else if !b.l_mse.is_finite() {
        "l_mse"
    } else {
        "total"
    }
}

/// Forward-only pass over a split; outputs feed the localization stage.
pub fn infer(
    dataset: &LoadedDataset,
    params: &ModelParams,
) -> Result<Vec<(String, FBOutputs, ACOutputs)>, TrainError> {
    if params.dims.feature_dim != dataset.feature_dim
        || params.dims.num_classes != dataset.num_classes
    {
        return Err(TrainError::Incompatible(format!(
            "params dims {}x{} vs dataset {}x{}",
            params.dims.feature_dim,
            params.dims.num_classes,
            dataset.feature_dim,
            dataset.num_classes
        )));
    }
    dataset
        .videos
        .par_iter()
        .map(|video| {
            let fwd = forward(&video.features, params).map_err(TrainError::Num)?;
            Ok((video.video_id.clone(), fwd.fb, fwd.ac))
        })
        .collect()
}

/// Writes the loss history as CSV.
pub fn write_loss_history(path: &Path, history: &[LossBreakdown]) -> Result<(), TrainError> {
    let to_err = |e: std::io::Error| TrainError::io(path.display().to_string(), e);
    let file = std::fs::File::create(path).map_err(to_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "epoch,l_cls_fb,l_cls_ac,l_g,l_mse,total").map_err(to_err)?;
    for (epoch, b) in history.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            epoch + 1,
            b.l_cls_fb,
            b.l_cls_ac,
            b.l_g,
            b.l_mse,
            b.total
        )
        .map_err(to_err)?;
    }
    w.flush().map_err(to_err)
}

// ---------------------------------------------------------------------------
// Checkpoint container: little-endian binary with named parameter blobs in
// the fixed block order.
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: [u8; 8] = *b"ACSLOCKP";
const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), TrainError> {
    let to_err = |e: std::io::Error| TrainError::io(path.display().to_string(), e);
    let file = std::fs::File::create(path).map_err(to_err)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(&CHECKPOINT_MAGIC).map_err(to_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(to_err)?;
    w.write_all(&ckpt.config_hash.to_le_bytes()).map_err(to_err)?;
    w.write_all(&(ckpt.epoch as u64).to_le_bytes()).map_err(to_err)?;

    let dims = ckpt.params.dims;
    for v in [
        dims.feature_dim as u32,
        dims.num_classes as u32,
        dims.hidden as u32,
        dims.kernel_size as u32,
    ] {
        w.write_all(&v.to_le_bytes()).map_err(to_err)?;
    }
    let hyper = ckpt.params.hyper;
    for v in [hyper.alpha, hyper.lambda, hyper.theta_h, hyper.theta_l] {
        w.write_all(&v.to_le_bytes()).map_err(to_err)?;
    }

    let blocks = ckpt.params.blocks();
    w.write_all(&(blocks.len() as u32).to_le_bytes()).map_err(to_err)?;
    for (name, layer) in blocks {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes()).map_err(to_err)?;
        w.write_all(name_bytes).map_err(to_err)?;
        w.write_all(&[layer.kind.code()]).map_err(to_err)?;
        w.write_all(&(layer.weights.rows() as u32).to_le_bytes()).map_err(to_err)?;
        w.write_all(&(layer.weights.cols() as u32).to_le_bytes()).map_err(to_err)?;
        w.write_all(&(layer.kernel_size as u32).to_le_bytes()).map_err(to_err)?;
        w.write_all(&(layer.bias.len() as u32).to_le_bytes()).map_err(to_err)?;
        for &v in layer.weights.data() {
            w.write_all(&v.to_le_bytes()).map_err(to_err)?;
        }
        for &v in &layer.bias {
            w.write_all(&v.to_le_bytes()).map_err(to_err)?;
        }
    }

    let opt = &ckpt.optimizer;
    for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon] {
        w.write_all(&v.to_le_bytes()).map_err(to_err)?;
    }
    w.write_all(&opt.step_count.to_le_bytes()).map_err(to_err)?;
    w.write_all(&(opt.first_moment.len() as u64).to_le_bytes()).map_err(to_err)?;
    for &v in opt.first_moment.iter().chain(opt.second_moment.iter()) {
        w.write_all(&v.to_le_bytes()).map_err(to_err)?;
    }

    w.write_all(&(ckpt.history.len() as u64).to_le_bytes()).map_err(to_err)?;
    for b in &ckpt.history {
        for v in [b.l_cls_fb, b.l_cls_ac, b.l_g, b.l_mse, b.total] {
            w.write_all(&v.to_le_bytes()).map_err(to_err)?;
        }
    }
    w.flush().map_err(to_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let to_err = |e: std::io::Error| TrainError::io(path.display().to_string(), e);
    let corrupt = |detail: &str| TrainError::CorruptCheckpoint {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(to_err)?
        .read_to_end(&mut bytes)
        .map_err(to_err)?;
    let mut r = ByteReader::new(&bytes);

    if r.take(8).ok_or_else(|| corrupt("missing magic"))? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if r.u32().ok_or_else(|| corrupt("missing version"))? != CHECKPOINT_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let config_hash = r.u64().ok_or_else(|| corrupt("missing config hash"))?;
    let epoch = r.u64().ok_or_else(|| corrupt("missing epoch"))? as usize;

    let feature_dim = r.u32().ok_or_else(|| corrupt("missing dims"))? as usize;
    let num_classes = r.u32().ok_or_else(|| corrupt("missing dims"))? as usize;
    let hidden = r.u32().ok_or_else(|| corrupt("missing dims"))? as usize;
    let kernel_size = r.u32().ok_or_else(|| corrupt("missing dims"))? as usize;
    let alpha = r.f64().ok_or_else(|| corrupt("missing hyper"))?;
    let lambda = r.f64().ok_or_else(|| corrupt("missing hyper"))?;
    let theta_h = r.f64().ok_or_else(|| corrupt("missing hyper"))?;
    let theta_l = r.f64().ok_or_else(|| corrupt("missing hyper"))?;

    let dims = ModelDims {
        feature_dim,
        num_classes,
        hidden,
        kernel_size,
    };
    let hyper = ModelHyper {
        alpha,
        lambda,
        theta_h,
        theta_l,
    };
    let mut params = ModelParams::new(dims, hyper, 0).map_err(TrainError::Num)?;
    let block_count = r.u32().ok_or_else(|| corrupt("missing block count"))? as usize;
    let expected = params.blocks().len();
    if block_count != expected {
        return Err(corrupt(&format!(
            "expected {expected} parameter blocks, found {block_count}"
        )));
    }
    let mut flat = Vec::with_capacity(params.param_count());
    for (expected_name, layer) in params.blocks() {
        let name_len = r.u16().ok_or_else(|| corrupt("missing block name"))? as usize;
        let name = r
            .take(name_len)
            .and_then(|b| std::str::from_utf8(b).ok())
            .ok_or_else(|| corrupt("unreadable block name"))?;
        if name != expected_name {
            return Err(corrupt(&format!(
                "block '{name}' out of order, expected '{expected_name}'"
            )));
        }
        let kind = r.u8().ok_or_else(|| corrupt("missing block kind"))?;
        let rows = r.u32().ok_or_else(|| corrupt("missing shape"))? as usize;
        let cols = r.u32().ok_or_else(|| corrupt("missing shape"))? as usize;
        let kernel = r.u32().ok_or_else(|| corrupt("missing shape"))? as usize;
        let bias_len = r.u32().ok_or_else(|| corrupt("missing shape"))? as usize;
        if kind != layer.kind.code()
            || rows != layer.weights.rows()
            || cols != layer.weights.cols()
            || kernel != layer.kernel_size
            || bias_len != layer.bias.len()
        {
            return Err(corrupt(&format!("block '{name}' has unexpected shape")));
        }
        for _ in 0..rows * cols + bias_len {
            flat.push(r.f64().ok_or_else(|| corrupt("missing parameter data"))?);
        }
    }
    params.set_from_flat(&flat).map_err(TrainError::Num)?;

    let learning_rate = r.f64().ok_or_else(|| corrupt("missing optimizer"))?;
    let beta1 = r.f64().ok_or_else(|| corrupt("missing optimizer"))?;
    let beta2 = r.f64().ok_or_else(|| corrupt("missing optimizer"))?;
    let epsilon = r.f64().ok_or_else(|| corrupt("missing optimizer"))?;
    let step_count = r.u64().ok_or_else(|| corrupt("missing optimizer"))?;
    let moment_len = r.u64().ok_or_else(|| corrupt("missing optimizer"))? as usize;
    if moment_len != params.param_count() {
        return Err(corrupt("optimizer state size mismatch"));
    }
    let mut first_moment = Vec::with_capacity(moment_len);
    let mut second_moment = Vec::with_capacity(moment_len);
    for _ in 0..moment_len {
        first_moment.push(r.f64().ok_or_else(|| corrupt("missing moments"))?);
    }
    for _ in 0..moment_len {
        second_moment.push(r.f64().ok_or_else(|| corrupt("missing moments"))?);
    }
    let optimizer = OptimizerState {
        first_moment,
        second_moment,
        step_count,
        learning_rate,
        beta1,
        beta2,
        epsilon,
    };

    let history_len = r.u64().ok_or_else(|| corrupt("missing history"))? as usize;
    let mut history = Vec::with_capacity(history_len);
    for _ in 0..history_len {
        let l_cls_fb = r.f64().ok_or_else(|| corrupt("missing history row"))?;
        let l_cls_ac = r.f64().ok_or_else(|| corrupt("missing history row"))?;
        let l_g = r.f64().ok_or_else(|| corrupt("missing history row"))?;
        let l_mse = r.f64().ok_or_else(|| corrupt("missing history row"))?;
        let total = r.f64().ok_or_else(|| corrupt("missing history row"))?;
        history.push(LossBreakdown {
            l_cls_fb,
            l_cls_ac,
            l_g,
            l_mse,
            total,
        });
    }
    Ok(Checkpoint {
        params,
        optimizer,
        epoch,
        config_hash,
        history,
    })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return None;
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(slice)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}
