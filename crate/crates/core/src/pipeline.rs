//! End-to-end pipeline stages over a run directory with fixed file names:
//! `manifest.json` plus feature files, `checkpoint.bin`, `losses.csv`,
//! `dump/`, `detections.jsonl`, `eval_report.json`/`.csv` and
//! `config_resolved.toml`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::data::{self, DatasetManifest, SynthStats};
use crate::error::{DataError, NumError, TrainError};
use crate::evaluation::{self, EvalReport, VideoOutputs};
use crate::localization::{self, Detection};
use crate::model::{ACOutputs, FBOutputs};
use crate::training::{self, Checkpoint};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Num(#[from] NumError),
}

impl PipelineError {
    /// Stable CLI exit code: 2 for configuration problems, 3 for I/O, 1 for
    /// any other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(e) => match e {
                DataError::InfeasibleSpec { .. } => 2,
                _ => 3,
            },
            PipelineError::Train(e) => match e {
                TrainError::Config(_) => 2,
                TrainError::Io { .. } => 3,
                TrainError::Data(d) => match d {
                    DataError::InfeasibleSpec { .. } => 2,
                    _ => 3,
                },
                _ => 1,
            },
            PipelineError::Num(_) => 1,
        }
    }
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}

pub fn checkpoint_path(out_dir: &Path) -> PathBuf {
    out_dir.join("checkpoint.bin")
}

pub fn dump_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("dump")
}

pub fn detections_path(out_dir: &Path) -> PathBuf {
    out_dir.join("detections.jsonl")
}

/// Generates the synthetic dataset into the run directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthStats, PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| DataError::io(cfg.out_dir.display().to_string(), e))?;
    cfg.write_resolved(&cfg.out_dir)?;
    let (_, stats) = data::generate_synthetic(&cfg.synth, &cfg.out_dir)?;
    Ok(stats)
}

fn load_manifest_required(out_dir: &Path) -> Result<DatasetManifest, PipelineError> {
    Ok(data::load_manifest(&manifest_path(out_dir))?)
}

/// Trains on the `train` split; writes `checkpoint.bin` and `losses.csv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<Checkpoint, PipelineError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| DataError::io(cfg.out_dir.display().to_string(), e))?;
    cfg.write_resolved(&cfg.out_dir)?;
    let manifest = load_manifest_required(&cfg.out_dir)?;
    let dataset = training::load_split(&manifest, &cfg.out_dir, "train")?;
    let checkpoint = training::train(&dataset, &cfg.train, Some(&cfg.out_dir))?;
    training::write_loss_history(&cfg.out_dir.join("losses.csv"), &checkpoint.history)?;
    Ok(checkpoint)
}

/// One inference dump entry (a single JSON file per video under `dump/`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDump {
    pub video_id: String,
    pub fb: FBOutputs,
    pub ac: ACOutputs,
}

/// Forward pass over the `test` split from `checkpoint.bin` into `dump/`.
pub fn cmd_infer(cfg: &RunConfig) -> Result<usize, PipelineError> {
    let manifest = load_manifest_required(&cfg.out_dir)?;
    let checkpoint = training::load_checkpoint(&checkpoint_path(&cfg.out_dir))?;
    let dataset = training::load_split(&manifest, &cfg.out_dir, "test")?;
    let outputs = training::infer(&dataset, &checkpoint.params)?;
    let dir = dump_dir(&cfg.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| DataError::io(dir.display().to_string(), e))?;
    for (video_id, fb, ac) in &outputs {
        let dump = VideoDump {
            video_id: video_id.clone(),
            fb: fb.clone(),
            ac: ac.clone(),
        };
        let path = dir.join(format!("{video_id}.json"));
        let json = serde_json::to_string(&dump)
            .map_err(|e| DataError::io(path.display().to_string(), e.into()))?;
        std::fs::write(&path, json).map_err(|e| DataError::io(path.display().to_string(), e))?;
    }
    Ok(outputs.len())
}

fn read_dump(out_dir: &Path, manifest: &DatasetManifest) -> Result<Vec<VideoDump>, PipelineError> {
    let dir = dump_dir(out_dir);
    let mut dumps = Vec::new();
    for record in manifest.split("test") {
        let path = dir.join(format!("{}.json", record.video_id));
        if !path.exists() {
            return Err(DataError::MissingFile {
                path: path.display().to_string(),
            }
            .into());
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| DataError::io(path.display().to_string(), e))?;
        let dump: VideoDump = serde_json::from_str(&text).map_err(|e| DataError::Schema {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        dumps.push(dump);
    }
    Ok(dumps)
}

/// Localizes every test video from the dump; writes `detections.jsonl`.
pub fn cmd_localize(cfg: &RunConfig) -> Result<Vec<Detection>, PipelineError> {
    let manifest = load_manifest_required(&cfg.out_dir)?;
    let variant = cfg.localize.variant_config()?;
    let dumps = read_dump(&cfg.out_dir, &manifest)?;
    let mut all = Vec::new();
    for dump in &dumps {
        let dets = localization::generate_detections(&dump.video_id, &dump.fb, &dump.ac, &variant)?;
        all.extend(dets);
    }
    localization::write_detections_jsonl(&detections_path(&cfg.out_dir), &all)?;
    Ok(all)
}

/// Evaluates `detections.jsonl` against the test annotations and attaches
/// the snippet-set diagnostics; writes `eval_report.json` and
/// `eval_report.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    let manifest = load_manifest_required(&cfg.out_dir)?;
    let dets = localization::read_detections_jsonl(&detections_path(&cfg.out_dir))?;
    let gts = manifest.ground_truth("test");
    let grid = cfg.eval.grid.thresholds();
    let mut report = evaluation::map_report(&dets, &gts, &grid, manifest.num_classes);
    let dumps = read_dump(&cfg.out_dir, &manifest)?;
    let views: Vec<VideoOutputs<'_>> = dumps
        .iter()
        .map(|d| VideoOutputs {
            video_id: &d.video_id,
            fb: &d.fb,
            ac: &d.ac,
        })
        .collect();
    report.diagnostics =
        evaluation::snippet_set_diagnostics(&views, &gts, &grid, manifest.num_classes);
    evaluation::write_report_json(&cfg.out_dir.join("eval_report.json"), &report)?;
    evaluation::write_report_csv(&cfg.out_dir.join("eval_report.csv"), &report)?;
    Ok(report)
}
