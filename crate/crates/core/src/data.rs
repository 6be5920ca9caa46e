//! Dataset synthesis and I/O: a generator that plants action, context and
//! background structure with known ground truth, a binary feature-file
//! format, and the JSON annotation manifest.
//!
//! Feature files (`<video_id>.rgb.f32` / `<video_id>.flow.f32`) hold a
//! 16-byte header (8-byte magic, u32 version, u32 reserved, little-endian)
//! followed by `T x D` snippet-major little-endian `f32` values. The
//! manifest (`manifest.json`) lists every video with its dimensions, label
//! classes, ground-truth segments, optional per-snippet roles and feature
//! file names relative to the manifest directory.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::evaluation::GroundTruthSegment;
use crate::model::{StreamFeatures, VideoLabel};
use crate::numcore::{derive_seed, SplitMix64, Tensor2D};

pub const FEATURE_MAGIC: [u8; 8] = *b"ACSLOCF\0";
pub const FEATURE_VERSION: u32 = 1;

/// Synthesis parameters. Context flanks are planted around each action
/// instance with class-discriminative appearance features but background
/// motion features, which is exactly the structure the guidance loss
/// assumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub train_videos: usize,
    pub test_videos: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub feature_dim: usize,
    pub action_scale: f64,
    pub context_scale: f64,
    pub noise_sigma: f64,
    pub flank_min: usize,
    pub flank_max: usize,
    pub background_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 4,
            train_videos: 200,
            test_videos: 100,
            t_min: 40,
            t_max: 120,
            feature_dim: 32,
            action_scale: 1.0,
            context_scale: 1.0,
            noise_sigma: 0.1,
            flank_min: 2,
            flank_max: 6,
            background_fraction: 0.7,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.feature_dim < 2 {
            return Err(DataError::InfeasibleSpec {
                detail: format!("feature_dim must be >= 2, got {}", self.feature_dim),
            });
        }
        if self.t_min < 8 || self.t_min > self.t_max {
            return Err(DataError::InfeasibleSpec {
                detail: format!("need 8 <= t_min <= t_max, got [{}, {}]", self.t_min, self.t_max),
            });
        }
        if self.noise_sigma <= 0.0 {
            return Err(DataError::InfeasibleSpec {
                detail: "noise_sigma must be positive".into(),
            });
        }
        if self.num_classes == 0 {
            return Err(DataError::InfeasibleSpec {
                detail: "num_classes must be >= 1".into(),
            });
        }
        if self.flank_min > self.flank_max || self.flank_min == 0 {
            return Err(DataError::InfeasibleSpec {
                detail: "need 1 <= flank_min <= flank_max".into(),
            });
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(DataError::InfeasibleSpec {
                detail: "background_fraction must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }
}

/// One video record in the manifest. Snippet spans are 0-based half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub split: String,
    pub num_snippets: usize,
    pub feature_dim: usize,
    pub label_classes: Vec<usize>,
    pub segments: Vec<SegmentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<Vec<String>>,
    pub rgb_file: String,
    pub flow_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub class: usize,
    pub t_start: usize,
    pub t_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub videos: Vec<VideoRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: &str) -> Vec<&VideoRecord> {
        self.videos.iter().filter(|v| v.split == split).collect()
    }

    pub fn ground_truth(&self, split: &str) -> Vec<GroundTruthSegment> {
        self.split(split)
            .iter()
            .flat_map(|v| {
                v.segments.iter().map(|s| GroundTruthSegment {
                    video_id: v.video_id.clone(),
                    class: s.class,
                    t_start: s.t_start,
                    t_end: s.t_end,
                })
            })
            .collect()
    }
}

impl VideoRecord {
    pub fn label(&self, num_classes: usize) -> Result<VideoLabel, DataError> {
        VideoLabel::new(num_classes, &self.label_classes).map_err(|e| DataError::Validation {
            video_id: self.video_id.clone(),
            detail: e.to_string(),
        })
    }
}

/// Writes one `D x T` matrix as a snippet-major feature file.
pub fn write_features(path: &Path, matrix: &Tensor2D) -> Result<(), DataError> {
    if !matrix.is_finite() {
        return Err(DataError::NonFinite {
            path: path.display().to_string(),
        });
    }
    let file =
        std::fs::File::create(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| DataError::io(path.display().to_string(), e);
    w.write_all(&FEATURE_MAGIC).map_err(io_err)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&0u32.to_le_bytes()).map_err(io_err)?;
    for t in 0..matrix.cols() {
        for d in 0..matrix.rows() {
            w.write_all(&(matrix.get(d, t) as f32).to_le_bytes())
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reads a feature file back as a `D x T` matrix, validating the header and
/// the byte count implied by the manifest dimensions.
pub fn read_features(path: &Path, num_snippets: usize, feature_dim: usize) -> Result<Tensor2D, DataError> {
    let mut file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DataError::MissingFile {
                path: path.display().to_string(),
            })
        }
        Err(e) => return Err(DataError::io(path.display().to_string(), e)),
    };
    let expected = 16u64 + 4 * num_snippets as u64 * feature_dim as u64;
    let actual = file
        .metadata()
        .map_err(|e| DataError::io(path.display().to_string(), e))?
        .len();
    let mut header = [0u8; 16];
    if actual < 16 {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected,
            actual,
        });
    }
    file.read_exact(&mut header)
        .map_err(|e| DataError::io(path.display().to_string(), e))?;
    if header[..8] != FEATURE_MAGIC {
        let mut found = [0u8; 8];
        found.copy_from_slice(&header[..8]);
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: FEATURE_MAGIC,
            found,
        });
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(DataError::BadVersion {
            path: path.display().to_string(),
            version,
        });
    }
    if actual < expected {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(DataError::DimensionMismatch {
            path: path.display().to_string(),
            detail: format!("expected {expected} bytes for {num_snippets}x{feature_dim}, found {actual}"),
        });
    }
    let mut raw = vec![0u8; (expected - 16) as usize];
    file.read_exact(&mut raw)
        .map_err(|e| DataError::io(path.display().to_string(), e))?;
    let mut matrix = Tensor2D::zeros(feature_dim, num_snippets);
    for t in 0..num_snippets {
        for d in 0..feature_dim {
            let off = 4 * (t * feature_dim + d);
            let v = f32::from_le_bytes(raw[off..off + 4].try_into().unwrap());
            matrix.set(d, t, v as f64);
        }
    }
    Ok(matrix)
}

/// Loads both streams of one video relative to the manifest directory.
pub fn load_features(dir: &Path, record: &VideoRecord) -> Result<StreamFeatures, DataError> {
    let rgb = read_features(&dir.join(&record.rgb_file), record.num_snippets, record.feature_dim)?;
    let flow = read_features(
        &dir.join(&record.flow_file),
        record.num_snippets,
        record.feature_dim,
    )?;
    StreamFeatures::new(rgb, flow).map_err(|e| DataError::Validation {
        video_id: record.video_id.clone(),
        detail: e.to_string(),
    })
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), DataError> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| DataError::io(path.display().to_string(), e.into()))?;
    std::fs::write(path, json + "\n").map_err(|e| DataError::io(path.display().to_string(), e))
}

/// Parses and fully validates a manifest: schema, label/segment consistency
/// and existence plus shape of every referenced feature file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DataError::MissingFile {
                path: path.display().to_string(),
            })
        }
        Err(e) => return Err(DataError::io(path.display().to_string(), e)),
    };
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DataError::Schema {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    for video in &manifest.videos {
        validate_video(video, manifest.num_classes)?;
        for file in [&video.rgb_file, &video.flow_file] {
            let fpath = dir.join(file);
            if !fpath.exists() {
                return Err(DataError::MissingFile {
                    path: fpath.display().to_string(),
                });
            }
            // header + shape check without materializing the matrix
            read_features(&fpath, video.num_snippets, video.feature_dim)?;
        }
    }
    Ok(manifest)
}

fn validate_video(video: &VideoRecord, num_classes: usize) -> Result<(), DataError> {
    let fail = |detail: String| {
        Err(DataError::Validation {
            video_id: video.video_id.clone(),
            detail,
        })
    };
    if video.num_snippets == 0 {
        return fail("num_snippets must be >= 1".into());
    }
    if video.label_classes.is_empty() {
        return fail("label has no action class".into());
    }
    for &c in &video.label_classes {
        if c == 0 || c > num_classes {
            return fail(format!("label class {c} out of range 1..={num_classes}"));
        }
    }
    let mut gt_classes: Vec<usize> = Vec::new();
    for seg in &video.segments {
        if seg.t_start >= seg.t_end || seg.t_end > video.num_snippets {
            return fail(format!(
                "segment [{}, {}) outside video of {} snippets",
                seg.t_start, seg.t_end, video.num_snippets
            ));
        }
        if seg.class == 0 || seg.class > num_classes {
            return fail(format!("segment class {} out of range", seg.class));
        }
        gt_classes.push(seg.class);
    }
    gt_classes.sort_unstable();
    gt_classes.dedup();
    let mut label_sorted = video.label_classes.clone();
    label_sorted.sort_unstable();
    label_sorted.dedup();
    if gt_classes != label_sorted {
        return fail(format!(
            "label classes {label_sorted:?} inconsistent with segment classes {gt_classes:?}"
        ));
    }
    if let Some(roles) = &video.roles {
        if roles.len() != video.num_snippets {
            return fail("roles length differs from num_snippets".into());
        }
    }
    Ok(())
}

/// Aggregate statistics of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub videos: usize,
    pub snippets: usize,
    pub background_fraction: f64,
    pub instances_per_video: f64,
}

/// Per-snippet ground-truth role used by the generator and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Background,
    Action(usize),
    Context(usize),
}

impl Role {
    fn tag(&self) -> String {
        match self {
            Role::Background => "background".to_string(),
            Role::Action(c) => format!("action:{c}"),
            Role::Context(c) => format!("context:{c}"),
        }
    }
}

struct Prototypes {
    action_rgb: Vec<Vec<f64>>,
    action_flow: Vec<Vec<f64>>,
    context_rgb: Vec<Vec<f64>>,
    background_rgb: Vec<f64>,
    background_flow: Vec<f64>,
}

fn unit_vector(rng: &mut SplitMix64, dim: usize, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x *= scale / norm;
    }
    v
}

fn build_prototypes(spec: &SynthSpec) -> Prototypes {
    let mut rng = SplitMix64::new(derive_seed(spec.seed, 0x9707));
    let d = spec.feature_dim;
    let mut action_rgb = Vec::new();
    let mut action_flow = Vec::new();
    let mut context_rgb = Vec::new();
    for _ in 0..spec.num_classes {
        action_rgb.push(unit_vector(&mut rng, d, spec.action_scale));
        action_flow.push(unit_vector(&mut rng, d, spec.action_scale));
        context_rgb.push(unit_vector(&mut rng, d, spec.context_scale));
    }
    Prototypes {
        action_rgb,
        action_flow,
        context_rgb,
        background_rgb: unit_vector(&mut rng, d, 1.0),
        background_flow: unit_vector(&mut rng, d, 1.0),
    }
}

const TRAIN_TAG: u64 = 0x1000_0000;
const TEST_TAG: u64 = 0x2000_0000;

/// Plans one video: per-snippet roles plus its ground-truth segments.
fn plan_video(spec: &SynthSpec, rng: &mut SplitMix64) -> Result<(Vec<Role>, Vec<SegmentRecord>), DataError> {
    let t_len = rng.uniform_usize(spec.t_min, spec.t_max);
    let fg_budget = ((1.0 - spec.background_fraction) * t_len as f64).round() as usize;
    let mut instances = rng.uniform_usize(1, 3);
    let feasible = |flanks: &[(usize, usize)], k: usize| {
        let flank_total: usize = flanks.iter().map(|&(a, b)| a + b).sum();
        fg_budget >= flank_total + 2 * k && t_len >= fg_budget + k.saturating_sub(1)
    };
    // shrink the instance count (retrying flank draws) until everything fits
    let plan = 'search: loop {
        for _ in 0..3 {
            let flanks: Vec<(usize, usize)> = (0..instances)
                .map(|_| {
                    (
                        rng.uniform_usize(spec.flank_min, spec.flank_max),
                        rng.uniform_usize(spec.flank_min, spec.flank_max),
                    )
                })
                .collect();
            if feasible(&flanks, instances) {
                break 'search Some(flanks);
            }
        }
        if instances == 1 {
            // last resort: minimal flanks around a single instance
            let flanks = vec![(spec.flank_min, spec.flank_min)];
            break if feasible(&flanks, 1) { Some(flanks) } else { None };
        }
        instances -= 1;
    };
    let Some(flanks) = plan else {
        return Err(DataError::InfeasibleSpec {
            detail: format!(
                "cannot fit one instance with flanks in T={t_len} at background fraction {}",
                spec.background_fraction
            ),
        });
    };

    // one or two distinct classes, each guaranteed an instance
    let two_classes = spec.num_classes >= 2 && instances >= 2 && rng.next_f64() < 0.3;
    let first = rng.uniform_usize(1, spec.num_classes);
    let classes = if two_classes {
        let mut second = rng.uniform_usize(1, spec.num_classes - 1);
        if second >= first {
            second += 1;
        }
        vec![first, second]
    } else {
        vec![first]
    };

    // split the remaining foreground budget into action lengths (>= 2 each)
    let instances = flanks.len();
    let flank_total: usize = flanks.iter().map(|&(a, b)| a + b).sum();
    let action_total = fg_budget - flank_total;
    let extra = action_total - 2 * instances;
    let weights: Vec<f64> = (0..instances).map(|_| rng.uniform(0.2, 1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut action_lens: Vec<usize> = weights
        .iter()
        .map(|w| 2 + (extra as f64 * w / wsum).floor() as usize)
        .collect();
    let assigned: usize = action_lens.iter().sum();
    action_lens[0] += action_total - assigned;

    // place instance blocks with at least one background snippet between them
    let occupied: usize = action_lens
        .iter()
        .zip(&flanks)
        .map(|(a, &(pre, post))| pre + a + post)
        .collect::<Vec<usize>>()
        .iter()
        .sum();
    let internal_gaps = instances.saturating_sub(1);
    let free = t_len - occupied - internal_gaps;
    let gap_weights: Vec<f64> = (0..=instances).map(|_| rng.uniform(0.0, 1.0)).collect();
    let gsum: f64 = gap_weights.iter().sum::<f64>().max(1e-12);
    let mut gaps: Vec<usize> = gap_weights
        .iter()
        .map(|w| (free as f64 * w / gsum).floor() as usize)
        .collect();
    let gap_assigned: usize = gaps.iter().sum();
    gaps[0] += free - gap_assigned;

    let mut roles = vec![Role::Background; t_len];
    let mut segments = Vec::new();
    let mut cursor = 0usize;
    for i in 0..instances {
        cursor += gaps[i];
        if i > 0 {
            cursor += 1; // mandatory background separator
        }
        let class = classes[i % classes.len()];
        let (pre, post) = flanks[i];
        for role in roles.iter_mut().skip(cursor).take(pre) {
            *role = Role::Context(class);
        }
        cursor += pre;
        let a_start = cursor;
        for role in roles.iter_mut().skip(cursor).take(action_lens[i]) {
            *role = Role::Action(class);
        }
        cursor += action_lens[i];
        segments.push(SegmentRecord {
            class,
            t_start: a_start,
            t_end: cursor,
        });
        for role in roles.iter_mut().skip(cursor).take(post) {
            *role = Role::Context(class);
        }
        cursor += post;
    }
    Ok((roles, segments))
}

fn synth_video(
    spec: &SynthSpec,
    protos: &Prototypes,
    split: &str,
    index: usize,
    dir: &Path,
) -> Result<(VideoRecord, usize, usize), DataError> {
    let tag = if split == "train" { TRAIN_TAG } else { TEST_TAG };
    let mut rng = SplitMix64::new(derive_seed(spec.seed, tag + index as u64));
    let (roles, segments) = plan_video(spec, &mut rng)?;
    let t_len = roles.len();
    let d = spec.feature_dim;

    let mut rgb = Tensor2D::zeros(d, t_len);
    let mut flow = Tensor2D::zeros(d, t_len);
    for (t, role) in roles.iter().enumerate() {
        let (rgb_proto, flow_proto): (&[f64], &[f64]) = match role {
            Role::Background => (&protos.background_rgb, &protos.background_flow),
            Role::Action(c) => (&protos.action_rgb[c - 1], &protos.action_flow[c - 1]),
            // context looks class-specific but moves like background
            Role::Context(c) => (&protos.context_rgb[c - 1], &protos.background_flow),
        };
        for di in 0..d {
            rgb.set(di, t, rgb_proto[di] + spec.noise_sigma * rng.next_gaussian());
            flow.set(di, t, flow_proto[di] + spec.noise_sigma * rng.next_gaussian());
        }
    }

    let video_id = format!("{split}_{index:04}");
    let rgb_file = format!("{video_id}.rgb.f32");
    let flow_file = format!("{video_id}.flow.f32");
    write_features(&dir.join(&rgb_file), &rgb)?;
    write_features(&dir.join(&flow_file), &flow)?;

    let mut label_classes: Vec<usize> = segments.iter().map(|s| s.class).collect();
    label_classes.sort_unstable();
    label_classes.dedup();
    let background = roles.iter().filter(|r| matches!(r, Role::Background)).count();
    let record = VideoRecord {
        video_id,
        split: split.to_string(),
        num_snippets: t_len,
        feature_dim: d,
        label_classes,
        roles: Some(roles.iter().map(Role::tag).collect()),
        segments,
        rgb_file,
        flow_file,
    };
    Ok((record, background, t_len))
}

/// Generates the synthetic dataset into `dir` (created if needed) and writes
/// `manifest.json`. Deterministic per spec; per-video work runs in parallel
/// on derived seeds.
pub fn generate_synthetic(spec: &SynthSpec, dir: &Path) -> Result<(DatasetManifest, SynthStats), DataError> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir.display().to_string(), e))?;
    let protos = build_prototypes(spec);
    let jobs: Vec<(&str, usize)> = (0..spec.train_videos)
        .map(|i| ("train", i))
        .chain((0..spec.test_videos).map(|i| ("test", i)))
        .collect();
    let results: Result<Vec<_>, DataError> = jobs
        .par_iter()
        .map(|&(split, index)| synth_video(spec, &protos, split, index, dir))
        .collect();
    let results = results?;
    let mut videos = Vec::with_capacity(results.len());
    let mut background = 0usize;
    let mut snippets = 0usize;
    let mut instances = 0usize;
    for (record, bg, t_len) in results {
        background += bg;
        snippets += t_len;
        instances += record.segments.len();
        videos.push(record);
    }
    let manifest = DatasetManifest {
        num_classes: spec.num_classes,
        videos,
    };
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    let stats = SynthStats {
        videos: manifest.videos.len(),
        snippets,
        background_fraction: background as f64 / snippets as f64,
        instances_per_video: instances as f64 / manifest.videos.len() as f64,
    };
    Ok((manifest, stats))
}
