//! Metrics: temporal IoU, per-class average precision, mAP over threshold
//! grids, and the snippet-set diagnostics (foreground/background and
//! action/context splits with top-1 accuracy and ground-truth proportion).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::localization::{self, Detection, VariantConfig};
use crate::model::{action_attention_midpoint, ACOutputs, FBOutputs};
use crate::numcore::{softmax, Tensor2D};

/// One annotated action span (snippet indices, end-exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSegment {
    pub video_id: String,
    pub class: usize,
    pub t_start: usize,
    pub t_end: usize,
}

/// Temporal intersection over union of two half-open spans.
pub fn tiou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter_lo = a.0.max(b.0);
    let inter_hi = a.1.min(b.1);
    if inter_hi <= inter_lo {
        return 0.0;
    }
    let inter = (inter_hi - inter_lo) as f64;
    let union = (a.1.max(b.1) - a.0.min(b.0)) as f64;
    inter / union
}

/// Average precision for one class at one tIoU threshold.
///
/// Detections are ranked by score (deterministic tie-breaking by video id,
/// start, end), each greedily matched to the not-yet-matched ground-truth
/// span of the same video with the highest tIoU at or above the threshold.
/// The TP/FP sequence is integrated with all-points interpolation (precision
/// envelope over recall steps). Returns `None` when the class has no ground
/// truth.
pub fn average_precision(
    dets: &[Detection],
    gts: &[GroundTruthSegment],
    threshold: f64,
) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    if dets.is_empty() {
        return Some(0.0);
    }
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.video_id.cmp(&b.video_id))
            .then(a.t_start.cmp(&b.t_start))
            .then(a.t_end.cmp(&b.t_end))
    });
    let mut matched = vec![false; gts.len()];
    let mut tp = vec![0.0f64; order.len()];
    let mut fp = vec![0.0f64; order.len()];
    for (rank, det) in order.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if matched[gi] || gt.video_id != det.video_id {
                continue;
            }
            let overlap = tiou((det.t_start, det.t_end), (gt.t_start, gt.t_end));
            if overlap >= threshold && best.map_or(true, |(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[gi] = true;
                tp[rank] = 1.0;
            }
            None => fp[rank] = 1.0,
        }
    }
    let mut cum_tp = 0.0;
    let mut cum_fp = 0.0;
    let num_gt = gts.len() as f64;
    let mut precision = Vec::with_capacity(order.len());
    let mut recall = Vec::with_capacity(order.len());
    for i in 0..order.len() {
        cum_tp += tp[i];
        cum_fp += fp[i];
        precision.push(cum_tp / (cum_tp + cum_fp));
        recall.push(cum_tp / num_gt);
    }
    // precision envelope, then sum over recall increments
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..precision.len() {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    Some(ap)
}

/// The THUMOS-style grid `[0.3, 0.4, 0.5, 0.6, 0.7]`.
pub fn thumos_grid() -> Vec<f64> {
    (3..=7).map(|i| i as f64 / 10.0).collect()
}

/// The ActivityNet-style grid `[0.5, 0.55, ..., 0.95]`.
pub fn anet_grid() -> Vec<f64> {
    (10..=19).map(|i| i as f64 / 20.0).collect()
}

/// Per-class AP values over the threshold grid; `None` marks classes
/// without ground truth (excluded from the mAP mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassApRow {
    pub class: usize,
    pub ap: Vec<Option<f64>>,
}

/// Localization and classification diagnostics of one snippet set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDiagnostics {
    pub set: String,
    pub snippets: usize,
    /// Top-1 accuracy; absent when the set is empty.
    pub a1: Option<f64>,
    /// Ground-truth action proportion; absent when undefined.
    pub rz: Option<f64>,
    /// Average mAP of proposals formed from the set's consecutive runs.
    pub avg_map: f64,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub map_per_threshold: Vec<f64>,
    pub average_map: f64,
    pub per_class_ap: Vec<ClassApRow>,
    pub diagnostics: Vec<SetDiagnostics>,
}

/// mAP table over a threshold grid: per threshold, the mean AP over classes
/// that have ground truth.
pub fn map_report(
    dets: &[Detection],
    gts: &[GroundTruthSegment],
    grid: &[f64],
    num_classes: usize,
) -> EvalReport {
    let mut per_class_ap = Vec::with_capacity(num_classes);
    for class in 1..=num_classes {
        let class_dets: Vec<Detection> =
            dets.iter().filter(|d| d.class == class).cloned().collect();
        let class_gts: Vec<GroundTruthSegment> =
            gts.iter().filter(|g| g.class == class).cloned().collect();
        let ap = grid
            .iter()
            .map(|&thr| average_precision(&class_dets, &class_gts, thr))
            .collect();
        per_class_ap.push(ClassApRow { class, ap });
    }
    let map_per_threshold: Vec<f64> = (0..grid.len())
        .map(|ti| {
            let values: Vec<f64> = per_class_ap
                .iter()
                .filter_map(|row| row.ap[ti])
                .collect();
            if values.is_empty() {
                0.0
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            }
        })
        .collect();
    let average_map = if map_per_threshold.is_empty() {
        0.0
    } else {
        map_per_threshold.iter().sum::<f64>() / map_per_threshold.len() as f64
    };
    EvalReport {
        thresholds: grid.to_vec(),
        map_per_threshold,
        average_map,
        per_class_ap,
        diagnostics: Vec::new(),
    }
}

/// The five snippet sets of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnippetSets {
    pub fg: Vec<usize>,
    pub bg: Vec<usize>,
    pub action: Vec<usize>,
    pub context: Vec<usize>,
    pub gt: Vec<usize>,
}

/// Splits snippets by the fused attentions: foreground above 0.5 on the
/// snippet attention, then action/context within foreground by the action
/// attention's decision point; `gt` collects every annotated snippet.
pub fn collect_snippet_sets(
    sap: &[f64],
    att_a: &[f64],
    gt_spans: &[(usize, usize, usize)],
) -> SnippetSets {
    let t_len = sap.len();
    let mid = action_attention_midpoint();
    let mut sets = SnippetSets {
        fg: Vec::new(),
        bg: Vec::new(),
        action: Vec::new(),
        context: Vec::new(),
        gt: Vec::new(),
    };
    for t in 0..t_len {
        if sap[t] > 0.5 {
            sets.fg.push(t);
            if att_a[t] > mid {
                sets.action.push(t);
            } else {
                sets.context.push(t);
            }
        } else {
            sets.bg.push(t);
        }
    }
    let mut in_gt = vec![false; t_len];
    for &(_, s, e) in gt_spans {
        for flag in in_gt.iter_mut().take(e.min(t_len)).skip(s) {
            *flag = true;
        }
    }
    sets.gt = (0..t_len).filter(|&t| in_gt[t]).collect();
    sets
}

/// Fraction of the set's snippets whose best action class (background row
/// excluded) is present in the video's ground truth. `None` for an empty
/// set.
pub fn top1_accuracy(set: &[usize], scp: &Tensor2D, gt_classes: &[usize]) -> Option<f64> {
    if set.is_empty() {
        return None;
    }
    let n = scp.rows() - 1;
    let mut hits = 0usize;
    for &t in set {
        let mut best_class = 1;
        let mut best = f64::NEG_INFINITY;
        for class in 1..=n {
            let v = scp.get(class, t);
            if v > best {
                best = v;
                best_class = class;
            }
        }
        if gt_classes.contains(&best_class) {
            hits += 1;
        }
    }
    Some(hits as f64 / set.len() as f64)
}

/// Probability mass the per-snippet class distribution (softmax over the
/// action rows, background excluded) puts on the ground-truth classes,
/// summed over the set and normalized by the total mass. `None` for an
/// empty set.
pub fn gt_action_proportion(set: &[usize], scp: &Tensor2D, gt_classes: &[usize]) -> Option<f64> {
    let (num, den) = gt_proportion_sums(set, scp, gt_classes);
    if den <= 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Numerator and denominator of the ground-truth proportion, so per-video
/// contributions can be aggregated over a split.
pub fn gt_proportion_sums(
    set: &[usize],
    scp: &Tensor2D,
    gt_classes: &[usize],
) -> (f64, f64) {
    let n = scp.rows() - 1;
    let mut num = 0.0;
    let mut den = 0.0;
    for &t in set {
        let logits: Vec<f64> = (1..=n).map(|c| scp.get(c, t)).collect();
        let probs = softmax(&logits);
        for (ci, &p) in probs.iter().enumerate() {
            den += p;
            if gt_classes.contains(&(ci + 1)) {
                num += p;
            }
        }
    }
    (num, den)
}

/// Per-video model outputs needed for the snippet-set diagnostics.
pub struct VideoOutputs<'a> {
    pub video_id: &'a str,
    pub fb: &'a FBOutputs,
    pub ac: &'a ACOutputs,
}

/// Table-style diagnostics over a split: for each snippet set, micro-averaged
/// top-1 accuracy, ground-truth proportion, and the average mAP of proposals
/// formed from the set's consecutive snippet runs (scored on the raw class
/// sequence, offset unused).
pub fn snippet_set_diagnostics(
    videos: &[VideoOutputs<'_>],
    gts: &[GroundTruthSegment],
    grid: &[f64],
    num_classes: usize,
) -> Vec<SetDiagnostics> {
    let mut gt_by_video: HashMap<&str, Vec<(usize, usize, usize)>> = HashMap::new();
    for gt in gts {
        gt_by_video
            .entry(gt.video_id.as_str())
            .or_default()
            .push((gt.class, gt.t_start, gt.t_end));
    }
    let set_names = ["gt", "fg", "action", "context", "bg"];
    let mut per_set_dets: Vec<Vec<Detection>> = vec![Vec::new(); set_names.len()];
    let mut counts = [0usize; 5];
    let mut hits = [0usize; 5];
    let mut rz_num = [0.0f64; 5];
    let mut rz_den = [0.0f64; 5];

    let nms_cfg = VariantConfig {
        use_p1: true,
        use_p2: false,
        use_p3: false,
        scoring: localization::Scoring::S1,
        nms_tiou: 0.5,
    };
    for v in videos {
        let spans = gt_by_video
            .get(v.video_id)
            .cloned()
            .unwrap_or_default();
        let gt_classes: Vec<usize> = {
            let mut c: Vec<usize> = spans.iter().map(|&(n, _, _)| n).collect();
            c.sort_unstable();
            c.dedup();
            c
        };
        let sets = collect_snippet_sets(&v.fb.sap, &v.ac.att_a, &spans);
        let t_len = v.fb.sap.len();
        let groups: [&Vec<usize>; 5] = [&sets.gt, &sets.fg, &sets.action, &sets.context, &sets.bg];
        let video_classes = localization::select_video_classes(&v.fb.p_fg);
        for (si, set) in groups.iter().enumerate() {
            counts[si] += set.len();
            if let Some(a1) = top1_accuracy(set, &v.fb.scp, &gt_classes) {
                hits[si] += (a1 * set.len() as f64).round() as usize;
            }
            let (num, den) = gt_proportion_sums(set, &v.fb.scp, &gt_classes);
            rz_num[si] += num;
            rz_den[si] += den;

            // consecutive members become proposals, scored like the baseline
            let mut mask = vec![0.0; t_len];
            for &t in set.iter() {
                mask[t] = 1.0;
            }
            let mut dets = Vec::new();
            for (start, end) in localization::threshold_proposals(&mask, 0.5) {
                for &class in &video_classes {
                    let seq = localization::corrected_sequence(
                        &v.fb.scp,
                        &v.ac.offset,
                        class,
                        false,
                    );
                    dets.push(Detection {
                        video_id: v.video_id.to_string(),
                        class,
                        t_start: start,
                        t_end: end,
                        score: localization::oic_score(start, end, &seq),
                    });
                }
            }
            let mut kept = Vec::new();
            for class in 1..=num_classes {
                let class_dets: Vec<Detection> =
                    dets.iter().filter(|d| d.class == class).cloned().collect();
                kept.extend(localization::nms(class_dets, nms_cfg.nms_tiou));
            }
            per_set_dets[si].extend(kept);
        }
    }
    set_names
        .iter()
        .enumerate()
        .map(|(si, name)| {
            let report = map_report(&per_set_dets[si], gts, grid, num_classes);
            SetDiagnostics {
                set: name.to_string(),
                snippets: counts[si],
                a1: (counts[si] > 0).then(|| hits[si] as f64 / counts[si] as f64),
                rz: (rz_den[si] > 0.0).then(|| rz_num[si] / rz_den[si]),
                avg_map: report.average_map,
            }
        })
        .collect()
}

/// Writes the report as pretty JSON.
pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<(), DataError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| DataError::io(path.display().to_string(), e.into()))?;
    std::fs::write(path, json + "\n").map_err(|e| DataError::io(path.display().to_string(), e))
}

/// Writes the per-class AP matrix as a flat CSV: one row per class and
/// threshold.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<(), DataError> {
    let file =
        std::fs::File::create(path).map_err(|e| DataError::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| DataError::io(path.display().to_string(), e);
    writeln!(w, "class,threshold,ap").map_err(io_err)?;
    for row in &report.per_class_ap {
        for (ti, ap) in row.ap.iter().enumerate() {
            let text = match ap {
                Some(v) => format!("{v}"),
                None => "NA".to_string(),
            };
            writeln!(w, "{},{},{}", row.class, report.thresholds[ti], text).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
