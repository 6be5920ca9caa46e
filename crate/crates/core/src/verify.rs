//! Built-in verification suite: finite-difference gradient checks for every
//! loss component, brute-force oracle comparisons for OIC scoring and
//! average precision, and sweeps of the algebraic identities and range
//! invariants. `run_all` backs the CLI `verify` command; the acceptance
//! suite drives the same checks.

use crate::evaluation::{self, GroundTruthSegment};
use crate::localization::{self, Detection};
use crate::losses::LossToggles;
use crate::model::{
    self,
    attention_scale, forward, forward_backward, ModelDims, ModelHyper, ModelParams,
    StreamFeatures, VideoLabel,
};
use crate::numcore::{grad_check, seeded_init, sigmoid, InitScheme, SplitMix64};

/// Outcome of one verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Dimensions used by the gradient checks: small enough that central
/// differences over every parameter stay fast.
const GRAD_T: usize = 8;
const GRAD_D: usize = 4;
const GRAD_N: usize = 3;
const GRAD_HIDDEN: usize = 6;
const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-4;
const GRAD_INSTANCES: usize = 10;

/// A random gradient-check instance: features, a label with one or two
/// classes, and freshly initialized parameters.
fn random_instance(seed: u64) -> (StreamFeatures, VideoLabel, ModelParams) {
    let mut rng = SplitMix64::new(seed);
    let rgb = seeded_init(GRAD_D, GRAD_T, rng.next_u64(), InitScheme::UniformFanIn);
    let flow = seeded_init(GRAD_D, GRAD_T, rng.next_u64(), InitScheme::UniformFanIn);
    let features = StreamFeatures::new(rgb, flow).expect("shapes match");
    let first = rng.uniform_usize(1, GRAD_N);
    let classes = if rng.next_f64() < 0.3 {
        let mut second = rng.uniform_usize(1, GRAD_N - 1);
        if second >= first {
            second += 1;
        }
        vec![first, second]
    } else {
        vec![first]
    };
    let label = VideoLabel::new(GRAD_N, &classes).expect("non-empty");
    let params = ModelParams::new(
        ModelDims {
            feature_dim: GRAD_D,
            num_classes: GRAD_N,
            hidden: GRAD_HIDDEN,
            kernel_size: 3,
        },
        ModelHyper::default(),
        rng.next_u64(),
    )
    .expect("odd kernel");
    (features, label, params)
}

/// Central differences are only meaningful away from the non-differentiable
/// decision boundaries: the foreground-set threshold, the guidance
/// thresholds and every ReLU kink must clear a margin wider than the probe
/// step.
fn instance_has_margin(
    features: &StreamFeatures,
    params: &ModelParams,
) -> Result<bool, crate::error::NumError> {
    let fwd = forward(features, params)?;
    let sap_margin = 1e-3;
    let att_margin = 2e-3;
    let relu_margin = 1e-3;
    if fwd.fb.sap.iter().any(|&v| (v - 0.5).abs() < sap_margin) {
        return Ok(false);
    }
    let th = attention_scale(params.hyper.theta_h);
    let tl = attention_scale(params.hyper.theta_l);
    for att in [&fwd.ac.att_a_rgb, &fwd.ac.att_a_flow] {
        if att
            .iter()
            .any(|&v| (v - th).abs() < att_margin || (v - tl).abs() < att_margin)
        {
            return Ok(false);
        }
    }
    for cache in [
        &fwd.caches.pos_rgb,
        &fwd.caches.neg_rgb,
        &fwd.caches.pos_flow,
        &fwd.caches.neg_flow,
    ] {
        if cache.h1.data().iter().any(|&v| v.abs() < relu_margin) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Worst per-block relative error of the analytic gradient of the toggled
/// total loss against central differences, over accepted random instances.
/// `fault` perturbs the analytic gradient of the named block, for negative
/// controls.
pub fn model_grad_check(
    toggles: LossToggles,
    base_seed: u64,
    fault: Option<&str>,
) -> Result<(f64, String), crate::error::NumError> {
    let mut worst = 0.0f64;
    let mut worst_block = String::new();
    let mut accepted = 0usize;
    let mut seed = base_seed;
    while accepted < GRAD_INSTANCES {
        let (features, label, params) = random_instance(seed);
        seed += 1;
        if !instance_has_margin(&features, &params)? {
            continue;
        }
        accepted += 1;
        let (_, grads, fwd) = forward_backward(&features, &label, &params, toggles)?;
        let mut analytic = grads.flatten();
        let point = params.flatten();
        // the smoothed-MSE target is detached, so the probes must hold it
        // fixed at its probe-point value
        let frozen_target = crate::losses::gaussian_smooth(&fwd.fb.sap);

        // block layout for attribution and fault injection
        let mut offsets = Vec::new();
        let mut cursor = 0usize;
        for (name, layer) in params.blocks() {
            let len = layer.param_count();
            offsets.push((name, cursor..cursor + len));
            cursor += len;
        }
        if let Some(bug) = fault {
            if let Some((_, range)) = offsets.iter().find(|(n, _)| *n == bug) {
                analytic[range.start] += 1.0;
            }
        }

        let loss_at = |flat: &[f64]| -> f64 {
            let mut p = params.clone();
            p.set_from_flat(flat).expect("same length");
            model::forward_backward_with_frozen_target(
                &features,
                &label,
                &p,
                toggles,
                Some(&frozen_target),
            )
            .map(|(b, _, _)| b.total)
            .unwrap_or(f64::NAN)
        };
        for (name, range) in &offsets {
            let sub_point = &point[range.clone()];
            let sub_analytic = &analytic[range.clone()];
            let f = |sub: &[f64]| {
                let mut flat = point.clone();
                flat[range.clone()].copy_from_slice(sub);
                loss_at(&flat)
            };
            let err = grad_check(f, sub_analytic, sub_point, GRAD_STEP)?;
            if err > worst {
                worst = err;
                worst_block = format!("{name} (seed {})", seed - 1);
            }
        }
    }
    Ok((worst, worst_block))
}

/// Gradient checks for every loss component plus the standalone weighted
/// logistic regression. `fault` feeds the negative-control fixture.
pub fn grad_correctness_checks(fault: Option<&str>) -> Vec<CheckResult> {
    let mut results = Vec::new();
    let components: [(&str, LossToggles); 5] = [
        (
            "grad fb cross-entropy",
            LossToggles {
                cls_fb: true,
                cls_ac: false,
                guidance: false,
                mse: false,
            },
        ),
        (
            "grad ac cross-entropy",
            LossToggles {
                cls_fb: false,
                cls_ac: true,
                guidance: false,
                mse: false,
            },
        ),
        (
            "grad guidance loss",
            LossToggles {
                cls_fb: false,
                cls_ac: false,
                guidance: true,
                mse: false,
            },
        ),
        (
            "grad smoothed mse",
            LossToggles {
                cls_fb: false,
                cls_ac: false,
                guidance: false,
                mse: true,
            },
        ),
        ("grad total loss", LossToggles::default()),
    ];
    for (i, (name, toggles)) in components.iter().enumerate() {
        match model_grad_check(*toggles, 10_000 + 1_000 * i as u64, fault) {
            Ok((err, block)) => {
                let passed = err < GRAD_TOL;
                let detail = if passed {
                    format!("max rel err {err:.2e}")
                } else {
                    format!("max rel err {err:.2e} at {block}")
                };
                results.push(CheckResult::new(*name, passed, detail));
            }
            Err(e) => results.push(CheckResult::new(*name, false, e.to_string())),
        }
    }
    results.push(logistic_grad_check());
    results
}

/// Direct gradient check of the weighted logistic regression w.r.t. its
/// probability inputs.
fn logistic_grad_check() -> CheckResult {
    let mut rng = SplitMix64::new(77_000);
    let mut worst = 0.0f64;
    for _ in 0..GRAD_INSTANCES {
        let len = rng.uniform_usize(2, 10);
        let p: Vec<f64> = (0..len).map(|_| rng.uniform(0.05, 0.95)).collect();
        let q: Vec<f64> = (0..len).map(|_| f64::from(rng.next_u64() % 2 == 0)).collect();
        let (_, grad) = match crate::losses::weighted_logistic_grad(&p, &q) {
            Ok(v) => v,
            Err(e) => return CheckResult::new("grad weighted logistic", false, e.to_string()),
        };
        let f = |x: &[f64]| crate::losses::weighted_logistic(x, &q).unwrap_or(f64::NAN);
        match grad_check(f, &grad, &p, GRAD_STEP) {
            Ok(err) => worst = worst.max(err),
            Err(e) => return CheckResult::new("grad weighted logistic", false, e.to_string()),
        }
    }
    CheckResult::new(
        "grad weighted logistic",
        worst < GRAD_TOL,
        format!("max rel err {worst:.2e}"),
    )
}

/// OIC scoring against an independent mean-based reference on 1000 random
/// pairs (exact equality), plus constant-shift invariance.
pub fn oic_oracle_check() -> CheckResult {
    let mut rng = SplitMix64::new(314_159);
    for i in 0..1000 {
        let t_len = rng.uniform_usize(2, 40);
        let v: Vec<f64> = (0..t_len).map(|_| rng.uniform(-1.0, 2.0)).collect();
        let start = rng.uniform_usize(0, t_len - 1);
        let end = rng.uniform_usize(start + 1, t_len);
        let got = localization::oic_score(start, end, &v);

        // reference: explicit mean over inner and outer windows
        let inner =
            v[start..end].iter().sum::<f64>() / (end - start) as f64;
        let tau = (((end - start) as f64 / 4.0).round() as usize).max(1);
        let mut outer: Vec<f64> = Vec::new();
        outer.extend_from_slice(&v[start.saturating_sub(tau)..start]);
        outer.extend_from_slice(&v[end..(end + tau).min(t_len)]);
        let expected = if outer.is_empty() {
            inner
        } else {
            inner - outer.iter().sum::<f64>() / outer.len() as f64
        };
        if got != expected {
            return CheckResult::new(
                "oic oracle",
                false,
                format!("pair {i}: {got} != reference {expected}"),
            );
        }
        let c = rng.uniform(-1.0, 1.0);
        let shifted: Vec<f64> = v.iter().map(|&x| x + c).collect();
        let got_shifted = localization::oic_score(start, end, &shifted);
        let has_outer = start > 0 || end < t_len;
        let reference_shift = if has_outer { got } else { got + c };
        if (got_shifted - reference_shift).abs() > 1e-9 {
            return CheckResult::new(
                "oic oracle",
                false,
                format!("pair {i}: shift invariance broken by {}", got_shifted - reference_shift),
            );
        }
    }
    CheckResult::new("oic oracle", true, "1000 pairs exact, shift-invariant")
}

/// Average precision against a brute-force matcher on 1000 random small
/// instances, plus mAP monotonicity over thresholds.
pub fn ap_oracle_check() -> CheckResult {
    let mut rng = SplitMix64::new(271_828);
    let videos = ["a", "b"];
    for i in 0..1000 {
        let n_det = rng.uniform_usize(0, 6);
        let n_gt = rng.uniform_usize(0, 4);
        let dets: Vec<Detection> = (0..n_det)
            .map(|_| {
                let s = rng.uniform_usize(0, 12);
                let e = rng.uniform_usize(s + 1, 16);
                Detection {
                    video_id: videos[rng.uniform_usize(0, 1)].to_string(),
                    class: 1,
                    t_start: s,
                    t_end: e,
                    score: rng.uniform(0.0, 1.0),
                }
            })
            .collect();
        let gts: Vec<GroundTruthSegment> = (0..n_gt)
            .map(|_| {
                let s = rng.uniform_usize(0, 12);
                let e = rng.uniform_usize(s + 1, 16);
                GroundTruthSegment {
                    video_id: videos[rng.uniform_usize(0, 1)].to_string(),
                    class: 1,
                    t_start: s,
                    t_end: e,
                }
            })
            .collect();
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        let mut prev: Option<f64> = None;
        for &thr in &grid {
            let got = evaluation::average_precision(&dets, &gts, thr);
            let expected = brute_force_ap(&dets, &gts, thr);
            match (got, expected) {
                (None, None) => {}
                (Some(g), Some(e)) if (g - e).abs() < 1e-12 => {}
                other => {
                    return CheckResult::new(
                        "ap oracle",
                        false,
                        format!("instance {i} thr {thr}: {other:?}"),
                    )
                }
            }
            if let Some(g) = got {
                if let Some(p) = prev {
                    if g > p + 1e-12 {
                        return CheckResult::new(
                            "ap oracle",
                            false,
                            format!("instance {i}: AP rose from {p} to {g} as thr grew"),
                        );
                    }
                }
                prev = Some(g);
            }
        }
    }
    CheckResult::new("ap oracle", true, "1000 instances within 1e-12, monotone")
}

/// Independent AP: same greedy protocol, separate implementation.
fn brute_force_ap(dets: &[Detection], gts: &[GroundTruthSegment], thr: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    if dets.is_empty() {
        return Some(0.0);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .score
            .partial_cmp(&dets[i].score)
            .unwrap()
            .then_with(|| dets[i].video_id.cmp(&dets[j].video_id))
            .then(dets[i].t_start.cmp(&dets[j].t_start))
            .then(dets[i].t_end.cmp(&dets[j].t_end))
    });
    let mut taken = vec![false; gts.len()];
    let mut is_tp = Vec::with_capacity(order.len());
    for &di in &order {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] || g.video_id != d.video_id {
                continue;
            }
            let o = evaluation::tiou((d.t_start, d.t_end), (g.t_start, g.t_end));
            if o >= thr && best.map_or(true, |(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            is_tp.push(true);
        } else {
            is_tp.push(false);
        }
    }
    let num_gt = gts.len() as f64;
    let mut tp = 0.0;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (rank, &hit) in is_tp.iter().enumerate() {
        if hit {
            tp += 1.0;
        }
        points.push((tp / num_gt, tp / (rank as f64 + 1.0)));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let envelope = points[i..]
            .iter()
            .map(|&(_, p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        ap += (points[i].0 - prev_recall) * envelope;
        prev_recall = points[i].0;
    }
    Some(ap)
}

const SWEEP_RUNS: usize = 200;

fn sweep_instance(seed: u64) -> (StreamFeatures, ModelParams) {
    let mut rng = SplitMix64::new(seed);
    let t_len = rng.uniform_usize(6, 14);
    let rgb = seeded_init(GRAD_D, t_len, rng.next_u64(), InitScheme::UniformFanIn);
    let flow = seeded_init(GRAD_D, t_len, rng.next_u64(), InitScheme::UniformFanIn);
    let features = StreamFeatures::new(rgb, flow).expect("shapes match");
    let params = ModelParams::new(
        ModelDims {
            feature_dim: GRAD_D,
            num_classes: GRAD_N,
            hidden: GRAD_HIDDEN,
            kernel_size: 3,
        },
        ModelHyper::default(),
        rng.next_u64(),
    )
    .expect("odd kernel");
    (features, params)
}

/// Algebraic identities over random forward passes: pooling identity,
/// offset support and the action/context partition of the foreground set.
pub fn algebraic_identity_checks() -> Vec<CheckResult> {
    let mut pooling_worst = 0.0f64;
    let mut offset_ok = true;
    let mut partition_ok = true;
    for i in 0..SWEEP_RUNS {
        let (features, params) = sweep_instance(40_000 + i as u64);
        let fwd = match forward(&features, &params) {
            Ok(f) => f,
            Err(e) => {
                return vec![CheckResult::new("identity sweep", false, e.to_string())];
            }
        };
        for (stream, f_fg, f_bg) in [
            (&features.rgb, &fwd.fb.f_fg_rgb, &fwd.fb.f_bg_rgb),
            (&features.flow, &fwd.fb.f_fg_flow, &fwd.fb.f_bg_flow),
        ] {
            let mean = stream.col_mean();
            for d in 0..stream.rows() {
                pooling_worst = pooling_worst.max((f_fg[d] + f_bg[d] - mean[d]).abs());
            }
        }
        let t_len = features.num_snippets();
        let in_set: std::collections::HashSet<usize> = fwd.ac.fg_indices.iter().copied().collect();
        for t in 0..t_len {
            if in_set.contains(&t) {
                continue;
            }
            for n in 0..GRAD_N {
                if fwd.ac.offset.get(n, t) != 0.0 {
                    offset_ok = false;
                }
            }
        }
        let gt_spans: Vec<(usize, usize, usize)> = Vec::new();
        let sets = evaluation::collect_snippet_sets(&fwd.fb.sap, &fwd.ac.att_a, &gt_spans);
        let mut union: Vec<usize> = sets
            .action
            .iter()
            .chain(sets.context.iter())
            .copied()
            .collect();
        union.sort_unstable();
        if union != sets.fg {
            partition_ok = false;
        }
    }
    vec![
        CheckResult::new(
            "pooling identity",
            pooling_worst < 1e-12,
            format!("max |f_fg + f_bg - mean| = {pooling_worst:.2e}"),
        ),
        CheckResult::new(
            "offset support",
            offset_ok,
            "offset is exactly 0 outside the foreground set",
        ),
        CheckResult::new(
            "foreground partition",
            partition_ok,
            "action and context partition the foreground set",
        ),
    ]
}

/// Range invariants over random forward passes: latents in (0,1),
/// per-stream foreground attention above 0.5, context attention within
/// (sigmoid(-1), sigmoid(1)), corrected sequences within (-1, 2).
pub fn range_invariant_checks() -> Vec<CheckResult> {
    let (lo_c, hi_c) = (sigmoid(-1.0), sigmoid(1.0));
    let mut lat_ok = true;
    let mut att_fg_ok = true;
    let mut att_c_ok = true;
    let mut v2_ok = true;
    for i in 0..SWEEP_RUNS {
        let (features, params) = sweep_instance(60_000 + i as u64);
        let fwd = match forward(&features, &params) {
            Ok(f) => f,
            Err(e) => return vec![CheckResult::new("range sweep", false, e.to_string())],
        };
        for lat in [
            &fwd.ac.lat_pos_rgb,
            &fwd.ac.lat_neg_rgb,
            &fwd.ac.lat_pos_flow,
            &fwd.ac.lat_neg_flow,
        ] {
            if !lat.iter().all(|&v| v > 0.0 && v < 1.0) {
                lat_ok = false;
            }
        }
        for att in [&fwd.ac.att_fg_rgb, &fwd.ac.att_fg_flow] {
            if !att.iter().all(|&v| v > 0.5) {
                att_fg_ok = false;
            }
        }
        for att in [&fwd.ac.att_c_rgb, &fwd.ac.att_c_flow] {
            if !att.iter().all(|&v| v > lo_c && v < hi_c) {
                att_c_ok = false;
            }
        }
        for class in 1..=GRAD_N {
            let v2 = localization::corrected_sequence(&fwd.fb.scp, &fwd.ac.offset, class, true);
            if !v2.iter().all(|&x| x > -1.0 && x < 2.0) {
                v2_ok = false;
            }
        }
    }
    vec![
        CheckResult::new("latent range", lat_ok, "latents stay in (0,1)"),
        CheckResult::new("foreground attention range", att_fg_ok, "att_fg > 0.5 per stream"),
        CheckResult::new(
            "context attention range",
            att_c_ok,
            "att_c within (sigmoid(-1), sigmoid(1))",
        ),
        CheckResult::new("corrected sequence range", v2_ok, "v2 within (-1, 2)"),
    ]
}

/// Bitwise determinism of repeated forward passes.
pub fn determinism_check() -> CheckResult {
    let (features, params) = sweep_instance(123_456);
    match (forward(&features, &params), forward(&features, &params)) {
        (Ok(a), Ok(b)) => CheckResult::new(
            "forward determinism",
            a.fb == b.fb && a.ac == b.ac,
            "two forward passes are bit-identical",
        ),
        (Err(e), _) | (_, Err(e)) => CheckResult::new("forward determinism", false, e.to_string()),
    }
}

/// The full verification suite.
pub fn run_all() -> Vec<CheckResult> {
    let mut results = grad_correctness_checks(None);
    results.push(oic_oracle_check());
    results.push(ap_oracle_check());
    results.extend(algebraic_identity_checks());
    results.extend(range_invariant_checks());
    results.push(determinism_check());
    results
}

/// Renders the results as an aligned table.
pub fn render_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{status}  {:width$}  {}\n", r.name, r.detail));
    }
    out
}
