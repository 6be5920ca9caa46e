//! The two-branch model: label extension, foreground/background branch
//! (attention + classification), action/context branch (latent components,
//! combinations, pooling, action-context classification, offset) and
//! two-stream fusion.

mod backward;

pub use backward::{
    forward_backward, forward_backward_with_frozen_target, ConvStackGrads, ModelGrads,
    StreamGrads,
};

use serde::{Deserialize, Serialize};

use crate::error::NumError;
use crate::numcore::{
    activate, fully_connected, sigmoid, temporal_conv, Activation, LayerParams, Tensor2D,
};

/// Video-level label: `y` has `N + 1` entries with index 0 reserved for the
/// background category (always set — every untrimmed video contains
/// background).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoLabel {
    pub num_classes: usize,
    pub y: Vec<f64>,
}

impl VideoLabel {
    /// Builds a label from 1-based class ids. At least one class is required
    /// for a trainable video.
    pub fn new(num_classes: usize, classes: &[usize]) -> Result<Self, NumError> {
        if classes.is_empty() {
            return Err(NumError::contract(
                "VideoLabel::new",
                "a training video must contain at least one action class",
            ));
        }
        let mut y = vec![0.0; num_classes + 1];
        y[0] = 1.0;
        for &c in classes {
            if c == 0 || c > num_classes {
                return Err(NumError::contract(
                    "VideoLabel::new",
                    format!("class id {c} out of range 1..={num_classes}"),
                ));
            }
            y[c] = 1.0;
        }
        Ok(VideoLabel { num_classes, y })
    }

    /// 1-based ids of the classes present.
    pub fn classes(&self) -> Vec<usize> {
        (1..=self.num_classes).filter(|&n| self.y[n] > 0.0).collect()
    }
}

/// Extends a video-level label with auxiliary context categories: the result
/// has layout `[action 1..N | context 1..N]`, the context flag of class `n`
/// mirroring its action flag. The background entry is dropped.
pub fn extend_label(label: &VideoLabel) -> Vec<f64> {
    let n = label.num_classes;
    let mut extended = vec![0.0; 2 * n];
    for c in 1..=n {
        extended[c - 1] = label.y[c];
        extended[n + c - 1] = label.y[c];
    }
    extended
}

/// Two-stream snippet features for one video: `rgb` and `flow` are both
/// `D x T`; `concat` stacks rgb above flow (`2D x T`).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFeatures {
    pub rgb: Tensor2D,
    pub flow: Tensor2D,
    pub concat: Tensor2D,
}

impl StreamFeatures {
    pub fn new(rgb: Tensor2D, flow: Tensor2D) -> Result<Self, NumError> {
        if rgb.rows() != flow.rows() || rgb.cols() != flow.cols() {
            return Err(NumError::dimension(
                "StreamFeatures::new",
                format!(
                    "streams must share shape: rgb {}x{}, flow {}x{}",
                    rgb.rows(),
                    rgb.cols(),
                    flow.rows(),
                    flow.cols()
                ),
            ));
        }
        let concat = Tensor2D::vstack(&rgb, &flow)?;
        Ok(StreamFeatures { rgb, flow, concat })
    }

    pub fn feature_dim(&self) -> usize {
        self.rgb.rows()
    }

    pub fn num_snippets(&self) -> usize {
        self.rgb.cols()
    }
}

/// Architecture sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub num_classes: usize,
    pub hidden: usize,
    pub kernel_size: usize,
}

/// Scalar hyperparameters: stream-fusion weight, loss balance and the
/// guidance thresholds (expressed on the latent scale, see
/// [`attention_scale`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelHyper {
    pub alpha: f64,
    pub lambda: f64,
    pub theta_h: f64,
    pub theta_l: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        ModelHyper {
            alpha: 0.5,
            lambda: 1.0,
            theta_h: 0.7,
            theta_l: 0.3,
        }
    }
}

/// Two stacked temporal convolutions: conv1 -> ReLU -> conv2 -> sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStack {
    pub conv1: LayerParams,
    pub conv2: LayerParams,
}

/// Per-stream parameters: attention module, foreground/background classifier
/// and the positive/negative latent modules (same architecture, separate
/// parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    pub attn: LayerParams,
    pub cls: LayerParams,
    pub pos: ConvStack,
    pub neg: ConvStack,
}

/// All trainable parameters plus hyperparameters. The shared action-context
/// classifier maps concatenated `2D` features to `2N` logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub hyper: ModelHyper,
    pub rgb: StreamParams,
    pub flow: StreamParams,
    pub ac_cls: LayerParams,
}

/// Fixed order of parameter blocks; checkpoints, flattening and gradient
/// reports all follow it.
pub const PARAM_BLOCK_NAMES: [&str; 13] = [
    "attn_rgb",
    "attn_flow",
    "cls_rgb",
    "cls_flow",
    "pos_rgb_conv1",
    "pos_rgb_conv2",
    "neg_rgb_conv1",
    "neg_rgb_conv2",
    "pos_flow_conv1",
    "pos_flow_conv2",
    "neg_flow_conv1",
    "neg_flow_conv2",
    "ac_cls",
];

impl ModelParams {
    pub fn new(dims: ModelDims, hyper: ModelHyper, seed: u64) -> Result<Self, NumError> {
        let d = dims.feature_dim;
        let n = dims.num_classes;
        let h = dims.hidden;
        let k = dims.kernel_size;
        let sub = |tag: u64| crate::numcore::derive_seed(seed, tag);
        let stack = |tag: u64| -> Result<ConvStack, NumError> {
            Ok(ConvStack {
                conv1: LayerParams::temporal_conv(d, h, k, sub(tag))?,
                conv2: LayerParams::temporal_conv(h, 1, k, sub(tag + 1))?,
            })
        };
        Ok(ModelParams {
            dims,
            hyper,
            rgb: StreamParams {
                attn: LayerParams::fully_connected(d, 1, sub(0)),
                cls: LayerParams::fully_connected(d, n + 1, sub(2)),
                pos: stack(4)?,
                neg: stack(6)?,
            },
            flow: StreamParams {
                attn: LayerParams::fully_connected(d, 1, sub(1)),
                cls: LayerParams::fully_connected(d, n + 1, sub(3)),
                pos: stack(8)?,
                neg: stack(10)?,
            },
            ac_cls: LayerParams::fully_connected(2 * d, 2 * n, sub(12)),
        })
    }

    /// Parameter blocks in the fixed global order.
    pub fn blocks(&self) -> Vec<(&'static str, &LayerParams)> {
        vec![
            ("attn_rgb", &self.rgb.attn),
            ("attn_flow", &self.flow.attn),
            ("cls_rgb", &self.rgb.cls),
            ("cls_flow", &self.flow.cls),
            ("pos_rgb_conv1", &self.rgb.pos.conv1),
            ("pos_rgb_conv2", &self.rgb.pos.conv2),
            ("neg_rgb_conv1", &self.rgb.neg.conv1),
            ("neg_rgb_conv2", &self.rgb.neg.conv2),
            ("pos_flow_conv1", &self.flow.pos.conv1),
            ("pos_flow_conv2", &self.flow.pos.conv2),
            ("neg_flow_conv1", &self.flow.neg.conv1),
            ("neg_flow_conv2", &self.flow.neg.conv2),
            ("ac_cls", &self.ac_cls),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut LayerParams> {
        vec![
            &mut self.rgb.attn,
            &mut self.flow.attn,
            &mut self.rgb.cls,
            &mut self.flow.cls,
            &mut self.rgb.pos.conv1,
            &mut self.rgb.pos.conv2,
            &mut self.rgb.neg.conv1,
            &mut self.rgb.neg.conv2,
            &mut self.flow.pos.conv1,
            &mut self.flow.pos.conv2,
            &mut self.flow.neg.conv1,
            &mut self.flow.neg.conv2,
            &mut self.ac_cls,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, p)| p.param_count()).sum()
    }

    /// Flattens all blocks (weights then bias, block order fixed).
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for (_, p) in self.blocks() {
            flat.extend_from_slice(p.weights.data());
            flat.extend_from_slice(&p.bias);
        }
        flat
    }

    /// Writes a flat vector (as produced by [`ModelParams::flatten`]) back
    /// into the blocks.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), NumError> {
        if flat.len() != self.param_count() {
            return Err(NumError::dimension(
                "ModelParams::set_from_flat",
                format!("expected {} values, got {}", self.param_count(), flat.len()),
            ));
        }
        let mut offset = 0;
        for p in self.blocks_mut() {
            let nw = p.weights.rows() * p.weights.cols();
            p.weights.data_mut().copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = p.bias.len();
            p.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

/// Weighted average of two equally shaped sequences: `alpha * rgb +
/// (1 - alpha) * flow`.
pub fn fuse_streams(rgb: &[f64], flow: &[f64], alpha: f64) -> Result<Vec<f64>, NumError> {
    if rgb.len() != flow.len() {
        return Err(NumError::dimension(
            "fuse_streams",
            format!("lengths differ: {} vs {}", rgb.len(), flow.len()),
        ));
    }
    Ok(rgb
        .iter()
        .zip(flow)
        .map(|(&a, &b)| alpha * a + (1.0 - alpha) * b)
        .collect())
}

/// [`fuse_streams`] over matrices.
pub fn fuse_tensors(rgb: &Tensor2D, flow: &Tensor2D, alpha: f64) -> Result<Tensor2D, NumError> {
    if rgb.rows() != flow.rows() || rgb.cols() != flow.cols() {
        return Err(NumError::dimension(
            "fuse_streams",
            format!(
                "shapes differ: {}x{} vs {}x{}",
                rgb.rows(),
                rgb.cols(),
                flow.rows(),
                flow.cols()
            ),
        ));
    }
    let data = fuse_streams(rgb.data(), flow.data(), alpha)?;
    Ok(Tensor2D::from_vec_unchecked(rgb.rows(), rgb.cols(), data))
}

/// The action/context attentions are sigmoids of latents that themselves lie
/// in `(0,1)`, so the attainable attention range is `(sigmoid(0),
/// sigmoid(1))` rather than `(0,1)`. A cut-off `c` expressed on the latent
/// scale corresponds to `sigmoid(c)` on the attention scale; thresholds are
/// configured on the latent scale and mapped through this function wherever
/// an attention value is compared.
pub fn attention_scale(cut: f64) -> f64 {
    sigmoid(cut)
}

/// Decision point of the action attention: the value produced by a neutral
/// latent (0.5). Snippets above it carry positive action evidence.
pub fn action_attention_midpoint() -> f64 {
    attention_scale(0.5)
}

/// Everything the foreground/background branch produces for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FBOutputs {
    pub sap_rgb: Vec<f64>,
    pub sap_flow: Vec<f64>,
    /// Fused snippet attention, `alpha * rgb + (1 - alpha) * flow`.
    pub sap: Vec<f64>,
    pub scp_rgb: Tensor2D,
    pub scp_flow: Tensor2D,
    /// Fused snippet class logits, `(N + 1) x T`.
    pub scp: Tensor2D,
    pub f_fg_rgb: Vec<f64>,
    pub f_bg_rgb: Vec<f64>,
    pub f_fg_flow: Vec<f64>,
    pub f_bg_flow: Vec<f64>,
    pub p_fg_rgb: Vec<f64>,
    pub p_bg_rgb: Vec<f64>,
    pub p_fg_flow: Vec<f64>,
    pub p_bg_flow: Vec<f64>,
    /// Fused video-level foreground logits, used for class selection.
    pub p_fg: Vec<f64>,
}

/// Everything the action/context branch produces for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ACOutputs {
    pub lat_pos_rgb: Vec<f64>,
    pub lat_neg_rgb: Vec<f64>,
    pub lat_pos_flow: Vec<f64>,
    pub lat_neg_flow: Vec<f64>,
    pub att_fg_rgb: Vec<f64>,
    pub att_a_rgb: Vec<f64>,
    pub att_c_rgb: Vec<f64>,
    pub att_fg_flow: Vec<f64>,
    pub att_a_flow: Vec<f64>,
    pub att_c_flow: Vec<f64>,
    pub att_fg: Vec<f64>,
    pub att_a: Vec<f64>,
    pub att_c: Vec<f64>,
    /// Sorted snippet indices with fused attention above 0.5 (all indices
    /// when none qualify).
    pub fg_indices: Vec<usize>,
    pub fg_count: usize,
    pub fg_fallback: bool,
    pub pooled_fg: Vec<f64>,
    pub pooled_a: Vec<f64>,
    pub pooled_c: Vec<f64>,
    pub pred_fg: Vec<f64>,
    pub pred_a: Vec<f64>,
    pub pred_c: Vec<f64>,
    /// Snippet-level action/context logits, `2N x T`.
    pub acp: Tensor2D,
    /// Action-context offset, `N x T`, zero outside the foreground set.
    pub offset: Tensor2D,
}

/// Forward pass of the foreground/background branch.
pub fn fb_forward(features: &StreamFeatures, params: &ModelParams) -> Result<FBOutputs, NumError> {
    let t_len = features.num_snippets();
    if t_len == 0 {
        return Err(NumError::dimension("fb_forward", "T must be >= 1"));
    }
    let alpha = params.hyper.alpha;
    let rgb = stream_fb(&features.rgb, &params.rgb)?;
    let flow = stream_fb(&features.flow, &params.flow)?;
    let sap = fuse_streams(&rgb.sap, &flow.sap, alpha)?;
    let scp = fuse_tensors(&rgb.scp, &flow.scp, alpha)?;
    let p_fg = fuse_streams(&rgb.p_fg, &flow.p_fg, alpha)?;
    Ok(FBOutputs {
        sap_rgb: rgb.sap,
        sap_flow: flow.sap,
        sap,
        scp_rgb: rgb.scp,
        scp_flow: flow.scp,
        scp,
        f_fg_rgb: rgb.f_fg,
        f_bg_rgb: rgb.f_bg,
        f_fg_flow: flow.f_fg,
        f_bg_flow: flow.f_bg,
        p_fg_rgb: rgb.p_fg,
        p_bg_rgb: rgb.p_bg,
        p_fg_flow: flow.p_fg,
        p_bg_flow: flow.p_bg,
        p_fg,
    })
}

struct StreamFB {
    sap: Vec<f64>,
    scp: Tensor2D,
    f_fg: Vec<f64>,
    f_bg: Vec<f64>,
    p_fg: Vec<f64>,
    p_bg: Vec<f64>,
}

fn stream_fb(f: &Tensor2D, params: &StreamParams) -> Result<StreamFB, NumError> {
    let t_len = f.cols();
    let d = f.rows();
    let sap_t = activate(&fully_connected(f, &params.attn)?, Activation::Sigmoid);
    let sap = sap_t.row(0).to_vec();
    let scp = fully_connected(f, &params.cls)?;
    // f_fg = (1/T) sum_t sap(t) F(:,t); f_bg = (1/T) sum_t (1 - sap(t)) F(:,t)
    let inv_t = 1.0 / t_len as f64;
    let mut f_fg = vec![0.0; d];
    let mut f_bg = vec![0.0; d];
    for (di, (fg, bg)) in f_fg.iter_mut().zip(f_bg.iter_mut()).enumerate() {
        let row = f.row(di);
        let mut acc_fg = 0.0;
        let mut acc_bg = 0.0;
        for t in 0..t_len {
            acc_fg += sap[t] * row[t];
            acc_bg += (1.0 - sap[t]) * row[t];
        }
        *fg = acc_fg * inv_t;
        *bg = acc_bg * inv_t;
    }
    let fg_col = Tensor2D::from_vec_unchecked(d, 1, f_fg.clone());
    let bg_col = Tensor2D::from_vec_unchecked(d, 1, f_bg.clone());
    let p_fg = fully_connected(&fg_col, &params.cls)?.col(0);
    let p_bg = fully_connected(&bg_col, &params.cls)?.col(0);
    Ok(StreamFB {
        sap,
        scp,
        f_fg,
        f_bg,
        p_fg,
        p_bg,
    })
}

/// Latent component sequences of one stream, with the intermediates needed
/// for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ConvStackCache {
    pub h1: Tensor2D,
    pub relu: Tensor2D,
    pub lat: Vec<f64>,
}

pub(crate) fn conv_stack_forward(
    f: &Tensor2D,
    stack: &ConvStack,
) -> Result<ConvStackCache, NumError> {
    let h1 = temporal_conv(f, &stack.conv1)?;
    let relu = activate(&h1, Activation::Relu);
    let h2 = temporal_conv(&relu, &stack.conv2)?;
    let lat = activate(&h2, Activation::Sigmoid).row(0).to_vec();
    Ok(ConvStackCache { h1, relu, lat })
}

/// Positive and negative latent components for one stream:
/// `sigmoid(conv2(relu(conv1(F))))` per module, each a length-`T` sequence
/// in `(0,1)`.
pub fn ac_latents(f: &Tensor2D, params: &StreamParams) -> Result<(Vec<f64>, Vec<f64>), NumError> {
    let pos = conv_stack_forward(f, &params.pos)?;
    let neg = conv_stack_forward(f, &params.neg)?;
    Ok((pos.lat, neg.lat))
}

/// Combines the latent components into foreground, action and context
/// attentions: `att_fg = sigmoid(L+ + L-)`, `att_a = sigmoid(L+)`,
/// `att_c = sigmoid(L- - L+)`.
pub fn combine_latents(
    lat_pos: &[f64],
    lat_neg: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    debug_assert_eq!(lat_pos.len(), lat_neg.len());
    let att_fg = lat_pos
        .iter()
        .zip(lat_neg)
        .map(|(&p, &n)| sigmoid(p + n))
        .collect();
    let att_a = lat_pos.iter().map(|&p| sigmoid(p)).collect();
    let att_c = lat_pos
        .iter()
        .zip(lat_neg)
        .map(|(&p, &n)| sigmoid(n - p))
        .collect();
    (att_fg, att_a, att_c)
}

/// Foreground snippet index set: indices with fused attention strictly above
/// 0.5. Falls back to all indices when empty so downstream pooling stays
/// defined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundSet {
    pub indices: Vec<usize>,
    pub fallback: bool,
}

pub fn foreground_index_set(sap: &[f64]) -> ForegroundSet {
    let indices: Vec<usize> = (0..sap.len()).filter(|&t| sap[t] > 0.5).collect();
    if indices.is_empty() {
        log::warn!("no snippet attention above 0.5; falling back to all {} snippets", sap.len());
        ForegroundSet {
            indices: (0..sap.len()).collect(),
            fallback: true,
        }
    } else {
        ForegroundSet {
            indices,
            fallback: false,
        }
    }
}

/// Attention-weighted mean of the concatenated features over the foreground
/// set: `f_z = (1/T') sum_{t in I} att_z(t) F(:,t)`.
pub fn pool_over_set(concat: &Tensor2D, att: &[f64], indices: &[usize]) -> Vec<f64> {
    let inv = 1.0 / indices.len() as f64;
    (0..concat.rows())
        .map(|d| {
            let row = concat.row(d);
            let mut acc = 0.0;
            for &t in indices {
                acc += att[t] * row[t];
            }
            acc * inv
        })
        .collect()
}

/// Pooled features, video-level action/context predictions and snippet-level
/// action/context logits.
pub struct PoolAndClassify {
    pub pooled: [Vec<f64>; 3],
    pub preds: [Vec<f64>; 3],
    pub acp: Tensor2D,
}

/// Pools the concatenated features under each fused attention over the
/// foreground set and applies the shared action-context classifier, both to
/// the pooled vectors and columnwise to every snippet.
pub fn ac_pool_and_classify(
    features: &StreamFeatures,
    atts: [&[f64]; 3],
    fg: &ForegroundSet,
    ac_cls: &LayerParams,
) -> Result<PoolAndClassify, NumError> {
    if fg.indices.is_empty() {
        return Err(NumError::contract(
            "ac_pool_and_classify",
            "foreground set empty even after fallback",
        ));
    }
    let concat = &features.concat;
    let pooled: [Vec<f64>; 3] = [
        pool_over_set(concat, atts[0], &fg.indices),
        pool_over_set(concat, atts[1], &fg.indices),
        pool_over_set(concat, atts[2], &fg.indices),
    ];
    let mut preds: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (z, p) in pooled.iter().enumerate() {
        let col = Tensor2D::from_vec_unchecked(p.len(), 1, p.clone());
        preds[z] = fully_connected(&col, ac_cls)?.col(0);
    }
    let acp = fully_connected(concat, ac_cls)?;
    Ok(PoolAndClassify { pooled, preds, acp })
}

/// Per-snippet softmax over the `2N` action/context logits followed by the
/// action-minus-context difference per class; zero outside the foreground
/// set. Context of class `n` lives in row `N + n`.
pub fn action_context_offset(acp: &Tensor2D, fg: &ForegroundSet) -> Tensor2D {
    let two_n = acp.rows();
    let n = two_n / 2;
    let t_len = acp.cols();
    let mut offset = Tensor2D::zeros(n, t_len);
    for &t in &fg.indices {
        let logits = acp.col(t);
        let probs = crate::numcore::softmax(&logits);
        for c in 0..n {
            offset.set(c, t, probs[c] - probs[n + c]);
        }
    }
    offset
}

/// Full forward pass retaining the conv-stack intermediates for the backward
/// pass.
pub struct ModelForward {
    pub fb: FBOutputs,
    pub ac: ACOutputs,
    pub(crate) caches: ForwardCaches,
}

pub(crate) struct ForwardCaches {
    pub pos_rgb: ConvStackCache,
    pub neg_rgb: ConvStackCache,
    pub pos_flow: ConvStackCache,
    pub neg_flow: ConvStackCache,
}

pub fn forward(features: &StreamFeatures, params: &ModelParams) -> Result<ModelForward, NumError> {
    let alpha = params.hyper.alpha;
    let fb = fb_forward(features, params)?;

    let pos_rgb = conv_stack_forward(&features.rgb, &params.rgb.pos)?;
    let neg_rgb = conv_stack_forward(&features.rgb, &params.rgb.neg)?;
    let pos_flow = conv_stack_forward(&features.flow, &params.flow.pos)?;
    let neg_flow = conv_stack_forward(&features.flow, &params.flow.neg)?;

    let (att_fg_rgb, att_a_rgb, att_c_rgb) = combine_latents(&pos_rgb.lat, &neg_rgb.lat);
    let (att_fg_flow, att_a_flow, att_c_flow) = combine_latents(&pos_flow.lat, &neg_flow.lat);
    let att_fg = fuse_streams(&att_fg_rgb, &att_fg_flow, alpha)?;
    let att_a = fuse_streams(&att_a_rgb, &att_a_flow, alpha)?;
    let att_c = fuse_streams(&att_c_rgb, &att_c_flow, alpha)?;

    let fg = foreground_index_set(&fb.sap);
    let pc = ac_pool_and_classify(
        features,
        [&att_fg, &att_a, &att_c],
        &fg,
        &params.ac_cls,
    )?;
    let offset = action_context_offset(&pc.acp, &fg);
    let [pooled_fg, pooled_a, pooled_c] = pc.pooled;
    let [pred_fg, pred_a, pred_c] = pc.preds;

    let ac = ACOutputs {
        lat_pos_rgb: pos_rgb.lat.clone(),
        lat_neg_rgb: neg_rgb.lat.clone(),
        lat_pos_flow: pos_flow.lat.clone(),
        lat_neg_flow: neg_flow.lat.clone(),
        att_fg_rgb,
        att_a_rgb,
        att_c_rgb,
        att_fg_flow,
        att_a_flow,
        att_c_flow,
        att_fg,
        att_a,
        att_c,
        fg_count: fg.indices.len(),
        fg_fallback: fg.fallback,
        fg_indices: fg.indices,
        pooled_fg,
        pooled_a,
        pooled_c,
        pred_fg,
        pred_a,
        pred_c,
        acp: pc.acp,
        offset,
    };
    Ok(ModelForward {
        fb,
        ac,
        caches: ForwardCaches {
            pos_rgb,
            neg_rgb,
            pos_flow,
            neg_flow,
        },
    })
}
