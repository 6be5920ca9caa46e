//! Hand-written backward pass for the full training objective.
//!
//! The computation graph is fixed, so gradients are accumulated explicitly
//! layer by layer instead of through a tape. Index-set selections (the
//! foreground set and the guidance sets) and the smoothed attention target
//! are treated as constants, which also blocks every gradient path from the
//! action/context losses back into the foreground/background branch.

use crate::error::NumError;
use crate::losses::{self, LossBreakdown, LossToggles};
use crate::model::{
    attention_scale, extend_label, forward, ConvStack, ConvStackCache, ModelForward, ModelParams,
    StreamFeatures, StreamParams, VideoLabel,
};
use crate::numcore::{
    conv_backward, fully_connected_backward, relu_backward, LayerGrads, Tensor2D,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStackGrads {
    pub conv1: LayerGrads,
    pub conv2: LayerGrads,
}

impl ConvStackGrads {
    fn zeros_like(stack: &ConvStack) -> Self {
        ConvStackGrads {
            conv1: LayerGrads::zeros_like(&stack.conv1),
            conv2: LayerGrads::zeros_like(&stack.conv2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamGrads {
    pub attn: LayerGrads,
    pub cls: LayerGrads,
    pub pos: ConvStackGrads,
    pub neg: ConvStackGrads,
}

impl StreamGrads {
    fn zeros_like(params: &StreamParams) -> Self {
        StreamGrads {
            attn: LayerGrads::zeros_like(&params.attn),
            cls: LayerGrads::zeros_like(&params.cls),
            pos: ConvStackGrads::zeros_like(&params.pos),
            neg: ConvStackGrads::zeros_like(&params.neg),
        }
    }
}

/// Gradients mirroring [`ModelParams`], block for block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub rgb: StreamGrads,
    pub flow: StreamGrads,
    pub ac_cls: LayerGrads,
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ModelGrads {
            rgb: StreamGrads::zeros_like(&params.rgb),
            flow: StreamGrads::zeros_like(&params.flow),
            ac_cls: LayerGrads::zeros_like(&params.ac_cls),
        }
    }

    /// Blocks in the same fixed order as [`ModelParams::blocks`].
    pub fn blocks(&self) -> Vec<(&'static str, &LayerGrads)> {
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

    /// Flattened gradients matching [`ModelParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for (_, g) in self.blocks() {
            flat.extend_from_slice(g.weights.data());
            flat.extend_from_slice(&g.bias);
        }
        flat
    }

    /// Elementwise sum, used for the ordered batch reduction.
    pub fn add_assign(&mut self, other: &ModelGrads) {
        let mut flat = self.flatten();
        for (a, b) in flat.iter_mut().zip(other.flatten()) {
            *a += b;
        }
        self.set_from_flat_internal(&flat);
    }

    fn set_from_flat_internal(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for g in self.blocks_mut() {
            let nw = g.weights.rows() * g.weights.cols();
            g.weights.data_mut().copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = g.bias.len();
            g.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
    }

    fn blocks_mut(&mut self) -> Vec<&mut LayerGrads> {
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
}

/// Forward pass, loss assembly and full backward pass for one video.
pub fn forward_backward(
    features: &StreamFeatures,
    label: &VideoLabel,
    params: &ModelParams,
    toggles: LossToggles,
) -> Result<(LossBreakdown, ModelGrads, ModelForward), NumError> {
    forward_backward_with_frozen_target(features, label, params, toggles, None)
}

/// As [`forward_backward`], but optionally evaluating the smoothed-MSE term
/// against a fixed target instead of the freshly smoothed attention. The
/// target is detached during differentiation, so finite-difference probes
/// must hold it constant to agree with the analytic gradient; the gradient
/// checker passes the target captured at the probe point.
pub fn forward_backward_with_frozen_target(
    features: &StreamFeatures,
    label: &VideoLabel,
    params: &ModelParams,
    toggles: LossToggles,
    frozen_mse_target: Option<&[f64]>,
) -> Result<(LossBreakdown, ModelGrads, ModelForward), NumError> {
    let fwd = forward(features, params)?;
    let hyper = params.hyper;
    let t_len = features.num_snippets();
    let alpha = hyper.alpha;

    // Loss values and gradients w.r.t. their immediate inputs.
    let (l_fb, fb_logit_grads) = losses::fb_classification_loss_grad(
        &fwd.fb.p_fg_rgb,
        &fwd.fb.p_bg_rgb,
        &fwd.fb.p_fg_flow,
        &fwd.fb.p_bg_flow,
        label,
    )?;
    let extended = extend_label(label);
    let (l_ac, ac_logit_grads) = losses::ac_classification_loss_grad(
        &fwd.ac.pred_fg,
        &fwd.ac.pred_a,
        &fwd.ac.pred_c,
        &extended,
    )?;
    let sets = losses::build_guidance_sets(
        &fwd.ac.att_a_rgb,
        &fwd.ac.att_a_flow,
        attention_scale(hyper.theta_h),
        attention_scale(hyper.theta_l),
    );
    let (l_g, g_att_a_guid, g_att_c_guid) =
        losses::guidance_loss_grad(&fwd.ac.att_a, &fwd.ac.att_c, &sets);
    let smooth_target = match frozen_mse_target {
        Some(target) => target.to_vec(),
        None => losses::gaussian_smooth(&fwd.fb.sap),
    };
    let (l_mse, g_att_fg_mse) = losses::mse_loss_grad(&fwd.ac.att_fg, &smooth_target)?;

    let breakdown = losses::total_loss(l_fb, l_ac, l_g, l_mse, hyper.lambda, toggles);

    let w_fb = if toggles.cls_fb { 1.0 } else { 0.0 };
    let w_ac = if toggles.cls_ac { 1.0 } else { 0.0 };
    let w_g = hyper.lambda * if toggles.guidance { 1.0 } else { 0.0 };
    let w_mse = hyper.lambda * if toggles.mse { 1.0 } else { 0.0 };

    let mut grads = ModelGrads::zeros_like(params);

    // ---- Action/context classifier and fused attention gradients ----
    let concat = &features.concat;
    let two_d = concat.rows();
    let pooled = [&fwd.ac.pooled_fg, &fwd.ac.pooled_a, &fwd.ac.pooled_c];
    let mut pooled_mat = Tensor2D::zeros(two_d, 3);
    for z in 0..3 {
        for d in 0..two_d {
            pooled_mat.set(d, z, pooled[z][d]);
        }
    }
    let two_n = fwd.ac.pred_fg.len();
    let mut pred_grad_mat = Tensor2D::zeros(two_n, 3);
    for (z, gz) in ac_logit_grads.iter().enumerate() {
        for r in 0..two_n {
            pred_grad_mat.set(r, z, w_ac * gz[r]);
        }
    }
    let (ac_cls_grads, g_pooled_mat) =
        fully_connected_backward(&pooled_mat, &params.ac_cls, &pred_grad_mat, true);
    grads.ac_cls = ac_cls_grads;
    let g_pooled_mat = g_pooled_mat.expect("input grad requested");

    // g_att_z(t) += (1/T') * <F(:,t), g_pooled_z>  for t in the foreground set
    let inv_tp = 1.0 / fwd.ac.fg_indices.len() as f64;
    let mut g_att = [
        vec![0.0; t_len], // fg
        vec![0.0; t_len], // a
        vec![0.0; t_len], // c
    ];
    for z in 0..3 {
        for d in 0..two_d {
            let gp = g_pooled_mat.get(d, z);
            if gp == 0.0 {
                continue;
            }
            let row = concat.row(d);
            for &t in &fwd.ac.fg_indices {
                g_att[z][t] += gp * row[t];
            }
        }
        for v in g_att[z].iter_mut() {
            *v *= inv_tp;
        }
    }
    for t in 0..t_len {
        g_att[0][t] += w_mse * g_att_fg_mse[t];
        g_att[1][t] += w_g * g_att_a_guid[t];
        g_att[2][t] += w_g * g_att_c_guid[t];
    }

    // ---- Latent-combination and conv-stack backward, per stream ----
    let streams = [
        (
            &features.rgb,
            &params.rgb,
            &fwd.caches.pos_rgb,
            &fwd.caches.neg_rgb,
            &fwd.ac.att_fg_rgb,
            &fwd.ac.att_a_rgb,
            &fwd.ac.att_c_rgb,
            alpha,
        ),
        (
            &features.flow,
            &params.flow,
            &fwd.caches.pos_flow,
            &fwd.caches.neg_flow,
            &fwd.ac.att_fg_flow,
            &fwd.ac.att_a_flow,
            &fwd.ac.att_c_flow,
            1.0 - alpha,
        ),
    ];
    let mut stream_conv_grads = Vec::with_capacity(2);
    for (feat, sp, pos_cache, neg_cache, att_fg_s, att_a_s, att_c_s, weight) in streams {
        let mut g_lat_pos = vec![0.0; t_len];
        let mut g_lat_neg = vec![0.0; t_len];
        for t in 0..t_len {
            // att_fg = s(L+ + L-), att_a = s(L+), att_c = s(L- - L+)
            let gfg = weight * g_att[0][t] * att_fg_s[t] * (1.0 - att_fg_s[t]);
            let ga = weight * g_att[1][t] * att_a_s[t] * (1.0 - att_a_s[t]);
            let gc = weight * g_att[2][t] * att_c_s[t] * (1.0 - att_c_s[t]);
            g_lat_pos[t] = gfg + ga - gc;
            g_lat_neg[t] = gfg + gc;
        }
        let pos = conv_stack_backward(feat, pos_cache, &sp.pos, &g_lat_pos);
        let neg = conv_stack_backward(feat, neg_cache, &sp.neg, &g_lat_neg);
        stream_conv_grads.push((pos, neg));
    }
    let (neg_grads_flow_pair, pos_grads_rgb_pair) =
        (stream_conv_grads.pop().unwrap(), stream_conv_grads.pop().unwrap());
    grads.rgb.pos = pos_grads_rgb_pair.0;
    grads.rgb.neg = pos_grads_rgb_pair.1;
    grads.flow.pos = neg_grads_flow_pair.0;
    grads.flow.neg = neg_grads_flow_pair.1;

    // ---- Foreground/background branch backward, per stream ----
    let fb_streams = [
        (
            &features.rgb,
            &params.rgb,
            &fwd.fb.sap_rgb,
            &fwd.fb.f_fg_rgb,
            &fwd.fb.f_bg_rgb,
            &fb_logit_grads[0],
            &fb_logit_grads[1],
        ),
        (
            &features.flow,
            &params.flow,
            &fwd.fb.sap_flow,
            &fwd.fb.f_fg_flow,
            &fwd.fb.f_bg_flow,
            &fb_logit_grads[2],
            &fb_logit_grads[3],
        ),
    ];
    let mut fb_grads_out = Vec::with_capacity(2);
    for (feat, sp, sap_s, f_fg, f_bg, g_pfg, g_pbg) in fb_streams {
        let d = feat.rows();
        let n1 = g_pfg.len();
        let mut input2 = Tensor2D::zeros(d, 2);
        for di in 0..d {
            input2.set(di, 0, f_fg[di]);
            input2.set(di, 1, f_bg[di]);
        }
        let mut gout2 = Tensor2D::zeros(n1, 2);
        for r in 0..n1 {
            gout2.set(r, 0, w_fb * g_pfg[r]);
            gout2.set(r, 1, w_fb * g_pbg[r]);
        }
        let (cls_grads, g_f2) = fully_connected_backward(&input2, &sp.cls, &gout2, true);
        let g_f2 = g_f2.expect("input grad requested");
        // g_sap(t) = (1/T) <F(:,t), g_f_fg - g_f_bg>
        let inv_t = 1.0 / t_len as f64;
        let mut g_sap = vec![0.0; t_len];
        for di in 0..d {
            let diff = g_f2.get(di, 0) - g_f2.get(di, 1);
            if diff == 0.0 {
                continue;
            }
            let row = feat.row(di);
            for t in 0..t_len {
                g_sap[t] += diff * row[t];
            }
        }
        let mut g_za = Tensor2D::zeros(1, t_len);
        for t in 0..t_len {
            g_za.set(0, t, g_sap[t] * inv_t * sap_s[t] * (1.0 - sap_s[t]));
        }
        let (attn_grads, _) = fully_connected_backward(feat, &sp.attn, &g_za, false);
        fb_grads_out.push((attn_grads, cls_grads));
    }
    let (flow_fb, rgb_fb) = (fb_grads_out.pop().unwrap(), fb_grads_out.pop().unwrap());
    grads.rgb.attn = rgb_fb.0;
    grads.rgb.cls = rgb_fb.1;
    grads.flow.attn = flow_fb.0;
    grads.flow.cls = flow_fb.1;

    Ok((breakdown, grads, fwd))
}

/// Backward through `sigmoid(conv2(relu(conv1(input))))` given the gradient
/// w.r.t. the final latent sequence.
fn conv_stack_backward(
    input: &Tensor2D,
    cache: &ConvStackCache,
    stack: &ConvStack,
    g_lat: &[f64],
) -> ConvStackGrads {
    let t_len = g_lat.len();
    let mut g_h2 = Tensor2D::zeros(1, t_len);
    for t in 0..t_len {
        let y = cache.lat[t];
        g_h2.set(0, t, g_lat[t] * y * (1.0 - y));
    }
    let (g_conv2, g_relu) = conv_backward(&cache.relu, &stack.conv2, &g_h2, true);
    let g_h1 = relu_backward(&cache.h1, &g_relu.expect("input grad requested"));
    let (g_conv1, _) = conv_backward(input, &stack.conv1, &g_h1, false);
    ConvStackGrads {
        conv1: g_conv1,
        conv2: g_conv2,
    }
}
