//! Training objectives: foreground/background cross-entropy, action/context
//! cross-entropy with extended labels, weighted binary logistic regression,
//! the guidance loss with its snippet index sets, the smoothed attention MSE
//! and the total loss.

use serde::{Deserialize, Serialize};

use crate::error::NumError;
use crate::model::VideoLabel;
use crate::numcore::softmax_cross_entropy;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before any logarithm.
const CLAMP: f64 = 1e-7;

/// Enable flags per loss component. Disabled components are still computed
/// and reported, but contribute neither to the total nor to gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossToggles {
    pub cls_fb: bool,
    pub cls_ac: bool,
    pub guidance: bool,
    pub mse: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles {
            cls_fb: true,
            cls_ac: true,
            guidance: true,
            mse: true,
        }
    }
}

impl LossToggles {
    pub fn validate(&self) -> Result<(), NumError> {
        if !(self.cls_fb || self.cls_ac || self.guidance || self.mse) {
            return Err(NumError::contract(
                "LossToggles",
                "at least one loss component must stay enabled",
            ));
        }
        Ok(())
    }
}

/// All loss components of one video (or their batch means). Components are
/// stored unweighted; `total` applies toggles and the balance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cls_fb: f64,
    pub l_cls_ac: f64,
    pub l_g: f64,
    pub l_mse: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zero() -> Self {
        LossBreakdown {
            l_cls_fb: 0.0,
            l_cls_ac: 0.0,
            l_g: 0.0,
            l_mse: 0.0,
            total: 0.0,
        }
    }

    pub fn add(&mut self, other: &LossBreakdown) {
        self.l_cls_fb += other.l_cls_fb;
        self.l_cls_ac += other.l_cls_ac;
        self.l_g += other.l_g;
        self.l_mse += other.l_mse;
        self.total += other.total;
    }

    pub fn scale(&mut self, factor: f64) {
        self.l_cls_fb *= factor;
        self.l_cls_ac *= factor;
        self.l_g *= factor;
        self.l_mse *= factor;
        self.total *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.l_cls_fb.is_finite()
            && self.l_cls_ac.is_finite()
            && self.l_g.is_finite()
            && self.l_mse.is_finite()
            && self.total.is_finite()
    }
}

/// `total = w_fb * l_fb + w_ac * l_ac + lambda * (w_mse * l_mse + w_g * l_g)`
/// with toggle weights in `{0, 1}`.
pub fn total_loss(
    l_cls_fb: f64,
    l_cls_ac: f64,
    l_g: f64,
    l_mse: f64,
    lambda: f64,
    toggles: LossToggles,
) -> LossBreakdown {
    let w = |on: bool| if on { 1.0 } else { 0.0 };
    let total = w(toggles.cls_fb) * l_cls_fb
        + w(toggles.cls_ac) * l_cls_ac
        + lambda * (w(toggles.mse) * l_mse + w(toggles.guidance) * l_g);
    LossBreakdown {
        l_cls_fb,
        l_cls_ac,
        l_g,
        l_mse,
        total,
    }
}

/// Foreground target: the multi-hot label with the background entry forced
/// to zero, normalized to sum 1. Background target: one-hot on entry 0.
pub fn fb_targets(label: &VideoLabel) -> Result<(Vec<f64>, Vec<f64>), NumError> {
    let n = label.num_classes;
    let mut fg = vec![0.0; n + 1];
    let mut mass = 0.0;
    for c in 1..=n {
        fg[c] = label.y[c];
        mass += label.y[c];
    }
    if mass <= 0.0 {
        return Err(NumError::contract(
            "fb_targets",
            "label has no positive action class",
        ));
    }
    for v in fg.iter_mut() {
        *v /= mass;
    }
    let mut bg = vec![0.0; n + 1];
    bg[0] = 1.0;
    Ok((fg, bg))
}

/// Sum over both streams of `CE(p_fg, normalized label) + CE(p_bg,
/// background one-hot)`.
pub fn fb_classification_loss(
    p_fg_rgb: &[f64],
    p_bg_rgb: &[f64],
    p_fg_flow: &[f64],
    p_bg_flow: &[f64],
    label: &VideoLabel,
) -> Result<f64, NumError> {
    fb_classification_loss_grad(p_fg_rgb, p_bg_rgb, p_fg_flow, p_bg_flow, label).map(|(l, _)| l)
}

/// As [`fb_classification_loss`], also returning the gradients w.r.t. the
/// four logit vectors in argument order.
pub fn fb_classification_loss_grad(
    p_fg_rgb: &[f64],
    p_bg_rgb: &[f64],
    p_fg_flow: &[f64],
    p_bg_flow: &[f64],
    label: &VideoLabel,
) -> Result<(f64, [Vec<f64>; 4]), NumError> {
    let (t_fg, t_bg) = fb_targets(label)?;
    let (l1, g1) = softmax_cross_entropy(p_fg_rgb, &t_fg)?;
    let (l2, g2) = softmax_cross_entropy(p_bg_rgb, &t_bg)?;
    let (l3, g3) = softmax_cross_entropy(p_fg_flow, &t_fg)?;
    let (l4, g4) = softmax_cross_entropy(p_bg_flow, &t_bg)?;
    Ok((l1 + l2 + l3 + l4, [g1, g2, g3, g4]))
}

/// Targets for the three pooled action/context predictions, built from the
/// extended label: the foreground target splits each contained class evenly
/// between its action and context entries, the action target uses action
/// entries only, the context target context entries only. Each is normalized
/// to sum 1.
pub fn ac_targets(extended: &[f64]) -> Result<[Vec<f64>; 3], NumError> {
    let two_n = extended.len();
    let n = two_n / 2;
    let count: f64 = extended[..n].iter().sum();
    if count <= 0.0 {
        return Err(NumError::contract("ac_targets", "extended label has no class"));
    }
    let mut fg = vec![0.0; two_n];
    let mut act = vec![0.0; two_n];
    let mut ctx = vec![0.0; two_n];
    for c in 0..n {
        if extended[c] > 0.0 {
            fg[c] = 0.5 / count;
            fg[n + c] = 0.5 / count;
            act[c] = 1.0 / count;
            ctx[n + c] = 1.0 / count;
        }
    }
    Ok([fg, act, ctx])
}

/// Cross-entropy of the three pooled predictions against their extended-label
/// targets.
pub fn ac_classification_loss(
    pred_fg: &[f64],
    pred_a: &[f64],
    pred_c: &[f64],
    extended: &[f64],
) -> Result<f64, NumError> {
    ac_classification_loss_grad(pred_fg, pred_a, pred_c, extended).map(|(l, _)| l)
}

/// As [`ac_classification_loss`], also returning gradients w.r.t. the three
/// logit vectors.
pub fn ac_classification_loss_grad(
    pred_fg: &[f64],
    pred_a: &[f64],
    pred_c: &[f64],
    extended: &[f64],
) -> Result<(f64, [Vec<f64>; 3]), NumError> {
    let [t_fg, t_a, t_c] = ac_targets(extended)?;
    let (l1, g1) = softmax_cross_entropy(pred_fg, &t_fg)?;
    let (l2, g2) = softmax_cross_entropy(pred_a, &t_a)?;
    let (l3, g3) = softmax_cross_entropy(pred_c, &t_c)?;
    Ok((l1 + l2 + l3, [g1, g2, g3]))
}

/// Weighted binary logistic regression over samples `p` with binary labels
/// `q`: positive and negative terms are averaged separately. An empty side
/// contributes nothing.
pub fn weighted_logistic(p: &[f64], q: &[f64]) -> Result<f64, NumError> {
    weighted_logistic_grad(p, q).map(|(l, _)| l)
}

/// As [`weighted_logistic`], also returning `d loss / d p`. The clamp is
/// treated as a constant region (zero gradient outside `[CLAMP, 1-CLAMP]`).
pub fn weighted_logistic_grad(p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>), NumError> {
    if p.len() != q.len() {
        return Err(NumError::dimension(
            "weighted_logistic",
            format!("p len {} != q len {}", p.len(), q.len()),
        ));
    }
    let l_pos: f64 = q.iter().sum();
    let l_neg: f64 = q.len() as f64 - l_pos;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let clamped = p[i].clamp(CLAMP, 1.0 - CLAMP);
        let inside = p[i] >= CLAMP && p[i] <= 1.0 - CLAMP;
        if q[i] > 0.5 {
            if l_pos > 0.0 {
                loss -= clamped.ln() / l_pos;
                if inside {
                    grad[i] = -1.0 / (clamped * l_pos);
                }
            }
        } else if l_neg > 0.0 {
            loss -= (1.0 - clamped).ln() / l_neg;
            if inside {
                grad[i] = 1.0 / ((1.0 - clamped) * l_neg);
            }
        }
    }
    Ok((loss, grad))
}

/// Snippet index sets steering the action and context attentions. All
/// indices are 0-based snippet positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceSets {
    pub p_a: Vec<usize>,
    pub n_a: Vec<usize>,
    pub p_c: Vec<usize>,
    pub n_c: Vec<usize>,
}

/// Builds the guidance sets from the per-stream action attentions:
/// `P_a` where both streams exceed `theta_h`, `N_a` where both fall below
/// `theta_l`, `P_c` where rgb exceeds `theta_h` while flow falls below
/// `theta_l`, and `N_c = P_a + N_a`. Thresholds are compared as given;
/// callers comparing sigmoid-scaled attentions map them through
/// [`crate::model::attention_scale`] first.
pub fn build_guidance_sets(
    att_a_rgb: &[f64],
    att_a_flow: &[f64],
    theta_h: f64,
    theta_l: f64,
) -> GuidanceSets {
    debug_assert!(theta_l < theta_h);
    let t_len = att_a_rgb.len().min(att_a_flow.len());
    let mut sets = GuidanceSets {
        p_a: Vec::new(),
        n_a: Vec::new(),
        p_c: Vec::new(),
        n_c: Vec::new(),
    };
    for t in 0..t_len {
        let (r, f) = (att_a_rgb[t], att_a_flow[t]);
        if r > theta_h && f > theta_h {
            sets.p_a.push(t);
        }
        if r < theta_l && f < theta_l {
            sets.n_a.push(t);
        }
        if r > theta_h && f < theta_l {
            sets.p_c.push(t);
        }
    }
    sets.n_c = sets.p_a.iter().chain(sets.n_a.iter()).copied().collect();
    sets.n_c.sort_unstable();
    sets
}

/// Guidance loss: weighted logistic regression pulling the fused action
/// attention toward 1 on `P_a` / 0 on `N_a`, and the fused context attention
/// toward 1 on `P_c` / 0 on `N_c`. A term whose both sets are empty
/// contributes zero.
pub fn guidance_loss(att_a: &[f64], att_c: &[f64], sets: &GuidanceSets) -> f64 {
    guidance_loss_grad(att_a, att_c, sets).0
}

/// As [`guidance_loss`], also returning dense gradients w.r.t. the fused
/// attentions (zero outside the sets).
pub fn guidance_loss_grad(
    att_a: &[f64],
    att_c: &[f64],
    sets: &GuidanceSets,
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut loss = 0.0;
    let mut g_a = vec![0.0; att_a.len()];
    let mut g_c = vec![0.0; att_c.len()];
    loss += logistic_term(att_a, &sets.p_a, &sets.n_a, &mut g_a);
    loss += logistic_term(att_c, &sets.p_c, &sets.n_c, &mut g_c);
    (loss, g_a, g_c)
}

fn logistic_term(att: &[f64], pos: &[usize], neg: &[usize], grad: &mut [f64]) -> f64 {
    if pos.is_empty() && neg.is_empty() {
        return 0.0;
    }
    let samples: Vec<f64> = pos.iter().chain(neg.iter()).map(|&t| att[t]).collect();
    let labels: Vec<f64> = pos
        .iter()
        .map(|_| 1.0)
        .chain(neg.iter().map(|_| 0.0))
        .collect();
    let (loss, g) =
        weighted_logistic_grad(&samples, &labels).expect("lengths match by construction");
    for (i, &t) in pos.iter().chain(neg.iter()).enumerate() {
        grad[t] += g[i];
    }
    loss
}

/// Gaussian smoothing kernel: sigma 2 snippets, radius 3 sigma, normalized
/// to sum 1.
const SMOOTH_SIGMA: f64 = 2.0;
const SMOOTH_RADIUS: usize = 6;

/// Smooths a sequence with the Gaussian kernel under reflect padding
/// (mirrored about the boundary, edge sample included).
pub fn gaussian_smooth(seq: &[f64]) -> Vec<f64> {
    let t_len = seq.len();
    if t_len == 0 {
        return Vec::new();
    }
    let mut kernel = [0.0; 2 * SMOOTH_RADIUS + 1];
    let mut sum = 0.0;
    for (j, w) in kernel.iter_mut().enumerate() {
        let d = j as f64 - SMOOTH_RADIUS as f64;
        *w = (-d * d / (2.0 * SMOOTH_SIGMA * SMOOTH_SIGMA)).exp();
        sum += *w;
    }
    for w in kernel.iter_mut() {
        *w /= sum;
    }
    let reflect = |mut m: isize| -> usize {
        loop {
            if m < 0 {
                m = -m - 1;
            } else if m >= t_len as isize {
                m = 2 * t_len as isize - 1 - m;
            } else {
                return m as usize;
            }
        }
    };
    (0..t_len)
        .map(|t| {
            let mut acc = 0.0;
            for (j, &w) in kernel.iter().enumerate() {
                let m = t as isize + j as isize - SMOOTH_RADIUS as isize;
                acc += w * seq[reflect(m)];
            }
            acc
        })
        .collect()
}

/// Mean squared error between the fused foreground attention and the
/// Gaussian-smoothed snippet attention. The target is a constant: no
/// gradient flows back through the smoothing.
pub fn mse_loss(att_fg: &[f64], smoothed_sap: &[f64]) -> Result<f64, NumError> {
    mse_loss_grad(att_fg, smoothed_sap).map(|(l, _)| l)
}

/// As [`mse_loss`], also returning the gradient w.r.t. `att_fg`.
pub fn mse_loss_grad(att_fg: &[f64], smoothed_sap: &[f64]) -> Result<(f64, Vec<f64>), NumError> {
    if att_fg.len() != smoothed_sap.len() {
        return Err(NumError::dimension(
            "mse_loss",
            format!("lengths differ: {} vs {}", att_fg.len(), smoothed_sap.len()),
        ));
    }
    let t_len = att_fg.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; att_fg.len()];
    for i in 0..att_fg.len() {
        let diff = att_fg[i] - smoothed_sap[i];
        loss += diff * diff;
        grad[i] = 2.0 * diff / t_len;
    }
    Ok((loss / t_len, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label(n: usize, classes: &[usize]) -> VideoLabel {
        VideoLabel::new(n, classes).unwrap()
    }

    #[test]
    fn fb_targets_normalize_multi_hot() {
        // two-class video with N=3: foreground target [0, .5, .5, 0]
        let (fg, bg) = fb_targets(&label(3, &[1, 2])).unwrap();
        assert_eq!(fg, vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(bg, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn fb_loss_saturated_is_tiny() {
        let lb = label(3, &[2]);
        let fg = vec![-20.0, -20.0, 20.0, -20.0];
        let bg = vec![20.0, -20.0, -20.0, -20.0];
        let l = fb_classification_loss(&fg, &bg, &fg, &bg, &lb).unwrap();
        assert!(l < 1e-6, "saturated loss {l}");
    }

    #[test]
    fn fb_loss_uniform_is_ln4_per_term() {
        let lb = label(3, &[1]);
        let z = vec![0.0; 4];
        let l = fb_classification_loss(&z, &z, &z, &z, &lb).unwrap();
        assert!((l - 4.0 * 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ac_targets_follow_label_extension_scheme() {
        // N=2, video contains class 1
        let lb = label(2, &[1]);
        let extended = crate::model::extend_label(&lb);
        let [fg, a, c] = ac_targets(&extended).unwrap();
        assert_eq!(fg, vec![0.5, 0.0, 0.5, 0.0]);
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn ac_targets_split_across_two_classes() {
        let lb = label(2, &[1, 2]);
        let extended = crate::model::extend_label(&lb);
        let [fg, a, c] = ac_targets(&extended).unwrap();
        assert_eq!(fg, vec![0.25, 0.25, 0.25, 0.25]);
        assert_eq!(a, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn ac_loss_saturated_is_tiny() {
        let lb = label(2, &[1]);
        let extended = crate::model::extend_label(&lb);
        let fg = vec![20.0, -20.0, 20.0, -20.0];
        let a = vec![40.0, -20.0, -20.0, -20.0];
        let c = vec![-20.0, -20.0, 40.0, -20.0];
        let l = ac_classification_loss(&fg, &a, &c, &extended).unwrap();
        // the fg head splits mass between two entries, so allow its ln 2 floor
        let (l_a, _) = softmax_cross_entropy(&a, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(l_a < 1e-6);
        assert!(l < std::f64::consts::LN_2 + 1e-6, "loss {l}");
    }

    #[test]
    fn weighted_logistic_perfect_prediction() {
        let p = vec![1.0, 1.0, 0.0];
        let q = vec![1.0, 1.0, 0.0];
        let l = weighted_logistic(&p, &q).unwrap();
        assert!(l < 1e-5, "clamped perfect prediction should be ~0, got {l}");
    }

    #[test]
    fn weighted_logistic_at_half_is_two_ln_two() {
        for q in [vec![1.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]] {
            let p = vec![0.5; q.len()];
            let l = weighted_logistic(&p, &q).unwrap();
            assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_logistic_drops_empty_side() {
        let p = vec![0.2, 0.4];
        let q = vec![0.0, 0.0];
        let expected = -((0.8f64).ln() + (0.6f64).ln()) / 2.0;
        let l = weighted_logistic(&p, &q).unwrap();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn guidance_sets_hand_case() {
        // rgb [.9,.9,.1], flow [.9,.1,.1], theta_h .7, theta_l .3
        let sets = build_guidance_sets(&[0.9, 0.9, 0.1], &[0.9, 0.1, 0.1], 0.7, 0.3);
        assert_eq!(sets.p_a, vec![0]);
        assert_eq!(sets.n_a, vec![2]);
        assert_eq!(sets.p_c, vec![1]);
        assert_eq!(sets.n_c, vec![0, 2]);
    }

    #[test]
    fn guidance_sets_empty_in_the_middle_band() {
        let a = vec![0.5; 4];
        let sets = build_guidance_sets(&a, &a, 0.7, 0.3);
        assert!(sets.p_a.is_empty() && sets.n_a.is_empty());
        assert!(sets.p_c.is_empty() && sets.n_c.is_empty());
    }

    #[test]
    fn guidance_loss_perfect_separation_is_tiny() {
        let att_a = vec![1.0, 0.0, 0.5];
        let att_c = vec![0.0, 0.0, 1.0];
        let sets = GuidanceSets {
            p_a: vec![0],
            n_a: vec![1],
            p_c: vec![2],
            n_c: vec![0, 1],
        };
        let l = guidance_loss(&att_a, &att_c, &sets);
        assert!(l < 1e-5, "perfect separation loss {l}");
    }

    #[test]
    fn guidance_loss_empty_sets_is_zero() {
        let sets = GuidanceSets {
            p_a: vec![],
            n_a: vec![],
            p_c: vec![],
            n_c: vec![],
        };
        assert_eq!(guidance_loss(&[0.5; 3], &[0.5; 3], &sets), 0.0);
    }

    #[test]
    fn guidance_loss_half_attention_with_empty_context_term() {
        let att = vec![0.5; 4];
        let sets = GuidanceSets {
            p_a: vec![0, 1],
            n_a: vec![2],
            p_c: vec![],
            n_c: vec![],
        };
        let l = guidance_loss(&att, &att, &sets);
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn smoothing_preserves_constants() {
        for t_len in [1usize, 3, 5, 20] {
            let seq = vec![0.37; t_len];
            let smoothed = gaussian_smooth(&seq);
            for v in smoothed {
                assert!((v - 0.37).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothing_matches_direct_convolution_on_impulse() {
        let seq = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        let smoothed = gaussian_smooth(&seq);
        // independent direct evaluation of the same kernel + reflection rule
        let sigma = 2.0f64;
        let radius = 6isize;
        let weights: Vec<f64> = (-radius..=radius)
            .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let wsum: f64 = weights.iter().sum();
        let t_len = seq.len() as isize;
        let reflect = |mut m: isize| -> usize {
            loop {
                if m < 0 {
                    m = -m - 1;
                } else if m >= t_len {
                    m = 2 * t_len - 1 - m;
                } else {
                    return m as usize;
                }
            }
        };
        for t in 0..seq.len() {
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let m = t as isize + j as isize - radius;
                acc += w / wsum * seq[reflect(m)];
            }
            assert!((smoothed[t] - acc).abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn mse_loss_examples() {
        let target = gaussian_smooth(&[0.1, 0.9, 0.5, 0.2]);
        assert!(mse_loss(&target, &target).unwrap() < 1e-30);
        let att = vec![0.4, 0.4];
        let l = mse_loss(&att, &[0.2, 0.2]).unwrap();
        assert!((l - 0.04).abs() < 1e-12);
    }

    #[test]
    fn total_loss_composition() {
        let t = total_loss(1.0, 0.5, 0.25, 0.25, 1.0, LossToggles::default());
        assert_eq!(t.total, 2.0);
        let t0 = total_loss(1.0, 0.5, 0.25, 0.25, 0.0, LossToggles::default());
        assert_eq!(t0.total, 1.5);
        let z = total_loss(0.0, 0.0, 0.0, 0.0, 1.0, LossToggles::default());
        assert_eq!(z.total, 0.0);
    }

    #[test]
    fn total_loss_is_affine_in_lambda() {
        let cls = 1.3;
        let t1 = total_loss(1.0, 0.3, 0.2, 0.4, 1.0, LossToggles::default());
        let t2 = total_loss(1.0, 0.3, 0.2, 0.4, 2.0, LossToggles::default());
        assert!(((t2.total - cls) - 2.0 * (t1.total - cls)).abs() < 1e-12);
    }

    #[test]
    fn toggles_cannot_all_be_disabled() {
        let t = LossToggles {
            cls_fb: false,
            cls_ac: false,
            guidance: false,
            mse: false,
        };
        assert!(t.validate().is_err());
        assert!(LossToggles::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn logistic_invariant_to_permutation_and_duplication(
            vals in proptest::collection::vec((0.01f64..0.99, 0..2u8), 2..12)
        ) {
            let p: Vec<f64> = vals.iter().map(|&(v, _)| v).collect();
            let q: Vec<f64> = vals.iter().map(|&(_, b)| f64::from(b % 2)).collect();
            let base = weighted_logistic(&p, &q).unwrap();

            let mut rev_p = p.clone();
            let mut rev_q = q.clone();
            rev_p.reverse();
            rev_q.reverse();
            let permuted = weighted_logistic(&rev_p, &rev_q).unwrap();
            prop_assert!((base - permuted).abs() < 1e-9);

            let dup_p: Vec<f64> = p.iter().chain(p.iter()).copied().collect();
            let dup_q: Vec<f64> = q.iter().chain(q.iter()).copied().collect();
            let duplicated = weighted_logistic(&dup_p, &dup_q).unwrap();
            prop_assert!((base - duplicated).abs() < 1e-9);
        }

        #[test]
        fn guidance_decreases_as_positive_attention_rises(
            base in 0.1f64..0.8,
            bump in 0.01f64..0.15,
        ) {
            let sets = GuidanceSets {
                p_a: vec![0, 1],
                n_a: vec![2],
                p_c: vec![],
                n_c: vec![],
            };
            let att_c = vec![0.5; 3];
            let low = vec![base, base, 0.2];
            let high = vec![base + bump, base + bump, 0.2];
            let l_low = guidance_loss(&low, &att_c, &sets);
            let l_high = guidance_loss(&high, &att_c, &sets);
            prop_assert!(l_high < l_low);
        }
    }
}
