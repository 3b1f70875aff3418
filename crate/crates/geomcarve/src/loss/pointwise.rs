//! Pointwise supervision terms: weighted regression, spatial and temporal
//! gradient losses, confidence weighting, and the fixed inverse-depth weight
//! map.

use crate::error::{Error, Result};
use crate::grid::{check_mask_shape, check_same_shape, Grid, ScalarGrid, ValidMask, VecGrid};
use crate::util::pairwise_sum;

use super::{check_weight_shape, require_valid_elements, LossGradients, LossReport, WeightMap};

/// Default lower clamp (meters) for the inverse-depth weight map.
pub const DEFAULT_DEPTH_CLAMP: f64 = 1e-3;

/// Configuration for [`loss_confidence_weighted`]: the strength of the
/// log-confidence regularizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceConfig {
    pub alpha: f64,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self { alpha: 0.2 }
    }
}

/// Sign with a zero at zero, the subgradient choice used at L1 kinks.
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fixed weight map 1 / max(depth, clamp_min) on valid pixels, 0 elsewhere.
/// The clamp keeps near-zero (or garbage) depth from producing unbounded
/// weights, so this never fails on finite grids.
pub fn weight_inverse_depth(
    gt_depth: &ScalarGrid,
    mask: &ValidMask,
    clamp_min: f64,
) -> Result<WeightMap> {
    check_mask_shape(gt_depth, mask, "inverse-depth weights")?;
    if !(clamp_min > 0.0 && clamp_min.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "inverse-depth clamp must be positive and finite, got {clamp_min}"
        )));
    }
    let values = gt_depth
        .values
        .iter()
        .enumerate()
        .map(|(p, &d)| if mask.is_set(p) { 1.0 / d.max(clamp_min) } else { 0.0 })
        .collect();
    WeightMap::new(ScalarGrid::new(gt_depth.height, gt_depth.width, values)?)
}

/// Per-pixel residual L2 norm over channels, with an input-finiteness check.
fn residual_norm<G: Grid>(pred: &G, gt: &G, p: usize, buf: &mut [f64], what: &str) -> Result<f64> {
    let mut sq = 0.0;
    for (ch, slot) in buf.iter_mut().enumerate() {
        let r = pred.value(p, ch) - gt.value(p, ch);
        if !r.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{what}: non-finite value on a valid pixel"
            )));
        }
        *slot = r;
        sq += r * r;
    }
    Ok(sq.sqrt())
}

/// Weighted regression loss: the mean over valid pixels of
/// w_p * ||pred_p - gt_p|| (L2 norm over channels, absolute value for
/// scalars). The gradient with respect to the prediction is returned.
pub fn loss_reg<G: Grid>(
    pred: &G,
    gt: &G,
    weights: &WeightMap,
    mask: &ValidMask,
) -> Result<LossReport> {
    check_same_shape(pred, gt, "regression loss")?;
    check_mask_shape(pred, mask, "regression loss")?;
    check_weight_shape(weights, mask, "regression loss")?;
    let c = pred.channels();
    let mut grad = VecGrid::filled(pred.height(), pred.width(), c, 0.0);
    let mut buf = vec![0.0; c];
    let mut terms = Vec::new();
    for p in 0..mask.flags.len() {
        if !mask.is_set(p) {
            continue;
        }
        let w = weights.get(p);
        let norm = residual_norm(pred, gt, p, &mut buf, "regression loss")?;
        terms.push(w * norm);
        if norm > 0.0 {
            for ch in 0..c {
                grad.values[p * c + ch] = w * buf[ch] / norm;
            }
        }
    }
    require_valid_elements(terms.len(), "regression loss")?;
    let n = terms.len();
    for g in &mut grad.values {
        *g /= n as f64;
    }
    Ok(LossReport {
        name: "reg",
        value: pairwise_sum(&terms) / n as f64,
        element_count: n,
        gradients: Some(LossGradients::Pred(grad)),
    })
}

/// Spatial gradient loss: forward differences along x and y, each term the
/// weighted residual-difference norm. A difference term contributes only
/// when both of its pixels are valid; its weight comes from the anchor
/// (left or top) pixel. x- and y-terms are pooled into one mean.
pub fn loss_spatial_gradient<G: Grid>(
    pred: &G,
    gt: &G,
    weights: &WeightMap,
    mask: &ValidMask,
) -> Result<LossReport> {
    check_same_shape(pred, gt, "spatial gradient loss")?;
    check_mask_shape(pred, mask, "spatial gradient loss")?;
    check_weight_shape(weights, mask, "spatial gradient loss")?;
    let (h, w_img, c) = (pred.height(), pred.width(), pred.channels());
    let mut grad = VecGrid::filled(h, w_img, c, 0.0);
    let mut terms = Vec::new();

    let mut edge = |a: usize, b: usize, w: f64, grad: &mut VecGrid| -> Result<()> {
        let mut sq = 0.0;
        let mut buf = vec![0.0; c];
        for (ch, slot) in buf.iter_mut().enumerate() {
            let r = (pred.value(b, ch) - pred.value(a, ch)) - (gt.value(b, ch) - gt.value(a, ch));
            if !r.is_finite() {
                return Err(Error::InvalidInput(
                    "spatial gradient loss: non-finite value on a valid pixel".into(),
                ));
            }
            *slot = r;
            sq += r * r;
        }
        let norm = sq.sqrt();
        terms.push(w * norm);
        if norm > 0.0 {
            for ch in 0..c {
                let u = w * buf[ch] / norm;
                grad.values[b * c + ch] += u;
                grad.values[a * c + ch] -= u;
            }
        }
        Ok(())
    };

    for row in 0..h {
        for col in 0..w_img {
            let p = row * w_img + col;
            if !mask.is_set(p) {
                continue;
            }
            if col + 1 < w_img && mask.is_set(p + 1) {
                edge(p, p + 1, weights.get(p), &mut grad)?;
            }
            if row + 1 < h && mask.is_set(p + w_img) {
                edge(p, p + w_img, weights.get(p), &mut grad)?;
            }
        }
    }
    require_valid_elements(terms.len(), "spatial gradient loss (difference terms)")?;
    let n = terms.len();
    for g in &mut grad.values {
        *g /= n as f64;
    }
    Ok(LossReport {
        name: "sg",
        value: pairwise_sum(&terms) / n as f64,
        element_count: n,
        gradients: Some(LossGradients::Pred(grad)),
    })
}

/// Temporal gradient loss: forward differences between consecutive frames at
/// co-located pixels, valid when the pixel is valid in both frames, weighted
/// from the earlier (anchor) frame, pooled into one mean across the sequence.
pub fn loss_temporal_gradient<G: Grid>(
    pred: &[G],
    gt: &[G],
    weights: &[WeightMap],
    masks: &[ValidMask],
) -> Result<LossReport> {
    if pred.len() != gt.len() || weights.len() != pred.len() || masks.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "temporal gradient loss: {} pred frames, {} gt frames, {} weight maps, {} masks",
            pred.len(),
            gt.len(),
            weights.len(),
            masks.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "temporal gradient loss needs at least 2 frames, got {}",
            pred.len()
        )));
    }
    let c = pred[0].channels();
    for t in 0..pred.len() {
        check_same_shape(&pred[t], &gt[t], "temporal gradient loss")?;
        check_same_shape(&pred[t], &pred[0], "temporal gradient loss (frame sizes)")?;
        check_mask_shape(&pred[t], &masks[t], "temporal gradient loss")?;
        check_weight_shape(&weights[t], &masks[t], "temporal gradient loss")?;
    }
    let pixels = pred[0].pixels();
    let mut grads: Vec<VecGrid> = pred
        .iter()
        .map(|g| VecGrid::filled(g.height(), g.width(), c, 0.0))
        .collect();
    let mut terms = Vec::new();
    let mut buf = vec![0.0; c];
    for t in 0..pred.len() - 1 {
        for p in 0..pixels {
            if !(masks[t].is_set(p) && masks[t + 1].is_set(p)) {
                continue;
            }
            let w = weights[t].get(p);
            let mut sq = 0.0;
            for (ch, slot) in buf.iter_mut().enumerate() {
                let r = (pred[t + 1].value(p, ch) - pred[t].value(p, ch))
                    - (gt[t + 1].value(p, ch) - gt[t].value(p, ch));
                if !r.is_finite() {
                    return Err(Error::InvalidInput(
                        "temporal gradient loss: non-finite value on a valid pixel".into(),
                    ));
                }
                *slot = r;
                sq += r * r;
            }
            let norm = sq.sqrt();
            terms.push(w * norm);
            if norm > 0.0 {
                for ch in 0..c {
                    let u = w * buf[ch] / norm;
                    grads[t + 1].values[p * c + ch] += u;
                    grads[t].values[p * c + ch] -= u;
                }
            }
        }
    }
    require_valid_elements(terms.len(), "temporal gradient loss (difference terms)")?;
    let n = terms.len();
    for g in &mut grads {
        for v in &mut g.values {
            *v /= n as f64;
        }
    }
    Ok(LossReport {
        name: "tg",
        value: pairwise_sum(&terms) / n as f64,
        element_count: n,
        gradients: Some(LossGradients::PredSeq(grads)),
    })
}

/// Confidence-weighted regression: the regression loss with the learnable
/// confidence map as its weights, plus the mean |alpha * log conf| penalty
/// that keeps the confidence from collapsing to zero. Gradients are returned
/// for both the prediction and the confidence map. Confidence must be
/// strictly positive on valid pixels.
pub fn loss_confidence_weighted<G: Grid>(
    pred: &G,
    gt: &G,
    conf: &WeightMap,
    mask: &ValidMask,
    cfg: &ConfidenceConfig,
) -> Result<LossReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "confidence alpha must be positive and finite, got {}",
            cfg.alpha
        )));
    }
    check_same_shape(pred, gt, "confidence-weighted loss")?;
    check_mask_shape(pred, mask, "confidence-weighted loss")?;
    check_weight_shape(conf, mask, "confidence-weighted loss")?;
    let c = pred.channels();
    let mut grad_pred = VecGrid::filled(pred.height(), pred.width(), c, 0.0);
    let mut grad_conf = ScalarGrid::filled(pred.height(), pred.width(), 0.0);
    let mut buf = vec![0.0; c];
    let mut terms = Vec::new();
    for p in 0..mask.flags.len() {
        if !mask.is_set(p) {
            continue;
        }
        let cp = conf.get(p);
        if !(cp > 0.0) {
            return Err(Error::InvalidInput(format!(
                "confidence-weighted loss: nonpositive confidence {cp} on a valid pixel"
            )));
        }
        let norm = residual_norm(pred, gt, p, &mut buf, "confidence-weighted loss")?;
        let log_c = cp.ln();
        terms.push(cp * norm + cfg.alpha * log_c.abs());
        if norm > 0.0 {
            for ch in 0..c {
                grad_pred.values[p * c + ch] = cp * buf[ch] / norm;
            }
        }
        grad_conf.values[p] = norm + cfg.alpha * sgn(log_c) / cp;
    }
    require_valid_elements(terms.len(), "confidence-weighted loss")?;
    let n = terms.len();
    for g in &mut grad_pred.values {
        *g /= n as f64;
    }
    for g in &mut grad_conf.values {
        *g /= n as f64;
    }
    Ok(LossReport {
        name: "conf",
        value: pairwise_sum(&terms) / n as f64,
        element_count: n,
        gradients: Some(LossGradients::PredAndConfidence {
            pred: grad_pred,
            confidence: grad_conf,
        }),
    })
}
