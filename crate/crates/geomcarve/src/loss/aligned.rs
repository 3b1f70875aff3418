//! Alignment-invariant losses (per-frame and per-region scale-shift), the
//! camera-parameter loss, and the depth/point-map consistency loss.

use nalgebra::Vector3;

use crate::align::{solve_frame_scale_shift, solve_scale_shift_pixels, SphereRegion};
use crate::camera::{fov_to_intrinsics, quat_to_rotmat_jacobian, CameraParams};
use crate::error::{Error, Result};
use crate::grid::{check_mask_shape, check_same_shape, Grid, ScalarGrid, ValidMask, VecGrid};
use crate::util::{pairwise_mean, pairwise_sum};

use super::pointwise::sgn;
use super::{check_weight_shape, require_valid_elements, LossGradients, LossReport, WeightMap};

/// Scale/shift-invariant regression: each frame is first fitted to ground
/// truth with the robust per-frame scale-shift solver (the fit itself is not
/// differentiated through), then the weighted residual-norm mean is taken per
/// frame and averaged over frames. A frame that cannot be fitted names its
/// index in the error.
pub fn loss_frame_aligned<G: Grid>(
    pred: &[G],
    gt: &[G],
    weights: &[WeightMap],
    masks: &[ValidMask],
) -> Result<LossReport> {
    if pred.len() != gt.len() || weights.len() != pred.len() || masks.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "frame-aligned loss: {} pred frames, {} gt frames, {} weight maps, {} masks",
            pred.len(),
            gt.len(),
            weights.len(),
            masks.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput(
            "frame-aligned loss needs at least one frame".into(),
        ));
    }
    let mut frame_values = Vec::with_capacity(pred.len());
    for t in 0..pred.len() {
        let fit = solve_frame_scale_shift(&pred[t], &gt[t], &weights[t], &masks[t]).map_err(
            |e| match e {
                Error::RankDeficientAlignment(msg) => {
                    Error::RankDeficientAlignment(format!("frame {t}: {msg}"))
                }
                Error::InvalidInput(msg) => Error::InvalidInput(format!("frame {t}: {msg}")),
                other => other,
            },
        )?;
        let c = pred[t].channels();
        let mut terms = Vec::new();
        for p in 0..masks[t].flags.len() {
            if !masks[t].is_set(p) {
                continue;
            }
            let mut sq = 0.0;
            for ch in 0..c {
                let r = fit.scale * pred[t].value(p, ch) + fit.shift[ch] - gt[t].value(p, ch);
                sq += r * r;
            }
            terms.push(weights[t].get(p) * sq.sqrt());
        }
        frame_values.push(pairwise_sum(&terms) / terms.len() as f64);
    }
    Ok(LossReport {
        name: "frame_aligned",
        value: pairwise_mean(&frame_values),
        element_count: pred.len(),
        gradients: None,
    })
}

/// Locally scale/shift-invariant regression over sampled spherical regions:
/// each region is fitted and scored independently (weighted residual-norm
/// mean over its member pixels), and the per-region values are averaged.
/// Regions with fewer than two valid members, or whose fit is rank-deficient,
/// are skipped with a warning on stderr; it is an error for every region to
/// be skipped.
pub fn loss_sphere_aligned<G: Grid>(
    pred: &G,
    gt: &G,
    weights: &WeightMap,
    mask: &ValidMask,
    regions: &[SphereRegion],
) -> Result<LossReport> {
    check_same_shape(pred, gt, "sphere-aligned loss")?;
    check_mask_shape(pred, mask, "sphere-aligned loss")?;
    check_weight_shape(weights, mask, "sphere-aligned loss")?;
    if regions.is_empty() {
        return Err(Error::InvalidInput(
            "sphere-aligned loss needs at least one region".into(),
        ));
    }
    let c = pred.channels();
    let mut region_values = Vec::new();
    for region in regions {
        let used: Vec<usize> = region
            .members
            .iter()
            .copied()
            .filter(|&p| p < mask.flags.len() && mask.is_set(p))
            .collect();
        if used.len() < 2 {
            eprintln!(
                "warning: sphere region at pixel {} skipped: {} valid members (need 2)",
                region.center_pixel,
                used.len()
            );
            continue;
        }
        let fit = match solve_scale_shift_pixels(pred, gt, weights, &used, "sphere-aligned loss")
        {
            Ok(fit) => fit,
            Err(Error::RankDeficientAlignment(msg)) => {
                eprintln!(
                    "warning: sphere region at pixel {} skipped: {msg}",
                    region.center_pixel
                );
                continue;
            }
            Err(other) => return Err(other),
        };
        let mut terms = Vec::with_capacity(used.len());
        for &p in &used {
            let mut sq = 0.0;
            for ch in 0..c {
                let r = fit.scale * pred.value(p, ch) + fit.shift[ch] - gt.value(p, ch);
                sq += r * r;
            }
            terms.push(weights.get(p) * sq.sqrt());
        }
        region_values.push(pairwise_sum(&terms) / terms.len() as f64);
    }
    if region_values.is_empty() {
        return Err(Error::RankDeficientAlignment(format!(
            "all {} sphere regions were skipped (fewer than two valid members or a degenerate fit)",
            regions.len()
        )));
    }
    Ok(LossReport {
        name: "sphere_aligned",
        value: pairwise_mean(&region_values),
        element_count: region_values.len(),
        gradients: None,
    })
}

/// Flattens a camera into the 9-vector [translation(3), quaternion(4),
/// fov(2)] supervised by the camera loss.
fn camera_vector(cam: &CameraParams) -> [f64; 9] {
    [
        cam.translation[0],
        cam.translation[1],
        cam.translation[2],
        cam.quaternion[0],
        cam.quaternion[1],
        cam.quaternion[2],
        cam.quaternion[3],
        cam.fov[0],
        cam.fov[1],
    ]
}

/// Camera-parameter loss: the per-frame L1 distance between predicted and
/// ground-truth 9-vectors [translation, quaternion, fov], averaged over
/// frames. Because q and -q encode the same rotation, the predicted
/// quaternion is flipped when its dot product with ground truth is negative,
/// so either sign of a perfect prediction scores zero. Gradients are with
/// respect to the raw (unflipped) predicted parameters.
pub fn loss_camera(pred: &[CameraParams], gt: &[CameraParams]) -> Result<LossReport> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "camera loss: {} pred cameras vs {} gt cameras",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("camera loss needs at least one camera".into()));
    }
    let n = pred.len() as f64;
    let mut frame_values = Vec::with_capacity(pred.len());
    let mut grads = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gt) {
        let pv = camera_vector(p);
        let gv = camera_vector(g);
        let dot: f64 = (3..7).map(|k| pv[k] * gv[k]).sum();
        let sigma = if dot < 0.0 { -1.0 } else { 1.0 };
        let mut frame = 0.0;
        let mut grad = [0.0; 9];
        for k in 0..9 {
            let flip = if (3..7).contains(&k) { sigma } else { 1.0 };
            let r = flip * pv[k] - gv[k];
            frame += r.abs();
            grad[k] = flip * sgn(r) / n;
        }
        frame_values.push(frame);
        grads.push(grad);
    }
    Ok(LossReport {
        name: "camera",
        value: pairwise_mean(&frame_values),
        element_count: pred.len(),
        gradients: Some(LossGradients::Cameras(grads)),
    })
}

/// Consistency between the two geometry heads of one frame: unprojects the
/// predicted depth through the predicted camera and compares it with the
/// predicted point map, as the mean over valid pixels of the elementwise
/// absolute difference summed over the three coordinates. Returns gradients
/// with respect to the point map, the depth map, and the camera 9-vector
/// [translation, quaternion, fov].
pub fn loss_consistency(
    points: &VecGrid,
    depth: &ScalarGrid,
    camera: &CameraParams,
    mask: &ValidMask,
) -> Result<LossReport> {
    if points.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "consistency loss expects 3-channel points, got {} channels",
            points.channels
        )));
    }
    if points.height != depth.height || points.width != depth.width {
        return Err(Error::ShapeMismatch(format!(
            "consistency loss: {}x{} points vs {}x{} depth",
            points.height, points.width, depth.height, depth.width
        )));
    }
    check_mask_shape(depth, mask, "consistency loss")?;
    let bad = (0..depth.pixels())
        .filter(|&p| mask.is_set(p) && !(depth.values[p] > 0.0 && depth.values[p].is_finite()))
        .count();
    if bad > 0 {
        return Err(Error::NonPositiveDepth { count: bad });
    }

    let (h, w) = (depth.height, depth.width);
    let k = fov_to_intrinsics(&camera.fov, w, h)?;
    let (r, jac) = quat_to_rotmat_jacobian(&camera.quaternion)?;
    let t = camera.center();
    // d(1/fx)/d(theta_x) with fx = W / (2 tan(theta_x / 2)), and likewise y.
    let dinvfx = 1.0 / ((camera.fov[0] / 2.0).cos().powi(2) * w as f64);
    let dinvfy = 1.0 / ((camera.fov[1] / 2.0).cos().powi(2) * h as f64);

    let mut grad_points = VecGrid::filled(h, w, 3, 0.0);
    let mut grad_depth = ScalarGrid::filled(h, w, 0.0);
    let mut grad_cam = [0.0; 9];
    let mut terms = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let p = row * w + col;
            if !mask.is_set(p) {
                continue;
            }
            let xyz = points.pixel(p);
            if xyz.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(
                    "consistency loss: non-finite point on a valid pixel".into(),
                ));
            }
            let d = depth.values[p];
            let ux = col as f64 + 0.5 - k.cx;
            let uy = row as f64 + 0.5 - k.cy;
            let ray = Vector3::new(ux / k.fx, uy / k.fy, 1.0);
            let cam_pt = ray * d;
            let world = r * cam_pt + t;
            let dir = r * ray;
            let mut term = 0.0;
            let mut depth_g = 0.0;
            for ch in 0..3 {
                let diff = world[ch] - xyz[ch];
                let s = sgn(diff);
                term += diff.abs();
                grad_points.values[p * 3 + ch] = -s;
                grad_cam[ch] += s;
                depth_g += s * dir[ch];
                for (qk, dm) in jac.iter().enumerate() {
                    grad_cam[3 + qk] += s * (dm * cam_pt)[ch];
                }
                grad_cam[7] += s * r[(ch, 0)] * d * ux * dinvfx;
                grad_cam[8] += s * r[(ch, 1)] * d * uy * dinvfy;
            }
            grad_depth.values[p] = depth_g;
            terms.push(term);
        }
    }
    require_valid_elements(terms.len(), "consistency loss")?;
    let n = terms.len() as f64;
    for g in &mut grad_points.values {
        *g /= n;
    }
    for g in &mut grad_depth.values {
        *g /= n;
    }
    for g in &mut grad_cam {
        *g /= n;
    }
    Ok(LossReport {
        name: "consistency",
        value: pairwise_sum(&terms) / n,
        element_count: terms.len(),
        gradients: Some(LossGradients::Consistency {
            points: grad_points,
            depth: grad_depth,
            camera: grad_cam,
        }),
    })
}
