//! Alignment solvers that reconcile scale-ambiguous predictions with ground
//! truth: a per-sequence L1-optimal scale, a robust per-frame scale-shift, a
//! sphere-region sampler, and the Umeyama similarity solver used for point
//! clouds and trajectories.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::grid::{check_mask_shape, check_same_shape, Grid, ScalarGrid, ValidMask, VecGrid};
use crate::loss::WeightMap;
use crate::sample::SequenceSample;
use crate::util::{pairwise_sum, quantile};

/// Affine alignment y ~ scale * x + shift with one shift entry per channel.
/// On geometry data the solved scale is positive; anti-correlated inputs can
/// legitimately produce a negative one, which downstream losses treat as an
/// ordinary constant.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleShift {
    pub scale: f64,
    pub shift: Vec<f64>,
}

impl ScaleShift {
    /// Applies the map to one element (channel values of a pixel).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).map(|(xi, bi)| self.scale * xi + bi).collect()
    }
}

/// Similarity transform y = scale * R x + t with R a proper rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        let v = self.scale * (self.rotation * Vector3::new(p[0], p[1], p[2])) + self.translation;
        [v.x, v.y, v.z]
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }
}

/// A spherical neighborhood of a point map: a valid center pixel, a radius,
/// and the valid pixels whose points fall inside the sphere (the center is
/// always a member).
#[derive(Clone, Debug)]
pub struct SphereRegion {
    pub center_pixel: usize,
    pub center: [f64; 3],
    pub radius: f64,
    pub members: Vec<usize>,
}

/// Trajectory alignment: the solved similarity plus per-frame camera-center
/// residuals in the ground-truth frame.
#[derive(Clone, Debug)]
pub struct TrajectoryAlignment {
    pub similarity: Similarity,
    pub residuals: Vec<f64>,
}

/// Weighted median with the lower-median convention: the smallest value whose
/// cumulative weight reaches half the total. Zero-weight entries are ignored.
pub fn weighted_median(pairs: &[(f64, f64)]) -> Result<f64> {
    let mut kept: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(_, w)| w > 0.0).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateScale("no positively weighted elements".into()));
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairwise_sum(&kept.iter().map(|&(_, w)| w).collect::<Vec<_>>());
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateScale(format!("total median weight {total}")));
    }
    let half = total / 2.0;
    let mut acc = 0.0;
    for &(v, w) in &kept {
        acc += w;
        if acc >= half {
            return Ok(v);
        }
    }
    Ok(kept.last().unwrap().0)
}

/// Per-sequence scale aligning predicted depth to ground truth: the weighted
/// median of per-pixel ratios gt/pred over all valid pixels of all frames.
///
/// Median weights are w * |pred|, which makes the result the exact minimizer
/// of sum w |s * pred - gt| (pixels with pred = 0 contribute a constant and
/// drop out). Callers apply the returned scale jointly to depth, points and
/// camera translation. Ground-truth depth must be positive on the mask.
pub fn solve_sequence_scale(
    pred: &SequenceSample,
    gt: &SequenceSample,
    weights: &[WeightMap],
) -> Result<f64> {
    if pred.len() != gt.len() || weights.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "sequence scale: {} pred frames, {} gt frames, {} weight maps",
            pred.len(),
            gt.len(),
            weights.len()
        )));
    }
    let masks = pred.shared_masks(gt)?;
    let mut pairs = Vec::new();
    for ((fp, fg), (w, mask)) in pred
        .frames()
        .iter()
        .zip(gt.frames())
        .zip(weights.iter().zip(&masks))
    {
        pairs.extend(depth_ratio_pairs(&fp.depth, &fg.depth, w, mask, "sequence scale")?);
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateScale(
            "all predictions are zero or carry zero weight".into(),
        ));
    }
    weighted_median(&pairs)
}

/// Collects (gt/pred, weight * |pred|) ratio pairs over a masked depth map;
/// the weighted median of such pairs minimizes sum w |s * pred - gt|.
/// Pixels with zero prediction or zero weight drop out.
pub(crate) fn depth_ratio_pairs(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    weights: &WeightMap,
    mask: &ValidMask,
    what: &str,
) -> Result<Vec<(f64, f64)>> {
    check_same_shape(pred, gt, what)?;
    check_mask_shape(pred, mask, what)?;
    crate::loss::check_weight_shape(weights, mask, what)?;
    let mut pairs = Vec::new();
    for p in 0..mask.flags.len() {
        if !mask.is_set(p) {
            continue;
        }
        let g = gt.values[p];
        let x = pred.values[p];
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{what}: ground-truth depth {g} on a valid pixel (must be > 0)"
            )));
        }
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{what}: non-finite prediction on a valid pixel"
            )));
        }
        let u = weights.get(p) * x.abs();
        if u > 0.0 {
            pairs.push((g / x, u));
        }
    }
    Ok(pairs)
}

/// One (x, y, w) element batch extracted from a masked grid pair,
/// flattened channel-major per element.
struct Elements {
    xs: Vec<f64>,
    ys: Vec<f64>,
    w: Vec<f64>,
    pixels: Vec<usize>,
    channels: usize,
}

fn collect_elements<G: Grid>(
    pred: &G,
    gt: &G,
    weights: &WeightMap,
    mask: &ValidMask,
    what: &str,
) -> Result<Elements> {
    check_same_shape(pred, gt, what)?;
    check_mask_shape(pred, mask, what)?;
    crate::loss::check_weight_shape(weights, mask, what)?;
    let c = pred.channels();
    let mut el = Elements {
        xs: Vec::new(),
        ys: Vec::new(),
        w: Vec::new(),
        pixels: Vec::new(),
        channels: c,
    };
    for p in 0..mask.flags.len() {
        if !mask.is_set(p) {
            continue;
        }
        for ch in 0..c {
            let x = pred.value(p, ch);
            let y = gt.value(p, ch);
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{what}: non-finite value on a valid pixel"
                )));
            }
            el.xs.push(x);
            el.ys.push(y);
        }
        el.w.push(weights.get(p));
        el.pixels.push(p);
    }
    Ok(el)
}

/// Weighted least squares for y ~ a x + b over multi-channel elements:
/// scalar a, per-channel b. Returns None when the x side carries no variance.
fn weighted_least_squares(el: &Elements, w: &[f64]) -> Option<ScaleShift> {
    let n = w.len();
    let c = el.channels;
    let sw = pairwise_sum(w);
    if !(sw > 0.0) {
        return None;
    }
    let mut xbar = vec![0.0; c];
    let mut ybar = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            xbar[ch] += w[i] * el.xs[i * c + ch];
            ybar[ch] += w[i] * el.ys[i * c + ch];
        }
    }
    for ch in 0..c {
        xbar[ch] /= sw;
        ybar[ch] /= sw;
    }
    let mut var = 0.0;
    let mut cov = 0.0;
    let mut msq = 0.0;
    for i in 0..n {
        for ch in 0..c {
            let dx = el.xs[i * c + ch] - xbar[ch];
            let dy = el.ys[i * c + ch] - ybar[ch];
            var += w[i] * dx * dx;
            cov += w[i] * dx * dy;
            msq += w[i] * el.xs[i * c + ch] * el.xs[i * c + ch];
        }
    }
    if var <= 1e-24 * msq.max(1e-300) {
        return None;
    }
    let a = cov / var;
    let shift = (0..c).map(|ch| ybar[ch] - a * xbar[ch]).collect();
    Some(ScaleShift { scale: a, shift })
}

fn residual_norms(el: &Elements, params: &ScaleShift) -> Vec<f64> {
    let c = el.channels;
    (0..el.w.len())
        .map(|i| {
            let mut s = 0.0;
            for ch in 0..c {
                let r = params.scale * el.xs[i * c + ch] + params.shift[ch] - el.ys[i * c + ch];
                s += r * r;
            }
            s.sqrt()
        })
        .collect()
}

fn truncated_l1_objective(el: &Elements, params: &ScaleShift, tau: f64) -> f64 {
    let rho = residual_norms(el, params);
    let terms: Vec<f64> = rho.iter().zip(&el.w).map(|(&r, &w)| w * r.min(tau)).collect();
    pairwise_sum(&terms)
}

/// Robust per-frame scale-shift: minimizes the weighted truncated-L1
/// residual sum w_p * min(|a x_p + b - y_p|, tau) by iteratively reweighted
/// least squares.
///
/// The truncation threshold tau is the 90th-percentile residual norm of the
/// ordinary weighted-least-squares fit and stays fixed across the 10 IRLS
/// iterations; elements beyond tau get zero influence. The best iterate
/// under that objective is returned, so the result never scores worse than
/// the least-squares initializer. Requires at least two valid elements and a
/// non-constant prediction and ground truth.
pub fn solve_frame_scale_shift<G: Grid>(
    pred: &G,
    gt: &G,
    weights: &WeightMap,
    mask: &ValidMask,
) -> Result<ScaleShift> {
    let el = collect_elements(pred, gt, weights, mask, "frame scale-shift")?;
    solve_scale_shift_elements(&el)
}

/// Same robust fit as [`solve_frame_scale_shift`] but over an explicit pixel
/// subset, used for region-local alignment.
pub(crate) fn solve_scale_shift_pixels<G: Grid>(
    pred: &G,
    gt: &G,
    weights: &WeightMap,
    pixels: &[usize],
    what: &str,
) -> Result<ScaleShift> {
    check_same_shape(pred, gt, what)?;
    if weights.height() != pred.height() || weights.width() != pred.width() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: weight map {}x{} for a {}x{} grid",
            weights.height(),
            weights.width(),
            pred.height(),
            pred.width()
        )));
    }
    let c = pred.channels();
    let mut el = Elements {
        xs: Vec::new(),
        ys: Vec::new(),
        w: Vec::new(),
        pixels: Vec::new(),
        channels: c,
    };
    for &p in pixels {
        if p >= pred.pixels() {
            return Err(Error::InvalidInput(format!(
                "{what}: pixel index {p} out of range"
            )));
        }
        for ch in 0..c {
            let x = pred.value(p, ch);
            let y = gt.value(p, ch);
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{what}: non-finite value on a member pixel"
                )));
            }
            el.xs.push(x);
            el.ys.push(y);
        }
        el.w.push(weights.get(p));
        el.pixels.push(p);
    }
    solve_scale_shift_elements(&el)
}

fn solve_scale_shift_elements(el: &Elements) -> Result<ScaleShift> {
    let n = el.w.len();
    if n < 2 {
        return Err(Error::RankDeficientAlignment(format!(
            "{n} valid element(s), need at least 2"
        )));
    }
    // Constant ground truth leaves the shift unidentifiable given a scale.
    let c = el.channels;
    let sw = pairwise_sum(&el.w);
    if !(sw > 0.0) {
        return Err(Error::RankDeficientAlignment("all weights are zero".into()));
    }
    let mut vary = 0.0;
    let mut msqy = 0.0;
    let mut ybar = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            ybar[ch] += el.w[i] * el.ys[i * c + ch];
        }
    }
    for ch in 0..c {
        ybar[ch] /= sw;
    }
    for i in 0..n {
        for ch in 0..c {
            let dy = el.ys[i * c + ch] - ybar[ch];
            vary += el.w[i] * dy * dy;
            msqy += el.w[i] * el.ys[i * c + ch] * el.ys[i * c + ch];
        }
    }
    if vary <= 1e-24 * msqy.max(1e-300) {
        return Err(Error::RankDeficientAlignment("constant ground truth".into()));
    }

    let ols = weighted_least_squares(el, &el.w)
        .ok_or_else(|| Error::RankDeficientAlignment("constant prediction".into()))?;
    let rho0 = residual_norms(el, &ols);
    let tau = quantile(&rho0, 0.9);

    let mut best = ols.clone();
    let mut best_obj = truncated_l1_objective(el, &best, tau);
    let mut current = ols;
    for _ in 0..10 {
        let rho = residual_norms(el, &current);
        let w_irls: Vec<f64> = rho
            .iter()
            .zip(&el.w)
            .map(|(&r, &w)| if r > tau { 0.0 } else { w / r.max(1e-12) })
            .collect();
        let Some(next) = weighted_least_squares(el, &w_irls) else {
            break;
        };
        let obj = truncated_l1_objective(el, &next, tau);
        if obj < best_obj {
            best_obj = obj;
            best = next.clone();
        }
        current = next;
    }
    Ok(best)
}

/// Samples `count` sphere regions from the valid points of a point map.
/// Centers are drawn uniformly without replacement; each radius is
/// `radius_frac` (or, when None, a log-uniform draw from [0.05, 0.25]) times
/// the diagonal of the valid points' bounding box. Region membership is
/// inclusive of the boundary, so a zero radius keeps exactly the center.
pub fn sample_sphere_regions(
    points: &VecGrid,
    mask: &ValidMask,
    count: usize,
    radius_frac: Option<f64>,
    seed: u64,
) -> Result<Vec<SphereRegion>> {
    check_mask_shape(points, mask, "sphere regions")?;
    if points.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "sphere regions need 3-channel points, got {}",
            points.channels
        )));
    }
    if count == 0 {
        return Err(Error::InvalidInput("sphere region count must be positive".into()));
    }
    if let Some(f) = radius_frac {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Error::InvalidInput(format!("radius fraction {f}")));
        }
    }
    let valid = mask.valid_indices();
    if valid.is_empty() {
        return Err(Error::EmptyMask);
    }
    if count > valid.len() {
        return Err(Error::InvalidInput(format!(
            "cannot draw {count} region centers from {} valid points",
            valid.len()
        )));
    }
    for &p in &valid {
        if points.pixel(p).iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "sphere regions: non-finite point on a valid pixel".into(),
            ));
        }
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &p in &valid {
        let xyz = points.pixel(p);
        for c in 0..3 {
            lo[c] = lo[c].min(xyz[c]);
            hi[c] = hi[c].max(xyz[c]);
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, valid.len(), count);
    let mut regions = Vec::with_capacity(count);
    for slot in picks.iter() {
        let center_pixel = valid[slot];
        let frac = match radius_frac {
            Some(f) => f,
            None => {
                let (lo_f, hi_f) = (0.05f64.ln(), 0.25f64.ln());
                rng.gen_range(lo_f..hi_f).exp()
            }
        };
        let radius = frac * diag;
        let cp = points.pixel(center_pixel);
        let center = [cp[0], cp[1], cp[2]];
        let members: Vec<usize> = valid
            .iter()
            .copied()
            .filter(|&p| {
                let q = points.pixel(p);
                let d2 = (q[0] - center[0]).powi(2)
                    + (q[1] - center[1]).powi(2)
                    + (q[2] - center[2]).powi(2);
                d2.sqrt() <= radius
            })
            .collect();
        regions.push(SphereRegion { center_pixel, center, radius, members });
    }
    Ok(regions)
}

/// Umeyama closed-form similarity fit over explicit correspondences
/// (pred index, gt index): minimizes sum |s R x_i + t - y_i|^2 with det(R) =
/// +1 enforced through the sign-corrected SVD. Requires at least three
/// correspondences that are not all collinear.
pub fn solve_similarity_umeyama(
    pred: &[[f64; 3]],
    gt: &[[f64; 3]],
    correspondences: &[(usize, usize)],
) -> Result<Similarity> {
    if correspondences.len() < 3 {
        return Err(Error::DegenerateSimilarity(format!(
            "{} correspondence(s), need at least 3",
            correspondences.len()
        )));
    }
    for &(i, j) in correspondences {
        if i >= pred.len() || j >= gt.len() {
            return Err(Error::InvalidInput(format!(
                "correspondence ({i}, {j}) out of bounds for clouds of {} and {} points",
                pred.len(),
                gt.len()
            )));
        }
    }
    let n = correspondences.len() as f64;
    let mut mx = Vector3::zeros();
    let mut my = Vector3::zeros();
    for &(i, j) in correspondences {
        mx += Vector3::from(pred[i]);
        my += Vector3::from(gt[j]);
    }
    mx /= n;
    my /= n;

    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for &(i, j) in correspondences {
        let xc = Vector3::from(pred[i]) - mx;
        let yc = Vector3::from(gt[j]) - my;
        cov += yc * xc.transpose();
        var_x += xc.norm_squared();
    }
    cov /= n;
    var_x /= n;
    if !(var_x > 1e-24) {
        return Err(Error::DegenerateSimilarity("zero-variance source cloud".into()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::DegenerateSimilarity("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateSimilarity("SVD failed".into()))?;
    let d = svd.singular_values;

    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    if d[order[1]] <= 1e-12 * d[order[0]].max(1e-300) {
        return Err(Error::DegenerateSimilarity(
            "collinear correspondences (covariance rank below 2)".into(),
        ));
    }

    // Reflection correction: flip the direction of the smallest singular
    // value when the raw product would be improper.
    let mut s_diag = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        s_diag[order[2]] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&s_diag) * v_t;
    let scale = (d[0] * s_diag[0] + d[1] * s_diag[1] + d[2] * s_diag[2]) / var_x;
    let translation = my - scale * (rotation * mx);
    Ok(Similarity { scale, rotation, translation })
}

/// Umeyama fit with implicit index-paired correspondences.
pub fn solve_similarity_paired(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<Similarity> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "paired clouds of {} and {} points",
            pred.len(),
            gt.len()
        )));
    }
    let corr: Vec<(usize, usize)> = (0..pred.len()).map(|i| (i, i)).collect();
    solve_similarity_umeyama(pred, gt, &corr)
}

/// Aligns a predicted camera trajectory to ground truth with a similarity
/// over camera centers and reports per-frame center residuals.
pub fn align_trajectory(
    pred: &[CameraParams],
    gt: &[CameraParams],
) -> Result<TrajectoryAlignment> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "trajectories of {} and {} poses",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "trajectory alignment needs at least 3 poses, got {}",
            pred.len()
        )));
    }
    let pc: Vec<[f64; 3]> = pred.iter().map(|c| c.translation).collect();
    let gc: Vec<[f64; 3]> = gt.iter().map(|c| c.translation).collect();
    let similarity = solve_similarity_paired(&pc, &gc)?;
    let residuals = pc
        .iter()
        .zip(&gc)
        .map(|(p, g)| {
            let m = similarity.apply(p);
            ((m[0] - g[0]).powi(2) + (m[1] - g[1]).powi(2) + (m[2] - g[2]).powi(2)).sqrt()
        })
        .collect();
    Ok(TrajectoryAlignment { similarity, residuals })
}
