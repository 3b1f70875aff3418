//! Evaluation metrics: point-cloud accuracy (chamfer distance, F-score),
//! depth accuracy (absolute relative error, inlier ratio), trajectory
//! accuracy (absolute and relative pose error), field-of-view error, and
//! rank aggregation across metric tables.
//!
//! Point-cloud metrics run on explicit `[x, y, z]` lists. Nearest-neighbor
//! queries use a uniform hash grid but are exact: results match a brute-force
//! scan bit for bit. Sequence-level evaluation ([`evaluate_point_clouds`])
//! stacks the valid pixels of every frame, aligns prediction to ground truth
//! with a similarity solved over the full pixelwise correspondences, then
//! voxel-downsamples both clouds before measuring.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::align::{
    align_trajectory, depth_ratio_pairs, solve_similarity_paired, weighted_median, Similarity,
    TrajectoryAlignment,
};
use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::loss::WeightMap;
use crate::sample::SequenceSample;
use crate::util::{pairwise_mean, pairwise_sum};

/// Inlier bound for the depth ratio metric: a pixel counts as correct when
/// max(pred/gt, gt/pred) stays below this value.
pub const DELTA_RATIO: f64 = 1.25;

// ---------------------------------------------------------------------------
// Voxel downsampling
// ---------------------------------------------------------------------------

/// Replaces all points falling into the same axis-aligned voxel by their
/// centroid. Voxel cells are half-open boxes `[k*voxel, (k+1)*voxel)` per
/// axis; output centroids come back sorted by voxel key (lexicographic in
/// x, y, z), so the result is independent of input order up to summation
/// grouping.
pub fn voxel_downsample(points: &[[f64; 3]], voxel: f64) -> Result<Vec<[f64; 3]>> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "voxel size {voxel} (must be positive and finite)"
        )));
    }
    let mut cells: BTreeMap<[i64; 3], ([f64; 3], usize)> = BTreeMap::new();
    for p in points {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite coordinate in point cloud".into(),
            ));
        }
        let key = cell_key(p, voxel);
        let entry = cells.entry(key).or_insert(([0.0; 3], 0));
        for a in 0..3 {
            entry.0[a] += p[a];
        }
        entry.1 += 1;
    }
    Ok(cells
        .into_values()
        .map(|(sum, n)| {
            let inv = 1.0 / n as f64;
            [sum[0] * inv, sum[1] * inv, sum[2] * inv]
        })
        .collect())
}

#[inline]
fn cell_key(p: &[f64; 3], cell: f64) -> [i64; 3] {
    // Clamp so later integer arithmetic on key differences cannot overflow.
    const LIMIT: f64 = 1e15;
    let k = |v: f64| ((v / cell).floor().clamp(-LIMIT, LIMIT)) as i64;
    [k(p[0]), k(p[1]), k(p[2])]
}

// ---------------------------------------------------------------------------
// Exact nearest neighbor
// ---------------------------------------------------------------------------

/// Uniform-grid index over a point cloud supporting exact nearest-neighbor
/// queries. Cells are scanned outward in Chebyshev rings around the query
/// cell; the scan stops once no unvisited ring can hold a closer point, so
/// distances agree exactly with a brute-force scan.
pub struct NnIndex {
    points: Vec<[f64; 3]>,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl NnIndex {
    pub fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud("cannot index an empty cloud".into()));
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                if !p[a].is_finite() {
                    return Err(Error::InvalidInput(
                        "non-finite coordinate in point cloud".into(),
                    ));
                }
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let diag = (0..3)
            .map(|a| (max[a] - min[a]).powi(2))
            .sum::<f64>()
            .sqrt();
        // Aim for O(1) points per cell; any positive cell size stays exact.
        let cell = if diag > 0.0 {
            diag / (points.len() as f64).cbrt().max(1.0)
        } else {
            1.0
        };
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let k = cell_key(p, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            cells.entry(k).or_default().push(i as u32);
        }
        Ok(Self { points: points.to_vec(), cell, cells, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and Euclidean distance of the exact nearest neighbor. Distance
    /// ties resolve to the smallest index, so results are deterministic.
    pub fn nearest(&self, q: &[f64; 3]) -> (usize, f64) {
        let k = cell_key(q, self.cell);
        let span = (0..3).map(|a| self.hi[a] - self.lo[a]).max().unwrap();
        let outside = (0..3)
            .map(|a| (self.lo[a] - k[a]).max(k[a] - self.hi[a]).max(0))
            .max()
            .unwrap();
        // A query far outside the data extent sees the whole cloud within a
        // couple of rings anyway; scan it directly instead of walking shells.
        if outside > span + 2 {
            return self.brute(q);
        }
        let max_ring = (0..3)
            .map(|a| (k[a] - self.lo[a]).abs().max((self.hi[a] - k[a]).abs()))
            .max()
            .unwrap();
        let mut best_d2 = f64::INFINITY;
        let mut best_i = 0usize;
        for r in outside..=max_ring {
            self.scan_ring(&k, r, q, &mut best_d2, &mut best_i);
            // Any point in ring r+1 or beyond lies strictly farther than
            // r * cell from the query, so the current best cannot be beaten.
            if best_d2.sqrt() <= r as f64 * self.cell {
                break;
            }
        }
        (best_i, best_d2.sqrt())
    }

    fn brute(&self, q: &[f64; 3]) -> (usize, f64) {
        let mut best_d2 = f64::INFINITY;
        let mut best_i = 0usize;
        for (i, p) in self.points.iter().enumerate() {
            let d2 = dist2(p, q);
            if d2 < best_d2 {
                best_d2 = d2;
                best_i = i;
            }
        }
        (best_i, best_d2.sqrt())
    }

    fn scan_ring(&self, k: &[i64; 3], r: i64, q: &[f64; 3], best_d2: &mut f64, best_i: &mut usize) {
        for dx in -r..=r {
            let x = k[0] + dx;
            if x < self.lo[0] || x > self.hi[0] {
                continue;
            }
            for dy in -r..=r {
                let y = k[1] + dy;
                if y < self.lo[1] || y > self.hi[1] {
                    continue;
                }
                for dz in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let z = k[2] + dz;
                    if z < self.lo[2] || z > self.hi[2] {
                        continue;
                    }
                    let Some(ids) = self.cells.get(&[x, y, z]) else {
                        continue;
                    };
                    for &i in ids {
                        let d2 = dist2(&self.points[i as usize], q);
                        if d2 < *best_d2 || (d2 == *best_d2 && (i as usize) < *best_i) {
                            *best_d2 = d2;
                            *best_i = i as usize;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn dist2(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
}

fn nn_directed(from: &[[f64; 3]], to: &NnIndex) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(from.len());
    for p in from {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite coordinate in point cloud".into(),
            ));
        }
        out.push(to.nearest(p).1);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Chamfer distance and F-score
// ---------------------------------------------------------------------------

/// Symmetric chamfer distance on Euclidean (unsquared) nearest-neighbor
/// distances: the average of the two directed means, halved.
pub fn chamfer_l1(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyCloud("chamfer distance: first cloud is empty".into()));
    }
    if b.is_empty() {
        return Err(Error::EmptyCloud("chamfer distance: second cloud is empty".into()));
    }
    let ia = NnIndex::new(a)?;
    let ib = NnIndex::new(b)?;
    Ok(0.5 * (pairwise_mean(&nn_directed(a, &ib)?) + pairwise_mean(&nn_directed(b, &ia)?)))
}

/// Harmonic mean of precision (fraction of predicted points within `tau` of
/// the reference) and recall (fraction of reference points within `tau` of
/// the prediction). Points at exactly `tau` count as matched. Returns 0 when
/// no point matches in either direction.
pub fn fscore(pred: &[[f64; 3]], gt: &[[f64; 3]], tau: f64) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyCloud("f-score: prediction cloud is empty".into()));
    }
    if gt.is_empty() {
        return Err(Error::EmptyCloud("f-score: reference cloud is empty".into()));
    }
    let ip = NnIndex::new(pred)?;
    let ig = NnIndex::new(gt)?;
    fscore_from_dists(&nn_directed(pred, &ig)?, &nn_directed(gt, &ip)?, tau)
}

fn fscore_from_dists(d_pg: &[f64], d_gp: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "f-score threshold {tau} (must be positive and finite)"
        )));
    }
    let precision = d_pg.iter().filter(|&&d| d <= tau).count() as f64 / d_pg.len() as f64;
    let recall = d_gp.iter().filter(|&&d| d <= tau).count() as f64 / d_gp.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

// ---------------------------------------------------------------------------
// Sequence point-cloud evaluation
// ---------------------------------------------------------------------------

/// Result of [`evaluate_point_clouds`]: the solved alignment, the chamfer
/// distance, one F-score per requested threshold, and the downsampled cloud
/// sizes the metrics ran on.
#[derive(Clone, Debug)]
pub struct PointCloudReport {
    pub similarity: Similarity,
    pub chamfer: f64,
    /// (threshold, f-score) pairs in the order requested.
    pub fscores: Vec<(f64, f64)>,
    pub pred_points: usize,
    pub gt_points: usize,
}

/// Point-map evaluation over a whole sequence:
///
/// 1. stack the 3-D points of every pixel valid in both samples,
/// 2. solve a similarity from prediction to ground truth over the full
///    pixelwise correspondences,
/// 3. voxel-downsample both stacked clouds,
/// 4. apply the similarity to the downsampled prediction and measure chamfer
///    distance and F-scores against the downsampled ground truth.
pub fn evaluate_point_clouds(
    pred: &SequenceSample,
    gt: &SequenceSample,
    voxel: f64,
    thresholds: &[f64],
) -> Result<PointCloudReport> {
    let masks = pred.shared_masks(gt)?;
    let mut pp: Vec<[f64; 3]> = Vec::new();
    let mut gp: Vec<[f64; 3]> = Vec::new();
    for (t, ((fp, fg), mask)) in pred.frames().iter().zip(gt.frames()).zip(&masks).enumerate() {
        for p in 0..mask.flags.len() {
            if !mask.is_set(p) {
                continue;
            }
            let a = fp.points.pixel(p);
            let b = fg.points.pixel(p);
            if a.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite point on a valid pixel of frame {t}"
                )));
            }
            pp.push([a[0], a[1], a[2]]);
            gp.push([b[0], b[1], b[2]]);
        }
    }
    if pp.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "point-cloud evaluation needs at least 3 shared valid pixels, got {}",
            pp.len()
        )));
    }
    let similarity = solve_similarity_paired(&pp, &gp)?;
    let vox_pred: Vec<[f64; 3]> = voxel_downsample(&pp, voxel)?
        .iter()
        .map(|p| similarity.apply(p))
        .collect();
    let vox_gt = voxel_downsample(&gp, voxel)?;
    let gt_index = NnIndex::new(&vox_gt)?;
    let pred_index = NnIndex::new(&vox_pred)?;
    let d_pg = nn_directed(&vox_pred, &gt_index)?;
    let d_gp = nn_directed(&vox_gt, &pred_index)?;
    let chamfer = 0.5 * (pairwise_mean(&d_pg) + pairwise_mean(&d_gp));
    let fscores = thresholds
        .iter()
        .map(|&tau| Ok((tau, fscore_from_dists(&d_pg, &d_gp, tau)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloudReport {
        similarity,
        chamfer,
        fscores,
        pred_points: vox_pred.len(),
        gt_points: vox_gt.len(),
    })
}

// ---------------------------------------------------------------------------
// Depth metrics
// ---------------------------------------------------------------------------

/// How predicted depth is aligned to ground truth before measuring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthAlignment {
    /// Compare raw values.
    None,
    /// One scale for the whole sequence (weighted median of depth ratios
    /// pooled over all frames).
    GlobalScale,
    /// An independent scale per frame.
    PerFrame,
}

/// Pooled depth accuracy over a sequence.
#[derive(Clone, Debug)]
pub struct DepthReport {
    /// Mean of |aligned - gt| / gt over all valid pixels of all frames.
    pub rel: f64,
    /// Fraction of valid pixels with max(aligned/gt, gt/aligned) below
    /// [`DELTA_RATIO`]. Pixels with nonpositive aligned depth count as
    /// failures.
    pub delta: f64,
    /// The scale applied to each frame (all 1 for [`DepthAlignment::None`],
    /// all equal for [`DepthAlignment::GlobalScale`]).
    pub scales: Vec<f64>,
    /// Number of valid pixels pooled.
    pub element_count: usize,
}

/// Absolute relative error and inlier ratio of predicted depth, optionally
/// scale-aligned first. Ground-truth depth must be positive on every shared
/// valid pixel.
pub fn depth_metrics(
    pred: &SequenceSample,
    gt: &SequenceSample,
    alignment: DepthAlignment,
) -> Result<DepthReport> {
    let masks = pred.shared_masks(gt)?;
    let fp = pred.frames();
    let fg = gt.frames();
    let scales: Vec<f64> = match alignment {
        DepthAlignment::None => vec![1.0; fp.len()],
        DepthAlignment::GlobalScale => {
            let mut pairs = Vec::new();
            for t in 0..fp.len() {
                let w = WeightMap::unit(masks[t].height, masks[t].width);
                pairs.extend(depth_ratio_pairs(
                    &fp[t].depth,
                    &fg[t].depth,
                    &w,
                    &masks[t],
                    "depth alignment",
                )?);
            }
            if pairs.is_empty() {
                return Err(Error::DegenerateScale(
                    "depth alignment: every valid pixel has zero prediction".into(),
                ));
            }
            let s = weighted_median(&pairs)?;
            vec![s; fp.len()]
        }
        DepthAlignment::PerFrame => {
            let mut out = Vec::with_capacity(fp.len());
            for t in 0..fp.len() {
                let w = WeightMap::unit(masks[t].height, masks[t].width);
                let pairs = depth_ratio_pairs(
                    &fp[t].depth,
                    &fg[t].depth,
                    &w,
                    &masks[t],
                    "depth alignment",
                )?;
                if pairs.is_empty() {
                    return Err(Error::DegenerateScale(format!(
                        "depth alignment: frame {t} has no nonzero predictions"
                    )));
                }
                out.push(weighted_median(&pairs).map_err(|e| match e {
                    Error::DegenerateScale(m) => {
                        Error::DegenerateScale(format!("frame {t}: {m}"))
                    }
                    other => other,
                })?);
            }
            out
        }
    };

    let mut rel_terms = Vec::new();
    let mut hits = 0usize;
    let mut count = 0usize;
    for t in 0..fp.len() {
        for p in 0..masks[t].flags.len() {
            if !masks[t].is_set(p) {
                continue;
            }
            let g = fg[t].depth.values[p];
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "depth metrics: ground-truth depth {g} on a valid pixel of frame {t} (must be > 0)"
                )));
            }
            let x = fp[t].depth.values[p];
            if !x.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "depth metrics: non-finite prediction on a valid pixel of frame {t}"
                )));
            }
            let sx = scales[t] * x;
            rel_terms.push((sx - g).abs() / g);
            if sx > 0.0 && (sx / g).max(g / sx) < DELTA_RATIO {
                hits += 1;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(DepthReport {
        rel: pairwise_mean(&rel_terms),
        delta: hits as f64 / count as f64,
        scales,
        element_count: count,
    })
}

// ---------------------------------------------------------------------------
// Pose metrics
// ---------------------------------------------------------------------------

/// Trajectory accuracy summary.
#[derive(Clone, Debug)]
pub struct PoseReport {
    /// Root-mean-square camera-center residual after similarity alignment.
    pub ate: f64,
    /// Root-mean-square geodesic angle (degrees) between consecutive-frame
    /// relative rotations.
    pub rpe_rot_deg: f64,
    /// Root-mean-square consecutive-frame translation-drift error after a
    /// median scale correction, measured in each pair's first-frame
    /// coordinates.
    pub rpe_trans: f64,
    /// The scale applied to predicted per-pair translations.
    pub rpe_scale: f64,
    pub alignment: TrajectoryAlignment,
}

/// Absolute trajectory error plus relative pose errors over consecutive
/// frames. Needs at least three poses (the similarity alignment requires
/// them and non-collinear camera centers).
pub fn pose_metrics(pred: &[CameraParams], gt: &[CameraParams]) -> Result<PoseReport> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "trajectories of {} and {} poses",
            pred.len(),
            gt.len()
        )));
    }
    let alignment = align_trajectory(pred, gt)?;
    let sq: Vec<f64> = alignment.residuals.iter().map(|r| r * r).collect();
    let ate = (pairwise_sum(&sq) / sq.len() as f64).sqrt();

    let rp: Vec<Matrix3<f64>> = pred.iter().map(|c| c.rotation()).collect::<Result<_>>()?;
    let rg: Vec<Matrix3<f64>> = gt.iter().map(|c| c.rotation()).collect::<Result<_>>()?;

    let mut rot_sq = Vec::new();
    let mut deltas: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    for t in 0..pred.len() - 1 {
        let rel_p = rp[t].transpose() * rp[t + 1];
        let rel_g = rg[t].transpose() * rg[t + 1];
        let residual = rel_g.transpose() * rel_p;
        let cos = ((residual.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        rot_sq.push(cos.acos().to_degrees().powi(2));

        let dp = rp[t].transpose()
            * (Vector3::from(pred[t + 1].translation) - Vector3::from(pred[t].translation));
        let dg = rg[t].transpose()
            * (Vector3::from(gt[t + 1].translation) - Vector3::from(gt[t].translation));
        deltas.push((dp, dg));
    }
    let rpe_rot_deg = pairwise_mean(&rot_sq).sqrt();

    // Median magnitude-ratio scale absorbs a global trajectory scale without
    // letting a few large steps dominate. All-zero predicted steps fall back
    // to scale 1.
    let ratio_pairs: Vec<(f64, f64)> = deltas
        .iter()
        .filter(|(dp, _)| dp.norm() > 0.0)
        .map(|(dp, dg)| (dg.norm() / dp.norm(), dp.norm()))
        .collect();
    let rpe_scale = if ratio_pairs.is_empty() { 1.0 } else { weighted_median(&ratio_pairs)? };
    let trans_sq: Vec<f64> = deltas
        .iter()
        .map(|(dp, dg)| (rpe_scale * dp - dg).norm_squared())
        .collect();
    let rpe_trans = pairwise_mean(&trans_sq).sqrt();

    Ok(PoseReport { ate, rpe_rot_deg, rpe_trans, rpe_scale, alignment })
}

/// Mean relative field-of-view error over both axes of every frame.
pub fn fov_rel(pred: &[CameraParams], gt: &[CameraParams]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "field-of-view lists of {} and {} frames",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("field-of-view comparison over zero frames".into()));
    }
    let mut terms = Vec::with_capacity(pred.len() * 2);
    for (cp, cg) in pred.iter().zip(gt) {
        for a in 0..2 {
            terms.push((cp.fov[a] - cg.fov[a]).abs() / cg.fov[a]);
        }
    }
    Ok(pairwise_mean(&terms))
}

// ---------------------------------------------------------------------------
// Metric tables and rank aggregation
// ---------------------------------------------------------------------------

/// One metric evaluated for several methods.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricColumn {
    pub name: String,
    /// Whether larger values rank better (true for F-score and inlier
    /// ratios, false for error metrics).
    pub higher_better: bool,
    /// Method name to metric value.
    pub values: BTreeMap<String, f64>,
}

/// A set of metric columns covering the same methods.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricTable {
    pub columns: Vec<MetricColumn>,
}

/// Mean dense rank per method: within each column methods are ranked best
/// first, equal values share a rank, and the next distinct value gets the
/// next integer rank. Returns (method, mean rank) sorted by mean rank, ties
/// broken by name. NaN cells and method sets that differ between columns are
/// errors.
pub fn rank_aggregate(table: &MetricTable) -> Result<Vec<(String, f64)>> {
    if table.columns.is_empty() {
        return Err(Error::InvalidInput("rank aggregation over zero metric columns".into()));
    }
    let methods: Vec<String> = table.columns[0].values.keys().cloned().collect();
    if methods.is_empty() {
        return Err(Error::InvalidInput(format!(
            "metric column '{}' has no entries",
            table.columns[0].name
        )));
    }
    let mut sums: BTreeMap<String, f64> = methods.iter().map(|m| (m.clone(), 0.0)).collect();
    for col in &table.columns {
        if col.values.len() != methods.len()
            || !col.values.keys().zip(&methods).all(|(a, b)| a == b)
        {
            return Err(Error::InvalidInput(format!(
                "metric column '{}' does not cover the same methods as '{}'",
                col.name, table.columns[0].name
            )));
        }
        for (m, v) in &col.values {
            if v.is_nan() {
                return Err(Error::NanCell { method: m.clone(), metric: col.name.clone() });
            }
        }
        let mut ordered: Vec<f64> = col.values.values().copied().collect();
        ordered.sort_by(f64::total_cmp);
        if col.higher_better {
            ordered.reverse();
        }
        ordered.dedup();
        for (m, v) in &col.values {
            let rank = ordered.iter().position(|x| x == v).expect("value present") + 1;
            *sums.get_mut(m).expect("method present") += rank as f64;
        }
    }
    let n = table.columns.len() as f64;
    let mut out: Vec<(String, f64)> = sums.into_iter().map(|(m, s)| (m, s / n)).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{quat_from_axis_angle, quat_mul, unproject};
    use crate::grid::{ScalarGrid, ValidMask, VecGrid};
    use crate::sample::{FrameSample, SequenceSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_cloud(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| [r.gen_range(lo..hi), r.gen_range(lo..hi), r.gen_range(lo..hi)])
            .collect()
    }

    fn identity_camera() -> CameraParams {
        CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    fn seq_from_depths(depths: Vec<ScalarGrid>) -> SequenceSample {
        let frames = depths
            .into_iter()
            .map(|d| {
                let (h, w) = (d.height, d.width);
                FrameSample {
                    depth: d,
                    points: VecGrid::filled(h, w, 3, 0.0),
                    mask: ValidMask::all_valid(h, w),
                    camera: identity_camera(),
                    conf_depth: None,
                    conf_point: None,
                }
            })
            .collect();
        SequenceSample::new(frames).unwrap()
    }

    /// Small sequence whose point maps come from unprojecting varied depth
    /// through moving cameras; two pixels per frame are masked out.
    fn unprojected_sequence(frames: usize) -> SequenceSample {
        let (h, w) = (6, 8);
        let mut out = Vec::new();
        for t in 0..frames {
            let depth = ScalarGrid::new(
                h,
                w,
                (0..h * w)
                    .map(|p| 1.5 + 0.1 * ((p * 7919 + t * 131) % 23) as f64)
                    .collect(),
            )
            .unwrap();
            let mut flags = vec![true; h * w];
            flags[(3 * t + 1) % (h * w)] = false;
            flags[(11 * t + 17) % (h * w)] = false;
            let mask = ValidMask::new(h, w, flags).unwrap();
            let q = quat_from_axis_angle(&[0.2, 1.0, 0.1], 0.15 * t as f64).unwrap();
            let camera = CameraParams::new(
                q,
                [0.2 * t as f64, 0.1, -0.3 * t as f64],
                [1.0, 0.9],
            )
            .unwrap();
            let raw = unproject(&depth, &camera, &mask).unwrap();
            let points = VecGrid::new(
                h,
                w,
                3,
                raw.values.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect(),
            )
            .unwrap();
            out.push(FrameSample {
                depth,
                points,
                mask,
                camera,
                conf_depth: None,
                conf_point: None,
            });
        }
        SequenceSample::new(out).unwrap()
    }

    // --- voxel downsampling ---

    #[test]
    fn voxel_downsample_merges_cells_into_sorted_centroids() {
        let pts = [
            [1.5, 0.2, 0.2],
            [0.01, 0.0, 0.0],
            [0.03, 0.0, 0.0],
            [-0.5, 0.0, 0.0],
        ];
        let out = voxel_downsample(&pts, 1.0).unwrap();
        // Keys: (-1,0,0), (0,0,0), (1,0,0) in lexicographic order.
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], [-0.5, 0.0, 0.0]);
        assert_eq!(out[1], [0.02, 0.0, 0.0]);
        assert_eq!(out[2], [1.5, 0.2, 0.2]);
    }

    #[test]
    fn voxel_downsample_rejects_bad_inputs() {
        assert!(matches!(
            voxel_downsample(&[[0.0; 3]], 0.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            voxel_downsample(&[[f64::NAN, 0.0, 0.0]], 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(voxel_downsample(&[], 1.0).unwrap().is_empty());
    }

    // --- nearest neighbor ---

    #[test]
    fn grid_nearest_matches_brute_force_exactly() {
        let mut r = rng(71);
        // Clusters plus spread plus duplicates stress the ring scan.
        let mut cloud = random_cloud(&mut r, 900, -3.0, 3.0);
        for _ in 0..300 {
            cloud.push([
                r.gen_range(-0.1..0.1),
                r.gen_range(-0.1..0.1),
                r.gen_range(-0.1..0.1),
            ]);
        }
        for _ in 0..300 {
            cloud.push([
                5.0 + r.gen_range(-0.3..0.3),
                1.0 + r.gen_range(-0.3..0.3),
                -2.0 + r.gen_range(-0.3..0.3),
            ]);
        }
        cloud.push(cloud[0]);
        let index = NnIndex::new(&cloud).unwrap();

        let mut queries = random_cloud(&mut r, 200, -4.0, 4.0);
        queries.extend(random_cloud(&mut r, 100, -0.2, 0.2));
        queries.extend(random_cloud(&mut r, 100, 10.0, 14.0));
        queries.push(cloud[17]);
        for q in &queries {
            let (_, d) = index.nearest(q);
            let mut brute = f64::INFINITY;
            for p in &cloud {
                let d2 = dist2(p, q);
                if d2 < brute {
                    brute = d2;
                }
            }
            assert_eq!(d, brute.sqrt(), "query {q:?}");
        }
    }

    #[test]
    fn single_point_index_answers_any_query() {
        let index = NnIndex::new(&[[1.0, 2.0, 3.0]]).unwrap();
        let (i, d) = index.nearest(&[1.0, 2.0, 7.0]);
        assert_eq!(i, 0);
        assert_eq!(d, 4.0);
        assert_eq!(index.len(), 1);
    }

    // --- chamfer / f-score ---

    #[test]
    fn chamfer_of_identical_clouds_is_exactly_zero() {
        let mut r = rng(72);
        let cloud = random_cloud(&mut r, 500, -2.0, 2.0);
        assert_eq!(chamfer_l1(&cloud, &cloud).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_hand_case_quarter_of_separation() {
        // First cloud {0, d}, second {0}: directed means d/2 and 0.
        let d = 0.8;
        let a = [[0.0, 0.0, 0.0], [d, 0.0, 0.0]];
        let b = [[0.0, 0.0, 0.0]];
        assert!((chamfer_l1(&a, &b).unwrap() - d / 4.0).abs() < 1e-15);
    }

    #[test]
    fn chamfer_rejects_empty_clouds() {
        let cloud = [[0.0, 0.0, 0.0]];
        assert!(matches!(chamfer_l1(&[], &cloud), Err(Error::EmptyCloud(_))));
        assert!(matches!(chamfer_l1(&cloud, &[]), Err(Error::EmptyCloud(_))));
    }

    #[test]
    fn fscore_is_one_on_identical_clouds_and_inclusive_at_tau() {
        let mut r = rng(73);
        let cloud = random_cloud(&mut r, 200, -2.0, 2.0);
        assert_eq!(fscore(&cloud, &cloud, 0.05).unwrap(), 1.0);

        // Exactly tau apart still matches.
        let a = [[0.0, 0.0, 0.0]];
        let b = [[0.25, 0.0, 0.0]];
        assert_eq!(fscore(&a, &b, 0.25).unwrap(), 1.0);
        assert_eq!(fscore(&a, &b, 0.2499).unwrap(), 0.0);
        assert!(matches!(fscore(&a, &b, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fscore_is_monotone_in_the_threshold() {
        let mut r = rng(74);
        let gt = random_cloud(&mut r, 300, -1.0, 1.0);
        let pred: Vec<[f64; 3]> = gt
            .iter()
            .map(|p| {
                [
                    p[0] + r.gen_range(-0.1..0.1),
                    p[1] + r.gen_range(-0.1..0.1),
                    p[2] + r.gen_range(-0.1..0.1),
                ]
            })
            .collect();
        for _ in 0..100 {
            let t1 = r.gen_range(1e-4..0.3);
            let t2 = r.gen_range(1e-4..0.3);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let f_lo = fscore(&pred, &gt, lo).unwrap();
            let f_hi = fscore(&pred, &gt, hi).unwrap();
            assert!(
                f_lo <= f_hi + 1e-15,
                "f({lo}) = {f_lo} > f({hi}) = {f_hi}"
            );
        }
    }

    // --- sequence point-cloud evaluation ---

    #[test]
    fn identical_sequences_evaluate_to_zero_chamfer_and_unit_fscore() {
        let seq = unprojected_sequence(3);
        let report = evaluate_point_clouds(&seq, &seq, 0.05, &[0.02, 0.1]).unwrap();
        assert!(report.chamfer < 1e-9, "chamfer {}", report.chamfer);
        for &(_, f) in &report.fscores {
            assert_eq!(f, 1.0);
        }
        assert!((report.similarity.scale - 1.0).abs() < 1e-9);
        assert!(report.pred_points > 0 && report.pred_points == report.gt_points);
    }

    #[test]
    fn similarity_warped_prediction_is_realigned_before_measuring() {
        let gt = unprojected_sequence(3);
        let rot = crate::camera::quat_to_rotmat(
            &quat_from_axis_angle(&[1.0, 2.0, 3.0], 0.7).unwrap(),
        )
        .unwrap();
        let warp = Similarity {
            scale: 0.5,
            rotation: rot,
            translation: Vector3::new(0.3, -1.0, 2.0),
        };
        let frames: Vec<FrameSample> = gt
            .frames()
            .iter()
            .map(|f| {
                let mut pts = f.points.clone();
                for p in 0..pts.pixels() {
                    let v = pts.pixel(p);
                    let m = warp.apply(&[v[0], v[1], v[2]]);
                    let base = p * 3;
                    pts.values[base] = m[0];
                    pts.values[base + 1] = m[1];
                    pts.values[base + 2] = m[2];
                }
                FrameSample {
                    depth: f.depth.clone(),
                    points: pts,
                    mask: f.mask.clone(),
                    camera: f.camera.clone(),
                    conf_depth: None,
                    conf_point: None,
                }
            })
            .collect();
        let pred = SequenceSample::new(frames).unwrap();
        let report = evaluate_point_clouds(&pred, &gt, 0.05, &[0.05, 0.25]).unwrap();
        // The solved alignment inverts the planted warp exactly (it is fit on
        // the full pixelwise correspondences) ...
        assert!((report.similarity.scale - 2.0).abs() < 1e-9);
        // ... while the measured distance only vanishes up to voxel
        // quantization: the warped prediction is binned in its own
        // coordinates (here at half scale, so cells are effectively twice as
        // coarse), and pred and gt centroids group different point sets.
        assert!(report.chamfer < 0.05 / 10.0, "chamfer {}", report.chamfer);
        assert!(report.fscores[0].1 > 0.9, "f@0.05 {}", report.fscores[0].1);
        assert_eq!(report.fscores[1].1, 1.0);
    }

    #[test]
    fn noisy_prediction_scores_below_perfect() {
        let gt = unprojected_sequence(2);
        let mut r = rng(75);
        let frames: Vec<FrameSample> = gt
            .frames()
            .iter()
            .map(|f| {
                let mut pts = f.points.clone();
                for v in &mut pts.values {
                    *v += r.gen_range(-0.05..0.05);
                }
                FrameSample {
                    depth: f.depth.clone(),
                    points: pts,
                    mask: f.mask.clone(),
                    camera: f.camera.clone(),
                    conf_depth: None,
                    conf_point: None,
                }
            })
            .collect();
        let pred = SequenceSample::new(frames).unwrap();
        let report = evaluate_point_clouds(&pred, &gt, 0.02, &[0.005, 10.0]).unwrap();
        assert!(report.chamfer > 1e-4, "chamfer {}", report.chamfer);
        assert!(report.fscores[0].1 < 1.0);
        assert_eq!(report.fscores[1].1, 1.0);
    }

    // --- depth metrics ---

    #[test]
    fn uniform_overprediction_splits_rel_and_delta_by_alignment() {
        let gt = seq_from_depths(vec![ScalarGrid::filled(4, 4, 2.0)]);
        let pred = gt.scaled(1.3);
        let raw = depth_metrics(&pred, &gt, DepthAlignment::None).unwrap();
        assert!((raw.rel - 0.3).abs() < 1e-12, "rel {}", raw.rel);
        assert_eq!(raw.delta, 0.0);
        assert_eq!(raw.element_count, 16);

        let aligned = depth_metrics(&pred, &gt, DepthAlignment::GlobalScale).unwrap();
        assert!(aligned.rel < 1e-12, "rel {}", aligned.rel);
        assert_eq!(aligned.delta, 1.0);
        assert!((aligned.scales[0] - 1.0 / 1.3).abs() < 1e-12);
    }

    #[test]
    fn per_frame_scales_need_per_frame_alignment() {
        let gt = seq_from_depths(vec![
            ScalarGrid::filled(4, 4, 2.0),
            ScalarGrid::filled(4, 4, 2.0),
        ]);
        let mut frames: Vec<FrameSample> = gt.frames().to_vec();
        for v in &mut frames[0].depth.values {
            *v *= 2.0;
        }
        for v in &mut frames[1].depth.values {
            *v *= 0.5;
        }
        let pred = SequenceSample::new(frames).unwrap();

        let per_frame = depth_metrics(&pred, &gt, DepthAlignment::PerFrame).unwrap();
        assert!(per_frame.rel < 1e-12);
        assert_eq!(per_frame.delta, 1.0);
        assert_eq!(per_frame.scales, vec![0.5, 2.0]);

        let global = depth_metrics(&pred, &gt, DepthAlignment::GlobalScale).unwrap();
        assert!(global.rel > 0.3, "rel {}", global.rel);
        assert!(global.delta <= 0.5);
    }

    #[test]
    fn delta_counts_pixels_within_the_ratio_bound() {
        let gt = seq_from_depths(vec![ScalarGrid::filled(2, 2, 1.0)]);
        let pred = seq_from_depths(vec![
            ScalarGrid::new(2, 2, vec![1.0, 1.2, 1.3, 0.5]).unwrap(),
        ]);
        let m = depth_metrics(&pred, &gt, DepthAlignment::None).unwrap();
        assert_eq!(m.delta, 0.5);
        assert!((m.rel - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_ground_truth_depth_is_rejected() {
        let gt = seq_from_depths(vec![ScalarGrid::filled(2, 2, 0.0)]);
        let pred = seq_from_depths(vec![ScalarGrid::filled(2, 2, 1.0)]);
        assert!(matches!(
            depth_metrics(&pred, &gt, DepthAlignment::None),
            Err(Error::InvalidInput(_))
        ));
        // Nonpositive predictions are legal: they fail delta but feed rel.
        let m = depth_metrics(&gt, &pred, DepthAlignment::None).unwrap();
        assert_eq!(m.delta, 0.0);
        assert_eq!(m.rel, 1.0);
    }

    // --- pose metrics ---

    fn zigzag_cameras() -> Vec<CameraParams> {
        let centers = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [2.0, 1.0, 0.0],
            [2.0, 2.0, 0.0],
        ];
        centers
            .iter()
            .map(|&c| CameraParams::new([1.0, 0.0, 0.0, 0.0], c, [1.0, 1.0]).unwrap())
            .collect()
    }

    fn varied_cameras(n: usize) -> Vec<CameraParams> {
        (0..n)
            .map(|t| {
                let q = quat_from_axis_angle(&[0.3, 1.0, 0.2], 0.2 * t as f64).unwrap();
                let tf = t as f64;
                CameraParams::new(q, [tf, 0.5 * tf * tf, 2.0 - 0.3 * tf], [1.1, 0.9]).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_errors() {
        let gt = varied_cameras(5);
        let report = pose_metrics(&gt, &gt).unwrap();
        assert!(report.ate < 1e-12, "ate {}", report.ate);
        assert!(report.rpe_rot_deg < 1e-6, "rpe_r {}", report.rpe_rot_deg);
        assert!(report.rpe_trans < 1e-12, "rpe_t {}", report.rpe_trans);
        assert_eq!(report.rpe_scale, 1.0);
    }

    #[test]
    fn similarity_warped_trajectory_scores_zero_everywhere() {
        let gt = varied_cameras(6);
        let rs = crate::camera::quat_to_rotmat(
            &quat_from_axis_angle(&[0.5, -1.0, 0.8], 1.1).unwrap(),
        )
        .unwrap();
        let warp = Similarity { scale: 3.0, rotation: rs, translation: Vector3::new(-2.0, 4.0, 1.0) };
        let qs = quat_from_axis_angle(&[0.5, -1.0, 0.8], 1.1).unwrap();
        let pred: Vec<CameraParams> = gt
            .iter()
            .map(|c| {
                let center = warp.apply(&c.translation);
                let q = quat_mul(&qs, &c.quaternion);
                CameraParams::new(q, center, c.fov).unwrap()
            })
            .collect();
        let report = pose_metrics(&pred, &gt).unwrap();
        assert!(report.ate < 1e-9, "ate {}", report.ate);
        assert!(report.rpe_rot_deg < 1e-6, "rpe_r {}", report.rpe_rot_deg);
        assert!(report.rpe_trans < 1e-9, "rpe_t {}", report.rpe_trans);
        assert!((report.rpe_scale - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn planted_rotation_drift_shows_up_in_rpe_only_for_touched_pairs() {
        let gt = varied_cameras(5);
        let alpha_deg = 2.0_f64;
        let j = quat_from_axis_angle(&[0.0, 0.0, 1.0], alpha_deg.to_radians()).unwrap();
        let mut pred = gt.clone();
        pred[2] = CameraParams::new(
            quat_mul(&j, &gt[2].quaternion),
            gt[2].translation,
            gt[2].fov,
        )
        .unwrap();
        let report = pose_metrics(&pred, &gt).unwrap();
        // Pairs (1,2) and (2,3) each see the planted angle; (0,1) and (3,4)
        // are clean, so the RMS is alpha * sqrt(2/4).
        let expected = alpha_deg * (2.0f64 / 4.0).sqrt();
        assert!(
            (report.rpe_rot_deg - expected).abs() < 1e-9,
            "rpe_r {} expected {expected}",
            report.rpe_rot_deg
        );
    }

    #[test]
    fn single_step_translation_drift_gives_exact_rmse() {
        let gt = zigzag_cameras();
        let mut pred = gt.clone();
        // Shift the last two centers together: only the step into pose 3
        // drifts, by a unit along z.
        for cam in &mut pred[3..] {
            cam.translation[2] += 1.0;
        }
        let report = pose_metrics(&pred, &gt).unwrap();
        assert_eq!(report.rpe_scale, 1.0);
        assert_eq!(report.rpe_trans, 0.5);
        assert!(report.rpe_rot_deg < 1e-6);
    }

    #[test]
    fn center_scaled_trajectory_has_zero_translation_drift() {
        let gt = varied_cameras(5);
        let pred: Vec<CameraParams> = gt
            .iter()
            .map(|c| {
                let t = [c.translation[0] * 3.0, c.translation[1] * 3.0, c.translation[2] * 3.0];
                CameraParams::new(c.quaternion, t, c.fov).unwrap()
            })
            .collect();
        let report = pose_metrics(&pred, &gt).unwrap();
        assert!(report.ate < 1e-9, "ate {}", report.ate);
        assert!(report.rpe_trans < 1e-12, "rpe_t {}", report.rpe_trans);
    }

    #[test]
    fn pose_metrics_rejects_mismatched_or_short_trajectories() {
        let gt = varied_cameras(5);
        assert!(matches!(
            pose_metrics(&gt[..4], &gt),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(pose_metrics(&gt[..2], &gt[..2]).is_err());
    }

    #[test]
    fn fov_rel_averages_axiswise_relative_errors() {
        let gt = vec![
            CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], [1.0, 0.8]).unwrap(),
            CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], [1.0, 0.8]).unwrap(),
        ];
        let pred = vec![
            CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], [1.1, 0.8]).unwrap(),
            CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], [1.0, 0.8]).unwrap(),
        ];
        let e = fov_rel(&pred, &gt).unwrap();
        assert!((e - 0.025).abs() < 1e-12, "fov_rel {e}");
        assert_eq!(fov_rel(&gt, &gt).unwrap(), 0.0);
    }

    // --- rank aggregation ---

    fn col(name: &str, higher: bool, cells: &[(&str, f64)]) -> MetricColumn {
        MetricColumn {
            name: name.into(),
            higher_better: higher,
            values: cells.iter().map(|(m, v)| (m.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn rank_aggregate_uses_dense_ranks_and_direction() {
        let table = MetricTable {
            columns: vec![
                col("err", false, &[("a", 1.0), ("b", 2.0), ("c", 2.0)]),
                col("score", true, &[("a", 0.5), ("b", 0.9), ("c", 0.1)]),
            ],
        };
        let ranks = rank_aggregate(&table).unwrap();
        // err: a=1, b=2, c=2 (dense); score: b=1, a=2, c=3.
        assert_eq!(ranks[0], ("a".to_string(), 1.5));
        assert_eq!(ranks[1], ("b".to_string(), 1.5));
        assert_eq!(ranks[2], ("c".to_string(), 2.5));
    }

    #[test]
    fn rank_aggregate_rejects_nan_and_mismatched_methods() {
        let table = MetricTable {
            columns: vec![col("err", false, &[("a", 1.0), ("b", f64::NAN)])],
        };
        match rank_aggregate(&table) {
            Err(Error::NanCell { method, metric }) => {
                assert_eq!(method, "b");
                assert_eq!(metric, "err");
            }
            other => panic!("expected NanCell, got {other:?}"),
        }
        let table = MetricTable {
            columns: vec![
                col("err", false, &[("a", 1.0), ("b", 2.0)]),
                col("score", true, &[("a", 1.0), ("c", 2.0)]),
            ],
        };
        assert!(matches!(rank_aggregate(&table), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn metric_tables_round_trip_through_json() {
        let table = MetricTable {
            columns: vec![col("err", false, &[("a", 1.25), ("b", 2.5)])],
        };
        let text = serde_json::to_string(&table).unwrap();
        let back: MetricTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back.columns[0].name, "err");
        assert!(!back.columns[0].higher_better);
        assert_eq!(back.columns[0].values["a"], 1.25);
    }
}
