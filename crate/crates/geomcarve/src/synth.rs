//! Synthetic oracle scenes with exact ray-traced depth.
//!
//! Every generated sequence is internally consistent by construction: the
//! point map of each frame is the unprojection of its own depth map through
//! its own camera, so the depth/point consistency loss is exactly zero and
//! evaluation metrics against the clean sequence are exactly perfect. The
//! [`Corruption`] variants then break specific invariants one at a time,
//! which gives tests a known direction of failure to detect.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use std::f64::consts::TAU;
use std::str::FromStr;

use crate::camera::{
    fov_to_intrinsics, look_at_rotation, quat_from_axis_angle, quat_from_rotmat, quat_mul,
    unproject, CameraParams,
};
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidMask};
use crate::sample::{FrameSample, SequenceSample};
use nalgebra::Vector3;

/// Hits closer than this along the ray are discarded as invalid.
pub const NEAR_CLIP: f64 = 0.05;
/// Hits farther than this along the ray are discarded as invalid.
pub const FAR_CLIP: f64 = 22.0;

/// Built-in scene families, each exercising a different mask/geometry regime.
///
/// * `Plane` orbits above an infinite ground plane looking sideways, so the
///   upper image half misses the scene entirely (invalid pixels).
/// * `BoxRoom` orbits inside a closed room, so every pixel is valid.
/// * `SphereField` orbits outside a scatter of spheres, so rays frequently
///   pass between them (invalid pixels in irregular patterns).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenePreset {
    Plane,
    BoxRoom,
    SphereField,
}

impl ScenePreset {
    pub fn name(&self) -> &'static str {
        match self {
            ScenePreset::Plane => "plane",
            ScenePreset::BoxRoom => "box-room",
            ScenePreset::SphereField => "sphere-field",
        }
    }

    pub fn all() -> [ScenePreset; 3] {
        [ScenePreset::Plane, ScenePreset::BoxRoom, ScenePreset::SphereField]
    }
}

impl std::fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(ScenePreset::Plane),
            "box-room" => Ok(ScenePreset::BoxRoom),
            "sphere-field" => Ok(ScenePreset::SphereField),
            other => Err(Error::InvalidInput(format!(
                "unknown scene preset '{other}' (expected plane, box-room, or sphere-field)"
            ))),
        }
    }
}

/// A sphere by center and radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Analytic geometry a ray can be cast against.
#[derive(Clone, Debug, PartialEq)]
pub enum SceneGeometry {
    /// Horizontal plane `y = height`, infinite in x and z.
    Plane { height: f64 },
    /// Axis-aligned box; rays hit its walls from inside or outside.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Union of spheres; the closest hit wins.
    Spheres(Vec<Sphere>),
}

impl SceneGeometry {
    /// Smallest positive ray parameter `t` with `origin + t * dir` on the
    /// geometry, or `None` when the ray misses. `dir` need not be normalized:
    /// `t` is measured in units of `dir`, so a direction with unit z-component
    /// makes `t` the camera-space depth directly.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            SceneGeometry::Plane { height } => {
                if dir.y == 0.0 {
                    return None;
                }
                let t = (height - origin.y) / dir.y;
                if t > 0.0 {
                    Some(t)
                } else {
                    None
                }
            }
            SceneGeometry::Box { min, max } => {
                // Slab test. From inside the box the entry parameter is
                // negative and the exit parameter is the wall hit; from
                // outside the entry parameter is the hit if the intervals
                // overlap.
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                for a in 0..3 {
                    let (o, d) = (origin[a], dir[a]);
                    if d == 0.0 {
                        if o < min[a] || o > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let t0 = (min[a] - o) / d;
                    let t1 = (max[a] - o) / d;
                    t_enter = t_enter.max(t0.min(t1));
                    t_exit = t_exit.min(t0.max(t1));
                }
                if t_enter > t_exit || t_exit <= 0.0 {
                    return None;
                }
                if t_enter > 0.0 {
                    Some(t_enter)
                } else {
                    Some(t_exit)
                }
            }
            SceneGeometry::Spheres(spheres) => {
                let mut best: Option<f64> = None;
                for s in spheres {
                    let c = Vector3::new(s.center[0], s.center[1], s.center[2]);
                    let oc = origin - c;
                    let a = dir.dot(dir);
                    let b = oc.dot(dir);
                    let disc = b * b - a * (oc.dot(&oc) - s.radius * s.radius);
                    if disc < 0.0 {
                        continue;
                    }
                    let sqrt_disc = disc.sqrt();
                    // Near root first; the far root only matters when the
                    // origin sits inside the sphere.
                    let mut t = (-b - sqrt_disc) / a;
                    if t <= 0.0 {
                        t = (-b + sqrt_disc) / a;
                    }
                    if t > 0.0 && best.map_or(true, |bt| t < bt) {
                        best = Some(t);
                    }
                }
                best
            }
        }
    }
}

/// Ray-traces per-pixel depth for `camera` against `geometry`.
///
/// Rays go through pixel centers; the direction has unit z-component in
/// camera space, so the ray parameter of a hit equals its camera-space depth.
/// Misses and hits outside `[NEAR_CLIP, FAR_CLIP]` become invalid pixels with
/// NaN depth.
pub fn render_depth(
    geometry: &SceneGeometry,
    camera: &CameraParams,
    height: usize,
    width: usize,
) -> Result<(ScalarGrid, ValidMask)> {
    let k = fov_to_intrinsics(&camera.fov, width, height)?;
    let r = camera.rotation()?;
    let origin = camera.center();

    let mut depth = vec![f64::NAN; height * width];
    let mut flags = vec![false; height * width];
    for row in 0..height {
        for col in 0..width {
            let ray = Vector3::new(
                (col as f64 + 0.5 - k.cx) / k.fx,
                (row as f64 + 0.5 - k.cy) / k.fy,
                1.0,
            );
            let dir = r * ray;
            if let Some(t) = geometry.raycast(&origin, &dir) {
                if (NEAR_CLIP..=FAR_CLIP).contains(&t) {
                    let p = row * width + col;
                    depth[p] = t;
                    flags[p] = true;
                }
            }
        }
    }
    Ok((ScalarGrid::new(height, width, depth)?, ValidMask::new(height, width, flags)?))
}

/// Scene layout per preset: the traced geometry plus the camera orbit
/// (center, radius, and look-at target).
struct SceneLayout {
    geometry: SceneGeometry,
    orbit_center: [f64; 3],
    orbit_radius: f64,
    target: [f64; 3],
}

fn build_layout(preset: ScenePreset, rng: &mut ChaCha8Rng) -> SceneLayout {
    match preset {
        ScenePreset::Plane => SceneLayout {
            geometry: SceneGeometry::Plane { height: 0.0 },
            orbit_center: [0.0, 1.8, 0.0],
            orbit_radius: 2.5,
            target: [0.0, 1.8, 0.0],
        },
        ScenePreset::BoxRoom => SceneLayout {
            geometry: SceneGeometry::Box { min: [-4.0, -2.5, -4.0], max: [4.0, 2.5, 4.0] },
            orbit_center: [0.0, 0.0, 0.0],
            orbit_radius: 2.0,
            target: [0.0, 0.0, 0.0],
        },
        ScenePreset::SphereField => {
            let mut spheres = Vec::with_capacity(24);
            for _ in 0..24 {
                // Sphere centers stay inside a slab well within the orbit
                // radius, so the camera is always outside every sphere.
                let center = [
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-4.0..4.0),
                ];
                let radius = rng.gen_range(0.35..0.8);
                spheres.push(Sphere { center, radius });
            }
            SceneLayout {
                geometry: SceneGeometry::Spheres(spheres),
                orbit_center: [0.0, 0.0, 0.0],
                orbit_radius: 7.0,
                target: [0.0, 0.0, 0.0],
            }
        }
    }
}

/// Horizontal field of view shared by all presets, in radians.
const PRESET_FOV_X: f64 = 1.1;
/// Fraction of a full orbit the camera sweeps across a sequence.
const ORBIT_ARC: f64 = 0.6;

/// Generates a deterministic oracle sequence.
///
/// The camera orbits the preset's scene along a horizontal circle, starting
/// at a seed-dependent phase and sweeping 60% of a full turn across the
/// sequence; depth is exact ray-traced geometry, the point map is its own
/// unprojection, and both confidence maps are present and identically 1.
/// The same `(preset, frames, width, height, seed)` always yields the same
/// bits.
///
/// Errors on `frames == 0`, on images smaller than 8x8, and on any frame
/// where no ray hits the scene.
pub fn generate_scene(
    preset: ScenePreset,
    frames: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<SequenceSample> {
    if frames == 0 {
        return Err(Error::InvalidInput("scene needs at least one frame".into()));
    }
    if width < 8 || height < 8 {
        return Err(Error::InvalidInput(format!(
            "scene images must be at least 8x8, got {width}x{height}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = build_layout(preset, &mut rng);
    let phase = rng.gen_range(0.0..TAU);

    // Square pixels: the vertical field of view follows from the aspect ratio.
    let fov_y = 2.0 * ((height as f64 / width as f64) * (PRESET_FOV_X / 2.0).tan()).atan();
    let fov = [PRESET_FOV_X, fov_y];

    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let angle = phase + ORBIT_ARC * TAU * (t as f64) / (frames as f64);
        let eye = [
            layout.orbit_center[0] + layout.orbit_radius * angle.cos(),
            layout.orbit_center[1],
            layout.orbit_center[2] + layout.orbit_radius * angle.sin(),
        ];
        let rot = look_at_rotation(&eye, &layout.target)?;
        let camera = CameraParams::new(quat_from_rotmat(&rot), eye, fov)?;
        let (depth, mask) = render_depth(&layout.geometry, &camera, height, width)?;
        if mask.count_valid() == 0 {
            return Err(Error::InvalidInput(format!(
                "frame {t} of preset {preset} has no valid pixels"
            )));
        }
        let points = unproject(&depth, &camera, &mask)?;
        out.push(FrameSample {
            depth,
            points,
            mask,
            camera,
            conf_depth: Some(ScalarGrid::filled(height, width, 1.0)),
            conf_point: Some(ScalarGrid::filled(height, width, 1.0)),
        });
    }
    SequenceSample::new(out)
}

/// A single, targeted way of breaking an oracle sequence.
///
/// Each variant perturbs exactly one invariant so tests know what a detector
/// should and should not react to. All randomness is drawn from a ChaCha8
/// stream seeded by the variant's own `seed`, independent of the scene seed,
/// so the same corruption applies identically to any sequence shape.
#[derive(Clone, Debug, PartialEq)]
pub enum Corruption {
    /// Multiplies depth, points, and camera centers by one global factor
    /// (a change of metric scale; alignment-based losses are blind to it).
    GlobalScale(f64),
    /// Per-frame affine map of the predictions: depth and points in frame `t`
    /// become `a_t * v + b`, with `a_t = exp(U(-scale_spread, scale_spread))`
    /// shared by all channels and an independent `U(-shift_spread,
    /// shift_spread)` shift per channel (one for depth, three for points).
    /// Cameras are untouched, so per-frame alignment removes it exactly.
    PerFrameAffine { scale_spread: f64, shift_spread: f64, seed: u64 },
    /// Adds iid Gaussian noise to every depth and point value (valid or not).
    AdditiveNoise { sigma: f64, seed: u64 },
    /// Rotates each camera by `angle` radians about a per-frame random axis
    /// (world side). Translations, depth, and points are untouched, so only
    /// pose metrics react. With a fixed seed the axes are fixed, making
    /// rotation error monotone in `angle`.
    PoseJitter { angle: f64, seed: u64 },
    /// Adds a constant bias, in radians, to both field-of-view angles of
    /// every camera. The caller must keep the result inside (0, pi).
    FovBias(f64),
}

/// Applies `corruption` to a copy of `sample`. Deterministic in both inputs.
pub fn corrupt(sample: &SequenceSample, corruption: &Corruption) -> SequenceSample {
    match corruption {
        Corruption::GlobalScale(s) => sample.scaled(*s),
        Corruption::PerFrameAffine { scale_spread, shift_spread, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let frames = sample
                .frames()
                .iter()
                .map(|f| {
                    // Draw order per frame: scale, depth shift, x/y/z shifts.
                    let a = if *scale_spread > 0.0 {
                        rng.gen_range(-scale_spread..*scale_spread).exp()
                    } else {
                        1.0
                    };
                    let mut shift = [0.0; 4];
                    for s in &mut shift {
                        if *shift_spread > 0.0 {
                            *s = rng.gen_range(-shift_spread..*shift_spread);
                        }
                    }
                    let mut out = f.clone();
                    for v in &mut out.depth.values {
                        *v = a * *v + shift[0];
                    }
                    for (i, v) in out.points.values.iter_mut().enumerate() {
                        *v = a * *v + shift[1 + i % 3];
                    }
                    out
                })
                .collect();
            SequenceSample::new(frames).expect("affine corruption preserves shapes")
        }
        Corruption::AdditiveNoise { sigma, seed } => {
            let normal = Normal::new(0.0, sigma.max(0.0)).expect("nonnegative stddev");
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let frames = sample
                .frames()
                .iter()
                .map(|f| {
                    let mut out = f.clone();
                    for v in &mut out.depth.values {
                        *v += normal.sample(&mut rng);
                    }
                    for v in &mut out.points.values {
                        *v += normal.sample(&mut rng);
                    }
                    out
                })
                .collect();
            SequenceSample::new(frames).expect("noise corruption preserves shapes")
        }
        Corruption::PoseJitter { angle, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let frames = sample
                .frames()
                .iter()
                .map(|f| {
                    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
                    let jitter = quat_from_axis_angle(&axis, *angle).expect("unit axis");
                    let mut out = f.clone();
                    // World-side composition: the jitter rotates the camera's
                    // orientation within the world frame.
                    out.camera.quaternion = quat_mul(&jitter, &f.camera.quaternion);
                    out
                })
                .collect();
            SequenceSample::new(frames).expect("pose corruption preserves shapes")
        }
        Corruption::FovBias(bias) => {
            let frames = sample
                .frames()
                .iter()
                .map(|f| {
                    let mut out = f.clone();
                    out.camera.fov[0] += bias;
                    out.camera.fov[1] += bias;
                    out
                })
                .collect();
            SequenceSample::new(frames).expect("fov corruption preserves shapes")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::solve_sequence_scale;
    use crate::camera::project;
    use crate::loss::{loss_consistency, loss_frame_aligned, loss_reg};
    use crate::metrics::{depth_metrics, fov_rel, pose_metrics, DepthAlignment};
    use crate::loss::WeightMap;

    #[test]
    fn preset_names_round_trip_and_reject_unknowns() {
        for preset in ScenePreset::all() {
            assert_eq!(preset.name().parse::<ScenePreset>().unwrap(), preset);
        }
        let err = "dodecahedron".parse::<ScenePreset>().unwrap_err();
        assert!(err.to_string().contains("dodecahedron"));
    }

    #[test]
    fn generation_rejects_degenerate_requests() {
        assert!(generate_scene(ScenePreset::Plane, 0, 16, 12, 1).is_err());
        assert!(generate_scene(ScenePreset::Plane, 2, 7, 12, 1).is_err());
        assert!(generate_scene(ScenePreset::Plane, 2, 16, 7, 1).is_err());
    }

    #[test]
    fn every_preset_is_exactly_self_consistent() {
        for preset in ScenePreset::all() {
            let seq = generate_scene(preset, 3, 16, 12, 9).unwrap();
            for f in seq.frames() {
                let loss = loss_consistency(&f.points, &f.depth, &f.camera, &f.mask).unwrap();
                assert_eq!(loss.value, 0.0, "{preset} should unproject its own depth exactly");
                assert!(f.conf_depth.is_some() && f.conf_point.is_some());
            }
        }
    }

    #[test]
    fn projecting_generated_points_lands_on_pixel_centers() {
        let seq = generate_scene(ScenePreset::BoxRoom, 2, 16, 12, 4).unwrap();
        for f in seq.frames() {
            let (pix, depth) = project(&f.points, &f.camera).unwrap();
            for row in 0..12 {
                for col in 0..16 {
                    let p = row * 16 + col;
                    assert!((pix.values[p * 2] - (col as f64 + 0.5)).abs() < 1e-9);
                    assert!((pix.values[p * 2 + 1] - (row as f64 + 0.5)).abs() < 1e-9);
                    assert!((depth.values[p] - f.depth.values[p]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mask_regimes_match_their_presets() {
        let plane = generate_scene(ScenePreset::Plane, 3, 16, 12, 11).unwrap();
        let room = generate_scene(ScenePreset::BoxRoom, 3, 16, 12, 11).unwrap();
        let field = generate_scene(ScenePreset::SphereField, 3, 16, 12, 11).unwrap();
        for f in plane.frames() {
            let n = f.mask.count_valid();
            assert!(n > 0 && n < 16 * 12, "plane frames mix sky and ground, got {n}");
        }
        for f in room.frames() {
            assert_eq!(f.mask.count_valid(), 16 * 12, "a closed room has no sky");
        }
        for f in field.frames() {
            let n = f.mask.count_valid();
            assert!(n < 16 * 12, "rays must slip between spheres, got {n}");
        }
        assert!(
            field.frames().iter().any(|f| f.mask.count_valid() > 0),
            "some rays must hit spheres"
        );
    }

    #[test]
    fn invalid_pixels_carry_nan_depth_and_points() {
        let seq = generate_scene(ScenePreset::Plane, 1, 16, 12, 3).unwrap();
        let f = &seq.frames()[0];
        for p in 0..16 * 12 {
            if f.mask.is_set(p) {
                assert!(f.depth.values[p].is_finite() && f.depth.values[p] >= NEAR_CLIP);
                assert!(f.points.pixel(p).iter().all(|v| v.is_finite()));
            } else {
                assert!(f.depth.values[p].is_nan());
                assert!(f.points.pixel(p).iter().all(|v| v.is_nan()));
            }
        }
    }

    fn bits(values: &[f64]) -> Vec<u64> {
        values.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn same_seed_reproduces_identical_bits_and_new_seed_moves_the_orbit() {
        let a = generate_scene(ScenePreset::SphereField, 2, 16, 12, 21).unwrap();
        let b = generate_scene(ScenePreset::SphereField, 2, 16, 12, 21).unwrap();
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            assert_eq!(bits(&fa.depth.values), bits(&fb.depth.values));
            assert_eq!(bits(&fa.points.values), bits(&fb.points.values));
            assert_eq!(fa.mask.flags, fb.mask.flags);
            assert_eq!(fa.camera.quaternion, fb.camera.quaternion);
            assert_eq!(fa.camera.translation, fb.camera.translation);
            assert_eq!(fa.camera.fov, fb.camera.fov);
        }
        let c = generate_scene(ScenePreset::SphereField, 2, 16, 12, 22).unwrap();
        assert_ne!(a.frames()[0].camera.translation, c.frames()[0].camera.translation);
    }

    #[test]
    fn straight_down_camera_over_a_plane_sees_constant_depth() {
        // Looking straight down, every pixel ray has world y-component equal
        // to -1 (in ray-parameter units), so depth is exactly the camera
        // height everywhere.
        let height = 2.2;
        let eye = [0.4, height, -0.3];
        let rot = look_at_rotation(&eye, &[0.4, 0.0, -0.3]).unwrap();
        let camera =
            CameraParams::new(quat_from_rotmat(&rot), eye, [1.1, 0.9]).unwrap();
        let geom = SceneGeometry::Plane { height: 0.0 };
        let (depth, mask) = render_depth(&geom, &camera, 10, 14).unwrap();
        assert_eq!(mask.count_valid(), 10 * 14);
        for v in &depth.values {
            assert!((v - height).abs() < 1e-12, "expected {height}, got {v}");
        }
    }

    #[test]
    fn box_raycast_hits_walls_from_inside_and_outside() {
        let geom = SceneGeometry::Box { min: [-1.0, -1.0, -1.0], max: [1.0, 1.0, 1.0] };
        let inside = Vector3::new(0.0, 0.0, 0.0);
        // From the center along +x the exit wall is one unit away.
        assert_eq!(geom.raycast(&inside, &Vector3::new(1.0, 0.0, 0.0)), Some(1.0));
        let outside = Vector3::new(3.0, 0.0, 0.0);
        // From outside along -x the entry wall is two units away.
        assert_eq!(geom.raycast(&outside, &Vector3::new(-1.0, 0.0, 0.0)), Some(2.0));
        // Pointing away misses.
        assert_eq!(geom.raycast(&outside, &Vector3::new(1.0, 0.0, 0.0)), None);
        // An offset ray that passes beside the box misses.
        assert_eq!(
            geom.raycast(&Vector3::new(3.0, 2.5, 0.0), &Vector3::new(-1.0, 0.0, 0.0)),
            None
        );
    }

    #[test]
    fn sphere_raycast_returns_nearest_hit() {
        let geom = SceneGeometry::Spheres(vec![
            Sphere { center: [0.0, 0.0, 5.0], radius: 1.0 },
            Sphere { center: [0.0, 0.0, 9.0], radius: 1.0 },
        ]);
        let origin = Vector3::new(0.0, 0.0, 0.0);
        let dir = Vector3::new(0.0, 0.0, 1.0);
        // The closer sphere's front face at z = 4 wins over everything else.
        assert_eq!(geom.raycast(&origin, &dir), Some(4.0));
        // From inside a sphere the far surface is the hit.
        let inside = Vector3::new(0.0, 0.0, 5.0);
        assert_eq!(geom.raycast(&inside, &dir), Some(1.0));
        // A ray that misses both spheres returns nothing.
        assert_eq!(geom.raycast(&origin, &Vector3::new(0.0, 1.0, 0.0)), None);
    }

    #[test]
    fn global_scale_corruption_is_undone_by_the_inverse_median_ratio() {
        let seq = generate_scene(ScenePreset::BoxRoom, 3, 16, 12, 5).unwrap();
        let doubled = corrupt(&seq, &Corruption::GlobalScale(2.0));
        let weights: Vec<_> = seq.frames().iter().map(|_| WeightMap::unit(12, 16)).collect();
        let s = solve_sequence_scale(&doubled, &seq, &weights).unwrap();
        assert_eq!(s, 0.5, "halving exactly undoes doubling");
    }

    #[test]
    fn zero_noise_and_zero_spread_are_identities() {
        let seq = generate_scene(ScenePreset::Plane, 2, 16, 12, 6).unwrap();
        for corruption in [
            Corruption::AdditiveNoise { sigma: 0.0, seed: 1 },
            Corruption::PerFrameAffine { scale_spread: 0.0, shift_spread: 0.0, seed: 1 },
            Corruption::FovBias(0.0),
        ] {
            let out = corrupt(&seq, &corruption);
            for (fa, fb) in seq.frames().iter().zip(out.frames()) {
                assert_eq!(bits(&fa.depth.values), bits(&fb.depth.values), "{corruption:?}");
                assert_eq!(bits(&fa.points.values), bits(&fb.points.values), "{corruption:?}");
                assert_eq!(fa.camera.fov, fb.camera.fov, "{corruption:?}");
            }
        }
    }

    #[test]
    fn depth_error_grows_monotonically_with_noise() {
        let seq = generate_scene(ScenePreset::BoxRoom, 2, 16, 12, 7).unwrap();
        let mut last = -1.0;
        for sigma in [0.0, 0.01, 0.05, 0.1, 0.2] {
            let noisy = corrupt(&seq, &Corruption::AdditiveNoise { sigma, seed: 40 });
            let m = depth_metrics(&noisy, &seq, DepthAlignment::None).unwrap();
            assert!(
                m.rel > last,
                "rel should grow with sigma: {} after {last} at sigma {sigma}",
                m.rel
            );
            last = m.rel;
        }
    }

    #[test]
    fn per_frame_affine_corruption_vanishes_under_frame_alignment() {
        let seq = generate_scene(ScenePreset::BoxRoom, 3, 16, 12, 8).unwrap();
        let warped = corrupt(
            &seq,
            &Corruption::PerFrameAffine { scale_spread: 0.4, shift_spread: 0.5, seed: 3 },
        );
        let preds: Vec<_> = warped.frames().iter().map(|f| &f.depth).collect();
        let gts: Vec<_> = seq.frames().iter().map(|f| &f.depth).collect();
        let masks: Vec<_> = seq.frames().iter().map(|f| f.mask.clone()).collect();
        let weights: Vec<_> = seq.frames().iter().map(|_| WeightMap::unit(12, 16)).collect();

        let aligned = loss_frame_aligned(&preds, &gts, &weights, &masks).unwrap();
        assert!(aligned.value < 1e-9, "affine warp should fit exactly, got {}", aligned.value);

        let raw = loss_reg(&preds[0], &gts[0], &weights[0], &masks[0]).unwrap();
        assert!(raw.value > 0.01, "unaligned error should stay visible, got {}", raw.value);
    }

    #[test]
    fn pose_jitter_rotation_error_is_monotone_in_angle() {
        let seq = generate_scene(ScenePreset::BoxRoom, 4, 16, 12, 10).unwrap();
        let mut last = -1.0;
        for angle_deg in [0.1, 0.5, 1.0] {
            let jittered = corrupt(
                &seq,
                &Corruption::PoseJitter { angle: (angle_deg as f64).to_radians(), seed: 77 },
            );
            let pred: Vec<_> = jittered.frames().iter().map(|f| f.camera.clone()).collect();
            let gt: Vec<_> = seq.frames().iter().map(|f| f.camera.clone()).collect();
            let m = pose_metrics(&pred, &gt).unwrap();
            assert!(
                m.rpe_rot_deg > last,
                "rotation error should grow: {} after {last} at {angle_deg} deg",
                m.rpe_rot_deg
            );
            // Jitter never touches centers, so translation drift stays tiny.
            assert!(m.rpe_rot_deg > 0.0);
            last = m.rpe_rot_deg;
        }
    }

    #[test]
    fn fov_bias_shifts_both_axes_and_registers_in_the_metric() {
        let seq = generate_scene(ScenePreset::Plane, 2, 16, 12, 12).unwrap();
        let biased = corrupt(&seq, &Corruption::FovBias(0.1));
        for (fa, fb) in seq.frames().iter().zip(biased.frames()) {
            assert!((fb.camera.fov[0] - (fa.camera.fov[0] + 0.1)).abs() < 1e-15);
            assert!((fb.camera.fov[1] - (fa.camera.fov[1] + 0.1)).abs() < 1e-15);
        }
        let pred: Vec<_> = biased.frames().iter().map(|f| f.camera.clone()).collect();
        let gt: Vec<_> = seq.frames().iter().map(|f| f.camera.clone()).collect();
        let err = fov_rel(&pred, &gt).unwrap();
        assert!(err > 0.05, "a 0.1 rad bias must register, got {err}");
        assert_eq!(fov_rel(&gt, &gt).unwrap(), 0.0);
    }
}
