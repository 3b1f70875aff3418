//! Pinhole camera model: quaternion rotations, field-of-view intrinsics and
//! the unprojection / projection pair.
//!
//! Conventions fixed across the crate:
//! - quaternions are (w, x, y, z), normalized on ingestion; q and -q encode
//!   the same rotation (double cover),
//! - rotation and translation are camera-to-world: X_world = R * X_cam + t,
//!   so `translation` is the camera center in world coordinates,
//! - pixel (row v, col u) unprojects through its center (u + 0.5, v + 0.5, 1),
//! - field of view stores the full angles (theta_x, theta_y) in radians with
//!   fx = W / (2 tan(theta_x / 2)) and principal point fixed at the image
//!   center (cx = W/2, cy = H/2),
//! - depth is the camera-space z coordinate, not the ray length.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::{check_mask_shape, ScalarGrid, ValidMask, VecGrid};

const QUAT_NORM_FLOOR: f64 = 1e-12;

/// Camera pose and field of view for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraParams {
    /// Rotation as (w, x, y, z), unit norm after construction.
    pub quaternion: [f64; 4],
    /// Camera center in world coordinates.
    pub translation: [f64; 3],
    /// Full horizontal and vertical field of view in radians, each in (0, pi).
    pub fov: [f64; 2],
}

impl CameraParams {
    /// Validates the field of view, rejects a near-zero quaternion and stores
    /// the quaternion normalized.
    pub fn new(quaternion: [f64; 4], translation: [f64; 3], fov: [f64; 2]) -> Result<Self> {
        for &theta in &fov {
            if !(theta > 0.0 && theta < std::f64::consts::PI) {
                return Err(Error::FovOutOfRange { value: theta });
            }
        }
        let quaternion = quat_normalize(&quaternion)?;
        Ok(Self { quaternion, translation, fov })
    }

    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        quat_to_rotmat(&self.quaternion)
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.translation[0], self.translation[1], self.translation[2])
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Normalizes a quaternion, rejecting norms below 1e-12.
pub fn quat_normalize(q: &[f64; 4]) -> Result<[f64; 4]> {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(norm > QUAT_NORM_FLOOR) {
        return Err(Error::DegenerateQuaternion { norm });
    }
    // Already-unit quaternions pass through bit-for-bit, so normalizing is
    // idempotent: round trips through storage cannot drift the rotation.
    if (norm - 1.0).abs() <= 1e-12 {
        return Ok(*q);
    }
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

/// Hamilton product a * b in (w, x, y, z) layout.
pub fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Unit quaternion for a rotation of `angle` radians about `axis`.
pub fn quat_from_axis_angle(axis: &[f64; 3], angle: f64) -> Result<[f64; 4]> {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if !(norm > QUAT_NORM_FLOOR) {
        return Err(Error::InvalidInput("axis-angle axis has near-zero norm".into()));
    }
    let half = 0.5 * angle;
    let s = half.sin() / norm;
    Ok([half.cos(), axis[0] * s, axis[1] * s, axis[2] * s])
}

/// Rotation matrix from a (w, x, y, z) quaternion. The input is normalized
/// internally, so any 4-vector with norm above 1e-12 is accepted.
pub fn quat_to_rotmat(q: &[f64; 4]) -> Result<Matrix3<f64>> {
    let n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if !(n2.sqrt() > QUAT_NORM_FLOOR) {
        return Err(Error::DegenerateQuaternion { norm: n2.sqrt() });
    }
    Ok(homogeneous_quat_matrix(q) / n2)
}

/// Rotation matrix plus its Jacobian with respect to the four raw quaternion
/// components, including the effect of the internal normalization. Writing
/// R(q) = M(q) / |q|^2 with M quadratic in q gives
/// dR/dq_k = dM/dq_k / |q|^2 - R * (2 q_k / |q|^2).
pub fn quat_to_rotmat_jacobian(q: &[f64; 4]) -> Result<(Matrix3<f64>, [Matrix3<f64>; 4])> {
    let n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if !(n2.sqrt() > QUAT_NORM_FLOOR) {
        return Err(Error::DegenerateQuaternion { norm: n2.sqrt() });
    }
    let r = homogeneous_quat_matrix(q) / n2;
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dm = [
        Matrix3::new(2.0 * w, -2.0 * z, 2.0 * y, 2.0 * z, 2.0 * w, -2.0 * x, -2.0 * y, 2.0 * x, 2.0 * w),
        Matrix3::new(2.0 * x, 2.0 * y, 2.0 * z, 2.0 * y, -2.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -2.0 * x),
        Matrix3::new(-2.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 2.0 * y, 2.0 * z, -2.0 * w, 2.0 * z, -2.0 * y),
        Matrix3::new(-2.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -2.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 2.0 * z),
    ];
    let mut jac = [Matrix3::zeros(); 4];
    for k in 0..4 {
        jac[k] = dm[k] / n2 - r * (2.0 * q[k] / n2);
    }
    Ok((r, jac))
}

/// M(q): the quaternion rotation matrix before division by |q|^2.
fn homogeneous_quat_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

/// Quaternion (w, x, y, z) from a proper rotation matrix, largest-pivot
/// branch for stability. The result has w >= 0.
pub fn quat_from_rotmat(r: &Matrix3<f64>) -> [f64; 4] {
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let mut q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        ]
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        [
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        ]
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        [
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        ]
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        [
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        ]
    };
    if q[0] < 0.0 {
        for c in &mut q {
            *c = -*c;
        }
    }
    q
}

/// Intrinsics from full field-of-view angles and image size:
/// fx = W / (2 tan(theta_x / 2)), cx = W / 2 (likewise for y).
pub fn fov_to_intrinsics(fov: &[f64; 2], width: usize, height: usize) -> Result<Intrinsics> {
    for &theta in fov {
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Err(Error::FovOutOfRange { value: theta });
        }
    }
    let w = width as f64;
    let h = height as f64;
    Ok(Intrinsics {
        fx: w / (2.0 * (fov[0] / 2.0).tan()),
        fy: h / (2.0 * (fov[1] / 2.0).tan()),
        cx: w / 2.0,
        cy: h / 2.0,
    })
}

/// Inverse of `fov_to_intrinsics`: theta_x = 2 atan(W / (2 fx)).
pub fn intrinsics_to_fov(k: &Intrinsics, width: usize, height: usize) -> Result<[f64; 2]> {
    if !(k.fx > 0.0) {
        return Err(Error::NonPositiveFocal { value: k.fx });
    }
    if !(k.fy > 0.0) {
        return Err(Error::NonPositiveFocal { value: k.fy });
    }
    Ok([
        2.0 * (width as f64 / (2.0 * k.fx)).atan(),
        2.0 * (height as f64 / (2.0 * k.fy)).atan(),
    ])
}

/// Lifts a depth map to a world-space point map:
/// P(p) = R * (D(p) * K^-1 p) + t with p the homogeneous pixel center.
/// Unmasked pixels come back as NaN; masked pixels must carry finite positive
/// depth, otherwise the offending pixels are counted and reported.
pub fn unproject(depth: &ScalarGrid, camera: &CameraParams, mask: &ValidMask) -> Result<VecGrid> {
    check_mask_shape(depth, mask, "unproject")?;
    let k = fov_to_intrinsics(&camera.fov, depth.width, depth.height)?;
    let r = quat_to_rotmat(&camera.quaternion)?;
    let t = camera.center();

    let bad = (0..depth.pixels())
        .filter(|&p| mask.is_set(p) && !(depth.values[p] > 0.0 && depth.values[p].is_finite()))
        .count();
    if bad > 0 {
        return Err(Error::NonPositiveDepth { count: bad });
    }

    let mut out = vec![f64::NAN; depth.pixels() * 3];
    for row in 0..depth.height {
        for col in 0..depth.width {
            let p = row * depth.width + col;
            if !mask.is_set(p) {
                continue;
            }
            let ray = Vector3::new(
                (col as f64 + 0.5 - k.cx) / k.fx,
                (row as f64 + 0.5 - k.cy) / k.fy,
                1.0,
            );
            let world = r * (ray * depth.values[p]) + t;
            out[p * 3] = world.x;
            out[p * 3 + 1] = world.y;
            out[p * 3 + 2] = world.z;
        }
    }
    VecGrid::new(depth.height, depth.width, 3, out)
}

/// Inverse of `unproject`: world points to pixel coordinates and camera-space
/// depth. Points behind the camera yield negative depth; a point at the
/// camera center divides by zero and yields non-finite pixel coordinates,
/// which callers must treat as invalid.
pub fn project(points: &VecGrid, camera: &CameraParams) -> Result<(VecGrid, ScalarGrid)> {
    if points.channels != 3 {
        return Err(Error::ShapeMismatch(format!(
            "project expects 3-channel points, got {} channels",
            points.channels
        )));
    }
    let k = fov_to_intrinsics(&camera.fov, points.width, points.height)?;
    let r = quat_to_rotmat(&camera.quaternion)?;
    let t = camera.center();

    let mut pixels = vec![f64::NAN; points.pixels() * 2];
    let mut depths = vec![f64::NAN; points.pixels()];
    for p in 0..points.pixels() {
        let xyz = points.pixel(p);
        let world = Vector3::new(xyz[0], xyz[1], xyz[2]);
        let cam = r.transpose() * (world - t);
        depths[p] = cam.z;
        pixels[p * 2] = k.fx * cam.x / cam.z + k.cx;
        pixels[p * 2 + 1] = k.fy * cam.y / cam.z + k.cy;
    }
    Ok((
        VecGrid::new(points.height, points.width, 2, pixels)?,
        ScalarGrid::new(points.height, points.width, depths)?,
    ))
}

/// Camera-to-world rotation that looks from `eye` toward `target` with image
/// x right, y down, z forward in a world where +y is up. Falls back to +z as
/// the up reference when the view direction is vertical.
pub fn look_at_rotation(eye: &[f64; 3], target: &[f64; 3]) -> Result<Matrix3<f64>> {
    let forward = Vector3::new(target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]);
    let norm = forward.norm();
    if !(norm > QUAT_NORM_FLOOR) {
        return Err(Error::InvalidInput("look-at eye and target coincide".into()));
    }
    let z = forward / norm;
    let mut up = Vector3::new(0.0, 1.0, 0.0);
    if z.cross(&up).norm() < 1e-9 {
        up = Vector3::new(0.0, 0.0, 1.0);
    }
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    Ok(Matrix3::from_columns(&[x, y, z]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
        [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> CameraParams {
        CameraParams::new(
            random_quat(rng),
            [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ],
            [rng.gen_range(0.4..2.6), rng.gen_range(0.4..2.6)],
        )
        .unwrap()
    }

    // Oracle: rotate a vector through the quaternion sandwich product
    // q (0, v) q^-1 instead of the matrix formula.
    fn sandwich_rotate(q: &[f64; 4], v: &[f64; 3]) -> [f64; 3] {
        let conj = [q[0], -q[1], -q[2], -q[3]];
        let vq = [0.0, v[0], v[1], v[2]];
        let out = quat_mul(&quat_mul(q, &vq), &conj);
        [out[1], out[2], out[3]]
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let r = quat_to_rotmat(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((r - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn ninety_degree_z_rotation_matches_hand_values() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = quat_to_rotmat(&[h, 0.0, 0.0, h]).unwrap();
        // Rotating +x by 90 degrees about +z lands on +y.
        let v = r * Vector3::new(1.0, 0.0, 0.0);
        assert!((v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12, "{v:?}");
    }

    #[test]
    fn rotation_matches_sandwich_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = quat_normalize(&random_quat(&mut rng)).unwrap();
            let r = quat_to_rotmat(&q).unwrap();
            let v = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let by_matrix = r * Vector3::new(v[0], v[1], v[2]);
            let by_sandwich = sandwich_rotate(&q, &v);
            for c in 0..3 {
                assert!(
                    (by_matrix[c] - by_sandwich[c]).abs() < 1e-12,
                    "component {c}: {} vs {}",
                    by_matrix[c],
                    by_sandwich[c]
                );
            }
        }
    }

    #[test]
    fn rotation_is_orthonormal_for_random_quaternions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let r = quat_to_rotmat(&random_quat(&mut rng)).unwrap();
            let err = (r.transpose() * r - Matrix3::identity()).norm();
            assert!(err < 1e-12, "orthonormality error {err}");
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn opposite_quaternions_give_the_same_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_quat(&mut rng);
        let neg = [-q[0], -q[1], -q[2], -q[3]];
        let a = quat_to_rotmat(&q).unwrap();
        let b = quat_to_rotmat(&neg).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn near_zero_quaternion_is_rejected() {
        let err = quat_to_rotmat(&[1e-13, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("degenerate quaternion"), "{err}");
    }

    #[test]
    fn quat_from_rotmat_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = quat_normalize(&random_quat(&mut rng)).unwrap();
            let r = quat_to_rotmat(&q).unwrap();
            let back = quat_from_rotmat(&r);
            let dot = q[0] * back[0] + q[1] * back[1] + q[2] * back[2] + q[3] * back[3];
            assert!((dot.abs() - 1.0).abs() < 1e-9, "dot {dot}");
        }
    }

    #[test]
    fn rotmat_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let eps = 1e-6;
        for _ in 0..20 {
            let q = random_quat(&mut rng);
            let (_, jac) = quat_to_rotmat_jacobian(&q).unwrap();
            for k in 0..4 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += eps;
                qm[k] -= eps;
                let fd = (quat_to_rotmat(&qp).unwrap() - quat_to_rotmat(&qm).unwrap()) / (2.0 * eps);
                assert!((fd - jac[k]).norm() < 1e-8, "component {k}");
            }
        }
    }

    #[test]
    fn fov_intrinsics_match_high_precision_closed_form() {
        // 518 / (2 tan(0.5)) evaluated at 40 decimal digits.
        let expected_fx = 474.0963199235250470904;
        let k = fov_to_intrinsics(&[1.0, 1.0], 518, 518).unwrap();
        assert!(
            ((k.fx - expected_fx) / expected_fx).abs() < 1e-9,
            "fx {} vs {}",
            k.fx,
            expected_fx
        );
        assert_eq!(k.cx, 259.0);
        assert_eq!(k.cy, 259.0);
    }

    #[test]
    fn fov_round_trips_through_intrinsics() {
        for i in 0..60 {
            let theta = 0.05 + (3.0 - 0.05) * (i as f64 / 59.0);
            let k = fov_to_intrinsics(&[theta, theta], 640, 480).unwrap();
            let fov = intrinsics_to_fov(&k, 640, 480).unwrap();
            assert!((fov[0] - theta).abs() < 1e-12, "theta {theta}: {}", fov[0]);
            assert!((fov[1] - theta).abs() < 1e-12);
        }
    }

    #[test]
    fn fov_shrinks_monotonically_as_focal_grows() {
        // 2 atan(518 / (2e6)) evaluated at 40 decimal digits.
        let expected = 5.179999884173477995189e-4;
        let mut last = f64::INFINITY;
        for fx in [1e3, 1e4, 1e5, 1e6] {
            let k = Intrinsics { fx, fy: fx, cx: 259.0, cy: 259.0 };
            let fov = intrinsics_to_fov(&k, 518, 518).unwrap();
            assert!(fov[0] < last && fov[0] > 0.0);
            last = fov[0];
        }
        let k = Intrinsics { fx: 1e6, fy: 1e6, cx: 259.0, cy: 259.0 };
        let fov = intrinsics_to_fov(&k, 518, 518).unwrap();
        assert!(((fov[0] - expected) / expected).abs() < 1e-12, "{}", fov[0]);
    }

    #[test]
    fn fov_bounds_are_enforced() {
        assert!(fov_to_intrinsics(&[0.0, 1.0], 10, 10).is_err());
        assert!(fov_to_intrinsics(&[1.0, std::f64::consts::PI], 10, 10).is_err());
        assert!(intrinsics_to_fov(&Intrinsics { fx: 0.0, fy: 1.0, cx: 0.0, cy: 0.0 }, 4, 4).is_err());
    }

    #[test]
    fn identity_camera_unprojects_two_by_two_to_hand_values() {
        // theta = pi/2 and a 2x2 image give fx = fy = 1, cx = cy = 1, so the
        // pixel-center rays are (+-0.5, +-0.5, 1) and unit depth keeps them.
        let cam = CameraParams::new(
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
        )
        .unwrap();
        let depth = ScalarGrid::filled(2, 2, 1.0);
        let mask = ValidMask::all_valid(2, 2);
        let pts = unproject(&depth, &cam, &mask).unwrap();
        let expected = [
            [-0.5, -0.5, 1.0],
            [0.5, -0.5, 1.0],
            [-0.5, 0.5, 1.0],
            [0.5, 0.5, 1.0],
        ];
        for p in 0..4 {
            for c in 0..3 {
                assert!(
                    (pts.pixel(p)[c] - expected[p][c]).abs() < 1e-15,
                    "pixel {p} channel {c}: {}",
                    pts.pixel(p)[c]
                );
            }
        }
    }

    #[test]
    fn translation_shifts_unprojected_points_additively() {
        let base = CameraParams::new(
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
        )
        .unwrap();
        let mut moved = base.clone();
        moved.translation = [1.0, -2.0, 3.0];
        let depth = ScalarGrid::filled(2, 2, 2.5);
        let mask = ValidMask::all_valid(2, 2);
        let a = unproject(&depth, &base, &mask).unwrap();
        let b = unproject(&depth, &moved, &mask).unwrap();
        for p in 0..4 {
            assert!((b.pixel(p)[0] - a.pixel(p)[0] - 1.0).abs() < 1e-15);
            assert!((b.pixel(p)[1] - a.pixel(p)[1] + 2.0).abs() < 1e-15);
            assert!((b.pixel(p)[2] - a.pixel(p)[2] - 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unmasked_pixels_come_back_nan() {
        let cam = CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], [1.0, 1.0]).unwrap();
        let depth = ScalarGrid::new(1, 2, vec![1.0, f64::NAN]).unwrap();
        let mask = ValidMask::new(1, 2, vec![true, false]).unwrap();
        let pts = unproject(&depth, &cam, &mask).unwrap();
        assert!(pts.pixel(0).iter().all(|v| v.is_finite()));
        assert!(pts.pixel(1).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn nonpositive_masked_depth_reports_offender_count() {
        let cam = CameraParams::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], [1.0, 1.0]).unwrap();
        let depth = ScalarGrid::new(1, 3, vec![1.0, -2.0, 0.0]).unwrap();
        let mask = ValidMask::all_valid(1, 3);
        match unproject(&depth, &cam, &mask) {
            Err(Error::NonPositiveDepth { count }) => assert_eq!(count, 2),
            other => panic!("expected NonPositiveDepth, got {other:?}"),
        }
    }

    #[test]
    fn project_inverts_unproject_across_depth_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..30 {
            let cam = random_camera(&mut rng);
            let (h, w) = (5, 7);
            let values: Vec<f64> = (0..h * w)
                .map(|_| {
                    let exp = rng.gen_range(-3.0..4.0);
                    10f64.powf(exp) // depths from 1e-3 to 1e4
                })
                .collect();
            let depth = ScalarGrid::new(h, w, values).unwrap();
            let mask = ValidMask::all_valid(h, w);
            let pts = unproject(&depth, &cam, &mask).unwrap();
            let (pix, d) = project(&pts, &cam).unwrap();
            for row in 0..h {
                for col in 0..w {
                    let p = row * w + col;
                    let du = pix.values[p * 2] - (col as f64 + 0.5);
                    let dv = pix.values[p * 2 + 1] - (row as f64 + 0.5);
                    let rel = (d.values[p] - depth.values[p]).abs() / depth.values[p];
                    assert!(
                        du.abs() < 1e-9 && dv.abs() < 1e-9 && rel < 1e-9,
                        "trial {trial} pixel {p}: du={du} dv={dv} rel={rel}"
                    );
                }
            }
        }
    }

    #[test]
    fn point_at_camera_center_projects_non_finite() {
        let cam = CameraParams::new([1.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [1.0, 1.0]).unwrap();
        let pts = VecGrid::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let (pix, d) = project(&pts, &cam).unwrap();
        assert_eq!(d.values[0], 0.0);
        assert!(!pix.values[0].is_finite() || !pix.values[1].is_finite());
    }

    #[test]
    fn world_frame_shift_moves_projections_consistently() {
        // Translating both the camera and the points by the same offset
        // leaves pixels and depths unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cam = random_camera(&mut rng);
        let depth = ScalarGrid::filled(3, 3, 2.0);
        let mask = ValidMask::all_valid(3, 3);
        let pts = unproject(&depth, &cam, &mask).unwrap();

        let shift = [0.7, -1.1, 2.2];
        let mut cam2 = cam.clone();
        for c in 0..3 {
            cam2.translation[c] += shift[c];
        }
        let mut moved = pts.clone();
        for p in 0..moved.pixels() {
            for c in 0..3 {
                moved.values[p * 3 + c] += shift[c];
            }
        }
        let (pix_a, d_a) = project(&pts, &cam).unwrap();
        let (pix_b, d_b) = project(&moved, &cam2).unwrap();
        for i in 0..pix_a.values.len() {
            assert!((pix_a.values[i] - pix_b.values[i]).abs() < 1e-9);
        }
        for i in 0..d_a.values.len() {
            assert!((d_a.values[i] - d_b.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn look_at_rotation_is_proper_and_points_forward() {
        let r = look_at_rotation(&[3.0, 2.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let fwd = r * Vector3::new(0.0, 0.0, 1.0);
        let expected = Vector3::new(-3.0, -2.0, -1.0).normalize();
        assert!((fwd - expected).norm() < 1e-12);
        // Vertical view direction falls back to the +z up reference.
        assert!(look_at_rotation(&[0.0, 5.0, 0.0], &[0.0, 0.0, 0.0]).is_ok());
    }
}
