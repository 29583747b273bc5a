use nalgebra::{Matrix3, Vector3};

use super::GeometryConfig;
use crate::dataset::Pose;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// World-frame viewing direction `Rᵀ·(0, 0, −1)` of a world-to-camera pose.
pub fn view_direction(pose: &Pose) -> Vector3<f64> {
    let r = pose.rotation();
    // Rᵀ·(0,0,-1) is the negated third row of R.
    -Vector3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)])
}

/// Angle in degrees between the viewing directions of two poses, in `[0, 180]`.
///
/// Evaluated as `atan2(‖a×b‖, a·b)`, which equals the arccos of the normalized
/// dot product but keeps full precision near 0° and 180° and cannot yield NaN.
pub fn view_angle(pose_a: &Pose, pose_b: &Pose) -> f64 {
    let a = view_direction(pose_a);
    let b = view_direction(pose_b);
    a.cross(&b).norm().atan2(a.dot(&b)).to_degrees()
}

/// View criterion: `φ_view ≤ τ_view`.
pub fn check_view_criterion(phi_view_deg: f64, config: &GeometryConfig) -> bool {
    phi_view_deg <= config.tau_view_deg
}

/// Rotation from camera A to camera B, `R_B · R_Aᵀ`, for world-to-camera poses.
pub fn relative_rotation(pose_a: &Pose, pose_b: &Pose) -> Matrix3<f64> {
    pose_b.rotation() * pose_a.rotation().transpose()
}

/// Geodesic distance on SO(3) in radians, `arccos((tr(R₁R₂ᵀ) − 1) / 2)` in `[0, π]`.
///
/// The cosine is clamped to `[−1, 1]` and paired with the sine taken from the
/// skew-symmetric part of `R₁R₂ᵀ`, so identical inputs give exactly zero.
pub fn geodesic_distance(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let m = r1 * r2.transpose();
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    let sin = (axis.norm() / 2.0).min(1.0);
    sin.atan2(cos)
}

/// Rotation criterion: `d_R · 180/π < τ_dev`.
pub fn check_geometry_criterion(d_r: f64, config: &GeometryConfig) -> bool {
    d_r * 180.0 / std::f64::consts::PI < config.tau_dev_deg
}
