//! Epipolar and rotational geometry used by the ground-truth criteria.

mod decompose;
mod five_point;
mod ransac;
mod rotation;

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decompose::{decompose_essential, rotation_candidates, triangulated_depths};
pub use five_point::estimate_essential_minimal;
pub use ransac::{normalize_correspondences, ransac_essential, sampson_distance, RansacResult};
pub(crate) use ransac::ransac_normalized;
pub use rotation::{
    check_geometry_criterion, check_view_criterion, geodesic_distance, relative_rotation,
    skew, view_angle, view_direction,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate minimal sample")]
    DegenerateSample,
    #[error("insufficient matches: {found} < {required}")]
    InsufficientMatches { found: usize, required: usize },
    #[error("essential matrix estimation failed: no model with at least 5 inliers")]
    EstimationFailed,
    #[error("cheirality ambiguous: no pose candidate puts a majority of points in front of both cameras")]
    CheiralityAmbiguous,
    #[error("invalid geometry configuration: {0}")]
    InvalidConfig(String),
}

/// Thresholds and RANSAC budget for the two ground-truth criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Maximum view direction angle, inclusive.
    pub tau_view_deg: f64,
    /// Maximum rotation deviation between estimated and reference pose, exclusive.
    pub tau_dev_deg: f64,
    /// Sampson inlier threshold in pixels.
    pub tau_in: f64,
    pub ransac_max_iters: usize,
    pub ransac_confidence: f64,
    pub min_correspondences: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            tau_view_deg: 75.0,
            tau_dev_deg: 10.0,
            tau_in: 0.25,
            ransac_max_iters: 1000,
            ransac_confidence: 0.999,
            min_correspondences: 15,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            ("tau_view_deg", self.tau_view_deg),
            ("tau_dev_deg", self.tau_dev_deg),
            ("tau_in", self.tau_in),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GeometryError::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.ransac_max_iters == 0 {
            return Err(GeometryError::InvalidConfig("ransac_max_iters must be > 0".into()));
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return Err(GeometryError::InvalidConfig(format!(
                "ransac_confidence must be in (0, 1), got {}",
                self.ransac_confidence
            )));
        }
        if self.min_correspondences < 5 {
            return Err(GeometryError::InvalidConfig(
                "min_correspondences must be at least 5".into(),
            ));
        }
        Ok(())
    }
}

/// A correspondence in calibrated (normalized) image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedMatch {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl NormalizedMatch {
    pub fn new(xa: f64, ya: f64, xb: f64, yb: f64) -> Self {
        NormalizedMatch {
            a: Point2::new(xa, ya),
            b: Point2::new(xb, yb),
        }
    }

    pub fn bearing_a(&self) -> Vector3<f64> {
        Vector3::new(self.a.x, self.a.y, 1.0)
    }

    pub fn bearing_b(&self) -> Vector3<f64> {
        Vector3::new(self.b.x, self.b.y, 1.0)
    }

    /// `x̂_bᵀ E x̂_a`.
    pub fn epipolar_residual(&self, e: &Matrix3<f64>) -> f64 {
        self.bearing_b().dot(&(e * self.bearing_a()))
    }
}

/// Essential matrix mapping camera A to camera B: `x̂_bᵀ E x̂_a = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Builds `[t]ₓR` for `X_b = R X_a + t`, scaled to unit Frobenius norm.
    pub fn from_pose(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let e = skew(translation) * rotation;
        EssentialMatrix(e / e.norm())
    }

    /// Projects an arbitrary 3×3 matrix onto the essential manifold
    /// (singular values `(1, 1, 0)` up to the unit Frobenius scale).
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let mut sigma = Matrix3::zeros();
        sigma[(order[0], order[0])] = std::f64::consts::FRAC_1_SQRT_2;
        sigma[(order[1], order[1])] = std::f64::consts::FRAC_1_SQRT_2;
        EssentialMatrix(u * sigma * v_t)
    }

    /// Wraps a solver output without projection.
    pub(crate) fn from_raw(m: Matrix3<f64>) -> Self {
        EssentialMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let s = self.0.singular_values();
        let mut v = [s[0], s[1], s[2]];
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Rank-2 with two equal non-zero singular values, within `tol` relative.
    pub fn is_valid(&self, tol: f64) -> bool {
        let [s1, s2, s3] = self.singular_values();
        s1 > 0.0 && s3 < tol * s1 && (s1 - s2).abs() < tol * s1
    }
}

/// Relative pose from camera A to camera B with a unit-length translation direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation_dir: Vector3<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_thresholds() {
        let c = GeometryConfig::default();
        assert_eq!(c.tau_view_deg, 75.0);
        assert_eq!(c.tau_dev_deg, 10.0);
        assert_eq!(c.tau_in, 0.25);
        assert_eq!(c.ransac_max_iters, 1000);
        assert_eq!(c.ransac_confidence, 0.999);
        assert_eq!(c.min_correspondences, 15);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            GeometryConfig { tau_in: 0.0, ..Default::default() },
            GeometryConfig { ransac_confidence: 1.0, ..Default::default() },
            GeometryConfig { ransac_max_iters: 0, ..Default::default() },
            GeometryConfig { tau_view_deg: f64::NAN, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn projection_yields_valid_essential() {
        let m = Matrix3::new(1.0, 2.0, 3.0, -1.0, 0.5, 2.0, 0.3, 0.1, -0.7);
        let e = EssentialMatrix::project(&m);
        assert!(e.is_valid(1e-9));
        assert!((e.matrix().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_pose_satisfies_constraint() {
        let r = nalgebra::Rotation3::from_euler_angles(0.1, -0.2, 0.3).into_inner();
        let t = Vector3::new(0.3, -0.1, 1.0);
        let e = EssentialMatrix::from_pose(&r, &t);
        assert!(e.is_valid(1e-9));
        let xa = Vector3::new(0.4, -0.2, 3.0);
        let xb = r * xa + t;
        let m = NormalizedMatch::new(xa.x / xa.z, xa.y / xa.z, xb.x / xb.z, xb.y / xb.z);
        assert!(m.epipolar_residual(e.matrix()).abs() < 1e-15);
    }
}
