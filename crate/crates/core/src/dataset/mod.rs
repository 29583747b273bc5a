//! Scene inputs: manifests, camera poses, A/B splits and the binary
//! descriptor / correspondence file formats shared with the extractor.

mod codec;
mod colmap;
mod kitti;
mod manifest;
mod split;
mod timing;

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use codec::{
    read_correspondence_file, read_correspondence_path, read_descriptor_file,
    read_descriptor_path, write_correspondence_file, write_correspondence_path,
    write_descriptor_file, write_descriptor_path, CORRESPONDENCE_MAGIC, DESCRIPTOR_MAGIC,
    FORMAT_VERSION,
};
pub use colmap::{parse_colmap_cameras, parse_colmap_images, parse_colmap_poses, ColmapImage};
pub use kitti::{
    parse_kitti_calib, parse_kitti_poses, parse_kitti_poses_only, KITTI_ROTATION_TOLERANCE,
};
pub use manifest::{load_scene, DatasetTag, PoseSource, Scene, SceneImage, SceneManifest};
pub use split::{split_indices, split_scene, SplitPolicy, MAX_SUBSET_SIZE, MIN_SUBSET_SIZE};
pub use timing::{ImageTiming, TimingSidecar};

/// Tolerance on `‖RᵀR − I‖_F` and `|det R − 1|` for a valid [`Pose`].
pub const POSE_TOLERANCE: f64 = 1e-6;

/// Which of the two disjoint image sets an image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    A,
    B,
}

impl Subset {
    pub fn as_byte(self) -> u8 {
        match self {
            Subset::A => b'A',
            Subset::B => b'B',
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'A' => Some(Subset::A),
            b'B' => Some(Subset::B),
            _ => None,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::A => "A",
            Subset::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub file_path: String,
    pub subset: Subset,
    pub width: u32,
    pub height: u32,
    /// Key into the pose source. COLMAP: image name (defaults to `file_path`).
    /// KITTI: frame index (defaults to the integer file stem).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_key: Option<String>,
}

/// Pinhole intrinsics in pixels, zero skew, no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidIntrinsics("principal point not finite".into()));
        }
        Ok(())
    }
}

/// World-to-camera rigid transform: `x_cam = rotation · x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, POSE_TOLERANCE)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("translation not finite".into()));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds the world-to-camera pose from a camera-to-world rotation and camera center.
    pub fn from_camera_to_world(rotation_cw: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let rotation = rotation_cw.transpose();
        let translation = -(rotation * center);
        Pose::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates, `−Rᵀt`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

pub(crate) fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidPose("rotation not finite".into()));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho >= tol {
        return Err(Error::InvalidPose(format!(
            "rotation not orthonormal: |RᵀR - I|_F = {ortho:e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() >= tol {
        return Err(Error::InvalidPose(format!(
            "rotation determinant {det} is not +1"
        )));
    }
    Ok(())
}

/// Global descriptors of one subset, stored row-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    subset: Subset,
    method_tag: String,
    image_ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(
        subset: Subset,
        method_tag: impl Into<String>,
        image_ids: Vec<String>,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let n = image_ids.len();
        if data.len() != n * dim {
            return Err(Error::Format(format!(
                "descriptor data has {} values, expected {n}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateDescriptor(format!(
                "non-finite value in row {}",
                pos / dim.max(1)
            )));
        }
        if n > 0 {
            for (i, row) in data.chunks_exact(dim.max(1)).enumerate() {
                if dim == 0 || row.iter().all(|v| *v == 0.0) {
                    return Err(Error::DegenerateDescriptor(format!(
                        "row {i} ({}) has zero norm",
                        image_ids[i]
                    )));
                }
            }
        }
        Ok(DescriptorSet {
            subset,
            method_tag: method_tag.into(),
            image_ids,
            dim,
            data,
        })
    }

    pub fn subset(&self) -> Subset {
        self.subset
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Matched keypoints `(x_a, y_a, x_b, y_b)` in pixels for one ordered image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    image_id_a: String,
    image_id_b: String,
    points: Vec<[f32; 4]>,
}

impl CorrespondenceSet {
    pub fn new(
        image_id_a: impl Into<String>,
        image_id_b: impl Into<String>,
        points: Vec<[f32; 4]>,
    ) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::Integrity(format!(
                "correspondence row {i} has a non-finite coordinate"
            )));
        }
        let mut keys: Vec<[u32; 4]> = points.iter().map(|p| p.map(f32::to_bits)).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Integrity("duplicate correspondence rows".into()));
        }
        Ok(CorrespondenceSet {
            image_id_a: image_id_a.into(),
            image_id_b: image_id_b.into(),
            points,
        })
    }

    pub fn image_id_a(&self) -> &str {
        &self.image_id_a
    }

    pub fn image_id_b(&self) -> &str {
        &self.image_id_b
    }

    pub fn points(&self) -> &[[f32; 4]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_rejects_non_orthonormal() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 1e-3;
        assert!(matches!(
            Pose::new(r, Vector3::zeros()),
            Err(Error::InvalidPose(_))
        ));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn camera_to_world_inversion() {
        let pose = Pose::from_camera_to_world(Matrix3::identity(), Vector3::new(5.0, 0.0, 0.0))
            .unwrap();
        assert_eq!(*pose.translation(), Vector3::new(-5.0, 0.0, 0.0));
        assert_eq!(pose.center(), Vector3::new(5.0, 0.0, 0.0));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).is_ok());
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0).is_err());
        assert!(CameraIntrinsics::new(500.0, -1.0, 320.0, 240.0).is_err());
    }

    #[test]
    fn descriptor_set_invariants() {
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(DescriptorSet::new(Subset::A, "m", ids.clone(), 2, vec![1.0, 0.0, 0.0, 1.0]).is_ok());
        assert!(matches!(
            DescriptorSet::new(Subset::A, "m", ids.clone(), 2, vec![1.0, 0.0, 0.0, 0.0]),
            Err(Error::DegenerateDescriptor(_))
        ));
        assert!(DescriptorSet::new(Subset::A, "m", ids.clone(), 2, vec![1.0, f32::NAN, 0.0, 1.0]).is_err());
        assert!(DescriptorSet::new(Subset::A, "m", ids, 2, vec![1.0, 0.0, 0.0]).is_err());
        let empty = DescriptorSet::new(Subset::B, "m", vec![], 8, vec![]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn correspondence_rows_must_be_distinct() {
        let row = [1.0, 2.0, 3.0, 4.0];
        assert!(CorrespondenceSet::new("a", "b", vec![row, [1.0, 2.0, 3.0, 5.0]]).is_ok());
        assert!(CorrespondenceSet::new("a", "b", vec![row, row]).is_err());
        assert!(CorrespondenceSet::new("a", "b", vec![[f32::INFINITY, 0.0, 0.0, 0.0]]).is_err());
    }
}
