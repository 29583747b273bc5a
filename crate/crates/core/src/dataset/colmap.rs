//! COLMAP text model (`cameras.txt`, `images.txt`) reader.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(source: &str, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(source, line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(source, line, format!("non-finite number `{tok}`")));
    }
    Ok(v)
}

/// Parses `cameras.txt` into camera id → intrinsics.
pub fn parse_colmap_cameras(text: &str) -> Result<HashMap<u64, CameraIntrinsics>> {
    parse_cameras_named(text, "cameras.txt")
}

pub(crate) fn parse_cameras_named(
    text: &str,
    source: &str,
) -> Result<HashMap<u64, CameraIntrinsics>> {
    let mut cameras = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(parse_err(source, line_no, "expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"));
        }
        let id: u64 = toks[0]
            .parse()
            .map_err(|_| parse_err(source, line_no, format!("invalid camera id `{}`", toks[0])))?;
        let params = toks[4..]
            .iter()
            .map(|t| parse_f64(source, line_no, t))
            .collect::<Result<Vec<_>>>()?;
        let intrinsics = match toks[1] {
            "SIMPLE_PINHOLE" => {
                if params.len() != 3 {
                    return Err(parse_err(source, line_no, "SIMPLE_PINHOLE expects f cx cy"));
                }
                CameraIntrinsics::new(params[0], params[0], params[1], params[2])
            }
            "PINHOLE" => {
                if params.len() != 4 {
                    return Err(parse_err(source, line_no, "PINHOLE expects fx fy cx cy"));
                }
                CameraIntrinsics::new(params[0], params[1], params[2], params[3])
            }
            other => return Err(Error::UnsupportedCameraModel(other.to_string())),
        }
        .map_err(|e| parse_err(source, line_no, e.to_string()))?;
        if cameras.insert(id, intrinsics).is_some() {
            return Err(parse_err(source, line_no, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

/// One registered image from `images.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColmapImage {
    pub name: String,
    pub camera_id: u64,
    pub pose: Pose,
}

/// Parses `images.txt`. The keypoint line following each image line is skipped.
pub fn parse_colmap_images(text: &str) -> Result<Vec<ColmapImage>> {
    parse_images_named(text, "images.txt")
}

pub(crate) fn parse_images_named(text: &str, source: &str) -> Result<Vec<ColmapImage>> {
    let mut images = Vec::new();
    let mut expect_points = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if expect_points {
            expect_points = false;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 10 {
            return Err(parse_err(
                source,
                line_no,
                "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME",
            ));
        }
        let nums = toks[1..8]
            .iter()
            .map(|t| parse_f64(source, line_no, t))
            .collect::<Result<Vec<_>>>()?;
        let q = Quaternion::new(nums[0], nums[1], nums[2], nums[3]);
        if q.norm() < 1e-12 {
            return Err(parse_err(source, line_no, "zero-norm quaternion"));
        }
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        let translation = Vector3::new(nums[4], nums[5], nums[6]);
        let pose = Pose::new(rotation, translation)
            .map_err(|e| parse_err(source, line_no, e.to_string()))?;
        let camera_id: u64 = toks[8]
            .parse()
            .map_err(|_| parse_err(source, line_no, format!("invalid camera id `{}`", toks[8])))?;
        images.push(ColmapImage {
            name: toks[9..].join(" "),
            camera_id,
            pose,
        });
        expect_points = true;
    }
    Ok(images)
}

/// Joins `images.txt` and `cameras.txt` into image name → (pose, intrinsics).
pub fn parse_colmap_poses(
    images_text: &str,
    cameras_text: &str,
) -> Result<BTreeMap<String, (Pose, CameraIntrinsics)>> {
    parse_poses_named(images_text, "images.txt", cameras_text, "cameras.txt")
}

pub(crate) fn parse_poses_named(
    images_text: &str,
    images_source: &str,
    cameras_text: &str,
    cameras_source: &str,
) -> Result<BTreeMap<String, (Pose, CameraIntrinsics)>> {
    let cameras = parse_cameras_named(cameras_text, cameras_source)?;
    let images = parse_images_named(images_text, images_source)?;
    let mut out = BTreeMap::new();
    for img in images {
        let k = cameras.get(&img.camera_id).ok_or_else(|| {
            Error::Config(format!(
                "image `{}` references unknown camera {}",
                img.name, img.camera_id
            ))
        })?;
        if out.insert(img.name.clone(), (img.pose, *k)).is_some() {
            return Err(Error::Config(format!("duplicate image name `{}`", img.name)));
        }
    }
    Ok(out)
}
