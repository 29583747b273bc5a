//! KITTI odometry `poses/XX.txt` and `sequences/XX/calib.txt` readers.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use super::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};

/// Orthonormality slack accepted on the printed camera-to-world rotations.
/// The files carry about seven significant digits, so rotations are
/// re-orthonormalized after this check.
pub const KITTI_ROTATION_TOLERANCE: f64 = 1e-4;

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_numbers(source: &str, line_no: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(source, line_no, format!("invalid number `{t}`")))
        })
        .collect()
}

/// Nearest rotation in the Frobenius sense.
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Parses a poses file into frame index → world-to-camera pose.
pub fn parse_kitti_poses_only(text: &str) -> Result<BTreeMap<usize, Pose>> {
    parse_poses_named(text, "poses.txt")
}

pub(crate) fn parse_poses_named(text: &str, source: &str) -> Result<BTreeMap<usize, Pose>> {
    let mut out = BTreeMap::new();
    let mut frame = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 12 {
            return Err(parse_err(
                source,
                line_no,
                format!("expected 12 values, found {}", toks.len()),
            ));
        }
        let v = parse_numbers(source, line_no, &toks)?;
        let r_cw = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let center = Vector3::new(v[3], v[7], v[11]);
        let ortho = (r_cw.transpose() * r_cw - Matrix3::identity()).norm();
        let det = r_cw.determinant();
        if ortho >= KITTI_ROTATION_TOLERANCE || (det - 1.0).abs() >= KITTI_ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "{source}:{line_no}: rotation not orthonormal (|RᵀR - I|_F = {ortho:e}, det = {det})"
            )));
        }
        let pose = Pose::from_camera_to_world(orthonormalize(&r_cw), center)?;
        out.insert(frame, pose);
        frame += 1;
    }
    Ok(out)
}

/// Reads the `P0` projection row of a calib file into intrinsics.
pub fn parse_kitti_calib(text: &str) -> Result<CameraIntrinsics> {
    parse_calib_named(text, "calib.txt")
}

pub(crate) fn parse_calib_named(text: &str, source: &str) -> Result<CameraIntrinsics> {
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let Some(rest) = raw.trim().strip_prefix("P0:") else {
            continue;
        };
        let toks: Vec<&str> = rest.split_whitespace().collect();
        if toks.len() != 12 {
            return Err(parse_err(
                source,
                line_no,
                format!("P0 expects 12 values, found {}", toks.len()),
            ));
        }
        let p = parse_numbers(source, line_no, &toks)?;
        return CameraIntrinsics::new(p[0], p[5], p[2], p[6])
            .map_err(|e| parse_err(source, line_no, e.to_string()));
    }
    Err(parse_err(source, 0, "no P0 row found"))
}

/// Parses poses and calibration into frame index → (pose, intrinsics).
pub fn parse_kitti_poses(
    poses_text: &str,
    calib_text: &str,
) -> Result<BTreeMap<usize, (Pose, CameraIntrinsics)>> {
    let k = parse_kitti_calib(calib_text)?;
    Ok(parse_kitti_poses_only(poses_text)?
        .into_iter()
        .map(|(i, p)| (i, (p, k)))
        .collect())
}
