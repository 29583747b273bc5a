use nalgebra::{Matrix3, Vector3};

use super::{EssentialMatrix, GeometryError, NormalizedMatch, RelativePose};

const W: Matrix3<f64> = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);

/// Depths of a correspondence in cameras A and B under `X_b = R·X_a + t`.
///
/// Returns `None` when the rays are parallel.
pub fn triangulated_depths(
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    m: &NormalizedMatch,
) -> Option<(f64, f64)> {
    let xa = m.bearing_a();
    let xb = m.bearing_b();
    let rxa = rotation * xa;
    let n = xb.cross(&rxa);
    let denom = n.norm_squared();
    if !(denom > 1e-18) {
        return None;
    }
    let depth_a = -xb.cross(translation).dot(&n) / denom;
    let depth_b = (rxa * depth_a + translation).z;
    Some((depth_a, depth_b))
}

/// SVD factorization `E = U diag(1,1,0) Vᵀ` giving the twisted rotation pair and `±t̂`.
fn factor(e: &EssentialMatrix) -> Option<(Matrix3<f64>, Matrix3<f64>, Vector3<f64>)> {
    let svd = e.matrix().svd(true, true);
    let (u_raw, v_t_raw) = (svd.u?, svd.v_t?);
    // Order singular triplets descending so the null direction is last.
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let mut u = Matrix3::from_fn(|r, c| u_raw[(r, order[c])]);
    let mut v_t = Matrix3::from_fn(|r, c| v_t_raw[(order[r], c)]);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let t = u.column(2).into_owned().normalize();
    Some((u * W * v_t, u * W.transpose() * v_t, t))
}

/// The two rotations compatible with `E` (the twisted pair `UWVᵀ`, `UWᵀVᵀ`).
pub fn rotation_candidates(e: &EssentialMatrix) -> Option<[Matrix3<f64>; 2]> {
    factor(e).map(|(r1, r2, _)| [r1, r2])
}

/// Recovers `(R, t̂)` from `E` by SVD and cheirality voting over the given inliers.
pub fn decompose_essential(
    e: &EssentialMatrix,
    inliers: &[NormalizedMatch],
) -> Result<RelativePose, GeometryError> {
    if inliers.is_empty() {
        return Err(GeometryError::CheiralityAmbiguous);
    }
    let Some((r1, r2, t)) = factor(e) else {
        return Err(GeometryError::CheiralityAmbiguous);
    };
    let candidates = [(r1, t), (r1, -t), (r2, t), (r2, -t)];

    let mut best: Option<(usize, usize)> = None;
    for (ci, (r, tc)) in candidates.iter().enumerate() {
        let count = inliers
            .iter()
            .filter(|m| matches!(triangulated_depths(r, tc, m), Some((da, db)) if da > 0.0 && db > 0.0))
            .count();
        if best.is_none_or(|(_, bc)| count > bc) {
            best = Some((ci, count));
        }
    }
    let (ci, count) = best.expect("four candidates");
    if 2 * count <= inliers.len() {
        return Err(GeometryError::CheiralityAmbiguous);
    }
    let (rotation, translation_dir) = candidates[ci];
    Ok(RelativePose {
        rotation,
        translation_dir,
    })
}
