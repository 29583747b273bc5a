use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{estimate_essential_minimal, EssentialMatrix, GeometryConfig, GeometryError, NormalizedMatch};
use crate::dataset::{CameraIntrinsics, CorrespondenceSet};

/// Maps pixel correspondences to calibrated coordinates, each point with its own camera.
pub fn normalize_correspondences(
    set: &CorrespondenceSet,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
) -> Vec<NormalizedMatch> {
    set.points()
        .iter()
        .map(|p| {
            NormalizedMatch::new(
                (p[0] as f64 - k_a.cx) / k_a.fx,
                (p[1] as f64 - k_a.cy) / k_a.fy,
                (p[2] as f64 - k_b.cx) / k_b.fx,
                (p[3] as f64 - k_b.cy) / k_b.fy,
            )
        })
        .collect()
}

/// First-order Sampson distance `|x̂_bᵀ E x̂_a| / ‖∇‖`, scaled by `fx_ref` into pixels.
///
/// Returns `+∞` when the gradient vanishes.
pub fn sampson_distance(e: &Matrix3<f64>, m: &NormalizedMatch, fx_ref: f64) -> f64 {
    let xa = m.bearing_a();
    let xb = m.bearing_b();
    let exa = e * xa;
    let etxb = e.transpose() * xb;
    let residual = xb.dot(&exa);
    let g2 = exa.x * exa.x + exa.y * exa.y + etxb.x * etxb.x + etxb.y * etxb.y;
    if !(g2 > 0.0) {
        return f64::INFINITY;
    }
    fx_ref * residual.abs() / g2.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub essential: EssentialMatrix,
    pub inlier_mask: Vec<bool>,
    pub inlier_ratio: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|b| **b).count()
    }

    pub fn inliers<'a>(&'a self, matches: &'a [NormalizedMatch]) -> impl Iterator<Item = NormalizedMatch> + 'a {
        matches
            .iter()
            .zip(&self.inlier_mask)
            .filter(|(_, keep)| **keep)
            .map(|(m, _)| *m)
    }
}

fn adaptive_bound(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w5 = inlier_ratio.powi(5);
    if w5 >= 1.0 {
        return 1;
    }
    if w5 <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w5).ln();
    if !n.is_finite() || n >= cap as f64 {
        cap
    } else {
        (n.ceil() as usize).max(1)
    }
}

/// Seeded RANSAC over the five-point solver with Sampson gating.
///
/// The minimal-sample model with the most inliers wins; ties go to the lower
/// total inlier error, then to the earlier iteration. No refit is performed.
pub fn ransac_essential(
    correspondences: &CorrespondenceSet,
    k_a: &CameraIntrinsics,
    k_b: &CameraIntrinsics,
    config: &GeometryConfig,
    seed: u64,
) -> Result<RansacResult, GeometryError> {
    let matches = normalize_correspondences(correspondences, k_a, k_b);
    let fx_ref = (k_a.fx * k_b.fx).sqrt();
    ransac_normalized(&matches, fx_ref, config, seed)
}

/// [`ransac_essential`] on already-normalized matches.
pub(crate) fn ransac_normalized(
    matches: &[NormalizedMatch],
    fx_ref: f64,
    config: &GeometryConfig,
    seed: u64,
) -> Result<RansacResult, GeometryError> {
    config.validate()?;
    let m = matches.len();
    if m < config.min_correspondences {
        return Err(GeometryError::InsufficientMatches {
            found: m,
            required: config.min_correspondences,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, f64, EssentialMatrix)> = None;
    let mut limit = config.ransac_max_iters;
    let mut iterations = 0;
    let mut errors = vec![0.0; m];

    while iterations < limit {
        iterations += 1;
        let idx = rand::seq::index::sample(&mut rng, m, 5);
        let sample: [NormalizedMatch; 5] = std::array::from_fn(|i| matches[idx.index(i)]);
        let Ok(candidates) = estimate_essential_minimal(&sample) else {
            continue;
        };
        for e in candidates {
            let mut count = 0;
            let mut total = 0.0;
            for (err, mt) in errors.iter_mut().zip(matches) {
                *err = sampson_distance(e.matrix(), mt, fx_ref);
                if *err < config.tau_in {
                    count += 1;
                    total += *err;
                }
            }
            let better = match &best {
                None => true,
                Some((bc, be, _)) => count > *bc || (count == *bc && total < *be),
            };
            if better {
                best = Some((count, total, e));
                let bound = adaptive_bound(count as f64 / m as f64, config.ransac_confidence, config.ransac_max_iters);
                limit = limit.min(bound).max(iterations);
            }
        }
    }

    match best {
        Some((count, _, essential)) if count >= 5 => {
            let inlier_mask: Vec<bool> = matches
                .iter()
                .map(|mt| sampson_distance(essential.matrix(), mt, fx_ref) < config.tau_in)
                .collect();
            Ok(RansacResult {
                essential,
                inlier_ratio: count as f64 / m as f64,
                inlier_mask,
                iterations_run: iterations,
                seed,
            })
        }
        _ => Err(GeometryError::EstimationFailed),
    }
}
