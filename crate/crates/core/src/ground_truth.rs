//! Per-pair ground truth over the full A×B grid of a scene.
//!
//! A pair is a match when its viewing directions are within `tau_view_deg`
//! and the rotation recovered from its keypoint matches deviates from the
//! reference relative rotation by less than `tau_dev_deg`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    read_correspondence_path, CameraIntrinsics, CorrespondenceSet, Pose, Scene,
};
use crate::error::{Error, Result};
use crate::fsutil::{file_token, write_atomic};
use crate::geometry::{
    check_geometry_criterion, check_view_criterion, decompose_essential, geodesic_distance,
    normalize_correspondences, relative_rotation, view_angle, GeometryConfig, GeometryError,
    NormalizedMatch,
};

pub const CACHE_FORMAT: &str = "vpr-pairs-ground-truth/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelStatus {
    Pass,
    FailView,
    FailGeom,
    InsufficientMatches,
    EstimationFailed,
    CheiralityAmbiguous,
}

impl LabelStatus {
    pub const ALL: [LabelStatus; 6] = [
        LabelStatus::Pass,
        LabelStatus::FailView,
        LabelStatus::FailGeom,
        LabelStatus::InsufficientMatches,
        LabelStatus::EstimationFailed,
        LabelStatus::CheiralityAmbiguous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelStatus::Pass => "PASS",
            LabelStatus::FailView => "FAIL_VIEW",
            LabelStatus::FailGeom => "FAIL_GEOM",
            LabelStatus::InsufficientMatches => "INSUFFICIENT_MATCHES",
            LabelStatus::EstimationFailed => "ESTIMATION_FAILED",
            LabelStatus::CheiralityAmbiguous => "CHEIRALITY_AMBIGUOUS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub image_id_a: String,
    pub image_id_b: String,
    pub is_match: bool,
    pub phi_view_deg: f64,
    pub d_r_deg: Option<f64>,
    pub inlier_ratio: Option<f64>,
    /// Estimated unit translation A→B, kept for diagnostics only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_dir: Option<[f64; 3]>,
    pub status: LabelStatus,
}

/// Everything needed to label one ordered pair.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub image_id_a: &'a str,
    pub image_id_b: &'a str,
    pub pose_a: &'a Pose,
    pub pose_b: &'a Pose,
    pub intrinsics_a: &'a CameraIntrinsics,
    pub intrinsics_b: &'a CameraIntrinsics,
    pub correspondences: Option<&'a CorrespondenceSet>,
}

/// Share of correspondences with sub-threshold pixel displacement above which
/// the pair is treated as the same view (zero motion, identity rotation).
pub const STATIC_VIEW_FRACTION: f64 = 0.5;

fn static_fraction(set: &CorrespondenceSet, tau_px: f64) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let still = set
        .points()
        .iter()
        .filter(|p| {
            let dx = (p[2] - p[0]) as f64;
            let dy = (p[3] - p[1]) as f64;
            (dx * dx + dy * dy).sqrt() < tau_px
        })
        .count();
    still as f64 / set.len() as f64
}

/// Labels one ordered pair. Every failure mode is encoded in the status.
pub fn label_pair(input: &PairInput<'_>, config: &GeometryConfig, seed: u64) -> GroundTruthLabel {
    let phi = view_angle(input.pose_a, input.pose_b);
    let mut label = GroundTruthLabel {
        image_id_a: input.image_id_a.to_string(),
        image_id_b: input.image_id_b.to_string(),
        is_match: false,
        phi_view_deg: phi,
        d_r_deg: None,
        inlier_ratio: None,
        translation_dir: None,
        status: LabelStatus::FailView,
    };
    if !check_view_criterion(phi, config) {
        return label;
    }

    let corr = match input.correspondences {
        Some(c) if c.len() >= config.min_correspondences => c,
        _ => {
            label.status = LabelStatus::InsufficientMatches;
            return label;
        }
    };

    let reference = relative_rotation(input.pose_a, input.pose_b);

    // Identical views carry no epipolar geometry; their rotation is the identity.
    let still = static_fraction(corr, config.tau_in);
    let estimated = if still >= STATIC_VIEW_FRACTION {
        label.inlier_ratio = Some(still);
        nalgebra::Matrix3::identity()
    } else {
        let matches = normalize_correspondences(corr, input.intrinsics_a, input.intrinsics_b);
        let fx_ref = (input.intrinsics_a.fx * input.intrinsics_b.fx).sqrt();
        let ransac = match crate::geometry::ransac_normalized(&matches, fx_ref, config, seed) {
            Ok(r) => r,
            Err(GeometryError::InsufficientMatches { .. }) => {
                label.status = LabelStatus::InsufficientMatches;
                return label;
            }
            Err(_) => {
                label.status = LabelStatus::EstimationFailed;
                return label;
            }
        };
        label.inlier_ratio = Some(ransac.inlier_ratio);
        let inliers: Vec<NormalizedMatch> = ransac.inliers(&matches).collect();
        match decompose_essential(&ransac.essential, &inliers) {
            Ok(pose) => {
                let t = pose.translation_dir;
                label.translation_dir = Some([t.x, t.y, t.z]);
                pose.rotation
            }
            Err(_) => {
                label.status = LabelStatus::CheiralityAmbiguous;
                return label;
            }
        }
    };

    let d_r = geodesic_distance(&estimated, &reference);
    label.d_r_deg = Some(d_r.to_degrees());
    label.is_match = check_geometry_criterion(d_r, config);
    label.status = if label.is_match {
        LabelStatus::Pass
    } else {
        LabelStatus::FailGeom
    };
    label
}

/// Stable per-pair RANSAC seed, independent of evaluation order.
pub fn pair_seed(base_seed: u64, scene_id: &str, image_id_a: &str, image_id_b: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    for part in [scene_id, image_id_a, image_id_b] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    format: &'a str,
    config: &'a GeometryConfig,
    seed: u64,
}

/// Hex SHA-256 over the geometry configuration and base seed.
pub fn config_fingerprint(config: &GeometryConfig, seed: u64) -> String {
    let canonical = serde_json::to_string(&FingerprintInput {
        format: CACHE_FORMAT,
        config,
        seed,
    })
    .expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Source of correspondence sets for ordered image pairs.
pub trait CorrespondenceStore: Sync {
    /// `Ok(None)` when the pair has no correspondence file.
    fn load(&self, scene_id: &str, image_id_a: &str, image_id_b: &str)
        -> Result<Option<CorrespondenceSet>>;
}

/// No correspondences at all; every view-compatible pair becomes `INSUFFICIENT_MATCHES`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCorrespondences;

impl CorrespondenceStore for NoCorrespondences {
    fn load(&self, _: &str, _: &str, _: &str) -> Result<Option<CorrespondenceSet>> {
        Ok(None)
    }
}

/// Correspondences held in memory, keyed by `(scene_id, image_id_a, image_id_b)`.
#[derive(Debug, Clone, Default)]
pub struct InMemoryStore {
    sets: BTreeMap<(String, String, String), CorrespondenceSet>,
}

impl InMemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scene_id: &str, set: CorrespondenceSet) {
        self.sets.insert(
            (
                scene_id.to_string(),
                set.image_id_a().to_string(),
                set.image_id_b().to_string(),
            ),
            set,
        );
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CorrespondenceSet)> {
        self.sets.iter().map(|((s, _, _), c)| (s.as_str(), c))
    }
}

impl CorrespondenceStore for InMemoryStore {
    fn load(&self, scene_id: &str, a: &str, b: &str) -> Result<Option<CorrespondenceSet>> {
        Ok(self
            .sets
            .get(&(scene_id.to_string(), a.to_string(), b.to_string()))
            .cloned())
    }
}

/// VPRC files laid out as `<root>/<scene_id>/<image_id_a>__<image_id_b>.vprc`
/// (ids mapped through [`file_token`]).
#[derive(Debug, Clone)]
pub struct DirectoryStore {
    root: PathBuf,
}

impl DirectoryStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirectoryStore { root: root.into() }
    }

    pub fn path_for(root: &Path, scene_id: &str, a: &str, b: &str) -> PathBuf {
        root.join(file_token(scene_id))
            .join(format!("{}__{}.vprc", file_token(a), file_token(b)))
    }
}

impl CorrespondenceStore for DirectoryStore {
    fn load(&self, scene_id: &str, a: &str, b: &str) -> Result<Option<CorrespondenceSet>> {
        let path = Self::path_for(&self.root, scene_id, a, b);
        if !path.exists() {
            return Ok(None);
        }
        let set = read_correspondence_path(&path)?;
        if set.image_id_a() != a || set.image_id_b() != b {
            return Err(Error::Integrity(format!(
                "{} holds pair ({}, {}), expected ({a}, {b})",
                path.display(),
                set.image_id_a(),
                set.image_id_b()
            )));
        }
        Ok(Some(set))
    }
}

/// Labels of every ordered pair `(a, b)`, row-major over A.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMatrix {
    pub scene_id: String,
    pub fingerprint: String,
    pub config: GeometryConfig,
    pub seed: u64,
    pub image_ids_a: Vec<String>,
    pub image_ids_b: Vec<String>,
    pub labels: Vec<GroundTruthLabel>,
}

impl GroundTruthMatrix {
    pub fn n_a(&self) -> usize {
        self.image_ids_a.len()
    }

    pub fn n_b(&self) -> usize {
        self.image_ids_b.len()
    }

    pub fn get(&self, index_a: usize, index_b: usize) -> Option<&GroundTruthLabel> {
        if index_a >= self.n_a() || index_b >= self.n_b() {
            return None;
        }
        self.labels.get(index_a * self.n_b() + index_b)
    }

    pub fn total_positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_match).count()
    }

    pub fn status_counts(&self) -> BTreeMap<LabelStatus, usize> {
        let mut counts: BTreeMap<LabelStatus, usize> =
            LabelStatus::ALL.iter().map(|s| (*s, 0)).collect();
        for l in &self.labels {
            *counts.entry(l.status).or_default() += 1;
        }
        counts
    }

    /// Checks completeness and id ordering of the grid.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.n_a() * self.n_b() {
            return Err(Error::Integrity(format!(
                "scene {}: {} labels for a {}x{} grid",
                self.scene_id,
                self.labels.len(),
                self.n_a(),
                self.n_b()
            )));
        }
        for (i, a) in self.image_ids_a.iter().enumerate() {
            for (j, b) in self.image_ids_b.iter().enumerate() {
                let l = &self.labels[i * self.n_b() + j];
                if &l.image_id_a != a || &l.image_id_b != b {
                    return Err(Error::Integrity(format!(
                        "scene {}: grid cell ({i}, {j}) holds ({}, {})",
                        self.scene_id, l.image_id_a, l.image_id_b
                    )));
                }
                if l.is_match != (l.status == LabelStatus::Pass) {
                    return Err(Error::Integrity(format!(
                        "scene {}: inconsistent label for ({a}, {b})",
                        self.scene_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let header = CacheHeader {
            format: CACHE_FORMAT.to_string(),
            scene_id: self.scene_id.clone(),
            fingerprint: self.fingerprint.clone(),
            config: self.config,
            seed: self.seed,
            image_ids_a: self.image_ids_a.clone(),
            image_ids_b: self.image_ids_b.clone(),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for l in &self.labels {
            out.push_str(&serde_json::to_string(l)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Format("empty ground-truth cache".into()))?
            .map_err(|e| Error::io("<cache>", e))?;
        let header: CacheHeader = serde_json::from_str(&header_line)?;
        if header.format != CACHE_FORMAT {
            return Err(Error::Format(format!(
                "unsupported ground-truth cache format `{}`",
                header.format
            )));
        }
        let mut labels = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io("<cache>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            labels.push(serde_json::from_str(&line)?);
        }
        let gt = GroundTruthMatrix {
            scene_id: header.scene_id,
            fingerprint: header.fingerprint,
            config: header.config,
            seed: header.seed,
            image_ids_a: header.image_ids_a,
            image_ids_b: header.image_ids_b,
            labels,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(BufReader::new(f))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    scene_id: String,
    fingerprint: String,
    config: GeometryConfig,
    seed: u64,
    image_ids_a: Vec<String>,
    image_ids_b: Vec<String>,
}

/// Labels the complete A×B grid of a scene.
pub fn label_scene(
    scene: &Scene,
    store: &dyn CorrespondenceStore,
    config: &GeometryConfig,
    seed: u64,
) -> Result<GroundTruthMatrix> {
    config
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    let n_b = scene.images_b.len();
    let cells: Vec<(usize, usize)> = (0..scene.images_a.len())
        .flat_map(|i| (0..n_b).map(move |j| (i, j)))
        .collect();
    let labels = cells
        .par_iter()
        .map(|&(i, j)| {
            let a = &scene.images_a[i];
            let b = &scene.images_b[j];
            let id_a = &a.record.image_id;
            let id_b = &b.record.image_id;
            // View-incompatible pairs never touch the correspondence store.
            let corr = if check_view_criterion(view_angle(&a.pose, &b.pose), config) {
                store.load(&scene.scene_id, id_a, id_b)?
            } else {
                None
            };
            let input = PairInput {
                image_id_a: id_a,
                image_id_b: id_b,
                pose_a: &a.pose,
                pose_b: &b.pose,
                intrinsics_a: &a.intrinsics,
                intrinsics_b: &b.intrinsics,
                correspondences: corr.as_ref(),
            };
            Ok(label_pair(
                &input,
                config,
                pair_seed(seed, &scene.scene_id, id_a, id_b),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruthMatrix {
        scene_id: scene.scene_id.clone(),
        fingerprint: config_fingerprint(config, seed),
        config: *config,
        seed,
        image_ids_a: scene.ids(crate::dataset::Subset::A),
        image_ids_b: scene.ids(crate::dataset::Subset::B),
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Computed,
}

/// [`label_scene`] backed by a JSON-lines cache keyed by the config fingerprint.
pub fn label_scene_cached(
    scene: &Scene,
    store: &dyn CorrespondenceStore,
    config: &GeometryConfig,
    seed: u64,
    cache_path: &Path,
) -> Result<(GroundTruthMatrix, CacheOutcome)> {
    let fingerprint = config_fingerprint(config, seed);
    if cache_path.exists() {
        match GroundTruthMatrix::read(cache_path) {
            Ok(gt)
                if gt.fingerprint == fingerprint
                    && gt.scene_id == scene.scene_id
                    && gt.image_ids_a == scene.ids(crate::dataset::Subset::A)
                    && gt.image_ids_b == scene.ids(crate::dataset::Subset::B) =>
            {
                return Ok((gt, CacheOutcome::Hit));
            }
            Ok(_) => log::info!("{}: stale ground-truth cache, recomputing", cache_path.display()),
            Err(e) => log::warn!("{}: unreadable cache ({e}), recomputing", cache_path.display()),
        }
    }
    let gt = label_scene(scene, store, config, seed)?;
    gt.write(cache_path)?;
    Ok((gt, CacheOutcome::Computed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Rotation3, Vector3};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(700.0, 700.0, 320.0, 240.0).unwrap()
    }

    fn pose_looking_at(center: Vector3<f64>, target: Vector3<f64>) -> Pose {
        crate::synthetic::look_at(center, target, Vector3::z())
    }

    fn project_all(pose_a: &Pose, pose_b: &Pose, pts: &[Vector3<f64>]) -> CorrespondenceSet {
        let kk = k();
        let rows = pts
            .iter()
            .map(|p| {
                let a = pose_a.transform_point(p);
                let b = pose_b.transform_point(p);
                [
                    (kk.fx * a.x / a.z + kk.cx) as f32,
                    (kk.fy * a.y / a.z + kk.cy) as f32,
                    (kk.fx * b.x / b.z + kk.cx) as f32,
                    (kk.fy * b.y / b.z + kk.cy) as f32,
                ]
            })
            .collect();
        CorrespondenceSet::new("a", "b", rows).unwrap()
    }

    fn cloud() -> Vec<Vector3<f64>> {
        (0..60)
            .map(|i| {
                let f = i as f64;
                Vector3::new((f * 0.37).sin(), (f * 0.73).cos(), ((f * 1.31).sin()) * 0.8)
            })
            .collect()
    }

    fn input<'a>(
        pa: &'a Pose,
        pb: &'a Pose,
        k: &'a CameraIntrinsics,
        c: Option<&'a CorrespondenceSet>,
    ) -> PairInput<'a> {
        PairInput {
            image_id_a: "a",
            image_id_b: "b",
            pose_a: pa,
            pose_b: pb,
            intrinsics_a: k,
            intrinsics_b: k,
            correspondences: c,
        }
    }

    #[test]
    fn wide_view_angle_skips_geometry() {
        let pa = Pose::identity();
        let r = Rotation3::from_axis_angle(&Vector3::x_axis(), 80f64.to_radians()).into_inner();
        let pb = Pose::new(r, Vector3::zeros()).unwrap();
        let kk = k();
        let l = label_pair(&input(&pa, &pb, &kk, None), &GeometryConfig::default(), 1);
        assert_eq!(l.status, LabelStatus::FailView);
        assert!(!l.is_match);
        assert!((l.phi_view_deg - 80.0).abs() < 1e-9);
        assert!(l.d_r_deg.is_none() && l.inlier_ratio.is_none());
    }

    #[test]
    fn consistent_correspondences_pass() {
        let pa = pose_looking_at(Vector3::new(6.0, 0.0, 0.5), Vector3::zeros());
        let pb = pose_looking_at(Vector3::new(5.9, 1.05, 0.3), Vector3::zeros());
        let corr = project_all(&pa, &pb, &cloud());
        let kk = k();
        let l = label_pair(&input(&pa, &pb, &kk, Some(&corr)), &GeometryConfig::default(), 3);
        assert!(l.phi_view_deg < 15.0);
        assert_eq!(l.status, LabelStatus::Pass, "{l:?}");
        assert!(l.d_r_deg.unwrap() < 1e-4);
    }

    #[test]
    fn rotated_correspondences_fail_geometry() {
        let pa = pose_looking_at(Vector3::new(6.0, 0.0, 0.5), Vector3::zeros());
        let pb = pose_looking_at(Vector3::new(5.9, 1.05, 0.3), Vector3::zeros());
        // Correspondences generated by a camera rolled 30° about its optical axis.
        let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians()).into_inner();
        let pb_wrong = Pose::new(roll * pb.rotation(), roll * pb.translation()).unwrap();
        let corr = project_all(&pa, &pb_wrong, &cloud());
        let kk = k();
        let l = label_pair(&input(&pa, &pb, &kk, Some(&corr)), &GeometryConfig::default(), 3);
        assert_eq!(l.status, LabelStatus::FailGeom, "{l:?}");
        assert!((l.d_r_deg.unwrap() - 30.0).abs() < 1e-3);
    }

    #[test]
    fn missing_or_sparse_correspondences() {
        let pa = Pose::identity();
        let kk = k();
        let l = label_pair(&input(&pa, &pa, &kk, None), &GeometryConfig::default(), 1);
        assert_eq!(l.status, LabelStatus::InsufficientMatches);
        let few = CorrespondenceSet::new("a", "b", vec![[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let l = label_pair(&input(&pa, &pa, &kk, Some(&few)), &GeometryConfig::default(), 1);
        assert_eq!(l.status, LabelStatus::InsufficientMatches);
        assert!(!l.is_match);
    }

    #[test]
    fn identical_views_pass() {
        let pa = pose_looking_at(Vector3::new(6.0, 0.0, 0.5), Vector3::zeros());
        let corr = project_all(&pa, &pa, &cloud());
        let kk = k();
        let l = label_pair(&input(&pa, &pa, &kk, Some(&corr)), &GeometryConfig::default(), 1);
        assert_eq!(l.status, LabelStatus::Pass);
        assert_eq!(l.phi_view_deg, 0.0);
        assert_eq!(l.d_r_deg, Some(0.0));
    }

    #[test]
    fn seeds_and_fingerprints() {
        assert_eq!(pair_seed(1, "s", "a", "b"), pair_seed(1, "s", "a", "b"));
        assert_ne!(pair_seed(1, "s", "a", "b"), pair_seed(1, "s", "b", "a"));
        assert_ne!(pair_seed(1, "s", "ab", "c"), pair_seed(1, "s", "a", "bc"));
        assert_ne!(pair_seed(1, "s", "a", "b"), pair_seed(2, "s", "a", "b"));
        let c = GeometryConfig::default();
        assert_eq!(config_fingerprint(&c, 0), config_fingerprint(&c, 0));
        let c40 = GeometryConfig { tau_view_deg: 40.0, ..c };
        assert_ne!(config_fingerprint(&c, 0), config_fingerprint(&c40, 0));
        assert_eq!(config_fingerprint(&c, 0).len(), 64);
    }

    #[test]
    fn identity_rotation_helper_is_exact() {
        assert_eq!(geodesic_distance(&Matrix3::identity(), &Matrix3::identity()), 0.0);
    }
}
