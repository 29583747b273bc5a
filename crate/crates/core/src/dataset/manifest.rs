use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{colmap, kitti, CameraIntrinsics, ImageRecord, Pose, Subset};
use super::{MAX_SUBSET_SIZE, MIN_SUBSET_SIZE};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetTag {
    #[serde(rename = "TT")]
    TanksAndTemples,
    #[serde(rename = "SNGS")]
    ScanNetGsReg,
    #[serde(rename = "KITTI")]
    Kitti,
    #[serde(rename = "CUSTOM")]
    Custom,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::TanksAndTemples => "TT",
            DatasetTag::ScanNetGsReg => "SNGS",
            DatasetTag::Kitti => "KITTI",
            DatasetTag::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the poses of a scene come from. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoseSource {
    ColmapText { images: PathBuf, cameras: PathBuf },
    Kitti { poses: PathBuf, calib: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    pub dataset_tag: DatasetTag,
    pub pose_source: PoseSource,
    pub images: Vec<ImageRecord>,
}

impl SceneManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    /// Checks id uniqueness, image sizes and subset membership.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for img in &self.images {
            if !seen.insert(img.image_id.as_str()) {
                return Err(Error::Config(format!(
                    "scene {}: duplicate image_id `{}`",
                    self.scene_id, img.image_id
                )));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::Config(format!(
                    "scene {}: image `{}` has zero size",
                    self.scene_id, img.image_id
                )));
            }
        }
        for subset in [Subset::A, Subset::B] {
            let n = self.images.iter().filter(|i| i.subset == subset).count();
            if n == 0 {
                return Err(Error::Config(format!(
                    "scene {}: subset {subset} is empty",
                    self.scene_id
                )));
            }
            if !(MIN_SUBSET_SIZE..=MAX_SUBSET_SIZE).contains(&n) {
                log::warn!(
                    "scene {}: subset {subset} has {n} images (usual range {MIN_SUBSET_SIZE}-{MAX_SUBSET_SIZE})",
                    self.scene_id
                );
            }
        }
        Ok(())
    }

    pub fn subset_records(&self, subset: Subset) -> impl Iterator<Item = &ImageRecord> {
        self.images.iter().filter(move |i| i.subset == subset)
    }

    pub fn provenance(&self) -> String {
        match &self.pose_source {
            PoseSource::ColmapText { images, .. } => {
                format!("colmap_text:{}", images.display())
            }
            PoseSource::Kitti { poses, .. } => format!("kitti:{}", poses.display()),
        }
    }
}

/// An image with its resolved pose and intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub record: ImageRecord,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

/// A manifest with all poses resolved, split into its two subsets in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub dataset_tag: DatasetTag,
    pub provenance: String,
    pub images_a: Vec<SceneImage>,
    pub images_b: Vec<SceneImage>,
}

impl Scene {
    /// Resolves poses for every manifest image. `base_dir` anchors relative pose paths.
    pub fn from_manifest(manifest: &SceneManifest, base_dir: &Path) -> Result<Self> {
        manifest.validate()?;
        let resolved: Vec<(Pose, CameraIntrinsics)> = match &manifest.pose_source {
            PoseSource::ColmapText { images, cameras } => {
                let ip = base_dir.join(images);
                let cp = base_dir.join(cameras);
                let poses = colmap::parse_poses_named(
                    &read_to_string(&ip)?,
                    &ip.display().to_string(),
                    &read_to_string(&cp)?,
                    &cp.display().to_string(),
                )?;
                manifest
                    .images
                    .iter()
                    .map(|img| {
                        let key = img.pose_key.as_deref().unwrap_or(&img.file_path);
                        poses.get(key).copied().ok_or_else(|| {
                            Error::Config(format!(
                                "scene {}: no COLMAP pose for image `{}` (key `{key}`)",
                                manifest.scene_id, img.image_id
                            ))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            PoseSource::Kitti { poses, calib } => {
                let pp = base_dir.join(poses);
                let cp = base_dir.join(calib);
                let frames = kitti::parse_poses_named(&read_to_string(&pp)?, &pp.display().to_string())?;
                let k = kitti::parse_calib_named(&read_to_string(&cp)?, &cp.display().to_string())?;
                manifest
                    .images
                    .iter()
                    .map(|img| {
                        let frame = kitti_frame(img).ok_or_else(|| {
                            Error::Config(format!(
                                "scene {}: cannot derive KITTI frame index for `{}`",
                                manifest.scene_id, img.image_id
                            ))
                        })?;
                        frames.get(&frame).map(|p| (*p, k)).ok_or_else(|| {
                            Error::Config(format!(
                                "scene {}: frame {frame} of `{}` missing from poses file",
                                manifest.scene_id, img.image_id
                            ))
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut images_a = Vec::new();
        let mut images_b = Vec::new();
        for (record, (pose, intrinsics)) in manifest.images.iter().zip(resolved) {
            let img = SceneImage {
                record: record.clone(),
                pose,
                intrinsics,
            };
            match record.subset {
                Subset::A => images_a.push(img),
                Subset::B => images_b.push(img),
            }
        }
        Ok(Scene {
            scene_id: manifest.scene_id.clone(),
            dataset_tag: manifest.dataset_tag,
            provenance: manifest.provenance(),
            images_a,
            images_b,
        })
    }

    pub fn ids(&self, subset: Subset) -> Vec<String> {
        self.images(subset)
            .iter()
            .map(|i| i.record.image_id.clone())
            .collect()
    }

    pub fn images(&self, subset: Subset) -> &[SceneImage] {
        match subset {
            Subset::A => &self.images_a,
            Subset::B => &self.images_b,
        }
    }
}

fn kitti_frame(img: &ImageRecord) -> Option<usize> {
    if let Some(key) = &img.pose_key {
        return key.trim().parse().ok();
    }
    Path::new(&img.file_path)
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
}

/// Reads a manifest file and resolves its poses relative to the manifest's directory.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let manifest = SceneManifest::from_json(&read_to_string(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scene::from_manifest(&manifest, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, subset: Subset) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            file_path: format!("images/{id}.png"),
            subset,
            width: 640,
            height: 480,
            pose_key: None,
        }
    }

    #[test]
    fn json_shape() {
        let m = SceneManifest {
            scene_id: "Barn_0".into(),
            dataset_tag: DatasetTag::TanksAndTemples,
            pose_source: PoseSource::ColmapText {
                images: "sparse/images.txt".into(),
                cameras: "sparse/cameras.txt".into(),
            },
            images: vec![record("a0", Subset::A), record("b0", Subset::B)],
        };
        let json = m.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["dataset_tag"], "TT");
        assert_eq!(v["pose_source"]["kind"], "colmap_text");
        assert_eq!(v["images"][1]["subset"], "B");
        assert_eq!(SceneManifest::from_json(&json).unwrap(), m);
    }

    #[test]
    fn resolves_colmap_and_kitti_sources() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("cameras.txt"),
            "1 SIMPLE_PINHOLE 640 480 500 320 240\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("images.txt"),
            "1 1 0 0 0 0 0 0 1 images/a0.png\n\n2 1 0 0 0 1 0 0 1 images/b0.png\n\n",
        )
        .unwrap();
        let m = SceneManifest {
            scene_id: "s".into(),
            dataset_tag: DatasetTag::Custom,
            pose_source: PoseSource::ColmapText {
                images: "images.txt".into(),
                cameras: "cameras.txt".into(),
            },
            images: vec![record("a0", Subset::A), record("b0", Subset::B)],
        };
        let path = dir.path().join("s.json");
        m.write(&path).unwrap();
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.images_a.len(), 1);
        assert_eq!(scene.images_b[0].pose.translation().x, 1.0);

        std::fs::write(
            dir.path().join("poses.txt"),
            "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1 4\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("calib.txt"),
            "P0: 700 0 600 0 0 700 180 0 0 0 1 0\n",
        )
        .unwrap();
        let mut k = m.clone();
        k.pose_source = PoseSource::Kitti {
            poses: "poses.txt".into(),
            calib: "calib.txt".into(),
        };
        k.images[0].file_path = "image_0/000000.png".into();
        k.images[1].file_path = "image_0/000001.png".into();
        let scene = Scene::from_manifest(&k, dir.path()).unwrap();
        assert_eq!(scene.images_b[0].pose.center().z, 4.0);
        assert_eq!(scene.images_b[0].intrinsics.fx, 700.0);

        k.images[1].pose_key = Some("5".into());
        assert!(matches!(Scene::from_manifest(&k, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn validation_errors() {
        let mut m = SceneManifest {
            scene_id: "s".into(),
            dataset_tag: DatasetTag::Custom,
            pose_source: PoseSource::Kitti {
                poses: "p".into(),
                calib: "c".into(),
            },
            images: vec![record("a0", Subset::A), record("a0", Subset::B)],
        };
        assert!(m.validate().is_err());
        m.images[1] = record("a1", Subset::A);
        assert!(m.validate().is_err());
        m.images[1] = record("b1", Subset::B);
        m.images[1].width = 0;
        assert!(m.validate().is_err());
    }
}
