//! Synthetic scenes with known geometry: two-view problems for the solvers and
//! camera rings with matching correspondences and view-direction descriptors.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    write_correspondence_path, write_descriptor_path, CameraIntrinsics, CorrespondenceSet,
    DatasetTag, DescriptorSet, ImageRecord, ImageTiming, Pose, PoseSource, Scene, SceneManifest,
    Subset, TimingSidecar,
};
use crate::error::Result;
use crate::geometry::NormalizedMatch;
use crate::ground_truth::{DirectoryStore, InMemoryStore};

/// Uniformly distributed rotation (normalized Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Rotation about a random axis by an angle uniform in `[0, max_angle_rad]`.
pub fn random_bounded_rotation<R: Rng + ?Sized>(rng: &mut R, max_angle_rad: f64) -> Matrix3<f64> {
    let axis = Unit::new_normalize(random_unit_vector(rng));
    let angle = rng.random::<f64>() * max_angle_rad;
    Rotation3::from_axis_angle(&axis, angle).into_inner()
}

/// World-to-camera pose of a camera at `center` with its optical axis (+z)
/// towards `target`, image y pointing away from `up`.
pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    let z = (target - center).normalize();
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Pose::new(r, -(r * center)).expect("orthonormal by construction")
}

/// Two calibrated cameras, `X_b = R·X_a + t`, and points in camera-A coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewScene {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub points: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoViewSpec {
    pub n_points: usize,
    /// `None` draws the rotation uniformly from SO(3).
    pub max_rotation_deg: Option<f64>,
    /// Keep only points in front of camera B and inside its field of view.
    pub front_of_both: bool,
    pub min_depth: f64,
    pub max_depth: f64,
    /// Tangents of the horizontal and vertical half fields of view.
    pub half_fov_tan: [f64; 2],
}

impl TwoViewSpec {
    /// Field of view of a pinhole camera `k` with a `width`×`height` image centred on its principal point.
    pub fn with_camera(mut self, k: &CameraIntrinsics, width: f64, height: f64) -> Self {
        self.half_fov_tan = [0.5 * width / k.fx, 0.5 * height / k.fy];
        self
    }
}

impl Default for TwoViewSpec {
    fn default() -> Self {
        TwoViewSpec {
            n_points: 5,
            max_rotation_deg: None,
            front_of_both: false,
            min_depth: 2.0,
            max_depth: 10.0,
            half_fov_tan: [0.5, 0.5],
        }
    }
}

/// Point uniform in volume inside camera A's frustum between the depth planes.
fn frustum_point<R: Rng + ?Sized>(rng: &mut R, spec: &TwoViewSpec) -> Vector3<f64> {
    let (z0, z1) = (spec.min_depth.powi(3), spec.max_depth.powi(3));
    let z = (z0 + rng.random::<f64>() * (z1 - z0)).cbrt();
    let u = (rng.random::<f64>() * 2.0 - 1.0) * spec.half_fov_tan[0];
    let v = (rng.random::<f64>() * 2.0 - 1.0) * spec.half_fov_tan[1];
    Vector3::new(u * z, v * z, z)
}

pub fn random_two_view<R: Rng + ?Sized>(rng: &mut R, spec: &TwoViewSpec) -> TwoViewScene {
    'pose: loop {
        let rotation = match spec.max_rotation_deg {
            Some(deg) => random_bounded_rotation(rng, deg.to_radians()),
            None => random_rotation(rng),
        };
        let translation = random_unit_vector(rng);
        let mut points = Vec::with_capacity(spec.n_points);
        let mut attempts = 0;
        while points.len() < spec.n_points {
            attempts += 1;
            if attempts > 200 * spec.n_points.max(1) {
                continue 'pose;
            }
            let p = frustum_point(rng, spec);
            if spec.front_of_both {
                let q = rotation * p + translation;
                let [lx, ly] = spec.half_fov_tan;
                if q.z <= 0.1 || (q.x / q.z).abs() > lx || (q.y / q.z).abs() > ly {
                    continue;
                }
            }
            points.push(p);
        }
        return TwoViewScene {
            rotation,
            translation,
            points,
        };
    }
}

impl TwoViewScene {
    pub fn matches(&self) -> Vec<NormalizedMatch> {
        self.points
            .iter()
            .map(|p| {
                let q = self.rotation * p + self.translation;
                NormalizedMatch::new(p.x / p.z, p.y / p.z, q.x / q.z, q.y / q.z)
            })
            .collect()
    }

    /// Pixel correspondences under a shared camera `k`, with Gaussian noise on
    /// every coordinate and a fraction of rows replaced by uniform outliers
    /// inside a `width`×`height` image. Returns the rows and their inlier flags.
    pub fn pixel_correspondences<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        k: &CameraIntrinsics,
        size: (f64, f64),
        noise_px: f64,
        outlier_fraction: f64,
    ) -> Result<(CorrespondenceSet, Vec<bool>)> {
        let n = self.points.len();
        let n_out = (outlier_fraction * n as f64).round() as usize;
        let noise = Normal::new(0.0, noise_px.max(0.0)).expect("finite sigma");
        let mut rows = Vec::with_capacity(n);
        let mut inlier = Vec::with_capacity(n);
        for (i, m) in self.matches().iter().enumerate() {
            if i < n - n_out {
                let mut jitter = || if noise_px > 0.0 { noise.sample(rng) } else { 0.0 };
                rows.push([
                    (k.fx * m.a.x + k.cx + jitter()) as f32,
                    (k.fy * m.a.y + k.cy + jitter()) as f32,
                    (k.fx * m.b.x + k.cx + jitter()) as f32,
                    (k.fy * m.b.y + k.cy + jitter()) as f32,
                ]);
                inlier.push(true);
            } else {
                rows.push([
                    (rng.random::<f64>() * size.0) as f32,
                    (rng.random::<f64>() * size.1) as f32,
                    (rng.random::<f64>() * size.0) as f32,
                    (rng.random::<f64>() * size.1) as f32,
                ]);
                inlier.push(false);
            }
        }
        Ok((CorrespondenceSet::new("a", "b", rows)?, inlier))
    }
}

/// Two concentric horizontal rings of inward-looking cameras around a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub scene_id: String,
    pub n_a: usize,
    pub n_b: usize,
    pub radius_a: f64,
    pub radius_b: f64,
    /// Azimuth of the first B camera; A starts at 0.
    pub offset_b_deg: f64,
    pub n_points: usize,
    pub cloud_radius: f64,
    pub noise_px: f64,
    pub intrinsics: CameraIntrinsics,
    pub width: u32,
    pub height: u32,
}

impl RingSpec {
    pub fn new(scene_id: impl Into<String>, n: usize) -> Self {
        RingSpec {
            scene_id: scene_id.into(),
            n_a: n,
            n_b: n,
            radius_a: 8.0,
            radius_b: 10.0,
            offset_b_deg: 90.0 / n as f64,
            n_points: 100,
            cloud_radius: 2.0,
            noise_px: 0.1,
            intrinsics: CameraIntrinsics {
                fx: 700.0,
                fy: 700.0,
                cx: 320.0,
                cy: 240.0,
            },
            width: 640,
            height: 480,
        }
    }

    pub fn azimuth_deg(&self, subset: Subset, index: usize) -> f64 {
        match subset {
            Subset::A => 360.0 * index as f64 / self.n_a as f64,
            Subset::B => self.offset_b_deg + 360.0 * index as f64 / self.n_b as f64,
        }
    }

    /// Angle between the viewing directions of A camera `i` and B camera `j`.
    pub fn analytic_view_angle_deg(&self, i: usize, j: usize) -> f64 {
        let d = (self.azimuth_deg(Subset::B, j) - self.azimuth_deg(Subset::A, i)).rem_euclid(360.0);
        d.min(360.0 - d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingScene {
    pub spec: RingSpec,
    pub manifest: SceneManifest,
    pub images_txt: String,
    pub cameras_txt: String,
    pub poses_a: Vec<Pose>,
    pub poses_b: Vec<Pose>,
    pub points: Vec<Vector3<f64>>,
}

impl RingScene {
    pub fn generate<R: Rng + ?Sized>(spec: &RingSpec, rng: &mut R) -> Self {
        let ring = |subset: Subset, n: usize, radius: f64| -> Vec<Pose> {
            (0..n)
                .map(|i| {
                    let az = spec.azimuth_deg(subset, i).to_radians();
                    let c = Vector3::new(radius * az.cos(), radius * az.sin(), 0.0);
                    look_at(c, Vector3::zeros(), Vector3::z())
                })
                .collect()
        };
        let poses_a = ring(Subset::A, spec.n_a, spec.radius_a);
        let poses_b = ring(Subset::B, spec.n_b, spec.radius_b);
        let points = (0..spec.n_points)
            .map(|_| random_unit_vector(rng) * spec.cloud_radius * rng.random::<f64>().cbrt())
            .collect();

        let mut images = Vec::new();
        let mut named = Vec::new();
        for (subset, poses) in [(Subset::A, &poses_a), (Subset::B, &poses_b)] {
            for (i, pose) in poses.iter().enumerate() {
                let image_id = format!("{subset}{i:03}");
                let file_path = format!("images/{image_id}.png");
                named.push((file_path.clone(), *pose));
                images.push(ImageRecord {
                    image_id,
                    file_path,
                    subset,
                    width: spec.width,
                    height: spec.height,
                    pose_key: None,
                });
            }
        }
        let manifest = SceneManifest {
            scene_id: spec.scene_id.clone(),
            dataset_tag: DatasetTag::Custom,
            pose_source: PoseSource::ColmapText {
                images: PathBuf::from("images.txt"),
                cameras: PathBuf::from("cameras.txt"),
            },
            images,
        };
        RingScene {
            images_txt: colmap_images_text(&named, 1),
            cameras_txt: colmap_cameras_text(1, &spec.intrinsics, spec.width, spec.height),
            spec: spec.clone(),
            manifest,
            poses_a,
            poses_b,
            points,
        }
    }

    /// Resolves the manifest through its own COLMAP text, as a loader would.
    pub fn scene(&self) -> Result<Scene> {
        let dir = tempfile::tempdir().map_err(|e| crate::Error::io("<tempdir>", e))?;
        self.write_scene_files(dir.path())?;
        Scene::from_manifest(&self.manifest, dir.path())
    }

    /// Writes `manifest.json`, `images.txt` and `cameras.txt` into `dir`.
    pub fn write_scene_files(&self, dir: &Path) -> Result<PathBuf> {
        crate::fsutil::write_atomic(&dir.join("images.txt"), self.images_txt.as_bytes())?;
        crate::fsutil::write_atomic(&dir.join("cameras.txt"), self.cameras_txt.as_bytes())?;
        let path = dir.join("manifest.json");
        self.manifest.write(&path)?;
        Ok(path)
    }

    pub fn image_id(&self, subset: Subset, index: usize) -> String {
        format!("{subset}{index:03}")
    }

    /// True iff the analytic view angle of `(i, j)` is within `tau_view_deg`.
    pub fn analytic_overlap(&self, i: usize, j: usize, tau_view_deg: f64) -> bool {
        self.spec.analytic_view_angle_deg(i, j) <= tau_view_deg
    }

    /// Projections of the cloud into A camera `i` and B camera `j` with pixel noise.
    pub fn correspondences<R: Rng + ?Sized>(
        &self,
        i: usize,
        j: usize,
        rng: &mut R,
    ) -> Result<CorrespondenceSet> {
        let k = &self.spec.intrinsics;
        let noise = Normal::new(0.0, self.spec.noise_px.max(0.0)).expect("finite sigma");
        let jitter = |rng: &mut R| {
            if self.spec.noise_px > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            }
        };
        let mut rows = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let a = self.poses_a[i].transform_point(p);
            let b = self.poses_b[j].transform_point(p);
            rows.push([
                (k.fx * a.x / a.z + k.cx + jitter(rng)) as f32,
                (k.fy * a.y / a.z + k.cy + jitter(rng)) as f32,
                (k.fx * b.x / b.z + k.cx + jitter(rng)) as f32,
                (k.fy * b.y / b.z + k.cy + jitter(rng)) as f32,
            ]);
        }
        CorrespondenceSet::new(self.image_id(Subset::A, i), self.image_id(Subset::B, j), rows)
    }

    /// Correspondences for every pair whose analytic view angle is within `max_view_deg`.
    pub fn correspondence_store<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_view_deg: f64,
    ) -> Result<InMemoryStore> {
        let mut store = InMemoryStore::new();
        for i in 0..self.spec.n_a {
            for j in 0..self.spec.n_b {
                if self.spec.analytic_view_angle_deg(i, j) <= max_view_deg {
                    store.insert(&self.spec.scene_id, self.correspondences(i, j, rng)?);
                }
            }
        }
        Ok(store)
    }

    pub fn view_directions(&self, subset: Subset) -> Vec<Vector3<f64>> {
        let poses = match subset {
            Subset::A => &self.poses_a,
            Subset::B => &self.poses_b,
        };
        poses
            .iter()
            .map(|p| p.rotation().row(2).transpose())
            .collect()
    }

    pub fn descriptors<R: Rng + ?Sized>(
        &self,
        embedding: &ViewEmbedding,
        subset: Subset,
        rng: &mut R,
    ) -> Result<DescriptorSet> {
        let dirs = self.view_directions(subset);
        let ids = (0..dirs.len()).map(|i| self.image_id(subset, i)).collect();
        let mut data = Vec::with_capacity(dirs.len() * embedding.dim);
        for d in &dirs {
            data.extend(embedding.embed(d, rng));
        }
        DescriptorSet::new(subset, embedding.method_tag.clone(), ids, embedding.dim, data)
    }
}

/// Descriptor whose cosine similarity decreases with the angle between viewing directions.
///
/// Component `l` is `exp(κ (v·c_l − 1))` for anchors `c_l` on a Fibonacci sphere,
/// plus Gaussian noise of standard deviation `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEmbedding {
    pub method_tag: String,
    pub dim: usize,
    pub kappa: f64,
    pub noise: f64,
}

impl ViewEmbedding {
    pub fn new(method_tag: impl Into<String>, dim: usize, kappa: f64, noise: f64) -> Self {
        ViewEmbedding {
            method_tag: method_tag.into(),
            dim,
            kappa,
            noise,
        }
    }

    fn anchor(&self, l: usize) -> Vector3<f64> {
        let golden = PI * (3.0 - 5f64.sqrt());
        let z = 1.0 - 2.0 * (l as f64 + 0.5) / self.dim as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * l as f64;
        Vector3::new(r * phi.cos(), r * phi.sin(), z)
    }

    pub fn embed<R: Rng + ?Sized>(&self, direction: &Vector3<f64>, rng: &mut R) -> Vec<f32> {
        let d = direction.normalize();
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite sigma");
        let mut v: Vec<f32> = (0..self.dim)
            .map(|l| {
                let base = (self.kappa * (d.dot(&self.anchor(l)) - 1.0)).exp();
                let n = if self.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                (base + n) as f32
            })
            .collect();
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

/// COLMAP `cameras.txt` with a single PINHOLE camera.
pub fn colmap_cameras_text(camera_id: u32, k: &CameraIntrinsics, width: u32, height: u32) -> String {
    format!(
        "# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n{camera_id} PINHOLE {width} {height} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy
    )
}

/// COLMAP `images.txt` for `(name, pose)` pairs sharing one camera; keypoint lines left empty.
pub fn colmap_images_text(images: &[(String, Pose)], camera_id: u32) -> String {
    let mut s = String::from(
        "# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n",
    );
    for (idx, (name, pose)) in images.iter().enumerate() {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*pose.rotation()));
        let t = pose.translation();
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {camera_id} {name}\n",
            idx + 1,
            q.w,
            q.i,
            q.j,
            q.k,
            t.x,
            t.y,
            t.z
        );
    }
    s
}

/// A full synthetic dataset: scenes, descriptor files per method, correspondence files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub scenes: Vec<RingSpec>,
    pub methods: Vec<ViewEmbedding>,
    /// Correspondences are written only for pairs up to this analytic view angle.
    pub correspondence_max_view_deg: f64,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    /// Two 40-camera ring scenes and two embedding methods of different quality.
    pub fn demo(seed: u64) -> Self {
        SyntheticDatasetSpec {
            scenes: vec![RingSpec::new("ring_a", 40), RingSpec::new("ring_b", 40)],
            methods: vec![
                ViewEmbedding::new("ViewEmbed256", 256, 8.0, 0.002),
                ViewEmbedding::new("ViewEmbedNoisy256", 256, 8.0, 0.5),
            ],
            correspondence_max_view_deg: 180.0,
            seed,
        }
    }
}

/// Paths produced by [`write_synthetic_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLayout {
    pub manifest_dir: PathBuf,
    pub correspondence_dir: PathBuf,
    /// `(method_tag, directory)`.
    pub descriptor_dirs: Vec<(String, PathBuf)>,
}

/// Writes `<root>/manifests/<scene>/`, `<root>/correspondences/<scene>/` and
/// `<root>/descriptors/<method>/<scene>/{A,B}.vprd` plus timing sidecars.
pub fn write_synthetic_dataset(root: &Path, spec: &SyntheticDatasetSpec) -> Result<SyntheticLayout> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = SyntheticLayout {
        manifest_dir: root.join("manifests"),
        correspondence_dir: root.join("correspondences"),
        descriptor_dirs: spec
            .methods
            .iter()
            .map(|m| (m.method_tag.clone(), root.join("descriptors").join(&m.method_tag)))
            .collect(),
    };
    for ring in &spec.scenes {
        let scene = RingScene::generate(ring, &mut rng);
        scene.write_scene_files(&layout.manifest_dir.join(&ring.scene_id))?;
        for i in 0..ring.n_a {
            for j in 0..ring.n_b {
                if ring.analytic_view_angle_deg(i, j) <= spec.correspondence_max_view_deg {
                    let set = scene.correspondences(i, j, &mut rng)?;
                    let path = DirectoryStore::path_for(
                        &layout.correspondence_dir,
                        &ring.scene_id,
                        set.image_id_a(),
                        set.image_id_b(),
                    );
                    write_correspondence_path(&set, &path)?;
                }
            }
        }
        for (method, (_, dir)) in spec.methods.iter().zip(&layout.descriptor_dirs) {
            let scene_dir = dir.join(crate::fsutil::file_token(&ring.scene_id));
            for subset in [Subset::A, Subset::B] {
                let set = scene.descriptors(method, subset, &mut rng)?;
                write_descriptor_path(&set, &scene_dir.join(format!("{subset}.vprd")))?;
                let per_image = set
                    .image_ids()
                    .iter()
                    .map(|id| ImageTiming {
                        image_id: id.clone(),
                        seconds: 0.01 + 0.01 * rng.random::<f64>(),
                    })
                    .collect();
                TimingSidecar {
                    method_tag: method.method_tag.clone(),
                    subset,
                    per_image,
                }
                .write(&TimingSidecar::path_for(&scene_dir, subset))?;
            }
        }
    }
    Ok(layout)
}
