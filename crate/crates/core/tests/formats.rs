//! On-disk formats shared with the extractor, and scene loading from pose files.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use vpr_pairs::dataset::{
    load_scene, read_correspondence_path, read_descriptor_path, write_correspondence_path,
    write_descriptor_path, CorrespondenceSet, DatasetTag, DescriptorSet, ImageRecord, ImageTiming,
    PoseSource, SceneManifest, Subset, TimingSidecar,
};
use vpr_pairs::geometry::{view_angle, GeometryConfig};
use vpr_pairs::ground_truth::{label_scene, LabelStatus, NoCorrespondences};
use vpr_pairs::ErrorKind;

fn le_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[test]
fn descriptor_file_layout_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let set = DescriptorSet::new(
        Subset::B,
        "CosPlace512",
        vec!["img_0".into(), "img_1".into()],
        3,
        vec![0.5, -1.0, 2.25, 0.0, 1e-3, f32::MAX],
    )
    .unwrap();
    let path = dir.path().join("nested/B.vprd");
    write_descriptor_path(&set, &path).unwrap();

    let mut expected = b"VPRD".to_vec();
    expected.extend_from_slice(&1u16.to_le_bytes());
    le_str(&mut expected, "CosPlace512");
    expected.push(b'B');
    expected.extend_from_slice(&2u32.to_le_bytes());
    expected.extend_from_slice(&3u32.to_le_bytes());
    le_str(&mut expected, "img_0");
    le_str(&mut expected, "img_1");
    for v in set.data() {
        expected.extend_from_slice(&v.to_le_bytes());
    }
    assert_eq!(std::fs::read(&path).unwrap(), expected);
    assert_eq!(read_descriptor_path(&path).unwrap(), set);
    // No temporary files are left beside the target.
    assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
}

#[test]
fn correspondence_file_layout_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let set = CorrespondenceSet::new("a/1", "b/7", vec![[1.0, 2.0, 3.0, 4.0], [10.5, 20.25, 30.0, 40.0]]).unwrap();
    let path = dir.path().join("pair.vprc");
    write_correspondence_path(&set, &path).unwrap();

    let mut expected = b"VPRC".to_vec();
    expected.extend_from_slice(&1u16.to_le_bytes());
    le_str(&mut expected, "a/1");
    le_str(&mut expected, "b/7");
    expected.extend_from_slice(&2u32.to_le_bytes());
    for row in set.points() {
        for v in row {
            expected.extend_from_slice(&v.to_le_bytes());
        }
    }
    assert_eq!(std::fs::read(&path).unwrap(), expected);
    assert_eq!(read_correspondence_path(&path).unwrap(), set);
}

#[test]
fn damaged_files_are_integrity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let set = DescriptorSet::new(Subset::A, "m", vec!["x".into()], 4, vec![1.0; 4]).unwrap();
    let path = dir.path().join("A.vprd");
    write_descriptor_path(&set, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    let truncated = read_descriptor_path(&path).unwrap_err();
    assert_eq!(truncated.kind(), ErrorKind::Integrity, "{truncated}");

    let mut magic = bytes.clone();
    magic[..4].copy_from_slice(b"VPRC");
    std::fs::write(&path, &magic).unwrap();
    assert_eq!(read_descriptor_path(&path).unwrap_err().kind(), ErrorKind::Integrity);

    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0, 0, 0, 0]);
    std::fs::write(&path, &extra).unwrap();
    assert_eq!(read_descriptor_path(&path).unwrap_err().kind(), ErrorKind::Integrity);

    let mut zero = bytes;
    let n = zero.len();
    zero[n - 16..].fill(0);
    std::fs::write(&path, &zero).unwrap();
    assert_eq!(read_descriptor_path(&path).unwrap_err().kind(), ErrorKind::Integrity);

    let missing = read_descriptor_path(&dir.path().join("absent.vprd")).unwrap_err();
    assert_eq!(missing.kind(), ErrorKind::Config);
}

#[test]
fn timing_sidecar_round_trip_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let set = DescriptorSet::new(Subset::A, "m", vec!["p".into(), "q".into()], 1, vec![1.0, 2.0]).unwrap();
    let sidecar = TimingSidecar {
        method_tag: "m".into(),
        subset: Subset::A,
        per_image: vec![
            ImageTiming { image_id: "p".into(), seconds: 0.25 },
            ImageTiming { image_id: "q".into(), seconds: 0.5 },
        ],
    };
    let path = TimingSidecar::path_for(dir.path(), Subset::A);
    assert_eq!(path, dir.path().join("A.timing.json"));
    sidecar.write(&path).unwrap();
    let back = TimingSidecar::read(&path).unwrap();
    assert_eq!(back, sidecar);
    assert_eq!(back.total_seconds(), 0.75);
    back.check_against(&set).unwrap();

    let mut swapped = sidecar.clone();
    swapped.per_image.swap(0, 1);
    assert_eq!(swapped.check_against(&set).unwrap_err().kind(), ErrorKind::Integrity);
    let mut other = sidecar.clone();
    other.method_tag = "n".into();
    assert_eq!(other.check_against(&set).unwrap_err().kind(), ErrorKind::Integrity);
    let mut negative = sidecar;
    negative.per_image[0].seconds = -1.0;
    assert!(negative.validate().is_err());
}

fn record(id: &str, file: &str, subset: Subset, key: Option<&str>) -> ImageRecord {
    ImageRecord {
        image_id: id.into(),
        file_path: file.into(),
        subset,
        width: 1241,
        height: 376,
        pose_key: key.map(String::from),
    }
}

fn yaw(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn kitti_line(r: &Matrix3<f64>, t: &Vector3<f64>) -> String {
    let mut cells = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            cells.push(format!("{:.12e}", r[(i, j)]));
        }
        cells.push(format!("{:.12e}", t[i]));
    }
    cells.join(" ")
}

fn write_kitti_scene(dir: &Path) -> std::path::PathBuf {
    // Camera-to-world poses: driving forward along z while turning.
    let frames = [(0.0, 0.0), (20.0, 1.0), (80.0, 2.0), (100.0, 3.0)];
    let poses: Vec<String> = frames
        .iter()
        .map(|(deg, z)| kitti_line(&yaw(*deg), &Vector3::new(0.0, 0.0, *z)))
        .collect();
    std::fs::write(dir.join("00.txt"), poses.join("\n") + "\n").unwrap();
    std::fs::write(
        dir.join("calib.txt"),
        "P0: 7.188560e+02 0 6.071928e+02 0 0 7.188560e+02 1.852157e+02 0 0 0 1 0\n",
    )
    .unwrap();
    let manifest = SceneManifest {
        scene_id: "kitti_00".into(),
        dataset_tag: DatasetTag::Kitti,
        pose_source: PoseSource::Kitti {
            poses: "00.txt".into(),
            calib: "calib.txt".into(),
        },
        images: vec![
            record("f0", "image_0/000000.png", Subset::A, None),
            record("f1", "image_0/000001.png", Subset::A, None),
            record("f2", "frames/second.png", Subset::B, Some("2")),
            record("f3", "image_0/000003.png", Subset::B, None),
        ],
    };
    let path = dir.join("manifest.json");
    manifest.write(&path).unwrap();
    path
}

#[test]
fn kitti_scene_loads_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let scene = load_scene(&write_kitti_scene(dir.path())).unwrap();
    assert_eq!(scene.dataset_tag, DatasetTag::Kitti);
    assert_eq!(scene.ids(Subset::A), vec!["f0", "f1"]);
    assert_eq!(scene.ids(Subset::B), vec!["f2", "f3"]);
    assert!((scene.images_a[0].intrinsics.fx - 718.856).abs() < 1e-9);

    // World-to-camera inversion: the camera centre is the file translation.
    let c = scene.images_a[1].pose.center();
    assert!((c - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
    let phi = view_angle(&scene.images_a[0].pose, &scene.images_b[0].pose);
    assert!((phi - 80.0).abs() < 1e-6, "{phi}");

    let gt = label_scene(&scene, &NoCorrespondences, &GeometryConfig::default(), 0).unwrap();
    let statuses: Vec<LabelStatus> = gt.labels.iter().map(|l| l.status).collect();
    // f0-f2 80, f0-f3 100, f1-f2 60, f1-f3 80 degrees.
    assert_eq!(
        statuses,
        vec![
            LabelStatus::FailView,
            LabelStatus::FailView,
            LabelStatus::InsufficientMatches,
            LabelStatus::FailView
        ]
    );
}

#[test]
fn colmap_scene_with_missing_pose_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cameras.txt"), "1 PINHOLE 640 480 500 500 320 240\n").unwrap();
    std::fs::write(dir.path().join("images.txt"), "1 1 0 0 0 0 0 0 1 a.jpg\n\n2 1 0 0 0 1 0 0 1 b.jpg\n\n").unwrap();
    let mut manifest = SceneManifest {
        scene_id: "tt".into(),
        dataset_tag: DatasetTag::TanksAndTemples,
        pose_source: PoseSource::ColmapText {
            images: "images.txt".into(),
            cameras: "cameras.txt".into(),
        },
        images: vec![
            record("a", "a.jpg", Subset::A, None),
            record("b", "renamed.jpg", Subset::B, Some("b.jpg")),
        ],
    };
    let path = dir.path().join("manifest.json");
    manifest.write(&path).unwrap();
    let scene = load_scene(&path).unwrap();
    assert_eq!(scene.images_b[0].pose.center(), Vector3::new(-1.0, 0.0, 0.0));

    manifest.images[1].pose_key = None;
    manifest.write(&path).unwrap();
    let err = load_scene(&path).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(err.to_string().contains("renamed.jpg"), "{err}");
}
