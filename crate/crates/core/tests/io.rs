use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

use symstereo::fusion::PointCloud;
use symstereo::geometry::{Camera, DepthMap, Grid, Image};
use symstereo::io::{
    read_camera, read_depth_dir, read_image, read_pfm, read_ply, write_bundle, write_camera,
    write_depth_dir, write_image, write_pfm, write_ply, CameraFile, PlyEncoding, ProblemBundle,
    RunConfig, SceneConfig,
};
use symstereo::scenegen::{presets, render_scene};
use symstereo::Error;

fn scene_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name)
}

prop_compose! {
    fn arb_camera_file()(
        f in (1.0..5000.0f64, 1.0..5000.0f64),
        c in (-100.0..2000.0f64, -100.0..2000.0f64),
        skew in -1.0..1.0f64,
        angles in [-3.1..3.1f64, -1.5..1.5f64, -3.1..3.1f64],
        t in [-1e4..1e4f64, -1e4..1e4f64, -1e4..1e4f64],
        range in (1e-3..1e3f64, 1e-4..1e2f64),
    ) -> CameraFile {
        let k = Matrix3::new(f.0, skew, c.0, 0.0, f.1, c.1, 0.0, 0.0, 1.0);
        let r = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]).into_inner();
        CameraFile {
            camera: Camera::new(k, r, Vector3::from(t)).unwrap(),
            depth_min: range.0,
            depth_interval: range.1,
        }
    }
}

fn bits(m: &[f64]) -> Vec<u64> {
    m.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn camera_files_round_trip_bit_exact(file in arb_camera_file()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.txt");
        write_camera(&path, &file).unwrap();
        let back = read_camera(&path).unwrap();
        prop_assert_eq!(bits(back.camera.intrinsics.as_slice()), bits(file.camera.intrinsics.as_slice()));
        prop_assert_eq!(bits(back.camera.rotation.as_slice()), bits(file.camera.rotation.as_slice()));
        prop_assert_eq!(bits(back.camera.translation.as_slice()), bits(file.camera.translation.as_slice()));
        prop_assert_eq!(back.depth_min.to_bits(), file.depth_min.to_bits());
        prop_assert_eq!(back.depth_interval.to_bits(), file.depth_interval.to_bits());
    }

    #[test]
    fn pfm_round_trip(
        values in prop::collection::vec(prop_oneof![Just(0.0), Just(-1.0), 1e-3..1e4f64], 1..80),
        w in 1usize..9,
    ) {
        let h = values.len() / w;
        prop_assume!(h > 0);
        let grid = Grid::from_vec(w, h, values[..w * h].to_vec()).unwrap();
        let depth = DepthMap::new(grid);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        write_pfm(&path, &depth).unwrap();
        let once = read_pfm(&path).unwrap();
        prop_assert_eq!(&once.valid, &depth.valid);
        for ((a, b), v) in once.values.as_slice().iter().zip(depth.values.as_slice()).zip(depth.valid.as_slice()) {
            if *v {
                prop_assert!((a - b).abs() <= 1e-6 * b.abs());
            }
        }
        write_pfm(&path, &once).unwrap();
        let twice = read_pfm(&path).unwrap();
        prop_assert_eq!(bits(twice.values.as_slice()), bits(once.values.as_slice()));
        prop_assert_eq!(twice.valid, once.valid);
    }
}

#[test]
fn pfm_rows_are_bottom_up() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.pfm");
    let depth = DepthMap::new(Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    write_pfm(&path, &depth).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let header = b"Pf\n2 2\n-1.0\n";
    assert_eq!(&bytes[..header.len()], header);
    let body: Vec<f32> = bytes[header.len()..]
        .chunks(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(body, vec![3.0, 4.0, 1.0, 2.0]);
}

#[test]
fn ply_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let points: Vec<Vector3<f64>> = (0..50)
        .map(|i| Vector3::new(i as f64 * 0.37 - 4.0, (i * i) as f64 * 0.011, 100.0 + i as f64 / 3.0))
        .collect();
    let colors: Vec<[f64; 3]> = (0..50).map(|i| [i as f64 / 49.0, 0.5, 1.0 - i as f64 / 49.0]).collect();
    let cloud = PointCloud::new(points, Some(colors)).unwrap();
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let path = dir.path().join("c.ply");
        write_ply(&path, &cloud, enc).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.len(), cloud.len());
        for (a, b) in back.points.iter().zip(&cloud.points) {
            for k in 0..3 {
                assert_eq!(a[k], b[k] as f32 as f64);
            }
        }
        let (bc, cc) = (back.colors.as_ref().unwrap(), cloud.colors.as_ref().unwrap());
        for (a, b) in bc.iter().zip(cc) {
            for k in 0..3 {
                assert_eq!(a[k], (b[k] * 255.0).round() / 255.0);
            }
        }
    }
}

#[test]
fn images_round_trip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    for channels in [1, 3] {
        let img = Image::from_fn(9, 7, channels, |x, y, c| ((x * 31 + y * 17 + c * 7) % 101) as f64 / 100.0);
        let ext = if channels == 1 { "pgm" } else { "ppm" };
        let path = dir.path().join(format!("i.{ext}"));
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.channels(), channels);
        for (a, b) in back.as_slice().iter().zip(img.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }
}

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = render_scene(&presets::plane_scene(3)).unwrap();
    let run = RunConfig {
        hyp_count: Some(32),
        ..RunConfig::default()
    };
    write_bundle(dir.path(), &scene.views, (52.0, 1.5), Some(&scene.gt_depths), &run).unwrap();
    let b = ProblemBundle::load(dir.path()).unwrap();
    assert_eq!(b.names, vec!["00000000", "00000001", "00000002"]);
    assert_eq!(b.run, run);
    for (v, w) in b.views.iter().zip(&scene.views) {
        assert_eq!(v.camera, w.camera);
        for (a, c) in v.image.as_slice().iter().zip(w.image.as_slice()) {
            assert!((a - c).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }
    let gt = b.gt.as_ref().unwrap();
    for (a, c) in gt.iter().zip(&scene.gt_depths) {
        assert_eq!(a.valid, c.valid);
    }
    let hyp = b.hypotheses(b.run.hyp_count()).unwrap();
    assert_eq!(hyp.count(), 32);
    assert_eq!(hyp.d_min(), 52.0);
    assert!((hyp.spacing() - 1.5).abs() < 1e-12);

    let names = b.names.clone();
    write_depth_dir(dir.path().join("out"), &names, gt).unwrap();
    let read = read_depth_dir(dir.path().join("out")).unwrap();
    assert_eq!(read.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(), names);
}

#[test]
fn bundle_needs_a_camera_for_every_image() {
    let dir = tempfile::tempdir().unwrap();
    let scene = render_scene(&presets::plane_scene(2)).unwrap();
    write_bundle(dir.path(), &scene.views, (52.0, 1.5), None, &RunConfig::default()).unwrap();
    let missing = dir.path().join("cams").join("00000001_cam.txt");
    std::fs::remove_file(&missing).unwrap();
    match ProblemBundle::load(dir.path()) {
        Err(Error::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn camera_parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(
        &path,
        "extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\nintrinsic\n100 0 10\n0 abc 10\n0 0 1\n\n50 1\n",
    )
    .unwrap();
    match read_camera(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn scene_files_match_the_presets() {
    let plane = SceneConfig::read(scene_file("plane.toml")).unwrap();
    assert_eq!(plane.to_spec().unwrap(), presets::plane_scene(3));
    let occ = SceneConfig::read(scene_file("occluder.toml")).unwrap();
    let spec = occ.to_spec().unwrap();
    let preset = presets::occluder_scene(3, spec.width, spec.height);
    assert_eq!(spec, preset);
}

#[test]
fn run_config_rejects_unknown_keys() {
    let err = RunConfig::parse("hyp_count = 8\nlamda1 = 0.5\n", Path::new("run.toml")).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("lamda1")), "{err}");
    let ok = RunConfig::parse("hyp_count = 8\nlambda1 = 0.25\n", Path::new("run.toml")).unwrap();
    assert_eq!(ok.weights().lambda1, 0.25);
    assert_eq!(ok.hyp_count(), 8);
    assert_eq!(RunConfig::parse(&ok.to_toml(), Path::new("x")).unwrap(), ok);
}
