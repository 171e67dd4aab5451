use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symstereo::fusion::{depths_to_cloud, filter_consistent};
use symstereo::geometry::{warp_depth, Camera, CameraView, DepthMap};
use symstereo::scenegen::{presets, render_scene, SceneSpec};

fn small_scene(n: usize) -> (Vec<CameraView>, Vec<DepthMap>) {
    let spec = SceneSpec {
        width: 24,
        height: 18,
        seed: 5,
        primitives: vec![presets::plane(presets::PLANE_DEPTH)],
        cameras: presets::converging_rig(n, 24, 18, 60.0),
    };
    let s = render_scene(&spec).unwrap();
    (s.views, s.gt_depths)
}

fn noisy(depths: &[DepthMap], amplitude: f64, seed: u64) -> Vec<DepthMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    depths
        .iter()
        .map(|d| {
            let mut out = d.clone();
            for v in out.values.as_mut_slice() {
                *v += rng.random_range(-amplitude..amplitude);
            }
            out
        })
        .collect()
}

#[test]
fn corrupted_view_is_dropped() {
    let (views, mut depths) = small_scene(3);
    depths[2] = depths[2].scaled(1.3);
    let kept = filter_consistent(&depths, &views, 1.5, 1).unwrap();
    assert_eq!(kept[2].valid_count(), 0);
    assert!(kept[0].valid_count() > 100);
    assert!(kept[1].valid_count() > 100);
    let strict = filter_consistent(&depths, &views, 1.5, 2).unwrap();
    assert!(strict.iter().all(|d| d.valid_count() == 0));
}

#[test]
fn exact_plane_survives_and_keeps_its_depth() {
    let (views, depths) = small_scene(3);
    let kept = filter_consistent(&depths, &views, 0.5, 2).unwrap();
    for (k, d) in kept.iter().zip(&depths) {
        assert!(k.valid_count() > 0);
        for y in 0..18 {
            for x in 0..24 {
                if let Some(v) = k.depth(x, y) {
                    assert!((v - d.depth(x, y).unwrap()).abs() < 1e-9);
                }
            }
        }
    }
    let cloud = depths_to_cloud(&kept, &views).unwrap();
    for p in &cloud.points {
        assert!((p.z - presets::PLANE_DEPTH).abs() < 1e-9);
    }
}

fn survivors(maps: &[DepthMap]) -> Vec<bool> {
    maps.iter().flat_map(|d| d.valid.as_slice().to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Brute-force quorum: count agreeing re-projected depths per pixel and
    // average with the view's own depth.
    #[test]
    fn quorum_matches_brute_force(seed in 0u64..1000, tau in 0.1..3.0f64, min_views in 1usize..4) {
        let (views, gt) = small_scene(4);
        let depths = noisy(&gt, 2.0, seed);
        let kept = filter_consistent(&depths, &views, tau, min_views).unwrap();
        for i in 0..4 {
            let others: Vec<DepthMap> = (0..4)
                .filter(|&j| j != i)
                .map(|j| warp_depth(&depths[j], &depths[i], &views[j].camera, &views[i].camera).unwrap())
                .collect();
            for y in 0..18 {
                for x in 0..24 {
                    let d = depths[i].depth(x, y).unwrap();
                    let agree: Vec<f64> = others
                        .iter()
                        .filter_map(|o| o.depth(x, y))
                        .filter(|v| (v - d).abs() <= tau)
                        .collect();
                    let expect = (agree.len() >= min_views)
                        .then(|| (d + agree.iter().sum::<f64>()) / (agree.len() + 1) as f64);
                    match (kept[i].depth(x, y), expect) {
                        (None, None) => {}
                        (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                        other => prop_assert!(false, "view {} ({},{}): {:?}", i, x, y, other),
                    }
                }
            }
        }
    }

    #[test]
    fn filtering_is_monotone(seed in 0u64..1000, tau in 0.1..2.0f64, grow in 0.0..2.0f64, m in 1usize..3) {
        let (views, gt) = small_scene(4);
        let depths = noisy(&gt, 1.5, seed);
        let base = survivors(&filter_consistent(&depths, &views, tau, m).unwrap());
        let looser = survivors(&filter_consistent(&depths, &views, tau + grow, m).unwrap());
        let stricter = survivors(&filter_consistent(&depths, &views, tau, m + 1).unwrap());
        for k in 0..base.len() {
            prop_assert!(!base[k] || looser[k]);
            prop_assert!(!stricter[k] || base[k]);
        }
    }
}

#[test]
fn rigid_motion_of_the_world_moves_the_cloud() {
    let (views, gt) = small_scene(3);
    let depths = noisy(&gt, 1.0, 9);
    let rot = Rotation3::from_euler_angles(0.3, -0.2, 0.7).into_inner();
    let shift = Vector3::new(5.0, -12.0, 40.0);
    let moved: Vec<CameraView> = views
        .iter()
        .map(|v| {
            let c = &v.camera;
            let r = c.rotation * rot.transpose();
            let t = c.translation - r * shift;
            CameraView::new(Camera::new(c.intrinsics, r, t).unwrap(), v.image.clone()).unwrap()
        })
        .collect();
    let a = filter_consistent(&depths, &views, 1.0, 1).unwrap();
    let b = filter_consistent(&depths, &moved, 1.0, 1).unwrap();
    for (ka, kb) in a.iter().zip(&b) {
        assert_eq!(ka.valid, kb.valid);
        for (x, y) in ka.values.as_slice().iter().zip(kb.values.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
    let ca = depths_to_cloud(&a, &views).unwrap();
    let cb = depths_to_cloud(&b, &moved).unwrap();
    assert_eq!(ca.len(), cb.len());
    assert!(!ca.is_empty());
    for (p, q) in ca.points.iter().zip(&cb.points) {
        assert!((rot * p + shift - q).norm() < 1e-9);
    }
    assert_eq!(ca.colors, cb.colors);
}

#[test]
fn cloud_points_reproject_to_their_pixels() {
    let (views, gt) = small_scene(3);
    let depths = noisy(&gt, 0.5, 2);
    let cloud = depths_to_cloud(&depths, &views).unwrap();
    assert_eq!(cloud.len(), 3 * 24 * 18);
    let mut k = 0;
    for (v, d) in views.iter().zip(&depths) {
        for y in 0..18 {
            for x in 0..24 {
                let p = v.camera.world_to_camera(&cloud.points[k]);
                let [u, w] = v.camera.project(&p).unwrap();
                assert!((u - x as f64).abs() < 1e-9 && (w - y as f64).abs() < 1e-9);
                assert!((p.z - d.depth(x, y).unwrap()).abs() < 1e-9);
                let px = v.image.pixel(x, y);
                assert_eq!(cloud.colors.as_ref().unwrap()[k], [px[0], px[1], px[2]]);
                k += 1;
            }
        }
    }
}
