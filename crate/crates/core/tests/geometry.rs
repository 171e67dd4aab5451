use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

use symstereo::geometry::{
    apply_homography, bilinear_jacobian, bilinear_sample, plane_homography, synthesize_view,
    warp_depth, Camera, CameraView, DepthHypotheses, DepthMap, Grid, Image, WarpField,
};
use symstereo::scenegen::{presets, render_scene};

fn intrinsics(f: f64, cx: f64, cy: f64) -> Matrix3<f64> {
    Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0)
}

fn camera(k: Matrix3<f64>, angles: [f64; 3], t: [f64; 3]) -> Camera {
    let r = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]).into_inner();
    Camera::new(k, r, Vector3::from(t)).unwrap()
}

fn project_world(cam: &Camera, p: &Vector3<f64>) -> Option<[f64; 2]> {
    cam.project(&cam.world_to_camera(p))
}

prop_compose! {
    fn arb_camera()(
        f in 50.0..500.0f64,
        cx in 10.0..60.0f64,
        cy in 10.0..40.0f64,
        a in -0.2..0.2f64,
        b in -0.2..0.2f64,
        c in -0.2..0.2f64,
        tx in -20.0..20.0f64,
        ty in -20.0..20.0f64,
        tz in -10.0..10.0f64,
    ) -> Camera {
        camera(intrinsics(f, cx, cy), [a, b, c], [tx, ty, tz])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Project-and-reproject oracle: lift the source pixel onto the plane, move it
    // rigidly into the destination camera, project; then intersect the
    // destination ray with the same plane and project back into the source.
    #[test]
    fn homography_matches_reprojection(
        src in arb_camera(),
        dst in arb_camera(),
        x in 0.0..64.0f64,
        y in 0.0..48.0f64,
        d in 80.0..200.0f64,
    ) {
        let world = src.camera_to_world(&src.backproject(x, y, d));
        let in_dst = dst.world_to_camera(&world);
        prop_assume!(in_dst.z > 1.0);
        let expected = dst.project(&in_dst).unwrap();
        let h = plane_homography(&src, &dst, d).unwrap();
        let got = apply_homography(&h, x, y).unwrap();
        prop_assert!((got[0] - expected[0]).abs() < 1e-6 && (got[1] - expected[1]).abs() < 1e-6,
            "{got:?} vs {expected:?}");

        let ray = dst.rotation.transpose() * dst.intrinsics_inverse() * Vector3::new(got[0], got[1], 1.0);
        let origin = dst.center();
        let s = (d - (src.rotation * origin + src.translation).z) / (src.rotation * ray).z;
        let back = project_world(&src, &(origin + ray * s)).unwrap();
        prop_assert!((back[0] - x).abs() < 1e-6 && (back[1] - y).abs() < 1e-6, "{back:?} vs ({x}, {y})");
    }
}

#[test]
fn axial_translation_homography_closed_form() {
    let (f, d, tz) = (100.0, 50.0, 5.0);
    let k = Matrix3::from_diagonal(&Vector3::new(f, f, 1.0));
    let src = camera(k, [0.0; 3], [0.0; 3]);
    // Destination center at z = +tz.
    let dst = camera(k, [0.0; 3], [0.0, 0.0, -tz]);
    let h = plane_homography(&src, &dst, d).unwrap();
    let m = k * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1.0 - tz / d)) * k.try_inverse().unwrap();
    let m = m / m[(2, 2)];
    assert!((h - m).abs().max() < 1e-12, "{h} vs {m}");
    for (x, y) in [(0.0, 0.0), (13.5, -7.25), (-40.0, 22.0)] {
        let world = src.camera_to_world(&src.backproject(x, y, d));
        let e = project_world(&dst, &world).unwrap();
        let g = apply_homography(&h, x, y).unwrap();
        assert!((g[0] - e[0]).abs() < 1e-9 && (g[1] - e[1]).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn bilinear_exact_on_bilinear_functions(
        a in -1.0..1.0f64, b in -0.1..0.1f64, c in -0.1..0.1f64, e in -0.01..0.01f64,
        coords in prop::collection::vec((0.0..=11.0f64, 0.0..=7.0f64), 96),
    ) {
        let (w, h) = (12, 8);
        let f = |x: f64, y: f64| a + b * x + c * y + e * x * y;
        let img = Image::from_fn(w, h, 1, |x, y, _| f(x as f64, y as f64));
        let grid = Grid::from_vec(w, h, coords.iter().map(|&(x, y)| [x, y]).collect()).unwrap();
        let field = WarpField::from_coords(grid, w, h);
        let (out, valid) = bilinear_sample(&img, &field).unwrap();
        prop_assert_eq!(&valid, &field.in_bounds);
        for (k, &(x, y)) in coords.iter().enumerate() {
            let got = out.get(k % w, k / w, 0);
            prop_assert!((got - f(x, y)).abs() < 1e-9, "{} vs {}", got, f(x, y));
        }
    }

    #[test]
    fn bilinear_jacobian_matches_central_differences(
        seed_values in prop::collection::vec(0.0..1.0f64, 12 * 8 * 2),
        cell in (0usize..11, 0usize..7),
        frac in (0.01..0.99f64, 0.01..0.99f64),
    ) {
        let (w, h) = (12, 8);
        let img = Image::from_vec(w, h, 2, seed_values).unwrap();
        let (x, y) = (cell.0 as f64 + frac.0, cell.1 as f64 + frac.1);
        let step = 1e-4;
        // Independent bilinear interpolant written out from the four taps.
        let sample = |sx: f64, sy: f64| {
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            (0..2).map(|c| {
                let v = |xx: usize, yy: usize| img.get(xx, yy, c);
                (1.0 - fx) * (1.0 - fy) * v(x0, y0) + fx * (1.0 - fy) * v(x0 + 1, y0)
                    + (1.0 - fx) * fy * v(x0, y0 + 1) + fx * fy * v(x0 + 1, y0 + 1)
            }).collect::<Vec<f64>>()
        };
        let jac = bilinear_jacobian(&img, x, y).unwrap();
        let (xp, xm) = (sample(x + step, y), sample(x - step, y));
        let (yp, ym) = (sample(x, y + step), sample(x, y - step));
        for c in 0..2 {
            let fd = [(xp[c] - xm[c]) / (2.0 * step), (yp[c] - ym[c]) / (2.0 * step)];
            for k in 0..2 {
                let scale = jac[c][k].abs().max(fd[k].abs()).max(1e-8);
                prop_assert!((jac[c][k] - fd[k]).abs() / scale < 1e-4, "{:?} vs {:?}", jac[c], fd);
            }
        }
    }

    #[test]
    fn hypotheses_are_uniform(d_min in 0.1..500.0f64, width in 1.0..1000.0f64, count in 2usize..300) {
        let hyp = DepthHypotheses::new(d_min, d_min + width, count).unwrap();
        let s = hyp.samples();
        prop_assert_eq!(s[0], d_min);
        prop_assert_eq!(s[count - 1], d_min + width);
        let spacing = hyp.spacing();
        for pair in s.windows(2) {
            prop_assert!((pair[1] - pair[0] - spacing).abs() < 1e-9);
        }
    }
}

#[test]
fn bilinear_sample_shape_mismatch() {
    let img = Image::new(4, 3, 1);
    assert!(bilinear_sample(&img, &WarpField::identity(3, 3)).is_err());
}

#[test]
fn invalid_cameras_rejected() {
    let k = intrinsics(100.0, 10.0, 10.0);
    let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    assert!(Camera::new(k, skewed, Vector3::zeros()).is_err());
    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
    assert!(Camera::new(k, flip, Vector3::zeros()).is_err());
    assert!(Camera::new(intrinsics(-1.0, 0.0, 0.0), Matrix3::identity(), Vector3::zeros()).is_err());
}

#[test]
fn self_synthesis_is_bit_exact() {
    let scene = render_scene(&presets::plane_scene(2)).unwrap();
    let v = &scene.views[1];
    let depth = DepthMap::constant(v.width(), v.height(), 77.0);
    let (img, valid) = synthesize_view(&depth, v, v).unwrap();
    assert_eq!(valid.count_true(), valid.len());
    assert_eq!(img, v.image);
}

fn mean_abs_error(a: &Image, b: &Image, valid: &Grid<bool>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            if *valid.get(x, y) {
                for c in 0..a.channels() {
                    sum += (a.get(x, y, c) - b.get(x, y, c)).abs();
                    n += 1;
                }
            }
        }
    }
    sum / n as f64
}

#[test]
fn synthesis_with_true_depth_matches_target() {
    let scene = render_scene(&presets::plane_scene(3)).unwrap();
    let (target, source) = (&scene.views[0], &scene.views[1]);
    let gt = &scene.gt_depths[0];
    let (img, valid) = synthesize_view(gt, source, target).unwrap();
    let good = mean_abs_error(&img, &target.image, &valid);
    assert!(good < 0.01, "MAE {good}");
    let (img2, valid2) = synthesize_view(&gt.scaled(2.0), source, target).unwrap();
    let bad = mean_abs_error(&img2, &target.image, &valid2);
    assert!(bad > good, "{bad} vs {good}");
}

#[test]
fn warp_depth_identity_and_parallel_plane() {
    let scene = render_scene(&presets::plane_scene(2)).unwrap();
    let cam = &scene.views[0].camera;
    let gt = &scene.gt_depths[0];
    let same = warp_depth(gt, gt, cam, cam).unwrap();
    assert_eq!(&same, gt);

    let cams = presets::parallel_rig(&[0.0, 12.0], 32, 24, 80.0);
    let d = DepthMap::constant(32, 24, 90.0);
    let out = warp_depth(&d, &d, &cams[1], &cams[0]).unwrap();
    assert!(out.valid_count() > 0);
    for y in 0..24 {
        for x in 0..32 {
            if let Some(v) = out.depth(x, y) {
                assert!((v - 90.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn warp_depth_flags_occluded_band() {
    let scene = render_scene(&presets::occluder_scene(3, 64, 48)).unwrap();
    // View 2 sits left of the occluder edge and loses part of the background.
    let (i, j) = (0, 2);
    let (ci, cj) = (&scene.views[i].camera, &scene.views[j].camera);
    let warped = warp_depth(&scene.gt_depths[j], &scene.gt_depths[i], cj, ci).unwrap();
    let vis = &scene.visibility[&(i, j)];
    let hits = &scene.hit_primitive[i];
    let (w, h) = (vis.width(), vis.height());
    let (mut visible, mut occluded) = (0, 0);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let Some(v) = warped.depth(x, y) else { continue };
            let d = scene.gt_depths[i].depth(x, y).unwrap();
            // Skip pixels next to a visibility or surface boundary.
            let uniform = (y - 1..=y + 1).all(|yy| {
                (x - 1..=x + 1).all(|xx| vis.get(xx, yy) == vis.get(x, y) && hits.get(xx, yy) == hits.get(x, y))
            });
            if !uniform {
                continue;
            }
            if *vis.get(x, y) {
                assert!((v - d).abs() < 1e-6, "visible ({x},{y}): {v} vs {d}");
                visible += 1;
            } else {
                assert!(d - v > 5.0, "occluded ({x},{y}): {v} vs {d}");
                occluded += 1;
            }
        }
    }
    assert!(visible > 100 && occluded > 20, "{visible} {occluded}");
}

#[test]
fn warp_depth_scales_with_the_scene() {
    let scene = render_scene(&presets::plane_scene(2)).unwrap();
    let (a, b) = (&scene.views[0].camera, &scene.views[1].camera);
    let da = &scene.gt_depths[0];
    let db = &scene.gt_depths[1];
    let base = warp_depth(db, da, b, a).unwrap();
    for s in [2.0, 3.0] {
        let scale = |c: &Camera| Camera::new(c.intrinsics, c.rotation, c.translation * s).unwrap();
        let out = warp_depth(&db.scaled(s), &da.scaled(s), &scale(b), &scale(a)).unwrap();
        assert_eq!(out.valid, base.valid);
        for (o, v) in out.values.as_slice().iter().zip(base.values.as_slice()) {
            if s == 2.0 {
                assert_eq!(*o, v * s);
            } else {
                assert!((o - v * s).abs() <= 1e-12 * o.abs());
            }
        }
    }
}

#[test]
fn views_must_share_shape() {
    let k = intrinsics(50.0, 4.0, 4.0);
    let cam = Camera::new(k, Matrix3::identity(), Vector3::zeros()).unwrap();
    let views = vec![
        CameraView::new(cam.clone(), Image::new(8, 8, 3)).unwrap(),
        CameraView::new(cam, Image::new(8, 6, 3)).unwrap(),
    ];
    assert!(symstereo::geometry::check_views(&views).is_err());
}
