use symstereo::consistency::{
    brightness_triples, occlusion_masks, total_loss, LossContext,
};
use symstereo::geometry::{DepthMap, Grid};
use symstereo::photometry::LossWeights;
use symstereo::scenegen::{presets, render_scene};

/// Pixels at least `margin` away from any pixel where the mask flips.
fn interior(mask: &Grid<bool>, margin: usize) -> Grid<bool> {
    let (w, h) = (mask.width(), mask.height());
    Grid::from_fn(w, h, |x, y| {
        if x < margin || y < margin || x + margin >= w || y + margin >= h {
            return false;
        }
        let v = *mask.get(x, y);
        (y - margin..=y + margin).all(|yy| (x - margin..=x + margin).all(|xx| *mask.get(xx, yy) == v))
    })
}

#[test]
fn true_depths_reproduce_visibility() {
    let scene = render_scene(&presets::occluder_scene(3, 64, 48)).unwrap();
    let masks = occlusion_masks(&scene.views, &scene.gt_depths, 5.0).unwrap();
    assert_eq!(masks.len(), 6);
    for (&(i, j), m) in &masks {
        assert_eq!(m.pair, (i, j));
        let vis = &scene.visibility[&(i, j)];
        let core = interior(vis, 2);
        let (mut agree, mut n) = (0, 0);
        for y in 0..48 {
            for x in 0..64 {
                if *core.get(x, y) {
                    n += 1;
                    agree += usize::from(m.valid.get(x, y) == vis.get(x, y));
                }
            }
        }
        assert!(agree as f64 >= 0.98 * n as f64, "pair ({i},{j}): {agree}/{n}");
    }
}

#[test]
fn true_depths_beat_scaled_depths() {
    let scene = render_scene(&presets::plane_scene(3)).unwrap();
    let w = LossWeights::default();
    let masks = occlusion_masks(&scene.views, &scene.gt_depths, w.tau_occ).unwrap();
    let good = total_loss(&scene.views, &scene.gt_depths, &masks, &w).unwrap();
    let off: Vec<DepthMap> = scene.gt_depths.iter().map(|d| d.scaled(1.1)).collect();
    let bad = total_loss(&scene.views, &off, &masks, &w).unwrap();
    assert!(good.total < bad.total, "{} vs {}", good.total, bad.total);
    assert!((good.recomputed_total() - good.total).abs() <= 1e-12 * good.total);
}

#[test]
fn brightness_triples_cover_every_pair_of_partners() {
    for v in 2..7 {
        let t = brightness_triples(v);
        assert_eq!(t.len(), v * (v - 1) * (v - 2) / 2);
        for &(i, j, k) in &t {
            assert!(j < k && i != j && i != k && k < v);
        }
    }
}

#[test]
fn missing_mask_is_an_error() {
    let scene = render_scene(&presets::plane_scene(2)).unwrap();
    let mut masks = occlusion_masks(&scene.views, &scene.gt_depths, 5.0).unwrap();
    masks.remove(&(1, 0));
    let w = LossWeights::default();
    assert!(LossContext::new(&scene.views, &scene.gt_depths, &masks, &w).is_err());
}

#[test]
fn repeated_view_pair_is_rejected() {
    let scene = render_scene(&presets::plane_scene(2)).unwrap();
    let masks = occlusion_masks(&scene.views, &scene.gt_depths, 5.0).unwrap();
    let w = LossWeights::default();
    let ctx = LossContext::new(&scene.views, &scene.gt_depths, &masks, &w).unwrap();
    assert!(ctx.unary(1, 1).is_err());
    assert!(ctx.unary(0, 5).is_err());
    assert!(ctx.unary(0, 1).is_ok());
}

#[test]
fn gradient_has_one_grid_per_view() {
    let scene = render_scene(&presets::plane_scene(3)).unwrap();
    let w = LossWeights::default();
    let masks = occlusion_masks(&scene.views, &scene.gt_depths, w.tau_occ).unwrap();
    let ctx = LossContext::new(&scene.views, &scene.gt_depths, &masks, &w).unwrap();
    let g = ctx.gradient().unwrap();
    assert_eq!(g.len(), 3);
    assert!(g.iter().all(|gi| gi.width() == 64 && gi.height() == 48));
    assert!(g.iter().flat_map(|gi| gi.as_slice()).all(|v| v.is_finite()));
}
