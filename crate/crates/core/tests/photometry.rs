use proptest::prelude::*;

use symstereo::geometry::{Grid, Image};
use symstereo::photometry::{
    census_distance, census_transform, charbonnier, charbonnier_derivative, compare_images,
    LossWeights, CENSUS_WINDOW,
};

fn grid_from(values: &[f64], w: usize, h: usize) -> Grid<f64> {
    Grid::from_vec(w, h, values.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn census_ignores_monotone_transforms(
        values in prop::collection::vec(-10.0..10.0f64, 7 * 5),
        scale in 0.1..10.0f64,
        shift in -3.0..3.0f64,
    ) {
        let g = grid_from(&values, 7, 5);
        let t = g.map(|&v| (scale * v + shift).exp().ln_1p());
        let a = census_transform(&g, CENSUS_WINDOW).unwrap();
        let b = census_transform(&t, CENSUS_WINDOW).unwrap();
        prop_assert_eq!(&a, &b);
        let d = census_distance(&a, &b).unwrap();
        prop_assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn census_distance_is_a_normalized_metric(
        a in prop::collection::vec(0.0..1.0f64, 6 * 6),
        b in prop::collection::vec(0.0..1.0f64, 6 * 6),
    ) {
        let ca = census_transform(&grid_from(&a, 6, 6), 5).unwrap();
        let cb = census_transform(&grid_from(&b, 6, 6), 5).unwrap();
        let ab = census_distance(&ca, &cb).unwrap();
        let ba = census_distance(&cb, &ca).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn charbonnier_bounds(s in -1e3..1e3f64) {
        let p = charbonnier(s);
        prop_assert!(p >= s.abs());
        prop_assert!(p <= s.abs() + 1e-3);
        prop_assert!(charbonnier_derivative(s).abs() < 1.0);
        prop_assert_eq!(charbonnier(-s), p);
    }

    #[test]
    fn comparator_is_symmetric(
        a in prop::collection::vec(0.0..1.0f64, 8 * 6 * 3),
        b in prop::collection::vec(0.0..1.0f64, 8 * 6 * 3),
        mask in prop::collection::vec(prop::bool::weighted(0.8), 8 * 6),
    ) {
        prop_assume!(mask.iter().any(|&m| m));
        let ia = Image::from_vec(8, 6, 3, a).unwrap();
        let ib = Image::from_vec(8, 6, 3, b).unwrap();
        let m = Grid::from_vec(8, 6, mask).unwrap();
        let w = LossWeights::default();
        let (ab, _) = compare_images(&ia, &ib, &m, &w, false).unwrap();
        let (ba, _) = compare_images(&ib, &ia, &m, &w, false).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
        prop_assert!(close(ab.l1, ba.l1) && close(ab.gradient, ba.gradient));
        prop_assert!(close(ab.ssim, ba.ssim) && close(ab.census, ba.census));
    }
}

#[test]
fn unary_terms_scale_with_weights() {
    let a = Image::from_fn(8, 6, 3, |x, y, c| ((x * 7 + y * 3 + c) % 5) as f64 / 5.0);
    let b = Image::from_fn(8, 6, 3, |x, y, c| ((x * 2 + y * 5 + c) % 7) as f64 / 7.0);
    let m = Grid::new(8, 6, true);
    let w = LossWeights::default();
    let doubled = LossWeights {
        lambda1: 2.0 * w.lambda1,
        lambda2: 2.0 * w.lambda2,
        lambda3: 2.0 * w.lambda3,
        lambda4: 2.0 * w.lambda4,
        ..w
    };
    let (one, _) = compare_images(&a, &b, &m, &w, false).unwrap();
    let (two, _) = compare_images(&a, &b, &m, &doubled, false).unwrap();
    assert!((two.total() - 2.0 * one.total()).abs() < 1e-12);
}
