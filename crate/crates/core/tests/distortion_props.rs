use fingergan_core::distortion::*;
use fingergan_core::image::GrayImage;
use fingergan_core::rng::RandomSource;
use proptest::prelude::*;

#[test]
fn transition_is_continuous_at_branch_points() {
    for &k in &[0.5, 1.0, 1.7, 2.0] {
        assert!(gradual_transition(1e-12, k).abs() < 1e-9);
        assert!((gradual_transition(k - 1e-12, k) - 1.0).abs() < 1e-9);
        assert!((gradual_transition(k / 2.0, k) - 0.5).abs() < 1e-12);
        assert_eq!(gradual_transition(k, k), 1.0);
        assert_eq!(gradual_transition(-0.3, k), 0.0);
    }
}

#[test]
fn sampled_parameters_stay_in_range() {
    let ranges = DistortionParamRanges::default();
    let mut rng = RandomSource::new(8);
    for _ in 0..10_000 {
        let p = sample_distortion(&ranges, &mut rng, (200, 160));
        let s = 100.0;
        assert!((0.5..=2.0).contains(&p.k));
        assert!((0.0..=5.0).contains(&p.theta_deg));
        assert!(p.displacement.iter().all(|e| (-15.0..=15.0).contains(e)));
        assert!((0.2 * s..=0.6 * s).contains(&p.semi_x));
        assert!((p.semi_x..=2.0 * p.semi_x).contains(&p.semi_y));
        assert_eq!(p.rotation_center, p.ellipse_center);
    }
}

proptest! {
    #[test]
    fn transition_is_monotone_and_bounded(a in -5.0f64..5.0, b in -5.0f64..5.0, k in 0.1f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (gl, gh) = (gradual_transition(lo, k), gradual_transition(hi, k));
        prop_assert!(gl <= gh);
        prop_assert!((0.0..=1.0).contains(&gl) && (0.0..=1.0).contains(&gh));
    }

    #[test]
    fn displacement_never_exceeds_rigid_motion(x in 0.0f64..100.0, y in 0.0f64..100.0, seed in any::<u64>()) {
        let p = sample_distortion(&DistortionParamRanges::default(), &mut RandomSource::new(seed), (100, 100));
        let q = distort_point([x, y], &p);
        let d = displacement([x, y], &p);
        let moved = ((q[0] - x).powi(2) + (q[1] - y).powi(2)).sqrt();
        prop_assert!(moved <= (d[0] * d[0] + d[1] * d[1]).sqrt() + 1e-12);
    }

    #[test]
    fn inverse_map_undoes_forward_map(x in 20.0f64..80.0, y in 20.0f64..80.0, seed in any::<u64>()) {
        let ranges = DistortionParamRanges { k: (1.5, 2.0), theta_deg: (0.0, 2.0), displacement: (-3.0, 3.0), ..Default::default() };
        let p = sample_distortion(&ranges, &mut RandomSource::new(seed), (100, 100));
        let q = distort_point([x, y], &p);
        let back = undistort_point(q, &p);
        prop_assert!((back[0] - x).abs() < 0.05 && (back[1] - y).abs() < 0.05);
    }

    #[test]
    fn identity_render_is_bit_exact(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let img = GrayImage::from_fn(24, 20, |_, _| rng.uniform(0.0, 1.0));
        let out = distort_image(&img, &DistortionParams::identity(24, 20));
        prop_assert_eq!(out.data(), img.data());
    }
}
