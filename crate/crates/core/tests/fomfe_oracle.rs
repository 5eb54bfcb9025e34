use std::f64::consts::PI;

use fingergan_core::image::OrientationField;
use fingergan_core::orientation::*;
use fingergan_core::rng::RandomSource;
use proptest::prelude::*;

/// Field whose doubled-angle unit vector lies exactly in the order-4 span.
fn in_span_field(rng: &mut RandomSource, dims: (usize, usize)) -> OrientationField {
    let p = rng.index(9) as f64 - 4.0;
    let q = rng.index(9) as f64 - 4.0;
    let phi0 = rng.uniform(0.0, 2.0 * PI);
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    OrientationField::from_fn(dims.0, dims.1, |x, y| {
        0.5 * (phi0 + PI * (p * x as f64 / w + q * y as f64 / h))
    })
}

#[test]
fn in_span_fields_are_recovered() {
    let cfg = FomfeConfig { sample_step: 4, ..FomfeConfig::default() };
    let mut rng = RandomSource::new(17);
    for _ in 0..10 {
        let field = in_span_field(&mut rng, (128, 112));
        let fit = fit_fomfe(&field, &cfg).unwrap();
        let dense = evaluate_fomfe(&fit.model, field.dims());
        let worst = dense
            .angles()
            .iter()
            .zip(field.angles())
            .map(|(a, b)| orientation_difference(*a, *b))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst}");
    }
}

#[test]
fn noisy_fields_are_smoothed() {
    let cfg = FomfeConfig { sample_step: 8, ..FomfeConfig::default() };
    let mut rng = RandomSource::new(5);
    for _ in 0..10 {
        let clean = in_span_field(&mut rng, (128, 128));
        let noise = 5f64.to_radians();
        let noisy = OrientationField::from_fn(128, 128, |x, y| clean.angle(x, y) + rng.uniform(-noise, noise));
        let fit = fit_fomfe(&noisy, &cfg).unwrap();
        let smooth = evaluate_fomfe(&fit.model, (128, 128));
        let rms = |f: &OrientationField| {
            let mut s = 0.0;
            for (x, y, _) in &fit.samples {
                s += orientation_difference(f.angle(*x, *y), clean.angle(*x, *y)).powi(2);
            }
            (s / fit.samples.len() as f64).sqrt()
        };
        assert!(rms(&smooth) < rms(&noisy));
    }
}

#[test]
fn fit_is_least_squares_optimal() {
    let cfg = FomfeConfig { order: 2, sample_step: 8, ..FomfeConfig::default() };
    let field = OrientationField::from_fn(64, 64, |x, y| (0.03 * x as f64).sin() + 0.01 * y as f64);
    let fit = fit_fomfe(&field, &cfg).unwrap();
    for i in 0..fit.model.coeffs_cos.len() {
        for delta in [1e-3, -1e-3] {
            let mut m = fit.model.clone();
            m.coeffs_cos[i] += delta;
            assert!(fomfe_residual(&m, &fit.samples) >= fit.residual);
            let mut m = fit.model.clone();
            m.coeffs_sin[i] += delta;
            assert!(fomfe_residual(&m, &fit.samples) >= fit.residual);
        }
    }
}

#[test]
fn sample_residuals_match_fit() {
    let cfg = FomfeConfig { order: 3, sample_step: 8, ..FomfeConfig::default() };
    let field = OrientationField::from_fn(80, 64, |x, y| 0.02 * x as f64 - 0.015 * y as f64);
    let fit = fit_fomfe(&field, &cfg).unwrap();
    assert!((fomfe_residual(&fit.model, &fit.samples) - fit.residual).abs() < 1e-15);
    let dense = evaluate_fomfe(&fit.model, (80, 64));
    for &(x, y, _) in &fit.samples {
        assert!(orientation_difference(dense.angle(x, y), fit.model.angle_at(x as f64, y as f64)) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn evaluated_angles_lie_in_half_turn(seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let field = OrientationField::from_fn(48, 48, |_, _| rng.uniform(0.0, PI));
        let cfg = FomfeConfig { order: 2, sample_step: 4, ..FomfeConfig::default() };
        let dense = regularize(&field, &cfg).unwrap();
        prop_assert!(dense.angles().iter().all(|a| (0.0..PI).contains(a)));
        prop_assert_eq!(dense.valid_count(), 48 * 48);
    }
}

#[test]
fn too_few_samples_is_an_error() {
    let field = OrientationField::from_fn(32, 32, |_, _| 0.3);
    assert!(fit_fomfe(&field, &FomfeConfig::default()).is_err());
    assert!(regularize(&field, &FomfeConfig::default()).is_ok());
}
