use fingergan_core::image::GrayImage;
use fingergan_core::rng::RandomSource;
use fingergan_core::synthesis::generate_print;
use fingergan_core::tvdecomp::*;

#[test]
fn objective_never_increases_on_random_images() {
    let cfg = TvConfig { tolerance: 1e-12, ..TvConfig::default() };
    for seed in 0..5 {
        let mut rng = RandomSource::new(seed);
        let img = GrayImage::from_fn(64, 64, |_, _| rng.uniform(0.0, 1.0));
        let d = decompose(&img, &cfg).unwrap();
        for w in d.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }
}

#[test]
fn cartoon_plus_texture_reconstructs_input() {
    let mut rng = RandomSource::new(3);
    let img = GrayImage::from_fn(48, 40, |_, _| rng.uniform(0.0, 1.0));
    let d = decompose(&img, &TvConfig::default()).unwrap();
    for y in 0..40 {
        for x in 0..48 {
            assert_eq!(d.cartoon.get(x, y) + d.texture.get(x, y), img.get(x, y));
        }
    }
}

#[test]
fn fingerprint_texture_is_nearly_zero_mean() {
    let mut rng = RandomSource::new(10);
    for _ in 0..3 {
        let img = generate_print((128, 128), &mut rng);
        let d = decompose(&img, &TvConfig::default()).unwrap();
        assert!(d.texture.mean().abs() <= 0.05);
    }
}

#[test]
fn texture_encoding_round_trips() {
    let enc = TextureEncoding::default();
    let t = fingergan_core::image::Grid::from_fn(8, 8, |x, y| (x as f64 - y as f64) * 0.05);
    let back = enc.decode(&enc.encode(&t));
    for (a, b) in t.data().iter().zip(back.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}
