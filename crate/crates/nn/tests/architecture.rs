use fingergan_core::rng::RandomSource;
use fingergan_nn::network::*;
use fingergan_nn::{Mode, Tensor};

/// (kernel, in, out) of every convolution, copied row by row from the
/// architecture table; each is followed by a batch norm.
const GENERATOR_ROWS: [(usize, usize, usize); 18] = [
    (3, 1, 64),
    (3, 64, 64),
    (2, 64, 128),
    (3, 128, 128),
    (2, 128, 256),
    (3, 256, 256),
    (2, 256, 512),
    (3, 512, 512),
    (2, 512, 1024),
    (2, 1024, 512),
    (3, 1024, 512),
    (2, 512, 256),
    (3, 512, 256),
    (2, 256, 128),
    (3, 256, 128),
    (2, 128, 64),
    (3, 128, 64),
    (3, 64, 1),
];

const DISCRIMINATOR_ROWS: [(usize, usize, usize); 7] = [
    (4, 2, 64),
    (4, 64, 64),
    (4, 64, 128),
    (4, 128, 128),
    (4, 128, 256),
    (4, 256, 256),
    (3, 256, 1),
];

fn hand_sum(rows: &[(usize, usize, usize)]) -> usize {
    rows.iter().map(|&(k, i, o)| k * k * i * o + o + 2 * o).sum()
}

fn random_input(shape: [usize; 4], rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
}

#[test]
fn first_conv_has_640_parameters() {
    let (k, i, o) = GENERATOR_ROWS[0];
    assert_eq!(k * k * i * o + o, 640);
}

#[test]
fn parameter_counts_match_hand_sum() {
    let spec = NetworkSpec::default();
    let (g, d) = count_parameters(&spec);
    assert_eq!(g, hand_sum(&GENERATOR_ROWS));
    assert_eq!(g, 14_986_627);
    assert_eq!(d, hand_sum(&DISCRIMINATOR_ROWS));
    assert_eq!(d, 2_038_659);
}

#[test]
fn doubling_channels_roughly_quadruples() {
    let a = count_generator_parameters(&GeneratorSpec { base_channels: 16, ..Default::default() });
    let b = count_generator_parameters(&GeneratorSpec { base_channels: 32, ..Default::default() });
    let r = b as f64 / a as f64;
    assert!((3.9..4.0).contains(&r), "{r}");
}

#[test]
fn full_size_generator_shape_trace() {
    let spec = NetworkSpec::default();
    let mut rng = RandomSource::new(1);
    let mut g = Generator::new(&spec.generator, &mut rng);
    let x = random_input([1, 1, 192, 192], &mut rng);
    let y = g.forward(&x, Mode::Eval).unwrap();
    assert_eq!(y.shape(), [1, 1, 192, 192]);
    assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    let want = [
        ("C1", 64, 192),
        ("C2", 128, 96),
        ("C3", 256, 48),
        ("C4", 512, 24),
        ("C5", 1024, 12),
        ("DC1", 512, 24),
        ("DC2", 256, 48),
        ("DC3", 128, 96),
        ("DC4", 64, 192),
        ("DC5", 1, 192),
    ];
    let trace = g.trace();
    assert_eq!(trace.len(), want.len());
    for ((name, shape), (wn, wc, ws)) in trace.iter().zip(want) {
        assert_eq!(name, wn);
        assert_eq!(*shape, [1, wc, ws, ws], "{name}");
    }
}

#[test]
fn full_size_discriminator_scores() {
    let spec = NetworkSpec::default();
    let mut rng = RandomSource::new(2);
    let mut d = Discriminator::new(&spec.discriminator, 192, &mut rng);
    let x = random_input([2, 2, 192, 192], &mut rng);
    let s = d.forward(&x, Mode::Train).unwrap();
    assert_eq!(s.shape(), [2, 1, 1, 1]);
    assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(d.forward(&random_input([1, 1, 192, 192], &mut rng), Mode::Eval).is_err());
}

#[test]
fn generator_rejects_bad_sizes() {
    let mut rng = RandomSource::new(3);
    let mut g = Generator::new(&GeneratorSpec { base_channels: 2, ..Default::default() }, &mut rng);
    assert!(g.forward(&Tensor::zeros([1, 1, 40, 40]), Mode::Eval).is_err());
    assert!(g.forward(&Tensor::zeros([1, 2, 32, 32]), Mode::Eval).is_err());
    // any multiple of 16 round-trips
    for s in [16, 48, 80] {
        let y = g.forward(&random_input([1, 1, s, s], &mut rng), Mode::Eval).unwrap();
        assert_eq!(y.shape(), [1, 1, s, s]);
    }
}

#[test]
fn every_skip_pathway_matters() {
    let mut rng = RandomSource::new(4);
    let mut g = Generator::new(&GeneratorSpec { base_channels: 4, ..Default::default() }, &mut rng);
    // batch statistics keep activations at unit scale through the depth
    let x = random_input([2, 1, 32, 32], &mut rng);
    let base = g.forward(&x, Mode::TrainFrozenStats).unwrap();
    for k in 0..4 {
        g.skips_enabled = [true; 4];
        g.skips_enabled[k] = false;
        let y = g.forward(&x, Mode::TrainFrozenStats).unwrap();
        let diff: f64 = y.data().iter().zip(base.data()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-3, "skip C{} has no effect", k + 1);
    }
}

#[test]
fn discriminator_channels_are_not_symmetric() {
    let mut rng = RandomSource::new(5);
    let spec = NetworkSpec::toy(64, 4);
    let mut d = Discriminator::new(&spec.discriminator, 64, &mut rng);
    let a = random_input([2, 1, 64, 64], &mut rng);
    let b = random_input([2, 1, 64, 64], &mut rng);
    let ab = d.forward(&discriminator_input(&a, &b).unwrap(), Mode::Eval).unwrap();
    let ba = d.forward(&discriminator_input(&b, &a).unwrap(), Mode::Eval).unwrap();
    assert_ne!(ab.data(), ba.data());
}

#[test]
fn eval_mode_is_bit_deterministic() {
    let spec = NetworkSpec::toy(32, 4);
    let mut g1 = Generator::new(&spec.generator, &mut RandomSource::new(6));
    let mut g2 = Generator::new(&spec.generator, &mut RandomSource::new(6));
    let x = random_input([2, 1, 32, 32], &mut RandomSource::new(7));
    let y1 = g1.forward(&x, Mode::Eval).unwrap();
    let y2 = g2.forward(&x, Mode::Eval).unwrap();
    let y3 = g1.forward(&x, Mode::Eval).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&y1), bits(&y2));
    assert_eq!(bits(&y1), bits(&y3));
}
