use fingergan_core::minutia::{Minutia, MinutiaKind, MinutiaSet};
use fingergan_core::rng::RandomSource;
use fingergan_core::skeleton::{minutia_map, MinutiaMap};
use fingergan_core::weightmap::{build_weight_map, normalized_correlation, WeightMapParams};
use proptest::prelude::*;

/// Direct double loop over the window with zero padding, then the floor rule.
fn naive(map: &MinutiaMap, p: &WeightMapParams) -> Vec<f64> {
    let (w, h) = map.dims();
    let r = p.r as isize;
    let mut ksum = 0.0;
    for v in -r..=r {
        for u in -r..=r {
            ksum += p.kernel_value(u, v);
        }
    }
    let floor = p.kernel_value(r, r) / ksum;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for v in -r..=r {
                for u in -r..=r {
                    let (xs, ys) = (x + u, y + v);
                    if xs >= 0 && ys >= 0 && xs < w as isize && ys < h as isize && map.get(xs as usize, ys as usize) {
                        acc += p.kernel_value(u, v);
                    }
                }
            }
            let wp = acc / ksum;
            out[y as usize * w + x as usize] = if wp != 0.0 { wp } else { floor };
        }
    }
    out
}

fn random_set(rng: &mut RandomSource, n: usize, dims: (usize, usize)) -> MinutiaSet {
    let mut seen = std::collections::HashSet::new();
    let mut items = Vec::new();
    while items.len() < n {
        let (x, y) = (rng.index(dims.0), rng.index(dims.1));
        if seen.insert((x, y)) {
            items.push(Minutia::new(x as f64, y as f64, 0.0, MinutiaKind::Ending));
        }
    }
    MinutiaSet::new(items, Some(dims)).unwrap()
}

#[test]
fn fast_matches_naive_on_random_maps() {
    let p = WeightMapParams::default();
    let mut rng = RandomSource::new(42);
    for _ in 0..5 {
        let n = rng.index(12);
        let map = minutia_map(&random_set(&mut rng, n, (64, 64)), (64, 64)).unwrap();
        let fast = build_weight_map(&map, &p).unwrap();
        for (a, b) in fast.data().iter().zip(naive(&map, &p)) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn single_minutia_profile() {
    let p = WeightMapParams::default();
    let set = MinutiaSet::new(vec![Minutia::new(40.0, 40.0, 0.0, MinutiaKind::Ending)], None).unwrap();
    let w = build_weight_map(&minutia_map(&set, (80, 80)).unwrap(), &p).unwrap();
    let peak = p.kernel_value(0, 0) / p.kernel_sum();
    assert!((w.get(40, 40) - peak).abs() < 1e-15);
    for y in 0..80 {
        for x in 0..80 {
            let cheb = (x as isize - 40).abs().max((y as isize - 40).abs());
            if cheb > 17 {
                assert_eq!(w.get(x, y), p.floor());
            } else {
                assert!(w.get(x, y) <= peak + 1e-18);
            }
        }
    }
    assert!(w.get(41, 40) < w.get(40, 40) && w.get(45, 40) < w.get(41, 40));
    assert!(p.floor() < peak);
}

#[test]
fn overlapping_windows_superpose() {
    let p = WeightMapParams::default();
    let a = MinutiaSet::new(vec![Minutia::new(20.0, 30.0, 0.0, MinutiaKind::Ending)], None).unwrap();
    let b = MinutiaSet::new(vec![Minutia::new(30.0, 34.0, 0.0, MinutiaKind::Bifurcation)], None).unwrap();
    let both = MinutiaSet::new(a.iter().chain(b.iter()).copied().collect(), None).unwrap();
    let wa = normalized_correlation(&minutia_map(&a, (64, 64)).unwrap(), &p).unwrap();
    let wb = normalized_correlation(&minutia_map(&b, (64, 64)).unwrap(), &p).unwrap();
    let wab = normalized_correlation(&minutia_map(&both, (64, 64)).unwrap(), &p).unwrap();
    for i in 0..64 * 64 {
        assert!((wab.data()[i] - wa.data()[i] - wb.data()[i]).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_a_minutia_never_decreases(seed in any::<u64>(), n in 0usize..8) {
        let p = WeightMapParams { sigma: 4.0, r: 6 };
        let mut rng = RandomSource::new(seed);
        let set = random_set(&mut rng, n + 1, (32, 32));
        let fewer = MinutiaSet::new(set.items()[..n].to_vec(), None).unwrap();
        let w1 = normalized_correlation(&minutia_map(&fewer, (32, 32)).unwrap(), &p).unwrap();
        let w2 = normalized_correlation(&minutia_map(&set, (32, 32)).unwrap(), &p).unwrap();
        for (a, b) in w1.data().iter().zip(w2.data()) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn weight_map_is_positive_with_floor_minimum(seed in any::<u64>(), n in 0usize..6) {
        let p = WeightMapParams { sigma: 3.0, r: 5 };
        let mut rng = RandomSource::new(seed);
        let map = minutia_map(&random_set(&mut rng, n, (40, 40)), (40, 40)).unwrap();
        let w = build_weight_map(&map, &p).unwrap();
        let min = w.data().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min > 0.0);
        prop_assert!(min >= p.floor() - 1e-18 || w.data().iter().all(|&v| v != p.floor()));
    }
}
