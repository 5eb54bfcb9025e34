//! Closed-form examples for every module, runnable from a release binary.

use std::f64::consts::{LN_2, PI};

use fingergan_core::distortion::*;
use fingergan_core::evaluation::*;
use fingergan_core::image::{GrayImage, OrientationField, SkeletonMap};
use fingergan_core::minutia::{Minutia, MinutiaKind, MinutiaSet};
use fingergan_core::orientation::{evaluate_fomfe, fit_fomfe, orientation_difference, FomfeConfig};
use fingergan_core::rng::RandomSource;
use fingergan_core::skeleton::{crossing_number, minutia_map, zhang_suen};
use fingergan_core::synthesis::{add_speckle, fuse_background, FusionParams, SpeckleParams};
use fingergan_core::tvdecomp::{decompose, TvConfig};
use fingergan_core::weightmap::{build_weight_map, WeightMapParams};
use fingergan_nn::inference::{enhance_full_image, window_origins, InferenceConfig, PatchModel};
use fingergan_nn::loss::{adversarial_losses, reconstruction_loss, total_generator_loss, LossConfig};
use fingergan_nn::network::{count_parameters, GeneratorSpec};
use fingergan_nn::{Generator, Mode, NetworkSpec, Tensor};

use crate::config::Settings;

type Check = fn() -> Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("got {got}, want {want} (tol {tol})"))
}

fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = RandomSource::new(seed);
    GrayImage::from_fn(w, h, |_, _| rng.uniform(0.0, 1.0))
}

fn weight_floor() -> Result<(), String> {
    let p = WeightMapParams::default();
    ensure(p.sigma == 8.0 && p.r == 17, || "defaults are not sigma 8, r 17".into())?;
    let map = minutia_map(&MinutiaSet::empty(Some((40, 40))), (40, 40)).map_err(|e| e.to_string())?;
    let w = build_weight_map(&map, &p).map_err(|e| e.to_string())?;
    ensure(w.data().iter().all(|&v| v == p.floor()), || "empty map is not the floor everywhere".into())
}

fn weight_single_minutia() -> Result<(), String> {
    let p = WeightMapParams::default();
    let set = MinutiaSet::new(vec![Minutia::new(30.0, 30.0, 0.0, MinutiaKind::Ending)], Some((60, 60))).unwrap();
    let w = build_weight_map(&minutia_map(&set, (60, 60)).unwrap(), &p).map_err(|e| e.to_string())?;
    let want = 1.0 / (2.0 * PI * 64.0) / p.kernel_sum();
    close(w.get(30, 30), want, 1e-15)
}

fn transition_midpoint() -> Result<(), String> {
    for k in [0.5, 1.0, 2.0] {
        close(gradual_transition(k / 2.0, k), 0.5, 1e-12)?;
        close(gradual_transition(1e-12, k), 0.0, 1e-9)?;
        close(gradual_transition(k, k), 1.0, 0.0)?;
    }
    Ok(())
}

fn distortion_identity() -> Result<(), String> {
    let img = noise(30, 22, 1);
    let out = distort_image(&img, &DistortionParams::identity(30, 22));
    ensure(out.data() == img.data(), || "identity distortion changed pixels".into())
}

fn ellipse_boundary() -> Result<(), String> {
    let p = DistortionParams::identity(100, 100);
    let [cx, cy] = p.ellipse_center;
    // the axis vertices lie exactly on the boundary
    for q in [[cx + p.semi_x, cy], [cx - p.semi_x, cy], [cx, cy + p.semi_y], [cx, cy - p.semi_y]] {
        close(ellipse_distance(q, &p), 0.0, 1e-9)?;
    }
    Ok(())
}

fn fusion_arithmetic() -> Result<(), String> {
    let b = GrayImage::filled(4, 4, 0.2);
    let d = GrayImage::filled(4, 4, 0.8);
    let c = fuse_background(&b, &FusionParams::new(0.5, d.clone()).unwrap()).map_err(|e| e.to_string())?;
    close(c.get(1, 2), 0.5, 1e-15)?;
    let c0 = fuse_background(&b, &FusionParams::new(0.0, d.clone()).unwrap()).unwrap();
    let c1 = fuse_background(&b, &FusionParams::new(1.0, d.clone()).unwrap()).unwrap();
    ensure(c0.data() == b.data() && c1.data() == d.data(), || "lambda 0/1 are not exact".into())
}

fn speckle_limits() -> Result<(), String> {
    let img = noise(16, 16, 2);
    let out = add_speckle(&img, &SpeckleParams::new(0.0).unwrap(), &mut RandomSource::new(3));
    ensure(out.data() == img.data(), || "zero-variance speckle changed pixels".into())?;
    let black = GrayImage::filled(8, 8, 0.0);
    let out = add_speckle(&black, &SpeckleParams::new(0.019).unwrap(), &mut RandomSource::new(4));
    ensure(out.data().iter().all(|&v| v == 0.0), || "speckle moved zero pixels".into())
}

fn tv_reconstruction() -> Result<(), String> {
    let img = noise(32, 24, 5);
    let d = decompose(&img, &TvConfig::default()).map_err(|e| e.to_string())?;
    for y in 0..24 {
        for x in 0..32 {
            ensure(d.cartoon.get(x, y) + d.texture.get(x, y) == img.get(x, y), || format!("pixel ({x},{y})"))?;
        }
    }
    ensure(d.objective.windows(2).all(|w| w[1] <= w[0] + 1e-10), || "objective increased".into())
}

fn fomfe_recovery() -> Result<(), String> {
    let (p, q, phi0) = (2.0, -1.0, 0.4);
    let (w, h) = (128, 112);
    let field = OrientationField::from_fn(w, h, |x, y| {
        0.5 * (phi0 + PI * (p * x as f64 / w as f64 + q * y as f64 / h as f64))
    });
    let cfg = FomfeConfig {
        sample_step: 4,
        ..FomfeConfig::default()
    };
    let fit = fit_fomfe(&field, &cfg).map_err(|e| e.to_string())?;
    let dense = evaluate_fomfe(&fit.model, (w, h));
    let worst = dense
        .angles()
        .iter()
        .zip(field.angles())
        .map(|(a, b)| orientation_difference(*a, *b))
        .fold(0.0, f64::max);
    ensure(worst <= 1e-6, || format!("max angular error {worst}"))
}

fn thin_line_is_fixed() -> Result<(), String> {
    let line = SkeletonMap::from_fn(20, 9, |x, y| y == 4 && (3..17).contains(&x));
    let thin = zhang_suen(line.clone());
    ensure(thin == line, || "one-pixel line changed under thinning".into())?;
    ensure(crossing_number(&line, 3, 4) == 1 && crossing_number(&line, 8, 4) == 2, || "crossing numbers".into())
}

fn first_conv_params() -> Result<(), String> {
    let (g, d) = count_parameters(&NetworkSpec::default());
    ensure(3 * 3 * 64 + 64 == 640, || "first conv".into())?;
    ensure(g == 14_986_627 && d == 2_038_659, || format!("counts {g} / {d}"))
}

fn generator_shapes() -> Result<(), String> {
    let mut g = Generator::new(
        &GeneratorSpec {
            base_channels: 2,
            ..GeneratorSpec::default()
        },
        &mut RandomSource::new(6),
    );
    let y = g.forward(&Tensor::filled([1, 1, 48, 48], 0.3), Mode::Eval).map_err(|e| e.to_string())?;
    ensure(y.shape() == [1, 1, 48, 48], || format!("{:?}", y.shape()))
}

fn loss_examples() -> Result<(), String> {
    close(adversarial_losses(&[0.5], &[0.5]).0, 2.0 * LN_2, 1e-12)?;
    close(total_generator_loss(1.0, 100.0, &LossConfig::default()), 1.1, 1e-12)?;
    let t = Tensor::filled([1, 1, 4, 4], 1.0);
    let o = Tensor::filled([1, 1, 4, 4], 0.5);
    let w = Tensor::filled([1, 1, 4, 4], 1.0);
    close(reconstruction_loss(&o, &t, &w).unwrap().0, 8.0, 1e-12)?;
    close(reconstruction_loss(&t, &t, &w).unwrap().0, 0.0, 0.0)
}

struct Constant;

impl PatchModel for Constant {
    fn predict(&mut self, p: &Tensor) -> fingergan_nn::Result<Tensor> {
        Ok(Tensor::filled(p.shape(), 0.7))
    }
}

fn tiling_examples() -> Result<(), String> {
    ensure(window_origins(200, 192, 8) == (vec![0, 8], 200), || "200 px origins".into())?;
    let (out, t) = enhance_full_image(&noise(200, 200, 7), &mut Constant, &InferenceConfig::default()).map_err(|e| e.to_string())?;
    ensure(t.window_count() == 4, || format!("{} windows", t.window_count()))?;
    ensure(out.data().iter().all(|&v| v == 0.7), || "constant model output not constant".into())
}

fn set(points: &[(f64, f64)]) -> MinutiaSet {
    MinutiaSet::new(
        points.iter().map(|&(x, y)| Minutia::new(x, y, 1.0, MinutiaKind::Ending)).collect(),
        None,
    )
    .unwrap()
}

fn matching_examples() -> Result<(), String> {
    let tol = MatchTolerance::default();
    let g = set(&[(10.0, 10.0), (60.0, 40.0), (100.0, 90.0)]);
    let r = match_minutiae(&g, &g, &tol);
    ensure((r.recovered_genuine, r.introduced_fake) == (3, 0), || format!("identity {r:?}"))?;
    let r = match_minutiae(&set(&[(26.0, 10.0)]), &set(&[(10.0, 10.0)]), &tol);
    ensure((r.recovered_genuine, r.introduced_fake) == (0, 1), || format!("displaced {r:?}"))?;
    let r = match_minutiae(&set(&[(12.0, 10.0), (10.0, 13.0)]), &set(&[(10.0, 10.0)]), &tol);
    ensure((r.recovered_genuine, r.introduced_fake) == (1, 1), || format!("one-to-one {r:?}"))?;
    close(similarity_score(&g, &g, &MatcherConfig::default()), 1.0, 1e-12)
}

fn cmc_examples() -> Result<(), String> {
    let top = ScoreMatrix::new(2, 3, vec![0.9, 0.1, 0.2, 0.3, 0.8, 0.1], vec![0, 1]).unwrap();
    ensure(cmc_curve(&top)[0] == 1.0, || "strict top mate".into())?;
    let second = ScoreMatrix::new(2, 3, vec![0.5, 0.9, 0.1, 0.9, 0.5, 0.1], vec![0, 1]).unwrap();
    let c = cmc_curve(&second);
    ensure(c[0] == 0.0 && c[1] == 1.0, || format!("second-ranked mate {c:?}"))
}

fn config_round_trip() -> Result<(), String> {
    let mut s = Settings::default();
    s.set("train.no_weight", "true").map_err(|e| e.to_string())?;
    let mut t = Settings::default();
    t.apply_text(&s.dump(), "dump").map_err(|e| e.to_string())?;
    ensure(s == t, || "dumped config does not reload identically".into())
}

pub const CHECKS: &[(&str, Check)] = &[
    ("weightmap: empty map is the w0 floor", weight_floor),
    ("weightmap: single minutia peak", weight_single_minutia),
    ("distortion: transition midpoint and ends", transition_midpoint),
    ("distortion: identity render is bit-exact", distortion_identity),
    ("distortion: ellipse boundary has h = 0", ellipse_boundary),
    ("synthesis: fusion arithmetic", fusion_arithmetic),
    ("synthesis: speckle limits", speckle_limits),
    ("tvdecomp: cartoon + texture = input", tv_reconstruction),
    ("orientation: in-span field recovered", fomfe_recovery),
    ("skeleton: thin line is a thinning fixed point", thin_line_is_fixed),
    ("network: parameter counts", first_conv_params),
    ("network: generator keeps spatial size", generator_shapes),
    ("training: loss examples", loss_examples),
    ("inference: 200 px tiling with constant model", tiling_examples),
    ("evaluation: matching examples", matching_examples),
    ("evaluation: CMC examples", cmc_examples),
    ("cli: config dump round trip", config_round_trip),
];

/// Runs every check, printing one line each; returns the failure count.
pub fn run_all(out: &mut dyn std::io::Write) -> usize {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => {
                let _ = writeln!(out, "ok    {name}");
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(out, "FAIL  {name}: {e}");
            }
        }
    }
    let _ = writeln!(out, "{} checks, {failed} failed", CHECKS.len());
    failed
}
