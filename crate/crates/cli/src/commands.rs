use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fingergan_core::evaluation::{cmc_curve, cmc_to_csv, match_minutiae, score_matrix, RecoveryReport};
use fingergan_core::image::{GrayImage, SkeletonMap};
use fingergan_core::io::{load_gray_image, save_gray_image, save_skeleton};
use fingergan_core::minutia::{read_minutiae, write_minutiae, MinutiaSet};
use fingergan_core::rng::RandomSource;
use fingergan_core::skeleton::{extract_minutiae, zhang_suen};
use fingergan_core::synthesis::{
    build_training_set, generate_background, generate_print, texture_of, write_dataset, CoherenceFilter,
    QualityFilter,
};
use fingergan_nn::checkpoint::{restore, Checkpoint};
use fingergan_nn::data::Dataset;
use fingergan_nn::inference::enhance_full_image;
use fingergan_nn::train::{train_with_progress, Trainer, LATEST_CHECKPOINT};
use fingergan_nn::Generator;

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::plot;

pub const CONFIG_FILE: &str = "config.txt";
/// Procedural backgrounds generated when no background directory is given.
const PROCEDURAL_BACKGROUNDS: usize = 8;
/// Candidate procedural prints drawn per requested print before giving up.
const MAX_DRAWS_PER_PRINT: usize = 20;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Key of the reference for `name`: the same stem if present, otherwise the
/// part before the last `_` (latent `0003_07` belongs to print `0003`).
pub fn mate_of<'a, T>(name: &str, refs: &'a BTreeMap<String, T>) -> Option<&'a str> {
    if let Some((k, _)) = refs.get_key_value(name) {
        return Some(k);
    }
    let (prefix, _) = name.rsplit_once('_')?;
    refs.get_key_value(prefix).map(|(k, _)| k.as_str())
}

fn read_sets(dir: &Path) -> Result<BTreeMap<String, MinutiaSet>> {
    let mut sets = BTreeMap::new();
    for path in files_with_ext(dir, "min")? {
        sets.insert(stem(&path), read_minutiae(&path)?);
    }
    if sets.is_empty() {
        return Err(CliError::Usage(format!("{}: no .min files", dir.display())));
    }
    Ok(sets)
}

fn load_images(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    let files = files_with_ext(dir, "png")?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no .png files", dir.display())));
    }
    files.iter().map(|p| Ok((stem(p), load_gray_image(p)?))).collect()
}

pub fn synth_data(s: &Settings, out: &Path) -> Result<()> {
    let cfg = s.synth_config()?;
    let root = RandomSource::new(s.seed());
    let filter = CoherenceFilter {
        threshold: s.real("synth.quality_threshold"),
        ..CoherenceFilter::default()
    };
    let wanted = s.size("synth.prints");
    let rolled: Vec<GrayImage> = match s.path("synth.rolled_dir") {
        Some(dir) => {
            let all = load_images(&dir)?;
            let total = all.len();
            let kept: Vec<GrayImage> = all
                .into_iter()
                .map(|(_, img)| img)
                .filter(|img| filter.accept(img))
                .collect();
            eprintln!("quality filter kept {} of {total} rolled prints", kept.len());
            kept
        }
        None => {
            let size = s.size("synth.size");
            if size < 16 {
                return Err(CliError::Usage(format!("synth.size {size} is too small")));
            }
            let mut rng = root.derive(0);
            let mut kept = Vec::with_capacity(wanted);
            let mut draws = 0;
            while kept.len() < wanted && draws < wanted * MAX_DRAWS_PER_PRINT {
                let p = generate_print((size, size), &mut rng);
                draws += 1;
                if filter.accept(&p) {
                    kept.push(p);
                }
            }
            if draws > kept.len() {
                eprintln!("quality filter rejected {} procedural prints", draws - kept.len());
            }
            kept
        }
    };
    if rolled.is_empty() {
        return Err(CliError::Runtime("no rolled print passed the quality filter".into()));
    }
    let backgrounds: Vec<GrayImage> = match s.path("synth.background_dir") {
        Some(dir) => load_images(&dir)?.into_iter().map(|(_, img)| img).collect(),
        None => {
            let w = rolled.iter().map(|r| r.width()).max().unwrap_or(1);
            let h = rolled.iter().map(|r| r.height()).max().unwrap_or(1);
            let mut rng = root.derive(1);
            (0..PROCEDURAL_BACKGROUNDS).map(|_| generate_background((w, h), &mut rng)).collect()
        }
    };
    let set_seed = root.derive(2).next_u64();
    let samples = build_training_set(&rolled, &backgrounds, set_seed, &cfg)?;
    create_dir(out)?;
    write_dataset(out, &samples, &cfg)?;
    write_file(&out.join(CONFIG_FILE), &s.dump())?;
    let latents: usize = samples.iter().map(|p| p.latents.len()).sum();
    eprintln!("wrote {latents} latents from {} prints to {}", samples.len(), out.display());
    Ok(())
}

pub fn train(s: &Settings, data: &Path, run: &Path, resume: bool) -> Result<()> {
    let spec = s.network_spec()?;
    let cfg = s.train_config()?;
    let ds = Dataset::load(data)?;
    if let Some(small) = ds.samples().iter().find(|x| x.width < spec.patch_size || x.height < spec.patch_size) {
        return Err(CliError::Usage(format!(
            "training images are {}x{}, smaller than the {} px patch",
            small.width, small.height, spec.patch_size
        )));
    }
    let latest = run.join(LATEST_CHECKPOINT);
    let mut trainer = if resume {
        let ck = Checkpoint::load_for(&latest, &spec)?;
        eprintln!("resuming from iteration {}", ck.iteration);
        Trainer::from_checkpoint(&ck, cfg)?
    } else {
        if latest.exists() {
            return Err(CliError::Usage(format!(
                "{} already holds a run; pass --resume or choose another directory",
                run.display()
            )));
        }
        Trainer::new(spec, cfg)?
    };
    create_dir(run)?;
    write_file(&run.join(CONFIG_FILE), &s.dump())?;
    let every = (cfg.max_iterations / 10).max(1);
    let outcome = train_with_progress(&mut trainer, &ds, run, &mut |m| {
        if m.iteration % every == 0 || m.iteration == 1 {
            eprintln!(
                "iter {:>6}  L_r {:.4}  d_loss {:.4}  g_adv {:.4}",
                m.iteration, m.l_r, m.d_loss, m.g_adv
            );
        }
    })?;
    eprintln!(
        "trained to iteration {} ({}), {} checkpoints in {}",
        outcome.final_iteration,
        cfg.ablation.label(),
        outcome.checkpoints.len(),
        run.display()
    );
    Ok(())
}

pub fn enhance(s: &Settings, checkpoint: &Path, input: &Path, out: &Path, binarize: bool) -> Result<()> {
    let icfg = s.inference_config()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut g = Generator::new(&ck.spec.generator, &mut RandomSource::new(0));
    restore(&mut g, &ck.g_params, &ck.g_buffers)?;
    let images = load_images(input)?;
    let (tv, enc) = (s.tv_config(), s.texture_encoding());
    let mcfg = s.minutia_config();
    create_dir(out)?;
    if binarize {
        create_dir(&out.join("skeletons"))?;
        create_dir(&out.join("minutiae"))?;
    }
    let mut manifest = String::from("input\toutput\twindows\tmin_coverage\tmax_coverage\tminutiae\n");
    for (name, img) in &images {
        let x = if s.flag("infer.texture_input") {
            img.clone()
        } else {
            texture_of(img, &tv, &enc)?
        };
        let (y, tiling) = enhance_full_image(&x, &mut g, &icfg)?;
        save_gray_image(&y, out.join(format!("{name}.png")))?;
        let count = if binarize {
            let (w, h) = y.dims();
            let skel = zhang_suen(SkeletonMap::from_fn(w, h, |x, yy| y.get(x, yy) >= 0.5));
            save_skeleton(&skel, out.join("skeletons").join(format!("{name}.png")))?;
            let mins = extract_minutiae(&skel, &mcfg);
            write_minutiae(&mins, out.join("minutiae").join(format!("{name}.min")))?;
            mins.len().to_string()
        } else {
            "-".to_string()
        };
        let _ = writeln!(
            manifest,
            "{}\t{name}.png\t{}\t{}\t{}\t{count}",
            input.join(format!("{name}.png")).display(),
            tiling.window_count(),
            tiling.coverage.iter().min().unwrap_or(&0),
            tiling.coverage.iter().max().unwrap_or(&0),
        );
    }
    write_file(&out.join("manifest.tsv"), &manifest)?;
    write_file(&out.join(CONFIG_FILE), &s.dump())?;
    eprintln!("enhanced {} images into {}", images.len(), out.display());
    Ok(())
}

pub fn eval_recover(s: &Settings, extracted: &Path, genuine: &Path, out: Option<&Path>) -> Result<()> {
    let tol = s.matcher_config()?.tolerance;
    let genuine = read_sets(genuine)?;
    let mut report = RecoveryReport::default();
    for (name, set) in read_sets(extracted)? {
        let mate = mate_of(&name, &genuine)
            .ok_or_else(|| CliError::Usage(format!("no genuine minutiae for {name}")))?;
        report.push(name, match_minutiae(&set, &genuine[mate], &tol));
    }
    let tsv = report.to_tsv();
    match out {
        Some(path) => write_file(path, &tsv)?,
        None => print!("{tsv}"),
    }
    eprintln!(
        "recovered genuine {}, introduced fake {}",
        report.recovered_genuine(),
        report.introduced_fake()
    );
    Ok(())
}

pub fn eval_cmc(s: &Settings, probes: &Path, gallery: &Path, csv: &Path, png: Option<&Path>) -> Result<()> {
    let cfg = s.matcher_config()?;
    let gallery = read_sets(gallery)?;
    let names: Vec<&String> = gallery.keys().collect();
    let mut probe_sets = Vec::new();
    let mut mates = Vec::new();
    for (name, set) in read_sets(probes)? {
        let mate = mate_of(&name, &gallery)
            .ok_or_else(|| CliError::Usage(format!("no gallery entry for probe {name}")))?;
        mates.push(names.iter().position(|n| n.as_str() == mate).expect("mate is a gallery key"));
        probe_sets.push(set);
    }
    let gallery_sets: Vec<MinutiaSet> = gallery.values().cloned().collect();
    let m = score_matrix(&probe_sets, &gallery_sets, mates, &cfg)?;
    let curve = cmc_curve(&m);
    write_file(csv, &cmc_to_csv(&curve))?;
    let png = png.map(Path::to_path_buf).unwrap_or_else(|| csv.with_extension("png"));
    let pts: Vec<(f64, f64)> = curve.iter().enumerate().map(|(k, &a)| ((k + 1) as f64, a)).collect();
    plot::plot_cmc(&pts, &png)?;
    eprintln!("rank-1 accuracy {:.4} over {} probes", curve[0], m.probes());
    Ok(())
}

pub fn plot(metrics: Option<&Path>, cmc: Option<&Path>, out: &Path) -> Result<()> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())));
    match (metrics, cmc) {
        (Some(m), None) => plot::plot_metrics(&read(m)?, out),
        (None, Some(c)) => plot::plot_cmc(&plot::read_cmc(&read(c)?)?, out),
        _ => Err(CliError::Usage("plot needs exactly one of --metrics or --cmc".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mates_by_stem_or_prefix() {
        let refs: BTreeMap<String, ()> = [("0001".to_string(), ()), ("0002_x".to_string(), ())].into();
        assert_eq!(mate_of("0001", &refs), Some("0001"));
        assert_eq!(mate_of("0001_04", &refs), Some("0001"));
        assert_eq!(mate_of("0002_x", &refs), Some("0002_x"));
        assert_eq!(mate_of("0003_01", &refs), None);
        assert_eq!(mate_of("0003", &refs), None);
    }
}
