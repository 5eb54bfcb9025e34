//! Layered `key=value` settings: built-in defaults, then a config file, then
//! `FINGERGAN_*` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fingergan_core::distortion::DistortionParamRanges;
use fingergan_core::evaluation::{MatchTolerance, MatcherConfig};
use fingergan_core::skeleton::MinutiaConfig;
use fingergan_core::synthesis::{NoiseRanges, SynthConfig};
use fingergan_core::tvdecomp::{TextureEncoding, TvConfig};
use fingergan_core::weightmap::WeightMapParams;
use fingergan_nn::inference::{Aggregation, InferenceConfig};
use fingergan_nn::loss::LossConfig;
use fingergan_nn::network::{DiscriminatorSpec, GeneratorSpec};
use fingergan_nn::train::{Ablation, TrainConfig};
use fingergan_nn::NetworkSpec;

use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "FINGERGAN_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Count,
    Flag,
    Text,
    Choice(&'static [&'static str]),
}

struct Key {
    name: &'static str,
    kind: Kind,
    default: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str) -> Key {
    Key { name, kind, default }
}

use Kind::*;

const KEYS: &[Key] = &[
    key("seed", Count, "0"),
    // synthesis
    key("synth.prints", Count, "10"),
    key("synth.size", Count, "256"),
    key("synth.latents_per_print", Count, "10"),
    key("synth.rolled_dir", Text, ""),
    key("synth.background_dir", Text, ""),
    key("synth.quality_threshold", Real, "0.5"),
    key("noise.k_min", Real, "0.5"),
    key("noise.k_max", Real, "2"),
    key("noise.theta_deg_min", Real, "0"),
    key("noise.theta_deg_max", Real, "5"),
    key("noise.displacement_min", Real, "-15"),
    key("noise.displacement_max", Real, "15"),
    key("noise.semi_x_frac_min", Real, "0.2"),
    key("noise.semi_x_frac_max", Real, "0.6"),
    key("noise.semi_y_ratio_min", Real, "1"),
    key("noise.semi_y_ratio_max", Real, "2"),
    key("noise.speckle_variance_min", Real, "0"),
    key("noise.speckle_variance_max", Real, "0.02"),
    key("noise.lambda_min", Real, "0.2"),
    key("noise.lambda_max", Real, "0.8"),
    key("tv.fidelity_weight", Real, "0.15"),
    key("tv.max_iters", Count, "100"),
    key("tv.tolerance", Real, "0.0001"),
    key("texture.scale", Real, "1"),
    key("texture.offset", Real, "0.5"),
    key("weights.sigma", Real, "8"),
    key("weights.r", Count, "17"),
    key("minutiae.spur_length", Count, "8"),
    key("minutiae.border_margin", Count, "10"),
    // network and training
    key("net.patch_size", Count, "192"),
    key("net.base_channels", Count, "64"),
    key("train.learning_rate", Real, "0.001"),
    key("train.batch_size", Count, "16"),
    key("train.max_iterations", Count, "50000"),
    key("train.checkpoint_every", Count, "1000"),
    key("train.eta", Real, "0.001"),
    key("train.saturating", Flag, "false"),
    key("train.no_discriminator", Flag, "false"),
    key("train.gray_gt", Flag, "false"),
    key("train.no_weight", Flag, "false"),
    // inference
    key("infer.window", Count, "192"),
    key("infer.step", Count, "8"),
    key("infer.aggregation", Choice(&["mean", "gaussian"]), "mean"),
    key("infer.texture_input", Flag, "false"),
    // evaluation
    key("eval.loc_radius", Real, "15"),
    key("eval.angle_tol_deg", Real, "30"),
    key("eval.require_type", Flag, "true"),
    key("eval.max_rotation_deg", Real, "30"),
    key("eval.rotation_step_deg", Real, "2"),
];

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// `train.learning_rate` is read from `FINGERGAN_TRAIN_LEARNING_RATE`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase())
}

fn check(key: &Key, value: &str) -> std::result::Result<(), String> {
    let ok = match key.kind {
        Real => value.parse::<f64>().map(|v| v.is_finite()).unwrap_or(false),
        Count => value.parse::<u64>().is_ok(),
        Flag => matches!(value, "true" | "false"),
        Text => !value.contains('\n'),
        Choice(opts) => opts.contains(&value),
    };
    if ok {
        return Ok(());
    }
    let want = match key.kind {
        Real => "a finite number".to_string(),
        Count => "a non-negative integer".to_string(),
        Flag => "true or false".to_string(),
        Text => "a single line".to_string(),
        Choice(opts) => format!("one of {}", opts.join(", ")),
    };
    Err(format!("{} must be {want}, got {value:?}", key.name))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect(),
        }
    }
}

impl Settings {
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let k = lookup(name).ok_or_else(|| CliError::Usage(format!("unknown setting {name:?}")))?;
        let value = value.trim();
        check(k, value).map_err(CliError::Usage)?;
        self.values.insert(k.name, value.to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let vars: BTreeMap<String, String> = vars.into_iter().collect();
        for k in KEYS {
            let env = env_name(k.name);
            if let Some(v) = vars.get(&env) {
                self.set(k.name, v).map_err(|e| CliError::Usage(format!("{env}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Effective configuration in the file format, one key per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{}={}", k.name, self.values[k.name]);
        }
        s
    }

    fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("no setting {name}"))
    }

    pub fn real(&self, name: &str) -> f64 {
        self.raw(name).parse().expect("validated on set")
    }

    pub fn count(&self, name: &str) -> u64 {
        self.raw(name).parse().expect("validated on set")
    }

    pub fn size(&self, name: &str) -> usize {
        self.count(name) as usize
    }

    pub fn flag(&self, name: &str) -> bool {
        self.raw(name) == "true"
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let v = self.raw(name);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn seed(&self) -> u64 {
        self.count("seed")
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let pair = |a: &str, b: &str| (self.real(a), self.real(b));
        let cfg = SynthConfig {
            noise: NoiseRanges {
                distortion: DistortionParamRanges {
                    k: pair("noise.k_min", "noise.k_max"),
                    theta_deg: pair("noise.theta_deg_min", "noise.theta_deg_max"),
                    displacement: pair("noise.displacement_min", "noise.displacement_max"),
                    semi_x_frac: pair("noise.semi_x_frac_min", "noise.semi_x_frac_max"),
                    semi_y_ratio: pair("noise.semi_y_ratio_min", "noise.semi_y_ratio_max"),
                },
                speckle_variance: pair("noise.speckle_variance_min", "noise.speckle_variance_max"),
                fusion_lambda: pair("noise.lambda_min", "noise.lambda_max"),
            },
            tv: self.tv_config(),
            encoding: self.texture_encoding(),
            weights: WeightMapParams {
                sigma: self.real("weights.sigma"),
                r: self.size("weights.r"),
            },
            minutiae: self.minutia_config(),
            latents_per_print: self.size("synth.latents_per_print"),
            ..SynthConfig::default()
        };
        cfg.validate()?;
        if cfg.latents_per_print == 0 {
            return Err(CliError::Usage("synth.latents_per_print must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn tv_config(&self) -> TvConfig {
        TvConfig {
            fidelity_weight: self.real("tv.fidelity_weight"),
            max_iters: self.size("tv.max_iters"),
            tolerance: self.real("tv.tolerance"),
            ..TvConfig::default()
        }
    }

    pub fn texture_encoding(&self) -> TextureEncoding {
        TextureEncoding {
            scale: self.real("texture.scale"),
            offset: self.real("texture.offset"),
        }
    }

    pub fn minutia_config(&self) -> MinutiaConfig {
        MinutiaConfig {
            spur_length: self.size("minutiae.spur_length"),
            border_margin: self.size("minutiae.border_margin"),
            ..MinutiaConfig::default()
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let base = self.size("net.base_channels");
        let spec = NetworkSpec {
            generator: GeneratorSpec {
                base_channels: base,
                ..GeneratorSpec::default()
            },
            discriminator: DiscriminatorSpec {
                base_channels: base,
                ..DiscriminatorSpec::default()
            },
            patch_size: self.size("net.patch_size"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.real("train.learning_rate"),
            batch_size: self.size("train.batch_size"),
            max_iterations: self.count("train.max_iterations"),
            checkpoint_every: self.count("train.checkpoint_every"),
            seed: self.seed(),
            loss: LossConfig {
                eta: self.real("train.eta"),
                saturating: self.flag("train.saturating"),
            },
            ablation: Ablation {
                no_discriminator: self.flag("train.no_discriminator"),
                gray_gt: self.flag("train.gray_gt"),
                no_weight: self.flag("train.no_weight"),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn inference_config(&self) -> Result<InferenceConfig> {
        let cfg = InferenceConfig {
            window: self.size("infer.window"),
            step: self.size("infer.step"),
            aggregation: match self.raw("infer.aggregation") {
                "gaussian" => Aggregation::Gaussian,
                _ => Aggregation::Mean,
            },
        };
        cfg.validate()?;
        if cfg.window % 16 != 0 {
            return Err(CliError::Usage(format!(
                "infer.window must be a multiple of 16, got {}",
                cfg.window
            )));
        }
        Ok(cfg)
    }

    pub fn matcher_config(&self) -> Result<MatcherConfig> {
        let tolerance = MatchTolerance {
            loc_radius: self.real("eval.loc_radius"),
            angle_tol: self.real("eval.angle_tol_deg").to_radians(),
            require_type: self.flag("eval.require_type"),
        };
        tolerance.validate()?;
        let cfg = MatcherConfig {
            max_rotation_deg: self.real("eval.max_rotation_deg"),
            rotation_step_deg: self.real("eval.rotation_step_deg"),
            tolerance,
        };
        if !(cfg.rotation_step_deg > 0.0 && cfg.max_rotation_deg >= 0.0) {
            return Err(CliError::Usage("matcher rotation step must be positive".into()));
        }
        Ok(cfg)
    }

    /// Checks every module configuration the settings feed.
    pub fn validate(&self) -> Result<()> {
        self.synth_config()?;
        self.network_spec()?;
        self.train_config()?;
        self.inference_config()?;
        self.matcher_config()?;
        if !(0.0..=1.0).contains(&self.real("synth.quality_threshold")) {
            return Err(CliError::Usage("synth.quality_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_module_defaults() {
        let s = Settings::default();
        s.validate().unwrap();
        let synth = s.synth_config().unwrap();
        let d = SynthConfig::default();
        assert_eq!(synth.noise, d.noise);
        assert_eq!(synth.tv, d.tv);
        assert_eq!(synth.encoding, d.encoding);
        assert_eq!(synth.weights, d.weights);
        assert_eq!(synth.minutiae, d.minutiae);
        assert_eq!(synth.latents_per_print, d.latents_per_print);
        assert_eq!(s.network_spec().unwrap(), NetworkSpec::default());
        assert_eq!(s.train_config().unwrap(), TrainConfig::default());
        assert_eq!(s.inference_config().unwrap(), InferenceConfig::default());
        assert_eq!(s.matcher_config().unwrap().tolerance.loc_radius, MatchTolerance::default().loc_radius);
        assert!((s.matcher_config().unwrap().tolerance.angle_tol - MatchTolerance::default().angle_tol).abs() < 1e-15);
    }

    #[test]
    fn dump_round_trips() {
        let mut s = Settings::default();
        s.set("train.eta", "0.25").unwrap();
        s.set("train.no_weight", "true").unwrap();
        s.set("synth.rolled_dir", "/data/rolled").unwrap();
        let mut t = Settings::default();
        t.apply_text(&s.dump(), "dump").unwrap();
        assert_eq!(s, t);
        assert_eq!(t.dump(), s.dump());
    }

    #[test]
    fn layers_override_in_order() {
        let mut s = Settings::default();
        s.apply_text("seed = 3\ntrain.batch_size=4\n# comment\n", "file").unwrap();
        s.apply_env([
            ("FINGERGAN_SEED".to_string(), "5".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ])
        .unwrap();
        assert_eq!(s.seed(), 5);
        assert_eq!(s.size("train.batch_size"), 4);
        s.set("seed", "9").unwrap();
        assert_eq!(s.seed(), 9);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut s = Settings::default();
        assert!(matches!(s.set("nope", "1"), Err(CliError::Usage(_))));
        assert!(matches!(s.set("train.batch_size", "-1"), Err(CliError::Usage(_))));
        assert!(matches!(s.set("infer.aggregation", "median"), Err(CliError::Usage(_))));
        assert!(s.apply_text("seed", "f").is_err());
        s.set("infer.step", "500").unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn env_names() {
        assert_eq!(env_name("train.learning_rate"), "FINGERGAN_TRAIN_LEARNING_RATE");
    }
}
