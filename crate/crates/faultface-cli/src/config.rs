//! Flat key-value experiment configuration with `[section]` headers.
//! Every default is documented in `--help`; the effective configuration
//! is echoed into the run summary so runs are self-describing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use faultface::classifier::ClassifierConfig;
use faultface::gan::{AdvConfig, GanFlavor};
use faultface::portrait::{MorseParams, PortraitKind};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub manifest: PathBuf,
    pub stride: usize,
    pub validation_windows_per_record: usize,
    pub kind: PortraitKind,
    pub morse: MorseParams,
    pub flavor: GanFlavor,
    pub adv: AdvConfig,
    pub target_per_class: usize,
    pub classifier: ClassifierConfig,
}

fn parse_triplet(v: &str, key: &str) -> Result<(usize, usize, usize), ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(ConfigError(format!("{}: want three comma-separated integers", key)));
    }
    let mut out = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .parse()
            .map_err(|_| ConfigError(format!("{}: bad integer {:?}", key, p)))?;
    }
    Ok((out[0], out[1], out[2]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e)))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!("line {}: expected key = value", i + 1)));
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{}.{}", section, key.trim())
            };
            if values.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError(format!("line {}: duplicate key {}", i + 1, full)));
            }
        }
        Self::from_values(values)
    }

    fn from_values(mut values: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        fn take(values: &mut BTreeMap<String, String>, key: &str) -> Option<String> {
            values.remove(key).filter(|v| !v.is_empty())
        }
        fn parse<T: std::str::FromStr>(v: String, key: &str) -> Result<T, ConfigError> {
            v.parse()
                .map_err(|_| ConfigError(format!("{}: bad value {:?}", key, v)))
        }

        let manifest = take(&mut values, "dataset.manifest")
            .map(PathBuf::from)
            .ok_or_else(|| ConfigError("dataset.manifest is required".into()))?;
        let output_dir = take(&mut values, "experiment.output_dir")
            .map(PathBuf::from)
            .ok_or_else(|| ConfigError("experiment.output_dir is required".into()))?;

        let seed = match take(&mut values, "experiment.seed") {
            Some(v) => parse(v, "experiment.seed")?,
            None => 0,
        };

        let stride = match take(&mut values, "dataset.stride") {
            Some(v) => parse(v, "dataset.stride")?,
            None => 784,
        };
        if stride == 0 {
            return Err(ConfigError("dataset.stride must be at least 1".into()));
        }
        let validation_windows_per_record =
            match take(&mut values, "dataset.validation_windows_per_record") {
                Some(v) => parse(v, "dataset.validation_windows_per_record")?,
                None => 1,
            };

        let kind = match take(&mut values, "portrait.kind") {
            Some(v) => PortraitKind::parse(&v)
                .ok_or_else(|| ConfigError(format!("portrait.kind: unknown kind {:?}", v)))?,
            None => PortraitKind::CwtMorse,
        };
        let morse = MorseParams {
            gamma: match take(&mut values, "portrait.morse_gamma") {
                Some(v) => parse(v, "portrait.morse_gamma")?,
                None => MorseParams::default().gamma,
            },
            beta: match take(&mut values, "portrait.morse_beta") {
                Some(v) => parse(v, "portrait.morse_beta")?,
                None => MorseParams::default().beta,
            },
        };

        let flavor = match take(&mut values, "gan.flavor") {
            Some(v) => GanFlavor::parse(&v)
                .ok_or_else(|| ConfigError(format!("gan.flavor: unknown flavor {:?}", v)))?,
            None => GanFlavor::Dcgan,
        };
        let defaults = AdvConfig::default();
        let adv = AdvConfig {
            learning_rate: match take(&mut values, "gan.learning_rate") {
                Some(v) => parse(v, "gan.learning_rate")?,
                None => defaults.learning_rate,
            },
            iterations: match take(&mut values, "gan.iterations") {
                Some(v) => parse(v, "gan.iterations")?,
                None => defaults.iterations,
            },
            batch_size: match take(&mut values, "gan.batch_size") {
                Some(v) => parse(v, "gan.batch_size")?,
                None => defaults.batch_size,
            },
            d_steps: match take(&mut values, "gan.d_steps") {
                Some(v) => parse(v, "gan.d_steps")?,
                None => defaults.d_steps,
            },
            noise_dim: match take(&mut values, "gan.noise_dim") {
                Some(v) => parse(v, "gan.noise_dim")?,
                None => defaults.noise_dim,
            },
            seed,
            lr_decay: match take(&mut values, "gan.lr_decay") {
                Some(v) => Some(parse(v, "gan.lr_decay")?),
                None => None,
            },
            log_every: match take(&mut values, "gan.log_every") {
                Some(v) => parse(v, "gan.log_every")?,
                None => defaults.log_every,
            },
            checkpoint_every: match take(&mut values, "gan.checkpoint_every") {
                Some(v) => Some(parse(v, "gan.checkpoint_every")?),
                None => None,
            },
            gen_channels: match take(&mut values, "gan.gen_channels") {
                Some(v) => parse_triplet(&v, "gan.gen_channels")?,
                None => defaults.gen_channels,
            },
            disc_channels: match take(&mut values, "gan.disc_channels") {
                Some(v) => parse_triplet(&v, "gan.disc_channels")?,
                None => defaults.disc_channels,
            },
        };
        if adv.batch_size == 0 || adv.noise_dim == 0 || adv.d_steps == 0 || adv.log_every == 0 {
            return Err(ConfigError(
                "gan batch_size, noise_dim, d_steps, and log_every must be positive".into(),
            ));
        }

        let target_per_class = match take(&mut values, "balance.target_per_class") {
            Some(v) => parse(v, "balance.target_per_class")?,
            None => 1000,
        };
        if target_per_class == 0 {
            return Err(ConfigError("balance.target_per_class must be positive".into()));
        }

        let cdef = ClassifierConfig::default();
        let classifier = ClassifierConfig {
            epochs: match take(&mut values, "classifier.epochs") {
                Some(v) => parse(v, "classifier.epochs")?,
                None => cdef.epochs,
            },
            learning_rate: match take(&mut values, "classifier.learning_rate") {
                Some(v) => parse(v, "classifier.learning_rate")?,
                None => cdef.learning_rate,
            },
            batch_size: match take(&mut values, "classifier.batch_size") {
                Some(v) => parse(v, "classifier.batch_size")?,
                None => cdef.batch_size,
            },
            train_per_class: match take(&mut values, "classifier.train_per_class") {
                Some(v) => parse(v, "classifier.train_per_class")?,
                None => cdef.train_per_class,
            },
            val_per_class: match take(&mut values, "classifier.val_per_class") {
                Some(v) => parse(v, "classifier.val_per_class")?,
                None => cdef.val_per_class,
            },
            seed,
            channels: match take(&mut values, "classifier.channels") {
                Some(v) => parse_triplet(&v, "classifier.channels")?,
                None => cdef.channels,
            },
        };
        if classifier.batch_size == 0 || classifier.train_per_class == 0 || classifier.val_per_class == 0
        {
            return Err(ConfigError(
                "classifier batch_size, train_per_class, and val_per_class must be positive".into(),
            ));
        }
        if classifier.train_per_class + classifier.val_per_class > target_per_class {
            return Err(ConfigError(format!(
                "train_per_class + val_per_class = {} exceeds target_per_class = {}",
                classifier.train_per_class + classifier.val_per_class,
                target_per_class
            )));
        }

        if let Some(stray) = values.keys().next() {
            return Err(ConfigError(format!("unknown key {:?}", stray)));
        }

        Ok(ExperimentConfig {
            seed,
            output_dir,
            manifest,
            stride,
            validation_windows_per_record,
            kind,
            morse,
            flavor,
            adv,
            target_per_class,
            classifier,
        })
    }

    /// Effective configuration as ordered (section.key, value) pairs,
    /// echoed verbatim into the run summary.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("experiment.seed", self.seed.to_string());
        push("experiment.output_dir", self.output_dir.display().to_string());
        push("dataset.manifest", self.manifest.display().to_string());
        push("dataset.stride", self.stride.to_string());
        push(
            "dataset.validation_windows_per_record",
            self.validation_windows_per_record.to_string(),
        );
        push("portrait.kind", self.kind.to_string());
        push("portrait.morse_gamma", self.morse.gamma.to_string());
        push("portrait.morse_beta", self.morse.beta.to_string());
        push("gan.flavor", self.flavor.to_string());
        push("gan.learning_rate", self.adv.learning_rate.to_string());
        push("gan.iterations", self.adv.iterations.to_string());
        push("gan.batch_size", self.adv.batch_size.to_string());
        push("gan.d_steps", self.adv.d_steps.to_string());
        push("gan.noise_dim", self.adv.noise_dim.to_string());
        push(
            "gan.lr_decay",
            self.adv.lr_decay.map(|v| v.to_string()).unwrap_or_default(),
        );
        push("gan.log_every", self.adv.log_every.to_string());
        push(
            "gan.checkpoint_every",
            self.adv
                .checkpoint_every
                .map(|v| v.to_string())
                .unwrap_or_default(),
        );
        let (g0, g1, g2) = self.adv.gen_channels;
        push("gan.gen_channels", format!("{},{},{}", g0, g1, g2));
        let (d0, d1, d2) = self.adv.disc_channels;
        push("gan.disc_channels", format!("{},{},{}", d0, d1, d2));
        push("balance.target_per_class", self.target_per_class.to_string());
        push("classifier.epochs", self.classifier.epochs.to_string());
        push(
            "classifier.learning_rate",
            self.classifier.learning_rate.to_string(),
        );
        push("classifier.batch_size", self.classifier.batch_size.to_string());
        push(
            "classifier.train_per_class",
            self.classifier.train_per_class.to_string(),
        );
        push(
            "classifier.val_per_class",
            self.classifier.val_per_class.to_string(),
        );
        let (c0, c1, c2) = self.classifier.channels;
        push("classifier.channels", format!("{},{},{}", c0, c1, c2));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[experiment]
output_dir = out
[dataset]
manifest = data/m.csv
";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.stride, 784);
        assert_eq!(cfg.kind, PortraitKind::CwtMorse);
        assert_eq!(cfg.adv.iterations, 40_000);
        assert_eq!(cfg.adv.learning_rate, 1e-4);
        assert_eq!(cfg.target_per_class, 1000);
        assert_eq!(cfg.classifier.epochs, 100);
        assert_eq!(cfg.classifier.train_per_class, 300);
        assert_eq!(cfg.classifier.val_per_class, 700);
    }

    #[test]
    fn missing_manifest_is_config_error() {
        assert!(ExperimentConfig::parse("[experiment]\noutput_dir = o\n").is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{}\n[gan]\nbogus = 1\n", MINIMAL);
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{}", err);
    }

    #[test]
    fn overrides_and_echo_round_trip() {
        let text = "\
[experiment]
seed = 42
output_dir = out/x
[dataset]
manifest = m.csv
stride = 392
[portrait]
kind = gram
[gan]
flavor = mlpgan
learning_rate = 0.0002
iterations = 17
lr_decay = 0.5
gen_channels = 16,8,4
[balance]
target_per_class = 10
[classifier]
epochs = 3
train_per_class = 3
val_per_class = 7
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.kind, PortraitKind::Gram);
        assert_eq!(cfg.flavor, GanFlavor::MlpGan);
        assert_eq!(cfg.adv.lr_decay, Some(0.5));
        assert_eq!(cfg.adv.gen_channels, (16, 8, 4));
        assert_eq!(cfg.adv.seed, 42);
        assert_eq!(cfg.classifier.seed, 42);
        let echo = cfg.echo();
        let find = |k: &str| {
            echo.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .unwrap()
        };
        assert_eq!(find("experiment.seed"), "42");
        assert_eq!(find("gan.learning_rate"), "0.0002");
        assert_eq!(find("gan.lr_decay"), "0.5");
        assert_eq!(find("classifier.val_per_class"), "7");
    }

    #[test]
    fn split_must_fit_target() {
        let text = format!(
            "{}\n[balance]\ntarget_per_class = 5\n[classifier]\ntrain_per_class = 3\nval_per_class = 3\n",
            MINIMAL
        );
        assert!(ExperimentConfig::parse(&text).is_err());
    }
}
