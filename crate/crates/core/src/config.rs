//! Run configuration: one `key = value` file with `[section]` headers.
//!
//! ```text
//! [scenario]
//! duration_s = 600
//! n_medical_devices = 5
//! background = resistive_heater:4, induction_motor:4
//! rng_seed = 42
//!
//! [schedule]
//! ventilator = 240, 240        # mean on, mean off (s); `inf` on = always on
//!
//! [featurize]
//! window_s = 5
//! stride_s = 1
//! features = all
//!
//! [model]
//! hidden = 32, 16
//!
//! [split]
//! train = 0.6
//! val = 0.2
//! test = 0.2
//!
//! [output]
//! dir = runs/default
//! ```
//!
//! Every key is optional; omitted keys take the built-in defaults.

use std::path::{Path, PathBuf};

use crate::devices::DeviceLibrary;
use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureSpec};
use crate::ini::{Document, IniError, Section};
use crate::model::{TrainConfig, DEFAULT_HIDDEN};
use crate::sim::{OnOffMeans, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub features: Vec<FeatureId>,
    pub max_harmonic: u32,
    /// Keep only the `top_k` best-ranked features.
    pub top_k: Option<usize>,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            stride_s: 5.0,
            features: FeatureId::ALL.to_vec(),
            max_harmonic: 7,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            init_seed: 1,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub library: DeviceLibrary,
    pub featurize: FeaturizeConfig,
    pub model: ModelConfig,
    pub split: SplitConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            library: DeviceLibrary::builtin(),
            featurize: FeaturizeConfig::default(),
            model: ModelConfig::default(),
            split: SplitConfig::default(),
            output_dir: None,
        }
    }
}

fn at(line: usize, msg: impl Into<String>) -> IniError {
    IniError {
        line,
        msg: msg.into(),
    }
}

fn set<T: std::str::FromStr>(sec: &Section, key: &str, slot: &mut T) -> Result<(), IniError> {
    if let Some(v) = sec.parse(key)? {
        *slot = v;
    }
    Ok(())
}

fn read_scenario(sec: &Section, base: &Path, cfg: &mut RunConfig) -> Result<(), IniError> {
    sec.deny_unknown(&[
        "duration_s",
        "sample_rate_hz",
        "f0_hz",
        "voltage_rms",
        "voltage_thd",
        "medical_class",
        "n_medical_devices",
        "background",
        "feeder_noise_rms_amps",
        "device_noise",
        "rng_seed",
        "device_library",
    ])?;
    let s = &mut cfg.scenario;
    set(sec, "duration_s", &mut s.duration_s)?;
    set(sec, "sample_rate_hz", &mut s.sample_rate_hz)?;
    set(sec, "f0_hz", &mut s.f0_hz)?;
    set(sec, "voltage_rms", &mut s.voltage_rms)?;
    set(sec, "voltage_thd", &mut s.voltage_thd)?;
    set(sec, "medical_class", &mut s.medical_class)?;
    set(sec, "n_medical_devices", &mut s.n_medical_devices)?;
    set(sec, "feeder_noise_rms_amps", &mut s.feeder_noise_rms_amps)?;
    set(sec, "device_noise", &mut s.device_noise)?;
    set(sec, "rng_seed", &mut s.rng_seed)?;
    if let Some(e) = sec.get("background") {
        s.background = e
            .list()
            .into_iter()
            .map(|item| {
                let (class, n) = item
                    .split_once(':')
                    .ok_or_else(|| e.err(format!("expected `class:count`, got `{item}`")))?;
                let n = n
                    .trim()
                    .parse()
                    .map_err(|_| e.err(format!("bad count in `{item}`")))?;
                Ok((class.trim().to_string(), n))
            })
            .collect::<Result<_, IniError>>()?;
    }
    if let Some(e) = sec.get("device_library") {
        let path = base.join(&e.value);
        cfg.library = DeviceLibrary::load(&path).map_err(|err| e.err(err.to_string()))?;
    }
    Ok(())
}

fn read_schedule(sec: &Section, s: &mut ScenarioConfig) -> Result<(), IniError> {
    for e in &sec.entries {
        let v: Vec<f64> = e.parse_list()?;
        let [on, off] = v[..] else {
            return Err(e.err("expected `mean_on_s, mean_off_s`"));
        };
        s.schedule.insert(e.key.clone(), OnOffMeans::new(on, off));
    }
    Ok(())
}

fn read_featurize(sec: &Section, f: &mut FeaturizeConfig) -> Result<(), IniError> {
    sec.deny_unknown(&["window_s", "stride_s", "features", "max_harmonic", "top_k"])?;
    set(sec, "window_s", &mut f.window_s)?;
    set(sec, "stride_s", &mut f.stride_s)?;
    set(sec, "max_harmonic", &mut f.max_harmonic)?;
    if let Some(e) = sec.get("features") {
        f.features = if e.value == "all" {
            FeatureId::ALL.to_vec()
        } else {
            e.list()
                .into_iter()
                .map(|s| s.parse::<FeatureId>().map_err(|err| e.err(err.to_string())))
                .collect::<Result<_, _>>()?
        };
    }
    if let Some(k) = sec.parse::<usize>("top_k")? {
        f.top_k = (k > 0).then_some(k);
    }
    Ok(())
}

fn read_model(sec: &Section, m: &mut ModelConfig) -> Result<(), IniError> {
    sec.deny_unknown(&[
        "hidden",
        "init_seed",
        "learning_rate",
        "batch_size",
        "epochs",
        "l2_penalty",
        "shuffle_seed",
        "patience",
    ])?;
    if let Some(e) = sec.get("hidden") {
        m.hidden = e.parse_list()?;
    }
    set(sec, "init_seed", &mut m.init_seed)?;
    let t = &mut m.train;
    set(sec, "learning_rate", &mut t.learning_rate)?;
    set(sec, "batch_size", &mut t.batch_size)?;
    set(sec, "epochs", &mut t.epochs)?;
    set(sec, "l2_penalty", &mut t.l2_penalty)?;
    set(sec, "shuffle_seed", &mut t.shuffle_seed)?;
    set(sec, "patience", &mut t.patience)?;
    Ok(())
}

fn read_split(sec: &Section, s: &mut SplitConfig) -> Result<(), IniError> {
    sec.deny_unknown(&["train", "val", "test"])?;
    set(sec, "train", &mut s.train)?;
    set(sec, "val", &mut s.val)?;
    set(sec, "test", &mut s.test)?;
    Ok(())
}

impl RunConfig {
    /// Parses config text; relative paths inside resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let parse = || -> Result<Self, IniError> {
            let doc = Document::parse(text)?;
            if let Some(e) = doc.root().entries.first() {
                return Err(e.err("keys must appear inside a section"));
            }
            let mut cfg = RunConfig::default();
            for sec in &doc.sections[1..] {
                match sec.name.as_str() {
                    "scenario" => read_scenario(sec, base, &mut cfg)?,
                    "schedule" => read_schedule(sec, &mut cfg.scenario)?,
                    "featurize" => read_featurize(sec, &mut cfg.featurize)?,
                    "model" => read_model(sec, &mut cfg.model)?,
                    "split" => read_split(sec, &mut cfg.split)?,
                    "output" => {
                        sec.deny_unknown(&["dir"])?;
                        cfg.output_dir = sec.get("dir").map(|e| PathBuf::from(&e.value));
                    }
                    other => return Err(at(sec.line, format!("unknown section [{other}]"))),
                }
            }
            Ok(cfg)
        };
        let cfg = parse().map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.scenario.validate(&self.library).map_err(cfg_err)?;
        let f = &self.featurize;
        if !(f.window_s >= 1.0 && f.window_s <= self.scenario.duration_s) {
            return Err(Error::Config(format!(
                "window_s must be in [1, duration_s], got {}",
                f.window_s
            )));
        }
        if !(f.stride_s.is_finite() && f.stride_s > 0.0) {
            return Err(Error::Config("stride_s must be positive".into()));
        }
        self.feature_spec().map_err(cfg_err)?;
        if let Some(k) = f.top_k {
            if k > f.features.len() {
                return Err(Error::Config(format!(
                    "top_k = {k} exceeds the {} listed features",
                    f.features.len()
                )));
            }
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be >= 1".into()));
        }
        self.model.train.validate().map_err(cfg_err)?;
        let s = self.split;
        let parts = [s.train, s.val, s.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {} / {} / {}",
                s.train, s.val, s.test
            )));
        }
        Ok(())
    }

    /// Full configured feature list, before any ranking cut.
    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::new(
            self.featurize.features.clone(),
            self.scenario.f0_hz,
            self.featurize.max_harmonic,
        )
    }
}
