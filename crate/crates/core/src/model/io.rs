//! Model file: `key = value` text. The root section holds the header
//! (version, layer sizes, activations, seeds, feature spec, window geometry),
//! `[norm]` the normalization statistics and `[layer.<k>]` the row-major
//! weights and biases of layer `k`. Floats use 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::io::f17;
use crate::fingerprint::fingerprint;
use crate::features::{FeatureId, FeatureSpec, NormStats};
use crate::ini::{Document, IniError, Section};

use super::{CountModel, Layer, RegressorParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn join_f17(xs: &[f64]) -> String {
    xs.iter().map(|&x| f17(x)).collect::<Vec<_>>().join(", ")
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl CountModel {
    pub fn activations(&self) -> Vec<&'static str> {
        let n = self.params.layers.len();
        (0..n).map(|k| if k + 1 < n { "relu" } else { "softplus" }).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {MODEL_FORMAT_VERSION}");
        let _ = writeln!(out, "layer_sizes = {}", join(self.params.layer_sizes()));
        let _ = writeln!(out, "activations = {}", self.activations().join(", "));
        let _ = writeln!(out, "init_seed = {}", self.params.init_seed);
        let _ = writeln!(out, "shuffle_seed = {}", self.shuffle_seed);
        let _ = writeln!(out, "features = {}", join(self.spec.ids()));
        let _ = writeln!(out, "f0_hz = {}", f17(self.spec.f0_hz()));
        let _ = writeln!(out, "max_harmonic = {}", self.spec.max_harmonic());
        let _ = writeln!(out, "window_s = {}", f17(self.window_s));
        let _ = writeln!(out, "stride_s = {}", f17(self.stride_s));
        let _ = writeln!(out, "train_fingerprint = {}", self.train_fingerprint);
        let _ = writeln!(out, "\n[norm]");
        let _ = writeln!(out, "mean = {}", join_f17(&self.norm.mean));
        let _ = writeln!(out, "std = {}", join_f17(&self.norm.std));
        let _ = writeln!(out, "kept = {}", join(self.norm.kept.iter().map(|&k| u8::from(k))));
        for (k, layer) in self.params.layers.iter().enumerate() {
            let _ = writeln!(out, "\n[layer.{k}]");
            let _ = writeln!(out, "weights = {}", join_f17(&layer.weights));
            let _ = writeln!(out, "biases = {}", join_f17(&layer.biases));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let model = parse_model(text).map_err(|e| Error::format(path, e.to_string()))?;
        model
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    /// Digest of the full model text, which embeds the training data
    /// fingerprint.
    pub fn fingerprint(&self) -> String {
        fingerprint(&[self.to_text()])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let version = text
            .lines()
            .find_map(|l| l.trim().strip_prefix("format_version"))
            .and_then(|rest| rest.trim().strip_prefix('='))
            .map(str::trim);
        if let Some(v) = version {
            if v != MODEL_FORMAT_VERSION.to_string() {
                return Err(Error::Contract(format!(
                    "{}: model format version {v}, expected {MODEL_FORMAT_VERSION}",
                    path.display()
                )));
            }
        }
        Self::from_text(&text, path)
    }
}

fn floats(section: &Section, key: &str, len: usize) -> Result<Vec<f64>, IniError> {
    let entry = section.require(key)?;
    let xs: Vec<f64> = entry.parse_list()?;
    if xs.len() != len {
        return Err(entry.err(format!("{} values, expected {len}", xs.len())));
    }
    Ok(xs)
}

fn parse_model(text: &str) -> Result<CountModel, IniError> {
    let doc = Document::parse(text)?;
    let root = doc.root();
    root.deny_unknown(&[
        "format_version",
        "layer_sizes",
        "activations",
        "init_seed",
        "shuffle_seed",
        "features",
        "f0_hz",
        "max_harmonic",
        "window_s",
        "stride_s",
        "train_fingerprint",
    ])?;
    let version: u32 = root.require("format_version")?.parse()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(root
            .require("format_version")?
            .err(format!("unsupported version {version}")));
    }
    let sizes_entry = root.require("layer_sizes")?;
    let sizes: Vec<usize> = sizes_entry.parse_list()?;
    if sizes.len() < 2 || sizes.contains(&0) || sizes[sizes.len() - 1] != 1 {
        return Err(sizes_entry.err("need at least two positive sizes ending in 1"));
    }
    let acts_entry = root.require("activations")?;
    let acts = acts_entry.list();
    let expected: Vec<&str> = (1..sizes.len())
        .map(|k| if k + 1 < sizes.len() { "relu" } else { "softplus" })
        .collect();
    if acts != expected {
        return Err(acts_entry.err(format!("expected `{}`", expected.join(", "))));
    }
    let feat_entry = root.require("features")?;
    let ids = feat_entry
        .list()
        .into_iter()
        .map(|s| s.parse::<FeatureId>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| feat_entry.err(e.to_string()))?;
    let spec = FeatureSpec::new(
        ids,
        root.require("f0_hz")?.parse()?,
        root.require("max_harmonic")?.parse()?,
    )
    .map_err(|e| feat_entry.err(e.to_string()))?;

    let norm_sec = doc.require_section("norm")?;
    norm_sec.deny_unknown(&["mean", "std", "kept"])?;
    let width = spec.len();
    let kept_entry = norm_sec.require("kept")?;
    let kept = kept_entry
        .list()
        .into_iter()
        .map(|s| match s {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(kept_entry.err(format!("bad flag `{s}`"))),
        })
        .collect::<Result<Vec<bool>, _>>()?;
    if kept.len() != width {
        return Err(kept_entry.err(format!("{} flags for {width} features", kept.len())));
    }
    let norm = NormStats {
        mean: floats(norm_sec, "mean", width)?,
        std: floats(norm_sec, "std", width)?,
        kept,
    };

    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (k, w) in sizes.windows(2).enumerate() {
        let name = format!("layer.{k}");
        let sec = doc.require_section(&name)?;
        sec.deny_unknown(&["weights", "biases"])?;
        layers.push(Layer {
            n_in: w[0],
            n_out: w[1],
            weights: floats(sec, "weights", w[0] * w[1])?,
            biases: floats(sec, "biases", w[1])?,
        });
    }
    let n_layer_sections = doc.sections.iter().filter(|s| s.name.starts_with("layer.")).count();
    if n_layer_sections != layers.len() {
        return Err(IniError {
            line: 0,
            msg: format!("{n_layer_sections} layer sections for {} layers", layers.len()),
        });
    }
    Ok(CountModel {
        params: RegressorParams {
            layers,
            init_seed: root.require("init_seed")?.parse()?,
        },
        norm,
        spec,
        window_s: root.require("window_s")?.parse()?,
        stride_s: root.require("stride_s")?.parse()?,
        shuffle_seed: root.require("shuffle_seed")?.parse()?,
        train_fingerprint: root
            .get("train_fingerprint")
            .map(|e| e.value.clone())
            .unwrap_or_default(),
    })
}
