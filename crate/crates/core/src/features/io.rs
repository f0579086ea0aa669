//! Dataset CSV: `# key = value` metadata lines, a header row
//! `t_start_s,<feature ids...>,y,valid`, then one row per window. Floats are
//! written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{FeatureDataset, FeatureId, FeatureSpec};

pub const DATASET_FORMAT_VERSION: u32 = 1;

pub(crate) fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

impl FeatureDataset {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# format_version = {DATASET_FORMAT_VERSION}");
        let _ = writeln!(out, "# window_s = {}", self.window_s);
        let _ = writeln!(out, "# stride_s = {}", self.stride_s);
        let _ = writeln!(out, "# f0_hz = {}", self.spec.f0_hz());
        let _ = writeln!(out, "# max_harmonic = {}", self.spec.max_harmonic());
        let _ = writeln!(out, "# fingerprint = {}", self.fingerprint);
        out.push_str("t_start_s");
        for id in self.spec.ids() {
            out.push(',');
            out.push_str(id.as_str());
        }
        out.push_str(",y,valid\n");
        for k in 0..self.len() {
            out.push_str(&f17(self.t_start_s[k]));
            for &v in &self.x[k] {
                out.push(',');
                out.push_str(&f17(v));
            }
            let _ = writeln!(out, ",{},{}", self.y[k], u8::from(self.valid[k]));
        }
        out
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::format(path, format!("line {line}: {msg}"));
        let mut meta: Vec<(String, String)> = Vec::new();
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let (header_no, header) = loop {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::format(path, "missing header row"))?;
            match line.strip_prefix('#') {
                Some(rest) => {
                    let (k, v) = rest
                        .split_once('=')
                        .ok_or_else(|| bad(no, "metadata line without `=`".into()))?;
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                None => break (no, line),
            }
        };
        let get = |key: &str| -> Result<&str> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::format(path, format!("missing metadata `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::format(path, format!("bad metadata `{key}`")))
        };
        let version: u32 = get("format_version")?
            .parse()
            .map_err(|_| Error::format(path, "bad format_version"))?;
        if version != DATASET_FORMAT_VERSION {
            return Err(Error::Contract(format!(
                "{}: dataset format version {version}, expected {DATASET_FORMAT_VERSION}",
                path.display()
            )));
        }
        let max_harmonic: u32 = get("max_harmonic")?
            .parse()
            .map_err(|_| Error::format(path, "bad max_harmonic"))?;

        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[0] != "t_start_s" || cols[cols.len() - 2..] != ["y", "valid"] {
            return Err(bad(header_no, "header must be t_start_s,<features>,y,valid".into()));
        }
        let ids = cols[1..cols.len() - 2]
            .iter()
            .map(|s| s.parse::<FeatureId>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(header_no, e.to_string()))?;
        let spec = FeatureSpec::new(ids, num("f0_hz")?, max_harmonic)
            .map_err(|e| bad(header_no, e.to_string()))?;

        let mut ds = FeatureDataset {
            window_s: num("window_s")?,
            stride_s: num("stride_s")?,
            fingerprint: get("fingerprint")?.to_string(),
            spec,
            t_start_s: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            valid: Vec::new(),
        };
        let width = cols.len();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(bad(no, format!("{} fields, expected {width}", fields.len())));
            }
            let float = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(no, format!("bad number `{s}`")))
            };
            ds.t_start_s.push(float(fields[0])?);
            ds.x.push(
                fields[1..width - 2]
                    .iter()
                    .map(|s| float(s))
                    .collect::<Result<_>>()?,
            );
            ds.y.push(
                fields[width - 2]
                    .parse()
                    .map_err(|_| bad(no, "bad target".into()))?,
            );
            ds.valid.push(match fields[width - 1] {
                "1" => true,
                "0" => false,
                other => return Err(bad(no, format!("bad validity flag `{other}`"))),
            });
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}
