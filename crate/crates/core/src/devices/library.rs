//! Device library: a set of device classes, loadable from text.
//!
//! ```text
//! format_version = 1
//!
//! [ventilator]            # class section
//! medical = true
//!
//! [ventilator.run]        # mode section: <class>.<mode>
//! noise_rms_amps = 0.02
//! harmonics = 1:0.55:-0.52, 3:0.18:2.4   # order:rms_amps:phase_rad
//! ```
//!
//! Mode `off` is implicit. Mode order follows section order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ini::{Document, IniError};

use super::{DeviceMode, DeviceModel, HarmonicSpec};

pub const LIBRARY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceLibrary {
    classes: Vec<DeviceModel>,
}

impl DeviceLibrary {
    pub fn new(classes: Vec<DeviceModel>) -> Result<Self> {
        for (k, c) in classes.iter().enumerate() {
            if classes[..k].iter().any(|o| o.class_name() == c.class_name()) {
                return Err(Error::invalid(format!(
                    "duplicate device class `{}`",
                    c.class_name()
                )));
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[DeviceModel] {
        &self.classes
    }

    pub fn get(&self, class_name: &str) -> Result<&DeviceModel> {
        self.classes
            .iter()
            .find(|c| c.class_name() == class_name)
            .ok_or_else(|| Error::NotFound(format!("device class `{class_name}`")))
    }

    /// The shipped signatures. These are synthetic placeholders with plausible
    /// electrical character, not measurements of real hardware.
    pub fn builtin() -> Self {
        builtin_library().expect("builtin library is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_library(text).map_err(|e| Error::Config(format!("device library: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_library(&text)
            .map_err(|e| Error::Config(format!("device library {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("format_version = {LIBRARY_FORMAT_VERSION}\n");
        for class in &self.classes {
            out.push_str(&format!(
                "\n[{}]\nmedical = {}\n",
                class.class_name(),
                class.is_medical()
            ));
            for mode in class.active_modes() {
                let harmonics: Vec<String> = mode
                    .harmonics
                    .iter()
                    .map(|h| format!("{}:{}:{}", h.order, h.magnitude_rms_amps, h.phase_rad))
                    .collect();
                out.push_str(&format!(
                    "\n[{}.{}]\nnoise_rms_amps = {}\nharmonics = {}\n",
                    class.class_name(),
                    mode.name,
                    mode.noise_rms_amps,
                    harmonics.join(", ")
                ));
            }
        }
        out
    }
}

fn parse_library(text: &str) -> Result<DeviceLibrary, IniError> {
    let doc = Document::parse(text)?;
    let root = doc.root();
    root.deny_unknown(&["format_version"])?;
    let version: u32 = root.require("format_version")?.parse()?;
    if version != LIBRARY_FORMAT_VERSION {
        return Err(root.require("format_version")?.err(format!(
            "unsupported version {version}, expected {LIBRARY_FORMAT_VERSION}"
        )));
    }

    // (class name, is_medical, modes, header line)
    let mut classes: Vec<(String, bool, Vec<DeviceMode>, usize)> = Vec::new();
    for section in &doc.sections[1..] {
        let at = |msg: String| IniError {
            line: section.line,
            msg,
        };
        match section.name.split_once('.') {
            None => {
                section.deny_unknown(&["medical"])?;
                let medical = section.parse_or("medical", false)?;
                classes.push((section.name.clone(), medical, Vec::new(), section.line));
            }
            Some((class, mode_name)) => {
                section.deny_unknown(&["noise_rms_amps", "harmonics"])?;
                let entry = classes
                    .iter_mut()
                    .find(|c| c.0 == class)
                    .ok_or_else(|| at(format!("mode section before class [{class}]")))?;
                let noise = section.parse_or("noise_rms_amps", 0.0)?;
                let mut harmonics = Vec::new();
                if let Some(h) = section.get("harmonics") {
                    for item in h.list() {
                        harmonics.push(parse_harmonic(item).map_err(|m| h.err(m))?);
                    }
                }
                let mode = DeviceMode::new(mode_name, harmonics, noise)
                    .map_err(|e| at(e.to_string()))?;
                entry.2.push(mode);
            }
        }
    }
    let mut models = Vec::with_capacity(classes.len());
    for (name, medical, modes, line) in classes {
        models.push(DeviceModel::new(name, medical, modes).map_err(|e| IniError {
            line,
            msg: e.to_string(),
        })?);
    }
    DeviceLibrary::new(models).map_err(|e| IniError {
        line: 0,
        msg: e.to_string(),
    })
}

fn parse_harmonic(item: &str) -> Result<HarmonicSpec, String> {
    let parts: Vec<&str> = item.split(':').map(str::trim).collect();
    let [order, mag, phase] = parts[..] else {
        return Err(format!("harmonic `{item}` is not order:rms:phase"));
    };
    let bad = || format!("cannot parse harmonic `{item}`");
    HarmonicSpec::new(
        order.parse().map_err(|_| bad())?,
        mag.parse().map_err(|_| bad())?,
        phase.parse().map_err(|_| bad())?,
    )
    .map_err(|e| e.to_string())
}

fn h(order: u32, rms: f64, phase: f64) -> Result<HarmonicSpec> {
    HarmonicSpec::new(order, rms, phase)
}

/// `a + b` for phasors given as (rms magnitude, phase).
fn phasor_sum(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let re = a.0 * a.1.cos() + b.0 * b.1.cos();
    let im = a.0 * a.1.sin() + b.0 * b.1.sin();
    (re.hypot(im), im.atan2(re))
}

fn builtin_library() -> Result<DeviceLibrary> {
    // Ventilator: SMPS plus blower motor. Harmonic phases are illustrative.
    let run_fund = (0.55, -0.52);
    let run_h3 = (0.18, 2.4);
    let run_h5 = (0.09, -0.9);
    let humid_fund = phasor_sum(run_fund, (0.80, 0.0));
    let ventilator = DeviceModel::new(
        "ventilator",
        true,
        vec![
            DeviceMode::new("standby", vec![h(1, 0.10, -0.35)?], 0.005)?,
            DeviceMode::new(
                "run",
                vec![
                    h(1, run_fund.0, run_fund.1)?,
                    h(3, run_h3.0, run_h3.1)?,
                    h(5, run_h5.0, run_h5.1)?,
                ],
                0.02,
            )?,
            DeviceMode::new(
                "humidifier-run",
                vec![
                    h(1, humid_fund.0, humid_fund.1)?,
                    h(3, run_h3.0, run_h3.1)?,
                    h(5, run_h5.0, run_h5.1)?,
                ],
                0.02,
            )?,
        ],
    )?;

    let heater = DeviceModel::new(
        "resistive_heater",
        false,
        vec![
            DeviceMode::new("low", vec![h(1, 6.25, 0.0)?], 0.02)?,
            DeviceMode::new("high", vec![h(1, 12.5, 0.0)?], 0.02)?,
        ],
    )?;
    let motor = DeviceModel::new(
        "induction_motor",
        false,
        vec![DeviceMode::new(
            "run",
            vec![h(1, 4.5, -0.75)?, h(3, 0.06, 0.3)?, h(5, 0.10, -2.2)?],
            0.03,
        )?],
    )?;
    let smps = DeviceModel::new(
        "electronic_smps",
        false,
        vec![DeviceMode::new(
            "on",
            vec![
                h(1, 0.9, 0.12)?,
                h(3, 0.75, -2.9)?,
                h(5, 0.5, 0.6)?,
                h(7, 0.3, -1.5)?,
            ],
            0.02,
        )?],
    )?;
    let lighting = DeviceModel::new(
        "lighting",
        false,
        vec![DeviceMode::new(
            "on",
            vec![
                h(1, 0.45, 0.35)?,
                h(3, 0.22, 2.9)?,
                h(5, 0.12, -0.4)?,
                h(7, 0.06, 1.9)?,
            ],
            0.01,
        )?],
    )?;
    let fridge = DeviceModel::new(
        "fridge_compressor",
        false,
        vec![
            DeviceMode::new(
                "run",
                vec![h(1, 1.6, -0.62)?, h(2, 0.03, 0.8)?, h(3, 0.09, -1.4)?],
                0.02,
            )?,
            DeviceMode::new("defrost", vec![h(1, 3.0, 0.0)?], 0.02)?,
        ],
    )?;
    DeviceLibrary::new(vec![ventilator, heater, motor, smps, lighting, fridge])
}
