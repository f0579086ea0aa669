//! Steady-state electrical signatures of appliance classes.
//!
//! A device class has named operating modes; each mode is a set of current
//! harmonics referenced to the supply voltage phase, plus wideband noise.
//! Mode `off` is always present and draws nothing.

mod library;

use std::f64::consts::{SQRT_2, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{self, FeatureSpec};
use crate::signal::{wrap_phase, Waveform};

pub use library::{DeviceLibrary, LIBRARY_FORMAT_VERSION};

pub const OFF_MODE: &str = "off";

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpec {
    pub order: u32,
    pub magnitude_rms_amps: f64,
    pub phase_rad: f64,
}

impl HarmonicSpec {
    pub fn new(order: u32, magnitude_rms_amps: f64, phase_rad: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("harmonic order must be at least 1"));
        }
        if !(magnitude_rms_amps.is_finite() && magnitude_rms_amps >= 0.0) {
            return Err(Error::invalid(format!(
                "harmonic {order}: magnitude must be finite and non-negative"
            )));
        }
        if !phase_rad.is_finite() {
            return Err(Error::invalid(format!("harmonic {order}: phase must be finite")));
        }
        Ok(Self {
            order,
            magnitude_rms_amps,
            phase_rad: wrap_phase(phase_rad),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceMode {
    pub name: String,
    pub harmonics: Vec<HarmonicSpec>,
    pub noise_rms_amps: f64,
}

impl DeviceMode {
    pub fn new(
        name: impl Into<String>,
        mut harmonics: Vec<HarmonicSpec>,
        noise_rms_amps: f64,
    ) -> Result<Self> {
        let name = name.into();
        check_name(&name, "mode")?;
        if !(noise_rms_amps.is_finite() && noise_rms_amps >= 0.0) {
            return Err(Error::invalid(format!(
                "mode {name}: noise must be finite and non-negative"
            )));
        }
        harmonics.sort_by_key(|h| h.order);
        if harmonics.windows(2).any(|p| p[0].order == p[1].order) {
            return Err(Error::invalid(format!("mode {name}: duplicate harmonic order")));
        }
        if name == OFF_MODE {
            if !harmonics.is_empty() {
                return Err(Error::invalid("mode `off` must have no harmonics"));
            }
        } else if !harmonics.iter().any(|h| h.magnitude_rms_amps > 0.0) {
            return Err(Error::invalid(format!(
                "mode {name}: needs at least one non-zero harmonic"
            )));
        }
        Ok(Self {
            name,
            harmonics,
            noise_rms_amps,
        })
    }

    pub fn off() -> Self {
        Self {
            name: OFF_MODE.to_string(),
            harmonics: Vec::new(),
            noise_rms_amps: 0.0,
        }
    }

    pub fn is_off(&self) -> bool {
        self.name == OFF_MODE
    }

    pub fn max_order(&self) -> u32 {
        self.harmonics.iter().map(|h| h.order).max().unwrap_or(0)
    }

    /// Sin/cos coefficients of this mode's current with every harmonic
    /// advanced by `order * phase_offset_rad`.
    pub(crate) fn coefficients(&self, phase_offset_rad: f64) -> HarmonicCoefficients {
        let mut c = HarmonicCoefficients::zeros(self.max_order());
        for h in &self.harmonics {
            let psi = h.phase_rad + f64::from(h.order) * phase_offset_rad;
            let amp = SQRT_2 * h.magnitude_rms_amps;
            let k = (h.order - 1) as usize;
            c.sin[k] = amp * psi.cos();
            c.cos[k] = amp * psi.sin();
        }
        c
    }
}

fn check_name(name: &str, what: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} name `{name}` must be non-empty ASCII letters, digits, `_` or `-`"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    class_name: String,
    is_medical: bool,
    modes: Vec<DeviceMode>,
}

impl DeviceModel {
    /// Builds a model from its non-off modes; `off` is added first if absent.
    pub fn new(
        class_name: impl Into<String>,
        is_medical: bool,
        modes: Vec<DeviceMode>,
    ) -> Result<Self> {
        let class_name = class_name.into();
        check_name(&class_name, "class")?;
        let mut all = vec![DeviceMode::off()];
        for m in modes {
            if m.is_off() {
                if !m.harmonics.is_empty() || m.noise_rms_amps != 0.0 {
                    return Err(Error::invalid(format!(
                        "class {class_name}: mode `off` must draw nothing"
                    )));
                }
                continue;
            }
            if all.iter().any(|x| x.name == m.name) {
                return Err(Error::invalid(format!(
                    "class {class_name}: duplicate mode `{}`",
                    m.name
                )));
            }
            all.push(m);
        }
        if all.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class_name}: needs at least one mode besides `off`"
            )));
        }
        Ok(Self {
            class_name,
            is_medical,
            modes: all,
        })
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn is_medical(&self) -> bool {
        self.is_medical
    }

    pub fn modes(&self) -> &[DeviceMode] {
        &self.modes
    }

    /// Modes other than `off`, in definition order.
    pub fn active_modes(&self) -> impl Iterator<Item = &DeviceMode> {
        self.modes.iter().filter(|m| !m.is_off())
    }

    pub fn mode(&self, name: &str) -> Result<&DeviceMode> {
        self.modes.iter().find(|m| m.name == name).ok_or_else(|| {
            Error::NotFound(format!("mode `{name}` of class `{}`", self.class_name))
        })
    }

    pub fn max_order(&self) -> u32 {
        self.modes.iter().map(DeviceMode::max_order).max().unwrap_or(0)
    }
}

/// Per-order sine and cosine amplitudes; index `k` is harmonic `k + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct HarmonicCoefficients {
    pub sin: Vec<f64>,
    pub cos: Vec<f64>,
}

impl HarmonicCoefficients {
    pub fn zeros(max_order: u32) -> Self {
        Self {
            sin: vec![0.0; max_order as usize],
            cos: vec![0.0; max_order as usize],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        if other.sin.len() > self.sin.len() {
            self.sin.resize(other.sin.len(), 0.0);
            self.cos.resize(other.cos.len(), 0.0);
        }
        for (k, (&s, &c)) in other.sin.iter().zip(&other.cos).enumerate() {
            self.sin[k] += s;
            self.cos[k] += c;
        }
    }

    /// Adds the harmonic sum to `out[j]` for absolute sample index
    /// `first_sample + j`, with `t = index / sample_rate_hz`.
    pub fn accumulate(&self, out: &mut [f64], first_sample: usize, f0_hz: f64, sample_rate_hz: f64) {
        let orders = self.sin.len();
        if orders == 0 {
            return;
        }
        let cycles_per_sample = f0_hz / sample_rate_hz;
        for (j, y) in out.iter_mut().enumerate() {
            let cycles = (first_sample + j) as f64 * cycles_per_sample;
            let (s1, c1) = (TAU * (cycles - cycles.floor())).sin_cos();
            let (mut s, mut c) = (s1, c1);
            let mut acc = self.sin[0] * s + self.cos[0] * c;
            for k in 1..orders {
                let next_s = s * c1 + c * s1;
                c = c * c1 - s * s1;
                s = next_s;
                acc += self.sin[k] * s + self.cos[k] * c;
            }
            *y += acc;
        }
    }
}

pub(crate) fn check_alias(max_order: u32, f0_hz: f64, sample_rate_hz: f64) -> Result<()> {
    if !(f0_hz.is_finite() && f0_hz > 0.0) {
        return Err(Error::invalid(format!("f0 must be positive, got {f0_hz}")));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if sample_rate_hz <= 2.0 * f0_hz * f64::from(max_order) {
        return Err(Error::invalid(format!(
            "harmonic {max_order} of {f0_hz} Hz aliases at {sample_rate_hz} Hz"
        )));
    }
    Ok(())
}

pub(crate) fn sample_count(duration_s: f64, sample_rate_hz: f64) -> Result<usize> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let n = (duration_s * sample_rate_hz).round();
    if n < 1.0 || n > usize::MAX as f64 {
        return Err(Error::invalid("duration yields no samples"));
    }
    Ok(n as usize)
}

/// Current drawn by one device held in `mode_name` for `duration_s`, starting
/// at `t = 0` on the voltage reference.
pub fn synth_device_current(
    model: &DeviceModel,
    mode_name: &str,
    duration_s: f64,
    sample_rate_hz: f64,
    f0_hz: f64,
    phase_offset_rad: f64,
    rng_seed: u64,
) -> Result<Waveform> {
    let mode = model.mode(mode_name)?;
    check_alias(mode.max_order(), f0_hz, sample_rate_hz)?;
    let n = sample_count(duration_s, sample_rate_hz)?;
    let mut samples = vec![0.0; n];
    mode.coefficients(phase_offset_rad)
        .accumulate(&mut samples, 0, f0_hz, sample_rate_hz);
    if mode.noise_rms_amps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for y in &mut samples {
            let z: f64 = StandardNormal.sample(&mut rng);
            *y += mode.noise_rms_amps * z;
        }
    }
    Waveform::new(samples, sample_rate_hz, 0.0)
}

/// Conditions for characterizing a device mode in isolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureContext {
    pub window_s: f64,
    pub sample_rate_hz: f64,
    pub f0_hz: f64,
    pub voltage_rms: f64,
}

impl Default for SignatureContext {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            sample_rate_hz: 10_000.0,
            f0_hz: 60.0,
            voltage_rms: 120.0,
        }
    }
}

pub(crate) fn nominal_voltage(ctx: &SignatureContext) -> Result<Waveform> {
    let n = sample_count(ctx.window_s, ctx.sample_rate_hz)?;
    let mut samples = vec![0.0; n];
    let mut c = HarmonicCoefficients::zeros(1);
    c.sin[0] = SQRT_2 * ctx.voltage_rms;
    c.accumulate(&mut samples, 0, ctx.f0_hz, ctx.sample_rate_hz);
    Waveform::new(samples, ctx.sample_rate_hz, 0.0)
}

/// Feature vector of one noiseless window of `mode_name` against a clean
/// nominal voltage. Any undefined feature is an error here.
pub fn device_signature_features(
    model: &DeviceModel,
    mode_name: &str,
    ctx: &SignatureContext,
    spec: &FeatureSpec,
) -> Result<Vec<f64>> {
    let mode = model.mode(mode_name)?;
    let noiseless = DeviceMode {
        noise_rms_amps: 0.0,
        ..mode.clone()
    };
    let quiet = DeviceModel {
        class_name: model.class_name.clone(),
        is_medical: model.is_medical,
        modes: vec![DeviceMode::off(), noiseless],
    };
    let current = synth_device_current(
        &quiet,
        mode_name,
        ctx.window_s,
        ctx.sample_rate_hz,
        ctx.f0_hz,
        0.0,
        0,
    )?;
    let voltage = nominal_voltage(ctx)?;
    features::strict_window_features(
        voltage.samples(),
        current.samples(),
        ctx.sample_rate_hz,
        spec,
    )
}
