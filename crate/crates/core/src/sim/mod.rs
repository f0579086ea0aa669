//! Feeder scenario simulation.
//!
//! A scenario is a fixed population of device instances behind one
//! single-phase feeder. Each instance follows an alternating on/off renewal
//! process with exponential durations; every on-interval picks one of the
//! class's non-off modes uniformly. The feeder current is the sum of the
//! scheduled device currents plus Gaussian noise, against a stiff supply
//! voltage. Ground truth is the number of medical devices on at each whole
//! second.

mod io;

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::devices::{self, DeviceLibrary, DeviceModel, HarmonicCoefficients};
use crate::error::{Error, Result};
use crate::signal::Waveform;

pub use io::{
    read_schedule, read_truth, read_waveform, schedule_from_text, schedule_to_text,
    truth_from_text, truth_to_text, waveform_from_bytes, waveform_to_bytes, write_schedule,
    write_truth, write_waveform, Channel, SCHEDULE_FORMAT_VERSION, WAVEFORM_FORMAT_VERSION,
    WAVEFORM_HEADER_LEN,
};

/// Harmonic order that carries the supply voltage distortion.
pub const VOLTAGE_DISTORTION_ORDER: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnOffMeans {
    pub mean_on_s: f64,
    pub mean_off_s: f64,
}

impl OnOffMeans {
    pub fn new(mean_on_s: f64, mean_off_s: f64) -> Self {
        Self {
            mean_on_s,
            mean_off_s,
        }
    }

    /// Stationary probability of being on; an infinite on-mean means always on.
    fn p_on(&self) -> f64 {
        if self.mean_on_s.is_infinite() {
            1.0
        } else if self.mean_off_s.is_infinite() {
            0.0
        } else {
            self.mean_on_s / (self.mean_on_s + self.mean_off_s)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub f0_hz: f64,
    pub voltage_rms: f64,
    /// Supply distortion, carried entirely by the fifth harmonic.
    pub voltage_thd: f64,
    pub medical_class: String,
    pub n_medical_devices: u32,
    /// `(class, count)` in instantiation order.
    pub background: Vec<(String, u32)>,
    pub schedule: BTreeMap<String, OnOffMeans>,
    pub feeder_noise_rms_amps: f64,
    /// Whether per-mode device noise is added to the feeder current.
    pub device_noise: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let schedule = [
            ("ventilator", 240.0, 240.0),
            ("resistive_heater", 180.0, 300.0),
            ("induction_motor", 120.0, 240.0),
            ("electronic_smps", 600.0, 300.0),
            ("lighting", 900.0, 600.0),
            ("fridge_compressor", 300.0, 600.0),
        ]
        .into_iter()
        .map(|(c, on, off)| (c.to_string(), OnOffMeans::new(on, off)))
        .collect();
        Self {
            duration_s: 60.0,
            sample_rate_hz: 10_000.0,
            f0_hz: 60.0,
            voltage_rms: 120.0,
            voltage_thd: 0.0,
            medical_class: "ventilator".into(),
            n_medical_devices: 3,
            background: [
                "resistive_heater",
                "induction_motor",
                "electronic_smps",
                "lighting",
                "fridge_compressor",
            ]
            .into_iter()
            .map(|c| (c.to_string(), 4))
            .collect(),
            schedule,
            feeder_noise_rms_amps: 0.05,
            device_noise: true,
            rng_seed: 1,
        }
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive and finite, got {x}")))
    }
}

fn non_negative(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite and >= 0, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self, lib: &DeviceLibrary) -> Result<()> {
        positive(self.duration_s, "duration_s")?;
        positive(self.sample_rate_hz, "sample_rate_hz")?;
        positive(self.f0_hz, "f0_hz")?;
        positive(self.voltage_rms, "voltage_rms")?;
        non_negative(self.voltage_thd, "voltage_thd")?;
        non_negative(self.feeder_noise_rms_amps, "feeder_noise_rms_amps")?;
        let med = lib.get(&self.medical_class)?;
        if !med.is_medical() {
            return Err(Error::Config(format!(
                "class `{}` is not marked medical",
                self.medical_class
            )));
        }
        for (class, _) in &self.background {
            if lib.get(class)?.is_medical() {
                return Err(Error::Config(format!(
                    "medical class `{class}` listed as background"
                )));
            }
        }
        for (class, _) in self.population_counts() {
            let means = self.schedule.get(class).ok_or_else(|| {
                Error::Config(format!("no on/off durations for class `{class}`"))
            })?;
            for (v, what) in [(means.mean_on_s, "mean on"), (means.mean_off_s, "mean off")] {
                if v.is_nan() || v <= 0.0 {
                    return Err(Error::Config(format!(
                        "{what} duration for `{class}` must be > 0, got {v}"
                    )));
                }
            }
            if means.mean_on_s.is_infinite() && means.mean_off_s.is_infinite() {
                return Err(Error::Config(format!(
                    "class `{class}`: on and off means cannot both be infinite"
                )));
            }
        }
        devices::check_alias(self.max_order(lib)?, self.f0_hz, self.sample_rate_hz)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn population_counts(&self) -> impl Iterator<Item = (&str, u32)> {
        std::iter::once((self.medical_class.as_str(), self.n_medical_devices))
            .chain(self.background.iter().map(|(c, n)| (c.as_str(), *n)))
    }

    /// `(device_id, class)` for every instance, medical devices first.
    pub fn instances(&self) -> Vec<(String, String)> {
        self.population_counts()
            .flat_map(|(class, n)| (0..n).map(move |k| (format!("{class}:{k}"), class.to_string())))
            .collect()
    }

    fn max_order(&self, lib: &DeviceLibrary) -> Result<u32> {
        let mut m = if self.voltage_thd > 0.0 {
            VOLTAGE_DISTORTION_ORDER
        } else {
            1
        };
        for (class, n) in self.population_counts() {
            if n > 0 {
                m = m.max(lib.get(class)?.max_order());
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
    pub mode: String,
}

/// On-intervals of one device instance; the device is off elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSchedule {
    pub device_id: String,
    pub class_name: String,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub duration_s: f64,
    pub devices: Vec<DeviceSchedule>,
}

impl Schedule {
    pub fn interval_count(&self) -> usize {
        self.devices.iter().map(|d| d.intervals.len()).sum()
    }

    /// Merges two schedules over the same horizon; device ids must not clash.
    pub fn merge(mut self, other: Schedule) -> Result<Schedule> {
        if self.duration_s != other.duration_s {
            return Err(Error::invalid("cannot merge schedules of different duration"));
        }
        self.devices.extend(other.devices);
        self.check_ids()?;
        Ok(self)
    }

    fn check_ids(&self) -> Result<()> {
        for (k, d) in self.devices.iter().enumerate() {
            if self.devices[..k].iter().any(|o| o.device_id == d.device_id) {
                return Err(Error::invalid(format!("duplicate device id `{}`", d.device_id)));
            }
        }
        Ok(())
    }

    pub fn validate(&self, lib: &DeviceLibrary) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("schedule duration must be positive"));
        }
        self.check_ids()?;
        for d in &self.devices {
            let model = lib.get(&d.class_name)?;
            let mut last_end = 0.0;
            for iv in &d.intervals {
                let ok = iv.start_s >= last_end && iv.start_s < iv.end_s && iv.end_s <= self.duration_s;
                if !ok {
                    return Err(Error::invalid(format!(
                        "device `{}`: interval [{}, {}) overlaps, is empty, or leaves [0, {}]",
                        d.device_id, iv.start_s, iv.end_s, self.duration_s
                    )));
                }
                if model.mode(&iv.mode)?.is_off() {
                    return Err(Error::invalid(format!(
                        "device `{}`: scheduled interval in mode `off`",
                        d.device_id
                    )));
                }
                last_end = iv.end_s;
            }
        }
        Ok(())
    }
}

fn device_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn renewal_intervals(
    model: &DeviceModel,
    means: OnOffMeans,
    duration_s: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Interval> {
    let modes: Vec<&str> = model.active_modes().map(|m| m.name.as_str()).collect();
    let mut on = rng.random::<f64>() < means.p_on();
    let mut t = 0.0;
    let mut out = Vec::new();
    while t < duration_s {
        let mean = if on { means.mean_on_s } else { means.mean_off_s };
        let e: f64 = Exp1.sample(rng);
        let end = (t + e * mean).min(duration_s);
        if on && end > t {
            let mode = modes[rng.random_range(0..modes.len())];
            out.push(Interval {
                start_s: t,
                end_s: end,
                mode: mode.to_string(),
            });
        }
        t = end;
        on = !on;
    }
    out
}

/// Draws an on/off schedule for every device instance. Instance `k` uses
/// its own random stream, so adding devices leaves earlier ones unchanged.
pub fn generate_schedule(cfg: &ScenarioConfig, lib: &DeviceLibrary) -> Result<Schedule> {
    cfg.validate(lib)?;
    let devices = cfg
        .instances()
        .into_iter()
        .enumerate()
        .map(|(k, (device_id, class_name))| {
            let model = lib.get(&class_name)?;
            let means = cfg.schedule[&class_name];
            let mut rng = device_rng(cfg.rng_seed, k as u64 + 1);
            let intervals = renewal_intervals(model, means, cfg.duration_s, &mut rng);
            Ok(DeviceSchedule {
                device_id,
                class_name,
                intervals,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Schedule {
        duration_s: cfg.duration_s,
        devices,
    })
}

/// First sample index at or after `t_s`, clamped to `n`.
fn sample_at(t_s: f64, sample_rate_hz: f64, n: usize) -> usize {
    let k = (t_s * sample_rate_hz).ceil();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n)
    }
}

pub fn synthesize_voltage(cfg: &ScenarioConfig) -> Result<Waveform> {
    let n = devices::sample_count(cfg.duration_s, cfg.sample_rate_hz)?;
    let mut coeffs = HarmonicCoefficients::zeros(if cfg.voltage_thd > 0.0 {
        VOLTAGE_DISTORTION_ORDER
    } else {
        1
    });
    coeffs.sin[0] = SQRT_2 * cfg.voltage_rms;
    if cfg.voltage_thd > 0.0 {
        coeffs.sin[(VOLTAGE_DISTORTION_ORDER - 1) as usize] =
            SQRT_2 * cfg.voltage_rms * cfg.voltage_thd;
    }
    let mut samples = vec![0.0; n];
    coeffs.accumulate(&mut samples, 0, cfg.f0_hz, cfg.sample_rate_hz);
    Waveform::new(samples, cfg.sample_rate_hz, 0.0)
}

/// Feeder voltage and current for `schedule`.
///
/// Between schedule boundaries the set of active device modes is fixed, so
/// their harmonic coefficients are summed in device order and the sum is
/// evaluated once per sample. Noise is one Gaussian stream whose variance is
/// the feeder noise plus the noise of every active mode.
pub fn synthesize_feeder(
    cfg: &ScenarioConfig,
    lib: &DeviceLibrary,
    schedule: &Schedule,
) -> Result<(Waveform, Waveform)> {
    schedule.validate(lib)?;
    if schedule.duration_s != cfg.duration_s {
        return Err(Error::invalid(format!(
            "schedule covers {} s, scenario is {} s",
            schedule.duration_s, cfg.duration_s
        )));
    }
    let fs = cfg.sample_rate_hz;
    let mut max_order = 1;
    for d in &schedule.devices {
        max_order = max_order.max(lib.get(&d.class_name)?.max_order());
    }
    devices::check_alias(max_order, cfg.f0_hz, fs)?;
    let voltage = synthesize_voltage(cfg)?;
    let n = voltage.len();

    // (first sample, end sample, coefficients, noise variance) per interval.
    let mut spans = Vec::with_capacity(schedule.interval_count());
    for d in &schedule.devices {
        let model = lib.get(&d.class_name)?;
        for iv in &d.intervals {
            let mode = model.mode(&iv.mode)?;
            let a = sample_at(iv.start_s, fs, n);
            let b = sample_at(iv.end_s, fs, n);
            if a < b {
                let var = if cfg.device_noise {
                    mode.noise_rms_amps.powi(2)
                } else {
                    0.0
                };
                spans.push((a, b, mode.coefficients(0.0), var));
            }
        }
    }
    let mut bounds: Vec<usize> = spans.iter().flat_map(|s| [s.0, s.1]).collect();
    bounds.push(0);
    bounds.push(n);
    bounds.sort_unstable();
    bounds.dedup();

    let feeder_var = cfg.feeder_noise_rms_amps.powi(2);
    let noisy = feeder_var > 0.0 || spans.iter().any(|s| s.3 > 0.0);
    let mut noise_rng = device_rng(cfg.rng_seed, 0);
    let mut current = vec![0.0; n];
    for seg in bounds.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let mut coeffs = HarmonicCoefficients::default();
        let mut var = feeder_var;
        for s in spans.iter().filter(|s| s.0 <= a && b <= s.1) {
            coeffs.add_assign(&s.2);
            var += s.3;
        }
        let out = &mut current[a..b];
        coeffs.accumulate(out, a, cfg.f0_hz, fs);
        if noisy {
            let sigma = var.sqrt();
            for y in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *y += sigma * z;
            }
        }
    }
    Ok((voltage, Waveform::new(current, fs, 0.0)?))
}

/// Medical-device count at whole seconds `0, 1, ...` (1 Hz).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthSeries {
    counts: Vec<u32>,
}

impl GroundTruthSeries {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn timestamps_s(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|k| k as f64)
    }

    /// Largest count among timestamps in `[start_s, start_s + window_s)`.
    pub fn max_count_in(&self, start_s: f64, window_s: f64) -> Result<u32> {
        let end = start_s + window_s;
        if !(start_s >= 0.0 && window_s > 0.0) || end > self.counts.len() as f64 + 1e-9 {
            return Err(Error::invalid(format!(
                "window [{start_s}, {end}) is outside the {} s ground truth",
                self.counts.len()
            )));
        }
        let a = start_s.ceil() as usize;
        let b = (end.ceil() as usize).min(self.counts.len());
        self.counts[a.min(b)..b]
            .iter()
            .copied()
            .max()
            .ok_or_else(|| Error::invalid(format!("window at {start_s} s holds no 1 Hz timestamp")))
    }
}

pub fn ground_truth_counts(
    schedule: &Schedule,
    cfg: &ScenarioConfig,
    lib: &DeviceLibrary,
) -> Result<GroundTruthSeries> {
    let n = cfg.duration_s.ceil() as usize;
    let mut counts = vec![0u32; n];
    for d in &schedule.devices {
        if !lib.get(&d.class_name)?.is_medical() {
            continue;
        }
        for iv in &d.intervals {
            let a = (iv.start_s.ceil() as usize).min(n);
            let b = (iv.end_s.ceil() as usize).min(n);
            for c in &mut counts[a..b] {
                *c += 1;
            }
        }
    }
    Ok(GroundTruthSeries::new(counts))
}

/// Per-window target: the maximum 1 Hz count inside each window.
pub fn window_targets(truth: &GroundTruthSeries, window_s: f64, stride_s: f64) -> Result<Vec<u32>> {
    if !(window_s >= 1.0 && window_s.is_finite()) {
        return Err(Error::invalid(format!("window must be at least 1 s, got {window_s}")));
    }
    if !(stride_s > 0.0 && stride_s.is_finite()) {
        return Err(Error::invalid(format!("stride must be positive, got {stride_s}")));
    }
    let len = truth.len() as f64;
    if window_s > len {
        return Err(Error::invalid(format!(
            "window of {window_s} s is longer than the {len} s series"
        )));
    }
    let n = ((len - window_s) / stride_s + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| truth.max_count_in(k as f64 * stride_s, window_s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{synth_device_current, DeviceMode, HarmonicSpec};
    use proptest::prelude::*;

    fn quiet(mut cfg: ScenarioConfig) -> ScenarioConfig {
        cfg.feeder_noise_rms_amps = 0.0;
        cfg.device_noise = false;
        cfg
    }

    #[test]
    fn empty_population_gives_empty_schedule_and_zero_current() {
        let lib = DeviceLibrary::builtin();
        let mut cfg = quiet(ScenarioConfig::default());
        cfg.n_medical_devices = 0;
        cfg.background.clear();
        let s = generate_schedule(&cfg, &lib).unwrap();
        assert!(s.devices.is_empty());
        let (v, i) = synthesize_feeder(&cfg, &lib, &s).unwrap();
        assert_eq!(v.len(), 600_000);
        assert!(i.samples().iter().all(|&x| x == 0.0));
        let truth = ground_truth_counts(&s, &cfg, &lib).unwrap();
        assert_eq!(truth.len(), 60);
        assert!(truth.counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn schedule_is_deterministic_and_valid() {
        let lib = DeviceLibrary::builtin();
        let cfg = ScenarioConfig {
            duration_s: 3600.0,
            ..ScenarioConfig::default()
        };
        let a = generate_schedule(&cfg, &lib).unwrap();
        let b = generate_schedule(&cfg, &lib).unwrap();
        assert_eq!(a, b);
        a.validate(&lib).unwrap();
        assert_eq!(a.devices.len(), 23);
        let c = generate_schedule(&ScenarioConfig { rng_seed: 2, ..cfg.clone() }, &lib).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exponential_on_durations_have_configured_mean() {
        let lib = DeviceLibrary::builtin();
        let mut cfg = ScenarioConfig {
            duration_s: 2.0e6,
            n_medical_devices: 3,
            background: vec![],
            ..ScenarioConfig::default()
        };
        cfg.schedule.insert("ventilator".into(), OnOffMeans::new(300.0, 300.0));
        let s = generate_schedule(&cfg, &lib).unwrap();
        // Drop intervals cut off by the scenario end.
        let lens: Vec<f64> = s
            .devices
            .iter()
            .flat_map(|d| d.intervals.iter())
            .filter(|iv| iv.end_s < cfg.duration_s)
            .map(|iv| iv.end_s - iv.start_s)
            .collect();
        assert!(lens.len() >= 10_000, "{}", lens.len());
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        assert!((mean - 300.0).abs() < 15.0, "{mean}");
        // every mode is used
        for mode in ["standby", "run", "humidifier-run"] {
            assert!(s.devices[0].intervals.iter().any(|iv| iv.mode == mode));
        }
    }

    #[test]
    fn always_on_medical_devices() {
        let lib = DeviceLibrary::builtin();
        let mut cfg = ScenarioConfig::default();
        cfg.schedule
            .insert("ventilator".into(), OnOffMeans::new(f64::INFINITY, 10.0));
        let s = generate_schedule(&cfg, &lib).unwrap();
        let truth = ground_truth_counts(&s, &cfg, &lib).unwrap();
        assert!(truth.counts().iter().all(|&c| c == 3));
    }

    #[test]
    fn interval_membership_truth() {
        let lib = DeviceLibrary::builtin();
        let cfg = ScenarioConfig {
            duration_s: 30.0,
            ..ScenarioConfig::default()
        };
        let s = Schedule {
            duration_s: 30.0,
            devices: vec![DeviceSchedule {
                device_id: "ventilator:0".into(),
                class_name: "ventilator".into(),
                intervals: vec![Interval {
                    start_s: 10.0,
                    end_s: 20.0,
                    mode: "run".into(),
                }],
            }],
        };
        let truth = ground_truth_counts(&s, &cfg, &lib).unwrap();
        for (t, &c) in truth.counts().iter().enumerate() {
            let oracle = u32::from((10..20).contains(&t));
            assert_eq!(c, oracle, "t = {t}");
        }
    }

    #[test]
    fn window_target_examples() {
        let t = GroundTruthSeries::new(vec![2; 20]);
        assert_eq!(window_targets(&t, 5.0, 5.0).unwrap(), vec![2; 4]);
        let t = GroundTruthSeries::new(vec![0; 20]);
        assert_eq!(window_targets(&t, 5.0, 2.0).unwrap(), vec![0; 8]);
        // step 1 -> 2 at t = 7: window [5, 10) sees both
        let counts: Vec<u32> = (0..20).map(|t| if t < 7 { 1 } else { 2 }).collect();
        let t = GroundTruthSeries::new(counts.clone());
        let y = window_targets(&t, 5.0, 5.0).unwrap();
        let oracle: Vec<u32> = (0..4)
            .map(|k| *counts[k * 5..k * 5 + 5].iter().max().unwrap())
            .collect();
        assert_eq!(y, oracle);
        assert_eq!(y, [1, 2, 2, 2]);
        assert!(window_targets(&t, 21.0, 1.0).is_err());
        assert!(window_targets(&t, 0.5, 1.0).is_err());
    }

    #[test]
    fn single_device_current_matches_device_synthesis() {
        let lib = DeviceLibrary::builtin();
        let cfg = quiet(ScenarioConfig {
            duration_s: 2.0,
            ..ScenarioConfig::default()
        });
        let s = Schedule {
            duration_s: 2.0,
            devices: vec![DeviceSchedule {
                device_id: "h".into(),
                class_name: "resistive_heater".into(),
                intervals: vec![Interval {
                    start_s: 0.0,
                    end_s: 2.0,
                    mode: "high".into(),
                }],
            }],
        };
        let (_, i) = synthesize_feeder(&cfg, &lib, &s).unwrap();
        let heater = lib.get("resistive_heater").unwrap();
        let quiet_heater = DeviceModel::new(
            "h",
            false,
            vec![DeviceMode::new("high", vec![HarmonicSpec::new(1, 12.5, 0.0).unwrap()], 0.0).unwrap()],
        )
        .unwrap();
        assert_eq!(heater.mode("high").unwrap().harmonics, quiet_heater.mode("high").unwrap().harmonics);
        let d = synth_device_current(&quiet_heater, "high", 2.0, 10_000.0, 60.0, 0.0, 0).unwrap();
        let worst = i.samples().iter().zip(d.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn voltage_distortion_on_fifth() {
        let cfg = ScenarioConfig {
            duration_s: 1.0,
            voltage_thd: 0.03,
            ..ScenarioConfig::default()
        };
        let v = synthesize_voltage(&cfg).unwrap();
        let t = crate::signal::thd(v.samples(), 60.0, 10_000.0, 7).unwrap();
        assert!((t - 0.03).abs() < 1e-6);
        let rms = crate::signal::rms(v.samples()).unwrap();
        assert!((rms - 120.0 * (1.0f64 + 0.03 * 0.03).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn invalid_configs() {
        let lib = DeviceLibrary::builtin();
        let mut cfg = ScenarioConfig::default();
        cfg.background.push(("toaster".into(), 1));
        assert!(matches!(generate_schedule(&cfg, &lib), Err(Error::NotFound(_))));
        let mut cfg = ScenarioConfig::default();
        cfg.schedule.remove("lighting");
        assert!(matches!(generate_schedule(&cfg, &lib), Err(Error::Config(_))));
        let cfg = ScenarioConfig {
            sample_rate_hz: 600.0,
            ..ScenarioConfig::default()
        };
        assert!(generate_schedule(&cfg, &lib).is_err());
        let cfg = ScenarioConfig {
            duration_s: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(generate_schedule(&cfg, &lib).is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.background.push(("ventilator".into(), 1));
        assert!(generate_schedule(&cfg, &lib).is_err());
    }

    #[test]
    fn inconsistent_schedule_rejected() {
        let lib = DeviceLibrary::builtin();
        let cfg = quiet(ScenarioConfig::default());
        let bad = Schedule {
            duration_s: 60.0,
            devices: vec![DeviceSchedule {
                device_id: "x".into(),
                class_name: "lighting".into(),
                intervals: vec![
                    Interval { start_s: 1.0, end_s: 5.0, mode: "on".into() },
                    Interval { start_s: 4.0, end_s: 6.0, mode: "on".into() },
                ],
            }],
        };
        assert!(matches!(synthesize_feeder(&cfg, &lib, &bad), Err(Error::InvalidInput(_))));
        let wrong_len = Schedule { duration_s: 30.0, devices: vec![] };
        assert!(synthesize_feeder(&cfg, &lib, &wrong_len).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn superposition_of_disjoint_populations(seed in any::<u64>()) {
            let lib = DeviceLibrary::builtin();
            let base = quiet(ScenarioConfig { duration_s: 6.0, rng_seed: seed, ..ScenarioConfig::default() });
            let mut a_cfg = base.clone();
            a_cfg.background = vec![("resistive_heater".into(), 2), ("electronic_smps".into(), 1)];
            let b_cfg = ScenarioConfig {
                n_medical_devices: 0,
                background: vec![("induction_motor".into(), 2), ("lighting".into(), 3)],
                rng_seed: seed ^ 0x5555,
                ..base.clone()
            };
            let sa = generate_schedule(&a_cfg, &lib).unwrap();
            let sb = generate_schedule(&b_cfg, &lib).unwrap();
            let (_, ia) = synthesize_feeder(&a_cfg, &lib, &sa).unwrap();
            let (_, ib) = synthesize_feeder(&b_cfg, &lib, &sb).unwrap();
            let merged = sa.merge(sb).unwrap();
            let (_, im) = synthesize_feeder(&base, &lib, &merged).unwrap();
            for ((x, y), z) in ia.samples().iter().zip(ib.samples()).zip(im.samples()) {
                prop_assert!((x + y - z).abs() < 1e-9);
            }
        }

        #[test]
        fn targets_bounded_by_population(seed in any::<u64>(), n_med in 0u32..5) {
            let lib = DeviceLibrary::builtin();
            let mut cfg = ScenarioConfig { duration_s: 900.0, n_medical_devices: n_med, rng_seed: seed, ..ScenarioConfig::default() };
            cfg.schedule.insert("ventilator".into(), OnOffMeans::new(60.0, 60.0));
            let s = generate_schedule(&cfg, &lib).unwrap();
            let truth = ground_truth_counts(&s, &cfg, &lib).unwrap();
            for y in window_targets(&truth, 5.0, 3.0).unwrap() {
                prop_assert!(y <= n_med);
            }
        }
    }
}
