//! Windowed feature extraction: aligned feeder voltage and current become a
//! rectangular table of per-window feature vectors with device-count targets.

pub(crate) mod io;
mod norm;
mod rank;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{self, Phasor, Waveform};
use crate::sim::GroundTruthSeries;

pub use io::DATASET_FORMAT_VERSION;
pub use norm::{fit_normalization, NormStats};
pub use rank::{fisher_scores, rank_features};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureId {
    IRms,
    IFormFactor,
    ICrestFactor,
    PhaseShift,
    ActivePower,
    ReactivePower,
    Thd,
    /// RMS magnitude of one current harmonic, order 2..=7.
    Harmonic(u32),
}

impl FeatureId {
    pub const ALL: [FeatureId; 13] = [
        FeatureId::IRms,
        FeatureId::IFormFactor,
        FeatureId::ICrestFactor,
        FeatureId::PhaseShift,
        FeatureId::ActivePower,
        FeatureId::ReactivePower,
        FeatureId::Thd,
        FeatureId::Harmonic(2),
        FeatureId::Harmonic(3),
        FeatureId::Harmonic(4),
        FeatureId::Harmonic(5),
        FeatureId::Harmonic(6),
        FeatureId::Harmonic(7),
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureId::IRms => "i_rms",
            FeatureId::IFormFactor => "i_form_factor",
            FeatureId::ICrestFactor => "i_crest_factor",
            FeatureId::PhaseShift => "phase_shift",
            FeatureId::ActivePower => "active_power",
            FeatureId::ReactivePower => "reactive_power",
            FeatureId::Thd => "thd",
            FeatureId::Harmonic(2) => "h2",
            FeatureId::Harmonic(3) => "h3",
            FeatureId::Harmonic(4) => "h4",
            FeatureId::Harmonic(5) => "h5",
            FeatureId::Harmonic(6) => "h6",
            FeatureId::Harmonic(7) => "h7",
            FeatureId::Harmonic(_) => "h?",
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureId::ALL
            .iter()
            .find(|id| id.as_str() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown feature `{s}`")))
    }
}

/// Ordered feature list plus the parameters the features depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    ids: Vec<FeatureId>,
    f0_hz: f64,
    max_harmonic: u32,
}

impl FeatureSpec {
    pub fn new(ids: Vec<FeatureId>, f0_hz: f64, max_harmonic: u32) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("feature list is empty"));
        }
        for (k, id) in ids.iter().enumerate() {
            if !FeatureId::ALL.contains(id) {
                return Err(Error::invalid(format!("unsupported feature {id:?}")));
            }
            if ids[..k].contains(id) {
                return Err(Error::invalid(format!("feature `{id}` listed twice")));
            }
        }
        if !(f0_hz.is_finite() && f0_hz > 0.0) {
            return Err(Error::invalid(format!("f0 must be positive, got {f0_hz}")));
        }
        if max_harmonic < 2 {
            return Err(Error::invalid("max_harmonic must be at least 2"));
        }
        Ok(Self {
            ids,
            f0_hz,
            max_harmonic,
        })
    }

    /// Every supported feature, in canonical order.
    pub fn full(f0_hz: f64, max_harmonic: u32) -> Result<Self> {
        Self::new(FeatureId::ALL.to_vec(), f0_hz, max_harmonic)
    }

    pub fn ids(&self) -> &[FeatureId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn f0_hz(&self) -> f64 {
        self.f0_hz
    }

    pub fn max_harmonic(&self) -> u32 {
        self.max_harmonic
    }

    /// Highest harmonic any listed feature needs.
    fn harmonics_needed(&self) -> u32 {
        self.ids
            .iter()
            .map(|id| match id {
                FeatureId::Thd => self.max_harmonic,
                FeatureId::Harmonic(h) => *h,
                _ => 1,
            })
            .max()
            .unwrap_or(1)
    }

    fn needs_voltage(&self) -> bool {
        self.ids.iter().any(|id| {
            matches!(
                id,
                FeatureId::PhaseShift | FeatureId::ActivePower | FeatureId::ReactivePower
            )
        })
    }

    /// Same spec restricted to `keep`, in the order given.
    pub fn select(&self, keep: &[FeatureId]) -> Result<Self> {
        if let Some(missing) = keep.iter().find(|id| !self.ids.contains(id)) {
            return Err(Error::invalid(format!("feature `{missing}` not in spec")));
        }
        Self::new(keep.to_vec(), self.f0_hz, self.max_harmonic)
    }
}

/// Evaluates `spec` on one aligned window pair. `None` marks an undefined
/// feature (zero fundamental, all-zero window).
pub fn window_features(
    v: &[f64],
    i: &[f64],
    sample_rate_hz: f64,
    spec: &FeatureSpec,
) -> Result<Vec<Option<f64>>> {
    if v.len() != i.len() {
        return Err(Error::invalid(format!(
            "voltage and current windows differ in length ({} vs {})",
            v.len(),
            i.len()
        )));
    }
    let f0 = spec.f0_hz;
    let i_rms = signal::rms(i)?;
    let i_phasors = signal::harmonic_phasors(i, f0, sample_rate_hz, spec.harmonics_needed())?;
    let v_side: Option<(Phasor, f64)> = if spec.needs_voltage() {
        Some((
            signal::fundamental_phasor(v, f0, sample_rate_hz)?,
            signal::rms(v)?,
        ))
    } else {
        None
    };
    let shift = || {
        let (vf, v_rms) = v_side.as_ref().expect("voltage computed when needed");
        signal::phase_shift_from(vf, *v_rms, &i_phasors[0], i_rms).ok()
    };
    let defined = |r: Result<f64>| match r {
        Ok(x) => Ok(Some(x)),
        Err(Error::UndefinedFeature(_)) => Ok(None),
        Err(e) => Err(e),
    };

    spec.ids
        .iter()
        .map(|id| match id {
            FeatureId::IRms => Ok(Some(i_rms)),
            FeatureId::IFormFactor => defined(signal::form_factor(i)),
            FeatureId::ICrestFactor => defined(signal::crest_factor(i)),
            FeatureId::PhaseShift => Ok(shift()),
            FeatureId::ActivePower => Ok(shift().map(|_| signal::mean_product(v, i))),
            FeatureId::ReactivePower => Ok(shift().map(|phi| {
                let (vf, _) = v_side.as_ref().expect("voltage computed when needed");
                vf.magnitude_rms * i_phasors[0].magnitude_rms * phi.sin()
            })),
            FeatureId::Thd => defined(signal::thd_from(
                &i_phasors[..spec.max_harmonic as usize],
                i_rms,
            )),
            FeatureId::Harmonic(h) => Ok(Some(i_phasors[(*h - 1) as usize].magnitude_rms)),
        })
        .collect()
}

/// Like [`window_features`], but an undefined feature is an error.
pub fn strict_window_features(
    v: &[f64],
    i: &[f64],
    sample_rate_hz: f64,
    spec: &FeatureSpec,
) -> Result<Vec<f64>> {
    window_features(v, i, sample_rate_hz, spec)?
        .into_iter()
        .zip(&spec.ids)
        .map(|(x, id)| x.ok_or(Error::UndefinedFeature(id.as_str())))
        .collect()
}

/// Feature table: one row per window, in window order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub spec: FeatureSpec,
    pub window_s: f64,
    pub stride_s: f64,
    /// Provenance of the upstream configuration; empty when unknown.
    pub fingerprint: String,
    pub t_start_s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u32>,
    pub valid: Vec<bool>,
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows `range`, everything else shared.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            spec: self.spec.clone(),
            window_s: self.window_s,
            stride_s: self.stride_s,
            fingerprint: self.fingerprint.clone(),
            t_start_s: self.t_start_s[range.clone()].to_vec(),
            x: self.x[range.clone()].to_vec(),
            y: self.y[range.clone()].to_vec(),
            valid: self.valid[range].to_vec(),
        }
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.len() != n || self.valid.len() != n || self.t_start_s.len() != n {
            return Err(Error::invalid("dataset columns differ in length"));
        }
        if let Some(k) = self.x.iter().position(|r| r.len() != self.spec.len()) {
            return Err(Error::invalid(format!(
                "row {k} has {} values, spec has {}",
                self.x[k].len(),
                self.spec.len()
            )));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset holds non-finite values"));
        }
        Ok(())
    }
}

pub(crate) fn window_samples(seconds: f64, sample_rate_hz: f64, what: &str) -> Result<usize> {
    let n = (seconds * sample_rate_hz).round();
    if !(seconds.is_finite() && seconds > 0.0) || n < 1.0 {
        return Err(Error::invalid(format!("{what} must be positive, got {seconds}")));
    }
    Ok(n as usize)
}

/// Slides a `window_s` window by `stride_s` over aligned voltage and current
/// and evaluates `spec` on each position. Targets come from `truth`.
pub fn featurize(
    voltage: &Waveform,
    current: &Waveform,
    truth: &GroundTruthSeries,
    window_s: f64,
    stride_s: f64,
    spec: &FeatureSpec,
) -> Result<FeatureDataset> {
    if voltage.len() != current.len()
        || voltage.sample_rate_hz() != current.sample_rate_hz()
        || voltage.start_time_s() != current.start_time_s()
    {
        return Err(Error::invalid(
            "voltage and current are not aligned (length, rate or start differ)",
        ));
    }
    let fs = current.sample_rate_hz();
    let win = window_samples(window_s, fs, "window")?;
    let stride = window_samples(stride_s, fs, "stride")?;
    if win > current.len() {
        return Err(Error::invalid(format!(
            "window of {window_s} s exceeds trace of {} s",
            current.duration_s()
        )));
    }
    let n_windows = (current.len() - win) / stride + 1;
    let t0 = current.start_time_s();
    let starts: Vec<f64> = (0..n_windows)
        .map(|k| t0 + (k * stride) as f64 / fs)
        .collect();
    let y = starts
        .iter()
        .map(|&s| truth.max_count_in(s, window_s))
        .collect::<Result<Vec<u32>>>()?;

    let rows = (0..n_windows)
        .into_par_iter()
        .map(|k| {
            let range = k * stride..k * stride + win;
            let f = window_features(
                &voltage.samples()[range.clone()],
                &current.samples()[range],
                fs,
                spec,
            )?;
            let valid = f.iter().all(Option::is_some);
            Ok((f.into_iter().map(|x| x.unwrap_or(0.0)).collect(), valid))
        })
        .collect::<Result<Vec<(Vec<f64>, bool)>>>()?;
    let (x, valid) = rows.into_iter().unzip();

    Ok(FeatureDataset {
        spec: spec.clone(),
        window_s,
        stride_s,
        fingerprint: String::new(),
        t_start_s: starts,
        x,
        y,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::DeviceLibrary;
    use crate::sim::{self, ScenarioConfig};

    #[test]
    fn ids_round_trip_through_text() {
        for id in FeatureId::ALL {
            assert_eq!(id.as_str().parse::<FeatureId>().unwrap(), id);
        }
        assert!("h8".parse::<FeatureId>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(FeatureSpec::new(vec![], 60.0, 7).is_err());
        assert!(FeatureSpec::new(vec![FeatureId::IRms, FeatureId::IRms], 60.0, 7).is_err());
        assert!(FeatureSpec::new(vec![FeatureId::Harmonic(9)], 60.0, 7).is_err());
        assert!(FeatureSpec::new(vec![FeatureId::Thd], 60.0, 1).is_err());
        assert_eq!(FeatureSpec::full(60.0, 7).unwrap().len(), 13);
    }

    fn scenario(duration_s: f64, n_med: u32, noise: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.duration_s = duration_s;
        c.n_medical_devices = n_med;
        c.feeder_noise_rms_amps = noise;
        c
    }

    #[test]
    fn row_count_and_zero_device_trace() {
        let lib = DeviceLibrary::builtin();
        let mut cfg = scenario(60.0, 0, 0.0);
        cfg.background.clear();
        let sched = sim::generate_schedule(&cfg, &lib).unwrap();
        let (v, i) = sim::synthesize_feeder(&cfg, &lib, &sched).unwrap();
        let truth = sim::ground_truth_counts(&sched, &cfg, &lib).unwrap();
        let spec = FeatureSpec::full(60.0, 7).unwrap();
        let ds = featurize(&v, &i, &truth, 5.0, 5.0, &spec).unwrap();
        assert_eq!(ds.len(), 12);
        assert!(ds.x.iter().all(|r| r[0].abs() < 1e-12));
        assert!(ds.y.iter().all(|&y| y == 0));
        // zero current: ratio and phase features undefined
        assert!(ds.valid.iter().all(|&v| !v));
        ds.check_shape().unwrap();
    }

    #[test]
    fn rows_match_direct_primitive_calls() {
        let lib = DeviceLibrary::builtin();
        let cfg = scenario(20.0, 3, 0.05);
        let sched = sim::generate_schedule(&cfg, &lib).unwrap();
        let (v, i) = sim::synthesize_feeder(&cfg, &lib, &sched).unwrap();
        let truth = sim::ground_truth_counts(&sched, &cfg, &lib).unwrap();
        let spec = FeatureSpec::full(60.0, 7).unwrap();
        let ds = featurize(&v, &i, &truth, 5.0, 2.5, &spec).unwrap();
        assert_eq!(ds.len(), 7);
        let fs = cfg.sample_rate_hz;
        for (k, row) in ds.x.iter().enumerate() {
            let a = (ds.t_start_s[k] * fs).round() as usize;
            let vw = &v.samples()[a..a + 50_000];
            let iw = &i.samples()[a..a + 50_000];
            let pq = signal::active_reactive_power(vw, iw, 60.0, fs).unwrap();
            let hp = signal::harmonic_phasors(iw, 60.0, fs, 7).unwrap();
            let expected = [
                signal::rms(iw).unwrap(),
                signal::form_factor(iw).unwrap(),
                signal::crest_factor(iw).unwrap(),
                signal::phase_shift(vw, iw, 60.0, fs).unwrap(),
                pq.active_w,
                pq.reactive_var,
                signal::thd(iw, 60.0, fs, 7).unwrap(),
                hp[1].magnitude_rms,
                hp[2].magnitude_rms,
                hp[3].magnitude_rms,
                hp[4].magnitude_rms,
                hp[5].magnitude_rms,
                hp[6].magnitude_rms,
            ];
            for (got, want) in row.iter().zip(expected) {
                assert!((got - want).abs() <= 1e-12, "window {k}: {got} vs {want}");
            }
            assert!(ds.valid[k]);
            assert!(ds.t_start_s[k] + 5.0 <= 20.0);
        }
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let v = Waveform::new(vec![0.0; 1000], 1000.0, 0.0).unwrap();
        let i = Waveform::new(vec![0.0; 999], 1000.0, 0.0).unwrap();
        let truth = GroundTruthSeries::new(vec![0]);
        let spec = FeatureSpec::full(60.0, 7).unwrap();
        assert!(matches!(
            featurize(&v, &i, &truth, 0.5, 0.5, &spec),
            Err(Error::InvalidInput(_))
        ));
        let i = Waveform::new(vec![0.0; 1000], 1000.0, 0.0).unwrap();
        assert!(featurize(&v, &i, &truth, 2.0, 0.5, &spec).is_err());
    }

    #[test]
    fn overlapping_windows_are_order_independent() {
        let lib = DeviceLibrary::builtin();
        let cfg = scenario(12.0, 2, 0.02);
        let sched = sim::generate_schedule(&cfg, &lib).unwrap();
        let (v, i) = sim::synthesize_feeder(&cfg, &lib, &sched).unwrap();
        let truth = sim::ground_truth_counts(&sched, &cfg, &lib).unwrap();
        let spec = FeatureSpec::full(60.0, 7).unwrap();
        let a = featurize(&v, &i, &truth, 4.0, 1.0, &spec).unwrap();
        let b = featurize(&v, &i, &truth, 4.0, 1.0, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
        // single window evaluated in isolation equals its row
        let fs = cfg.sample_rate_hz;
        let k = 5;
        let off = (k as f64 * fs) as usize;
        let alone = window_features(
            &v.samples()[off..off + 40_000],
            &i.samples()[off..off + 40_000],
            fs,
            &spec,
        )
        .unwrap();
        let alone: Vec<f64> = alone.into_iter().map(|x| x.unwrap_or(0.0)).collect();
        assert_eq!(alone, a.x[k]);
    }
}
