//! On-disk formats for simulator output.
//!
//! Waveforms are binary: a 64-byte little-endian header
//!
//! | bytes  | field                               |
//! |--------|-------------------------------------|
//! | 0..4   | magic `FNWV`                        |
//! | 4..8   | format version, `u32`               |
//! | 8..16  | sample rate in Hz, `f64`            |
//! | 16..24 | start time in seconds, `f64`        |
//! | 24..32 | sample count, `u64`                 |
//! | 32..36 | channel tag, `VOLT` or `CURR`       |
//! | 36..64 | zero                                |
//!
//! followed by `count` little-endian `f64` samples.
//!
//! Schedules and ground truth are line-oriented text with `# key = value`
//! metadata lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::io::f17;
use crate::signal::Waveform;

use super::{DeviceSchedule, GroundTruthSeries, Interval, Schedule};

pub const WAVEFORM_FORMAT_VERSION: u32 = 1;
pub const WAVEFORM_HEADER_LEN: usize = 64;
pub const SCHEDULE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FNWV";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Voltage,
    Current,
}

impl Channel {
    fn tag(self) -> &'static [u8; 4] {
        match self {
            Channel::Voltage => b"VOLT",
            Channel::Current => b"CURR",
        }
    }
}

pub fn waveform_to_bytes(w: &Waveform, channel: Channel) -> Vec<u8> {
    let mut out = Vec::with_capacity(WAVEFORM_HEADER_LEN + 8 * w.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&WAVEFORM_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&w.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&w.start_time_s().to_le_bytes());
    out.extend_from_slice(&(w.len() as u64).to_le_bytes());
    out.extend_from_slice(channel.tag());
    out.resize(WAVEFORM_HEADER_LEN, 0);
    for x in w.samples() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

pub fn waveform_from_bytes(bytes: &[u8], path: &Path) -> Result<(Waveform, Channel)> {
    if bytes.len() < WAVEFORM_HEADER_LEN {
        return Err(Error::format(path, "file shorter than the waveform header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(path, "not a waveform file (bad magic)"));
    }
    let version = le_u32(&bytes[4..8]);
    if version != WAVEFORM_FORMAT_VERSION {
        return Err(Error::Contract(format!(
            "{}: waveform format version {version}, expected {WAVEFORM_FORMAT_VERSION}",
            path.display()
        )));
    }
    let fs = le_f64(&bytes[8..16]);
    let t0 = le_f64(&bytes[16..24]);
    let count = le_u64(&bytes[24..32]);
    let channel = match &bytes[32..36] {
        b"VOLT" => Channel::Voltage,
        b"CURR" => Channel::Current,
        _ => return Err(Error::format(path, "unknown channel tag")),
    };
    let body = &bytes[WAVEFORM_HEADER_LEN..];
    if (body.len() as u64) != count.saturating_mul(8) {
        return Err(Error::format(
            path,
            format!("header declares {count} samples, file holds {} bytes of data", body.len()),
        ));
    }
    let samples = body.chunks_exact(8).map(le_f64).collect();
    let w = Waveform::new(samples, fs, t0).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((w, channel))
}

pub fn write_waveform(path: &Path, w: &Waveform, channel: Channel) -> Result<()> {
    std::fs::write(path, waveform_to_bytes(w, channel)).map_err(|e| Error::io(path, e))
}

/// Reads a waveform and checks its channel tag.
pub fn read_waveform(path: &Path, channel: Channel) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, found) = waveform_from_bytes(&bytes, path)?;
    if found != channel {
        return Err(Error::format(path, format!("expected {channel:?} channel, found {found:?}")));
    }
    Ok(w)
}

/// Metadata block of a text artifact plus its remaining numbered lines.
struct TextFile<'a> {
    meta: Vec<(&'a str, &'a str)>,
    body: Vec<(usize, &'a str)>,
}

impl<'a> TextFile<'a> {
    fn parse(text: &'a str, path: &Path, version: u32, what: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut body = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.strip_prefix('#') {
                Some(rest) => {
                    let rest = rest.trim();
                    let entry = match rest.split_once('=') {
                        Some((k, v)) => (k.trim(), v.trim()),
                        None => rest.split_once(' ').unwrap_or((rest, "")),
                    };
                    meta.push(entry);
                }
                None => body.push((k + 1, line)),
            }
        }
        let file = Self { meta, body };
        let found: u32 = file.get("format_version", path)?.parse().map_err(|_| {
            Error::format(path, "bad format_version")
        })?;
        if found != version {
            return Err(Error::Contract(format!(
                "{}: {what} format version {found}, expected {version}",
                path.display()
            )));
        }
        Ok(file)
    }

    fn get(&self, key: &str, path: &Path) -> Result<&'a str> {
        self.meta
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::format(path, format!("missing `{key}` metadata")))
    }
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| Error::format(path, format!("line {line}: bad number `{s}`")))
}

pub fn schedule_to_text(schedule: &Schedule, fingerprint: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# format_version = {SCHEDULE_FORMAT_VERSION}");
    let _ = writeln!(out, "# duration_s = {}", f17(schedule.duration_s));
    let _ = writeln!(out, "# fingerprint = {fingerprint}");
    for d in &schedule.devices {
        let _ = writeln!(out, "# device {} {}", d.device_id, d.class_name);
    }
    for d in &schedule.devices {
        for iv in &d.intervals {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                d.device_id,
                f17(iv.start_s),
                f17(iv.end_s),
                iv.mode
            );
        }
    }
    out
}

/// Parses a schedule file, returning it with its recorded fingerprint.
pub fn schedule_from_text(text: &str, path: &Path) -> Result<(Schedule, String)> {
    let file = TextFile::parse(text, path, SCHEDULE_FORMAT_VERSION, "schedule")?;
    let duration_s = parse_f64(file.get("duration_s", path)?, path, 0)?;
    let mut devices: Vec<DeviceSchedule> = file
        .meta
        .iter()
        .filter(|(k, _)| *k == "device")
        .map(|(_, v)| {
            let mut it = v.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(id), Some(class), None) => Ok(DeviceSchedule {
                    device_id: id.to_string(),
                    class_name: class.to_string(),
                    intervals: Vec::new(),
                }),
                _ => Err(Error::format(path, format!("bad device declaration `{v}`"))),
            }
        })
        .collect::<Result<_>>()?;
    for &(no, line) in &file.body {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, start, end, mode] = fields[..] else {
            return Err(Error::format(path, format!("line {no}: expected `device start end mode`")));
        };
        let dev = devices
            .iter_mut()
            .find(|d| d.device_id == id)
            .ok_or_else(|| Error::format(path, format!("line {no}: undeclared device `{id}`")))?;
        dev.intervals.push(Interval {
            start_s: parse_f64(start, path, no)?,
            end_s: parse_f64(end, path, no)?,
            mode: mode.to_string(),
        });
    }
    let fingerprint = file.get("fingerprint", path)?.to_string();
    Ok((
        Schedule {
            duration_s,
            devices,
        },
        fingerprint,
    ))
}

pub fn write_schedule(path: &Path, schedule: &Schedule, fingerprint: &str) -> Result<()> {
    std::fs::write(path, schedule_to_text(schedule, fingerprint)).map_err(|e| Error::io(path, e))
}

pub fn read_schedule(path: &Path) -> Result<(Schedule, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    schedule_from_text(&text, path)
}

pub fn truth_to_text(truth: &GroundTruthSeries, fingerprint: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# format_version = {SCHEDULE_FORMAT_VERSION}");
    let _ = writeln!(out, "# rate_hz = 1");
    let _ = writeln!(out, "# fingerprint = {fingerprint}");
    for (t, c) in truth.counts().iter().enumerate() {
        let _ = writeln!(out, "{t} {c}");
    }
    out
}

pub fn truth_from_text(text: &str, path: &Path) -> Result<(GroundTruthSeries, String)> {
    let file = TextFile::parse(text, path, SCHEDULE_FORMAT_VERSION, "ground truth")?;
    let mut counts = Vec::with_capacity(file.body.len());
    for &(no, line) in &file.body {
        let parsed = line
            .split_once(' ')
            .and_then(|(t, c)| Some((t.parse::<usize>().ok()?, c.trim().parse::<u32>().ok()?)));
        match parsed {
            Some((t, c)) if t == counts.len() => counts.push(c),
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {no}: expected `{} <count>`", counts.len()),
                ))
            }
        }
    }
    let fingerprint = file.get("fingerprint", path)?.to_string();
    Ok((GroundTruthSeries::new(counts), fingerprint))
}

pub fn write_truth(path: &Path, truth: &GroundTruthSeries, fingerprint: &str) -> Result<()> {
    std::fs::write(path, truth_to_text(truth, fingerprint)).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<(GroundTruthSeries, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    truth_from_text(&text, path)
}
