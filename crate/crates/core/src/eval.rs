//! Error metrics and reports for count predictions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::io::f17;
use crate::features::FeatureDataset;
use crate::ini::{Document, IniError, Section};
use crate::model::{round_count, CountModel};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::invalid(format!(
            "mae needs equal non-empty inputs, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountBreakdown {
    pub n_windows: usize,
    pub mae_continuous: f64,
    pub mae_rounded: f64,
    pub exact_count_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mae_continuous: f64,
    pub mae_rounded: f64,
    pub exact_count_accuracy: f64,
    /// Keyed by true count.
    pub per_count: BTreeMap<u32, CountBreakdown>,
    pub n_test_windows: usize,
    pub fingerprint: String,
}

/// One test window's prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub t_start_s: f64,
    pub target: u32,
    pub predicted: f64,
    pub rounded: u32,
}

impl WindowResult {
    pub fn residual(&self) -> f64 {
        self.predicted - f64::from(self.target)
    }
}

fn breakdown(windows: &[&WindowResult]) -> Result<CountBreakdown> {
    let pred: Vec<f64> = windows.iter().map(|w| w.predicted).collect();
    let rounded: Vec<f64> = windows.iter().map(|w| f64::from(w.rounded)).collect();
    let y: Vec<f64> = windows.iter().map(|w| f64::from(w.target)).collect();
    let exact = windows.iter().filter(|w| w.rounded == w.target).count();
    Ok(CountBreakdown {
        n_windows: windows.len(),
        mae_continuous: mae(&pred, &y)?,
        mae_rounded: mae(&rounded, &y)?,
        exact_count_accuracy: exact as f64 / windows.len() as f64,
    })
}

/// Summarizes per-window predictions.
pub fn report_from_windows(windows: &[WindowResult], fingerprint: &str) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::invalid("no test windows to evaluate"));
    }
    let all: Vec<&WindowResult> = windows.iter().collect();
    let total = breakdown(&all)?;
    let mut groups: BTreeMap<u32, Vec<&WindowResult>> = BTreeMap::new();
    for w in windows {
        groups.entry(w.target).or_default().push(w);
    }
    let per_count = groups
        .into_iter()
        .map(|(c, ws)| Ok((c, breakdown(&ws)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        mae_continuous: total.mae_continuous,
        mae_rounded: total.mae_rounded,
        exact_count_accuracy: total.exact_count_accuracy,
        per_count,
        n_test_windows: windows.len(),
        fingerprint: fingerprint.to_string(),
    })
}

/// Runs `model` on every window of `test`.
pub fn predict_windows(model: &CountModel, test: &FeatureDataset) -> Result<Vec<WindowResult>> {
    if test.spec != model.spec {
        return Err(Error::invalid(
            "test dataset feature spec differs from the model's",
        ));
    }
    (0..test.len())
        .map(|k| {
            let predicted = model.forward_raw(&test.x[k])?;
            Ok(WindowResult {
                t_start_s: test.t_start_s[k],
                target: test.y[k],
                predicted,
                rounded: round_count(predicted),
            })
        })
        .collect()
}

pub fn evaluate(model: &CountModel, test: &FeatureDataset) -> Result<EvalReport> {
    report_from_windows(&predict_windows(model, test)?, &model.fingerprint())
}

fn median(values: &[u32]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        f64::from(v[n / 2])
    } else {
        0.5 * (f64::from(v[n / 2 - 1]) + f64::from(v[n / 2]))
    }
}

/// Constant predictor at the median training count.
pub fn baseline_windows(train_y: &[u32], test: &[(f64, u32)]) -> Result<Vec<WindowResult>> {
    if train_y.is_empty() || test.is_empty() {
        return Err(Error::invalid("baseline needs non-empty train and test targets"));
    }
    let m = median(train_y);
    Ok(test
        .iter()
        .map(|&(t_start_s, target)| WindowResult {
            t_start_s,
            target,
            predicted: m,
            rounded: round_count(m),
        })
        .collect())
}

pub fn baseline_report(train_y: &[u32], test_y: &[u32]) -> Result<EvalReport> {
    let test: Vec<(f64, u32)> = test_y.iter().map(|&y| (0.0, y)).collect();
    report_from_windows(&baseline_windows(train_y, &test)?, "")
}

impl EvalReport {
    fn write_section(&self, out: &mut String, name: &str) {
        let _ = writeln!(out, "\n[{name}]");
        let _ = writeln!(out, "fingerprint = {}", self.fingerprint);
        let _ = writeln!(out, "n_test_windows = {}", self.n_test_windows);
        let _ = writeln!(out, "mae_continuous = {}", f17(self.mae_continuous));
        let _ = writeln!(out, "mae_rounded = {}", f17(self.mae_rounded));
        let _ = writeln!(out, "exact_count_accuracy = {}", f17(self.exact_count_accuracy));
        for (c, b) in &self.per_count {
            let _ = writeln!(
                out,
                "count.{c} = {}, {}, {}, {}",
                b.n_windows,
                f17(b.mae_continuous),
                f17(b.mae_rounded),
                f17(b.exact_count_accuracy)
            );
        }
    }

    fn from_section(sec: &Section) -> Result<Self, IniError> {
        let mut per_count = BTreeMap::new();
        for e in &sec.entries {
            let Some(c) = e.key.strip_prefix("count.") else {
                if ![
                    "fingerprint",
                    "n_test_windows",
                    "mae_continuous",
                    "mae_rounded",
                    "exact_count_accuracy",
                ]
                .contains(&e.key.as_str())
                {
                    return Err(e.err("unknown key"));
                }
                continue;
            };
            let c: u32 = c.parse().map_err(|_| e.err("bad count"))?;
            let f = e.list();
            let [n, mc, mr, acc] = f[..] else {
                return Err(e.err("expected `n, mae_continuous, mae_rounded, accuracy`"));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| e.err(format!("bad number `{s}`")));
            per_count.insert(
                c,
                CountBreakdown {
                    n_windows: n.parse().map_err(|_| e.err("bad window count"))?,
                    mae_continuous: num(mc)?,
                    mae_rounded: num(mr)?,
                    exact_count_accuracy: num(acc)?,
                },
            );
        }
        Ok(Self {
            mae_continuous: sec.require("mae_continuous")?.parse()?,
            mae_rounded: sec.require("mae_rounded")?.parse()?,
            exact_count_accuracy: sec.require("exact_count_accuracy")?.parse()?,
            per_count,
            n_test_windows: sec.require("n_test_windows")?.parse()?,
            fingerprint: sec
                .get("fingerprint")
                .map(|e| e.value.clone())
                .unwrap_or_default(),
        })
    }
}

/// Report file holding named reports, e.g. `model` and `baseline`.
pub fn reports_to_text(reports: &[(&str, &EvalReport)]) -> String {
    let mut out = format!("format_version = {REPORT_FORMAT_VERSION}\n");
    for (name, r) in reports {
        r.write_section(&mut out, name);
    }
    out
}

pub fn reports_from_text(text: &str, path: &Path) -> Result<Vec<(String, EvalReport)>> {
    let parse = || -> Result<Vec<(String, EvalReport)>, IniError> {
        let doc = Document::parse(text)?;
        let root = doc.root();
        root.deny_unknown(&["format_version"])?;
        let v: u32 = root.require("format_version")?.parse()?;
        if v != REPORT_FORMAT_VERSION {
            return Err(root.require("format_version")?.err(format!("unsupported version {v}")));
        }
        doc.sections[1..]
            .iter()
            .map(|s| Ok((s.name.clone(), EvalReport::from_section(s)?)))
            .collect()
    };
    parse().map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_reports(path: &Path, reports: &[(&str, &EvalReport)]) -> Result<()> {
    std::fs::write(path, reports_to_text(reports)).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<(String, EvalReport)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    reports_from_text(&text, path)
}

pub fn residuals_csv(windows: &[WindowResult]) -> String {
    let mut out = String::from("t_start_s,y,y_hat,y_hat_rounded,residual\n");
    for w in windows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f17(w.t_start_s),
            w.target,
            f17(w.predicted),
            w.rounded,
            f17(w.residual())
        );
    }
    out
}
