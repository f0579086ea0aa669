//! Stage orchestration: simulate, select-features, featurize, train, eval.
//!
//! Every stage reads its inputs from the output directory and writes one or
//! more artifacts there. Artifacts carry a fingerprint of the configuration
//! that produced them; a stage refuses inputs whose fingerprint does not
//! match the current configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::{RunConfig, SplitConfig};
use crate::devices::{device_signature_features, SignatureContext};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::features::io::f17;
use crate::features::{self, rank_features, FeatureDataset, FeatureId, FeatureSpec, NormStats};
use crate::fingerprint::fingerprint;
use crate::model::{self, CountModel, RegressorParams, Split};
use crate::sim::{self, Channel};

pub const RANKING_FORMAT_VERSION: u32 = 1;

/// Noiseless signature features smaller than this are treated as zero.
const SIGNATURE_FLOOR: f64 = 1e-9;

/// File locations inside an output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    dir: PathBuf,
}

impl ArtifactPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn voltage(&self) -> PathBuf {
        self.dir.join("voltage.fnwv")
    }

    pub fn current(&self) -> PathBuf {
        self.dir.join("current.fnwv")
    }

    pub fn schedule(&self) -> PathBuf {
        self.dir.join("schedule.txt")
    }

    pub fn truth(&self) -> PathBuf {
        self.dir.join("truth.txt")
    }

    pub fn ranking(&self) -> PathBuf {
        self.dir.join("ranking.txt")
    }

    pub fn dataset(&self) -> PathBuf {
        self.dir.join("dataset.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.dir.join("model.txt")
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.txt")
    }

    pub fn residuals(&self) -> PathBuf {
        self.dir.join("residuals.csv")
    }
}

/// Fisher ranking of the configured features, best first, and the subset
/// kept for featurization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub fingerprint: String,
    pub scores: Vec<(FeatureId, f64)>,
    pub selected: Vec<FeatureId>,
}

impl FeatureRanking {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# format_version = {RANKING_FORMAT_VERSION}");
        let _ = writeln!(out, "# fingerprint = {}", self.fingerprint);
        let selected: Vec<&str> = self.selected.iter().map(FeatureId::as_str).collect();
        let _ = writeln!(out, "# selected = {}", selected.join(","));
        for (k, (id, score)) in self.scores.iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", k + 1, id, f17(*score));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(path, msg);
        let mut meta = BTreeMap::new();
        let mut scores = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| bad(format!("line {}: bad metadata", no + 1)))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [rank, id, score] = f[..] else {
                return Err(bad(format!("line {}: expected `rank feature score`", no + 1)));
            };
            if rank.parse::<usize>().ok() != Some(scores.len() + 1) {
                return Err(bad(format!("line {}: ranks out of order", no + 1)));
            }
            let id: FeatureId = id.parse().map_err(|e: Error| bad(e.to_string()))?;
            let score: f64 = score
                .parse()
                .map_err(|_| bad(format!("line {}: bad score", no + 1)))?;
            scores.push((id, score));
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(format!("missing `{k}` metadata")));
        if get("format_version")? != &RANKING_FORMAT_VERSION.to_string() {
            return Err(Error::Contract(format!(
                "{}: unsupported ranking format version",
                path.display()
            )));
        }
        let selected = get("selected")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<FeatureId>>>()
            .map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            fingerprint: get("fingerprint")?.clone(),
            scores,
            selected,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Row ranges of a chronological train/val/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Contiguous, time-ordered split. Windows at the start of the validation
/// and test segments that overlap the previous segment in time are dropped.
pub fn chronological_split(t_start_s: &[f64], window_s: f64, fractions: SplitConfig) -> Result<SplitRanges> {
    let n = t_start_s.len();
    let n_train = (n as f64 * fractions.train).floor() as usize;
    let val_end = n_train + (n as f64 * fractions.val).floor() as usize;
    let after = |boundary: usize| -> usize {
        if boundary == 0 {
            return 0;
        }
        let limit = t_start_s[boundary - 1] + window_s;
        (boundary..n)
            .find(|&k| t_start_s[k] >= limit - 1e-9)
            .unwrap_or(n)
    };
    let val_start = after(n_train);
    let test_start = after(val_end.max(val_start));
    let ranges = SplitRanges {
        train: 0..n_train,
        val: val_start..val_end.max(val_start),
        test: test_start..n,
    };
    for (name, r) in [("train", &ranges.train), ("validation", &ranges.val), ("test", &ranges.test)] {
        if r.is_empty() {
            return Err(Error::invalid(format!(
                "{name} split is empty ({n} windows); lengthen the scenario or shorten the stride"
            )));
        }
    }
    Ok(ranges)
}

pub struct Pipeline {
    cfg: RunConfig,
    paths: ArtifactPaths,
}

fn file_exists(p: &Path) -> bool {
    p.try_exists().unwrap_or(false)
}

fn contract(path: &Path, what: &str) -> Error {
    Error::Contract(format!(
        "{}: {what} fingerprint does not match the current configuration; rerun the upstream stage",
        path.display()
    ))
}

impl Pipeline {
    pub fn new(cfg: RunConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        let paths = ArtifactPaths::new(out_dir);
        std::fs::create_dir_all(paths.dir()).map_err(|e| Error::io(paths.dir(), e))?;
        Ok(Self { cfg, paths })
    }

    pub fn paths(&self) -> &ArtifactPaths {
        &self.paths
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn scenario_fingerprint(&self) -> String {
        fingerprint(&[
            "scenario".to_string(),
            format!("{:?}", self.cfg.scenario),
            self.cfg.library.to_text(),
        ])
    }

    fn signature_context(&self) -> SignatureContext {
        SignatureContext {
            window_s: self.cfg.featurize.window_s,
            sample_rate_hz: self.cfg.scenario.sample_rate_hz,
            f0_hz: self.cfg.scenario.f0_hz,
            voltage_rms: self.cfg.scenario.voltage_rms,
        }
    }

    pub fn ranking_fingerprint(&self) -> String {
        let s = &self.cfg.scenario;
        fingerprint(&[
            "ranking".to_string(),
            self.cfg.library.to_text(),
            format!("{:?}", self.signature_context()),
            s.medical_class.clone(),
            format!("{:?}", s.background),
            format!("{:?}", self.cfg.featurize),
        ])
    }

    pub fn dataset_fingerprint(&self, selected: &[FeatureId]) -> String {
        let f = &self.cfg.featurize;
        fingerprint(&[
            "dataset".to_string(),
            self.scenario_fingerprint(),
            format!("{:?} {:?} {:?}", f.window_s, f.stride_s, f.max_harmonic),
            format!("{selected:?}"),
        ])
    }

    pub fn train_fingerprint(&self, dataset_fp: &str) -> String {
        fingerprint(&[
            "train".to_string(),
            dataset_fp.to_string(),
            format!("{:?}", self.cfg.model),
            format!("{:?}", self.cfg.split),
        ])
    }

    // ---- simulate ----------------------------------------------------------

    fn simulate_current(&self) -> Result<bool> {
        let p = &self.paths;
        if ![p.schedule(), p.truth(), p.voltage(), p.current()].iter().all(|f| file_exists(f)) {
            return Ok(false);
        }
        let fp = self.scenario_fingerprint();
        let (_, sched_fp) = sim::read_schedule(&p.schedule())?;
        let (_, truth_fp) = sim::read_truth(&p.truth())?;
        if sched_fp != fp || truth_fp != fp {
            return Ok(false);
        }
        self.load_waveforms().map(|_| true)
    }

    fn load_waveforms(&self) -> Result<(crate::signal::Waveform, crate::signal::Waveform)> {
        let v = sim::read_waveform(&self.paths.voltage(), Channel::Voltage)?;
        let i = sim::read_waveform(&self.paths.current(), Channel::Current)?;
        let s = &self.cfg.scenario;
        let n = crate::devices::sample_count(s.duration_s, s.sample_rate_hz)?;
        for (w, path) in [(&v, self.paths.voltage()), (&i, self.paths.current())] {
            if w.len() != n || w.sample_rate_hz() != s.sample_rate_hz {
                return Err(Error::Contract(format!(
                    "{}: waveform does not match the configured scenario ({} samples at {} Hz expected)",
                    path.display(),
                    n,
                    s.sample_rate_hz
                )));
            }
        }
        Ok((v, i))
    }

    pub fn simulate(&self) -> Result<String> {
        let sched = sim::generate_schedule(&self.cfg.scenario, &self.cfg.library)?;
        self.simulate_schedule(&sched)
    }

    /// Like [`Pipeline::simulate`] but with a caller-supplied schedule.
    pub fn simulate_schedule(&self, sched: &sim::Schedule) -> Result<String> {
        let cfg = &self.cfg;
        let (v, i) = sim::synthesize_feeder(&cfg.scenario, &cfg.library, sched)?;
        let truth = sim::ground_truth_counts(sched, &cfg.scenario, &cfg.library)?;
        let fp = self.scenario_fingerprint();
        let p = &self.paths;
        sim::write_waveform(&p.voltage(), &v, Channel::Voltage)?;
        sim::write_waveform(&p.current(), &i, Channel::Current)?;
        sim::write_schedule(&p.schedule(), sched, &fp)?;
        sim::write_truth(&p.truth(), &truth, &fp)?;
        let bytes = std::fs::metadata(p.current()).map(|m| m.len()).unwrap_or(0);
        let max_count = truth.counts().iter().max().copied().unwrap_or(0);
        Ok(format!(
            "simulate: {} s at {} Hz, {} devices ({} medical), {} on-intervals, peak medical count {}; current.fnwv {} bytes",
            cfg.scenario.duration_s,
            cfg.scenario.sample_rate_hz,
            sched.devices.len(),
            cfg.scenario.n_medical_devices,
            sched.interval_count(),
            max_count,
            bytes
        ))
    }

    // ---- select-features ---------------------------------------------------

    /// Ranks features by how well they separate the medical class's mode
    /// signatures from the background classes' mode signatures.
    pub fn rank(&self) -> Result<FeatureRanking> {
        let cfg = &self.cfg;
        let spec = cfg.feature_spec()?;
        let ctx = self.signature_context();
        let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        let mut classes = vec![cfg.scenario.medical_class.as_str()];
        for (c, _) in &cfg.scenario.background {
            if !classes.contains(&c.as_str()) {
                classes.push(c);
            }
        }
        for class in classes {
            let model = cfg.library.get(class)?;
            let group = if model.is_medical() { "medical" } else { "background" };
            for mode in model.active_modes() {
                let mut v = device_signature_features(model, &mode.name, &ctx, &spec)?;
                // Harmonics a mode does not contain come out of the
                // projection as rounding residue; that residue must not
                // rank as signal.
                for x in &mut v {
                    if x.abs() < SIGNATURE_FLOOR {
                        *x = 0.0;
                    }
                }
                groups.entry(group.to_string()).or_default().push(v);
            }
        }
        let scores = rank_features(&groups, spec.ids())?;
        let selected = match cfg.featurize.top_k {
            Some(k) => {
                let top: Vec<FeatureId> = scores.iter().take(k).map(|s| s.0).collect();
                spec.ids().iter().copied().filter(|id| top.contains(id)).collect()
            }
            None => spec.ids().to_vec(),
        };
        Ok(FeatureRanking {
            fingerprint: self.ranking_fingerprint(),
            scores,
            selected,
        })
    }

    fn select_current(&self) -> Result<bool> {
        let path = self.paths.ranking();
        if !file_exists(&path) {
            return Ok(false);
        }
        Ok(FeatureRanking::load(&path)?.fingerprint == self.ranking_fingerprint())
    }

    pub fn select_features(&self) -> Result<String> {
        let r = self.rank()?;
        r.save(&self.paths.ranking())?;
        let top: Vec<String> = r
            .scores
            .iter()
            .take(3)
            .map(|(id, s)| format!("{id} ({s:.3})"))
            .collect();
        Ok(format!(
            "select-features: best {}; keeping {} of {}",
            top.join(", "),
            r.selected.len(),
            r.scores.len()
        ))
    }

    fn selected_spec(&self) -> Result<FeatureSpec> {
        let full = self.cfg.feature_spec()?;
        if self.cfg.featurize.top_k.is_none() {
            return Ok(full);
        }
        let path = self.paths.ranking();
        let r = FeatureRanking::load(&path)?;
        if r.fingerprint != self.ranking_fingerprint() {
            return Err(contract(&path, "ranking"));
        }
        full.select(&r.selected)
    }

    // ---- featurize ---------------------------------------------------------

    fn featurize_current(&self) -> Result<bool> {
        let path = self.paths.dataset();
        if !file_exists(&path) {
            return Ok(false);
        }
        let spec = self.selected_spec()?;
        Ok(FeatureDataset::load(&path)?.fingerprint == self.dataset_fingerprint(spec.ids()))
    }

    pub fn featurize(&self) -> Result<String> {
        let spec = self.selected_spec()?;
        let truth_path = self.paths.truth();
        let (truth, fp) = sim::read_truth(&truth_path)?;
        if fp != self.scenario_fingerprint() {
            return Err(contract(&truth_path, "ground truth"));
        }
        let (v, i) = self.load_waveforms()?;
        let f = &self.cfg.featurize;
        let mut ds = features::featurize(&v, &i, &truth, f.window_s, f.stride_s, &spec)?;
        ds.fingerprint = self.dataset_fingerprint(spec.ids());
        ds.save(&self.paths.dataset())?;
        let invalid = ds.valid.iter().filter(|v| !**v).count();
        Ok(format!(
            "featurize: {} windows x {} features ({} with undefined features), W = {} s, stride = {} s",
            ds.len(),
            spec.len(),
            invalid,
            f.window_s,
            f.stride_s
        ))
    }

    fn load_dataset(&self) -> Result<FeatureDataset> {
        let spec = self.selected_spec()?;
        let path = self.paths.dataset();
        let ds = FeatureDataset::load(&path)?;
        if ds.fingerprint != self.dataset_fingerprint(spec.ids()) || ds.spec != spec {
            return Err(contract(&path, "dataset"));
        }
        ds.check_shape().map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(ds)
    }

    // ---- train -------------------------------------------------------------

    fn train_current(&self) -> Result<bool> {
        let path = self.paths.model();
        if !file_exists(&path) || !file_exists(&self.paths.dataset()) {
            return Ok(false);
        }
        let ds = self.load_dataset()?;
        Ok(CountModel::load(&path)?.train_fingerprint == self.train_fingerprint(&ds.fingerprint))
    }

    pub fn train(&self) -> Result<String> {
        let ds = self.load_dataset()?;
        let split = chronological_split(&ds.t_start_s, ds.window_s, self.cfg.split)?;
        let train_x = &ds.x[split.train.clone()];
        let norm = NormStats::fit(train_x)?;
        if norm.kept_count() == 0 {
            return Err(Error::invalid("every feature is constant on the training split"));
        }
        let xt = norm.apply(train_x)?;
        let xv = norm.apply(&ds.x[split.val.clone()])?;
        let yt: Vec<f64> = ds.y[split.train.clone()].iter().map(|&y| f64::from(y)).collect();
        let yv: Vec<f64> = ds.y[split.val.clone()].iter().map(|&y| f64::from(y)).collect();

        let m = &self.cfg.model;
        let mut sizes = vec![norm.kept_count()];
        sizes.extend(&m.hidden);
        sizes.push(1);
        let init = RegressorParams::init(&sizes, m.init_seed)?;
        let (params, history) = model::train(&init, Split::new(&xt, &yt), Split::new(&xv, &yv), &m.train)?;
        let best_val = history
            .best_epoch
            .map(|e| history.val_loss[e])
            .unwrap_or(f64::NAN);
        let trained = CountModel {
            params,
            norm,
            spec: ds.spec.clone(),
            window_s: ds.window_s,
            stride_s: ds.stride_s,
            shuffle_seed: m.train.shuffle_seed,
            train_fingerprint: self.train_fingerprint(&ds.fingerprint),
        };
        trained.save(&self.paths.model())?;
        let sizes: Vec<String> = sizes.iter().map(usize::to_string).collect();
        Ok(format!(
            "train: {} network, {} train / {} val windows, {} epochs run, best epoch {}, val loss {:.4}",
            sizes.join("-"),
            xt.len(),
            xv.len(),
            history.val_loss.len(),
            history.best_epoch.map_or("none".to_string(), |e| (e + 1).to_string()),
            best_val
        ))
    }

    fn load_model(&self, ds: &FeatureDataset) -> Result<CountModel> {
        let path = self.paths.model();
        let m = CountModel::load(&path)?;
        if m.train_fingerprint != self.train_fingerprint(&ds.fingerprint) {
            return Err(contract(&path, "model"));
        }
        Ok(m)
    }

    // ---- eval --------------------------------------------------------------

    fn eval_current(&self) -> Result<bool> {
        let p = &self.paths;
        if ![p.report(), p.residuals(), p.model(), p.dataset()].iter().all(|f| file_exists(f)) {
            return Ok(false);
        }
        let ds = self.load_dataset()?;
        let m = self.load_model(&ds)?;
        let reports = eval::read_reports(&p.report())?;
        Ok(reports
            .iter()
            .any(|(name, r)| name == "model" && r.fingerprint == m.fingerprint()))
    }

    /// Model and median-baseline reports on the test split.
    pub fn evaluate(&self) -> Result<(EvalReport, EvalReport, Vec<eval::WindowResult>)> {
        let ds = self.load_dataset()?;
        let m = self.load_model(&ds)?;
        let split = chronological_split(&ds.t_start_s, ds.window_s, self.cfg.split)?;
        let test = ds.slice(split.test.clone());
        let windows = eval::predict_windows(&m, &test)?;
        let report = eval::report_from_windows(&windows, &m.fingerprint())?;
        let test_targets: Vec<(f64, u32)> = test.t_start_s.iter().copied().zip(test.y.iter().copied()).collect();
        let base = eval::baseline_windows(&ds.y[split.train], &test_targets)?;
        let baseline = eval::report_from_windows(&base, &m.fingerprint())?;
        Ok((report, baseline, windows))
    }

    pub fn eval(&self) -> Result<String> {
        let (report, baseline, windows) = self.evaluate()?;
        eval::write_reports(&self.paths.report(), &[("model", &report), ("baseline", &baseline)])?;
        let path = self.paths.residuals();
        std::fs::write(&path, eval::residuals_csv(&windows)).map_err(|e| Error::io(&path, e))?;
        Ok(format!(
            "eval: MAE rounded {:.4} (median baseline {:.4}), continuous {:.4}, exact count {:.1}% over {} test windows",
            report.mae_rounded,
            baseline.mae_rounded,
            report.mae_continuous,
            100.0 * report.exact_count_accuracy,
            report.n_test_windows
        ))
    }

    // ---- all stages --------------------------------------------------------

    /// Runs every stage in order, skipping stages whose artifacts are
    /// already current. `summary` receives one line per stage.
    pub fn run_all(&self, mut summary: impl FnMut(&str)) -> Result<()> {
        type Check = fn(&Pipeline) -> Result<bool>;
        type Run = fn(&Pipeline) -> Result<String>;
        let stages: [(&str, Check, Run); 5] = [
            ("simulate", Pipeline::simulate_current, Pipeline::simulate),
            ("select-features", Pipeline::select_current, Pipeline::select_features),
            ("featurize", Pipeline::featurize_current, Pipeline::featurize),
            ("train", Pipeline::train_current, Pipeline::train),
            ("eval", Pipeline::eval_current, Pipeline::eval),
        ];
        // Once a stage reruns, everything downstream reruns.
        let mut dirty = false;
        for (name, current, run) in stages {
            if !dirty && current(self)? {
                info!("{name}: artifacts are current, skipping");
                summary(&format!("{name}: up to date"));
                continue;
            }
            dirty = true;
            summary(&run(self)?);
        }
        Ok(())
    }
}
