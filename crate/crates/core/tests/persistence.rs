use std::path::Path;

use feeder_nilm::config::RunConfig;
use feeder_nilm::devices::DeviceLibrary;
use feeder_nilm::eval;
use feeder_nilm::features::FeatureDataset;
use feeder_nilm::model::CountModel;
use feeder_nilm::pipeline::{FeatureRanking, Pipeline};
use feeder_nilm::sim::{self, Channel};
use feeder_nilm::Error;

fn small_run(dir: &Path) -> Pipeline {
    let text = "\
[scenario]
duration_s = 40
n_medical_devices = 2
background = electronic_smps:1, fridge_compressor:1
rng_seed = 8

[schedule]
ventilator = 8, 8

[featurize]
stride_s = 1
top_k = 6

[model]
epochs = 20
";
    let cfg = RunConfig::parse(text, dir).unwrap();
    let p = Pipeline::new(cfg, dir.join("out")).unwrap();
    p.run_all(|_| {}).unwrap();
    p
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

#[test]
fn every_artifact_survives_read_write() {
    let dir = tempfile::tempdir().unwrap();
    let p = small_run(dir.path());
    let paths = p.paths();
    let copy = |name: &str| dir.path().join(format!("copy-{name}"));

    for (src, ch) in [(paths.voltage(), Channel::Voltage), (paths.current(), Channel::Current)] {
        let w = sim::read_waveform(&src, ch).unwrap();
        let dst = copy("w.fnwv");
        sim::write_waveform(&dst, &w, ch).unwrap();
        assert!(same_bytes(&src, &dst));
        assert_eq!(sim::read_waveform(&dst, ch).unwrap(), w);
    }

    let (sched, fp) = sim::read_schedule(&paths.schedule()).unwrap();
    sim::write_schedule(&copy("schedule.txt"), &sched, &fp).unwrap();
    assert!(same_bytes(&paths.schedule(), &copy("schedule.txt")));

    let (truth, fp) = sim::read_truth(&paths.truth()).unwrap();
    sim::write_truth(&copy("truth.txt"), &truth, &fp).unwrap();
    assert!(same_bytes(&paths.truth(), &copy("truth.txt")));

    let ranking = FeatureRanking::load(&paths.ranking()).unwrap();
    assert_eq!(ranking.selected.len(), 6);
    ranking.save(&copy("ranking.txt")).unwrap();
    assert!(same_bytes(&paths.ranking(), &copy("ranking.txt")));

    let ds = FeatureDataset::load(&paths.dataset()).unwrap();
    ds.save(&copy("dataset.csv")).unwrap();
    assert!(same_bytes(&paths.dataset(), &copy("dataset.csv")));
    assert_eq!(FeatureDataset::load(&copy("dataset.csv")).unwrap(), ds);

    let m = CountModel::load(&paths.model()).unwrap();
    m.save(&copy("model.txt")).unwrap();
    assert!(same_bytes(&paths.model(), &copy("model.txt")));
    let back = CountModel::load(&copy("model.txt")).unwrap();
    for row in &ds.x {
        assert_eq!(back.forward_raw(row).unwrap().to_bits(), m.forward_raw(row).unwrap().to_bits());
    }

    let reports = eval::read_reports(&paths.report()).unwrap();
    let named: Vec<(&str, &eval::EvalReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    eval::write_reports(&copy("report.txt"), &named).unwrap();
    assert!(same_bytes(&paths.report(), &copy("report.txt")));
    assert_eq!(reports[0].1.fingerprint, m.fingerprint());
}

#[test]
fn report_matches_recomputed_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let p = small_run(dir.path());
    let (model, baseline, windows) = p.evaluate().unwrap();
    let reports = eval::read_reports(&p.paths().report()).unwrap();
    assert_eq!(reports[0], ("model".to_string(), model.clone()));
    assert_eq!(reports[1], ("baseline".to_string(), baseline));

    let y: Vec<f64> = windows.iter().map(|w| f64::from(w.target)).collect();
    let yhat: Vec<f64> = windows.iter().map(|w| f64::from(w.rounded)).collect();
    assert_eq!(eval::mae(&yhat, &y).unwrap(), model.mae_rounded);
    let csv = std::fs::read_to_string(p.paths().residuals()).unwrap();
    assert_eq!(csv.lines().count(), windows.len() + 1);
}

#[test]
fn version_mismatch_is_a_contract_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = small_run(dir.path());
    let path = p.paths().model();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("format_version = 1", "format_version = 9", 1)).unwrap();
    assert!(matches!(CountModel::load(&path), Err(Error::Contract(_))));
}

#[test]
fn builtin_library_round_trips() {
    let lib = DeviceLibrary::builtin();
    let text = lib.to_text();
    let back = DeviceLibrary::parse(&text).unwrap();
    assert_eq!(back, lib);
    assert_eq!(back.to_text(), text);
}
