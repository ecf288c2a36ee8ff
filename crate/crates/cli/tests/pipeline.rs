use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use chfrisk::boosting::{fit, load_model, model_to_json};
use chfrisk::features::feature_names;
use chfrisk::simulate::CohortGenParams;
use chfrisk_cli::commands::*;
use chfrisk_cli::io::{read_features, read_manifest, read_split, write_manifest, Part};
use chfrisk_cli::{CliError, RunConfig};
use tempfile::TempDir;

fn small_config() -> RunConfig {
    RunConfig {
        grid_n_trees: vec![50],
        grid_max_depth: vec![2, 3],
        grid_learning_rate: vec![0.1],
        grid_lambda: vec![1.0],
        grid_alpha: vec![0.0],
        grid_sigma: vec![1.0],
        n_boot: 100,
        shap_window: 21,
        shap_background: 30,
        ..RunConfig::default()
    }
}

fn simulate(dir: &Path, n: usize, seed: u64, duration_s: f64) -> SimulateSummary {
    let args = SimulateArgs {
        cohort: CohortGenParams { n, seed, event_rate: 0.25, ..Default::default() },
        duration_s,
        ..Default::default()
    };
    cmd_simulate(dir, &args).unwrap()
}

struct Run {
    _tmp: TempDir,
    dir: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// simulate, extract and train in a fresh directory
fn trained(n: usize, config: &RunConfig) -> Run {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_path_buf();
    simulate(&dir, n, 4, 30.0);
    cmd_extract(&dir.join("manifest.csv"), config, &dir.join("features.csv"), &dir.join("diagnostics.json")).unwrap();
    cmd_train(&dir.join("features.csv"), config, &dir.join("run")).unwrap();
    Run { _tmp: tmp, dir }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chfrisk"))
}

#[test]
fn ten_subject_cohort_extracts_cleanly() {
    let tmp = TempDir::new().unwrap();
    let summary = simulate(tmp.path(), 10, 1, 30.0);
    assert_eq!(summary.n, 10);
    let cfg = RunConfig::default();
    let (features, diag) = (tmp.path().join("f.csv"), tmp.path().join("d.json"));
    let d = cmd_extract(&tmp.path().join("manifest.csv"), &cfg, &features, &diag).unwrap();
    assert_eq!(d.n_extracted, 10);
    assert!(d.excluded.is_empty() && d.missing_values.is_empty(), "{d:?}");
    let table = read_features(&features).unwrap();
    assert_eq!(table.ids.len(), 10);
    assert_eq!(table.names, feature_names());

    let first = fs::read(&features).unwrap();
    cmd_extract(&tmp.path().join("manifest.csv"), &cfg, &features, &diag).unwrap();
    assert_eq!(first, fs::read(&features).unwrap());
}

#[test]
fn noiseless_cohort_has_no_diagnostics() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 400, 2, 30.0);
    let d = cmd_extract(&tmp.path().join("manifest.csv"), &RunConfig::default(), &tmp.path().join("f.csv"), &tmp.path().join("d.json")).unwrap();
    assert_eq!(d.n_extracted, 400);
    assert!(d.excluded.is_empty(), "{:?}", d.excluded);
}

#[test]
fn event_rate_flag_reflects_the_request() {
    let tmp = TempDir::new().unwrap();
    let s = simulate(tmp.path(), 3000, 6, 5.0);
    assert_eq!(s.event_rate_within_2pct, (s.event_rate - 0.25).abs() <= 0.02);
    assert!(s.event_rate_within_2pct, "{s:?}");
    assert!(s.oracle_c_index > 0.8 && s.oracle_c_index < 1.0);
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["subjects"].as_array().unwrap().len(), 3000);
}

#[test]
fn duplicate_manifest_id_is_named() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 10, 1, 10.0);
    let manifest = tmp.path().join("manifest.csv");
    let mut rows = read_manifest(&manifest).unwrap();
    let dup = rows[1].record_id.clone();
    rows[3].record_id = dup.clone();
    write_manifest(&manifest, &rows).unwrap();
    let err = read_manifest(&manifest).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    assert!(err.to_string().contains(&format!("`{dup}`")), "{err}");
}

#[test]
fn malformed_manifest_reports_row() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 10, 1, 10.0);
    let manifest = tmp.path().join("manifest.csv");
    let text = fs::read_to_string(&manifest).unwrap();
    let broken: Vec<String> =
        text.lines().enumerate().map(|(i, l)| if i == 3 { l.replacen(",250,", ",abc,", 1) } else { l.to_string() }).collect();
    fs::write(&manifest, broken.join("\n")).unwrap();
    let err = read_manifest(&manifest).unwrap_err().to_string();
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn split_and_model_are_reproducible() {
    let cfg = small_config();
    let run = trained(300, &cfg);
    let split = read_split(&run.path("run/split.csv")).unwrap();
    let n_test = split.iter().filter(|(_, p)| *p == Part::Test).count();
    assert!((n_test as f64 - 90.0).abs() <= 2.0, "{n_test}");

    let model = fs::read(run.path("run/model.json")).unwrap();
    let cv = fs::read(run.path("run/cv_report.csv")).unwrap();
    cmd_train(&run.path("features.csv"), &cfg, &run.path("again")).unwrap();
    assert_eq!(model, fs::read(run.path("again/model.json")).unwrap());
    assert_eq!(cv, fs::read(run.path("again/cv_report.csv")).unwrap());
    assert_eq!(fs::read(run.path("run/split.csv")).unwrap(), fs::read(run.path("again/split.csv")).unwrap());
}

#[test]
fn best_row_of_cv_report_reproduces_the_model() {
    let cfg = small_config();
    let run = trained(300, &cfg);
    let report = fs::read_to_string(run.path("run/cv_report.csv")).unwrap();
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    let best: Vec<&Vec<String>> = rows.iter().filter(|r| r[col("best")] == "1").collect();
    assert_eq!(best.len(), 1);
    let best = best[0];
    let top = rows.iter().map(|r| r[col("mean_cindex")].parse::<f64>().unwrap()).fold(f64::MIN, f64::max);
    assert_eq!(best[col("mean_cindex")].parse::<f64>().unwrap(), top);

    let mut params = cfg.base_params();
    params.n_trees = best[col("n_trees")].parse().unwrap();
    params.max_depth = best[col("max_depth")].parse().unwrap();
    params.learning_rate = best[col("learning_rate")].parse().unwrap();
    params.lambda = best[col("lambda")].parse().unwrap();
    params.alpha = best[col("alpha")].parse().unwrap();
    params.sigma = best[col("sigma")].parse().unwrap();
    let table = read_features(&run.path("features.csv")).unwrap();
    let split = read_split(&run.path("run/split.csv")).unwrap();
    let train: Vec<usize> = (0..split.len()).filter(|&i| split[i].1 == Part::Train).collect();
    let refit = fit(&table.dataset().unwrap().subset(&train), &params).unwrap();
    let saved = load_model(&run.path("run/model.json")).unwrap();
    assert_eq!(model_to_json(&refit).unwrap(), model_to_json(&saved).unwrap());
}

#[test]
fn report_has_the_four_metrics_and_is_deterministic() {
    let cfg = small_config();
    let run = trained(400, &cfg);
    let out = run.path("report.json");
    let r = cmd_evaluate(&run.path("run/model.json"), &run.path("features.csv"), &run.path("run/split.csv"), &cfg, true, &out).unwrap();
    let first = fs::read(&out).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    for model in ["xgboost_aft", "cox"] {
        let metrics = json["models"][model].as_object().unwrap();
        let mut keys: Vec<&str> = metrics.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["auc_1y", "auc_2y", "avg_cd_auc", "c_index"]);
        for m in metrics.values() {
            assert!(m["lo"].as_f64().unwrap() <= m["hi"].as_f64().unwrap());
        }
    }
    assert_eq!(r.n_test + r.n_train, 400);
    cmd_evaluate(&run.path("run/model.json"), &run.path("features.csv"), &run.path("run/split.csv"), &cfg, true, &out).unwrap();
    assert_eq!(first, fs::read(&out).unwrap());
}

#[test]
fn evaluate_refuses_mismatched_features() {
    let cfg = small_config();
    let run = trained(200, &cfg);
    let text = fs::read_to_string(run.path("features.csv")).unwrap();
    let swapped = text.replacen("mean_hr,sdnn", "sdnn,mean_hr", 1);
    fs::write(run.path("swapped.csv"), swapped).unwrap();
    let err = cmd_evaluate(&run.path("run/model.json"), &run.path("swapped.csv"), &run.path("run/split.csv"), &cfg, false, &run.path("r.json"))
        .unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    assert!(err.to_string().contains("schema mismatch"), "{err}");
}

#[test]
fn single_length_seglen_equals_evaluate() {
    let cfg = small_config();
    let run = trained(300, &cfg);
    let report = cmd_evaluate(&run.path("run/model.json"), &run.path("features.csv"), &run.path("run/split.csv"), &cfg, false, &run.path("r.json")).unwrap();
    let rows = cmd_seglen(&run.path("manifest.csv"), &[30.0], &cfg, &run.path("seglen.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].c_index, report.models.xgboost_aft.c_index);
}

#[test]
fn seglen_reports_each_length_and_skips_short_records() {
    let cfg = small_config();
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), 300, 8, 60.0);
    let rows = cmd_seglen(&tmp.path().join("manifest.csv"), &[30.0, 60.0, 90.0], &cfg, &tmp.path().join("s.csv"));
    // 90 s exceeds every record, so no subject remains for the last length
    assert!(rows.is_err());
    let rows = cmd_seglen(&tmp.path().join("manifest.csv"), &[30.0, 60.0], &cfg, &tmp.path().join("s.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].segments, 2);
    assert!(rows[0].overlaps_first);
    assert_eq!(rows[1].overlaps_first, intervals_overlap(&rows[0].c_index, &rows[1].c_index));
    let csv = fs::read_to_string(tmp.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let manifest = tmp.path().join("manifest.csv");
    let mut m = read_manifest(&manifest).unwrap();
    let short = tmp.path().join("short.csv");
    fs::write(&short, "ecg\n0\n0\n0\n").unwrap();
    m[0].ecg_path = short.to_string_lossy().into_owned();
    write_manifest(&manifest, &m).unwrap();
    let rows = cmd_seglen(&manifest, &[30.0], &cfg, &tmp.path().join("s.csv")).unwrap();
    assert_eq!((rows[0].n_subjects, rows[0].n_skipped), (299, 1));
}

#[test]
fn global_explanation_covers_rows_times_features() {
    let cfg = small_config();
    let run = trained(300, &cfg);
    let r = cmd_explain_global(&run.path("run/model.json"), &run.path("features.csv"), Some(&run.path("run/split.csv")), &cfg, &run.path("explain"))
        .unwrap();
    let csv = fs::read_to_string(run.path("explain/shap_values.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, r.n_rows * feature_names().len());
    assert_eq!(r.features.len(), feature_names().len());
    assert!(r.features.windows(2).all(|w| w[0].importance >= w[1].importance));
}

#[test]
fn patient_report_is_locally_accurate() {
    let cfg = small_config();
    let run = trained(300, &cfg);
    let f = cmd_explain_patient(&run.path("run/model.json"), &run.path("features.csv"), Some(&run.path("run/split.csv")), "S005", &cfg, &run.path("p.json"))
        .unwrap();
    let total: f64 = f.report.base_value + f.report.contributions.iter().map(|c| c.contribution).sum::<f64>();
    assert!((total - f.report.probability).abs() < 1e-9, "{total} vs {}", f.report.probability);
    let mags: Vec<f64> = f.report.contributions.iter().map(|c| c.contribution.abs()).collect();
    assert!(mags.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn binary_exit_codes() {
    let cfg = small_config();
    let run = trained(200, &cfg);
    fs::write(run.path("cfg.toml"), cfg.to_toml()).unwrap();

    let out = bin()
        .args(["explain", "--model"])
        .arg(run.path("run/model.json"))
        .arg("--features")
        .arg(run.path("features.csv"))
        .args(["--patient", "nobody", "--out"])
        .arg(run.path("p.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("nobody"), "{err}");

    let out = bin().args(["train", "--features", "/nonexistent.csv", "--out"]).arg(run.path("x")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);

    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);

    fs::write(run.path("bad.toml"), "quality_threshold = 1.5\n").unwrap();
    let out = bin().args(["extract", "--manifest"]).arg(run.path("manifest.csv")).arg("--out").arg(run.path("f2.csv"))
        .arg("--diagnostics").arg(run.path("d2.json")).arg("--config").arg(run.path("bad.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["evaluate", "--model"])
        .arg(run.path("run/model.json"))
        .arg("--features")
        .arg(run.path("features.csv"))
        .arg("--split")
        .arg(run.path("run/split.csv"))
        .arg("--out")
        .arg(run.path("r.json"))
        .arg("--config")
        .arg(run.path("cfg.toml"))
        .arg("--cox")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.path("r.json").exists());
}
