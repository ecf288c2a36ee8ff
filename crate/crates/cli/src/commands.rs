//! The pipeline commands. Each one reads its inputs from disk, runs the
//! library code and writes its artifacts; numeric work runs in parallel and
//! all writes happen afterwards in a fixed order.

use std::path::{Path, PathBuf};

use chfrisk::boosting::{cross_validate, fit, load_model, predict_tau, save_model, AftModel, CvResult};
use chfrisk::explain::{explain_patient, global_summary, sample_background, KernelConfig, PatientReport};
use chfrisk::features::{
    average_ecg_features, ecg_features, hrv_features, EcgFeatures, FeatureRow, SurvivalDataset, N_FEATURES,
};
use chfrisk::metrics::{antolini_cindex, estimate, metric_report, Estimate, Metric, MetricReport, SurvivalPredictions};
use chfrisk::signal::{select_segments, CycleEnsemble, EcgRecord};
use chfrisk::simulate::{subject_ecg_params, synth_cohort, synth_ecg, true_survival, CohortGenParams};
use chfrisk::survival::{cox_fit, CoxConfig};
use chfrisk::{seed, Error};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{MultiSegment, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    ensure_dir, read_features, read_manifest, read_record, read_split, write_features, write_json, write_manifest,
    write_record, write_split, write_text, FeatureTable, ManifestRow, Part,
};

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    pub cohort: CohortGenParams,
    pub fs: f64,
    pub duration_s: f64,
    pub noise_std: f64,
}

impl Default for SimulateArgs {
    fn default() -> Self {
        Self { cohort: CohortGenParams::default(), fs: 250.0, duration_s: 30.0, noise_std: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n: usize,
    pub events: usize,
    pub event_rate: f64,
    pub requested_event_rate: f64,
    pub event_rate_within_2pct: bool,
    /// C-index of the generating model's own survival curves.
    pub oracle_c_index: f64,
    pub intercept: f64,
    pub sigma_true: f64,
}

#[derive(Serialize)]
struct TruthSubject<'a> {
    record_id: &'a str,
    true_tau: f64,
    latent_time: f64,
}

#[derive(Serialize)]
struct TruthFile<'a> {
    summary: &'a SimulateSummary,
    params: &'a SimulateArgs,
    subjects: Vec<TruthSubject<'a>>,
}

/// Write `manifest.csv`, `records/<id>.csv` and `truth.json` under `out`.
pub fn cmd_simulate(out: &Path, args: &SimulateArgs) -> CliResult<SimulateSummary> {
    if !(args.fs > 90.0) || !(args.duration_s > 0.0) || !(args.noise_std >= 0.0) {
        return Err(CliError::Usage("simulate: need fs > 90 Hz, positive duration, non-negative noise".into()));
    }
    let cohort = synth_cohort(&args.cohort)?;
    let ds = &cohort.dataset;
    let truth = cohort.truth;
    let curves = {
        let x = ds.x.clone();
        SurvivalPredictions::custom(ds.labels.clone(), move |i, t| true_survival(&truth, &x[i], t))?
    };
    let events = ds.event_count();
    let event_rate = events as f64 / ds.len() as f64;
    let summary = SimulateSummary {
        n: ds.len(),
        events,
        event_rate,
        requested_event_rate: args.cohort.event_rate,
        event_rate_within_2pct: (event_rate - args.cohort.event_rate).abs() <= 0.02,
        oracle_c_index: antolini_cindex(&curves)?,
        intercept: truth.intercept,
        sigma_true: truth.sigma,
    };

    let records_dir = out.join("records");
    ensure_dir(&records_dir)?;
    let mut manifest = Vec::with_capacity(ds.len());
    for chunk_start in (0..ds.len()).step_by(256) {
        let chunk: Vec<usize> = (chunk_start..(chunk_start + 256).min(ds.len())).collect();
        let signals: Vec<Vec<f64>> = chunk
            .par_iter()
            .map(|&i| {
                let p = subject_ecg_params(&ds.x[i], args.fs, args.duration_s, args.noise_std, seed::derive(args.cohort.seed, "ecg", i as u64));
                synth_ecg(&p).samples
            })
            .collect();
        for (&i, samples) in chunk.iter().zip(&signals) {
            let id = &ds.ids[i];
            let rel = format!("records/{id}.csv");
            write_record(&out.join(&rel), samples)?;
            let row = FeatureRow::from_vec(&ds.x[i]);
            manifest.push(ManifestRow {
                record_id: id.clone(),
                ecg_path: rel,
                resolved_path: PathBuf::new(),
                fs: args.fs,
                age: row.age,
                sex: row.sex,
                history: row.history,
                time: ds.labels[i].time,
                event: ds.labels[i].event,
            });
        }
    }
    write_manifest(&out.join("manifest.csv"), &manifest)?;
    let subjects = (0..ds.len())
        .map(|i| TruthSubject { record_id: &ds.ids[i], true_tau: cohort.true_tau[i], latent_time: cohort.latent_times[i] })
        .collect();
    write_json(&out.join("truth.json"), &TruthFile { summary: &summary, params: args, subjects })?;
    Ok(summary)
}

// ----------------------------------------------------------------- extract

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingValue {
    pub record_id: String,
    pub feature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractDiagnostics {
    pub n_records: usize,
    pub n_extracted: usize,
    pub segments_per_record: usize,
    pub excluded: Vec<Excluded>,
    pub missing_values: Vec<MissingValue>,
}

fn combine_segments(ensembles: &[CycleEnsemble], config: &RunConfig) -> chfrisk::Result<EcgFeatures> {
    let per_segment: Vec<EcgFeatures> =
        ensembles.iter().map(|e| ecg_features(e, &config.features())).collect::<chfrisk::Result<_>>()?;
    let mut combined = average_ecg_features(&per_segment).ok_or(Error::NoCycles)?;
    if config.multi_segment == MultiSegment::ConcatRr && ensembles.len() > 1 {
        let rr: Vec<f64> = ensembles.iter().flat_map(|e| e.rr_intervals.iter().copied()).collect();
        let hrv = hrv_features(&rr, config.features().population_variance)?;
        combined.mean_hr = hrv.mean_hr;
        combined.sdnn = hrv.sdnn;
        combined.ratio_sd1_sd2 = hrv.ratio_sd1_sd2().ok();
    }
    Ok(combined)
}

/// Features of every manifest record from `segments` quality-passing
/// segments. Records that cannot supply them are excluded with a reason;
/// unreadable files abort.
pub fn extract_features(
    rows: &[ManifestRow],
    config: &RunConfig,
    segments: usize,
) -> CliResult<(FeatureTable, ExtractDiagnostics)> {
    let signal = config.signal();
    let outcomes: Vec<CliResult<Result<EcgFeatures, String>>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let samples = read_record(&row.resolved_path)?;
            let needed = (segments as f64 * config.segment_seconds * row.fs).round() as usize;
            if samples.len() < needed {
                return Ok(Err(format!(
                    "record has {:.1} s, {segments} segment(s) need {:.1} s",
                    samples.len() as f64 / row.fs,
                    needed as f64 / row.fs
                )));
            }
            let record = EcgRecord { record_id: row.record_id.clone(), fs: row.fs, samples };
            let chosen = match select_segments(&record, segments, &signal, config.derived("segments", i as u64)) {
                Ok(c) => c,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let ensembles: Vec<CycleEnsemble> = chosen.into_iter().map(|(_, e)| e).collect();
            Ok(combine_segments(&ensembles, config).map_err(|e| e.to_string()))
        })
        .collect();

    let mut table = FeatureTable {
        ids: Vec::new(),
        names: chfrisk::features::feature_names(),
        x: Vec::new(),
        labels: Vec::new(),
    };
    let mut diagnostics = ExtractDiagnostics {
        n_records: rows.len(),
        n_extracted: 0,
        segments_per_record: segments,
        excluded: Vec::new(),
        missing_values: Vec::new(),
    };
    for (row, outcome) in rows.iter().zip(outcomes) {
        match outcome? {
            Ok(ecg) => {
                let fr = FeatureRow { age: row.age, sex: row.sex, ecg, history: row.history };
                for name in fr.missing() {
                    diagnostics.missing_values.push(MissingValue { record_id: row.record_id.clone(), feature: name.into() });
                }
                table.ids.push(row.record_id.clone());
                table.x.push(fr.to_vec());
                table.labels.push(chfrisk::survival::SurvivalLabel::new(row.time, row.event)?);
            }
            Err(reason) => diagnostics.excluded.push(Excluded { record_id: row.record_id.clone(), reason }),
        }
    }
    diagnostics.n_extracted = table.ids.len();
    Ok((table, diagnostics))
}

pub fn cmd_extract(manifest: &Path, config: &RunConfig, features_out: &Path, diagnostics_out: &Path) -> CliResult<ExtractDiagnostics> {
    let rows = read_manifest(manifest)?;
    let (table, diagnostics) = extract_features(&rows, config, 1)?;
    if table.ids.is_empty() {
        return Err(CliError::Data("no record produced a usable segment".into()));
    }
    write_features(features_out, &table)?;
    write_json(diagnostics_out, &diagnostics)?;
    Ok(diagnostics)
}

// ------------------------------------------------------------------- train

/// Stratified by event status: in each stratum a seeded shuffle sends the
/// first `round(fraction * size)` subjects to the test part.
pub fn stratified_split(labels: &[chfrisk::survival::SurvivalLabel], test_fraction: f64, seed_value: u64) -> Vec<Part> {
    let mut parts = vec![Part::Train; labels.len()];
    for (stratum, event) in [(0u64, true), (1u64, false)] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].event == event).collect();
        idx.shuffle(&mut seed::rng(seed_value, "split", stratum));
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..n_test] {
            parts[i] = Part::Test;
        }
    }
    parts
}

fn indices(parts: &[Part], which: Part) -> Vec<usize> {
    (0..parts.len()).filter(|&i| parts[i] == which).collect()
}

pub struct TrainOutput {
    pub model: AftModel,
    pub cv: CvResult,
    pub parts: Vec<Part>,
}

pub fn train_dataset(dataset: &SurvivalDataset, config: &RunConfig) -> CliResult<TrainOutput> {
    if dataset.event_count() == 0 {
        return Err(CliError::Data("degenerate labels: no events".into()));
    }
    let parts = stratified_split(&dataset.labels, config.test_fraction, config.derived("split", 0));
    let train = dataset.subset(&indices(&parts, Part::Train));
    let cv = cross_validate(&train, &config.grid(), config.cv_folds, config.derived("cv", 0))?;
    let model = fit(&train, &cv.best)?;
    Ok(TrainOutput { model, cv, parts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub best_candidate: usize,
    pub best_mean_cindex: f64,
}

/// Writes `model.json`, `cv_report.csv` and `split.csv` into `out_dir`.
pub fn cmd_train(features: &Path, config: &RunConfig, out_dir: &Path) -> CliResult<TrainSummary> {
    let table = read_features(features)?;
    let dataset = table.dataset()?;
    let out = train_dataset(&dataset, config)?;
    ensure_dir(out_dir)?;
    save_model(&out.model, &out_dir.join("model.json"))?;
    write_text(&out_dir.join("cv_report.csv"), &out.cv.to_csv())?;
    write_split(&out_dir.join("split.csv"), &dataset.ids, &out.parts)?;
    Ok(TrainSummary {
        n_train: indices(&out.parts, Part::Train).len(),
        n_test: indices(&out.parts, Part::Test).len(),
        best_candidate: out.cv.best_index,
        best_mean_cindex: out.cv.rows[out.cv.best_index].mean_cindex,
    })
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReports {
    pub xgboost_aft: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cox: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_train: usize,
    pub n_test: usize,
    pub test_events: usize,
    pub horizons: [f64; 2],
    pub level: f64,
    pub n_boot: usize,
    pub models: ModelReports,
}

fn check_schema(model: &AftModel, table: &FeatureTable) -> CliResult<()> {
    if model.feature_names != table.names {
        return Err(CliError::Data(format!(
            "schema mismatch: model expects `{}`, features file has `{}`",
            model.feature_names.join(","),
            table.names.join(",")
        )));
    }
    Ok(())
}

/// Reorder split assignments to follow the feature table.
fn align_split(table: &FeatureTable, split: &[(String, Part)]) -> CliResult<Vec<Part>> {
    if split.len() != table.ids.len() {
        return Err(CliError::Data(format!("split has {} rows, features {}", split.len(), table.ids.len())));
    }
    let lookup: std::collections::HashMap<&str, Part> = split.iter().map(|(id, p)| (id.as_str(), *p)).collect();
    table
        .ids
        .iter()
        .map(|id| lookup.get(id.as_str()).copied().ok_or_else(|| CliError::Data(format!("`{id}` missing from split"))))
        .collect()
}

pub fn aft_predictions(model: &AftModel, dataset: &SurvivalDataset) -> CliResult<SurvivalPredictions> {
    let tau = dataset.x.iter().map(|r| predict_tau(model, r)).collect::<chfrisk::Result<Vec<f64>>>()?;
    Ok(SurvivalPredictions::log_logistic(dataset.labels.clone(), tau, model.sigma)?)
}

/// Cox model on the same quantile-normalized features as the ensemble.
pub fn cox_predictions(model: &AftModel, train: &SurvivalDataset, test: &SurvivalDataset) -> CliResult<SurvivalPredictions> {
    let z = |ds: &SurvivalDataset| ds.x.iter().map(|r| model.transform_row(r)).collect::<chfrisk::Result<Vec<_>>>();
    let cox = cox_fit(&z(train)?, &train.labels, &train.feature_names, &CoxConfig::default())?;
    let lp = z(test)?.iter().map(|r| cox.linear_predictor(r)).collect();
    Ok(SurvivalPredictions::proportional_hazards(test.labels.clone(), lp, cox.baseline_cumhaz.clone())?)
}

pub fn evaluate_dataset(
    model: &AftModel,
    dataset: &SurvivalDataset,
    parts: &[Part],
    config: &RunConfig,
    with_cox: bool,
) -> CliResult<EvaluationReport> {
    let train = dataset.subset(&indices(parts, Part::Train));
    let test = dataset.subset(&indices(parts, Part::Test));
    let horizons = (config.horizon_1, config.horizon_2);
    let boot = config.bootstrap();
    let xgboost_aft = metric_report(&aft_predictions(model, &test)?, horizons, &boot)?;
    let cox = if with_cox { Some(metric_report(&cox_predictions(model, &train, &test)?, horizons, &boot)?) } else { None };
    Ok(EvaluationReport {
        n_train: train.len(),
        n_test: test.len(),
        test_events: test.event_count(),
        horizons: [config.horizon_1, config.horizon_2],
        level: config.level,
        n_boot: config.n_boot,
        models: ModelReports { xgboost_aft, cox },
    })
}

pub fn cmd_evaluate(
    model_path: &Path,
    features: &Path,
    split: &Path,
    config: &RunConfig,
    with_cox: bool,
    out: &Path,
) -> CliResult<EvaluationReport> {
    let model = load_model(model_path)?;
    let table = read_features(features)?;
    check_schema(&model, &table)?;
    let parts = align_split(&table, &read_split(split)?)?;
    let report = evaluate_dataset(&model, &table.dataset()?, &parts, config, with_cox)?;
    write_json(out, &report)?;
    Ok(report)
}

// ------------------------------------------------------------------ seglen

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeglenRow {
    pub length_s: f64,
    pub segments: usize,
    pub n_subjects: usize,
    pub n_skipped: usize,
    pub c_index: Estimate,
    /// Whether this interval overlaps the first length's interval.
    pub overlaps_first: bool,
}

pub fn intervals_overlap(a: &Estimate, b: &Estimate) -> bool {
    a.lo <= b.hi && b.lo <= a.hi
}

pub fn seglen_csv(rows: &[SeglenRow]) -> String {
    let mut out = String::from("length_s,segments,n_subjects,n_skipped,c_index,lo,hi,overlaps_first\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.length_s,
            r.segments,
            r.n_subjects,
            r.n_skipped,
            r.c_index.point,
            r.c_index.lo,
            r.c_index.hi,
            u8::from(r.overlaps_first)
        ));
    }
    out
}

/// Test-set C-index of the full extract, train and evaluate chain for each
/// total ECG length.
pub fn cmd_seglen(manifest: &Path, lengths: &[f64], config: &RunConfig, out: &Path) -> CliResult<Vec<SeglenRow>> {
    if lengths.is_empty() {
        return Err(CliError::Usage("seglen: no lengths given".into()));
    }
    let rows = read_manifest(manifest)?;
    let mut results: Vec<SeglenRow> = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let k = (length / config.segment_seconds).round();
        if k < 1.0 || (k * config.segment_seconds - length).abs() > 1e-9 {
            return Err(CliError::Usage(format!(
                "seglen: {length} s is not a whole number of {} s segments",
                config.segment_seconds
            )));
        }
        let k = k as usize;
        let (table, diagnostics) = extract_features(&rows, config, k)?;
        let dataset = table.dataset()?;
        let trained = train_dataset(&dataset, config)?;
        let test = dataset.subset(&indices(&trained.parts, Part::Test));
        let c_index = estimate(Metric::CIndex, &aft_predictions(&trained.model, &test)?, &config.bootstrap())?;
        let overlaps_first = results.first().is_none_or(|first| intervals_overlap(&first.c_index, &c_index));
        results.push(SeglenRow {
            length_s: length,
            segments: k,
            n_subjects: table.ids.len(),
            n_skipped: diagnostics.excluded.len(),
            c_index,
            overlaps_first,
        });
    }
    write_text(out, &seglen_csv(&results))?;
    Ok(results)
}

// ----------------------------------------------------------------- explain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub rank: usize,
    pub feature: String,
    pub importance: f64,
    /// Pearson correlation of feature value with the moving-median curve.
    pub trend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub base_value: f64,
    pub n_rows: usize,
    pub window: usize,
    pub top_k: usize,
    pub features: Vec<ImportanceEntry>,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn explain_inputs(
    model_path: &Path,
    features: &Path,
    split: Option<&Path>,
) -> CliResult<(AftModel, FeatureTable, Option<Vec<Part>>)> {
    let model = load_model(model_path)?;
    let table = read_features(features)?;
    check_schema(&model, &table)?;
    let parts = match split {
        Some(p) => Some(align_split(&table, &read_split(p)?)?),
        None => None,
    };
    Ok((model, table, parts))
}

/// Long-format SHAP table plus an importance summary, over the test rows
/// when a split is given and all rows otherwise.
pub fn cmd_explain_global(
    model_path: &Path,
    features: &Path,
    split: Option<&Path>,
    config: &RunConfig,
    out_dir: &Path,
) -> CliResult<ImportanceReport> {
    let (model, table, parts) = explain_inputs(model_path, features, split)?;
    let chosen: Vec<usize> = match &parts {
        Some(p) => indices(p, Part::Test),
        None => (0..table.ids.len()).collect(),
    };
    let rows: Vec<Vec<f64>> = chosen.iter().map(|&i| table.x[i].clone()).collect();
    let summary = global_summary(&model, &rows, config.shap_window)?;

    let mut csv = String::from("feature,record_id,value,shap,moving_median\n");
    for f in &summary.features {
        let j = model.feature_names.iter().position(|n| *n == f.feature).expect("model feature");
        // recover record ids in the summary's value order
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a][j].total_cmp(&rows[b][j]));
        for (k, &(value, shap)) in f.points.iter().enumerate() {
            let id = &table.ids[chosen[order[k]]];
            let v = if value.is_nan() { String::new() } else { value.to_string() };
            csv.push_str(&format!("{},{id},{v},{shap},{}\n", f.feature, f.moving_median[k]));
        }
    }
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("shap_values.csv"), &csv)?;

    let features = summary
        .ranking()
        .into_iter()
        .enumerate()
        .map(|(r, f)| {
            let values: Vec<f64> = f.points.iter().map(|p| p.0).collect();
            ImportanceEntry { rank: r + 1, feature: f.feature.clone(), importance: f.importance, trend: correlation(&values, &f.moving_median) }
        })
        .collect();
    let report = ImportanceReport {
        base_value: summary.base_value,
        n_rows: rows.len(),
        window: summary.window,
        top_k: config.top_k.min(N_FEATURES),
        features,
    };
    write_json(&out_dir.join("importance.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFile {
    pub record_id: String,
    #[serde(flatten)]
    pub report: PatientReport,
}

/// KernelSHAP report for one subject against a background drawn from the
/// training rows (all rows without a split).
pub fn cmd_explain_patient(
    model_path: &Path,
    features: &Path,
    split: Option<&Path>,
    patient: &str,
    config: &RunConfig,
    out: &Path,
) -> CliResult<PatientFile> {
    let (model, table, parts) = explain_inputs(model_path, features, split)?;
    let Some(i) = table.ids.iter().position(|id| id == patient) else {
        return Err(CliError::Usage(format!("unknown patient id `{patient}`")));
    };
    let pool: Vec<Vec<f64>> = match &parts {
        Some(p) => indices(p, Part::Train).into_iter().map(|k| table.x[k].clone()).collect(),
        None => table.x.clone(),
    };
    let background = sample_background(&pool, config.shap_background, config.derived("shap_background", 0));
    let kernel = KernelConfig { n_samples: config.kernel_samples, seed: config.derived("kernel_shap", 0) };
    let report = explain_patient(&model, &table.x[i], &background, config.patient_horizon, &kernel)?;
    let file = PatientFile { record_id: patient.to_string(), report };
    write_json(out, &file)?;
    Ok(file)
}
