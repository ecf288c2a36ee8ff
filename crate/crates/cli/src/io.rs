//! File formats: cohort manifest, per-record sample files, the feature table
//! and the train/test split.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chfrisk::features::{feature_names, HISTORY_NAMES};
use chfrisk::survival::SurvivalLabel;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn manifest_header() -> Vec<String> {
    let mut h: Vec<String> = ["record_id", "ecg_path", "fs", "age", "sex"].iter().map(|s| s.to_string()).collect();
    h.extend(HISTORY_NAMES.iter().map(|s| s.to_string()));
    h.push("time".into());
    h.push("event".into());
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub record_id: String,
    /// As written in the manifest.
    pub ecg_path: String,
    /// Resolved against the manifest's directory.
    pub resolved_path: PathBuf,
    pub fs: f64,
    pub age: f64,
    pub sex: bool,
    pub history: [bool; 10],
    pub time: f64,
    pub event: bool,
}

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

fn read_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    data_err(format!("{}: {e}", path.display()))
}

fn parse_f64(field: &str, what: &str, row: usize) -> CliResult<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| data_err(format!("row {row}: `{what}` is not a finite number: `{field}`")))
}

fn parse_flag(field: &str, what: &str, row: usize) -> CliResult<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(data_err(format!("row {row}: `{what}` must be 0 or 1, got `{other}`"))),
    }
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path).map_err(|e| read_err(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| read_err(path, e))?.iter().map(|s| s.trim().to_string()).collect();
    if header != manifest_header() {
        return Err(data_err(format!(
            "{}: manifest header must be `{}`",
            path.display(),
            manifest_header().join(",")
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let r = record.map_err(|e| data_err(format!("{}: row {row}: {e}", path.display())))?;
        let record_id = r[0].trim().to_string();
        if record_id.is_empty() {
            return Err(data_err(format!("row {row}: empty record_id")));
        }
        if !seen.insert(record_id.clone()) {
            return Err(data_err(format!("row {row}: duplicate record id `{record_id}`")));
        }
        let ecg_path = r[1].trim().to_string();
        let fs = parse_f64(&r[2], "fs", row)?;
        if fs <= 0.0 {
            return Err(data_err(format!("row {row}: fs must be positive")));
        }
        let mut history = [false; 10];
        for (j, h) in history.iter_mut().enumerate() {
            *h = parse_flag(&r[5 + j], HISTORY_NAMES[j], row)?;
        }
        let time = parse_f64(&r[15], "time", row)?;
        if time <= 0.0 {
            return Err(data_err(format!("row {row}: time must be positive")));
        }
        rows.push(ManifestRow {
            record_id,
            resolved_path: base.join(&ecg_path),
            ecg_path,
            fs,
            age: parse_f64(&r[3], "age", row)?,
            sex: parse_flag(&r[4], "sex", row)?,
            history,
            time,
            event: parse_flag(&r[16], "event", row)?,
        });
    }
    if rows.is_empty() {
        return Err(data_err(format!("{}: manifest has no rows", path.display())));
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| read_err(path, e))?;
    w.write_record(manifest_header()).map_err(|e| read_err(path, e))?;
    let b = |v: bool| if v { "1".to_string() } else { "0".to_string() };
    for r in rows {
        let mut fields = vec![r.record_id.clone(), r.ecg_path.clone(), r.fs.to_string(), r.age.to_string(), b(r.sex)];
        fields.extend(r.history.iter().map(|h| b(*h)));
        fields.push(r.time.to_string());
        fields.push(b(r.event));
        w.write_record(&fields).map_err(|e| read_err(path, e))?;
    }
    w.flush().map_err(|e| read_err(path, e))
}

/// Single column `ecg`, one sample per line.
pub fn read_record(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| read_err(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ecg") {
        return Err(data_err(format!("{}: record must start with the header `ecg`", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| data_err(format!("{}: line {}: bad sample `{l}`", path.display(), k + 2)))
        })
        .collect()
}

pub fn write_record(path: &Path, samples: &[f64]) -> CliResult<()> {
    let mut out = String::with_capacity(samples.len() * 12 + 4);
    out.push_str("ecg\n");
    for v in samples {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| read_err(path, e))
}

/// Feature matrix with labels, one subject per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    /// NaN marks a missing value.
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<SurvivalLabel>,
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_features(path: &Path, table: &FeatureTable) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| read_err(path, e))?;
    let mut header = vec!["record_id".to_string()];
    header.extend(table.names.iter().cloned());
    header.push("time".into());
    header.push("event".into());
    w.write_record(&header).map_err(|e| read_err(path, e))?;
    for ((id, row), label) in table.ids.iter().zip(&table.x).zip(&table.labels) {
        let mut fields = vec![id.clone()];
        fields.extend(row.iter().map(|v| fmt_value(*v)));
        fields.push(label.time.to_string());
        fields.push(if label.event { "1".into() } else { "0".into() });
        w.write_record(&fields).map_err(|e| read_err(path, e))?;
    }
    w.flush().map_err(|e| read_err(path, e))
}

pub fn read_features(path: &Path) -> CliResult<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new().from_path(path).map_err(|e| read_err(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| read_err(path, e))?.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 4 || header[0] != "record_id" || header[header.len() - 2] != "time" || header[header.len() - 1] != "event" {
        return Err(data_err(format!("{}: header must be `record_id,<features>,time,event`", path.display())));
    }
    let names: Vec<String> = header[1..header.len() - 2].to_vec();
    let p = names.len();
    let mut table = FeatureTable { ids: Vec::new(), names, x: Vec::new(), labels: Vec::new() };
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let r = record.map_err(|e| data_err(format!("{}: row {row}: {e}", path.display())))?;
        table.ids.push(r[0].to_string());
        let mut x = Vec::with_capacity(p);
        for j in 0..p {
            let field = r[j + 1].trim();
            x.push(if field.is_empty() { f64::NAN } else { parse_f64(field, &table.names[j], row)? });
        }
        table.x.push(x);
        let time = parse_f64(&r[p + 1], "time", row)?;
        let event = parse_flag(&r[p + 2], "event", row)?;
        table.labels.push(SurvivalLabel { time, event });
    }
    Ok(table)
}

impl FeatureTable {
    pub fn dataset(&self) -> CliResult<chfrisk::features::SurvivalDataset> {
        let canonical = feature_names();
        let binary = self.names.iter().map(|n| chfrisk::features::is_binary_feature(n)).collect();
        if self.names != canonical {
            return Err(data_err(format!("feature columns must be `{}`", canonical.join(","))));
        }
        Ok(chfrisk::features::SurvivalDataset::new(
            self.ids.clone(),
            self.names.clone(),
            binary,
            self.x.clone(),
            self.labels.clone(),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Test,
}

pub fn write_split(path: &Path, ids: &[String], parts: &[Part]) -> CliResult<()> {
    let mut out = String::from("record_id,split\n");
    for (id, p) in ids.iter().zip(parts) {
        out.push_str(&format!("{id},{}\n", if *p == Part::Train { "train" } else { "test" }));
    }
    std::fs::write(path, out).map_err(|e| read_err(path, e))
}

pub fn read_split(path: &Path) -> CliResult<Vec<(String, Part)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| read_err(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| read_err(path, e))?.iter().map(String::from).collect();
    if header != ["record_id", "split"] {
        return Err(data_err(format!("{}: header must be `record_id,split`", path.display())));
    }
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let r = record.map_err(|e| data_err(format!("{}: row {}: {e}", path.display(), k + 1)))?;
        let part = match &r[1] {
            "train" => Part::Train,
            "test" => Part::Test,
            other => return Err(data_err(format!("{}: row {}: unknown split `{other}`", path.display(), k + 1))),
        };
        out.push((r[0].to_string(), part));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| data_err(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| read_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| read_err(path, e))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| read_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str) -> ManifestRow {
        let mut history = [false; 10];
        history[3] = true;
        ManifestRow {
            record_id: id.into(),
            ecg_path: format!("records/{id}.csv"),
            resolved_path: PathBuf::new(),
            fs: 250.0,
            age: 61.5,
            sex: true,
            history,
            time: 3.25,
            event: false,
        }
    }

    #[test]
    fn manifest_round_trip_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let rows = vec![row("A"), row("B")];
        write_manifest(&path, &rows).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(b.resolved_path, dir.path().join(&a.ecg_path));
            assert_eq!(ManifestRow { resolved_path: PathBuf::new(), ..b.clone() }, *a);
        }
    }

    #[test]
    fn manifest_rejects_bad_flags_and_times() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let mut bad = row("A");
        bad.time = -1.0;
        write_manifest(&path, &[bad]).unwrap();
        let err = read_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("time must be positive"), "{err}");

        let text = std::fs::read_to_string(&path).unwrap().replace(",-1,0", ",1,2");
        std::fs::write(&path, text).unwrap();
        let err = read_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("`event` must be 0 or 1"), "{err}");
    }

    #[test]
    fn features_keep_missing_values_and_exact_floats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let table = FeatureTable {
            ids: vec!["A".into(), "B".into()],
            names: vec!["f1".into(), "f2".into()],
            x: vec![vec![0.1 + 0.2, f64::NAN], vec![-1e-300, 7.0]],
            labels: vec![SurvivalLabel { time: 1.5, event: true }, SurvivalLabel { time: 2.0, event: false }],
        };
        write_features(&path, &table).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back.ids, table.ids);
        assert_eq!(back.names, table.names);
        assert_eq!(back.labels, table.labels);
        for (a, b) in table.x.iter().flatten().zip(back.x.iter().flatten()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert!(back.dataset().is_err());
    }

    #[test]
    fn split_and_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let split = dir.path().join("split.csv");
        let ids = vec!["A".to_string(), "B".to_string()];
        write_split(&split, &ids, &[Part::Test, Part::Train]).unwrap();
        assert_eq!(read_split(&split).unwrap(), vec![("A".into(), Part::Test), ("B".into(), Part::Train)]);

        let rec = dir.path().join("r.csv");
        let samples = vec![0.0, -0.123456789012345, 1e-7];
        write_record(&rec, &samples).unwrap();
        assert_eq!(read_record(&rec).unwrap(), samples);
        std::fs::write(&rec, "ecg\n1.0\nnan\n").unwrap();
        assert!(read_record(&rec).unwrap_err().to_string().contains("line 3"));
    }
}
