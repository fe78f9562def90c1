use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::LabeledDataset;
use crate::dist::{validate_distribution, DiscreteDistribution, Point};
use crate::error::{Error, Result};

/// Column layout of a data file: feature columns `f0..f{d-1}` in any
/// order, plus optional named columns.
struct Layout {
    features: Vec<usize>,
    label: Option<usize>,
    domain: Option<usize>,
    weight: Option<usize>,
    width: usize,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

fn layout(path: &Path, headers: &csv::StringRecord) -> Result<Layout> {
    let mut features: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut label, mut domain, mut weight) = (None, None, None);
    for (col, name) in headers.iter().enumerate() {
        let name = name.trim();
        match name {
            "label" => label = Some(col),
            "domain" => domain = Some(col),
            "weight" => weight = Some(col),
            _ => {
                if let Some(idx) = name.strip_prefix('f').and_then(|s| s.parse::<usize>().ok()) {
                    if features.insert(idx, col).is_some() {
                        return Err(parse_err(path, 1, format!("duplicate column {name}")));
                    }
                }
            }
        }
    }
    if features.is_empty() {
        return Err(parse_err(path, 1, "no feature columns f0, f1, ..."));
    }
    if let Some((pos, _)) = features.keys().enumerate().find(|(pos, idx)| pos != *idx) {
        return Err(parse_err(path, 1, format!("feature column f{pos} is missing")));
    }
    Ok(Layout {
        features: features.into_values().collect(),
        label,
        domain,
        weight,
        width: headers.len(),
    })
}

struct Row {
    line: u64,
    point: Point,
    label: Option<String>,
    domain: Option<String>,
    weight: Option<f64>,
}

fn read_rows(path: &Path) -> Result<(Layout, Vec<Row>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let layout = layout(path, &headers)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != layout.width {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", layout.width, record.len()),
            ));
        }
        let number = |col: usize, what: &str| -> Result<f64> {
            let s = &record[col];
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("{what} {s:?} is not a finite number")))
        };
        let coords = layout
            .features
            .iter()
            .map(|&c| number(c, "feature"))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            line,
            point: Point::new(coords).map_err(|_| parse_err(path, line, "invalid point"))?,
            label: layout.label.map(|c| record[c].to_string()),
            domain: layout.domain.map(|c| record[c].to_string()),
            weight: layout.weight.map(|c| number(c, "weight")).transpose()?,
        });
    }
    Ok((layout, rows))
}

/// Reads a labeled data file with columns `f0..f{d-1}`, `label` (1 or 2)
/// and optionally `domain`.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let (layout, rows) = read_rows(path)?;
    if layout.label.is_none() {
        return Err(parse_err(path, 1, "missing label column"));
    }
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        let raw = row.label.as_deref().unwrap_or_default();
        labels.push(match raw {
            "1" => 1,
            "2" => 2,
            _ => {
                return Err(Error::Label {
                    path: path.to_path_buf(),
                    line: row.line as usize,
                    label: raw.to_string(),
                })
            }
        });
    }
    let domains: Option<Vec<String>> = layout
        .domain
        .map(|_| rows.iter().map(|r| r.domain.clone().unwrap_or_default()).collect());
    let mut data = LabeledDataset::new(rows.into_iter().map(|r| r.point).collect(), labels)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    if let Some(d) = domains {
        data = data.with_domains(d)?;
    }
    Ok(data)
}

/// Reads a distribution: feature columns plus an optional `weight` column
/// (uniform weights without it). Other columns are ignored.
pub fn load_distribution_csv(path: &Path) -> Result<DiscreteDistribution> {
    let (layout, rows) = read_rows(path)?;
    if rows.is_empty() {
        return Err(Error::EmptySupport);
    }
    let n = rows.len() as f64;
    let weights: Vec<f64> = match layout.weight {
        Some(_) => rows.iter().map(|r| r.weight.unwrap_or_default()).collect(),
        None => vec![1.0 / n; rows.len()],
    };
    validate_distribution(rows.into_iter().map(|r| r.point).collect(), weights)
}

pub fn write_distribution_csv(path: &Path, dist: &DiscreteDistribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = (0..dist.dim()).map(|i| format!("f{i}")).collect();
    header.push("weight".into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (p, wt) in dist.support().iter().zip(dist.weights()) {
        let mut rec: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
        rec.push(wt.to_string());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub source_size: usize,
    pub trial: usize,
    pub method: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source_size: usize,
    pub method: String,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
}

/// Mean and standard deviation per `(source_size, method)`, in order of
/// first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    let mut groups: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = (r.source_size, r.method.as_str());
        groups
            .entry(key)
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(r.accuracy);
    }
    keys.into_iter()
        .map(|key| {
            let xs = &groups[&key];
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                source_size: key.0,
                method: key.1.to_string(),
                trials: xs.len(),
                mean,
                std,
            }
        })
        .collect()
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Writes one CSV row per record and, if asked, the JSON summary. Missing
/// parent directories are created.
pub fn emit_results(records: &[TrialRecord], csv_path: &Path, summary_path: Option<&Path>) -> Result<()> {
    ensure_parent(csv_path)?;
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| csv_err(csv_path, e))?;
    w.write_record(["source_size", "trial", "method", "accuracy"])
        .map_err(|e| csv_err(csv_path, e))?;
    for r in records {
        w.write_record([
            r.source_size.to_string(),
            r.trial.to_string(),
            r.method.clone(),
            r.accuracy.to_string(),
        ])
        .map_err(|e| csv_err(csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    if let Some(path) = summary_path {
        ensure_parent(path)?;
        let text = serde_json::to_string_pretty(&serde_json::json!({ "summary": summarize(records) }))?;
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{text}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn load_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "ok.csv", "f0,f1,label\n0.1,0.2,1\n");
        let d = load_csv(&p).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels, vec![1]);
        assert_eq!(d.points[0].coords(), &[0.1, 0.2]);

        let p = write(&dir, "bad_label.csv", "f0,f1,label\n0.1,0.2,1\n0.3,0.4,3\n");
        match load_csv(&p).unwrap_err() {
            Error::Label { line, label, .. } => {
                assert_eq!(line, 3);
                assert_eq!(label, "3");
            }
            e => panic!("{e}"),
        }

        let p = write(&dir, "ragged.csv", "f0,f1,label\n0.1,0.2,1\n0.3,1\n");
        match load_csv(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(load_csv(Path::new("/nonexistent/x.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn domain_and_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "label,f1,domain,f0\n2,5,a,4\n1,7,b,6\n");
        let d = load_csv(&p).unwrap();
        assert_eq!(d.points[0].coords(), &[4.0, 5.0]);
        assert_eq!(d.domains.as_ref().unwrap(), &["a", "b"]);
    }

    #[test]
    fn distribution_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DiscreteDistribution::new(
            vec![Point::new(vec![0.5, 1.0]).unwrap(), Point::new(vec![-1.0, 2.0]).unwrap()],
            vec![0.25, 0.75],
        )
        .unwrap();
        let p = dir.path().join("dist.csv");
        write_distribution_csv(&p, &d).unwrap();
        assert_eq!(load_distribution_csv(&p).unwrap(), d);
        let u = write(&dir, "u.csv", "f0,label\n0,1\n1,2\n");
        assert_eq!(load_distribution_csv(&u).unwrap().weights(), &[0.5, 0.5]);
    }

    #[test]
    fn emit_and_summarize() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = Vec::new();
        for size in [20, 60] {
            for trial in 0..20 {
                for method in ["ours", "ours_truncated", "mixed_knn"] {
                    records.push(TrialRecord {
                        source_size: size,
                        trial,
                        method: method.into(),
                        accuracy: (trial as f64 + size as f64) / 100.0,
                    });
                }
            }
        }
        let csv_path = dir.path().join("r.csv");
        let json_path = dir.path().join("s.json");
        emit_results(&records, &csv_path, Some(&json_path)).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 121);
        let first = std::fs::read(&json_path).unwrap();
        emit_results(&records, &csv_path, Some(&json_path)).unwrap();
        assert_eq!(std::fs::read(&json_path).unwrap(), first);

        let summary = summarize(&records);
        assert_eq!(summary.len(), 6);
        let ours20: f64 = records
            .iter()
            .filter(|r| r.source_size == 20 && r.method == "ours")
            .map(|r| r.accuracy)
            .sum::<f64>()
            / 20.0;
        assert!((summary[0].mean - ours20).abs() < 1e-12);
    }
}
