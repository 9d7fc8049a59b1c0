//! CSV artifacts: corpus files, feature tables, per-run metrics, aggregated
//! report tables, OOS sweeps, and loss histories.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! regenerated from the same inputs is byte-identical and reads back to the
//! exact same values.

use crate::{CliError, CliResult};
use speedrs_core::approx::MmdDatasetRow;
use speedrs_core::neural::LossHistory;
use speedrs_core::pipeline::{FeatureTable, RowMeta};
use speedrs_core::sde::ModelSpec;
use std::path::Path;

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.parse()
        .map_err(|_| CliError::Config(format!("bad {what} value: {s:?}")))
}

fn parse_u64(s: &str, what: &str) -> CliResult<u64> {
    s.parse()
        .map_err(|_| CliError::Config(format!("bad {what} value: {s:?}")))
}

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path).map_err(io_or_config)?)
}

fn io_or_config(e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            _ => unreachable!(),
        }
    } else {
        CliError::Config(format!("malformed CSV: {e}"))
    }
}

fn read_rows(path: &Path, want_header: &[String]) -> CliResult<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(io_or_config)?;
    let header: Vec<String> = r
        .headers()
        .map_err(io_or_config)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != want_header {
        return Err(CliError::Config(format!(
            "unexpected CSV header in {}: {:?}",
            path.display(),
            header
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_or_config)?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

// ---------------------------------------------------------------- corpus

pub fn corpus_header(feature_len: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..feature_len).map(|i| format!("f_{i}")).collect();
    h.extend(["target", "spec_a", "spec_b", "seed"].map(String::from));
    h
}

pub fn write_corpus(path: &Path, rows: &[MmdDatasetRow]) -> CliResult<()> {
    let k = rows
        .first()
        .ok_or_else(|| CliError::Config("refusing to write an empty corpus".into()))?
        .feature
        .len();
    let mut w = writer(path)?;
    w.write_record(&corpus_header(k)).map_err(io_or_config)?;
    for row in rows {
        let mut rec: Vec<String> = row.feature.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(fmt_f64(row.target));
        rec.push(serde_json::to_string(&row.spec_a)?);
        rec.push(serde_json::to_string(&row.spec_b)?);
        rec.push(row.seed.to_string());
        w.write_record(&rec).map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> CliResult<Vec<MmdDatasetRow>> {
    let mut r = csv::Reader::from_path(path).map_err(io_or_config)?;
    let header: Vec<String> = r
        .headers()
        .map_err(io_or_config)?
        .iter()
        .map(str::to_owned)
        .collect();
    let k = header.iter().take_while(|h| h.starts_with("f_")).count();
    if k == 0 || header != corpus_header(k) {
        return Err(CliError::Config(format!(
            "{} is not a corpus CSV",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_or_config)?;
        if rec.len() != k + 4 {
            return Err(CliError::Config("corpus row has wrong arity".into()));
        }
        let feature = rec
            .iter()
            .take(k)
            .map(|s| parse_f64(s, "feature"))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(MmdDatasetRow {
            feature,
            target: parse_f64(&rec[k], "target")?,
            spec_a: serde_json::from_str(&rec[k + 1])?,
            spec_b: serde_json::from_str(&rec[k + 2])?,
            seed: parse_u64(&rec[k + 3], "seed")?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------- feature table

pub fn feature_table_header(n_refs: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..n_refs).map(|i| format!("ref_{i}")).collect();
    h.extend(["target", "spec", "seed"].map(String::from));
    h
}

pub fn write_feature_table(path: &Path, table: &FeatureTable) -> CliResult<()> {
    let k = table
        .rows
        .first()
        .ok_or_else(|| CliError::Config("refusing to write an empty feature table".into()))?
        .len();
    let mut w = writer(path)?;
    w.write_record(&feature_table_header(k))
        .map_err(io_or_config)?;
    for ((row, target), meta) in table.rows.iter().zip(&table.targets).zip(&table.meta) {
        let mut rec: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(fmt_f64(*target));
        rec.push(serde_json::to_string(&meta.spec)?);
        rec.push(meta.seed.to_string());
        w.write_record(&rec).map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_table(path: &Path) -> CliResult<FeatureTable> {
    let mut r = csv::Reader::from_path(path).map_err(io_or_config)?;
    let header: Vec<String> = r
        .headers()
        .map_err(io_or_config)?
        .iter()
        .map(str::to_owned)
        .collect();
    let k = header.iter().take_while(|h| h.starts_with("ref_")).count();
    if k == 0 || header != feature_table_header(k) {
        return Err(CliError::Config(format!(
            "{} is not a feature-table CSV",
            path.display()
        )));
    }
    let mut table = FeatureTable::default();
    for rec in r.records() {
        let rec = rec.map_err(io_or_config)?;
        if rec.len() != k + 3 {
            return Err(CliError::Config("feature row has wrong arity".into()));
        }
        table.rows.push(
            rec.iter()
                .take(k)
                .map(|s| parse_f64(s, "feature"))
                .collect::<CliResult<Vec<f64>>>()?,
        );
        table.targets.push(parse_f64(&rec[k], "target")?);
        let spec: ModelSpec = serde_json::from_str(&rec[k + 1])?;
        table.meta.push(RowMeta {
            spec,
            seed: parse_u64(&rec[k + 2], "seed")?,
        });
    }
    Ok(table)
}

// ------------------------------------------------------------- targets

pub const TARGETS_HEADER: [&str; 2] = ["row", "target"];

pub fn write_targets(path: &Path, targets: &[f64]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(TARGETS_HEADER).map_err(io_or_config)?;
    for (i, t) in targets.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*t)])
            .map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_targets(path: &Path) -> CliResult<Vec<f64>> {
    let want: Vec<String> = TARGETS_HEADER.map(String::from).to_vec();
    read_rows(path, &want)?
        .iter()
        .map(|r| parse_f64(&r[1], "target"))
        .collect()
}

// ------------------------------------------------------------- metrics

pub const METRICS_HEADER: [&str; 7] =
    ["task", "model", "B", "width", "seed", "train_mse", "valid_mse"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub task: String,
    pub model: String,
    pub b: usize,
    pub width: usize,
    pub seed: u64,
    pub train_mse: f64,
    pub valid_mse: f64,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(METRICS_HEADER).map_err(io_or_config)?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.model.clone(),
            r.b.to_string(),
            r.width.to_string(),
            r.seed.to_string(),
            fmt_f64(r.train_mse),
            fmt_f64(r.valid_mse),
        ])
        .map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsRow>> {
    let want: Vec<String> = METRICS_HEADER.map(String::from).to_vec();
    read_rows(path, &want)?
        .iter()
        .map(|r| {
            Ok(MetricsRow {
                task: r[0].clone(),
                model: r[1].clone(),
                b: parse_u64(&r[2], "B")? as usize,
                width: parse_u64(&r[3], "width")? as usize,
                seed: parse_u64(&r[4], "seed")?,
                train_mse: parse_f64(&r[5], "train_mse")?,
                valid_mse: parse_f64(&r[6], "valid_mse")?,
            })
        })
        .collect()
}

// -------------------------------------------------------------- report

pub const REPORT_HEADER: [&str; 8] = [
    "task",
    "model",
    "B",
    "width",
    "train_mse",
    "train_sd",
    "valid_mse",
    "valid_sd",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub task: String,
    pub model: String,
    pub b: usize,
    pub width: usize,
    pub train_mse: f64,
    pub train_sd: f64,
    pub valid_mse: f64,
    pub valid_sd: f64,
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_HEADER).map_err(io_or_config)?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.model.clone(),
            r.b.to_string(),
            r.width.to_string(),
            fmt_f64(r.train_mse),
            fmt_f64(r.train_sd),
            fmt_f64(r.valid_mse),
            fmt_f64(r.valid_sd),
        ])
        .map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

// ----------------------------------------------------------------- OOS

pub const OOS_HEADER: [&str; 5] = ["sweep", "regime", "model", "prediction", "target"];

#[derive(Debug, Clone, PartialEq)]
pub struct OosRow {
    pub sweep: f64,
    pub regime: String,
    pub model: String,
    pub prediction: f64,
    pub target: f64,
}

pub fn write_oos(path: &Path, rows: &[OosRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(OOS_HEADER).map_err(io_or_config)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.sweep),
            r.regime.clone(),
            r.model.clone(),
            fmt_f64(r.prediction),
            fmt_f64(r.target),
        ])
        .map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

// -------------------------------------------------------- loss history

pub const HISTORY_HEADER: [&str; 3] = ["epoch", "train_mse", "valid_mse"];

pub fn write_history(path: &Path, hist: &LossHistory) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(HISTORY_HEADER).map_err(io_or_config)?;
    for (i, (t, v)) in hist.train.iter().zip(&hist.valid).enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*t), fmt_f64(*v)])
            .map_err(io_or_config)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use speedrs_core::approx::{build_mmd_dataset, CorpusConfig};

    #[test]
    fn corpus_round_trip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.csv");
        let cfg = CorpusConfig {
            batch: 10,
            len: 8,
            ..CorpusConfig::default()
        };
        let rows = build_mmd_dataset(12, &cfg, 5).unwrap();
        write_corpus(&path, &rows).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.feature, b.feature);
            assert_eq!(a.target.to_bits(), b.target.to_bits());
            assert_eq!(a.spec_a, b.spec_a);
            assert_eq!(a.spec_b, b.spec_b);
            assert_eq!(a.seed, b.seed);
        }
        // rewriting the parsed rows reproduces the file byte for byte
        let path2 = dir.path().join("corpus2.csv");
        write_corpus(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn feature_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let table = FeatureTable {
            rows: vec![vec![0.5, 1.25e-7], vec![3.0, -2.0]],
            targets: vec![0.1, 0.9],
            meta: vec![
                RowMeta {
                    spec: ModelSpec::Gbm {
                        mu: 0.1,
                        sigma: 0.3,
                        x0: 1.0,
                    },
                    seed: 4,
                },
                RowMeta {
                    spec: ModelSpec::Mixture {
                        alpha: 0.5,
                        left: Box::new(ModelSpec::Gbm {
                            mu: 0.1,
                            sigma: 0.3,
                            x0: 1.0,
                        }),
                        right: Box::new(ModelSpec::Cev {
                            mu: 0.1,
                            sigma: 0.4,
                            gamma: 0.7,
                            x0: 1.0,
                        }),
                    },
                    seed: 5,
                },
            ],
        };
        write_feature_table(&path, &table).unwrap();
        let back = read_feature_table(&path).unwrap();
        assert_eq!(back.rows, table.rows);
        assert_eq!(back.targets, table.targets);
        assert_eq!(back.meta[1].spec, table.meta[1].spec);
    }

    #[test]
    fn headers_are_schema_stable() {
        assert_eq!(
            corpus_header(2),
            ["f_0", "f_1", "target", "spec_a", "spec_b", "seed"]
        );
        assert_eq!(
            feature_table_header(1),
            ["ref_0", "target", "spec", "seed"]
        );
        assert_eq!(
            REPORT_HEADER.join(","),
            "task,model,B,width,train_mse,train_sd,valid_mse,valid_sd"
        );
        assert_eq!(OOS_HEADER.join(","), "sweep,regime,model,prediction,target");
    }

    #[test]
    fn metrics_and_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![MetricsRow {
            task: "pricing".into(),
            model: "speedrs".into(),
            b: 20,
            width: 50,
            seed: 1,
            train_mse: 0.25,
            valid_mse: 0.5,
        }];
        write_metrics(&path, &rows).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), rows);

        // a wrong header is rejected, not misparsed
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_metrics(&bad), Err(CliError::Config(_))));
    }
}
