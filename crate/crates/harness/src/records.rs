//! Trial records CSV and per-grid-point summaries.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use cpsize::bounds::TailMode;
use cpsize::scalar::mean_and_se;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 16] = [
    "seed",
    "n_tr",
    "n_cal",
    "alpha",
    "coverage",
    "coverage_se",
    "mean_size_norm",
    "size_se",
    "bound_thm1",
    "bound_cls_or_reg",
    "bound_cor1",
    "r_min",
    "slack_mode",
    "tail_mode",
    "clamped",
    "wall_ms",
];

/// One conformal trial at one grid point. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n_tr: usize,
    pub n_cal: usize,
    pub alpha: f64,
    pub coverage: f64,
    /// Standard error over the trial's test points.
    pub coverage_se: f64,
    pub mean_size_norm: f64,
    pub size_se: f64,
    pub bound_thm1: f64,
    pub bound_cls_or_reg: f64,
    pub bound_cor1: f64,
    pub r_min: f64,
    pub slack_mode: String,
    pub tail_mode: TailMode,
    pub clamped: bool,
    pub wall_ms: f64,
}

impl TrialRecord {
    /// Same record up to wall-clock time.
    pub fn same_result(&self, other: &Self) -> bool {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        } == Self {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

pub fn check_header(header: &csv::StringRecord) -> Result<()> {
    for (i, want) in RECORD_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::Schema {
                    column: format!("{got:?} at position {i}, expected {want:?}"),
                })
            }
            None => {
                return Err(Error::Schema {
                    column: format!("{want:?} missing"),
                })
            }
        }
    }
    if let Some(extra) = header.get(RECORD_COLUMNS.len()) {
        return Err(Error::Schema {
            column: format!("unexpected {extra:?}"),
        });
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(rdr.headers()?)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn records_to_csv(records: &[TrialRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_records_atomic(path: &Path, records: &[TrialRecord]) -> Result<()> {
    write_atomic(path, &records_to_csv(records)?)
}

/// Mean and standard error across trials at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_tr: usize,
    pub n_cal: usize,
    pub alpha: f64,
    pub n_trials: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_size_norm: f64,
    pub size_se: f64,
    pub bound_thm1: f64,
    pub bound_thm1_se: f64,
    pub bound_cls_or_reg: f64,
    pub bound_cor1: f64,
    pub r_min: f64,
    pub clamped_fraction: f64,
}

/// Groups consecutive records by `(n_tr, n_cal, alpha)` in first-seen order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, usize, u64)> = Vec::new();
    for r in records {
        let k = (r.n_tr, r.n_cal, r.alpha.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(n_tr, n_cal, a)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.n_tr == n_tr && r.n_cal == n_cal && r.alpha.to_bits() == a)
                .collect();
            let col = |f: fn(&TrialRecord) -> f64| mean_and_se(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (coverage, coverage_se) = col(|r| r.coverage);
            let (mean_size_norm, size_se) = col(|r| r.mean_size_norm);
            let (bound_thm1, bound_thm1_se) = col(|r| r.bound_thm1);
            SummaryRow {
                n_tr,
                n_cal,
                alpha: f64::from_bits(a),
                n_trials: group.len(),
                coverage,
                coverage_se,
                mean_size_norm,
                size_se,
                bound_thm1,
                bound_thm1_se,
                bound_cls_or_reg: col(|r| r.bound_cls_or_reg).0,
                bound_cor1: col(|r| r.bound_cor1).0,
                r_min: col(|r| r.r_min).0,
                clamped_fraction: col(|r| if r.clamped { 1.0 } else { 0.0 }).0,
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in summarize(records) {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(seed: u64, alpha: f64, size: f64) -> TrialRecord {
        TrialRecord {
            seed,
            n_tr: 100,
            n_cal: 50,
            alpha,
            coverage: 0.9,
            coverage_se: 0.01,
            mean_size_norm: size,
            size_se: 0.01,
            bound_thm1: 0.7,
            bound_cls_or_reg: 0.7,
            bound_cor1: 1.0,
            r_min: 1.0,
            slack_mode: "oracle_zero".into(),
            tail_mode: TailMode::ExactIntegral,
            clamped: false,
            wall_ms: 1.5,
        }
    }

    #[test]
    fn round_trip_and_header_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let recs = vec![record(1, 0.1, 0.2), record(2, 0.1, 0.3)];
        write_records_atomic(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), RECORD_COLUMNS.join(","));
        assert_eq!(read_records(&path).unwrap(), recs);
        assert!(!path.with_extension("csv.tmp").exists());
    }

    #[test]
    fn constant_column_mean_is_exact() {
        let recs: Vec<_> = (0..7).map(|s| record(s, 0.1, 0.3)).collect();
        let s = summarize(&recs);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_size_norm, 0.3);
        assert_eq!(s[0].coverage, 0.9);
        assert_eq!(s[0].size_se, 0.0);
        assert_eq!(s[0].n_trials, 7);
    }

    #[test]
    fn schema_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, RECORD_COLUMNS.join(",").replace("bound_thm1", "bound_x") + "\n").unwrap();
        match read_records(&path).unwrap_err() {
            Error::Schema { column } => assert!(column.contains("bound_x"), "{column}"),
            e => panic!("{e:?}"),
        }
    }
}
