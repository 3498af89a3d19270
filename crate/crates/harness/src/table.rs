//! Result rows, figure-data files and their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// One row of the estimates CSV. `parameter` also carries derived statistics
/// such as `buy_rate` or `buy_rate_increase`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub scenario: String,
    pub method: String,
    pub spec: String,
    pub replication: usize,
    pub parameter: String,
    pub estimate: f64,
    /// Reported standard deviation or standard error, when the method gives one.
    pub accuracy: Option<f64>,
    pub runtime_s: f64,
    pub sim_burden: u64,
    /// RNG stream that regenerates the row, as `seed:i.j.k`.
    pub seed_path: String,
}

pub const ESTIMATES_HEADER: [&str; 10] = [
    "scenario",
    "method",
    "spec",
    "replication",
    "parameter",
    "estimate",
    "accuracy",
    "runtime_s",
    "sim_burden",
    "seed_path",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<EstimateRow>,
}

impl ResultTable {
    pub fn extend(&mut self, rows: impl IntoIterator<Item = EstimateRow>) {
        self.rows.extend(rows);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows matching method, spec and parameter.
    pub fn select<'a>(&'a self, method: &'a str, spec: &'a str, parameter: &'a str) -> impl Iterator<Item = &'a EstimateRow> {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.spec == spec && r.parameter == parameter)
    }

    pub fn values(&self, method: &str, spec: &str, parameter: &str) -> Vec<f64> {
        self.select(method, spec, parameter).map(|r| r.estimate).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ESTIMATES_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.method.clone(),
                r.spec.clone(),
                r.replication.to_string(),
                r.parameter.clone(),
                r.estimate.to_string(),
                r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                r.runtime_s.to_string(),
                r.sim_burden.to_string(),
                r.seed_path.clone(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| csv_err(e.into_error()))?)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parses an estimates CSV written by [`ResultTable::to_csv_string`].
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers().map_err(|e| HarnessError::Parse { row: 1, reason: e.to_string() })?;
        if header.iter().ne(ESTIMATES_HEADER) {
            return Err(HarnessError::Parse {
                row: 1,
                reason: format!("expected header {}", ESTIMATES_HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| HarnessError::Parse { row, reason: e.to_string() })?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| HarnessError::Parse { row, reason: format!("{}: not a number", ESTIMATES_HEADER[i]) })
            };
            let int = |i: usize| -> Result<u64> {
                rec[i]
                    .parse()
                    .map_err(|_| HarnessError::Parse { row, reason: format!("{}: not an integer", ESTIMATES_HEADER[i]) })
            };
            rows.push(EstimateRow {
                scenario: rec[0].to_string(),
                method: rec[1].to_string(),
                spec: rec[2].to_string(),
                replication: int(3)? as usize,
                parameter: rec[4].to_string(),
                estimate: num(5)?,
                accuracy: if rec[6].is_empty() { None } else { Some(num(6)?) },
                runtime_s: num(7)?,
                sim_burden: int(8)?,
                seed_path: rec[9].to_string(),
            });
        }
        Ok(Self { rows })
    }
}

fn csv_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("csv: {e}"))
}

/// A plot-ready table written next to the estimates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl DataFile {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|s| s.to_string()).collect();
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| csv_err(e.into_error()))?)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Everything one scenario run produces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub table: ResultTable,
    pub files: Vec<DataFile>,
    /// Human-readable notes, e.g. range advisories.
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    files: Vec<String>,
    notes: &'a [String],
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Writes `estimates.csv`, the JSON sidecar and every data file into
/// `dir`, creating it if needed. Returns the written paths in order.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, art: &Artifacts, extra: &[DataFile]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Output {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut written = Vec::new();
    let est = dir.join("estimates.csv");
    write_file(&est, &art.table.to_csv_string()?)?;
    written.push(est);
    for f in art.files.iter().chain(extra) {
        let p = dir.join(format!("{}.csv", f.name));
        write_file(&p, &f.to_csv_string()?)?;
        written.push(p);
    }
    let side = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        files: written
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        notes: &art.notes,
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| HarnessError::Config(e.to_string()))?;
    let sp = dir.join("estimates.json");
    write_file(&sp, &(json + "\n"))?;
    written.push(sp);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rep: usize, est: f64, acc: Option<f64>) -> EstimateRow {
        EstimateRow {
            scenario: "s".into(),
            method: "nne".into(),
            spec: "row1".into(),
            replication: rep,
            parameter: "beta".into(),
            estimate: est,
            accuracy: acc,
            runtime_s: 0.0,
            sim_burden: 1000,
            seed_path: format!("7:{rep}"),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = ResultTable {
            rows: vec![row(0, 0.1 + 0.2, Some(1e-17)), row(1, -3.0, None)],
        };
        let s = t.to_csv_string().unwrap();
        assert!(s.starts_with("scenario,method,spec,replication,parameter,estimate,accuracy,runtime_s,sim_burden,seed_path\n"));
        assert_eq!(ResultTable::from_csv_str(&s).unwrap(), t);
    }

    #[test]
    fn bad_rows_are_numbered() {
        let s = format!("{}\ns,m,x,0,b,oops,,0,0,1:0\n", ESTIMATES_HEADER.join(","));
        match ResultTable::from_csv_str(&s) {
            Err(HarnessError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let blocker = tmp.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let cfg = ExperimentConfig::new(crate::config::Scenario::ConjugateCheck);
        let err = write_artifacts(&blocker.join("sub"), &cfg, &Artifacts::default(), &[]).unwrap_err();
        assert!(matches!(err, HarnessError::Output { .. }));
    }
}
