//! Result tables and their serialization.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::Scheme;
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::experiment::config::{OutputFormat, SweepVariable};

pub const CSV_HEADER: &str = "sweep,estimator,mean,std,stderr,replicates";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Value of the swept variable (`N` or `T`).
    pub sweep: usize,
    pub estimator: Estimator,
    pub mean: f64,
    /// Empirical standard deviation `σ_T` across replicates.
    pub std: f64,
    pub stderr: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub name: String,
    pub scheme: Scheme,
    pub sweep: SweepVariable,
    pub seed: u64,
    /// SHA-256 of the canonical JSON form of the config that produced the table.
    pub config_hash: String,
    pub version: String,
}

/// Rows are sorted by the swept variable, then by estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub metadata: TableMetadata,
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn sort_rows(&mut self) {
        self.rows.sort_by(|a, b| a.sweep.cmp(&b.sweep).then(a.estimator.cmp(&b.estimator)));
    }

    pub fn rows_for(&self, estimator: Estimator) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }

    pub fn row(&self, sweep: usize, estimator: Estimator) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.sweep == sweep && r.estimator == estimator)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("$", e.to_string()))
    }
}

/// Renders the table; identical input gives identical bytes.
pub fn render_results(table: &ResultsTable, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{},{},{:e},{:e},{:e},{}",
                    r.sweep, r.estimator, r.mean, r.std, r.stderr, r.replicates
                );
            }
            out
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_string_pretty(table).expect("results serialize");
            out.push('\n');
            out
        }
        OutputFormat::GnuplotDat => {
            let m = &table.metadata;
            let mut out = String::new();
            let _ = writeln!(out, "# {} scheme={} seed={} config={}", m.name, m.scheme, m.seed, m.config_hash);
            let mut estimators: Vec<Estimator> = table.rows.iter().map(|r| r.estimator).collect();
            estimators.sort();
            estimators.dedup();
            for (block, e) in estimators.iter().enumerate() {
                if block > 0 {
                    out.push_str("\n\n");
                }
                let _ = writeln!(out, "# estimator {e}");
                let _ = writeln!(out, "# sweep mean std stderr replicates");
                for r in table.rows_for(*e) {
                    let _ = writeln!(out, "{} {:e} {:e} {:e} {}", r.sweep, r.mean, r.std, r.stderr, r.replicates);
                }
            }
            out
        }
    }
}

pub fn emit_results(table: &ResultsTable, format: OutputFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_results(table, format)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<ResultRow>) -> ResultsTable {
        ResultsTable {
            metadata: TableMetadata {
                name: "t".into(),
                scheme: Scheme::Dmc,
                sweep: SweepVariable::Horizon,
                seed: 1,
                config_hash: "00".into(),
                version: "0".into(),
            },
            rows,
        }
    }

    fn row() -> ResultRow {
        ResultRow {
            sweep: 10,
            estimator: Estimator::Theta,
            mean: 0.047619,
            std: 0.01,
            stderr: 0.001,
            replicates: 100,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(render_results(&table(vec![]), OutputFormat::Csv), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn one_row_is_two_lines() {
        let csv = render_results(&table(vec![row()]), OutputFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "10,theta,4.7619e-2,1e-2,1e-3,100");
    }

    #[test]
    fn json_round_trip() {
        let t = table(vec![row(), ResultRow { estimator: Estimator::ThetaBar, mean: 1.0 / 3.0, ..row() }]);
        let back = ResultsTable::from_json(&render_results(&t, OutputFormat::Json)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn gnuplot_blocks() {
        let t = table(vec![row(), ResultRow { estimator: Estimator::ThetaTilde, ..row() }]);
        let dat = render_results(&t, OutputFormat::GnuplotDat);
        assert_eq!(dat.matches("# estimator").count(), 2);
        assert!(dat.contains("\n\n\n# estimator theta_tilde"));
    }

    #[test]
    fn write_failure_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        match emit_results(&table(vec![]), OutputFormat::Csv, &path).unwrap_err() {
            Error::Io { path: p, .. } => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
    }
}
