use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AlphaRow, SuiteReport, TrialRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            other => Err(Error::InvalidConfig(format!("unknown output format {other:?}"))),
        }
    }
}

/// One line of the trial CSV. Exhausted trials report the budget as their
/// hitting time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    pub objective: String,
    pub n: usize,
    pub seed: u64,
    pub hitting_time: u64,
    pub exhausted: bool,
    pub budget: u64,
    pub median_lambda: f64,
    pub mean_epsilon: f64,
}

impl From<&TrialRecord> for CsvRow {
    fn from(r: &TrialRecord) -> Self {
        CsvRow {
            algorithm: r.algorithm.clone(),
            objective: r.objective.clone(),
            n: r.n,
            seed: r.seed,
            hitting_time: r.censored_time(),
            exhausted: r.exhausted,
            budget: r.budget,
            median_lambda: r.median_lambda,
            mean_epsilon: r.mean_epsilon,
        }
    }
}

pub fn emit(records: &[TrialRecord], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to write".into()));
    }
    let file = File::create(path)?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            for r in records {
                w.serialize(CsvRow::from(r))?;
            }
            w.flush()?;
        }
        OutputFormat::Jsonl => {
            let mut w = BufWriter::new(file);
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Per-(algorithm, objective, n) quartiles.
pub fn write_report_csv(report: &SuiteReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for a in &report.aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (objective, n, alpha).
pub fn write_alpha_csv(rows: &[AlphaRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_trial, AlgorithmConfig, EpsilonChoice};
    use crate::objective::ObjectiveKind;

    fn records() -> Vec<TrialRecord> {
        let alg = AlgorithmConfig::cga(EpsilonChoice::InvN);
        vec![
            run_trial(&alg, &ObjectiveKind::OneMax, 12, 1_000_000, 1).unwrap(),
            run_trial(&alg, &ObjectiveKind::OneMax, 400, 50, 2).unwrap(),
        ]
    }

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let recs = records();
        emit(&recs[..1], OutputFormat::Csv, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "algorithm,objective,n,seed,hitting_time,exhausted,budget,median_lambda,mean_epsilon"
        );
        assert!(lines[1].starts_with("cga(eps=inv-n),onemax,12,1,"), "{}", lines[1]);
    }

    #[test]
    fn exhausted_rows_report_budget() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let recs = records();
        assert!(recs[1].exhausted);
        emit(&recs[1..], OutputFormat::Csv, &path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let row: CsvRow = rdr.deserialize().next().unwrap().unwrap();
        assert_eq!(row.hitting_time, 50);
        assert!(row.exhausted);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        let recs = records();
        emit(&recs, OutputFormat::Jsonl, &path).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), recs);
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit(&[], OutputFormat::Csv, dir.path().join("x.csv")).is_err());
        let bad = dir.path().join("missing").join("x.csv");
        assert!(matches!(emit(&records(), OutputFormat::Csv, bad), Err(Error::Io(_))));
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
