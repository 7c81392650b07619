//! JSON-lines persistence for result records, instances and solutions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{GlopError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub method: String,
    pub objective: f64,
    pub time_s: f64,
    pub seed: u64,
    /// Digest of the solver configuration.
    pub config: String,
}

impl ResultRecord {
    pub fn check(&self) -> Result<()> {
        if !self.objective.is_finite() {
            return Err(GlopError::Input(format!("record {}: objective not finite", self.id)));
        }
        if !(self.time_s >= 0.0) {
            return Err(GlopError::Input(format!("record {}: negative wall time", self.id)));
        }
        Ok(())
    }
}

pub fn write_jsonl<T: Serialize>(w: impl Write, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(w);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(r: impl std::io::Read) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_results(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    for r in records {
        r.check()?;
    }
    write_jsonl(File::create(path)?, records)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    read_jsonl(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> ResultRecord {
        ResultRecord {
            id: id.into(),
            method: "glop".into(),
            objective: 17.125,
            time_s: 0.25,
            seed: 3,
            config: "abc".into(),
        }
    }

    #[test]
    fn empty_list_gives_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_results(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "");
        assert!(read_results(&p).unwrap().is_empty());
    }

    #[test]
    fn one_record_one_line_with_fixed_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_results(&p, &[record("a")]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["config", "id", "method", "objective", "seed", "time_s"]);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let recs = vec![record("a"), ResultRecord { objective: 0.1 + 0.2, ..record("b") }];
        write_results(&p, &recs).unwrap();
        assert_eq!(read_results(&p).unwrap(), recs);
    }

    #[test]
    fn non_finite_objective_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = ResultRecord { objective: f64::NAN, ..record("x") };
        assert!(write_results(dir.path().join("r.jsonl"), &[bad]).is_err());
    }

    #[test]
    fn io_failure_surfaces() {
        assert!(matches!(
            write_results("/nonexistent-dir/r.jsonl", &[record("a")]),
            Err(GlopError::Io(_))
        ));
    }
}
