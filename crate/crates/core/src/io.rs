//! Label files (`id,label` CSV) and the JSON sidecar written next to a
//! privatized release.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::{LabelVector, PrivatizationRecord};
use crate::error::{Error, Result};

/// Labels read from a file, with their row ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFile {
    pub ids: Vec<String>,
    pub labels: LabelVector,
}

/// Parses `id,label` CSV. Line numbers in errors are 1-based and count the
/// header.
pub fn read_labels<R: Read>(reader: R) -> Result<LabelFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Parse { line: 1, msg: format!("expected header 'id,label', got '{}'", headers.iter().collect::<Vec<_>>().join(",")) });
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let label = match &rec[1] {
            "1" | "+1" => 1i8,
            "-1" => -1i8,
            other => {
                return Err(Error::Parse { line, msg: format!("label must be -1 or 1, got '{other}'") })
            }
        };
        ids.push(rec[0].to_string());
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no label rows".into() });
    }
    Ok(LabelFile { ids, labels: LabelVector::new(labels)? })
}

pub fn read_labels_path(path: &Path) -> Result<LabelFile> {
    read_labels(std::fs::File::open(path)?)
}

/// Writes `id,label` CSV.
pub fn write_labels<W: Write>(writer: W, ids: &[String], labels: &LabelVector) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::InvalidParameter(format!("{} ids for {} labels", ids.len(), labels.len())));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "label"])?;
    for (id, y) in ids.iter().zip(labels.iter()) {
        w.write_record([id.as_str(), if y == 1 { "1" } else { "-1" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_path(path: &Path, ids: &[String], labels: &LabelVector) -> Result<()> {
    write_labels(std::fs::File::create(path)?, ids, labels)
}

/// Summary of a release, stored as JSON next to the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub n: usize,
    pub q: usize,
    pub flip_count: usize,
}

impl From<&PrivatizationRecord> for Sidecar {
    fn from(r: &PrivatizationRecord) -> Self {
        Self {
            epsilon: r.params.epsilon(),
            delta: r.params.sensitivity(),
            seed: r.seed,
            n: r.output.len(),
            q: r.score,
            flip_count: r.flip_count,
        }
    }
}

impl Sidecar {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "id,label\na,1\nb,-1\nc,1\n";
        let f = read_labels(text.as_bytes()).unwrap();
        assert_eq!(f.labels.as_slice(), &[1, -1, 1]);
        let mut out = Vec::new();
        write_labels(&mut out, &f.ids, &f.labels).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn bad_label_reports_line() {
        let err = read_labels("id,label\na,1\nb,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = read_labels("id,label\na,1\nb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn header_checked() {
        assert!(matches!(read_labels("x,y\na,1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(read_labels("id,label\n".as_bytes()).is_err());
    }
}
