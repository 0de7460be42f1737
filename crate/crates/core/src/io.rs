//! Workload files: one JSON object per line, UTF-8.
//!
//! Every line carries `format_version` plus the fields `query`, `plans`,
//! `labels`, `split` and `template_id`. Floats are written in shortest
//! round-trip form, so `deserialize(serialize(s)) == s` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::PlanTree;
use crate::query::QueryGraph;
use crate::workload::{Label, Split, WorkloadSample};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),
    #[error("read failed: {0}")]
    Read(#[source] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported format_version {found}")]
    Version { line: usize, found: u32 },
}

impl IoError {
    fn with_path(self, path: &Path) -> Self {
        match self {
            IoError::Write(source) | IoError::Read(source) => IoError::File {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        }
    }
}

#[derive(Serialize)]
struct RecordRef<'a> {
    format_version: u32,
    query: &'a QueryGraph,
    plans: &'a [PlanTree],
    labels: &'a [Label],
    split: Split,
    template_id: u32,
}

#[derive(Deserialize)]
struct Record {
    format_version: u32,
    query: QueryGraph,
    plans: Vec<PlanTree>,
    labels: Vec<Label>,
    split: Split,
    template_id: u32,
}

pub fn serialize_workload<W: Write>(samples: &[WorkloadSample], mut out: W) -> Result<(), IoError> {
    for s in samples {
        let rec = RecordRef {
            format_version: FORMAT_VERSION,
            query: &s.query,
            plans: &s.plans,
            labels: &s.labels,
            split: s.split,
            template_id: s.template_id,
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| IoError::Write(e.into()))?;
        out.write_all(b"\n").map_err(IoError::Write)?;
    }
    out.flush().map_err(IoError::Write)
}

/// Parses a workload stream. Blank lines are skipped.
pub fn deserialize_workload<R: Read>(input: R) -> Result<Vec<WorkloadSample>, IoError> {
    let reader = BufReader::new(input);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(IoError::Read)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|source| IoError::Parse { line: i + 1, source })?;
        if rec.format_version != FORMAT_VERSION {
            return Err(IoError::Version {
                line: i + 1,
                found: rec.format_version,
            });
        }
        out.push(WorkloadSample {
            query: rec.query,
            plans: rec.plans,
            labels: rec.labels,
            split: rec.split,
            template_id: rec.template_id,
        });
    }
    Ok(out)
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_workload_file(path: &Path, samples: &[WorkloadSample]) -> Result<(), IoError> {
    let tmp = path.with_extension("jsonl.tmp");
    let file = File::create(&tmp).map_err(|source| IoError::File {
        path: tmp.clone(),
        source,
    })?;
    serialize_workload(samples, BufWriter::new(file)).map_err(|e| e.with_path(&tmp))?;
    std::fs::rename(&tmp, path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_workload_file(path: &Path) -> Result<Vec<WorkloadSample>, IoError> {
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    deserialize_workload(file).map_err(|e| e.with_path(path))
}
