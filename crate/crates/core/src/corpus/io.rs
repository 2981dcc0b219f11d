//! Line-oriented dataset files.
//!
//! Line 1 is a JSON header `{"format":"qdrank-dataset","version":1,"split":…,
//! "schema":{…},"num_records":n}`; every following line is one JSON query
//! record with the keys `query_id`, `timestamp`, `sparse_fields`,
//! `dense_fields`, `candidates`, `clicked_index` and `propensity_weight`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, QueryRecord, Schema, SplitTag};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "qdrank-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    split: SplitTag,
    schema: Schema,
    num_records: usize,
    /// Description of the run that produced the file.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    manifest: serde_json::Value,
}

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> std::io::Result<()> {
    write_dataset_with_manifest(dataset, &serde_json::Value::Null, out)
}

/// Like [`write_dataset`], recording `manifest` in the header line.
pub fn write_dataset_with_manifest<W: Write>(
    dataset: &Dataset,
    manifest: &serde_json::Value,
    mut out: W,
) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        split: dataset.split,
        schema: dataset.schema.clone(),
        num_records: dataset.records.len(),
        manifest: manifest.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for rec in &dataset.records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let first = first.map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unsupported format {} v{}",
                header.format, header.version
            ),
        });
    }

    let mut records = Vec::with_capacity(header.num_records);
    let mut n_candidates = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        header
            .schema
            .validate_record(&rec)
            .map_err(|message| Error::Schema {
                line: line_no,
                message,
            })?;
        match n_candidates {
            None => n_candidates = Some(rec.candidates.len()),
            Some(n) if n != rec.candidates.len() => {
                return Err(Error::Schema {
                    line: line_no,
                    message: format!("{} candidates, dataset uses {n}", rec.candidates.len()),
                })
            }
            _ => {}
        }
        records.push(rec);
    }
    if records.len() != header.num_records {
        return Err(Error::Parse {
            line: records.len() + 2,
            message: format!(
                "header declares {} records, found {}",
                header.num_records,
                records.len()
            ),
        });
    }
    Ok(Dataset {
        schema: header.schema,
        split: header.split,
        records,
    })
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn save_dataset_with_manifest(dataset: &Dataset, manifest: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_with_manifest(dataset, manifest, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;

    fn tiny() -> Dataset {
        let doc = |id: &str, tok: &str, rec: f64| DocumentRecord {
            doc_id: id.into(),
            sparse_fields: [("ngram".to_string(), vec![(tok.to_string(), 2)])].into(),
            dense_fields: [("recency".to_string(), rec)].into(),
        };
        Dataset {
            schema: Schema {
                query_sparse: vec!["ngram".into()],
                query_dense: vec![],
                doc_sparse: vec!["ngram".into()],
                doc_dense: vec!["recency".into()],
            },
            split: SplitTag::Dev,
            records: vec![QueryRecord {
                query_id: "q1".into(),
                timestamp: 17,
                sparse_fields: [("ngram".to_string(), vec![("to skopje".to_string(), 1)])].into(),
                dense_fields: Default::default(),
                candidates: vec![doc("a", "x", 0.1), doc("b", "to skopje", 1.0 / 3.0)],
                clicked_index: 1,
                propensity_weight: 1.25,
            }],
        }
    }

    #[test]
    fn one_query_round_trip() {
        let d = tiny();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn clicked_index_equal_to_n_is_schema_error() {
        let mut d = tiny();
        d.records[0].clicked_index = 2;
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        match read_dataset(buf.as_slice()) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let d = tiny();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        buf.extend_from_slice(b"{not json\n");
        match read_dataset(buf.as_slice()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn undeclared_field_is_schema_error() {
        let mut d = tiny();
        d.records[0].dense_fields.insert("hour".into(), 0.5);
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert!(matches!(read_dataset(buf.as_slice()), Err(Error::Schema { .. })));
    }
}
