use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mrr, success_at_k, wacp, wmrr};
use crate::error::{Error, Result};

pub const DEFAULT_SUCCESS_KS: [usize; 2] = [1, 5];

/// Aggregate metrics of one model on one split, plus the per-query values
/// needed for significance tests across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_queries: usize,
    pub mrr: f64,
    pub success_at: Vec<(usize, f64)>,
    pub wmrr: f64,
    pub wacp: f64,
    pub query_ids: Vec<String>,
    pub ranks: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MetricsReport {
    pub fn from_ranks(query_ids: Vec<String>, ranks: Vec<f64>, weights: Vec<f64>, ks: &[usize]) -> Result<Self> {
        if query_ids.len() != ranks.len() {
            return Err(Error::Dimension(format!("{} ids for {} ranks", query_ids.len(), ranks.len())));
        }
        let success_at = ks
            .iter()
            .map(|&k| success_at_k(&ranks, k).map(|s| (k, s)))
            .collect::<Result<_>>()?;
        Ok(Self {
            num_queries: ranks.len(),
            mrr: mrr(&ranks)?,
            success_at,
            wmrr: wmrr(&ranks, &weights)?,
            wacp: wacp(&ranks, &weights)?,
            query_ids,
            ranks,
            weights,
        })
    }

    pub fn reciprocal_ranks(&self) -> Vec<f64> {
        self.ranks.iter().map(|r| 1.0 / r).collect()
    }

    pub fn success(&self, k: usize) -> Option<f64> {
        self.success_at.iter().find(|(kk, _)| *kk == k).map(|(_, s)| *s)
    }

    /// `metric<TAB>value` lines.
    pub fn summary_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("mrr".to_string(), self.mrr)];
        rows.extend(self.success_at.iter().map(|(k, s)| (format!("success@{k}"), *s)));
        rows.push(("wmrr".into(), self.wmrr));
        rows.push(("wacp".into(), self.wacp));
        rows.push(("num_queries".into(), self.num_queries as f64));
        rows
    }

    /// `manifest`, when given, is written first as a `# {json}` line.
    pub fn write_summary(&self, path: impl AsRef<Path>, manifest: Option<&serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut body = manifest_line(manifest);
        body.push_str("metric\tvalue\n");
        for (name, v) in self.summary_rows() {
            body.push_str(&format!("{name}\t{v}\n"));
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    /// One `query_id<TAB>rank<TAB>weight` line per query.
    pub fn write_detail(&self, path: impl AsRef<Path>, manifest: Option<&serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let mut body = manifest_line(manifest);
        body.push_str("query_id\trank\tweight\n");
        for ((q, r), wt) in self.query_ids.iter().zip(&self.ranks).zip(&self.weights) {
            body.push_str(&format!("{q}\t{r}\t{wt}\n"));
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn read_detail(path: impl AsRef<Path>, ks: &[usize]) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let (mut ids, mut ranks, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        let mut header_seen = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let parse_err = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err("expected 3 tab-separated columns"));
            }
            ids.push(cols[0].to_string());
            ranks.push(cols[1].parse().map_err(|_| parse_err("bad rank"))?);
            weights.push(cols[2].parse().map_err(|_| parse_err("bad weight"))?);
        }
        Self::from_ranks(ids, ranks, weights, ks)
    }
}

/// `# {json}\n`, or nothing for a missing or null manifest.
pub fn manifest_line(manifest: Option<&serde_json::Value>) -> String {
    match manifest {
        Some(m) if !m.is_null() => format!("# {m}\n"),
        _ => String::new(),
    }
}

/// Relative change of `value` over `baseline`, formatted like `+1.23%`.
pub fn relative_delta(value: f64, baseline: f64) -> String {
    let pct = (value - baseline) / baseline * 100.0;
    format!("{:+.2}%", if pct == 0.0 { 0.0 } else { pct })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_delta_is_zero() {
        assert_eq!(relative_delta(0.67, 0.67), "+0.00%");
        assert_eq!(relative_delta(0.6748, 0.6698), "+0.75%");
    }

    #[test]
    fn detail_round_trip() {
        let r = MetricsReport::from_ranks(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 2.5, 6.0],
            vec![1.0, 0.3, 2.0],
            &DEFAULT_SUCCESS_KS,
        )
        .unwrap();
        let dir = std::env::temp_dir().join(format!("qdrank-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("detail.tsv");
        r.write_detail(&path, None).unwrap();
        assert_eq!(MetricsReport::read_detail(&path, &DEFAULT_SUCCESS_KS).unwrap(), r);
        let manifest = serde_json::json!({"seed": 3});
        r.write_detail(&path, Some(&manifest)).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("# {\"seed\":3}\n"));
        assert_eq!(MetricsReport::read_detail(&path, &DEFAULT_SUCCESS_KS).unwrap(), r);
        std::fs::remove_dir_all(dir).ok();
    }
}
