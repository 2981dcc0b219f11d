use super::QueryRecord;
use crate::error::{Error, Result};

/// Splits records by timestamp: `t ≤ t1` → train, `t1 < t ≤ t2` → dev,
/// `t > t2` → test. Each split is returned in timestamp order.
pub fn split_chronological(
    records: Vec<QueryRecord>,
    boundaries: (i64, i64),
) -> Result<(Vec<QueryRecord>, Vec<QueryRecord>, Vec<QueryRecord>)> {
    let (t1, t2) = boundaries;
    if t1 >= t2 {
        return Err(Error::Split(format!("boundaries must satisfy {t1} < {t2}")));
    }
    let mut sorted = records;
    sorted.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.query_id.cmp(&b.query_id)));
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for r in sorted {
        if r.timestamp <= t1 {
            train.push(r);
        } else if r.timestamp <= t2 {
            dev.push(r);
        } else {
            test.push(r);
        }
    }
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        if part.is_empty() {
            return Err(Error::Split(format!("{name} split is empty")));
        }
    }
    Ok((train, dev, test))
}
