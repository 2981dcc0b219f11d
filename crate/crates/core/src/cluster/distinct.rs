use std::collections::BTreeMap;

use super::tree::ClusterAssignment;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_SUPPORT: u64 = 5;

/// Tokens ranked by `cnt(s|c) / cnt(s)`: the share of a token's occurrences
/// that fall inside queries assigned to `cluster_path`.
///
/// Tokens with `cnt(s) < min_support`, or not starting with `prefix`, are
/// skipped. Ties are broken lexicographically.
pub fn distinctive_ngrams(
    assignments: &[ClusterAssignment],
    representations: &[BTreeMap<String, u32>],
    cluster_path: &str,
    top_n: usize,
    min_support: u64,
    prefix: Option<&str>,
) -> Result<Vec<(String, f64)>> {
    if assignments.len() != representations.len() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} queries",
            assignments.len(),
            representations.len()
        )));
    }
    if !assignments
        .iter()
        .any(|a| a.paths.iter().any(|p| p == cluster_path))
    {
        return Err(Error::Lookup(format!("no query in cluster `{cluster_path}`")));
    }
    let mut total: BTreeMap<&str, u64> = BTreeMap::new();
    let mut inside: BTreeMap<&str, u64> = BTreeMap::new();
    for (a, rep) in assignments.iter().zip(representations) {
        let member = a.paths.iter().any(|p| p == cluster_path);
        for (tok, &c) in rep {
            if prefix.is_some_and(|p| !tok.starts_with(p)) {
                continue;
            }
            *total.entry(tok).or_default() += c as u64;
            if member {
                *inside.entry(tok).or_default() += c as u64;
            }
        }
    }
    let mut scored: Vec<(String, f64)> = inside
        .into_iter()
        .filter(|(tok, _)| total[tok] >= min_support)
        .map(|(tok, c)| (tok.to_string(), c as f64 / total[tok] as f64))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_n);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assign(p: &[&str]) -> ClusterAssignment {
        ClusterAssignment {
            paths: p.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn rep(toks: &[(&str, u32)]) -> BTreeMap<String, u32> {
        toks.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn exclusive_token_scores_one() {
        let a = vec![assign(&["1"]), assign(&["2"])];
        let r = vec![rep(&[("x", 5), ("y", 3)]), rep(&[("y", 3)])];
        let out = distinctive_ngrams(&a, &r, "1", 10, 1, None).unwrap();
        assert_eq!(out[0], ("x".to_string(), 1.0));
        assert_eq!(out[1], ("y".to_string(), 0.5));
    }

    #[test]
    fn uniform_token_over_four_clusters_scores_quarter() {
        let a: Vec<_> = ["1", "2", "3", "4"].iter().map(|p| assign(&[p])).collect();
        let r: Vec<_> = (0..4).map(|_| rep(&[("u", 2)])).collect();
        let out = distinctive_ngrams(&a, &r, "3", 10, 1, None).unwrap();
        assert_eq!(out, vec![("u".to_string(), 0.25)]);
    }

    #[test]
    fn support_threshold_and_prefix_filter() {
        let a = vec![assign(&["1"]), assign(&["2"])];
        let r = vec![rep(&[("ngram:a", 2), ("category:b", 9)]), rep(&[("ngram:a", 1)])];
        let out = distinctive_ngrams(&a, &r, "1", 10, 5, None).unwrap();
        assert_eq!(out, vec![("category:b".to_string(), 1.0)]);
        let out = distinctive_ngrams(&a, &r, "1", 10, 1, Some("ngram:")).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_cluster_is_lookup_error() {
        let a = vec![assign(&["1"])];
        let r = vec![rep(&[("x", 1)])];
        assert!(matches!(
            distinctive_ngrams(&a, &r, "9.9", 10, 1, None),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn matches_two_pass_count_oracle() {
        let a = vec![assign(&["1", "1.1"]), assign(&["1", "1.2"]), assign(&["2"]), assign(&["1", "1.1"])];
        let r = vec![
            rep(&[("a", 1), ("b", 2)]),
            rep(&[("a", 3)]),
            rep(&[("b", 1), ("c", 4)]),
            rep(&[("c", 2), ("a", 1)]),
        ];
        let out = distinctive_ngrams(&a, &r, "1.1", 10, 1, None).unwrap();
        for (tok, score) in out {
            let mut all = 0;
            for q in &r {
                all += q.get(&tok).copied().unwrap_or(0);
            }
            let mut inside = 0;
            for (q, asg) in r.iter().zip(&a) {
                if asg.paths.contains(&"1.1".to_string()) {
                    inside += q.get(&tok).copied().unwrap_or(0);
                }
            }
            assert_eq!(score, inside as f64 / all as f64);
        }
    }
}
