use rand::Rng;

use super::QueryRecord;
use crate::error::{Error, Result};

/// A preference pair inside one query, by candidate index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub doc_a: usize,
    pub doc_b: usize,
    /// 1.0 iff `doc_a` is the clicked document.
    pub label: f64,
    pub weight: f64,
}

/// Emits `N − 1` pairs, the clicked candidate against every other one, with
/// the in-pair order drawn from `rng`.
pub fn build_pairs<R: Rng + ?Sized>(query: &QueryRecord, rng: &mut R) -> Result<Vec<Pair>> {
    pairs_for_click(
        &query.query_id,
        query.candidates.len(),
        query.clicked_index,
        query.propensity_weight,
        rng,
    )
}

/// Same as [`build_pairs`] from the candidate count and click alone.
pub fn pairs_for_click<R: Rng + ?Sized>(
    query_id: &str,
    n: usize,
    clicked: usize,
    weight: f64,
    rng: &mut R,
) -> Result<Vec<Pair>> {
    if clicked >= n {
        return Err(Error::Label(format!(
            "query {query_id}: clicked index {clicked} with {n} candidates"
        )));
    }
    Ok((0..n)
        .filter(|&j| j != clicked)
        .map(|other| {
            if rng.random_bool(0.5) {
                Pair {
                    doc_a: clicked,
                    doc_b: other,
                    label: 1.0,
                    weight,
                }
            } else {
                Pair {
                    doc_a: other,
                    doc_b: clicked,
                    label: 0.0,
                    weight,
                }
            }
        })
        .collect())
}

/// Builds pairs from a 0/1 click vector, rejecting anything but one click.
pub fn clicked_index_from_labels(query_id: &str, clicks: &[u8]) -> Result<usize> {
    let hits: Vec<usize> = clicks
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [one] => Ok(*one),
        [] => Err(Error::Label(format!("query {query_id}: no clicked candidate"))),
        _ => Err(Error::Label(format!(
            "query {query_id}: {} clicked candidates",
            hits.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn query(n: usize, clicked: usize) -> QueryRecord {
        QueryRecord {
            query_id: "q".into(),
            timestamp: 0,
            sparse_fields: Default::default(),
            dense_fields: Default::default(),
            candidates: (0..n)
                .map(|j| DocumentRecord {
                    doc_id: format!("d{j}"),
                    sparse_fields: Default::default(),
                    dense_fields: Default::default(),
                })
                .collect(),
            clicked_index: clicked,
            propensity_weight: 2.0,
        }
    }

    #[test]
    fn six_candidates_give_five_pairs_with_the_click() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = build_pairs(&query(6, 2), &mut rng).unwrap();
        assert_eq!(pairs.len(), 5);
        for p in &pairs {
            assert!(p.doc_a == 2 || p.doc_b == 2);
            assert_ne!(p.doc_a, p.doc_b);
            assert_eq!(p.label == 1.0, p.doc_a == 2);
            assert_eq!(p.weight, 2.0);
        }
    }

    #[test]
    fn two_candidates_give_one_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(build_pairs(&query(2, 1), &mut rng).unwrap().len(), 1);
    }

    #[test]
    fn labels_are_balanced() {
        // 2000 queries × 5 pairs = 10,000 Bernoulli(1/2) labels; 3σ = 0.015.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let q = query(6, 4);
        let mut positives = 0usize;
        let mut total = 0usize;
        for _ in 0..2000 {
            for p in build_pairs(&q, &mut rng).unwrap() {
                positives += p.label as usize;
                total += 1;
            }
        }
        assert_eq!(total, 10_000);
        let frac = positives as f64 / total as f64;
        let sigma = (0.25f64 / total as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * sigma, "fraction {frac}");
    }

    #[test]
    fn label_vectors_need_exactly_one_click() {
        assert_eq!(clicked_index_from_labels("q", &[0, 1, 0]).unwrap(), 1);
        assert!(matches!(clicked_index_from_labels("q", &[0, 0]), Err(Error::Label(_))));
        assert!(matches!(clicked_index_from_labels("q", &[1, 1]), Err(Error::Label(_))));
    }
}
