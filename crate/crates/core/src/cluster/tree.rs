//! Divisive hierarchical query clustering.
//!
//! Every internal node re-fits its own truncated SVD + varimax subspace on
//! its members only and routes each member to the child of its largest
//! rotated coordinate. A node's fit depends on nothing but its member rows
//! and its path, so sibling subtrees can be built independently.

use serde::{Deserialize, Serialize};

use super::representation::{CountTransform, QueryVector};
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, SparseMatrix, SparseVector, SubspaceModel, SvdParams, VarimaxParams};

pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_BRANCH: usize = 7;
pub const DEFAULT_MIN_LEAF: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Depth `D` of the hierarchy.
    pub depth: usize,
    /// Branching factor `B`; also the subspace rank at each node.
    pub branch: usize,
    /// Minimum members `E` a depth-`D` leaf needs to survive pruning.
    pub min_leaf: usize,
    pub svd: SvdParams,
    pub varimax: VarimaxParams,
    pub transform: CountTransform,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            branch: DEFAULT_BRANCH,
            min_leaf: DEFAULT_MIN_LEAF,
            svd: SvdParams::default(),
            varimax: VarimaxParams::default(),
            transform: CountTransform::Raw,
            seed: 0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.branch < 2 || self.min_leaf < 1 {
            return Err(Error::Config(format!(
                "need depth ≥ 1, branch ≥ 2, min_leaf ≥ 1 (got {}, {}, {})",
                self.depth, self.branch, self.min_leaf
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    /// Zero-based branch indices from the root.
    pub path: Vec<usize>,
    pub depth: usize,
    pub subspace: Option<SubspaceModel>,
    pub children: Vec<ClusterNode>,
    pub member_count: usize,
    pub pruned: bool,
    /// Set when every member vector was zero and no subspace could be fitted.
    pub degenerate: bool,
}

/// Display form of a path: one-based indices joined by dots (`[1, 0]` → `"2.1"`).
pub fn path_string(path: &[usize]) -> String {
    path.iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(".")
}

impl ClusterNode {
    pub fn path_string(&self) -> String {
        path_string(&self.path)
    }

    pub fn child(&self, branch: usize) -> Option<&ClusterNode> {
        self.children.iter().find(|c| c.path.last() == Some(&branch))
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a ClusterNode>) {
        out.push(self);
        for c in &self.children {
            c.visit(out);
        }
    }
}

/// Cluster paths a query reached, one per level, each extending the previous.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub paths: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub params: ClusterParams,
    pub input_dim: usize,
    pub root: ClusterNode,
}

/// A fitted tree together with the assignments made while fitting.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub tree: ClusterTree,
    pub assignments: Vec<ClusterAssignment>,
}

fn node_seed(seed: u64, path: &[usize]) -> u64 {
    // SplitMix64 over the seed and the path.
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut mix = |v: u64| {
        z = z.wrapping_add(v).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut x = z;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z = x ^ (x >> 31);
    };
    mix(path.len() as u64);
    for &p in path {
        mix(p as u64);
    }
    z
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct Fitter<'a> {
    rows: &'a [SparseVector],
    n_cols: usize,
    params: &'a ClusterParams,
    assignments: Vec<Vec<String>>,
}

impl Fitter<'_> {
    fn fit_node(&mut self, members: Vec<usize>, path: Vec<usize>) -> Result<ClusterNode> {
        let depth = path.len();
        let p = self.params;
        let mut node = ClusterNode {
            path,
            depth,
            subspace: None,
            children: Vec::new(),
            member_count: members.len(),
            pruned: false,
            degenerate: false,
        };
        if depth == p.depth {
            node.pruned = members.len() < p.min_leaf;
            if !node.pruned {
                self.record(&members, &node);
            }
            return Ok(node);
        }
        if depth > 0 {
            self.record(&members, &node);
        }
        if members.len() < p.branch || self.n_cols < p.branch {
            return Ok(node);
        }

        let picked: Vec<SparseVector> = members.iter().map(|&m| self.rows[m].clone()).collect();
        let sub = SparseMatrix::from_rows(self.n_cols, &picked)?;
        if sub.frobenius_norm() == 0.0 {
            node.degenerate = true;
            return Ok(node);
        }
        let mut model = truncated_svd(&sub, p.branch, p.svd, node_seed(p.seed, &node.path))?;
        model.fit_rotation(&sub, p.varimax)?;

        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); p.branch];
        for (&m, row) in members.iter().zip(&picked) {
            let scores = model.project(row)?;
            groups[argmax(&scores)].push(m);
        }
        node.subspace = Some(model);
        for (branch, group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let mut child_path = node.path.clone();
            child_path.push(branch);
            let child = self.fit_node(group, child_path)?;
            node.children.push(child);
        }
        Ok(node)
    }

    fn record(&mut self, members: &[usize], node: &ClusterNode) {
        let name = node.path_string();
        for &m in members {
            self.assignments[m].push(name.clone());
        }
    }
}

fn transformed_rows(vectors: &[QueryVector], input_dim: usize, t: CountTransform) -> Result<Vec<SparseVector>> {
    vectors
        .iter()
        .map(|v| {
            if v.counts.indices.last().is_some_and(|&i| i >= input_dim) {
                return Err(Error::Dimension(format!(
                    "feature index outside a {input_dim}-dimensional vocabulary"
                )));
            }
            Ok(v.transformed(t))
        })
        .collect()
}

/// Fits the hierarchy over all `vectors` (the root holds every query).
pub fn fit_hierarchy(vectors: &[QueryVector], input_dim: usize, params: &ClusterParams) -> Result<ClusterFit> {
    params.validate()?;
    if vectors.is_empty() {
        return Err(Error::Data("no query vectors to cluster".into()));
    }
    let rows = transformed_rows(vectors, input_dim, params.transform)?;
    let members: Vec<usize> = (0..rows.len()).collect();
    let (root, assignments) = fit_subtree(&rows, input_dim, params, members, Vec::new())?;
    Ok(ClusterFit {
        tree: ClusterTree {
            params: params.clone(),
            input_dim,
            root,
        },
        assignments: assignments
            .into_iter()
            .map(|paths| ClusterAssignment { paths })
            .collect(),
    })
}

/// Fits the subtree rooted at `path` using only the given member rows
/// (already count-transformed). Returns the node and, per row of `rows`,
/// the paths recorded inside this subtree.
pub fn fit_subtree(
    rows: &[SparseVector],
    input_dim: usize,
    params: &ClusterParams,
    members: Vec<usize>,
    path: Vec<usize>,
) -> Result<(ClusterNode, Vec<Vec<String>>)> {
    let mut fitter = Fitter {
        rows,
        n_cols: input_dim,
        params,
        assignments: vec![Vec::new(); rows.len()],
    };
    let node = fitter.fit_node(members, path)?;
    Ok((node, fitter.assignments))
}

impl ClusterTree {
    /// Walks root → leaf, descending into the child of the largest rotated
    /// coordinate, and stops at leaves, pruned nodes or unpopulated branches.
    pub fn assign(&self, vector: &QueryVector) -> Result<ClusterAssignment> {
        if vector.counts.indices.last().is_some_and(|&i| i >= self.input_dim) {
            return Err(Error::Dimension(format!(
                "query vector exceeds the {}-dimensional vocabulary",
                self.input_dim
            )));
        }
        let row = vector.transformed(self.params.transform);
        let mut node = &self.root;
        let mut out = ClusterAssignment::default();
        while let Some(model) = &node.subspace {
            let scores = model.project(&row)?;
            match node.child(argmax(&scores)) {
                Some(child) if !child.pruned => {
                    out.paths.push(child.path_string());
                    node = child;
                }
                _ => break,
            }
        }
        Ok(out)
    }

    /// All nodes in depth-first pre-order, root first.
    pub fn nodes(&self) -> Vec<&ClusterNode> {
        let mut out = Vec::new();
        self.root.visit(&mut out);
        out
    }

    /// Non-pruned, non-root cluster paths in depth-first pre-order.
    pub fn valid_clusters(&self) -> Vec<String> {
        self.nodes()
            .into_iter()
            .filter(|n| n.depth > 0 && !n.pruned)
            .map(ClusterNode::path_string)
            .collect()
    }

    pub fn find(&self, path: &str) -> Option<&ClusterNode> {
        self.nodes().into_iter().find(|n| n.depth > 0 && n.path_string() == path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two groups over disjoint feature blocks.
    fn planted(n_per: usize, seed: u64) -> (Vec<QueryVector>, Vec<usize>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = 20;
        let mut vecs = Vec::new();
        let mut labels = Vec::new();
        for g in 0..2 {
            for _ in 0..n_per {
                let entries: Vec<(usize, f64)> = (0..5)
                    .map(|_| (g * block + rng.random_range(0..block), 1.0))
                    .collect();
                vecs.push(QueryVector {
                    counts: SparseVector::from_entries(entries),
                });
                labels.push(g);
            }
        }
        (vecs, labels, 2 * block)
    }

    fn params(depth: usize, branch: usize, min_leaf: usize) -> ClusterParams {
        ClusterParams {
            depth,
            branch,
            min_leaf,
            ..ClusterParams::default()
        }
    }

    #[test]
    fn separates_two_planted_groups() {
        let (vecs, labels, dim) = planted(100, 1);
        let fit = fit_hierarchy(&vecs, dim, &params(1, 2, 1)).unwrap();
        let pred: Vec<usize> = fit
            .assignments
            .iter()
            .map(|a| a.paths[0].parse::<usize>().unwrap())
            .collect();
        let ari = super::super::adjusted_rand_index(&labels, &pred);
        assert!(ari >= 0.9, "ARI {ari}");
    }

    #[test]
    fn oversized_min_leaf_prunes_every_deepest_leaf() {
        let (vecs, _, dim) = planted(60, 2);
        let fit = fit_hierarchy(&vecs, dim, &params(2, 2, 10_000)).unwrap();
        for n in fit.tree.nodes() {
            if n.depth == 2 {
                assert!(n.pruned);
            } else {
                assert!(!n.pruned);
            }
        }
        assert!(fit.tree.valid_clusters().iter().all(|p| !p.contains('.')));
        assert!(fit.assignments.iter().all(|a| a.paths.len() == 1));
    }

    #[test]
    fn default_shape_bounds_node_count() {
        let (vecs, _, dim) = planted(300, 3);
        let fit = fit_hierarchy(&vecs, dim, &params(3, 7, 1)).unwrap();
        let non_root = fit.tree.nodes().len() - 1;
        assert!(non_root <= 7 + 49 + 343);
    }

    #[test]
    fn assign_replays_fit_assignments() {
        let (vecs, _, dim) = planted(150, 4);
        let fit = fit_hierarchy(&vecs, dim, &params(3, 3, 5)).unwrap();
        for (v, a) in vecs.iter().zip(&fit.assignments) {
            assert_eq!(&fit.tree.assign(v).unwrap(), a);
        }
    }

    #[test]
    fn subtree_ignores_sibling_members() {
        let (vecs, _, dim) = planted(120, 8);
        let p = params(3, 2, 5);
        let fit = fit_hierarchy(&vecs, dim, &p).unwrap();
        let mut rows = transformed_rows(&vecs, dim, p.transform).unwrap();
        let child = &fit.tree.root.children[0];
        let label = child.path_string();
        let members: Vec<usize> = (0..vecs.len()).filter(|&i| fit.assignments[i].paths[0] == label).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            if !members.contains(&i) {
                *row = row.map_values(|v| 7.0 * v + 1.0);
            }
        }
        let (node, _) = fit_subtree(&rows, dim, &p, members, child.path.clone()).unwrap();
        assert_eq!(&node, child);
    }

    #[test]
    fn zero_vector_takes_first_branch() {
        let (vecs, _, dim) = planted(50, 5);
        let fit = fit_hierarchy(&vecs, dim, &params(1, 2, 1)).unwrap();
        let a = fit.tree.assign(&QueryVector::default()).unwrap();
        assert_eq!(a.paths.first().map(String::as_str), Some("1"));
    }

    #[test]
    fn argmax_picks_second_dimension() {
        assert_eq!(argmax(&[0.1, 2.5, 0.3]), 1);
        assert_eq!(path_string(&[argmax(&[0.1, 2.5, 0.3])]), "2");
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn small_nodes_become_leaves() {
        let (vecs, _, dim) = planted(2, 6);
        let fit = fit_hierarchy(&vecs, dim, &params(2, 7, 1)).unwrap();
        assert!(fit.tree.root.subspace.is_none());
        assert!(fit.tree.root.children.is_empty());
    }

    #[test]
    fn all_zero_members_flag_degenerate() {
        let vecs = vec![QueryVector::default(); 10];
        let fit = fit_hierarchy(&vecs, 5, &params(1, 2, 1)).unwrap();
        assert!(fit.tree.root.degenerate);
    }

    #[test]
    fn dimension_mismatch_on_assign() {
        let (vecs, _, dim) = planted(50, 7);
        let fit = fit_hierarchy(&vecs, dim, &params(1, 2, 1)).unwrap();
        let bad = QueryVector {
            counts: SparseVector::from_entries(vec![(dim + 3, 1.0)]),
        };
        assert!(matches!(fit.tree.assign(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        let (vecs, _, dim) = planted(5, 8);
        assert!(matches!(fit_hierarchy(&vecs, dim, &params(0, 2, 1)), Err(Error::Config(_))));
        assert!(matches!(fit_hierarchy(&vecs, dim, &params(1, 1, 1)), Err(Error::Config(_))));
        assert!(matches!(fit_hierarchy(&[], dim, &params(1, 2, 1)), Err(Error::Data(_))));
    }
}
