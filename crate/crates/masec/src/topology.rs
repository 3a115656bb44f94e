//! Directed communication graph, Laplacian construction, and the
//! follower/attacked partition.
//!
//! Agent ids are 1-based everywhere a user can see them; matrix indices are
//! 0-based internally. The partition permutes followers first and records
//! both id lists so stacked vectors can always be mapped back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, C64, RMat};

/// Unweighted directed graph; edge `(j, i)` means agent `j` transmits to
/// agent `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
}

impl DirectedGraph {
    /// Build a graph over agents `1..=n_agents`. Rejects self-loops,
    /// out-of-range endpoints, and duplicate edges (edges are unweighted).
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Validation("graph must have at least one agent".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(from, to) in edges {
            if from == to {
                return Err(Error::Validation(format!("self-loop on agent {from} is not allowed")));
            }
            for id in [from, to] {
                if id == 0 || id > n_agents {
                    return Err(Error::Validation(format!(
                        "edge [{from}, {to}] references unknown agent {id} (agents are 1..={n_agents})"
                    )));
                }
            }
            if !seen.insert((from, to)) {
                return Err(Error::Validation(format!(
                    "duplicate edge [{from}, {to}]; weighted graphs are not supported"
                )));
            }
        }
        let mut edges: Vec<(usize, usize)> = seen.into_iter().collect();
        edges.sort_unstable();
        Ok(Self { n_agents, edges })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Agents transmitting to `agent` (its in-neighborhood), ascending.
    pub fn in_neighbors(&self, agent: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, to)| to == agent).map(|&(from, _)| from).collect()
    }

    pub fn in_degree(&self, agent: usize) -> usize {
        self.edges.iter().filter(|&&(_, to)| to == agent).count()
    }

    /// Graph Laplacian `L = D - A` with `a_ij = 1` iff edge `(j, i)` exists.
    /// Entries are small integers, so every row sums to zero exactly.
    pub fn laplacian(&self) -> RMat {
        let n = self.n_agents;
        let mut l = RMat::zeros(n, n);
        for &(from, to) in &self.edges {
            l[(to - 1, from - 1)] = -1.0;
            l[(to - 1, to - 1)] += 1.0;
        }
        l
    }
}

/// The Laplacian split into follower/attacked blocks under the
/// followers-first permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPartition {
    /// Whole-graph Laplacian in original agent order.
    pub full: RMat,
    /// Follower rows and columns: the grounded Laplacian.
    pub grounded: RMat,
    /// Follower rows, attacked columns: how attacked agents drive followers.
    pub coupling: RMat,
    /// Attacked rows, follower columns. No analysis consumes it; carried so
    /// the four blocks reassemble the full Laplacian.
    pub reverse_coupling: RMat,
    /// Attacked rows and columns.
    pub attacked_block: RMat,
    /// Diagonal matrix of attacked-agent in-degrees.
    pub attacked_degrees: RMat,
    /// Follower ids, ascending; block row/column order of `grounded`.
    pub follower_ids: Vec<usize>,
    /// Attacked ids, ascending; block column order of `coupling`.
    pub attacked_ids: Vec<usize>,
}

impl LaplacianPartition {
    pub fn n_followers(&self) -> usize {
        self.follower_ids.len()
    }

    pub fn n_attacked(&self) -> usize {
        self.attacked_ids.len()
    }

    /// In-degree of the k-th attacked agent.
    pub fn attacked_degree(&self, k: usize) -> f64 {
        self.attacked_degrees[(k, k)]
    }
}

/// Split the Laplacian for a set of directly attacked agents. The attacked
/// set may be empty or cover every agent; both degenerate cases produce
/// empty blocks that downstream analyses flag.
pub fn partition(g: &DirectedGraph, attacked: &[usize]) -> Result<LaplacianPartition> {
    let n = g.n_agents();
    let mut attacked_sorted: Vec<usize> = attacked.to_vec();
    attacked_sorted.sort_unstable();
    attacked_sorted.dedup();
    if attacked_sorted.len() != attacked.len() {
        return Err(Error::Validation("attacked set contains duplicate agent ids".into()));
    }
    for &id in &attacked_sorted {
        if id == 0 || id > n {
            return Err(Error::Validation(format!(
                "attacked set references unknown agent {id} (agents are 1..={n})"
            )));
        }
    }
    let is_attacked = |id: usize| attacked_sorted.binary_search(&id).is_ok();
    let follower_ids: Vec<usize> = (1..=n).filter(|&id| !is_attacked(id)).collect();

    let full = g.laplacian();
    let nf = follower_ids.len();
    let na = attacked_sorted.len();
    let block = |row_ids: &[usize], col_ids: &[usize]| {
        RMat::from_fn(row_ids.len(), col_ids.len(), |r, c| full[(row_ids[r] - 1, col_ids[c] - 1)])
    };
    let grounded = block(&follower_ids, &follower_ids);
    let coupling = block(&follower_ids, &attacked_sorted);
    let reverse_coupling = block(&attacked_sorted, &follower_ids);
    let attacked_block = block(&attacked_sorted, &attacked_sorted);
    let mut attacked_degrees = RMat::zeros(na, na);
    for (k, &id) in attacked_sorted.iter().enumerate() {
        attacked_degrees[(k, k)] = g.in_degree(id) as f64;
    }
    debug_assert_eq!(nf + na, n);
    Ok(LaplacianPartition {
        full,
        grounded,
        coupling,
        reverse_coupling,
        attacked_block,
        attacked_degrees,
        follower_ids,
        attacked_ids: attacked_sorted,
    })
}

/// Multiplicity record for one eigenvalue cluster of the grounded Laplacian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterMultiplicity {
    pub eigenvalue: C64,
    pub algebraic: usize,
    pub geometric: usize,
}

/// Result of the eigenvector-span (diagonalizability) check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigvecSpanReport {
    /// True iff every eigenvalue cluster has geometric multiplicity equal to
    /// its algebraic multiplicity (vacuously true for a 0x0 matrix).
    pub holds: bool,
    /// All eigenvalues, sorted by (re, im).
    pub eigenvalues: Vec<C64>,
    pub clusters: Vec<ClusterMultiplicity>,
}

/// Check whether the eigenvectors of a grounded Laplacian span the follower
/// space. Eigenvalues within `1e-6 * (1 + |lambda|)` of each other count as
/// one cluster; the geometric multiplicity is the kernel dimension of
/// `L_f - lambda I` at the cluster centroid, with the singular-value cutoff
/// widened to the clustering tolerance (the centroid inherits the
/// eigensolver's error, which can exceed the plain SVD cutoff).
pub fn check_eigvec_span(grounded: &RMat, rtol: Option<f64>) -> Result<EigvecSpanReport> {
    if !grounded.is_square() {
        return Err(Error::Validation("grounded Laplacian must be square".into()));
    }
    if grounded.is_empty() {
        return Ok(EigvecSpanReport { holds: true, eigenvalues: vec![], clusters: vec![] });
    }
    let clusters = numerics::eigen_clusters(grounded, rtol)?;
    let mut eigenvalues = Vec::new();
    let mut multiplicities = Vec::new();
    let mut holds = true;
    for c in &clusters {
        eigenvalues.extend_from_slice(&c.members);
        holds &= c.geometric == c.algebraic;
        multiplicities.push(ClusterMultiplicity {
            eigenvalue: c.centroid,
            algebraic: c.algebraic,
            geometric: c.geometric,
        });
    }
    Ok(EigvecSpanReport { holds, eigenvalues, clusters: multiplicities })
}
