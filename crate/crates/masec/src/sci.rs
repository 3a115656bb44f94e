//! Security controllability indices and minimum-attack-set search.
//!
//! The index of an attacked agent counts the follower modes the adversary
//! can steer through that agent alone; the network index counts the modes
//! reachable through the whole attacked set. Both are ranks of
//! controllability matrices of the transformed grounded-Laplacian pair.
//!
//! Two transform conventions are supported because the underlying
//! construction is stated ambiguously in the literature this follows:
//! `Diagonalizing` (the default) inverts the right-eigenvector matrix, which
//! actually diagonalizes the grounded Laplacian and makes the network index
//! equal to the plain Kalman rank of the untransformed pair;
//! `PaperLiteral` uses the right eigenvectors verbatim as the rows of the
//! transform. Reports always name the convention in use.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, hstack, rank_allow_empty, to_complex, CMat};
use crate::topology::{check_eigvec_span, partition, DirectedGraph, LaplacianPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SciConvention {
    Diagonalizing,
    PaperLiteral,
}

impl std::fmt::Display for SciConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SciConvention::Diagonalizing => write!(f, "diagonalizing"),
            SciConvention::PaperLiteral => write!(f, "paper_literal"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSci {
    pub agent_id: usize,
    pub sci: usize,
}

/// Security controllability indices for one partition under one convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SciReport {
    pub convention: SciConvention,
    pub per_agent: Vec<AgentSci>,
    pub network_sci: usize,
    pub n_followers: usize,
    /// True iff the network index equals the follower count.
    pub full_control: bool,
    pub tolerance_used: f64,
}

/// Transformed pair: the diagonal of grounded-Laplacian eigenvalues and the
/// transformed coupling matrix under the requested convention.
fn transformed_pair(
    part: &LaplacianPartition,
    convention: SciConvention,
    rtol: Option<f64>,
) -> Result<(CMat, CMat)> {
    let nf = part.n_followers();
    let clusters = numerics::eigen_clusters(&part.grounded, rtol)?;
    let mut eigvecs = CMat::zeros(nf, nf);
    let mut lambdas = Vec::with_capacity(nf);
    let mut col = 0;
    for cluster in &clusters {
        if cluster.geometric != cluster.algebraic {
            return Err(Error::Assumption(format!(
                "grounded Laplacian is not diagonalizable: eigenvalue {} has algebraic \
                 multiplicity {} but geometric multiplicity {}",
                cluster.centroid, cluster.algebraic, cluster.geometric
            )));
        }
        for k in 0..cluster.members.len() {
            eigvecs.set_column(col, &cluster.basis.column(k));
            // the diagonal carries the centroid for every cluster member:
            // eigenvalues the clustering policy declares equal must be
            // exactly equal here, or repeated modes pick up spurious rank
            lambdas.push(cluster.centroid);
            col += 1;
        }
    }
    debug_assert_eq!(col, nf);
    let lambda_diag =
        CMat::from_fn(nf, nf, |r, c| if r == c { lambdas[r] } else { numerics::C64::new(0.0, 0.0) });

    let coupling = to_complex(&part.coupling);
    let transformed = match convention {
        SciConvention::Diagonalizing => {
            let inv = eigvecs.clone().try_inverse().ok_or_else(|| {
                Error::Assumption("eigenvector matrix is numerically singular".into())
            })?;
            &inv * &coupling
        }
        SciConvention::PaperLiteral => &eigvecs.transpose() * &coupling,
    };
    Ok((lambda_diag, transformed))
}

fn ctrb_rank(lambda: &CMat, b: &CMat, rtol: Option<f64>) -> Result<(usize, f64)> {
    let nf = lambda.nrows();
    if nf == 0 || b.ncols() == 0 {
        return Ok((0, 0.0));
    }
    let mut blocks = Vec::with_capacity(nf);
    let mut cur = b.clone();
    for _ in 0..nf {
        blocks.push(cur.clone());
        cur = lambda * cur;
    }
    let refs: Vec<&CMat> = blocks.iter().collect();
    let r = rank_allow_empty(&hstack(&refs), rtol)?;
    Ok((r.rank, r.tolerance_used))
}

/// Per-agent and network indices in one report. The network controllability
/// matrix contains every per-agent matrix's columns, so the network index
/// dominates each per-agent index; that monotonicity is asserted on every
/// run.
pub fn sci_report(
    part: &LaplacianPartition,
    convention: SciConvention,
    rtol: Option<f64>,
) -> Result<SciReport> {
    if part.n_attacked() == 0 {
        return Err(Error::Validation("the attacked set is empty".into()));
    }
    let nf = part.n_followers();
    if nf == 0 {
        // every agent attacked: no follower modes to steer
        return Ok(SciReport {
            convention,
            per_agent: part
                .attacked_ids
                .iter()
                .map(|&agent_id| AgentSci { agent_id, sci: 0 })
                .collect(),
            network_sci: 0,
            n_followers: 0,
            full_control: true,
            tolerance_used: 0.0,
        });
    }
    let (lambda, transformed) = transformed_pair(part, convention, rtol)?;
    let mut per_agent = Vec::with_capacity(part.n_attacked());
    for (idx, &agent_id) in part.attacked_ids.iter().enumerate() {
        let column = CMat::from_fn(nf, 1, |r, _| transformed[(r, idx)]);
        let (sci, _) = ctrb_rank(&lambda, &column, rtol)?;
        per_agent.push(AgentSci { agent_id, sci });
    }
    let (network_sci, tolerance_used) = ctrb_rank(&lambda, &transformed, rtol)?;

    let max_single = per_agent.iter().map(|a| a.sci).max().unwrap_or(0);
    assert!(
        network_sci >= max_single,
        "network index {network_sci} below a per-agent index {max_single}"
    );

    Ok(SciReport {
        convention,
        per_agent,
        network_sci,
        n_followers: nf,
        full_control: network_sci == nf,
        tolerance_used,
    })
}

/// Per-agent indices only.
pub fn sci_per_agent(
    part: &LaplacianPartition,
    convention: SciConvention,
    rtol: Option<f64>,
) -> Result<Vec<AgentSci>> {
    Ok(sci_report(part, convention, rtol)?.per_agent)
}

/// Network index only.
pub fn sci_network(
    part: &LaplacianPartition,
    convention: SciConvention,
    rtol: Option<f64>,
) -> Result<usize> {
    Ok(sci_report(part, convention, rtol)?.network_sci)
}

/// Solution of the minimum-attack-set search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSetSolution {
    /// Smallest cardinality achieving full control, if any within the bound.
    pub minimal_cardinality: Option<usize>,
    /// Every attacked set of that cardinality achieving full control,
    /// lexicographic.
    pub witness_sets: Vec<Vec<usize>>,
    pub evaluated_subsets: usize,
    /// Subsets skipped because their grounded Laplacian violates the
    /// eigenvector-span assumption.
    pub skipped_span_violations: usize,
    pub diagnostic: Option<String>,
}

/// Guard for the exhaustive subset enumeration.
const MAX_AGENTS_FOR_SEARCH: usize = 20;

enum SubsetOutcome {
    Feasible,
    Infeasible,
    SpanViolated,
}

fn evaluate_subset(
    g: &DirectedGraph,
    subset: &[usize],
    convention: SciConvention,
    rtol: Option<f64>,
) -> Result<SubsetOutcome> {
    let part = partition(g, subset)?;
    if part.n_followers() == 0 {
        // attacking everyone leaves nothing to steer indirectly
        return Ok(SubsetOutcome::Feasible);
    }
    let span = check_eigvec_span(&part.grounded, rtol)?;
    if !span.holds {
        return Ok(SubsetOutcome::SpanViolated);
    }
    let report = sci_report(&part, convention, rtol)?;
    Ok(if report.full_control { SubsetOutcome::Feasible } else { SubsetOutcome::Infeasible })
}

/// Enumerate attacked subsets by increasing cardinality until some subset
/// achieves a network index equal to the follower count. Subsets whose
/// grounded Laplacian is not diagonalizable are skipped and counted.
/// Subsets of one cardinality are evaluated concurrently; results merge in
/// lexicographic order.
pub fn min_attack_set(
    g: &DirectedGraph,
    max_cardinality: usize,
    convention: SciConvention,
    rtol: Option<f64>,
) -> Result<AttackSetSolution> {
    let n = g.n_agents();
    if n > MAX_AGENTS_FOR_SEARCH {
        return Err(Error::Validation(format!(
            "exhaustive search is limited to {MAX_AGENTS_FOR_SEARCH} agents, got {n}"
        )));
    }
    if max_cardinality == 0 {
        return Err(Error::Validation("max cardinality must be at least 1".into()));
    }
    let cap = max_cardinality.min(n);
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for cardinality in 1..=cap {
        let subsets: Vec<Vec<usize>> = (1..=n).combinations(cardinality).collect();
        let outcomes: Vec<Result<SubsetOutcome>> = subsets
            .par_iter()
            .map(|subset| evaluate_subset(g, subset, convention, rtol))
            .collect();
        let mut witnesses = Vec::new();
        for (subset, outcome) in subsets.iter().zip(outcomes) {
            evaluated += 1;
            match outcome? {
                SubsetOutcome::Feasible => witnesses.push(subset.clone()),
                SubsetOutcome::SpanViolated => skipped += 1,
                SubsetOutcome::Infeasible => {}
            }
        }
        if !witnesses.is_empty() {
            return Ok(AttackSetSolution {
                minimal_cardinality: Some(cardinality),
                witness_sets: witnesses,
                evaluated_subsets: evaluated,
                skipped_span_violations: skipped,
                diagnostic: None,
            });
        }
    }
    Ok(AttackSetSolution {
        minimal_cardinality: None,
        witness_sets: vec![],
        evaluated_subsets: evaluated,
        skipped_span_violations: skipped,
        diagnostic: Some(format!(
            "no attacked set of cardinality <= {cap} achieves full control \
             ({skipped} subsets skipped for span violations)"
        )),
    })
}
