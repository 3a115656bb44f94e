//! Assembly and serialization of analysis reports.
//!
//! Every rank in a report carries the tolerance it was computed with, and
//! every eigenvalue carries its residual, so each number can be audited
//! after the fact. Reports serialize to JSON deterministically: the same
//! scenario and seed produce byte-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{theorem1_check, theorem2_check, Theorem1Report, Theorem2Report};
use crate::error::Result;
use crate::numerics::{self, to_complex, C64, CMat};
use crate::scenario::Scenario;
use crate::sci::{sci_report, AttackSetSolution, SciConvention, SciReport};
use crate::topology::EigvecSpanReport;
use crate::zerodyn::{
    attacked_pencil, excitation_feasible, follower_pencil, invariant_zeros, theorem3_audit,
    zero_directions, RosenbrockPencil, Theorem3Audit,
};

/// Eigenvalue with the residual `sigma_min(M - lambda I)` of its location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenvalueEntry {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologySummary {
    pub n_agents: usize,
    pub n_followers: usize,
    pub n_attacked: usize,
    pub follower_ids: Vec<usize>,
    pub attacked_ids: Vec<usize>,
    pub grounded_eigenvalues: Vec<EigenvalueEntry>,
    pub span: EigvecSpanReport,
}

/// One confirmed zero with its direction-space summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroEntry {
    pub value: C64,
    pub rank_at_zero: usize,
    pub directions: usize,
    pub excitable_directions: usize,
    /// Largest direction residual `||P(zero) v||`.
    pub worst_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PencilSummary {
    pub rows: usize,
    pub cols: usize,
    pub normal_rank: usize,
    pub zeros: Vec<ZeroEntry>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZerosSummary {
    pub attacked: PencilSummary,
    pub followers: PencilSummary,
    pub audit: Theorem3Audit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToleranceRecord {
    /// Caller-supplied relative rank tolerance, if any.
    pub rank_rtol: Option<f64>,
    /// Description of the default cutoff applied when `rank_rtol` is unset.
    pub default_rank_policy: String,
    /// Relative width used to cluster numerically coincident eigenvalues.
    pub eig_cluster_rtol: f64,
    pub consensus_eps: f64,
    pub seed: u64,
}

/// Full analysis output of the `analyze` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub scenario_digest: String,
    pub topology: TopologySummary,
    pub theorem1: Theorem1Report,
    pub theorem2: Option<Theorem2Report>,
    pub theorem2_skipped: Option<String>,
    /// Indices under both conventions, diagonalizing first.
    pub sci: Vec<SciReport>,
    pub sci_skipped: Option<String>,
    pub zeros: ZerosSummary,
    pub tolerances: ToleranceRecord,
}

fn eigenvalue_entries(grounded: &CMat, values: &[C64]) -> Result<Vec<EigenvalueEntry>> {
    let n = grounded.nrows();
    let eye = CMat::identity(n, n);
    let mut out = Vec::with_capacity(values.len());
    for &lambda in values {
        let shifted = grounded - &eye * lambda;
        let sv = numerics::rank_allow_empty(&shifted, None)?.singular_values;
        let residual = sv.last().copied().unwrap_or(0.0);
        out.push(EigenvalueEntry { re: lambda.re, im: lambda.im, residual });
    }
    Ok(out)
}

fn pencil_summary(
    pencil: &RosenbrockPencil,
    rng: &mut ChaCha8Rng,
    rtol: Option<f64>,
) -> Result<PencilSummary> {
    let search = invariant_zeros(pencil, rng, rtol)?;
    let mut zeros = Vec::with_capacity(search.zeros.len());
    for z in &search.zeros {
        let dirs = zero_directions(pencil, z.value, rtol)?;
        let excitable =
            dirs.iter().filter(|d| excitation_feasible(d, pencil).feasible).count();
        let worst_residual = dirs.iter().map(|d| d.residual).fold(0.0, f64::max);
        zeros.push(ZeroEntry {
            value: z.value,
            rank_at_zero: z.rank_at_zero,
            directions: dirs.len(),
            excitable_directions: excitable,
            worst_residual,
        });
    }
    Ok(PencilSummary {
        rows: pencil.rows(),
        cols: pencil.cols(),
        normal_rank: search.normal_rank,
        zeros,
        note: search.note,
    })
}

/// Zero-dynamics summary for both subsystem pencils plus the
/// simultaneous-excitation audit.
pub fn build_zeros_summary(sc: &Scenario) -> Result<ZerosSummary> {
    let (aug, nm, _part) = sc.network()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let attacked = attacked_pencil(&nm, &aug, &mut rng, sc.rank_rtol)?;
    let followers = follower_pencil(&nm, &aug, &mut rng, sc.rank_rtol)?;
    Ok(ZerosSummary {
        attacked: pencil_summary(&attacked, &mut rng, sc.rank_rtol)?,
        followers: pencil_summary(&followers, &mut rng, sc.rank_rtol)?,
        audit: theorem3_audit(&nm, &aug, sc.seed, sc.rank_rtol)?,
    })
}

/// Security indices under both conventions (diagonalizing first), or the
/// reason they are unavailable.
pub fn build_sci_reports(sc: &Scenario) -> (Vec<SciReport>, Option<String>) {
    let part = match sc.partition() {
        Ok(p) => p,
        Err(e) => return (vec![], Some(e.to_string())),
    };
    let mut reports = Vec::new();
    for convention in [SciConvention::Diagonalizing, SciConvention::PaperLiteral] {
        match sci_report(&part, convention, sc.rank_rtol) {
            Ok(r) => reports.push(r),
            Err(e) => return (vec![], Some(e.to_string())),
        }
    }
    (reports, None)
}

/// Run every analysis on a scenario and assemble the full report.
pub fn build_analysis_report(sc: &Scenario) -> Result<AnalysisReport> {
    let (aug, nm, part) = sc.network()?;

    let span = crate::topology::check_eigvec_span(&part.grounded, sc.rank_rtol)?;
    let grounded_eigenvalues =
        eigenvalue_entries(&to_complex(&part.grounded), &span.eigenvalues)?;
    let topology = TopologySummary {
        n_agents: sc.graph.n_agents(),
        n_followers: part.n_followers(),
        n_attacked: part.n_attacked(),
        follower_ids: part.follower_ids.clone(),
        attacked_ids: part.attacked_ids.clone(),
        grounded_eigenvalues,
        span,
    };

    let theorem1 = theorem1_check(&nm, &aug, &part, sc.rank_rtol, false)?;
    let (theorem2, theorem2_skipped) = match theorem2_check(&aug, &part, sc.rank_rtol) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (sci, sci_skipped) = build_sci_reports(sc);
    let zeros = build_zeros_summary(sc)?;

    Ok(AnalysisReport {
        tool: "masec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario_digest: sc.digest.clone(),
        topology,
        theorem1,
        theorem2,
        theorem2_skipped,
        sci,
        sci_skipped,
        zeros,
        tolerances: ToleranceRecord {
            rank_rtol: sc.rank_rtol,
            default_rank_policy: "max(rows, cols) * machine_epsilon * sigma_max".into(),
            eig_cluster_rtol: numerics::CLUSTER_RTOL,
            consensus_eps: sc.consensus_eps,
            seed: sc.seed,
        },
    })
}

/// Report wrapper for the minimum-attack-set command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinAttackSetReport {
    pub scenario_digest: String,
    pub convention: SciConvention,
    pub max_cardinality: usize,
    pub solution: AttackSetSolution,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const JSON: &str = r#"{
  "dims": {"n": 2, "m": 1, "p": 2},
  "matrices": {
    "A": [[-2.0, 2.0], [-1.0, 1.0]],
    "B": [[1.0], [0.0]],
    "C": [[1.0, 0.0], [0.0, 1.0]],
    "H": [[0.0, 0.3], [-0.3, 0.0]],
    "K": [[-1.0, 2.0]]
  },
  "graph": {
    "n_agents": 6,
    "edges": [[6, 1], [5, 2], [6, 2], [2, 3], [2, 4], [3, 4], [2, 5], [5, 6]]
  },
  "attacked": [4, 5, 6]
}"#;

    #[test]
    fn analysis_report_is_deterministic_and_round_trips() {
        let sc = parse_scenario(JSON).unwrap();
        let a = build_analysis_report(&sc).unwrap();
        let b = build_analysis_report(&sc).unwrap();
        let ja = serde_json::to_string_pretty(&a).unwrap();
        let jb = serde_json::to_string_pretty(&b).unwrap();
        assert_eq!(ja, jb);

        let parsed: AnalysisReport = serde_json::from_str(&ja).unwrap();
        let jc = serde_json::to_string_pretty(&parsed).unwrap();
        assert_eq!(ja, jc);
    }

    #[test]
    fn report_carries_verdicts_and_tolerances() {
        let sc = parse_scenario(JSON).unwrap();
        let report = build_analysis_report(&sc).unwrap();
        assert!(report.topology.span.holds);
        assert!(!report.theorem1.theorem_verdict);
        assert!(report.theorem2.as_ref().unwrap().verdict);
        assert_eq!(report.sci.len(), 2);
        assert_eq!(report.sci[0].convention, SciConvention::Diagonalizing);
        assert_eq!(report.sci[0].network_sci, 3);
        assert_eq!(report.sci[1].network_sci, 2);
        assert!(report.zeros.attacked.zeros.is_empty());
        assert!(report.zeros.audit.passed);
        assert!(report.theorem1.direct_rank.tolerance_used > 0.0);
        for e in &report.topology.grounded_eigenvalues {
            assert!(e.residual <= 1e-9);
        }
    }
}
