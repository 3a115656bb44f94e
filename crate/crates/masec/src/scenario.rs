//! Scenario file parsing and validation.
//!
//! One JSON scenario drives every command, so analysis and simulation can
//! never disagree about inputs. The schema is strict: unknown fields are
//! rejected, dimensions are cross-checked at load, and the standing model
//! assumptions (controllability, observability, full-column-rank observer
//! gain) must hold before any command runs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    build_check_matrices, build_network_matrices, validate_dynamics, AgentDynamics,
    AugmentedDynamics, NetworkMatrices,
};
use crate::numerics::{RMat, RVec};
use crate::sci::SciConvention;
use crate::sim::AttackSignalSpec;
use crate::topology::{partition, DirectedGraph, LaplacianPartition};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSet {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n_agents: usize,
    /// Edge `[from, to]` means `from` transmits to `to`.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative rank tolerance; multiplies the largest singular value.
    pub rank_rtol: Option<f64>,
    /// Consensus threshold used by simulation summaries.
    pub consensus_eps: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub attacks: Vec<AttackSignalSpec>,
}

/// Raw scenario file, mirroring the JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dims: Dims,
    pub matrices: MatrixSet,
    pub graph: GraphSpec,
    pub attacked: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sci_convention: Option<SciConvention>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sim: Option<SimSpec>,
}

/// Validated scenario with typed domain objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub dynamics: AgentDynamics,
    pub graph: DirectedGraph,
    /// Sorted attacked ids.
    pub attacked: Vec<usize>,
    pub rank_rtol: Option<f64>,
    pub consensus_eps: f64,
    pub sci_convention: SciConvention,
    pub seed: u64,
    /// SHA-256 of the scenario text, hex-encoded.
    pub digest: String,
}

pub const DEFAULT_CONSENSUS_EPS: f64 = 1e-3;

fn grid_to_matrix(name: &str, grid: &[Vec<f64>], rows: usize, cols: usize) -> Result<RMat> {
    if grid.len() != rows {
        return Err(Error::Validation(format!(
            "matrix {name}: expected {rows} rows, found {}",
            grid.len()
        )));
    }
    for (i, row) in grid.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Validation(format!(
                "matrix {name}: row {} has {} entries, expected {cols}",
                i + 1,
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "matrix {name}: row {} contains a non-finite entry",
                i + 1
            )));
        }
    }
    Ok(RMat::from_fn(rows, cols, |r, c| grid[r][c]))
}

/// Parse and fully validate a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text)
        .map_err(|e| Error::Validation(format!("scenario parse error: {e}")))?;

    let Dims { n, m, p } = file.dims;
    let a = grid_to_matrix("A", &file.matrices.a, n, n)?;
    let b = grid_to_matrix("B", &file.matrices.b, n, m)?;
    let c = grid_to_matrix("C", &file.matrices.c, p, n)?;
    let h = grid_to_matrix("H", &file.matrices.h, n, p)?;
    let k = grid_to_matrix("K", &file.matrices.k, m, n)?;
    let dynamics = AgentDynamics::new(n, m, p, a, b, c, h, k)?;

    let rank_rtol = file.tolerances.rank_rtol;
    if let Some(rtol) = rank_rtol {
        if !(rtol >= 0.0) || !rtol.is_finite() {
            return Err(Error::Validation("tolerances.rank_rtol must be nonnegative".into()));
        }
    }

    let validation = validate_dynamics(&dynamics, rank_rtol)?;
    if !validation.passed {
        let mut reasons = Vec::new();
        if !validation.controllable {
            reasons.push(format!(
                "(A, B) is not controllable (rank {} of {n})",
                validation.controllability_rank
            ));
        }
        if !validation.observable {
            reasons.push(format!(
                "(A, C) is not observable (rank {} of {n})",
                validation.observability_rank
            ));
        }
        if !validation.observer_gain_full_column_rank {
            reasons.push(format!(
                "H does not have full column rank (rank {})",
                validation.observer_gain_rank
            ));
        }
        return Err(Error::Validation(format!("agent model assumptions fail: {}", reasons.join("; "))));
    }

    let graph = DirectedGraph::new(file.graph.n_agents, &file.graph.edges)?;

    let mut attacked = file.attacked.clone();
    attacked.sort_unstable();
    attacked.dedup();
    if attacked.len() != file.attacked.len() {
        return Err(Error::Validation("attacked list contains duplicate ids".into()));
    }
    for &id in &attacked {
        if id == 0 || id > graph.n_agents() {
            return Err(Error::Validation(format!(
                "attacked list references unknown agent {id}"
            )));
        }
    }

    if let Some(sim) = &file.sim {
        if !(sim.dt > 0.0) || !sim.dt.is_finite() {
            return Err(Error::Validation("sim.dt must be positive".into()));
        }
        if !(sim.t_end >= 0.0) || !sim.t_end.is_finite() {
            return Err(Error::Validation("sim.t_end must be nonnegative".into()));
        }
        if let Some(x0) = &sim.x0 {
            let expected = 2 * n * graph.n_agents();
            if x0.len() != expected {
                return Err(Error::Validation(format!(
                    "sim.x0 has length {}, expected 2nN = {expected}",
                    x0.len()
                )));
            }
            if x0.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation("sim.x0 contains a non-finite entry".into()));
            }
        }
        let mut targets = std::collections::BTreeSet::new();
        for spec in &sim.attacks {
            if !attacked.contains(&spec.target_agent) {
                return Err(Error::Validation(format!(
                    "sim attack targets agent {}, which is not in the attacked set",
                    spec.target_agent
                )));
            }
            if !targets.insert(spec.target_agent) {
                return Err(Error::Validation(format!(
                    "agent {} has more than one attack spec",
                    spec.target_agent
                )));
            }
            if let Some(dim) = spec.xhat_signal.dim() {
                if dim != n {
                    return Err(Error::Validation(format!(
                        "xhat_signal for agent {} has dimension {dim}, expected n = {n}",
                        spec.target_agent
                    )));
                }
            }
            if let Some(dim) = spec.y_signal.dim() {
                if dim != p {
                    return Err(Error::Validation(format!(
                        "y_signal for agent {} has dimension {dim}, expected p = {p}",
                        spec.target_agent
                    )));
                }
            }
            if !spec.start_time.is_finite() || spec.start_time < 0.0 {
                return Err(Error::Validation("attack start_time must be nonnegative".into()));
            }
        }
    }

    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(Scenario {
        consensus_eps: file.tolerances.consensus_eps.unwrap_or(DEFAULT_CONSENSUS_EPS),
        rank_rtol,
        sci_convention: file.sci_convention.unwrap_or(SciConvention::Diagonalizing),
        seed: file.seed.unwrap_or(0),
        dynamics,
        graph,
        attacked,
        digest,
        file,
    })
}

impl Scenario {
    pub fn partition(&self) -> Result<LaplacianPartition> {
        partition(&self.graph, &self.attacked)
    }

    pub fn augmented(&self) -> AugmentedDynamics {
        build_check_matrices(&self.dynamics)
    }

    pub fn network(&self) -> Result<(AugmentedDynamics, NetworkMatrices, LaplacianPartition)> {
        let part = self.partition()?;
        let aug = self.augmented();
        let nm = build_network_matrices(&self.dynamics, &part)?;
        Ok((aug, nm, part))
    }

    /// Initial stacked state: the scenario's `sim.x0` when given, otherwise
    /// seeded uniform on `[-1, 1]`.
    pub fn initial_state(&self) -> RVec {
        let dim = 2 * self.dynamics.n * self.graph.n_agents();
        if let Some(sim) = &self.file.sim {
            if let Some(x0) = &sim.x0 {
                return RVec::from_column_slice(x0);
            }
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        RVec::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
    }

    pub fn sim_spec(&self) -> Option<&SimSpec> {
        self.file.sim.as_ref()
    }
}
