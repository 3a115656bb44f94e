//! Agent dynamics validation and assembly of the stacked network matrices.
//!
//! Every agent runs the same plant `(A, B, C)` with observer gain `H` and
//! controller gain `K`. The per-agent closed loop stacks plant and observer
//! state into one 2n block; the network stacks attacked agents first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, block_diag, block_matrix, kron, RMat, RVec};
use crate::topology::LaplacianPartition;

/// The shared agent model: plant, output, observer and controller gains.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDynamics {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub h: RMat,
    pub k: RMat,
}

impl AgentDynamics {
    /// Dimension-checked constructor. Rank conditions (controllability,
    /// observability, full-column-rank `H`) are reported separately by
    /// [`validate_dynamics`]; scenario loading enforces them.
    pub fn new(n: usize, m: usize, p: usize, a: RMat, b: RMat, c: RMat, h: RMat, k: RMat) -> Result<Self> {
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::Validation("dimensions n, m, p must all be positive".into()));
        }
        let expect = |name: &str, mat: &RMat, rows: usize, cols: usize| -> Result<()> {
            if mat.shape() != (rows, cols) {
                return Err(Error::Validation(format!(
                    "matrix {name}: expected {rows}x{cols}, found {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if mat.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("matrix {name} contains a non-finite entry")));
            }
            Ok(())
        };
        expect("A", &a, n, n)?;
        expect("B", &b, n, m)?;
        expect("C", &c, p, n)?;
        expect("H", &h, n, p)?;
        expect("K", &k, m, n)?;
        Ok(Self { n, m, p, a, b, c, h, k })
    }
}

/// Rank report for the standing assumptions on the agent model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsValidation {
    pub controllability_rank: usize,
    pub observability_rank: usize,
    pub observer_gain_rank: usize,
    pub controllable: bool,
    pub observable: bool,
    pub observer_gain_full_column_rank: bool,
    pub passed: bool,
    pub tolerance_used: f64,
}

/// Check that `(A, B)` is controllable, `(A, C)` is observable, and `H` has
/// full column rank.
pub fn validate_dynamics(d: &AgentDynamics, rtol: Option<f64>) -> Result<DynamicsValidation> {
    let ctrb = controllability_matrix(&d.a, &d.b);
    let obsv = controllability_matrix(&d.a.transpose(), &d.c.transpose());
    let ctrb_rank = numerics::rank_with_tolerance(&ctrb, rtol)?;
    let obsv_rank = numerics::rank_with_tolerance(&obsv, rtol)?.rank;
    let h_rank = numerics::rank_with_tolerance(&d.h, rtol)?.rank;
    let controllable = ctrb_rank.rank == d.n;
    let observable = obsv_rank == d.n;
    let h_full = h_rank == d.n.min(d.p);
    Ok(DynamicsValidation {
        controllability_rank: ctrb_rank.rank,
        observability_rank: obsv_rank,
        observer_gain_rank: h_rank,
        controllable,
        observable,
        observer_gain_full_column_rank: h_full,
        passed: controllable && observable && h_full,
        tolerance_used: ctrb_rank.tolerance_used,
    })
}

/// `[B, AB, ..., A^{d-1}B]` for a square `a` of dimension d.
pub fn controllability_matrix(a: &RMat, b: &RMat) -> RMat {
    let d = a.nrows();
    assert!(a.is_square() && b.nrows() == d, "controllability matrix dimension mismatch");
    let mut cols = Vec::with_capacity(d);
    let mut cur = b.clone();
    for _ in 0..d {
        cols.push(cur.clone());
        cur = a * cur;
    }
    let refs: Vec<&RMat> = cols.iter().collect();
    numerics::hstack(&refs)
}

/// Per-agent stacked blocks over the state `[plant; observer]`.
///
/// `plant + input * gain` is the per-agent closed loop; `injection * output`
/// is the neighbor-information injection; `attack_injection` is where the
/// aggregated attack signal enters an attacked agent's observer.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDynamics {
    /// diag(A, A), 2n x 2n.
    pub plant: RMat,
    /// [[0, B], [0, B]], 2n x 2m.
    pub input: RMat,
    /// [[0, 0], [-H, H]], 2n x 2p.
    pub injection: RMat,
    /// [[0], [H]], 2n x p.
    pub attack_injection: RMat,
    /// diag(K, K), 2m x 2n.
    pub gain: RMat,
    /// diag(C, C), 2p x 2n.
    pub output: RMat,
}

impl AugmentedDynamics {
    /// Per-agent closed loop `plant + input * gain`.
    pub fn closed_loop(&self) -> RMat {
        &self.plant + &self.input * &self.gain
    }

    /// Neighbor-injection product `injection * output`.
    pub fn injection_output(&self) -> RMat {
        &self.injection * &self.output
    }

    /// Closed-loop block of an attacked agent with in-degree `d`:
    /// `closed_loop() + d * injection_output()`.
    pub fn agent_block(&self, degree: f64) -> RMat {
        self.closed_loop() + self.injection_output() * degree
    }
}

/// Assemble the per-agent stacked blocks from the agent model.
pub fn build_check_matrices(d: &AgentDynamics) -> AugmentedDynamics {
    let (n, m, p) = (d.n, d.m, d.p);
    let zero_nm = RMat::zeros(n, m);
    let zero_np = RMat::zeros(n, p);
    let plant = block_diag(&[&d.a, &d.a]);
    let input = block_matrix(&[&[&zero_nm, &d.b], &[&zero_nm, &d.b]]);
    let neg_h = -&d.h;
    let injection = block_matrix(&[&[&zero_np, &zero_np], &[&neg_h, &d.h]]);
    let attack_injection = block_matrix(&[&[&zero_np], &[&d.h]]);
    let gain = block_diag(&[&d.k, &d.k]);
    let output = block_diag(&[&d.c, &d.c]);
    AugmentedDynamics { plant, input, injection, attack_injection, gain, output }
}

/// Stacked network matrices: attacked subsystem, follower subsystem, and the
/// block-lower-triangular closed loop over `[attacked; followers]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrices {
    /// Attacked-subsystem state matrix, block diagonal per attacked agent.
    pub attacked_state: RMat,
    /// Attacked-subsystem input matrix `I (x) attack_injection`.
    pub attacked_input: RMat,
    /// Follower-subsystem state matrix.
    pub follower_state: RMat,
    /// Coupling from attacked states into follower dynamics.
    pub follower_coupling: RMat,
    /// Closed-loop state matrix over `[attacked; followers]`.
    pub closed_state: RMat,
    /// Closed-loop input matrix (attack enters the attacked block only).
    pub closed_input: RMat,
    pub n_attacked: usize,
    pub n_followers: usize,
    /// Stacked per-agent state dimension (2n).
    pub agent_state_dim: usize,
    /// Per-agent attack input dimension (p).
    pub agent_input_dim: usize,
    /// True when the attacked set is empty or covers every agent.
    pub degenerate: bool,
}

/// Assemble the stacked matrices for a given partition.
pub fn build_network_matrices(d: &AgentDynamics, part: &LaplacianPartition) -> Result<NetworkMatrices> {
    let aug = build_check_matrices(d);
    let nf = part.n_followers();
    let na = part.n_attacked();
    let sd = 2 * d.n;
    let closed = aug.closed_loop();
    let inj = aug.injection_output();

    let attacked_state = kron(&RMat::identity(na, na), &closed) + kron(&part.attacked_degrees, &inj);
    let attacked_input = kron(&RMat::identity(na, na), &aug.attack_injection);
    let follower_state = kron(&RMat::identity(nf, nf), &closed) + kron(&part.grounded, &inj);
    let follower_coupling = kron(&part.coupling, &inj);

    let zero_upper = RMat::zeros(sd * na, sd * nf);
    let closed_state = block_matrix(&[
        &[&attacked_state, &zero_upper],
        &[&follower_coupling, &follower_state],
    ]);
    let zero_lower = RMat::zeros(sd * nf, d.p * na);
    let closed_input = block_matrix(&[&[&attacked_input], &[&zero_lower]]);

    Ok(NetworkMatrices {
        attacked_state,
        attacked_input,
        follower_state,
        follower_coupling,
        closed_state,
        closed_input,
        n_attacked: na,
        n_followers: nf,
        agent_state_dim: sd,
        agent_input_dim: d.p,
        degenerate: na == 0 || nf == 0,
    })
}

/// Aggated attack input of one attacked agent whose incoming links all carry
/// the same pair of injected signals: `d * (a_y - C a_xhat)` where `d` is the
/// agent's in-degree. Analysis and simulation share this definition.
pub fn aggregate_attack_input(c: &RMat, in_degree: usize, a_y: &RVec, a_xhat: &RVec) -> RVec {
    (a_y - c * a_xhat) * in_degree as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs;
    use crate::topology::{partition, DirectedGraph};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn six_agent_dynamics() -> AgentDynamics {
        AgentDynamics::new(
            2,
            1,
            2,
            RMat::from_row_slice(2, 2, &[-2.0, 2.0, -1.0, 1.0]),
            RMat::from_row_slice(2, 1, &[1.0, 0.0]),
            RMat::identity(2, 2),
            RMat::from_row_slice(2, 2, &[0.0, 0.3, -0.3, 0.0]),
            RMat::from_row_slice(1, 2, &[-1.0, 2.0]),
        )
        .unwrap()
    }

    fn six_agent_graph() -> DirectedGraph {
        DirectedGraph::new(6, &[(6, 1), (5, 2), (6, 2), (2, 3), (2, 4), (3, 4), (2, 5), (5, 6)])
            .unwrap()
    }

    #[test]
    fn reference_dynamics_validate() {
        let d = six_agent_dynamics();
        let v = validate_dynamics(&d, None).unwrap();
        assert!(v.passed);
        assert_eq!(v.controllability_rank, 2);
        assert_eq!(v.observability_rank, 2);
        assert_eq!(v.observer_gain_rank, 2);
        // hand-checkable Kalman matrix [B, AB]
        let ctrb = controllability_matrix(&d.a, &d.b);
        assert_eq!(ctrb, RMat::from_row_slice(2, 2, &[1.0, -2.0, 0.0, -1.0]));
    }

    #[test]
    fn zero_input_fails_controllability() {
        let mut d = six_agent_dynamics();
        d.b = RMat::zeros(2, 1);
        let v = validate_dynamics(&d, None).unwrap();
        assert!(!v.passed);
        assert!(!v.controllable);
        assert_eq!(v.controllability_rank, 0);
    }

    #[test]
    fn zero_output_fails_observability() {
        let mut d = six_agent_dynamics();
        d.c = RMat::zeros(2, 2);
        let v = validate_dynamics(&d, None).unwrap();
        assert!(!v.passed);
        assert!(!v.observable);
    }

    #[test]
    fn dimension_mismatch_names_field() {
        let err = AgentDynamics::new(
            2,
            1,
            2,
            RMat::identity(2, 2),
            RMat::zeros(3, 1),
            RMat::identity(2, 2),
            RMat::zeros(2, 2),
            RMat::zeros(1, 2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("matrix B"), "{err}");
    }

    #[test]
    fn attack_injection_block_stacks_h() {
        let aug = build_check_matrices(&six_agent_dynamics());
        let expected = RMat::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.3, -0.3, 0.0]);
        assert_eq!(aug.attack_injection, expected);
        assert_eq!(aug.plant.shape(), (4, 4));
        assert_eq!(aug.input.shape(), (4, 2));
        assert_eq!(aug.injection.shape(), (4, 4));
        assert_eq!(aug.gain.shape(), (2, 4));
        assert_eq!(aug.output.shape(), (4, 4));
    }

    #[test]
    fn output_block_acts_per_component() {
        let d = six_agent_dynamics();
        let aug = build_check_matrices(&d);
        let x = RVec::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = &aug.output * &x;
        let upper = &d.c * RVec::from_vec(vec![1.0, -2.0]);
        let lower = &d.c * RVec::from_vec(vec![0.5, 3.0]);
        assert_eq!(y.rows(0, 2), upper.rows(0, 2));
        assert_eq!(y.rows(2, 2), lower.rows(0, 2));
    }

    #[test]
    fn injection_output_matches_blockwise_product() {
        let d = six_agent_dynamics();
        let aug = build_check_matrices(&d);
        let hc = &d.h * &d.c;
        let got = aug.injection_output();
        assert_eq!(got.view((0, 0), (2, 4)).amax(), 0.0);
        assert_eq!(got.view((2, 0), (2, 2)), (-&hc).view((0, 0), (2, 2)));
        assert_eq!(got.view((2, 2), (2, 2)), hc.view((0, 0), (2, 2)));
    }

    #[test]
    fn six_agent_network_dimensions() {
        let d = six_agent_dynamics();
        let part = partition(&six_agent_graph(), &[4, 5, 6]).unwrap();
        let nm = build_network_matrices(&d, &part).unwrap();
        assert_eq!(nm.closed_state.shape(), (24, 24));
        assert_eq!(nm.closed_input.shape(), (24, 6));
        assert!(!nm.degenerate);
    }

    #[test]
    fn attacked_state_is_block_diagonal_by_degree() {
        let d = six_agent_dynamics();
        let part = partition(&six_agent_graph(), &[4, 5, 6]).unwrap();
        let nm = build_network_matrices(&d, &part).unwrap();
        let aug = build_check_matrices(&d);
        let expected = block_diag(&[
            &aug.agent_block(2.0),
            &aug.agent_block(1.0),
            &aug.agent_block(1.0),
        ]);
        assert_eq!(nm.attacked_state, expected);
        // off-diagonal blocks vanish
        assert_eq!(nm.attacked_state.view((0, 4), (4, 8)).amax(), 0.0);
    }

    #[test]
    fn all_attacked_collapses_to_attacked_subsystem() {
        let d = six_agent_dynamics();
        let part = partition(&six_agent_graph(), &[1, 2, 3, 4, 5, 6]).unwrap();
        let nm = build_network_matrices(&d, &part).unwrap();
        assert!(nm.degenerate);
        assert_eq!(nm.follower_state.shape(), (0, 0));
        assert_eq!(nm.closed_state, nm.attacked_state);
    }

    #[test]
    fn closed_state_is_block_lower_triangular() {
        let d = six_agent_dynamics();
        let part = partition(&six_agent_graph(), &[4, 5, 6]).unwrap();
        let nm = build_network_matrices(&d, &part).unwrap();
        let na_dim = nm.agent_state_dim * nm.n_attacked;
        let nf_dim = nm.agent_state_dim * nm.n_followers;
        assert_eq!(nm.closed_state.view((0, na_dim), (na_dim, nf_dim)).amax(), 0.0);
    }

    #[test]
    fn stacked_dynamics_match_per_agent_closed_loop() {
        // Evaluate the per-agent equations blockwise (attack active on all
        // attacked agents) and compare with the Kronecker assembly.
        let d = six_agent_dynamics();
        let g = six_agent_graph();
        let attacked = vec![4usize, 5, 6];
        let part = partition(&g, &attacked).unwrap();
        let nm = build_network_matrices(&d, &part).unwrap();
        let aug = build_check_matrices(&d);
        let mut rng = StdRng::seed_from_u64(23);
        let sd = nm.agent_state_dim;

        // random stacked states per agent id
        let states: Vec<RVec> =
            (0..6).map(|_| RVec::from_fn(sd, |_, _| rng.random_range(-1.0..1.0))).collect();
        let attacks: Vec<RVec> =
            (0..3).map(|_| RVec::from_fn(d.p, |_, _| rng.random_range(-1.0..1.0))).collect();

        // per-agent evaluation
        let closed = aug.closed_loop();
        let inj = aug.injection_output();
        let mut derivs: Vec<RVec> = Vec::new();
        for id in 1..=6usize {
            let xi = &states[id - 1];
            let mut dx = &closed * xi;
            let is_attacked = attacked.contains(&id);
            for j in g.in_neighbors(id) {
                if is_attacked {
                    dx += &inj * xi; // neighbor term replaced by the attack path
                } else {
                    dx += &inj * (xi - &states[j - 1]);
                }
            }
            if is_attacked {
                let idx = attacked.iter().position(|&a| a == id).unwrap();
                dx += &aug.attack_injection * &attacks[idx];
            }
            derivs.push(dx);
        }

        // stacked evaluation over [attacked; followers]
        let mut x_stacked = RVec::zeros(sd * 6);
        let mut a_stacked = RVec::zeros(d.p * 3);
        for (k, &id) in part.attacked_ids.iter().enumerate() {
            x_stacked.rows_mut(k * sd, sd).copy_from(&states[id - 1]);
            a_stacked.rows_mut(k * d.p, d.p).copy_from(&attacks[k]);
        }
        for (k, &id) in part.follower_ids.iter().enumerate() {
            x_stacked.rows_mut((3 + k) * sd, sd).copy_from(&states[id - 1]);
        }
        let dx_stacked = &nm.closed_state * &x_stacked + &nm.closed_input * &a_stacked;

        for (k, &id) in part.attacked_ids.iter().enumerate() {
            let diff = dx_stacked.rows(k * sd, sd) - &derivs[id - 1];
            assert!(diff.amax() <= 1e-10, "attacked agent {id} mismatch");
        }
        for (k, &id) in part.follower_ids.iter().enumerate() {
            let diff = dx_stacked.rows((3 + k) * sd, sd) - &derivs[id - 1];
            assert!(diff.amax() <= 1e-10, "follower {id} mismatch");
        }
    }

    #[test]
    fn aggregate_input_scales_with_degree() {
        let d = six_agent_dynamics();
        let a_y = RVec::from_vec(vec![1.0, -1.0]);
        let a_xhat = RVec::from_vec(vec![0.5, 0.25]);
        let agg = aggregate_attack_input(&d.c, 3, &a_y, &a_xhat);
        let expected = (&a_y - &d.c * &a_xhat) * 3.0;
        assert!(max_abs(&RMat::from_column_slice(2, 1, (agg - expected).as_slice())) == 0.0);
    }
}
