//! Zero-dynamics attack analysis.
//!
//! Invariant zeros of the attacked and follower subsystems are the complex
//! frequencies where the Rosenbrock pencil `[[sI - A, -B], [C, 0]]` loses
//! rank relative to its normal rank. At such a frequency a nonzero
//! state/input direction produces identically zero measured output while the
//! internal state evolves — the raw material of a stealthy attack.
//!
//! Zeros are found by compressing the (generally non-square, possibly
//! normally rank-deficient) pencil to its normal rank with two independent
//! random unitary compressions, solving each squared problem by
//! shift-and-invert, keeping only candidates the two draws agree on, and
//! finally confirming every candidate with a direct rank test on the
//! original pencil. False positives cannot survive the confirmation step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AugmentedDynamics, NetworkMatrices};
use crate::numerics::{self, block_matrix, kernel_basis, kron, to_complex, C64, CMat, CVec, RMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilKind {
    Attacked,
    Followers,
}

/// Rosenbrock system pencil `P(s) = [[sI - state, -input], [output, 0]]`.
#[derive(Debug, Clone)]
pub struct RosenbrockPencil {
    pub kind: PencilKind,
    pub state: RMat,
    pub input: RMat,
    pub output: RMat,
    /// Rank of `P(s)` at a generic point, maximized over 3 random draws.
    pub normal_rank: usize,
}

impl RosenbrockPencil {
    /// Assemble a pencil from raw blocks and estimate its normal rank.
    pub fn new(
        kind: PencilKind,
        state: RMat,
        input: RMat,
        output: RMat,
        rng: &mut ChaCha8Rng,
        rtol: Option<f64>,
    ) -> Result<Self> {
        if !state.is_square() || input.nrows() != state.nrows() || output.ncols() != state.ncols() {
            return Err(Error::Validation("pencil blocks have mismatched dimensions".into()));
        }
        let mut pencil =
            Self { kind, state, input, output, normal_rank: 0 };
        let scale = 1.0 + numerics::max_abs(&pencil.state);
        let mut normal_rank = 0;
        for _ in 0..3 {
            let s = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
            let r = numerics::rank_allow_empty(&pencil.eval(s), rtol)?;
            normal_rank = normal_rank.max(r.rank);
        }
        pencil.normal_rank = normal_rank;
        Ok(pencil)
    }

    pub fn state_dim(&self) -> usize {
        self.state.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn rows(&self) -> usize {
        self.state.nrows() + self.output.nrows()
    }

    pub fn cols(&self) -> usize {
        self.state.ncols() + self.input.ncols()
    }

    /// Evaluate `P(s)`.
    pub fn eval(&self, s: C64) -> CMat {
        let sd = self.state_dim();
        let eye = CMat::identity(sd, sd);
        let neg_input = to_complex(&(-&self.input));
        let zero = CMat::zeros(self.output.nrows(), self.input.ncols());
        block_matrix(&[
            &[&(&eye * s - to_complex(&self.state)), &neg_input],
            &[&to_complex(&self.output), &zero],
        ])
    }

    /// Constant matrices E, F with `P(s) = s E - F`.
    fn linearization(&self) -> (CMat, CMat) {
        let sd = self.state_dim();
        let (rows, cols) = (self.rows(), self.cols());
        let mut e = CMat::zeros(rows, cols);
        for i in 0..sd {
            e[(i, i)] = C64::new(1.0, 0.0);
        }
        let zero = CMat::zeros(self.output.nrows(), self.input.ncols());
        let neg_output = to_complex(&(-&self.output));
        let f = block_matrix(&[
            &[&to_complex(&self.state), &to_complex(&self.input)],
            &[&neg_output, &zero],
        ]);
        (e, f)
    }
}

/// Attacked-subsystem pencil: the attack signal is the input, every agent's
/// stacked output is observed.
pub fn attacked_pencil(
    nm: &NetworkMatrices,
    aug: &AugmentedDynamics,
    rng: &mut ChaCha8Rng,
    rtol: Option<f64>,
) -> Result<RosenbrockPencil> {
    let eye = RMat::identity(nm.n_attacked, nm.n_attacked);
    RosenbrockPencil::new(
        PencilKind::Attacked,
        nm.attacked_state.clone(),
        nm.attacked_input.clone(),
        kron(&eye, &aug.output),
        rng,
        rtol,
    )
}

/// Follower-subsystem pencil: the attacked agents' stacked state is the
/// input, follower outputs are observed.
pub fn follower_pencil(
    nm: &NetworkMatrices,
    aug: &AugmentedDynamics,
    rng: &mut ChaCha8Rng,
    rtol: Option<f64>,
) -> Result<RosenbrockPencil> {
    let eye = RMat::identity(nm.n_followers, nm.n_followers);
    RosenbrockPencil::new(
        PencilKind::Followers,
        nm.follower_state.clone(),
        nm.follower_coupling.clone(),
        kron(&eye, &aug.output),
        rng,
        rtol,
    )
}

/// A confirmed invariant zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantZero {
    pub value: C64,
    /// Rank of the pencil at the zero; strictly below the normal rank.
    pub rank_at_zero: usize,
}

/// Result of the zero search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroSearch {
    pub normal_rank: usize,
    pub zeros: Vec<InvariantZero>,
    pub note: Option<String>,
}

const PAIRING_RTOL: f64 = 1e-6;

fn pairing_tol(s: C64) -> f64 {
    PAIRING_RTOL * (1.0 + s.norm())
}

/// Rank and kernel of `P(s)` with the singular-value cutoff floored at the
/// candidate-location tolerance: a zero is only known to `pairing_tol`
/// accuracy, and the identity block of the linearization moves singular
/// values at unit rate per unit of `s`.
fn rank_and_kernel_at(
    pencil: &RosenbrockPencil,
    s: C64,
    rtol: Option<f64>,
) -> Result<(usize, CMat)> {
    let m = pencil.eval(s);
    let (rows, cols) = m.shape();
    let work = if rows < cols {
        let mut padded = CMat::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(&m);
        padded
    } else {
        m
    };
    let svd = work
        .try_svd(false, true, f64::EPSILON, 50_000)
        .ok_or_else(|| Error::Numerical("pencil singular values did not converge".into()))?;
    let sv = svd.singular_values;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = numerics::rank_cutoff(rows, cols, sigma_max, rtol).max(pairing_tol(s));
    let rank = sv.iter().filter(|&&x| x > cutoff).count();
    let kept: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cutoff).collect();
    let mut kernel = CMat::zeros(cols, kept.len());
    for (out_col, &i) in kept.iter().enumerate() {
        kernel.set_column(out_col, &v_t.row(i).adjoint());
    }
    Ok((rank, kernel))
}

/// Random matrix with orthonormal columns.
fn orthonormal_cols(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> CMat {
    let g = CMat::from_fn(dim, k, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    g.qr().q()
}

/// Candidate zeros of one randomly compressed, shift-inverted copy of the
/// pencil.
fn candidates_one_draw(
    pencil: &RosenbrockPencil,
    e: &CMat,
    f: &CMat,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<C64>> {
    let k = pencil.normal_rank;
    if k == 0 {
        return Ok(vec![]);
    }
    let (rows, cols) = (pencil.rows(), pencil.cols());
    let (e_sq, f_sq) = {
        let left = if rows != k { Some(orthonormal_cols(rng, rows, k).adjoint()) } else { None };
        let right = if cols != k { Some(orthonormal_cols(rng, cols, k)) } else { None };
        let apply = |m: &CMat| -> CMat {
            let lm = match &left {
                Some(u) => u * m,
                None => m.clone(),
            };
            match &right {
                Some(v) => &lm * v,
                None => lm,
            }
        };
        (apply(e), apply(f))
    };

    // shift-and-invert: eigenvalues mu of (sigma E - F)^{-1} E map to zeros
    // s = sigma - 1/mu; mu near zero corresponds to zeros at infinity
    let scale = 1.0 + f_sq.norm() / (1.0 + e_sq.norm());
    for _attempt in 0..8 {
        let sigma = C64::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)) * scale;
        if sigma.norm() < 0.1 * scale {
            continue;
        }
        let shifted = &e_sq * sigma - &f_sq;
        let Some(w) = shifted.lu().solve(&e_sq) else { continue };
        if w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            continue;
        }
        let mus = numerics::eigenvalues_c(&w)?;
        let mu_scale = mus.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let mut out = Vec::new();
        for mu in mus {
            if mu.norm() > 1e-9 * (1.0 + mu_scale) {
                let s = sigma - C64::new(1.0, 0.0) / mu;
                if s.norm() <= 1e9 {
                    out.push(s);
                }
            }
        }
        return Ok(out);
    }
    Err(Error::Numerical("could not find an invertible shift for the squared pencil".into()))
}

/// Finite invariant zeros: candidates must appear in two independent random
/// compressions and are then confirmed by a direct rank test on the original
/// pencil. Zeros at infinity and uncontrollable/unobservable-mode zeros are
/// not distinguished; every confirmed rank-dropping `s` is reported with its
/// rank.
pub fn invariant_zeros(
    pencil: &RosenbrockPencil,
    rng: &mut ChaCha8Rng,
    rtol: Option<f64>,
) -> Result<ZeroSearch> {
    let note = if numerics::max_abs(&pencil.input) == 0.0 {
        Some("no input influence: the input block is zero, every reported zero is an \
              output-decoupled mode"
            .to_string())
    } else {
        None
    };
    if pencil.normal_rank == 0 {
        return Ok(ZeroSearch { normal_rank: 0, zeros: vec![], note });
    }
    let (e, f) = pencil.linearization();
    let first = candidates_one_draw(pencil, &e, &f, rng)?;
    let second = candidates_one_draw(pencil, &e, &f, rng)?;

    // keep candidates both draws agree on
    let mut paired: Vec<C64> = Vec::new();
    for &s1 in &first {
        let best = second
            .iter()
            .map(|&s2| (s1 - s2).norm())
            .fold(f64::INFINITY, f64::min);
        if best <= pairing_tol(s1) {
            paired.push(s1);
        }
    }
    // merge duplicates (repeated zeros collapse to one entry)
    paired.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut merged: Vec<C64> = Vec::new();
    for s in paired {
        match merged.last() {
            Some(&prev) if (s - prev).norm() <= pairing_tol(s) => {}
            _ => merged.push(s),
        }
    }

    let mut zeros = Vec::new();
    for s in merged {
        let (rank, _) = rank_and_kernel_at(pencil, s, rtol)?;
        if rank < pencil.normal_rank {
            zeros.push(InvariantZero { value: s, rank_at_zero: rank });
        }
    }
    Ok(ZeroSearch { normal_rank: pencil.normal_rank, zeros, note })
}

/// State/input direction associated with a confirmed zero.
#[derive(Debug, Clone)]
pub struct ZeroDirection {
    pub zero: C64,
    pub state_part: CVec,
    pub input_part: CVec,
    /// `||P(zero) v||` for the unit-norm stacked direction `v`.
    pub residual: f64,
}

/// Kernel directions of the pencil at a confirmed zero, split into state and
/// input parts.
pub fn zero_directions(
    pencil: &RosenbrockPencil,
    zero: C64,
    rtol: Option<f64>,
) -> Result<Vec<ZeroDirection>> {
    let at_zero = pencil.eval(zero);
    let (_, basis) = rank_and_kernel_at(pencil, zero, rtol)?;
    if basis.ncols() == 0 {
        return Err(Error::Numerical(format!(
            "no kernel direction at the reported zero {zero}; rank tolerance mismatch"
        )));
    }
    let sd = pencil.state_dim();
    let mut out = Vec::with_capacity(basis.ncols());
    for col in 0..basis.ncols() {
        let v: CVec = basis.column(col).into();
        let residual = (&at_zero * &v).norm();
        let state_part = CVec::from_fn(sd, |i, _| v[i]);
        let input_part = CVec::from_fn(pencil.input_dim(), |i, _| v[sd + i]);
        out.push(ZeroDirection { zero, state_part, input_part, residual });
    }
    Ok(out)
}

/// Whether a zero direction can actually be excited through the pencil's
/// input path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcitationCheck {
    pub feasible: bool,
    pub reason: String,
}

const EXCITE_RTOL: f64 = 1e-8;

/// A direction is excitable iff the input matrix maps its input part to a
/// nonzero forcing term.
pub fn excitation_feasible(direction: &ZeroDirection, pencil: &RosenbrockPencil) -> ExcitationCheck {
    let input = to_complex(&pencil.input);
    let forcing = &input * &direction.input_part;
    let scale = (1.0 + pencil.input.norm()) * direction.input_part.norm().max(1e-300);
    if forcing.norm() > EXCITE_RTOL * scale {
        ExcitationCheck { feasible: true, reason: "attack input excites the subsystem".into() }
    } else {
        ExcitationCheck {
            feasible: false,
            reason: "attack has no influence: the input term vanishes along this direction".into(),
        }
    }
}

/// Outcome of the simultaneous-excitation audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem3Audit {
    /// True when the stacked output map has a trivial kernel (p = n with
    /// invertible C): stealthy directions cannot exist and the audit holds
    /// vacuously.
    pub vacuous: bool,
    pub attacked_zeros: usize,
    pub follower_zeros: usize,
    /// Attacked-subsystem zero directions whose state blocks are invisible
    /// to the output map.
    pub stealthy_attacked_directions: usize,
    /// Follower-subsystem zero directions with a live excitation path.
    pub feasible_follower_directions: usize,
    /// Stealthy attacked directions that nevertheless excite the followers
    /// (must stay zero).
    pub annihilation_violations: usize,
    /// Excitable stealthy attacked directions paired with follower
    /// excitation, or feasible follower directions whose input is invisible
    /// to the attacked output map (must stay zero).
    pub simultaneous_excitation_witnesses: usize,
    pub findings: Vec<String>,
    pub passed: bool,
    pub note: Option<String>,
}

const STEALTH_RTOL: f64 = 1e-8;
const VIOLATION_RTOL: f64 = 1e-6;

/// Search for counterexamples to the no-simultaneous-excitation property:
/// a stealthy zero direction of the attacked subsystem must be annihilated
/// by the follower coupling, and an excitable follower zero direction must
/// be visible to the attacked agents' output map. Any violation is reported
/// as a finding, not an error.
pub fn theorem3_audit(
    nm: &NetworkMatrices,
    aug: &AugmentedDynamics,
    seed: u64,
    rtol: Option<f64>,
) -> Result<Theorem3Audit> {
    let mut audit = Theorem3Audit {
        vacuous: false,
        attacked_zeros: 0,
        follower_zeros: 0,
        stealthy_attacked_directions: 0,
        feasible_follower_directions: 0,
        annihilation_violations: 0,
        simultaneous_excitation_witnesses: 0,
        findings: vec![],
        passed: true,
        note: None,
    };
    if nm.n_attacked == 0 || nm.n_followers == 0 {
        audit.vacuous = true;
        audit.note = Some("degenerate partition: the audit needs both agent groups".into());
        return Ok(audit);
    }

    let output_kernel = kernel_basis(&aug.output, rtol)?;
    if output_kernel.ncols() == 0 {
        audit.vacuous = true;
        audit.note =
            Some("output map has trivial kernel: no stealthy direction can exist".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attacked = attacked_pencil(nm, aug, &mut rng, rtol)?;
    let followers = follower_pencil(nm, aug, &mut rng, rtol)?;

    let attacked_out = to_complex(&attacked.output);
    let attacked_out_scale = 1.0 + attacked.output.norm();
    let coupling = to_complex(&nm.follower_coupling);
    let coupling_scale = 1.0 + nm.follower_coupling.norm();

    let attacked_zeros = invariant_zeros(&attacked, &mut rng, rtol)?;
    audit.attacked_zeros = attacked_zeros.zeros.len();
    for zero in &attacked_zeros.zeros {
        for dir in zero_directions(&attacked, zero.value, rtol)? {
            let visible = (&attacked_out * &dir.state_part).norm();
            let state_norm = dir.state_part.norm().max(1e-300);
            if visible <= STEALTH_RTOL * attacked_out_scale * state_norm {
                audit.stealthy_attacked_directions += 1;
                let leak = (&coupling * &dir.state_part).norm();
                if leak > VIOLATION_RTOL * coupling_scale * state_norm {
                    audit.annihilation_violations += 1;
                    audit.findings.push(format!(
                        "stealthy attacked direction at zero {} excites the followers \
                         (coupling norm {leak:.3e})",
                        zero.value
                    ));
                    if excitation_feasible(&dir, &attacked).feasible {
                        audit.simultaneous_excitation_witnesses += 1;
                    }
                }
            }
        }
    }

    let follower_zeros = invariant_zeros(&followers, &mut rng, rtol)?;
    audit.follower_zeros = follower_zeros.zeros.len();
    for zero in &follower_zeros.zeros {
        for dir in zero_directions(&followers, zero.value, rtol)? {
            if excitation_feasible(&dir, &followers).feasible {
                audit.feasible_follower_directions += 1;
                // the attacked state driving the followers must be visible
                // to the attacked output map
                let visible = (&attacked_out * &dir.input_part).norm();
                let input_norm = dir.input_part.norm().max(1e-300);
                if visible <= STEALTH_RTOL * attacked_out_scale * input_norm {
                    audit.simultaneous_excitation_witnesses += 1;
                    audit.findings.push(format!(
                        "excitable follower direction at zero {} is invisible to the \
                         attacked agents' outputs",
                        zero.value
                    ));
                }
            }
        }
    }

    audit.passed =
        audit.annihilation_violations == 0 && audit.simultaneous_excitation_witnesses == 0;
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_check_matrices, build_network_matrices, AgentDynamics};
    use crate::topology::{partition, DirectedGraph};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(2024)
    }

    /// SISO plant with transfer (s - 1) / ((s + 1)(s + 2)): one invariant
    /// zero at s = 1.
    fn siso_pencil() -> RosenbrockPencil {
        RosenbrockPencil::new(
            PencilKind::Attacked,
            RMat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            RMat::from_row_slice(2, 1, &[0.0, 1.0]),
            RMat::from_row_slice(1, 2, &[-1.0, 1.0]),
            &mut rng(),
            None,
        )
        .unwrap()
    }

    fn six_agent_setup() -> (NetworkMatrices, AugmentedDynamics, crate::topology::LaplacianPartition) {
        let d = AgentDynamics::new(
            2,
            1,
            2,
            RMat::from_row_slice(2, 2, &[-2.0, 2.0, -1.0, 1.0]),
            RMat::from_row_slice(2, 1, &[1.0, 0.0]),
            RMat::identity(2, 2),
            RMat::from_row_slice(2, 2, &[0.0, 0.3, -0.3, 0.0]),
            RMat::from_row_slice(1, 2, &[-1.0, 2.0]),
        )
        .unwrap();
        let g =
            DirectedGraph::new(6, &[(6, 1), (5, 2), (6, 2), (2, 3), (2, 4), (3, 4), (2, 5), (5, 6)])
                .unwrap();
        let part = partition(&g, &[4, 5, 6]).unwrap();
        let aug = build_check_matrices(&d);
        let nm = build_network_matrices(&d, &part).unwrap();
        (nm, aug, part)
    }

    #[test]
    fn siso_zero_found_and_confirmed() {
        let pencil = siso_pencil();
        assert_eq!(pencil.normal_rank, 3);
        let search = invariant_zeros(&pencil, &mut rng(), None).unwrap();
        assert_eq!(search.zeros.len(), 1, "{:?}", search.zeros);
        let z = &search.zeros[0];
        assert!((z.value - C64::new(1.0, 0.0)).norm() <= 1e-6, "zero at {}", z.value);
        assert_eq!(z.rank_at_zero, 2);
    }

    #[test]
    fn siso_zero_matches_determinant_scan_oracle() {
        // independent oracle: for this realization det P(s) is exactly the
        // transfer-function numerator s - 1, so a determinant scan over a
        // 45 x 45 grid on [-10, 10] x [-10, 10] must match that line shape,
        // which puts the only finite zero anywhere in C at s = 1
        let pencil = siso_pencil();
        for gi in 0..45 {
            for gj in 0..45 {
                let s = C64::new(-10.0 + 20.0 * gi as f64 / 44.0, -10.0 + 20.0 * gj as f64 / 44.0);
                let det = pencil.eval(s).determinant();
                let expected = s - C64::new(1.0, 0.0);
                assert!(
                    (det - expected).norm() <= 1e-8 * (1.0 + s.norm().powi(3)),
                    "det {det} != {expected} at s = {s}"
                );
            }
        }
    }

    #[test]
    fn duplicated_siso_blocks_give_repeated_zero() {
        let a = RMat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = RMat::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = RMat::from_row_slice(1, 2, &[-1.0, 1.0]);
        let state = numerics::block_diag(&[&a, &a]);
        let input = numerics::block_diag(&[&b, &b]);
        let output = numerics::block_diag(&[&c, &c]);
        let pencil =
            RosenbrockPencil::new(PencilKind::Attacked, state, input, output, &mut rng(), None)
                .unwrap();
        let search = invariant_zeros(&pencil, &mut rng(), None).unwrap();
        assert_eq!(search.zeros.len(), 1);
        let z = &search.zeros[0];
        assert!((z.value - C64::new(1.0, 0.0)).norm() <= 1e-6);
        // the zero has a two-dimensional direction space
        assert_eq!(z.rank_at_zero, pencil.normal_rank - 2);
        let dirs = zero_directions(&pencil, z.value, None).unwrap();
        assert_eq!(dirs.len(), 2);
    }

    #[test]
    fn zero_direction_matches_hand_kernel() {
        // at s = 1 the kernel is spanned by (1, 1, 6) up to scale
        let pencil = siso_pencil();
        let dirs = zero_directions(&pencil, C64::new(1.0, 0.0), None).unwrap();
        assert_eq!(dirs.len(), 1);
        let d = &dirs[0];
        let x0 = d.state_part[0];
        assert!((d.state_part[1] - x0).norm() <= 1e-8);
        assert!((d.input_part[0] - x0 * C64::new(6.0, 0.0)).norm() <= 1e-7);
        let scale = pencil.eval(d.zero).norm();
        assert!(d.residual <= 1e-6 * scale);
        assert!(excitation_feasible(d, &pencil).feasible);
    }

    #[test]
    fn zero_input_pencil_reports_no_influence() {
        // with no input path the rank drops exactly at the output-decoupled
        // plant mode s = -2
        let pencil = RosenbrockPencil::new(
            PencilKind::Attacked,
            RMat::from_partial_diagonal(2, 2, &[-1.0, -2.0]),
            RMat::zeros(2, 1),
            RMat::from_row_slice(1, 2, &[1.0, 0.0]),
            &mut rng(),
            None,
        )
        .unwrap();
        assert_eq!(pencil.normal_rank, 2);
        let search = invariant_zeros(&pencil, &mut rng(), None).unwrap();
        assert!(search.note.as_deref().unwrap_or("").contains("no input influence"));
        assert_eq!(search.zeros.len(), 1);
        assert!((search.zeros[0].value - C64::new(-2.0, 0.0)).norm() <= 1e-6);
        for dir in zero_directions(&pencil, search.zeros[0].value, None).unwrap() {
            assert!(!excitation_feasible(&dir, &pencil).feasible);
        }
    }

    #[test]
    fn six_agent_pencils_have_no_finite_zeros() {
        // the reference model has an invertible per-agent output map, so
        // both pencils keep full column-structure rank at every s
        let (nm, aug, _part) = six_agent_setup();
        let mut r = rng();
        let attacked = attacked_pencil(&nm, &aug, &mut r, None).unwrap();
        assert_eq!(attacked.normal_rank, 18);
        let search = invariant_zeros(&attacked, &mut r, None).unwrap();
        assert!(search.zeros.is_empty(), "{:?}", search.zeros);

        let followers = follower_pencil(&nm, &aug, &mut r, None).unwrap();
        assert_eq!(followers.normal_rank, 16);
        let search = invariant_zeros(&followers, &mut r, None).unwrap();
        assert!(search.zeros.is_empty(), "{:?}", search.zeros);
    }

    #[test]
    fn six_agent_audit_passes_vacuously() {
        let (nm, aug, _part) = six_agent_setup();
        let audit = theorem3_audit(&nm, &aug, 7, None).unwrap();
        assert!(audit.vacuous);
        assert!(audit.passed);
        assert_eq!(audit.annihilation_violations, 0);
    }

    #[test]
    fn blockwise_annihilation_is_exact() {
        // vectors whose per-agent blocks sit in ker(output) are annihilated
        // by coupling (x) injection_output exactly
        let d = AgentDynamics::new(
            2,
            1,
            1,
            RMat::from_row_slice(2, 2, &[-2.0, 2.0, -1.0, 1.0]),
            RMat::from_row_slice(2, 1, &[1.0, 0.0]),
            RMat::from_row_slice(1, 2, &[1.0, 0.0]),
            RMat::from_row_slice(2, 1, &[0.0, -0.3]),
            RMat::from_row_slice(1, 2, &[-1.0, 2.0]),
        )
        .unwrap();
        let g = DirectedGraph::new(4, &[(1, 2), (2, 1), (3, 1), (4, 2), (1, 3), (2, 4)]).unwrap();
        let part = partition(&g, &[3, 4]).unwrap();
        let aug = build_check_matrices(&d);
        let nm = build_network_matrices(&d, &part).unwrap();

        let kernel = kernel_basis(&aug.output, None).unwrap();
        assert!(kernel.ncols() > 0);
        let mut rng = rng();
        for _ in 0..20 {
            // random per-agent combination of kernel directions
            let mut v = CVec::zeros(nm.agent_state_dim * nm.n_attacked);
            for agent in 0..nm.n_attacked {
                for k in 0..kernel.ncols() {
                    let coeff =
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    for i in 0..nm.agent_state_dim {
                        v[agent * nm.agent_state_dim + i] += kernel[(i, k)] * coeff;
                    }
                }
            }
            let image = to_complex(&nm.follower_coupling) * &v;
            assert!(image.norm() <= 1e-12 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn reduced_output_audit_finds_no_witnesses() {
        // p < n: stealthy directions are possible in principle; the audit
        // must still find no simultaneous-excitation witness
        let d = AgentDynamics::new(
            2,
            1,
            1,
            RMat::from_row_slice(2, 2, &[-2.0, 2.0, -1.0, 1.0]),
            RMat::from_row_slice(2, 1, &[1.0, 0.0]),
            RMat::from_row_slice(1, 2, &[1.0, 0.0]),
            RMat::from_row_slice(2, 1, &[0.0, -0.3]),
            RMat::from_row_slice(1, 2, &[-1.0, 2.0]),
        )
        .unwrap();
        let g = DirectedGraph::new(4, &[(1, 2), (2, 1), (3, 1), (4, 2), (1, 3), (2, 4)]).unwrap();
        let part = partition(&g, &[3, 4]).unwrap();
        let aug = build_check_matrices(&d);
        let nm = build_network_matrices(&d, &part).unwrap();
        let audit = theorem3_audit(&nm, &aug, 11, None).unwrap();
        assert!(!audit.vacuous);
        assert!(audit.passed, "{:?}", audit.findings);
    }

    #[test]
    fn confirmed_zeros_always_drop_rank() {
        let pencil = siso_pencil();
        let search = invariant_zeros(&pencil, &mut rng(), None).unwrap();
        for z in &search.zeros {
            assert!(z.rank_at_zero < search.normal_rank);
        }
    }

    #[test]
    fn zero_search_is_reproducible_for_a_seed() {
        let pencil = siso_pencil();
        let a = invariant_zeros(&pencil, &mut ChaCha8Rng::seed_from_u64(5), None).unwrap();
        let b = invariant_zeros(&pencil, &mut ChaCha8Rng::seed_from_u64(5), None).unwrap();
        assert_eq!(a.zeros.len(), b.zeros.len());
        for (x, y) in a.zeros.iter().zip(&b.zeros) {
            assert_eq!(x.value, y.value);
            assert_eq!(x.rank_at_zero, y.rank_at_zero);
        }
    }
}
