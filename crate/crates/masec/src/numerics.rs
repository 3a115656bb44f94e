//! Dense real- and complex-valued matrix kernel.
//!
//! Everything downstream (topology, stacked models, controllability tests,
//! pencil analysis) is expressed in terms of the primitives here: Kronecker
//! products, tolerance-based rank, orthonormal kernel bases, and
//! eigendecomposition with an explicit eigenvalue-clustering policy.
//!
//! Inputs are real, but intermediates are complex wherever spectra are
//! involved: directed-graph grounded Laplacians can have complex eigenvalues,
//! so every mode-level test runs over the complex field.

use nalgebra::{ClosedAddAssign, ClosedMulAssign, ComplexField, DMatrix, DVector, Scalar};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<C64>;
pub type RVec = DVector<f64>;
pub type CVec = DVector<C64>;

/// Iteration cap handed to nalgebra's SVD / Schur routines.
const MAX_DECOMP_ITERS: usize = 50_000;

/// Relative eigenvalue-clustering width: eigenvalues within
/// `CLUSTER_RTOL * (1 + |lambda|)` of each other are treated as one
/// repeated eigenvalue when counting multiplicities.
pub const CLUSTER_RTOL: f64 = 1e-6;

/// Outcome of a tolerance-based rank computation.
///
/// `rank` counts the singular values strictly greater than
/// `tolerance_used`, so every reported rank is auditable from the stored
/// spectrum alone.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankResult {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

/// One eigenvalue together with a unit-norm right eigenvector and the
/// residual `||m v - lambda v||`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub vector: CVec,
    pub residual: f64,
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub centroid: C64,
    /// Cluster members as computed, sorted by (re, im).
    pub members: Vec<C64>,
    pub algebraic: usize,
    pub geometric: usize,
    /// Kernel-directions of `m - centroid I`, one column per vector,
    /// smallest-residual first; never empty (best-effort vector kept even
    /// for defective clusters).
    pub basis: CMat,
}

/// Kronecker product. Works for both real and complex matrices.
///
/// ```
/// use masec::numerics::{kron, RMat};
/// let a = RMat::identity(2, 2);
/// let b = RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
/// let k = kron(&a, &b);
/// assert_eq!(k[(2, 2)], 1.0);
/// assert_eq!(k[(0, 2)], 0.0);
/// ```
pub fn kron<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T>
where
    T: Scalar + ClosedMulAssign + ClosedAddAssign + num_traits::Zero + num_traits::One,
{
    a.kronecker(b)
}

/// Lift a real matrix into the complex field.
pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest absolute entry; 0 for empty matrices.
pub fn max_abs<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|x| x.clone().modulus()).fold(0.0, f64::max)
}

/// Conventional SVD rank cutoff: `max(rows, cols) * eps * sigma_max`,
/// or `rtol * sigma_max` when the caller supplies a relative tolerance.
pub fn rank_cutoff(rows: usize, cols: usize, sigma_max: f64, rtol: Option<f64>) -> f64 {
    match rtol {
        Some(r) => r * sigma_max,
        None => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
    }
}

fn svd_values<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Result<Vec<f64>> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, MAX_DECOMP_ITERS)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Rank of a dense matrix under the SVD cutoff policy.
///
/// Real and complex matrices share this implementation; singular values are
/// returned nonincreasing.
pub fn rank_with_tolerance<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    rtol: Option<f64>,
) -> Result<RankResult> {
    if m.is_empty() {
        return Err(Error::Validation("rank of an empty matrix is undefined".into()));
    }
    let sv = svd_values(m)?;
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol = rank_cutoff(m.nrows(), m.ncols(), sigma_max, rtol);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    Ok(RankResult { rank, singular_values: sv, tolerance_used: tol })
}

/// Rank helper for matrices that may legitimately be empty (0 rows or cols):
/// an empty matrix has rank 0.
pub fn rank_allow_empty<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    rtol: Option<f64>,
) -> Result<RankResult> {
    if m.is_empty() {
        return Ok(RankResult { rank: 0, singular_values: vec![], tolerance_used: 0.0 });
    }
    rank_with_tolerance(m, rtol)
}

/// Orthonormal basis of the null space of `m`, one column per direction,
/// under the same tolerance policy as [`rank_with_tolerance`]. The result
/// has zero columns when the kernel is trivial.
pub fn kernel_basis<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    rtol: Option<f64>,
) -> Result<DMatrix<T>> {
    if m.is_empty() {
        return Err(Error::Validation("kernel of an empty matrix is undefined".into()));
    }
    let (rows, cols) = m.shape();
    // nalgebra's SVD is thin; pad wide matrices with zero rows so the full
    // set of right singular vectors is available. Padding does not change
    // the singular values or the right singular vectors.
    let work = if rows < cols {
        let mut padded = DMatrix::<T>::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work
        .try_svd(false, true, f64::EPSILON, MAX_DECOMP_ITERS)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let sv = svd.singular_values;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let tol = rank_cutoff(rows, cols, sigma_max, rtol);
    let kept: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol).collect();
    let mut basis = DMatrix::<T>::zeros(cols, kept.len());
    for (out_col, &i) in kept.iter().enumerate() {
        // rows of V^H, conjugated back into columns of V
        basis.set_column(out_col, &v_t.row(i).adjoint());
    }
    Ok(basis)
}

/// All eigenvalues of a real square matrix (complex-valued), via the real
/// Schur form.
pub fn eigenvalues(m: &RMat) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Validation("eigenvalues of a non-square matrix are undefined".into()));
    }
    if m.is_empty() {
        return Ok(vec![]);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_DECOMP_ITERS)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let mut vals: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut vals);
    Ok(vals)
}

/// All eigenvalues of a complex square matrix. Effectively real inputs are
/// routed through the real Schur form, which keeps conjugate pairs exact.
pub fn eigenvalues_c(m: &CMat) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Validation("eigenvalues of a non-square matrix are undefined".into()));
    }
    if m.is_empty() {
        return Ok(vec![]);
    }
    let scale = max_abs(m);
    let imag_mass = m.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    if imag_mass <= f64::EPSILON * scale {
        return eigenvalues(&m.map(|x| x.re));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_DECOMP_ITERS)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let mut vals: Vec<C64> = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("complex Schur form left an unresolved 2x2 block".into()))?
        .iter()
        .copied()
        .collect();
    sort_complex(&mut vals);
    Ok(vals)
}

fn sort_complex(vals: &mut [C64]) {
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Group numerically coincident eigenvalues; returns index groups.
fn cluster_indices(vals: &[C64]) -> Vec<Vec<usize>> {
    let n = vals.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let tol = CLUSTER_RTOL * (1.0 + vals[i].norm().max(vals[j].norm()));
            if (vals[i] - vals[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn clusters_for(cm: &CMat, vals: &[C64], rtol: Option<f64>) -> Result<Vec<EigenCluster>> {
    let n = cm.nrows();
    let eye = CMat::identity(n, n);
    let mut clusters = Vec::new();
    for group in cluster_indices(vals) {
        let mut members: Vec<C64> = group.iter().map(|&i| vals[i]).collect();
        sort_complex(&mut members);
        let algebraic = members.len();
        let centroid = members.iter().sum::<C64>() / C64::new(algebraic as f64, 0.0);

        let shifted = cm - &eye * centroid;
        let svd = shifted
            .clone()
            .try_svd(false, true, f64::EPSILON, MAX_DECOMP_ITERS)
            .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
        let sv = svd.singular_values;
        let v_t = svd.v_t.expect("requested right singular vectors");
        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        // The centroid carries the eigensolver's and the clustering policy's
        // error, so kernel directions are counted with a cutoff no tighter
        // than the clustering width.
        let cutoff = rank_cutoff(n, n, sigma_max, rtol).max(CLUSTER_RTOL * (1.0 + centroid.norm()));
        let below = (0..sv.len()).filter(|&i| sv[i] <= cutoff).count();
        let geometric = below.min(algebraic);
        let n_vectors = below.max(1).min(algebraic);
        let mut basis = CMat::zeros(n, n_vectors);
        for k in 0..n_vectors {
            // smallest singular values sit at the end
            let mut v: CVec = v_t.row(sv.len() - 1 - k).adjoint();
            canonicalize_phase(&mut v);
            basis.set_column(k, &v);
        }
        clusters.push(EigenCluster { centroid, members, algebraic, geometric, basis });
    }
    clusters.sort_by(|a, b| a.centroid.re.total_cmp(&b.centroid.re).then(a.centroid.im.total_cmp(&b.centroid.im)));
    Ok(clusters)
}

/// Eigenvalue clusters with algebraic/geometric multiplicities and kernel
/// bases, for a real square matrix.
pub fn eigen_clusters(m: &RMat, rtol: Option<f64>) -> Result<Vec<EigenCluster>> {
    let vals = eigenvalues(m)?;
    clusters_for(&to_complex(m), &vals, rtol)
}

/// Same as [`eigen_clusters`] for a complex matrix.
pub fn eigen_clusters_c(m: &CMat, rtol: Option<f64>) -> Result<Vec<EigenCluster>> {
    let vals = eigenvalues_c(m)?;
    clusters_for(m, &vals, rtol)
}

/// Rotate a complex vector so its first nonzero component is real positive.
/// Makes eigenvector fixtures reproducible across eigensolver details.
fn canonicalize_phase(v: &mut CVec) {
    let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|x| x.norm() > 1e-12 * scale) {
        let phase = pivot / pivot.norm();
        let adjust = phase.conj();
        for x in v.iter_mut() {
            *x *= adjust;
        }
    }
}

fn pairs_from_clusters(cm: &CMat, clusters: &[EigenCluster]) -> Vec<EigenPair> {
    let mut pairs = Vec::with_capacity(cm.nrows());
    for cluster in clusters {
        for (idx, &value) in cluster.members.iter().enumerate() {
            let vector: CVec = cluster.basis.column(idx % cluster.basis.ncols()).into();
            let residual = (cm * &vector - &vector * value).norm();
            pairs.push(EigenPair { value, vector, residual });
        }
    }
    pairs
}

/// Full eigendecomposition of a real square matrix: every eigenvalue with a
/// unit-norm right eigenvector. For a defective (non-diagonalizable)
/// eigenvalue the independent kernel directions are reused cyclically, so
/// the returned vector count always equals the dimension.
pub fn eig(m: &RMat) -> Result<Vec<EigenPair>> {
    let clusters = eigen_clusters(m, None)?;
    Ok(pairs_from_clusters(&to_complex(m), &clusters))
}

/// Complex-matrix counterpart of [`eig`].
pub fn eig_c(m: &CMat) -> Result<Vec<EigenPair>> {
    let clusters = eigen_clusters_c(m, None)?;
    Ok(pairs_from_clusters(m, &clusters))
}

/// Horizontal concatenation. Panics on inconsistent heights.
pub fn hstack<T: Scalar + num_traits::Zero>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    assert!(!blocks.is_empty());
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: inconsistent block heights");
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation. Panics on inconsistent widths.
pub fn vstack<T: Scalar + num_traits::Zero>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    assert!(!blocks.is_empty());
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: inconsistent block widths");
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

/// Assemble a matrix from a grid of blocks (row-major). Panics on ragged
/// layouts.
pub fn block_matrix<T: Scalar + num_traits::Zero>(grid: &[&[&DMatrix<T>]]) -> DMatrix<T> {
    assert!(!grid.is_empty());
    let rows: Vec<DMatrix<T>> = grid.iter().map(|row| hstack(row)).collect();
    let refs: Vec<&DMatrix<T>> = rows.iter().collect();
    vstack(&refs)
}

/// Block-diagonal assembly.
pub fn block_diag<T: Scalar + num_traits::Zero>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn six_agent_grounded() -> RMat {
        RMat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, -1.0, 1.0])
    }

    fn six_agent_coupling() -> RMat {
        RMat::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn kron_identity_gives_block_diagonal() {
        let m = RMat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = kron(&RMat::identity(2, 2), &m);
        assert_eq!(k.shape(), (4, 6));
        assert_eq!(k.view((0, 0), (2, 3)), m.view((0, 0), (2, 3)));
        assert_eq!(k.view((2, 3), (2, 3)), m.view((0, 0), (2, 3)));
        assert_eq!(k.view((0, 3), (2, 3)).amax(), 0.0);
        assert_eq!(k.view((2, 0), (2, 3)).amax(), 0.0);
    }

    #[test]
    fn kron_distributes_over_addition() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut random = |r: usize, c: usize| RMat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let q = random(3, 3);
        let w = random(3, 3);
        let m = random(3, 3);
        let lhs = kron(&(&q + &w), &m);
        let rhs = kron(&q, &m) + kron(&w, &m);
        assert!(max_abs(&(lhs - rhs)) <= 1e-12);
    }

    #[test]
    fn kron_matches_hand_expansion() {
        let a = RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        // element-by-element expansion of the definition
        let expected = RMat::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 2.0, //
                1.0, 0.0, 2.0, 0.0, //
                0.0, 3.0, 0.0, 4.0, //
                3.0, 0.0, 4.0, 0.0,
            ],
        );
        assert_eq!(kron(&a, &b), expected);
    }

    #[test]
    fn rank_of_zero_matrix_is_zero() {
        let r = rank_with_tolerance(&RMat::zeros(3, 3), None).unwrap();
        assert_eq!(r.rank, 0);
        assert_eq!(r.tolerance_used, 0.0);
    }

    #[test]
    fn rank_respects_caller_tolerance() {
        let m = RMat::from_partial_diagonal(2, 2, &[1.0, 1e-14]);
        let r = rank_with_tolerance(&m, Some(1e-9)).unwrap();
        assert_eq!(r.rank, 1);
        let full = rank_with_tolerance(&m, None).unwrap();
        assert_eq!(full.rank, 2);
    }

    #[test]
    fn six_agent_laplacian_pair_has_rank_three() {
        let lf = six_agent_grounded();
        let lfa = six_agent_coupling();
        let ctrb = hstack(&[&lfa, &(&lf * &lfa), &(&lf * &lf * &lfa)]);
        let r = rank_with_tolerance(&ctrb, None).unwrap();
        assert_eq!(r.rank, 3);
    }

    #[test]
    fn kernel_of_identity_is_empty() {
        let k = kernel_basis(&RMat::identity(3, 3), None).unwrap();
        assert_eq!(k.ncols(), 0);
        assert_eq!(k.nrows(), 3);
    }

    #[test]
    fn kernel_of_row_sum_functional() {
        let m = RMat::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = kernel_basis(&m, None).unwrap();
        assert_eq!(k.shape(), (2, 1));
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(k[(0, 0)].abs(), inv_sqrt2, epsilon = 1e-12);
        assert_relative_eq!(k[(1, 0)].abs(), inv_sqrt2, epsilon = 1e-12);
        assert_relative_eq!(k[(0, 0)] + k[(1, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_dimension_matches_rank_nullity_for_attack_input() {
        // B_a = I_3 (x) [[0],[H]] is 12x6 with full column rank, so
        // ker(B_a^T) has dimension 12 - 6 = (2n - p) N_a.
        let h = RMat::from_row_slice(2, 2, &[0.0, 0.3, -0.3, 0.0]);
        let mut h_atk = RMat::zeros(4, 2);
        h_atk.view_mut((2, 0), (2, 2)).copy_from(&h);
        let b_a = kron(&RMat::identity(3, 3), &h_atk);
        assert_eq!(b_a.shape(), (12, 6));
        assert_eq!(rank_with_tolerance(&b_a, None).unwrap().rank, 6);
        let w = kernel_basis(&b_a.transpose(), None).unwrap();
        assert_eq!(w.shape(), (12, 6));
        assert!(max_abs(&(b_a.transpose() * &w)) <= 1e-12);
    }

    #[test]
    fn eig_six_agent_grounded_laplacian() {
        let pairs = eig(&six_agent_grounded()).unwrap();
        let mut vals: Vec<f64> = pairs.iter().map(|p| p.value.re).collect();
        vals.sort_by(f64::total_cmp);
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(vals[2], 2.0, epsilon = 1e-9);
        for p in &pairs {
            assert!(p.value.im.abs() <= 1e-9);
            assert!(p.residual <= 1e-8 * 2.0);
            assert_relative_eq!(p.vector.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eig_identity() {
        let pairs = eig(&RMat::identity(4, 4)).unwrap();
        assert_eq!(pairs.len(), 4);
        for p in pairs {
            assert_relative_eq!(p.value.re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(p.value.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eig_rotation_matrix_is_pure_imaginary() {
        let m = RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let pairs = eig(&m).unwrap();
        let mut ims: Vec<f64> = pairs.iter().map(|p| p.value.im).collect();
        ims.sort_by(f64::total_cmp);
        assert_relative_eq!(ims[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(ims[1], 1.0, epsilon = 1e-12);
        for p in &pairs {
            assert!(p.value.re.abs() <= 1e-12);
            assert!(p.residual <= 1e-10);
        }
    }

    #[test]
    fn defective_cluster_keeps_multiplicities() {
        // lower-triangular Jordan structure: algebraic 3, geometric 1
        let j = RMat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        let clusters = eigen_clusters(&j, None).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].algebraic, 3);
        assert_eq!(clusters[0].geometric, 1);
    }

    #[test]
    fn rank_is_permutation_invariant() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let m = RMat::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
            let baseline = rank_with_tolerance(&m, None).unwrap().rank;
            let mut permuted = m.clone();
            permuted.swap_rows(0, 3);
            permuted.swap_columns(1, 4);
            assert_eq!(rank_with_tolerance(&permuted, None).unwrap().rank, baseline);
        }
    }

    proptest! {
        #[test]
        fn mixed_product_identity(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let mut random = |r: usize, c: usize| RMat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
            let q = random(2, 3);
            let w = random(3, 2);
            let m = random(3, 2);
            let z = random(2, 3);
            let lhs = kron(&q, &w) * kron(&m, &z);
            let rhs = kron(&(&q * &m), &(&w * &z));
            prop_assert!(max_abs(&(lhs - rhs)) <= 1e-10);
        }

        #[test]
        fn kernel_basis_is_orthonormal_annihilator(seed in 0u64..300) {
            let mut rng = StdRng::seed_from_u64(seed);
            let rows = rng.random_range(1usize..5);
            let cols = rng.random_range(1usize..7);
            let m = RMat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let k = kernel_basis(&m, None).unwrap();
            if k.ncols() > 0 {
                let gram = k.transpose() * &k;
                prop_assert!(max_abs(&(gram - RMat::identity(k.ncols(), k.ncols()))) <= 1e-10);
                let scale = max_abs(&m).max(1e-300);
                prop_assert!(max_abs(&(&m * &k)) <= 1e-8 * scale);
            }
            let r = rank_with_tolerance(&m, None).unwrap();
            prop_assert_eq!(k.ncols(), cols - r.rank);
        }

        #[test]
        fn eig_residuals_bounded(seed in 0u64..300) {
            let mut rng = StdRng::seed_from_u64(seed);
            let n = rng.random_range(1usize..6);
            let m = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let scale = max_abs(&m).max(1.0);
            for p in eig(&m).unwrap() {
                prop_assert!(p.residual <= 1e-8 * scale * n as f64);
            }
        }
    }
}
