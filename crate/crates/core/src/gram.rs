//! Block Gram assembly, the regularized ridge solve, and the truncated-SVD
//! pseudoinverse.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{OvkError, Result};
use crate::geometry::PointSet;
use crate::kernel::{SpatioTemporalPoint, TimeRegularizedKernel};
use crate::scalar::Real;

/// Default relative singular-value cutoff for [`pinv`].
pub const DEFAULT_PINV_RTOL: f64 = 1e-10;

/// Jitter multipliers of `trace(G) / (dN)` tried in order by [`solve_ridge`].
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Relative residual the ridge solve aims for.
pub const RIDGE_RESIDUAL_TOL: f64 = 1e-10;

const REFINEMENT_STEPS: usize = 4;

/// Symmetric `(dN) × (dN)` Gram matrix; block `(i, j)` is `K(p_i, p_j)`.
#[derive(Debug, Clone)]
pub struct BlockGramMatrix<T: Real> {
    entries: DMatrix<T>,
    centers: PointSet<T>,
    block_dim: usize,
}

impl<T: Real> BlockGramMatrix<T> {
    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn centers(&self) -> &PointSet<T> {
        &self.centers
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    /// Matrix side length `d·N`.
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> T {
        self.entries.trace()
    }
}

/// Scalar factors `s_ij` with `K(rows_i, cols_j) = s_ij · I_d`.
fn scalar_cross<T: Real>(
    kernel: &TimeRegularizedKernel<T>,
    rows: &[SpatioTemporalPoint<T>],
    cols: &[SpatioTemporalPoint<T>],
) -> Vec<T> {
    rows.par_iter()
        .flat_map_iter(|p| cols.iter().map(move |q| kernel.block_scalar_unchecked(p, q)))
        .collect()
}

/// Expands an `n × m` scalar factor matrix (row-major) to the `d`-block matrix.
fn expand_blocks<T: Real>(scalars: &[T], n: usize, m: usize, d: usize) -> DMatrix<T> {
    let mut out = DMatrix::<T>::zeros(n * d, m * d);
    for i in 0..n {
        for j in 0..m {
            let s = scalars[i * m + j];
            for a in 0..d {
                out[(i * d + a, j * d + a)] = s;
            }
        }
    }
    out
}

fn check_spatial_dim<T: Real>(ps: &PointSet<T>, expected: usize, what: &str) -> Result<()> {
    if let Some(bad) = ps.iter().position(|p| p.spatial_dim() != expected) {
        return Err(OvkError::input(format!(
            "{what} point {bad} has spatial dimension {}, expected {expected}",
            ps.points()[bad].spatial_dim()
        )));
    }
    Ok(())
}

pub fn assemble_gram<T: Real>(
    kernel: &TimeRegularizedKernel<T>,
    centers: &PointSet<T>,
) -> Result<BlockGramMatrix<T>> {
    if centers.is_empty() {
        return Err(OvkError::input("Gram matrix needs at least one center"));
    }
    check_spatial_dim(centers, centers.spatial_dim(), "center")?;
    let n = centers.len();
    let pts = centers.points();
    // Upper triangle only; mirrored below so the result is exactly symmetric.
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| kernel.block_scalar_unchecked(&pts[i], &pts[j]))
                .collect()
        })
        .collect();
    let mut scalars = vec![T::zero(); n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &s) in row.iter().enumerate() {
            let j = i + off;
            scalars[i * n + j] = s;
            scalars[j * n + i] = s;
        }
    }
    let d = kernel.output_dim();
    let entries = expand_blocks(&scalars, n, n, d);
    log::debug!("assembled gram: {} centers, block dim {d}", n);
    Ok(BlockGramMatrix {
        entries,
        centers: centers.clone(),
        block_dim: d,
    })
}

/// `(d·|rows|) × (d·|cols|)` matrix with block `(i, j) = K(rows_i, cols_j)`.
pub fn assemble_cross_gram<T: Real>(
    kernel: &TimeRegularizedKernel<T>,
    rows: &PointSet<T>,
    cols: &PointSet<T>,
) -> Result<DMatrix<T>> {
    assemble_cross_gram_points(kernel, rows.points(), cols.points())
}

pub(crate) fn assemble_cross_gram_points<T: Real>(
    kernel: &TimeRegularizedKernel<T>,
    rows: &[SpatioTemporalPoint<T>],
    cols: &[SpatioTemporalPoint<T>],
) -> Result<DMatrix<T>> {
    let dim = cols
        .first()
        .or(rows.first())
        .map(|p| p.spatial_dim())
        .unwrap_or(0);
    if let Some(p) = rows.iter().chain(cols).find(|p| p.spatial_dim() != dim) {
        return Err(OvkError::input(format!(
            "cross Gram points differ in spatial dimension ({} vs {dim})",
            p.spatial_dim()
        )));
    }
    let scalars = scalar_cross(kernel, rows, cols);
    Ok(expand_blocks(&scalars, rows.len(), cols.len(), kernel.output_dim()))
}

fn relative_residual<T: Real>(a: &DMatrix<T>, c: &DVector<T>, rhs: &DVector<T>) -> (DVector<T>, T) {
    let r = rhs - a * c;
    let denom = rhs.norm();
    let rel = if denom > T::zero() { r.norm() / denom } else { r.norm() };
    (r, rel)
}

/// Solves `(G + λI) c = rhs` by Cholesky with an escalating diagonal jitter.
///
/// Each successful factorization is followed by a few steps of iterative
/// refinement against the unjittered system. The first solution reaching
/// [`RIDGE_RESIDUAL_TOL`] is returned; otherwise the best one found.
pub fn solve_ridge<T: Real>(g: &BlockGramMatrix<T>, rhs: &DVector<T>, lambda: T) -> Result<DVector<T>> {
    solve_ridge_dense(g.entries(), rhs, lambda)
}

pub(crate) fn solve_ridge_dense<T: Real>(g: &DMatrix<T>, rhs: &DVector<T>, lambda: T) -> Result<DVector<T>> {
    let n = g.nrows();
    if rhs.len() != n {
        return Err(OvkError::input(format!(
            "right-hand side has length {}, system has {n} rows",
            rhs.len()
        )));
    }
    if !(lambda.finite() && lambda >= T::zero()) {
        return Err(OvkError::input("lambda must be nonnegative and finite"));
    }
    if rhs.iter().any(|v| !v.finite()) {
        return Err(OvkError::input("right-hand side contains non-finite values"));
    }
    let mut system = g.clone();
    for i in 0..n {
        system[(i, i)] += lambda;
    }
    let scale = g.trace() / T::from_count(n.max(1));
    let tol = T::lit(RIDGE_RESIDUAL_TOL);
    let mut best: Option<(DVector<T>, T)> = None;

    for &mult in JITTER_LADDER.iter() {
        let jitter = scale * T::lit(mult);
        let mut shifted = system.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        let Some(chol) = shifted.cholesky() else {
            log::debug!("ridge: cholesky failed at jitter {:.3e}", jitter.as_f64());
            continue;
        };
        let mut c = chol.solve(rhs);
        let (mut r, mut rel) = relative_residual(&system, &c, rhs);
        for _ in 0..REFINEMENT_STEPS {
            if rel <= tol || !rel.finite() {
                break;
            }
            let c_next = &c + chol.solve(&r);
            let (r_next, rel_next) = relative_residual(&system, &c_next, rhs);
            if !(rel_next < rel) {
                break;
            }
            c = c_next;
            r = r_next;
            rel = rel_next;
        }
        log::debug!(
            "ridge: jitter {:.3e}, relative residual {:.3e}",
            jitter.as_f64(),
            rel.as_f64()
        );
        if !rel.finite() {
            continue;
        }
        if rel <= tol {
            return Ok(c);
        }
        if best.as_ref().map_or(true, |(_, b)| rel < *b) {
            best = Some((c, rel));
        }
    }

    match best {
        Some((c, rel)) => {
            log::warn!(
                "ridge: best relative residual {:.3e} exceeds {:.1e}",
                rel.as_f64(),
                RIDGE_RESIDUAL_TOL
            );
            Ok(c)
        }
        None => Err(OvkError::numerical(
            format!("Cholesky factorization failed at every jitter level (n = {n})"),
            Some(condition_estimate(&system)),
        )),
    }
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix.
pub fn condition_estimate<T: Real>(m: &DMatrix<T>) -> f64 {
    let ev = m.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.as_f64().abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Truncated-SVD Moore–Penrose pseudoinverse; singular values below
/// `rtol · σ_max` are treated as zero.
pub fn pinv<T: Real>(m: &DMatrix<T>, rtol: T) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let s_max = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
    if s_max == T::zero() {
        return DMatrix::zeros(cols, rows);
    }
    let cutoff = rtol * s_max;
    let mut out = DMatrix::<T>::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let inv = T::one() / s;
        // out += v_k u_kᵀ / s_k
        let vk = v_t.row(k).transpose();
        let uk = u.column(k);
        out.ger(inv, &vk, &uk, T::one());
    }
    out
}

/// Truncated eigen-factorization of a symmetric matrix: `M† = V diag(1/μ) Vᵀ`
/// over the eigenvalues with `|μ| > rtol · max|μ|`.
///
/// For symmetric input this is the same pseudoinverse as [`pinv`], but keeps
/// the retained basis around for range-restricted computations.
#[derive(Debug, Clone)]
pub struct SymmetricPinv<T: Real> {
    pub basis: DMatrix<T>,
    pub eigenvalues: DVector<T>,
}

impl<T: Real> SymmetricPinv<T> {
    pub fn new(m: &DMatrix<T>, rtol: T) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(OvkError::input("symmetric pseudoinverse of a non-square matrix"));
        }
        let n = m.nrows();
        let eig = m.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let cutoff = rtol * max;
        let mut keep: Vec<usize> = (0..n)
            .filter(|&i| max > T::zero() && eig.eigenvalues[i].abs() > cutoff)
            .collect();
        // Descending magnitude, index as tie-break, for a reproducible basis order.
        keep.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .partial_cmp(&eig.eigenvalues[a].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let basis = DMatrix::from_fn(n, keep.len(), |i, k| eig.eigenvectors[(i, keep[k])]);
        let eigenvalues = DVector::from_fn(keep.len(), |k, _| eig.eigenvalues[keep[k]]);
        Ok(Self { basis, eigenvalues })
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(1/μ) Vᵀ`.
    pub fn to_matrix(&self) -> DMatrix<T> {
        let scaled = DMatrix::from_fn(self.basis.nrows(), self.rank(), |i, k| {
            self.basis[(i, k)] / self.eigenvalues[k]
        });
        scaled * self.basis.transpose()
    }
}

/// Numerical rank under the same cutoff rule as [`pinv`].
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, rtol: T) -> usize {
    let s = m.clone().singular_values();
    let s_max = s.iter().fold(T::zero(), |a, &v| a.max(v));
    s.iter().filter(|&&v| v > rtol * s_max && v > T::zero()).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{grid_points, random_points, BoxDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> PointSet<f64> {
        let pts = xs
            .iter()
            .map(|&x| SpatioTemporalPoint::state(vec![x]).unwrap())
            .collect();
        PointSet::from_points_bounding(pts, false).unwrap()
    }

    fn k0(d: usize) -> TimeRegularizedKernel<f64> {
        TimeRegularizedKernel::gaussian(1.0, 1.0, 0.0, d).unwrap()
    }

    #[test]
    fn single_center_is_identity() {
        let g = assemble_gram(&k0(3), &line(&[0.4])).unwrap();
        assert_eq!(g.entries(), &DMatrix::identity(3, 3));
        assert_eq!(g.size(), 3);
    }

    #[test]
    fn two_centers_structure() {
        let g = assemble_gram(&k0(1), &line(&[0.0, 0.7])).unwrap();
        let k = (-0.49f64).exp();
        assert_eq!(g.entries()[(0, 0)], 1.0);
        assert!((g.entries()[(0, 1)] - k).abs() < 1e-15);
        assert_eq!(g.entries()[(0, 1)], g.entries()[(1, 0)]);
    }

    #[test]
    fn three_collinear_points_positive_definite() {
        let g = assemble_gram(&k0(1), &line(&[0.0, 0.5, 1.0])).unwrap();
        // Independent route: the characteristic polynomial of the 3×3 Gram is
        // positive-definite iff all leading principal minors are positive.
        let a = (-0.25f64).exp();
        let b = (-1.0f64).exp();
        let m1 = 1.0;
        let m2 = 1.0 - a * a;
        let m3 = 1.0 + 2.0 * a * a * b - 2.0 * a * a - b * b;
        assert!(m1 > 0.0 && m2 > 0.0 && m3 > 0.0);
        let ev = g.entries().clone().symmetric_eigenvalues();
        assert!(ev.min() > 0.0);
        assert!((ev.iter().product::<f64>() - m3).abs() < 1e-12);
    }

    #[test]
    fn duplicate_centers_rejected_at_point_set() {
        let p = SpatioTemporalPoint::state(vec![0.1]).unwrap();
        assert!(PointSet::from_points_bounding(vec![p.clone(), p], false).is_err());
    }

    #[test]
    fn cross_gram_consistency() {
        let kern = TimeRegularizedKernel::gaussian(0.6, 0.5, 0.3, 2).unwrap();
        let d = BoxDomain::space_time(vec![(0.0, 1.0)], (0.0, 1.0)).unwrap();
        let ps = grid_points(&d, &[3, 3]).unwrap();
        let g = assemble_gram(&kern, &ps).unwrap();
        let c = assemble_cross_gram(&kern, &ps, &ps).unwrap();
        assert_eq!(g.entries(), &c);

        let delta: f64 = 0.2;
        let rows = line(&[0.0, 0.3, 0.6]);
        let cols = line(&[0.2, 0.5, 0.8]);
        let k = k0(2);
        let cg = assemble_cross_gram(&k, &cols, &rows).unwrap();
        let want = (-(delta * delta)).exp();
        for i in 0..3 {
            for a in 0..2 {
                assert!((cg[(2 * i + a, 2 * i + a)] - want).abs() < 1e-15);
            }
            assert_eq!(cg[(2 * i, 2 * i + 1)], 0.0);
        }

        let one = assemble_cross_gram(&k0(1), &line(&[0.0]), &line(&[2.0])).unwrap();
        assert_eq!(one.shape(), (1, 1));
        assert!((one[(0, 0)] - (-4.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ridge_examples() {
        let g = assemble_gram(&k0(2), &line(&[0.5])).unwrap();
        let y = DVector::from_vec(vec![1.5, -2.0]);
        assert_eq!(solve_ridge(&g, &y, 0.0).unwrap(), y);
        let half = solve_ridge(&g, &y, 1.0).unwrap();
        assert!((half - &y / 2.0).norm() < 1e-15);

        let g2 = assemble_gram(&k0(1), &line(&[0.0, 0.8])).unwrap();
        let gk = (-0.64f64).exp();
        let c = solve_ridge(&g2, &DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
        let det = 1.0 - gk * gk;
        assert!((c[0] - 1.0 / det).abs() < 1e-13);
        assert!((c[1] + gk / det).abs() < 1e-13);
    }

    #[test]
    fn ridge_rejects_bad_input() {
        let g = assemble_gram(&k0(1), &line(&[0.0, 0.8])).unwrap();
        assert!(solve_ridge(&g, &DVector::from_vec(vec![1.0]), 0.0).is_err());
        assert!(solve_ridge(&g, &DVector::from_vec(vec![1.0, 0.0]), -1.0).is_err());
        assert!(solve_ridge(&g, &DVector::from_vec(vec![f64::NAN, 0.0]), 0.1).is_err());
    }

    #[test]
    fn ridge_singular_system_uses_jitter_or_fails_cleanly() {
        // A zero matrix at λ = 0 has no positive pivot at any jitter level.
        let z = DMatrix::<f64>::zeros(3, 3);
        let err = solve_ridge_dense(&z, &DVector::from_element(3, 1.0), 0.0).unwrap_err();
        assert!(matches!(err, OvkError::Numerical { .. }));
    }

    #[test]
    fn ridge_is_linear() {
        let d = BoxDomain::space_time(vec![(0.0, 1.0)], (0.0, 1.0)).unwrap();
        let ps = random_points(&d, 40, 5).unwrap();
        let kern = TimeRegularizedKernel::gaussian(0.3, 0.3, 0.1, 2).unwrap();
        let g = assemble_gram(&kern, &ps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y1 = DVector::from_fn(80, |_, _| rng.gen_range(-1.0..1.0));
        let y2 = DVector::from_fn(80, |_, _| rng.gen_range(-1.0..1.0));
        let (a, b) = (0.7, -1.3);
        let lhs = solve_ridge(&g, &(&y1 * a + &y2 * b), 1e-6).unwrap();
        let rhs = solve_ridge(&g, &y1, 1e-6).unwrap() * a + solve_ridge(&g, &y2, 1e-6).unwrap() * b;
        assert!((&lhs - &rhs).norm() <= 1e-9 * rhs.norm());
    }

    #[test]
    fn gram_invariants_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..50 {
            let sx = rng.gen_range(0.1..1.0);
            let st = rng.gen_range(0.1..1.0);
            let alpha = if case % 2 == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
            let d = rng.gen_range(1..4);
            let kern = TimeRegularizedKernel::gaussian(sx, st, alpha, d).unwrap();
            let dom = BoxDomain::space_time(vec![(0.0, 1.0)], (0.0, 1.0)).unwrap();
            let ps = random_points(&dom, rng.gen_range(1..25), case as u64).unwrap();
            let g = assemble_gram(&kern, &ps).unwrap();
            let e = g.entries();
            assert_eq!(e, &e.transpose());
            let ev = e.clone().symmetric_eigenvalues();
            assert!(ev.min() >= -1e-8 * ev.max());
        }
    }

    #[test]
    fn pinv_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((pinv(&i3, 1e-10) - &i3).norm() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let p = pinv(&d, 1e-10);
        assert!((p - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]))).norm() < 1e-15);
        assert_eq!(pinv(&DMatrix::<f64>::zeros(2, 3), 1e-10), DMatrix::zeros(3, 2));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let p = pinv(&m, 1e-10);
        assert!((&p * &m - DMatrix::identity(3, 3)).norm() < 1e-8);
        // Independent route: normal equations (MᵀM)⁻¹Mᵀ for full column rank.
        let normal = (m.transpose() * &m).try_inverse().unwrap() * m.transpose();
        assert!((p - normal).norm() < 1e-10);
    }

    #[test]
    fn pinv_penrose_identities_over_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &(m, n) in &[(6usize, 4usize), (3, 7), (5, 5)] {
            for rank in 1..=m.min(n) {
                let a = DMatrix::from_fn(m, rank, |_, _| rng.gen_range(-1.0..1.0));
                let b = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
                let mat = a * b;
                let p = pinv(&mat, 1e-10);
                assert!((&mat * &p * &mat - &mat).norm() <= 1e-8 * mat.norm());
                assert!((&p * &mat * &p - &p).norm() <= 1e-8 * p.norm());
                let mp = &mat * &p;
                let pm = &p * &mat;
                assert!((&mp - mp.transpose()).norm() <= 1e-8 * mp.norm());
                assert!((&pm - pm.transpose()).norm() <= 1e-8 * pm.norm());
                assert_eq!(numerical_rank(&mat, 1e-10), rank);
            }
        }
    }

    #[test]
    fn symmetric_pinv_matches_svd_pinv() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for rank in [1usize, 3, 6] {
            let a = DMatrix::from_fn(6, rank, |_, _| rng.gen_range(-1.0..1.0));
            let m = &a * a.transpose();
            let sp = SymmetricPinv::new(&m, 1e-10).unwrap();
            assert_eq!(sp.rank(), rank);
            assert!((sp.to_matrix() - pinv(&m, 1e-10)).norm() < 1e-8 * pinv(&m, 1e-10).norm());
        }
    }
}
