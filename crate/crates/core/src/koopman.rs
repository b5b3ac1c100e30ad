//! Empirical kernel Koopman operator `K_N = G† G'`, its eigendecomposition,
//! and rank-r spectral forecasts.

use std::cmp::Ordering;

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::TrajectoryDataset;
use crate::error::{OvkError, Result};
use crate::geometry::{linspace, PointSet};
use crate::gram::{assemble_cross_gram, assemble_cross_gram_points, assemble_gram, BlockGramMatrix, SymmetricPinv};
use crate::kernel::{SpatioTemporalPoint, TimeRegularizedKernel};
use crate::scalar::Real;

/// Eigenpairs whose relative residual exceeds this are dropped.
pub const EIGEN_RESIDUAL_DISCARD: f64 = 1e-8;

/// Moduli closer than this (relative to the spectral radius) are ordered by
/// argument instead.
const MODULUS_TIE_TOL: f64 = 1e-10;

/// Smallest relative singular value accepted in least-squares projections.
const PROJECTION_RANK_TOL: f64 = 1e-12;

type C<T> = Complex<T>;

#[derive(Debug, Clone)]
pub struct EmpiricalKoopman<T: Real> {
    kernel: TimeRegularizedKernel<T>,
    centers: PointSet<T>,
    gram: BlockGramMatrix<T>,
    cross_gram: DMatrix<T>,
    gram_pinv: DMatrix<T>,
    range: SymmetricPinv<T>,
    operator: DMatrix<T>,
    pinv_rtol: T,
    dt: T,
}

impl<T: Real> EmpiricalKoopman<T> {
    pub fn kernel(&self) -> &TimeRegularizedKernel<T> {
        &self.kernel
    }

    pub fn centers(&self) -> &PointSet<T> {
        &self.centers
    }

    pub fn gram(&self) -> &BlockGramMatrix<T> {
        &self.gram
    }

    /// `G'` with block `(i, j) = K(Φ(x_i), x_j)`.
    pub fn cross_gram(&self) -> &DMatrix<T> {
        &self.cross_gram
    }

    pub fn gram_pinv(&self) -> &DMatrix<T> {
        &self.gram_pinv
    }

    /// `K_N = G† G'`, acting on coefficient vectors.
    pub fn operator(&self) -> &DMatrix<T> {
        &self.operator
    }

    /// Numerical rank of `G` at the pseudoinverse cutoff.
    pub fn rank(&self) -> usize {
        self.range.rank()
    }

    /// `Σ⁻¹ Vᵀ G' V` on the retained range `V` of `G`. Its spectrum is the
    /// nonzero spectrum of `K_N`, and `K_N (V z) = λ V z` whenever `M z = λ z`.
    ///
    /// Formed as `I + Σ⁻¹ Vᵀ (G' − G) V`, which is exact when `G' = G`.
    pub fn reduced_operator(&self) -> DMatrix<T> {
        let v = &self.range.basis;
        let diff = &self.cross_gram - self.gram.entries();
        let mut m = v.transpose() * (diff * v);
        for (k, mut row) in m.row_iter_mut().enumerate() {
            row /= self.range.eigenvalues[k];
        }
        for k in 0..m.nrows() {
            m[(k, k)] += T::one();
        }
        m
    }

    pub fn pinv_rtol(&self) -> T {
        self.pinv_rtol
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn block_dim(&self) -> usize {
        self.kernel.output_dim()
    }

    /// Stacks observable values at the centers into a `(dN) × (m/d)` matrix.
    fn sample_matrix<G>(&self, g: G) -> Result<DMatrix<T>>
    where
        G: Fn(&[T]) -> DVector<T>,
    {
        sample_at_centers(&self.centers, self.block_dim(), g)
    }

    /// Interpolation coefficients `G† g(X)` of an observable.
    pub fn interpolate(&self, values: &DVector<T>) -> Result<DVector<T>> {
        if values.len() != self.gram.size() {
            return Err(OvkError::input(format!(
                "expected {} stacked values, got {}",
                self.gram.size(),
                values.len()
            )));
        }
        Ok(&self.gram_pinv * values)
    }

    /// Evaluates `Σ_i K(p, x_i) w_i` at each probe.
    pub fn evaluate_expansion(&self, coeffs: &DVector<T>, probes: &[SpatioTemporalPoint<T>]) -> Result<DVector<T>> {
        let cross = assemble_cross_gram_points(&self.kernel, probes, self.centers.points())?;
        Ok(cross * coeffs)
    }

    /// Kernel estimate of `g ∘ Φ_Δt` on `probes`: interpolate, apply `K_N`, evaluate.
    pub fn apply_to_observable<G>(&self, g: G, probes: &[SpatioTemporalPoint<T>]) -> Result<DMatrix<T>>
    where
        G: Fn(&[T]) -> DVector<T>,
    {
        let y = self.sample_matrix(g)?;
        let advanced = &self.operator * (&self.gram_pinv * y);
        let cross = assemble_cross_gram_points(&self.kernel, probes, self.centers.points())?;
        Ok(cross * advanced)
    }
}

fn sample_at_centers<T, G>(centers: &PointSet<T>, d: usize, g: G) -> Result<DMatrix<T>>
where
    T: Real,
    G: Fn(&[T]) -> DVector<T>,
{
    let values: Vec<DVector<T>> = centers.iter().map(|p| g(&p.x)).collect();
    let m = values.first().map_or(0, |v| v.len());
    if m == 0 || m % d != 0 {
        return Err(OvkError::input(format!(
            "observable dimension {m} is not a positive multiple of the kernel block size {d}"
        )));
    }
    if values.iter().any(|v| v.len() != m) {
        return Err(OvkError::input("observable dimension varies between states"));
    }
    if values.iter().any(|v| v.iter().any(|x| !x.finite())) {
        return Err(OvkError::input("observable produced non-finite values"));
    }
    let cols = m / d;
    Ok(DMatrix::from_fn(centers.len() * d, cols, |row, c| {
        values[row / d][c * d + row % d]
    }))
}

pub fn build_koopman<T: Real>(
    kernel: &TimeRegularizedKernel<T>,
    data: &TrajectoryDataset<T>,
    pinv_rtol: T,
) -> Result<EmpiricalKoopman<T>> {
    if data.is_empty() {
        return Err(OvkError::input("trajectory dataset is empty"));
    }
    if !(pinv_rtol.finite() && pinv_rtol > T::zero()) {
        return Err(OvkError::input("pinv rtol must be positive"));
    }
    let gram = assemble_gram(kernel, &data.x_now)?;
    let cross_gram = assemble_cross_gram(kernel, &data.x_next, &data.x_now)?;
    let range = SymmetricPinv::new(gram.entries(), pinv_rtol)?;
    let gram_pinv = range.to_matrix();
    // G† G' = V Vᵀ + G† (G' − G); the split keeps the projector exact.
    let operator = &range.basis * range.basis.transpose() + &gram_pinv * (&cross_gram - gram.entries());
    if operator.iter().any(|v| !v.finite()) {
        return Err(OvkError::numerical("Koopman matrix has non-finite entries", None));
    }
    Ok(EmpiricalKoopman {
        kernel: kernel.clone(),
        centers: data.x_now.clone(),
        gram,
        cross_gram,
        gram_pinv,
        range,
        operator,
        pinv_rtol,
        dt: data.dt,
    })
}

/// Retained Koopman eigenpairs, sorted by descending modulus.
///
/// Each eigenfunction is `φ_k(x) = Σ_i K(x, x_i) w_{k,i}` with unit empirical
/// RMS over the sample states and its largest coefficient real positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T: Real> {
    kernel: TimeRegularizedKernel<T>,
    centers: PointSet<T>,
    eigenvalues: Vec<C<T>>,
    eigenvectors: DMatrix<C<T>>,
    residuals: Vec<T>,
    sample_values: DMatrix<C<T>>,
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn eigenvalues(&self) -> &[C<T>] {
        &self.eigenvalues
    }

    /// Coefficient columns `w_k`.
    pub fn eigenvectors(&self) -> &DMatrix<C<T>> {
        &self.eigenvectors
    }

    /// `‖K_N w_k − λ_k w_k‖ / ‖w_k‖`.
    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    /// `φ_k` at the sample states, stacked `(dN) × modes`.
    pub fn sample_values(&self) -> &DMatrix<C<T>> {
        &self.sample_values
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn centers(&self) -> &PointSet<T> {
        &self.centers
    }

    pub fn kernel(&self) -> &TimeRegularizedKernel<T> {
        &self.kernel
    }

    /// `φ_k` at arbitrary states, stacked `(d·|states|) × modes`.
    pub fn eigenfunction_values(&self, states: &[SpatioTemporalPoint<T>]) -> Result<DMatrix<C<T>>> {
        let cross = assemble_cross_gram_points(&self.kernel, states, self.centers.points())?;
        Ok(real_times_complex(&cross, &self.eigenvectors))
    }
}

fn real_times_complex<T: Real>(a: &DMatrix<T>, b: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let re = a * b.map(|z| z.re);
    let im = a * b.map(|z| z.im);
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C::new(re[(i, j)], im[(i, j)]))
}

fn real_times_complex_vec<T: Real>(a: &DMatrix<T>, v: &DVector<C<T>>) -> DVector<C<T>> {
    let re = a * v.map(|z| z.re);
    let im = a * v.map(|z| z.im);
    DVector::from_fn(re.len(), |i, _| C::new(re[i], im[i]))
}

/// Order: descending modulus, near-equal moduli by ascending argument, then index.
pub(crate) fn spectral_order<T: Real>(values: &[C<T>]) -> Vec<usize> {
    let modulus: Vec<f64> = values.iter().map(|z| z.modulus().as_f64()).collect::<Vec<f64>>();
    let arg: Vec<f64> = values.iter().map(|z| z.im.as_f64().atan2(z.re.as_f64())).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        modulus[b]
            .partial_cmp(&modulus[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let radius = modulus.iter().cloned().fold(0.0, f64::max);
    let tie: f64 = MODULUS_TIE_TOL * radius.max(f64::MIN_POSITIVE);
    // Regroup runs of near-equal modulus and sort each run by argument.
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && modulus[order[start]] - modulus[order[end]] <= tie {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| {
            arg[a]
                .partial_cmp(&arg[b])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        start = end;
    }
    order
}

/// Eigenpairs of a small dense real matrix, computed in double precision.
fn dense_eigen<T: Real>(m: &DMatrix<T>) -> Option<(Vec<C<T>>, DMatrix<C<T>>)> {
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].as_f64());
    let evd = fm.eigen().ok()?;
    let (s, u) = (evd.S(), evd.U());
    let back = |z: faer::c64| C::new(T::lit(z.re), T::lit(z.im));
    let values = (0..n).map(|k| back(s[k])).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| back(u[(i, k)]));
    Some((values, vectors))
}

pub fn decompose<T: Real>(op: &EmpiricalKoopman<T>, max_modes: usize) -> Result<SpectralDecomposition<T>> {
    if max_modes == 0 {
        return Err(OvkError::input("max_modes must be at least 1"));
    }
    let a = op.operator();
    let n = a.nrows();
    if a.iter().any(|v| !v.finite()) {
        return Err(OvkError::numerical("operator has non-finite entries", None));
    }
    // Work on the retained range of G; the discarded complement only carries
    // the zero eigenvalue of K_N.
    let reduced = op.reduced_operator();
    let r = reduced.nrows();
    let (diag, z_all) = dense_eigen(&reduced).ok_or_else(|| {
        OvkError::numerical(
            format!("eigensolver did not converge for a {r}×{r} reduced operator"),
            Some(crate::gram::condition_estimate(op.gram().entries())),
        )
    })?;
    let order = spectral_order(&diag);
    let basis = op.range.basis.map(|v| C::new(v, T::zero()));
    let g = op.gram().entries();
    let g_norm = g.norm();
    let n_states = T::from_count(op.centers().len());

    let mut eigenvalues = Vec::new();
    let mut vectors: Vec<DVector<C<T>>> = Vec::new();
    let mut residuals = Vec::new();

    for &p in &order {
        if eigenvalues.len() == max_modes {
            break;
        }
        let lambda = diag[p];
        let mut w = &basis * z_all.column(p);
        let w_norm = w.norm();
        if !(w_norm > T::zero()) || !w_norm.finite() {
            continue;
        }
        w /= C::new(w_norm, T::zero());

        let aw = real_times_complex_vec(a, &w);
        let residual = (aw - &w * lambda).norm();
        if !(residual <= T::lit(EIGEN_RESIDUAL_DISCARD)) {
            log::debug!("decompose: dropping mode at {p}, residual {:.3e}", residual.as_f64());
            continue;
        }

        let phi = real_times_complex_vec(g, &w);
        let phi_norm = phi.norm();
        if phi_norm <= op.pinv_rtol() * g_norm {
            log::debug!("decompose: dropping null-space mode at {p}");
            continue;
        }

        // Phase: largest-modulus coefficient becomes real positive.
        let pivot = w
            .iter()
            .enumerate()
            .fold((0usize, T::zero()), |(bi, bm), (i, z)| {
                if z.modulus() > bm { (i, z.modulus()) } else { (bi, bm) }
            })
            .0;
        let phase = w[pivot].conj() / C::new(w[pivot].modulus(), T::zero());
        let rms = phi_norm / n_states.sqrt();
        let factor = phase / C::new(rms, T::zero());
        eigenvalues.push(lambda);
        residuals.push(residual);
        vectors.push(&w * factor);
    }

    let m = eigenvalues.len();
    let eigenvectors = DMatrix::from_fn(n, m, |i, k| vectors[k][i]);
    // Same evaluation path as `eigenfunction_values`, so forecasts at the
    // sample states agree with the stored values.
    let sample_values = real_times_complex(g, &eigenvectors);
    Ok(SpectralDecomposition {
        kernel: op.kernel().clone(),
        centers: op.centers().clone(),
        eigenvalues,
        eigenvectors,
        residuals,
        sample_values,
    })
}

/// Least squares `Φ C ≈ Y` through a complex SVD; errors on numerical rank loss.
fn complex_least_squares<T: Real>(phi: &DMatrix<C<T>>, y: &DMatrix<T>) -> Result<DMatrix<C<T>>> {
    let svd = phi.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.iter().fold(T::zero(), |a, &v| a.max(v));
    let s_min = s.iter().fold(s_max, |a, &v| a.min(v));
    if s.is_empty() || !(s_max > T::zero()) || s_min <= T::lit(PROJECTION_RANK_TOL) * s_max {
        return Err(OvkError::numerical(
            "eigenfunction sample matrix is numerically rank deficient",
            Some((s_max / s_min).as_f64()),
        ));
    }
    let yc = y.map(|v| C::new(v, T::zero()));
    svd.solve(&yc, T::zero())
        .map_err(|e| OvkError::numerical(format!("least-squares solve failed: {e}"), None))
}

/// Projection coefficients of an observable onto the eigenfunctions.
#[derive(Debug, Clone)]
pub struct Projection<T: Real> {
    /// `modes × (m / d)` complex coefficients.
    pub coeffs: DMatrix<C<T>>,
    /// Relative RMS residual of the projection at the sample states.
    pub relative_residual: T,
    /// Absolute RMS residual at the sample states.
    pub residual_rms: T,
}

/// Projects `g` (sampled at the decomposition's states) onto the span of the
/// first `rank` eigenfunctions.
pub fn project_observable_rank<T, G>(
    dec: &SpectralDecomposition<T>,
    g: G,
    rank: usize,
) -> Result<Projection<T>>
where
    T: Real,
    G: Fn(&[T]) -> DVector<T>,
{
    if rank == 0 || rank > dec.len() {
        return Err(OvkError::input(format!(
            "rank {rank} outside 1..={} retained modes",
            dec.len()
        )));
    }
    let d = dec.kernel.output_dim();
    let y = sample_at_centers(&dec.centers, d, g)?;
    let phi = dec.sample_values.columns(0, rank).into_owned();
    let coeffs = complex_least_squares(&phi, &y)?;
    let recon = &phi * &coeffs;
    let mut err = T::zero();
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let e = y[(i, j)] - recon[(i, j)].re;
            err += e * e;
        }
    }
    let n = T::from_count(dec.centers.len());
    let residual_rms = (err / n).sqrt();
    let y_rms = (y.norm_squared() / n).sqrt();
    let relative_residual = if y_rms > T::zero() { residual_rms / y_rms } else { residual_rms };
    Ok(Projection {
        coeffs,
        relative_residual,
        residual_rms,
    })
}

/// Projection onto every retained eigenfunction.
pub fn project_observable<T, G>(dec: &SpectralDecomposition<T>, g: G) -> Result<Projection<T>>
where
    T: Real,
    G: Fn(&[T]) -> DVector<T>,
{
    project_observable_rank(dec, g, dec.len())
}

/// Rank-r spectral expansion `f^(r)(x, s) = Re Σ_{k≤r} c_k φ_k(x) λ_k^s`.
#[derive(Debug, Clone)]
pub struct ForecastModel<T: Real> {
    decomposition: SpectralDecomposition<T>,
    rank: usize,
    projection: Projection<T>,
    dt: T,
    observable_dim: usize,
}

impl<T: Real> ForecastModel<T> {
    /// Builds a rank-`rank` model; the coefficients are the least-squares
    /// projection onto the leading `rank` eigenfunctions.
    pub fn new<G>(decomposition: SpectralDecomposition<T>, g: G, rank: usize, dt: T) -> Result<Self>
    where
        G: Fn(&[T]) -> DVector<T>,
    {
        let projection = project_observable_rank(&decomposition, &g, rank)?;
        let d = decomposition.kernel.output_dim();
        let observable_dim = projection.coeffs.ncols() * d;
        Ok(Self {
            decomposition,
            rank,
            projection,
            dt,
            observable_dim,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn decomposition(&self) -> &SpectralDecomposition<T> {
        &self.decomposition
    }

    pub fn projection(&self) -> &Projection<T> {
        &self.projection
    }

    pub fn projection_coeffs(&self) -> &DMatrix<C<T>> {
        &self.projection.coeffs
    }

    pub fn observable_dim(&self) -> usize {
        self.observable_dim
    }

    /// Forecasts at many states; returns one vector per state.
    pub fn forecast_many(&self, states: &[SpatioTemporalPoint<T>], steps: usize) -> Result<Vec<DVector<T>>> {
        let d = self.decomposition.kernel.output_dim();
        let phi_all = self.decomposition.eigenfunction_values(states)?;
        let phi = phi_all.columns(0, self.rank);
        let steps = u32::try_from(steps).map_err(|_| OvkError::input("step count too large"))?;
        let powers: Vec<C<T>> = self.decomposition.eigenvalues[..self.rank]
            .iter()
            .map(|l| l.powu(steps))
            .collect();
        let cols = self.projection.coeffs.ncols();
        Ok((0..states.len())
            .map(|s| {
                DVector::from_fn(self.observable_dim, |out, _| {
                    let (c, a) = (out / d, out % d);
                    let mut acc = C::new(T::zero(), T::zero());
                    for k in 0..self.rank {
                        acc += self.projection.coeffs[(k, c)] * phi[(s * d + a, k)] * powers[k];
                    }
                    debug_assert!(c < cols);
                    acc.re
                })
            })
            .collect())
    }

    pub fn forecast(&self, x: &[T], steps: usize) -> Result<DVector<T>> {
        let p = SpatioTemporalPoint { x: x.to_vec(), t: T::zero() };
        Ok(self.forecast_many(std::slice::from_ref(&p), steps)?.remove(0))
    }
}

/// `(steps, Err_r)` with `Err_r = sqrt(vol · mean ‖f − f^(r)‖²)` over the states.
pub fn forecast_error_curve<T, F>(
    fm: &ForecastModel<T>,
    truth: F,
    eval_states: &PointSet<T>,
    horizon: usize,
) -> Result<Vec<(usize, T)>>
where
    T: Real,
    F: Fn(&[T], usize) -> DVector<T> + Sync,
{
    if eval_states.is_empty() {
        return Err(OvkError::input("no evaluation states"));
    }
    let volume = eval_states.domain().volume();
    let scale = if volume > T::zero() { volume } else { T::one() };
    let n = T::from_count(eval_states.len());
    (0..=horizon)
        .map(|s| {
            let pred = fm.forecast_many(eval_states.points(), s)?;
            let sq: Vec<T> = eval_states
                .points()
                .par_iter()
                .zip(pred.par_iter())
                .map(|(p, f)| (truth(&p.x, s) - f).norm_squared())
                .collect();
            let total = sq.iter().fold(T::zero(), |a, &v| a + v);
            Ok((s, (scale * total / n).sqrt()))
        })
        .collect()
}

/// Shared 1-D probe grid spanning both operators' states.
pub fn default_probe_grid<T: Real>(a: &EmpiricalKoopman<T>, b: &EmpiricalKoopman<T>, n: usize) -> Result<Vec<SpatioTemporalPoint<T>>> {
    let ca = a.centers().domain();
    let cb = b.centers().domain();
    if ca.spatial_dim() != 1 || cb.spatial_dim() != 1 {
        return Err(OvkError::unsupported("default probe grid is one-dimensional; pass explicit probes"));
    }
    let bounds = |ps: &PointSet<T>| {
        ps.iter().fold((T::max_value().unwrap(), T::min_value().unwrap()), |(lo, hi), p| {
            (lo.min(p.x[0]), hi.max(p.x[0]))
        })
    };
    let (la, ha) = bounds(a.centers());
    let (lb, hb) = bounds(b.centers());
    let (lo, hi) = (la.max(lb), ha.min(hb));
    if !(lo < hi) {
        return Err(OvkError::input("operators share no state interval"));
    }
    Ok(linspace(lo, hi, n.max(2))
        .into_iter()
        .map(|x| SpatioTemporalPoint { x: vec![x], t: T::zero() })
        .collect())
}

/// Default number of probes for [`operator_gap`].
pub const DEFAULT_GAP_PROBES: usize = 256;

/// Successive-sample proxy for `‖K_A − K_B‖`: the largest relative RMS
/// difference between the two operators' estimates of `g ∘ Φ_Δt`.
pub fn operator_gap_on<T: Real>(
    a: &EmpiricalKoopman<T>,
    b: &EmpiricalKoopman<T>,
    probe_observables: &[&(dyn Fn(&[T]) -> DVector<T> + Sync)],
    probes: &[SpatioTemporalPoint<T>],
) -> Result<T> {
    if a.kernel() != b.kernel() {
        return Err(OvkError::input("operators use different kernels"));
    }
    if probes.is_empty() {
        return Err(OvkError::input("no probe states"));
    }
    let mut worst = T::zero();
    for g in probe_observables {
        let ga = a.apply_to_observable(g, probes)?;
        let gb = b.apply_to_observable(g, probes)?;
        let reference = probes
            .iter()
            .map(|p| g(&p.x).norm_squared())
            .fold(T::zero(), |acc, v| acc + v)
            .sqrt();
        let diff = (ga - gb).norm();
        let rel = if reference > T::zero() { diff / reference } else { diff };
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn operator_gap<T: Real>(
    a: &EmpiricalKoopman<T>,
    b: &EmpiricalKoopman<T>,
    probe_observables: &[&(dyn Fn(&[T]) -> DVector<T> + Sync)],
) -> Result<T> {
    let probes = default_probe_grid(a, b, DEFAULT_GAP_PROBES)?;
    operator_gap_on(a, b, probe_observables, &probes)
}
