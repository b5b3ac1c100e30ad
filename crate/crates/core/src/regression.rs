//! Time-regularized representer model: fit `(G + λI) c = y` and evaluate
//! the fitted field and its exact time derivative.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{OvkError, Result};
use crate::geometry::PointSet;
use crate::gram::{assemble_cross_gram_points, assemble_gram, solve_ridge};
use crate::kernel::{SpatioTemporalPoint, TimeRegularizedKernel};
use crate::scalar::Real;

/// Observed field samples `y_i` at sites `(x_i, t_i)`.
#[derive(Debug, Clone)]
pub struct TrainingSet<T: Real> {
    inputs: PointSet<T>,
    targets: Vec<DVector<T>>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(inputs: PointSet<T>, targets: Vec<DVector<T>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(OvkError::input(format!(
                "{} sites but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = targets.first() {
            let d = first.len();
            if d == 0 {
                return Err(OvkError::input("targets must have at least one component"));
            }
            if let Some(i) = targets.iter().position(|y| y.len() != d) {
                return Err(OvkError::input(format!(
                    "target {i} has {} components, expected {d}",
                    targets[i].len()
                )));
            }
        }
        if let Some(i) = targets.iter().position(|y| y.iter().any(|v| !v.finite())) {
            return Err(OvkError::input(format!("target {i} has non-finite entries")));
        }
        Ok(Self { inputs, targets })
    }

    /// Samples `field` at every site.
    pub fn from_field<F>(inputs: PointSet<T>, field: F) -> Result<Self>
    where
        F: Fn(&SpatioTemporalPoint<T>) -> DVector<T>,
    {
        let targets = inputs.iter().map(&field).collect();
        Self::new(inputs, targets)
    }

    pub fn inputs(&self) -> &PointSet<T> {
        &self.inputs
    }

    pub fn targets(&self) -> &[DVector<T>] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.first().map_or(0, |y| y.len())
    }

    fn stacked_targets(&self) -> DVector<T> {
        let d = self.output_dim();
        DVector::from_fn(self.len() * d, |k, _| self.targets[k / d][k % d])
    }
}

/// Default ridge parameter `1e-8 · N`.
pub fn default_lambda<T: Real>(n: usize) -> T {
    T::lit(1e-8) * T::from_count(n)
}

/// Opt-in schedule `scale · N^(−1/(2r+1))` for a user-supplied source exponent `r`.
pub fn source_condition_lambda<T: Real>(n: usize, r: T, scale: T) -> T {
    let exponent = -T::one() / (T::lit(2.0) * r + T::one());
    scale * T::from_count(n).powf(exponent)
}

/// Fitted kernel expansion `f̂(p) = Σ_i K(p, p_i) c_i`.
#[derive(Debug, Clone)]
pub struct RepresenterModel<T: Real> {
    kernel: TimeRegularizedKernel<T>,
    centers: PointSet<T>,
    coefficients: Vec<DVector<T>>,
    lambda: T,
    rkhs_norm_sq: T,
}

impl<T: Real> RepresenterModel<T> {
    /// Reassembles a model from stored parts; the RKHS norm is recomputed.
    pub fn from_parts(
        kernel: TimeRegularizedKernel<T>,
        centers: PointSet<T>,
        coefficients: Vec<DVector<T>>,
        lambda: T,
    ) -> Result<Self> {
        if centers.len() != coefficients.len() {
            return Err(OvkError::input(format!(
                "{} centers but {} coefficient vectors",
                centers.len(),
                coefficients.len()
            )));
        }
        let d = kernel.output_dim();
        if let Some(i) = coefficients.iter().position(|c| c.len() != d) {
            return Err(OvkError::input(format!(
                "coefficient {i} has length {}, kernel output dimension is {d}",
                coefficients[i].len()
            )));
        }
        let gram = assemble_gram(&kernel, &centers)?;
        let stacked = stack(&coefficients, d);
        let rkhs_norm_sq = stacked.dot(&(gram.entries() * &stacked)).max(T::zero());
        Ok(Self {
            kernel,
            centers,
            coefficients,
            lambda,
            rkhs_norm_sq,
        })
    }

    pub fn kernel(&self) -> &TimeRegularizedKernel<T> {
        &self.kernel
    }

    pub fn centers(&self) -> &PointSet<T> {
        &self.centers
    }

    pub fn coefficients(&self) -> &[DVector<T>] {
        &self.coefficients
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `cᵀ G c`.
    pub fn rkhs_norm_sq(&self) -> T {
        self.rkhs_norm_sq
    }

    pub fn output_dim(&self) -> usize {
        self.kernel.output_dim()
    }

    fn check_point(&self, p: &SpatioTemporalPoint<T>) -> Result<()> {
        let want = self.centers.spatial_dim();
        if p.spatial_dim() != want {
            return Err(OvkError::input(format!(
                "probe has spatial dimension {}, model expects {want}",
                p.spatial_dim()
            )));
        }
        Ok(())
    }

    /// Explicit center sum `Σ_i s(p, p_i) c_i`.
    pub fn predict(&self, p: &SpatioTemporalPoint<T>) -> Result<DVector<T>> {
        self.check_point(p)?;
        let mut out = DVector::zeros(self.output_dim());
        for (center, c) in self.centers.iter().zip(&self.coefficients) {
            let s = self.kernel.block_scalar_unchecked(p, center);
            out.axpy(s, c, T::one());
        }
        Ok(out)
    }

    /// Exact `∂/∂t` of [`Self::predict`].
    pub fn predict_time_derivative(&self, p: &SpatioTemporalPoint<T>) -> Result<DVector<T>> {
        self.check_point(p)?;
        if !self.kernel.temporal().is_gaussian() {
            return Err(OvkError::unsupported(format!(
                "time derivative needs a differentiable temporal kernel, got {}",
                self.kernel.temporal().family()
            )));
        }
        let mut out = DVector::zeros(self.output_dim());
        for (center, c) in self.centers.iter().zip(&self.coefficients) {
            let s = self.kernel.block_scalar_dt(p, center)?;
            out.axpy(s, c, T::one());
        }
        Ok(out)
    }

    /// Batch prediction through the cross-Gram product `K(P, X) c`; an
    /// independent route to the same values as [`Self::predict`].
    pub fn predict_batch(&self, probes: &[SpatioTemporalPoint<T>]) -> Result<Vec<DVector<T>>> {
        for p in probes {
            self.check_point(p)?;
        }
        let d = self.output_dim();
        let cross = assemble_cross_gram_points(&self.kernel, probes, self.centers.points())?;
        let flat = cross * stack(&self.coefficients, d);
        Ok((0..probes.len())
            .map(|i| flat.rows(i * d, d).into_owned())
            .collect())
    }
}

fn stack<T: Real>(vs: &[DVector<T>], d: usize) -> DVector<T> {
    DVector::from_fn(vs.len() * d, |k, _| vs[k / d][k % d])
}

/// Fits the representer coefficients of `(G + λI) c = y`.
pub fn fit<T: Real>(
    kernel: &TimeRegularizedKernel<T>,
    data: &TrainingSet<T>,
    lambda: T,
) -> Result<RepresenterModel<T>> {
    if data.is_empty() {
        return Err(OvkError::input("training set is empty"));
    }
    let d = kernel.output_dim();
    if data.output_dim() != d {
        return Err(OvkError::input(format!(
            "targets have {} components, kernel output dimension is {d}",
            data.output_dim()
        )));
    }
    let gram = assemble_gram(kernel, data.inputs())?;
    let y = data.stacked_targets();
    let c = solve_ridge(&gram, &y, lambda)?;
    let rkhs_norm_sq = c.dot(&(gram.entries() * &c)).max(T::zero());
    let coefficients = (0..data.len())
        .map(|i| c.rows(i * d, d).into_owned())
        .collect();
    Ok(RepresenterModel {
        kernel: kernel.clone(),
        centers: data.inputs().clone(),
        coefficients,
        lambda,
        rkhs_norm_sq,
    })
}

/// Discrete L² errors of the field and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms<T> {
    pub l2_field: T,
    pub l2_dt: T,
}

/// `sqrt(vol · mean ‖F − f̂‖²)` and the same for `∂t`, over `eval_grid`.
///
/// With a unit-volume domain this is the RMS error over the grid.
pub fn empirical_errors<T, F, G>(
    model: &RepresenterModel<T>,
    truth: F,
    truth_dt: G,
    eval_grid: &PointSet<T>,
) -> Result<ErrorNorms<T>>
where
    T: Real,
    F: Fn(&SpatioTemporalPoint<T>) -> DVector<T> + Sync,
    G: Fn(&SpatioTemporalPoint<T>) -> DVector<T> + Sync,
{
    if eval_grid.is_empty() {
        return Err(OvkError::input("evaluation grid is empty"));
    }
    let sq: Vec<(T, T)> = eval_grid
        .points()
        .par_iter()
        .map(|p| -> Result<(T, T)> {
            let e = truth(p) - model.predict(p)?;
            let e_dt = truth_dt(p) - model.predict_time_derivative(p)?;
            Ok((e.norm_squared(), e_dt.norm_squared()))
        })
        .collect::<Result<_>>()?;
    let (s, s_dt) = sq
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), &(u, v)| (a + u, b + v));
    let volume = eval_grid.domain().volume();
    let scale = if volume > T::zero() { volume } else { T::one() };
    let n = T::from_count(eval_grid.len());
    Ok(ErrorNorms {
        l2_field: (scale * s / n).sqrt(),
        l2_dt: (scale * s_dt / n).sqrt(),
    })
}

/// Dense `(d·N) × (d·N)` Gram of a fitted model, for diagnostics.
pub fn model_gram<T: Real>(model: &RepresenterModel<T>) -> Result<DMatrix<T>> {
    Ok(assemble_gram(model.kernel(), model.centers())?.entries().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::BuiltinObservable;
    use crate::geometry::{grid_points, random_points, BoxDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, t: f64) -> SpatioTemporalPoint<f64> {
        SpatioTemporalPoint::new(vec![x], t).unwrap()
    }

    fn single(y: Vec<f64>) -> TrainingSet<f64> {
        let ps = PointSet::from_points_bounding(vec![pt(0.3, 0.4)], true).unwrap();
        TrainingSet::new(ps, vec![DVector::from_vec(y)]).unwrap()
    }

    fn space_time() -> BoxDomain<f64> {
        BoxDomain::space_time(vec![(0.0, 1.0)], (0.0, 1.0)).unwrap()
    }

    #[test]
    fn single_site_fits() {
        let k = TimeRegularizedKernel::gaussian(1.0, 1.0, 0.0, 2).unwrap();
        let m = fit(&k, &single(vec![1.0, -2.0]), 0.0).unwrap();
        assert_eq!(m.coefficients()[0], DVector::from_vec(vec![1.0, -2.0]));
        assert_eq!(m.predict(&pt(0.3, 0.4)).unwrap(), DVector::from_vec(vec![1.0, -2.0]));
        let m1 = fit(&k, &single(vec![1.0, -2.0]), 1.0).unwrap();
        assert!((&m1.coefficients()[0] - DVector::from_vec(vec![0.5, -1.0])).norm() < 1e-15);
        let z = fit(&k, &single(vec![0.0, 0.0]), 0.0).unwrap();
        assert_eq!(z.rkhs_norm_sq(), 0.0);
        assert_eq!(z.coefficients()[0].norm(), 0.0);
    }

    #[test]
    fn training_set_validation() {
        let ps = PointSet::from_points_bounding(vec![pt(0.3, 0.4), pt(0.5, 0.4)], true).unwrap();
        assert!(TrainingSet::new(ps.clone(), vec![DVector::from_vec(vec![1.0])]).is_err());
        assert!(TrainingSet::new(
            ps.clone(),
            vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![f64::INFINITY])]
        )
        .is_err());
        assert!(TrainingSet::new(
            ps,
            vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.0, 2.0])]
        )
        .is_err());
        let k = TimeRegularizedKernel::gaussian(1.0, 1.0, 0.0, 3).unwrap();
        assert!(fit(&k, &single(vec![1.0]), 0.1).is_err());
    }

    #[test]
    fn predict_far_away_decays() {
        let k = TimeRegularizedKernel::gaussian(0.1, 0.1, 0.0, 1).unwrap();
        let m = fit(&k, &single(vec![3.0]), 0.0).unwrap();
        let far = m.predict(&pt(50.0, 0.4)).unwrap();
        assert!(far.norm() <= 1e-10 * 3.0);
        assert!(m.predict(&SpatioTemporalPoint::new(vec![0.0, 0.0], 0.0).unwrap()).is_err());
    }

    #[test]
    fn time_derivative_single_center_closed_form() {
        let k = TimeRegularizedKernel::gaussian(1.0, 1.0, 0.0, 1).unwrap();
        let m = fit(&k, &single(vec![2.0]), 0.0).unwrap();
        let probe = pt(0.3, 0.9);
        let got = m.predict_time_derivative(&probe).unwrap()[0];
        let want = (-2.0 * 0.5) * (-0.25f64).exp() * 1.0 * 2.0;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn time_derivative_requires_gaussian() {
        use crate::kernel::{KernelFamily, ScalarKernel};
        let k = TimeRegularizedKernel::new(
            ScalarKernel::gaussian(1.0).unwrap(),
            ScalarKernel::new(KernelFamily::Matern52, 1.0).unwrap(),
            0.0,
            1,
        )
        .unwrap();
        let m = fit(&k, &single(vec![1.0]), 0.0).unwrap();
        assert!(matches!(
            m.predict_time_derivative(&pt(0.1, 0.1)),
            Err(OvkError::Unsupported(_))
        ));
    }

    #[test]
    fn time_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..20 {
            let alpha = if case % 2 == 0 { 0.0 } else { rng.gen_range(0.01..1.0) };
            let k = TimeRegularizedKernel::gaussian(
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                alpha,
                2,
            )
            .unwrap();
            let sites = random_points(&space_time(), 15, case).unwrap();
            let data = TrainingSet::from_field(sites, |p| {
                BuiltinObservable::Exp1Field.eval_point(p).unwrap()
            })
            .unwrap();
            let m = fit(&k, &data, 1e-6).unwrap();
            for _ in 0..5 {
                let p = pt(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                let h = 1e-4;
                let fd = (m.predict(&pt(p.x[0], p.t + h)).unwrap()
                    - m.predict(&pt(p.x[0], p.t - h)).unwrap())
                    / (2.0 * h);
                let exact = m.predict_time_derivative(&p).unwrap();
                let scale = exact.norm().max(1e-3 * m.coefficients().iter().map(|c| c.norm()).fold(0.0, f64::max));
                assert!((fd - &exact).norm() <= 1e-5 * scale, "case {case}");
            }
        }
    }

    #[test]
    fn batch_and_center_sum_agree() {
        let k = TimeRegularizedKernel::gaussian(0.3, 0.4, 0.2, 2).unwrap();
        let sites = random_points(&space_time(), 30, 8).unwrap();
        let data =
            TrainingSet::from_field(sites, |p| BuiltinObservable::Exp1Field.eval_point(p).unwrap()).unwrap();
        let m = fit(&k, &data, 1e-8).unwrap();
        let probes = random_points(&space_time(), 25, 99).unwrap();
        let batch = m.predict_batch(probes.points()).unwrap();
        for (p, b) in probes.iter().zip(&batch) {
            let a = m.predict(p).unwrap();
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn ridge_shrinkage_is_monotone() {
        let k = TimeRegularizedKernel::gaussian(0.3, 0.3, 0.1, 2).unwrap();
        let sites = grid_points(&space_time(), &[6, 6]).unwrap();
        let data =
            TrainingSet::from_field(sites, |p| BuiltinObservable::Exp1Field.eval_point(p).unwrap()).unwrap();
        let mut prev = f64::INFINITY;
        for e in -10..=-1 {
            let m = fit(&k, &data, 10f64.powi(e)).unwrap();
            assert!(m.rkhs_norm_sq() <= prev * (1.0 + 1e-9), "lambda 1e{e}");
            prev = m.rkhs_norm_sq();
        }
    }

    #[test]
    fn empirical_error_definitions() {
        let k = TimeRegularizedKernel::gaussian(0.3, 0.3, 0.0, 2).unwrap();
        let sites = grid_points(&space_time(), &[5, 5]).unwrap();
        let data =
            TrainingSet::from_field(sites, |p| BuiltinObservable::Exp1Field.eval_point(p).unwrap()).unwrap();
        let m = fit(&k, &data, 1e-6).unwrap();
        let grid = grid_points(&space_time(), &[8, 8]).unwrap();
        let own = empirical_errors(
            &m,
            |p| m.predict(p).unwrap(),
            |p| m.predict_time_derivative(p).unwrap(),
            &grid,
        )
        .unwrap();
        assert_eq!(own.l2_field, 0.0);
        assert_eq!(own.l2_dt, 0.0);
        let zero = empirical_errors(&m, |_| DVector::zeros(2), |_| DVector::zeros(2), &grid).unwrap();
        let rms = (grid.iter().map(|p| m.predict(p).unwrap().norm_squared()).sum::<f64>() / 64.0).sqrt();
        assert!((zero.l2_field - rms).abs() < 1e-14);
    }

    #[test]
    fn lambda_schedules() {
        assert_eq!(default_lambda::<f64>(100), 1e-6);
        let l = source_condition_lambda(1000usize, 1.0f64, 2.0);
        assert!((l - 2.0 * 1000f64.powf(-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn f32_fit_tracks_f64() {
        fn run<T: Real>() -> T {
            let k = TimeRegularizedKernel::<T>::gaussian(T::lit(0.5), T::lit(0.5), T::lit(0.1), 1).unwrap();
            let d = BoxDomain::<T>::space_time(vec![(T::zero(), T::one())], (T::zero(), T::one())).unwrap();
            let sites = grid_points(&d, &[4, 4]).unwrap();
            let data = TrainingSet::from_field(sites, |p| DVector::from_vec(vec![p.x[0] + p.t])).unwrap();
            let m = fit(&k, &data, T::lit(1e-3)).unwrap();
            let probe = SpatioTemporalPoint::new(vec![T::lit(0.5)], T::lit(0.5)).unwrap();
            m.predict(&probe).unwrap()[0]
        }
        let single = run::<f32>() as f64;
        let double = run::<f64>();
        assert!((single - double).abs() < 1e-3, "{single} vs {double}");
    }
}
