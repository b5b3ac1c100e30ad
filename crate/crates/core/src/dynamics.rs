//! Flow maps, snapshot pair generation, and the benchmark observables.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{OvkError, Result};
use crate::geometry::{linspace, BoxDomain, PointSet};
use crate::kernel::SpatioTemporalPoint;
use crate::scalar::Real;

/// Default number of RK4 substeps per requested flow interval.
pub const DEFAULT_SUBSTEPS: usize = 50;

/// Right-hand side `v(x, t)` of a non-autonomous ODE.
pub type VectorField<T> = Arc<dyn Fn(&[T], T) -> Vec<T> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinSystem<T> {
    Identity,
    /// `ẋ = rate · x`.
    LinearContraction { rate: T },
    /// `ẋ = sin(2πx)` componentwise.
    Sine2Pi,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind<T> {
    /// Closed-form solution.
    Analytic,
    /// Classical RK4 with a fixed substep; `None` means `dt / 50`.
    Integrated { substep: Option<T> },
}

/// `Φ_t` for one of the builtin systems or a user-supplied vector field.
#[derive(Clone)]
pub struct FlowMap<T: Real> {
    system: BuiltinSystem<T>,
    kind: FlowKind<T>,
    dim: usize,
    field: Option<VectorField<T>>,
}

impl<T: Real> fmt::Debug for FlowMap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowMap")
            .field("system", &self.system)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .finish()
    }
}

impl<T: Real> FlowMap<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            system: BuiltinSystem::Identity,
            kind: FlowKind::Analytic,
            dim,
            field: None,
        }
    }

    /// Closed-form `x ↦ x · e^(rate·dt)`.
    pub fn linear_contraction(rate: T, dim: usize) -> Self {
        Self {
            system: BuiltinSystem::LinearContraction { rate },
            kind: FlowKind::Analytic,
            dim,
            field: None,
        }
    }

    /// RK4-integrated `ẋ = sin(2πx)` in one dimension.
    pub fn sine_2pi() -> Self {
        Self {
            system: BuiltinSystem::Sine2Pi,
            kind: FlowKind::Integrated { substep: None },
            dim: 1,
            field: None,
        }
    }

    pub fn custom(dim: usize, field: VectorField<T>, substep: Option<T>) -> Self {
        Self {
            system: BuiltinSystem::Custom,
            kind: FlowKind::Integrated { substep },
            dim,
            field: Some(field),
        }
    }

    /// Switches to RK4 integration of the system's vector field.
    pub fn integrated(mut self, substep: Option<T>) -> Self {
        self.kind = FlowKind::Integrated { substep };
        self
    }

    pub fn system(&self) -> BuiltinSystem<T> {
        self.system
    }

    pub fn kind(&self) -> FlowKind<T> {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates the vector field `v(x, t)`.
    pub fn vector_field(&self, x: &[T], t: T) -> Vec<T> {
        match self.system {
            BuiltinSystem::Identity => vec![T::zero(); x.len()],
            BuiltinSystem::LinearContraction { rate } => x.iter().map(|&v| rate * v).collect(),
            BuiltinSystem::Sine2Pi => x.iter().map(|&v| (T::two_pi() * v).sin()).collect(),
            BuiltinSystem::Custom => (self.field.as_ref().expect("custom flow carries a field"))(x, t),
        }
    }

    /// `Φ` from time `t0` over an interval `dt ≥ 0`.
    pub fn flow(&self, x: &[T], t0: T, dt: T) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(OvkError::input(format!(
                "state has dimension {}, flow expects {}",
                x.len(),
                self.dim
            )));
        }
        if !(dt.finite() && dt >= T::zero()) {
            return Err(OvkError::input("flow interval must be finite and nonnegative"));
        }
        let out = match self.kind {
            FlowKind::Analytic => match self.system {
                BuiltinSystem::Identity => x.to_vec(),
                BuiltinSystem::LinearContraction { rate } => {
                    let g = (rate * dt).exp();
                    x.iter().map(|&v| v * g).collect()
                }
                other => {
                    return Err(OvkError::unsupported(format!(
                        "no closed form for {other:?}; use an integrated flow"
                    )))
                }
            },
            FlowKind::Integrated { substep } => self.rk4(x, t0, dt, substep)?,
        };
        Ok(out)
    }

    fn rk4(&self, x: &[T], t0: T, dt: T, substep: Option<T>) -> Result<Vec<T>> {
        if dt == T::zero() {
            return Ok(x.to_vec());
        }
        let steps = match substep {
            Some(h) if h > T::zero() => (dt / h).ceil().to_usize().unwrap_or(1).max(1),
            Some(_) => return Err(OvkError::input("integrator substep must be positive")),
            None => DEFAULT_SUBSTEPS,
        };
        let h = dt / T::from_count(steps);
        let half = h / T::lit(2.0);
        let sixth = h / T::lit(6.0);
        let mut y = x.to_vec();
        let mut t = t0;
        let shifted = |y: &[T], k: &[T], s: T| -> Vec<T> {
            y.iter().zip(k).map(|(&a, &b)| a + s * b).collect()
        };
        for _ in 0..steps {
            let k1 = self.vector_field(&y, t);
            let k2 = self.vector_field(&shifted(&y, &k1, half), t + half);
            let k3 = self.vector_field(&shifted(&y, &k2, half), t + half);
            let k4 = self.vector_field(&shifted(&y, &k3, h), t + h);
            for i in 0..y.len() {
                y[i] += sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
            }
            t += h;
            if y.iter().any(|v| !v.finite()) {
                return Err(OvkError::numerical(
                    format!("state became non-finite at t = {}", t.as_f64()),
                    None,
                ));
            }
        }
        Ok(y)
    }

    /// `Φ_{steps·dt}` applied as `steps` successive flows of length `dt`.
    pub fn flow_steps(&self, x: &[T], dt: T, steps: usize) -> Result<Vec<T>> {
        let mut y = x.to_vec();
        for s in 0..steps {
            y = self.flow(&y, dt * T::from_count(s), dt)?;
        }
        Ok(y)
    }
}

/// Snapshot pairs `{x_i, Φ_Δt(x_i)}`.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset<T: Real> {
    pub x_now: PointSet<T>,
    pub x_next: PointSet<T>,
    pub dt: T,
    pub observable_dim: usize,
}

impl<T: Real> TrajectoryDataset<T> {
    pub fn new(x_now: PointSet<T>, x_next: PointSet<T>, dt: T, observable_dim: usize) -> Result<Self> {
        if x_now.len() != x_next.len() {
            return Err(OvkError::input(format!(
                "{} current states but {} successors",
                x_now.len(),
                x_next.len()
            )));
        }
        if !(dt.finite() && dt > T::zero()) {
            return Err(OvkError::input("dt must be positive"));
        }
        Ok(Self {
            x_now,
            x_next,
            dt,
            observable_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.x_now.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_now.is_empty()
    }
}

/// Flows every initial state forward by `dt`.
pub fn generate_pairs<T: Real>(
    flow: &FlowMap<T>,
    initial: &PointSet<T>,
    dt: T,
) -> Result<TrajectoryDataset<T>> {
    if initial.is_empty() {
        return Err(OvkError::input("no initial states"));
    }
    let next: Vec<SpatioTemporalPoint<T>> = initial
        .points()
        .par_iter()
        .map(|p| {
            flow.flow(&p.x, T::zero(), dt)
                .map(|x| SpatioTemporalPoint { x, t: p.t })
        })
        .collect::<Result<_>>()?;
    let domain = enclosing_domain(initial.domain(), &next);
    let x_next = PointSet::from_points(next, domain)?;
    TrajectoryDataset::new(initial.clone(), x_next, dt, flow.dim())
}

fn enclosing_domain<T: Real>(base: &BoxDomain<T>, pts: &[SpatioTemporalPoint<T>]) -> BoxDomain<T> {
    let mut spatial = base.spatial.clone();
    for p in pts {
        for (axis, &v) in spatial.iter_mut().zip(&p.x) {
            axis.0 = axis.0.min(v);
            axis.1 = axis.1.max(v);
        }
    }
    BoxDomain {
        spatial,
        time: base.time,
    }
}

/// Grid of `n` states on `[lo + offset, hi − offset]`.
pub fn interior_grid<T: Real>(lo: T, hi: T, n: usize, offset: T) -> Result<PointSet<T>> {
    if n == 0 {
        return Err(OvkError::input("state grid needs at least one point"));
    }
    let (a, b) = (lo + offset, hi - offset);
    if !(a < b) {
        return Err(OvkError::input("offset leaves an empty interval"));
    }
    let xs = if n == 1 {
        vec![(a + b) / T::lit(2.0)]
    } else {
        linspace(a, b, n)
    };
    let pts = xs
        .into_iter()
        .map(|x| SpatioTemporalPoint { x: vec![x], t: T::zero() })
        .collect();
    PointSet::from_points(pts, BoxDomain::space(vec![(lo, hi)])?)
}

/// The closed-form fields and observables of the benchmark experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinObservable {
    /// `F(x,t) = (sin πx cos πt, cos πx sin πt)`.
    Exp1Field,
    /// `f(x) = (sin 2πx, cos 2πx)`.
    Exp2Trig,
    /// `g(x) = x`.
    Coordinate,
}

impl FromStr for BuiltinObservable {
    type Err = OvkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp1-field" | "exp1" => Ok(Self::Exp1Field),
            "exp2-trig" | "exp2" | "trig" => Ok(Self::Exp2Trig),
            "coordinate" | "identity" | "x" => Ok(Self::Coordinate),
            other => Err(OvkError::input(format!("unknown observable `{other}`"))),
        }
    }
}

impl fmt::Display for BuiltinObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exp1Field => "exp1-field",
            Self::Exp2Trig => "exp2-trig",
            Self::Coordinate => "coordinate",
        })
    }
}

impl BuiltinObservable {
    pub fn output_dim(self, state_dim: usize) -> usize {
        match self {
            Self::Exp1Field | Self::Exp2Trig => 2,
            Self::Coordinate => state_dim,
        }
    }

    fn require_scalar_state<T>(self, x: &[T]) -> Result<()> {
        match self {
            Self::Exp1Field | Self::Exp2Trig if x.len() != 1 => Err(OvkError::input(format!(
                "{self} is defined on a one-dimensional state, got {}",
                x.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Value at a space-time point.
    pub fn eval_point<T: Real>(self, p: &SpatioTemporalPoint<T>) -> Result<DVector<T>> {
        self.require_scalar_state(&p.x)?;
        let pi = T::pi();
        Ok(match self {
            Self::Exp1Field => {
                let (x, t) = (p.x[0], p.t);
                DVector::from_vec(vec![(pi * x).sin() * (pi * t).cos(), (pi * x).cos() * (pi * t).sin()])
            }
            _ => self.eval_state(&p.x)?,
        })
    }

    /// Value of a time-independent observable; the space-time field is
    /// evaluated at `t = 0`.
    pub fn eval_state<T: Real>(self, x: &[T]) -> Result<DVector<T>> {
        self.require_scalar_state(x)?;
        Ok(match self {
            Self::Exp1Field => {
                DVector::from_vec(vec![(T::pi() * x[0]).sin(), T::zero()])
            }
            Self::Exp2Trig => {
                let a = T::two_pi() * x[0];
                DVector::from_vec(vec![a.sin(), a.cos()])
            }
            Self::Coordinate => DVector::from_column_slice(x),
        })
    }

    /// Analytic `∂t` at a space-time point (zero for state observables).
    pub fn eval_dt_point<T: Real>(self, p: &SpatioTemporalPoint<T>) -> Result<DVector<T>> {
        self.require_scalar_state(&p.x)?;
        let pi = T::pi();
        Ok(match self {
            Self::Exp1Field => {
                let (x, t) = (p.x[0], p.t);
                DVector::from_vec(vec![
                    -pi * (pi * x).sin() * (pi * t).sin(),
                    pi * (pi * x).cos() * (pi * t).cos(),
                ])
            }
            _ => DVector::zeros(self.output_dim(p.x.len())),
        })
    }
}

/// Exact `e^(rate·dt)`, the first Koopman eigenvalue of `ẋ = rate·x`.
pub fn linear_eigenvalue(rate: f64, dt: f64, k: u32) -> f64 {
    (rate * dt * f64::from(k)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid_points;
    use std::f64::consts::PI;

    // Oracle: tan(πx(t)) = tan(πx₀) e^{2πt}, branch chosen by the half-cell of x₀.
    fn sine_exact(x0: f64, t: f64) -> f64 {
        let n = x0.floor();
        let f = x0 - n;
        if f == 0.0 || f == 0.5 {
            return x0;
        }
        let a = ((PI * f).tan() * (2.0 * PI * t).exp()).atan() / PI;
        if f < 0.5 {
            n + a
        } else {
            n + 1.0 + a
        }
    }

    #[test]
    fn identity_and_linear_examples() {
        let id = FlowMap::<f64>::identity(2);
        assert_eq!(id.flow(&[0.3, -1.0], 0.0, 5.0).unwrap(), vec![0.3, -1.0]);
        let lin = FlowMap::<f64>::linear_contraction(-1.0, 1);
        let y = lin.flow(&[1.0], 0.0, 0.1).unwrap()[0];
        assert!((y - 0.904_837_418_035_959_6).abs() < 1e-15);
    }

    #[test]
    fn sine_fixed_points_preserved() {
        let f = FlowMap::<f64>::sine_2pi();
        for &x in &[0.0, 0.5, 1.0] {
            for &dt in &[0.01, 0.1, 0.5, 1.0] {
                let y = f.flow(&[x], 0.0, dt).unwrap()[0];
                assert!((y - x).abs() <= 1e-12, "x={x} dt={dt} y={y}");
            }
        }
    }

    #[test]
    fn sine_matches_closed_form() {
        let f = FlowMap::<f64>::sine_2pi();
        for &x in &[0.05, 0.2, 0.49, 0.51, 0.8, 0.97] {
            let y = f.flow(&[x], 0.0, 0.1).unwrap()[0];
            assert!((y - sine_exact(x, 0.1)).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let exact = (-1.0f64).exp();
        let err = |sub: f64| {
            let f = FlowMap::linear_contraction(-1.0, 1).integrated(Some(sub));
            (f.flow(&[1.0], 0.0, 1.0).unwrap()[0] - exact).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((10.0..=24.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn semigroup_property() {
        let flows: Vec<FlowMap<f64>> = vec![
            FlowMap::identity(1),
            FlowMap::linear_contraction(-1.0, 1).integrated(None),
            FlowMap::sine_2pi(),
        ];
        for f in &flows {
            for &x in &[0.1, 0.37, 0.8] {
                let two = f.flow(&[x], 0.0, 0.2).unwrap()[0];
                let mid = f.flow(&[x], 0.0, 0.1).unwrap();
                let composed = f.flow(&mid, 0.1, 0.1).unwrap()[0];
                assert!((two - composed).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn flow_input_errors() {
        let f = FlowMap::<f64>::sine_2pi();
        assert!(f.flow(&[0.1], 0.0, -1.0).is_err());
        assert!(f.flow(&[0.1, 0.2], 0.0, 1.0).is_err());
        assert!(matches!(
            FlowMap::<f64>::sine_2pi().flow(&[0.2], 0.0, 0.0),
            Ok(ref v) if v == &vec![0.2]
        ));
        let blowup = FlowMap::custom(1, Arc::new(|x: &[f64], _| vec![x[0] * x[0]]), Some(0.01));
        assert!(matches!(blowup.flow(&[10.0], 0.0, 5.0), Err(OvkError::Numerical { .. })));
    }

    #[test]
    fn pairs_examples() {
        let states = interior_grid(0.0, 1.0, 7, 1e-3).unwrap();
        let id = generate_pairs(&FlowMap::identity(1), &states, 0.1).unwrap();
        assert_eq!(id.x_now.points(), id.x_next.points());

        let two = PointSet::from_points_bounding(
            vec![
                SpatioTemporalPoint::state(vec![1.0]).unwrap(),
                SpatioTemporalPoint::state(vec![0.5]).unwrap(),
            ],
            false,
        )
        .unwrap();
        let lin = generate_pairs(&FlowMap::<f64>::linear_contraction(-1.0, 1), &two, 0.1).unwrap();
        assert!((lin.x_next.points()[0].x[0] - 0.904_837).abs() < 1e-6);
        assert!((lin.x_next.points()[1].x[0] - 0.452_419).abs() < 1e-6);

        let dt = 1e-3;
        let sine = generate_pairs(&FlowMap::sine_2pi(), &states, dt).unwrap();
        for (a, b) in sine.x_now.iter().zip(sine.x_next.iter()) {
            let euler = a.x[0] + dt * (2.0 * PI * a.x[0]).sin();
            assert!((b.x[0] - euler).abs() <= 4.0 * PI * PI * dt * dt);
        }
    }

    #[test]
    fn observables() {
        let z = BuiltinObservable::Exp2Trig.eval_state(&[0.0f64]).unwrap();
        assert_eq!(z, DVector::from_vec(vec![0.0, 1.0]));
        let mid = SpatioTemporalPoint::new(vec![0.5f64], 0.5).unwrap();
        let f = BuiltinObservable::Exp1Field.eval_point(&mid).unwrap();
        assert!(f.norm() < 1e-15);
        let p = SpatioTemporalPoint::new(vec![0.5f64], 0.0).unwrap();
        let d = BuiltinObservable::Exp1Field.eval_dt_point(&p).unwrap();
        assert!(d.norm() < 1e-15);
        assert!("nope".parse::<BuiltinObservable>().is_err());
        assert_eq!("exp2-trig".parse::<BuiltinObservable>().unwrap(), BuiltinObservable::Exp2Trig);
        assert!(BuiltinObservable::Exp2Trig.eval_state(&[0.1f64, 0.2]).is_err());
    }

    #[test]
    fn exp1_time_derivative_matches_fd() {
        let grid = grid_points(
            &BoxDomain::space_time(vec![(0.0, 1.0)], (0.0, 1.0)).unwrap(),
            &[5, 5],
        )
        .unwrap();
        for p in grid.iter() {
            let h = 1e-5;
            let up = SpatioTemporalPoint::new(p.x.clone(), p.t + h).unwrap();
            let dn = SpatioTemporalPoint::new(p.x.clone(), p.t - h).unwrap();
            let fd = (BuiltinObservable::Exp1Field.eval_point(&up).unwrap()
                - BuiltinObservable::Exp1Field.eval_point(&dn).unwrap())
                / (2.0 * h);
            let exact = BuiltinObservable::Exp1Field.eval_dt_point(p).unwrap();
            assert!((fd - exact).norm() < 1e-8);
        }
    }
}
