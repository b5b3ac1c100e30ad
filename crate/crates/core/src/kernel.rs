//! Scalar kernels, their temporal derivative kernels, and the separable
//! operator-valued kernel `k_x · (k_t + α ∂t∂t' k_t) · I_d`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{OvkError, Result};
use crate::scalar::Real;

/// A point `(x, t)` of the space-time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalPoint<T> {
    pub x: Vec<T>,
    pub t: T,
}

impl<T: Real> SpatioTemporalPoint<T> {
    pub fn new(x: Vec<T>, t: T) -> Result<Self> {
        if x.is_empty() {
            return Err(OvkError::input("spatial coordinate must have at least one component"));
        }
        if !t.finite() || x.iter().any(|v| !v.finite()) {
            return Err(OvkError::input("point coordinates must be finite"));
        }
        Ok(Self { x, t })
    }

    /// A purely spatial point (t = 0), used for autonomous state spaces.
    pub fn state(x: Vec<T>) -> Result<Self> {
        Self::new(x, T::zero())
    }

    pub fn spatial_dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Gaussian,
    /// Matérn with smoothness ν = 3/2.
    Matern32,
    /// Matérn with smoothness ν = 5/2.
    Matern52,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = OvkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "matern32" | "matern3/2" | "matern-3/2" => Ok(KernelFamily::Matern32),
            "matern52" | "matern5/2" | "matern-5/2" => Ok(KernelFamily::Matern52),
            other => Err(OvkError::input(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Stationary scalar kernel with a length-scale `bandwidth`.
///
/// The Gaussian member is `exp(-‖a-b‖² / σ²)` (no factor two in the
/// denominator) and is unit on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarKernel<T> {
    family: KernelFamily,
    bandwidth: T,
}

impl<T: Real> ScalarKernel<T> {
    pub fn new(family: KernelFamily, bandwidth: T) -> Result<Self> {
        if !(bandwidth.finite() && bandwidth > T::zero()) {
            return Err(OvkError::input(format!(
                "kernel bandwidth must be positive and finite, got {}",
                bandwidth.as_f64()
            )));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn gaussian(bandwidth: T) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn is_gaussian(&self) -> bool {
        self.family == KernelFamily::Gaussian
    }

    pub fn eval(&self, a: &[T], b: &[T]) -> Result<T> {
        if a.len() != b.len() {
            return Err(OvkError::input(format!(
                "kernel arguments differ in dimension ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_sq_dist(sq_dist(a, b)))
    }

    /// Kernel value as a function of the squared distance.
    #[inline]
    pub fn eval_sq_dist(&self, r2: T) -> T {
        let s = self.bandwidth;
        match self.family {
            KernelFamily::Gaussian => (-r2 / (s * s)).exp(),
            KernelFamily::Matern32 => {
                let z = T::lit(3.0).sqrt() * r2.sqrt() / s;
                (T::one() + z) * (-z).exp()
            }
            KernelFamily::Matern52 => {
                let z = T::lit(5.0).sqrt() * r2.sqrt() / s;
                (T::one() + z + z * z / T::lit(3.0)) * (-z).exp()
            }
        }
    }

    /// One-dimensional evaluation `k(t, t')`.
    #[inline]
    pub fn eval_1d(&self, t: T, t_prime: T) -> T {
        let u = t - t_prime;
        self.eval_sq_dist(u * u)
    }

    /// `∂t k(t, t')`, derivative in the first argument.
    pub fn eval_dt(&self, t: T, t_prime: T) -> Result<T> {
        self.require_gaussian("first temporal derivative")?;
        let s2 = self.bandwidth * self.bandwidth;
        let u = t - t_prime;
        Ok(-T::lit(2.0) * u / s2 * (-u * u / s2).exp())
    }

    /// Mixed derivative `∂t ∂t' k(t, t') = (2/σ² − 4u²/σ⁴) exp(−u²/σ²)`, u = t − t'.
    ///
    /// Positive on the diagonal, as any derivative kernel must be.
    pub fn eval_dt_dt(&self, t: T, t_prime: T) -> Result<T> {
        self.require_gaussian("mixed temporal derivative kernel")?;
        Ok(self.gaussian_dt_dt(t - t_prime))
    }

    /// `∂t (∂t ∂t' k)(t, t') = (8u³/σ⁶ − 12u/σ⁴) exp(−u²/σ²)`.
    pub fn eval_dt_dt_dt(&self, t: T, t_prime: T) -> Result<T> {
        self.require_gaussian("third temporal derivative")?;
        let s2 = self.bandwidth * self.bandwidth;
        let u = t - t_prime;
        let poly = T::lit(8.0) * u * u * u / (s2 * s2 * s2) - T::lit(12.0) * u / (s2 * s2);
        Ok(poly * (-u * u / s2).exp())
    }

    #[inline]
    fn gaussian_dt_dt(&self, u: T) -> T {
        let s2 = self.bandwidth * self.bandwidth;
        (T::lit(2.0) / s2 - T::lit(4.0) * u * u / (s2 * s2)) * (-u * u / s2).exp()
    }

    fn require_gaussian(&self, what: &str) -> Result<()> {
        if self.is_gaussian() {
            Ok(())
        } else {
            Err(OvkError::unsupported(format!(
                "{what} is only implemented for the gaussian family, not {}",
                self.family
            )))
        }
    }
}

#[inline]
pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v))
}

/// The separable operator-valued kernel `K = K₀ + α K₁` with
/// `K₀ = k_x k_t I_d` and `K₁ = k_x (∂t∂t' k_t) I_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRegularizedKernel<T> {
    spatial: ScalarKernel<T>,
    temporal: ScalarKernel<T>,
    alpha: T,
    output_dim: usize,
}

impl<T: Real> TimeRegularizedKernel<T> {
    pub fn new(
        spatial: ScalarKernel<T>,
        temporal: ScalarKernel<T>,
        alpha: T,
        output_dim: usize,
    ) -> Result<Self> {
        if !(alpha.finite() && alpha >= T::zero()) {
            return Err(OvkError::input(format!(
                "alpha must be nonnegative and finite, got {}",
                alpha.as_f64()
            )));
        }
        if output_dim == 0 {
            return Err(OvkError::input("output dimension must be at least 1"));
        }
        if alpha > T::zero() && !temporal.is_gaussian() {
            return Err(OvkError::unsupported(format!(
                "alpha > 0 needs a derivative kernel, which the {} temporal family does not provide",
                temporal.family()
            )));
        }
        Ok(Self {
            spatial,
            temporal,
            alpha,
            output_dim,
        })
    }

    /// Gaussian space and time kernels.
    pub fn gaussian(sigma_x: T, sigma_t: T, alpha: T, output_dim: usize) -> Result<Self> {
        Self::new(
            ScalarKernel::gaussian(sigma_x)?,
            ScalarKernel::gaussian(sigma_t)?,
            alpha,
            output_dim,
        )
    }

    pub fn spatial(&self) -> &ScalarKernel<T> {
        &self.spatial
    }

    pub fn temporal(&self) -> &ScalarKernel<T> {
        &self.temporal
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// The scalar `s` such that `K(p, q) = s · I_d`.
    pub fn block_scalar(&self, p: &SpatioTemporalPoint<T>, q: &SpatioTemporalPoint<T>) -> Result<T> {
        check_dims(p, q)?;
        Ok(self.block_scalar_unchecked(p, q))
    }

    #[inline]
    pub(crate) fn block_scalar_unchecked(
        &self,
        p: &SpatioTemporalPoint<T>,
        q: &SpatioTemporalPoint<T>,
    ) -> T {
        let kx = self.spatial.eval_sq_dist(sq_dist(&p.x, &q.x));
        let mut kt = self.temporal.eval_1d(p.t, q.t);
        if self.alpha > T::zero() {
            kt += self.alpha * self.temporal.gaussian_dt_dt(p.t - q.t);
        }
        kx * kt
    }

    /// `∂/∂t` of [`Self::block_scalar`] with respect to the time of `p`.
    pub fn block_scalar_dt(
        &self,
        p: &SpatioTemporalPoint<T>,
        q: &SpatioTemporalPoint<T>,
    ) -> Result<T> {
        check_dims(p, q)?;
        let kx = self.spatial.eval_sq_dist(sq_dist(&p.x, &q.x));
        let mut dkt = self.temporal.eval_dt(p.t, q.t)?;
        if self.alpha > T::zero() {
            dkt += self.alpha * self.temporal.eval_dt_dt_dt(p.t, q.t)?;
        }
        Ok(kx * dkt)
    }

    /// Full `d × d` block `K(p, q)`.
    pub fn eval(&self, p: &SpatioTemporalPoint<T>, q: &SpatioTemporalPoint<T>) -> Result<DMatrix<T>> {
        let s = self.block_scalar(p, q)?;
        Ok(DMatrix::<T>::identity(self.output_dim, self.output_dim) * s)
    }
}

fn check_dims<T>(p: &SpatioTemporalPoint<T>, q: &SpatioTemporalPoint<T>) -> Result<()> {
    if p.x.len() != q.x.len() {
        return Err(OvkError::input(format!(
            "points differ in spatial dimension ({} vs {})",
            p.x.len(),
            q.x.len()
        )));
    }
    Ok(())
}
