//! Sampling point sets and fill distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{OvkError, Result};
use crate::kernel::{sq_dist, SpatioTemporalPoint};
use crate::scalar::Real;

/// Default probes per axis for fill distances in one dimension.
pub const DEFAULT_PROBES_1D: usize = 2048;
/// Default probes per axis for fill distances in two or more dimensions.
pub const DEFAULT_PROBES_ND: usize = 256;

/// Axis-aligned box over the spatial axes, optionally extended by a time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    pub spatial: Vec<(T, T)>,
    pub time: Option<(T, T)>,
}

impl<T: Real> BoxDomain<T> {
    pub fn new(spatial: Vec<(T, T)>, time: Option<(T, T)>) -> Result<Self> {
        if spatial.is_empty() {
            return Err(OvkError::input("domain needs at least one spatial axis"));
        }
        for &(lo, hi) in spatial.iter().chain(time.iter()) {
            if !(lo.finite() && hi.finite() && lo <= hi) {
                return Err(OvkError::input(format!(
                    "invalid axis bounds [{}, {}]",
                    lo.as_f64(),
                    hi.as_f64()
                )));
            }
        }
        Ok(Self { spatial, time })
    }

    /// Spatial-only domain.
    pub fn space(spatial: Vec<(T, T)>) -> Result<Self> {
        Self::new(spatial, None)
    }

    pub fn space_time(spatial: Vec<(T, T)>, time: (T, T)) -> Result<Self> {
        Self::new(spatial, Some(time))
    }

    /// Unit interval in space, no time axis.
    pub fn unit_interval() -> Self {
        Self {
            spatial: vec![(T::zero(), T::one())],
            time: None,
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial.len()
    }

    /// All axes, spatial first, then time if present.
    pub fn axes(&self) -> Vec<(T, T)> {
        self.spatial.iter().copied().chain(self.time).collect()
    }

    pub fn volume(&self) -> T {
        self.axes()
            .iter()
            .fold(T::one(), |acc, &(lo, hi)| acc * (hi - lo))
    }

    pub fn contains(&self, p: &SpatioTemporalPoint<T>) -> bool {
        if p.x.len() != self.spatial.len() {
            return false;
        }
        let space_ok = p
            .x
            .iter()
            .zip(&self.spatial)
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi);
        let time_ok = self.time.map_or(true, |(lo, hi)| p.t >= lo && p.t <= hi);
        space_ok && time_ok
    }

    fn point_from_coords(&self, coords: &[T]) -> SpatioTemporalPoint<T> {
        let d = self.spatial.len();
        let t = if self.time.is_some() { coords[d] } else { T::zero() };
        SpatioTemporalPoint {
            x: coords[..d].to_vec(),
            t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingKind {
    Grid,
    UniformRandom { seed: u64 },
    /// Points supplied externally (loaded or derived from another set).
    Explicit,
}

/// Ordered sampling sites with the box they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    points: Vec<SpatioTemporalPoint<T>>,
    domain: BoxDomain<T>,
    kind: SamplingKind,
}

impl<T: Real> PointSet<T> {
    /// Wraps explicit points, checking containment and distinctness.
    pub fn from_points(points: Vec<SpatioTemporalPoint<T>>, domain: BoxDomain<T>) -> Result<Self> {
        Self::with_kind(points, domain, SamplingKind::Explicit)
    }

    /// Wraps explicit points and uses their bounding box as the domain.
    pub fn from_points_bounding(points: Vec<SpatioTemporalPoint<T>>, with_time: bool) -> Result<Self> {
        let domain = bounding_box(&points, with_time)?;
        Self::from_points(points, domain)
    }

    fn with_kind(
        points: Vec<SpatioTemporalPoint<T>>,
        domain: BoxDomain<T>,
        kind: SamplingKind,
    ) -> Result<Self> {
        if let Some(bad) = points.iter().position(|p| !domain.contains(p)) {
            return Err(OvkError::input(format!("point {bad} lies outside the domain")));
        }
        let ps = Self {
            points,
            domain,
            kind,
        };
        if let Some((i, j)) = ps.find_duplicate() {
            return Err(OvkError::input(format!("points {i} and {j} coincide")));
        }
        Ok(ps)
    }

    pub fn points(&self) -> &[SpatioTemporalPoint<T>] {
        &self.points
    }

    pub fn domain(&self) -> &BoxDomain<T> {
        &self.domain
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain.spatial_dim()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SpatioTemporalPoint<T>> {
        self.points.iter()
    }

    /// Returns a copy extended by one point.
    pub fn with_point(&self, p: SpatioTemporalPoint<T>) -> Result<Self> {
        let mut points = self.points.clone();
        points.push(p);
        Self::with_kind(points, self.domain.clone(), SamplingKind::Explicit)
    }

    /// Coordinates used for distances: spatial components, plus time when the
    /// domain has a time axis.
    pub(crate) fn coords(&self, p: &SpatioTemporalPoint<T>) -> Vec<T> {
        let mut c = p.x.clone();
        if self.domain.time.is_some() {
            c.push(p.t);
        }
        c
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        let key = |i: usize| -> Vec<f64> {
            let p = &self.points[i];
            p.x.iter().map(|v| v.as_f64()).chain(std::iter::once(p.t.as_f64())).collect()
        };
        order.sort_by(|&a, &b| {
            key(a)
                .partial_cmp(&key(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
            .windows(2)
            .find(|w| self.points[w[0]] == self.points[w[1]])
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    /// Smallest pairwise distance (in the distance coordinates).
    pub fn min_separation(&self) -> T {
        let coords: Vec<Vec<T>> = self.points.iter().map(|p| self.coords(p)).collect();
        let mut best: Option<T> = None;
        for i in 0..coords.len() {
            for j in (i + 1)..coords.len() {
                let d = sq_dist(&coords[i], &coords[j]);
                best = Some(best.map_or(d, |b: T| if d < b { d } else { b }));
            }
        }
        best.map_or(T::zero(), |b| b.sqrt())
    }
}

fn bounding_box<T: Real>(points: &[SpatioTemporalPoint<T>], with_time: bool) -> Result<BoxDomain<T>> {
    let first = points
        .first()
        .ok_or_else(|| OvkError::input("cannot bound an empty point list"))?;
    let d = first.x.len();
    let mut spatial: Vec<(T, T)> = first.x.iter().map(|&v| (v, v)).collect();
    let mut time = (first.t, first.t);
    for p in points {
        if p.x.len() != d {
            return Err(OvkError::input("points differ in spatial dimension"));
        }
        for (axis, &v) in spatial.iter_mut().zip(&p.x) {
            axis.0 = axis.0.min(v);
            axis.1 = axis.1.max(v);
        }
        time.0 = time.0.min(p.t);
        time.1 = time.1.max(p.t);
    }
    BoxDomain::new(spatial, with_time.then_some(time))
}

/// Endpoint-inclusive linspace.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / T::from_count(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * T::from_count(i) })
        .collect()
}

/// Row-major tensor product: the last axis varies fastest.
fn tensor_product<T: Real>(axes: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Endpoint-inclusive tensor grid over every axis of `domain`.
///
/// `counts_per_axis` lists spatial axes first, then time when present.
pub fn grid_points<T: Real>(domain: &BoxDomain<T>, counts_per_axis: &[usize]) -> Result<PointSet<T>> {
    let axes = domain.axes();
    if counts_per_axis.len() != axes.len() {
        return Err(OvkError::input(format!(
            "expected {} grid counts, got {}",
            axes.len(),
            counts_per_axis.len()
        )));
    }
    if let Some(&c) = counts_per_axis.iter().find(|&&c| c < 2) {
        return Err(OvkError::input(format!("grid count {c} < 2")));
    }
    if let Some(&(lo, hi)) = axes.iter().find(|&&(lo, hi)| !(lo < hi)) {
        return Err(OvkError::input(format!(
            "grid axis [{}, {}] is degenerate",
            lo.as_f64(),
            hi.as_f64()
        )));
    }
    let ticks: Vec<Vec<T>> = axes
        .iter()
        .zip(counts_per_axis)
        .map(|(&(lo, hi), &n)| linspace(lo, hi, n))
        .collect();
    let points = tensor_product(&ticks)
        .iter()
        .map(|c| domain.point_from_coords(c))
        .collect();
    Ok(PointSet {
        points,
        domain: domain.clone(),
        kind: SamplingKind::Grid,
    })
}

/// `n` i.i.d. uniform points, reproducible from `seed`.
pub fn random_points<T: Real>(domain: &BoxDomain<T>, n: usize, seed: u64) -> Result<PointSet<T>> {
    if n == 0 {
        return Err(OvkError::input("random point count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = domain.axes();
    let points = (0..n)
        .map(|_| {
            let coords: Vec<T> = axes
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * T::lit(rng.gen::<f64>()))
                .collect();
            domain.point_from_coords(&coords)
        })
        .collect();
    PointSet::with_kind(points, domain.clone(), SamplingKind::UniformRandom { seed })
}

/// Probe-grid estimate of `sup_x min_i ‖x − x_i‖` over the domain box.
pub fn fill_distance<T: Real>(ps: &PointSet<T>, probe_resolution: usize) -> Result<T> {
    if ps.is_empty() {
        return Err(OvkError::input("fill distance of an empty point set"));
    }
    if probe_resolution < 10 {
        return Err(OvkError::input(format!(
            "probe resolution {probe_resolution} < 10 per axis"
        )));
    }
    let axes = ps.domain().axes();
    let ticks: Vec<Vec<T>> = axes
        .iter()
        .map(|&(lo, hi)| linspace(lo, hi, probe_resolution))
        .collect();
    let probes = tensor_product(&ticks);
    let sites: Vec<Vec<T>> = ps.iter().map(|p| ps.coords(p)).collect();
    let worst = probes
        .par_iter()
        .map(|probe| {
            sites
                .iter()
                .map(|s| sq_dist(probe, s))
                .fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.min(d))))
                .unwrap_or_else(T::zero)
        })
        .reduce(T::zero, |a, b| a.max(b));
    Ok(worst.sqrt())
}

/// Default probe resolution for a domain of the given total dimension.
pub fn default_probe_resolution(dims: usize) -> usize {
    if dims <= 1 {
        DEFAULT_PROBES_1D
    } else {
        DEFAULT_PROBES_ND
    }
}
