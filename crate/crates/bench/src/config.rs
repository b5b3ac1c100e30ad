//! Experiment configuration, read from a TOML file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ovk_core::dynamics::interior_grid;
use ovk_core::regression::{default_lambda, source_condition_lambda};
use ovk_core::{BuiltinObservable, FlowMap, Kernel64, KernelFamily, OvkError, PointSet64, Result, ScalarKernel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Exp1,
    Exp2,
    Exp3,
    Fit,
    Forecast,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
            Experiment::Fit => "fit",
            Experiment::Forecast => "forecast",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarKernelConfig {
    #[serde(default = "default_family")]
    pub family: String,
    pub sigma: f64,
}

fn default_family() -> String {
    "gaussian".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub spatial: ScalarKernelConfig,
    pub temporal: ScalarKernelConfig,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub output_dim: usize,
}

fn one() -> usize {
    1
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel64> {
        let scalar = |c: &ScalarKernelConfig| -> Result<ScalarKernel<f64>> {
            ScalarKernel::new(KernelFamily::from_str(&c.family)?, c.sigma)
        };
        Kernel64::new(scalar(&self.spatial)?, scalar(&self.temporal)?, self.alpha, self.output_dim)
    }
}

/// A fixed ridge parameter, the `1e-8·N` default, or the source-condition
/// schedule `scale · N^(−1/(2r+1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Value(f64),
    Named(String),
    Schedule { schedule: String, r: f64, scale: f64 },
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Named("default".into())
    }
}

impl LambdaSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaSpec::Value(v) if !(v.is_finite() && *v >= 0.0) => {
                Err(OvkError::input("lambda must be finite and nonnegative"))
            }
            LambdaSpec::Named(n) if n != "default" => {
                Err(OvkError::input(format!("unknown lambda keyword {n:?}; use a number or \"default\"")))
            }
            LambdaSpec::Schedule { schedule, r, scale } => {
                if schedule != "source" {
                    return Err(OvkError::input(format!("unknown lambda schedule {schedule:?}")));
                }
                if !(*r > 0.0 && *scale > 0.0 && r.is_finite() && scale.is_finite()) {
                    return Err(OvkError::input("lambda schedule needs positive r and scale"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn for_size(&self, n: usize) -> f64 {
        match self {
            LambdaSpec::Value(v) => *v,
            LambdaSpec::Named(_) => default_lambda(n),
            LambdaSpec::Schedule { r, scale, .. } => source_condition_lambda(n, *r, *scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Endpoint-inclusive `n_x × n_t` tensor grid.
    Grid,
    /// `n_x` uniform random sites crossed with times `j / n_t`, `j = 1..n_t`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exp1Config {
    pub sampling: Sampling,
    pub eval_grid: [usize; 2],
    pub fill_probes: usize,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            sampling: Sampling::Grid,
            eval_grid: [64, 64],
            fill_probes: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemName {
    Identity,
    Linear,
    Sine2pi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KoopmanConfig {
    pub system: SystemName,
    /// Rate `a` of `ẋ = a x` for the linear system.
    pub rate: f64,
    pub interval: [f64; 2],
    /// Distance kept from the interval ends when placing states.
    pub offset: f64,
    pub pinv_rtol: f64,
    pub modes: usize,
    pub observable: String,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        Self {
            system: SystemName::Sine2pi,
            rate: -1.0,
            interval: [0.0, 1.0],
            offset: 1e-3,
            pinv_rtol: 1e-9,
            modes: 5,
            observable: "exp2-trig".into(),
        }
    }
}

impl KoopmanConfig {
    /// The sine system is RK4-integrated with 50 substeps per flow call.
    pub fn flow(&self) -> FlowMap<f64> {
        match self.system {
            SystemName::Identity => FlowMap::identity(1),
            SystemName::Linear => FlowMap::linear_contraction(self.rate, 1),
            SystemName::Sine2pi => FlowMap::sine_2pi(),
        }
    }

    pub fn states(&self, n: usize) -> Result<PointSet64> {
        interior_grid(self.interval[0], self.interval[1], n, self.offset)
    }

    pub fn observable(&self) -> Result<BuiltinObservable> {
        self.observable.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exp2Config {
    /// Number of trigonometric probe observables for the operator gap.
    pub gap_observables: usize,
    pub gap_probes: usize,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            gap_observables: 5,
            gap_probes: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exp3Config {
    /// Number of sample states behind the decomposition.
    pub n: usize,
    pub horizon: usize,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Self { n: 200, horizon: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Training CSV (`x_1..x_d, t, y_1..y_m`), relative to the config file.
    /// Without it the Experiment-1 field is sampled on a grid.
    pub data: Option<PathBuf>,
    pub grid: [usize; 2],
    pub eval_grid: [usize; 2],
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: None,
            grid: [16, 16],
            eval_grid: [32, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    pub n: usize,
    pub rank: Option<usize>,
    pub steps: usize,
    /// Initial states to forecast from.
    pub states: Vec<f64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            n: 200,
            rank: None,
            steps: 10,
            states: vec![0.1, 0.25, 0.4, 0.6, 0.75, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub sweep: Vec<usize>,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub rank_list: Vec<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub exp1: Exp1Config,
    #[serde(default)]
    pub koopman: KoopmanConfig,
    #[serde(default)]
    pub exp2: Exp2Config,
    #[serde(default)]
    pub exp3: Exp3Config,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
}

fn default_dt() -> f64 {
    0.1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| OvkError::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OvkError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(data), Some(dir)) = (cfg.fit.data.as_mut(), path.parent()) {
            if data.is_relative() {
                *data = dir.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# config could not be echoed: {e}\n"))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.build()?;
        if !strictly_increasing(&self.sweep) {
            return Err(OvkError::input("sweep must be strictly increasing"));
        }
        if let Some(n) = self.sweep.iter().find(|&&n| n < 4) {
            return Err(OvkError::input(format!("sweep entry {n} is below the minimum of 4")));
        }
        if !strictly_increasing(&self.rank_list) || self.rank_list.first() == Some(&0) {
            return Err(OvkError::input("rank_list must be strictly increasing and positive"));
        }
        self.lambda.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(OvkError::input("dt must be positive"));
        }
        let k = &self.koopman;
        if !(k.interval[0] < k.interval[1]) || !(k.offset >= 0.0) {
            return Err(OvkError::input("koopman.interval must be increasing and offset nonnegative"));
        }
        if !(k.pinv_rtol > 0.0 && k.pinv_rtol < 1.0) {
            return Err(OvkError::input("koopman.pinv_rtol must lie in (0, 1)"));
        }
        if k.modes == 0 {
            return Err(OvkError::input("koopman.modes must be positive"));
        }
        k.observable()?;
        if self.exp1.eval_grid.iter().chain(&self.fit.grid).chain(&self.fit.eval_grid).any(|&c| c < 2) {
            return Err(OvkError::input("grids need at least 2 points per axis"));
        }
        if self.exp2.gap_observables == 0 || self.exp2.gap_probes < 2 {
            return Err(OvkError::input("exp2 needs gap observables and at least 2 probes"));
        }
        Ok(())
    }

    /// Fails unless the file is meant for `which` (or does not say).
    pub fn expect(&self, which: Experiment) -> Result<()> {
        match self.experiment {
            Some(e) if e != which => Err(OvkError::input(format!("config is for {e}, not {which}"))),
            _ => Ok(()),
        }
    }
}
