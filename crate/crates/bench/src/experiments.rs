//! End-to-end experiment runners. Each writes its CSV tables into the output
//! directory and returns the numbers for programmatic checks.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use ovk_core::io::{format_real, read_training_set, write_eigenvalues, write_model};
use ovk_core::koopman::default_probe_grid;
use ovk_core::{
    build_koopman, decompose, empirical_errors, fill_distance, fit, forecast_error_curve, generate_pairs,
    grid_points, operator_gap_on, random_points, BoxDomain, BuiltinObservable, Complex, DVector,
    ForecastModel, Koopman64, OvkError, Point64, PointSet64, Result, Spectrum64, TrainingSet,
};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Sampling};
use crate::report::{RateReport, RateRow};

/// Where and how a run executes.
#[derive(Debug)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub parallel: bool,
    written: Mutex<Vec<PathBuf>>,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>, parallel: bool) -> Result<Self> {
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self {
            out_dir,
            parallel,
            written: Mutex::new(Vec::new()),
        })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        let file = File::create(&path)?;
        self.written.lock().expect("output list lock").push(path);
        Ok(BufWriter::new(file))
    }

    fn csv(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::WriterBuilder::new().from_writer(self.create(name)?))
    }

    /// File names written so far, sorted.
    pub fn outputs(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .written
            .lock()
            .expect("output list lock")
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

fn fmt(v: f64) -> String {
    format_real(v)
}

fn obs_fn(obs: BuiltinObservable) -> impl Fn(&[f64]) -> DVector<f64> + Sync + Copy {
    move |x: &[f64]| obs.eval_state(x).expect("builtin observables accept one-dimensional states")
}

fn unit_square() -> Result<BoxDomain<f64>> {
    BoxDomain::space_time(vec![(0.0, 1.0)], (0.0, 1.0))
}

/// Splits `n = n_x · n_t` with `n_x` the largest divisor not above `√n`, so
/// the time axis gets the larger share.
pub fn grid_shape(n: usize) -> Result<(usize, usize)> {
    let n_x = (1..=n).take_while(|d| d * d <= n).filter(|d| n % d == 0).last().unwrap_or(1);
    if n_x < 2 {
        return Err(OvkError::input(format!("N = {n} has no grid factorization with both sides ≥ 2")));
    }
    Ok((n_x, n / n_x))
}

fn exp1_inputs(cfg: &ExperimentConfig, n: usize) -> Result<(PointSet64, usize, usize)> {
    let (n_x, n_t) = grid_shape(n)?;
    let domain = unit_square()?;
    let ps = match cfg.exp1.sampling {
        Sampling::Grid => grid_points(&domain, &[n_x, n_t])?,
        Sampling::Random => {
            let sites = random_points(&BoxDomain::space(vec![(0.0, 1.0)])?, n_x, cfg.seed.wrapping_add(n as u64))?;
            let pts = sites
                .iter()
                .flat_map(|s| (1..=n_t).map(move |j| Point64 { x: s.x.clone(), t: j as f64 / n_t as f64 }))
                .collect();
            PointSet64::from_points(pts, domain)?
        }
    };
    Ok((ps, n_x, n_t))
}

fn exp1_row(cfg: &ExperimentConfig, n: usize, eval: &PointSet64) -> Result<RateRow> {
    let kernel = cfg.kernel.build()?;
    let field = BuiltinObservable::Exp1Field;
    let (inputs, n_x, n_t) = exp1_inputs(cfg, n)?;
    let h_fill = fill_distance(&inputs, cfg.exp1.fill_probes)?;
    let data = TrainingSet::from_field(inputs, |p| field.eval_point(p).expect("one-dimensional site"))?;
    let model = fit(&kernel, &data, cfg.lambda.for_size(n))?;
    let err = empirical_errors(
        &model,
        |p| field.eval_point(p).expect("one-dimensional site"),
        |p| field.eval_dt_point(p).expect("one-dimensional site"),
        eval,
    )?;
    log::info!("exp1 N={n}: l2_field={:.3e} l2_dt={:.3e}", err.l2_field, err.l2_dt);
    Ok(RateRow { n, n_x, n_t, h_fill, l2_field: err.l2_field, l2_dt: err.l2_dt })
}

/// Sweeps `N`, fitting the Experiment-1 field and measuring both L² errors.
pub fn run_exp1(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<RateReport> {
    if cfg.sweep.is_empty() {
        return Err(OvkError::input("exp1 needs a nonempty sweep"));
    }
    if cfg.kernel.output_dim != 2 {
        return Err(OvkError::input("the exp1 field has two components; set kernel.output_dim = 2"));
    }
    let eval = grid_points(&unit_square()?, &cfg.exp1.eval_grid)?;
    let results: Vec<Result<RateRow>> = cfg.sweep.par_iter().map(|&n| exp1_row(cfg, n, &eval)).collect();

    let mut w = ctx.csv("exp1_rates.csv")?;
    w.write_record(["N", "n_x", "n_t", "lambda", "h_fill", "l2_field", "l2_dt"])?;
    let mut rows = Vec::new();
    for r in results {
        let row = match r {
            Ok(row) => row,
            Err(e) => {
                w.flush()?;
                return Err(e);
            }
        };
        w.write_record([
            row.n.to_string(),
            row.n_x.to_string(),
            row.n_t.to_string(),
            fmt(cfg.lambda.for_size(row.n)),
            fmt(row.h_fill),
            fmt(row.l2_field),
            fmt(row.l2_dt),
        ])?;
        rows.push(row);
    }
    w.flush()?;

    let report = RateReport::from_rows(rows)?;
    let mut s = ctx.csv("exp1_slopes.csv")?;
    s.write_record(["series", "slope", "stderr"])?;
    for (name, slope) in [("l2_field", &report.field_slope), ("l2_dt", &report.dt_slope)] {
        if let Some(sl) = slope {
            s.write_record([name.to_string(), fmt(sl.slope), fmt(sl.stderr)])?;
        }
    }
    s.flush()?;
    Ok(report)
}

fn koopman_at(cfg: &ExperimentConfig, n: usize) -> Result<Koopman64> {
    let kernel = cfg.kernel.build()?;
    let states = cfg.koopman.states(n)?;
    let data = generate_pairs(&cfg.koopman.flow(), &states, cfg.dt)?;
    build_koopman(&kernel, &data, cfg.koopman.pinv_rtol)
}

#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub n: usize,
    pub eigenvalues: Vec<Complex<f64>>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Exp2Report {
    /// One entry per distinct size in `sweep ∪ 2·sweep`, ascending.
    pub spectra: Vec<SpectrumEntry>,
    /// `(N, |λ_k^(N) − λ_k^(2N)| for k = 1..)`, one per sweep entry.
    pub self_differences: Vec<(usize, Vec<f64>)>,
    /// `(N, operator_gap(N, 2N))`.
    pub gaps: Vec<(usize, f64)>,
}

impl Exp2Report {
    pub fn spectrum(&self, n: usize) -> Option<&SpectrumEntry> {
        self.spectra.iter().find(|e| e.n == n)
    }

    /// Whether the `k`-th (1-based) self-difference strictly decreases over the sweep.
    pub fn difference_decreasing(&self, k: usize) -> bool {
        let vals: Option<Vec<f64>> = self.self_differences.iter().map(|(_, d)| d.get(k - 1).copied()).collect();
        vals.is_some_and(|v| v.windows(2).all(|w| w[1] < w[0]))
    }

    pub fn gap_decreasing(&self) -> bool {
        self.gaps.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

/// `sin 2πx, cos 2πx, sin 4πx, ...`, the operator-gap test observables.
pub fn gap_observables(count: usize) -> Vec<Box<dyn Fn(&[f64]) -> DVector<f64> + Sync>> {
    (0..count)
        .map(|j| {
            let freq = std::f64::consts::TAU * (j / 2 + 1) as f64;
            let f: Box<dyn Fn(&[f64]) -> DVector<f64> + Sync> = if j % 2 == 0 {
                Box::new(move |x: &[f64]| DVector::from_element(1, (freq * x[0]).sin()))
            } else {
                Box::new(move |x: &[f64]| DVector::from_element(1, (freq * x[0]).cos()))
            };
            f
        })
        .collect()
}

/// Spectra over the sweep, self-convergence against `2N` and the operator gap.
pub fn run_exp2(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Exp2Report> {
    if cfg.sweep.is_empty() {
        return Err(OvkError::input("exp2 needs a nonempty sweep"));
    }
    let mut sizes: Vec<usize> = cfg.sweep.iter().flat_map(|&n| [n, 2 * n]).collect();
    sizes.sort_unstable();
    sizes.dedup();

    let built: Vec<(usize, Koopman64, Spectrum64)> = sizes
        .par_iter()
        .map(|&n| -> Result<_> {
            let op = koopman_at(cfg, n)?;
            let dec = decompose(&op, cfg.koopman.modes)?;
            write_eigenvalues(ctx.create(&format!("exp2_eigenvalues_N{n}.csv"))?, &dec)?;
            log::info!("exp2 N={n}: rank {} with {} modes", op.rank(), dec.len());
            Ok((n, op, dec))
        })
        .collect::<Result<_>>()?;
    let by_n: BTreeMap<usize, (&Koopman64, &Spectrum64)> = built.iter().map(|(n, o, d)| (*n, (o, d))).collect();

    let spectra: Vec<SpectrumEntry> = built
        .iter()
        .map(|(n, _, d)| SpectrumEntry {
            n: *n,
            eigenvalues: d.eigenvalues().to_vec(),
            residuals: d.residuals().to_vec(),
        })
        .collect();
    let mut w = ctx.csv("exp2_eigenvalues.csv")?;
    w.write_record(["N", "k", "re", "im", "abs", "residual"])?;
    for e in &spectra {
        for (k, (z, r)) in e.eigenvalues.iter().zip(&e.residuals).enumerate() {
            w.write_record([e.n.to_string(), (k + 1).to_string(), fmt(z.re), fmt(z.im), fmt(z.norm()), fmt(*r)])?;
        }
    }
    w.flush()?;

    let self_differences: Vec<(usize, Vec<f64>)> = cfg
        .sweep
        .iter()
        .map(|&n| {
            let (a, b) = (by_n[&n].1.eigenvalues(), by_n[&(2 * n)].1.eigenvalues());
            (n, a.iter().zip(b).map(|(x, y)| (x - y).norm()).collect())
        })
        .collect();
    let mut w = ctx.csv("exp2_self_convergence.csv")?;
    w.write_record(["N", "k", "abs_diff"])?;
    for (n, d) in &self_differences {
        for (k, v) in d.iter().enumerate() {
            w.write_record([n.to_string(), (k + 1).to_string(), fmt(*v)])?;
        }
    }
    w.flush()?;

    let probes_obs = gap_observables(cfg.exp2.gap_observables);
    let refs: Vec<&(dyn Fn(&[f64]) -> DVector<f64> + Sync)> = probes_obs.iter().map(|b| b.as_ref()).collect();
    let gaps: Vec<(usize, f64)> = cfg
        .sweep
        .par_iter()
        .map(|&n| {
            let (a, b) = (by_n[&n].0, by_n[&(2 * n)].0);
            let probes = default_probe_grid(a, b, cfg.exp2.gap_probes)?;
            Ok((n, operator_gap_on(a, b, &refs, &probes)?))
        })
        .collect::<Result<_>>()?;
    let mut w = ctx.csv("exp2_gap.csv")?;
    w.write_record(["N", "gap_N_2N"])?;
    for (n, g) in &gaps {
        w.write_record([n.to_string(), fmt(*g)])?;
    }
    w.flush()?;

    Ok(Exp2Report { spectra, self_differences, gaps })
}

#[derive(Debug, Clone)]
pub struct Exp3Report {
    pub ranks: Vec<usize>,
    pub dt: f64,
    /// `errors[s][j]` is `Err_{ranks[j]}` after `s` steps.
    pub errors: Vec<Vec<f64>>,
    /// `sqrt(vol · mean ‖g(Φ^s x)‖²)` over the evaluation states.
    pub truth_rms: Vec<f64>,
    /// RMS projection residual at the sample states, per rank.
    pub projection_residuals: Vec<f64>,
    /// Volume of the evaluation domain.
    pub volume: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

impl Exp3Report {
    /// Largest increase `Err_{r_{j+1}}(s) − Err_{r_j}(s)` over all steps; ≤ 0 when monotone.
    pub fn worst_rank_increase(&self) -> f64 {
        self.errors
            .iter()
            .flat_map(|row| row.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rank_monotone(&self, slack: f64) -> bool {
        self.worst_rank_increase() <= slack
    }

    pub fn error(&self, rank: usize, step: usize) -> Option<f64> {
        let j = self.ranks.iter().position(|&r| r == rank)?;
        self.errors.get(step).map(|row| row[j])
    }
}

/// Forecast error curves of the rank-truncated spectral expansions.
pub fn run_exp3(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Exp3Report> {
    if cfg.rank_list.is_empty() {
        return Err(OvkError::input("exp3 needs a nonempty rank_list"));
    }
    let n = cfg.exp3.n;
    let horizon = cfg.exp3.horizon;
    let max_rank = *cfg.rank_list.last().expect("nonempty");
    let op = koopman_at(cfg, n)?;
    let dec = decompose(&op, max_rank.max(cfg.koopman.modes))?;
    if dec.len() < max_rank {
        return Err(OvkError::input(format!(
            "rank {max_rank} requested but only {} eigenpairs were retained",
            dec.len()
        )));
    }
    write_eigenvalues(ctx.create("exp3_eigenvalues.csv")?, &dec)?;

    let g = obs_fn(cfg.koopman.observable()?);
    let flow = cfg.koopman.flow();
    let states = op.centers().clone();
    // Flow-evolved states, one row per step.
    let mut traj: Vec<Vec<Vec<f64>>> = vec![states.iter().map(|p| p.x.clone()).collect()];
    for s in 0..horizon {
        let next = traj[s]
            .iter()
            .map(|x| flow.flow(x, cfg.dt * s as f64, cfg.dt))
            .collect::<Result<_>>()?;
        traj.push(next);
    }
    let index: HashMap<u64, usize> = states.iter().enumerate().map(|(i, p)| (p.x[0].to_bits(), i)).collect();
    let truth = |x: &[f64], s: usize| g(&traj[s][index[&x[0].to_bits()]]);

    let volume = states.domain().volume();
    let m = states.len() as f64;
    let truth_rms: Vec<f64> = traj
        .iter()
        .map(|row| (volume * row.iter().map(|x| g(x).norm_squared()).sum::<f64>() / m).sqrt())
        .collect();

    let per_rank: Vec<(Vec<(usize, f64)>, f64)> = cfg
        .rank_list
        .par_iter()
        .map(|&r| {
            let fm = ForecastModel::new(dec.clone(), g, r, cfg.dt)?;
            let curve = forecast_error_curve(&fm, truth, &states, horizon)?;
            Ok((curve, fm.projection().residual_rms))
        })
        .collect::<Result<_>>()?;

    let errors: Vec<Vec<f64>> = (0..=horizon).map(|s| per_rank.iter().map(|(c, _)| c[s].1).collect()).collect();
    let mut w = ctx.csv("exp3_errors.csv")?;
    let header = ["steps".to_string(), "t".to_string()]
        .into_iter()
        .chain(cfg.rank_list.iter().map(|r| format!("err_r{r}")))
        .chain(["truth_rms".to_string()]);
    w.write_record(header)?;
    for (s, row) in errors.iter().enumerate() {
        let rec = [s.to_string(), fmt(cfg.dt * s as f64)]
            .into_iter()
            .chain(row.iter().map(|&v| fmt(v)))
            .chain([fmt(truth_rms[s])]);
        w.write_record(rec)?;
    }
    w.flush()?;

    let projection_residuals: Vec<f64> = per_rank.iter().map(|(_, r)| *r).collect();
    let mut w = ctx.csv("exp3_projection.csv")?;
    w.write_record(["rank", "residual_rms"])?;
    for (r, v) in cfg.rank_list.iter().zip(&projection_residuals) {
        w.write_record([r.to_string(), fmt(*v)])?;
    }
    w.flush()?;

    Ok(Exp3Report {
        ranks: cfg.rank_list.clone(),
        dt: cfg.dt,
        errors,
        truth_rms,
        projection_residuals,
        volume,
        eigenvalues: dec.eigenvalues().to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub n: usize,
    pub lambda: f64,
    pub rkhs_norm_sq: f64,
    /// `(l2_field, l2_dt)` when the field is known in closed form.
    pub errors: Option<(f64, f64)>,
}

/// Fits a model to a training CSV (or the Experiment-1 field), archives it
/// and tabulates predictions on a grid.
pub fn run_fit(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<FitReport> {
    let kernel = cfg.kernel.build()?;
    let field = BuiltinObservable::Exp1Field;
    let data = match &cfg.fit.data {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| OvkError::input(format!("cannot open training data {}: {e}", path.display())))?;
            read_training_set(std::io::BufReader::new(file))?
        }
        None => {
            let inputs = grid_points(&unit_square()?, &cfg.fit.grid)?;
            TrainingSet::from_field(inputs, |p| field.eval_point(p).expect("one-dimensional site"))?
        }
    };
    let n = data.len();
    let lambda = cfg.lambda.for_size(n);
    let model = fit(&kernel, &data, lambda)?;
    write_model(ctx.create("model.txt")?, &model)?;

    let domain = data.inputs().domain();
    let d = domain.spatial_dim();
    let mut counts = vec![cfg.fit.eval_grid[0]; d];
    if domain.time.is_some() {
        counts.push(cfg.fit.eval_grid[1]);
    }
    let eval = grid_points(domain, &counts)?;
    let values = model.predict_batch(eval.points())?;
    let m = model.output_dim();
    let mut w = ctx.csv("fit_predictions.csv")?;
    let header = (1..=d)
        .map(|i| format!("x_{i}"))
        .chain(["t".to_string()])
        .chain((1..=m).map(|i| format!("y_{i}")))
        .chain((1..=m).map(|i| format!("dy_{i}")));
    w.write_record(header)?;
    for (p, y) in eval.iter().zip(&values) {
        let dy = model.predict_time_derivative(p)?;
        let rec = p
            .x
            .iter()
            .chain([&p.t])
            .chain(y.iter())
            .chain(dy.iter())
            .map(|&v| fmt(v));
        w.write_record(rec)?;
    }
    w.flush()?;

    let errors = if cfg.fit.data.is_none() {
        let e = empirical_errors(
            &model,
            |p| field.eval_point(p).expect("one-dimensional site"),
            |p| field.eval_dt_point(p).expect("one-dimensional site"),
            &eval,
        )?;
        let mut w = ctx.csv("fit_errors.csv")?;
        w.write_record(["N", "lambda", "l2_field", "l2_dt"])?;
        w.write_record([n.to_string(), fmt(lambda), fmt(e.l2_field), fmt(e.l2_dt)])?;
        w.flush()?;
        Some((e.l2_field, e.l2_dt))
    } else {
        None
    };
    Ok(FitReport { n, lambda, rkhs_norm_sq: model.rkhs_norm_sq(), errors })
}

#[derive(Debug, Clone)]
pub struct ForecastReport {
    pub rank: usize,
    /// `(x0, steps, forecast, truth)`.
    pub rows: Vec<(f64, usize, Vec<f64>, Vec<f64>)>,
}

/// Forecasts the configured observable from the listed initial states.
pub fn run_forecast(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<ForecastReport> {
    let fc = &cfg.forecast;
    if fc.states.is_empty() {
        return Err(OvkError::input("forecast.states is empty"));
    }
    let op = koopman_at(cfg, fc.n)?;
    let dec = decompose(&op, fc.rank.unwrap_or(0).max(cfg.koopman.modes))?;
    let rank = fc.rank.unwrap_or(dec.len());
    write_eigenvalues(ctx.create("forecast_eigenvalues.csv")?, &dec)?;
    let g = obs_fn(cfg.koopman.observable()?);
    let fm = ForecastModel::new(dec, g, rank, cfg.dt)?;
    let flow = cfg.koopman.flow();

    let starts: Vec<Point64> = fc
        .states
        .iter()
        .map(|&x| Point64::state(vec![x]))
        .collect::<Result<_>>()?;
    let mut rows: Vec<(f64, usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut current: Vec<Vec<f64>> = fc.states.iter().map(|&x| vec![x]).collect();
    for s in 0..=fc.steps {
        let pred = fm.forecast_many(&starts, s)?;
        for ((p, f), x) in starts.iter().zip(pred).zip(&current) {
            rows.push((p.x[0], s, f.iter().copied().collect(), g(x).iter().copied().collect()));
        }
        if s < fc.steps {
            current = current
                .iter()
                .map(|x| flow.flow(x, cfg.dt * s as f64, cfg.dt))
                .collect::<Result<_>>()?;
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let m = fm.observable_dim();
    let mut w = ctx.csv("forecast.csv")?;
    let header = ["x0".to_string(), "steps".to_string(), "t".to_string()]
        .into_iter()
        .chain((1..=m).map(|i| format!("forecast_{i}")))
        .chain((1..=m).map(|i| format!("truth_{i}")));
    w.write_record(header)?;
    for (x0, s, f, t) in &rows {
        let rec = [fmt(*x0), s.to_string(), fmt(cfg.dt * *s as f64)]
            .into_iter()
            .chain(f.iter().chain(t).map(|&v| fmt(v)));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(ForecastReport { rank, rows })
}

fn write_manifest(
    ctx: &RunContext,
    which: Experiment,
    cfg: &ExperimentConfig,
    seconds: f64,
    summary: &[String],
) -> Result<()> {
    use std::io::Write;
    let mut outputs = ctx.outputs();
    outputs.retain(|n| n != "manifest.txt");
    let mut w = ctx.create("manifest.txt")?;
    writeln!(w, "ovk {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "core {}", ovk_core::VERSION)?;
    writeln!(w, "command = {which}")?;
    writeln!(w, "seed = {}", cfg.seed)?;
    writeln!(w, "parallel = {}", ctx.parallel)?;
    writeln!(w, "wall_clock_seconds = {seconds:.3}")?;
    writeln!(w, "outputs = {}", outputs.join(", "))?;
    for line in summary {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "\n[config]")?;
    write!(w, "{}", cfg.to_toml())?;
    w.flush()?;
    Ok(())
}

/// Runs one command inside a dedicated thread pool (one thread unless
/// `ctx.parallel`) and writes `manifest.txt`. Returns summary lines.
pub fn run(which: Experiment, cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Vec<String>> {
    cfg.expect(which)?;
    let threads = if ctx.parallel { 0 } else { 1 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| OvkError::unsupported(format!("cannot start thread pool: {e}")))?;
    let start = Instant::now();
    let summary = pool.install(|| summarize(which, cfg, ctx))?;
    write_manifest(ctx, which, cfg, start.elapsed().as_secs_f64(), &summary)?;
    Ok(summary)
}

fn summarize(which: Experiment, cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Vec<String>> {
    let mut out = Vec::new();
    match which {
        Experiment::Exp1 => {
            let r = run_exp1(cfg, ctx)?;
            for row in &r.rows {
                out.push(format!("N={} l2_field={:.4e} l2_dt={:.4e}", row.n, row.l2_field, row.l2_dt));
            }
            for (name, s) in [("l2_field", &r.field_slope), ("l2_dt", &r.dt_slope)] {
                if let Some(s) = s {
                    out.push(format!("{name} slope {:.3} ± {:.3}", s.slope, s.stderr));
                }
            }
        }
        Experiment::Exp2 => {
            let r = run_exp2(cfg, ctx)?;
            for (n, g) in &r.gaps {
                out.push(format!("N={n} gap(N,2N)={g:.4e}"));
            }
            for (n, d) in &r.self_differences {
                let ds: Vec<String> = d.iter().take(3).map(|v| format!("{v:.3e}")).collect();
                out.push(format!("N={n} |λ_k(N) − λ_k(2N)| = {}", ds.join(", ")));
            }
        }
        Experiment::Exp3 => {
            let r = run_exp3(cfg, ctx)?;
            let last = r.errors.len() - 1;
            for (j, rank) in r.ranks.iter().enumerate() {
                out.push(format!("r={rank} Err(0)={:.4e} Err({last})={:.4e}", r.errors[0][j], r.errors[last][j]));
            }
            out.push(format!("worst rank increase {:.3e}", r.worst_rank_increase()));
        }
        Experiment::Fit => {
            let r = run_fit(cfg, ctx)?;
            out.push(format!("N={} lambda={:.3e} rkhs_norm_sq={:.4e}", r.n, r.lambda, r.rkhs_norm_sq));
            if let Some((f, d)) = r.errors {
                out.push(format!("l2_field={f:.4e} l2_dt={d:.4e}"));
            }
        }
        Experiment::Forecast => {
            let r = run_forecast(cfg, ctx)?;
            out.push(format!("rank {} forecast at {} (state, step) pairs", r.rank, r.rows.len()));
        }
    }
    Ok(out)
}

/// Convenience for tests and scripts: loads `config`, runs, returns the context.
pub fn run_file(which: Experiment, config: &Path, out_dir: &Path, parallel: bool) -> Result<RunContext> {
    let cfg = ExperimentConfig::load(config)?;
    let ctx = RunContext::new(out_dir, parallel)?;
    run(which, &cfg, &ctx)?;
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(64).unwrap(), (8, 8));
        assert_eq!(grid_shape(128).unwrap(), (8, 16));
        assert_eq!(grid_shape(512).unwrap(), (16, 32));
        assert_eq!(grid_shape(6).unwrap(), (2, 3));
        assert!(grid_shape(7).is_err());
    }

    #[test]
    fn gap_observables_alternate() {
        let obs = gap_observables(3);
        let x = [0.125];
        assert!((obs[0](&x)[0] - (std::f64::consts::PI / 4.0).sin()).abs() < 1e-15);
        assert!((obs[1](&x)[0] - (std::f64::consts::PI / 4.0).cos()).abs() < 1e-15);
        assert!((obs[2](&x)[0] - (std::f64::consts::PI / 2.0).sin()).abs() < 1e-15);
    }
}
