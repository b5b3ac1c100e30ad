//! CSV formats.
//!
//! Every table has a header row, comma separators and `.` decimals. Reals are
//! written in shortest round-trip form, so reading a file back reproduces the
//! stored values bit for bit (in `f64`).

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::TrajectoryDataset;
use crate::error::{OvkError, Result};
use crate::geometry::{BoxDomain, PointSet};
use crate::kernel::{KernelFamily, ScalarKernel, SpatioTemporalPoint, TimeRegularizedKernel};
use crate::koopman::SpectralDecomposition;
use crate::regression::{RepresenterModel, TrainingSet};
use crate::scalar::Real;

/// First line of a model archive.
pub const MODEL_ARCHIVE_HEADER: &str = "# ovk-model 1";

pub fn format_real<T: Real>(v: T) -> String {
    format!("{:?}", v.as_f64())
}

fn parse_real<T: Real>(s: &str, what: &str) -> Result<T> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| OvkError::input(format!("cannot parse {what} value {s:?}")))?;
    if !v.is_finite() {
        return Err(OvkError::input(format!("non-finite {what} value {s:?}")));
    }
    Ok(T::lit(v))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn point_row<T: Real>(p: &SpatioTemporalPoint<T>) -> Vec<String> {
    p.x.iter().map(|&v| format_real(v)).chain([format_real(p.t)]).collect()
}

/// Columns `x_1..x_d, t`.
pub fn write_point_set<T: Real, W: Write>(w: W, ps: &PointSet<T>) -> Result<()> {
    let mut out = writer(w);
    out.write_record(numbered("x", ps.spatial_dim()).chain(["t".to_string()]))?;
    for p in ps.iter() {
        out.write_record(point_row(p))?;
    }
    out.flush()?;
    Ok(())
}

/// Header layout shared by point-like tables: some `x_*` columns, one `t`,
/// then trailing columns.
fn split_header(headers: &csv::StringRecord) -> Result<(usize, usize)> {
    let t_col = headers
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| OvkError::input("header has no `t` column"))?;
    if t_col == 0 || !headers.iter().take(t_col).all(|h| h.starts_with('x')) {
        return Err(OvkError::input("expected columns x_1..x_d before `t`"));
    }
    Ok((t_col, headers.len() - t_col - 1))
}

fn read_rows<R: Read>(r: R) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rd = reader(r);
    let headers = rd.headers()?.clone();
    let rows = rd.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((headers, rows))
}

/// Reads a point set; the domain is the bounding box of the points.
pub fn read_point_set<T: Real, R: Read>(r: R) -> Result<PointSet<T>> {
    let (headers, rows) = read_rows(r)?;
    let (d, extra) = split_header(&headers)?;
    if extra != 0 {
        return Err(OvkError::input("point set has columns after `t`"));
    }
    let points = rows
        .iter()
        .map(|row| parse_point(row, d))
        .collect::<Result<Vec<_>>>()?;
    if points.is_empty() {
        return Err(OvkError::input("point set is empty"));
    }
    PointSet::from_points_bounding(points, true)
}

fn parse_point<T: Real>(row: &csv::StringRecord, d: usize) -> Result<SpatioTemporalPoint<T>> {
    let x = (0..d)
        .map(|i| parse_real(&row[i], "coordinate"))
        .collect::<Result<Vec<T>>>()?;
    SpatioTemporalPoint::new(x, parse_real(&row[d], "time")?)
}

/// Columns `x_1..x_d, t, y_1..y_m`.
pub fn write_training_set<T: Real, W: Write>(w: W, data: &TrainingSet<T>) -> Result<()> {
    let mut out = writer(w);
    let d = data.inputs().spatial_dim();
    out.write_record(
        numbered("x", d)
            .chain(["t".to_string()])
            .chain(numbered("y", data.output_dim())),
    )?;
    for (p, y) in data.inputs().iter().zip(data.targets()) {
        let mut row = point_row(p);
        row.extend(y.iter().map(|&v| format_real(v)));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_training_set<T: Real, R: Read>(r: R) -> Result<TrainingSet<T>> {
    let (headers, rows) = read_rows(r)?;
    let (d, m) = split_header(&headers)?;
    if m == 0 {
        return Err(OvkError::input("training set has no `y` columns"));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut targets = Vec::with_capacity(rows.len());
    for row in &rows {
        points.push(parse_point(row, d)?);
        let y = (0..m)
            .map(|j| parse_real(&row[d + 1 + j], "target"))
            .collect::<Result<Vec<T>>>()?;
        targets.push(DVector::from_vec(y));
    }
    if points.is_empty() {
        return Err(OvkError::input("training set is empty"));
    }
    TrainingSet::new(PointSet::from_points_bounding(points, true)?, targets)
}

/// Columns `x_now_1..d, x_next_1..d`, preceded by a `# dt=<value>` line.
pub fn write_trajectories<T: Real, W: Write>(mut w: W, data: &TrajectoryDataset<T>) -> Result<()> {
    writeln!(w, "# dt={}", format_real(data.dt))?;
    let d = data.x_now.spatial_dim();
    let mut out = writer(w);
    out.write_record(numbered("x_now", d).chain(numbered("x_next", d)))?;
    for (a, b) in data.x_now.iter().zip(data.x_next.iter()) {
        out.write_record(a.x.iter().chain(b.x.iter()).map(|&v| format_real(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectories<T: Real, R: Read>(r: R) -> Result<TrajectoryDataset<T>> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let dt = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .find_map(|l| l.trim().strip_prefix("dt="))
        .ok_or_else(|| OvkError::input("trajectory file lacks a `# dt=` header line"))?;
    let dt = parse_real(dt, "dt")?;
    let (headers, rows) = read_rows(text.as_bytes())?;
    if headers.len() % 2 != 0 || headers.is_empty() {
        return Err(OvkError::input("expected equal numbers of x_now and x_next columns"));
    }
    let d = headers.len() / 2;
    let mut now = Vec::with_capacity(rows.len());
    let mut next = Vec::with_capacity(rows.len());
    for row in &rows {
        let vals = row
            .iter()
            .map(|s| parse_real(s, "state"))
            .collect::<Result<Vec<T>>>()?;
        now.push(SpatioTemporalPoint::state(vals[..d].to_vec())?);
        next.push(SpatioTemporalPoint::state(vals[d..].to_vec())?);
    }
    if now.is_empty() {
        return Err(OvkError::input("trajectory file has no rows"));
    }
    TrajectoryDataset::new(
        PointSet::from_points_bounding(now, false)?,
        PointSet::from_points_bounding(next, false)?,
        dt,
        d,
    )
}

/// Row-major matrix with a `# rows=<r> cols=<c>` line before the header.
pub fn write_matrix<T: Real, W: Write>(mut w: W, m: &DMatrix<T>) -> Result<()> {
    writeln!(w, "# rows={} cols={}", m.nrows(), m.ncols())?;
    let mut out = writer(w);
    out.write_record(numbered("c", m.ncols()))?;
    for row in m.row_iter() {
        out.write_record(row.iter().map(|&v| format_real(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix<T: Real, R: Read>(r: R) -> Result<DMatrix<T>> {
    let (_, rows) = read_rows(r)?;
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for row in &rows {
        if row.len() != ncols {
            return Err(OvkError::input("ragged matrix rows"));
        }
        for s in row.iter() {
            data.push(parse_real::<T>(s, "matrix")?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

/// Columns `k, re, im, abs, residual`, with `k` starting at 1.
pub fn write_eigenvalues<T: Real, W: Write>(w: W, dec: &SpectralDecomposition<T>) -> Result<()> {
    use nalgebra::ComplexField;
    let mut out = writer(w);
    out.write_record(["k", "re", "im", "abs", "residual"])?;
    for (k, (z, r)) in dec.eigenvalues().iter().zip(dec.residuals()).enumerate() {
        out.write_record([
            (k + 1).to_string(),
            format_real(z.re),
            format_real(z.im),
            format_real(z.modulus()),
            format_real(*r),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `steps, t, err_r<r>...`; `curves[j]` belongs to `ranks[j]`.
pub fn write_forecast_curves<T: Real, W: Write>(
    w: W,
    dt: T,
    ranks: &[usize],
    curves: &[Vec<(usize, T)>],
) -> Result<()> {
    if ranks.len() != curves.len() {
        return Err(OvkError::input("one curve per rank is required"));
    }
    let steps = curves.first().map_or(0, |c| c.len());
    if curves.iter().any(|c| c.len() != steps) {
        return Err(OvkError::input("curves have different lengths"));
    }
    let mut out = writer(w);
    out.write_record(
        ["steps".to_string(), "t".to_string()]
            .into_iter()
            .chain(ranks.iter().map(|r| format!("err_r{r}"))),
    )?;
    for i in 0..steps {
        let s = curves[0][i].0;
        let mut row = vec![s.to_string(), format_real(dt * T::from_count(s))];
        row.extend(curves.iter().map(|c| format_real(c[i].1)));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a fitted model as a text archive.
///
/// Layout: the line [`MODEL_ARCHIVE_HEADER`], then the sections `[kernel]`
/// (`key,value` rows), `[domain]` (`axis,lo,hi` rows), `[centers]` (`x_1..x_d,t`)
/// and `[coefficients]` (`c_1..c_m`), each a CSV table with its own header.
pub fn write_model<T: Real, W: Write>(mut w: W, model: &RepresenterModel<T>) -> Result<()> {
    let k = model.kernel();
    writeln!(w, "{MODEL_ARCHIVE_HEADER}")?;
    writeln!(w, "[kernel]")?;
    {
        let mut out = writer(&mut w);
        out.write_record(["key", "value"])?;
        let rows = [
            ("spatial_family", k.spatial().family().to_string()),
            ("spatial_sigma", format_real(k.spatial().bandwidth())),
            ("temporal_family", k.temporal().family().to_string()),
            ("temporal_sigma", format_real(k.temporal().bandwidth())),
            ("alpha", format_real(k.alpha())),
            ("output_dim", k.output_dim().to_string()),
            ("lambda", format_real(model.lambda())),
        ];
        for (key, value) in rows {
            out.write_record([key, value.as_str()])?;
        }
        out.flush()?;
    }
    writeln!(w, "[domain]")?;
    {
        let mut out = writer(&mut w);
        out.write_record(["axis", "lo", "hi"])?;
        let dom = model.centers().domain();
        for (i, &(lo, hi)) in dom.spatial.iter().enumerate() {
            out.write_record([format!("x_{}", i + 1), format_real(lo), format_real(hi)])?;
        }
        if let Some((lo, hi)) = dom.time {
            out.write_record(["t".to_string(), format_real(lo), format_real(hi)])?;
        }
        out.flush()?;
    }
    writeln!(w, "[centers]")?;
    write_point_set(&mut w, model.centers())?;
    writeln!(w, "[coefficients]")?;
    let mut out = writer(&mut w);
    out.write_record(numbered("c", model.output_dim()))?;
    for c in model.coefficients() {
        out.write_record(c.iter().map(|&v| format_real(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_model<T: Real, R: Read>(r: R) -> Result<RepresenterModel<T>> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != MODEL_ARCHIVE_HEADER {
        return Err(OvkError::input(format!(
            "not a model archive or unsupported version: {first:?}"
        )));
    }
    let mut sections: Vec<(String, String)> = Vec::new();
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            sections.push((name.to_string(), String::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push_str(&line);
            body.push('\n');
        } else if !trimmed.is_empty() {
            return Err(OvkError::input("archive content before the first section"));
        }
    }
    let section = |name: &str| {
        sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_str())
            .ok_or_else(|| OvkError::input(format!("archive lacks a [{name}] section")))
    };

    let (_, kv) = read_rows(section("kernel")?.as_bytes())?;
    let get = |key: &str| {
        kv.iter()
            .find(|r| r.get(0) == Some(key))
            .and_then(|r| r.get(1))
            .ok_or_else(|| OvkError::input(format!("archive kernel section lacks `{key}`")))
    };
    let family = |key: &str| get(key)?.parse::<KernelFamily>();
    let output_dim: usize = get("output_dim")?
        .parse()
        .map_err(|_| OvkError::input("output_dim must be a positive integer"))?;
    let kernel = TimeRegularizedKernel::new(
        ScalarKernel::new(family("spatial_family")?, parse_real(get("spatial_sigma")?, "sigma")?)?,
        ScalarKernel::new(family("temporal_family")?, parse_real(get("temporal_sigma")?, "sigma")?)?,
        parse_real(get("alpha")?, "alpha")?,
        output_dim,
    )?;
    let lambda = parse_real(get("lambda")?, "lambda")?;

    let (_, dom_rows) = read_rows(section("domain")?.as_bytes())?;
    let mut spatial = Vec::new();
    let mut time = None;
    for row in &dom_rows {
        let bounds = (parse_real(&row[1], "bound")?, parse_real(&row[2], "bound")?);
        if &row[0] == "t" {
            time = Some(bounds);
        } else {
            spatial.push(bounds);
        }
    }
    let domain = BoxDomain::new(spatial, time)?;
    let (headers, rows) = read_rows(section("centers")?.as_bytes())?;
    let (d, _) = split_header(&headers)?;
    let points = rows
        .iter()
        .map(|row| parse_point(row, d))
        .collect::<Result<Vec<_>>>()?;
    let centers = PointSet::from_points(points, domain)?;

    let coefficients = read_matrix::<T, _>(section("coefficients")?.as_bytes())?;
    let coefficients = coefficients
        .row_iter()
        .map(|r| r.transpose().into_owned())
        .collect();
    RepresenterModel::from_parts(kernel, centers, coefficients, lambda)
}
