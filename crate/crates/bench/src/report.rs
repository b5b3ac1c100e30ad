use ovk_core::{OvkError, Result};

/// Ordinary least squares of `log error` against `log N`.
///
/// Returns `(slope, stderr)`.
pub fn fit_slope(rows: &[(f64, f64)]) -> Result<(f64, f64)> {
    if rows.len() < 3 {
        return Err(OvkError::input(format!("slope fit needs at least 3 rows, got {}", rows.len())));
    }
    if let Some(&(n, e)) = rows.iter().find(|&&(n, e)| !(n > 0.0 && e > 0.0 && n.is_finite() && e.is_finite())) {
        return Err(OvkError::input(format!("slope fit needs positive N and error, got ({n}, {e})")));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, e)| (n.ln(), e.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(OvkError::input("slope fit needs at least two distinct N"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (m - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub h_fill: f64,
    pub l2_field: f64,
    pub l2_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slope {
    pub slope: f64,
    pub stderr: f64,
}

/// Errors over a sample-size sweep and the fitted decay exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub field_slope: Option<Slope>,
    pub dt_slope: Option<Slope>,
}

impl RateReport {
    pub fn from_rows(rows: Vec<RateRow>) -> Result<Self> {
        let fit = |f: fn(&RateRow) -> f64| -> Result<Option<Slope>> {
            if rows.len() < 3 {
                return Ok(None);
            }
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, f(r))).collect();
            let (slope, stderr) = fit_slope(&pts)?;
            Ok(Some(Slope { slope, stderr }))
        };
        let field_slope = fit(|r| r.l2_field)?;
        let dt_slope = fit(|r| r.l2_dt)?;
        Ok(Self { rows, field_slope, dt_slope })
    }

    /// The slope used for rate checks: the field error's.
    pub fn fitted_slope(&self) -> Option<f64> {
        self.field_slope.as_ref().map(|s| s.slope)
    }

    pub fn field_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l2_field < w[0].l2_field)
    }

    pub fn dt_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l2_dt < w[0].l2_dt)
    }
}
