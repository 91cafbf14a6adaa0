//! Least-squares rate fits.

use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub slope_half_width: f64,
    /// Root mean square residual.
    pub rms_residual: f64,
    pub points: usize,
}

/// Ordinary least squares y = slope·x + intercept.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let se = if n > 2 { (ss / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Some(LineFit {
        slope,
        intercept,
        slope_half_width: 2.0 * se,
        rms_residual: (ss / n as f64).sqrt(),
        points: n,
    })
}

/// Indices of the top half of a grid of `n` points (the larger half when odd).
pub fn top_half(n: usize) -> std::ops::Range<usize> {
    n / 2..n
}

/// log-log fit over the top half of the grid; nonpositive values are skipped.
pub fn fit_loglog_top_half(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let r = top_half(x.len());
    let (lx, ly): (Vec<f64>, Vec<f64>) = x[r.clone()]
        .iter()
        .zip(&y[r])
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    fit_line(&lx, &ly)
}

/// Fit of log y against x over the top half of the grid.
pub fn fit_semilog_top_half(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let r = top_half(x.len());
    let (lx, ly): (Vec<f64>, Vec<f64>) = x[r.clone()]
        .iter()
        .zip(&y[r])
        .filter(|(_, b)| **b > 0.0)
        .map(|(a, b)| (*a, b.ln()))
        .unzip();
    fit_line(&lx, &ly)
}

/// Running supremum from the right: env[i] = max_{j ≥ i} v[j].
pub fn tail_envelope(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

pub fn is_nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

/// True when |v_i − target| is nonincreasing in i.
pub fn approaches_monotonically(v: &[f64], target: f64) -> bool {
    let d: Vec<f64> = v.iter().map(|x| (x - target).abs()).collect();
    is_nonincreasing(&d)
}
