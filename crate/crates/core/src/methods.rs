//! Signal-subspace methods: LRF coefficients, LS-ESPRIT and SSA reconstruction.

use nalgebra::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, Matrix};
use crate::perturb::{projector_direct, PerturbationPair, ORACLE_GAP};
use crate::spectral::SpectralDecomposition;
use crate::trajectory::diagonal_average;

/// Minimal admissible ‖P0 e_L‖.
pub const MIN_NULL_COMPONENT: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct LrfResult {
    /// (a_{L−1}, …, a_1)
    pub r: Vec<f64>,
    /// ϑ = ‖P0perp e_L‖
    pub theta: f64,
}

impl LrfResult {
    /// Coefficients in recurrence order a_1, …, a_{L−1}.
    pub fn coefficients(&self) -> Vec<f64> {
        self.r.iter().rev().copied().collect()
    }

    /// Largest |x_n − Σ a_k x_{n−k}| over n ≥ L − 1.
    pub fn residual(&self, series: &[f64]) -> f64 {
        let w = self.r.len();
        (w..series.len())
            .map(|n| {
                let pred: f64 = self.r.iter().zip(&series[n - w..n]).map(|(a, x)| a * x).sum();
                (series[n] - pred).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Continues the series by `steps` values with the recurrence.
    pub fn forecast(&self, series: &[f64], steps: usize) -> Vec<f64> {
        let w = self.r.len();
        let mut x = series.to_vec();
        for _ in 0..steps {
            let n = x.len();
            let v = self.r.iter().zip(&x[n - w..n]).map(|(a, y)| a * y).sum();
            x.push(v);
        }
        x.split_off(series.len())
    }
}

/// R = −G_L P0 e_L / ‖P0 e_L‖² for a null-space projector `p0`.
pub fn lrf_from_null_projector(p0: &Matrix) -> Result<LrfResult> {
    let l = p0.nrows();
    if l < 2 {
        return Err(Error::InvalidArgument("LRF needs L >= 2".into()));
    }
    let col = p0.column(l - 1);
    let nn = col.norm_squared();
    if !(nn.sqrt() > MIN_NULL_COMPONENT) {
        return Err(Error::VanishingNullComponent(nn.sqrt()));
    }
    let r = (0..l - 1).map(|i| -col[i] / nn).collect();
    Ok(LrfResult {
        r,
        theta: (1.0 - nn).max(0.0).sqrt(),
    })
}

pub fn lrf_coefficients(dec: &SpectralDecomposition) -> Result<LrfResult> {
    lrf_from_null_projector(&dec.p0)
}

/// R(δ) from P0(δ) = I − P0perp(δ).
pub fn lrf_perturbed(p: &PerturbationPair, delta: f64, d: usize) -> Result<LrfResult> {
    let pp = projector_direct(p, delta, d)?.matrix;
    let l = p.l();
    lrf_from_null_projector(&(Matrix::identity(l, l) - pp))
}

/// Bound on ‖R(δ) − R‖ in terms of ΔP and ϑ.
pub fn lrf_error_bound(delta_p: f64, theta: f64) -> Result<f64> {
    let c2 = 1.0 - theta * theta;
    let c = c2.max(0.0).sqrt();
    if !(delta_p < c) {
        return Err(Error::Precondition(format!(
            "LRF bound needs Delta P < sqrt(1 - theta^2) = {c}, got {delta_p}"
        )));
    }
    let q = 1.0 - delta_p / c;
    Ok(delta_p / c2 / (q * q) * (1.0 + 2.0 / c))
}

#[derive(Clone, Debug, Serialize)]
pub struct EspritResult {
    #[serde(skip)]
    pub d: Matrix,
    /// Eigenvalues as (re, im), sorted by decreasing modulus then argument.
    pub eigenvalues: Vec<(f64, f64)>,
    /// arg(λ)/2π
    pub frequencies: Vec<f64>,
    /// |λ|
    pub moduli: Vec<f64>,
    /// ‖UᵀF1U‖/‖U‖²
    pub upsilon: f64,
}

fn esprit_parts(u: &Matrix) -> (Matrix, Matrix) {
    let l = u.nrows();
    let top = u.rows(0, l - 1);
    let bottom = u.rows(1, l - 1);
    (top.transpose() * top, top.transpose() * bottom)
}

fn esprit_from_d(d: Matrix, upsilon: f64) -> EspritResult {
    let mut ev: Vec<Complex<f64>> = d.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.arg().total_cmp(&a.arg())));
    EspritResult {
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
        frequencies: ev.iter().map(|z| z.arg() / (2.0 * std::f64::consts::PI)).collect(),
        moduli: ev.iter().map(|z| z.norm()).collect(),
        upsilon,
        d,
    }
}

/// D = (UᵀF1U)^{-1} UᵀF2U for a basis U (L × d) of the signal subspace.
pub fn esprit(u: &Matrix) -> Result<EspritResult> {
    if u.nrows() < 2 || u.ncols() == 0 || u.ncols() >= u.nrows() {
        return Err(Error::InvalidArgument("ESPRIT basis must be L x d with 0 < d < L".into()));
    }
    let (g1, g2) = esprit_parts(u);
    let d = linalg::solve(&g1, &g2).ok_or(Error::SingularBasis)?;
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularBasis);
    }
    let un = norm2(u);
    Ok(esprit_from_d(d, norm2(&g1) / (un * un)))
}

/// D̂(δ) built from the fixed basis `u` of the unperturbed subspace and P0perp(δ).
pub fn esprit_projected(u: &Matrix, pperp_delta: &Matrix, pperp: &Matrix) -> Result<EspritResult> {
    let dp = norm2(&(pperp_delta - pperp));
    if !(dp < 1.0) {
        return Err(Error::Precondition(format!("ESPRIT needs Delta P < 1, got {dp}")));
    }
    let base = esprit(u)?;
    let v = pperp_delta * u;
    let (g1, g2) = esprit_parts(&v);
    let d = linalg::solve(&g1, &g2).ok_or(Error::SingularBasis)?;
    Ok(esprit_from_d(d, base.upsilon))
}

/// D̂(δ) for the default basis (leading eigenvectors of HHᵀ).
pub fn esprit_perturbed(p: &PerturbationPair, delta: f64, d: usize) -> Result<EspritResult> {
    let pp = projector_direct(p, delta, d)?.matrix;
    esprit_projected(&p.dec.basis, &pp, &p.dec.p0perp)
}

/// D(δ) from the leading left singular vectors of H + δE.
pub fn esprit_svd(p: &PerturbationPair, delta: f64, d: usize) -> Result<EspritResult> {
    let u = linalg::leading_basis(&p.h_delta(delta), d, ORACLE_GAP)?;
    esprit(&u)
}

/// (2ΔP/υ)(1 + 1/(1 − 2ΔP/υ)).
pub fn esprit_error_bound(delta_p: f64, upsilon: f64) -> Result<f64> {
    if !(delta_p < upsilon / 2.0) {
        return Err(Error::Precondition(format!(
            "ESPRIT bound needs Delta P < upsilon/2 = {}, got {delta_p}",
            upsilon / 2.0
        )));
    }
    let x = 2.0 * delta_p / upsilon;
    Ok(x * (1.0 + 1.0 / (1.0 - x)))
}

/// Basis-free variant with 1 − ϑ² in place of υ.
pub fn esprit_error_bound_basis_free(delta_p: f64, theta: f64) -> Result<f64> {
    esprit_error_bound(delta_p, 1.0 - theta * theta)
}

#[derive(Clone, Debug)]
pub struct SsaResult {
    /// F̃(δ)
    pub series: Vec<f64>,
    /// F̃(δ) − F
    pub error: Vec<f64>,
    pub error_max: f64,
    /// P0perp(δ)H(δ) − H
    pub delta_matrix: Matrix,
}

/// Rank-d SSA reconstruction of the perturbed series.
pub fn ssa_reconstruct(p: &PerturbationPair, delta: f64, d: usize) -> Result<SsaResult> {
    let hd = p.h_delta(delta);
    let u = linalg::leading_basis(&hd, d, ORACLE_GAP)?;
    let approx = &u * (u.transpose() * &hd);
    let series = diagonal_average(&approx);
    let signal = diagonal_average(&p.h);
    let error: Vec<f64> = series.iter().zip(&signal).map(|(a, b)| a - b).collect();
    let error_max = error.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(SsaResult {
        delta_matrix: approx - &p.h,
        series,
        error,
        error_max,
    })
}
