//! Exact examples: exponential signal with constant noise, and constant
//! signal with saw noise.

use serde::Serialize;

use super::WindowRule;
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::perturb::{delta_p_direct, PerturbationPair};
use crate::series::{generate, SeriesSpec};
use crate::spectral::RankPolicy;
use crate::trajectory::embed;

/// Largest a^N the exponential example will normalize by.
pub const MAX_GROWTH: f64 = 1e300;

/// ‖ΔP‖ and related quantities for x_n = a^n, e_n = 1, in the plane
/// spanned by q1 = W_L/‖W_L‖ and the unit normal q2 of E_L against it.
///
/// Everything is scaled by powers of a so nothing overflows.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExpConstPoint {
    pub n: usize,
    pub l: usize,
    pub k: usize,
    /// ‖P0perp(δ) − P0perp‖
    pub delta_p: f64,
    /// ‖ΔP − δZ0‖ with Z0 = EHᵀS0 + S0HEᵀ
    pub res_z0: f64,
    /// ‖ΔP − δV0_1‖
    pub res_v01: f64,
    /// a^N/√N ‖ΔP‖
    pub scaled_delta_p: f64,
    /// a^N ‖ΔP‖
    pub growth_delta_p: f64,
    /// a^N ‖ΔP − δZ0‖
    pub scaled_res_z0: f64,
}

/// Limits of the normalized sequences for one window regime.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExpConstLimits {
    /// Limit of a^N/√N ‖ΔP‖ (or a^N ‖ΔP‖ for fixed L) with the nominal constant.
    pub nominal: f64,
    /// Same limit with the constant that follows from the exact 2×2 reduction.
    pub derived: f64,
    /// Limit of a^N ‖ΔP − δZ0‖ with the nominal constant; none for fixed L.
    pub z_nominal: Option<f64>,
    pub z_derived: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpConstPackage {
    pub a: f64,
    pub delta: f64,
    pub window: WindowRule,
    pub points: Vec<ExpConstPoint>,
    pub limits: ExpConstLimits,
}

impl ExpConstPackage {
    /// The sequence compared with `limits`: a^N/√N‖ΔP‖, or a^N‖ΔP‖ for fixed L.
    pub fn normalized(&self) -> Vec<f64> {
        let fixed_l = matches!(self.window, WindowRule::FixedL { .. });
        self.points
            .iter()
            .map(|p| if fixed_l { p.growth_delta_p } else { p.scaled_delta_p })
            .collect()
    }
}

/// Σ_{i<j} r^i
fn geometric(r: f64, j: usize) -> f64 {
    if r == 1.0 {
        j as f64
    } else {
        (1.0 - r.powi(j as i32)) / (1.0 - r)
    }
}

/// ‖W_j‖², β_j for W_j = (1, a, …, a^{j−1}), E_j = (1, …, 1).
pub fn w_norm_sq(a: f64, j: usize) -> f64 {
    (a.powi(2 * j as i32) - 1.0) / (a * a - 1.0)
}

pub fn beta_j(a: f64, j: usize) -> f64 {
    (a.powi(j as i32) - 1.0) / (a - 1.0)
}

/// Nominal H(a, L).
pub fn h_nominal(a: f64, l: usize) -> f64 {
    let w2 = w_norm_sq(a, l);
    let b = beta_j(a, l);
    (a + 1.0) / a * (a.powi(l as i32) * (l as f64).sqrt() * w2 - b * b) / w2
}

/// H(a, L) from the exact reduction: ((a+1)/a) a^L √(L‖W_L‖² − β_L²)/‖W_L‖².
pub fn h_derived(a: f64, l: usize) -> f64 {
    let w2 = w_norm_sq(a, l);
    let b = beta_j(a, l);
    (a + 1.0) / a * a.powi(l as i32) * (l as f64 * w2 - b * b).sqrt() / w2
}

pub fn exp_const_limits(a: f64, delta: f64, window: WindowRule) -> ExpConstLimits {
    let ad = delta.abs();
    let base = (a + 1.0) * (a * a - 1.0).sqrt() / a;
    let zb = 2.0 * (a + 1.0) * (a + 1.0) / a;
    match window {
        WindowRule::Proportional { alpha } => ExpConstLimits {
            nominal: ad * alpha * base,
            derived: ad * alpha.sqrt() * base,
            z_nominal: Some(ad * zb),
            z_derived: Some(ad * zb),
        },
        WindowRule::FixedK { k } => {
            let t = a.powi(-(k as i32));
            ExpConstLimits {
                nominal: ad * base / (1.0 - t),
                derived: ad * base / (1.0 + t),
                z_nominal: Some(ad * zb / (1.0 - t)),
                z_derived: Some(ad * zb / (1.0 + t)),
            }
        }
        WindowRule::FixedL { l } => ExpConstLimits {
            nominal: ad * h_nominal(a, l),
            derived: ad * h_derived(a, l),
            z_nominal: None,
            z_derived: None,
        },
    }
}

/// Scaled plane quantities (c1, c2, g, κ, ε): E_L = √·(c1 q1 + c2 q2),
/// and the normalized Gram of H(δ) is
/// [[1 + 2δgc1ε + δ²κc1², δgc2ε + δ²κc1c2], [·, δ²κc2²]] with κ = Kε²/(s_K s_L).
struct Plane {
    c1: f64,
    c2: f64,
    g: f64,
    eps: f64,
    kappa: f64,
}

impl Plane {
    fn new(a: f64, l: usize, k: usize) -> Self {
        let r = 1.0 / a;
        let s_l = geometric(r * r, l);
        let s_k = geometric(r * r, k);
        let t_l = geometric(r, l);
        let t_k = geometric(r, k);
        let c1 = t_l / s_l.sqrt();
        let c2 = (l as f64 - c1 * c1).max(0.0).sqrt();
        let eps = r.powi((l + k - 2) as i32);
        Plane {
            c1,
            c2,
            g: t_k / (s_k * s_l.sqrt()),
            eps,
            kappa: k as f64 * eps * eps / (s_k * s_l),
        }
    }

    /// (ΔP, δZ0, δV0_1) as 2×2 matrices in the (q1, q2) basis.
    fn operators(&self, delta: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2], [[f64; 2]; 2]) {
        let Plane { c1, c2, g, eps, kappa } = *self;
        let y = delta * g * c2 * eps;
        let u = delta * delta * kappa * c1 * c2;
        let dm1 = 2.0 * delta * g * c1 * eps + delta * delta * kappa * (c1 * c1 - c2 * c2);
        let den = 1.0 + dm1;
        let (s2, sc, sc_minus_y);
        if den > 0.0 {
            // tan 2θ = x, expanded so that sc − y carries no cancellation.
            let x = 2.0 * (y + u) / den;
            let rt = (1.0 + x * x).sqrt();
            s2 = x * x / (2.0 * rt * (rt + 1.0));
            sc = 0.5 * x / rt;
            let half_x_minus_y = (u - y * dm1) / den;
            sc_minus_y = (half_x_minus_y - y * x * x / (rt + 1.0)) / rt;
        } else {
            let th = 0.5 * (2.0 * (y + u)).atan2(den - delta * delta * kappa * c2 * c2);
            s2 = th.sin().powi(2);
            sc = th.sin() * th.cos();
            sc_minus_y = sc - y;
        }
        let dp = [[-s2, sc], [sc, s2]];
        let z = delta * g * eps;
        let z0 = [[2.0 * c1 * z, c2 * z], [c2 * z, 0.0]];
        let v = [[-s2, sc_minus_y], [sc_minus_y, s2]];
        (dp, z0, v)
    }
}

fn sym2_norm(m: [[f64; 2]; 2]) -> f64 {
    let (p, q, r) = (m[0][0], m[0][1], m[1][1]);
    let mid = 0.5 * (p + r);
    let rad = (0.5 * (p - r)).hypot(q);
    mid.abs() + rad
}

/// One grid point of the exponential/constant example.
pub fn exp_const_point(a: f64, delta: f64, n: usize, l: usize) -> Result<ExpConstPoint> {
    if !(a > 1.0) {
        return Err(Error::InvalidArgument("the exponential example needs a > 1".into()));
    }
    if l < 2 || l >= n {
        return Err(Error::WindowOutOfRange { l, n });
    }
    let growth = (n as f64 * a.ln()).exp();
    if !(growth <= MAX_GROWTH) {
        let max_n = (MAX_GROWTH.ln() / a.ln()).floor() as usize;
        return Err(Error::Range { max_n });
    }
    let k = n - l + 1;
    let plane = Plane::new(a, l, k);
    let (dp, z0, v) = plane.operators(delta);
    let delta_p = sym2_norm(dp);
    let rz = [
        [dp[0][0] - z0[0][0], dp[0][1] - z0[0][1]],
        [dp[1][0] - z0[1][0], dp[1][1] - z0[1][1]],
    ];
    let res_z0 = sym2_norm(rz);
    let res_v01 = sym2_norm(v);
    Ok(ExpConstPoint {
        n,
        l,
        k,
        delta_p,
        res_z0,
        res_v01,
        scaled_delta_p: growth / (n as f64).sqrt() * delta_p,
        growth_delta_p: growth * delta_p,
        scaled_res_z0: growth * res_z0,
    })
}

/// The exponential/constant package over an N grid.
pub fn example_exp_const(a: f64, delta: f64, window: WindowRule, n_grid: &[usize]) -> Result<ExpConstPackage> {
    if !(a > 1.0) {
        return Err(Error::InvalidArgument("the exponential example needs a > 1".into()));
    }
    let points = n_grid
        .iter()
        .map(|&n| {
            let (l, _) = window.window(n)?;
            exp_const_point(a, delta, n, l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpConstPackage {
        a,
        delta,
        window,
        points,
        limits: exp_const_limits(a, delta, window),
    })
}

/// Z0^(1) = β_K(E_L W_Lᵀ + W_L E_Lᵀ)/(‖W_L‖²‖W_K‖²) as a dense L×L matrix.
pub fn z0_1_matrix(a: f64, l: usize, k: usize) -> Matrix {
    let w = Matrix::from_fn(l, 1, |i, _| a.powi(i as i32));
    let e = Matrix::from_element(l, 1, 1.0);
    let s = beta_j(a, k) / (w_norm_sq(a, l) * w_norm_sq(a, k));
    (&e * w.transpose() + &w * e.transpose()) * s
}

/// Z0^(2) = 2β_Lβ_K W_LW_Lᵀ/(‖W_L‖⁴‖W_K‖²), the factor 2 making
/// Z0^(1) − Z0^(2) equal to V0_1.
pub fn z0_2_matrix(a: f64, l: usize, k: usize) -> Matrix {
    let w = Matrix::from_fn(l, 1, |i, _| a.powi(i as i32));
    let wl = w_norm_sq(a, l);
    let s = 2.0 * beta_j(a, l) * beta_j(a, k) / (wl * wl * w_norm_sq(a, k));
    &w * w.transpose() * s
}

/// Parity case of (L, K) for the saw example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    BothEven,
    OddKEvenL,
    OddLEvenK,
    BothOdd,
}

impl Parity {
    pub fn of(l: usize, k: usize) -> Self {
        match (l % 2, k % 2) {
            (0, 0) => Parity::BothEven,
            (0, _) => Parity::OddKEvenL,
            (_, 0) => Parity::OddLEvenK,
            _ => Parity::BothOdd,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstSawPackage {
    pub delta: f64,
    pub l: usize,
    pub k: usize,
    pub parity: Parity,
    #[serde(skip)]
    pub m: Matrix,
    pub norm_closed: f64,
    pub norm_matrix: f64,
    /// 1/K + δ/L = 0 with both odd: M(δ) vanishes and ‖ΔP‖ drops to O(L^{−2}).
    pub cancelling: bool,
}

/// E_{L,w} = E_L − β_L W_L/L for the constant W and alternating E.
pub fn e_lw(l: usize) -> Matrix {
    let beta = if l % 2 == 1 { 1.0 } else { 0.0 };
    Matrix::from_fn(l, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 } - beta / l as f64)
}

/// W_E = W_L E_{L,w}ᵀ + E_{L,w} W_Lᵀ.
pub fn w_e(l: usize) -> Matrix {
    let w = Matrix::from_element(l, 1, 1.0);
    let e = e_lw(l);
    &w * e.transpose() + &e * w.transpose()
}

pub fn m_norm_closed(delta: f64, l: usize, k: usize) -> f64 {
    let (lf, kf) = (l as f64, k as f64);
    let f = 1.0 / (1.0 - delta * delta);
    match Parity::of(l, k) {
        Parity::BothEven => 0.0,
        Parity::OddKEvenL => delta.abs() * f / kf,
        Parity::OddLEvenK => delta * delta * f / lf,
        Parity::BothOdd => delta.abs() * f * (1.0 / kf + delta / lf).abs(),
    }
}

pub fn example_const_saw(delta: f64, l: usize, k: usize) -> Result<ConstSawPackage> {
    if !(delta.abs() < 0.5) {
        return Err(Error::InvalidArgument(format!("the saw example needs |delta| < 1/2, got {delta}")));
    }
    if l.min(k) <= 1 {
        return Err(Error::InvalidArgument("the saw example needs min(L, K) > 1".into()));
    }
    let (lf, kf) = (l as f64, k as f64);
    let parity = Parity::of(l, k);
    let f = delta / (1.0 - delta * delta);
    let scale = match parity {
        Parity::BothEven => 0.0,
        Parity::OddKEvenL => f / (lf * kf),
        Parity::OddLEvenK => f * delta / (lf * (lf * lf - 1.0).sqrt()),
        Parity::BothOdd => f * (1.0 / kf + delta / lf) / (lf * lf - 1.0).sqrt(),
    };
    let m = w_e(l) * scale;
    let norm_matrix = norm2(&m);
    let cancelling = parity == Parity::BothOdd && (1.0 / kf + delta / lf).abs() <= 1e-12 / kf;
    Ok(ConstSawPackage {
        delta,
        l,
        k,
        parity,
        norm_closed: m_norm_closed(delta, l, k),
        norm_matrix,
        m,
        cancelling,
    })
}

/// Pair for the constant signal with saw noise.
pub fn const_saw_pair(l: usize, k: usize) -> Result<PerturbationPair> {
    let n = l + k - 1;
    let f = generate(&SeriesSpec::Constant, n, None)?;
    let e = generate(&SeriesSpec::Saw, n, None)?;
    PerturbationPair::new(embed(&f.values, l)?, embed(&e.values, l)?, RankPolicy::Known(1))
}

/// ‖ΔP − M(δ)‖ with ΔP from the SVD oracle.
pub fn const_saw_residual(pkg: &ConstSawPackage) -> Result<f64> {
    let p = const_saw_pair(pkg.l, pkg.k)?;
    let dp = delta_p_direct(&p, pkg.delta)?;
    Ok(norm2(&(dp - &pkg.m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::v0_1;

    fn exp_pair(a: f64, n: usize, l: usize) -> PerturbationPair {
        let f = generate(&SeriesSpec::exponential(a), n, None).unwrap();
        let e = generate(&SeriesSpec::Constant, n, None).unwrap();
        PerturbationPair::new(
            embed(&f.values, l).unwrap(),
            embed(&e.values, l).unwrap(),
            RankPolicy::Known(1),
        )
        .unwrap()
    }

    #[test]
    fn nominal_limit_example() {
        let lim = exp_const_limits(2.0, 1.0, WindowRule::Proportional { alpha: 0.5 });
        assert!((lim.nominal - 0.75 * 3f64.sqrt()).abs() < 1e-12);
        assert!((lim.derived / lim.nominal - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn plane_matches_oracle() {
        for &(a, n, l, delta) in &[(1.1, 21, 10, 1.0), (2.0, 15, 7, 0.5), (1.5, 20, 5, -0.7), (1.1, 41, 21, 1.0)] {
            let pt = exp_const_point(a, delta, n, l).unwrap();
            let p = exp_pair(a, n, l);
            let dp = delta_p_direct(&p, delta).unwrap();
            let oracle = norm2(&dp);
            assert!((pt.delta_p - oracle).abs() <= 1e-9 * oracle + 1e-14, "{a} {n}: {} vs {oracle}", pt.delta_p);
            let z0 = z0_1_matrix(a, l, n - l + 1);
            let rz = norm2(&(&dp - &z0 * delta));
            assert!((pt.res_z0 - rz).abs() <= 1e-7 * rz + 1e-14, "{} vs {rz}", pt.res_z0);
        }
    }

    #[test]
    fn svd_agrees_at_moderate_n() {
        let pt = exp_const_point(1.1, 1.0, 101, 51).unwrap();
        let p = exp_pair(1.1, 101, 51);
        let oracle = norm2(&delta_p_direct(&p, 1.0).unwrap());
        assert!((pt.delta_p / oracle - 1.0).abs() < 1e-6, "{} {oracle}", pt.delta_p);
    }

    #[test]
    fn z0_difference_is_v01() {
        let (a, n, l) = (1.3, 17, 8);
        let p = exp_pair(a, n, l);
        let k = n - l + 1;
        let v = z0_1_matrix(a, l, k) - z0_2_matrix(a, l, k);
        let v_ref = v0_1(&p);
        assert!(norm2(&(&v - &v_ref)) < 1e-10 * norm2(&v_ref));
    }

    #[test]
    fn derived_limits_approached() {
        let grid: Vec<usize> = (10..=30).map(|i| 20 * i + 1).collect();
        let pkg = example_exp_const(1.1, 1.0, WindowRule::Proportional { alpha: 0.5 }, &grid).unwrap();
        let last = *pkg.normalized().last().unwrap();
        assert!((last / pkg.limits.derived - 1.0).abs() < 0.04, "{last} {:?}", pkg.limits);
        let z = pkg.points.last().unwrap().scaled_res_z0;
        assert!((z / pkg.limits.z_derived.unwrap() - 1.0).abs() < 0.05, "{z}");

        let pkg = example_exp_const(2.0, 1.0, WindowRule::FixedK { k: 3 }, &[101, 201, 301]).unwrap();
        let last = *pkg.normalized().last().unwrap();
        assert!((last / pkg.limits.derived - 1.0).abs() < 0.01, "{last} {:?}", pkg.limits);
        let z = pkg.points.last().unwrap().scaled_res_z0;
        assert!((z / pkg.limits.z_derived.unwrap() - 1.0).abs() < 0.01, "{z}");

        let pkg = example_exp_const(2.0, 1.0, WindowRule::FixedL { l: 4 }, &[101, 201, 301]).unwrap();
        let last = *pkg.normalized().last().unwrap();
        assert!((last / pkg.limits.derived - 1.0).abs() < 1e-6, "{last} {:?}", pkg.limits);
    }

    #[test]
    fn v01_residual_is_second_order() {
        let a = 1.5;
        let r1 = exp_const_point(a, 0.01, 41, 5).unwrap().res_v01;
        let r2 = exp_const_point(a, 0.02, 41, 5).unwrap().res_v01;
        assert!((r2 / r1 - 4.0).abs() < 0.05, "{}", r2 / r1);
        let pt = exp_const_point(a, 1.0, 401, 5).unwrap();
        assert!(pt.res_v01 > 0.0 && pt.res_v01 < 1e-100);
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(exp_const_point(2.0, 1.0, 2000, 1000), Err(Error::Range { .. })));
    }

    #[test]
    fn const_saw_norms_match() {
        for &(l, k) in &[(10, 101), (11, 100), (11, 101), (9, 15), (12, 14)] {
            for &delta in &[-0.4, -0.25, -0.1, 0.1, 0.25, 0.4] {
                let pkg = example_const_saw(delta, l, k).unwrap();
                assert!((pkg.norm_closed - pkg.norm_matrix).abs() < 1e-12, "{l} {k} {delta}");
            }
        }
        let pkg = example_const_saw(0.25, 10, 101).unwrap();
        assert!((pkg.norm_closed - 0.25 / (0.9375 * 101.0)).abs() < 1e-15);
    }

    #[test]
    fn const_saw_both_even_is_zero() {
        let pkg = example_const_saw(0.4, 10, 20).unwrap();
        assert_eq!(pkg.norm_matrix, 0.0);
        assert!(const_saw_residual(&pkg).unwrap() < 1e-12);
    }

    #[test]
    fn const_saw_main_term() {
        let r1 = const_saw_residual(&example_const_saw(0.25, 10, 101).unwrap()).unwrap();
        let r2 = const_saw_residual(&example_const_saw(0.25, 10, 201).unwrap()).unwrap();
        assert!((r1 / r2).log2() > 1.7, "{r1} {r2}");
        let pkg = example_const_saw(0.25, 10, 101).unwrap();
        assert!(r1 < 0.1 * pkg.norm_matrix);
    }

    #[test]
    fn cancelling_flag() {
        let pkg = example_const_saw(-0.2, 11, 55).unwrap();
        assert!(pkg.cancelling);
        assert!(pkg.norm_matrix < 1e-15);
        assert!(!example_const_saw(0.2, 11, 55).unwrap().cancelling);
        assert!(example_const_saw(0.5, 10, 11).is_err());
    }
}
