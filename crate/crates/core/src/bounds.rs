//! Computable upper bounds on ‖P0perp(δ) − P0perp‖ and its main-term residuals,
//! principal-angle diagnostics and the zero-perturbation checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, Matrix};
use crate::perturb::{b_of_delta, PerturbationPair};

/// Absolute accuracy of the SVD oracle for unit-scale projectors.
pub const ORACLE_FLOOR: f64 = 1e-12;

/// Relative slack for bound comparisons.
pub const BOUND_REL_SLACK: f64 = 1e-9;

/// e^{1/6}/√π.
pub const TAIL_C: f64 = 0.666_511_239_354_474_2;

/// C(4β)^k/(1 − 4β), dominating Σ_{p ≥ k} C(2p, p) β^p for k ≥ 1.
pub fn tail_bound(beta: f64, k: usize) -> Result<f64> {
    if !(beta > 0.0 && beta < 0.25) {
        return Err(Error::InvalidArgument(format!("tail bound needs 0 < beta < 1/4, got {beta}")));
    }
    Ok(TAIL_C * (4.0 * beta).powi(k as i32) / (1.0 - 4.0 * beta))
}

/// A right-hand side with the flag telling whether its preconditions hold.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub valid: bool,
}

impl Bound {
    fn new(value: f64, valid: bool) -> Self {
        Bound {
            value: if value.is_finite() && value >= 0.0 { value } else { f64::INFINITY },
            valid,
        }
    }

    /// True unless the bound is valid and `measured` exceeds it beyond the
    /// SVD oracle's accuracy.
    pub fn holds(&self, measured: f64) -> bool {
        !self.valid || measured <= self.value * (1.0 + BOUND_REL_SLACK) + ORACLE_FLOOR
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub delta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta: f64,
    /// ‖B(δ)‖/μ_min
    pub beta: f64,
    /// B(δ)/μ_min
    pub beta_bound: f64,
    /// 2|δ|Θ1Θ2 + δ²Θ1²Θ2
    pub beta_theta_bound: f64,
    pub cos_theta_r: f64,
    pub cos_theta_l: f64,
    pub s0b_norm: f64,
    pub s0bp0_norm: f64,
    /// |δ|Θ1Θ2(2cos θ_r + |δ|Θ1 cos θ_l)
    pub s0b_upper: f64,
    pub rhs_thm3: Bound,
    pub rhs_cor1: Bound,
    pub rhs_cor2: Bound,
    /// `rhs_cor2` with the scalar bound on ‖S0 B(δ)‖ in place of the operator norm.
    pub rhs_cor2_scalar: Bound,
    pub rhs_thm4: Bound,
    pub rhs_thm5: Bound,
    pub rhs_thm6: Bound,
    pub he_norm: f64,
    pub hte_norm: f64,
    pub s0_he_p0_norm: f64,
    pub s0_ee_p0_norm: f64,
}

/// Column order of [`BoundsReport::csv_row`].
pub const BOUNDS_CSV_HEADER: &[&str] = &[
    "delta",
    "theta1",
    "theta2",
    "theta",
    "beta",
    "beta_bound",
    "beta_theta_bound",
    "cos_theta_r",
    "cos_theta_l",
    "s0b_norm",
    "s0bp0_norm",
    "s0b_upper",
    "rhs_thm3",
    "valid_thm3",
    "rhs_cor1",
    "valid_cor1",
    "rhs_cor2",
    "valid_cor2",
    "rhs_cor2_scalar",
    "valid_cor2_scalar",
    "rhs_thm4",
    "valid_thm4",
    "rhs_thm5",
    "valid_thm5",
    "rhs_thm6",
    "valid_thm6",
    "he_norm",
    "hte_norm",
    "s0_he_p0_norm",
    "s0_ee_p0_norm",
];

impl BoundsReport {
    pub fn csv_row(&self) -> Vec<String> {
        let f = crate::series::fmt17;
        let b = |x: &Bound| vec![f(x.value), (x.valid as u8).to_string()];
        let mut row: Vec<String> = [
            self.delta,
            self.theta1,
            self.theta2,
            self.theta,
            self.beta,
            self.beta_bound,
            self.beta_theta_bound,
            self.cos_theta_r,
            self.cos_theta_l,
            self.s0b_norm,
            self.s0bp0_norm,
            self.s0b_upper,
        ]
        .iter()
        .map(|x| f(*x))
        .collect();
        for x in [
            &self.rhs_thm3,
            &self.rhs_cor1,
            &self.rhs_cor2,
            &self.rhs_cor2_scalar,
            &self.rhs_thm4,
            &self.rhs_thm5,
            &self.rhs_thm6,
        ] {
            row.extend(b(x));
        }
        row.extend(
            [self.he_norm, self.hte_norm, self.s0_he_p0_norm, self.s0_ee_p0_norm]
                .iter()
                .map(|x| f(*x)),
        );
        row
    }
}

/// Cosine of the minimal principal angle between the column spaces of `m1` and `m2`.
pub fn cos_min_angle(m1: &Matrix, m2: &Matrix) -> f64 {
    if m1.amax() == 0.0 || m2.amax() == 0.0 {
        return 0.0;
    }
    let q1 = linalg::column_basis(m1, 1e-12);
    let q2 = linalg::column_basis(m2, 1e-12);
    if q1.ncols() == 0 || q2.ncols() == 0 {
        return 0.0;
    }
    norm2(&(q1.transpose() * q2)).min(1.0)
}

/// Evaluates every bound at δ.
pub fn compute_bounds(p: &PerturbationPair, delta: f64) -> BoundsReport {
    let dec = &p.dec;
    let c = TAIL_C;
    let theta1 = (p.a2_norm / dec.mu_max).sqrt();
    let theta2 = dec.mu_max / dec.mu_min;
    let b = b_of_delta(p, delta);
    let beta = norm2(&b) / dec.mu_min;
    let beta_bound = p.beta_bound(delta);
    let beta_theta_bound = 2.0 * delta.abs() * theta1 * theta2 + delta * delta * theta1 * theta1 * theta2;
    let s0b = &dec.s0 * &b;
    let s0b_norm = norm2(&s0b);
    let s0bp0_norm = norm2(&(&s0b * &dec.p0));
    let cos_theta_l = cos_min_angle(&p.h, &p.e);
    let cos_theta_r = cos_min_angle(&p.h.transpose(), &p.e.transpose());
    let s0b_upper = delta.abs() * theta1 * theta2 * (2.0 * cos_theta_r + delta.abs() * theta1 * cos_theta_l);
    let op_ok = beta < 0.25;
    let sc_ok = beta_bound < 0.25;
    let den = 1.0 - 4.0 * beta;
    let he = &p.h * p.e.transpose();
    BoundsReport {
        delta,
        theta1,
        theta2,
        theta: theta1 * theta2,
        beta,
        beta_bound,
        beta_theta_bound,
        cos_theta_r,
        cos_theta_l,
        s0b_norm,
        s0bp0_norm,
        s0b_upper,
        rhs_thm3: Bound::new(4.0 * c * s0bp0_norm / den, op_ok),
        rhs_cor1: Bound::new(4.0 * c * beta / den, op_ok),
        rhs_cor2: Bound::new(4.0 * c * s0b_norm / den, op_ok),
        rhs_cor2_scalar: Bound::new(4.0 * c * s0b_upper / den, op_ok),
        rhs_thm4: Bound::new(16.0 * c * beta * beta / den, op_ok),
        rhs_thm5: Bound::new(16.0 * c * s0b_norm * s0bp0_norm / den, sc_ok),
        rhs_thm6: Bound::new(16.0 * c * s0bp0_norm * s0bp0_norm / den, sc_ok),
        he_norm: norm2(&he),
        hte_norm: norm2(&(p.h.transpose() * &p.e)),
        s0_he_p0_norm: norm2(&(&dec.s0 * &he * &dec.p0)),
        s0_ee_p0_norm: norm2(&(&dec.s0 * &p.a2 * &dec.p0)),
    }
}

/// (σ1min σ2min cos θ_min, ‖M1ᵀM2‖, ‖M1‖‖M2‖ cos θ_min).
pub fn sandwich_check(m1: &Matrix, m2: &Matrix) -> (f64, f64, f64) {
    let cos = cos_min_angle(m1, m2);
    let s1 = linalg::positive_singular_values(m1, 1e-12);
    let s2 = linalg::positive_singular_values(m2, 1e-12);
    let min1 = s1.last().copied().unwrap_or(0.0);
    let min2 = s2.last().copied().unwrap_or(0.0);
    let max1 = s1.first().copied().unwrap_or(0.0);
    let max2 = s2.first().copied().unwrap_or(0.0);
    (min1 * min2 * cos, norm2(&(m1.transpose() * m2)), max1 * max2 * cos)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Condition {
    /// Raw residual norm.
    pub residual: f64,
    /// Residual made dimensionless by the natural scale of the condition.
    pub scaled: f64,
    pub pass: bool,
}

impl Condition {
    fn new(residual: f64, scale: f64, tol: f64) -> Self {
        let scaled = if scale > 0.0 { residual / scale } else { residual };
        Condition {
            residual,
            scaled,
            pass: scaled <= tol,
        }
    }
}

/// Residuals of the equivalent zero-perturbation conditions and of the
/// right/left orthogonality of H and E.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroPerturbationReport {
    /// S0HEᵀP0 = S0EEᵀP0 = 0
    pub cond2: Condition,
    /// S0HEᵀP0 + P0HEᵀS0 = S0EEᵀP0 + P0EEᵀS0 = 0
    pub cond4: Condition,
    /// HEᵀP0 = 0 and HᵀEEᵀP0 = 0
    pub cond5: Condition,
    /// HEᵀ = 0
    pub right_orthogonal: Condition,
    /// HᵀE = 0
    pub left_orthogonal: Condition,
    pub biorthogonal: bool,
    /// Conditions 2, 4 and 5 agree.
    pub consistent: bool,
}

pub fn check_zero_perturbation(p: &PerturbationPair, tol: f64) -> ZeroPerturbationReport {
    let dec = &p.dec;
    let hn = norm2(&p.h);
    let en = norm2(&p.e);
    let he = &p.h * p.e.transpose();
    let s_he_p = &dec.s0 * &he * &dec.p0;
    let s_ee_p = &dec.s0 * &p.a2 * &dec.p0;
    let lin = hn * en / dec.mu_min;
    let quad = en * en / dec.mu_min;
    let scaled_max = |a: f64, sa: f64, b: f64, sb: f64| {
        let r = (if sa > 0.0 { a / sa } else { a }).max(if sb > 0.0 { b / sb } else { b });
        (a.max(b), r)
    };
    let (r2, s2) = scaled_max(norm2(&s_he_p), lin, norm2(&s_ee_p), quad);
    let (r4, s4) = scaled_max(
        norm2(&(&s_he_p + &dec.p0 * &he * &dec.s0)),
        lin,
        norm2(&(&s_ee_p + &dec.p0 * &p.a2 * &dec.s0)),
        quad,
    );
    let (r5, s5) = scaled_max(
        norm2(&(&he * &dec.p0)),
        hn * en,
        norm2(&(p.h.transpose() * &p.a2 * &dec.p0)),
        hn * en * en,
    );
    let mk = |r: f64, s: f64| Condition {
        residual: r,
        scaled: s,
        pass: s <= tol,
    };
    let cond2 = mk(r2, s2);
    let cond4 = mk(r4, s4);
    let cond5 = mk(r5, s5);
    let right = Condition::new(norm2(&he), hn * en, tol);
    let left = Condition::new(norm2(&(p.h.transpose() * &p.e)), hn * en, tol);
    ZeroPerturbationReport {
        consistent: cond2.pass == cond4.pass && cond4.pass == cond5.pass,
        biorthogonal: right.pass && left.pass,
        cond2,
        cond4,
        cond5,
        right_orthogonal: right,
        left_orthogonal: left,
    }
}
