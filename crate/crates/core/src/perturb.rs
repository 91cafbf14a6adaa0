//! Perturbation of the signal projector: A1, A2, B(δ), the power series in
//! B(δ) and the closed-form main terms.

use crate::bounds::{tail_bound, TAIL_C};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::spectral::{decompose, RankPolicy, SpectralDecomposition};

/// Largest series order the truncation will go to.
pub const MAX_SERIES_ORDER: usize = 250;

/// Relative singular value gap required by the SVD oracle.
pub const ORACLE_GAP: f64 = 1e-8;

/// Signal and noise trajectory matrices with the derived Gram perturbations.
#[derive(Clone, Debug)]
pub struct PerturbationPair {
    pub h: Matrix,
    pub e: Matrix,
    pub dec: SpectralDecomposition,
    /// HEᵀ + EHᵀ
    pub a1: Matrix,
    /// EEᵀ
    pub a2: Matrix,
    pub a1_norm: f64,
    /// ν_max
    pub a2_norm: f64,
}

impl PerturbationPair {
    pub fn new(h: Matrix, e: Matrix, policy: RankPolicy) -> Result<Self> {
        if h.shape() != e.shape() {
            return Err(Error::InvalidArgument(format!(
                "signal is {:?} but noise is {:?}",
                h.shape(),
                e.shape()
            )));
        }
        let dec = decompose(&h, policy)?;
        Ok(Self::with_decomposition(h, e, dec))
    }

    pub fn with_decomposition(h: Matrix, e: Matrix, dec: SpectralDecomposition) -> Self {
        let he = &h * e.transpose();
        let a1 = linalg::symmetrize(&(&he + he.transpose()));
        let a2 = linalg::symmetrize(&(&e * e.transpose()));
        let a1_norm = linalg::norm2(&a1);
        let a2_norm = linalg::norm2(&a2);
        PerturbationPair {
            h,
            e,
            dec,
            a1,
            a2,
            a1_norm,
            a2_norm,
        }
    }

    pub fn l(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    pub fn d(&self) -> usize {
        self.dec.d
    }

    /// H + δE.
    pub fn h_delta(&self, delta: f64) -> Matrix {
        &self.h + &self.e * delta
    }

    /// Scalar bound B(δ)/μ_min.
    pub fn beta_bound(&self, delta: f64) -> f64 {
        b_norm_bound(self, delta) / self.dec.mu_min
    }

    /// Operator ratio ‖B(δ)‖/μ_min.
    pub fn beta(&self, delta: f64) -> f64 {
        linalg::norm2(&b_of_delta(self, delta)) / self.dec.mu_min
    }
}

/// Kind of operator carried by [`DeltaOperator`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// P0perp(δ) from the SVD of H + δE.
    Direct,
    /// P0perp + Σ_{p ≤ order} W_p(δ).
    Series(usize),
    W1,
    V01,
    V02,
    LDelta,
    KDelta,
    TDelta,
}

#[derive(Clone, Debug)]
pub struct DeltaOperator {
    pub delta: f64,
    pub matrix: Matrix,
    pub kind: OperatorKind,
    /// Rigorous bound on the truncation error, when one is available.
    pub tail_bound: Option<f64>,
}

/// B(δ) = δA1 + δ²A2.
pub fn b_of_delta(p: &PerturbationPair, delta: f64) -> Matrix {
    &p.a1 * delta + &p.a2 * (delta * delta)
}

/// |δ|‖A1‖ + δ²‖A2‖.
pub fn b_norm_bound(p: &PerturbationPair, delta: f64) -> f64 {
    delta.abs() * p.a1_norm + delta * delta * p.a2_norm
}

/// Positive root δ0 of δ‖A1‖ + δ²‖A2‖ = c·μ_min; infinite when E produces no perturbation.
pub fn radius_delta0(p: &PerturbationPair, c: f64) -> f64 {
    radius_from_norms(p.a1_norm, p.a2_norm, c * p.dec.mu_min)
}

pub fn radius_from_norms(a1: f64, a2: f64, target: f64) -> f64 {
    if a2 == 0.0 {
        if a1 == 0.0 {
            f64::INFINITY
        } else {
            target / a1
        }
    } else {
        2.0 * target / (a1 + (a1 * a1 + 4.0 * a2 * target).sqrt())
    }
}

/// P0perp(δ) from the d leading left singular vectors of H + δE.
pub fn projector_direct(p: &PerturbationPair, delta: f64, d: usize) -> Result<DeltaOperator> {
    let m = linalg::leading_projector(&p.h_delta(delta), d, ORACLE_GAP)?;
    Ok(DeltaOperator {
        delta,
        matrix: m,
        kind: OperatorKind::Direct,
        tail_bound: None,
    })
}

/// P0perp(δ) − P0perp from the SVD oracle.
pub fn delta_p_direct(p: &PerturbationPair, delta: f64) -> Result<Matrix> {
    Ok(projector_direct(p, delta, p.d())?.matrix - &p.dec.p0perp)
}

// Scaled pieces: S̃^(l) = μ_min^l S0^(l) and B̃ = B/μ_min. A product with l1+…+l_{p+1} = p
// and p factors of B is unchanged by the scaling, and nothing under- or overflows.
fn scaled_powers(dec: &SpectralDecomposition, order: usize) -> Vec<Matrix> {
    let l = dec.dim();
    (0..=order)
        .map(|k| {
            if k == 0 {
                -&dec.p0
            } else {
                let mut out = Matrix::zeros(l, l);
                for c in &dec.clusters {
                    out += &c.projector * (dec.mu_min / c.mu).powi(k as i32);
                }
                out
            }
        })
        .collect()
}

/// W_1(δ), …, W_order(δ) by dynamic programming over compositions:
/// Q_0(s) = S^(s), Q_j(s) = Σ_l Q_{j−1}(s−l) B S^(l), W_p = (−1)^p Q_p(p).
pub fn series_terms(p: &PerturbationPair, delta: f64, order: usize) -> Vec<Matrix> {
    let dec = &p.dec;
    let s = scaled_powers(dec, order);
    let b = b_of_delta(p, delta) / dec.mu_min;
    let bs: Vec<Matrix> = s.iter().map(|m| &b * m).collect();
    let mut prev: Vec<Matrix> = s.clone();
    let mut out = Vec::with_capacity(order);
    for j in 1..=order {
        let cur: Vec<Matrix> = (0..=order)
            .map(|t| {
                let mut acc = Matrix::zeros(dec.dim(), dec.dim());
                for l in 0..=t {
                    acc += &prev[t - l] * &bs[l];
                }
                acc
            })
            .collect();
        let w = if j % 2 == 0 { cur[j].clone() } else { -&cur[j] };
        out.push(linalg::symmetrize(&w));
        prev = cur;
    }
    out
}

/// W_p(δ) by explicit enumeration of the C(2p, p) compositions (p ≤ 6).
pub fn series_term_enumerated(p: &PerturbationPair, delta: f64, order: usize) -> Result<Matrix> {
    if order == 0 || order > 6 {
        return Err(Error::InvalidArgument("enumeration supports orders 1..=6".into()));
    }
    let dec = &p.dec;
    let s = scaled_powers(dec, order);
    let b = b_of_delta(p, delta) / dec.mu_min;
    let l = dec.dim();
    let mut acc = Matrix::zeros(l, l);
    let mut parts = vec![0usize; order + 1];
    compositions(order, 0, &mut parts, &mut |ls| {
        let mut prod = s[ls[0]].clone();
        for &li in &ls[1..] {
            prod = prod * &b * &s[li];
        }
        acc += prod;
    });
    if order % 2 == 1 {
        acc = -acc;
    }
    Ok(acc)
}

fn compositions(rest: usize, idx: usize, parts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if idx + 1 == parts.len() {
        parts[idx] = rest;
        f(parts);
        return;
    }
    for v in 0..=rest {
        parts[idx] = v;
        compositions(rest - v, idx + 1, parts, f);
    }
}

/// Smallest order P with C(4β)^{P+1}/(1−4β) ≤ tol.
pub fn required_order(beta: f64, tol: f64) -> Option<usize> {
    if beta == 0.0 {
        return Some(0);
    }
    (0..=MAX_SERIES_ORDER).find(|&k| tail_bound(beta, k + 1).is_ok_and(|t| t <= tol))
}

/// P0perp + Σ_{p ≤ P} W_p(δ) with P chosen from the tail certificate.
pub fn series_projector(p: &PerturbationPair, delta: f64, tol: f64) -> Result<DeltaOperator> {
    let beta = p.beta_bound(delta);
    if !(beta < 0.25) {
        return Err(Error::Radius { beta, limit: 0.25 });
    }
    let order = required_order(beta, tol).ok_or_else(|| {
        Error::Precondition(format!(
            "tail bound with beta = {beta} needs more than {MAX_SERIES_ORDER} terms for tol {tol}"
        ))
    })?;
    let mut m = p.dec.p0perp.clone();
    for w in series_terms(p, delta, order) {
        m += w;
    }
    let tail = if beta == 0.0 { 0.0 } else { tail_bound(beta, order + 1)? };
    Ok(DeltaOperator {
        delta,
        matrix: m,
        kind: OperatorKind::Series(order),
        tail_bound: Some(tail),
    })
}

/// Coefficient of δ: P0 A1 S0 + S0 A1 P0.
pub fn v0_1(p: &PerturbationPair) -> Matrix {
    let d = &p.dec;
    let x = &d.p0 * &p.a1 * &d.s0;
    linalg::symmetrize(&(&x + x.transpose()))
}

/// Coefficient of δ².
pub fn v0_2(p: &PerturbationPair) -> Matrix {
    let d = &p.dec;
    let (p0, s, s2, a1, a2) = (&d.p0, &d.s0, &(&d.s0 * &d.s0), &p.a1, &p.a2);
    let m = p0 * a2 * s + s * a2 * p0 + p0 * a1 * p0 * a1 * s2 + p0 * a1 * s2 * a1 * p0 + s2 * a1 * p0 * a1 * p0
        - p0 * a1 * s * a1 * s
        - s * a1 * p0 * a1 * s
        - s * a1 * s * a1 * p0;
    linalg::symmetrize(&m)
}

/// W1(δ) = P0 B S0 + S0 B P0.
pub fn w1(p: &PerturbationPair, delta: f64) -> Matrix {
    let d = &p.dec;
    let x = &d.p0 * b_of_delta(p, delta) * &d.s0;
    linalg::symmetrize(&(&x + x.transpose()))
}

fn a0(p: &PerturbationPair) -> Matrix {
    linalg::symmetrize(&(&p.dec.p0 * &p.a2 * &p.dec.p0))
}

/// (I − δ² A0/μ)^{-1} for every positive cluster, in cluster order.
pub fn resolvents(p: &PerturbationPair, delta: f64) -> Result<Vec<Matrix>> {
    let l = p.l();
    let a0 = a0(p);
    let id = Matrix::identity(l, l);
    p.dec
        .clusters
        .iter()
        .map(|c| {
            if delta * delta * p.a2_norm / c.mu >= 1.0 {
                return Err(Error::SingularResolvent);
            }
            let m = &id - &a0 * (delta * delta / c.mu);
            linalg::solve(&m, &id).ok_or(Error::SingularResolvent)
        })
        .collect()
}

/// L1(δ) = Σ_μ (P_μ B P0/μ) (I − δ²A0/μ)^{-1}.
pub fn l1_delta(p: &PerturbationPair, delta: f64) -> Result<Matrix> {
    let res = resolvents(p, delta)?;
    let b = b_of_delta(p, delta);
    let bp0 = &b * &p.dec.p0;
    let mut out = Matrix::zeros(p.l(), p.l());
    for (c, r) in p.dec.clusters.iter().zip(&res) {
        out += &c.projector * &bp0 * r / c.mu;
    }
    Ok(out)
}

/// L(δ) = L1 + L1ᵀ.
pub fn l_delta(p: &PerturbationPair, delta: f64) -> Result<Matrix> {
    let l1 = l1_delta(p, delta)?;
    Ok(linalg::symmetrize(&(&l1 + l1.transpose())))
}

/// K(δ) = K1 + K1ᵀ with K1 = Σ_μ P_μ B A0 (I − δ²A0/μ)^{-1}/μ².
pub fn k_delta(p: &PerturbationPair, delta: f64) -> Result<Matrix> {
    let res = resolvents(p, delta)?;
    let ba0 = b_of_delta(p, delta) * a0(p);
    let mut k1 = Matrix::zeros(p.l(), p.l());
    for (c, r) in p.dec.clusters.iter().zip(&res) {
        k1 += &c.projector * &ba0 * r / (c.mu * c.mu);
    }
    Ok(linalg::symmetrize(&(&k1 + k1.transpose())))
}

/// T(δ) = T1 + T1ᵀ, T1 = Σ_i (−1)^i Y_i with Y_0 = L1 and
/// Y_i = Σ_μ (P_μ B/μ) Y_{i−1} (I − δ²A0/μ)^{-1}.
pub fn t_delta(p: &PerturbationPair, delta: f64, tol: f64) -> Result<DeltaOperator> {
    let beta_scalar = p.beta_bound(delta);
    if !(beta_scalar < 0.25) {
        return Err(Error::Radius {
            beta: beta_scalar,
            limit: 0.25,
        });
    }
    let res = resolvents(p, delta)?;
    let b = b_of_delta(p, delta);
    let pb: Vec<Matrix> = p
        .dec
        .clusters
        .iter()
        .map(|c| &c.projector * &b / c.mu)
        .collect();
    let max_r = res.iter().map(linalg::norm2).fold(0.0, f64::max);
    let ratio = (p.dec.clusters.len() as f64).sqrt() * linalg::norm2(&b) / p.dec.mu_min * max_r;
    let mut y = l1_delta(p, delta)?;
    let mut t1 = y.clone();
    let mut tail = None;
    for i in 1..=2000 {
        let mut next = Matrix::zeros(p.l(), p.l());
        for (m, r) in pb.iter().zip(&res) {
            next += m * &y * r;
        }
        y = next;
        if i % 2 == 0 {
            t1 += &y;
        } else {
            t1 -= &y;
        }
        let yn = linalg::norm2(&y);
        if ratio < 1.0 {
            // ‖Y_{j+1}‖ ≤ ratio·‖Y_j‖, so the remainder is geometric
            let rem = 2.0 * yn * ratio / (1.0 - ratio);
            if rem <= tol {
                tail = Some(rem);
                break;
            }
        } else if yn <= tol * 1e-3 {
            break;
        }
    }
    Ok(DeltaOperator {
        delta,
        matrix: linalg::symmetrize(&(&t1 + t1.transpose())),
        kind: OperatorKind::TDelta,
        tail_bound: tail,
    })
}

/// Constant of the series tail bound.
pub const C: f64 = TAIL_C;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random rank-d signal with well separated spectrum plus random noise.
    pub(crate) fn random_pair(seed: u64, l: usize, k: usize, d: usize) -> PerturbationPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(l, d, |_, _| rng.random::<f64>() - 0.5);
        let v = Matrix::from_fn(d, k, |_, _| rng.random::<f64>() - 0.5);
        let h = &u * &v * 4.0;
        let e = Matrix::from_fn(l, k, |_, _| rng.random::<f64>() - 0.5);
        PerturbationPair::new(h, e, RankPolicy::Known(d)).unwrap()
    }

    fn delta_for_beta(p: &PerturbationPair, beta: f64) -> f64 {
        radius_from_norms(p.a1_norm, p.a2_norm, beta * p.dec.mu_min)
    }

    #[test]
    fn b_matrix_and_bound() {
        let p = random_pair(1, 6, 8, 2);
        assert_eq!(b_of_delta(&p, 0.0).amax(), 0.0);
        assert_eq!(b_norm_bound(&p, 0.0), 0.0);
        for d in [-0.3, 0.1, 0.7] {
            assert!(norm2(&b_of_delta(&p, d)) <= b_norm_bound(&p, d) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn radius_examples() {
        assert!((radius_from_norms(2.0, 0.0, 0.5) - 0.25).abs() < 1e-15);
        assert!((radius_from_norms(0.0, 4.0, 0.25) - 0.25).abs() < 1e-15);
        assert!(radius_from_norms(0.0, 0.0, 1.0).is_infinite());
    }

    #[test]
    fn dp_matches_enumeration() {
        let p = random_pair(7, 7, 9, 3);
        let delta = delta_for_beta(&p, 0.08);
        let dp = series_terms(&p, delta, 6);
        for order in 1..=6 {
            let en = series_term_enumerated(&p, delta, order).unwrap();
            let scale = norm2(&en).max(1e-300);
            assert!(norm2(&(&dp[order - 1] - &en)) <= 1e-10 * scale, "order {order}");
        }
    }

    #[test]
    fn first_term_is_w1() {
        let p = random_pair(3, 6, 6, 2);
        let delta = delta_for_beta(&p, 0.05);
        let w = &series_terms(&p, delta, 1)[0];
        assert!(norm2(&(w - w1(&p, delta))) < 1e-12 * norm2(w));
        let split = v0_1(&p) * delta
            + {
                let d = &p.dec;
                let x = &d.p0 * &p.a2 * &d.s0;
                (&x + x.transpose()) * (delta * delta)
            };
        assert!(norm2(&(w1(&p, delta) - split)) < 1e-12 * norm2(w));
    }

    #[test]
    fn series_matches_oracle() {
        for seed in 0..20 {
            let p = random_pair(100 + seed, 8, 10, 2);
            let delta = delta_for_beta(&p, 0.05);
            let s = series_projector(&p, delta, 1e-10).unwrap();
            let o = projector_direct(&p, delta, 2).unwrap();
            assert!(norm2(&(&s.matrix - &o.matrix)) < 1e-9, "seed {seed}");
            assert!(s.tail_bound.unwrap() <= 1e-10);
        }
    }

    #[test]
    fn zero_delta() {
        let p = random_pair(5, 5, 7, 2);
        let s = series_projector(&p, 0.0, 1e-10).unwrap();
        assert_eq!(s.kind, OperatorKind::Series(0));
        assert_eq!(s.tail_bound, Some(0.0));
        assert!(norm2(&(&s.matrix - &p.dec.p0perp)) == 0.0);
        let o = projector_direct(&p, 0.0, 2).unwrap();
        assert!(norm2(&(&o.matrix - &p.dec.p0perp)) < 1e-10);
        assert_eq!(l_delta(&p, 0.0).unwrap().amax(), 0.0);
        assert_eq!(t_delta(&p, 0.0, 1e-12).unwrap().matrix.amax(), 0.0);
    }

    #[test]
    fn radius_error_outside_quarter() {
        let p = random_pair(9, 5, 7, 2);
        let delta = delta_for_beta(&p, 0.3);
        assert!(matches!(series_projector(&p, delta, 1e-8), Err(Error::Radius { .. })));
        assert!(matches!(t_delta(&p, delta, 1e-8), Err(Error::Radius { .. })));
    }

    #[test]
    fn right_orthogonal_series_is_even() {
        // H rows span e1, e2; E rows span e3, e4 so HEᵀ = 0
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (l, k) = (5, 6);
        let mut h = Matrix::zeros(l, k);
        let mut e = Matrix::zeros(l, k);
        for i in 0..l {
            for j in 0..2 {
                h[(i, j)] = rng.random::<f64>() + 0.5;
            }
            for j in 2..4 {
                e[(i, j)] = (rng.random::<f64>() - 0.5) * 0.3;
            }
        }
        let p = PerturbationPair::new(h, e, RankPolicy::Known(2)).unwrap();
        assert!(p.a1_norm < 1e-14);
        let delta = delta_for_beta(&p, 0.1);
        let plus = series_projector(&p, delta, 1e-12).unwrap().matrix;
        let minus = series_projector(&p, -delta, 1e-12).unwrap().matrix;
        assert!(norm2(&(&plus - &minus)) < 1e-13);
        let odd = series_terms(&p, delta, 5);
        let odd_minus = series_terms(&p, -delta, 5);
        for (a, b) in odd.iter().zip(&odd_minus) {
            assert!(norm2(&(a - b)) < 1e-14);
        }
    }

    #[test]
    fn central_difference_gives_v0_1() {
        let p = random_pair(11, 6, 8, 2);
        let h = 1e-4;
        let plus = projector_direct(&p, h, 2).unwrap().matrix;
        let minus = projector_direct(&p, -h, 2).unwrap().matrix;
        let fd = (plus - minus) / (2.0 * h);
        let v = v0_1(&p);
        assert!(norm2(&(fd - &v)) < 1e-6 * norm2(&v) + 1e-8);
    }

    #[test]
    fn second_order_coefficient() {
        let p = random_pair(12, 6, 7, 2);
        let delta = delta_for_beta(&p, 0.01);
        // δ² coefficient of the full series = V0_2
        let w = series_terms(&p, delta, 2);
        let wm = series_terms(&p, -delta, 2);
        let even = (&w[0] + &w[1] + &wm[0] + &wm[1]) / (2.0 * delta * delta);
        let v2 = v0_2(&p);
        // the even part also holds δ⁴ pieces of W_2
        assert!(norm2(&(even - &v2)) < 1e-2 * norm2(&v2));
        let exact_w2_quad = {
            let mut a = p.clone();
            a.a2 = Matrix::zeros(p.l(), p.l());
            a.a2_norm = 0.0;
            let t = series_terms(&a, delta, 2);
            (&t[1]) / (delta * delta)
        };
        let w1_quad = {
            let d = &p.dec;
            let x = &d.p0 * &p.a2 * &d.s0;
            &x + x.transpose()
        };
        assert!(norm2(&(exact_w2_quad + w1_quad - &v2)) < 1e-10 * norm2(&v2));
    }

    #[test]
    fn degree_consistency_by_fitting() {
        let p = random_pair(13, 6, 8, 2);
        let v = v0_1(&p);
        let f = |d: f64| series_projector(&p, d, 1e-14).unwrap().matrix;
        let mut errs = Vec::new();
        for scale in [1.0, 0.5] {
            let h = delta_for_beta(&p, 0.02) * scale;
            // linear coefficient of the cubic through ±h, ±2h
            let est = (f(-2.0 * h) - f(-h) * 8.0 + f(h) * 8.0 - f(2.0 * h)) / (12.0 * h);
            errs.push(norm2(&(est - &v)) / norm2(&v));
        }
        assert!(errs[0] < 1e-3, "{errs:?}");
        assert!(errs[1] <= errs[0] / 3.5 || errs[1] < 1e-10, "{errs:?}");
    }

    #[test]
    fn l_identity_holds() {
        for seed in 0..10 {
            let p = random_pair(200 + seed, 7, 9, 3);
            let delta = delta_for_beta(&p, 0.15);
            let l = l_delta(&p, delta).unwrap();
            let rhs = w1(&p, delta) + k_delta(&p, delta).unwrap() * (delta * delta);
            assert!(norm2(&(&l - rhs)) <= 1e-10 * norm2(&l));
        }
    }

    #[test]
    fn t_zeroth_term_is_l() {
        let p = random_pair(21, 6, 8, 2);
        let delta = delta_for_beta(&p, 0.05);
        let l1 = l1_delta(&p, delta).unwrap();
        let l = l_delta(&p, delta).unwrap();
        assert!(norm2(&(&l1 + l1.transpose() - &l)) < 1e-15 * norm2(&l).max(1.0));
    }

    #[test]
    fn operators_are_symmetric() {
        let p = random_pair(31, 7, 8, 3);
        let delta = delta_for_beta(&p, 0.1);
        let ops = [
            v0_1(&p),
            v0_2(&p),
            w1(&p, delta),
            l_delta(&p, delta).unwrap(),
            k_delta(&p, delta).unwrap(),
            t_delta(&p, delta, 1e-12).unwrap().matrix,
            series_projector(&p, delta, 1e-10).unwrap().matrix,
        ];
        for m in ops {
            assert!(norm2(&(&m - m.transpose())) <= 1e-12 * norm2(&m));
        }
    }

    #[test]
    fn required_order_grows_with_beta() {
        assert_eq!(required_order(0.0, 1e-10), Some(0));
        let a = required_order(0.05, 1e-10).unwrap();
        let b = required_order(0.1, 1e-10).unwrap();
        assert!(a < b);
        assert!(required_order(0.2499, 1e-12).is_none());
    }
}
