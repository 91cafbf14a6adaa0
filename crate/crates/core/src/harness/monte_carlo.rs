//! Monte Carlo checks of the stochastic growth, covariance and CLT claims.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::fit::{tail_envelope, top_half};
use crate::error::{Error, Result};
use crate::linalg::{lanczos_top_singular, norm2, Matrix};
use crate::perturb::{b_of_delta, delta_p_direct, PerturbationPair};
use crate::series::{fmt17, generate, SeriesSpec};
use crate::spectral::RankPolicy;
use crate::trajectory::embed;

/// Lanczos steps for the Hankel norm; plenty for a 2-digit ratio.
pub const LANCZOS_STEPS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "snake_case")]
pub enum McStatistic {
    /// ‖E_{L,K}‖/√(N ln N) with L = ⌊(N + 1)/2⌋.
    HankelNormGrowth,
    /// ‖EEᵀ/K − I‖ for a fixed window L₀.
    CovarianceConvergence { l0: usize },
    /// |Σ_{j<n} x_j ε_j|/√(n ln ln n) against √(Σγ²) for an oscillating signal x.
    CrossTermLil { signal: SeriesSpec },
    /// √N(P0perp(δ) − P0perp) for a constant signal plus the noise, window L₀.
    CltConstWhitenoise { l0: usize, delta: f64 },
}

impl McStatistic {
    pub fn tag(&self) -> &'static str {
        match self {
            McStatistic::HankelNormGrowth => "hankel_norm_growth",
            McStatistic::CovarianceConvergence { .. } => "covariance_convergence",
            McStatistic::CrossTermLil { .. } => "cross_term_lil",
            McStatistic::CltConstWhitenoise { .. } => "clt_const_whitenoise",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub noise: SeriesSpec,
    #[serde(flatten)]
    pub statistic: McStatistic,
    pub trials: usize,
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl McConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: McConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("at least one trial is required".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("N grid must be nonempty and strictly increasing".into()));
        }
        self.noise.validated()?;
        match &self.statistic {
            McStatistic::HankelNormGrowth => {
                if self.n_grid[0] < 3 {
                    return Err(Error::InvalidArgument("N must be at least 3".into()));
                }
            }
            McStatistic::CovarianceConvergence { l0 } => {
                if *l0 == 0 || self.n_grid[0] <= *l0 {
                    return Err(Error::InvalidArgument("need 0 < L0 < N".into()));
                }
            }
            McStatistic::CrossTermLil { signal } => {
                if !matches!(signal, SeriesSpec::Oscillating { .. }) {
                    return Err(Error::InvalidArgument("cross_term_lil needs an oscillating signal".into()));
                }
                if self.n_grid[0] < 16 {
                    return Err(Error::InvalidArgument("N must be at least 16".into()));
                }
            }
            McStatistic::CltConstWhitenoise { l0, delta } => {
                if !matches!(self.noise, SeriesSpec::WhiteNoise { .. }) {
                    return Err(Error::InvalidArgument("clt_const_whitenoise needs white noise".into()));
                }
                if *l0 < 2 || self.n_grid.len() != 1 || self.n_grid[0] <= 2 * l0 {
                    return Err(Error::InvalidArgument("need L0 ≥ 2 and a single N > 2L0".into()));
                }
                if !delta.is_finite() || *delta == 0.0 {
                    return Err(Error::InvalidArgument("delta must be finite and nonzero".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TiedPair {
    pub first: (usize, usize),
    pub second: (usize, usize),
    pub correlation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltSummary {
    pub l0: usize,
    pub delta: f64,
    pub n: usize,
    pub accepted: usize,
    pub attempted: usize,
    pub rejection_rate: f64,
    /// Entry variances of √N·ΔP, row-major L₀×L₀.
    pub empirical_var: Vec<f64>,
    pub predicted_var: Vec<f64>,
    /// max |empirical/predicted − 1| over entries with non-negligible prediction.
    pub max_rel_var_error: f64,
    /// Entries with equal |i − j| and identical limit coefficients.
    pub tied: Vec<TiedPair>,
    pub min_tied_correlation: f64,
    /// E‖P0perp X P0perp‖² + E‖P0 X P0‖² over E‖X‖² for X = √N·ΔP.
    pub block_leakage: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct McSummary {
    pub statistic: String,
    pub trials: usize,
    pub n_grid: Vec<usize>,
    /// Per trial, per N.
    pub values: Vec<Vec<f64>>,
    /// Max over trials at each N.
    pub grid_max: Vec<f64>,
    pub overall_max: f64,
    /// Limit constant the values are compared with, when there is one.
    pub reference: Option<f64>,
    /// Every trial's tail envelope sup_{m ≥ n} v_m is nonincreasing over the top half.
    pub envelopes_nonincreasing: bool,
    /// The max over trials is nonincreasing over the top half.
    pub grid_max_nonincreasing: bool,
    pub clt: Option<CltSummary>,
}

pub fn monte_carlo(cfg: &McConfig) -> Result<McSummary> {
    cfg.validate()?;
    match &cfg.statistic {
        McStatistic::CltConstWhitenoise { l0, delta } => clt(cfg, *l0, *delta),
        st => grid_statistic(cfg, st),
    }
}

/// ‖E‖ for the L×K Hankel matrix of `e`, matrix-free.
pub fn hankel_norm(e: &[f64], l: usize, seed: u64) -> f64 {
    let k = e.len() + 1 - l;
    let apply = |x: &[f64]| -> Vec<f64> { (0..l).map(|i| e[i..i + k].iter().zip(x).map(|(a, b)| a * b).sum()).collect() };
    let apply_t = |y: &[f64]| -> Vec<f64> {
        (0..k).map(|j| e[j..j + l].iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    };
    if l <= k {
        lanczos_top_singular(k, LANCZOS_STEPS, seed, apply, apply_t)
    } else {
        lanczos_top_singular(l, LANCZOS_STEPS, seed, apply_t, apply)
    }
}

fn grid_statistic(cfg: &McConfig, st: &McStatistic) -> Result<McSummary> {
    let n_max = *cfg.n_grid.last().unwrap();
    let reference = match st {
        McStatistic::CrossTermLil {
            signal: SeriesSpec::Oscillating { terms },
        } => Some(terms.iter().map(|t| t.amplitude * t.amplitude).sum::<f64>().sqrt()),
        _ => None,
    };
    let values: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            match st {
                McStatistic::HankelNormGrowth => cfg
                    .n_grid
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        let s = derive_seed(cfg.seed, t as u64, i as u64);
                        let e = generate(&cfg.noise, n, Some(s))?.values;
                        let nf = n as f64;
                        Ok(hankel_norm(&e, n.div_ceil(2), s ^ 1) / (nf * nf.ln()).sqrt())
                    })
                    .collect(),
                McStatistic::CovarianceConvergence { l0 } => cfg
                    .n_grid
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        let s = derive_seed(cfg.seed, t as u64, i as u64);
                        let e = embed(&generate(&cfg.noise, n, Some(s))?.values, *l0)?;
                        let k = e.ncols() as f64;
                        let g = &e * e.transpose() / k - Matrix::identity(*l0, *l0);
                        Ok(norm2(&g))
                    })
                    .collect(),
                McStatistic::CrossTermLil { signal } => {
                    let s = derive_seed(cfg.seed, t as u64, 0);
                    let x = generate(signal, n_max, None)?.values;
                    let e = generate(&cfg.noise, n_max, Some(s))?.values;
                    let mut acc = 0.0;
                    let mut partial = Vec::with_capacity(n_max);
                    for j in 0..n_max {
                        acc += x[j] * e[j];
                        partial.push(acc);
                    }
                    Ok(cfg
                        .n_grid
                        .iter()
                        .map(|&n| {
                            let nf = n as f64;
                            partial[n - 1].abs() / (nf * nf.ln().ln()).sqrt()
                        })
                        .collect())
                }
                McStatistic::CltConstWhitenoise { .. } => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;
    let g = cfg.n_grid.len();
    let grid_max: Vec<f64> = (0..g).map(|i| values.iter().map(|v| v[i]).fold(f64::MIN, f64::max)).collect();
    let overall_max = grid_max.iter().copied().fold(f64::MIN, f64::max);
    let th = top_half(g);
    let envelopes_nonincreasing = values
        .iter()
        .all(|v| super::fit::is_nonincreasing(&tail_envelope(v)[th.clone()]));
    let grid_max_nonincreasing = super::fit::is_nonincreasing(&grid_max[th]);
    Ok(McSummary {
        statistic: st.tag().into(),
        trials: cfg.trials,
        n_grid: cfg.n_grid.clone(),
        values,
        grid_max,
        overall_max,
        reference,
        envelopes_nonincreasing,
        grid_max_nonincreasing,
        clt: None,
    })
}

/// Symmetric Toeplitz basis matrix with ones at |i − j| = k.
fn toeplitz_basis(l: usize, k: usize) -> Matrix {
    Matrix::from_fn(l, l, |i, j| if i.abs_diff(j) == k { 1.0 } else { 0.0 })
}

/// Limit variances (δ²/L₀)² Σ_k M_k(i,j)² Var ψ_k with M_k = P⊥T_kP0 + P0T_kP⊥,
/// and the coefficient vectors (M_k(i,j))_k.
pub fn clt_prediction(l0: usize, delta: f64, fourth_moment: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let pp = Matrix::from_element(l0, l0, 1.0 / l0 as f64);
    let p0 = Matrix::identity(l0, l0) - &pp;
    let s = delta * delta / l0 as f64;
    let ms: Vec<Matrix> = (0..l0)
        .map(|k| {
            let t = toeplitz_basis(l0, k);
            (&pp * &t * &p0 + &p0 * &t * &pp) * s
        })
        .collect();
    let mut var = Vec::with_capacity(l0 * l0);
    let mut coef = Vec::with_capacity(l0 * l0);
    for i in 0..l0 {
        for j in 0..l0 {
            let c: Vec<f64> = ms.iter().map(|m| m[(i, j)]).collect();
            var.push(
                c.iter()
                    .enumerate()
                    .map(|(k, x)| x * x * if k == 0 { fourth_moment - 1.0 } else { 1.0 })
                    .sum(),
            );
            coef.push(c);
        }
    }
    (var, coef)
}

fn clt(cfg: &McConfig, l0: usize, delta: f64) -> Result<McSummary> {
    let SeriesSpec::WhiteNoise { innovation } = cfg.noise else {
        unreachable!()
    };
    let n = cfg.n_grid[0];
    let sqrt_n = (n as f64).sqrt();
    let ones = vec![1.0; n];
    let h = embed(&ones, l0)?;
    let one_trial = |t: usize| -> Result<Option<Matrix>> {
        let e = generate(&cfg.noise, n, Some(derive_seed(cfg.seed, t as u64, 0)))?.values;
        let p = PerturbationPair::new(h.clone(), embed(&e, l0)?, RankPolicy::Known(1))?;
        if norm2(&b_of_delta(&p, delta)) >= 0.5 * p.dec.mu_min {
            return Ok(None);
        }
        Ok(Some(delta_p_direct(&p, delta)? * sqrt_n))
    };
    let max_attempts = 10 * cfg.trials;
    let mut samples: Vec<Matrix> = Vec::with_capacity(cfg.trials);
    let mut attempted = 0;
    let chunk = 256;
    while samples.len() < cfg.trials && attempted < max_attempts {
        let hi = (attempted + chunk).min(max_attempts);
        let batch: Vec<Option<Matrix>> = (attempted..hi).into_par_iter().map(one_trial).collect::<Result<_>>()?;
        for s in batch {
            if samples.len() == cfg.trials {
                break;
            }
            attempted += 1;
            samples.extend(s);
        }
    }
    if samples.len() < cfg.trials {
        return Err(Error::Precondition(format!(
            "only {} of {} trials accepted within {max_attempts} attempts",
            samples.len(),
            cfg.trials
        )));
    }
    let m = samples.len() as f64;
    let ll = l0 * l0;
    let flat: Vec<Vec<f64>> = samples.iter().map(|s| (0..ll).map(|q| s[(q / l0, q % l0)]).collect()).collect();
    let mean: Vec<f64> = (0..ll).map(|q| flat.iter().map(|f| f[q]).sum::<f64>() / m).collect();
    let cov = |a: usize, b: usize| flat.iter().map(|f| (f[a] - mean[a]) * (f[b] - mean[b])).sum::<f64>() / (m - 1.0);
    let empirical_var: Vec<f64> = (0..ll).map(|q| cov(q, q)).collect();
    let (predicted_var, coef) = clt_prediction(l0, delta, innovation.fourth_moment());
    let pmax = predicted_var.iter().copied().fold(0.0, f64::max);
    let max_rel_var_error = (0..ll)
        .filter(|&q| predicted_var[q] > 1e-3 * pmax)
        .map(|q| (empirical_var[q] / predicted_var[q] - 1.0).abs())
        .fold(0.0, f64::max);

    let mut tied = Vec::new();
    for a in 0..ll {
        for b in a + 1..ll {
            let (ia, ja, ib, jb) = (a / l0, a % l0, b / l0, b % l0);
            if (ia, ja) == (jb, ib) || ia.abs_diff(ja) != ib.abs_diff(jb) || predicted_var[a] <= 1e-3 * pmax {
                continue;
            }
            if coef[a].iter().zip(&coef[b]).all(|(x, y)| (x - y).abs() < 1e-12) && ia <= ja && ib <= jb {
                tied.push(TiedPair {
                    first: (ia, ja),
                    second: (ib, jb),
                    correlation: cov(a, b) / (empirical_var[a] * empirical_var[b]).sqrt(),
                });
            }
        }
    }
    let min_tied_correlation = tied.iter().map(|t| t.correlation).fold(f64::INFINITY, f64::min);

    let pp = Matrix::from_element(l0, l0, 1.0 / l0 as f64);
    let p0 = Matrix::identity(l0, l0) - &pp;
    let (mut diag, mut total) = (0.0, 0.0);
    for s in &samples {
        diag += (&pp * s * &pp).norm_squared() + (&p0 * s * &p0).norm_squared();
        total += s.norm_squared();
    }

    let clt = CltSummary {
        l0,
        delta,
        n,
        accepted: samples.len(),
        attempted,
        rejection_rate: 1.0 - samples.len() as f64 / attempted as f64,
        empirical_var,
        predicted_var,
        max_rel_var_error,
        tied,
        min_tied_correlation,
        block_leakage: diag / total,
    };
    Ok(McSummary {
        statistic: cfg.statistic.tag().into(),
        trials: cfg.trials,
        n_grid: cfg.n_grid.clone(),
        values: Vec::new(),
        grid_max: Vec::new(),
        overall_max: f64::NAN,
        reference: None,
        envelopes_nonincreasing: true,
        grid_max_nonincreasing: true,
        clt: Some(clt),
    })
}

impl McSummary {
    /// Grid statistics: trial,n,value. CLT: i,j,empirical_var,predicted_var.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        if let Some(c) = &self.clt {
            wr.write_record(["i", "j", "empirical_var", "predicted_var"])?;
            for q in 0..c.l0 * c.l0 {
                wr.write_record([
                    (q / c.l0).to_string(),
                    (q % c.l0).to_string(),
                    fmt17(c.empirical_var[q]),
                    fmt17(c.predicted_var[q]),
                ])?;
            }
        } else {
            wr.write_record(["trial", "n", "value"])?;
            for (t, v) in self.values.iter().enumerate() {
                for (n, x) in self.n_grid.iter().zip(v) {
                    wr.write_record([t.to_string(), n.to_string(), fmt17(*x)])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{ar1_spectral_factor, Innovation};

    #[test]
    fn hankel_norm_matches_dense() {
        let e = generate(&SeriesSpec::white_noise(), 61, Some(3)).unwrap().values;
        for l in [5, 31, 50] {
            let dense = norm2(&embed(&e, l).unwrap());
            let lz = hankel_norm(&e, l, 1);
            assert!((lz / dense - 1.0).abs() < 1e-8, "{l}: {lz} {dense}");
        }
    }

    #[test]
    fn covariance_shrinks() {
        let cfg = McConfig {
            noise: SeriesSpec::white_noise(),
            statistic: McStatistic::CovarianceConvergence { l0: 5 },
            trials: 4,
            n_grid: vec![1_000, 100_000],
            seed: 1,
        };
        let s = monte_carlo(&cfg).unwrap();
        for v in &s.values {
            assert!(v[1] < v[0]);
            assert!(v[1] < 0.05);
        }
    }

    #[test]
    fn reproducible() {
        let cfg = McConfig {
            noise: SeriesSpec::white_noise(),
            statistic: McStatistic::HankelNormGrowth,
            trials: 3,
            n_grid: vec![64, 128],
            seed: 7,
        };
        let a = monte_carlo(&cfg).unwrap();
        let b = monte_carlo(&cfg).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.overall_max < 3.0);
    }

    #[test]
    fn lil_ratio_bounded() {
        let cfg = McConfig {
            noise: SeriesSpec::white_noise(),
            statistic: McStatistic::CrossTermLil {
                signal: SeriesSpec::cosine(0.1),
            },
            trials: 10,
            n_grid: vec![1_000, 10_000, 100_000],
            seed: 2,
        };
        let s = monte_carlo(&cfg).unwrap();
        assert_eq!(s.reference, Some(1.0));
        assert!(s.overall_max < 3.0 * s.reference.unwrap());
    }

    #[test]
    fn clt_prediction_structure() {
        let (var, coef) = clt_prediction(4, 0.5, 3.0);
        // symmetric and persymmetric
        for i in 0..4 {
            for j in 0..4 {
                assert!((var[i * 4 + j] - var[j * 4 + i]).abs() < 1e-15);
                assert!((var[i * 4 + j] - var[(3 - j) * 4 + 3 - i]).abs() < 1e-15);
            }
        }
        assert_eq!(coef[0].len(), 4);
        // M_ij = v_i + v_j with v persymmetric-antisymmetric: half the entries vanish.
        assert_eq!(var.iter().filter(|v| **v > 1e-12).count(), 8);
    }

    #[test]
    fn small_clt_run() {
        let cfg = McConfig {
            noise: SeriesSpec::WhiteNoise {
                innovation: Innovation::Normal,
            },
            statistic: McStatistic::CltConstWhitenoise { l0: 3, delta: 0.5 },
            trials: 300,
            n_grid: vec![2_000],
            seed: 5,
        };
        let s = monte_carlo(&cfg).unwrap();
        let c = s.clt.unwrap();
        assert_eq!(c.accepted, 300);
        assert!(c.max_rel_var_error < 0.4, "{}", c.max_rel_var_error);
        assert!(c.block_leakage < 0.05);
    }

    #[test]
    fn ar1_factor() {
        assert!((ar1_spectral_factor(0.5) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_json() {
        let c = McConfig::from_json(
            r#"{"noise":{"type":"white_noise","innovation":"normal"},"statistic":"covariance_convergence","l0":5,"trials":2,"n_grid":[100]}"#,
        )
        .unwrap();
        assert_eq!(c.statistic, McStatistic::CovarianceConvergence { l0: 5 });
        assert!(McConfig::from_json(r#"{"noise":{"type":"constant"},"statistic":"hankel_norm_growth","trials":0,"n_grid":[100]}"#).is_err());
    }
}
