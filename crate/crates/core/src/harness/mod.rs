//! Experiment engine: N-sweeps with rate fits, closed-form examples,
//! reconstruction-error reproduction and Monte Carlo checks.

pub mod closed_form;
pub mod reconstruction;
pub mod fit;
pub mod monte_carlo;
pub mod plot;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_bounds, BoundsReport, BOUNDS_CSV_HEADER, ORACLE_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::perturb::{self, PerturbationPair};
use crate::series::{fmt17, generate, theoretical_rank, SeriesSpec};
use crate::spectral::RankPolicy;
use crate::trajectory::embed;

pub use closed_form::{example_const_saw, example_exp_const, ConstSawPackage, ExpConstPackage};
pub use reconstruction::{reconstruction_runs, ReconstructionRun};
pub use fit::LineFit;
pub use monte_carlo::{monte_carlo, McConfig, McStatistic, McSummary};


/// SplitMix64 mixing of a master seed with two indices.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How L and K follow N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WindowRule {
    FixedL { l: usize },
    FixedK { k: usize },
    /// L = round(αN).
    Proportional { alpha: f64 },
}

impl WindowRule {
    /// (L, K) for series length N.
    pub fn window(&self, n: usize) -> Result<(usize, usize)> {
        let l = match *self {
            WindowRule::FixedL { l } => l,
            WindowRule::FixedK { k } => (n + 1).saturating_sub(k),
            WindowRule::Proportional { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
                }
                (alpha * n as f64).round() as usize
            }
        };
        if l == 0 || l > n {
            return Err(Error::WindowOutOfRange { l, n });
        }
        Ok((l, n - l + 1))
    }
}

/// Abscissa used by the log-log fits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    #[default]
    N,
    L,
    K,
    MinLk,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub signal: SeriesSpec,
    pub noise: SeriesSpec,
    pub deltas: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub window: WindowRule,
    /// Signal rank; defaults to the family's theoretical rank.
    #[serde(default)]
    pub d: Option<usize>,
    /// Quantities to fit; any of delta_p, res_v01, res_w1, res_l, res_t.
    #[serde(default = "default_quantities")]
    pub quantities: Vec<String>,
    #[serde(default)]
    pub abscissa: Abscissa,
    #[serde(default)]
    pub seed: u64,
}

fn default_quantities() -> Vec<String> {
    vec!["delta_p".into()]
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validated()?;
        self.noise.validated()?;
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("N grid must be nonempty and strictly increasing".into()));
        }
        if self.deltas.is_empty() {
            return Err(Error::InvalidArgument("at least one delta is required".into()));
        }
        for q in &self.quantities {
            if !QUANTITIES.contains(&q.as_str()) {
                return Err(Error::InvalidArgument(format!("unknown quantity {q}")));
            }
        }
        let d = self.rank()?;
        for &n in &self.n_grid {
            let (l, k) = self.window.window(n)?;
            if l.min(k) <= d {
                return Err(Error::InvalidArgument(format!(
                    "N = {n} gives min(L, K) = {} which does not exceed d = {d}",
                    l.min(k)
                )));
            }
        }
        Ok(())
    }

    fn rank(&self) -> Result<usize> {
        self.d
            .or_else(|| theoretical_rank(&self.signal))
            .ok_or_else(|| Error::InvalidArgument("signal rank must be given for stochastic signals".into()))
    }
}

pub const QUANTITIES: &[&str] = &["delta_p", "res_v01", "res_w1", "res_l", "res_t"];

#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub n: usize,
    pub l: usize,
    pub k: usize,
    pub delta: f64,
    /// ‖P0perp(δ) − P0perp‖ from the SVD oracle.
    pub delta_p: f64,
    pub res_v01: f64,
    pub res_w1: f64,
    pub res_l: Option<f64>,
    pub res_t: Option<f64>,
    pub bounds: BoundsReport,
    /// Names of valid bounds that the measurement exceeds.
    pub violations: Vec<String>,
}

impl SweepRecord {
    pub fn quantity(&self, name: &str) -> Option<f64> {
        match name {
            "delta_p" => Some(self.delta_p),
            "res_v01" => Some(self.res_v01),
            "res_w1" => Some(self.res_w1),
            "res_l" => self.res_l,
            "res_t" => self.res_t,
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantityFit {
    pub quantity: String,
    pub delta: f64,
    /// log(quantity) against log(abscissa).
    pub loglog: Option<LineFit>,
    /// log(quantity) against N.
    pub semilog: Option<LineFit>,
    /// Value at the largest N.
    pub last_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub fits: Vec<QuantityFit>,
    pub violation_count: usize,
}

/// Names of valid bounds exceeded at one (pair, δ), given the oracle ΔP.
pub fn bound_violations(
    p: &PerturbationPair,
    delta: f64,
    dp: &crate::linalg::Matrix,
    report: &BoundsReport,
) -> Result<(Vec<String>, MainTermResiduals)> {
    let mut v = Vec::new();
    let n = norm2(dp);
    let res_w1 = norm2(&(dp - perturb::w1(p, delta)));
    let res_v01 = norm2(&(dp - perturb::v0_1(p) * delta));
    let res_l = perturb::l_delta(p, delta).ok().map(|l| norm2(&(dp - l)));
    let res_t = if report.beta_bound < 0.25 {
        Some(norm2(&(dp - perturb::t_delta(p, delta, 1e-3 * ORACLE_FLOOR)?.matrix)))
    } else {
        None
    };
    for (name, b, m) in [
        ("thm3", &report.rhs_thm3, Some(n)),
        ("cor1", &report.rhs_cor1, Some(n)),
        ("cor2", &report.rhs_cor2, Some(n)),
        ("cor2_scalar", &report.rhs_cor2_scalar, Some(n)),
        ("thm4", &report.rhs_thm4, Some(res_w1)),
        ("thm5", &report.rhs_thm5, res_l),
        ("thm6", &report.rhs_thm6, res_t),
    ] {
        if let Some(m) = m {
            if !b.holds(m) {
                v.push(name.to_string());
            }
        }
    }
    Ok((
        v,
        MainTermResiduals {
            delta_p: n,
            res_v01,
            res_w1,
            res_l,
            res_t,
        },
    ))
}

#[derive(Clone, Copy, Debug)]
pub struct MainTermResiduals {
    pub delta_p: f64,
    pub res_v01: f64,
    pub res_w1: f64,
    pub res_l: Option<f64>,
    pub res_t: Option<f64>,
}

/// Builds the pair for one grid point.
pub fn build_pair(
    signal: &SeriesSpec,
    noise: &SeriesSpec,
    n: usize,
    l: usize,
    d: usize,
    seed: u64,
) -> Result<PerturbationPair> {
    let f = generate(signal, n, Some(seed))?;
    let e = generate(noise, n, Some(derive_seed(seed, 1, 0)))?;
    PerturbationPair::new(embed(&f.values, l)?, embed(&e.values, l)?, RankPolicy::Known(d))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let d = cfg.rank()?;
    let per_n: Vec<Result<Vec<SweepRecord>>> = cfg
        .n_grid
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let (l, k) = cfg.window.window(n)?;
            let p = build_pair(&cfg.signal, &cfg.noise, n, l, d, derive_seed(cfg.seed, i as u64, 0))?;
            cfg.deltas
                .iter()
                .map(|&delta| {
                    let dp = perturb::delta_p_direct(&p, delta)?;
                    let bounds = compute_bounds(&p, delta);
                    let (violations, r) = bound_violations(&p, delta, &dp, &bounds)?;
                    Ok(SweepRecord {
                        n,
                        l,
                        k,
                        delta,
                        delta_p: r.delta_p,
                        res_v01: r.res_v01,
                        res_w1: r.res_w1,
                        res_l: r.res_l,
                        res_t: r.res_t,
                        bounds,
                        violations,
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for r in per_n {
        records.extend(r?);
    }
    let mut fits = Vec::new();
    for q in &cfg.quantities {
        for &delta in &cfg.deltas {
            let pts: Vec<(&SweepRecord, f64)> = records
                .iter()
                .filter(|r| r.delta == delta)
                .filter_map(|r| r.quantity(q).map(|v| (r, v)))
                .collect();
            let x: Vec<f64> = pts
                .iter()
                .map(|(r, _)| match cfg.abscissa {
                    Abscissa::N => r.n as f64,
                    Abscissa::L => r.l as f64,
                    Abscissa::K => r.k as f64,
                    Abscissa::MinLk => r.l.min(r.k) as f64,
                })
                .collect();
            let nn: Vec<f64> = pts.iter().map(|(r, _)| r.n as f64).collect();
            let y: Vec<f64> = pts.iter().map(|(_, v)| *v).collect();
            fits.push(QuantityFit {
                quantity: q.clone(),
                delta,
                loglog: fit::fit_loglog_top_half(&x, &y),
                semilog: fit::fit_semilog_top_half(&nn, &y),
                last_value: y.last().copied().unwrap_or(f64::NAN),
            });
        }
    }
    let violation_count = records.iter().map(|r| r.violations.len()).sum();
    Ok(SweepResult {
        records,
        fits,
        violation_count,
    })
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["n", "l", "k", "delta_p", "res_v01", "res_w1", "res_l", "res_t"];
        header.extend_from_slice(BOUNDS_CSV_HEADER);
        header.push("violations");
        wr.write_record(&header)?;
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![
                r.n.to_string(),
                r.l.to_string(),
                r.k.to_string(),
                fmt17(r.delta_p),
                fmt17(r.res_v01),
                fmt17(r.res_w1),
                opt(r.res_l),
                opt(r.res_t),
            ];
            row.extend(r.bounds.csv_row());
            row.push(r.violations.join(";"));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_fits_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "quantity",
            "delta",
            "loglog_slope",
            "loglog_half_width",
            "semilog_slope",
            "semilog_half_width",
            "last_value",
        ])?;
        let f = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        for q in &self.fits {
            wr.write_record([
                q.quantity.clone(),
                fmt17(q.delta),
                f(q.loglog.map(|x| x.slope)),
                f(q.loglog.map(|x| x.slope_half_width)),
                f(q.semilog.map(|x| x.slope)),
                f(q.semilog.map(|x| x.slope_half_width)),
                fmt17(q.last_value),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::OscTerm;

    #[test]
    fn windows() {
        assert_eq!(WindowRule::FixedL { l: 10 }.window(30).unwrap(), (10, 21));
        assert_eq!(WindowRule::FixedK { k: 7 }.window(30).unwrap(), (24, 7));
        assert_eq!(WindowRule::Proportional { alpha: 0.5 }.window(101).unwrap(), (51, 51));
        assert!(WindowRule::FixedL { l: 40 }.window(30).is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig {
            signal: SeriesSpec::Constant,
            noise: SeriesSpec::Saw,
            deltas: vec![0.25],
            n_grid: vec![20, 40],
            window: WindowRule::FixedL { l: 10 },
            d: None,
            quantities: vec!["delta_p".into()],
            abscissa: Abscissa::K,
            seed: 0,
        };
        assert!(cfg.validate().is_ok());
        cfg.n_grid = vec![40, 20];
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![20, 40];
        cfg.quantities = vec!["nope".into()];
        assert!(cfg.validate().is_err());
        let json = r#"{"signal":{"type":"constant"},"noise":{"type":"saw"},"deltas":[0.25],
            "n_grid":[20,40],"window":{"rule":"fixed_l","l":10}}"#;
        let c = SweepConfig::from_json(json).unwrap();
        assert_eq!(c.quantities, vec!["delta_p".to_string()]);
    }

    #[test]
    fn const_saw_slope_minus_two() {
        let ks: Vec<usize> = vec![101, 201, 301, 401, 601, 801];
        let cfg = SweepConfig {
            signal: SeriesSpec::Constant,
            noise: SeriesSpec::Saw,
            deltas: vec![0.25],
            n_grid: ks.iter().map(|k| k + 9).collect(),
            window: WindowRule::FixedL { l: 10 },
            d: Some(1),
            quantities: vec!["delta_p".into(), "res_l".into()],
            abscissa: Abscissa::K,
            seed: 0,
        };
        let r = run_sweep(&cfg).unwrap();
        assert_eq!(r.violation_count, 0);
        let dp = &r.fits[0];
        let rl = &r.fits[1];
        assert!((dp.loglog.unwrap().slope + 1.0).abs() < 0.1, "{:?}", dp.loglog);
        assert!((rl.loglog.unwrap().slope + 2.0).abs() < 0.2, "{:?}", rl.loglog);
    }

    #[test]
    fn oscillating_pair_rate() {
        let sig = SeriesSpec::Oscillating {
            terms: vec![OscTerm { amplitude: 1.0, frequency: 0.1, phase: 0.0 }],
        };
        let noise = SeriesSpec::Oscillating {
            terms: vec![OscTerm { amplitude: 1.0, frequency: 0.3, phase: 0.5 }],
        };
        let cfg = SweepConfig {
            signal: sig,
            noise,
            deltas: vec![0.5],
            n_grid: vec![101, 201, 401, 801, 1201, 1601],
            window: WindowRule::Proportional { alpha: 0.5 },
            d: None,
            quantities: vec!["delta_p".into()],
            abscissa: Abscissa::MinLk,
            seed: 0,
        };
        let r = run_sweep(&cfg).unwrap();
        assert_eq!(r.violation_count, 0);
        let f = r.fits[0].loglog.unwrap();
        assert!((f.slope + 1.0).abs() < 0.15, "{f:?}");
    }

    #[test]
    fn exponential_signal_decay() {
        let cfg = SweepConfig {
            signal: SeriesSpec::exponential(1.1),
            noise: SeriesSpec::Constant,
            deltas: vec![1.0],
            n_grid: (3..=12).map(|i| 10 * i + 1).collect(),
            window: WindowRule::Proportional { alpha: 0.5 },
            d: None,
            quantities: vec!["delta_p".into()],
            abscissa: Abscissa::N,
            seed: 0,
        };
        let r = run_sweep(&cfg).unwrap();
        assert_eq!(r.violation_count, 0);
        let n: Vec<f64> = r.records.iter().map(|x| x.n as f64).collect();
        let y: Vec<f64> = r.records.iter().map(|x| x.delta_p / (x.n as f64).sqrt()).collect();
        let f = fit::fit_semilog_top_half(&n, &y).unwrap();
        assert!((f.slope + 1.1f64.ln()).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn sweep_is_reproducible() {
        let cfg = SweepConfig {
            signal: SeriesSpec::cosine(0.2),
            noise: SeriesSpec::white_noise(),
            deltas: vec![0.05],
            n_grid: vec![30, 40],
            window: WindowRule::FixedL { l: 8 },
            d: None,
            quantities: vec!["delta_p".into()],
            abscissa: Abscissa::N,
            seed: 9,
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_sweep(&cfg).unwrap().write_csv(&mut a).unwrap();
        run_sweep(&cfg).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }
}
