//! Reconstruction errors for x_n = a^n with constant noise, L = K.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::methods::ssa_reconstruct;
use crate::perturb::{v0_1, PerturbationPair};
use crate::series::{fmt17, generate, SeriesSpec};
use crate::spectral::RankPolicy;
use crate::trajectory::{diagonal_average, embed};

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionRun {
    pub a: f64,
    pub delta: f64,
    pub n: usize,
    pub l: usize,
    /// Δf_l = f̃_l(δ) − f_l for l = 0..N.
    pub error: Vec<f64>,
    /// Hankelized δ(V0_1 H(δ) + P0perp E), the linear part of the reconstruction error.
    pub main_term: Vec<f64>,
    /// Closed-form curves: 2δb a^{−L}(a^{l+1} − 1)/(l + 1) for l < L, and
    /// 2δb (a(a^{k−1} − 1) − (a² − 1)(k − 1))/((k − 1)a^k) for l = 2L − k ≥ L.
    pub closed_form: Vec<f64>,
    pub df0: f64,
    /// 2δ(a + 1)a^{−L}
    pub df0_predicted: f64,
    /// L·Δf_{L−1}
    pub scaled_df_last: f64,
    /// 2δ(a + 1)/(a − 1)
    pub scaled_df_last_predicted: f64,
    /// max over all l of |Δf_l|
    pub max_error: f64,
    /// max over l < 0.9N of |Δf_l|
    pub max_error_head: f64,
    /// max over l < L of |Δf_l − closed form|
    pub small_l_deviation: f64,
    /// max over l ≥ L (k > 1) of |Δf_l − closed form|
    pub big_l_deviation: f64,
    /// max over l of |Δf_l − main term|
    pub main_term_deviation: f64,
}

fn closed_form_curve(a: f64, delta: f64, l: usize) -> Vec<f64> {
    let b = (a + 1.0) / (a - 1.0);
    let n = 2 * l - 1;
    let al = a.powi(-(l as i32));
    (0..n)
        .map(|i| {
            if i < l {
                2.0 * delta * b * al * (a.powi(i as i32 + 1) - 1.0) / (i as f64 + 1.0)
            } else {
                let k = 2 * l - i;
                let km1 = (k - 1) as f64;
                2.0 * delta * b * (a * (a.powi(k as i32 - 1) - 1.0) - (a * a - 1.0) * km1)
                    / (km1 * a.powi(k as i32))
            }
        })
        .collect()
}

pub fn reconstruction_run(a: f64, delta: f64, n: usize) -> Result<ReconstructionRun> {
    if !(a > 1.0) {
        return Err(Error::InvalidArgument("needs a > 1".into()));
    }
    if n % 2 == 0 || n < 5 {
        return Err(Error::InvalidArgument(format!("N must be odd and at least 5, got {n}")));
    }
    let l = n.div_ceil(2);
    let f = generate(&SeriesSpec::exponential(a), n, None)?;
    let e = generate(&SeriesSpec::Constant, n, None)?;
    let p = PerturbationPair::new(embed(&f.values, l)?, embed(&e.values, l)?, RankPolicy::Known(1))?;
    let rec = ssa_reconstruct(&p, delta, 1)?;
    let error = rec.error;
    let lin = (v0_1(&p) * p.h_delta(delta) + &p.dec.p0perp * &p.e) * delta;
    let main_term = diagonal_average(&lin);
    let closed_form = closed_form_curve(a, delta, l);
    let absmax = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, x| m.max(x.abs()));
    let head = (0.9 * n as f64).ceil() as usize;
    Ok(ReconstructionRun {
        a,
        delta,
        n,
        l,
        df0: error[0],
        df0_predicted: 2.0 * delta * (a + 1.0) * a.powi(-(l as i32)),
        scaled_df_last: l as f64 * error[l - 1],
        scaled_df_last_predicted: 2.0 * delta * (a + 1.0) / (a - 1.0),
        max_error: absmax(&mut error.iter().copied()),
        max_error_head: absmax(&mut error[..head].iter().copied()),
        small_l_deviation: absmax(&mut (0..l).map(|i| error[i] - closed_form[i])),
        big_l_deviation: absmax(&mut (l..n - 1).map(|i| error[i] - closed_form[i])),
        main_term_deviation: absmax(&mut (0..n).map(|i| error[i] - main_term[i])),
        error,
        main_term,
        closed_form,
    })
}

/// Runs every N in parallel; results keep the order of `ns`.
pub fn reconstruction_runs(a: f64, delta: f64, ns: &[usize]) -> Result<Vec<ReconstructionRun>> {
    ns.par_iter().map(|&n| reconstruction_run(a, delta, n)).collect()
}

impl ReconstructionRun {
    /// Columns: index, error, main_term, closed_form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "error", "main_term", "closed_form"])?;
        for i in 0..self.n {
            wr.write_record([
                i.to_string(),
                fmt17(self.error[i]),
                fmt17(self.main_term[i]),
                fmt17(self.closed_form[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_shape() {
        let r = reconstruction_run(1.05, 1.0, 201).unwrap();
        assert_eq!(r.error.len(), 201);
        assert!((r.df0 / r.df0_predicted - 1.0).abs() < 0.05, "{} {}", r.df0, r.df0_predicted);
        assert!(r.main_term_deviation < 0.05 * r.max_error);
        assert!(r.max_error >= r.max_error_head);
    }

    #[test]
    fn closed_form_ends() {
        let c = closed_form_curve(1.01, 1.0, 10);
        let b = 2.01 / 0.01;
        assert!((c[0] - 2.0 * b * 1.01f64.powi(-10) * 0.01).abs() < 1e-12);
        assert_eq!(c.len(), 19);
    }

    #[test]
    fn rejects_even_n() {
        assert!(reconstruction_run(1.01, 1.0, 100).is_err());
    }
}
