use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use subpert::bounds::{compute_bounds, BOUNDS_CSV_HEADER};
use subpert::harness::monte_carlo::{monte_carlo, McConfig};
use subpert::harness::plot::{line_plot, Line, Scale};
use subpert::harness::{bound_violations, reconstruction_runs, run_sweep, SweepConfig};
use subpert::linalg::norm2;
use subpert::methods::{
    esprit, esprit_error_bound, esprit_perturbed, lrf_coefficients, lrf_error_bound, lrf_perturbed,
};
use subpert::perturb::{delta_p_direct, projector_direct, series_projector};
use subpert::series::{fmt17, generate};
use subpert::spectral::{decompose, RankPolicy};
use subpert::trajectory::{embed, write_matrix_csv};
use subpert::{PerturbationPair, Series, SeriesSpec};

use crate::{Cli, Command, Failure, MethodArgs, PairArgs};

type Res<T> = std::result::Result<T, Failure>;

pub fn run(cli: &Cli) -> Res<()> {
    match &cli.command {
        Command::Generate { spec, n, out } => cmd_generate(cli, spec, *n, out.as_deref()),
        Command::Analyze { pair, delta, out } => cmd_analyze(pair, delta, out),
        Command::Expand { pair, delta, tol, out } => cmd_expand(pair, *delta, *tol, out),
        Command::Sweep { config, out } => cmd_sweep(cli, config, out),
        Command::Reconstruct { a, delta, n, out } => cmd_reconstruct(cli, *a, *delta, n, out),
        Command::Esprit { method } => cmd_esprit(method),
        Command::Lrf { method } => cmd_lrf(method),
        Command::Mc { config, out } => cmd_mc(cli, config, out),
    }
}

fn read_text(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path) -> Res<Vec<f64>> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(Series::read_csv(BufReader::new(f))
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        .values)
}

fn create(dir: &Path, name: &str) -> Res<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    let f = File::create(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    Ok(BufWriter::new(f))
}

fn write_svg(dir: &Path, name: &str, svg: &str) -> Res<()> {
    let mut w = create(dir, name)?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn policy(d: Option<usize>) -> RankPolicy {
    d.map(RankPolicy::Known).unwrap_or_default()
}

fn load_pair(signal: &Path, noise: &Path, l: usize, d: Option<usize>) -> Res<PerturbationPair> {
    let f = read_series(signal)?;
    let e = read_series(noise)?;
    if f.len() != e.len() {
        return Err(Failure::Usage(format!(
            "signal has {} values but noise has {}",
            f.len(),
            e.len()
        )));
    }
    Ok(PerturbationPair::new(embed(&f, l)?, embed(&e, l)?, policy(d))?)
}

fn pair_of(a: &PairArgs) -> Res<PerturbationPair> {
    load_pair(&a.signal, &a.noise, a.l, a.d)
}

fn write_key_values(dir: &Path, name: &str, rows: &[(&str, f64)]) -> Res<()> {
    let mut w = create(dir, name)?;
    writeln!(w, "quantity,value")?;
    for (k, v) in rows {
        writeln!(w, "{k},{}", fmt17(*v))?;
        println!("{k} = {v:.6e}");
    }
    w.flush()?;
    Ok(())
}

fn cmd_generate(cli: &Cli, spec: &Path, n: usize, out: Option<&Path>) -> Res<()> {
    let spec = SeriesSpec::from_json(&read_text(spec)?)?;
    let s = generate(&spec, n, Some(cli.seed.unwrap_or(0)))?;
    match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            s.write_csv(BufWriter::new(f))?;
        }
        None => s.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_analyze(args: &PairArgs, deltas: &[f64], out: &Path) -> Res<()> {
    let p = pair_of(args)?;
    println!(
        "L = {}, K = {}, d = {}, mu_min = {:.6e}, mu_max = {:.6e}",
        p.l(),
        p.k(),
        p.d(),
        p.dec.mu_min,
        p.dec.mu_max
    );
    let mut w = create(out, "analyze.csv")?;
    let mut header: Vec<&str> = BOUNDS_CSV_HEADER.to_vec();
    header.extend(["delta_p", "res_v01", "res_w1", "res_l", "res_t", "violations"]);
    writeln!(w, "{}", header.join(","))?;
    for &delta in deltas {
        let report = compute_bounds(&p, delta);
        let dp = delta_p_direct(&p, delta)?;
        let (viol, r) = bound_violations(&p, delta, &dp, &report)?;
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        let mut row = report.csv_row();
        row.extend([fmt17(r.delta_p), fmt17(r.res_v01), fmt17(r.res_w1), opt(r.res_l), opt(r.res_t), viol.join(";")]);
        writeln!(w, "{}", row.join(","))?;
        println!(
            "delta = {delta}: theta1 = {:.6}, theta2 = {:.6}, beta = {:.6e}, ||dP|| = {:.6e}, thm3 rhs = {:.6e}{}",
            report.theta1,
            report.theta2,
            report.beta,
            r.delta_p,
            report.rhs_thm3.value,
            if report.rhs_thm3.valid { "" } else { " (not valid)" }
        );
        if !viol.is_empty() {
            eprintln!("warning: bounds exceeded at delta = {delta}: {}", viol.join(", "));
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_expand(args: &PairArgs, delta: f64, tol: f64, out: &Path) -> Res<()> {
    let p = pair_of(args)?;
    let s = series_projector(&p, delta, tol)?;
    let oracle = projector_direct(&p, delta, p.d())?;
    let order = match s.kind {
        subpert::OperatorKind::Series(k) => k,
        _ => 0,
    };
    write_key_values(
        out,
        "expand.csv",
        &[
            ("delta", delta),
            ("beta_bound", p.beta_bound(delta)),
            ("order", order as f64),
            ("tail_bound", s.tail_bound.unwrap_or(0.0)),
            ("oracle_difference", norm2(&(&s.matrix - &oracle.matrix))),
        ],
    )?;
    let mut w = create(out, "projector.csv")?;
    write_matrix_csv(&s.matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: &Path, out: &Path) -> Res<()> {
    let mut cfg = SweepConfig::from_json(&read_text(config)?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let r = run_sweep(&cfg)?;
    r.write_csv(create(out, "sweep.csv")?)?;
    r.write_fits_csv(create(out, "fits.csv")?)?;
    for f in &r.fits {
        match f.loglog {
            Some(l) => println!(
                "{} delta = {}: log-log slope {:.4} ± {:.4}, last value {:.6e}",
                f.quantity, f.delta, l.slope, l.slope_half_width, f.last_value
            ),
            None => println!("{} delta = {}: no fit", f.quantity, f.delta),
        }
    }
    if r.violation_count > 0 {
        eprintln!("warning: {} bound violations recorded in sweep.csv", r.violation_count);
    }
    if cli.plot {
        let mut lines = Vec::new();
        for q in &cfg.quantities {
            for &delta in &cfg.deltas {
                let recs: Vec<_> = r.records.iter().filter(|x| x.delta == delta).collect();
                lines.push(Line {
                    label: format!("{q}, delta = {delta}"),
                    x: recs.iter().map(|x| x.n as f64).collect(),
                    y: recs.iter().map(|x| x.quantity(q).unwrap_or(f64::NAN)).collect(),
                });
            }
        }
        write_svg(out, "sweep.svg", &line_plot("sweep", &lines, Scale::Log, Scale::Log))?;
    }
    Ok(())
}

fn cmd_reconstruct(cli: &Cli, a: f64, delta: f64, ns: &[usize], out: &Path) -> Res<()> {
    let runs = reconstruction_runs(a, delta, ns)?;
    for r in &runs {
        r.write_csv(create(out, &format!("reconstruct_{}.csv", r.n))?)?;
        println!(
            "N = {}, L = {}: df0 = {:.6e} (asymptotic {:.6e}), L*df(L-1) = {:.6} (asymptotic {:.6}), max |df| = {:.6}, max over l < 0.9N = {:.6}",
            r.n,
            r.l,
            r.df0,
            r.df0_predicted,
            r.scaled_df_last,
            r.scaled_df_last_predicted,
            r.max_error,
            r.max_error_head
        );
    }
    if cli.plot {
        let lines: Vec<Line> = runs
            .iter()
            .map(|r| Line {
                label: format!("N = {}", r.n),
                x: (0..r.n).map(|i| i as f64).collect(),
                y: r.error.clone(),
            })
            .collect();
        write_svg(out, "reconstruct.svg", &line_plot("reconstruction errors", &lines, Scale::Linear, Scale::Linear))?;
    }
    Ok(())
}

/// Unperturbed decomposition, and the pair when noise is given.
fn method_inputs(m: &MethodArgs) -> Res<(subpert::SpectralDecomposition, Option<(PerturbationPair, f64)>)> {
    match (&m.noise, m.delta) {
        (Some(noise), Some(delta)) => {
            let p = load_pair(&m.signal, noise, m.l, m.d)?;
            Ok((p.dec.clone(), Some((p, delta))))
        }
        (Some(_), None) => Err(Failure::Usage("--noise needs --delta".into())),
        _ => {
            let x = read_series(&m.signal)?;
            Ok((decompose(&embed(&x, m.l)?, policy(m.d))?, None))
        }
    }
}

fn cmd_esprit(m: &MethodArgs) -> Res<()> {
    let (dec, pert) = method_inputs(m)?;
    let base = esprit(&dec.basis)?;
    let mut w = create(&m.out, "esprit.csv")?;
    writeln!(w, "estimate,re,im,modulus,frequency")?;
    let mut emit = |tag: &str, r: &subpert::methods::EspritResult| -> io::Result<()> {
        for (i, (re, im)) in r.eigenvalues.iter().enumerate() {
            writeln!(w, "{tag},{},{},{},{}", fmt17(*re), fmt17(*im), fmt17(r.moduli[i]), fmt17(r.frequencies[i]))?;
        }
        Ok(())
    };
    emit("signal", &base)?;
    for (i, (re, im)) in base.eigenvalues.iter().enumerate() {
        println!(
            "root {i}: {re:.12} {im:+.12}i  modulus {:.12}  frequency {:.12}",
            base.moduli[i], base.frequencies[i]
        );
    }
    if let Some((p, delta)) = pert {
        let dp = norm2(&delta_p_direct(&p, delta)?);
        let bound = esprit_error_bound(dp, base.upsilon)?;
        let est = esprit_perturbed(&p, delta, dec.d)?;
        emit("perturbed", &est)?;
        w.flush()?;
        write_key_values(
            &m.out,
            "esprit_certificate.csv",
            &[
                ("delta", delta),
                ("upsilon", base.upsilon),
                ("delta_p", dp),
                ("bound", bound),
                ("measured", norm2(&(&est.d - &base.d))),
            ],
        )?;
    } else {
        w.flush()?;
        println!("upsilon = {:.6e}", base.upsilon);
    }
    Ok(())
}

fn cmd_lrf(m: &MethodArgs) -> Res<()> {
    let (dec, pert) = method_inputs(m)?;
    let base = lrf_coefficients(&dec)?;
    let perturbed = match &pert {
        Some((p, delta)) => Some(lrf_perturbed(p, *delta, dec.d)?),
        None => None,
    };
    let mut w = create(&m.out, "lrf.csv")?;
    writeln!(w, "lag,signal,perturbed")?;
    let coef = base.coefficients();
    let pc = perturbed.as_ref().map(|r| r.coefficients());
    for (k, c) in coef.iter().enumerate() {
        let pv = pc.as_ref().map(|v| fmt17(v[k])).unwrap_or_default();
        writeln!(w, "{},{},{pv}", k + 1, fmt17(*c))?;
        println!("b_{} = {c:.12}", k + 1);
    }
    w.flush()?;
    if let (Some((p, delta)), Some(r1)) = (pert, perturbed) {
        let dp = norm2(&delta_p_direct(&p, delta)?);
        let bound = lrf_error_bound(dp, base.theta)?;
        let measured = base.r.iter().zip(&r1.r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        write_key_values(
            &m.out,
            "lrf_certificate.csv",
            &[
                ("delta", delta),
                ("theta", base.theta),
                ("delta_p", dp),
                ("bound", bound),
                ("measured", measured),
            ],
        )?;
    } else {
        println!("theta = {:.6e}", base.theta);
    }
    Ok(())
}

fn cmd_mc(cli: &Cli, config: &Path, out: &Path) -> Res<()> {
    let mut cfg = McConfig::from_json(&read_text(config)?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let s = monte_carlo(&cfg)?;
    s.write_csv(create(out, "mc.csv")?)?;
    let mut w = create(out, "mc_summary.json")?;
    serde_json::to_writer_pretty(&mut w, &s).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    match &s.clt {
        Some(c) => println!(
            "accepted {} of {} (rejection rate {:.4}); max entry variance rel. error {:.4}; min tied correlation {:.4}",
            c.accepted, c.attempted, c.rejection_rate, c.max_rel_var_error, c.min_tied_correlation
        ),
        None => {
            println!("{}: max over trials and grid {:.6}", s.statistic, s.overall_max);
            for (n, v) in s.n_grid.iter().zip(&s.grid_max) {
                println!("  N = {n}: max {v:.6}");
            }
            if let Some(r) = s.reference {
                println!("reference constant {r:.6}");
            }
        }
    }
    if cli.plot && s.clt.is_none() {
        let line = Line {
            label: format!("{} (max over trials)", s.statistic),
            x: s.n_grid.iter().map(|&n| n as f64).collect(),
            y: s.grid_max.clone(),
        };
        write_svg(out, "mc.svg", &line_plot(&s.statistic, &[line], Scale::Log, Scale::Linear))?;
    }
    Ok(())
}
