//! Hankel embedding, diagonal averaging and matrix norms.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::series::fmt17;

/// L × K trajectory matrix with entry (i, j) = x_{i+j}, K = N − L + 1.
pub fn embed(series: &[f64], l: usize) -> Result<Matrix> {
    let n = series.len();
    if l == 0 || l > n {
        return Err(Error::WindowOutOfRange { l, n });
    }
    let k = n - l + 1;
    Ok(Matrix::from_fn(l, k, |i, j| series[i + j]))
}

/// Anti-diagonal means of `m`, as a series of length L + K − 1.
pub fn diagonal_average(m: &Matrix) -> Vec<f64> {
    let (l, k) = m.shape();
    let mut sum = vec![0.0; l + k - 1];
    let mut cnt = vec![0usize; l + k - 1];
    for j in 0..k {
        for i in 0..l {
            sum[i + j] += m[(i, j)];
            cnt[i + j] += 1;
        }
    }
    sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect()
}

/// Replaces each anti-diagonal by its arithmetic mean.
pub fn hankelize(m: &Matrix) -> Matrix {
    let avg = diagonal_average(m);
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| avg[i + j])
}

/// Largest spread within an anti-diagonal, relative to the largest entry.
pub fn hankel_defect(m: &Matrix) -> f64 {
    let (l, k) = m.shape();
    let scale = linalg::max_norm(m).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for s in 0..l + k - 1 {
        let i0 = s.saturating_sub(k - 1);
        let i1 = s.min(l - 1);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in i0..=i1 {
            let v = m[(i, s - i)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max(hi - lo);
    }
    worst / scale
}

/// Series corresponding to a Hankel matrix.
pub fn matrix_to_series(m: &Matrix) -> Result<Vec<f64>> {
    let spread = hankel_defect(m);
    if spread > 1e-12 {
        return Err(Error::NotHankel { spread });
    }
    let (l, k) = m.shape();
    Ok((0..l + k - 1)
        .map(|s| if s < k { m[(0, s)] } else { m[(s - k + 1, k - 1)] })
        .collect())
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    linalg::norm2(m)
}

/// Largest absolute entry.
pub fn max_norm(m: &Matrix) -> f64 {
    linalg::max_norm(m)
}

/// Writes a matrix as CSV, one row per line, 17 significant digits.
pub fn write_matrix_csv<W: Write>(m: &Matrix, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        wr.write_record((0..m.ncols()).map(|j| fmt17(m[(i, j)])))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a headerless CSV matrix.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<Matrix> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("matrix csv: {e}")))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix csv: non-finite entry".into()));
        }
        rows.push(row);
    }
    let l = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    if l == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument("matrix csv: ragged or empty".into()));
    }
    Ok(Matrix::from_fn(l, k, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{generate, SeriesSpec};
    use proptest::prelude::*;

    #[test]
    fn embed_small() {
        let m = embed(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 4, &[1., 2., 3., 4., 2., 3., 4., 5.]));
        let c = embed(&[1.0; 5], 3).unwrap();
        assert_eq!(c, Matrix::from_element(3, 3, 1.0));
        let saw = generate(&SeriesSpec::Saw, 5, None).unwrap();
        let s = embed(&saw.values, 2).unwrap();
        assert_eq!(s, Matrix::from_row_slice(2, 4, &[1., -1., 1., -1., -1., 1., -1., 1.]));
        assert!(embed(&[1.0], 2).is_err());
        assert!(embed(&[1.0], 0).is_err());
    }

    #[test]
    fn hankelize_small() {
        let m = Matrix::from_row_slice(2, 2, &[0., 2., 4., 6.]);
        let h = hankelize(&m);
        assert_eq!(h, Matrix::from_row_slice(2, 2, &[0., 3., 3., 6.]));
        assert_eq!(matrix_to_series(&h).unwrap(), vec![0.0, 3.0, 6.0]);
        let ones = Matrix::from_element(2, 2, 1.0);
        assert_eq!(hankelize(&ones), ones);
        assert!(matrix_to_series(&m).is_err());
        assert_eq!(
            matrix_to_series(&Matrix::from_row_slice(2, 2, &[1., 2., 2., 3.])).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn norms() {
        let ones = Matrix::from_element(3, 3, 1.0);
        assert!((spectral_norm(&ones) - 3.0).abs() < 1e-12);
        assert_eq!(max_norm(&ones), 1.0);
        for n in [4usize, 9, 16] {
            let g = Matrix::from_element(n, n, 1.0 / (n as f64).sqrt());
            assert!((spectral_norm(&g) - (n as f64).sqrt()).abs() < 1e-10 * n as f64);
        }
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = Matrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 0.3));
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert_eq!(read_matrix_csv(&buf[..]).unwrap(), m);
    }

    proptest! {
        #[test]
        fn embed_round_trip(xs in prop::collection::vec(-1e3f64..1e3, 1..40), frac in 0.0f64..1.0) {
            let l = 1 + ((xs.len() - 1) as f64 * frac) as usize;
            let m = embed(&xs, l).unwrap();
            prop_assert_eq!(matrix_to_series(&m).unwrap(), xs);
        }

        #[test]
        fn hankelize_idempotent_contraction(
            l in 1usize..7, k in 1usize..7,
            seed in prop::collection::vec(-5f64..5.0, 49)
        ) {
            let m = Matrix::from_fn(l, k, |i, j| seed[i * 7 + j]);
            let h = hankelize(&m);
            prop_assert!((hankelize(&h) - &h).amax() < 1e-12);
            prop_assert!(max_norm(&h) <= max_norm(&m) + 1e-12);
            let sn = spectral_norm(&m);
            prop_assert!(max_norm(&m) <= sn * (1.0 + 1e-12) + 1e-12);
            prop_assert!(sn <= ((l * k) as f64).sqrt() * max_norm(&m) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn embed_is_linear(
            f in prop::collection::vec(-10f64..10.0, 12),
            e in prop::collection::vec(-10f64..10.0, 12),
            d in -2f64..2.0
        ) {
            let fe: Vec<f64> = f.iter().zip(&e).map(|(a, b)| a + d * b).collect();
            let lhs = embed(&fe, 5).unwrap();
            let rhs = embed(&f, 5).unwrap() + embed(&e, 5).unwrap() * d;
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
