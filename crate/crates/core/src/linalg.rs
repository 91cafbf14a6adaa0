//! Dense linear algebra helpers shared by the other modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub fn sym_eigen_desc(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Spectral norm (largest singular value).
///
/// Symmetric matrices go through their eigenvalues directly; everything else
/// through the eigenvalues of the smaller Gram matrix.
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let m = m / scale;
    let sym = m.is_square() && (&m - m.transpose()).amax() == 0.0;
    let v = if sym {
        let e = SymmetricEigen::new(m).eigenvalues;
        e.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    } else {
        let g = if m.nrows() <= m.ncols() {
            &m * m.transpose()
        } else {
            m.transpose() * &m
        };
        let e = SymmetricEigen::new(symmetrize(&g)).eigenvalues;
        e.iter().fold(0.0f64, |acc, x| acc.max(*x)).max(0.0).sqrt()
    };
    v * scale
}

/// Largest absolute entry.
pub fn max_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

/// Leading `d` left singular vectors of `m` (columns ordered by decreasing
/// singular value) together with all singular values in decreasing order.
/// Thin SVD via faer: left singular vectors and nonincreasing singular values.
fn thin_svd_left(m: &Matrix) -> (faer::Mat<f64>, Vec<f64>) {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().expect("SVD did not converge");
    let sv: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    (svd.U().to_owned(), sv)
}

pub fn leading_left_singular(m: &Matrix, d: usize) -> (Matrix, Vec<f64>) {
    let (u, sv) = thin_svd_left(m);
    let d = d.min(sv.len());
    (Matrix::from_fn(m.nrows(), d, |i, j| u[(i, j)]), sv)
}

/// Orthonormal basis of the `d` leading left singular vectors, with a relative
/// gap check between the d-th and (d+1)-th singular values.
pub fn leading_basis(m: &Matrix, d: usize, min_gap: f64) -> Result<Matrix> {
    if d == 0 || d > m.nrows().min(m.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "rank {d} outside 1..={}",
            m.nrows().min(m.ncols())
        )));
    }
    let (u, sv) = leading_left_singular(m, d);
    if d < sv.len() {
        let gap = if sv[d - 1] > 0.0 {
            (sv[d - 1] - sv[d]) / sv[d - 1]
        } else {
            0.0
        };
        if !(gap > min_gap) {
            return Err(Error::AmbiguousSubspace { d, gap });
        }
    }
    Ok(u)
}

/// Orthogonal projector onto the span of the `d` leading left singular vectors.
pub fn leading_projector(m: &Matrix, d: usize, min_gap: f64) -> Result<Matrix> {
    let u = leading_basis(m, d, min_gap)?;
    Ok(symmetrize(&(&u * u.transpose())))
}

/// Orthonormal basis of the column space, truncated at relative rank tolerance.
pub fn column_basis(m: &Matrix, rel_tol: f64) -> Matrix {
    let (u, sv) = leading_left_singular(m, m.nrows().min(m.ncols()));
    let top = sv.first().copied().unwrap_or(0.0);
    let r = sv.iter().take_while(|&&s| s > rel_tol * top && s > 0.0).count();
    u.columns(0, r).into_owned()
}

/// Positive singular values in decreasing order (relative tolerance cutoff).
pub fn positive_singular_values(m: &Matrix, rel_tol: f64) -> Vec<f64> {
    let (_, sv) = thin_svd_left(m);
    let top = sv.first().copied().unwrap_or(0.0);
    sv.into_iter().filter(|&s| s > rel_tol * top && s > 0.0).collect()
}

/// Solve `m X = rhs` by LU; `None` when singular.
pub fn solve(m: &Matrix, rhs: &Matrix) -> Option<Matrix> {
    m.clone().lu().solve(rhs)
}

/// Inverse by LU with a reciprocal condition sanity check.
pub fn inverse(m: &Matrix) -> Option<Matrix> {
    let inv = m.clone().try_inverse()?;
    if inv.iter().all(|x| x.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Largest singular value of a matrix-free operator via Lanczos on `AᵀA`
/// with full reorthogonalization.
///
/// `apply` computes `A x` (length `rows`), `apply_t` computes `Aᵀ y` (length `cols`).
pub fn lanczos_top_singular<F, G>(cols: usize, steps: usize, seed: u64, apply: F, apply_t: G) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let steps = steps.min(cols).max(1);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut v: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    q.push(v);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    for j in 0..steps {
        let mut w = apply_t(&apply(&q[j]));
        let a: f64 = w.iter().zip(&q[j]).map(|(x, y)| x * y).sum();
        alpha.push(a);
        // two passes of classical Gram-Schmidt against every stored vector
        for _ in 0..2 {
            for qi in &q {
                let c: f64 = w.iter().zip(qi).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if j + 1 == steps || b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        q.push(w);
    }
    let m = alpha.len();
    let mut t = Matrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let top = SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, x| acc.max(*x));
    top.max(0.0).sqrt()
}
