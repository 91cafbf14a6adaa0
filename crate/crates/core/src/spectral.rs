//! Clustered eigendecomposition of A = HHᵀ and the operators built from it.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

/// How the rank d is determined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankPolicy {
    /// Count eigenvalues above `tol · μ_max`.
    Threshold(f64),
    /// Take exactly d; fails when fewer than d eigenvalues clear the default threshold.
    Known(usize),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Threshold(DEFAULT_RANK_TOL)
    }
}

/// A group of numerically equal positive eigenvalues and its projector.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub mu: f64,
    pub dim: usize,
    pub projector: Matrix,
}

/// Eigen-structure of A = HHᵀ.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Positive clusters, largest eigenvalue first.
    pub clusters: Vec<Cluster>,
    pub d: usize,
    pub p0: Matrix,
    pub p0perp: Matrix,
    pub s0: Matrix,
    pub mu_min: f64,
    pub mu_max: f64,
    /// All eigenvalues of A in decreasing order.
    pub eigenvalues: Vec<f64>,
    /// Leading d eigenvectors (orthonormal basis of the signal subspace).
    pub basis: Matrix,
}

/// Decomposes A = HHᵀ.
pub fn decompose(h: &Matrix, policy: RankPolicy) -> Result<SpectralDecomposition> {
    if h.is_empty() || h.amax() == 0.0 {
        return Err(Error::InvalidArgument("signal matrix is zero".into()));
    }
    let a = h * h.transpose();
    decompose_gram(&a, policy, DEFAULT_CLUSTER_TOL)
}

/// Decomposes a symmetric positive semidefinite matrix directly.
pub fn decompose_gram(a: &Matrix, policy: RankPolicy, cluster_tol: f64) -> Result<SpectralDecomposition> {
    let l = a.nrows();
    let (vals, vecs) = linalg::sym_eigen_desc(a);
    let top = vals[0];
    if !(top > 0.0) {
        return Err(Error::InvalidArgument("Gram matrix has no positive eigenvalue".into()));
    }
    let d = match policy {
        RankPolicy::Threshold(tol) => vals.iter().take_while(|&&v| v > tol * top).count(),
        RankPolicy::Known(d) => {
            let found = vals.iter().take_while(|&&v| v > DEFAULT_RANK_TOL * top).count();
            if d == 0 || found < d {
                return Err(Error::DegenerateRank { expected: d, found });
            }
            d
        }
    };
    let mut clusters = Vec::new();
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (vals[end - 1] - vals[end]) <= cluster_tol * vals[end - 1] {
            end += 1;
        }
        let block = vecs.columns(start, end - start);
        let mu = vals[start..end].iter().sum::<f64>() / (end - start) as f64;
        clusters.push(Cluster {
            mu,
            dim: end - start,
            projector: linalg::symmetrize(&(block * block.transpose())),
        });
        start = end;
    }
    let basis = vecs.columns(0, d).into_owned();
    let p0perp = linalg::symmetrize(&(&basis * basis.transpose()));
    let p0 = Matrix::identity(l, l) - &p0perp;
    let mut s0 = Matrix::zeros(l, l);
    for c in &clusters {
        s0 += &c.projector / c.mu;
    }
    Ok(SpectralDecomposition {
        mu_min: clusters.last().map(|c| c.mu).unwrap_or(0.0),
        mu_max: clusters.first().map(|c| c.mu).unwrap_or(0.0),
        clusters,
        d,
        p0,
        p0perp,
        s0,
        eigenvalues: vals,
        basis,
    })
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.p0.nrows()
    }

    /// S0^(k): −P0 for k = 0, otherwise Σ P_μ/μ^k.
    pub fn s0_power(&self, k: usize) -> Matrix {
        if k == 0 {
            return -&self.p0;
        }
        let l = self.dim();
        let mut out = Matrix::zeros(l, l);
        for c in &self.clusters {
            out += &c.projector / c.mu.powi(k as i32);
        }
        out
    }

    /// Σ μ P_μ.
    pub fn reconstruct(&self) -> Matrix {
        let l = self.dim();
        let mut out = Matrix::zeros(l, l);
        for c in &self.clusters {
            out += &c.projector * c.mu;
        }
        out
    }
}

/// Shorthand for `decompose(h, policy)?.s0_power(k)`.
pub fn s0_power(dec: &SpectralDecomposition, k: usize) -> Matrix {
    dec.s0_power(k)
}
