// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear-algebra helpers shared by the physics modules.
//!
//! Hermitian problems go through nalgebra's symmetric eigensolver. The
//! general (non-normal) eigenproblem of the vectorized adjoint Lindbladian is
//! delegated to faer, which is substantially faster for the d^2 x d^2
//! matrices that appear at S = 20.

use faer::linalg::solvers::{DenseSolveCore, Eigen};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, SovError};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut r = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            r = r.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    r
}

/// Returns `(M + M^dag) / 2` together with the removed asymmetry.
pub fn symmetrize(m: &CMat) -> (CMat, f64) {
    let residual = hermiticity_residual(m);
    let sym = (m + m.adjoint()) * re(0.5);
    (sym, residual)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn ensure_square(m: &CMat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(SovError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn ensure_same_dim(a: &CMat, b: &CMat) -> Result<usize> {
    let d = ensure_square(a)?;
    let db = ensure_square(b)?;
    if d != db {
        return Err(SovError::DimensionMismatch {
            expected: d,
            got: db,
        });
    }
    Ok(d)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the orthonormal eigenvectors matching `values`.
    pub vectors: CMat,
}

impl HermitianEigen {
    /// `V f(Λ) V^dag` for a complex-valued spectral function.
    pub fn apply_fn(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn eigh(m: &CMat) -> Result<HermitianEigen> {
    let d = ensure_square(m)?;
    if d == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SovError::Eigen("non-finite matrix entry".into()));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

/// `exp(-i G)` for Hermitian `G`; exactly unitary up to roundoff.
pub fn expm_neg_i_hermitian(g: &CMat) -> Result<CMat> {
    let eig = eigh(g)?;
    Ok(eig.apply_fn(|lam| Complex64::from_polar(1.0, -lam)))
}

/// Eigendecomposition `M = V diag(values) V^{-1}` of a general complex matrix.
#[derive(Debug, Clone)]
pub struct GeneralEigen {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
    pub inverse: CMat,
    /// 1-norm condition number of `vectors`.
    pub condition: f64,
}

fn to_faer(m: &CMat) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn one_norm(m: &CMat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn eig_general(m: &CMat) -> Result<GeneralEigen> {
    ensure_square(m)?;
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SovError::Eigen("non-finite matrix entry".into()));
    }
    let a = to_faer(m);
    let eig = Eigen::new(a.as_ref()).map_err(|e| SovError::Eigen(format!("{e:?}")))?;
    let u = eig.U();
    let s = eig.S().column_vector();
    let values: Vec<Complex64> = (0..s.nrows()).map(|k| s[k]).collect();
    let inv = u.partial_piv_lu().inverse();
    let vectors = from_faer(u);
    let inverse = from_faer(inv.as_ref());
    let condition = one_norm(&vectors) * one_norm(&inverse);
    let condition = if condition.is_finite() {
        condition
    } else {
        f64::INFINITY
    };
    Ok(GeneralEigen {
        values,
        vectors,
        inverse,
        condition,
    })
}

/// Common eigenbasis of two commuting Hermitian matrices.
///
/// Returns the unitary basis (columns) and the diagonal entries of `a` and `b`
/// in that basis. Fails with [`SovError::NonCommuting`] if no mixing weight
/// diagonalizes both to within `tol`.
pub fn common_eigenbasis(a: &CMat, b: &CMat, tol: f64) -> Result<(CMat, Vec<f64>, Vec<f64>)> {
    let d = ensure_same_dim(a, b)?;
    let comm = max_abs(&commutator(a, b));
    if comm > tol {
        return Err(SovError::NonCommuting { norm: comm });
    }
    let scale = max_abs(a).max(max_abs(b)).max(1.0);
    // Irrational weights make accidental degeneracies of a + w b unlikely.
    for w in [
        0.618_033_988_749_894_9,
        0.414_213_562_373_095,
        std::f64::consts::FRAC_1_PI,
    ] {
        let mix = a + b * re(w);
        let eig = eigh(&mix)?;
        let v = &eig.vectors;
        let at = v.adjoint() * a * v;
        let bt = v.adjoint() * b * v;
        let mut off = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off = off.max(at[(i, j)].norm()).max(bt[(i, j)].norm());
                }
            }
        }
        if off <= 1e-9 * scale {
            let ea = (0..d).map(|k| at[(k, k)].re).collect();
            let eb = (0..d).map(|k| bt[(k, k)].re).collect();
            return Ok((eig.vectors, ea, eb));
        }
    }
    Err(SovError::NonCommuting { norm: comm })
}

/// Ordinary least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    /// Standard error of the slope (NaN with fewer than three points).
    pub slope_stderr: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept,
        rms: (sse / nf).sqrt(),
        slope_stderr,
    })
}
