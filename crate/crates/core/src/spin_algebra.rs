// SPDX-License-Identifier: Apache-2.0

//! Spin-S operators, the LMG Hamiltonian, SU(2) coherent states and the
//! normalized Hilbert-Schmidt inner product.
//!
//! Basis convention: the S_z eigenbasis ordered by descending magnetic
//! quantum number, index `i` <-> `m = S - i`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Result, SovError};
use crate::linalg::{self, re, CMat, CVec, I};

pub const DEFAULT_HERM_TOL: f64 = 1e-12;

/// Spin quantum number stored as the integer `2S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinSpec {
    twice_s: u32,
}

impl SpinSpec {
    pub fn from_twice(twice_s: u32) -> Self {
        Self { twice_s }
    }

    /// Number of two-level systems `N = 2S` in the symmetric sector.
    pub fn from_particles(n: u32) -> Self {
        Self { twice_s: n }
    }

    pub fn new(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if !twice.is_finite() || twice < 0.0 || (twice - twice.round()).abs() > 1e-12 {
            return Err(SovError::InvalidParameter(format!(
                "spin S = {s} is not a non-negative half-integer"
            )));
        }
        Ok(Self {
            twice_s: twice.round() as u32,
        })
    }

    pub fn s(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn twice_s(&self) -> u32 {
        self.twice_s
    }

    pub fn particles(&self) -> u32 {
        self.twice_s
    }

    pub fn dim(&self) -> usize {
        self.twice_s as usize + 1
    }

    /// Magnetic quantum number of basis index `i`.
    pub fn m(&self, i: usize) -> f64 {
        self.s() - i as f64
    }
}

/// Dense Hermitian matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMat,
    herm_tol: f64,
}

impl HermitianOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        Self::with_tolerance(matrix, DEFAULT_HERM_TOL)
    }

    pub fn with_tolerance(matrix: CMat, herm_tol: f64) -> Result<Self> {
        linalg::ensure_square(&matrix)?;
        let residual = linalg::hermiticity_residual(&matrix);
        if !(residual <= herm_tol) {
            return Err(SovError::NotHermitian {
                residual,
                tol: herm_tol,
            });
        }
        Ok(Self { matrix, herm_tol })
    }

    /// Projects onto the Hermitian part and returns the removed asymmetry.
    pub fn symmetrized(matrix: &CMat) -> Result<(Self, f64)> {
        linalg::ensure_square(matrix)?;
        let (sym, residual) = linalg::symmetrize(matrix);
        Ok((
            Self {
                matrix: sym,
                herm_tol: DEFAULT_HERM_TOL,
            },
            residual,
        ))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: linalg::identity(dim),
            herm_tol: DEFAULT_HERM_TOL,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMat::zeros(dim, dim),
            herm_tol: DEFAULT_HERM_TOL,
        }
    }

    /// Real diagonal matrix.
    pub fn diagonal(values: &[f64]) -> Self {
        let v = CVec::from_iterator(values.len(), values.iter().map(|&x| re(x)));
        Self {
            matrix: CMat::from_diagonal(&v),
            herm_tol: DEFAULT_HERM_TOL,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn herm_tol(&self) -> f64 {
        self.herm_tol
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            matrix: &self.matrix * re(a),
            herm_tol: self.herm_tol,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        linalg::ensure_same_dim(&self.matrix, &other.matrix)?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            herm_tol: self.herm_tol,
        })
    }

    /// `A^2`, Hermitian whenever `A` is.
    pub fn square(&self) -> Self {
        let (m, _) = linalg::symmetrize(&(&self.matrix * &self.matrix));
        Self {
            matrix: m,
            herm_tol: self.herm_tol,
        }
    }

    pub fn eigen(&self) -> Result<linalg::HermitianEigen> {
        linalg::eigh(&self.matrix)
    }

    /// `<psi|A|psi>` (real for Hermitian A).
    pub fn expectation(&self, psi: &CVec) -> Result<f64> {
        if psi.len() != self.dim() {
            return Err(SovError::DimensionMismatch {
                expected: self.dim(),
                got: psi.len(),
            });
        }
        Ok(psi.dotc(&(&self.matrix * psi)).re)
    }
}

#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub x: HermitianOperator,
    pub y: HermitianOperator,
    pub z: HermitianOperator,
}

impl SpinOperators {
    /// Real linear combination `cx Sx + cy Sy + cz Sz`.
    pub fn combination(&self, cx: f64, cy: f64, cz: f64) -> HermitianOperator {
        let m = self.x.matrix() * re(cx) + self.y.matrix() * re(cy) + self.z.matrix() * re(cz);
        HermitianOperator {
            matrix: m,
            herm_tol: DEFAULT_HERM_TOL,
        }
    }

    /// `S^2 = Sx^2 + Sy^2 + Sz^2`.
    pub fn total_squared(&self) -> HermitianOperator {
        let m = self.x.square().matrix + self.y.square().matrix + self.z.square().matrix;
        HermitianOperator {
            matrix: m,
            herm_tol: DEFAULT_HERM_TOL,
        }
    }
}

/// Raising operator `S+` in the descending-m basis.
pub fn raising_operator(spec: SpinSpec) -> CMat {
    let d = spec.dim();
    let s = spec.s();
    let mut sp = CMat::zeros(d, d);
    // S+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>; |m+1> sits one index above |m>.
    for j in 1..d {
        let m = spec.m(j);
        sp[(j - 1, j)] = re((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    sp
}

pub fn spin_operators(spec: SpinSpec) -> SpinOperators {
    let d = spec.dim();
    let sp = raising_operator(spec);
    let sm = sp.adjoint();
    let x = (&sp + &sm) * re(0.5);
    let y = (&sp - &sm) * (-I * 0.5);
    let z = CMat::from_diagonal(&CVec::from_iterator(d, (0..d).map(|i| re(spec.m(i)))));
    let wrap = |matrix| HermitianOperator {
        matrix,
        herm_tol: DEFAULT_HERM_TOL,
    };
    SpinOperators {
        x: wrap(x),
        y: wrap(y),
        z: wrap(z),
    }
}

/// `H = Omega Sz - (2/N) Sx^2` with `N = 2S`.
pub fn lmg_hamiltonian(spec: SpinSpec, omega: f64) -> Result<HermitianOperator> {
    if spec.twice_s() == 0 {
        return Err(SovError::InvalidParameter(
            "LMG Hamiltonian needs S > 0 (N = 2S appears in a denominator)".into(),
        ));
    }
    if !omega.is_finite() {
        return Err(SovError::InvalidParameter(format!("Omega = {omega}")));
    }
    let ops = spin_operators(spec);
    let n = spec.particles() as f64;
    let h = ops.z.matrix() * re(omega) - ops.x.square().matrix() * re(2.0 / n);
    HermitianOperator::new(h)
}

/// SU(2) coherent state `exp(zeta S+)|S,-S> / (1+|zeta|^2)^S`.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub zeta: Complex64,
    pub spin: SpinSpec,
    pub amplitudes: CVec,
}

impl CoherentState {
    /// Bloch angles: `zeta = -tan(theta/2) e^{-i phi}`.
    pub fn from_angles(spec: SpinSpec, theta: f64, phi: f64) -> Result<Self> {
        let zeta = Complex64::from_polar(-(theta / 2.0).tan(), -phi);
        su2_coherent_state(spec, zeta)
    }

    pub fn overlap(&self, other: &CoherentState) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|j| ((n - j) as f64).ln() - ((j + 1) as f64).ln())
        .sum()
}

pub fn su2_coherent_state(spec: SpinSpec, zeta: Complex64) -> Result<CoherentState> {
    if !zeta.re.is_finite() || !zeta.im.is_finite() {
        return Err(SovError::InvalidParameter(format!("zeta = {zeta}")));
    }
    let n = spec.twice_s();
    let d = spec.dim();
    let r = zeta.norm();
    let phase = zeta.arg();
    // |zeta> = sum_k sqrt(C(2S,k)) zeta^k |m = -S + k> / (1+|zeta|^2)^S, in log space.
    let mut log_mag = vec![f64::NEG_INFINITY; d];
    for k in 0..=n {
        let power = if k == 0 {
            0.0
        } else if r == 0.0 {
            f64::NEG_INFINITY
        } else {
            k as f64 * r.ln()
        };
        log_mag[(n - k) as usize] = 0.5 * ln_binomial(n, k) + power;
    }
    let peak = log_mag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut amps = DVector::<Complex64>::zeros(d);
    for k in 0..=n {
        let i = (n - k) as usize;
        amps[i] = Complex64::from_polar((log_mag[i] - peak).exp(), k as f64 * phase);
    }
    let norm = amps.norm();
    amps /= re(norm);
    Ok(CoherentState {
        zeta,
        spin: spec,
        amplitudes: amps,
    })
}

/// `(A, B) = Tr(A^dag B) * 3 / (S(S+1)(2S+1))`, so that `(S_i, S_j) = delta_ij`.
pub fn hs_inner(a: &CMat, b: &CMat, spec: SpinSpec) -> Result<Complex64> {
    let d = linalg::ensure_same_dim(a, b)?;
    if d != spec.dim() {
        return Err(SovError::DimensionMismatch {
            expected: spec.dim(),
            got: d,
        });
    }
    let s = spec.s();
    if s == 0.0 {
        return Err(SovError::InvalidParameter(
            "Hilbert-Schmidt normalization diverges at S = 0".into(),
        ));
    }
    let norm = 3.0 / (s * (s + 1.0) * (2.0 * s + 1.0));
    Ok(linalg::trace(&(a.adjoint() * b)) * norm)
}
