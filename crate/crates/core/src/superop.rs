// SPDX-License-Identifier: Apache-2.0

//! Vectorized adjoint Lindbladian and Heisenberg-picture propagation.
//!
//! Vectorization stacks rows: `vec(A)[i*d + j] = A[i, j]`, so that
//! `X A Y -> (X ⊗ Y^T) vec(A)`. The adjoint generator for a single Hermitian
//! jump operator reads
//!
//! ```text
//! L†[A] = i[H0, A] - γ[L, [L, A]]
//!       -> i H0⊗1 - i 1⊗H0^T + γ(2 L⊗L^T - L²⊗1 - 1⊗(L²)^T)
//! ```

use rayon::prelude::*;

use crate::error::{Result, SovError};
use crate::linalg::{self, re, CMat, CVec, I};
use crate::spin_algebra::HermitianOperator;

/// Tolerance used to decide whether `H0` and `L` share an eigenbasis.
const COMMUTING_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LindbladSpec {
    h0: HermitianOperator,
    jump: HermitianOperator,
    gamma: f64,
}

impl LindbladSpec {
    pub fn new(h0: HermitianOperator, jump: HermitianOperator, gamma: f64) -> Result<Self> {
        if h0.dim() != jump.dim() {
            return Err(SovError::DimensionMismatch {
                expected: h0.dim(),
                got: jump.dim(),
            });
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(SovError::InvalidParameter(format!(
                "noise strength gamma = {gamma} must be finite and >= 0"
            )));
        }
        Ok(Self { h0, jump, gamma })
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn jump(&self) -> &HermitianOperator {
        &self.jump
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// `||[H0, L]||_max`.
    pub fn commutator_norm(&self) -> f64 {
        linalg::max_abs(&linalg::commutator(self.h0.matrix(), self.jump.matrix()))
    }

    /// Direct operator form `i[H0, A] - γ[L, [L, A]]`.
    pub fn adjoint_action(&self, a: &CMat) -> CMat {
        let h = self.h0.matrix();
        let l = self.jump.matrix();
        let la = l * a;
        let al = a * l;
        let lla = l * &la;
        let all = &al * l;
        let lal = &la * l;
        (h * a - a * h) * I - (lla - lal * re(2.0) + all) * re(self.gamma)
    }
}

/// Row-major stacking of a square matrix.
pub fn vectorize(a: &CMat) -> CVec {
    let d = a.nrows();
    CVec::from_iterator(
        d * a.ncols(),
        (0..d)
            .flat_map(|i| (0..a.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)]),
    )
}

pub fn devectorize(v: &CVec) -> Result<CMat> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(SovError::NotPerfectSquare(n));
    }
    Ok(CMat::from_fn(d, d, |i, j| v[i * d + j]))
}

/// Matrix of `A -> X A Y` in the row-major vectorization.
pub fn sandwich_matrix(x: &CMat, y: &CMat) -> CMat {
    x.kronecker(&y.transpose())
}

#[derive(Debug, Clone)]
pub struct SuperoperatorMatrix {
    matrix: CMat,
}

impl SuperoperatorMatrix {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Side length `d^2`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, a: &CMat) -> Result<CMat> {
        let d2 = a.nrows() * a.ncols();
        if d2 != self.dim() {
            return Err(SovError::DimensionMismatch {
                expected: self.dim(),
                got: d2,
            });
        }
        devectorize(&(&self.matrix * vectorize(a)))
    }

    /// `||M vec(1)||_max`; vanishes for a unital generator.
    pub fn unitality_residual(&self) -> f64 {
        let d = (self.dim() as f64).sqrt().round() as usize;
        let v = &self.matrix * vectorize(&linalg::identity(d));
        v.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

pub fn build_adjoint_lindbladian(spec: &LindbladSpec) -> SuperoperatorMatrix {
    let d = spec.dim();
    let id = linalg::identity(d);
    let h = spec.h0.matrix();
    let l = spec.jump.matrix();
    let l2 = l * l;
    let unitary = (sandwich_matrix(h, &id) - sandwich_matrix(&id, h)) * I;
    let dissipator =
        sandwich_matrix(l, l) * re(2.0) - sandwich_matrix(&l2, &id) - sandwich_matrix(&id, &l2);
    SuperoperatorMatrix {
        matrix: unitary + dissipator * re(spec.gamma),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropagationMethod {
    Spectral,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub method: PropagationMethod,
    /// Upper bound on the RK4 step; the integrator also caps it at `1/ρ`
    /// with `ρ` a bound on the generator's spectral radius.
    pub ode_dt: f64,
    pub spectral_condition_limit: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            method: PropagationMethod::Spectral,
            ode_dt: 1e-3,
            spectral_condition_limit: 1e10,
        }
    }
}

impl PropagationConfig {
    pub fn ode(ode_dt: f64) -> Self {
        Self {
            method: PropagationMethod::Ode,
            ode_dt,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.ode_dt > 0.0) || !self.ode_dt.is_finite() {
            return Err(SovError::InvalidParameter(format!(
                "ode_dt = {} must be positive",
                self.ode_dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Backend {
    /// `[H0, L] = 0`: coherences |m><n| are exact eigenmodes.
    Commuting {
        basis: CMat,
        energies: Vec<f64>,
        jumps: Vec<f64>,
    },
    Spectral(linalg::GeneralEigen),
    Ode {
        step: f64,
    },
}

/// Which route a [`Propagator`] ended up using.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedMethod {
    CommutingSpectral,
    Spectral,
    Ode,
    /// Spectral requested but the eigenvector matrix was too ill-conditioned.
    OdeFallback,
}

/// Precomputed `e^{L† t}` for one [`LindbladSpec`]; immutable and `Sync`, so
/// many time points can be evaluated concurrently.
#[derive(Debug, Clone)]
pub struct Propagator {
    spec: LindbladSpec,
    backend: Backend,
    resolved: ResolvedMethod,
    condition: Option<f64>,
}

fn ode_step_bound(spec: &LindbladSpec, ode_dt: f64) -> Result<f64> {
    let eh = spec.h0.eigen()?.values;
    let el = spec.jump.eigen()?.values;
    let spread = |v: &[f64]| v.last().copied().unwrap_or(0.0) - v.first().copied().unwrap_or(0.0);
    let rho = spread(&eh) + spec.gamma * spread(&el).powi(2);
    Ok(if rho > 0.0 {
        ode_dt.min(1.0 / rho)
    } else {
        ode_dt
    })
}

impl Propagator {
    pub fn new(spec: &LindbladSpec, cfg: &PropagationConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = spec.clone();
        if cfg.method == PropagationMethod::Ode {
            let step = ode_step_bound(&spec, cfg.ode_dt)?;
            return Ok(Self {
                spec,
                backend: Backend::Ode { step },
                resolved: ResolvedMethod::Ode,
                condition: None,
            });
        }
        let scale = linalg::max_abs(spec.h0.matrix())
            .max(linalg::max_abs(spec.jump.matrix()))
            .max(1.0);
        if spec.commutator_norm() <= COMMUTING_TOL * scale {
            if let Ok((basis, energies, jumps)) = linalg::common_eigenbasis(
                spec.h0.matrix(),
                spec.jump.matrix(),
                COMMUTING_TOL * scale * scale,
            ) {
                return Ok(Self {
                    spec,
                    backend: Backend::Commuting {
                        basis,
                        energies,
                        jumps,
                    },
                    resolved: ResolvedMethod::CommutingSpectral,
                    condition: Some(1.0),
                });
            }
        }
        let generator = build_adjoint_lindbladian(&spec);
        let eig = linalg::eig_general(generator.matrix())?;
        let condition = eig.condition;
        if condition > cfg.spectral_condition_limit {
            let step = ode_step_bound(&spec, cfg.ode_dt)?;
            return Ok(Self {
                spec,
                backend: Backend::Ode { step },
                resolved: ResolvedMethod::OdeFallback,
                condition: Some(condition),
            });
        }
        Ok(Self {
            spec,
            backend: Backend::Spectral(eig),
            resolved: ResolvedMethod::Spectral,
            condition: Some(condition),
        })
    }

    pub fn spec(&self) -> &LindbladSpec {
        &self.spec
    }

    pub fn method(&self) -> ResolvedMethod {
        self.resolved
    }

    /// Condition number of the eigenvector matrix, when one was computed.
    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `e^{L† t}[A]` for an arbitrary (not necessarily Hermitian) matrix.
    pub fn propagate_matrix(&self, a: &CMat, t: f64) -> Result<CMat> {
        let d = linalg::ensure_square(a)?;
        if d != self.dim() {
            return Err(SovError::DimensionMismatch {
                expected: self.dim(),
                got: d,
            });
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(SovError::InvalidParameter(format!("t = {t} must be >= 0")));
        }
        if t == 0.0 {
            return Ok(a.clone());
        }
        match &self.backend {
            Backend::Commuting {
                basis,
                energies,
                jumps,
            } => {
                let mut at = basis.adjoint() * a * basis;
                let g = self.spec.gamma;
                for m in 0..d {
                    for n in 0..d {
                        let dl = jumps[m] - jumps[n];
                        let phase = (energies[m] - energies[n]) * t;
                        let decay = (-g * dl * dl * t).exp();
                        at[(m, n)] *= Complex64::from_polar(decay, phase);
                    }
                }
                Ok(basis * at * basis.adjoint())
            }
            Backend::Spectral(eig) => {
                let mut c = &eig.inverse * vectorize(a);
                for (ck, lam) in c.iter_mut().zip(&eig.values) {
                    *ck *= (lam * t).exp();
                }
                devectorize(&(&eig.vectors * c))
            }
            Backend::Ode { step } => rk4_propagate(&self.spec, a, 0.0, t, *step),
        }
    }

    /// Hermitian-in, Hermitian-out propagation. The output is symmetrized;
    /// the removed asymmetry must stay below `1e-9` relative to the input
    /// scale.
    pub fn propagate(&self, a: &HermitianOperator, t: f64) -> Result<HermitianOperator> {
        let out = self.propagate_matrix(a.matrix(), t)?;
        let (op, residual) = HermitianOperator::symmetrized(&out)?;
        let tol = 1e-9 * linalg::max_abs(a.matrix()).max(1.0);
        if residual > tol {
            return Err(SovError::NotHermitian { residual, tol });
        }
        Ok(op)
    }

    /// `e^{L† t}[A]` at several times. Spectral routes evaluate time points
    /// in parallel; the ODE route integrates through the sorted times once.
    pub fn propagate_series(&self, a: &CMat, times: &[f64]) -> Result<Vec<CMat>> {
        match &self.backend {
            Backend::Ode { step } => {
                let mut order: Vec<usize> = (0..times.len()).collect();
                order.sort_by(|&x, &y| times[x].total_cmp(&times[y]));
                let mut out = vec![CMat::zeros(0, 0); times.len()];
                let mut current = a.clone();
                let mut t_now = 0.0;
                for &k in &order {
                    let t = times[k];
                    if !(t >= 0.0) {
                        return Err(SovError::InvalidParameter(format!("t = {t} must be >= 0")));
                    }
                    current = rk4_propagate(&self.spec, &current, t_now, t, *step)?;
                    t_now = t;
                    out[k] = current.clone();
                }
                Ok(out)
            }
            _ => times
                .par_iter()
                .map(|&t| self.propagate_matrix(a, t))
                .collect(),
        }
    }
}

use num_complex::Complex64;

/// Fixed-step classical RK4 on `dA/dt = L†[A]` from `t0` to `t1`.
fn rk4_propagate(spec: &LindbladSpec, a: &CMat, t0: f64, t1: f64, max_step: f64) -> Result<CMat> {
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(a.clone());
    }
    let n = (span / max_step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut y = a.clone();
    let half = re(0.5 * h);
    let full = re(h);
    let sixth = re(h / 6.0);
    for k in 0..n {
        let k1 = spec.adjoint_action(&y);
        let k2 = spec.adjoint_action(&(&y + &k1 * half));
        let k3 = spec.adjoint_action(&(&y + &k2 * half));
        let k4 = spec.adjoint_action(&(&y + &k3 * full));
        y += (k1 + (k2 + k3) * re(2.0) + k4) * sixth;
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SovError::IntegrationFailure {
                t: t0 + (k + 1) as f64 * h,
            });
        }
    }
    Ok(y)
}

/// One-shot `e^{L† t}[A]`.
pub fn propagate(
    spec: &LindbladSpec,
    a: &HermitianOperator,
    t: f64,
    cfg: &PropagationConfig,
) -> Result<HermitianOperator> {
    Propagator::new(spec, cfg)?.propagate(a, t)
}
