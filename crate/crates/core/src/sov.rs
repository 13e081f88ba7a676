// SPDX-License-Identifier: Apache-2.0

//! Exact stochastic operator variance `ΔA_t^2 = e^{L†t}[A^2] - (e^{L†t}[A])^2`
//! and the analyses built on it: ordered eigenvalues and transport exponents,
//! the minimum-SOV state, covariances, the generalized uncertainty relation,
//! the quantum-variance gap, the swap identity and spin-basis projections.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SovError};
use crate::linalg::{self, re, CMat, CVec};
use crate::spin_algebra::{hs_inner, spin_operators, HermitianOperator, SpinSpec};
use crate::superop::Propagator;

/// Roundoff floor below which negative SOV eigenvalues are hard errors.
pub const DEFAULT_NEGATIVITY_TOL: f64 = 1e-9;

/// Gap below which adjacent eigenvalues are reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;

fn sov_matrix(prop: &Propagator, a: &CMat, t: f64) -> Result<CMat> {
    let at = prop.propagate_matrix(a, t)?;
    let a2t = prop.propagate_matrix(&(a * a), t)?;
    Ok(a2t - &at * &at)
}

/// `ΔA_t^2` at a single time.
pub fn exact_sov(prop: &Propagator, a: &HermitianOperator, t: f64) -> Result<HermitianOperator> {
    let m = sov_matrix(prop, a.matrix(), t)?;
    Ok(HermitianOperator::symmetrized(&m)?.0)
}

/// `ΔA_t^2` over many times, evaluated in parallel.
pub fn exact_sov_series(
    prop: &Propagator,
    a: &HermitianOperator,
    times: &[f64],
) -> Result<Vec<HermitianOperator>> {
    times.par_iter().map(|&t| exact_sov(prop, a, t)).collect()
}

/// `max |d/dt ΔA_t^2 - (L†[ΔA_t^2] - 2γ[L, A_t]^2)|` with the derivative taken
/// by central differences of step `dt_fd`.
pub fn sov_rhs_residual(
    prop: &Propagator,
    a: &HermitianOperator,
    t: f64,
    dt_fd: f64,
) -> Result<f64> {
    sov_rhs_residual_with_source(prop, a, t, dt_fd, 1.0)
}

/// As [`sov_rhs_residual`] with the source term `-2γ[L, A_t]^2` multiplied by
/// `source_sign`. Used to check that a flipped source is detected.
pub fn sov_rhs_residual_with_source(
    prop: &Propagator,
    a: &HermitianOperator,
    t: f64,
    dt_fd: f64,
    source_sign: f64,
) -> Result<f64> {
    if !(dt_fd > 0.0) || !(t > dt_fd) {
        return Err(SovError::InvalidParameter(format!(
            "need t > dt_fd > 0 (t = {t}, dt_fd = {dt_fd})"
        )));
    }
    let am = a.matrix();
    let plus = sov_matrix(prop, am, t + dt_fd)?;
    let minus = sov_matrix(prop, am, t - dt_fd)?;
    let deriv = (plus - minus) * re(0.5 / dt_fd);
    let sov = sov_matrix(prop, am, t)?;
    let at = prop.propagate_matrix(am, t)?;
    let spec = prop.spec();
    let c = linalg::commutator(spec.jump().matrix(), &at);
    let rhs = spec.adjoint_action(&sov) - &c * &c * re(2.0 * spec.gamma() * source_sign);
    Ok(linalg::max_abs(&(deriv - rhs)))
}

/// Adjacent eigenvalues closer than [`DEGENERACY_GAP`].
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyWarning {
    pub time_index: usize,
    /// Lower index `k` of the pair `(k, k + 1)`.
    pub mode: usize,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SOVSeries {
    pub times: Vec<f64>,
    pub sov: Vec<HermitianOperator>,
    /// `eigvals[j][k] = Λ_k(t_j)`, ascending in `k`.
    pub eigvals: Vec<Vec<f64>>,
    /// Eigenvectors as columns, matching `eigvals`.
    pub eigvecs: Vec<CMat>,
    pub warnings: Vec<DegeneracyWarning>,
}

impl SOVSeries {
    pub fn dim(&self) -> usize {
        self.eigvals.first().map_or(0, Vec::len)
    }

    /// `Λ_k(t)` across all times.
    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.eigvals.iter().map(|row| row[k]).collect()
    }
}

fn phase_fix(v: &mut CMat, col: usize) {
    let d = v.nrows();
    let (imax, _) = (0..d).fold((0, -1.0), |(bi, bm), i| {
        let m = v[(i, col)].norm();
        if m > bm {
            (i, m)
        } else {
            (bi, bm)
        }
    });
    let z = v[(imax, col)];
    if z.norm() > 0.0 {
        let ph = z.conj() / z.norm();
        for i in 0..d {
            v[(i, col)] *= ph;
        }
    }
}

/// Ordered eigen-decomposition of each `ΔA_t^2`.
///
/// Eigenvalues are ascending. Each eigenvector is first rotated so its
/// largest component is real and positive; if that leaves it anti-aligned
/// with the previous time's vector of the same rank, its sign is flipped.
/// Eigenvalues below `-neg_tol` are errors.
pub fn sov_eigensystem(
    times: &[f64],
    sov: &[HermitianOperator],
    neg_tol: f64,
) -> Result<SOVSeries> {
    if times.len() != sov.len() {
        return Err(SovError::DimensionMismatch {
            expected: times.len(),
            got: sov.len(),
        });
    }
    let decomps = sov
        .par_iter()
        .map(|s| s.eigen())
        .collect::<Result<Vec<_>>>()?;
    let mut eigvals = Vec::with_capacity(sov.len());
    let mut eigvecs: Vec<CMat> = Vec::with_capacity(sov.len());
    let mut warnings = Vec::new();
    for (j, eig) in decomps.into_iter().enumerate() {
        if let Some(&lo) = eig.values.first() {
            if lo < -neg_tol {
                return Err(SovError::NegativeSov {
                    value: lo,
                    floor: -neg_tol,
                });
            }
        }
        for (k, w) in eig.values.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap < DEGENERACY_GAP {
                warnings.push(DegeneracyWarning {
                    time_index: j,
                    mode: k,
                    gap,
                });
            }
        }
        let mut v = eig.vectors;
        for col in 0..v.ncols() {
            phase_fix(&mut v, col);
            if let Some(prev) = eigvecs.last() {
                let ov: Complex64 = prev.column(col).dotc(&v.column(col));
                if ov.re < 0.0 {
                    v.column_mut(col).neg_mut();
                }
            }
        }
        eigvals.push(eig.values);
        eigvecs.push(v);
    }
    Ok(SOVSeries {
        times: times.to_vec(),
        sov: sov.to_vec(),
        eigvals,
        eigvecs,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportFit {
    pub mode: usize,
    pub window: (f64, f64),
    /// Exponent in `Λ_k ~ c t^α`.
    pub alpha: f64,
    pub prefactor: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Default early fit window `[0.01, 0.1] / γ`.
pub fn early_window(gamma: f64) -> (f64, f64) {
    (0.01 / gamma, 0.1 / gamma)
}

/// Default mid fit window `[0.1, 1] / γ`.
pub fn mid_window(gamma: f64) -> (f64, f64) {
    (0.1 / gamma, 1.0 / gamma)
}

/// Least-squares slope of `ln Λ_k` against `ln t` over the closed window.
pub fn transport_exponent_fit(
    series: &SOVSeries,
    k: usize,
    window: (f64, f64),
) -> Result<TransportFit> {
    let (ta, tb) = window;
    if !(ta > 0.0 && ta < tb) {
        return Err(SovError::InvalidParameter(format!(
            "fit window [{ta}, {tb}] must satisfy 0 < t_a < t_b"
        )));
    }
    if k >= series.dim() {
        return Err(SovError::InvalidParameter(format!(
            "mode {k} out of range (dimension {})",
            series.dim()
        )));
    }
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (t, row) in series.times.iter().zip(&series.eigvals) {
        if *t >= ta && *t <= tb {
            let v = row[k];
            if !(v > 0.0) {
                return Err(SovError::NonPositive { t: *t, value: v });
            }
            lx.push(t.ln());
            ly.push(v.ln());
        }
    }
    if lx.len() < MIN_FIT_SAMPLES {
        return Err(SovError::InsufficientSamples {
            start: ta,
            end: tb,
            found: lx.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let fit = linalg::fit_line(&lx, &ly).ok_or_else(|| {
        SovError::InvalidParameter("fit window holds a single distinct time".into())
    })?;
    Ok(TransportFit {
        mode: k,
        window,
        alpha: fit.slope,
        prefactor: fit.intercept.exp(),
        residual: fit.rms,
        samples: lx.len(),
    })
}

#[derive(Debug, Clone)]
pub struct MinSovState {
    /// `v_0(t_max)`, normalized and phase-fixed.
    pub state: CVec,
    /// `|<v_0(t_max) | v_0(t_max / 2)>|`.
    pub overlap: f64,
    /// `Λ_0(t_max)`.
    pub lambda0: f64,
    /// The SOV vanishes or its lowest eigenvalue is degenerate, so the
    /// state is not unique.
    pub degenerate: bool,
}

/// Eigenvector of `ΔA_t^2` with the smallest eigenvalue at `t_max`, accepted
/// once it agrees with the one at `t_max / 2` to `1 - conv_tol` in overlap.
pub fn min_sov_state(
    prop: &Propagator,
    a: &HermitianOperator,
    t_max: f64,
    conv_tol: f64,
) -> Result<MinSovState> {
    if !(t_max > 0.0) {
        return Err(SovError::InvalidParameter(format!(
            "t_max = {t_max} must be positive"
        )));
    }
    let sovs = exact_sov_series(prop, a, &[0.5 * t_max, t_max])?;
    let series = sov_eigensystem(&[0.5 * t_max, t_max], &sovs, DEFAULT_NEGATIVITY_TOL)?;
    let v_half = series.eigvecs[0].column(0).into_owned();
    let v_full = series.eigvecs[1].column(0).into_owned();
    let vals = &series.eigvals[1];
    let scale = vals.last().copied().unwrap_or(0.0).abs();
    let vanishing = linalg::max_abs(sovs[1].matrix()) < 1e-12;
    let lowest_degenerate = vals.len() > 1 && vals[1] - vals[0] < DEGENERACY_GAP.max(1e-12 * scale);
    let overlap = v_full.dotc(&v_half).norm();
    let degenerate = vanishing || lowest_degenerate;
    if !degenerate && overlap < 1.0 - conv_tol {
        return Err(SovError::NonConvergence {
            overlap,
            required: 1.0 - conv_tol,
        });
    }
    Ok(MinSovState {
        state: v_full,
        overlap,
        lambda0: vals[0],
        degenerate,
    })
}

/// `e^{L†t}[AB] - e^{L†t}[A] e^{L†t}[B]`; not Hermitian in general.
pub fn covariance(
    prop: &Propagator,
    a: &HermitianOperator,
    b: &HermitianOperator,
    t: f64,
) -> Result<CMat> {
    linalg::ensure_same_dim(a.matrix(), b.matrix())?;
    let ab = prop.propagate_matrix(&(a.matrix() * b.matrix()), t)?;
    let at = prop.propagate_matrix(a.matrix(), t)?;
    let bt = prop.propagate_matrix(b.matrix(), t)?;
    Ok(ab - at * bt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyReport {
    /// `Tr(ΔA^2 ρ) Tr(ΔB^2 ρ)`.
    pub lhs: f64,
    /// `|Tr(Cov(A, B) ρ)|^2`.
    pub mid: f64,
    /// `(D_+^2 - D_-^2) / 4`.
    pub rhs: f64,
    pub d_plus: Complex64,
    pub d_minus: Complex64,
}

impl UncertaintyReport {
    /// `lhs >= mid - tol` and `mid >= rhs - tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs >= self.mid - tol && self.mid >= self.rhs - tol
    }
}

/// Validates a density matrix: Hermitian, unit trace, positive semidefinite.
pub fn check_density_matrix(rho: &CMat, tol: f64) -> Result<()> {
    linalg::ensure_square(rho)?;
    let residual = linalg::hermiticity_residual(rho);
    if residual > tol {
        return Err(SovError::NotHermitian { residual, tol });
    }
    let tr = linalg::trace(rho);
    if (tr - re(1.0)).norm() > tol {
        return Err(SovError::InvalidParameter(format!(
            "density matrix has trace {tr}"
        )));
    }
    let lo = linalg::eigh(&linalg::symmetrize(rho).0)?.values[0];
    if lo < -tol {
        return Err(SovError::InvalidParameter(format!(
            "density matrix has negative eigenvalue {lo:e}"
        )));
    }
    Ok(())
}

/// Both layers of the generalized Robertson-Schrödinger relation, with
/// `D_η = Tr(e^{L†t}[A B + η B A] ρ) - Tr((A_t B_t + η B_t A_t) ρ)`.
pub fn uncertainty_check(
    prop: &Propagator,
    a: &HermitianOperator,
    b: &HermitianOperator,
    rho0: &CMat,
    t: f64,
) -> Result<UncertaintyReport> {
    linalg::ensure_same_dim(a.matrix(), rho0)?;
    check_density_matrix(rho0, 1e-10)?;
    let ev = |x: &CMat| linalg::trace(&(x * rho0));
    let var_a = ev(exact_sov(prop, a, t)?.matrix()).re;
    let var_b = ev(exact_sov(prop, b, t)?.matrix()).re;
    let cov = ev(&covariance(prop, a, b, t)?);
    let (am, bm) = (a.matrix(), b.matrix());
    let at = prop.propagate_matrix(am, t)?;
    let bt = prop.propagate_matrix(bm, t)?;
    let ab = prop.propagate_matrix(&(am * bm), t)?;
    let ba = prop.propagate_matrix(&(bm * am), t)?;
    let d_eta = |eta: f64| ev(&(&ab + &ba * re(eta))) - ev(&(&at * &bt + &bt * &at * re(eta)));
    let d_plus = d_eta(1.0);
    let d_minus = d_eta(-1.0);
    Ok(UncertaintyReport {
        lhs: var_a * var_b,
        mid: cov.norm_sqr(),
        rhs: ((d_plus * d_plus - d_minus * d_minus) * 0.25).re,
        d_plus,
        d_minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGap {
    /// `<ψ0|ΔA_t^2|ψ0> - Var(A_t, ψ0)` with
    /// `Var(A_t, ψ0) = <ψ0|e^{L†t}[A^2]|ψ0> - <ψ0|e^{L†t}[A]|ψ0>^2`.
    pub gap_direct: f64,
    /// `<ψ0|A_t Q A_t|ψ0>` with `Q = 1 - |ψ0><ψ0|`.
    pub gap_projector: f64,
}

impl VarianceGap {
    /// `gap_direct + gap_projector`; the two are exact negatives.
    pub fn identity_residual(&self) -> f64 {
        self.gap_direct + self.gap_projector
    }
}

/// Difference between the SOV expectation on a pure state and the quantum
/// variance of the evolved observable, computed directly and through the
/// complementary projector.
pub fn quantum_variance_gap(
    prop: &Propagator,
    a: &HermitianOperator,
    psi0: &CVec,
    t: f64,
) -> Result<VarianceGap> {
    let d = prop.dim();
    if psi0.len() != d {
        return Err(SovError::DimensionMismatch {
            expected: d,
            got: psi0.len(),
        });
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(SovError::InvalidParameter(format!(
            "state norm {norm} != 1"
        )));
    }
    let am = a.matrix();
    let at = prop.propagate_matrix(am, t)?;
    let a2t = prop.propagate_matrix(&(am * am), t)?;
    let ex = |x: &CMat| psi0.dotc(&(x * psi0));
    let sov = &a2t - &at * &at;
    let var = ex(&a2t).re - ex(&at).re.powi(2);
    let q = linalg::identity(d) - psi0 * psi0.adjoint();
    Ok(VarianceGap {
        gap_direct: ex(&sov).re - var,
        gap_projector: ex(&(&at * q * &at)).re,
    })
}

/// `max |Tr_2((X ⊗ Y) SWAP) - X Y|`.
pub fn swap_product_check(x: &CMat, y: &CMat) -> Result<f64> {
    let d = linalg::ensure_same_dim(x, y)?;
    let xy = x.kronecker(y);
    // SWAP |i j> = |j i>; index of |i j> is i*d + j.
    let swap = CMat::from_fn(d * d, d * d, |r, c| {
        let (i, j) = (c / d, c % d);
        if r == j * d + i {
            re(1.0)
        } else {
            re(0.0)
        }
    });
    let prod = xy * swap;
    let partial = CMat::from_fn(d, d, |i, k| {
        (0..d).map(|j| prod[(i * d + j, k * d + j)]).sum()
    });
    Ok(linalg::max_abs(&(partial - x * y)))
}

/// Principal square root of a positive semidefinite Hermitian operator;
/// eigenvalues in `[-neg_tol, 0)` are clipped to zero.
pub fn psd_sqrt(m: &HermitianOperator, neg_tol: f64) -> Result<HermitianOperator> {
    let eig = m.eigen()?;
    if let Some(&lo) = eig.values.first() {
        if lo < -neg_tol {
            return Err(SovError::NegativeSov {
                value: lo,
                floor: -neg_tol,
            });
        }
    }
    let root = eig.apply_fn(|x| re(x.max(0.0).sqrt()));
    Ok(HermitianOperator::symmetrized(&root)?.0)
}

/// Hilbert-Schmidt coefficients over `(1, Sx, Sy, Sz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SovProjection {
    pub sov: [Complex64; 4],
    /// Same projection of the standard deviation `sqrt(ΔA_t^2)`.
    pub std_dev: [Complex64; 4],
}

pub fn sov_projection(sov_t: &HermitianOperator, spin: SpinSpec) -> Result<SovProjection> {
    let ops = spin_operators(spin);
    let id = linalg::identity(spin.dim());
    let root = psd_sqrt(sov_t, DEFAULT_NEGATIVITY_TOL)?;
    let project = |x: &CMat| -> Result<[Complex64; 4]> {
        Ok([
            hs_inner(&id, x, spin)?,
            hs_inner(ops.x.matrix(), x, spin)?,
            hs_inner(ops.y.matrix(), x, spin)?,
            hs_inner(ops.z.matrix(), x, spin)?,
        ])
    };
    Ok(SovProjection {
        sov: project(sov_t.matrix())?,
        std_dev: project(root.matrix())?,
    })
}
