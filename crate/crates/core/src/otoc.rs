// SPDX-License-Identifier: Apache-2.0

//! Dissipative OTOC `C_t = -Tr([L, <A_t>]^2) / N`, its extraction from the
//! SOV trace, the short-time dissipation model, the closed form for
//! commuting `H0` and `L`, and exponential fits.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SovError};
use crate::linalg::{self, CMat};
use crate::spin_algebra::HermitianOperator;
use crate::superop::Propagator;

/// Absolute bound on `||[H0, L]||_max` for the commuting closed form.
pub const COMMUTING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    /// Divide by the Hilbert-space dimension `N`.
    PerDim,
    Unnormalized,
}

impl Normalization {
    pub fn factor(self, dim: usize) -> f64 {
        match self {
            Normalization::PerDim => dim as f64,
            Normalization::Unnormalized => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OTOCSeries {
    pub times: Vec<f64>,
    pub c: Vec<f64>,
    pub normalization: Normalization,
}

fn otoc_value(l: &CMat, at: &CMat, n: f64) -> Result<f64> {
    let c = linalg::commutator(l, at);
    let tr: Complex64 = -linalg::trace(&(&c * &c));
    let scale = linalg::max_abs(&c).powi(2) * l.nrows() as f64;
    if tr.im.abs() > 1e-10 * scale.max(1.0) {
        return Err(SovError::InvalidParameter(format!(
            "OTOC trace has imaginary part {:e}",
            tr.im
        )));
    }
    Ok(tr.re / n)
}

/// `C_t` with `<A_t> = e^{L†t}[A]`.
pub fn dissipative_otoc(
    prop: &Propagator,
    a: &HermitianOperator,
    times: &[f64],
    normalization: Normalization,
) -> Result<OTOCSeries> {
    let n = normalization.factor(prop.dim());
    let l = prop.spec().jump().matrix();
    let c = times
        .par_iter()
        .map(|&t| otoc_value(l, &prop.propagate_matrix(a.matrix(), t)?, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(OTOCSeries {
        times: times.to_vec(),
        c,
        normalization,
    })
}

/// `Tr(ΔA_t^2) = Tr(e^{L†t}[A^2]) - Tr(A_t^2)` at each time.
pub fn sov_trace_series(
    prop: &Propagator,
    a: &HermitianOperator,
    times: &[f64],
) -> Result<Vec<f64>> {
    let am = a.matrix();
    let a2 = am * am;
    times
        .par_iter()
        .map(|&t| {
            let at = prop.propagate_matrix(am, t)?;
            let a2t = prop.propagate_matrix(&a2, t)?;
            Ok((linalg::trace(&a2t) - linalg::trace(&(&at * &at))).re)
        })
        .collect()
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(SovError::InvalidParameter(
            "need at least three samples for differencing".into(),
        ));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(SovError::InvalidParameter("times must increase".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(SovError::InvalidParameter(
                "time grid is not uniform".into(),
            ));
        }
    }
    Ok(h)
}

/// Second-order finite-difference derivative: central inside, one-sided
/// three-point stencils at both ends.
pub fn derivative(times: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != times.len() {
        return Err(SovError::DimensionMismatch {
            expected: times.len(),
            got: y.len(),
        });
    }
    let h = uniform_step(times)?;
    let n = y.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
    for k in 1..n - 1 {
        d[k] = (y[k + 1] - y[k - 1]) / (2.0 * h);
    }
    Ok(d)
}

/// `C_t = (1 / 2γN) d/dt Tr(ΔA_t^2)` from a uniformly sampled trace series.
pub fn otoc_from_sov(
    times: &[f64],
    sov_trace: &[f64],
    gamma: f64,
    n: f64,
    normalization: Normalization,
) -> Result<OTOCSeries> {
    if !(gamma > 0.0) {
        return Err(SovError::InvalidParameter(
            "the SOV-OTOC relation needs gamma > 0".into(),
        ));
    }
    let d = derivative(times, sov_trace)?;
    let scale = 1.0 / (2.0 * gamma * n);
    Ok(OTOCSeries {
        times: times.to_vec(),
        c: d.into_iter().map(|x| x * scale).collect(),
        normalization,
    })
}

/// `C_t` through the SOV trace, differentiated at each requested time with
/// its own stencil of half-width `h`: central where `t >= h`, second-order
/// forward otherwise. Works on arbitrary (non-uniform) time lists.
pub fn otoc_from_sov_local(
    prop: &Propagator,
    a: &HermitianOperator,
    times: &[f64],
    h: f64,
    normalization: Normalization,
) -> Result<OTOCSeries> {
    let gamma = prop.spec().gamma();
    if !(gamma > 0.0) {
        return Err(SovError::InvalidParameter(
            "the SOV-OTOC relation needs gamma > 0".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(SovError::InvalidParameter(format!(
            "stencil width h = {h} must be positive"
        )));
    }
    let scale = 1.0 / (2.0 * gamma * normalization.factor(prop.dim()));
    let c = times
        .par_iter()
        .map(|&t| {
            let d = if t >= h {
                let y = sov_trace_series(prop, a, &[t - h, t + h])?;
                (y[1] - y[0]) / (2.0 * h)
            } else {
                let y = sov_trace_series(prop, a, &[t, t + h, t + 2.0 * h])?;
                (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
            };
            Ok(d * scale)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OTOCSeries {
        times: times.to_vec(),
        c,
        normalization,
    })
}

/// Richardson estimate of the differencing error: compares the derivative on
/// the grid with the one on every second point and returns the largest
/// `|fine - coarse| / 3` relative to `max |fine|` over shared interior points.
pub fn derivative_error_estimate(times: &[f64], y: &[f64]) -> Result<f64> {
    let fine = derivative(times, y)?;
    let ct: Vec<f64> = times.iter().step_by(2).copied().collect();
    let cy: Vec<f64> = y.iter().step_by(2).copied().collect();
    let coarse = derivative(&ct, &cy)?;
    let peak = fine.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return Ok(0.0);
    }
    let worst = coarse
        .iter()
        .enumerate()
        .skip(1)
        .take(coarse.len().saturating_sub(2))
        .fold(0.0_f64, |m, (k, c)| m.max((fine[2 * k] - c).abs() / 3.0));
    Ok(worst / peak)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DissipationTime {
    Finite(f64),
    /// `[L, [L, A]] = 0`: the short-time model does not decay.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationAnalysis {
    /// `-Tr([L, A]^2) / N >= 0`.
    pub c0: f64,
    pub tau_d: DissipationTime,
}

impl DissipationAnalysis {
    /// `C0 e^{-t / τ_D}`.
    pub fn model(&self, t: f64) -> f64 {
        match self.tau_d {
            DissipationTime::Finite(tau) => self.c0 * (-t / tau).exp(),
            DissipationTime::Infinite => self.c0,
        }
    }
}

/// Short-time decay `C_t ≈ C0 e^{-t/τ_D}` with
/// `1/τ_D = 2γ Tr([L, [L, A]]^2) / (C0 N)`.
///
/// Accepts general square matrices; for Hermitian `L` and `A` an infinite
/// `τ_D` cannot occur together with `[L, A] != 0`.
pub fn dissipation_time(a: &CMat, l: &CMat, gamma: f64, n: f64) -> Result<DissipationAnalysis> {
    linalg::ensure_same_dim(a, l)?;
    if !(gamma >= 0.0) || !(n > 0.0) {
        return Err(SovError::InvalidParameter(format!(
            "need gamma >= 0 and N > 0 (gamma = {gamma}, N = {n})"
        )));
    }
    let la = linalg::commutator(l, a);
    let scale = linalg::max_abs(a).max(1.0) * linalg::max_abs(l).max(1.0);
    if linalg::max_abs(&la) <= 1e-12 * scale {
        return Err(SovError::InvalidParameter(
            "[L, A] = 0: no OTOC to dissipate".into(),
        ));
    }
    let c0 = -linalg::trace(&(&la * &la)).re / n;
    let x = linalg::commutator(l, &la);
    if linalg::max_abs(&x) <= 1e-12 * scale * linalg::max_abs(l).max(1.0) {
        return Ok(DissipationAnalysis {
            c0,
            tau_d: DissipationTime::Infinite,
        });
    }
    if !(c0 > 0.0) {
        return Err(SovError::InvalidParameter(format!(
            "C0 = {c0:e} is not positive"
        )));
    }
    let rate = 2.0 * gamma * linalg::trace(&(&x * &x)).re / (c0 * n);
    let tau_d = if rate > 0.0 {
        DissipationTime::Finite(1.0 / rate)
    } else {
        DissipationTime::Infinite
    };
    Ok(DissipationAnalysis { c0, tau_d })
}

/// `C_t = Σ (l_m - l_n)^2 e^{-2γ(l_m - l_n)^2 t} |A_nm|^2` in the common
/// eigenbasis of `H0` and `L`, divided by `N` under [`Normalization::PerDim`].
pub fn commuting_otoc_closed_form(
    a: &CMat,
    h0: &CMat,
    l: &CMat,
    gamma: f64,
    times: &[f64],
    normalization: Normalization,
) -> Result<OTOCSeries> {
    let d = linalg::ensure_same_dim(h0, l)?;
    linalg::ensure_same_dim(a, l)?;
    let (basis, _, jumps) = linalg::common_eigenbasis(h0, l, COMMUTING_TOL)?;
    let ab = basis.adjoint() * a * &basis;
    let n = normalization.factor(d);
    let mut terms = Vec::new();
    for m in 0..d {
        for k in 0..d {
            let dl2 = (jumps[m] - jumps[k]).powi(2);
            let w = ab[(k, m)].norm_sqr();
            if dl2 > 0.0 && w > 0.0 {
                terms.push((dl2, w));
            }
        }
    }
    let c = times
        .iter()
        .map(|&t| {
            terms
                .iter()
                .map(|(dl2, w)| dl2 * w * (-2.0 * gamma * dl2 * t).exp())
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(OTOCSeries {
        times: times.to_vec(),
        c,
        normalization,
    })
}

/// Smallest nonzero and largest squared gap `(l_m - l_n)^2` among eigenvalues
/// of `L`, treating gaps below `tol` as zero.
pub fn squared_gap_bounds(l_values: &[f64], tol: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for (i, a) in l_values.iter().enumerate() {
        for b in &l_values[i + 1..] {
            let g = (a - b).abs();
            if g > tol {
                lo = lo.min(g * g);
                hi = hi.max(g * g);
            }
        }
    }
    lo.is_finite().then_some((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovFit {
    pub lambda_q: f64,
    /// Intercept `ε` of `C_t ≈ ε e^{λ t}`.
    pub epsilon: f64,
    pub window: (f64, f64),
    /// RMS residual of `ln C_t`.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares slope of `ln C_t` against `t` in the closed window.
pub fn lyapunov_from_otoc(series: &OTOCSeries, window: (f64, f64)) -> Result<LyapunovFit> {
    let (ta, tb) = window;
    let (first, last) = match (series.times.first(), series.times.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(SovError::InvalidParameter("empty series".into())),
    };
    if !(ta < tb) || ta < first || tb > last {
        return Err(SovError::InvalidParameter(format!(
            "window [{ta}, {tb}] must lie inside the data range [{first}, {last}]"
        )));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &c) in series.times.iter().zip(&series.c) {
        if t >= ta && t <= tb {
            if !(c > 0.0) {
                return Err(SovError::NonPositive { t, value: c });
            }
            x.push(t);
            y.push(c.ln());
        }
    }
    if x.len() < 3 {
        return Err(SovError::InsufficientSamples {
            start: ta,
            end: tb,
            found: x.len(),
            needed: 3,
        });
    }
    let fit = linalg::fit_line(&x, &y).expect("distinct sample times");
    Ok(LyapunovFit {
        lambda_q: fit.slope,
        epsilon: fit.intercept.exp(),
        window,
        residual: fit.rms,
        samples: x.len(),
    })
}
