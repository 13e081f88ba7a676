// SPDX-License-Identifier: Apache-2.0

//! Classical limit of the stochastic LMG model and its Lyapunov exponents.
//!
//! The phase-space Hamiltonian is
//! `H = (Ω/2) P² + (Ω/2 - 1) Q² + (Q² P² + Q⁴) / 4`, driven as
//! `H_t = H (1 + sqrt(2γ) ξ_t)`. Trajectories solve the Itô SDE
//! `dY = a(Y) dt + sqrt(2γ) a(Y) dW` with `a` the Hamiltonian vector field,
//! using the explicit order-1.0 strong scheme. At `γ = 0` the drivers switch
//! to classical RK4.

use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Result, SovError};
use crate::linalg;
use crate::otoc::derivative;
use crate::trajectories::trajectory_seed;

/// Trajectories leaving `|Q|, |P| <= BLOWUP_BOUND` are terminated.
pub const BLOWUP_BOUND: f64 = 1e6;

/// Fraction of terminated realizations above which an estimate is flagged.
pub const UNRELIABLE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub q: f64,
    pub p: f64,
}

impl PhaseState {
    pub const ORIGIN: PhaseState = PhaseState { q: 0.0, p: 0.0 };

    pub fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    fn from_array(y: [f64; 2]) -> Self {
        Self { q: y[0], p: y[1] }
    }

    fn to_array(self) -> [f64; 2] {
        [self.q, self.p]
    }

    /// Inside the coherent-state chart `Q² + P² < 4`.
    pub fn in_chart(&self) -> bool {
        self.q * self.q + self.p * self.p < 4.0
    }

    /// `ζ = (Q - iP) / sqrt(4 - Q² - P²)`.
    pub fn zeta(&self) -> Result<Complex64> {
        if !self.in_chart() {
            return Err(SovError::InvalidParameter(format!(
                "state ({}, {}) lies outside the coherent-state chart",
                self.q, self.p
            )));
        }
        let r = (4.0 - self.q * self.q - self.p * self.p).sqrt();
        Ok(Complex64::new(self.q / r, -self.p / r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalSpec {
    pub omega: f64,
    pub gamma: f64,
}

impl ClassicalSpec {
    pub fn new(omega: f64, gamma: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(SovError::InvalidParameter(format!(
                "Omega = {omega} must be positive"
            )));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(SovError::InvalidParameter(format!(
                "gamma = {gamma} must be >= 0"
            )));
        }
        Ok(Self { omega, gamma })
    }
}

pub fn classical_hamiltonian(omega: f64, s: PhaseState) -> f64 {
    let (q2, p2) = (s.q * s.q, s.p * s.p);
    0.5 * omega * p2 + (0.5 * omega - 1.0) * q2 + 0.25 * (q2 * p2 + q2 * q2)
}

/// `(dQ/dt, dP/dt) = (∂H/∂P, -∂H/∂Q)`.
pub fn hamilton_rhs(omega: f64, s: PhaseState) -> PhaseState {
    PhaseState::from_array(field(omega, &s.to_array()))
}

#[inline]
fn field(omega: f64, y: &[f64; 2]) -> [f64; 2] {
    let (q, p) = (y[0], y[1]);
    [
        omega * p + 0.5 * q * q * p,
        -((omega - 2.0) * q + 0.5 * q * p * p + q * q * q),
    ]
}

/// One step of the explicit order-1.0 strong scheme for an Itô SDE with a
/// single Wiener process:
///
/// `Y' = Y + a δ + b ΔW + (b(Υ) - b)(ΔW² - δ) / (2 sqrt δ)`,
/// `Υ = Y + a δ + b sqrt δ`.
pub fn sde_step_order1<const N: usize>(
    drift: impl Fn(&[f64; N]) -> [f64; N],
    diffusion: impl Fn(&[f64; N]) -> [f64; N],
    y: &[f64; N],
    dt: f64,
    dw: f64,
) -> [f64; N] {
    let a = drift(y);
    let b = diffusion(y);
    let sq = dt.sqrt();
    let mut support = [0.0; N];
    for i in 0..N {
        support[i] = y[i] + a[i] * dt + b[i] * sq;
    }
    let bs = diffusion(&support);
    let corr = (dw * dw - dt) / (2.0 * sq);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = y[i] + a[i] * dt + b[i] * dw + (bs[i] - b[i]) * corr;
    }
    out
}

fn rk4_step(omega: f64, y: &[f64; 2], dt: f64) -> [f64; 2] {
    let add = |u: &[f64; 2], k: &[f64; 2], h: f64| [u[0] + h * k[0], u[1] + h * k[1]];
    let k1 = field(omega, y);
    let k2 = field(omega, &add(y, &k1, 0.5 * dt));
    let k3 = field(omega, &add(y, &k2, 0.5 * dt));
    let k4 = field(omega, &add(y, &k3, dt));
    [
        y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Time step, step count and noise seed for one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SDEConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl SDEConfig {
    /// Steps of size `dt` covering `total_time`.
    pub fn for_duration(total_time: f64, dt: f64, seed: u64) -> Result<Self> {
        if !(dt > 0.0) || !(total_time >= 0.0) {
            return Err(SovError::InvalidParameter(format!(
                "need dt > 0 and T >= 0 (dt = {dt}, T = {total_time})"
            )));
        }
        Ok(Self {
            dt,
            n_steps: (total_time / dt).round() as usize,
            seed,
        })
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Shared stepping rule for the classical drivers.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    omega: f64,
    noise: f64,
    dt: f64,
    sqrt_dt: f64,
}

impl Stepper {
    fn new(spec: &ClassicalSpec, dt: f64) -> Self {
        Self {
            omega: spec.omega,
            noise: (2.0 * spec.gamma).sqrt(),
            dt,
            sqrt_dt: dt.sqrt(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * self.sqrt_dt
    }

    #[inline]
    fn step(&self, y: &[f64; 2], dw: f64) -> [f64; 2] {
        if self.noise == 0.0 {
            return rk4_step(self.omega, y, self.dt);
        }
        let om = self.omega;
        let s = self.noise;
        sde_step_order1(
            |u| field(om, u),
            |u| {
                let f = field(om, u);
                [s * f[0], s * f[1]]
            },
            y,
            self.dt,
            dw,
        )
    }
}

fn escaped(y: &[f64; 2]) -> bool {
    !(y[0].abs() <= BLOWUP_BOUND && y[1].abs() <= BLOWUP_BOUND)
}

/// Full trajectory `Y_0, ..., Y_n` of one realization.
pub fn simulate(spec: &ClassicalSpec, x0: PhaseState, cfg: &SDEConfig) -> Result<Vec<PhaseState>> {
    let st = Stepper::new(spec, cfg.dt);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y = x0.to_array();
    let mut out = Vec::with_capacity(cfg.n_steps + 1);
    out.push(x0);
    for k in 0..cfg.n_steps {
        let dw = st.draw(&mut rng);
        y = st.step(&y, dw);
        if escaped(&y) {
            return Err(SovError::Divergence {
                time: (k + 1) as f64 * cfg.dt,
            });
        }
        out.push(PhaseState::from_array(y));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LyapunovMethod {
    VanKampen,
    Benettin,
    SovOtoc,
}

impl LyapunovMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LyapunovMethod::VanKampen => "van_kampen",
            LyapunovMethod::Benettin => "benettin",
            LyapunovMethod::SovOtoc => "sov_otoc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: LyapunovMethod,
    /// Realizations that entered the estimate.
    pub realizations: usize,
    /// Realizations terminated by leaving the integration domain.
    pub blowups: usize,
    /// False when more than 10% of realizations were terminated.
    pub reliable: bool,
}

/// `λ = sqrt(2Ω - Ω²) - γ(2Ω - Ω²)` for `0 < Ω <= 2`.
pub fn lyapunov_van_kampen_closed_form(omega: f64, gamma: f64) -> Option<f64> {
    if omega > 0.0 && omega <= 2.0 {
        let mu2 = 2.0 * omega - omega * omega;
        Some(mu2.sqrt() - gamma * mu2)
    } else {
        None
    }
}

/// Quadratic-moment matrix acting on `(Q², P², QP)` at the origin.
pub fn van_kampen_matrix(omega: f64) -> Matrix3<f64> {
    Matrix3::new(
        0.0,
        0.0,
        omega,
        0.0,
        0.0,
        -(omega - 2.0),
        -(omega - 2.0) / 2.0,
        omega / 2.0,
        0.0,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanKampen {
    pub a_d: Matrix3<f64>,
    /// `A_d - γ A_d²`.
    pub effective: Matrix3<f64>,
    /// Largest real part among eigenvalues of `A_d - γ A_d²`.
    pub max_real_eigenvalue: f64,
    /// `Re(λ - γλ²)` for the eigenvalue(s) `λ` of `A_d` with largest real
    /// part; differs from `max_real_eigenvalue` once the noise pushes the
    /// unstable mode below the neutral mode.
    pub unstable_mode_rate: f64,
}

pub fn van_kampen_analysis(omega: f64, gamma: f64) -> VanKampen {
    let a_d = van_kampen_matrix(omega);
    let effective = a_d - gamma * a_d * a_d;
    let max_real_eigenvalue = effective
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let eig_a = a_d.complex_eigenvalues();
    let top = eig_a.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let unstable_mode_rate = eig_a
        .iter()
        .filter(|z| z.re >= top - 1e-9 * top.abs().max(1.0))
        .map(|z| (z - z * z * gamma).re)
        .fold(f64::NEG_INFINITY, f64::max);
    VanKampen {
        a_d,
        effective,
        max_real_eigenvalue,
        unstable_mode_rate,
    }
}

/// `λ⁽¹⁾`: closed form for `0 < Ω <= 2`, otherwise the eigenvalue result.
pub fn lyapunov_van_kampen(spec: &ClassicalSpec) -> LyapunovEstimate {
    let value = lyapunov_van_kampen_closed_form(spec.omega, spec.gamma)
        .unwrap_or_else(|| van_kampen_analysis(spec.omega, spec.gamma).unstable_mode_rate);
    LyapunovEstimate {
        value,
        stderr: 0.0,
        method: LyapunovMethod::VanKampen,
        realizations: 0,
        blowups: 0,
        reliable: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenettinConfig {
    pub x0: PhaseState,
    pub delta0: f64,
    pub renorm_interval: f64,
    /// Burn-in with renormalization but no accumulation, so the separation
    /// aligns with the most unstable direction before measuring.
    pub transient: f64,
    pub dt: f64,
    /// Measurement time after the transient.
    pub t_total: f64,
    pub realizations: usize,
    pub seed: u64,
}

impl Default for BenettinConfig {
    fn default() -> Self {
        Self {
            x0: PhaseState::ORIGIN,
            delta0: 1e-8,
            renorm_interval: 0.5,
            transient: 2.0,
            dt: 1e-3,
            t_total: 20.0,
            realizations: 200,
            seed: 0,
        }
    }
}

impl BenettinConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.delta0 > 0.0
            && self.renorm_interval >= self.dt
            && self.transient >= 0.0
            && self.dt > 0.0
            && self.t_total > 0.0
            && self.realizations > 0;
        if !ok {
            return Err(SovError::InvalidParameter(format!(
                "invalid Benettin configuration {self:?}"
            )));
        }
        Ok(())
    }
}

fn separation(x: &[f64; 2], y: &[f64; 2]) -> f64 {
    ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt()
}

/// Finite-time exponent of one realization; `None` on blow-up.
fn benettin_realization(
    st: &Stepper,
    cfg: &BenettinConfig,
    seed: u64,
    renormalize: bool,
) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = cfg.x0.to_array();
    let mut y = [x[0] + cfg.delta0, x[1]];
    let every = ((cfg.renorm_interval / cfg.dt).round() as usize).max(1);
    let burn = (cfg.transient / cfg.dt).round() as usize;
    let total = (cfg.t_total / cfg.dt).round() as usize;
    let mut acc = 0.0;
    for k in 0..burn + total {
        let dw = st.draw(&mut rng);
        x = st.step(&x, dw);
        y = st.step(&y, dw);
        if escaped(&x) || escaped(&y) {
            return None;
        }
        let done = k + 1;
        let boundary = done == burn
            || (renormalize || done <= burn) && done % every == 0
            || done == burn + total;
        if boundary {
            let d = separation(&x, &y);
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            if done > burn {
                acc += (d / cfg.delta0).ln();
            }
            let s = cfg.delta0 / d;
            y = [x[0] + (y[0] - x[0]) * s, x[1] + (y[1] - x[1]) * s];
        }
    }
    Some(acc / (total as f64 * cfg.dt))
}

fn summarize(values: &[Option<f64>], method: LyapunovMethod) -> Result<LyapunovEstimate> {
    let good: Vec<f64> = values.iter().flatten().copied().collect();
    let blowups = values.len() - good.len();
    if good.is_empty() {
        return Err(SovError::AllDiverged(values.len()));
    }
    let n = good.len() as f64;
    let mean = good.iter().sum::<f64>() / n;
    let stderr = if good.len() > 1 {
        (good.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(LyapunovEstimate {
        value: mean,
        stderr,
        method,
        realizations: good.len(),
        blowups,
        reliable: blowups as f64 <= UNRELIABLE_FRACTION * values.len() as f64,
    })
}

/// `λ⁽²⁾` from twin trajectories sharing one noise realization, with the
/// separation rescaled to `delta0` every `renorm_interval`.
pub fn lyapunov_benettin(spec: &ClassicalSpec, cfg: &BenettinConfig) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let st = Stepper::new(spec, cfg.dt);
    let values: Vec<Option<f64>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| benettin_realization(&st, cfg, trajectory_seed(cfg.seed, r as u64), true))
        .collect();
    summarize(&values, LyapunovMethod::Benettin)
}

/// `(1/T) ln(d_T / δ0)` without intermediate renormalization, on the same
/// noise as [`lyapunov_benettin`]. Only meaningful while the separation stays
/// small.
pub fn lyapunov_raw(spec: &ClassicalSpec, cfg: &BenettinConfig) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    let st = Stepper::new(spec, cfg.dt);
    let values: Vec<Option<f64>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| benettin_realization(&st, cfg, trajectory_seed(cfg.seed, r as u64), false))
        .collect();
    summarize(&values, LyapunovMethod::Benettin)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalSovConfig {
    /// Initial offset `(ε0, 0)` from the saddle.
    pub epsilon0: f64,
    pub m: usize,
    pub dt: f64,
    pub t_max: f64,
    /// Variance is recorded every `sample_every` steps.
    pub sample_every: usize,
    pub window: (f64, f64),
    /// Contiguous realization groups for the jackknife error.
    pub groups: usize,
    pub seed: u64,
}

impl Default for ClassicalSovConfig {
    fn default() -> Self {
        Self {
            epsilon0: 1e-3,
            m: 1000,
            dt: 1e-3,
            t_max: 10.0,
            sample_every: 250,
            window: (2.0, 8.0),
            groups: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalSovResult {
    pub estimate: LyapunovEstimate,
    /// Intercept `ε` of `d_t ΔQ² ≈ ε e^{2λt}`.
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// `ΔQ_t²` over surviving realizations.
    pub variance: Vec<f64>,
}

/// Slope of `ln(d_t V) / 2` against `t` over `window`, and the intercept
/// `ε` with `d_t V ≈ ε e^{2λt}`.
pub fn fit_classical_sov(
    times: &[f64],
    variance: &[f64],
    window: (f64, f64),
) -> Result<(f64, f64)> {
    let dv = derivative(times, variance)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &d) in times.iter().zip(&dv) {
        if t >= window.0 && t <= window.1 {
            if !(d > 0.0) {
                return Err(SovError::NonPositive { t, value: d });
            }
            x.push(t);
            y.push(0.5 * d.ln());
        }
    }
    if x.len() < 3 {
        return Err(SovError::InsufficientSamples {
            start: window.0,
            end: window.1,
            found: x.len(),
            needed: 3,
        });
    }
    let f = linalg::fit_line(&x, &y).expect("distinct sample times");
    Ok((f.slope, (2.0 * f.intercept).exp()))
}

fn sample_variance(rows: &[&Vec<f64>], j: usize) -> f64 {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `λ⁽³⁾` from the growth of the position variance across noise
/// realizations started at `(ε0, 0)`.
pub fn lyapunov_from_classical_sov(
    spec: &ClassicalSpec,
    cfg: &ClassicalSovConfig,
) -> Result<ClassicalSovResult> {
    if spec.gamma == 0.0 {
        return Err(SovError::Inapplicable(
            "without noise every realization coincides and the variance vanishes".into(),
        ));
    }
    if cfg.m < 2
        || cfg.sample_every == 0
        || !(cfg.dt > 0.0)
        || !(cfg.t_max > 0.0)
        || cfg.groups == 0
    {
        return Err(SovError::InvalidParameter(format!(
            "invalid classical SOV configuration {cfg:?}"
        )));
    }
    let st = Stepper::new(spec, cfg.dt);
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    let n_samples = n_steps / cfg.sample_every + 1;
    let times: Vec<f64> = (0..n_samples)
        .map(|j| (j * cfg.sample_every) as f64 * cfg.dt)
        .collect();
    let paths: Vec<Option<Vec<f64>>> = (0..cfg.m)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(cfg.seed, r as u64));
            let mut y = [cfg.epsilon0, 0.0];
            let mut q = Vec::with_capacity(n_samples);
            q.push(y[0]);
            for k in 1..=n_samples.saturating_sub(1) * cfg.sample_every {
                let dw = st.draw(&mut rng);
                y = st.step(&y, dw);
                if escaped(&y) {
                    return None;
                }
                if k % cfg.sample_every == 0 {
                    q.push(y[0]);
                }
            }
            Some(q)
        })
        .collect();
    let indexed: Vec<(usize, &Vec<f64>)> = paths
        .iter()
        .enumerate()
        .filter_map(|(r, p)| p.as_ref().map(|q| (r, q)))
        .collect();
    let blowups = cfg.m - indexed.len();
    if indexed.len() < 2 {
        return Err(SovError::AllDiverged(cfg.m));
    }
    let all: Vec<&Vec<f64>> = indexed.iter().map(|(_, q)| *q).collect();
    let variance: Vec<f64> = (0..n_samples).map(|j| sample_variance(&all, j)).collect();
    let (lambda, epsilon) = fit_classical_sov(&times, &variance, cfg.window)?;

    // Delete-one-group jackknife over contiguous realization blocks.
    let g = cfg.groups.min(cfg.m);
    let mut reps = Vec::with_capacity(g);
    for b in 0..g {
        let (lo, hi) = (b * cfg.m / g, (b + 1) * cfg.m / g);
        let rest: Vec<&Vec<f64>> = indexed
            .iter()
            .filter(|(r, _)| *r < lo || *r >= hi)
            .map(|(_, q)| *q)
            .collect();
        if rest.len() < 2 {
            continue;
        }
        let v: Vec<f64> = (0..n_samples).map(|j| sample_variance(&rest, j)).collect();
        if let Ok((l, _)) = fit_classical_sov(&times, &v, cfg.window) {
            reps.push(l);
        }
    }
    let stderr = if reps.len() > 1 {
        let k = reps.len() as f64;
        let mean = reps.iter().sum::<f64>() / k;
        ((k - 1.0) / k * reps.iter().map(|l| (l - mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        f64::NAN
    };
    Ok(ClassicalSovResult {
        estimate: LyapunovEstimate {
            value: lambda,
            stderr,
            method: LyapunovMethod::SovOtoc,
            realizations: indexed.len(),
            blowups,
            reliable: blowups as f64 <= UNRELIABLE_FRACTION * cfg.m as f64,
        },
        epsilon,
        times,
        variance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagramConfig {
    pub omegas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Per-cell Benettin settings; the seed is replaced by a per-cell seed.
    pub benettin: BenettinConfig,
    pub base_seed: u64,
}

impl PhaseDiagramConfig {
    /// 40 x 30 grid: `Ω = 0.1, ..., 4.0` and `γ = 0, 0.1, ..., 2.9`, with 100
    /// realizations per cell over `T = 20`.
    pub fn desk_scale(base_seed: u64) -> Self {
        Self {
            omegas: (0..40).map(|j| 0.1 * (j + 1) as f64).collect(),
            gammas: (0..30).map(|k| 0.1 * k as f64).collect(),
            benettin: BenettinConfig {
                realizations: 100,
                ..BenettinConfig::default()
            },
            base_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub omega: f64,
    pub gamma: f64,
    pub result: std::result::Result<LyapunovEstimate, SovError>,
}

/// `λ⁽²⁾` over the grid, `Ω` outer and `γ` inner. Cell failures are kept in
/// place and do not stop the sweep.
pub fn phase_diagram(cfg: &PhaseDiagramConfig) -> Result<Vec<PhaseCell>> {
    if cfg.omegas.is_empty() || cfg.gammas.is_empty() {
        return Err(SovError::InvalidParameter(
            "phase diagram grids must be nonempty".into(),
        ));
    }
    let cells: Vec<(usize, f64, f64)> = cfg
        .omegas
        .iter()
        .flat_map(|&o| cfg.gammas.iter().map(move |&g| (o, g)))
        .enumerate()
        .map(|(i, (o, g))| (i, o, g))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(i, omega, gamma)| {
            let result = ClassicalSpec::new(omega, gamma).and_then(|spec| {
                let bc = BenettinConfig {
                    seed: trajectory_seed(cfg.base_seed, i as u64),
                    ..cfg.benettin
                };
                lyapunov_benettin(&spec, &bc)
            });
            PhaseCell {
                omega,
                gamma,
                result,
            }
        })
        .collect())
}

/// Strong errors `E|X_T^δ - X_T|` of the order-1.0 scheme on geometric
/// Brownian motion `dX = μX dt + σX dW`, one entry per step size. All step
/// sizes must divide `t_end` and be integer multiples of the smallest one,
/// whose Brownian path is shared by all of them.
pub fn gbm_strong_errors(
    mu: f64,
    sigma: f64,
    x0: f64,
    t_end: f64,
    dts: &[f64],
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let fine = dts.iter().copied().fold(f64::INFINITY, f64::min);
    if !(fine > 0.0) || paths == 0 {
        return Err(SovError::InvalidParameter(
            "need positive step sizes and paths".into(),
        ));
    }
    let n_fine = (t_end / fine).round() as usize;
    let factors = dts
        .iter()
        .map(|&dt| {
            let f = (dt / fine).round() as usize;
            if ((f as f64) * fine - dt).abs() > 1e-9 * dt || !n_fine.is_multiple_of(f) {
                Err(SovError::InvalidParameter(format!(
                    "dt = {dt} is not commensurate with the finest grid"
                )))
            } else {
                Ok(f)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, r as u64));
            let sd = fine.sqrt();
            let inc: Vec<f64> = (0..n_fine)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * sd
                })
                .collect();
            let w: f64 = inc.iter().sum();
            let exact = x0 * ((mu - 0.5 * sigma * sigma) * t_end + sigma * w).exp();
            factors
                .iter()
                .map(|&f| {
                    let dt = fine * f as f64;
                    let mut x = [x0];
                    for chunk in inc.chunks(f) {
                        let dw: f64 = chunk.iter().sum();
                        x = sde_step_order1(|u| [mu * u[0]], |u| [sigma * u[0]], &x, dt, dw);
                    }
                    (x[0] - exact).abs()
                })
                .collect()
        })
        .collect();
    Ok((0..dts.len())
        .map(|j| per_path.iter().map(|e| e[j]).sum::<f64>() / paths as f64)
        .collect())
}
