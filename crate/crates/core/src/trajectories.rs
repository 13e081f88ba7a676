// SPDX-License-Identifier: Apache-2.0

//! Single noisy realizations in the Heisenberg picture and Monte Carlo
//! estimates of the stochastic moments `<A_t>` and `<A_t^2>`.
//!
//! Each realization carries the stochastic Hamiltonian `H0 + sqrt(2γ) ξ_t L`.
//! Step `k` uses the increment `dW_k` drawn at the start of `[t_k, t_k + dt]`
//! and the exact unitary `exp(-i(H0 dt + sqrt(2γ) dW_k L))`. The operator at
//! time `t` is `U_t^dag A U_t` with `U_t` the chronological product.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Result, SovError};
use crate::linalg::{self, re, CMat};
use crate::spin_algebra::HermitianOperator;
use crate::superop::LindbladSpec;

/// Default number of contiguous trajectory groups used for jackknife errors.
pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub dt: f64,
    /// Wiener increments, each `N(0, dt)`.
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// `W` at every grid point, starting from `W_0 = 0`.
    pub fn wiener(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for dw in &self.increments {
            acc += dw;
            w.push(acc);
        }
        w
    }

    /// Path on the grid `factor * dt` carrying the same Brownian motion.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(SovError::InvalidParameter(format!(
                "cannot coarsen a path of {} steps by {factor}",
                self.len()
            )));
        }
        Ok(NoisePath {
            seed: self.seed,
            dt: self.dt * factor as f64,
            increments: self
                .increments
                .chunks(factor)
                .map(|c| c.iter().sum())
                .collect(),
        })
    }

    /// Grid index of `t`, rejecting times off the grid or past the end.
    pub fn grid_index(&self, t: f64) -> Result<usize> {
        grid_index(t, self.dt, self.len())
    }
}

fn grid_index(t: f64, dt: f64, n: usize) -> Result<usize> {
    let k = (t / dt).round();
    if !(t >= 0.0) || (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) || k as usize > n {
        return Err(SovError::OffGrid { t, dt });
    }
    Ok(k as usize)
}

pub fn sample_noise_path(seed: u64, dt: f64, n: usize) -> Result<NoisePath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SovError::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let increments = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd
        })
        .collect();
    Ok(NoisePath {
        seed,
        dt,
        increments,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-trajectory seed: `splitmix64(splitmix64(base) ^ k)`.
pub fn trajectory_seed(base_seed: u64, k: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ k)
}

fn unitarity_residual(u: &CMat) -> f64 {
    linalg::max_abs(&(u.adjoint() * u - linalg::identity(u.nrows())))
}

/// `exp(-i(H0 dt + sqrt(2γ) dW L)) U`.
pub fn step_propagator(u: &CMat, spec: &LindbladSpec, dt: f64, dw: f64) -> Result<CMat> {
    let d = linalg::ensure_square(u)?;
    if d != spec.dim() {
        return Err(SovError::DimensionMismatch {
            expected: spec.dim(),
            got: d,
        });
    }
    let residual = unitarity_residual(u);
    if residual > 1e-10 {
        return Err(SovError::InvalidParameter(format!(
            "propagator is not unitary (residual {residual:e})"
        )));
    }
    let g = generator(spec, dt, dw);
    Ok(linalg::expm_neg_i_hermitian(&g)? * u)
}

fn generator(spec: &LindbladSpec, dt: f64, dw: f64) -> CMat {
    spec.h0().matrix() * re(dt) + spec.jump().matrix() * re((2.0 * spec.gamma()).sqrt() * dw)
}

/// Precomputed stepping strategy for one spec.
#[derive(Debug, Clone)]
enum Stepper {
    /// `[H0, L] = 0`: `U_t` is diagonal in a fixed basis.
    Commuting {
        basis: CMat,
        energies: Vec<f64>,
        jumps: Vec<f64>,
    },
    General,
}

impl Stepper {
    fn new(spec: &LindbladSpec) -> Self {
        let scale = linalg::max_abs(spec.h0().matrix())
            .max(linalg::max_abs(spec.jump().matrix()))
            .max(1.0);
        if spec.commutator_norm() <= 1e-10 * scale {
            if let Ok((basis, energies, jumps)) = linalg::common_eigenbasis(
                spec.h0().matrix(),
                spec.jump().matrix(),
                1e-10 * scale * scale,
            ) {
                return Stepper::Commuting {
                    basis,
                    energies,
                    jumps,
                };
            }
        }
        Stepper::General
    }

    /// Propagators `U_t` at the requested grid indices (ascending order not
    /// required).
    fn unitaries(
        &self,
        spec: &LindbladSpec,
        path: &NoisePath,
        steps: &[usize],
    ) -> Result<Vec<CMat>> {
        let d = spec.dim();
        match self {
            Stepper::Commuting {
                basis,
                energies,
                jumps,
            } => {
                let w = path.wiener();
                let c = (2.0 * spec.gamma()).sqrt();
                Ok(steps
                    .iter()
                    .map(|&k| {
                        let t = k as f64 * path.dt;
                        let mut scaled = basis.clone();
                        for n in 0..d {
                            let ph = Complex64::from_polar(
                                1.0,
                                -(energies[n] * t + c * jumps[n] * w[k]),
                            );
                            for i in 0..d {
                                scaled[(i, n)] *= ph;
                            }
                        }
                        scaled * basis.adjoint()
                    })
                    .collect())
            }
            Stepper::General => {
                let mut order: Vec<usize> = (0..steps.len()).collect();
                order.sort_by_key(|&j| steps[j]);
                let mut out = vec![CMat::zeros(0, 0); steps.len()];
                let mut u = linalg::identity(d);
                let mut at = 0usize;
                for &j in &order {
                    while at < steps[j] {
                        let g = generator(spec, path.dt, path.increments[at]);
                        u = linalg::expm_neg_i_hermitian(&g)? * u;
                        at += 1;
                    }
                    out[j] = u.clone();
                }
                Ok(out)
            }
        }
    }
}

/// `A_t = U_t^dag A U_t` at each sample time of one realization.
pub fn heisenberg_trajectory(
    a: &HermitianOperator,
    spec: &LindbladSpec,
    path: &NoisePath,
    sample_times: &[f64],
) -> Result<Vec<HermitianOperator>> {
    linalg::ensure_same_dim(a.matrix(), spec.h0().matrix())?;
    let steps = sample_times
        .iter()
        .map(|&t| path.grid_index(t))
        .collect::<Result<Vec<_>>>()?;
    let us = Stepper::new(spec).unitaries(spec, path, &steps)?;
    us.iter()
        .map(|u| HermitianOperator::symmetrized(&(u.adjoint() * a.matrix() * u)).map(|(op, _)| op))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    /// Number of trajectories.
    pub m: usize,
    pub base_seed: u64,
    pub dt: f64,
    pub t_max: f64,
    /// Contiguous trajectory groups for jackknife standard errors.
    pub batches: usize,
}

impl EnsembleSpec {
    pub fn new(m: usize, base_seed: u64, dt: f64, t_max: f64) -> Self {
        Self {
            m,
            base_seed,
            dt,
            t_max,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(SovError::InvalidParameter(
                "trajectory count M must be >= 1".into(),
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SovError::InvalidParameter(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(SovError::InvalidParameter(format!(
                "t_max = {} must be >= 0",
                self.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    /// Estimates of `<A_t>`.
    pub mean_op: Vec<HermitianOperator>,
    /// Estimates of `<A_t^2>`.
    pub second_op: Vec<HermitianOperator>,
    /// Entrywise standard errors (modulus) of `mean_op`.
    pub mean_stderr: Vec<DMatrix<f64>>,
    pub second_stderr: Vec<DMatrix<f64>>,
    /// Entrywise jackknife standard errors of `second_op - mean_op^2`.
    pub sov_stderr: Vec<DMatrix<f64>>,
    pub m: usize,
}

struct BatchSums {
    count: usize,
    first: Vec<CMat>,
    second: Vec<CMat>,
}

/// Monte Carlo moments over `ens.m` trajectories.
///
/// Trajectories are split into contiguous groups that run in parallel; each
/// group accumulates in trajectory order and the groups are combined in index
/// order, so the result does not depend on the worker count.
pub fn ensemble_moments(
    a: &HermitianOperator,
    spec: &LindbladSpec,
    ens: &EnsembleSpec,
    sample_times: &[f64],
) -> Result<MomentSeries> {
    ens.validate()?;
    let d = linalg::ensure_same_dim(a.matrix(), spec.h0().matrix())?;
    let n_steps = ens.steps();
    let steps = sample_times
        .iter()
        .map(|&t| grid_index(t, ens.dt, n_steps))
        .collect::<Result<Vec<_>>>()?;
    let stepper = Stepper::new(spec);
    let a_mat = a.matrix();
    let a2 = a_mat * a_mat;
    let nt = sample_times.len();

    let n_batches = ens.batches.clamp(1, ens.m);
    let bounds: Vec<(usize, usize)> = (0..n_batches)
        .map(|b| (b * ens.m / n_batches, (b + 1) * ens.m / n_batches))
        .collect();

    let sums = bounds
        .par_iter()
        .map(|&(lo, hi)| -> Result<BatchSums> {
            let mut first = vec![CMat::zeros(d, d); nt];
            let mut second = vec![CMat::zeros(d, d); nt];
            for k in lo..hi {
                let seed = trajectory_seed(ens.base_seed, k as u64);
                let path = sample_noise_path(seed, ens.dt, n_steps)?;
                let us = stepper.unitaries(spec, &path, &steps)?;
                for (j, u) in us.iter().enumerate() {
                    let ud = u.adjoint();
                    first[j] += &ud * a_mat * u;
                    second[j] += &ud * &a2 * u;
                }
            }
            Ok(BatchSums {
                count: hi - lo,
                first,
                second,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = ens.m as f64;
    let mut mean_op = Vec::with_capacity(nt);
    let mut second_op = Vec::with_capacity(nt);
    let mut mean_stderr = Vec::with_capacity(nt);
    let mut second_stderr = Vec::with_capacity(nt);
    let mut sov_stderr = Vec::with_capacity(nt);
    for j in 0..nt {
        let mut s1 = CMat::zeros(d, d);
        let mut s2 = CMat::zeros(d, d);
        for b in &sums {
            s1 += &b.first[j];
            s2 += &b.second[j];
        }
        let mean = &s1 * re(1.0 / m);
        let second = &s2 * re(1.0 / m);

        // Delete-one-group jackknife.
        let mut jk_mean = Vec::with_capacity(sums.len());
        let mut jk_second = Vec::with_capacity(sums.len());
        let mut jk_sov = Vec::with_capacity(sums.len());
        if sums.len() > 1 {
            for b in &sums {
                let rest = (ens.m - b.count) as f64;
                let mu = (&s1 - &b.first[j]) * re(1.0 / rest);
                let sec = (&s2 - &b.second[j]) * re(1.0 / rest);
                jk_sov.push(&sec - &mu * &mu);
                jk_mean.push(mu);
                jk_second.push(sec);
            }
        }
        mean_stderr.push(jackknife_error(&jk_mean, d));
        second_stderr.push(jackknife_error(&jk_second, d));
        sov_stderr.push(jackknife_error(&jk_sov, d));
        mean_op.push(HermitianOperator::symmetrized(&mean)?.0);
        second_op.push(HermitianOperator::symmetrized(&second)?.0);
    }
    Ok(MomentSeries {
        times: sample_times.to_vec(),
        mean_op,
        second_op,
        mean_stderr,
        second_stderr,
        sov_stderr,
        m: ens.m,
    })
}

fn jackknife_error(replicates: &[CMat], d: usize) -> DMatrix<f64> {
    let g = replicates.len();
    if g < 2 {
        return DMatrix::from_element(d, d, f64::NAN);
    }
    let mut avg = CMat::zeros(d, d);
    for r in replicates {
        avg += r;
    }
    avg *= re(1.0 / g as f64);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for r in replicates {
        for (s, (x, y)) in acc.iter_mut().zip(r.iter().zip(avg.iter())) {
            *s += (x - y).norm_sqr();
        }
    }
    acc.map(|s| (s * (g - 1) as f64 / g as f64).sqrt())
}

/// `<A_t^2> - <A_t>^2` at each sample time, symmetrized.
pub fn empirical_sov(ms: &MomentSeries) -> Vec<HermitianOperator> {
    ms.mean_op
        .iter()
        .zip(&ms.second_op)
        .map(|(mu, sec)| {
            let m = mu.matrix();
            HermitianOperator::symmetrized(&(sec.matrix() - m * m))
                .expect("moment estimates are square")
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::spin_algebra::{lmg_hamiltonian, spin_operators, SpinSpec};
    use crate::superop::{PropagationConfig, Propagator};
    use crate::testutil::{random_hermitian, Lcg};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn herm(m: CMat) -> HermitianOperator {
        HermitianOperator::new(m).unwrap()
    }

    fn random_spec(rng: &mut Lcg, d: usize, gamma: f64) -> LindbladSpec {
        LindbladSpec::new(
            herm(random_hermitian(rng, d)),
            herm(random_hermitian(rng, d)),
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn paths_are_reproducible() {
        let a = sample_noise_path(42, 1e-3, 1000).unwrap();
        let b = sample_noise_path(42, 1e-3, 1000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_noise_path(43, 1e-3, 1000).unwrap());
    }

    #[test]
    fn increments_have_variance_dt() {
        let dt = 1e-3;
        let p = sample_noise_path(7, dt, 1_000_000).unwrap();
        let n = p.len() as f64;
        let mean = p.increments.iter().sum::<f64>() / n;
        let var = p.increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / dt - 1.0).abs() < 0.01, "var/dt = {}", var / dt);
        assert!(mean.abs() < 5.0 * (dt / n).sqrt());
    }

    #[test]
    fn scaled_increments_pass_ks() {
        let dt = 0.01;
        let p = sample_noise_path(99, dt, 5000).unwrap();
        let mut z: Vec<f64> = p.increments.iter().map(|x| x / dt.sqrt()).collect();
        z.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = z.len() as f64;
        let stat = z.iter().enumerate().fold(0.0_f64, |acc, (i, &x)| {
            let f = normal.cdf(x);
            acc.max((f - i as f64 / n).abs())
                .max(((i + 1) as f64 / n - f).abs())
        });
        // Asymptotic critical value at p = 0.01.
        assert!(stat < 1.628 / n.sqrt(), "KS statistic {stat}");
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(sample_noise_path(1, 0.0, 10).is_err());
        assert!(sample_noise_path(1, -1.0, 10).is_err());
    }

    #[test]
    fn seeds_differ_across_trajectories() {
        let s: Vec<u64> = (0..1000).map(|k| trajectory_seed(5, k)).collect();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), s.len());
        assert_eq!(trajectory_seed(5, 17), s[17]);
    }

    #[test]
    fn noiseless_step_is_plain_exponential() {
        let mut rng = Lcg::new(2);
        let spec = random_spec(&mut rng, 3, 0.0);
        let u = step_propagator(&linalg::identity(3), &spec, 0.01, 0.3).unwrap();
        let expected = linalg::expm_neg_i_hermitian(&(spec.h0().matrix() * re(0.01))).unwrap();
        assert!(max_abs(&(u - expected)) < 1e-13);
        let spec = random_spec(&mut rng, 3, 0.7);
        let u0 = linalg::expm_neg_i_hermitian(&random_hermitian(&mut rng, 3)).unwrap();
        assert!(max_abs(&(step_propagator(&u0, &spec, 0.0, 0.0).unwrap() - &u0)) < 1e-13);
        assert!(step_propagator(&(u0 * re(2.0)), &spec, 0.0, 0.0).is_err());
    }

    #[test]
    fn commuting_product_matches_single_exponential() {
        let mut rng = Lcg::new(4);
        let h = random_hermitian(&mut rng, 4);
        let l = &h * &h * re(0.3) - &h;
        let spec = LindbladSpec::new(
            herm(h.clone()),
            HermitianOperator::symmetrized(&l).unwrap().0,
            0.8,
        )
        .unwrap();
        let path = sample_noise_path(11, 0.01, 200).unwrap();
        let mut u = linalg::identity(4);
        for &dw in &path.increments {
            u = step_propagator(&u, &spec, path.dt, dw).unwrap();
        }
        let w: f64 = path.increments.iter().sum();
        let g = &h * re(2.0) + spec.jump().matrix() * re((1.6_f64).sqrt() * w);
        let expected = linalg::expm_neg_i_hermitian(&g).unwrap();
        assert!(max_abs(&(u - expected)) < 1e-10);
    }

    #[test]
    fn free_precession_matches_rotation() {
        let spin = SpinSpec::from_twice(3);
        let ops = spin_operators(spin);
        let omega = 1.3;
        let h = ops.z.scale(omega);
        let spec = LindbladSpec::new(h.clone(), ops.x.clone(), 0.0).unwrap();
        let path = sample_noise_path(1, 1e-2, 100).unwrap();
        let times = [0.0, 0.25, 1.0];
        let series = heisenberg_trajectory(&ops.x, &spec, &path, &times).unwrap();
        for (t, at) in times.iter().zip(&series) {
            let u = linalg::expm_neg_i_hermitian(&(h.matrix() * re(*t))).unwrap();
            let direct = u.adjoint() * ops.x.matrix() * &u;
            let rotated =
                ops.x.matrix() * re((omega * t).cos()) - ops.y.matrix() * re((omega * t).sin());
            assert!(max_abs(&(at.matrix() - &direct)) < 1e-10);
            assert!(max_abs(&(at.matrix() - rotated)) < 1e-10);
        }
    }

    #[test]
    fn trajectories_preserve_spectrum() {
        let mut rng = Lcg::new(8);
        let spec = random_spec(&mut rng, 4, 1.2);
        let a = herm(random_hermitian(&mut rng, 4));
        let path = sample_noise_path(3, 1e-2, 300).unwrap();
        let ev0 = a.eigen().unwrap().values;
        for at in heisenberg_trajectory(&a, &spec, &path, &[0.5, 1.5, 3.0]).unwrap() {
            let ev = at.eigen().unwrap().values;
            for (x, y) in ev.iter().zip(&ev0) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn off_grid_times_are_rejected() {
        let mut rng = Lcg::new(9);
        let spec = random_spec(&mut rng, 2, 0.5);
        let a = herm(random_hermitian(&mut rng, 2));
        let path = sample_noise_path(3, 0.1, 10).unwrap();
        assert!(matches!(
            heisenberg_trajectory(&a, &spec, &path, &[0.05]),
            Err(SovError::OffGrid { .. })
        ));
        assert!(heisenberg_trajectory(&a, &spec, &path, &[1.1]).is_err());
    }

    #[test]
    fn slmg_realization_is_diagonal_in_energy_basis() {
        let spin = SpinSpec::from_twice(6);
        let h = lmg_hamiltonian(spin, 1.0).unwrap();
        let gamma = 2.0;
        let spec = LindbladSpec::new(h.clone(), h.clone(), gamma).unwrap();
        let path = sample_noise_path(21, 1e-3, 500).unwrap();
        let stepper = Stepper::new(&spec);
        assert!(matches!(stepper, Stepper::Commuting { .. }));
        let u = stepper.unitaries(&spec, &path, &[500]).unwrap().remove(0);
        let w: f64 = path.increments.iter().sum();
        let eig = h.eigen().unwrap();
        let t = 0.5;
        let expected =
            eig.apply_fn(|e| Complex64::from_polar(1.0, -e * (t + (2.0 * gamma).sqrt() * w)));
        assert!(max_abs(&(&u - &expected)) < 1e-10);
        // The general stepper reproduces the same propagator.
        let general = Stepper::General
            .unitaries(&spec, &path, &[500])
            .unwrap()
            .remove(0);
        assert!(max_abs(&(general - expected)) < 1e-9);
    }

    #[test]
    fn coarsened_path_gives_same_commuting_trajectory() {
        let spin = SpinSpec::from_twice(4);
        let h = lmg_hamiltonian(spin, 0.7).unwrap();
        let ops = spin_operators(spin);
        let spec = LindbladSpec::new(h.clone(), h, 1.0).unwrap();
        let fine = sample_noise_path(5, 5e-4, 2000).unwrap();
        let coarse = fine.coarsen(2).unwrap();
        let a = fine_then_coarse(&ops.x, &spec, &fine, &coarse);
        assert!(a < 1e-10);
        assert!(fine.coarsen(3).is_err());
    }

    fn fine_then_coarse(
        a: &HermitianOperator,
        spec: &LindbladSpec,
        fine: &NoisePath,
        coarse: &NoisePath,
    ) -> f64 {
        let f = heisenberg_trajectory(a, spec, fine, &[1.0]).unwrap();
        let c = heisenberg_trajectory(a, spec, coarse, &[1.0]).unwrap();
        max_abs(&(f[0].matrix() - c[0].matrix()))
    }

    #[test]
    fn strong_convergence_in_dt_for_noncommuting_dynamics() {
        // Same Brownian motion refined by halving: the terminal operator
        // error shrinks at least like sqrt(dt).
        let mut rng = Lcg::new(12);
        let spec = random_spec(&mut rng, 3, 0.5);
        let a = herm(random_hermitian(&mut rng, 3));
        let reference = sample_noise_path(77, 1.0 / 4096.0, 4096).unwrap();
        let exact = heisenberg_trajectory(&a, &spec, &reference, &[1.0])
            .unwrap()
            .remove(0);
        let err = |factor: usize| {
            let p = reference.coarsen(factor).unwrap();
            let at = heisenberg_trajectory(&a, &spec, &p, &[1.0])
                .unwrap()
                .remove(0);
            max_abs(&(at.matrix() - exact.matrix()))
        };
        let (e1, e2) = (err(64), err(16));
        assert!(e2 < e1 / 4.0_f64.sqrt() * 1.2, "e(64) = {e1}, e(16) = {e2}");
    }

    #[test]
    fn zero_noise_has_no_spread() {
        let mut rng = Lcg::new(13);
        let spec = random_spec(&mut rng, 3, 0.0);
        let a = herm(random_hermitian(&mut rng, 3));
        let ens = EnsembleSpec::new(20, 1, 0.01, 1.0);
        let ms = ensemble_moments(&a, &spec, &ens, &[0.0, 0.5, 1.0]).unwrap();
        for s in empirical_sov(&ms) {
            assert!(max_abs(s.matrix()) < 1e-12);
        }
    }

    #[test]
    fn ensemble_mean_approaches_lindblad() {
        let mut rng = Lcg::new(14);
        let spec = random_spec(&mut rng, 3, 0.4);
        let a = herm(random_hermitian(&mut rng, 3));
        let t = 0.5;
        let ens = EnsembleSpec::new(1000, 9, 0.005, t);
        let ms = ensemble_moments(&a, &spec, &ens, &[t]).unwrap();
        let p = Propagator::new(&spec, &PropagationConfig::default()).unwrap();
        let exact_mean = p.propagate_matrix(a.matrix(), t).unwrap();
        let exact_second = p.propagate_matrix(&(a.matrix() * a.matrix()), t).unwrap();
        for (est, se, exact) in [
            (&ms.mean_op[0], &ms.mean_stderr[0], &exact_mean),
            (&ms.second_op[0], &ms.second_stderr[0], &exact_second),
        ] {
            for ((x, y), s) in est.matrix().iter().zip(exact.iter()).zip(se.iter()) {
                // Time-step bias is O(dt) and far below the statistical error.
                assert!((x - y).norm() <= 5.0 * s + 1e-3, "{x} vs {y} (se {s})");
            }
        }
    }

    #[test]
    fn ensemble_is_reproducible_and_thread_independent() {
        let mut rng = Lcg::new(15);
        let spec = random_spec(&mut rng, 3, 0.3);
        let a = herm(random_hermitian(&mut rng, 3));
        let ens = EnsembleSpec::new(40, 123, 0.01, 0.5);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_moments(&a, &spec, &ens, &[0.2, 0.5]).unwrap())
        };
        let (x, y) = (run(1), run(3));
        for j in 0..2 {
            assert_eq!(x.mean_op[j].matrix(), y.mean_op[j].matrix());
            assert_eq!(x.second_op[j].matrix(), y.second_op[j].matrix());
        }
    }

    #[test]
    fn ensemble_rejects_empty() {
        let spec = LindbladSpec::new(
            HermitianOperator::identity(2),
            HermitianOperator::identity(2),
            0.1,
        )
        .unwrap();
        let ens = EnsembleSpec::new(0, 1, 0.1, 1.0);
        assert!(ensemble_moments(&HermitianOperator::identity(2), &spec, &ens, &[0.0]).is_err());
    }

    #[test]
    fn empirical_sov_vanishes_at_zero() {
        let mut rng = Lcg::new(16);
        let spec = random_spec(&mut rng, 3, 1.0);
        let a = herm(random_hermitian(&mut rng, 3));
        let ms = ensemble_moments(&a, &spec, &EnsembleSpec::new(10, 2, 0.1, 1.0), &[0.0]).unwrap();
        assert!(max_abs(empirical_sov(&ms)[0].matrix()) < 1e-12);
    }
}
