//! Invariant suite behind `sovlab validate`, at small dimensions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::classical::{
    classical_hamiltonian, gbm_strong_errors, lyapunov_benettin, lyapunov_van_kampen_closed_form,
    simulate, van_kampen_analysis, BenettinConfig, ClassicalSpec, PhaseState, SDEConfig,
};
use crate::error::Result;
use crate::linalg::{self, commutator, max_abs, re, CMat, CVec, I};
use crate::otoc::{
    commuting_otoc_closed_form, dissipative_otoc, otoc_from_sov, sov_trace_series, Normalization,
};
use crate::sov::{
    exact_sov, min_sov_state, sov_eigensystem, sov_rhs_residual, sov_rhs_residual_with_source,
    swap_product_check, uncertainty_check, DEFAULT_NEGATIVITY_TOL,
};
use crate::spin_algebra::{lmg_hamiltonian, spin_operators, HermitianOperator, SpinSpec};
use crate::superop::{build_adjoint_lindbladian, LindbladSpec, PropagationConfig, Propagator};
use crate::trajectories::{empirical_sov, ensemble_moments, step_propagator, EnsembleSpec};

use super::emit::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: Bound,
}

impl Check {
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost(b) => self.value <= b,
            Bound::AtLeast(b) => self.value >= b,
        }
    }
}

struct Fixtures(ChaCha8Rng);

impl Fixtures {
    fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..hi)
    }

    fn matrix(&mut self, d: usize) -> CMat {
        CMat::from_fn(d, d, |_, _| Complex64::new(self.normal(), self.normal()))
    }

    fn hermitian(&mut self, d: usize) -> HermitianOperator {
        let m = self.matrix(d);
        HermitianOperator::symmetrized(&((&m + m.adjoint()) * re(0.5)))
            .expect("square")
            .0
    }

    fn unit_vector(&mut self, d: usize) -> CVec {
        let v = CVec::from_fn(d, |_, _| Complex64::new(self.normal(), self.normal()));
        let n = v.norm();
        v / re(n)
    }

    fn density(&mut self, d: usize) -> CMat {
        let g = self.matrix(d);
        let rho = &g * g.adjoint();
        let tr = linalg::trace(&rho);
        rho / tr
    }

    fn propagator(&mut self, d: usize) -> Result<(Propagator, HermitianOperator)> {
        let gamma = self.uniform(0.1, 1.5);
        let spec = LindbladSpec::new(self.hermitian(d), self.hermitian(d), gamma)?;
        let a = self.hermitian(d);
        Ok((Propagator::new(&spec, &PropagationConfig::default())?, a))
    }
}

fn slmg(s: f64, omega: f64, gamma: f64) -> Result<(Propagator, HermitianOperator, SpinSpec)> {
    let spin = SpinSpec::new(s)?;
    let h = lmg_hamiltonian(spin, omega)?;
    let spec = LindbladSpec::new(h.clone(), h, gamma)?;
    let r = 1.0 / 3f64.sqrt();
    let a = spin_operators(spin).combination(r, r, r);
    Ok((
        Propagator::new(&spec, &PropagationConfig::default())?,
        a,
        spin,
    ))
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn quantum_checks(fx: &mut Fixtures, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let mut v = 0.0_f64;
    for twice in 1..=4 {
        let ops = spin_operators(SpinSpec::from_twice(twice));
        let c = commutator(ops.x.matrix(), ops.y.matrix()) - ops.z.matrix() * I;
        v = v.max(max_abs(&c));
    }
    out.push(Check {
        name: "spin_commutation",
        value: v,
        bound: Bound::AtMost(1e-12),
    });

    let spin = SpinSpec::new(3.0)?;
    let h = lmg_hamiltonian(spin, 0.7)?;
    let s2 = spin_operators(spin).total_squared();
    out.push(Check {
        name: "lmg_total_spin_conserved",
        value: max_abs(&commutator(h.matrix(), s2.matrix())),
        bound: Bound::AtMost(1e-10),
    });

    let mut unital = 0.0_f64;
    let mut ode_gap = 0.0_f64;
    let mut rhs = 0.0_f64;
    let mut mutated = f64::INFINITY;
    let mut sov_otoc = 0.0_f64;
    for _ in 0..10 {
        let (prop, a) = fx.propagator(3)?;
        unital = unital.max(build_adjoint_lindbladian(prop.spec()).unitality_residual());
        let ode = Propagator::new(prop.spec(), &PropagationConfig::ode(1e-3))?;
        for t in [0.1, 1.0] {
            let diff =
                prop.propagate_matrix(a.matrix(), t)? - ode.propagate_matrix(a.matrix(), t)?;
            ode_gap = ode_gap.max(max_abs(&diff));
        }
        rhs = rhs.max(sov_rhs_residual(&prop, &a, 0.5, 1e-4)?);
        mutated = mutated.min(sov_rhs_residual_with_source(&prop, &a, 0.5, 1e-4, -1.0)?);
        let h = 1e-5;
        for t in [0.2, 0.7] {
            let times = [t - h, t, t + h];
            let trace = sov_trace_series(&prop, &a, &times)?;
            let n = Normalization::PerDim.factor(3);
            let route = otoc_from_sov(
                &times,
                &trace,
                prop.spec().gamma(),
                n,
                Normalization::PerDim,
            )?;
            let direct = dissipative_otoc(&prop, &a, &[t], Normalization::PerDim)?;
            if direct.c[0] > 1e-10 {
                sov_otoc = sov_otoc.max((route.c[1] - direct.c[0]).abs() / direct.c[0]);
            }
        }
    }
    out.push(Check {
        name: "superoperator_unitality",
        value: unital,
        bound: Bound::AtMost(1e-10),
    });
    out.push(Check {
        name: "spectral_vs_ode_propagation",
        value: ode_gap,
        bound: Bound::AtMost(1e-7),
    });
    out.push(Check {
        name: "sov_equation_of_motion_residual",
        value: rhs,
        bound: Bound::AtMost(1e-6),
    });
    out.push(Check {
        name: "mutation_flipped_source_detected",
        value: mutated,
        bound: Bound::AtLeast(1e-3),
    });
    out.push(Check {
        name: "sov_otoc_identity_relative",
        value: sov_otoc,
        bound: Bound::AtMost(1e-6),
    });

    let mut min_eig = f64::INFINITY;
    for (t, gamma, omega) in [
        (0.1, 0.5, 0.5),
        (1.0, 2.0, 1.0),
        (3.0, 1.0, 2.5),
        (10.0, 0.2, 1.5),
    ] {
        let (prop, a, _) = slmg(3.0, omega, gamma)?;
        let sov = exact_sov(&prop, &a, t)?;
        let series = sov_eigensystem(&[t], &[sov], f64::INFINITY)?;
        min_eig = min_eig.min(series.eigvals[0][0]);
    }
    out.push(Check {
        name: "sov_positivity_min_eigenvalue",
        value: min_eig,
        bound: Bound::AtLeast(-DEFAULT_NEGATIVITY_TOL),
    });

    // Commuting pair in a random basis.
    let basis = fx.hermitian(4).eigen()?.vectors;
    let e: Vec<f64> = (0..4).map(|_| fx.normal()).collect();
    let l: Vec<f64> = (0..4).map(|_| fx.normal()).collect();
    let diag = |v: &[f64]| {
        let m = &basis
            * CMat::from_diagonal(&CVec::from_iterator(4, v.iter().map(|&x| re(x))))
            * basis.adjoint();
        HermitianOperator::symmetrized(&m).map(|p| p.0)
    };
    let (h0, jump) = (diag(&e)?, diag(&l)?);
    let a = fx.hermitian(4);
    let gamma = 0.7;
    let times = [0.0, 0.3, 1.0, 2.5];
    let closed = commuting_otoc_closed_form(
        a.matrix(),
        h0.matrix(),
        jump.matrix(),
        gamma,
        &times,
        Normalization::PerDim,
    )?;
    let spec = LindbladSpec::new(h0, jump, gamma)?;
    // RK4 on the full superoperator, independent of the commuting fast path.
    let general = Propagator::new(&spec, &PropagationConfig::ode(1e-4))?;
    let direct = dissipative_otoc(&general, &a, &times, Normalization::PerDim)?;
    out.push(Check {
        name: "commuting_closed_form",
        value: worst(closed.c.iter().zip(&direct.c).map(|(x, y)| (x - y).abs())),
        bound: Bound::AtMost(1e-9),
    });

    let sz = HermitianOperator::diagonal(&[1.0, -1.0]);
    let sx = HermitianOperator::new(CMat::from_row_slice(
        2,
        2,
        &[re(0.0), re(1.0), re(1.0), re(0.0)],
    ))?;
    let g2 = 0.3;
    let two = commuting_otoc_closed_form(
        sx.matrix(),
        sz.matrix(),
        sz.matrix(),
        g2,
        &times,
        Normalization::PerDim,
    )?;
    out.push(Check {
        name: "two_level_benchmark",
        value: worst(
            times
                .iter()
                .zip(&two.c)
                .map(|(t, c)| (c - 4.0 * (-8.0 * g2 * t).exp()).abs()),
        ),
        bound: Bound::AtMost(1e-10),
    });

    let mut violation = 0.0_f64;
    let mut saturation = 0.0_f64;
    let mut d_parts = 0.0_f64;
    for _ in 0..50 {
        let (prop, a) = fx.propagator(3)?;
        let b = fx.hermitian(3);
        let rho = fx.density(3);
        let t = fx.uniform(0.0, 2.0);
        let r = uncertainty_check(&prop, &a, &b, &rho, t)?;
        violation = violation.max(r.mid - r.lhs).max(r.rhs - r.mid);
        d_parts = d_parts.max(r.d_plus.im.abs()).max(r.d_minus.re.abs());
        let same = uncertainty_check(&prop, &a, &a, &rho, t)?;
        saturation = saturation.max((same.lhs - same.mid).abs());
    }
    out.push(Check {
        name: "uncertainty_chain_violation",
        value: violation,
        bound: Bound::AtMost(1e-9),
    });
    out.push(Check {
        name: "uncertainty_saturation_a_equals_b",
        value: saturation,
        bound: Bound::AtMost(1e-10),
    });
    out.push(Check {
        name: "uncertainty_d_plus_real_d_minus_imaginary",
        value: d_parts,
        bound: Bound::AtMost(1e-10),
    });

    let mut swap = 0.0_f64;
    for d in 1..=6 {
        swap = swap.max(swap_product_check(&fx.matrix(d), &fx.matrix(d))?);
    }
    out.push(Check {
        name: "swap_identity",
        value: swap,
        bound: Bound::AtMost(1e-12),
    });

    let (prop, _) = fx.propagator(3)?;
    let mut u = linalg::identity(3);
    for _ in 0..100 {
        let dw = 0.03 * fx.normal();
        u = step_propagator(&u, prop.spec(), 1e-3, dw)?;
    }
    out.push(Check {
        name: "trajectory_unitarity",
        value: max_abs(&(u.adjoint() * &u - linalg::identity(3))),
        bound: Bound::AtMost(1e-10),
    });

    let (prop, a, spin) = slmg(1.5, 1.0, 2.0)?;
    let t_max = 10.0;
    let min = min_sov_state(&prop, &a, t_max, 1e-6)?;
    let sov = exact_sov(&prop, &a, t_max)?;
    let at_min = sov.expectation(&min.state)?;
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let phi = fx.unit_vector(spin.dim());
        excess = excess.max(at_min - sov.expectation(&phi)?);
    }
    out.push(Check {
        name: "min_sov_state_is_minimal",
        value: excess,
        bound: Bound::AtMost(1e-10),
    });

    // Commuting sLMG: per-step propagators are exact, so only sampling error
    // remains.
    let (prop, a, _) = slmg(1.0, 1.0, 1.0)?;
    let mut z_max = 0.0_f64;
    for k in 0..5u64 {
        let ens = EnsembleSpec::new(400, seed.wrapping_add(k), 1e-3, 0.5);
        let ms = ensemble_moments(&a, prop.spec(), &ens, &[0.5])?;
        let emp = empirical_sov(&ms);
        let exact = exact_sov(&prop, &a, 0.5)?;
        let diff = emp[0].matrix() - exact.matrix();
        for (dz, se) in diff.iter().zip(ms.sov_stderr[0].iter()) {
            if *se > 0.0 {
                z_max = z_max.max(dz.norm() / se);
            }
        }
    }
    out.push(Check {
        name: "monte_carlo_vs_exact_max_z_5_seeds",
        value: z_max,
        bound: Bound::AtMost(5.0),
    });
    Ok(out)
}

fn classical_checks(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let dts = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
    let errs = gbm_strong_errors(1.0, 0.8, 1.0, 0.6, &dts, 400, seed)?;
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let slope = linalg::fit_line(&lx, &ly).map_or(f64::NAN, |f| f.slope);
    out.push(Check {
        name: "sde_strong_order_deviation",
        value: (slope - 1.0).abs(),
        bound: Bound::AtMost(0.15),
    });

    let mut vk = 0.0_f64;
    for j in 1..20 {
        for gamma in [0.0, 0.3, 1.0, 2.5] {
            let omega = 0.1 * j as f64;
            let closed = lyapunov_van_kampen_closed_form(omega, gamma).expect("0 < omega <= 2");
            vk = vk.max((van_kampen_analysis(omega, gamma).unstable_mode_rate - closed).abs());
        }
    }
    out.push(Check {
        name: "van_kampen_eigen_vs_closed_form",
        value: vk,
        bound: Bound::AtMost(1e-10),
    });

    let single = BenettinConfig {
        realizations: 1,
        seed,
        ..BenettinConfig::default()
    };
    let e = lyapunov_benettin(&ClassicalSpec::new(1.0, 0.0)?, &single)?;
    out.push(Check {
        name: "benettin_saddle_benchmark_deviation",
        value: (e.value - 1.0).abs(),
        bound: Bound::AtMost(0.05),
    });

    let spec = ClassicalSpec::new(1.0, 0.5)?;
    let mut z = 0.0_f64;
    for k in 0..5u64 {
        let cfg = BenettinConfig {
            realizations: 50,
            t_total: 10.0,
            dt: 2e-3,
            seed: seed.wrapping_add(k),
            ..BenettinConfig::default()
        };
        let e = lyapunov_benettin(&spec, &cfg)?;
        z = z.max((e.value - 0.5).abs() / e.stderr);
    }
    out.push(Check {
        name: "benettin_vs_closed_form_max_z_5_seeds",
        value: z,
        bound: Bound::AtMost(4.0),
    });

    let x0 = PhaseState::new(0.5, 0.5);
    let traj = simulate(
        &ClassicalSpec::new(1.0, 0.0)?,
        x0,
        &SDEConfig::for_duration(20.0, 1e-4, seed)?,
    )?;
    let h0 = classical_hamiltonian(1.0, x0);
    out.push(Check {
        name: "noiseless_energy_drift",
        value: worst(
            traj.iter()
                .map(|s| (classical_hamiltonian(1.0, *s) - h0).abs()),
        ),
        bound: Bound::AtMost(1e-5),
    });
    Ok(out)
}

/// Runs every check; deterministic for a given seed.
pub fn run_checks(seed: u64) -> Result<Vec<Check>> {
    let mut fx = Fixtures(ChaCha8Rng::seed_from_u64(seed));
    let mut checks = quantum_checks(&mut fx, seed)?;
    checks.extend(classical_checks(seed)?);
    Ok(checks)
}

pub fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new("validate", &["check", "value", "bound", "passed"]);
    for c in checks {
        let bound = match c.bound {
            Bound::AtMost(b) => format!("<= {b:e}"),
            Bound::AtLeast(b) => format!(">= {b:e}"),
        };
        t.push(vec![
            c.name.into(),
            Cell::Num(c.value),
            bound.into(),
            c.passed().into(),
        ]);
    }
    t
}

pub fn render(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let bound = match c.bound {
            Bound::AtMost(b) => format!("<= {b:.1e}"),
            Bound::AtLeast(b) => format!(">= {b:.1e}"),
        };
        let status = if c.passed() { "PASS" } else { "FAIL" };
        s.push_str(&format!(
            "{status}  {:<width$}  {:>12.4e}  {bound}\n",
            c.name, c.value
        ));
    }
    s
}
