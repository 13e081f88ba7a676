//! Experiment drivers. Each turns a resolved config into output tables.

use std::collections::BTreeMap;

use crate::classical::{
    lyapunov_benettin, lyapunov_from_classical_sov, lyapunov_van_kampen, phase_diagram,
    BenettinConfig, ClassicalSovConfig, ClassicalSpec, LyapunovEstimate, PhaseDiagramConfig,
    PhaseState,
};
use crate::error::{Result, SovError};
use crate::otoc::{
    dissipation_time, dissipative_otoc, otoc_from_sov_local, DissipationTime, Normalization,
};
use crate::sov::{
    early_window, exact_sov_series, mid_window, min_sov_state, sov_eigensystem, sov_projection,
    transport_exponent_fit, DEFAULT_NEGATIVITY_TOL,
};
use crate::spin_algebra::{lmg_hamiltonian, spin_operators, HermitianOperator, SpinSpec};
use crate::superop::{LindbladSpec, PropagationConfig, Propagator, ResolvedMethod};

use super::config::{Experiment, RunConfig};
use super::emit::{Cell, Table};

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Cell>,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.experiment {
        Experiment::QuantumSov => quantum_sov(cfg),
        Experiment::Otoc => otoc(cfg),
        Experiment::MinState => min_state(cfg),
        Experiment::ClassicalLyapunov => classical_lyapunov(cfg),
        Experiment::PhaseDiagram => phase_diagram_run(cfg),
        Experiment::Validate => unreachable!("validate has its own driver"),
    }
}

struct QuantumModel {
    spin: SpinSpec,
    prop: Propagator,
    a: HermitianOperator,
}

/// sLMG with `L = H_lmg` and the configured spin observable.
fn quantum_model(cfg: &RunConfig) -> Result<QuantumModel> {
    let spin = SpinSpec::new(cfg.float("S"))?;
    let h = lmg_hamiltonian(spin, cfg.float("omega"))?;
    let spec = LindbladSpec::new(h.clone(), h, cfg.float("gamma"))?;
    let prop = Propagator::new(&spec, &PropagationConfig::default())?;
    let a = spin_operators(spin).combination(
        cfg.float("obs_x"),
        cfg.float("obs_y"),
        cfg.float("obs_z"),
    );
    Ok(QuantumModel { spin, prop, a })
}

fn method_name(m: ResolvedMethod) -> &'static str {
    match m {
        ResolvedMethod::CommutingSpectral => "commuting_spectral",
        ResolvedMethod::Spectral => "spectral",
        ResolvedMethod::Ode => "ode",
        ResolvedMethod::OdeFallback => "ode_fallback",
    }
}

fn linear_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|k| start + (end - start) * k as f64 / (n - 1) as f64)
        .collect()
}

fn log_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    let (a, b) = (start.ln(), end.ln());
    (0..n)
        .map(|k| match k {
            0 => start,
            k if k == n - 1 => end,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn quantum_sov(cfg: &RunConfig) -> Result<RunOutput> {
    let QuantumModel { spin, prop, a } = quantum_model(cfg)?;
    let gamma = cfg.float("gamma");
    let t_max = cfg.float("t_max");
    let n = cfg.usize("n_times");
    let times = match cfg.text("grid") {
        "log" => log_grid(cfg.float("t_min"), t_max, n),
        _ => linear_grid(0.0, t_max, n),
    };
    let sovs = exact_sov_series(&prop, &a, &times)?;
    let series = sov_eigensystem(&times, &sovs, DEFAULT_NEGATIVITY_TOL)?;
    let min = min_sov_state(&prop, &a, t_max, cfg.float("conv_tol"))?;

    let d = spin.dim();
    let mut columns: Vec<String> = vec!["t".into()];
    columns.extend((0..d).map(|k| format!("Lambda_{k}")));
    columns.push("minstate_expectation".into());
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut main = Table::new("quantum_sov", &cols);
    let mut proj = Table::new(
        "sov_projection",
        &[
            "t", "sov_1", "sov_x", "sov_y", "sov_z", "std_1", "std_x", "std_y", "std_z",
        ],
    );
    for (j, &t) in times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(series.eigvals[j].iter().map(|&v| Cell::from(v)));
        row.push(sovs[j].expectation(&min.state)?.into());
        main.push(row);
        let p = sov_projection(&sovs[j], spin)?;
        let mut prow: Vec<Cell> = vec![t.into()];
        prow.extend(p.sov.iter().chain(&p.std_dev).map(|z| Cell::from(z.re)));
        proj.push(prow);
    }

    let mut fits = Table::new(
        "transport_fits",
        &[
            "mode",
            "window",
            "t_start",
            "t_end",
            "alpha",
            "prefactor",
            "residual",
            "samples",
            "error",
        ],
    );
    for (label, window) in [("early", early_window(gamma)), ("mid", mid_window(gamma))] {
        for k in 0..d {
            let mut row: Vec<Cell> = vec![k.into(), label.into(), window.0.into(), window.1.into()];
            match transport_exponent_fit(&series, k, window) {
                Ok(f) => row.extend([
                    f.alpha.into(),
                    f.prefactor.into(),
                    f.residual.into(),
                    f.samples.into(),
                    Cell::Missing,
                ]),
                Err(e) => row.extend([
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    e.to_string().into(),
                ]),
            }
            fits.push(row);
        }
    }

    let mut summary = BTreeMap::new();
    summary.insert("propagation".into(), method_name(prop.method()).into());
    summary.insert("minstate_overlap".into(), min.overlap.into());
    summary.insert("minstate_lambda0".into(), min.lambda0.into());
    summary.insert("minstate_degenerate".into(), min.degenerate.into());
    summary.insert("degeneracy_warnings".into(), series.warnings.len().into());
    Ok(RunOutput {
        tables: vec![main, fits, proj],
        summary,
    })
}

/// Half-width of the finite-difference stencil for the SOV route to `C_t`.
const SOV_STENCIL: f64 = 1e-5;

fn otoc(cfg: &RunConfig) -> Result<RunOutput> {
    let QuantumModel { prop, a, .. } = quantum_model(cfg)?;
    let gamma = cfg.float("gamma");
    let norm = match cfg.text("normalization") {
        "per_dim" => Normalization::PerDim,
        _ => Normalization::Unnormalized,
    };
    let times = linear_grid(0.0, cfg.float("t_max"), cfg.usize("n_times"));
    let direct = dissipative_otoc(&prop, &a, &times, norm)?;
    let n = norm.factor(prop.dim());
    let l = prop.spec().jump().matrix();
    let model = dissipation_time(a.matrix(), l, gamma, n)?;
    let via_sov = if gamma > 0.0 {
        Some(otoc_from_sov_local(&prop, &a, &times, SOV_STENCIL, norm)?)
    } else {
        None
    };
    let mut table = Table::new("otoc", &["t", "C_t", "C0_exp_model", "C_t_sov"]);
    for (j, &t) in times.iter().enumerate() {
        let sov = via_sov.as_ref().map_or(Cell::Missing, |s| s.c[j].into());
        table.push(vec![
            t.into(),
            direct.c[j].into(),
            model.model(t).into(),
            sov,
        ]);
    }
    let mut summary = BTreeMap::new();
    summary.insert("propagation".into(), method_name(prop.method()).into());
    summary.insert("C0".into(), model.c0.into());
    summary.insert(
        "tau_D".into(),
        match model.tau_d {
            DissipationTime::Finite(t) => t.into(),
            DissipationTime::Infinite => "inf".into(),
        },
    );
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}

fn min_state(cfg: &RunConfig) -> Result<RunOutput> {
    let QuantumModel { spin, prop, a } = quantum_model(cfg)?;
    let min = min_sov_state(&prop, &a, cfg.float("t_max"), cfg.float("conv_tol"))?;
    let mut table = Table::new("min_state", &["index", "m", "re", "im", "probability"]);
    for (i, z) in min.state.iter().enumerate() {
        table.push(vec![
            i.into(),
            spin.m(i).into(),
            z.re.into(),
            z.im.into(),
            z.norm_sqr().into(),
        ]);
    }
    let mut summary = BTreeMap::new();
    summary.insert("overlap".into(), min.overlap.into());
    summary.insert("lambda0".into(), min.lambda0.into());
    summary.insert("degenerate".into(), min.degenerate.into());
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}

fn benettin_config(cfg: &RunConfig) -> BenettinConfig {
    BenettinConfig {
        x0: PhaseState::new(cfg.float("x0_q"), cfg.float("x0_p")),
        delta0: cfg.float("delta0"),
        renorm_interval: cfg.float("renorm"),
        transient: cfg.float("transient"),
        dt: cfg.float("dt"),
        t_total: cfg.float("t_max"),
        realizations: cfg.usize("realizations"),
        seed: cfg.seed(),
    }
}

fn estimate_row(e: &LyapunovEstimate) -> Vec<Cell> {
    vec![
        e.method.as_str().into(),
        e.value.into(),
        e.stderr.into(),
        e.realizations.into(),
        e.blowups.into(),
        e.reliable.into(),
        Cell::Missing,
    ]
}

fn classical_lyapunov(cfg: &RunConfig) -> Result<RunOutput> {
    let spec = ClassicalSpec::new(cfg.float("omega"), cfg.float("gamma"))?;
    let mut table = Table::new(
        "lyapunov",
        &[
            "method",
            "lambda",
            "stderr",
            "realizations",
            "n_blowups",
            "reliable",
            "error",
        ],
    );
    table.push(estimate_row(&lyapunov_van_kampen(&spec)));
    table.push(estimate_row(&lyapunov_benettin(
        &spec,
        &benettin_config(cfg),
    )?));

    let sov_cfg = ClassicalSovConfig {
        epsilon0: cfg.float("epsilon0"),
        m: cfg.usize("M"),
        dt: cfg.float("dt"),
        t_max: cfg.float("sov_t_max"),
        sample_every: cfg.usize("sample_every"),
        window: (cfg.float("window_start"), cfg.float("window_end")),
        seed: cfg.seed(),
        ..ClassicalSovConfig::default()
    };
    let mut tables = Vec::new();
    match lyapunov_from_classical_sov(&spec, &sov_cfg) {
        Ok(r) => {
            table.push(estimate_row(&r.estimate));
            let mut var = Table::new("classical_variance", &["t", "variance_Q"]);
            for (t, v) in r.times.iter().zip(&r.variance) {
                var.push(vec![(*t).into(), (*v).into()]);
            }
            tables.push(var);
        }
        Err(e @ (SovError::Inapplicable(_) | SovError::NonPositive { .. })) => {
            let mut row = vec![Cell::from("sov_otoc")];
            row.extend([
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
            ]);
            row.push(e.to_string().into());
            table.push(row);
        }
        Err(e) => return Err(e),
    }
    tables.insert(0, table);
    Ok(RunOutput {
        tables,
        summary: BTreeMap::new(),
    })
}

fn phase_diagram_run(cfg: &RunConfig) -> Result<RunOutput> {
    let pd = PhaseDiagramConfig {
        omegas: linear_grid(
            cfg.float("omega_min"),
            cfg.float("omega_max"),
            cfg.usize("omega_n"),
        ),
        gammas: linear_grid(
            cfg.float("gamma_min"),
            cfg.float("gamma_max"),
            cfg.usize("gamma_n"),
        ),
        benettin: benettin_config(cfg),
        base_seed: cfg.seed(),
    };
    let cells = phase_diagram(&pd)?;
    let mut table = Table::new(
        "phase_diagram",
        &[
            "omega",
            "gamma",
            "lambda",
            "stderr",
            "n_blowups",
            "reliable",
            "error",
        ],
    );
    let mut failed = 0usize;
    for c in &cells {
        let mut row: Vec<Cell> = vec![c.omega.into(), c.gamma.into()];
        match &c.result {
            Ok(e) => row.extend([
                e.value.into(),
                e.stderr.into(),
                e.blowups.into(),
                e.reliable.into(),
                Cell::Missing,
            ]),
            Err(err) => {
                failed += 1;
                let blowups = match err {
                    SovError::AllDiverged(n) => Cell::from(*n),
                    _ => Cell::Missing,
                };
                row.extend([
                    Cell::Missing,
                    Cell::Missing,
                    blowups,
                    false.into(),
                    err.to_string().into(),
                ]);
            }
        }
        table.push(row);
    }
    let mut summary = BTreeMap::new();
    summary.insert("cells".into(), cells.len().into());
    summary.insert("failed_cells".into(), failed.into());
    Ok(RunOutput {
        tables: vec![table],
        summary,
    })
}
