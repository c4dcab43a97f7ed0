//! Scenario orchestration: config → guess and target → optimization →
//! final propagation with observers → files.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::angular::{analytic_operator, cos_theta_matrix, AngularFunction, AngularOperator, Basis};
use crate::config::RunConfig;
use crate::dynamics::{propagate_ensemble, Ensemble, FieldTrace, Sampling, TimeGrid};
use crate::model::HamiltonianModel;
use crate::observables::{ensemble_alignment_split, jz_measure_from_populations, AlignmentSplit};
use crate::optim::{
    monotonicity_bound_check, optimize, BoundReport, IterationRecord, Method, Objective, Problem, RunResult,
    StopReason,
};
use crate::output::{self, CsvTable};
use crate::targets::{resolve, ThermalTargetReport};
use crate::{Error, Result, C64};

/// Presets shipped with the crate, addressable by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("orientation_krotov", include_str!("../presets/orientation_krotov.toml")),
    ("orientation_quartic", include_str!("../presets/orientation_quartic.toml")),
    ("penalty_scan_krotov", include_str!("../presets/penalty_scan_krotov.toml")),
    ("penalty_scan_quartic", include_str!("../presets/penalty_scan_quartic.toml")),
    ("delocalization_krotov", include_str!("../presets/delocalization_krotov.toml")),
    ("delocalization_quartic", include_str!("../presets/delocalization_quartic.toml")),
    ("thermal_krotov", include_str!("../presets/thermal_krotov.toml")),
    ("thermal_quartic", include_str!("../presets/thermal_quartic.toml")),
];

pub fn preset(name: &str) -> Result<RunConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
    RunConfig::parse(text).map_err(|e| Error::Scenario {
        scenario: name.to_string(),
        source: Box::new(e),
    })
}

/// Observables of the final state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalObservables {
    pub cos_theta: f64,
    pub alignment: AlignmentSplit,
    /// ⟨J_z⟩/√⟨J²⟩; absent when ⟨J²⟩ vanishes.
    pub jz_measure: Option<f64>,
}

/// Permanent alignment over one field-free period after the pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostPulse {
    pub cos2_permanent: f64,
    /// max − min of ⟨cos²θ⟩_p over the field-free window.
    pub cos2_permanent_drift: f64,
    pub cos2_total_min: f64,
    pub cos2_total_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub config: RunConfig,
    pub method: Method,
    pub lambda_au: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub guess_fidelity: f64,
    pub final_fidelity: f64,
    pub max_abs_field_au: f64,
    pub monotone: bool,
    pub fallback_events: usize,
    pub fallback_fraction: f64,
    pub held_steps: usize,
    /// Initial-ensemble weight kept after the population cutoff.
    pub kept_weight: f64,
    pub ensemble_members: usize,
    /// max over members of |‖ψ(t_f)‖ − 1|; grows when population reaches
    /// the basis edge.
    pub final_norm_deviation: f64,
    pub final_observables: FinalObservables,
    pub post_pulse: PostPulse,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotonicity_bound: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal_target: Option<ThermalTargetReport>,
    /// Files written, relative to the run directory.
    pub files: Vec<String>,
    pub convergence_table: String,
    pub wall_time_s: f64,
}

/// Everything a finished scenario produced.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub summary: RunSummary,
    pub result: RunResult,
    pub grid: TimeGrid,
}

impl ScenarioRun {
    pub fn records(&self) -> &[IterationRecord] {
        &self.result.records
    }
}

/// Operators sampled along a trajectory.
struct Observers {
    basis: Basis,
    cos: AngularOperator,
    cos2: AngularOperator,
}

impl Observers {
    fn new(basis: &Basis) -> Result<Self> {
        Ok(Observers {
            basis: basis.clone(),
            cos: cos_theta_matrix(basis),
            cos2: analytic_operator(basis, AngularFunction::Cos2Theta)?,
        })
    }

    fn measure(&self, ens: &Ensemble) -> FinalObservables {
        let pops = ens.populations();
        FinalObservables {
            cos_theta: ens.expectation(&self.cos),
            alignment: ensemble_alignment_split(ens, &self.basis, &self.cos2),
            jz_measure: jz_measure_from_populations(&pops, &self.basis).ok(),
        }
    }

    fn row(&self, t: f64, ens: &Ensemble) -> Vec<f64> {
        let o = self.measure(ens);
        let mut row = vec![t, crate::units::UNITS.au_to_fs(t)];
        row.extend(ens.populations());
        row.extend([
            o.cos_theta,
            o.alignment.total,
            o.alignment.permanent,
            o.alignment.coherent,
            o.jz_measure.unwrap_or(f64::NAN),
        ]);
        row
    }
}

fn scenario_err(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Scenario {
        scenario: name.to_string(),
        source: Box::new(e),
    }
}

/// Run one configuration. Files go to `out_dir` when given.
pub fn run_scenario(
    cfg: &RunConfig,
    out_dir: Option<&Path>,
    on_iteration: &mut dyn FnMut(&IterationRecord),
) -> Result<ScenarioRun> {
    run_inner(cfg, out_dir, on_iteration).map_err(scenario_err(&cfg.name))
}

fn run_inner(
    cfg: &RunConfig,
    out_dir: Option<&Path>,
    on_iteration: &mut dyn FnMut(&IterationRecord),
) -> Result<ScenarioRun> {
    let start = std::time::Instant::now();
    cfg.validate()?;
    let params = cfg.params()?;
    let model = cfg.build_model(&params)?;
    let basis = model.basis().clone();
    let grid = cfg.grid(&params)?;
    let task = resolve(&cfg.task.target_spec(), &basis, &params)?;
    let initial = Ensemble::from_state(&task.initial, cfg.optimizer.population_cutoff);
    let kept_weight = initial.total_weight();
    let ensemble_members = initial.len();
    let problem = Problem::new(&model, grid.clone(), initial.clone(), Objective::new(&task.target)?)?;
    let guess = cfg.guess_field(&params, &grid)?;
    let settings = cfg.optimizer.settings()?;
    let result = optimize(&problem, &guess, &settings, on_iteration)?;

    let observers = Observers::new(&basis)?;
    let stride = cfg.output.stride;
    let mut dynamics = CsvTable::new(&output::dynamics_header(&basis));
    let mut finals = initial;
    propagate_ensemble(&mut finals, &model, &result.field, &grid, Sampling::every(stride), &mut |_, t, ens| {
        dynamics.numbers(&observers.row(t, ens));
    })?;
    let final_observables = observers.measure(&finals);
    let final_norm_deviation = finals
        .members
        .iter()
        .map(|v| (crate::dynamics::norm(v) - 1.0).abs())
        .fold(0.0, f64::max);
    let post_pulse = field_free_window(&model, &grid, &finals, &observers, cfg.time.t_final_tper)?;

    let monotonicity_bound = match settings.method {
        Method::Krotov => Some(monotonicity_bound_check(&model, &settings.cost, &result.field, &grid)?),
        Method::Quartic => None,
    };
    let records = &result.records;
    let convergence = output::convergence_table(records);
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        convergence.write(&dir.join(output::CONVERGENCE_FILE))?;
        files.push(output::CONVERGENCE_FILE.to_string());
        for (c, name) in model.kind().channel_names().iter().enumerate() {
            let file = format!("field_{name}.csv");
            output::field_table(&grid, &result.guess, &result.field, c).write(&dir.join(&file))?;
            files.push(file);
        }
        dynamics.write(&dir.join(output::DYNAMICS_FILE))?;
        files.push(output::DYNAMICS_FILE.to_string());
        files.push(output::SUMMARY_FILE.to_string());
    }
    let summary = RunSummary {
        name: cfg.name.clone(),
        config: cfg.clone(),
        method: settings.method,
        lambda_au: settings.cost.lambda,
        iterations: records.len() - 1,
        stop: result.stop,
        guess_fidelity: records[0].fidelity,
        final_fidelity: result.final_fidelity(),
        max_abs_field_au: result.field.max_abs(),
        monotone: result.is_monotone(),
        fallback_events: records.iter().map(|r| r.fallback_events).sum(),
        fallback_fraction: result.fallback_fraction(),
        held_steps: records.iter().map(|r| r.held_steps).sum(),
        kept_weight,
        ensemble_members,
        final_norm_deviation,
        final_observables,
        post_pulse,
        monotonicity_bound,
        thermal_target: task.thermal_report,
        files,
        convergence_table: output::CONVERGENCE_FILE.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        output::write_json(&dir.join(output::SUMMARY_FILE), &summary)?;
    }
    Ok(ScenarioRun { summary, result, grid })
}

/// Propagate field-free for one rotational period (as many steps as the
/// control grid has per period) and track the alignment split.
fn field_free_window(
    model: &HamiltonianModel,
    grid: &TimeGrid,
    finals: &Ensemble,
    observers: &Observers,
    t_final_tper: f64,
) -> Result<PostPulse> {
    let t_per = model.params().rotational_period();
    let n = ((grid.n_steps() as f64 / t_final_tper).round() as usize).max(1);
    let free_grid = TimeGrid::new(t_per, n)?;
    let zero = FieldTrace::zeros(model.channels(), n);
    let mut ens = finals.clone();
    let mut perm = (f64::INFINITY, f64::NEG_INFINITY);
    let mut total = (f64::INFINITY, f64::NEG_INFINITY);
    let sampling = Sampling::every((n / 64).max(1));
    propagate_ensemble(&mut ens, model, &zero, &free_grid, sampling, &mut |_, _, e| {
        let s = ensemble_alignment_split(e, &observers.basis, &observers.cos2);
        perm = (perm.0.min(s.permanent), perm.1.max(s.permanent));
        total = (total.0.min(s.total), total.1.max(s.total));
    })?;
    Ok(PostPulse {
        cos2_permanent: ensemble_alignment_split(finals, &observers.basis, &observers.cos2).permanent,
        cos2_permanent_drift: perm.1 - perm.0,
        cos2_total_min: total.0,
        cos2_total_max: total.1,
    })
}

/// The single runs a configuration stands for: itself, or one run per
/// scan weight writing to `<out>/lambda_<λ>`.
pub fn expand_scan(cfg: &RunConfig, out_dir: Option<&Path>) -> Vec<(RunConfig, Option<PathBuf>)> {
    let Some(scan) = &cfg.scan else {
        return vec![(cfg.clone(), out_dir.map(Path::to_path_buf))];
    };
    scan.lambdas
        .iter()
        .map(|&l| {
            let mut single = cfg.clone();
            single.scan = None;
            single.optimizer.lambda = l;
            single.name = format!("{}_lambda_{:e}", cfg.name, l);
            (single, out_dir.map(|d| d.join(format!("lambda_{:e}", l))))
        })
        .collect()
}

/// Run every expanded configuration, spreading them over up to `threads`
/// worker threads. Results keep the scan order.
pub fn run_batch(
    cfg: &RunConfig,
    out_dir: Option<&Path>,
    threads: usize,
    on_iteration: &(dyn Fn(&str, &IterationRecord) + Sync),
) -> Result<Vec<ScenarioRun>> {
    let jobs = expand_scan(cfg, out_dir);
    let run_one = |(c, d): &(RunConfig, Option<PathBuf>)| {
        run_scenario(c, d.as_deref(), &mut |r| on_iteration(&c.name, r))
    };
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(run_one).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<ScenarioRun>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = run_one(&jobs[i]);
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

/// Field-free revival: ‖ψ(T_per) − ψ(0)‖ for the ground state plus a
/// superposition of low rotor states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RevivalCheck {
    pub n_steps: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const REVIVAL_TOL: f64 = 1e-8;

pub fn revival_check(model: &HamiltonianModel, n_steps: usize) -> Result<RevivalCheck> {
    let basis = model.basis();
    let grid = TimeGrid::new(model.params().rotational_period(), n_steps)?;
    let zero = FieldTrace::zeros(model.channels(), n_steps);
    let dim = basis.dim();
    let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let spread: Vec<C64> = (0..dim)
        .map(|i| amp * C64::from_polar(1.0, 0.37 * i as f64))
        .collect();
    let mut ground = vec![C64::new(0.0, 0.0); dim];
    ground[0] = C64::new(1.0, 0.0);
    let mut max_error = 0.0f64;
    for psi0 in [spread, ground] {
        let psi = crate::dynamics::propagate(&psi0, model, &zero, &grid, Sampling::every(usize::MAX), &mut |_, _, _| {})?;
        let err = psi.iter().zip(&psi0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        max_error = max_error.max(err);
    }
    Ok(RevivalCheck {
        n_steps,
        max_error,
        tolerance: REVIVAL_TOL,
        passed: max_error < REVIVAL_TOL,
    })
}

/// Propagate the configured initial state under the guess field (or zero
/// field) without optimizing; writes dynamics.csv when `out_dir` is given.
pub fn run_propagation(cfg: &RunConfig, zero_field: bool, out_dir: Option<&Path>) -> Result<FinalObservables> {
    let inner = || -> Result<FinalObservables> {
        let params = cfg.params()?;
        let model = cfg.build_model(&params)?;
        let basis = model.basis().clone();
        let grid = cfg.grid(&params)?;
        let task = resolve(&cfg.task.target_spec(), &basis, &params)?;
        let field = if zero_field {
            FieldTrace::zeros(model.channels(), grid.n_steps())
        } else {
            cfg.guess_field(&params, &grid)?
        };
        let observers = Observers::new(&basis)?;
        let mut table = CsvTable::new(&output::dynamics_header(&basis));
        let mut ens = Ensemble::from_state(&task.initial, cfg.optimizer.population_cutoff);
        propagate_ensemble(&mut ens, &model, &field, &grid, Sampling::every(cfg.output.stride), &mut |_, t, e| {
            table.numbers(&observers.row(t, e));
        })?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            table.write(&dir.join(output::DYNAMICS_FILE))?;
        }
        Ok(observers.measure(&ens))
    };
    inner().map_err(scenario_err(&cfg.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::BasisKind;
    use crate::model::{hamiltonian_xy, MoleculeParams};

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(&cfg.name, name);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn scan_expands_in_order() {
        let cfg = preset("penalty_scan_quartic").unwrap();
        let jobs = expand_scan(&cfg, Some(Path::new("out")));
        let lambdas: Vec<f64> = jobs.iter().map(|(c, _)| c.optimizer.lambda).collect();
        assert_eq!(lambdas, vec![5e6, 5e4, 5e2]);
        assert!(jobs.iter().all(|(c, d)| c.scan.is_none() && d.is_some()));
        assert_eq!(expand_scan(&preset("orientation_quartic").unwrap(), None).len(), 1);
    }

    #[test]
    fn revival_holds_for_elliptic_model() {
        let b = Basis::new(4, BasisKind::Full).unwrap();
        let m = hamiltonian_xy(&MoleculeParams::carbon_monoxide(), &b, 0.3).unwrap();
        let r = revival_check(&m, 64).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn short_run_writes_consistent_files() {
        let mut cfg = preset("orientation_krotov").unwrap();
        cfg.basis.j_max = 6;
        cfg.time.n_steps = 256;
        cfg.optimizer.iterations = 2;
        cfg.output.stride = 64;
        let dir = std::env::temp_dir().join(format!("rotctl-scenario-{}", std::process::id()));
        let run = run_scenario(&cfg, Some(&dir), &mut |_| {}).unwrap();
        let conv = std::fs::read_to_string(dir.join(output::CONVERGENCE_FILE)).unwrap();
        assert_eq!(conv.lines().count(), 1 + run.summary.iterations + 1);
        let last = conv.lines().last().unwrap();
        let f: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(f, run.summary.final_fidelity);
        let dynamics = std::fs::read_to_string(dir.join(output::DYNAMICS_FILE)).unwrap();
        assert_eq!(dynamics.lines().count(), 1 + 256 / 64 + 1);
        let field = std::fs::read_to_string(dir.join("field_z.csv")).unwrap();
        assert_eq!(field.lines().count(), 1 + 256);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(output::SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(summary["iterations"], run.summary.iterations);
        std::fs::remove_dir_all(&dir).ok();
    }
}
