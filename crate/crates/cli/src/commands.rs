//! The five subcommands. Each writes its files plus `manifest.json` into the output directory.

use std::path::{Path, PathBuf};

use cavfield_core::forward::{check_state_bounds, cut_cell_weights, solve_hole_limit};
use cavfield_core::geometry::rasterize_cavity;
use cavfield_core::io::{curve_csv, polylines_csv, vtk_legacy, write_text};
use cavfield_core::metrics::{hausdorff, symmetric_difference_area, tv_perimeter, SetOnMesh};
use cavfield_core::optimizer::{delta_sweep, minimize_fixed_epsilon, run_continuation, ContinuationResult, StageReport};
use cavfield_core::{
    generate_measurement, solve_cavity_reference, solve_state, Error, MeasurementTrace, PhaseField, ReducedFunctional,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Setup, SolverConfig};
use crate::error::CliError;
use crate::suite::run_suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Synth,
    Invert,
    Sweep,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Synth => "synth",
            Command::Invert => "invert",
            Command::Sweep => "sweep",
            Command::Check => "check",
        }
    }
}

/// Command-line inputs besides the config.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub meas: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub param: Option<String>,
    pub values: Option<Vec<f64>>,
    pub allow_inverse_crime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub mesh_ids: Vec<String>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

/// Files written by a command, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Self { dir, written: Vec::new() }
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        write_text(&self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.put(name, &(text + "\n"))
    }
}

pub fn run(command: Command, cfg: &SolverConfig, args: &RunArgs) -> Result<Outcome, CliError> {
    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let mut w = Writer::new(out_dir.clone());
    let mut manifest = Manifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        mesh_ids: Vec::new(),
        seeds: vec![cfg.seed],
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let result = match command {
        Command::Forward => forward(cfg, &mut w, &mut manifest),
        Command::Synth => synth(cfg, &mut w, &mut manifest),
        Command::Invert => invert(cfg, args, &mut w, &mut manifest),
        Command::Sweep => sweep(cfg, args, &mut w, &mut manifest),
        Command::Check => check(cfg, &mut w, &mut manifest),
    };
    // The manifest is written even when a check fails, so failed runs stay reproducible.
    let finish = |w: &mut Writer, manifest: &mut Manifest| -> Result<(), CliError> {
        manifest.outputs = w.written.clone();
        manifest.outputs.push("manifest.json".into());
        w.json("manifest.json", manifest)
    };
    match result {
        Ok(()) => {
            finish(&mut w, &mut manifest)?;
            Ok(Outcome { out_dir, manifest })
        }
        Err(e @ CliError::CheckFailed(_)) => {
            finish(&mut w, &mut manifest)?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn forward(cfg: &SolverConfig, w: &mut Writer, manifest: &mut Manifest) -> Result<(), CliError> {
    let Setup { disc, f } = cfg.setup(1)?;
    manifest.mesh_ids.push(disc.mesh().id().into());
    let shape = cfg.shape()?;
    let weights = cut_cell_weights(disc.mesh(), &shape);
    let state = solve_cavity_reference(&disc, &shape, &f, &cfg.newton())?;
    let bounds = check_state_bounds(&disc, &weights, &state, &f, cfg.bound_slack);
    let phase = rasterize_cavity(disc.mesh(), disc.labels(), &shape)?;
    w.put("state.vtk", &vtk_legacy(disc.mesh(), "cavfield forward", &[("u", &state.u), ("v", phase.values())])?)?;
    let trace: Vec<(f64, f64)> = disc.labels().sigma_arc.iter().copied().zip(state.trace(&disc)).collect();
    w.put("trace.csv", &curve_csv(["s", "value"], &trace))?;
    w.json(
        "report.json",
        &json!({
            "case": cfg.case,
            "newton_iters": state.newton_iters,
            "residual_norm": state.residual_norm,
            "load_norm": state.load_norm,
            "energy": state.energy,
            "u_min": state.min(),
            "u_max": state.max(),
            "bounds": bounds,
        }),
    )
}

fn synth(cfg: &SolverConfig, w: &mut Writer, manifest: &mut Manifest) -> Result<(), CliError> {
    let coarse = cfg.setup(1)?;
    let fine = cfg.setup(cfg.synth_factor)?;
    manifest.mesh_ids = vec![coarse.disc.mesh().id().into(), fine.disc.mesh().id().into()];
    let trace = generate_measurement(&fine.disc, &fine.f, &coarse.disc, &cfg.shape()?, &cfg.newton(), cfg.eta, cfg.seed)?;
    w.put("meas.csv", &trace.to_csv())?;
    w.put("meas.json", &(trace.sidecar_json()? + "\n"))
}

/// Path of the JSON sidecar that belongs to a trace CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn read_measurement(path: &Path) -> Result<MeasurementTrace<f64>, CliError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())));
    let csv = read(path)?;
    let sidecar = read(&sidecar_path(path))?;
    Ok(MeasurementTrace::from_csv(&csv, &sidecar)?)
}

/// Reconstruction report with truth metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvertReport {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub stages: Vec<StageSummary>,
    pub recovered_area: f64,
    pub recovered_perimeter: f64,
    pub truth: Option<TruthMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub epsilon: f64,
    pub initial_j: f64,
    pub final_j: f64,
    pub misfit: f64,
    pub gl: f64,
    pub interface_width: Option<f64>,
    pub iterations: usize,
    pub stop: Value,
    pub strict_decrease_fraction: f64,
}

impl From<&StageReport> for StageSummary {
    fn from(s: &StageReport) -> Self {
        Self {
            epsilon: s.epsilon,
            initial_j: s.initial_j,
            final_j: s.final_j,
            misfit: s.misfit,
            gl: s.gl,
            interface_width: s.interface_width,
            iterations: s.history.records.len() - 1,
            stop: serde_json::to_value(s.history.stop).expect("stop reason serializes"),
            strict_decrease_fraction: s.history.strict_decrease_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthMetrics {
    pub case: String,
    pub true_area: f64,
    pub symmetric_difference: f64,
    /// Symmetric difference over the true area; `None` for the empty case.
    pub symmetric_difference_ratio: Option<f64>,
    pub hausdorff: f64,
    pub true_perimeter: f64,
}

/// Continuation run from `v ≡ 1` on the reconstruction mesh of `setup`.
pub fn reconstruct(
    cfg: &SolverConfig,
    setup: &Setup,
    meas: &[f64],
) -> Result<(ContinuationResult<f64>, InvertReport), CliError> {
    let schedule = cfg.schedule()?;
    let func = ReducedFunctional::new(&setup.disc, &setup.f, meas, schedule.stage_params(0), cfg.newton())?;
    let v0 = PhaseField::uniform(setup.disc.labels(), 1.0)?;
    let result = run_continuation(&func, &schedule, &v0, &cfg.optimizer())?;
    let report = invert_report(cfg, setup, &result, Some(&cfg.case))?;
    Ok((result, report))
}

fn invert_report(
    cfg: &SolverConfig,
    setup: &Setup,
    result: &ContinuationResult<f64>,
    truth_case: Option<&str>,
) -> Result<InvertReport, CliError> {
    let mesh = setup.disc.mesh();
    let rec = SetOnMesh::from_phase(mesh, result.v.values());
    let truth = match truth_case {
        Some(case) => {
            let shape = cavfield_core::synth::catalog_case::<f64>(case)?;
            let t = SetOnMesh::from_shape(mesh, &shape);
            let area = t.area(mesh);
            let sd = symmetric_difference_area(mesh, &rec, &t);
            Some(TruthMetrics {
                case: case.into(),
                true_area: area,
                symmetric_difference: sd,
                symmetric_difference_ratio: (area > 0.0).then(|| sd / area),
                hausdorff: hausdorff(mesh, &rec, &t),
                true_perimeter: tv_perimeter(mesh, &t),
            })
        }
        None => None,
    };
    Ok(InvertReport {
        alpha: cfg.alpha()?,
        delta: cfg.delta,
        gamma: cfg.gamma(),
        stages: result.stages.iter().map(StageSummary::from).collect(),
        recovered_area: rec.area(mesh),
        recovered_perimeter: tv_perimeter(mesh, &rec),
        truth,
    })
}

/// JSON-lines history of all stages; each record carries its stage index.
pub fn history_jsonl(result: &ContinuationResult<f64>) -> String {
    let mut out = String::new();
    for (k, stage) in result.stages.iter().enumerate() {
        for r in &stage.history.records {
            let mut v = serde_json::to_value(r).expect("record serializes");
            v["stage"] = json!(k);
            v["epsilon"] = json!(stage.epsilon);
            out.push_str(&serde_json::to_string(&v).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

fn invert(cfg: &SolverConfig, args: &RunArgs, w: &mut Writer, manifest: &mut Manifest) -> Result<(), CliError> {
    let path = args
        .meas
        .as_ref()
        .ok_or_else(|| CliError::Validation("invert needs --meas PATH".into()))?;
    let trace = read_measurement(path)?;
    let setup = cfg.setup(1)?;
    let mesh_id = setup.disc.mesh().id().to_string();
    trace.guard_inverse_crime(&mesh_id, args.allow_inverse_crime)?;
    trace.check_matches(&setup.disc)?;
    manifest.mesh_ids = vec![mesh_id, trace.meta.fine_mesh_id.clone()];
    manifest.seeds.push(trace.meta.seed);
    manifest.inputs.push(path.display().to_string());

    let (result, report) = reconstruct(cfg, &setup, &trace.values)?;
    let state = solve_state(&setup.disc, result.v.values(), cfg.delta, &setup.f, &cfg.newton())?;
    let mesh = setup.disc.mesh();
    w.put("phase.vtk", &vtk_legacy(mesh, "cavfield invert", &[("v", result.v.values()), ("u", &state.u)])?)?;
    let rec = SetOnMesh::from_phase(mesh, result.v.values());
    w.put("recovered.csv", &polylines_csv(&rec.polylines(mesh)))?;
    w.put("history.jsonl", &history_jsonl(&result))?;
    w.json("report.json", &report)
}

fn parse_param(args: &RunArgs) -> Result<(String, Vec<f64>), CliError> {
    let param = args
        .param
        .clone()
        .ok_or_else(|| CliError::Validation("sweep needs --param NAME".into()))?;
    let values = args
        .values
        .clone()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| CliError::Validation("sweep needs --values LIST".into()))?;
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(CliError::Validation("sweep values must be positive".into()));
    }
    Ok((param, values))
}

/// Runs one job per value on its own thread; results keep the input order.
fn fan_out<R: Send>(values: &[f64], job: impl Fn(f64) -> Result<R, CliError> + Sync) -> Result<Vec<R>, CliError> {
    std::thread::scope(|s| {
        let job = &job;
        let handles: Vec<_> = values.iter().map(|&x| s.spawn(move || job(x))).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| CliError::Io("sweep worker panicked".into()))?)
            .collect()
    })
}

fn sweep(cfg: &SolverConfig, args: &RunArgs, w: &mut Writer, manifest: &mut Manifest) -> Result<(), CliError> {
    let (param, values) = parse_param(args)?;
    let setup = cfg.setup(1)?;
    let disc = &setup.disc;
    manifest.mesh_ids.push(disc.mesh().id().into());
    let shape = cfg.shape()?;
    match param.as_str() {
        "delta" => {
            if values.iter().any(|&d| d > 1.0) {
                return Err(CliError::Validation("delta values must lie in (0, 1]".into()));
            }
            let v = rasterize_cavity(disc.mesh(), disc.labels(), &shape)?;
            let reference = solve_hole_limit(disc, v.values(), &setup.f, &cfg.newton())?.trace(disc);
            let report = delta_sweep(disc, &setup.f, &v, &values, &reference, &cfg.newton())?;
            let rows: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.delta, r.trace_error)).collect();
            w.put("sweep_delta.csv", &curve_csv(["delta", "trace_error"], &rows))?;
            w.json("report.json", &report)
        }
        "epsilon" | "alpha" => {
            let fine = cfg.setup(cfg.synth_factor)?;
            manifest.mesh_ids.push(fine.disc.mesh().id().into());
            let meas = generate_measurement(&fine.disc, &fine.f, disc, &shape, &cfg.newton(), cfg.eta, cfg.seed)?;
            let rows: Vec<Value> = if param == "epsilon" {
                let min_eps = 2.0 * cfg.cell_size();
                if values.iter().any(|&e| e < min_eps * (1.0 - 1e-9)) {
                    return Err(CliError::Validation(format!("epsilon values must be at least {min_eps}")));
                }
                fan_out(&values, |eps| {
                    let schedule = cfg.schedule_with(vec![eps])?;
                    let func = ReducedFunctional::new(disc, &setup.f, &meas.values, schedule.stage_params(0), cfg.newton())?;
                    let v0 = PhaseField::uniform(disc.labels(), 1.0)?;
                    let (v, history) = minimize_fixed_epsilon(&func, &v0, &cfg.optimizer())?;
                    let rec = SetOnMesh::from_phase(disc.mesh(), v.values());
                    let last = history.records.last().expect("history has the initial record");
                    Ok(json!({
                        "epsilon": eps,
                        "interface_width": cavfield_core::metrics::interface_width(disc.mesh(), v.values()),
                        "final_j": last.j,
                        "gl": last.gl,
                        "staircase_perimeter": tv_perimeter(disc.mesh(), &rec),
                    }))
                })?
            } else {
                fan_out(&values, |alpha| {
                    let mut c = cfg.clone();
                    c.alpha = Some(alpha);
                    let (_, report) = reconstruct(&c, &setup, &meas.values)?;
                    let truth = report.truth.as_ref().expect("truth metrics present");
                    Ok(json!({
                        "alpha": alpha,
                        "symmetric_difference": truth.symmetric_difference,
                        "hausdorff": truth.hausdorff,
                        "recovered_area": report.recovered_area,
                        "final_j": report.stages.last().map(|s| s.final_j),
                    }))
                })?
            };
            let key = if param == "epsilon" { "interface_width" } else { "symmetric_difference" };
            let csv_rows: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| (r[param.as_str()].as_f64().unwrap_or(f64::NAN), r[key].as_f64().unwrap_or(f64::NAN)))
                .collect();
            w.put(&format!("sweep_{param}.csv"), &curve_csv([param.as_str(), key], &csv_rows))?;
            w.json("report.json", &json!({ "param": param, "rows": rows }))
        }
        other => Err(CliError::Validation(format!(
            "unknown sweep parameter '{other}' (expected delta, epsilon or alpha)"
        ))),
    }
}

fn check(cfg: &SolverConfig, w: &mut Writer, manifest: &mut Manifest) -> Result<(), CliError> {
    let report = run_suite(cfg).map_err(|e| match e {
        Error::NoConvergence { .. } | Error::NotSpd(_) | Error::DisconnectedDomain { .. } => CliError::from(e),
        other => CliError::CheckFailed(other.to_string()),
    })?;
    manifest.mesh_ids.push(report.mesh_id.clone());
    w.json("check_report.json", &report)?;
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
