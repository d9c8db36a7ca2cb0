//! The five protocols behind the `nchns` binary.
//!
//! Each command writes `resolved.toml` and its artifacts into the output
//! directory and returns one [`CheckRecord`] per check; the run passes iff
//! every check passes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::adjoint::{run_adjoint, AdjointMode};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{cfl_bounds, Model};
use crate::io::{write_diagnostics, write_optimization_log, Checkpoint};
use crate::optimizer::{
    complementarity, duality_gap, project_box, projected_gradient_descent, taylor_test,
    OptimizerStatus,
};
use crate::physics::{validate_h2, validate_h3, HypothesisReport};
use crate::stencil::divergence_face_to_cc;
use crate::tangent::{run_tangent, tangent_taylor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    TangentCheck,
    GradientCheck,
    Optimize,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::TangentCheck => "tangent-check",
            Command::GradientCheck => "gradient-check",
            Command::Optimize => "optimize",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub passed: bool,
    pub value: f64,
    /// what `value` is compared against
    pub threshold: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckRecord {
    fn at_most(check: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn at_least(check: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            passed: value >= threshold,
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn flag(check: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail: detail.into(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// One line of the machine-readable failure stream.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub command: &'static str,
    pub check: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl FailureRecord {
    pub fn from_error(command: Command, e: &Error) -> Self {
        let check = match e {
            Error::Config { key, .. } => format!("config:{key}"),
            Error::Cfl { .. } => "cfl".into(),
            Error::HypothesisViolation(_) => "hypothesis".into(),
            _ => "run".into(),
        };
        Self {
            command: command.name(),
            check,
            message: e.to_string(),
            value: None,
            threshold: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("failure record serializes")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: Command,
    pub checks: Vec<CheckRecord>,
    pub artifacts: Vec<PathBuf>,
    /// command-specific report, also written as `report.json`
    pub report: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<FailureRecord> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| FailureRecord {
                command: self.command.name(),
                check: c.check.clone(),
                message: if c.detail.is_empty() {
                    format!("{} = {:e} against {:e}", c.check, c.value, c.threshold)
                } else {
                    c.detail.clone()
                },
                value: Some(c.value),
                threshold: Some(c.threshold),
            })
            .collect()
    }
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.output.dir.clone();
        fs::create_dir_all(&dir)?;
        let mut out = Output {
            dir,
            artifacts: Vec::new(),
        };
        out.text("resolved.toml", &cfg.to_toml_string())?;
        Ok(out)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.path(name), body)?;
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, c: &Checkpoint) -> Result<()> {
        let p = self.path(name);
        c.save(&p)
    }

    fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }
}

fn hypothesis_checks(prefix: &str, r: &HypothesisReport) -> Vec<CheckRecord> {
    r.checks
        .iter()
        .map(|c| {
            CheckRecord::at_least(format!("{prefix}: {}", c.name), c.worst_margin, 0.0).with_detail(
                if c.passed {
                    String::new()
                } else {
                    format!(
                        "{} fails at s = {} by {:e}",
                        c.name, c.worst_s, c.worst_margin
                    )
                },
            )
        })
        .collect()
}

/// Every validator that can run without a solve.
pub fn validation_checks(cfg: &RunConfig) -> Result<(Vec<CheckRecord>, serde_json::Value)> {
    let kernel = cfg.kernel()?;
    let constants = cfg.hypothesis_constants();
    let range = cfg.sample_range();
    let h2 = validate_h2(&cfg.potential, &kernel, &constants, range);
    let h3 = validate_h3(&cfg.viscosity, range);
    let adm = kernel.check_admissibility(cfg.hypotheses.admissibility_samples, cfg.seed);
    let a_min = kernel.a_field().min();

    let mut checks = hypothesis_checks("potential", &h2);
    checks.extend(hypothesis_checks("viscosity", &h3));
    checks.push(CheckRecord::at_least(
        "min a >= 1 + c1",
        a_min,
        1.0 + constants.c1,
    ));
    checks.push(CheckRecord::flag(
        "kernel admissibility",
        adm.passed(),
        adm.violations.join("; "),
    ));
    let grid = cfg.grid()?;
    let dt = cfg.scheme().dt;
    let (visc, _) = cfl_bounds(&grid, cfg.viscosity.upper, 0.0);
    checks.push(
        CheckRecord::at_most("viscous dt bound", dt, visc).with_detail(if dt > visc {
            format!(
                "dt = {dt:e} exceeds {visc:e}; suggested dt = {:e}",
                0.9 * visc
            )
        } else {
            String::new()
        }),
    );
    match cfg.initial_data() {
        Ok(_) => checks.push(CheckRecord::flag("initial data", true, "")),
        Err(e) => checks.push(CheckRecord::flag("initial data", false, e.to_string())),
    }
    let report = serde_json::json!({
        "potential": h2,
        "viscosity": h3,
        "admissibility": adm,
        "a_min": a_min,
        "dt": dt,
        "viscous_dt_bound": visc,
    });
    Ok((checks, report))
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Output::new(cfg)?;
    let (mut checks, validation) = validation_checks(cfg)?;
    let report = if checks.iter().all(|c| c.passed) {
        match cmd {
            Command::Validate => validation,
            Command::Simulate => simulate(cfg, &mut out, &mut checks)?,
            Command::TangentCheck => tangent_check(cfg, &mut out, &mut checks)?,
            Command::GradientCheck => gradient_check(cfg, &mut out, &mut checks)?,
            Command::Optimize => optimize(cfg, &mut out, &mut checks)?,
        }
    } else {
        // nothing is solved on a configuration that fails validation
        validation
    };
    let body = serde_json::json!({
        "command": cmd.name(),
        "passed": checks.iter().all(|c| c.passed),
        "checks": checks,
        "report": report,
    });
    out.text(
        "report.json",
        &serde_json::to_string_pretty(&body).expect("report serializes"),
    )?;
    Ok(Outcome {
        command: cmd,
        checks,
        artifacts: out.artifacts,
        report,
    })
}

fn conservation_checks(
    model: &Model,
    traj: &crate::forward::StateTrajectory,
) -> Result<Vec<CheckRecord>> {
    let rows = model.diagnostics(traj)?;
    let m0 = rows[0].mass;
    let drift = rows.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max)
        / m0.abs().max(model.grid.area());
    let div = rows.iter().map(|r| r.max_div).fold(0.0, f64::max);
    Ok(vec![
        CheckRecord::at_most("relative mass drift", drift, 1e-10),
        CheckRecord::at_most("max |div u|", div, 1e-9),
    ])
}

fn simulate(
    cfg: &RunConfig,
    out: &mut Output,
    checks: &mut Vec<CheckRecord>,
) -> Result<serde_json::Value> {
    let model = cfg.model()?;
    let init = cfg.initial_data()?;
    let v = cfg.build_control(&cfg.control, "control")?;
    let traj = model.run_forward(&v, &init)?;
    let rows = model.diagnostics(&traj)?;
    out.checkpoint("trajectory.bin", &Checkpoint::from_state(&traj))?;
    let mut w = out.writer("diagnostics.csv")?;
    write_diagnostics(&mut w, &rows)?;
    w.flush()?;
    checks.extend(conservation_checks(&model, &traj)?);
    let last = rows.last().expect("at least one level");
    Ok(serde_json::json!({
        "steps": traj.nt(),
        "final_time": model.scheme.final_time(),
        "final": last,
        "energy_initial": rows[0].total_energy(),
        "energy_final": last.total_energy(),
    }))
}

fn tangent_check(
    cfg: &RunConfig,
    out: &mut Output,
    checks: &mut Vec<CheckRecord>,
) -> Result<serde_json::Value> {
    let model = cfg.model()?;
    let init = cfg.initial_data()?;
    let v = cfg.build_control(&cfg.control, "control")?;
    let h = cfg.build_control(&cfg.checks.direction, "checks.direction")?;
    let rep = tangent_taylor(&model, &init, &v, &h, &cfg.checks.eps)?;
    let traj = model.run_forward(&v, &init)?;
    let tan = run_tangent(&model, &traj, &h)?;
    out.checkpoint(
        "tangent.bin",
        &Checkpoint::from_tangent(model.grid, model.dt(), &tan),
    )?;
    checks.push(CheckRecord::flag(
        "tangent remainder slope in [1.8, 2.2]",
        rep.passed,
        format!("slopes {:?}", rep.slopes),
    ));
    Ok(serde_json::to_value(&rep).expect("report serializes"))
}

fn gradient_check(
    cfg: &RunConfig,
    out: &mut Output,
    checks: &mut Vec<CheckRecord>,
) -> Result<serde_json::Value> {
    let problem = cfg.problem()?;
    let v = cfg.build_control(&cfg.control, "control")?;
    let h = cfg.build_control(&cfg.checks.direction, "checks.direction")?;
    let rep = taylor_test(&problem, &v, &h, &cfg.checks.eps, 1.0)?;
    let gap = duality_gap(&problem, &v, &h, AdjointMode::Continuous)?;
    let traj = problem.model.run_forward(&v, &problem.init)?;
    let adj = run_adjoint(
        &problem.model,
        &traj,
        &problem.targets,
        &problem.weights,
        AdjointMode::Discrete,
    )?;
    out.checkpoint(
        "adjoint.bin",
        &Checkpoint::from_adjoint(problem.model.grid, problem.dt(), &adj),
    )?;
    checks.push(CheckRecord::flag(
        "cost remainder slope in [1.8, 2.2]",
        rep.passed,
        format!("slopes {:?}", rep.slopes),
    ));
    if let Some(tol) = cfg.checks.gap_tol {
        checks.push(CheckRecord::at_most(
            "tangent/adjoint relative gap",
            gap.relative_gap,
            tol,
        ));
    }
    Ok(serde_json::json!({ "taylor": rep, "duality_gap": gap }))
}

fn optimize(
    cfg: &RunConfig,
    out: &mut Output,
    checks: &mut Vec<CheckRecord>,
) -> Result<serde_json::Value> {
    let problem = cfg.problem()?;
    let v0 = project_box(
        &cfg.build_control(&cfg.control, "control")?,
        &problem.bounds,
    );
    let st = projected_gradient_descent(&problem, &v0, &cfg.optimizer)?;
    let mut w = out.writer("optimization.csv")?;
    write_optimization_log(&mut w, &st.history)?;
    w.flush()?;
    let dt = problem.dt();
    out.checkpoint(
        "control.bin",
        &Checkpoint::from_control(problem.model.grid, dt, &st.v),
    )?;
    let traj = problem.evaluate(&st.v)?.trajectory;
    out.checkpoint("trajectory.bin", &Checkpoint::from_state(&traj))?;
    let mut w = out.writer("diagnostics.csv")?;
    write_diagnostics(&mut w, &problem.model.diagnostics(&traj)?)?;
    w.flush()?;

    let costs = st.costs();
    let monotone = costs.windows(2).all(|c| c[1] <= c[0]);
    let comp = complementarity(&st.v, &st.gradient, &problem.bounds);
    let control_div =
        st.v.iter()
            .map(|f| divergence_face_to_cc(f).max_abs())
            .fold(0.0, f64::max);
    checks.push(CheckRecord::flag(
        "line search",
        st.status != OptimizerStatus::LineSearchFailed,
        format!("{:?}", st.status),
    ));
    checks.push(CheckRecord::flag("monotone cost", monotone, ""));
    checks.push(CheckRecord::flag(
        "feasible iterate",
        problem.bounds.contains(&st.v),
        "",
    ));
    Ok(serde_json::json!({
        "status": st.status,
        "iterations": st.iterations,
        "initial_cost": costs[0],
        "final_cost": costs[costs.len() - 1],
        "final_kkt_residual": st.history[st.history.len() - 1].kkt_residual,
        "complementarity": comp,
        "control_max_divergence": control_div,
    }))
}

/// Reads `NCHNS_THREADS`; the solvers are sequential, so any positive cap
/// is honoured.
pub fn thread_cap() -> Result<Option<usize>> {
    parse_thread_cap(std::env::var("NCHNS_THREADS").ok().as_deref())
}

pub fn parse_thread_cap(value: Option<&str>) -> Result<Option<usize>> {
    match value {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(
                "NCHNS_THREADS",
                format!("expected a positive integer, got {s:?}"),
            )),
        },
    }
}

/// Loads a config and applies command-line overrides.
pub fn load_config(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(dir) = out {
        cfg.output.dir = dir.to_path_buf();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path, extra: &str) -> RunConfig {
        let text = format!(
            "[grid]\nnx = 16\nny = 16\nlx = 5.0\nly = 5.0\n[time]\nnt = 6\n[kernel]\nsigma = 0.6\n\
             [initial]\nsource = \"presets\"\nphase = {{ kind = \"bubble\", radius = 1.5, center = [2.5, 2.5], width = 0.4 }}\n\
             velocity = {{ kind = \"rest\" }}\n{extra}"
        );
        let mut c = RunConfig::from_toml_str(&text, dir).unwrap();
        c.output.dir = dir.join("out");
        c
    }

    #[test]
    fn validate_writes_echo_and_report() {
        let d = tempfile::tempdir().unwrap();
        let cfg = small(d.path(), "");
        let o = run(Command::Validate, &cfg).unwrap();
        assert!(o.passed(), "{:?}", o.failures());
        let echo = fs::read_to_string(d.path().join("out/resolved.toml")).unwrap();
        assert_eq!(RunConfig::from_toml_str(&echo, d.path()).unwrap(), cfg);
        let rep: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join("out/report.json")).unwrap())
                .unwrap();
        assert_eq!(rep["passed"], true);
    }

    #[test]
    fn failing_validation_skips_the_solve() {
        let d = tempfile::tempdir().unwrap();
        let cfg = small(d.path(), "[viscosity]\nlower = 0.6\n");
        let o = run(Command::Simulate, &cfg).unwrap();
        assert!(!o.passed());
        assert!(!d.path().join("out/trajectory.bin").exists());
        let f = o.failures();
        assert!(f.iter().any(|r| r.check.starts_with("viscosity")));
        let line = f[0].to_json_line();
        let back: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(back["command"], "simulate");
    }

    #[test]
    fn uniform_simulation_is_constant_and_deterministic() {
        let d = tempfile::tempdir().unwrap();
        let mut cfg = small(d.path(), "");
        cfg.initial = crate::config::InitialConfig::Presets {
            phase: crate::forward::PhasePreset::Uniform { value: 0.3 },
            velocity: crate::forward::VelocityPreset::Rest,
        };
        let o = run(Command::Simulate, &cfg).unwrap();
        assert!(o.passed(), "{:?}", o.failures());
        let csv1 = fs::read(d.path().join("out/diagnostics.csv")).unwrap();
        let bin1 = fs::read(d.path().join("out/trajectory.bin")).unwrap();
        let rows = crate::io::read_diagnostics(csv1.as_slice()).unwrap();
        // the CH solve is exact only to the linear-solver tolerance
        let tol = cfg.time.nt as f64 * cfg.time.tol_p;
        for r in &rows {
            assert!(
                (r.min_phi - 0.3).abs() < tol && (r.max_phi - 0.3).abs() < tol,
                "{r:?}"
            );
            assert!(r.max_u < 1e-14);
            assert!((r.free_energy - rows[0].free_energy).abs() <= tol * rows[0].free_energy.abs());
        }
        run(Command::Simulate, &cfg).unwrap();
        assert_eq!(
            fs::read(d.path().join("out/diagnostics.csv")).unwrap(),
            csv1
        );
        assert_eq!(fs::read(d.path().join("out/trajectory.bin")).unwrap(), bin1);
    }

    #[test]
    fn optimize_writes_log_and_control() {
        let d = tempfile::tempdir().unwrap();
        let cfg = small(d.path(), "[optimizer]\nmax_iter = 3\n");
        let o = run(Command::Optimize, &cfg).unwrap();
        assert!(o.passed(), "{:?}", o.failures());
        let log = fs::read_to_string(d.path().join("out/optimization.csv")).unwrap();
        assert!(log.starts_with("iter,J,grad_norm,kkt_residual,tau_accepted,armijo_shrinks\n"));
        assert_eq!(log.lines().count(), 5);
        let c = Checkpoint::load(&d.path().join("out/control.bin")).unwrap();
        assert_eq!(c.control().unwrap().len(), 6);
    }

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(parse_thread_cap(None).unwrap(), None);
        assert_eq!(parse_thread_cap(Some(" 4 ")).unwrap(), Some(4));
        for bad in ["0", "-1", "many", ""] {
            assert!(matches!(
                parse_thread_cap(Some(bad)),
                Err(Error::Config { .. })
            ));
        }
    }
}
