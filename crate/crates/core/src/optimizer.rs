//! Tracking-type control problem: cost, reduced gradient, box projection and
//! projected gradient descent.
//!
//! Controls are piecewise constant in time, one face field per step; the
//! space-time inner product is `dt * sum_k (a_k, b_k)`. Tracking terms are
//! evaluated at the step ends `k = 1..nt` and the control cost at the step
//! starts `k = 0..nt-1`.

use serde::{Deserialize, Serialize};

use crate::adjoint::{adjoint_pairing, run_adjoint, AdjointMode, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::forward::{Control, InitialData, Model, StateTrajectory};
use crate::grid::{Grid2D, ScalarField, VectorField};
use crate::stencil::divergence_face_to_cc;
use crate::tangent::{run_tangent, TangentTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub gamma: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: 1.0,
            beta3: 0.0,
            beta4: 0.0,
            gamma: 1e-3,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.beta1, self.beta2, self.beta3, self.beta4, self.gamma];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config(
                "weights",
                "weights must be finite and nonnegative",
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::config("weights", "weights must not all vanish"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Targets {
    /// `nt + 1` entries; entry 0 is never used
    pub u_q: Vec<VectorField>,
    pub phi_q: Vec<ScalarField>,
    pub u_omega: VectorField,
    pub phi_omega: ScalarField,
}

impl Targets {
    pub fn zeros(grid: Grid2D, nt: usize) -> Self {
        Self {
            u_q: vec![VectorField::zeros(grid); nt + 1],
            phi_q: vec![ScalarField::zeros(grid); nt + 1],
            u_omega: VectorField::zeros(grid),
            phi_omega: ScalarField::zeros(grid),
        }
    }

    /// Targets reproduced exactly by `traj`.
    pub fn from_trajectory(traj: &StateTrajectory) -> Self {
        Self {
            u_q: traj.u.clone(),
            phi_q: traj.phi.clone(),
            u_omega: traj.u[traj.nt()].clone(),
            phi_omega: traj.phi[traj.nt()].clone(),
        }
    }

    pub fn check(&self, grid: Grid2D, nt: usize) -> Result<()> {
        for (what, len) in [("u_q", self.u_q.len()), ("phi_q", self.phi_q.len())] {
            if len != nt + 1 {
                return Err(Error::LengthMismatch {
                    what: if what == "u_q" {
                        "velocity targets"
                    } else {
                        "phase targets"
                    },
                    expected: nt + 1,
                    got: len,
                });
            }
        }
        for u in self.u_q.iter().chain(std::iter::once(&self.u_omega)) {
            grid.check_same(&u.grid)?;
        }
        for p in self.phi_q.iter().chain(std::iter::once(&self.phi_omega)) {
            grid.check_same(&p.grid)?;
        }
        Ok(())
    }

    /// Largest cell divergence among the velocity targets.
    pub fn max_divergence(&self) -> f64 {
        self.u_q
            .iter()
            .chain(std::iter::once(&self.u_omega))
            .map(|u| divergence_face_to_cc(u).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Componentwise box `lower <= v <= upper` per face and step.
#[derive(Debug, Clone)]
pub struct ControlBounds {
    pub lower: Control,
    pub upper: Control,
}

impl ControlBounds {
    pub fn constant(grid: Grid2D, nt: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![VectorField::constant(grid, lower, lower); nt],
            upper: vec![VectorField::constant(grid, upper, upper); nt],
        }
    }

    pub fn unbounded(grid: Grid2D, nt: usize) -> Self {
        Self::constant(grid, nt, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::config(
                "bounds",
                "lower and upper have different lengths",
            ));
        }
        for (a, b) in self.lower.iter().zip(&self.upper) {
            let bad =
                a.ux.iter()
                    .zip(&b.ux)
                    .chain(a.uy.iter().zip(&b.uy))
                    .any(|(l, u)| !(l <= u) || l.is_nan() || u.is_nan());
            if bad {
                return Err(Error::config("bounds", "lower bound exceeds upper bound"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &[VectorField]) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(w, (a, b))| {
                w.ux.iter()
                    .zip(a.ux.iter().zip(&b.ux))
                    .chain(w.uy.iter().zip(a.uy.iter().zip(&b.uy)))
                    .all(|(x, (l, u))| *l <= *x && *x <= *u)
            })
    }
}

/// Pointwise clip of `w` into the box.
pub fn project_box(w: &[VectorField], bounds: &ControlBounds) -> Control {
    w.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(w, (a, b))| VectorField {
            grid: w.grid,
            ux: clip(&w.ux, &a.ux, &b.ux),
            uy: clip(&w.uy, &a.uy, &b.uy),
        })
        .collect()
}

fn clip(w: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(lo.iter().zip(hi))
        .map(|(x, (l, u))| x.min(*u).max(*l))
        .collect()
}

/// `dt sum_k (a_k, b_k)`
pub fn control_inner(a: &[VectorField], b: &[VectorField], dt: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.inner(y)).sum::<f64>() * dt
}

pub fn control_norm(a: &[VectorField], dt: f64) -> f64 {
    control_inner(a, a, dt).sqrt()
}

fn control_axpy(a: &[VectorField], alpha: f64, b: &[VectorField]) -> Control {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut z = x.clone();
            z.axpy(alpha, y);
            z
        })
        .collect()
}

/// Tracking cost of a trajectory plus the control cost of `v`.
pub fn evaluate_cost(
    traj: &StateTrajectory,
    v: &[VectorField],
    targets: &Targets,
    weights: &CostWeights,
) -> Result<f64> {
    let nt = traj.nt();
    targets.check(traj.grid, nt)?;
    if v.len() != nt {
        return Err(Error::LengthMismatch {
            what: "control steps",
            expected: nt,
            got: v.len(),
        });
    }
    let dt = traj.dt;
    let sq_u = |a: &VectorField, b: &VectorField| {
        let d = a.sub(b);
        d.inner(&d)
    };
    let sq_p = |a: &ScalarField, b: &ScalarField| {
        let d = a.sub(b);
        d.inner(&d)
    };
    let mut j = 0.0;
    for k in 1..=nt {
        if weights.beta1 != 0.0 {
            j += 0.5 * weights.beta1 * dt * sq_u(&traj.u[k], &targets.u_q[k]);
        }
        if weights.beta2 != 0.0 {
            j += 0.5 * weights.beta2 * dt * sq_p(&traj.phi[k], &targets.phi_q[k]);
        }
    }
    j += 0.5 * weights.beta3 * sq_u(&traj.u[nt], &targets.u_omega);
    j += 0.5 * weights.beta4 * sq_p(&traj.phi[nt], &targets.phi_omega);
    j += 0.5 * weights.gamma * control_inner(v, v, dt);
    Ok(j)
}

/// `g_k = gamma v_k + p_{k+1}`
pub fn reduced_gradient(v: &[VectorField], adj: &AdjointTrajectory, gamma: f64) -> Control {
    v.iter()
        .enumerate()
        .map(|(k, vk)| {
            let mut g = adj.p[k + 1].clone();
            g.axpy(gamma, vk);
            g
        })
        .collect()
}

/// Derivative of the reduced cost along `h` from the linearized states.
pub fn directional_derivative_via_tangent(
    traj: &StateTrajectory,
    tangent: &TangentTrajectory,
    targets: &Targets,
    weights: &CostWeights,
    v: &[VectorField],
    h: &[VectorField],
) -> f64 {
    let nt = traj.nt();
    let dt = traj.dt;
    let mut d = 0.0;
    for k in 1..=nt {
        d += weights.beta1 * dt * traj.u[k].sub(&targets.u_q[k]).inner(&tangent.xi[k]);
        d += weights.beta2 * dt * traj.phi[k].sub(&targets.phi_q[k]).inner(&tangent.eta[k]);
    }
    d += weights.beta3 * traj.u[nt].sub(&targets.u_omega).inner(&tangent.xi[nt]);
    d += weights.beta4 * traj.phi[nt].sub(&targets.phi_omega).inner(&tangent.eta[nt]);
    d + weights.gamma * control_inner(v, h, dt)
}

/// `|| v - P(v - g) ||`
pub fn kkt_residual(v: &[VectorField], g: &[VectorField], bounds: &ControlBounds, dt: f64) -> f64 {
    let trial = project_box(&control_axpy(v, -1.0, g), bounds);
    control_norm(&control_axpy(v, -1.0, &trial), dt)
}

/// Worst violations of the sign conditions `g = 0` (free), `g >= 0` (at the
/// lower bound), `g <= 0` (at the upper bound), where `g = gamma v + p`.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Complementarity {
    pub max_free: f64,
    pub max_lower: f64,
    pub max_upper: f64,
    pub n_free: usize,
    pub n_lower: usize,
    pub n_upper: usize,
}

impl Complementarity {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_free <= tol && self.max_lower <= tol && self.max_upper <= tol
    }
}

pub fn complementarity(
    v: &[VectorField],
    g: &[VectorField],
    bounds: &ControlBounds,
) -> Complementarity {
    let mut c = Complementarity::default();
    for (k, (vk, gk)) in v.iter().zip(g).enumerate() {
        let (lo, hi) = (&bounds.lower[k], &bounds.upper[k]);
        let pairs = vk
            .ux
            .iter()
            .zip(&gk.ux)
            .zip(lo.ux.iter().zip(&hi.ux))
            .chain(vk.uy.iter().zip(&gk.uy).zip(lo.uy.iter().zip(&hi.uy)));
        for ((x, gx), (l, u)) in pairs {
            if *x <= *l {
                c.n_lower += 1;
                c.max_lower = c.max_lower.max(-gx);
            } else if *x >= *u {
                c.n_upper += 1;
                c.max_upper = c.max_upper.max(*gx);
            } else {
                c.n_free += 1;
                c.max_free = c.max_free.max(gx.abs());
            }
        }
    }
    c
}

/// The control problem with everything needed to evaluate the reduced cost.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub model: Model,
    pub init: InitialData,
    pub targets: Targets,
    pub weights: CostWeights,
    pub bounds: ControlBounds,
    /// adjoint used for gradients
    pub mode: AdjointMode,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub trajectory: StateTrajectory,
}

#[derive(Debug, Clone)]
pub struct GradientEvaluation {
    pub cost: f64,
    pub gradient: Control,
    pub trajectory: StateTrajectory,
    pub adjoint: AdjointTrajectory,
}

impl ControlProblem {
    pub fn new(
        model: Model,
        init: InitialData,
        targets: Targets,
        weights: CostWeights,
        bounds: ControlBounds,
    ) -> Result<Self> {
        weights.validate()?;
        bounds.validate()?;
        targets.check(model.grid, model.nt())?;
        if bounds.lower.len() != model.nt() {
            return Err(Error::LengthMismatch {
                what: "bound steps",
                expected: model.nt(),
                got: bounds.lower.len(),
            });
        }
        Ok(Self {
            model,
            init,
            targets,
            weights,
            bounds,
            mode: AdjointMode::Discrete,
        })
    }

    pub fn dt(&self) -> f64 {
        self.model.dt()
    }

    pub fn evaluate(&self, v: &[VectorField]) -> Result<Evaluation> {
        let trajectory = self.model.run_forward(v, &self.init)?;
        let cost = evaluate_cost(&trajectory, v, &self.targets, &self.weights)?;
        Ok(Evaluation { cost, trajectory })
    }

    pub fn cost(&self, v: &[VectorField]) -> Result<f64> {
        Ok(self.evaluate(v)?.cost)
    }

    pub fn gradient_at(&self, v: &[VectorField], eval: Evaluation) -> Result<GradientEvaluation> {
        let adjoint = run_adjoint(
            &self.model,
            &eval.trajectory,
            &self.targets,
            &self.weights,
            self.mode,
        )?;
        Ok(GradientEvaluation {
            cost: eval.cost,
            gradient: reduced_gradient(v, &adjoint, self.weights.gamma),
            trajectory: eval.trajectory,
            adjoint,
        })
    }

    pub fn cost_and_gradient(&self, v: &[VectorField]) -> Result<GradientEvaluation> {
        let eval = self.evaluate(v)?;
        self.gradient_at(v, eval)
    }
}

/// How the trial step of each iteration is chosen before backtracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `tau = 1 / (gamma + 1)` every iteration
    Fixed,
    /// Barzilai-Borwein step from the last accepted pair, clamped to
    /// `[tau_min, tau_max]`, falling back to the fixed step on iteration 0
    BarzilaiBorwein,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iter: usize,
    /// stop when the KKT residual falls below `rel_tol` times its initial value
    pub rel_tol: f64,
    /// or below this absolute value
    pub abs_tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_shrinks: usize,
    pub step_rule: StepRule,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-5,
            abs_tol: 0.0,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_shrinks: 40,
            step_rule: StepRule::Fixed,
            tau_min: 1e-10,
            tau_max: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub kkt_residual: f64,
    /// step accepted to produce the next iterate; 0 on the last record
    pub tau: f64,
    pub armijo_shrinks: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub v: Control,
    pub gradient: Control,
    pub history: Vec<IterationRecord>,
    pub status: OptimizerStatus,
    pub iterations: usize,
}

impl OptimizerState {
    pub fn costs(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.cost).collect()
    }
}

pub fn projected_gradient_descent(
    problem: &ControlProblem,
    v0: &[VectorField],
    settings: &OptimizerSettings,
) -> Result<OptimizerState> {
    if !problem.bounds.contains(v0) {
        return Err(Error::config(
            "optimizer.initial",
            "initial control violates the bounds",
        ));
    }
    let dt = problem.dt();
    let tau_fixed = 1.0 / (problem.weights.gamma + 1.0);
    let mut v = v0.to_vec();
    let mut cur = problem.cost_and_gradient(&v)?;
    let mut history = Vec::new();
    let mut kkt0 = None;
    let mut previous: Option<(Control, Control)> = None;
    let mut iter = 0;
    let status = loop {
        let kkt = kkt_residual(&v, &cur.gradient, &problem.bounds, dt);
        let grad_norm = control_norm(&cur.gradient, dt);
        let k0 = *kkt0.get_or_insert(kkt);
        history.push(IterationRecord {
            iter,
            cost: cur.cost,
            grad_norm,
            kkt_residual: kkt,
            tau: 0.0,
            armijo_shrinks: 0,
        });
        if kkt <= settings.abs_tol.max(settings.rel_tol * k0) {
            break OptimizerStatus::Converged;
        }
        if iter >= settings.max_iter {
            break OptimizerStatus::MaxIterations;
        }

        let mut tau = match (settings.step_rule, &previous) {
            (StepRule::BarzilaiBorwein, Some((pv, pg))) => {
                let s = control_axpy(&v, -1.0, pv);
                let y = control_axpy(&cur.gradient, -1.0, pg);
                let sy = control_inner(&s, &y, dt);
                if sy > 0.0 {
                    (control_inner(&s, &s, dt) / sy).clamp(settings.tau_min, settings.tau_max)
                } else {
                    tau_fixed
                }
            }
            _ => tau_fixed,
        };
        let mut accepted = None;
        for shrinks in 0..=settings.max_shrinks {
            let trial = project_box(&control_axpy(&v, -tau, &cur.gradient), &problem.bounds);
            let step = control_axpy(&v, -1.0, &trial);
            let step_sq = control_inner(&step, &step, dt);
            match problem.evaluate(&trial) {
                Ok(eval) if eval.cost <= cur.cost - settings.armijo_c / tau * step_sq => {
                    accepted = Some((trial, eval, shrinks));
                    break;
                }
                Ok(_) | Err(Error::Step { .. }) | Err(Error::Cfl { .. }) => {}
                Err(e) => return Err(e),
            }
            tau *= settings.shrink;
        }
        let Some((trial, eval, shrinks)) = accepted else {
            break OptimizerStatus::LineSearchFailed;
        };
        let last = history.last_mut().expect("history has the current record");
        last.tau = tau;
        last.armijo_shrinks = shrinks;
        let next = problem.gradient_at(&trial, eval)?;
        let old_v = std::mem::replace(&mut v, trial);
        let old = std::mem::replace(&mut cur, next);
        previous = Some((old_v, old.gradient));
        iter += 1;
    };
    Ok(OptimizerState {
        v,
        gradient: cur.gradient,
        history,
        status,
        iterations: iter,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TaylorReport {
    pub eps: Vec<f64>,
    pub remainders: Vec<f64>,
    pub slopes: Vec<f64>,
    /// slopes that were judged, i.e. both remainders above the rounding floor
    pub judged: Vec<f64>,
    pub passed: bool,
}

/// Slopes of `log R` against `log eps` between consecutive sweep entries;
/// pairs whose smaller remainder sits below `floor` are not judged.
pub fn remainder_slopes(eps: &[f64], rem: &[f64], floor: f64, band: (f64, f64)) -> TaylorReport {
    let mut slopes = Vec::new();
    let mut judged = Vec::new();
    for i in 1..eps.len() {
        let s = (rem[i - 1] / rem[i]).ln() / (eps[i - 1] / eps[i]).ln();
        slopes.push(s);
        if rem[i] > floor && rem[i - 1] > floor {
            judged.push(s);
        }
    }
    let passed = !judged.is_empty() && judged.iter().all(|s| (band.0..=band.1).contains(s));
    TaylorReport {
        eps: eps.to_vec(),
        remainders: rem.to_vec(),
        slopes,
        judged,
        passed,
    }
}

/// `R(eps) = |J(v + eps h) - J(v) - eps <g, h>|` over the sweep. `scale`
/// multiplies the gradient before pairing (1 for the real test).
pub fn taylor_test(
    problem: &ControlProblem,
    v: &[VectorField],
    h: &[VectorField],
    eps: &[f64],
    scale: f64,
) -> Result<TaylorReport> {
    if eps.len() < 4 || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config(
            "taylor.eps",
            "need at least 4 decreasing values",
        ));
    }
    let base = problem.cost_and_gradient(v)?;
    let dg = scale * control_inner(&base.gradient, h, problem.dt());
    let mut rem = Vec::with_capacity(eps.len());
    for &e in eps {
        let j = problem.cost(&control_axpy(v, e, h))?;
        rem.push((j - base.cost - e * dg).abs());
    }
    let floor = 1e3 * f64::EPSILON * base.cost.abs().max(f64::MIN_POSITIVE);
    Ok(remainder_slopes(eps, &rem, floor, (1.8, 2.2)))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualityGap {
    pub via_tangent: f64,
    pub via_adjoint: f64,
    pub relative_gap: f64,
}

/// Compares the tangent-based directional derivative with `<gamma v + p, h>`
/// for the adjoint computed in `mode`.
pub fn duality_gap(
    problem: &ControlProblem,
    v: &[VectorField],
    h: &[VectorField],
    mode: AdjointMode,
) -> Result<DualityGap> {
    let traj = problem.model.run_forward(v, &problem.init)?;
    let tan = run_tangent(&problem.model, &traj, h)?;
    let via_tangent =
        directional_derivative_via_tangent(&traj, &tan, &problem.targets, &problem.weights, v, h);
    let adj = run_adjoint(
        &problem.model,
        &traj,
        &problem.targets,
        &problem.weights,
        mode,
    )?;
    let dt = problem.dt();
    let via_adjoint =
        problem.weights.gamma * control_inner(v, h, dt) + adjoint_pairing(&adj, h, dt);
    let denom = via_tangent.abs().max(via_adjoint.abs()).max(1e-300);
    Ok(DualityGap {
        via_tangent,
        via_adjoint,
        relative_gap: (via_tangent - via_adjoint).abs() / denom,
    })
}
