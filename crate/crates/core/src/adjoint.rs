//! Backward-in-time adjoint of the state system.
//!
//! Two discretizations are provided. [`AdjointMode::Discrete`] is the exact
//! transpose of the tangent step, so the reduced gradient it yields matches
//! finite differences of the discrete cost to solver tolerance.
//! [`AdjointMode::Continuous`] discretizes the continuous adjoint equations
//! with the forward stencils (left-endpoint state, explicit viscosity,
//! implicit `(a + F'') Lap` for `q`); its pairing with the tangent differs
//! by a consistency error that vanishes under refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{Model, StateTrajectory};
use crate::grid::{ScalarField, VectorField};
use crate::linalg::solve_neumann;
use crate::optimizer::{CostWeights, Targets};
use crate::stencil::{
    advect_scalar_transpose_field, advect_scalar_transpose_velocity, advect_vector,
    advect_vector_transpose, face_dot_to_cell, gradient_cc_to_face, kelvin_force,
    kelvin_force_transpose, laplacian_neumann, transpose_gradient_contract, viscous_operator,
    viscous_operator_transpose_nu,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjointMode {
    Discrete,
    Continuous,
    /// Continuous route with `+grad K .* grad q` in the `q` equation, as the
    /// nonlocal term is printed in the source; kept for comparison only.
    ContinuousPrintedSign,
}

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub mode: AdjointMode,
    /// `p[k]` pairs with the control of step `k - 1`; `p[0]` is kept for
    /// completeness.
    pub p: Vec<VectorField>,
    pub q: Vec<ScalarField>,
    pub pressure: Vec<ScalarField>,
}

impl AdjointTrajectory {
    pub fn nt(&self) -> usize {
        self.q.len() - 1
    }
}

pub fn run_adjoint(
    model: &Model,
    traj: &StateTrajectory,
    targets: &Targets,
    weights: &CostWeights,
    mode: AdjointMode,
) -> Result<AdjointTrajectory> {
    let nt = traj.nt();
    if nt != model.nt() {
        return Err(Error::LengthMismatch {
            what: "trajectory steps",
            expected: model.nt(),
            got: nt,
        });
    }
    targets.check(traj.grid, nt)?;
    match mode {
        AdjointMode::Discrete => discrete(model, traj, targets, weights),
        AdjointMode::Continuous => continuous(model, traj, targets, weights, -1.0, mode),
        AdjointMode::ContinuousPrintedSign => continuous(model, traj, targets, weights, 1.0, mode),
    }
}

fn tracking_sources(
    traj: &StateTrajectory,
    targets: &Targets,
    w: &CostWeights,
    k: usize,
) -> (VectorField, ScalarField) {
    (
        traj.u[k].sub(&targets.u_q[k]).scaled(w.beta1),
        traj.phi[k].sub(&targets.phi_q[k]).scaled(w.beta2),
    )
}

fn discrete(
    model: &Model,
    traj: &StateTrajectory,
    targets: &Targets,
    w: &CostWeights,
) -> Result<AdjointTrajectory> {
    let nt = traj.nt();
    let dt = model.dt();
    let g = traj.grid;
    let s = model.scheme.s_stab;
    let kernel = &model.kernel;
    let a = kernel.a_field();

    let (su, sp) = tracking_sources(traj, targets, w, nt);
    let mut lu = traj.u[nt].sub(&targets.u_omega).scaled(w.beta3);
    lu.axpy(dt, &su);
    let mut lphi = traj.phi[nt].sub(&targets.phi_omega).scaled(w.beta4);
    lphi.axpy(dt, &sp);

    let mut p = vec![VectorField::zeros(g); nt + 1];
    let mut q = vec![ScalarField::zeros(g); nt + 1];
    let mut pressure = vec![ScalarField::zeros(g); nt + 1];
    for n in (0..nt).rev() {
        let step = || -> Result<_> {
            let (phi, u) = (&traj.phi[n], &traj.u[n]);
            let (phi1, mu1) = (&traj.phi[n + 1], &traj.mu[n + 1]);

            // momentum half step
            let (lstar, theta, _) = model.project(&lu)?;
            let nu = model.viscosity.field(phi1);
            let mut lu_n = lstar.clone();
            lu_n.axpy(dt, &viscous_operator(&nu, &lstar));
            let (ca, cb) = advect_vector_transpose(u, u, &lstar);
            lu_n.axpy(-dt, &ca);
            lu_n.axpy(-dt, &cb);
            let (kmu, kphi) = kelvin_force_transpose(mu1, phi1, &lstar);
            let lmu = kmu.scaled(dt);
            let mut lphi1 = lphi.clone();
            let vt = viscous_operator_transpose_nu(u, &lstar);
            lphi1.axpy(dt, &model.viscosity.d1_field(phi1).mul(&vt));
            lphi1.axpy(dt, &kphi);
            let kl = kernel.convolve(&lmu)?;
            for c in 0..g.n_cells() {
                lphi1.values[c] += (a.values[c] + model.potential.d2(phi1.values[c]))
                    * lmu.values[c]
                    - kl.values[c];
            }

            // Cahn-Hilliard half step
            let (z, _) = model.ch_solve_raw(&laplacian_neumann(&lphi1))?;
            let mut lb = lphi1.clone();
            lb.axpy(dt, &z);
            let llb = laplacian_neumann(&lb).scaled(dt);
            let kllb = kernel.convolve(&llb)?;
            let mut lphi_n = lb.clone();
            lphi_n.axpy(-dt, &advect_scalar_transpose_field(u, &lb));
            for c in 0..g.n_cells() {
                lphi_n.values[c] +=
                    (model.potential.d2(phi.values[c]) - s) * llb.values[c] - kllb.values[c];
            }
            lu_n.axpy(-dt, &advect_scalar_transpose_velocity(phi, &lb));

            if n > 0 {
                let (su, sp) = tracking_sources(traj, targets, w, n);
                lu_n.axpy(dt, &su);
                lphi_n.axpy(dt, &sp);
            }
            lu_n.zero_boundary_normal();
            Ok((lstar, theta.scaled(1.0 / dt), lphi1, lu_n, lphi_n))
        };
        let (lstar, pr, lphi1, lu_n, lphi_n) = step().map_err(|e| e.at_step(n))?;
        p[n + 1] = lstar;
        pressure[n + 1] = pr;
        q[n + 1] = lphi1;
        lu = lu_n;
        lphi = lphi_n;
    }
    let (p0, th0, _) = model.project(&lu)?;
    p[0] = p0;
    pressure[0] = th0.scaled(1.0 / dt);
    q[0] = lphi;
    Ok(AdjointTrajectory {
        mode: AdjointMode::Discrete,
        p,
        q,
        pressure,
    })
}

fn continuous(
    model: &Model,
    traj: &StateTrajectory,
    targets: &Targets,
    w: &CostWeights,
    kernel_sign: f64,
    mode: AdjointMode,
) -> Result<AdjointTrajectory> {
    let nt = traj.nt();
    let dt = model.dt();
    let g = traj.grid;
    let kernel = &model.kernel;
    let a = kernel.a_field();

    let (p_nt, th, _) = model.project(&traj.u[nt].sub(&targets.u_omega).scaled(w.beta3))?;
    let mut p = vec![VectorField::zeros(g); nt + 1];
    let mut q = vec![ScalarField::zeros(g); nt + 1];
    let mut pressure = vec![ScalarField::zeros(g); nt + 1];
    p[nt] = p_nt;
    pressure[nt] = th.scaled(1.0 / dt);
    q[nt] = traj.phi[nt].sub(&targets.phi_omega).scaled(w.beta4);

    for n in (0..nt).rev() {
        let step = || -> Result<(VectorField, ScalarField, ScalarField)> {
            let (phi, u, mu) = (&traj.phi[n], &traj.u[n], &traj.mu[n]);
            let (pt, qt) = (&p[n + 1], &q[n + 1]);
            let (su, sp) = tracking_sources(traj, targets, w, n);

            let nu = model.viscosity.field(phi);
            let mut wv = pt.clone();
            wv.axpy(dt, &viscous_operator(&nu, pt));
            wv.axpy(dt, &advect_vector(u, pt));
            wv.axpy(-dt, &transpose_gradient_contract(pt, u));
            wv.axpy(-dt, &kelvin_force(qt, phi));
            wv.axpy(dt, &su);
            let (pn, theta, _) = model.project(&wv)?;

            // explicit part of the q equation
            let wdot = face_dot_to_cell(pt, &gradient_cc_to_face(phi));
            let kw = kernel.convolve(&wdot)?;
            let gk = kernel.grad_dot_convolve(qt)?;
            let pmu = face_dot_to_cell(pt, &gradient_cc_to_face(mu));
            let visc = viscous_operator_transpose_nu(u, pt);
            let adv = advect_scalar_transpose_field(u, qt);
            let mut coef = vec![0.0; g.n_cells()];
            let mut r = qt.clone();
            for c in 0..g.n_cells() {
                let f2 = model.potential.d2(phi.values[c]);
                let cc = a.values[c] + f2;
                if !(cc > 0.0) {
                    return Err(Error::HypothesisViolation(format!(
                        "a + F''(phi) = {cc} is not positive"
                    )));
                }
                coef[c] = 1.0 / cc;
                r.values[c] += dt
                    * (kernel_sign * gk.values[c] - adv.values[c]
                        + model.viscosity.d1(phi.values[c]) * visc.values[c]
                        + cc * wdot.values[c]
                        - kw.values[c]
                        - pmu.values[c]
                        + sp.values[c]);
            }
            // q - dt (a + F'') L q = r, symmetrized as (c^-1 - dt L) q = c^-1 r
            let rhs = ScalarField {
                grid: g,
                values: r.values.iter().zip(&coef).map(|(r, c)| r * c).collect(),
            };
            let (qn, _) =
                solve_neumann(model.spectral(), &coef, dt, &rhs, model.scheme.settings())?;
            Ok((pn, theta.scaled(1.0 / dt), qn))
        };
        let (pn, pr, qn) = step().map_err(|e| e.at_step(n))?;
        p[n] = pn;
        pressure[n] = pr;
        q[n] = qn;
    }
    Ok(AdjointTrajectory {
        mode,
        p,
        q,
        pressure,
    })
}

/// `dt sum_k (p_{k+1}, h_k)`, the state part of the gradient pairing.
pub fn adjoint_pairing(adj: &AdjointTrajectory, h: &[VectorField], dt: f64) -> f64 {
    h.iter()
        .enumerate()
        .map(|(k, hk)| adj.p[k + 1].inner(hk))
        .sum::<f64>()
        * dt
}
