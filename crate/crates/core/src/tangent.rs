//! Linearized state equations around a stored trajectory.
//!
//! Each step is the exact derivative of [`Model::step_ch`] followed by
//! [`Model::step_ns`], term by term at the same time levels.

use crate::error::{Error, Result};
use crate::forward::{InitialData, Model, StateTrajectory};
use crate::grid::{ScalarField, VectorField};
use crate::optimizer::{remainder_slopes, TaylorReport};
use crate::stencil::{
    advect_scalar, advect_vector, kelvin_force, laplacian_neumann, viscous_operator,
};

#[derive(Debug, Clone)]
pub struct TangentTrajectory {
    pub xi: Vec<VectorField>,
    pub eta: Vec<ScalarField>,
    pub pressure: Vec<ScalarField>,
}

impl TangentTrajectory {
    pub fn nt(&self) -> usize {
        self.eta.len() - 1
    }
}

/// Linearized chemical potential `a eta - K * eta + F''(phi) eta`.
pub fn linearized_mu(model: &Model, phi: &ScalarField, eta: &ScalarField) -> Result<ScalarField> {
    let conv = model.kernel.convolve(eta)?;
    let a = model.kernel.a_field();
    Ok(ScalarField {
        grid: eta.grid,
        values: (0..eta.values.len())
            .map(|c| {
                (a.values[c] + model.potential.d2(phi.values[c])) * eta.values[c] - conv.values[c]
            })
            .collect(),
    })
}

/// One linearized step from level `n` to `n + 1`.
pub fn step_tangent(
    model: &Model,
    traj: &StateTrajectory,
    n: usize,
    xi: &VectorField,
    eta: &ScalarField,
    h: &VectorField,
) -> Result<(VectorField, ScalarField, ScalarField)> {
    let dt = model.dt();
    let s = model.scheme.s_stab;
    let (phi, u) = (&traj.phi[n], &traj.u[n]);
    let (phi1, mu1) = (&traj.phi[n + 1], &traj.mu[n + 1]);

    let conv = model.kernel.convolve(eta)?;
    let r = ScalarField {
        grid: eta.grid,
        values: (0..eta.values.len())
            .map(|c| -conv.values[c] + (model.potential.d2(phi.values[c]) - s) * eta.values[c])
            .collect(),
    };
    let mut b = eta.clone();
    b.axpy(-dt, &advect_scalar(u, eta));
    b.axpy(-dt, &advect_scalar(xi, phi));
    b.axpy(dt, &laplacian_neumann(&r));
    let (eta1, _) = model.ch_solve(&b)?;
    let mu_t = linearized_mu(model, phi1, &eta1)?;

    let nu = model.viscosity.field(phi1);
    let dnu = model.viscosity.d1_field(phi1).mul(&eta1);
    let mut w = xi.clone();
    w.axpy(dt, &viscous_operator(&nu, xi));
    w.axpy(dt, &viscous_operator(&dnu, u));
    w.axpy(-dt, &advect_vector(xi, u));
    w.axpy(-dt, &advect_vector(u, xi));
    w.axpy(dt, &kelvin_force(&mu_t, phi1));
    w.axpy(dt, &kelvin_force(mu1, &eta1));
    w.axpy(dt, h);
    let (xi1, theta, _) = model.project(&w)?;
    Ok((xi1, eta1, theta.scaled(1.0 / dt)))
}

/// Directional derivative of the control-to-state map along `h`.
pub fn run_tangent(
    model: &Model,
    traj: &StateTrajectory,
    h: &[VectorField],
) -> Result<TangentTrajectory> {
    let nt = traj.nt();
    if h.len() != nt {
        return Err(Error::LengthMismatch {
            what: "tangent direction steps",
            expected: nt,
            got: h.len(),
        });
    }
    if nt != model.nt() {
        return Err(Error::LengthMismatch {
            what: "trajectory steps",
            expected: model.nt(),
            got: nt,
        });
    }
    let g = traj.grid;
    let mut out = TangentTrajectory {
        xi: vec![VectorField::zeros(g)],
        eta: vec![ScalarField::zeros(g)],
        pressure: vec![ScalarField::zeros(g)],
    };
    for n in 0..nt {
        let (xi, eta, p) = step_tangent(model, traj, n, &out.xi[n], &out.eta[n], &h[n])
            .map_err(|e| e.at_step(n))?;
        out.xi.push(xi);
        out.eta.push(eta);
        out.pressure.push(p);
    }
    Ok(out)
}

/// `max_k (|u_k|^2 + |phi_k|^2)^(1/2)`, the discrete `C0(L2)` norm of a
/// state difference.
pub fn state_distance(
    u: (&[VectorField], &[VectorField]),
    phi: (&[ScalarField], &[ScalarField]),
) -> f64 {
    u.0.iter()
        .zip(u.1)
        .zip(phi.0.iter().zip(phi.1))
        .map(|((ua, ub), (pa, pb))| {
            let du = ua.sub(ub).norm();
            let dp = pa.sub(pb).norm();
            (du * du + dp * dp).sqrt()
        })
        .fold(0.0, f64::max)
}

/// `R(eps) = ||S(v + eps h) - S(v) - eps S'(v) h||` in [`state_distance`]
/// over the sweep; remainders at the round-off level of `||S(v)||` are not
/// judged.
pub fn tangent_taylor(
    model: &Model,
    init: &InitialData,
    v: &[VectorField],
    h: &[VectorField],
    eps: &[f64],
) -> Result<TaylorReport> {
    if eps.len() < 4 || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config(
            "checks.eps",
            "need at least 4 decreasing values",
        ));
    }
    let traj = model.run_forward(v, init)?;
    let tan = run_tangent(model, &traj, h)?;
    let zero_u: Vec<_> = traj.u.iter().map(|u| VectorField::zeros(u.grid)).collect();
    let zero_p: Vec<_> = traj
        .phi
        .iter()
        .map(|p| ScalarField::zeros(p.grid))
        .collect();
    let size = state_distance((&traj.u, &zero_u), (&traj.phi, &zero_p));
    let mut rem = Vec::with_capacity(eps.len());
    for &e in eps {
        let ve: Vec<_> = v.iter().zip(h).map(|(a, b)| a.add(&b.scaled(e))).collect();
        let te = model.run_forward(&ve, init)?;
        let pu: Vec<_> = traj
            .u
            .iter()
            .zip(&tan.xi)
            .map(|(a, b)| a.add(&b.scaled(e)))
            .collect();
        let pp: Vec<_> = traj
            .phi
            .iter()
            .zip(&tan.eta)
            .map(|(a, b)| a.add(&b.scaled(e)))
            .collect();
        rem.push(state_distance((&te.u, &pu), (&te.phi, &pp)));
    }
    let floor = 1e3 * f64::EPSILON * size;
    Ok(remainder_slopes(eps, &rem, floor, (1.8, 2.2)))
}
