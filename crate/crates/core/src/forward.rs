//! Time integration of the state system.
//!
//! One step is a first-order splitting. The Cahn-Hilliard update is
//! semi-implicit,
//!
//! ```text
//! phi' = phi - dt div(u phi) + dt L(mu_half)
//! mu_half = (a + s) phi' - K * phi + F'(phi) - s phi
//! ```
//!
//! and is solved through `psi = (a + s) phi'`, which satisfies the SPD system
//! `((a + s)^-1 - dt L) psi = b`. Writing `phi' = b + dt L psi` afterwards
//! keeps the mass exact whatever the solver tolerance. The momentum update
//! is an explicit predictor followed by a pressure projection.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, VectorField};
use crate::linalg::{solve_neumann, NeumannSpectral, SolveStats, SolverSettings};
use crate::nonlocal::Kernel;
use crate::physics::{chemical_potential, free_energy, Potential, Viscosity};
use crate::stencil::{
    advect_scalar, advect_vector, divergence_face_to_cc, gradient_cc_to_face, kelvin_force,
    laplacian_neumann, viscous_operator,
};

/// Time-indexed control, one face field per step.
pub type Control = Vec<VectorField>;

pub fn zero_control(grid: Grid2D, nt: usize) -> Control {
    vec![VectorField::zeros(grid); nt]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeScheme {
    pub dt: f64,
    pub nt: usize,
    /// CH stabilization constant
    pub s_stab: f64,
    /// relative tolerance of both Neumann solves
    pub tol_p: f64,
    pub max_iter: usize,
}

impl TimeScheme {
    pub fn new(dt: f64, nt: usize) -> Self {
        Self {
            dt,
            nt,
            s_stab: 2.0,
            tol_p: 1e-10,
            max_iter: 500,
        }
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.nt as f64
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol_p,
            max_iter: self.max_iter,
        }
    }
}

/// Viscous and advective step bounds.
pub fn cfl_bounds(grid: &Grid2D, nu_max: f64, u_max: f64) -> (f64, f64) {
    let h = grid.dx.min(grid.dy);
    (h * h / (8.0 * nu_max), h / (4.0 * u_max + 1e-12))
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: VectorField,
    pub phi0: ScalarField,
}

impl InitialData {
    pub fn new(u0: VectorField, phi0: ScalarField) -> Self {
        Self { u0, phi0 }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        self.u0.grid.check_same(&self.phi0.grid)?;
        if !self.u0.is_finite() || !self.phi0.is_finite() {
            return Err(Error::HypothesisViolation("non-finite initial data".into()));
        }
        if self.u0.boundary_normal_max() != 0.0 {
            return Err(Error::HypothesisViolation(
                "initial velocity has nonzero boundary-normal faces".into(),
            ));
        }
        let div = divergence_face_to_cc(&self.u0).max_abs();
        if div > tol {
            return Err(Error::HypothesisViolation(format!(
                "initial velocity divergence {div:e} exceeds {tol:e}"
            )));
        }
        Ok(())
    }
}

/// Named order-parameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhasePreset {
    Uniform {
        value: f64,
    },
    Random {
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        seed: u64,
    },
    /// `+1` inside the disc, `-1` outside, with a tanh interface of `width`
    Bubble {
        radius: f64,
        center: [f64; 2],
        width: f64,
    },
}

impl PhasePreset {
    pub fn build(&self, grid: Grid2D) -> ScalarField {
        match *self {
            PhasePreset::Uniform { value } => ScalarField::constant(grid, value),
            PhasePreset::Random {
                amplitude,
                mean,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                ScalarField {
                    grid,
                    values: (0..grid.n_cells())
                        .map(|_| mean + amplitude * rng.gen_range(-1.0..1.0))
                        .collect(),
                }
            }
            PhasePreset::Bubble {
                radius,
                center,
                width,
            } => ScalarField::from_fn(grid, |x, y| {
                let r = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
                -((r - radius) / width).tanh()
            }),
        }
    }
}

/// Named velocity presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocityPreset {
    Rest,
    /// Single cell vortex from the stream function
    /// `A sin^2(pi x/lx) sin^2(pi y/ly)`, discretely divergence free.
    TaylorVortex {
        amplitude: f64,
    },
}

impl VelocityPreset {
    pub fn build(&self, grid: Grid2D) -> VectorField {
        match *self {
            VelocityPreset::Rest => VectorField::zeros(grid),
            VelocityPreset::TaylorVortex { amplitude } => {
                let psi = |x: f64, y: f64| {
                    amplitude * (PI * x / grid.lx).sin().powi(2) * (PI * y / grid.ly).sin().powi(2)
                };
                stream_function_velocity(grid, psi)
            }
        }
    }
}

/// `u = (d_y psi, -d_x psi)` from node values of `psi`; exactly divergence free,
/// and no-slip compatible when `psi` vanishes on the boundary.
pub fn stream_function_velocity(grid: Grid2D, psi: impl Fn(f64, f64) -> f64) -> VectorField {
    let node = |i: usize, j: usize| psi(i as f64 * grid.dx, j as f64 * grid.dy);
    let mut u = VectorField::zeros(grid);
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            u.ux[grid.xface(i, j)] = (node(i, j + 1) - node(i, j)) / grid.dy;
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            u.uy[grid.yface(i, j)] = -(node(i + 1, j) - node(i, j)) / grid.dx;
        }
    }
    u
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StepStats {
    pub ch_iterations: usize,
    pub ch_residual: f64,
    pub pressure_iterations: usize,
    /// advective bound divided by dt
    pub cfl_margin: f64,
}

#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub grid: Grid2D,
    pub dt: f64,
    pub phi: Vec<ScalarField>,
    pub mu: Vec<ScalarField>,
    pub u: Vec<VectorField>,
    pub pressure: Vec<ScalarField>,
    pub stats: Vec<StepStats>,
}

impl StateTrajectory {
    pub fn nt(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt()).map(|k| k as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub kinetic_energy: f64,
    pub free_energy: f64,
    pub max_div: f64,
    pub max_u: f64,
    pub min_phi: f64,
    pub max_phi: f64,
}

impl DiagnosticsRow {
    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy + self.free_energy
    }
}

/// Everything a step needs besides the state: discretization, kernel and
/// constitutive laws.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid2D,
    pub kernel: Kernel,
    pub potential: Potential,
    pub viscosity: Viscosity,
    pub scheme: TimeScheme,
    spectral: NeumannSpectral,
    /// `1 / (a + s)`, the diagonal of the CH system
    ch_diag: Vec<f64>,
}

impl Model {
    pub fn new(
        kernel: Kernel,
        potential: Potential,
        viscosity: Viscosity,
        scheme: TimeScheme,
    ) -> Result<Self> {
        let grid = kernel.grid();
        if !(scheme.dt > 0.0) || scheme.nt == 0 {
            return Err(Error::config("time", "need dt > 0 and nt >= 1"));
        }
        if !(scheme.s_stab >= 0.0) {
            return Err(Error::config("time.s_stab", "must be nonnegative"));
        }
        let (visc, _) = cfl_bounds(&grid, viscosity.upper, 0.0);
        if scheme.dt > visc {
            return Err(Error::Cfl {
                dt: scheme.dt,
                bound: visc,
                suggested: 0.9 * visc,
            });
        }
        let ch_diag: Vec<f64> = kernel
            .a_field()
            .values
            .iter()
            .map(|a| 1.0 / (a + scheme.s_stab))
            .collect();
        if ch_diag.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::HypothesisViolation(
                "a + s_stab must be positive on every cell".into(),
            ));
        }
        Ok(Self {
            grid,
            kernel,
            potential,
            viscosity,
            scheme,
            spectral: NeumannSpectral::new(grid),
            ch_diag,
        })
    }

    pub(crate) fn spectral(&self) -> &NeumannSpectral {
        &self.spectral
    }

    pub fn dt(&self) -> f64 {
        self.scheme.dt
    }

    pub fn nt(&self) -> usize {
        self.scheme.nt
    }

    /// Solves `((a + s)^-1 - dt L) psi = b` and returns `b + dt L psi`.
    pub(crate) fn ch_solve(&self, b: &ScalarField) -> Result<(ScalarField, SolveStats)> {
        let (psi, stats) = self.ch_solve_raw(b)?;
        let mut out = b.clone();
        out.axpy(self.dt(), &laplacian_neumann(&psi));
        Ok((out, stats))
    }

    /// The bare solve `psi = ((a + s)^-1 - dt L)^-1 b`.
    pub(crate) fn ch_solve_raw(&self, b: &ScalarField) -> Result<(ScalarField, SolveStats)> {
        solve_neumann(
            &self.spectral,
            &self.ch_diag,
            self.dt(),
            b,
            self.scheme.settings(),
        )
    }

    /// Leray projection: returns `(w - grad theta, theta)` with
    /// `L theta = div w` and the boundary-normal faces of `w` cleared first.
    pub fn project(&self, w: &VectorField) -> Result<(VectorField, ScalarField, SolveStats)> {
        let w = w.clone().with_zero_boundary();
        let d = divergence_face_to_cc(&w).scaled(-1.0);
        let zeros = vec![0.0; self.grid.n_cells()];
        let (theta, stats) =
            solve_neumann(&self.spectral, &zeros, 1.0, &d, self.scheme.settings())?;
        let mut out = w;
        out.axpy(-1.0, &gradient_cc_to_face(&theta));
        Ok((out, theta, stats))
    }

    /// Cahn-Hilliard half step; returns `(phi', mu')`.
    pub fn step_ch(
        &self,
        phi: &ScalarField,
        u: &VectorField,
    ) -> Result<(ScalarField, ScalarField, SolveStats)> {
        let dt = self.dt();
        let s = self.scheme.s_stab;
        let conv = self.kernel.convolve(phi)?;
        let r = ScalarField {
            grid: self.grid,
            values: phi
                .values
                .iter()
                .zip(&conv.values)
                .map(|(p, k)| -k + self.potential.d1(*p) - s * p)
                .collect(),
        };
        let mut b = phi.clone();
        b.axpy(-dt, &advect_scalar(u, phi));
        b.axpy(dt, &laplacian_neumann(&r));
        let (next, stats) = self.ch_solve(&b)?;
        let mu = chemical_potential(&next, &self.kernel, &self.potential)?;
        Ok((next, mu, stats))
    }

    /// Momentum half step with the new phase field; returns `(u', pressure')`.
    pub fn step_ns(
        &self,
        u: &VectorField,
        phi: &ScalarField,
        mu: &ScalarField,
        v: &VectorField,
    ) -> Result<(VectorField, ScalarField, SolveStats)> {
        let dt = self.dt();
        let nu = self.viscosity.field(phi);
        let mut w = u.clone();
        w.axpy(dt, &viscous_operator(&nu, u));
        w.axpy(-dt, &advect_vector(u, u));
        w.axpy(dt, &kelvin_force(mu, phi));
        w.axpy(dt, v);
        let (next, theta, stats) = self.project(&w)?;
        Ok((next, theta.scaled(1.0 / dt), stats))
    }

    fn check_cfl(&self, u: &VectorField) -> Result<f64> {
        let (visc, adv) = cfl_bounds(&self.grid, self.viscosity.upper, u.max_abs());
        let bound = visc.min(adv);
        if self.dt() > bound {
            return Err(Error::Cfl {
                dt: self.dt(),
                bound,
                suggested: 0.9 * bound,
            });
        }
        Ok(adv / self.dt())
    }

    pub fn run_forward(&self, v: &[VectorField], init: &InitialData) -> Result<StateTrajectory> {
        let nt = self.nt();
        if v.len() != nt {
            return Err(Error::LengthMismatch {
                what: "control steps",
                expected: nt,
                got: v.len(),
            });
        }
        self.grid.check_same(&init.phi0.grid)?;
        self.grid.check_same(&init.u0.grid)?;
        for vk in v {
            self.grid.check_same(&vk.grid)?;
        }
        let mu0 = chemical_potential(&init.phi0, &self.kernel, &self.potential)?;
        let mut traj = StateTrajectory {
            grid: self.grid,
            dt: self.dt(),
            phi: Vec::with_capacity(nt + 1),
            mu: Vec::with_capacity(nt + 1),
            u: Vec::with_capacity(nt + 1),
            pressure: Vec::with_capacity(nt + 1),
            stats: Vec::with_capacity(nt),
        };
        traj.phi.push(init.phi0.clone());
        traj.mu.push(mu0);
        traj.u.push(init.u0.clone());
        traj.pressure.push(ScalarField::zeros(self.grid));
        for n in 0..nt {
            let step = || -> Result<_> {
                let cfl_margin = self.check_cfl(&traj.u[n])?;
                let (phi, mu, ch) = self.step_ch(&traj.phi[n], &traj.u[n])?;
                let (u, p, ps) = self.step_ns(&traj.u[n], &phi, &mu, &v[n])?;
                if !phi.is_finite() || !u.is_finite() {
                    return Err(Error::SolverDiverged {
                        iterations: 0,
                        residual: f64::NAN,
                    });
                }
                let stats = StepStats {
                    ch_iterations: ch.iterations,
                    ch_residual: ch.relative_residual,
                    pressure_iterations: ps.iterations,
                    cfl_margin,
                };
                Ok((phi, mu, u, p, stats))
            };
            let (phi, mu, u, p, stats) = step().map_err(|e| e.at_step(n))?;
            traj.phi.push(phi);
            traj.mu.push(mu);
            traj.u.push(u);
            traj.pressure.push(p);
            traj.stats.push(stats);
        }
        Ok(traj)
    }

    /// `1/2 |u|^2` plus the free energy.
    pub fn energy(&self, u: &VectorField, phi: &ScalarField) -> Result<f64> {
        Ok(0.5 * u.inner(u) + free_energy(phi, &self.kernel, &self.potential)?)
    }

    pub fn diagnostics(&self, traj: &StateTrajectory) -> Result<Vec<DiagnosticsRow>> {
        (0..=traj.nt())
            .map(|k| {
                let (u, phi) = (&traj.u[k], &traj.phi[k]);
                Ok(DiagnosticsRow {
                    step: k,
                    time: k as f64 * traj.dt,
                    mass: phi.integral(),
                    kinetic_energy: 0.5 * u.inner(u),
                    free_energy: free_energy(phi, &self.kernel, &self.potential)?,
                    max_div: divergence_face_to_cc(u).max_abs(),
                    max_u: u.max_abs(),
                    min_phi: phi.min(),
                    max_phi: phi.max(),
                })
            })
            .collect()
    }
}
