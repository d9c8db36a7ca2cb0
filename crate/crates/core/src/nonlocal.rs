//! Interaction kernels and the convolutions built from them.
//!
//! All convolutions are midpoint quadratures over the domain only,
//! `(K * f)(x_c) = sum_y K(x_c - y) f(y) dx dy`, evaluated with a
//! zero-padded FFT. The kernel and its gradient are tabulated on every cell
//! offset that fits inside the domain, which covers the ball of radius
//! `diam(Omega)` seen from any cell.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, VectorField};
use crate::stencil::{cell_to_face, face_to_cell, gradient_cc_to_face};

/// Analytic kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `K(z) = amplitude * exp(-|z|^2 / (2 sigma^2))`
    Gaussian { amplitude: f64, sigma: f64 },
    /// `K(z) = -(amplitude / 4 pi) ln(|z|^2 + core^2)`, the logarithmic
    /// potential with a smooth core.
    MollifiedNewtonian { amplitude: f64, core: f64 },
}

impl KernelFamily {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = x * x + y * y;
        match *self {
            KernelFamily::Gaussian { amplitude, sigma } => {
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            KernelFamily::MollifiedNewtonian { amplitude, core } => {
                -amplitude / (4.0 * PI) * (r2 + core * core).ln()
            }
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let r2 = x * x + y * y;
        let f = match *self {
            KernelFamily::Gaussian { amplitude, sigma } => {
                -amplitude / (sigma * sigma) * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            KernelFamily::MollifiedNewtonian { amplitude, core } => {
                -amplitude / (2.0 * PI) / (r2 + core * core)
            }
        };
        [f * x, f * y]
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            KernelFamily::Gaussian { amplitude, .. } => amplitude,
            KernelFamily::MollifiedNewtonian { amplitude, .. } => amplitude,
        }
    }

    fn with_amplitude(self, a: f64) -> Self {
        match self {
            KernelFamily::Gaussian { sigma, .. } => KernelFamily::Gaussian {
                amplitude: a,
                sigma,
            },
            KernelFamily::MollifiedNewtonian { core, .. } => {
                KernelFamily::MollifiedNewtonian { amplitude: a, core }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            KernelFamily::Gaussian { amplitude, sigma } => {
                amplitude.is_finite() && sigma > 0.0 && sigma.is_finite()
            }
            KernelFamily::MollifiedNewtonian { amplitude, core } => {
                amplitude.is_finite() && core > 0.0 && core.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::HypothesisViolation(format!(
                "invalid kernel parameters {self:?}"
            )))
        }
    }
}

/// Zero-padded 2D FFT plan for a fixed grid.
struct Padded {
    px: usize,
    py: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Padded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Padded")
            .field("px", &self.px)
            .field("py", &self.py)
            .finish()
    }
}

impl Padded {
    fn new(grid: &Grid2D) -> Self {
        let (px, py) = (2 * grid.nx, 2 * grid.ny);
        let mut planner = FftPlanner::new();
        Self {
            px,
            py,
            row_fwd: planner.plan_fft_forward(px),
            row_inv: planner.plan_fft_inverse(px),
            col_fwd: planner.plan_fft_forward(py),
            col_inv: planner.plan_fft_inverse(py),
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (px, py) = (self.px, self.py);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); px * py];
        for j in 0..py {
            for i in 0..px {
                t[i * py + j] = data[j * px + i];
            }
        }
        col.process(&mut t);
        for j in 0..py {
            for i in 0..px {
                data[j * px + i] = t[i * py + j];
            }
        }
        if inverse {
            let s = 1.0 / (px * py) as f64;
            data.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// Spectrum of an offset table indexed `[(dj + ny - 1) * (2nx - 1) + di + nx - 1]`.
    fn offsets_spectrum(&self, grid: &Grid2D, table: &[f64]) -> Vec<Complex64> {
        let (px, py) = (self.px, self.py);
        let w = 2 * grid.nx - 1;
        let mut data = vec![Complex64::new(0.0, 0.0); px * py];
        for dj in -(grid.ny as isize - 1)..grid.ny as isize {
            for di in -(grid.nx as isize - 1)..grid.nx as isize {
                let v = table[(dj + grid.ny as isize - 1) as usize * w
                    + (di + grid.nx as isize - 1) as usize];
                let i = di.rem_euclid(px as isize) as usize;
                let j = dj.rem_euclid(py as isize) as usize;
                data[j * px + i] = Complex64::new(v, 0.0);
            }
        }
        self.transform(&mut data, false);
        data
    }

    fn convolve(&self, grid: &Grid2D, spectrum: &[Complex64], f: &[f64]) -> Vec<f64> {
        let (px, py) = (self.px, self.py);
        let mut data = vec![Complex64::new(0.0, 0.0); px * py];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data[j * px + i] = Complex64::new(f[grid.cell(i, j)], 0.0);
            }
        }
        self.transform(&mut data, false);
        for (d, k) in data.iter_mut().zip(spectrum) {
            *d *= k;
        }
        self.transform(&mut data, true);
        let vol = grid.cell_volume();
        let mut out = vec![0.0; grid.n_cells()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                out[grid.cell(i, j)] = data[j * px + i].re * vol;
            }
        }
        out
    }
}

/// Tabulated interaction kernel bound to one grid.
#[derive(Debug, Clone)]
pub struct Kernel {
    family: Option<KernelFamily>,
    grid: Grid2D,
    /// K on offsets `(di dx, dj dy)`, `|di| < nx`, `|dj| < ny`
    stencil: Vec<f64>,
    grad_x: Vec<f64>,
    grad_y: Vec<f64>,
    a_field: ScalarField,
    plan: Arc<Padded>,
    k_hat: Arc<Vec<Complex64>>,
    gx_hat: Arc<Vec<Complex64>>,
    gy_hat: Arc<Vec<Complex64>>,
}

impl Kernel {
    pub fn new(family: KernelFamily, grid: Grid2D) -> Result<Self> {
        family.validate()?;
        let mut k = Self::tabulate(grid, |x, y| family.eval(x, y), |x, y| family.gradient(x, y));
        k.family = Some(family);
        Ok(k)
    }

    /// Kernel from arbitrary offset functions (used for test stencils).
    pub fn tabulate(
        grid: Grid2D,
        k: impl Fn(f64, f64) -> f64,
        grad: impl Fn(f64, f64) -> [f64; 2],
    ) -> Self {
        let w = 2 * grid.nx - 1;
        let h = 2 * grid.ny - 1;
        let mut stencil = vec![0.0; w * h];
        let mut grad_x = vec![0.0; w * h];
        let mut grad_y = vec![0.0; w * h];
        for dj in 0..h {
            for di in 0..w {
                let x = (di as f64 - (grid.nx - 1) as f64) * grid.dx;
                let y = (dj as f64 - (grid.ny - 1) as f64) * grid.dy;
                let idx = dj * w + di;
                stencil[idx] = k(x, y);
                let gr = grad(x, y);
                grad_x[idx] = gr[0];
                grad_y[idx] = gr[1];
            }
        }
        Self::from_tables(None, grid, stencil, grad_x, grad_y)
    }

    /// Discrete delta: `K * f = f`.
    pub fn delta(grid: Grid2D) -> Self {
        let v = 1.0 / grid.cell_volume();
        let tol = 1e-9 * grid.dx.min(grid.dy);
        Self::tabulate(
            grid,
            move |x, y| {
                if x.abs() < tol && y.abs() < tol {
                    v
                } else {
                    0.0
                }
            },
            |_, _| [0.0, 0.0],
        )
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self::tabulate(grid, move |_, _| c, |_, _| [0.0, 0.0])
    }

    fn from_tables(
        family: Option<KernelFamily>,
        grid: Grid2D,
        stencil: Vec<f64>,
        grad_x: Vec<f64>,
        grad_y: Vec<f64>,
    ) -> Self {
        let plan = Arc::new(Padded::new(&grid));
        let k_hat = Arc::new(plan.offsets_spectrum(&grid, &stencil));
        let gx_hat = Arc::new(plan.offsets_spectrum(&grid, &grad_x));
        let gy_hat = Arc::new(plan.offsets_spectrum(&grid, &grad_y));
        let ones = vec![1.0; grid.n_cells()];
        let a = plan.convolve(&grid, &k_hat, &ones);
        Self {
            family,
            grid,
            stencil,
            grad_x,
            grad_y,
            a_field: ScalarField { grid, values: a },
            plan,
            k_hat,
            gx_hat,
            gy_hat,
        }
    }

    pub fn family(&self) -> Option<KernelFamily> {
        self.family
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// `a(x) = int_Omega K(x - y) dy`, precomputed with the convolution
    /// quadrature.
    pub fn a_field(&self) -> &ScalarField {
        &self.a_field
    }

    /// Tabulated value at cell offset `(di, dj)`.
    pub fn stencil_at(&self, di: isize, dj: isize) -> f64 {
        self.stencil[self.offset_index(di, dj)]
    }

    pub fn grad_at(&self, di: isize, dj: isize) -> [f64; 2] {
        let k = self.offset_index(di, dj);
        [self.grad_x[k], self.grad_y[k]]
    }

    fn offset_index(&self, di: isize, dj: isize) -> usize {
        let w = 2 * self.grid.nx - 1;
        assert!(di.unsigned_abs() < self.grid.nx && dj.unsigned_abs() < self.grid.ny);
        (dj + self.grid.ny as isize - 1) as usize * w + (di + self.grid.nx as isize - 1) as usize
    }

    /// The same kernel multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        let c = |v: &Vec<Complex64>| Arc::new(v.iter().map(|z| z * factor).collect::<Vec<_>>());
        Self {
            family: self
                .family
                .map(|f| f.with_amplitude(f.amplitude() * factor)),
            grid: self.grid,
            stencil: s(&self.stencil),
            grad_x: s(&self.grad_x),
            grad_y: s(&self.grad_y),
            a_field: self.a_field.scaled(factor),
            plan: Arc::clone(&self.plan),
            k_hat: c(&self.k_hat),
            gx_hat: c(&self.gx_hat),
            gy_hat: c(&self.gy_hat),
        }
    }

    /// Rescales the amplitude so that `min_x a(x) = target`, rounding up so
    /// the scaled minimum is never below `target`.
    pub fn scaled_to_min_a(&self, target: f64) -> Result<Self> {
        let m = self.a_field.min();
        if !(m > 0.0) {
            return Err(Error::HypothesisViolation(format!(
                "cannot auto-scale a kernel whose min a(x) = {m} is not positive"
            )));
        }
        let mut factor = target / m;
        while (self.a_field.values.iter().map(|a| a * factor)).fold(f64::INFINITY, f64::min)
            < target
        {
            factor *= 1.0 + f64::EPSILON;
        }
        Ok(self.scaled(factor))
    }

    /// `K * phi` by zero-padded FFT.
    pub fn convolve(&self, phi: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&phi.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self.plan.convolve(&self.grid, &self.k_hat, &phi.values),
        })
    }

    /// `K * phi` by the O(N^2) double sum over the tabulated stencil.
    pub fn convolve_direct(&self, phi: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&phi.grid)?;
        Ok(self.direct_sum(&self.stencil, &phi.values))
    }

    fn direct_sum(&self, table: &[f64], f: &[f64]) -> ScalarField {
        let g = self.grid;
        let w = 2 * g.nx - 1;
        let mut out = ScalarField::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let mut s = 0.0;
                for jj in 0..g.ny {
                    let row = (j + g.ny - 1 - jj) * w;
                    for ii in 0..g.nx {
                        s += table[row + i + g.nx - 1 - ii] * f[g.cell(ii, jj)];
                    }
                }
                out.values[g.cell(i, j)] = s * g.cell_volume();
            }
        }
        out
    }

    /// Cell-centered `(grad K * phi)` components.
    fn grad_convolve_cells(&self, phi: &ScalarField) -> (ScalarField, ScalarField) {
        let g = self.grid;
        let gx = self.plan.convolve(&g, &self.gx_hat, &phi.values);
        let gy = self.plan.convolve(&g, &self.gy_hat, &phi.values);
        (
            ScalarField {
                grid: g,
                values: gx,
            },
            ScalarField {
                grid: g,
                values: gy,
            },
        )
    }

    /// `(grad K) * phi`, computed at cell centers and averaged to faces.
    pub fn grad_convolve(&self, phi: &ScalarField) -> Result<VectorField> {
        self.grid.check_same(&phi.grid)?;
        let (gx, gy) = self.grad_convolve_cells(phi);
        let fx = cell_to_face(&gx);
        let fy = cell_to_face(&gy);
        Ok(VectorField {
            grid: self.grid,
            ux: fx.ux,
            uy: fy.uy,
        })
    }

    /// `int_Omega grad K(x - y) . grad q(y) dy`, with `grad q` taken on faces
    /// and averaged to cell centers.
    pub fn grad_dot_convolve(&self, q: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&q.grid)?;
        let (qx, qy) = face_to_cell(&gradient_cc_to_face(q));
        let g = self.grid;
        let a = self.plan.convolve(&g, &self.gx_hat, &qx.values);
        let b = self.plan.convolve(&g, &self.gy_hat, &qy.values);
        Ok(ScalarField {
            grid: g,
            values: a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        })
    }

    /// Reference evaluation of [`Kernel::grad_dot_convolve`] by direct sums.
    pub fn grad_dot_convolve_direct(&self, q: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&q.grid)?;
        let (qx, qy) = face_to_cell(&gradient_cc_to_face(q));
        let a = self.direct_sum(&self.grad_x, &qx.values);
        let b = self.direct_sum(&self.grad_y, &qy.values);
        Ok(a.add(&b))
    }

    /// Checks `K(z) = K(-z)`, `grad K(-z) = -grad K(z)` and `a >= 0`, and
    /// estimates the constant in `||grad(grad K * psi)|| <= C ||psi||` over
    /// `samples` smooth random `psi`.
    pub fn check_admissibility(&self, samples: usize, seed: u64) -> AdmissibilityReport {
        let g = self.grid;
        let mut max_asym: f64 = 0.0;
        let mut max_grad_asym: f64 = 0.0;
        let scale = self
            .stencil
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        let gscale = self
            .grad_x
            .iter()
            .chain(&self.grad_y)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        for dj in -(g.ny as isize - 1)..g.ny as isize {
            for di in -(g.nx as isize - 1)..g.nx as isize {
                max_asym = max_asym
                    .max((self.stencil_at(di, dj) - self.stencil_at(-di, -dj)).abs() / scale);
                let [ax, ay] = self.grad_at(di, dj);
                let [bx, by] = self.grad_at(-di, -dj);
                max_grad_asym = max_grad_asym.max(((ax + bx).abs().max((ay + by).abs())) / gscale);
            }
        }
        let a_min = self.a_field.min();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut estimate: f64 = 0.0;
        for _ in 0..samples.max(1) {
            let modes: Vec<(f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.gen_range(0..5) as f64,
                        rng.gen_range(0..5) as f64,
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let psi = ScalarField::from_fn(g, |x, y| {
                modes
                    .iter()
                    .map(|&(kx, ky, c)| c * (PI * kx * x / g.lx).cos() * (PI * ky * y / g.ly).cos())
                    .sum()
            });
            let n = psi.norm();
            if n == 0.0 {
                continue;
            }
            let (gx, gy) = self.grad_convolve_cells(&psi);
            let jac =
                gradient_cc_to_face(&gx).norm().powi(2) + gradient_cc_to_face(&gy).norm().powi(2);
            estimate = estimate.max(jac.sqrt() / n);
        }
        let mut violations = Vec::new();
        if max_asym > 1e-12 {
            violations.push(format!(
                "kernel not symmetric: max |K(z) - K(-z)| / max|K| = {max_asym:e}"
            ));
        }
        if max_grad_asym > 1e-12 {
            violations.push(format!(
                "kernel gradient not odd: max |gradK(z) + gradK(-z)| / max|gradK| = {max_grad_asym:e}"
            ));
        }
        if a_min < 0.0 {
            violations.push(format!("a(x) negative: min a = {a_min:e}"));
        }
        AdmissibilityReport {
            max_asymmetry: max_asym,
            max_gradient_asymmetry: max_grad_asym,
            a_min,
            estimated_constant: estimate,
            samples: samples.max(1),
            violations,
        }
    }
}

/// `a = K * 1` on `grid`. Kernels cache this at construction.
pub fn compute_a(kernel: &Kernel, grid: Grid2D) -> Result<ScalarField> {
    kernel.convolve(&ScalarField::constant(grid, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub max_asymmetry: f64,
    pub max_gradient_asymmetry: f64,
    pub a_min: f64,
    pub estimated_constant: f64,
    pub samples: usize,
    pub violations: Vec<String>,
}

impl AdmissibilityReport {
    pub fn symmetric(&self) -> bool {
        self.max_asymmetry <= 1e-12 && self.max_gradient_asymmetry <= 1e-12
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}
