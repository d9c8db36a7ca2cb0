//! Neumann elliptic solves on the cell grid.
//!
//! Every implicit system in the solvers has the form
//! `(diag(c) - beta * L) x = b` with `L` the mirror-ghost Laplacian and
//! `c >= 0`. They are solved by preconditioned conjugate gradients; the
//! preconditioner inverts the constant-coefficient operator
//! `(c_mean - beta * L)` exactly in the discrete cosine basis that
//! diagonalizes `L`. For `c == 0` (pressure) the constant null space is
//! projected out of the right-hand side and the iterates.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::stencil::laplacian_neumann;

/// Dense 1D cosine basis of the mirror-ghost second difference.
#[derive(Debug, Clone)]
struct CosineBasis {
    /// `basis[k * n + i] = cos(pi k (i + 1/2) / n)`
    basis: Vec<f64>,
    /// `1 / ||basis_k||^2`
    inv_norm2: Vec<f64>,
    /// positive eigenvalues of `-d^2/dx^2`
    eig: Vec<f64>,
}

impl CosineBasis {
    fn new(n: usize, h: f64) -> Self {
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                basis[k * n + i] =
                    (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
            }
        }
        let inv_norm2 = (0..n)
            .map(|k| {
                if k == 0 {
                    1.0 / n as f64
                } else {
                    2.0 / n as f64
                }
            })
            .collect();
        let eig = (0..n)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        Self {
            basis,
            inv_norm2,
            eig,
        }
    }
}

/// Exact solver for `(alpha - beta * L) x = b` with constant `alpha`.
#[derive(Debug, Clone)]
pub struct NeumannSpectral {
    grid: Grid2D,
    bx: CosineBasis,
    by: CosineBasis,
}

impl NeumannSpectral {
    pub fn new(grid: Grid2D) -> Self {
        Self {
            grid,
            bx: CosineBasis::new(grid.nx, grid.dx),
            by: CosineBasis::new(grid.ny, grid.dy),
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Solves `(alpha - beta L) x = b`. With `alpha == 0` the mean of `b` is
    /// discarded and the zero-mean solution is returned.
    pub fn solve(&self, alpha: f64, beta: f64, b: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        // forward: coefficient c[ky][kx] = sum_ij b[j][i] Cx[kx][i] Cy[ky][j] / norms
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &b[j * nx..(j + 1) * nx];
            for kx in 0..nx {
                let basis = &self.bx.basis[kx * nx..(kx + 1) * nx];
                let s: f64 = row.iter().zip(basis).map(|(a, c)| a * c).sum();
                tmp[j * nx + kx] = s * self.bx.inv_norm2[kx];
            }
        }
        let mut coef = vec![0.0; nx * ny];
        for ky in 0..ny {
            let basis = &self.by.basis[ky * ny..(ky + 1) * ny];
            let out = &mut coef[ky * nx..(ky + 1) * nx];
            for (j, &c) in basis.iter().enumerate() {
                let row = &tmp[j * nx..(j + 1) * nx];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += c * r;
                }
            }
            let w = self.by.inv_norm2[ky];
            for (kx, o) in out.iter_mut().enumerate() {
                let d = alpha + beta * (self.bx.eig[kx] + self.by.eig[ky]);
                *o = if d == 0.0 { 0.0 } else { *o * w / d };
            }
        }
        // inverse: x[j][i] = sum_k coef[ky][kx] Cx[kx][i] Cy[ky][j]
        let mut tmp = vec![0.0; nx * ny];
        for ky in 0..ny {
            let basis = &self.by.basis[ky * ny..(ky + 1) * ny];
            let crow = &coef[ky * nx..(ky + 1) * nx];
            for (j, &c) in basis.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let row = &mut tmp[j * nx..(j + 1) * nx];
                for (o, r) in row.iter_mut().zip(crow) {
                    *o += c * r;
                }
            }
        }
        let mut x = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &tmp[j * nx..(j + 1) * nx];
            let out = &mut x[j * nx..(j + 1) * nx];
            for (kx, &r) in row.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                let basis = &self.bx.basis[kx * nx..(kx + 1) * nx];
                for (o, c) in out.iter_mut().zip(basis) {
                    *o += r * c;
                }
            }
        }
        x
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solver for `(diag(c) - beta L) x = b` with `c >= 0` per cell.
///
/// `c` identically zero selects the singular Neumann Poisson problem; the
/// compatible part of `b` is solved and the zero-mean solution returned.
pub fn solve_neumann(
    spectral: &NeumannSpectral,
    c: &[f64],
    beta: f64,
    b: &ScalarField,
    settings: SolverSettings,
) -> Result<(ScalarField, SolveStats)> {
    let grid = spectral.grid();
    grid.check_same(&b.grid)?;
    let n = grid.n_cells();
    if c.len() != n {
        return Err(Error::LengthMismatch {
            what: "solver diagonal",
            expected: n,
            got: c.len(),
        });
    }
    let singular = c.iter().all(|&v| v == 0.0);
    let c_mean = c.iter().sum::<f64>() / n as f64;

    let apply = |x: &[f64]| -> Vec<f64> {
        let xf = ScalarField {
            grid,
            values: x.to_vec(),
        };
        let lx = laplacian_neumann(&xf);
        x.iter()
            .zip(c)
            .zip(&lx.values)
            .map(|((xi, ci), li)| ci * xi - beta * li)
            .collect()
    };

    let mut rhs = b.values.clone();
    if singular {
        remove_mean(&mut rhs);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        return Ok((
            ScalarField::zeros(grid),
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let mut x = spectral.solve(c_mean, beta, &rhs);
    let mut r: Vec<f64> = apply(&x).iter().zip(&rhs).map(|(ax, b)| b - ax).collect();
    if singular {
        remove_mean(&mut r);
    }
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let mut iterations = 0;
    // A constant diagonal is inverted exactly by the preconditioner, so this
    // normally returns right away for the pressure solve.
    if rel <= settings.tol {
        if singular {
            remove_mean(&mut x);
        }
        return Ok((
            ScalarField { grid, values: x },
            SolveStats {
                iterations,
                relative_residual: rel,
            },
        ));
    }

    let mut z = spectral.solve(c_mean, beta, &r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    while rel > settings.tol {
        if iterations >= settings.max_iter {
            return Err(Error::SolverDiverged {
                iterations,
                residual: rel,
            });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverDiverged {
                iterations,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= alpha * api;
        }
        if singular {
            remove_mean(&mut r);
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        iterations += 1;
        z = spectral.solve(c_mean, beta, &r);
        let rz_new = dot(&r, &z);
        let beta_cg = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta_cg * *pi;
        }
    }
    if singular {
        remove_mean(&mut x);
    }
    Ok((
        ScalarField { grid, values: x },
        SolveStats {
            iterations,
            relative_residual: rel,
        },
    ))
}
