//! MAC grid on the rectangle `[0, lx] x [0, ly]` and the field containers
//! living on it.
//!
//! Scalars sit at cell centers, the x-component of a vector field on the
//! x-faces `(i dx, (j + 1/2) dy)` and the y-component on the y-faces
//! `((i + 1/2) dx, j dy)`. Arrays are row-major with `i` (the x index)
//! running fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4x4 cells, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "edge lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        })
    }

    /// Square grid on the unit square.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn xface_center(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn yface_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, j as f64 * self.dy)
    }

    pub fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: *self,
                right: *other,
            })
        }
    }

    /// Same grid with every cell count doubled.
    pub fn refined(&self) -> Self {
        Self::new(2 * self.nx, 2 * self.ny, self.lx, self.ly).expect("refinement of a valid grid")
    }
}

/// Cell-centered scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::LengthMismatch {
                what: "scalar field",
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_same_grid(&self.grid, &other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) {
        assert_same_grid(&self.grid, &other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Midpoint-rule L2 inner product.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        assert_same_grid(&self.grid, &other.grid);
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Midpoint-rule integral over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Face-centered vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid2D,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            ux: vec![0.0; grid.n_xfaces()],
            uy: vec![0.0; grid.n_yfaces()],
        }
    }

    pub fn constant(grid: Grid2D, cx: f64, cy: f64) -> Self {
        Self {
            grid,
            ux: vec![cx; grid.n_xfaces()],
            uy: vec![cy; grid.n_yfaces()],
        }
    }

    pub fn from_values(grid: Grid2D, ux: Vec<f64>, uy: Vec<f64>) -> Result<Self> {
        if ux.len() != grid.n_xfaces() {
            return Err(Error::LengthMismatch {
                what: "x-face component",
                expected: grid.n_xfaces(),
                got: ux.len(),
            });
        }
        if uy.len() != grid.n_yfaces() {
            return Err(Error::LengthMismatch {
                what: "y-face component",
                expected: grid.n_yfaces(),
                got: uy.len(),
            });
        }
        Ok(Self { grid, ux, uy })
    }

    /// Samples `fx` on x-faces and `fy` on y-faces.
    pub fn from_fn(
        grid: Grid2D,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut ux = Vec::with_capacity(grid.n_xfaces());
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.xface_center(i, j);
                ux.push(fx(x, y));
            }
        }
        let mut uy = Vec::with_capacity(grid.n_yfaces());
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.yface_center(i, j);
                uy.push(fy(x, y));
            }
        }
        Self { grid, ux, uy }
    }

    #[inline]
    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.ux[self.grid.xface(i, j)]
    }

    #[inline]
    pub fn y_at(&self, i: usize, j: usize) -> f64 {
        self.uy[self.grid.yface(i, j)]
    }

    /// Zeroes the faces lying on the boundary (the no-slip normal component).
    pub fn zero_boundary_normal(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.ux[g.xface(0, j)] = 0.0;
            self.ux[g.xface(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.uy[g.yface(i, 0)] = 0.0;
            self.uy[g.yface(i, g.ny)] = 0.0;
        }
    }

    pub fn with_zero_boundary(mut self) -> Self {
        self.zero_boundary_normal();
        self
    }

    /// Largest absolute boundary-normal face value.
    pub fn boundary_normal_max(&self) -> f64 {
        let g = self.grid;
        let mut m: f64 = 0.0;
        for j in 0..g.ny {
            m = m.max(self.ux[g.xface(0, j)].abs());
            m = m.max(self.ux[g.xface(g.nx, j)].abs());
        }
        for i in 0..g.nx {
            m = m.max(self.uy[g.yface(i, 0)].abs());
            m = m.max(self.uy[g.yface(i, g.ny)].abs());
        }
        m
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            ux: self.ux.iter().map(|&v| f(v)).collect(),
            uy: self.uy.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_same_grid(&self.grid, &other.grid);
        Self {
            grid: self.grid,
            ux: self
                .ux
                .iter()
                .zip(&other.ux)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            uy: self
                .uy
                .iter()
                .zip(&other.uy)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        assert_same_grid(&self.grid, &other.grid);
        for (a, b) in self.ux.iter_mut().zip(&other.ux) {
            *a += alpha * b;
        }
        for (a, b) in self.uy.iter_mut().zip(&other.uy) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.ux.iter_mut().for_each(|v| *v *= alpha);
        self.uy.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// Midpoint L2 inner product; boundary faces carry half a cell volume.
    pub fn inner(&self, other: &VectorField) -> f64 {
        assert_same_grid(&self.grid, &other.grid);
        let g = self.grid;
        let mut s = 0.0;
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let w = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
                let k = g.xface(i, j);
                s += w * self.ux[k] * other.ux[k];
            }
        }
        for j in 0..=g.ny {
            let w = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
            for i in 0..g.nx {
                let k = g.yface(i, j);
                s += w * self.uy[k] * other.uy[k];
            }
        }
        s * g.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(&self.uy)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }
}

/// Rank-2 tensor evaluated at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Grid2D,
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yx: Vec<f64>,
    pub yy: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: Grid2D) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            xx: vec![0.0; n],
            xy: vec![0.0; n],
            yx: vec![0.0; n],
            yy: vec![0.0; n],
        }
    }

    /// Pointwise double contraction `A : B`.
    pub fn contract(&self, other: &TensorField) -> ScalarField {
        assert_same_grid(&self.grid, &other.grid);
        let values = (0..self.grid.n_cells())
            .map(|k| {
                self.xx[k] * other.xx[k]
                    + self.xy[k] * other.xy[k]
                    + self.yx[k] * other.yx[k]
                    + self.yy[k] * other.yy[k]
            })
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.xx
            .iter()
            .chain(&self.xy)
            .chain(&self.yx)
            .chain(&self.yy)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub(crate) fn assert_same_grid(a: &Grid2D, b: &Grid2D) {
    assert!(a == b, "field grids differ: {a:?} vs {b:?}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid2D::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
        let g = Grid2D::new(8, 4, 2.0, 1.0).unwrap();
        assert_eq!(g.dx, 0.25);
        assert_eq!(g.dy, 0.25);
    }

    #[test]
    fn unit_measure() {
        let g = Grid2D::unit(16).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((one.inner(&one) - 1.0).abs() < 1e-12);
        let e = VectorField::constant(g, 1.0, 0.0);
        assert!((e.inner(&e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sine_squared_integral() {
        let g = Grid2D::unit(64).unwrap();
        let s = ScalarField::from_fn(g, |x, _| (2.0 * std::f64::consts::PI * x).sin());
        assert!((s.inner(&s) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn inner_is_positive_definite() {
        let g = Grid2D::unit(8).unwrap();
        let z = ScalarField::zeros(g);
        assert_eq!(z.inner(&z), 0.0);
        let mut f = z.clone();
        f.values[5] = 0.1;
        assert!(f.inner(&f) > 0.0);
    }

    #[test]
    fn boundary_zeroing() {
        let g = Grid2D::unit(6).unwrap();
        let v = VectorField::constant(g, 1.0, -2.0).with_zero_boundary();
        assert_eq!(v.boundary_normal_max(), 0.0);
        assert_eq!(v.x_at(3, 2), 1.0);
        assert_eq!(v.y_at(2, 3), -2.0);
    }
}
