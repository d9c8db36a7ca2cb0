//! Second-order MAC stencils.
//!
//! Boundary treatment follows the state equations: scalars see mirror
//! ghosts (zero normal flux), velocities see reflection ghosts
//! (`u_ghost = -u_interior`) for the tangential component, and the
//! boundary-normal faces of every velocity-like output are zero.
//!
//! Operators that appear in the linearized and adjoint solvers come with
//! their transposes (`*_transpose*`). Transposes are taken with respect to
//! the midpoint inner products on cells and interior faces, which have equal
//! weights, so they are plain matrix transposes restricted to interior
//! degrees of freedom.

use crate::error::{Error, Result};
use crate::grid::{assert_same_grid, Grid2D, ScalarField, TensorField, VectorField};

/// Face gradient of a cell scalar; boundary faces carry the zero Neumann flux.
pub fn gradient_cc_to_face(phi: &ScalarField) -> VectorField {
    let g = phi.grid;
    let mut out = VectorField::zeros(g);
    let (idx, idy) = (1.0 / g.dx, 1.0 / g.dy);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.ux[g.xface(i, j)] = (phi.at(i, j) - phi.at(i - 1, j)) * idx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.uy[g.yface(i, j)] = (phi.at(i, j) - phi.at(i, j - 1)) * idy;
        }
    }
    out
}

/// Flux-difference divergence per cell.
pub fn divergence_face_to_cc(w: &VectorField) -> ScalarField {
    let g = w.grid;
    let mut out = ScalarField::zeros(g);
    let (idx, idy) = (1.0 / g.dx, 1.0 / g.dy);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.values[g.cell(i, j)] =
                (w.x_at(i + 1, j) - w.x_at(i, j)) * idx + (w.y_at(i, j + 1) - w.y_at(i, j)) * idy;
        }
    }
    out
}

/// Five-point Laplacian with mirror ghosts; equals `div(grad(phi))`.
pub fn laplacian_neumann(phi: &ScalarField) -> ScalarField {
    let g = phi.grid;
    let mut out = ScalarField::zeros(g);
    let (ix2, iy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = phi.at(i, j);
            let mut s = 0.0;
            if i > 0 {
                s += (phi.at(i - 1, j) - c) * ix2;
            }
            if i + 1 < g.nx {
                s += (phi.at(i + 1, j) - c) * ix2;
            }
            if j > 0 {
                s += (phi.at(i, j - 1) - c) * iy2;
            }
            if j + 1 < g.ny {
                s += (phi.at(i, j + 1) - c) * iy2;
            }
            out.values[g.cell(i, j)] = s;
        }
    }
    out
}

/// Averages a cell scalar onto faces. Boundary faces take the adjacent cell.
pub fn cell_to_face(phi: &ScalarField) -> VectorField {
    let g = phi.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        out.ux[g.xface(0, j)] = phi.at(0, j);
        out.ux[g.xface(g.nx, j)] = phi.at(g.nx - 1, j);
        for i in 1..g.nx {
            out.ux[g.xface(i, j)] = 0.5 * (phi.at(i - 1, j) + phi.at(i, j));
        }
    }
    for i in 0..g.nx {
        out.uy[g.yface(i, 0)] = phi.at(i, 0);
        out.uy[g.yface(i, g.ny)] = phi.at(i, g.ny - 1);
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.uy[g.yface(i, j)] = 0.5 * (phi.at(i, j - 1) + phi.at(i, j));
        }
    }
    out
}

/// Averages each face component onto cell centers.
pub fn face_to_cell(w: &VectorField) -> (ScalarField, ScalarField) {
    let g = w.grid;
    let mut cx = ScalarField::zeros(g);
    let mut cy = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.cell(i, j);
            cx.values[k] = 0.5 * (w.x_at(i, j) + w.x_at(i + 1, j));
            cy.values[k] = 0.5 * (w.y_at(i, j) + w.y_at(i, j + 1));
        }
    }
    (cx, cy)
}

/// Cell value of `a . b` for two face fields, averaging the face products.
pub fn face_dot_to_cell(a: &VectorField, b: &VectorField) -> ScalarField {
    assert_same_grid(&a.grid, &b.grid);
    let g = a.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (w, e) = (g.xface(i, j), g.xface(i + 1, j));
            let (s, n) = (g.yface(i, j), g.yface(i, j + 1));
            out.values[g.cell(i, j)] = 0.5 * (a.ux[w] * b.ux[w] + a.ux[e] * b.ux[e])
                + 0.5 * (a.uy[s] * b.uy[s] + a.uy[n] * b.uy[n]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Strain rates

/// Normal strain rates `(du/dx, dv/dy)` at cell centers.
fn cell_strains(u: &VectorField) -> (Vec<f64>, Vec<f64>) {
    let g = u.grid;
    let mut exx = vec![0.0; g.n_cells()];
    let mut eyy = vec![0.0; g.n_cells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.cell(i, j);
            exx[k] = (u.x_at(i + 1, j) - u.x_at(i, j)) / g.dx;
            eyy[k] = (u.y_at(i, j + 1) - u.y_at(i, j)) / g.dy;
        }
    }
    (exx, eyy)
}

#[inline]
fn node(g: &Grid2D, i: usize, j: usize) -> usize {
    j * (g.nx + 1) + i
}

/// Engineering shear strain `du/dy + dv/dx` at grid nodes, with reflection
/// ghosts on walls. Corner nodes are zero.
fn node_shear(u: &VectorField) -> Vec<f64> {
    let g = u.grid;
    let mut s = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 1..g.ny {
        for i in 1..g.nx {
            s[node(&g, i, j)] =
                (u.x_at(i, j) - u.x_at(i, j - 1)) / g.dy + (u.y_at(i, j) - u.y_at(i - 1, j)) / g.dx;
        }
    }
    for i in 1..g.nx {
        s[node(&g, i, 0)] = 2.0 * u.x_at(i, 0) / g.dy;
        s[node(&g, i, g.ny)] = -2.0 * u.x_at(i, g.ny - 1) / g.dy;
    }
    for j in 1..g.ny {
        s[node(&g, 0, j)] = 2.0 * u.y_at(0, j) / g.dx;
        s[node(&g, g.nx, j)] = -2.0 * u.y_at(g.nx - 1, j) / g.dx;
    }
    s
}

/// Node quadrature weight relative to a cell volume: 1 inside, 1/2 on walls.
#[inline]
fn node_weight(g: &Grid2D, i: usize, j: usize) -> f64 {
    let on_x = i == 0 || i == g.nx;
    let on_y = j == 0 || j == g.ny;
    match (on_x, on_y) {
        (false, false) => 1.0,
        (true, true) => 0.25,
        _ => 0.5,
    }
}

/// Cells adjacent to node `(i, j)`.
fn node_cells(g: &Grid2D, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
    let is = [i.checked_sub(1), (i < g.nx).then_some(i)];
    let js = [j.checked_sub(1), (j < g.ny).then_some(j)];
    js.into_iter()
        .flatten()
        .flat_map(move |jj| is.into_iter().flatten().map(move |ii| g.cell(ii, jj)))
}

fn node_average(nu: &ScalarField) -> Vec<f64> {
    let g = nu.grid;
    let mut out = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let (mut s, mut n) = (0.0, 0usize);
            for c in node_cells(&g, i, j) {
                s += nu.values[c];
                n += 1;
            }
            out[node(&g, i, j)] = s / n as f64;
        }
    }
    out
}

/// Symmetric gradient `(grad u + grad u^T) / 2` at cell centers.
pub fn sym_gradient(u: &VectorField) -> TensorField {
    let g = u.grid;
    let (exx, eyy) = cell_strains(u);
    let s = node_shear(u);
    let mut out = TensorField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.cell(i, j);
            let shear = 0.125
                * (s[node(&g, i, j)]
                    + s[node(&g, i + 1, j)]
                    + s[node(&g, i, j + 1)]
                    + s[node(&g, i + 1, j + 1)]);
            out.xx[k] = exx[k];
            out.yy[k] = eyy[k];
            out.xy[k] = shear;
            out.yx[k] = shear;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Viscous stress

/// `2 div(nu D u)` on faces, bilinear in `(nu, u)`. `nu` is not required to
/// be positive here; the linearized solver feeds `nu'(phi) eta`.
pub fn viscous_operator(nu: &ScalarField, u: &VectorField) -> VectorField {
    assert_same_grid(&nu.grid, &u.grid);
    let g = u.grid;
    let (exx, eyy) = cell_strains(u);
    let s = node_shear(u);
    let nu_n = node_average(nu);
    let txx: Vec<f64> = exx
        .iter()
        .zip(&nu.values)
        .map(|(e, n)| 2.0 * n * e)
        .collect();
    let tyy: Vec<f64> = eyy
        .iter()
        .zip(&nu.values)
        .map(|(e, n)| 2.0 * n * e)
        .collect();
    let tau: Vec<f64> = s.iter().zip(&nu_n).map(|(s, n)| s * n).collect();

    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.ux[g.xface(i, j)] = (txx[g.cell(i, j)] - txx[g.cell(i - 1, j)]) / g.dx
                + (tau[node(&g, i, j + 1)] - tau[node(&g, i, j)]) / g.dy;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.uy[g.yface(i, j)] = (tau[node(&g, i + 1, j)] - tau[node(&g, i, j)]) / g.dx
                + (tyy[g.cell(i, j)] - tyy[g.cell(i, j - 1)]) / g.dy;
        }
    }
    out
}

/// `2 div(nu D u)` with the viscosity checked for positivity.
pub fn div_viscous_stress(nu_cc: &ScalarField, u: &VectorField) -> Result<VectorField> {
    nu_cc.grid.check_same(&u.grid)?;
    if let Some(bad) = nu_cc.values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::HypothesisViolation(format!(
            "viscosity must be positive, found {bad}"
        )));
    }
    Ok(viscous_operator(nu_cc, u))
}

/// Transpose of `nu -> viscous_operator(nu, u)` applied to `lam`.
///
/// This is the discrete counterpart of `-2 D u : D lam`.
pub fn viscous_operator_transpose_nu(u: &VectorField, lam: &VectorField) -> ScalarField {
    assert_same_grid(&u.grid, &lam.grid);
    let g = u.grid;
    let (exx_u, eyy_u) = cell_strains(u);
    let (exx_l, eyy_l) = cell_strains(lam);
    let s_u = node_shear(u);
    let s_l = node_shear(lam);
    let mut out = ScalarField::zeros(g);
    for k in 0..g.n_cells() {
        out.values[k] = -2.0 * (exx_u[k] * exx_l[k] + eyy_u[k] * eyy_l[k]);
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let n = node(&g, i, j);
            let prod = s_u[n] * s_l[n];
            if prod == 0.0 {
                continue;
            }
            let cells: Vec<usize> = node_cells(&g, i, j).collect();
            let share = node_weight(&g, i, j) * prod / cells.len() as f64;
            for c in cells {
                out.values[c] -= share;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scalar advection

/// Conservative centered advection `div(u phi)`.
pub fn advect_scalar(u: &VectorField, phi: &ScalarField) -> ScalarField {
    assert_same_grid(&u.grid, &phi.grid);
    let g = phi.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let f = u.x_at(i, j) * 0.5 * (phi.at(i - 1, j) + phi.at(i, j)) / g.dx;
            out.values[g.cell(i - 1, j)] += f;
            out.values[g.cell(i, j)] -= f;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let f = u.y_at(i, j) * 0.5 * (phi.at(i, j - 1) + phi.at(i, j)) / g.dy;
            out.values[g.cell(i, j - 1)] += f;
            out.values[g.cell(i, j)] -= f;
        }
    }
    out
}

/// Transpose of `phi -> advect_scalar(u, phi)`: centered `-u . grad q`.
pub fn advect_scalar_transpose_field(u: &VectorField, q: &ScalarField) -> ScalarField {
    assert_same_grid(&u.grid, &q.grid);
    let g = q.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let fbar = (q.at(i - 1, j) - q.at(i, j)) / g.dx;
            let c = 0.5 * fbar * u.x_at(i, j);
            out.values[g.cell(i - 1, j)] += c;
            out.values[g.cell(i, j)] += c;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let fbar = (q.at(i, j - 1) - q.at(i, j)) / g.dy;
            let c = 0.5 * fbar * u.y_at(i, j);
            out.values[g.cell(i, j - 1)] += c;
            out.values[g.cell(i, j)] += c;
        }
    }
    out
}

/// Transpose of `u -> advect_scalar(u, phi)`: `-phi grad q` on interior faces.
pub fn advect_scalar_transpose_velocity(phi: &ScalarField, q: &ScalarField) -> VectorField {
    assert_same_grid(&phi.grid, &q.grid);
    let g = q.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let fbar = (q.at(i - 1, j) - q.at(i, j)) / g.dx;
            out.ux[g.xface(i, j)] = fbar * 0.5 * (phi.at(i - 1, j) + phi.at(i, j));
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let fbar = (q.at(i, j - 1) - q.at(i, j)) / g.dy;
            out.uy[g.yface(i, j)] = fbar * 0.5 * (phi.at(i, j - 1) + phi.at(i, j));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Vector advection

/// One momentum flux: `F = U * W` with `U`, `W` two-point averages, added
/// with `+1/h` to face `plus` and `-1/h` to face `minus`.
struct Flux {
    u: [Option<(Comp, usize)>; 2],
    w: [Option<(Comp, usize)>; 2],
    plus: Option<(Comp, usize)>,
    minus: Option<(Comp, usize)>,
    inv_h: f64,
}

#[derive(Clone, Copy)]
enum Comp {
    X,
    Y,
}

#[inline]
fn get(f: &VectorField, at: Option<(Comp, usize)>) -> f64 {
    match at {
        Some((Comp::X, k)) => f.ux[k],
        Some((Comp::Y, k)) => f.uy[k],
        None => 0.0,
    }
}

#[inline]
fn add_to(f: &mut VectorField, at: Option<(Comp, usize)>, v: f64) {
    match at {
        Some((Comp::X, k)) => f.ux[k] += v,
        Some((Comp::Y, k)) => f.uy[k] += v,
        None => {}
    }
}

/// Enumerates the fluxes of the divergence-form momentum advection.
///
/// Fluxes through wall nodes vanish (the advecting normal velocity is zero
/// there and the reflected tangential average is zero), so they are skipped.
fn momentum_fluxes(g: &Grid2D, mut visit: impl FnMut(Flux)) {
    let xi = |i: usize, j: usize| -> Option<(Comp, usize)> {
        (i >= 1 && i < g.nx).then(|| (Comp::X, g.xface(i, j)))
    };
    let yi = |i: usize, j: usize| -> Option<(Comp, usize)> {
        (j >= 1 && j < g.ny).then(|| (Comp::Y, g.yface(i, j)))
    };
    // x-momentum through cell centers
    for j in 0..g.ny {
        for i in 0..g.nx {
            let a = xi(i, j);
            let b = xi(i + 1, j);
            visit(Flux {
                u: [a, b],
                w: [a, b],
                plus: a,
                minus: b,
                inv_h: 1.0 / g.dx,
            });
        }
    }
    // x-momentum through interior nodes
    for j in 1..g.ny {
        for i in 1..g.nx {
            visit(Flux {
                u: [yi(i - 1, j), yi(i, j)],
                w: [xi(i, j - 1), xi(i, j)],
                plus: xi(i, j - 1),
                minus: xi(i, j),
                inv_h: 1.0 / g.dy,
            });
        }
    }
    // y-momentum through interior nodes
    for j in 1..g.ny {
        for i in 1..g.nx {
            visit(Flux {
                u: [xi(i, j - 1), xi(i, j)],
                w: [yi(i - 1, j), yi(i, j)],
                plus: yi(i - 1, j),
                minus: yi(i, j),
                inv_h: 1.0 / g.dx,
            });
        }
    }
    // y-momentum through cell centers
    for j in 0..g.ny {
        for i in 0..g.nx {
            let a = yi(i, j);
            let b = yi(i, j + 1);
            visit(Flux {
                u: [a, b],
                w: [a, b],
                plus: a,
                minus: b,
                inv_h: 1.0 / g.dy,
            });
        }
    }
}

/// Divergence-form centered advection of the face field `w` by `u`,
/// i.e. `div(u (x) w)`; equals `(u . grad) w` when `div u = 0`.
pub fn advect_vector(u: &VectorField, w: &VectorField) -> VectorField {
    assert_same_grid(&u.grid, &w.grid);
    let g = u.grid;
    let mut out = VectorField::zeros(g);
    momentum_fluxes(&g, |f| {
        let uu = 0.5 * (get(u, f.u[0]) + get(u, f.u[1]));
        let ww = 0.5 * (get(w, f.w[0]) + get(w, f.w[1]));
        let flux = uu * ww * f.inv_h;
        add_to(&mut out, f.plus, flux);
        add_to(&mut out, f.minus, -flux);
    });
    out
}

/// Reverse sweep of [`advect_vector`]: returns `(C(., w)^T lam, C(u, .)^T lam)`.
pub fn advect_vector_transpose(
    u: &VectorField,
    w: &VectorField,
    lam: &VectorField,
) -> (VectorField, VectorField) {
    assert_same_grid(&u.grid, &w.grid);
    assert_same_grid(&u.grid, &lam.grid);
    let g = u.grid;
    let mut ubar = VectorField::zeros(g);
    let mut wbar = VectorField::zeros(g);
    momentum_fluxes(&g, |f| {
        let fbar = (get(lam, f.plus) - get(lam, f.minus)) * f.inv_h;
        if fbar == 0.0 {
            return;
        }
        let uu = 0.5 * (get(u, f.u[0]) + get(u, f.u[1]));
        let ww = 0.5 * (get(w, f.w[0]) + get(w, f.w[1]));
        for at in f.u {
            add_to(&mut ubar, at, 0.5 * fbar * ww);
        }
        for at in f.w {
            add_to(&mut wbar, at, 0.5 * fbar * uu);
        }
    });
    (ubar, wbar)
}

// ---------------------------------------------------------------------------
// Capillary (Kelvin) force

/// `mu grad phi` on interior faces with `mu` averaged to the face.
pub fn kelvin_force(mu: &ScalarField, phi: &ScalarField) -> VectorField {
    assert_same_grid(&mu.grid, &phi.grid);
    let g = mu.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let m = 0.5 * (mu.at(i - 1, j) + mu.at(i, j));
            out.ux[g.xface(i, j)] = m * (phi.at(i, j) - phi.at(i - 1, j)) / g.dx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let m = 0.5 * (mu.at(i, j - 1) + mu.at(i, j));
            out.uy[g.yface(i, j)] = m * (phi.at(i, j) - phi.at(i, j - 1)) / g.dy;
        }
    }
    out
}

/// Transposes of [`kelvin_force`]: returns `(d/dmu^T lam, d/dphi^T lam)`.
pub fn kelvin_force_transpose(
    mu: &ScalarField,
    phi: &ScalarField,
    lam: &VectorField,
) -> (ScalarField, ScalarField) {
    assert_same_grid(&mu.grid, &phi.grid);
    let g = mu.grid;
    let mut mubar = ScalarField::zeros(g);
    let mut phibar = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let l = lam.x_at(i, j);
            let (a, b) = (g.cell(i - 1, j), g.cell(i, j));
            let grad = (phi.values[b] - phi.values[a]) / g.dx;
            let m = 0.5 * (mu.values[a] + mu.values[b]);
            mubar.values[a] += 0.5 * l * grad;
            mubar.values[b] += 0.5 * l * grad;
            phibar.values[b] += l * m / g.dx;
            phibar.values[a] -= l * m / g.dx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let l = lam.y_at(i, j);
            let (a, b) = (g.cell(i, j - 1), g.cell(i, j));
            let grad = (phi.values[b] - phi.values[a]) / g.dy;
            let m = 0.5 * (mu.values[a] + mu.values[b]);
            mubar.values[a] += 0.5 * l * grad;
            mubar.values[b] += 0.5 * l * grad;
            phibar.values[b] += l * m / g.dy;
            phibar.values[a] -= l * m / g.dy;
        }
    }
    (mubar, phibar)
}

// ---------------------------------------------------------------------------

/// `(p . grad^T) u`, i.e. the face field with components `sum_i p_i d_j u_i`.
pub fn transpose_gradient_contract(p: &VectorField, u: &VectorField) -> VectorField {
    assert_same_grid(&p.grid, &u.grid);
    let g = u.grid;
    let (exx, eyy) = cell_strains(u);
    // d(uy)/dx and d(ux)/dy at nodes, reflection ghosts on the walls.
    let mut dxuy = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    let mut dyux = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 1..g.ny {
        for i in 1..g.nx {
            dxuy[node(&g, i, j)] = (u.y_at(i, j) - u.y_at(i - 1, j)) / g.dx;
            dyux[node(&g, i, j)] = (u.x_at(i, j) - u.x_at(i, j - 1)) / g.dy;
        }
        dxuy[node(&g, 0, j)] = 2.0 * u.y_at(0, j) / g.dx;
        dxuy[node(&g, g.nx, j)] = -2.0 * u.y_at(g.nx - 1, j) / g.dx;
    }
    for i in 1..g.nx {
        dyux[node(&g, i, 0)] = 2.0 * u.x_at(i, 0) / g.dy;
        dyux[node(&g, i, g.ny)] = -2.0 * u.x_at(i, g.ny - 1) / g.dy;
    }

    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let py =
                0.25 * (p.y_at(i - 1, j) + p.y_at(i, j) + p.y_at(i - 1, j + 1) + p.y_at(i, j + 1));
            let dux = 0.5 * (exx[g.cell(i - 1, j)] + exx[g.cell(i, j)]);
            let duy = 0.5 * (dxuy[node(&g, i, j)] + dxuy[node(&g, i, j + 1)]);
            out.ux[g.xface(i, j)] = p.x_at(i, j) * dux + py * duy;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let px =
                0.25 * (p.x_at(i, j - 1) + p.x_at(i + 1, j - 1) + p.x_at(i, j) + p.x_at(i + 1, j));
            let dux = 0.5 * (dyux[node(&g, i, j)] + dyux[node(&g, i + 1, j)]);
            let duy = 0.5 * (eyy[g.cell(i, j - 1)] + eyy[g.cell(i, j)]);
            out.uy[g.yface(i, j)] = px * dux + p.y_at(i, j) * duy;
        }
    }
    out
}
