//! Objective penalty functionals and their gradients with respect to the
//! nodal fields they read (`φ`, `ρ̂`, `Ŝ^ρ`). Chaining through the filters to
//! the design variables happens in the driver.
//!
//! All integrals use 2x2 Gauss quadrature of the bilinear nodal interpolants.

use crate::error::{Error, Result};
use crate::geometry::TargetLsf;
use crate::grid::StructuredGrid;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    /// Smoothing of the hole-seeding kink.
    pub xi: f64,
    /// Level-set threshold below which hole seeding is inactive (negative).
    pub phi_th_hs: f64,
    /// Projected-density threshold; seeding acts where `ρ̂ < rho_th_hs`.
    pub rho_th_hs: f64,
    /// Level-set threshold of the void-density removal term (negative).
    pub phi_th_fs: f64,
    pub w_phi: f64,
    pub w_grad_phi: f64,
}

impl PenaltyParams {
    /// Defaults for level-set bounds `[phi_low, phi_up]`.
    pub fn with_bounds(phi_low: f64) -> Self {
        PenaltyParams {
            xi: 0.1,
            phi_th_hs: 0.1 * phi_low,
            rho_th_hs: 0.0,
            phi_th_fs: 0.5 * phi_low,
            w_phi: 1.0,
            w_grad_phi: 1.0,
        }
    }

    pub fn validate(&self, phi_up: f64) -> Result<()> {
        if !(self.xi > 0.0) {
            return Err(Error::invalid("xi must be > 0"));
        }
        if !(self.phi_th_hs < 0.0 && phi_up > 0.0) {
            return Err(Error::invalid("hole-seeding threshold must satisfy phi_th_hs < 0 < phi_up"));
        }
        if !(self.phi_th_fs < 0.0) {
            return Err(Error::invalid("phi_th_fs must be < 0"));
        }
        if self.w_phi < 0.0 || self.w_grad_phi < 0.0 {
            return Err(Error::invalid("regularization weights must be >= 0"));
        }
        Ok(())
    }
}

/// A penalty value with its gradient with respect to one nodal field.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerm {
    pub value: f64,
    pub grad: Vec<f64>,
}

const G: f64 = 0.211_324_865_405_187_1; // (1 - 1/√3) / 2
const GAUSS: [[f64; 2]; 4] = [[G, G], [1.0 - G, G], [1.0 - G, 1.0 - G], [G, 1.0 - G]];

#[inline]
fn shape(u: f64, v: f64) -> [f64; 4] {
    [(1.0 - u) * (1.0 - v), u * (1.0 - v), u * v, (1.0 - u) * v]
}

#[inline]
fn shape_grad(u: f64, v: f64, h: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - v) / h, -(1.0 - u) / h],
        [(1.0 - v) / h, -u / h],
        [v / h, u / h],
        [-v / h, (1.0 - u) / h],
    ]
}

#[inline]
fn interp(n: &[f64; 4], c: &[f64; 4]) -> f64 {
    n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + n[3] * c[3]
}

// Runs `local` on every element and scatters the per-corner gradients in
// element order.
fn integrate<F>(grid: &StructuredGrid, local: F) -> (f64, Vec<f64>)
where
    F: Fn(usize) -> (f64, [f64; 4]) + Sync + Send,
{
    let per = par::map_range(grid.num_elements(), local);
    let mut grad = vec![0.0; grid.num_nodes()];
    let mut value = 0.0;
    for (e, (v, g)) in per.into_iter().enumerate() {
        value += v;
        for (k, n) in grid.elem_nodes(e).into_iter().enumerate() {
            grad[n] += g[k];
        }
    }
    (value, grad)
}

fn check_len(grid: &StructuredGrid, fields: &[&[f64]]) -> Result<()> {
    let n = grid.num_nodes();
    if fields.iter().any(|f| f.len() != n) {
        return Err(Error::invalid(format!("nodal fields must have {n} entries")));
    }
    Ok(())
}

/// Pointwise hole-seeding density.
#[inline]
pub fn hole_seeding_density(phi: f64, rho_hat: f64, p: &PenaltyParams, phi_up: f64) -> f64 {
    if rho_hat >= p.rho_th_hs {
        return 0.0;
    }
    let q = ((phi - p.phi_th_hs) / (phi_up - p.phi_th_hs)).max(0.0);
    ((q * q + p.xi * p.xi).sqrt() - p.xi) / ((1.0 + p.xi * p.xi).sqrt() - p.xi)
}

// d/dφ of the active branch.
#[inline]
fn hole_seeding_slope(phi: f64, p: &PenaltyParams, phi_up: f64) -> f64 {
    let span = phi_up - p.phi_th_hs;
    let q = (phi - p.phi_th_hs) / span;
    if q <= 0.0 {
        return 0.0;
    }
    q / (q * q + p.xi * p.xi).sqrt() / ((1.0 + p.xi * p.xi).sqrt() - p.xi) / span
}

/// Hole-seeding penalty normalized by the domain boundary length. The
/// gradient is with respect to nodal `φ`; the density only switches the
/// branch and has no derivative.
pub fn hole_seeding_penalty(
    grid: &StructuredGrid,
    phi: &[f64],
    rho_hat: &[f64],
    p: &PenaltyParams,
    phi_up: f64,
) -> Result<PenaltyTerm> {
    check_len(grid, &[phi, rho_hat])?;
    let w = 0.25 * grid.h * grid.h;
    let norm = grid.boundary_length();
    let (value, grad) = integrate(grid, |e| {
        let nodes = grid.elem_nodes(e);
        let cp = nodes.map(|n| phi[n]);
        let cr = nodes.map(|n| rho_hat[n]);
        let mut v = 0.0;
        let mut g = [0.0; 4];
        for [u, t] in GAUSS {
            let n = shape(u, t);
            let (ph, rh) = (interp(&n, &cp), interp(&n, &cr));
            v += w * hole_seeding_density(ph, rh, p, phi_up);
            if rh < p.rho_th_hs {
                let s = w * hole_seeding_slope(ph, p, phi_up);
                for k in 0..4 {
                    g[k] += s * n[k];
                }
            }
        }
        (v, g)
    });
    Ok(PenaltyTerm {
        value: value / norm,
        grad: grad.into_iter().map(|g| g / norm).collect(),
    })
}

/// Pointwise void-density removal density: the filtered density where the
/// level set is at or below `phi_th_fs`.
#[inline]
pub fn vddr_density(s_hat_rho: f64, phi: f64, p: &PenaltyParams) -> f64 {
    if phi <= p.phi_th_fs {
        s_hat_rho
    } else {
        0.0
    }
}

/// Void-density removal penalty normalized by the boundary length, with its
/// gradient with respect to nodal `Ŝ^ρ`.
pub fn vddr_penalty(grid: &StructuredGrid, phi: &[f64], s_hat_rho: &[f64], p: &PenaltyParams) -> Result<PenaltyTerm> {
    check_len(grid, &[phi, s_hat_rho])?;
    let w = 0.25 * grid.h * grid.h;
    let norm = grid.boundary_length();
    let (value, grad) = integrate(grid, |e| {
        let nodes = grid.elem_nodes(e);
        let cp = nodes.map(|n| phi[n]);
        let cs = nodes.map(|n| s_hat_rho[n]);
        let mut v = 0.0;
        let mut g = [0.0; 4];
        for [u, t] in GAUSS {
            let n = shape(u, t);
            if interp(&n, &cp) <= p.phi_th_fs {
                v += w * interp(&n, &cs);
                for k in 0..4 {
                    g[k] += w * n[k];
                }
            }
        }
        (v, g)
    });
    Ok(PenaltyTerm {
        value: value / norm,
        grad: grad.into_iter().map(|g| g / norm).collect(),
    })
}

/// Distance of `φ` from the frozen target `φ̃` in value and gradient, with
/// the gradient taken with respect to nodal `φ`.
pub fn regularization_penalty(
    grid: &StructuredGrid,
    phi: &[f64],
    target: &TargetLsf,
    p: &PenaltyParams,
) -> Result<PenaltyTerm> {
    check_len(grid, &[phi, &target.values])?;
    let h = grid.h;
    let w = 0.25 * h * h;
    let area = grid.area();
    let value_norm = target.band().powi(2) * area;
    let (value, grad) = integrate(grid, |e| {
        let nodes = grid.elem_nodes(e);
        let d = nodes.map(|n| phi[n] - target.values[n]);
        let mut v = 0.0;
        let mut g = [0.0; 4];
        for [u, t] in GAUSS {
            let n = shape(u, t);
            let dn = shape_grad(u, t, h);
            let dv = interp(&n, &d);
            let gx: f64 = (0..4).map(|k| dn[k][0] * d[k]).sum();
            let gy: f64 = (0..4).map(|k| dn[k][1] * d[k]).sum();
            v += w * (p.w_phi * dv * dv / value_norm + p.w_grad_phi * (gx * gx + gy * gy) / area);
            for k in 0..4 {
                g[k] += 2.0
                    * w
                    * (p.w_phi * dv * n[k] / value_norm + p.w_grad_phi * (gx * dn[k][0] + gy * dn[k][1]) / area);
            }
        }
        (v, g)
    });
    Ok(PenaltyTerm { value, grad })
}
