//! Design variables and the fields derived from them: filtered level set,
//! filtered density, threshold-projected density.

use crate::error::{Error, Result};
use crate::grid::{FilterOperator, StructuredGrid};
use crate::par;

/// Nodal level-set and density optimization variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub s_phi: Vec<f64>,
    pub s_rho: Vec<f64>,
    /// Non-design nodes (held at `phi_up` / density 1).
    pub frozen: Vec<bool>,
    pub phi_low: f64,
    pub phi_up: f64,
}

impl DesignVector {
    pub fn uniform(n: usize, phi0: f64, rho0: f64, phi_low: f64, phi_up: f64) -> Self {
        DesignVector {
            s_phi: vec![phi0; n],
            s_rho: vec![rho0; n],
            frozen: vec![false; n],
            phi_low,
            phi_up,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.s_phi.len()
    }

    /// Concatenated `[s_phi, s_rho]`, the optimizer's view.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = self.s_phi.clone();
        x.extend_from_slice(&self.s_rho);
        x
    }

    pub fn set_flat(&mut self, x: &[f64]) {
        let n = self.num_nodes();
        self.s_phi.copy_from_slice(&x[..n]);
        self.s_rho.copy_from_slice(&x[n..]);
    }

    /// Lower and upper bounds matching [`to_flat`](Self::to_flat).
    pub fn flat_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_nodes();
        let mut lo = vec![self.phi_low; n];
        lo.extend(std::iter::repeat_n(0.0, n));
        let mut hi = vec![self.phi_up; n];
        hi.extend(std::iter::repeat_n(1.0, n));
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams {
    /// Sharpness.
    pub gamma: f64,
    /// Threshold.
    pub tau: f64,
}

impl ProjectionParams {
    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("projection sharpness must be > 0, got {gamma}")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid(format!("projection threshold must be in (0, 1), got {tau}")));
        }
        Ok(ProjectionParams { gamma, tau })
    }

    // Denominator is tanh(γ(1-τ)) + tanh(γτ), which normalizes ρ̂(1) = 1.
    #[inline]
    fn denom(&self) -> f64 {
        (self.gamma * (1.0 - self.tau)).tanh() + (self.gamma * self.tau).tanh()
    }
}

/// Smoothed threshold projection of a filtered density value.
#[inline]
pub fn project(s_hat: f64, pp: &ProjectionParams) -> f64 {
    let num = (pp.gamma * (s_hat - pp.tau)).tanh() + (pp.gamma * pp.tau).tanh();
    let v = num / pp.denom();
    // Pin the endpoints so that 0 → 0 and 1 → 1 hold exactly.
    if s_hat <= 0.0 {
        0.0
    } else if s_hat >= 1.0 {
        1.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// `dρ̂/dŜ`; strictly positive.
#[inline]
pub fn project_derivative(s_hat: f64, pp: &ProjectionParams) -> f64 {
    let c = (pp.gamma * (s_hat - pp.tau)).cosh();
    pp.gamma / (c * c) / pp.denom()
}

/// All derived nodal/elemental fields of one design iterate.
#[derive(Debug, Clone)]
pub struct FieldSet {
    /// Level set, `F_φ s^φ`.
    pub phi: Vec<f64>,
    /// Filtered density, `F_ρ s^ρ`.
    pub s_hat_rho: Vec<f64>,
    /// Projected density.
    pub rho_hat: Vec<f64>,
    /// Unfiltered, unprojected density (diagnostic only).
    pub rho_bar: Vec<f64>,
    /// Element means of `rho_hat`.
    pub elem_rho_hat: Vec<f64>,
}

pub fn evaluate_fields(
    grid: &StructuredGrid,
    s: &DesignVector,
    f_phi: &FilterOperator,
    f_rho: &FilterOperator,
    pp: &ProjectionParams,
) -> Result<FieldSet> {
    let n = grid.num_nodes();
    if s.s_phi.len() != n || s.s_rho.len() != n || f_phi.size() != n || f_rho.size() != n {
        return Err(Error::invalid(format!(
            "design/filter sizes do not match the grid ({n} nodes)"
        )));
    }
    let phi = f_phi.apply(&s.s_phi)?;
    let s_hat_rho = f_rho.apply(&s.s_rho)?;
    let rho_hat = par::map_range(n, |i| project(s_hat_rho[i], pp));
    let elem_rho_hat = grid.element_average(&rho_hat);
    Ok(FieldSet {
        phi,
        s_hat_rho,
        rho_hat,
        rho_bar: s.s_rho.clone(),
        elem_rho_hat,
    })
}

/// Clip every variable to its bounds and reset frozen nodes to
/// `(phi_up, 1.0)`.
pub fn clamp_and_freeze(s: &mut DesignVector) {
    let (lo, hi) = (s.phi_low, s.phi_up);
    for (i, (p, r)) in s.s_phi.iter_mut().zip(s.s_rho.iter_mut()).enumerate() {
        if s.frozen[i] {
            *p = hi;
            *r = 1.0;
        } else {
            *p = p.clamp(lo, hi);
            *r = r.clamp(0.0, 1.0);
        }
    }
}
