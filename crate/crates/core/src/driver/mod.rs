//! Problem definitions, objective and constraint aggregation with adjoint
//! gradients, the optimization loop and a finite-difference verifier.

mod run;
mod verify;

pub use run::{run, IterationRecord, RunOutcome, StopReason};
pub use verify::{fd_verify, random_design, random_loaded_design, FdReport, FdSample};

use crate::error::{Error, Result};
use crate::fem::{self, Dirichlet, ElasticityProblem, PlaneModel, Traction};
use crate::fields::{evaluate_fields, project_derivative, DesignVector, FieldSet, ProjectionParams};
use crate::geometry::{
    extract_interface, perimeter, signed_distance_target, solid_fractions, SolidFractionField, TargetLsf,
};
use crate::grid::{build_grid, build_filter, FilterOperator, StructuredGrid};
use crate::io::config::{Plane, RunConfig, Variant};
use crate::material::{element_modulus, modulus_derivatives, MaterialModel};
use crate::mma::MmaSettings;
use crate::par;
use crate::penalties::{self, PenaltyParams};
use crate::schedule::{ContinuationSchedule, ScheduleState};

/// Everything that defines one optimization problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub variant: Variant,
    pub grid: StructuredGrid,
    pub material: MaterialModel,
    pub elasticity: ElasticityProblem,
    /// `[w1, w2, w3, w4, w5]`; `w2` is the initial value, the run follows
    /// the schedule.
    pub weights: [f64; 5],
    pub gamma_m: f64,
    /// Absolute strain-energy bound of the mass-minimization variants.
    pub psi_ref: Option<f64>,
    pub psi_ref_factor: f64,
    /// Normalization mass: domain area times solid density and thickness.
    pub m0: f64,
    pub schedule: ContinuationSchedule,
    pub penalty: PenaltyParams,
    pub level_set_filter_radius: f64,
    pub density_filter_radius: f64,
    pub tau: f64,
    pub initial: DesignVector,
    pub optimizer: MmaSettings,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub constraint_tol: f64,
}

impl ProblemSpec {
    pub fn from_config(cfg: &RunConfig) -> Result<ProblemSpec> {
        match cfg.objective.variant {
            Variant::StrainEnergyMin => make_beam2d_spec(cfg),
            Variant::MassMinTotal | Variant::MassMinSolid => make_massmin_spec(cfg),
        }
    }

    pub fn phi_low(&self) -> f64 {
        self.initial.phi_low
    }

    pub fn phi_up(&self) -> f64 {
        self.initial.phi_up
    }
}

/// Nodes of the non-design pads under the load and at the support.
pub fn frozen_nodes(grid: &StructuredGrid, cfg: &RunConfig) -> Vec<bool> {
    let h = grid.h;
    let (w, ht) = (grid.width(), grid.height());
    let eps = 1e-9 * h;
    let load_x = 0.5 * cfg.load.load_patch_elements as f64 * h;
    let depth = cfg.load.frozen_depth as f64 * h;
    let pad = cfg.load.support_pad_elements as f64 * h;
    let mut frozen = vec![false; grid.num_nodes()];
    if cfg.load.frozen_depth > 0 {
        for n in grid.nodes_in_box(-eps, load_x + eps, ht - depth - eps, ht + eps) {
            frozen[n] = true;
        }
    }
    if cfg.load.support_pad_elements > 0 {
        for n in grid.nodes_in_box(w - pad - eps, w + eps, -eps, pad + eps) {
            frozen[n] = true;
        }
    }
    frozen
}

fn initial_design(grid: &StructuredGrid, cfg: &RunConfig, frozen: Vec<bool>) -> DesignVector {
    let h = grid.h;
    let phi_up = cfg.design.phi_upper_factor * h;
    let phi_low = cfg.design.phi_lower_factor * h;
    let phi0 = cfg.design.initial_phi_factor * phi_up;
    let mut s = DesignVector::uniform(grid.num_nodes(), phi0, cfg.design.initial_density, phi_low, phi_up);
    let (hx, hy) = (cfg.design.seeded_holes_x, cfg.design.seeded_holes_y);
    if hx > 0 && hy > 0 {
        let (cw, ch) = (grid.width() / hx as f64, grid.height() / hy as f64);
        let frac = cfg.design.seeded_hole_fraction;
        for n in 0..grid.num_nodes() {
            let [x, y] = grid.node_coords(n);
            let (x, y) = (x - grid.origin[0], y - grid.origin[1]);
            let (ci, cj) = ((x / cw).floor().min(hx as f64 - 1.0), (y / ch).floor().min(hy as f64 - 1.0));
            let (cx, cy) = ((ci + 0.5) * cw, (cj + 0.5) * ch);
            if (x - cx).abs() <= 0.5 * frac * cw && (y - cy).abs() <= 0.5 * frac * ch {
                s.s_phi[n] = phi_low;
            }
        }
    }
    s.frozen = frozen;
    crate::fields::clamp_and_freeze(&mut s);
    s
}

/// Symmetric half of the simply supported beam: `u_x = 0` on the symmetry
/// line `x = 0`, `u_y = 0` at the bottom-right corner node and a downward
/// traction on the top of the symmetry line.
pub fn make_beam2d_spec(cfg: &RunConfig) -> Result<ProblemSpec> {
    cfg.validate()?;
    let g = &cfg.grid;
    let grid = build_grid(g.nx, g.ny, g.h, [0.0, 0.0])?;
    let h = grid.h;
    let material = MaterialModel {
        e_solid: cfg.material.youngs_modulus_solid,
        e_void: cfg.material.youngs_modulus_void,
        nu: cfg.material.poisson_ratio,
        theta_solid: cfg.material.density_solid,
        theta_void: cfg.material.density_void,
    };
    material.validate()?;

    let load_x = 0.5 * cfg.load.load_patch_elements as f64 * h;
    let load_edges: Vec<[usize; 2]> = grid.side_sets["top"]
        .iter()
        .copied()
        .filter(|&[a, b]| grid.node_coords(a)[0].max(grid.node_coords(b)[0]) <= load_x + 1e-9 * h)
        .collect();
    let corner = grid.node_id(grid.nx, 0);
    let elasticity = ElasticityProblem {
        dirichlet: vec![
            Dirichlet { nodes: grid.node_sets["left"].clone(), component: 0, value: 0.0 },
            Dirichlet { nodes: vec![corner], component: 1, value: 0.0 },
        ],
        tractions: vec![Traction { edges: load_edges, traction: [0.0, cfg.load.traction] }],
        thickness: cfg.material.thickness,
        model: match cfg.material.plane {
            Plane::Stress => PlaneModel::Stress,
            Plane::Strain => PlaneModel::Strain,
        },
    };

    let frozen = frozen_nodes(&grid, cfg);
    let initial = initial_design(&grid, cfg, frozen);
    let rho0 = cfg.design.initial_density;
    let sc = &cfg.schedule;
    let schedule = ContinuationSchedule {
        step: sc.step_size,
        length: sc.continuation_length,
        max_iterations: sc.max_iterations,
        gamma0: sc.gamma_pr_initial,
        gammaf: sc.gamma_pr_final,
        beta0: sc.beta_rho_initial,
        betaf: sc.beta_rho_final,
        rho_th0: sc.rho_th_initial_factor * rho0,
        rho_thf: sc.rho_th_final_factor * rho0,
        eta_gamma: sc.eta_gamma,
        eta_beta: sc.eta_beta,
        eta_rho: sc.eta_rho,
        w2_0: sc.w2_initial,
        w2_f: sc.w2_final,
        eta_w2: sc.eta_w2,
    };
    let p = &cfg.penalty;
    let penalty = PenaltyParams {
        xi: p.xi,
        phi_th_hs: p.phi_th_hs_factor * initial.phi_low,
        rho_th_hs: 0.0,
        phi_th_fs: p.phi_th_fs_factor * initial.phi_low,
        w_phi: p.w_phi,
        w_grad_phi: p.w_grad_phi,
    };
    penalty.validate(initial.phi_up)?;

    let n = grid.num_nodes();
    let o = &cfg.optimizer;
    let mut move_limit = vec![o.move_limit_phi; n];
    move_limit.extend(std::iter::repeat_n(o.move_limit_rho, n));
    let optimizer = MmaSettings {
        asyinit: o.asymptote_init,
        asyincr: o.asymptote_increase,
        asydecr: o.asymptote_decrease,
        asymptote_min_gap: o.asymptote_min_gap,
        move_limit,
        subproblem_tol: o.subproblem_tol,
        inner_max: o.gcmma_inner_iterations,
        ..MmaSettings::default()
    };
    let ob = &cfg.objective;
    let m0 = grid.area() * material.theta_solid * cfg.material.thickness;
    Ok(ProblemSpec {
        variant: ob.variant,
        grid,
        material,
        elasticity,
        weights: [ob.w1, sc.w2_initial, ob.w3, ob.w4, ob.w5],
        gamma_m: ob.target_mass_fraction,
        psi_ref: ob.strain_energy_limit,
        psi_ref_factor: ob.strain_energy_limit_factor,
        m0,
        schedule,
        penalty,
        level_set_filter_radius: cfg.filter.level_set_filter_radius,
        density_filter_radius: cfg.filter.density_filter_radius,
        tau: cfg.filter.projection_threshold,
        initial,
        optimizer,
        convergence_tol: o.convergence_tol,
        convergence_window: o.convergence_window,
        constraint_tol: o.constraint_tol,
    })
}

/// Mass minimization under a strain-energy bound on the beam geometry. The
/// objective is the total two-phase mass or the solid-phase mass depending
/// on the variant.
pub fn make_massmin_spec(cfg: &RunConfig) -> Result<ProblemSpec> {
    if cfg.objective.variant == Variant::StrainEnergyMin {
        return Err(Error::invalid("mass-minimization spec requires a mass_min variant"));
    }
    make_beam2d_spec(cfg)
}

/// Objective split into its performance term and weighted penalties.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    /// Unweighted performance term (normalized strain energy or mass).
    pub f_term: f64,
    pub p_per: f64,
    pub p_reg: f64,
    pub p_hs: f64,
    pub p_vddr: f64,
}

/// One evaluation of the problem at a design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub iteration: usize,
    pub state: ScheduleState,
    pub z: f64,
    pub components: Components,
    /// `dz/ds` over `[s_phi, s_rho]`.
    pub dz: Vec<f64>,
    pub g1: f64,
    pub dg1: Vec<f64>,
    pub psi: f64,
    /// The mass the variant optimizes or constrains.
    pub mass: f64,
    pub fields: FieldSet,
    pub fractions: SolidFractionField,
    pub moduli: Vec<f64>,
    pub displacement: Vec<f64>,
    pub target: TargetLsf,
}

impl Evaluation {
    /// Mean projected density over nodes in the void phase
    /// (`φ < φ_th_fs`); zero when there is no void.
    pub fn void_density_mean(&self, phi_th_fs: f64) -> f64 {
        let (sum, count) = self
            .fields
            .phi
            .iter()
            .zip(&self.fields.rho_hat)
            .filter(|(p, _)| **p < phi_th_fs)
            .fold((0.0, 0usize), |(s, c), (_, r)| (s + r, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// A problem ready for evaluation: filters built and the initial strain
/// energy fixed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub f_phi: FilterOperator,
    pub f_rho: FilterOperator,
    k0: [[f64; 8]; 8],
    /// Strain energy of the initial design.
    pub psi0: f64,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Problem> {
        let f_phi = build_filter(&spec.grid, spec.level_set_filter_radius)?;
        let f_rho = build_filter(&spec.grid, spec.density_filter_radius)?;
        let k0 = fem::reference_stiffness(&spec.grid, &spec.material, &spec.elasticity);
        let mut problem = Problem { spec, f_phi, f_rho, k0, psi0: 1.0 };
        let s = problem.spec.initial.clone();
        let (_, _, moduli) = problem.physics_fields(&s, &problem.spec.schedule.state_at(0))?;
        let res = fem::assemble_and_solve(&problem.spec.grid, &moduli, &problem.spec.elasticity, &problem.spec.material)?;
        if !(res.psi > 0.0 && res.psi.is_finite()) {
            return Err(Error::invalid("initial design carries no strain energy"));
        }
        problem.psi0 = res.psi;
        Ok(problem)
    }

    pub fn psi_ref(&self) -> f64 {
        self.spec.psi_ref.unwrap_or(self.spec.psi_ref_factor * self.psi0)
    }

    fn physics_fields(
        &self,
        s: &DesignVector,
        st: &ScheduleState,
    ) -> Result<(FieldSet, SolidFractionField, Vec<f64>)> {
        let pp = ProjectionParams::new(st.gamma_pr, self.spec.tau)?;
        let fields = evaluate_fields(&self.spec.grid, s, &self.f_phi, &self.f_rho, &pp)?;
        let fractions = solid_fractions(&self.spec.grid, &fields.phi);
        let mat = &self.spec.material;
        let moduli = par::map_range(self.spec.grid.num_elements(), |e| {
            element_modulus(fields.elem_rho_hat[e], fractions.fractions[e], st.beta_rho, mat)
        });
        Ok((fields, fractions, moduli))
    }

    /// Objective, constraint and their gradients at iteration `it`. The
    /// regularization target is computed from the design unless supplied;
    /// either way it is held fixed in the gradient.
    pub fn evaluate(&self, s: &DesignVector, it: usize, target: Option<&TargetLsf>) -> Result<Evaluation> {
        self.evaluate_inner(s, it, target).map_err(|e| Error::AtIteration { iteration: it, source: Box::new(e) })
    }

    fn evaluate_inner(&self, s: &DesignVector, it: usize, target: Option<&TargetLsf>) -> Result<Evaluation> {
        let spec = &self.spec;
        let grid = &spec.grid;
        let mat = &spec.material;
        let n = grid.num_nodes();
        let st = spec.schedule.state_at(it);
        let pp = ProjectionParams::new(st.gamma_pr, spec.tau)?;
        let (fields, fractions, moduli) = self.physics_fields(s, &st)?;
        let res = fem::assemble_and_solve(grid, &moduli, &spec.elasticity, mat)?;
        let psi = res.psi;
        let thickness = spec.elasticity.thickness;

        // dΨ with respect to nodal φ and nodal ρ̂.
        let de = fem::strain_energy_modulus_gradient(grid, &res.u, &self.k0);
        let mut dpsi_phi = vec![0.0; n];
        let mut dpsi_rho = vec![0.0; n];
        for e in 0..grid.num_elements() {
            let (d_rho, d_frac) = modulus_derivatives(fields.elem_rho_hat[e], fractions.fractions[e], st.beta_rho, mat);
            for (k, &node) in grid.elem_nodes(e).iter().enumerate() {
                dpsi_rho[node] += de[e] * d_rho * 0.25;
                dpsi_phi[node] += de[e] * d_frac * fractions.d_dphi[e][k];
            }
        }

        let (m_solid, dms_rho, dms_phi) = fem::solid_mass(grid, &fields.elem_rho_hat, &fractions, mat, thickness);
        let m0 = spec.m0;

        // Performance term and constraint with their (φ, ρ̂) gradients.
        let (f_term, df_phi, df_rho, g1, dg_phi, dg_rho, mass) = match spec.variant {
            Variant::StrainEnergyMin => {
                let s0 = self.psi0;
                (
                    psi / s0,
                    scale(&dpsi_phi, 1.0 / s0),
                    scale(&dpsi_rho, 1.0 / s0),
                    m_solid / m0 - spec.gamma_m,
                    scale(&dms_phi, 1.0 / m0),
                    scale(&dms_rho, 1.0 / m0),
                    m_solid,
                )
            }
            Variant::MassMinTotal | Variant::MassMinSolid => {
                let r = self.psi_ref();
                let (m, dm_phi, dm_rho) = if spec.variant == Variant::MassMinTotal {
                    let (m, d) = fem::total_mass(grid, &fields.elem_rho_hat, mat, thickness);
                    (m, vec![0.0; n], d)
                } else {
                    (m_solid, dms_phi.clone(), dms_rho.clone())
                };
                (
                    m / m0,
                    scale(&dm_phi, 1.0 / m0),
                    scale(&dm_rho, 1.0 / m0),
                    psi / r - 1.0,
                    scale(&dpsi_phi, 1.0 / r),
                    scale(&dpsi_rho, 1.0 / r),
                    m,
                )
            }
        };

        let w = spec.weights;
        let w2 = st.w2;
        let interface = extract_interface(grid, &fields.phi);
        let (per, dper) = perimeter(grid, &fields.phi, &interface);
        let target = match target {
            Some(t) => t.clone(),
            None => signed_distance_target(grid, &interface, &fields.phi, s.phi_low, s.phi_up),
        };
        let pparams = PenaltyParams { rho_th_hs: st.rho_th_hs, ..spec.penalty };
        let reg = penalties::regularization_penalty(grid, &fields.phi, &target, &pparams)?;
        let hs = penalties::hole_seeding_penalty(grid, &fields.phi, &fields.rho_hat, &pparams, s.phi_up)?;
        let vd = penalties::vddr_penalty(grid, &fields.phi, &fields.s_hat_rho, &pparams)?;

        let components = Components {
            f_term,
            p_per: w2 * per,
            p_reg: w[2] * reg.value,
            p_hs: w[3] * hs.value,
            p_vddr: w[4] * vd.value,
        };
        let z = w[0] * f_term + components.p_per + components.p_reg + components.p_hs + components.p_vddr;

        // Gradients with respect to φ, ρ̂ and Ŝ, then back to the variables.
        let dz_phi: Vec<f64> = (0..n)
            .map(|i| w[0] * df_phi[i] + w2 * dper[i] + w[2] * reg.grad[i] + w[3] * hs.grad[i])
            .collect();
        let proj_d: Vec<f64> = par::map_range(n, |i| project_derivative(fields.s_hat_rho[i], &pp));
        let dz_shat: Vec<f64> = (0..n).map(|i| w[0] * df_rho[i] * proj_d[i] + w[4] * vd.grad[i]).collect();
        let dg_shat: Vec<f64> = (0..n).map(|i| dg_rho[i] * proj_d[i]).collect();

        let dz = self.to_variables(s, &dz_phi, &dz_shat)?;
        let dg1 = self.to_variables(s, &dg_phi, &dg_shat)?;

        let values_finite = z.is_finite() && g1.is_finite();
        if !values_finite || dz.iter().chain(&dg1).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("objective evaluation"));
        }
        Ok(Evaluation {
            iteration: it,
            state: st,
            z,
            components,
            dz,
            g1,
            dg1,
            psi,
            mass,
            fields,
            fractions,
            moduli,
            displacement: res.u,
            target,
        })
    }

    /// Pull nodal gradients with respect to `φ` and `Ŝ^ρ` back through the
    /// filters; frozen variables get zero.
    fn to_variables(&self, s: &DesignVector, g_phi: &[f64], g_shat: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.f_phi.apply_transpose(g_phi)?;
        out.extend(self.f_rho.apply_transpose(g_shat)?);
        let n = s.num_nodes();
        for (i, &f) in s.frozen.iter().enumerate() {
            if f {
                out[i] = 0.0;
                out[n + i] = 0.0;
            }
        }
        Ok(out)
    }
}

fn scale(v: &[f64], a: f64) -> Vec<f64> {
    v.iter().map(|x| x * a).collect()
}
