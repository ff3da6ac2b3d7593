//! Plane linear elasticity on the structured grid: assembly, direct solve,
//! strain energy, masses and element energy densities for the adjoint.

mod banded;
mod element;

pub use banded::{BandCholesky, BandMatrix};
pub use element::{constitutive, shape, strain_matrix, unit_stiffness, PlaneModel};

use crate::error::{Error, Result};
use crate::geometry::SolidFractionField;
use crate::grid::StructuredGrid;
use crate::material::MaterialModel;
use crate::par;

/// Displacement constraint on every node of a set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dirichlet {
    pub nodes: Vec<usize>,
    /// 0 for x, 1 for y.
    pub component: usize,
    pub value: f64,
}

/// Uniform traction (force per unit length per unit thickness) on a set of
/// boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Traction {
    pub edges: Vec<[usize; 2]>,
    pub traction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityProblem {
    pub dirichlet: Vec<Dirichlet>,
    pub tractions: Vec<Traction>,
    pub thickness: f64,
    pub model: PlaneModel,
}

/// Assembled global stiffness in CSR form (all dofs, constraints not applied).
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl StiffnessMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        par::map_range(self.n, |i| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    /// `max |K_ij - K_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub k: StiffnessMatrix,
    pub psi: f64,
    pub constrained: Vec<bool>,
    /// `‖K u − f‖ / ‖f‖` over the free dofs.
    pub residual: f64,
}

/// Element stiffness for unit modulus, shared by all elements of a grid.
pub fn reference_stiffness(grid: &StructuredGrid, mat: &MaterialModel, problem: &ElasticityProblem) -> [[f64; 8]; 8] {
    unit_stiffness(grid.h, mat.nu, problem.thickness, problem.model)
}

/// Elements touching node `(i, j)`, ascending, with the node's local corner.
fn node_elements(grid: &StructuredGrid, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    // (element offset, local corner of the node in that element)
    [(-1isize, -1isize, 2usize), (0, -1, 3), (-1, 0, 1), (0, 0, 0)]
        .into_iter()
        .filter_map(move |(di, dj, corner)| {
            let ei = i as isize + di;
            let ej = j as isize + dj;
            if ei < 0 || ej < 0 || ei >= grid.nx as isize || ej >= grid.ny as isize {
                None
            } else {
                Some((ej as usize * grid.nx + ei as usize, corner))
            }
        })
}

pub fn assemble(grid: &StructuredGrid, e_field: &[f64], k0: &[[f64; 8]; 8]) -> StiffnessMatrix {
    let nn = grid.num_nodes();
    // Each node couples to its 3x3 lattice neighborhood; slot (dj+1)*3+(di+1).
    let rows: Vec<(Vec<usize>, [Vec<f64>; 2])> = par::map_range(nn, |n| {
        let (i, j) = grid.node_ij(n);
        let mut block = [[[0.0f64; 2]; 2]; 9];
        let mut used = [false; 9];
        for (e, a) in node_elements(grid, i, j) {
            let nodes = grid.elem_nodes(e);
            let ee = e_field[e];
            for (b, &m) in nodes.iter().enumerate() {
                let (mi, mj) = grid.node_ij(m);
                let slot = (mj + 1 - j) * 3 + (mi + 1 - i);
                used[slot] = true;
                for c in 0..2 {
                    for c2 in 0..2 {
                        block[slot][c][c2] += ee * k0[2 * a + c][2 * b + c2];
                    }
                }
            }
        }
        let mut cols = Vec::with_capacity(18);
        let mut vals = [Vec::with_capacity(18), Vec::with_capacity(18)];
        for slot in 0..9 {
            if !used[slot] {
                continue;
            }
            let mi = i + slot % 3 - 1;
            let mj = j + slot / 3 - 1;
            let m = grid.node_id(mi, mj);
            for c2 in 0..2 {
                cols.push(2 * m + c2);
                vals[0].push(block[slot][0][c2]);
                vals[1].push(block[slot][1][c2]);
            }
        }
        (cols, vals)
    });

    let mut row_ptr = Vec::with_capacity(2 * nn + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for (c, v) in rows {
        for comp in 0..2 {
            cols.extend_from_slice(&c);
            vals.extend_from_slice(&v[comp]);
            row_ptr.push(cols.len());
        }
    }
    StiffnessMatrix {
        n: 2 * nn,
        row_ptr,
        cols,
        vals,
    }
}

/// Consistent nodal forces of all tractions.
pub fn load_vector(grid: &StructuredGrid, problem: &ElasticityProblem) -> Vec<f64> {
    let mut f = vec![0.0; 2 * grid.num_nodes()];
    for t in &problem.tractions {
        for &[a, b] in &t.edges {
            let pa = grid.node_coords(a);
            let pb = grid.node_coords(b);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            for c in 0..2 {
                let share = 0.5 * t.traction[c] * len * problem.thickness;
                f[2 * a + c] += share;
                f[2 * b + c] += share;
            }
        }
    }
    f
}

/// Solve `K(E) u = f` with the problem's constraints eliminated.
pub fn assemble_and_solve(
    grid: &StructuredGrid,
    e_field: &[f64],
    problem: &ElasticityProblem,
    mat: &MaterialModel,
) -> Result<SolveResult> {
    if e_field.len() != grid.num_elements() {
        return Err(Error::invalid("one modulus per element required"));
    }
    if let Some(bad) = e_field.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("element {bad} modulus must be positive")));
    }
    let k0 = reference_stiffness(grid, mat, problem);
    let k = assemble(grid, e_field, &k0);
    let f = load_vector(grid, problem);
    let ndof = k.size();

    let mut constrained = vec![false; ndof];
    let mut u = vec![0.0; ndof];
    for d in &problem.dirichlet {
        for &n in &d.nodes {
            constrained[2 * n + d.component] = true;
            u[2 * n + d.component] = d.value;
        }
    }

    // Free dofs in an order that keeps the band narrow: nodes are visited
    // along the shorter grid axis first.
    let nodes_order: Vec<usize> = if grid.nx >= grid.ny {
        (0..=grid.nx)
            .flat_map(|i| (0..=grid.ny).map(move |j| (i, j)))
            .map(|(i, j)| grid.node_id(i, j))
            .collect()
    } else {
        (0..grid.num_nodes()).collect()
    };
    let free: Vec<usize> = nodes_order
        .iter()
        .flat_map(|&n| [2 * n, 2 * n + 1])
        .filter(|&d| !constrained[d])
        .collect();
    let mut reduced = vec![usize::MAX; ndof];
    for (r, &d) in free.iter().enumerate() {
        reduced[d] = r;
    }
    let mut bw = 0;
    for (r, &d) in free.iter().enumerate() {
        for (c, _) in k.row(d) {
            let rc = reduced[c];
            if rc != usize::MAX && rc < r {
                bw = bw.max(r - rc);
            }
        }
    }

    let mut band = BandMatrix::zeros(free.len(), bw);
    let mut rhs = vec![0.0; free.len()];
    for (r, &d) in free.iter().enumerate() {
        let mut b = f[d];
        for (c, v) in k.row(d) {
            let rc = reduced[c];
            if rc == usize::MAX {
                b -= v * u[c];
            } else if rc <= r {
                band.add_lower(r, rc, v);
            }
        }
        rhs[r] = b;
    }
    let chol = band
        .factorize()
        .map_err(|row| banded::singular(vec![free[row]]))?;

    let mut x = rhs.clone();
    chol.solve_in_place(&mut x);
    for (r, &d) in free.iter().enumerate() {
        u[d] = x[r];
    }

    let f_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut residual = free_residual(&k, &u, &f, &free);
    // A couple of refinement sweeps absorb the roundoff of strongly
    // heterogeneous moduli.
    for _ in 0..3 {
        let r_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= 1e-12 * f_norm || f_norm == 0.0 {
            break;
        }
        let mut corr = residual.clone();
        chol.solve_in_place(&mut corr);
        for (r, &d) in free.iter().enumerate() {
            u[d] += corr[r];
        }
        residual = free_residual(&k, &u, &f, &free);
    }
    banded::check_finite(&u, "displacements")?;
    let r_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = if f_norm > 0.0 { r_norm / f_norm } else { r_norm };

    // ½ fᵀu equals ½ uᵀKu at the solution and only involves the loaded
    // dofs, so it is insensitive to the ill-determined displacements of
    // floating void regions.
    let psi = 0.5 * f.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
    Ok(SolveResult {
        u,
        f,
        k,
        psi,
        constrained,
        residual: rel,
    })
}

// f - K u restricted to the free dofs (in reduced order).
fn free_residual(k: &StiffnessMatrix, u: &[f64], f: &[f64], free: &[usize]) -> Vec<f64> {
    par::map_range(free.len(), |r| {
        let d = free[r];
        f[d] - k.row(d).map(|(c, v)| v * u[c]).sum::<f64>()
    })
}

/// `½ fᵀ u`.
pub fn strain_energy(res: &SolveResult) -> f64 {
    res.psi
}

/// `u_eᵀ K0 u_e` for every element (unit-modulus element energy, doubled).
pub fn element_energies(grid: &StructuredGrid, u: &[f64], k0: &[[f64; 8]; 8]) -> Vec<f64> {
    par::map_range(grid.num_elements(), |e| {
        let nodes = grid.elem_nodes(e);
        let ue: [f64; 8] = std::array::from_fn(|d| u[2 * nodes[d / 2] + d % 2]);
        let mut s = 0.0;
        for i in 0..8 {
            let mut row = 0.0;
            for j in 0..8 {
                row += k0[i][j] * ue[j];
            }
            s += ue[i] * row;
        }
        s
    })
}

/// `dΨ/dE_e = −½ u_eᵀ K0 u_e` (loads independent of the design, homogeneous
/// constraints).
pub fn strain_energy_modulus_gradient(grid: &StructuredGrid, u: &[f64], k0: &[[f64; 8]; 8]) -> Vec<f64> {
    element_energies(grid, u, k0).into_iter().map(|v| -0.5 * v).collect()
}

/// Stress `[σxx, σyy, σxy]` at the center of element `e`.
pub fn element_stress(
    grid: &StructuredGrid,
    u: &[f64],
    e: usize,
    modulus: f64,
    nu: f64,
    model: PlaneModel,
) -> [f64; 3] {
    let nodes = grid.elem_nodes(e);
    let ue: [f64; 8] = std::array::from_fn(|d| u[2 * nodes[d / 2] + d % 2]);
    let b = strain_matrix(0.0, 0.0, grid.h);
    let d = constitutive(nu, model);
    let strain: [f64; 3] = std::array::from_fn(|r| (0..8).map(|c| b[r][c] * ue[c]).sum());
    std::array::from_fn(|r| modulus * (0..3).map(|s| d[r][s] * strain[s]).sum::<f64>())
}

/// Solid-phase mass `Σ_e f_e θ_S ρ̂_e h² t` and its gradients with respect to
/// nodal `ρ̂` and nodal `φ`.
pub fn solid_mass(
    grid: &StructuredGrid,
    elem_rho_hat: &[f64],
    fractions: &SolidFractionField,
    mat: &MaterialModel,
    thickness: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let vol = grid.h * grid.h * thickness;
    let ne = grid.num_elements();
    let mass = par::ordered_sum(ne, |e| {
        crate::material::element_material_density(elem_rho_hat[e], fractions.fractions[e], mat) * vol
    });
    let mut d_rho = vec![0.0; grid.num_nodes()];
    let mut d_phi = vec![0.0; grid.num_nodes()];
    for e in 0..ne {
        let nodes = grid.elem_nodes(e);
        let dr = fractions.fractions[e] * mat.theta_solid * vol * 0.25;
        let df = mat.theta_solid * elem_rho_hat[e] * vol;
        for (k, &n) in nodes.iter().enumerate() {
            d_rho[n] += dr;
            d_phi[n] += df * fractions.d_dphi[e][k];
        }
    }
    (mass, d_rho, d_phi)
}

/// Two-phase mass `Σ_e θ_S ρ̂_e h² t` and its nodal `ρ̂` gradient.
pub fn total_mass(
    grid: &StructuredGrid,
    elem_rho_hat: &[f64],
    mat: &MaterialModel,
    thickness: f64,
) -> (f64, Vec<f64>) {
    let vol = grid.h * grid.h * thickness;
    let mass = par::ordered_sum(grid.num_elements(), |e| mat.theta_solid * elem_rho_hat[e] * vol);
    let mut d_rho = vec![0.0; grid.num_nodes()];
    for e in 0..grid.num_elements() {
        for &n in &grid.elem_nodes(e) {
            d_rho[n] += mat.theta_solid * vol * 0.25;
        }
    }
    (mass, d_rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::solid_fractions;
    use crate::grid::build_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cantilever(nx: usize, ny: usize, load: f64) -> (StructuredGrid, ElasticityProblem) {
        let g = build_grid(nx, ny, 1.0, [0.0, 0.0]).unwrap();
        let left = g.node_sets["left"].clone();
        let right = g.side_sets["right"].clone();
        let p = ElasticityProblem {
            dirichlet: vec![
                Dirichlet { nodes: left.clone(), component: 0, value: 0.0 },
                Dirichlet { nodes: left, component: 1, value: 0.0 },
            ],
            tractions: vec![Traction { edges: right, traction: [0.0, -load / ny as f64] }],
            thickness: 1.0,
            model: PlaneModel::Stress,
        };
        (g, p)
    }

    #[test]
    fn patch_test_uniform_tension() {
        let g = build_grid(1, 1, 1.0, [0.0, 0.0]).unwrap();
        let sigma = 3.0;
        let mat = MaterialModel { nu: 0.3, ..Default::default() };
        let e_mod = 200.0;
        let p = ElasticityProblem {
            dirichlet: vec![
                Dirichlet { nodes: g.node_sets["left"].clone(), component: 0, value: 0.0 },
                Dirichlet { nodes: vec![0], component: 1, value: 0.0 },
            ],
            tractions: vec![Traction { edges: g.side_sets["right"].clone(), traction: [sigma, 0.0] }],
            thickness: 1.0,
            model: PlaneModel::Stress,
        };
        let res = assemble_and_solve(&g, &[e_mod], &p, &mat).unwrap();
        for n in 0..4 {
            let [x, y] = g.node_coords(n);
            assert!((res.u[2 * n] - sigma * x / e_mod).abs() < 1e-10);
            assert!((res.u[2 * n + 1] + mat.nu * sigma * y / e_mod).abs() < 1e-10);
        }
        let s = element_stress(&g, &res.u, 0, e_mod, mat.nu, PlaneModel::Stress);
        assert!((s[0] - sigma).abs() < 1e-10 && s[1].abs() < 1e-10 && s[2].abs() < 1e-10);
    }

    #[test]
    fn multi_element_patch_gives_constant_stress() {
        let g = build_grid(4, 3, 0.5, [0.0, 0.0]).unwrap();
        let mat = MaterialModel { nu: 0.25, ..Default::default() };
        let p = ElasticityProblem {
            dirichlet: vec![
                Dirichlet { nodes: g.node_sets["left"].clone(), component: 0, value: 0.0 },
                Dirichlet { nodes: vec![0], component: 1, value: 0.0 },
            ],
            tractions: vec![Traction { edges: g.side_sets["right"].clone(), traction: [2.0, 0.0] }],
            thickness: 1.0,
            model: PlaneModel::Stress,
        };
        let e = vec![50.0; g.num_elements()];
        let res = assemble_and_solve(&g, &e, &p, &mat).unwrap();
        for el in 0..g.num_elements() {
            let s = element_stress(&g, &res.u, el, 50.0, mat.nu, PlaneModel::Stress);
            assert!((s[0] - 2.0).abs() < 1e-10 && s[1].abs() < 1e-10 && s[2].abs() < 1e-10);
        }
    }

    #[test]
    fn zero_load_gives_zero_response() {
        let (g, p) = cantilever(4, 2, 0.0);
        let res = assemble_and_solve(&g, &[1.0; 8], &p, &MaterialModel::default()).unwrap();
        assert!(res.u.iter().all(|&v| v == 0.0));
        assert_eq!(strain_energy(&res), 0.0);
    }

    #[test]
    fn cantilever_tip_deflection() {
        let (g, p) = cantilever(8, 2, 1.0);
        let mat = MaterialModel { nu: 0.3, ..Default::default() };
        let e = 1000.0;
        let res = assemble_and_solve(&g, &vec![e; g.num_elements()], &p, &mat).unwrap();
        let tip: f64 = g.node_sets["right"].iter().map(|&n| res.u[2 * n + 1]).sum::<f64>() / 3.0;
        let inertia = 2.0f64.powi(3) / 12.0;
        let beam = -8.0f64.powi(3) / (3.0 * e * inertia);
        assert!((tip - beam).abs() / beam.abs() < 0.15, "{tip} vs {beam}");
    }

    #[test]
    fn energy_identities_and_symmetry() {
        let (g, p) = cantilever(10, 4, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mat = MaterialModel::default();
        let e: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen_range(1.0..100.0)).collect();
        let res = assemble_and_solve(&g, &e, &p, &mat).unwrap();
        assert_eq!(res.k.max_asymmetry(), 0.0);
        assert!(res.residual <= 1e-9);
        let half_fu = 0.5 * res.f.iter().zip(&res.u).map(|(a, b)| a * b).sum::<f64>();
        assert!((half_fu - res.psi).abs() <= 1e-10 * res.psi.abs());

        let (_, p2) = cantilever(10, 4, 4.0);
        let res2 = assemble_and_solve(&g, &e, &p2, &mat).unwrap();
        assert!((res2.psi - 4.0 * res.psi).abs() <= 1e-10 * res2.psi);
    }

    #[test]
    fn high_contrast_residual() {
        // Solid cantilever riddled with void holes at the full modulus contrast.
        let (g, p) = cantilever(30, 10, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mat = MaterialModel::default();
        let holes: Vec<[f64; 2]> = (0..12).map(|_| [rng.gen_range(2.0..28.0), rng.gen_range(0.0..10.0)]).collect();
        let e: Vec<f64> = (0..g.num_elements())
            .map(|el| {
                let o = g.elem_origin(el);
                let c = [o[0] + 0.5, o[1] + 0.5];
                let inside = holes.iter().any(|hc| (c[0] - hc[0]).powi(2) + (c[1] - hc[1]).powi(2) < 2.5);
                if inside { mat.e_void } else { mat.e_solid }
            })
            .collect();
        let res = assemble_and_solve(&g, &e, &p, &mat).unwrap();
        assert!(res.residual <= 1e-9, "{}", res.residual);
    }

    #[test]
    fn stiffer_element_lowers_energy() {
        let (g, p) = cantilever(8, 3, 1.0);
        let mat = MaterialModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen_range(10.0..100.0)).collect();
        let base = assemble_and_solve(&g, &e, &p, &mat).unwrap();
        let k0 = reference_stiffness(&g, &mat, &p);
        let grad = strain_energy_modulus_gradient(&g, &base.u, &k0);
        for _ in 0..5 {
            let el = rng.gen_range(0..g.num_elements());
            let mut e2 = e.clone();
            e2[el] *= 1.5;
            let r2 = assemble_and_solve(&g, &e2, &p, &mat).unwrap();
            assert!(r2.psi <= base.psi);
            assert!(grad[el] <= 0.0);
            let h = 1e-4 * e[el];
            let mut ep = e.clone();
            ep[el] += h;
            let mut em = e.clone();
            em[el] -= h;
            let fd = (assemble_and_solve(&g, &ep, &p, &mat).unwrap().psi
                - assemble_and_solve(&g, &em, &p, &mat).unwrap().psi)
                / (2.0 * h);
            assert!((fd - grad[el]).abs() <= 1e-6 * grad[el].abs(), "{fd} {}", grad[el]);
        }
    }

    #[test]
    fn unconstrained_is_singular() {
        let (g, mut p) = cantilever(3, 2, 1.0);
        p.dirichlet.clear();
        let err = assemble_and_solve(&g, &[1.0; 6], &p, &MaterialModel::default()).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn masses() {
        let g = build_grid(120, 40, 1.0, [0.0, 0.0]).unwrap();
        let mat = MaterialModel::default();
        let ones = vec![1.0; g.num_elements()];
        let fr = solid_fractions(&g, &vec![1.0; g.num_nodes()]);
        assert!((solid_mass(&g, &ones, &fr, &mat, 1.0).0 - 4800.0).abs() < 1e-9);
        let void = solid_fractions(&g, &vec![-1.0; g.num_nodes()]);
        assert_eq!(solid_mass(&g, &ones, &void, &mat, 1.0).0, 0.0);
        assert!((total_mass(&g, &ones, &mat, 1.0).0 - 4800.0).abs() < 1e-9);
        let p4 = vec![0.4; g.num_elements()];
        assert!((total_mass(&g, &p4, &mat, 1.0).0 - 1920.0).abs() < 1e-9);
    }

    #[test]
    fn total_mass_partitions_into_phases() {
        let g = build_grid(16, 10, 1.0, [0.0, 0.0]).unwrap();
        let mat = MaterialModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let phi: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen()).collect();
        let fr = solid_fractions(&g, &phi);
        let solid = solid_mass(&g, &rho, &fr, &mat, 1.0).0;
        let void: f64 = (0..g.num_elements()).map(|e| (1.0 - fr.fractions[e]) * rho[e]).sum();
        let total = total_mass(&g, &rho, &mat, 1.0).0;
        assert!((solid + void - total).abs() < 1e-10);
    }

    #[test]
    fn solid_mass_gradient_matches_fd() {
        let g = build_grid(10, 6, 1.0, [0.0, 0.0]).unwrap();
        let mat = MaterialModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen()).collect();
        let mass_of = |phi: &[f64], rho: &[f64]| {
            let fr = solid_fractions(&g, phi);
            solid_mass(&g, &g.element_average(rho), &fr, &mat, 1.0)
        };
        let (_, d_rho, d_phi) = mass_of(&phi, &rho);
        let eps = 1e-6;
        for _ in 0..10 {
            let n = rng.gen_range(0..g.num_nodes());
            if phi[n].abs() < 1e-3 {
                continue;
            }
            let mut p = phi.clone();
            p[n] += eps;
            let mut m = phi.clone();
            m[n] -= eps;
            let fd = (mass_of(&p, &rho).0 - mass_of(&m, &rho).0) / (2.0 * eps);
            assert!((fd - d_phi[n]).abs() <= 1e-5 * fd.abs().max(d_phi[n].abs()).max(1e-6));
            let mut p = rho.clone();
            p[n] += eps;
            let mut m = rho.clone();
            m[n] -= eps;
            let fd = (mass_of(&phi, &p).0 - mass_of(&phi, &m).0) / (2.0 * eps);
            assert!((fd - d_rho[n]).abs() <= 1e-5 * fd.abs().max(1e-6));
        }
    }
}
