//! Bilinear quadrilateral (Q4) element on a square of edge `h`.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaneModel {
    #[default]
    Stress,
    Strain,
}

pub(crate) const GAUSS: f64 = 0.577_350_269_189_625_8;

// Corner natural coordinates, counterclockwise from lower-left.
const XI: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Constitutive matrix for unit Young's modulus.
pub fn constitutive(nu: f64, model: PlaneModel) -> [[f64; 3]; 3] {
    match model {
        PlaneModel::Stress => {
            let c = 1.0 / (1.0 - nu * nu);
            [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]]
        }
        PlaneModel::Strain => {
            let c = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
            [
                [c * (1.0 - nu), c * nu, 0.0],
                [c * nu, c * (1.0 - nu), 0.0],
                [0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0],
            ]
        }
    }
}

/// Shape function values at natural coordinates `(xi, eta)`.
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    XI.map(|c| 0.25 * (1.0 + c[0] * xi) * (1.0 + c[1] * eta))
}

/// Strain-displacement matrix (3 × 8) for an element of edge `h`.
pub fn strain_matrix(xi: f64, eta: f64, h: f64) -> [[f64; 8]; 3] {
    let mut b = [[0.0; 8]; 3];
    for (a, c) in XI.iter().enumerate() {
        // dN/dx = (2/h) dN/dxi
        let dx = 0.25 * c[0] * (1.0 + c[1] * eta) * 2.0 / h;
        let dy = 0.25 * c[1] * (1.0 + c[0] * xi) * 2.0 / h;
        b[0][2 * a] = dx;
        b[1][2 * a + 1] = dy;
        b[2][2 * a] = dy;
        b[2][2 * a + 1] = dx;
    }
    b
}

/// Unit-modulus element stiffness (2 × 2 Gauss), exactly symmetric.
pub fn unit_stiffness(h: f64, nu: f64, thickness: f64, model: PlaneModel) -> [[f64; 8]; 8] {
    let d = constitutive(nu, model);
    let det_j = h * h / 4.0;
    let mut k = [[0.0; 8]; 8];
    for gx in [-GAUSS, GAUSS] {
        for gy in [-GAUSS, GAUSS] {
            let b = strain_matrix(gx, gy, h);
            let mut db = [[0.0; 8]; 3];
            for r in 0..3 {
                for c in 0..8 {
                    db[r][c] = (0..3).map(|s| d[r][s] * b[s][c]).sum();
                }
            }
            for i in 0..8 {
                for j in 0..8 {
                    k[i][j] += (0..3).map(|s| b[s][i] * db[s][j]).sum::<f64>() * det_j * thickness;
                }
            }
        }
    }
    for i in 0..8 {
        for j in i + 1..8 {
            let m = 0.5 * (k[i][j] + k[j][i]);
            k[i][j] = m;
            k[j][i] = m;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stiffness_is_symmetric_with_rigid_modes() {
        let k = unit_stiffness(0.7, 0.3, 1.0, PlaneModel::Stress);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(k[i][j], k[j][i]);
            }
        }
        // translations and the infinitesimal rotation produce no force
        let h = 0.7;
        let pos = [[0.0, 0.0], [h, 0.0], [h, h], [0.0, h]];
        let modes: [[f64; 8]; 3] = [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            std::array::from_fn(|d| if d % 2 == 0 { -pos[d / 2][1] } else { pos[d / 2][0] }),
        ];
        for m in &modes {
            for i in 0..8 {
                let f: f64 = (0..8).map(|j| k[i][j] * m[j]).sum();
                assert!(f.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_functions_partition_unity() {
        for (x, y) in [(0.1, -0.3), (0.9, 0.9), (-1.0, 1.0)] {
            let n = shape(x, y);
            assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(shape(-1.0, -1.0), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_closed_form_for_square() {
        // Classic closed-form Q4 stiffness of a unit square, plane stress,
        // E = 1: first row (1/(1-nu^2)) [1/2 - nu/6, 1/8 + nu/8, -1/4 - nu/12, -1/8 + 3nu/8, ...]
        let nu = 0.3;
        let k = unit_stiffness(1.0, nu, 1.0, PlaneModel::Stress);
        let c = 1.0 / (1.0 - nu * nu);
        let ke = [
            0.5 - nu / 6.0,
            0.125 + nu / 8.0,
            -0.25 - nu / 12.0,
            -0.125 + 3.0 * nu / 8.0,
            -0.25 + nu / 12.0,
            -0.125 - nu / 8.0,
            nu / 6.0,
            0.125 - 3.0 * nu / 8.0,
        ];
        for j in 0..8 {
            assert!((k[0][j] - c * ke[j]).abs() < 1e-14, "{j}: {} vs {}", k[0][j], c * ke[j]);
        }
    }
}
