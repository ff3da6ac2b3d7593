//! SIMP interpolation blended with the level-set solid fraction.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    pub e_solid: f64,
    pub e_void: f64,
    pub nu: f64,
    pub theta_solid: f64,
    pub theta_void: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel {
            e_solid: 2.0e3,
            e_void: 1.0e-8,
            nu: 0.4,
            theta_solid: 1.0,
            theta_void: 0.0,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_void > 0.0 && self.e_solid > self.e_void) {
            return Err(Error::invalid("material moduli must satisfy E_S > E_V > 0"));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::invalid("Poisson ratio must be in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Ersatz Young's modulus of an element with projected density `rho` and
/// solid fraction `frac`:
/// `E = E_V + frac (E_S - E_V) rho^beta`.
///
/// Equals `E_S` for a fully solid, fully dense element and `E_V` for a void
/// one, and never drops below `E_V`.
#[inline]
pub fn element_modulus(rho: f64, frac: f64, beta: f64, mat: &MaterialModel) -> f64 {
    mat.e_void + frac * (mat.e_solid - mat.e_void) * rho.powf(beta)
}

/// Material density `frac θ_S rho` (void contributes nothing).
#[inline]
pub fn element_material_density(rho: f64, frac: f64, mat: &MaterialModel) -> f64 {
    frac * mat.theta_solid * rho
}

/// `(dE/drho, dE/dfrac)`.
#[inline]
pub fn modulus_derivatives(rho: f64, frac: f64, beta: f64, mat: &MaterialModel) -> (f64, f64) {
    let de = mat.e_solid - mat.e_void;
    let d_rho = if rho > 0.0 {
        frac * de * beta * rho.powf(beta - 1.0)
    } else if beta == 1.0 {
        frac * de
    } else {
        0.0
    };
    (d_rho, de * rho.powf(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corner_values() {
        let m = MaterialModel::default();
        assert!((element_modulus(1.0, 1.0, 12.0, &m) - 2.0e3).abs() < 1e-12);
        assert!((element_modulus(1.0, 1.0, 2.0, &m) - 2.0e3).abs() < 1e-12);
        for rho in [0.0, 0.3, 1.0] {
            assert_eq!(element_modulus(rho, 0.0, 3.0, &m), 1e-8);
        }
        assert!((element_modulus(0.5, 1.0, 2.0, &m) - 500.0).abs() < 1e-8);
        assert!(element_modulus(0.0, 1.0, 2.0, &m) > 0.0);
    }

    #[test]
    fn densities() {
        let m = MaterialModel::default();
        assert_eq!(element_material_density(1.0, 1.0, &m), 1.0);
        assert_eq!(element_material_density(0.7, 1.0, &m), 0.7);
        assert_eq!(element_material_density(1.0, 0.25, &m), 0.25);
    }

    #[test]
    fn derivative_closed_forms() {
        let m = MaterialModel::default();
        let (dr, _) = modulus_derivatives(1.0, 1.0, 12.0, &m);
        assert!((dr - 2.4e4).abs() < 1e-6);
        assert_eq!(modulus_derivatives(0.0, 1.0, 2.0, &m).0, 0.0);
        assert_eq!(modulus_derivatives(0.0, 0.7, 12.0, &m).0, 0.0);
    }

    #[test]
    fn derivatives_match_fd() {
        let m = MaterialModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rho: f64 = rng.gen_range(0.05..0.95);
            let f: f64 = rng.gen_range(0.05..0.95);
            let beta: f64 = rng.gen_range(1.0..12.0);
            let eps = 1e-6;
            let (dr, df) = modulus_derivatives(rho, f, beta, &m);
            let fdr = (element_modulus(rho + eps, f, beta, &m) - element_modulus(rho - eps, f, beta, &m)) / (2.0 * eps);
            let fdf = (element_modulus(rho, f + eps, beta, &m) - element_modulus(rho, f - eps, beta, &m)) / (2.0 * eps);
            assert!((dr - fdr).abs() <= 1e-7 * dr.abs().max(1.0), "{dr} {fdr}");
            assert!((df - fdf).abs() <= 1e-7 * df.abs().max(1.0), "{df} {fdf}");
        }
    }

    #[test]
    fn monotone() {
        let m = MaterialModel::default();
        for k in 0..50 {
            let a = k as f64 / 50.0;
            let b = (k + 1) as f64 / 50.0;
            assert!(element_modulus(b, 0.6, 3.0, &m) >= element_modulus(a, 0.6, 3.0, &m));
            assert!(element_modulus(0.6, b, 3.0, &m) >= element_modulus(0.6, a, 3.0, &m));
        }
    }

    #[test]
    fn validation() {
        assert!(MaterialModel::default().validate().is_ok());
        let bad = MaterialModel { nu: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MaterialModel { e_void: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
