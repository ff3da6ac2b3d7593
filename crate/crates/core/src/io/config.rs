//! Run configuration: a TOML file whose keys may sit at the top level or
//! under their section header. Every key is optional; unknown keys are
//! rejected.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    StrainEnergyMin,
    MassMinTotal,
    MassMinSolid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    #[default]
    Stress,
    Strain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Defaults to `1.5 h`.
    pub level_set_filter_radius: f64,
    /// Defaults to `4 h`.
    pub density_filter_radius: f64,
    pub projection_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub step_size: usize,
    pub continuation_length: usize,
    pub max_iterations: usize,
    pub gamma_pr_initial: f64,
    pub gamma_pr_final: f64,
    pub beta_rho_initial: f64,
    pub beta_rho_final: f64,
    /// Multiples of the initial density.
    pub rho_th_initial_factor: f64,
    pub rho_th_final_factor: f64,
    pub eta_gamma: f64,
    pub eta_beta: f64,
    pub eta_rho: f64,
    pub w2_initial: f64,
    pub w2_final: f64,
    pub eta_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub youngs_modulus_solid: f64,
    pub youngs_modulus_void: f64,
    pub poisson_ratio: f64,
    pub density_solid: f64,
    pub density_void: f64,
    pub plane: Plane,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub variant: Variant,
    pub w1: f64,
    pub w3: f64,
    pub w4: f64,
    /// Defaults to 1.5, 0 or 10 depending on the variant.
    pub w5: f64,
    pub target_mass_fraction: f64,
    /// Absolute strain-energy bound of the mass-minimization variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strain_energy_limit: Option<f64>,
    /// Bound as a multiple of the initial strain energy when no absolute
    /// bound is given.
    pub strain_energy_limit_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub xi: f64,
    /// Multiple of the lower level-set bound.
    pub phi_th_hs_factor: f64,
    /// Multiple of the lower level-set bound.
    pub phi_th_fs_factor: f64,
    pub w_phi: f64,
    pub w_grad_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Level-set bounds in units of `h`.
    pub phi_upper_factor: f64,
    pub phi_lower_factor: f64,
    /// Initial level set as a multiple of the upper bound.
    pub initial_phi_factor: f64,
    /// Defaults to the target mass fraction.
    pub initial_density: f64,
    pub seeded_holes_x: usize,
    pub seeded_holes_y: usize,
    /// Hole extent as a fraction of its pattern cell.
    pub seeded_hole_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub traction: f64,
    /// Width of the full (unmirrored) load patch in elements.
    pub load_patch_elements: usize,
    /// Depth of the frozen pad under the load, in elements.
    pub frozen_depth: usize,
    /// Width and height of the frozen pad at the support, in elements.
    pub support_pad_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub move_limit_phi: f64,
    pub move_limit_rho: f64,
    pub gcmma_inner_iterations: usize,
    pub subproblem_tol: f64,
    pub asymptote_init: f64,
    pub asymptote_increase: f64,
    pub asymptote_decrease: f64,
    pub asymptote_min_gap: f64,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub constraint_tol: f64,
    pub solver_residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub fd_samples: usize,
    /// Central-difference step in units of `h` for level-set variables and
    /// absolute for densities.
    pub fd_step: f64,
    /// Iteration whose continuation parameters the check uses.
    pub fd_iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub output_every: usize,
    /// Fill the `wall_ms` history column; off keeps reruns byte-identical.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub filter: FilterConfig,
    pub schedule: ScheduleConfig,
    pub material: MaterialConfig,
    pub objective: ObjectiveConfig,
    pub penalty: PenaltyConfig,
    pub design: DesignConfig,
    pub load: LoadConfig,
    pub optimizer: OptimizerConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridConfig { nx: 120, ny: 40, h: 1.0 },
            filter: FilterConfig {
                level_set_filter_radius: 1.5,
                density_filter_radius: 4.0,
                projection_threshold: 0.001,
            },
            schedule: ScheduleConfig {
                step_size: 10,
                continuation_length: 100,
                max_iterations: 175,
                gamma_pr_initial: 0.001,
                gamma_pr_final: 40.0,
                beta_rho_initial: 2.0,
                beta_rho_final: 12.0,
                rho_th_initial_factor: 0.25,
                rho_th_final_factor: 0.9,
                eta_gamma: 2.0,
                eta_beta: 2.0,
                eta_rho: 2.0,
                w2_initial: 0.005,
                w2_final: 0.01,
                eta_w2: 2.0,
            },
            material: MaterialConfig {
                youngs_modulus_solid: 2.0e3,
                youngs_modulus_void: 1.0e-8,
                poisson_ratio: 0.4,
                density_solid: 1.0,
                density_void: 0.0,
                plane: Plane::Stress,
                thickness: 1.0,
            },
            objective: ObjectiveConfig {
                variant: Variant::StrainEnergyMin,
                w1: 0.8345,
                w3: 0.015,
                w4: 0.150,
                w5: 1.50,
                target_mass_fraction: 0.40,
                strain_energy_limit: None,
                strain_energy_limit_factor: 1.0,
            },
            penalty: PenaltyConfig {
                xi: 0.1,
                phi_th_hs_factor: 0.1,
                phi_th_fs_factor: 0.5,
                w_phi: 1.0,
                w_grad_phi: 1.0,
            },
            design: DesignConfig {
                phi_upper_factor: 3.0,
                phi_lower_factor: -3.0,
                initial_phi_factor: 0.1,
                initial_density: 0.40,
                seeded_holes_x: 0,
                seeded_holes_y: 0,
                seeded_hole_fraction: 0.5,
            },
            load: LoadConfig {
                traction: -10.0,
                load_patch_elements: 4,
                frozen_depth: 3,
                support_pad_elements: 3,
            },
            optimizer: OptimizerConfig {
                move_limit_phi: 0.1,
                move_limit_rho: 0.2,
                gcmma_inner_iterations: 0,
                subproblem_tol: 1e-9,
                asymptote_init: 0.5,
                asymptote_increase: 1.2,
                asymptote_decrease: 0.7,
                asymptote_min_gap: 1e-5,
                convergence_tol: 1e-3,
                convergence_window: 3,
                constraint_tol: 1e-3,
                solver_residual_tol: 1e-9,
            },
            verify: VerifyConfig {
                seed: 0,
                fd_samples: 20,
                fd_step: 3e-4,
                fd_iteration: 50,
            },
            output: OutputConfig {
                output_every: 25,
                record_wall_time: false,
            },
        }
    }
}

/// Default `w5` of a problem variant.
pub fn default_w5(variant: Variant) -> f64 {
    match variant {
        Variant::StrainEnergyMin => 1.5,
        Variant::MassMinTotal => 0.0,
        Variant::MassMinSolid => 10.0,
    }
}

fn defaults_table() -> toml::Table {
    toml::Table::try_from(RunConfig::default()).expect("default config serializes")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigValidation {
        key: key.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parse configuration text. Keys missing from `text` take their
    /// defaults; defaults that depend on other keys (filter radii, initial
    /// density, `w5`) are derived after the explicit values are known.
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;

        let mut merged = defaults_table();
        let mut provided = BTreeSet::new();
        let section_of = |key: &str| -> Option<String> {
            merged_sections().into_iter().find(|(_, keys)| keys.contains(key)).map(|(s, _)| s)
        };
        for (k, v) in doc {
            match v {
                toml::Value::Table(t) => {
                    let Some(section) = merged.get_mut(&k).and_then(|s| s.as_table_mut()) else {
                        return Err(invalid(&k, "is not a recognized section"));
                    };
                    for (key, value) in t {
                        if !section.contains_key(&key) && !optional_key(&k, &key) {
                            return Err(invalid(&key, format!("is not a recognized key in [{k}]")));
                        }
                        provided.insert(key.clone());
                        section.insert(key, value);
                    }
                }
                value => {
                    let Some(section) = section_of(&k) else {
                        return Err(invalid(&k, "is not a recognized key"));
                    };
                    provided.insert(k.clone());
                    merged[&section].as_table_mut().expect("section").insert(k, value);
                }
            }
        }

        let mut cfg: RunConfig = match toml::Value::Table(merged.clone()).try_into() {
            Ok(c) => c,
            Err(e) => return Err(blame_type_error(&merged, &provided, &e)),
        };

        let h = cfg.grid.h;
        if !provided.contains("level_set_filter_radius") {
            cfg.filter.level_set_filter_radius = 1.5 * h;
        }
        if !provided.contains("density_filter_radius") {
            cfg.filter.density_filter_radius = 4.0 * h;
        }
        if !provided.contains("initial_density") {
            cfg.design.initial_density = cfg.objective.target_mass_fraction;
        }
        if !provided.contains("w5") {
            cfg.objective.w5 = default_w5(cfg.objective.variant);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The effective configuration as TOML with every key explicit.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, "must be > 0"))
            }
        }
        fn nonneg(key: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, "must be >= 0"))
            }
        }
        fn unit_open(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(key, "must be in (0, 1)"))
            }
        }
        fn count(key: &str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(invalid(key, "must be > 0"))
            }
        }

        count("nx", self.grid.nx)?;
        count("ny", self.grid.ny)?;
        positive("h", self.grid.h)?;

        let f = &self.filter;
        positive("level_set_filter_radius", f.level_set_filter_radius)?;
        positive("density_filter_radius", f.density_filter_radius)?;
        unit_open("projection_threshold", f.projection_threshold)?;

        let s = &self.schedule;
        count("max_iterations", s.max_iterations)?;
        positive("gamma_pr_initial", s.gamma_pr_initial)?;
        positive("gamma_pr_final", s.gamma_pr_final)?;
        positive("beta_rho_initial", s.beta_rho_initial)?;
        positive("beta_rho_final", s.beta_rho_final)?;
        nonneg("rho_th_initial_factor", s.rho_th_initial_factor)?;
        nonneg("rho_th_final_factor", s.rho_th_final_factor)?;
        positive("eta_gamma", s.eta_gamma)?;
        positive("eta_beta", s.eta_beta)?;
        positive("eta_rho", s.eta_rho)?;
        nonneg("w2_initial", s.w2_initial)?;
        nonneg("w2_final", s.w2_final)?;
        positive("eta_w2", s.eta_w2)?;

        let m = &self.material;
        positive("youngs_modulus_void", m.youngs_modulus_void)?;
        if !(m.youngs_modulus_solid > m.youngs_modulus_void) {
            return Err(invalid("youngs_modulus_solid", "must be > youngs_modulus_void"));
        }
        if !(0.0..0.5).contains(&m.poisson_ratio) {
            return Err(invalid("poisson_ratio", "must be in [0, 0.5)"));
        }
        positive("density_solid", m.density_solid)?;
        nonneg("density_void", m.density_void)?;
        positive("thickness", m.thickness)?;

        let o = &self.objective;
        positive("w1", o.w1)?;
        nonneg("w3", o.w3)?;
        nonneg("w4", o.w4)?;
        nonneg("w5", o.w5)?;
        unit_open("target_mass_fraction", o.target_mass_fraction)?;
        if let Some(v) = o.strain_energy_limit {
            positive("strain_energy_limit", v)?;
        }
        positive("strain_energy_limit_factor", o.strain_energy_limit_factor)?;

        let p = &self.penalty;
        positive("xi", p.xi)?;
        // Both thresholds are multiples of the (negative) lower bound.
        positive("phi_th_hs_factor", p.phi_th_hs_factor)?;
        positive("phi_th_fs_factor", p.phi_th_fs_factor)?;
        nonneg("w_phi", p.w_phi)?;
        nonneg("w_grad_phi", p.w_grad_phi)?;

        let d = &self.design;
        positive("phi_upper_factor", d.phi_upper_factor)?;
        if !(d.phi_lower_factor < 0.0) {
            return Err(invalid("phi_lower_factor", "must be < 0"));
        }
        if !(-1.0..=1.0).contains(&d.initial_phi_factor) {
            return Err(invalid("initial_phi_factor", "must be in [-1, 1]"));
        }
        if !(0.0..=1.0).contains(&d.initial_density) {
            return Err(invalid("initial_density", "must be in [0, 1]"));
        }
        unit_open("seeded_hole_fraction", d.seeded_hole_fraction)?;

        let l = &self.load;
        if !l.traction.is_finite() {
            return Err(invalid("traction", "must be finite"));
        }
        if l.load_patch_elements < 2 || l.load_patch_elements > 2 * self.grid.nx {
            return Err(invalid("load_patch_elements", "must be in [2, 2 nx]"));
        }
        if l.frozen_depth > self.grid.ny || l.support_pad_elements > self.grid.nx.min(self.grid.ny) {
            return Err(invalid("frozen_depth", "frozen pads must fit in the grid"));
        }

        let op = &self.optimizer;
        for (k, v) in [("move_limit_phi", op.move_limit_phi), ("move_limit_rho", op.move_limit_rho)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(k, "must be in (0, 1]"));
            }
        }
        positive("subproblem_tol", op.subproblem_tol)?;
        positive("asymptote_init", op.asymptote_init)?;
        if !(op.asymptote_increase >= 1.0) {
            return Err(invalid("asymptote_increase", "must be >= 1"));
        }
        unit_open("asymptote_decrease", op.asymptote_decrease)?;
        if !(op.asymptote_min_gap > 0.0 && op.asymptote_min_gap < op.asymptote_init) {
            return Err(invalid("asymptote_min_gap", "must be in (0, asymptote_init)"));
        }
        positive("convergence_tol", op.convergence_tol)?;
        count("convergence_window", op.convergence_window)?;
        nonneg("constraint_tol", op.constraint_tol)?;
        positive("solver_residual_tol", op.solver_residual_tol)?;

        count("fd_samples", self.verify.fd_samples)?;
        positive("fd_step", self.verify.fd_step)?;
        Ok(())
    }
}

// Locate the key whose value failed to deserialize by substituting the
// user's values one at a time into the defaults.
fn blame_type_error(merged: &toml::Table, provided: &BTreeSet<String>, e: &toml::de::Error) -> Error {
    let defaults = defaults_table();
    for (section, table) in merged {
        let Some(table) = table.as_table() else { continue };
        for (key, value) in table {
            if !provided.contains(key) {
                continue;
            }
            let mut probe = defaults.clone();
            probe[section].as_table_mut().expect("section").insert(key.clone(), value.clone());
            if toml::Value::Table(probe).try_into::<RunConfig>().is_err() {
                return invalid(key, format!("has an invalid value: {}", e.message()));
            }
        }
    }
    invalid("config", e.message().to_string())
}

// Keys that may be absent from the serialized defaults.
fn optional_key(section: &str, key: &str) -> bool {
    section == "objective" && key == "strain_energy_limit"
}

fn merged_sections() -> Vec<(String, BTreeSet<String>)> {
    defaults_table()
        .into_iter()
        .map(|(s, v)| {
            let mut keys: BTreeSet<String> = v.as_table().map(|t| t.keys().cloned().collect()).unwrap_or_default();
            if s == "objective" {
                keys.insert("strain_energy_limit".to_string());
            }
            (s, keys)
        })
        .collect()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml_str(&text)
}

/// Write `effective_config.toml` into `dir`.
pub fn write_effective_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join("effective_config.toml");
    std::fs::write(&path, cfg.to_toml_string()).map_err(|e| Error::io(&path, e))
}
