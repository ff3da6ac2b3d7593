use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Problem;
use crate::error::Result;
use crate::fields::DesignVector;

/// One sampled gradient component.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSample {
    /// Index into `[s_phi, s_rho]`.
    pub index: usize,
    /// `true` for the constraint, `false` for the objective.
    pub constraint: bool,
    pub analytic: f64,
    pub fd: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub samples: Vec<FdSample>,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// A design with independent uniform values on every free node: level set in
/// `[φ_low, φ_up)` and density in `[0.05, 0.95)`.
pub fn random_design(problem: &Problem, seed: u64) -> DesignVector {
    let mut s = problem.spec.initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..s.num_nodes() {
        if !s.frozen[i] {
            s.s_phi[i] = rng.gen_range(s.phi_low..s.phi_up);
            s.s_rho[i] = rng.gen_range(0.05..0.95);
        }
    }
    s
}

/// Largest `Ψ / Ψ0` accepted by [`random_loaded_design`].
pub const MAX_COMPLIANCE_RATIO: f64 = 1e3;

/// The first [`random_design`] from seeds `seed, seed + 1, ...` whose solid
/// connects the load to the supports, judged by its strain energy staying
/// within [`MAX_COMPLIANCE_RATIO`] of the initial design's. Disconnected
/// designs are carried by the void stiffness alone; their solves are so ill
/// conditioned that finite differences measure round-off.
pub fn random_loaded_design(problem: &Problem, seed: u64, it: usize) -> Result<DesignVector> {
    let mut last = None;
    for k in 0..1000 {
        let s = random_design(problem, seed.wrapping_add(k));
        let ev = problem.evaluate(&s, it, None)?;
        if ev.psi <= MAX_COMPLIANCE_RATIO * problem.psi0 {
            return Ok(s);
        }
        last = Some(ev.psi);
    }
    Err(crate::error::Error::invalid(format!(
        "no load-carrying random design found (last strain energy {:e})",
        last.unwrap_or(f64::NAN)
    )))
}

/// `|a − f| / max(|a|, |f|, 1e-3 ‖grad‖∞)`: relative, with a floor so that
/// components far below the gradient's scale are compared absolutely.
pub fn relative_error(analytic: f64, fd: f64, grad_inf: f64) -> f64 {
    let scale = analytic.abs().max(fd.abs()).max(1e-3 * grad_inf);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - fd).abs() / scale
    }
}

/// Central differences of the objective and the constraint on `n_samples`
/// random free components of each variable block at iteration `it`. Level-set
/// components are stepped by `eps · h`, density components by `eps`. The
/// regularization target is held at its value for `s`.
pub fn fd_verify(
    problem: &Problem,
    s: &DesignVector,
    it: usize,
    n_samples: usize,
    eps: f64,
    seed: u64,
) -> Result<FdReport> {
    let base = problem.evaluate(s, it, None)?;
    let n = s.num_nodes();
    let free: Vec<usize> = (0..n).filter(|&i| !s.frozen[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inf = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (dz_inf, dg_inf) = (inf(&base.dz), inf(&base.dg1));

    let mut indices = Vec::new();
    for block in 0..2 {
        let k = n_samples.min(free.len());
        for j in sample(&mut rng, free.len(), k).into_iter() {
            indices.push(block * n + free[j]);
        }
    }

    let mut samples = Vec::with_capacity(2 * indices.len());
    let x0 = s.to_flat();
    let mut trial = s.clone();
    for &idx in &indices {
        let step = if idx < n { eps * problem.spec.grid.h } else { eps };
        let mut x = x0.clone();
        x[idx] = x0[idx] + step;
        trial.set_flat(&x);
        let plus = problem.evaluate(&trial, it, Some(&base.target))?;
        x[idx] = x0[idx] - step;
        trial.set_flat(&x);
        let minus = problem.evaluate(&trial, it, Some(&base.target))?;
        let fz = (plus.z - minus.z) / (2.0 * step);
        let fg = (plus.g1 - minus.g1) / (2.0 * step);
        for (constraint, analytic, fd, ginf) in [(false, base.dz[idx], fz, dz_inf), (true, base.dg1[idx], fg, dg_inf)] {
            samples.push(FdSample {
                index: idx,
                constraint,
                analytic,
                fd,
                rel_error: relative_error(analytic, fd, ginf),
            });
        }
    }
    let max_rel_error = samples.iter().fold(0.0f64, |m, s| m.max(s.rel_error));
    let mean_rel_error = if samples.is_empty() {
        0.0
    } else {
        samples.iter().map(|s| s.rel_error).sum::<f64>() / samples.len() as f64
    };
    Ok(FdReport { samples, max_rel_error, mean_rel_error })
}
