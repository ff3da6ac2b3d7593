use std::time::Instant;

use super::{Evaluation, Problem};
use crate::error::{Error, Result};
use crate::fields::{clamp_and_freeze, DesignVector};
use crate::mma::{self, Mma};

/// One row of the optimization history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub z: f64,
    /// Unweighted performance term.
    pub f_term: f64,
    /// Weighted penalty contributions.
    pub p_per: f64,
    pub p_reg: f64,
    pub p_hs: f64,
    pub p_vddr: f64,
    pub g1: f64,
    pub psi: f64,
    pub mass: f64,
    pub gamma_pr: f64,
    pub beta_rho: f64,
    pub rho_th_hs: f64,
    pub w2: f64,
    pub wall_ms: f64,
}

impl IterationRecord {
    pub fn from_evaluation(ev: &Evaluation, wall_ms: f64) -> Self {
        let c = ev.components;
        IterationRecord {
            iter: ev.iteration,
            z: ev.z,
            f_term: c.f_term,
            p_per: c.p_per,
            p_reg: c.p_reg,
            p_hs: c.p_hs,
            p_vddr: c.p_vddr,
            g1: ev.g1,
            psi: ev.psi,
            mass: ev.mass,
            gamma_pr: ev.state.gamma_pr,
            beta_rho: ev.state.beta_rho,
            rho_th_hs: ev.state.rho_th_hs,
            w2: ev.state.w2,
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Design of the last evaluated iterate.
    pub design: DesignVector,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Evaluation of `design`.
    pub last: Evaluation,
}

/// Converged once the constraint holds and the objective has changed by at
/// most `tol` (relative) across each of the last `window` steps.
fn converged(history: &[IterationRecord], window: usize, tol: f64, constraint_tol: f64) -> bool {
    let Some(last) = history.last() else { return false };
    if last.g1 > constraint_tol || history.len() < window + 1 {
        return false;
    }
    history[history.len() - window - 1..]
        .windows(2)
        .all(|w| (w[1].z - w[0].z).abs() <= tol * w[1].z.abs().max(1e-12))
}

/// Optimize from the spec's initial design. `observer` sees every iterate
/// before the design update; `record_wall_time` fills `wall_ms`, otherwise
/// it is zero so that histories are reproducible byte for byte.
pub fn run<F>(problem: &Problem, record_wall_time: bool, mut observer: F) -> Result<RunOutcome>
where
    F: FnMut(&IterationRecord, &Evaluation, &DesignVector) -> Result<()>,
{
    let spec = &problem.spec;
    let mut s = spec.initial.clone();
    clamp_and_freeze(&mut s);
    let n = s.num_nodes();
    let (mut xmin, mut xmax) = s.flat_bounds();
    for (i, &f) in s.frozen.iter().enumerate() {
        if f {
            xmin[i] = s.phi_up;
            xmax[i] = s.phi_up;
            xmin[n + i] = 1.0;
            xmax[n + i] = 1.0;
        }
    }
    let mut opt = Mma::new(2 * n, 1, spec.optimizer.clone())?;
    let max_it = spec.schedule.max_iterations;
    let check_from = spec.schedule.seeding_end();
    let mut history = Vec::with_capacity(max_it);
    let mut it = 0;
    loop {
        let t0 = Instant::now();
        let ev = problem.evaluate(&s, it, None)?;
        let wall = if record_wall_time { t0.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let rec = IterationRecord::from_evaluation(&ev, wall);
        observer(&rec, &ev, &s)?;
        history.push(rec);

        let done = if it > check_from
            && converged(&history, spec.convergence_window, spec.convergence_tol, spec.constraint_tol)
        {
            Some(StopReason::Converged)
        } else if it + 1 >= max_it {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(stop) = done {
            return Ok(RunOutcome { design: s, history, stop, last: ev });
        }

        let x = s.to_flat();
        let mev = mma::Evaluation {
            f0: ev.z,
            df0: ev.dz.clone(),
            g: mma::constraint_transform(&[ev.g1]),
            dg: vec![ev.dg1.clone()],
        };
        let target = ev.target.clone();
        let step = {
            let mut trial = s.clone();
            let at = |e: Error| Error::AtIteration { iteration: it, source: Box::new(e) };
            opt.step_conservative(&x, &xmin, &xmax, &mev, |xt| {
                trial.set_flat(xt);
                let e = problem.evaluate(&trial, it, Some(&target))?;
                Ok((e.z, vec![e.g1]))
            })
            .map_err(|e| match e {
                Error::AtIteration { .. } => e,
                other => at(other),
            })?
        };
        s.set_flat(&step.x);
        clamp_and_freeze(&mut s);
        it += 1;
    }
}
