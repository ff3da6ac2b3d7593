//! Method of Moving Asymptotes for box-bounded problems with inequality
//! constraints `g_i(x) <= 0`, with an optional globally convergent inner
//! loop.
//!
//! The separable convex subproblem is solved by a primal-dual interior-point
//! method on the standard MMA formulation with artificial variables `y`, `z`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MmaSettings {
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    /// Smallest distance between an asymptote and the iterate, as a fraction
    /// of the variable's range.
    pub asymptote_min_gap: f64,
    pub a0: f64,
    pub a: f64,
    pub c: f64,
    pub d: f64,
    /// Per-variable move limit as a fraction of the variable's range. A
    /// single entry applies to all variables.
    pub move_limit: Vec<f64>,
    /// Required KKT residual of the subproblem.
    pub subproblem_tol: f64,
    /// Maximum inner iterations of the conservative loop; 0 gives plain MMA.
    pub inner_max: usize,
}

impl Default for MmaSettings {
    fn default() -> Self {
        MmaSettings {
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            asymptote_min_gap: 1e-5,
            a0: 1.0,
            a: 0.0,
            c: 1000.0,
            d: 0.0,
            move_limit: vec![0.5],
            subproblem_tol: 1e-9,
            inner_max: 0,
        }
    }
}

/// Objective and constraint values with gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub f0: f64,
    pub df0: Vec<f64>,
    pub g: Vec<f64>,
    /// One gradient row per constraint.
    pub dg: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Constraint multipliers of the subproblem.
    pub lambda: Vec<f64>,
    /// KKT residual of the subproblem at its solution.
    pub subproblem_residual: f64,
    /// Inner (conservative) iterations performed.
    pub inner_iterations: usize,
}

/// Identity on the raw constraint values: problems hand in constraints that
/// are already normalized.
pub fn constraint_transform(g_raw: &[f64]) -> Vec<f64> {
    g_raw.to_vec()
}

/// Optimizer state carried between outer iterations.
#[derive(Debug, Clone)]
pub struct Mma {
    n: usize,
    m: usize,
    settings: MmaSettings,
    iter: usize,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
}

impl Mma {
    pub fn new(n: usize, m: usize, settings: MmaSettings) -> Result<Self> {
        if settings.move_limit.len() != 1 && settings.move_limit.len() != n {
            return Err(Error::invalid("move_limit needs one entry or one per variable"));
        }
        if settings.move_limit.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::invalid("move limits must be in (0, 1]"));
        }
        let s = &settings;
        let gap_ok = s.asymptote_min_gap > 0.0 && s.asymptote_min_gap < s.asyinit;
        if !(s.asyinit > 0.0 && s.asyincr >= 1.0 && s.asydecr > 0.0 && s.asydecr < 1.0 && gap_ok) {
            return Err(Error::invalid("invalid asymptote parameters"));
        }
        Ok(Mma {
            n,
            m,
            settings,
            iter: 0,
            xold1: Vec::new(),
            xold2: Vec::new(),
            low: vec![0.0; n],
            upp: vec![0.0; n],
        })
    }

    pub fn asymptotes(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.upp)
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    fn check_inputs(&self, x: &[f64], xmin: &[f64], xmax: &[f64], ev: &Evaluation) -> Result<()> {
        let n = self.n;
        if x.len() != n || xmin.len() != n || xmax.len() != n || ev.df0.len() != n {
            return Err(Error::invalid(format!("optimizer expects {n} variables")));
        }
        if ev.g.len() != self.m || ev.dg.len() != self.m || ev.dg.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("optimizer expects {} constraints", self.m)));
        }
        if (0..n).any(|j| !(xmin[j] <= xmax[j])) {
            return Err(Error::invalid("inconsistent variable bounds"));
        }
        let finite = ev.f0.is_finite()
            && ev.df0.iter().all(|v| v.is_finite())
            && ev.g.iter().all(|v| v.is_finite())
            && ev.dg.iter().flatten().all(|v| v.is_finite())
            && x.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("optimizer input"));
        }
        Ok(())
    }

    fn update_asymptotes(&mut self, x: &[f64], xmin: &[f64], xmax: &[f64]) {
        let s = &self.settings;
        for j in 0..self.n {
            // Collapsed boxes still need asymptotes strictly off the iterate.
            let span = (xmax[j] - xmin[j]).max(1e-5);
            if self.iter < 2 {
                self.low[j] = x[j] - s.asyinit * span;
                self.upp[j] = x[j] + s.asyinit * span;
            } else {
                let zzz = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if zzz > 0.0 {
                    s.asyincr
                } else if zzz < 0.0 {
                    s.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                let gap = s.asymptote_min_gap * span;
                self.low[j] = low.clamp(x[j] - 10.0 * span, x[j] - gap);
                self.upp[j] = upp.clamp(x[j] + gap, x[j] + 10.0 * span);
            }
        }
    }

    fn move_limit(&self, j: usize) -> f64 {
        let ml = &self.settings.move_limit;
        if ml.len() == 1 {
            ml[0]
        } else {
            ml[j]
        }
    }

    /// One outer iteration. Without inner iterations this is a single
    /// subproblem solve; with `inner_max > 0` see
    /// [`step_conservative`](Self::step_conservative).
    pub fn step(&mut self, x: &[f64], xmin: &[f64], xmax: &[f64], ev: &Evaluation) -> Result<MmaStep> {
        self.outer(x, xmin, xmax, ev, 0, |_| unreachable_eval())
    }

    /// One outer iteration of the globally convergent variant. The curvature
    /// terms start from a gradient-scaled estimate; while the inner-iteration
    /// budget lasts, the approximation is made more conservative until its
    /// predicted values bound the true ones at the candidate, evaluating
    /// `eval` once per inner iteration.
    pub fn step_conservative<F>(
        &mut self,
        x: &[f64],
        xmin: &[f64],
        xmax: &[f64],
        ev: &Evaluation,
        eval: F,
    ) -> Result<MmaStep>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        self.outer(x, xmin, xmax, ev, self.settings.inner_max, eval)
    }

    fn outer<F>(
        &mut self,
        x: &[f64],
        xmin: &[f64],
        xmax: &[f64],
        ev: &Evaluation,
        inner_max: usize,
        mut eval: F,
    ) -> Result<MmaStep>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        self.check_inputs(x, xmin, xmax, ev)?;
        self.update_asymptotes(x, xmin, xmax);
        let n = self.n as f64;
        let span = |j: usize| (xmax[j] - xmin[j]).max(1e-5);
        let initial = |grad: &[f64]| ((0..self.n).map(|j| grad[j].abs() * span(j)).sum::<f64>() * 0.1 / n).max(1e-6);
        let mut raa = Raa {
            r0: initial(&ev.df0),
            r: ev.dg.iter().map(|row| initial(row)).collect(),
        };
        let mut inner = 0;
        let sol = loop {
            let sub = self.build(x, xmin, xmax, ev, &raa);
            let sol = subsolv(&sub, self.settings.subproblem_tol)?;
            if inner >= inner_max {
                break sol;
            }
            let (f0_new, g_new) = eval(&sol.x)?;
            let (f0_app, g_app) = sub.approximation_at(&sol.x);
            let tol = 1e-12 * (1.0 + ev.f0.abs());
            let conservative = f0_new <= f0_app + tol && g_new.iter().zip(&g_app).all(|(g, a)| *g <= a + tol);
            if conservative {
                break sol;
            }
            inner += 1;
            // Grow the curvature terms in proportion to the misprediction.
            let mut raacof = 0.0;
            for j in 0..self.n {
                let xxux = (sol.x[j] - x[j]) / (self.upp[j] - sol.x[j]);
                let xxxl = (sol.x[j] - x[j]) / (sol.x[j] - self.low[j]);
                raacof += xxux * xxxl * (self.upp[j] - self.low[j]) / span(j);
            }
            let raacof = raacof.max(1e-12);
            if f0_new > f0_app + tol {
                let z = 1.1 * (raa.r0 + (f0_new - f0_app) / raacof);
                raa.r0 = z.min(10.0 * raa.r0);
            }
            for i in 0..self.m {
                if g_new[i] > g_app[i] + tol {
                    let z = 1.1 * (raa.r[i] + (g_new[i] - g_app[i]) / raacof);
                    raa.r[i] = z.min(10.0 * raa.r[i]);
                }
            }
        };
        self.advance(x);
        Ok(MmaStep {
            x: sol.x,
            lambda: sol.lam,
            subproblem_residual: sol.residual,
            inner_iterations: inner,
        })
    }

    fn advance(&mut self, x: &[f64]) {
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        self.iter += 1;
    }

    fn build(&self, x: &[f64], xmin: &[f64], xmax: &[f64], ev: &Evaluation, raa: &Raa) -> Subproblem {
        let (n, m) = (self.n, self.m);
        let albefa = 0.1;
        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p = vec![vec![0.0; n]; m];
        let mut q = vec![vec![0.0; n]; m];
        let mut r0 = ev.f0;
        let mut r = ev.g.clone();
        for j in 0..n {
            let span = xmax[j] - xmin[j];
            let (low, upp) = (self.low[j], self.upp[j]);
            let mv = self.move_limit(j) * span;
            alfa[j] = (low + albefa * (x[j] - low)).max(x[j] - mv).max(xmin[j]);
            beta[j] = (upp - albefa * (upp - x[j])).min(x[j] + mv).min(xmax[j]);
            let xmami = span.max(1e-5);
            let ux1 = upp - x[j];
            let xl1 = x[j] - low;
            let coef = |df: f64, raa: f64| -> (f64, f64) {
                let pp = df.max(0.0);
                let qq = (-df).max(0.0);
                let pq = 0.001 * (pp + qq) + raa / xmami;
                ((pp + pq) * ux1 * ux1, (qq + pq) * xl1 * xl1)
            };
            let (a, b) = coef(ev.df0[j], raa.r0);
            p0[j] = a;
            q0[j] = b;
            r0 -= a / ux1 + b / xl1;
            for i in 0..m {
                let (a, b) = coef(ev.dg[i][j], raa.r[i]);
                p[i][j] = a;
                q[i][j] = b;
                r[i] -= a / ux1 + b / xl1;
            }
        }
        Subproblem {
            low: self.low.clone(),
            upp: self.upp.clone(),
            alfa,
            beta,
            p0,
            q0,
            p,
            q,
            r0,
            b: r.iter().map(|v| -v).collect(),
            a0: self.settings.a0,
            a: vec![self.settings.a; m],
            c: vec![self.settings.c; m],
            d: vec![self.settings.d; m],
        }
    }
}

// `step` never evaluates: its inner budget is forced to zero.
fn unreachable_eval() -> Result<(f64, Vec<f64>)> {
    Err(Error::invalid("no evaluator supplied"))
}

struct Raa {
    r0: f64,
    r: Vec<f64>,
}

// min  a0 z + Σ (c_i y_i + ½ d_i y_i²) + Σ_j (p0_j/(U_j-x_j) + q0_j/(x_j-L_j))
// s.t. Σ_j (p_ij/(U_j-x_j) + q_ij/(x_j-L_j)) - a_i z - y_i <= b_i
//      alfa <= x <= beta, y >= 0, z >= 0
struct Subproblem {
    low: Vec<f64>,
    upp: Vec<f64>,
    alfa: Vec<f64>,
    beta: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r0: f64,
    b: Vec<f64>,
    a0: f64,
    a: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl Subproblem {
    fn approximation_at(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let term = |p: &[f64], q: &[f64]| -> f64 {
            (0..x.len())
                .map(|j| p[j] / (self.upp[j] - x[j]) + q[j] / (x[j] - self.low[j]))
                .sum()
        };
        let f0 = self.r0 + term(&self.p0, &self.q0);
        let g = (0..self.b.len()).map(|i| term(&self.p[i], &self.q[i]) - self.b[i]).collect();
        (f0, g)
    }
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

struct SubSolution {
    x: Vec<f64>,
    lam: Vec<f64>,
    residual: f64,
}

// Residual of the barrier-perturbed KKT system.
// Residual with the stationarity rows scaled as in `scaled_norm_inf`; used
// as the line-search merit.
fn residual(sp: &Subproblem, pt: &Point, epsi: f64) -> Vec<f64> {
    let (mut res, scale) = residual_with_scale(sp, pt, epsi);
    for (r, s) in res.iter_mut().zip(&scale) {
        *r /= s;
    }
    res
}

// Residual rows with the magnitude of the terms in each stationarity row;
// near-collapsed asymptotes make those terms huge, so convergence is judged
// relative to them.
fn residual_with_scale(sp: &Subproblem, pt: &Point, epsi: f64) -> (Vec<f64>, Vec<f64>) {
    let n = pt.x.len();
    let m = pt.lam.len();
    let mut res = Vec::with_capacity(3 * n + 5 * m + 2);
    let mut scale = Vec::with_capacity(n);
    let mut gvec = vec![0.0; m];
    for j in 0..n {
        let ux1 = sp.upp[j] - pt.x[j];
        let xl1 = pt.x[j] - sp.low[j];
        let mut plam = sp.p0[j];
        let mut qlam = sp.q0[j];
        for i in 0..m {
            plam += sp.p[i][j] * pt.lam[i];
            qlam += sp.q[i][j] * pt.lam[i];
            gvec[i] += sp.p[i][j] / ux1 + sp.q[i][j] / xl1;
        }
        let (a, b) = (plam / (ux1 * ux1), qlam / (xl1 * xl1));
        res.push(a - b - pt.xsi[j] + pt.eta[j]);
        scale.push(1.0 + a.abs().max(b.abs()));
    }
    for i in 0..m {
        res.push(sp.c[i] + sp.d[i] * pt.y[i] - pt.mu[i] - pt.lam[i]);
    }
    res.push(sp.a0 - pt.zet - (0..m).map(|i| sp.a[i] * pt.lam[i]).sum::<f64>());
    for i in 0..m {
        res.push(gvec[i] - sp.a[i] * pt.z - pt.y[i] + pt.s[i] - sp.b[i]);
    }
    for j in 0..n {
        res.push(pt.xsi[j] * (pt.x[j] - sp.alfa[j]) - epsi);
        res.push(pt.eta[j] * (sp.beta[j] - pt.x[j]) - epsi);
    }
    for i in 0..m {
        res.push(pt.mu[i] * pt.y[i] - epsi);
    }
    res.push(pt.zet * pt.z - epsi);
    for i in 0..m {
        res.push(pt.lam[i] * pt.s[i] - epsi);
    }
    (res, scale)
}

// Max-norm of the residual with stationarity rows taken relative to their
// term magnitudes.
fn scaled_norm_inf(sp: &Subproblem, pt: &Point, epsi: f64) -> f64 {
    norm_inf(&residual(sp, pt, epsi))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn subsolv(sp: &Subproblem, tol: f64) -> Result<SubSolution> {
    let n = sp.alfa.len();
    let m = sp.b.len();
    if m <= 1 && sp.a.iter().all(|&a| a == 0.0) && sp.d.iter().all(|&d| d == 0.0) {
        return subsolv_dual(sp, tol);
    }
    let mut pt = Point {
        x: (0..n).map(|j| 0.5 * (sp.alfa[j] + sp.beta[j])).collect(),
        y: vec![1.0; m],
        z: 1.0,
        lam: vec![1.0; m],
        xsi: vec![0.0; n],
        eta: vec![0.0; n],
        mu: (0..m).map(|i| (0.5 * sp.c[i]).max(1.0)).collect(),
        zet: 1.0,
        s: vec![1.0; m],
    };
    for j in 0..n {
        pt.xsi[j] = (1.0 / (pt.x[j] - sp.alfa[j])).max(1.0);
        pt.eta[j] = (1.0 / (sp.beta[j] - pt.x[j])).max(1.0);
    }
    // Degenerate boxes (alfa == beta) pin the variable.
    let pinned: Vec<bool> = (0..n).map(|j| !(sp.beta[j] - sp.alfa[j] > 1e-14)).collect();
    if pinned.iter().any(|&p| p) {
        return subsolv_with_pinned(sp, &pinned, tol);
    }

    let final_epsi = (tol * 0.1).max(1e-14);
    let mut epsi = 1.0f64;
    loop {
        let mut res = residual(sp, &pt, epsi);
        let mut resnorm = norm2(&res);
        let mut resmax = scaled_norm_inf(sp, &pt, epsi);
        let mut ittt = 0;
        while resmax > 0.9 * epsi && ittt < 200 {
            ittt += 1;
            let dir = newton_direction(sp, &pt, epsi);
            let steg = 1.0 / max_step(sp, &pt, &dir).max(1.0);
            let old = pt.clone();
            let mut steg = steg;
            let mut itto = 0;
            let mut resinew = 2.0 * resnorm;
            while resinew > resnorm && itto < 50 {
                itto += 1;
                pt = apply_step(&old, &dir, steg);
                res = residual(sp, &pt, epsi);
                resinew = norm2(&res);
                steg *= 0.5;
            }
            resnorm = resinew;
            resmax = scaled_norm_inf(sp, &pt, epsi);
        }
        if epsi <= final_epsi {
            // Report the unperturbed KKT residual.
            let kkt = scaled_norm_inf(sp, &pt, 0.0);
            if !(kkt <= tol) || pt.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SubproblemDiverged { residual: kkt });
            }
            return Ok(SubSolution {
                x: pt.x,
                lam: pt.lam,
                residual: kkt,
            });
        }
        epsi *= 0.1;
    }
}

// Minimizer of `pp/(u−x) + qq/(x−l)` over `[alfa, beta]`.
#[inline]
fn separable_argmin(pp: f64, qq: f64, l: f64, u: f64, alfa: f64, beta: f64) -> f64 {
    let (sp, sq) = (pp.sqrt(), qq.sqrt());
    let x = if sp + sq > 0.0 { (sp * l + sq * u) / (sp + sq) } else { 0.5 * (alfa + beta) };
    x.clamp(alfa, beta)
}

// Dual method for at most one constraint with `a = d = 0` (the artificial
// variable `z` is then zero). For a multiplier `λ ∈ [0, c]` the primal
// minimizer is explicit per variable; the concave dual is maximized by
// bisection on its derivative, the subproblem constraint value.
fn subsolv_dual(sp: &Subproblem, tol: f64) -> Result<SubSolution> {
    let n = sp.alfa.len();
    let m = sp.b.len();
    let x_of = |lam: f64| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let (mut pp, mut qq) = (sp.p0[j], sp.q0[j]);
                if m == 1 {
                    pp += lam * sp.p[0][j];
                    qq += lam * sp.q[0][j];
                }
                separable_argmin(pp, qq, sp.low[j], sp.upp[j], sp.alfa[j], sp.beta[j])
            })
            .collect()
    };
    let slack = |x: &[f64]| -> f64 {
        // b − Σ (p/(u−x) + q/(x−l)); negative when the constraint is violated.
        let g: f64 = (0..n).map(|j| sp.p[0][j] / (sp.upp[j] - x[j]) + sp.q[0][j] / (x[j] - sp.low[j])).sum();
        sp.b[0] - g
    };
    let (lam, x, y) = if m == 0 {
        (0.0, x_of(0.0), 0.0)
    } else {
        let c = sp.c[0];
        let x0 = x_of(0.0);
        if slack(&x0) >= 0.0 {
            (0.0, x0, 0.0)
        } else {
            let xc = x_of(c);
            let sc = slack(&xc);
            if sc < 0.0 {
                // Infeasible even at the largest multiplier: y absorbs it.
                (c, xc, -sc)
            } else {
                let (mut lo, mut hi) = (0.0, c);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if slack(&x_of(mid)) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                // The feasible end of the bracket.
                (hi, x_of(hi), 0.0)
            }
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SubproblemDiverged { residual: f64::INFINITY });
    }

    // Recover the bound multipliers and check the subproblem's own KKT
    // conditions.
    let mut pt = Point {
        x,
        y: vec![y; m],
        z: 0.0,
        lam: vec![lam; m],
        xsi: vec![0.0; n],
        eta: vec![0.0; n],
        mu: sp.c.iter().map(|c| c - lam).collect(),
        zet: sp.a0,
        s: vec![0.0; m],
    };
    for j in 0..n {
        let (mut pp, mut qq) = (sp.p0[j], sp.q0[j]);
        if m == 1 {
            pp += lam * sp.p[0][j];
            qq += lam * sp.q[0][j];
        }
        let (ux, xl) = (sp.upp[j] - pt.x[j], pt.x[j] - sp.low[j]);
        let grad = pp / (ux * ux) - qq / (xl * xl);
        if pt.x[j] <= sp.alfa[j] && grad > 0.0 {
            pt.xsi[j] = grad;
        } else if pt.x[j] >= sp.beta[j] && grad < 0.0 {
            pt.eta[j] = -grad;
        }
    }
    if m == 1 {
        pt.s[0] = (slack(&pt.x) + y).max(0.0);
    }
    let kkt = scaled_norm_inf(sp, &pt, 0.0);
    if !(kkt <= tol) {
        return Err(Error::SubproblemDiverged { residual: kkt });
    }
    Ok(SubSolution { x: pt.x, lam: pt.lam, residual: kkt })
}

// Solve with some variables fixed at their (collapsed) box; the rest is an
// ordinary subproblem on fewer variables.
fn subsolv_with_pinned(sp: &Subproblem, pinned: &[bool], tol: f64) -> Result<SubSolution> {
    let free: Vec<usize> = (0..pinned.len()).filter(|&j| !pinned[j]).collect();
    let pick = |v: &[f64]| free.iter().map(|&j| v[j]).collect::<Vec<f64>>();
    let mut b = sp.b.clone();
    let mut r0 = sp.r0;
    for j in (0..pinned.len()).filter(|&j| pinned[j]) {
        let xj = sp.alfa[j];
        let ux = sp.upp[j] - xj;
        let xl = xj - sp.low[j];
        r0 += sp.p0[j] / ux + sp.q0[j] / xl;
        for i in 0..b.len() {
            b[i] -= sp.p[i][j] / ux + sp.q[i][j] / xl;
        }
    }
    let reduced = Subproblem {
        low: pick(&sp.low),
        upp: pick(&sp.upp),
        alfa: pick(&sp.alfa),
        beta: pick(&sp.beta),
        p0: pick(&sp.p0),
        q0: pick(&sp.q0),
        p: sp.p.iter().map(|r| pick(r)).collect(),
        q: sp.q.iter().map(|r| pick(r)).collect(),
        r0,
        b,
        a0: sp.a0,
        a: sp.a.clone(),
        c: sp.c.clone(),
        d: sp.d.clone(),
    };
    let mut x = sp.alfa.clone();
    let sol = if free.is_empty() {
        SubSolution {
            x: Vec::new(),
            lam: vec![0.0; sp.b.len()],
            residual: 0.0,
        }
    } else {
        subsolv(&reduced, tol)?
    };
    for (k, &j) in free.iter().enumerate() {
        x[j] = sol.x[k];
    }
    Ok(SubSolution {
        x,
        lam: sol.lam,
        residual: sol.residual,
    })
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: f64,
    dlam: Vec<f64>,
    dxsi: Vec<f64>,
    deta: Vec<f64>,
    dmu: Vec<f64>,
    dzet: f64,
    ds: Vec<f64>,
}

fn newton_direction(sp: &Subproblem, pt: &Point, epsi: f64) -> Direction {
    let n = pt.x.len();
    let m = pt.lam.len();
    let mut gvec = vec![0.0; m];
    let mut gg = vec![vec![0.0; n]; m];
    let mut delx = vec![0.0; n];
    let mut diagx = vec![0.0; n];
    for j in 0..n {
        let ux1 = sp.upp[j] - pt.x[j];
        let xl1 = pt.x[j] - sp.low[j];
        let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
        let mut plam = sp.p0[j];
        let mut qlam = sp.q0[j];
        for i in 0..m {
            plam += sp.p[i][j] * pt.lam[i];
            qlam += sp.q[i][j] * pt.lam[i];
            gvec[i] += sp.p[i][j] / ux1 + sp.q[i][j] / xl1;
            gg[i][j] = sp.p[i][j] / ux2 - sp.q[i][j] / xl2;
        }
        let dpsidx = plam / ux2 - qlam / xl2;
        let xa = pt.x[j] - sp.alfa[j];
        let bx = sp.beta[j] - pt.x[j];
        delx[j] = dpsidx - epsi / xa + epsi / bx;
        diagx[j] = 2.0 * (plam / (ux2 * ux1) + qlam / (xl2 * xl1)) + pt.xsi[j] / xa + pt.eta[j] / bx;
    }
    let dely: Vec<f64> = (0..m)
        .map(|i| sp.c[i] + sp.d[i] * pt.y[i] - pt.lam[i] - epsi / pt.y[i])
        .collect();
    let delz = sp.a0 - (0..m).map(|i| sp.a[i] * pt.lam[i]).sum::<f64>() - epsi / pt.z;
    let dellam: Vec<f64> = (0..m)
        .map(|i| gvec[i] - sp.a[i] * pt.z - pt.y[i] - sp.b[i] + epsi / pt.lam[i])
        .collect();
    let diagy: Vec<f64> = (0..m).map(|i| sp.d[i] + pt.mu[i] / pt.y[i]).collect();
    let diaglamyi: Vec<f64> = (0..m).map(|i| pt.s[i] / pt.lam[i] + 1.0 / diagy[i]).collect();

    // Reduced (m+1)x(m+1) system in (dlam, dz).
    let mut aa = vec![vec![0.0; m + 1]; m + 1];
    let mut bb = vec![0.0; m + 1];
    for i in 0..m {
        for k in 0..m {
            aa[i][k] = (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum();
        }
        aa[i][i] += diaglamyi[i];
        aa[i][m] = sp.a[i];
        aa[m][i] = sp.a[i];
        bb[i] = dellam[i] + dely[i] / diagy[i] - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
    }
    aa[m][m] = -pt.zet / pt.z;
    bb[m] = delz;
    let sol = solve_dense(aa, bb);
    let dlam = sol[..m].to_vec();
    let dz = sol[m];

    let dx: Vec<f64> = (0..n)
        .map(|j| {
            let gtl: f64 = (0..m).map(|i| gg[i][j] * dlam[i]).sum();
            -delx[j] / diagx[j] - gtl / diagx[j]
        })
        .collect();
    let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
    let dxsi = (0..n)
        .map(|j| {
            let xa = pt.x[j] - sp.alfa[j];
            -pt.xsi[j] + epsi / xa - pt.xsi[j] * dx[j] / xa
        })
        .collect();
    let deta = (0..n)
        .map(|j| {
            let bx = sp.beta[j] - pt.x[j];
            -pt.eta[j] + epsi / bx + pt.eta[j] * dx[j] / bx
        })
        .collect();
    let dmu = (0..m)
        .map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i])
        .collect();
    let dzet = -pt.zet + epsi / pt.z - pt.zet * dz / pt.z;
    let ds = (0..m)
        .map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i])
        .collect();
    Direction {
        dx,
        dy,
        dz,
        dlam,
        dxsi,
        deta,
        dmu,
        dzet,
        ds,
    }
}

// Largest inverse step keeping every positive variable positive (with 1%
// margin) and x strictly inside [alfa, beta].
fn max_step(sp: &Subproblem, pt: &Point, d: &Direction) -> f64 {
    let mut st = 0.0f64;
    let mut pos = |v: f64, dv: f64| st = st.max(-1.01 * dv / v);
    for i in 0..pt.y.len() {
        pos(pt.y[i], d.dy[i]);
        pos(pt.lam[i], d.dlam[i]);
        pos(pt.mu[i], d.dmu[i]);
        pos(pt.s[i], d.ds[i]);
    }
    pos(pt.z, d.dz);
    pos(pt.zet, d.dzet);
    for j in 0..pt.x.len() {
        pos(pt.xsi[j], d.dxsi[j]);
        pos(pt.eta[j], d.deta[j]);
        pos(pt.x[j] - sp.alfa[j], d.dx[j]);
        pos(sp.beta[j] - pt.x[j], -d.dx[j]);
    }
    st
}

fn apply_step(pt: &Point, d: &Direction, t: f64) -> Point {
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + t * y).collect::<Vec<f64>>();
    Point {
        x: add(&pt.x, &d.dx),
        y: add(&pt.y, &d.dy),
        z: pt.z + t * d.dz,
        lam: add(&pt.lam, &d.dlam),
        xsi: add(&pt.xsi, &d.dxsi),
        eta: add(&pt.eta, &d.deta),
        mu: add(&pt.mu, &d.dmu),
        zet: pt.zet + t * d.dzet,
        s: add(&pt.s, &d.ds),
    }
}

// Gaussian elimination with partial pivoting for the small reduced system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// KKT residual of the original problem at `x` with multipliers `lambda`:
/// bound-projected Lagrangian gradient, constraint violation and
/// complementarity, in the max norm.
pub fn kkt_residual(x: &[f64], xmin: &[f64], xmax: &[f64], ev: &Evaluation, lambda: &[f64]) -> f64 {
    let mut r = 0.0f64;
    for j in 0..x.len() {
        let mut gl = ev.df0[j];
        for (i, l) in lambda.iter().enumerate() {
            gl += l * ev.dg[i][j];
        }
        let span = (xmax[j] - xmin[j]).max(1e-12);
        let v = if x[j] <= xmin[j] + 1e-9 * span {
            gl.min(0.0)
        } else if x[j] >= xmax[j] - 1e-9 * span {
            gl.max(0.0)
        } else {
            gl
        };
        r = r.max(v.abs());
    }
    for (i, g) in ev.g.iter().enumerate() {
        r = r.max(g.max(0.0)).max((lambda[i] * g).abs());
    }
    r
}
