//! Continuation of the projection sharpness, SIMP exponent, hole-seeding
//! density threshold and perimeter weight over design iterations.
//!
//! Every parameter is piecewise constant: the iteration index is snapped down
//! to the last multiple of the step size before the ramp is evaluated.

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    /// Iterations between parameter updates.
    pub step: usize,
    /// Iterations over which the ramps are active.
    pub length: usize,
    pub max_iterations: usize,
    pub gamma0: f64,
    pub gammaf: f64,
    pub beta0: f64,
    pub betaf: f64,
    pub rho_th0: f64,
    pub rho_thf: f64,
    pub eta_gamma: f64,
    pub eta_beta: f64,
    pub eta_rho: f64,
    pub w2_0: f64,
    pub w2_f: f64,
    pub eta_w2: f64,
}

/// Parameter values in effect at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub gamma_pr: f64,
    pub beta_rho: f64,
    pub rho_th_hs: f64,
    pub w2: f64,
}

impl ContinuationSchedule {
    /// Defaults for an initial homogeneous density `rho0`.
    pub fn with_initial_density(rho0: f64) -> Self {
        ContinuationSchedule {
            step: 10,
            length: 100,
            max_iterations: 175,
            gamma0: 0.001,
            gammaf: 40.0,
            beta0: 2.0,
            betaf: 12.0,
            rho_th0: 0.25 * rho0,
            rho_thf: 0.9 * rho0,
            eta_gamma: 2.0,
            eta_beta: 2.0,
            eta_rho: 2.0,
            w2_0: 0.005,
            w2_f: 0.01,
            eta_w2: 2.0,
        }
    }

    /// Iteration after which hole seeding is switched off.
    pub fn seeding_end(&self) -> usize {
        self.length + self.step
    }

    fn snap(&self, it: usize) -> usize {
        if self.step == 0 {
            it
        } else {
            it - it % self.step
        }
    }

    fn ramp(&self, it: usize, v0: f64, vf: f64, eta: f64) -> f64 {
        let d = self.snap(it);
        if d > self.length || self.length == 0 {
            return vf;
        }
        v0 + (vf - v0) * (d as f64 / self.length as f64).powf(eta)
    }

    pub fn gamma_pr_at(&self, it: usize) -> f64 {
        self.ramp(it, self.gamma0, self.gammaf, self.eta_gamma)
    }

    pub fn beta_rho_at(&self, it: usize) -> f64 {
        self.ramp(it, self.beta0, self.betaf, self.eta_beta)
    }

    pub fn rho_th_hs_at(&self, it: usize) -> f64 {
        let d = self.snap(it);
        if d <= self.length {
            self.ramp(it, self.rho_th0, self.rho_thf, self.eta_rho)
        } else if d <= self.seeding_end() {
            self.rho_thf
        } else {
            0.0
        }
    }

    pub fn w2_at(&self, it: usize) -> f64 {
        self.ramp(it, self.w2_0, self.w2_f, self.eta_w2)
    }

    pub fn state_at(&self, it: usize) -> ScheduleState {
        ScheduleState {
            gamma_pr: self.gamma_pr_at(it),
            beta_rho: self.beta_rho_at(it),
            rho_th_hs: self.rho_th_hs_at(it),
            w2: self.w2_at(it),
        }
    }
}
