//! Reduced comparison system for entropy `f`, scale `sigma` and Fisher information `j`:
//!
//! ```text
//! f' = -j
//! sigma' = -kappa_1 sigma^{d(m-m_c)/2} f
//! j' = -4 j + kappa_2 j sigma'/sigma
//! ```
//!
//! integrated with an embedded Dormand-Prince 5(4) pair.

use std::io::Write;

use serde::Serialize;

use crate::constants::ConstantSet;
use crate::error::{domain, GnsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OdeState {
    pub t: f64,
    pub f: f64,
    pub sigma: f64,
    pub j: f64,
    pub kappa_1: f64,
    pub kappa_2: f64,
}

pub const ODE_CSV_HEADER: &str = "t,f,sigma,j";

/// Coefficients of the system for one mass.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OdeModel {
    pub kappa_1: f64,
    pub kappa_2: f64,
    /// `d(m-m_c)/2`
    pub k: f64,
    /// `d(1-m)/2`
    pub a: f64,
    pub d: u32,
    pub m: f64,
    pub k_m: f64,
}

impl OdeModel {
    /// Coefficients at the reference mass of `cs`.
    pub fn new(cs: &ConstantSet) -> OdeModel {
        OdeModel::with_mass(cs, cs.params.mass)
    }

    pub fn with_mass(cs: &ConstantSet, mass: f64) -> OdeModel {
        OdeModel {
            kappa_1: cs.kappa_1_at(mass),
            kappa_2: cs.kappa_2,
            k: cs.params.fisher_sigma_exponent(),
            a: cs.params.entropy_sigma_exponent(),
            d: cs.params.d,
            m: cs.params.m,
            k_m: cs.k_m_at(mass),
        }
    }

    /// `C_md sigma0^{-d(1-m)/2} = kappa_1 kappa_2 / 2 * sigma0^{-d(1-m)/2}`.
    pub fn improvement_coefficient(&self, sigma0: f64) -> f64 {
        0.5 * self.kappa_1 * self.kappa_2 * sigma0.powf(-self.a)
    }

    /// State vector `[f, sigma, j, q]` where `q' = -kappa_1 kappa_2 sigma^{-a} f j`
    /// accumulates the change of `j - 4f`.
    fn rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let [f, s, j, _] = *y;
        let ds = -self.kappa_1 * s.powf(self.k) * f;
        let dj = -4.0 * j + self.kappa_2 * j * ds / s;
        [-j, ds, dj, -self.kappa_1 * self.kappa_2 * s.powf(-self.a) * f * j]
    }
}

/// Adaptive controls of the integrator.
#[derive(Clone, Copy, Debug)]
pub struct OdeControls {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Record states only at multiples of this interval (plus the final state).
    pub save_dt: Option<f64>,
}

impl Default for OdeControls {
    fn default() -> Self {
        OdeControls { rtol: 1e-12, atol: 1e-15, h_max: 0.05, save_dt: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeTrajectory {
    pub states: Vec<OdeState>,
    /// `int_0^t kappa_1 kappa_2 sigma^{-a} f j`, parallel to `states`.
    pub dissipation: Vec<f64>,
    /// `f` reached zero and integration stopped there.
    pub reached_zero: bool,
    pub model: OdeModel,
    pub steps: usize,
    pub rejected: usize,
}

impl OdeTrajectory {
    pub fn first(&self) -> &OdeState {
        &self.states[0]
    }
    pub fn last(&self) -> &OdeState {
        self.states.last().expect("non-empty trajectory")
    }

    /// `min_t (j - 4f)` over the recorded states.
    pub fn min_cone_gap(&self) -> f64 {
        self.states.iter().map(|s| s.j - 4.0 * s.f).fold(f64::INFINITY, f64::min)
    }

    /// `max_t (f(t) - f0 e^{-4t}) / f0` (zero when `f0 = 0`).
    pub fn envelope_excess(&self) -> f64 {
        let f0 = self.first().f;
        if f0 == 0.0 {
            return 0.0;
        }
        self.states.iter().map(|s| (s.f - f0 * (-4.0 * s.t).exp()) / f0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest relative increase of `f` or `sigma` between consecutive states.
    pub fn monotonicity_violation(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| ((w[1].f - w[0].f) / w[0].f.max(1e-300)).max((w[1].sigma - w[0].sigma) / w[0].sigma))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{ODE_CSV_HEADER}")?;
        for s in &self.states {
            writeln!(w, "{},{},{},{}", s.t, s.f, s.sigma, s.j)?;
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &[f64; 4], h: f64, terms: &[(f64, &[f64; 4])]) -> [f64; 4] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..4 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand-Prince step: (5th-order solution, error estimate, derivative at the end).
fn dp_step(model: &OdeModel, y: &[f64; 4], k1: &[f64; 4], h: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let _ = (C2, C3, C4, C5);
    let k2 = model.rhs(&axpy(y, h, &[(A21, k1)]));
    let k3 = model.rhs(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = model.rhs(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = model.rhs(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = model.rhs(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y5 = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = model.rhs(&y5);
    let mut err = [0.0; 4];
    for i in 0..4 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err, k7)
}

fn check_start(f0: f64, sigma0: f64, j0: f64) -> Result<()> {
    if !(f0 >= 0.0 && f0.is_finite()) {
        return domain(format!("initial entropy f0 = {f0} must be non-negative"));
    }
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return domain(format!("initial scale sigma0 = {sigma0} must be positive"));
    }
    if !(j0.is_finite() && j0 >= 4.0 * f0) {
        return domain(format!("initial state outside the admissible cone: j0 = {j0} < 4 f0 = {}", 4.0 * f0));
    }
    Ok(())
}

enum Stop {
    Continue,
    Halt,
}

/// Core loop; `observe` sees every accepted state and may stop the integration.
fn drive<F: FnMut(f64, &[f64; 4]) -> Stop>(
    model: &OdeModel,
    y0: [f64; 4],
    t_max: f64,
    ctl: &OdeControls,
    mut observe: F,
) -> Result<(bool, usize, usize)> {
    let mut y = y0;
    let mut t = 0.0;
    let mut k1 = model.rhs(&y);
    let mut h = 1e-3f64.min(ctl.h_max).min(t_max);
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut next_save = ctl.save_dt.map(|s| s.min(t_max));
    if let Stop::Halt = observe(t, &y) {
        return Ok((false, 0, 0));
    }
    if y[0] == 0.0 && y[2] > 0.0 {
        return Ok((true, 0, 0));
    }
    while t < t_max {
        let mut target = (t + h).min(t_max);
        if let Some(ns) = next_save {
            target = target.min(ns);
        }
        let hs = target - t;
        let (y5, err, k7) = dp_step(model, &y, &k1, hs);
        let mut norm: f64 = 0.0;
        for i in 0..4 {
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(y5[i].abs());
            norm = norm.max((err[i] / sc).abs());
        }
        if !norm.is_finite() || norm > 1.0 {
            rejected += 1;
            let fac = if norm.is_finite() { (0.9 * norm.powf(-0.2)).max(0.1) } else { 0.1 };
            h = hs * fac;
            if h < 1e-14 * t_max.max(1.0) {
                return Err(GnsError::Solver(format!("step size underflow at t = {t}")));
            }
            continue;
        }
        if y5[0] < 0.0 {
            // f crosses zero inside the step: bisect the step length onto the crossing.
            let (mut lo, mut hi) = (0.0, hs);
            let mut best = y;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (ym, _, _) = dp_step(model, &y, &k1, mid);
                if ym[0] >= 0.0 {
                    lo = mid;
                    best = ym;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * (t + hs).max(1.0) {
                    break;
                }
            }
            best[0] = 0.0;
            steps += 1;
            observe(t + lo, &best);
            return Ok((true, steps, rejected));
        }
        t = target;
        y = y5;
        k1 = k7;
        steps += 1;
        let fac = if norm > 0.0 { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h = (hs * fac).min(ctl.h_max);
        let record = match next_save {
            None => true,
            Some(ns) if t >= ns => {
                next_save = Some((ns + ctl.save_dt.unwrap()).min(t_max));
                let _ = ns;
                true
            }
            Some(_) => t >= t_max,
        };
        if record {
            if let Stop::Halt = observe(t, &y) {
                return Ok((false, steps, rejected));
            }
        }
        if y[0] == 0.0 && y[2] == 0.0 {
            // Equilibrium: nothing moves any more.
            if t < t_max {
                t = t_max;
                observe(t, &y);
            }
            break;
        }
    }
    Ok((false, steps, rejected))
}

/// Integrate the comparison system from `(f0, sigma0, j0)` up to `t_max`, stopping
/// early if `f` reaches zero.
pub fn integrate_system(model: &OdeModel, f0: f64, sigma0: f64, j0: f64, t_max: f64) -> Result<OdeTrajectory> {
    integrate_with(model, f0, sigma0, j0, t_max, &OdeControls::default())
}

pub fn integrate_with(
    model: &OdeModel,
    f0: f64,
    sigma0: f64,
    j0: f64,
    t_max: f64,
    ctl: &OdeControls,
) -> Result<OdeTrajectory> {
    check_start(f0, sigma0, j0)?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return domain(format!("t_max = {t_max} must be positive"));
    }
    if let Some(s) = ctl.save_dt {
        if !(s > 0.0) {
            return domain(format!("save interval {s} must be positive"));
        }
    }
    let mut states = Vec::new();
    let mut dissipation = Vec::new();
    let (reached_zero, steps, rejected) = drive(model, [f0, sigma0, j0, 0.0], t_max, ctl, |t, y| {
        states.push(OdeState { t, f: y[0], sigma: y[1], j: y[2], kappa_1: model.kappa_1, kappa_2: model.kappa_2 });
        dissipation.push(-y[3]);
        Stop::Continue
    })?;
    Ok(OdeTrajectory { states, dissipation, reached_zero, model: *model, steps, rejected })
}

/// Fate of a trajectory started at a given `j0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fate {
    /// `f` reaches zero while `j > 0`: `j0` above the decay threshold.
    Overshoot,
    /// `j - 4f` turns negative while `f > 0`, after which `f` stays bounded away from zero.
    Stall,
}

fn fate(model: &OdeModel, f0: f64, sigma0: f64, j0: f64) -> Result<Fate> {
    // tolerances relative to f0 keep the classification invariant under scaling of small data
    let ctl = OdeControls { h_max: 1.0, atol: 1e-15 * f0, ..OdeControls::default() };
    let mut stalled = false;
    let (zero, _, _) = drive(model, [f0, sigma0, j0, 0.0], 1e3, &ctl, |_, y| {
        if y[2] - 4.0 * y[0] < 0.0 && y[0] > 0.0 {
            stalled = true;
            Stop::Halt
        } else {
            Stop::Continue
        }
    })?;
    match (zero, stalled) {
        (true, _) => Ok(Fate::Overshoot),
        (false, true) => Ok(Fate::Stall),
        // on the threshold to working precision: f creeps to zero without crossing it
        (false, false) => Ok(Fate::Stall),
    }
}

/// Smallest `j0` for which the trajectory from `(f0, sigma0, j0)` drives `f` to zero,
/// located by bisection to relative accuracy `1e-14`.
pub fn decay_threshold(model: &OdeModel, f0: f64, sigma0: f64) -> Result<f64> {
    check_start(f0, sigma0, 4.0 * f0)?;
    if f0 == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 4.0 * f0;
    let mut hi = 4.0 * f0 + 2.0 * model.improvement_coefficient(sigma0) * f0 * f0 + f0;
    while fate(model, f0, sigma0, hi)? == Fate::Stall {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        match fate(model, f0, sigma0, mid)? {
            Fate::Stall => lo = mid,
            Fate::Overshoot => hi = mid,
        }
    }
    Ok(hi)
}

/// Numerical reproduction of the Gronwall chain behind the improved inequality.
#[derive(Clone, Debug, Serialize)]
pub struct GronwallReport {
    pub f0: f64,
    pub sigma0: f64,
    pub j0: f64,
    /// `4 f0 + kappa_1 kappa_2/2 sigma0^{-d(1-m)/2} f0^2`
    pub improved_bound: f64,
    /// Decay threshold `j0*` obtained by shooting the closure.
    pub threshold_j0: f64,
    /// `max(0, improved_bound - threshold_j0)`
    pub residual_a: f64,
    /// `j0 - improved_bound` for the trajectory's own start.
    pub start_slack: f64,
    /// Final scale of the trajectory.
    pub sigma_inf: f64,
    /// `sigma0^{d(1-m)/2} - d^2(1-m)^3/(4 m K_M) f0`
    pub sigma_inf_bound: f64,
    /// `max(0, sigma_inf_bound - sigma_inf^{d(1-m)/2})`
    pub residual_b: f64,
    /// Drift of `j - 4f + int kappa_1 kappa_2 sigma^{-a} f j` along the trajectory.
    pub identity_residual: f64,
}

/// Report on a converged trajectory.  Requires `f(t_end) <= 1e-12 f0` or termination at `f = 0`.
pub fn gronwall_report(traj: &OdeTrajectory) -> Result<GronwallReport> {
    let model = &traj.model;
    let s0 = *traj.first();
    let end = *traj.last();
    let (f0, sigma0, j0) = (s0.f, s0.sigma, s0.j);
    let a = model.a;
    let sigma_inf_bound =
        sigma0.powf(a) - (model.d as f64).powi(2) * (1.0 - model.m).powi(3) / (4.0 * model.m * model.k_m) * f0;
    if f0 == 0.0 {
        return Ok(GronwallReport {
            f0,
            sigma0,
            j0,
            improved_bound: 0.0,
            threshold_j0: 0.0,
            residual_a: 0.0,
            start_slack: j0,
            sigma_inf: end.sigma,
            sigma_inf_bound,
            residual_b: 0.0,
            identity_residual: 0.0,
        });
    }
    if !(traj.reached_zero || end.f <= 1e-12 * f0) {
        return Err(GnsError::NotConverged { t: end.t, f: end.f });
    }
    let improved_bound = 4.0 * f0 + model.improvement_coefficient(sigma0) * f0 * f0;
    let threshold_j0 = decay_threshold(model, f0, sigma0)?;
    let identity_residual = traj
        .states
        .iter()
        .zip(&traj.dissipation)
        .map(|(s, q)| ((s.j - 4.0 * s.f + q) - (j0 - 4.0 * f0)).abs())
        .fold(0.0, f64::max);
    Ok(GronwallReport {
        f0,
        sigma0,
        j0,
        improved_bound,
        threshold_j0,
        residual_a: (improved_bound - threshold_j0).max(0.0),
        start_slack: j0 - improved_bound,
        sigma_inf: end.sigma,
        sigma_inf_bound,
        residual_b: (sigma_inf_bound - end.sigma.powf(a)).max(0.0),
        identity_residual,
    })
}
