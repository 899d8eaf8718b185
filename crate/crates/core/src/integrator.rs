//! Long-time integration of the full, limiting and averaged systems.
//!
//! The stepper is the Dormand–Prince 5(4) pair with PI step-size control and
//! Hairer's fourth-order dense output. The full system is integrated in polar
//! coordinates `x = r cos α`, `y = −r sin α` with `ρ = ln r`, so an absolute
//! error bound on `ρ` is a relative bound on `r` and amplitudes far below the
//! tolerance are still tracked. The averaged system is integrated in `(ln v, ψ)`
//! for the same reason.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::averaging::AveragedModel;
use crate::model::{action_angle_numeric, SystemSpec};

/// Radius below which a trajectory is treated as having reached the origin.
pub const COLLAPSE_RADIUS: f64 = 1e-150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    BadConfig(String),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("initial point ({x}, {y}) lies outside the well of closed orbits")]
    OutsideDomain { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t0: f64,
    pub t_end: f64,
    pub max_step: f64,
    pub samples_per_decade: usize,
    pub escape_radius: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            t0: 1.0,
            t_end: 1e5,
            max_step: 1.0,
            samples_per_decade: 64,
            escape_radius: 2.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let in_range = |x: f64| (1e-13..=1e-3).contains(&x);
        if !in_range(self.rel_tol) || !in_range(self.abs_tol) {
            return Err(IntegratorError::BadConfig(format!(
                "tolerances must lie in [1e-13, 1e-3], got rel {} abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.t0 > 0.0 && self.t_end > self.t0) {
            return Err(IntegratorError::BadConfig(format!("need 0 < t0 < t_end, got {} and {}", self.t0, self.t_end)));
        }
        if !(self.max_step > 0.0) || self.samples_per_decade == 0 || !(self.escape_radius > 0.0) {
            return Err(IntegratorError::BadConfig("max_step, samples_per_decade and escape_radius must be positive".into()));
        }
        Ok(())
    }

    /// `t0·10^{i/spd}` up to `t_end`, with `t_end` appended.
    pub fn sample_times(&self) -> Vec<f64> {
        let spd = self.samples_per_decade as f64;
        let mut out = Vec::new();
        let mut i = 0;
        loop {
            let t = self.t0 * 10f64.powf(i as f64 / spd);
            if t >= self.t_end * (1.0 - 1e-12) {
                break;
            }
            out.push(t);
            i += 1;
        }
        out.push(self.t_end);
        out
    }
}

/// How the error of each component is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorScale {
    /// `atol + rtol·|y|`.
    Relative,
    /// `atol + rtol`; for logarithmic and angular variables.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub scale: ErrorScale,
    pub max_step: f64,
}

/// Dense samples of an ODE solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<const D: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; D]>,
    /// Time at which the stop predicate fired.
    pub stopped: Option<f64>,
    pub steps: usize,
    pub rejected: usize,
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

struct StepResult<const D: usize> {
    y: [f64; D],
    k7: [f64; D],
    err: [f64; D],
    stages: [[f64; D]; 7],
}

fn dopri_step<const D: usize, F: FnMut(f64, &[f64; D]) -> [f64; D]>(
    f: &mut F,
    t: f64,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
) -> StepResult<D> {
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(t + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y_new);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    StepResult { y: y_new, k7, err, stages: [*k1, k2, k3, k4, k5, k6, k7] }
}

/// Hairer's continuous extension on `[t, t + h]`.
struct Dense<const D: usize> {
    t: f64,
    h: f64,
    r: [[f64; D]; 5],
}

impl<const D: usize> Dense<D> {
    fn new(t: f64, h: f64, y0: &[f64; D], y1: &[f64; D], k: &[[f64; D]; 7]) -> Self {
        let mut r = [[0.0; D]; 5];
        for i in 0..D {
            let dy = y1[i] - y0[i];
            let bspl = h * k[0][i] - dy;
            r[0][i] = y0[i];
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * k[6][i] - bspl;
            r[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        Dense { t, h, r }
    }

    fn eval(&self, t: f64) -> [f64; D] {
        let s = (t - self.t) / self.h;
        let s1 = 1.0 - s;
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = self.r[0][i] + s * (self.r[1][i] + s1 * (self.r[2][i] + s * (self.r[3][i] + s1 * self.r[4][i])));
        }
        out
    }
}

/// Adaptive DOPRI5 from `t0` through the last entry of `samples`, recording the
/// state at each sample time. Stops early, after recording the current state,
/// when `stop(t, y)` returns true for an accepted step.
pub fn dopri5<const D: usize, F, S>(
    mut f: F,
    t0: f64,
    y0: [f64; D],
    samples: &[f64],
    tol: Tolerance,
    mut stop: S,
) -> Result<Solution<D>, IntegratorError>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
    S: FnMut(f64, &[f64; D]) -> bool,
{
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - BETA * 0.75;
    let t_end = *samples.last().unwrap_or(&t0);
    let mut sol = Solution { t: Vec::with_capacity(samples.len()), y: Vec::with_capacity(samples.len()), stopped: None, steps: 0, rejected: 0 };
    let mut next = 0;
    while next < samples.len() && samples[next] <= t0 {
        sol.t.push(samples[next]);
        sol.y.push(y0);
        next += 1;
    }
    let scale = |a: f64, b: f64| match tol.scale {
        ErrorScale::Relative => tol.atol + tol.rtol * a.abs().max(b.abs()),
        ErrorScale::Unit => tol.atol + tol.rtol,
    };
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = {
        // Initial step from the size of the first derivative.
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for i in 0..D {
            let sc = scale(y[i], y[i]);
            d0 += (y[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / D as f64).sqrt(), (d1 / D as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(tol.max_step).min(t_end - t0)
    };
    let mut facold: f64 = 1e-4;
    let mut reject = false;
    while t < t_end {
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(IntegratorError::StepUnderflow(t));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let step = dopri_step(&mut f, t, &y, &k1, h);
        let mut err: f64 = 0.0;
        for i in 0..D {
            err += (step.err[i] / scale(y[i], step.y[i])).powi(2);
        }
        let err = (err / D as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            reject = true;
            sol.rejected += 1;
            continue;
        }
        let fac11 = err.powf(EXPO);
        let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(0.2, 10.0);
        if err <= 1.0 {
            facold = err.max(1e-4);
            sol.steps += 1;
            let t_new = if last { t_end } else { t + h };
            if next < samples.len() && samples[next] <= t_new {
                let dense = Dense::new(t, h, &y, &step.y, &step.stages);
                while next < samples.len() && samples[next] <= t_new {
                    let ts = samples[next];
                    sol.t.push(ts);
                    sol.y.push(if ts == t_new { step.y } else { dense.eval(ts) });
                    next += 1;
                }
            }
            t = t_new;
            y = step.y;
            k1 = step.k7;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(IntegratorError::NonFinite(t));
            }
            if stop(t, &y) {
                if sol.t.last() != Some(&t) {
                    sol.t.push(t);
                    sol.y.push(y);
                }
                sol.stopped = Some(t);
                return Ok(sol);
            }
            let mut h_new = (h / fac).min(tol.max_step);
            if reject {
                h_new = h_new.min(h);
            }
            reject = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFE).min(5.0);
            reject = true;
            sol.rejected += 1;
        }
    }
    Ok(sol)
}

/// Fixed-step DOPRI5 (fifth-order solution) over `n` equal steps.
pub fn fixed_step<const D: usize, F: FnMut(f64, &[f64; D]) -> [f64; D]>(mut f: F, t0: f64, y0: [f64; D], t1: f64, n: usize) -> [f64; D] {
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    let mut k1 = f(t0, &y);
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let s = dopri_step(&mut f, t, &y, &k1, h);
        y = s.y;
        k1 = s.k7;
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    /// `r` exceeded the escape radius.
    Escaped { t: f64 },
    /// `r` fell below [`COLLAPSE_RADIUS`].
    Collapsed { t: f64 },
}

/// Log-sampled trajectory of the full system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `H0(x, y)`.
    pub e: Vec<f64>,
    /// `φ − S/κ`, continuous; NaN outside the well.
    pub theta: Vec<f64>,
    pub v_est: Option<Vec<f64>>,
    /// Averaged phase `Ψ_M`, filled alongside `v_est`.
    pub psi_est: Option<Vec<f64>>,
    /// `ln r`, exact even where `x`, `y` underflow.
    pub log_r: Vec<f64>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn r(&self, i: usize) -> f64 {
        self.log_r[i].exp()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,y,E,theta,v_est")?;
        for i in 0..self.len() {
            let v = self.v_est.as_ref().map_or(f64::NAN, |v| v[i]);
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i], self.x[i], self.y[i], self.e[i], self.theta[i], v
            )?;
        }
        Ok(())
    }
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn polar_field<'a>(spec: &'a SystemSpec) -> impl FnMut(f64, &[f64; 2]) -> [f64; 2] + 'a {
    move |t, s| {
        let r = s[0].exp();
        let (sa, ca) = s[1].sin_cos();
        let (x, y) = (r * ca, -r * sa);
        let (dx, dy) = spec.rhs(t, x, y);
        let r2 = r * r;
        [(x * dx + y * dy) / r2, (y * dx - x * dy) / r2]
    }
}

/// Integrates the full system from `(x0, y0)` at `cfg.t0`.
pub fn integrate_full(
    spec: &SystemSpec,
    x0: f64,
    y0: f64,
    cfg: &IntegratorConfig,
    model: Option<&AveragedModel>,
) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    if action_angle_numeric(spec.h, x0, y0).is_err() {
        return Err(IntegratorError::OutsideDomain { x: x0, y: y0 });
    }
    let r0 = x0.hypot(y0);
    if r0 == 0.0 {
        return Ok(trivial(spec, cfg, model));
    }
    let state0 = [r0.ln(), (-y0).atan2(x0)];
    let tol = Tolerance { rtol: cfg.rel_tol, atol: cfg.abs_tol, scale: ErrorScale::Unit, max_step: cfg.max_step };
    let (lo, hi) = (COLLAPSE_RADIUS.ln(), cfg.escape_radius.ln());
    let samples = cfg.sample_times();
    let sol = dopri5(polar_field(spec), cfg.t0, state0, &samples, tol, |_, s| s[0] > hi || s[0] < lo)?;
    let outcome = match sol.stopped {
        Some(t) if sol.y.last().is_some_and(|s| s[0] > hi) => Outcome::Escaped { t },
        Some(t) => Outcome::Collapsed { t },
        None => Outcome::Completed,
    };
    Ok(assemble(spec, &sol, outcome, model))
}

fn trivial(spec: &SystemSpec, cfg: &IntegratorConfig, model: Option<&AveragedModel>) -> Trajectory {
    let t = cfg.sample_times();
    let n = t.len();
    let kappa = spec.kappa() as f64;
    let theta: Vec<f64> = t.iter().map(|&s| -spec.phase.phase(s) / kappa).collect();
    let psi_est = model.map(|m| t.iter().zip(&theta).map(|(&s, &th)| m.psi_transform(s, 0.0, th)).collect());
    Trajectory {
        x: vec![0.0; n],
        y: vec![0.0; n],
        e: vec![0.0; n],
        theta,
        v_est: model.map(|_| vec![0.0; n]),
        psi_est,
        log_r: vec![f64::NEG_INFINITY; n],
        t,
        outcome: Outcome::Completed,
    }
}

fn assemble(spec: &SystemSpec, sol: &Solution<2>, outcome: Outcome, model: Option<&AveragedModel>) -> Trajectory {
    let n = sol.t.len();
    let kappa = spec.kappa() as f64;
    let mut tr = Trajectory {
        t: sol.t.clone(),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        v_est: model.map(|_| Vec::with_capacity(n)),
        psi_est: model.map(|_| Vec::with_capacity(n)),
        log_r: Vec::with_capacity(n),
        outcome,
    };
    for (&t, s) in sol.t.iter().zip(&sol.y) {
        let r = s[0].exp();
        let (sa, ca) = s[1].sin_cos();
        let (x, y) = (r * ca, -r * sa);
        // E from ρ directly keeps full relative accuracy for tiny r.
        let e = 0.5 * r * r * (1.0 - 0.5 * spec.h * r * r * ca.powi(4));
        let phi = match action_angle_numeric(spec.h, x, y) {
            Ok((_, phi)) => s[1] + wrap_pi(phi - s[1]),
            Err(_) => f64::NAN,
        };
        let theta = phi - spec.phase.phase(t) / kappa;
        if let (Some(v), Some(p), Some(m)) = (tr.v_est.as_mut(), tr.psi_est.as_mut(), model) {
            let (scaled, th) = m.to_scaled(t, e, phi);
            if phi.is_nan() {
                v.push(f64::NAN);
                p.push(f64::NAN);
            } else {
                v.push(m.v_transform(t, scaled, th));
                p.push(m.psi_transform(t, scaled, th));
            }
        }
        tr.x.push(x);
        tr.y.push(y);
        tr.e.push(e);
        tr.theta.push(theta);
        tr.log_r.push(s[0]);
    }
    tr
}

/// Samples of the truncated averaged system.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTrajectory {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
    /// `ln v`, exact where `v` underflows.
    pub log_v: Vec<f64>,
    pub outcome: Outcome,
}

/// Integrates `dv/dt = Σ τ^k Λ_k`, `dψ/dt = Σ τ^k Ω_k` with remainders dropped.
pub fn integrate_averaged(model: &AveragedModel, v0: f64, psi0: f64, cfg: &IntegratorConfig) -> Result<AveragedTrajectory, IntegratorError> {
    cfg.validate()?;
    let samples = cfg.sample_times();
    if !(v0 > 0.0) {
        let psi = integrate_phase_only(model, psi0, &samples, cfg)?;
        let n = samples.len();
        return Ok(AveragedTrajectory { t: samples, v: vec![0.0; n], psi, log_v: vec![f64::NEG_INFINITY; n], outcome: Outcome::Completed });
    }
    let tol = Tolerance { rtol: cfg.rel_tol, atol: cfg.abs_tol, scale: ErrorScale::Unit, max_step: f64::INFINITY };
    let hi = cfg.escape_radius.ln();
    let lo = (COLLAPSE_RADIUS * COLLAPSE_RADIUS).ln();
    let rhs = |t: f64, s: &[f64; 2]| {
        let v = s[0].exp();
        [model.log_rate(t, v, s[1]), model.omega_sum(t, v, s[1])]
    };
    let sol = dopri5(rhs, cfg.t0, [v0.ln(), psi0], &samples, tol, |_, s| s[0] > hi || s[0] < lo)?;
    let outcome = match sol.stopped {
        Some(t) if sol.y.last().is_some_and(|s| s[0] > hi) => Outcome::Escaped { t },
        Some(t) => Outcome::Collapsed { t },
        None => Outcome::Completed,
    };
    Ok(AveragedTrajectory {
        v: sol.y.iter().map(|s| s[0].exp()).collect(),
        psi: sol.y.iter().map(|s| s[1]).collect(),
        log_v: sol.y.iter().map(|s| s[0]).collect(),
        t: sol.t,
        outcome,
    })
}

fn integrate_phase_only(model: &AveragedModel, psi0: f64, samples: &[f64], cfg: &IntegratorConfig) -> Result<Vec<f64>, IntegratorError> {
    let tol = Tolerance { rtol: cfg.rel_tol, atol: cfg.abs_tol, scale: ErrorScale::Unit, max_step: f64::INFINITY };
    let sol = dopri5(|t, s: &[f64; 1]| [model.omega_sum(t, 0.0, s[0])], cfg.t0, [psi0], samples, tol, |_, _| false)?;
    Ok(sol.y.iter().map(|s| s[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PhaseLaw, SystemSpec};

    fn oscillator(h: f64) -> SystemSpec {
        SystemSpec::new(h, PhaseLaw::new(1, 1, vec![1.0, 0.0]).unwrap(), vec![]).unwrap()
    }

    #[test]
    fn dense_output_matches_exact_solution() {
        let samples: Vec<f64> = (1..=200).map(|i| i as f64 * 0.173).collect();
        let tol = Tolerance { rtol: 1e-11, atol: 1e-13, scale: ErrorScale::Relative, max_step: 10.0 };
        let sol = dopri5(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], &samples, tol, |_, _| false).unwrap();
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert!((y[0] - t.cos()).abs() < 1e-8, "t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn fifth_order_convergence() {
        let f = |t: f64, y: &[f64; 2]| [y[1], -y[0] + 0.5 * (t.sin()) * y[0] / t];
        let reference = fixed_step(f, 1.0, [0.4, 0.0], 11.0, 4096);
        let err = |n| {
            let y = fixed_step(f, 1.0, [0.4, 0.0], 11.0, n);
            (y[0] - reference[0]).hypot(y[1] - reference[1])
        };
        let order = (err(100) / err(200)).log2();
        assert!(order > 4.7, "order {order}");
    }

    #[test]
    fn unperturbed_energy_is_conserved() {
        for h in [0.0, 1.0 / 6.0] {
            let spec = oscillator(h);
            let cfg = IntegratorConfig { t_end: 1e4, ..IntegratorConfig::default() };
            let tr = integrate_full(&spec, 0.4, 0.0, &cfg, None).unwrap();
            let e0 = tr.e[0];
            let drift = tr.e.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-9 * cfg.t_end.sqrt(), "h={h} drift {drift}");
            assert_eq!(tr.outcome, Outcome::Completed);
        }
    }

    #[test]
    fn theta_is_constant_without_perturbation() {
        let spec = oscillator(0.0);
        let cfg = IntegratorConfig { t_end: 1e3, ..IntegratorConfig::default() };
        let tr = integrate_full(&spec, 0.0, -0.3, &cfg, None).unwrap();
        for th in &tr.theta {
            assert!((th - tr.theta[0]).abs() < 1e-6);
        }
        assert!((tr.theta[0] - (PI / 2.0 - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn sample_grid_is_log_spaced() {
        let cfg = IntegratorConfig { t_end: 100.0, samples_per_decade: 4, ..IntegratorConfig::default() };
        let s = cfg.sample_times();
        assert_eq!(s.len(), 9);
        assert!((s[4] - 10.0).abs() < 1e-12);
        assert_eq!(*s.last().unwrap(), 100.0);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let cfg = IntegratorConfig { rel_tol: 1e-15, ..IntegratorConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
