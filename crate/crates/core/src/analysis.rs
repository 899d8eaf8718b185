//! Empirical verdicts from trajectories: rate-law fits, phase regime
//! detection, Lyapunov monitors and agreement with the classifier.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::averaging::AveragedModel;
use crate::classifier::{
    hat_quantities, leading_phase, linear_part, Classification, RateForm, Regime, RegimeVerdict, Stability, Structure,
};
use crate::integrator::{Outcome, Trajectory};
use crate::quad;
use crate::seriesring::TrigPoly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("fit needs {needed} decades of data, got {span:.2}")]
    InsufficientData { span: f64, needed: f64 },
}

/// Fitted law for the amplitude `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    /// `r ≈ C t^β exp(c t^α)`.
    ExpOfPower { c: f64, alpha: f64, beta: f64 },
    /// `r ≈ C t^β`.
    Power { beta: f64 },
    Bounded,
    Escaped { t: f64 },
}

impl Law {
    pub fn family(&self) -> &'static str {
        match self {
            Law::ExpOfPower { .. } => "exp_of_power",
            Law::Power { .. } => "power",
            Law::Bounded => "bounded",
            Law::Escaped { .. } => "escaped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub law: Law,
    /// `ln C`.
    pub log_prefactor: f64,
    pub window: (f64, f64),
    /// RMS of the residual of `ln r`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Share of the post-transient decades used, counted from the end.
    pub window_fraction: f64,
    /// Leading decades treated as transient.
    pub skip_decades: f64,
    /// Minimum span of the whole record.
    pub min_decades: f64,
    /// A power law flatter than this is reported as bounded.
    pub bounded_slope: f64,
    /// The exp-of-power form must cut the power-law residual by this factor.
    pub residual_ratio: f64,
    /// Minimum change of `c t^α` across the window, in nats.
    pub min_exp_span: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { window_fraction: 0.5, skip_decades: 1.0, min_decades: 3.0, bounded_slope: 0.01, residual_ratio: 0.5, min_exp_span: 0.5 }
    }
}

/// Exponents `1 − k/2q` of the exp-of-power laws reachable for a given `q`.
pub fn rate_candidates(q: u32) -> Vec<f64> {
    let two_q = 2 * q as usize;
    (1..two_q).map(|k| 1.0 - k as f64 / two_q as f64).collect()
}

/// Exponents `1 − k/2q` for the orders `k < 2q` at which the averaged
/// model has a nonzero linear part.
pub fn model_rate_candidates(model: &AveragedModel) -> Vec<f64> {
    let two_q = 2 * model.q as usize;
    (2..two_q.min(model.n + 1))
        .filter(|&k| !linear_part(model, k).is_zero())
        .map(|k| 1.0 - k as f64 / two_q as f64)
        .collect()
}

fn lstsq(cols: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(y);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).expect("svd with u and v");
    let res = &a * &sol - &b;
    (sol.iter().copied().collect(), (res.norm_squared() / n as f64).sqrt())
}

/// Fits `log_r(t)` by `a + β ln t` and by `a + c t^α + β ln t` for each
/// candidate `α`, keeping the exp-of-power form only when it clearly wins.
pub fn fit_log_amplitude(t: &[f64], log_r: &[f64], opts: &FitOptions, alphas: &[f64]) -> Result<FitResult, AnalysisError> {
    let pts: Vec<(f64, f64)> = t.iter().zip(log_r).filter(|(ti, y)| **ti > 0.0 && y.is_finite()).map(|(a, b)| (*a, *b)).collect();
    let span = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (b.0 / a.0).log10(),
        _ => 0.0,
    };
    if span < opts.min_decades {
        return Err(AnalysisError::InsufficientData { span, needed: opts.min_decades });
    }
    let lo_dec = pts[0].0.log10() + opts.skip_decades;
    let hi_dec = pts[pts.len() - 1].0.log10();
    let t_lo = 10f64.powf(hi_dec - opts.window_fraction * (hi_dec - lo_dec));
    let win: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.0 >= t_lo).collect();
    if win.len() < 8 {
        return Err(AnalysisError::InsufficientData { span, needed: opts.min_decades });
    }
    let t_hi = win[win.len() - 1].0;
    let y: Vec<f64> = win.iter().map(|p| p.1).collect();
    let ones = vec![1.0; win.len()];
    let logs: Vec<f64> = win.iter().map(|p| p.0.ln()).collect();
    let window = (win[0].0, t_hi);

    let (pw, rp) = lstsq(&[ones.clone(), logs.clone()], &y);
    let y_range = y.iter().fold(0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    for &alpha in alphas.iter().filter(|a| **a > 0.0 && **a < 1.0) {
        let scale = t_hi.powf(alpha);
        let col: Vec<f64> = win.iter().map(|p| p.0.powf(alpha) / scale).collect();
        let (w, re) = lstsq(&[ones.clone(), col, logs.clone()], &y);
        if best.as_ref().is_none_or(|b| re < b.2) {
            best = Some((alpha, vec![w[0], w[1] / scale, w[2]], re));
        }
    }
    if let Some((alpha, w, re)) = best {
        let exp_span = (w[1] * (t_hi.powf(alpha) - window.0.powf(alpha))).abs();
        if rp > 1e-9 * y_range && re < opts.residual_ratio * rp && exp_span >= opts.min_exp_span {
            return Ok(FitResult {
                law: Law::ExpOfPower { c: w[1], alpha, beta: w[2] },
                log_prefactor: w[0],
                window,
                residual: re,
            });
        }
    }
    let beta = pw[1];
    let law = if beta.abs() < opts.bounded_slope { Law::Bounded } else { Law::Power { beta } };
    Ok(FitResult { law, log_prefactor: pw[0], window, residual: rp })
}

/// `ln √(2E)`, falling back to `ln r` where `E` is not positive.
pub fn log_amplitude(traj: &Trajectory) -> Vec<f64> {
    traj.e.iter().zip(&traj.log_r).map(|(&e, &lr)| if e > 0.0 { 0.5 * (2.0 * e).ln() } else { lr }).collect()
}

/// Fits the decay or growth law of a trajectory's amplitude.
pub fn fit_decay(traj: &Trajectory, opts: &FitOptions, alphas: &[f64]) -> Result<FitResult, AnalysisError> {
    if let Outcome::Escaped { t } = traj.outcome {
        let t0 = traj.t.first().copied().unwrap_or(t);
        return Ok(FitResult { law: Law::Escaped { t }, log_prefactor: f64::NAN, window: (t0, t), residual: 0.0 });
    }
    fit_log_amplitude(&traj.t, &log_amplitude(traj), opts, alphas)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    pub lock_tol: f64,
    /// Minimum advance over the last decade to call the phase drifting.
    pub drift_per_decade: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions { lock_tol: 0.05, drift_per_decade: TAU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseState {
    Locked,
    Drifting,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockReport {
    pub state: PhaseState,
    pub locked: bool,
    /// Terminal phase.
    pub psi_lock: f64,
    /// Total variation over the last decade.
    pub variation: f64,
    /// Net advance over the last decade.
    pub advance: f64,
    /// `p` in `|ψ − ψ*| ~ t^{-p}`, fitted over the second half of the record.
    pub convergence_rate_est: Option<f64>,
    pub matched_root: Option<f64>,
}

/// Distance between two phases modulo `π`.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Classifies the phase record as locked, drifting or undecided.
pub fn detect_phase(t: &[f64], phase: &[f64], roots: &[f64], opts: &PhaseOptions) -> LockReport {
    let undecided = LockReport {
        state: PhaseState::Undecided,
        locked: false,
        psi_lock: f64::NAN,
        variation: f64::NAN,
        advance: f64::NAN,
        convergence_rate_est: None,
        matched_root: None,
    };
    let Some(&t_end) = t.last() else { return undecided };
    let start = t.iter().position(|&s| s >= t_end / 10.0).unwrap_or(0);
    let win = &phase[start..];
    if win.len() < 2 || win.iter().any(|p| !p.is_finite()) {
        return undecided;
    }
    let variation: f64 = win.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let last = win[win.len() - 1];
    let advance = (last - win[0]).abs();
    let matched_root = roots
        .iter()
        .copied()
        .filter(|&r| phase_distance(last, r) < opts.lock_tol)
        .min_by(|a, b| phase_distance(last, *a).total_cmp(&phase_distance(last, *b)));
    let locked = variation < opts.lock_tol && (roots.is_empty() || matched_root.is_some());
    let state = if locked {
        PhaseState::Locked
    } else if advance > opts.drift_per_decade {
        PhaseState::Drifting
    } else {
        PhaseState::Undecided
    };
    let convergence_rate_est = matched_root.and_then(|root| {
        let t_mid = (t[0] * t_end).sqrt();
        let (lt, ld): (Vec<f64>, Vec<f64>) = t
            .iter()
            .zip(phase)
            .filter(|(s, p)| **s >= t_mid && p.is_finite())
            .map(|(s, p)| (s.ln(), phase_distance(*p, root)))
            .filter(|(_, d)| *d > 1e-14)
            .map(|(s, d)| (s, d.ln()))
            .unzip();
        (lt.len() >= 8).then(|| -lstsq(&[vec![1.0; lt.len()], lt], &ld).0[1])
    });
    LockReport { state, locked, psi_lock: last, variation, advance, convergence_rate_est, matched_root }
}

/// [`detect_phase`] on the averaged phase when available, else on `θ`.
pub fn detect_phase_traj(traj: &Trajectory, roots: &[f64], opts: &PhaseOptions) -> LockReport {
    let phase = traj.psi_est.as_ref().unwrap_or(&traj.theta);
    detect_phase(&traj.t, phase, roots, opts)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("certificate monitoring needs a stable verdict, got {0:?}")]
    NotStable(Stability),
    #[error("trajectory lacks averaged channels v_est/psi_est")]
    MissingAveragedChannels,
    #[error("no samples after t = {0}")]
    NoSamples(f64),
}

/// End of the transient excluded from certificate monitoring.
pub const DEFAULT_T_CERT: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub family: String,
    pub t_cert: f64,
    pub samples: usize,
    pub decreasing: usize,
    pub fraction: f64,
}

/// Periodic primitive `∫_0^ψ (f − ⟨f⟩)` tabulated on a uniform grid.
struct Primitive {
    table: Vec<f64>,
    max_abs: f64,
}

impl Primitive {
    const PIECES: usize = 2048;

    fn new<F: Fn(f64) -> f64>(f: F, mean: f64) -> Self {
        let h = TAU / Self::PIECES as f64;
        let mut table = Vec::with_capacity(Self::PIECES + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for i in 0..Self::PIECES {
            let a = i as f64 * h;
            acc += quad::integrate(|s| f(s) - mean, a, a + h, 1e-13);
            table.push(acc);
        }
        let max_abs = table.iter().fold(0f64, |m, v| m.max(v.abs()));
        Primitive { table, max_abs }
    }

    fn eval(&self, psi: f64) -> f64 {
        let x = psi.rem_euclid(TAU) / TAU * Self::PIECES as f64;
        let i = (x.floor() as usize).min(Self::PIECES - 1);
        let w = x - i as f64;
        self.table[i] * (1.0 - w) + self.table[i + 1] * w
    }
}

enum Certificate {
    /// `u² + c φ²` or `u² + α₁(φ − β₁u)²`, `u = √v`, `φ = ψ − ψ*`.
    Locking { psi_star: f64, alpha: f64, beta: f64 },
    /// `v`.
    Plain,
    /// `v t^w`.
    Weighted { w: f64 },
    /// `(v t^ν − R*²)²`.
    Balance { nu: f64, r2: f64 },
    /// `v exp(t^{(m−n)/2q}(Z⁺ − sgn ω · Z(ψ)))`.
    MeanExp { z: Primitive, omega: TrigPoly, power: f64 },
    /// `v (1 − t^{−(n−m)/2q}(Z⁺ + cX⁺ + sgn ω (Z + cX)))`.
    MeanPoly { z: Primitive, x: Primitive, c: f64, omega: TrigPoly, power: f64 },
}

impl Certificate {
    fn family(&self) -> &'static str {
        match self {
            Certificate::Locking { beta, .. } if *beta == 0.0 => "L0",
            Certificate::Locking { .. } => "L1",
            Certificate::Plain => "W(v)",
            Certificate::Weighted { .. } => "W(v t^w)",
            Certificate::Balance { .. } => "l(zeta)",
            Certificate::MeanExp { .. } => "W3",
            Certificate::MeanPoly { .. } => "W2",
        }
    }

    fn eval(&self, t: f64, v: f64, psi: f64) -> f64 {
        match self {
            Certificate::Locking { psi_star, alpha, beta } => {
                let d = (psi - psi_star).rem_euclid(PI);
                let phi = if d > PI / 2.0 { d - PI } else { d };
                let u = v.max(0.0).sqrt();
                v + alpha * (phi - beta * u).powi(2)
            }
            Certificate::Plain => v,
            Certificate::Weighted { w } => v * t.powf(*w),
            Certificate::Balance { nu, r2 } => (v * t.powf(*nu) - r2).powi(2),
            Certificate::MeanExp { z, omega, power } => {
                let sgn = omega.eval(psi).signum();
                v * (t.powf(*power) * (z.max_abs - sgn * z.eval(psi))).exp()
            }
            Certificate::MeanPoly { z, x, c, omega, power } => {
                let sgn = omega.eval(psi).signum();
                let corr = z.max_abs + c * x.max_abs + sgn * (z.eval(psi) + c * x.eval(psi));
                v * (1.0 - t.powf(*power) * corr)
            }
        }
    }
}

fn v_exponent(verdict: &RegimeVerdict) -> Option<f64> {
    let lq = verdict.l as f64 / verdict.q as f64;
    verdict.rate.filter(|r| r.form == RateForm::Power).map(|r| 2.0 * r.exponent + lq)
}

fn certificate_for(verdict: &RegimeVerdict, model: &AveragedModel) -> Certificate {
    let path = verdict.theorem_path.as_str();
    let two_q = 2 * verdict.q as usize;
    let lq = verdict.l as f64 / verdict.q as f64;
    if let (Regime::Locking { psi_star, theta_m }, true) = (verdict.regime, path.starts_with("locking.linear")) {
        let shift = if verdict.n == two_q { lq } else { 0.0 };
        let lam = verdict.scalars.lambda_at_star.unwrap_or(0.0) + shift;
        if lam < 0.0 && theta_m < 0.0 {
            let w1 = model.omega[verdict.m].power_slice(1).eval(psi_star);
            if w1.abs() < 1e-12 || (2.0 * theta_m + lam).abs() < 1e-12 {
                return Certificate::Locking { psi_star, alpha: lam / (2.0 * theta_m), beta: 0.0 };
            }
            let beta = 2.0 * w1 / (2.0 * theta_m + lam);
            return Certificate::Locking { psi_star, alpha: lam / (4.0 * theta_m * beta * beta), beta };
        }
    }
    if path.contains("balance") {
        if let (Some(nu), Some(rs)) = (verdict.scalars.v_decay, verdict.scalars.r_star) {
            return Certificate::Balance { nu, r2: rs * rs };
        }
    }
    if path.starts_with("drifting.mean") {
        if let Structure::Linear { lambda_n } = &verdict.structure {
            let omega = leading_phase(model, verdict.m);
            if let Ok(h) = hat_quantities(lambda_n, &omega) {
                let gamma = |s: f64| lambda_n.eval(s) / omega.eval(s).abs();
                let z = Primitive::new(gamma, h.gamma_hat);
                let (n, m) = (verdict.n as f64, verdict.m as f64);
                if verdict.m < verdict.n {
                    let x = Primitive::new(|s: f64| 1.0 / omega.eval(s).abs(), h.chi_hat);
                    let c = if verdict.n == two_q { lq } else { 0.0 };
                    return Certificate::MeanPoly { z, x, c, omega, power: -(n - m) / two_q as f64 };
                }
                return Certificate::MeanExp { z, omega, power: (m - n) / two_q as f64 };
            }
        }
    }
    if path.starts_with("drifting.definite") {
        return Certificate::Plain;
    }
    match v_exponent(verdict) {
        Some(p) if p < 0.0 => Certificate::Weighted { w: -p / 2.0 },
        _ => Certificate::Plain,
    }
}

/// Evaluates the Lyapunov function matching the verdict along the averaged
/// channels and counts how often it decreases after `t_cert`.
pub fn monitor_certificate(
    traj: &Trajectory,
    verdict: &RegimeVerdict,
    model: &AveragedModel,
    t_cert: f64,
) -> Result<CertificateReport, MonitorError> {
    if !verdict.stability.is_stable() {
        return Err(MonitorError::NotStable(verdict.stability));
    }
    let (Some(v), Some(psi)) = (traj.v_est.as_ref(), traj.psi_est.as_ref()) else {
        return Err(MonitorError::MissingAveragedChannels);
    };
    let cert = certificate_for(verdict, model);
    let vals: Vec<f64> = traj
        .t
        .iter()
        .zip(v.iter().zip(psi))
        .filter(|(t, _)| **t >= t_cert)
        .map(|(&t, (&v, &p))| cert.eval(t, v, p))
        .filter(|w| w.is_finite())
        .collect();
    if vals.len() < 2 {
        return Err(MonitorError::NoSamples(t_cert));
    }
    let samples = vals.len() - 1;
    let decreasing = vals.windows(2).filter(|w| w[1] <= w[0]).count();
    Ok(CertificateReport {
        family: cert.family().to_string(),
        t_cert,
        samples,
        decreasing,
        fraction: decreasing as f64 / samples as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub fit: FitOptions,
    /// Start of the certificate window.
    pub t_cert: f64,
    pub phase: PhaseOptions,
    /// Stable runs must shrink `r` by this factor.
    pub shrink: f64,
    /// Unstable runs must grow the weighted amplitude by this factor.
    pub growth: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { fit: FitOptions::default(), t_cert: DEFAULT_T_CERT, phase: PhaseOptions::default(), shrink: 10.0, growth: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcCheck {
    pub x0: f64,
    pub y0: f64,
    pub outcome: Outcome,
    pub r0: f64,
    pub r_end: f64,
    /// `t^{l/2q} √(2E)` at the end over its initial value.
    pub weighted_growth: f64,
    pub fit: Option<FitResult>,
    pub phase: LockReport,
    /// Lyapunov monitor for stable verdicts when averaged channels exist.
    pub certificate: Option<CertificateReport>,
    pub agree: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub verdict: String,
    pub checks: Vec<IcCheck>,
    pub agree: bool,
}

impl VerifyReport {
    pub fn status(&self) -> &'static str {
        if self.agree {
            "AGREE"
        } else {
            "MISMATCH"
        }
    }
}

fn weighted_amplitude(traj: &Trajectory, i: usize, weight: f64) -> f64 {
    let amp = if traj.e[i] > 0.0 { (2.0 * traj.e[i]).sqrt() } else { traj.r(i) };
    traj.t[i].powf(weight) * amp
}

/// Cross-checks the classifier verdict against trajectories.
pub fn verify(
    model: &AveragedModel,
    classification: &Classification,
    trajectories: &[Trajectory],
    opts: &VerifyOptions,
) -> VerifyReport {
    let summary = classification.summary;
    let lead = classification.verdicts.first();
    let roots: Vec<f64> = classification
        .verdicts
        .iter()
        .filter_map(|v| match v.regime {
            Regime::Locking { psi_star, .. } => Some(psi_star),
            Regime::Drifting { .. } => None,
        })
        .collect();
    let (q, l) = lead.map_or((1, 0), |v| (v.q, v.l));
    let weight = l as f64 / (2.0 * q as f64);
    let mut alphas = model_rate_candidates(model);
    if let Some(r) = lead.and_then(|v| v.rate).filter(|r| r.form == RateForm::ExpOfPower) {
        alphas.push(r.exponent);
    }
    let checks: Vec<IcCheck> = trajectories
        .iter()
        .map(|traj| {
            let mut check = check_one(traj, summary, lead, &roots, weight, &alphas, opts);
            check.certificate = lead.and_then(|v| monitor_certificate(traj, v, model, opts.t_cert).ok());
            check
        })
        .collect();
    let agree = !checks.is_empty() && checks.iter().all(|c| c.agree);
    VerifyReport { verdict: summary.label().to_string(), checks, agree }
}

fn check_one(
    traj: &Trajectory,
    summary: Stability,
    lead: Option<&RegimeVerdict>,
    roots: &[f64],
    weight: f64,
    alphas: &[f64],
    opts: &VerifyOptions,
) -> IcCheck {
    let last = traj.len() - 1;
    let r0 = traj.r(0);
    let r_end = traj.r(last);
    let weighted_growth = weighted_amplitude(traj, last, weight) / weighted_amplitude(traj, 0, weight);
    let fit = fit_decay(traj, &opts.fit, alphas).ok();
    let phase = detect_phase_traj(traj, roots, &opts.phase);
    let escaped = matches!(traj.outcome, Outcome::Escaped { .. });
    let mut notes = Vec::new();
    let agree = match summary {
        Stability::ExpStable | Stability::PolyStable => {
            let mut ok = true;
            if escaped {
                ok = false;
                notes.push("escaped".to_string());
            }
            if !(r_end < r0 / opts.shrink) {
                ok = false;
                notes.push(format!("r shrank only by {:.3}", r0 / r_end));
            }
            let want = lead.and_then(|v| v.rate).map(|r| r.form);
            match (want, fit.map(|f| f.law)) {
                (Some(RateForm::ExpOfPower), Some(Law::ExpOfPower { .. })) | (Some(RateForm::Power), Some(Law::Power { .. })) => {}
                (_, None) if matches!(traj.outcome, Outcome::Collapsed { .. }) => notes.push("collapsed before the fit window".to_string()),
                (Some(w), got) => {
                    ok = false;
                    notes.push(format!("law {:?} expected, fitted {}", w, got.map_or("none", |l| l.family())));
                }
                (None, _) => {}
            }
            let locking = lead.is_some_and(|v| matches!(v.regime, Regime::Locking { .. }));
            match (locking, phase.state) {
                (true, PhaseState::Drifting) => {
                    ok = false;
                    notes.push("phase drifts under a locking verdict".to_string());
                }
                (false, PhaseState::Locked) if !roots.is_empty() => {
                    ok = false;
                    notes.push("phase locks under a drifting verdict".to_string());
                }
                _ => {}
            }
            ok
        }
        Stability::Unstable | Stability::UnstableWithWeight { .. } => {
            let rising = matches!(fit.map(|f| f.law), Some(Law::Power { beta }) if beta > opts.fit.bounded_slope);
            let grew = weighted_growth >= opts.growth || r_end >= opts.growth * r0 || rising;
            if !escaped && !grew {
                notes.push(format!("no escape and weighted amplitude changed by {weighted_growth:.3}"));
            }
            escaped || grew
        }
        Stability::Inconclusive => {
            notes.push("classifier inconclusive".to_string());
            false
        }
    };
    IcCheck { x0: traj.x[0], y0: traj.y[0], outcome: traj.outcome, r0, r_end, weighted_growth, fit, phase, certificate: None, agree, notes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(decades: f64, per: usize) -> Vec<f64> {
        let n = (decades * per as f64) as usize;
        (0..=n).map(|i| 10f64.powf(i as f64 / per as f64)).collect()
    }

    #[test]
    fn recovers_exp_of_root() {
        let t = grid(5.0, 64);
        let y: Vec<f64> = t.iter().map(|s| -2.0 * s.sqrt()).collect();
        let fit = fit_log_amplitude(&t, &y, &FitOptions::default(), &rate_candidates(2)).unwrap();
        let Law::ExpOfPower { c, alpha, .. } = fit.law else { panic!("{:?}", fit.law) };
        assert!((alpha - 0.5).abs() < 0.02 && (c + 2.0).abs() < 0.05, "{c} {alpha}");
    }

    #[test]
    fn recovers_power() {
        let t = grid(5.0, 64);
        let y: Vec<f64> = t.iter().map(|s| 3f64.ln() - 0.375 * s.ln()).collect();
        let fit = fit_log_amplitude(&t, &y, &FitOptions::default(), &rate_candidates(4)).unwrap();
        let Law::Power { beta } = fit.law else { panic!("{:?}", fit.law) };
        assert!((beta + 0.375).abs() < 0.01);
        assert!((fit.log_prefactor - 3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn short_records_are_rejected() {
        let t = grid(2.0, 64);
        let y = vec![0.0; t.len()];
        assert!(matches!(fit_log_amplitude(&t, &y, &FitOptions::default(), &[0.5]), Err(AnalysisError::InsufficientData { .. })));
    }

    #[test]
    fn flat_record_is_bounded() {
        let t = grid(4.0, 64);
        let y: Vec<f64> = t.iter().map(|s| -1.0 + 0.01 * s.sin()).collect();
        let fit = fit_log_amplitude(&t, &y, &FitOptions::default(), &[0.5]).unwrap();
        assert_eq!(fit.law, Law::Bounded);
    }

    #[test]
    fn constant_phase_locks() {
        let t = grid(4.0, 64);
        let phase = vec![0.7; t.len()];
        let rep = detect_phase(&t, &phase, &[], &PhaseOptions::default());
        assert!(rep.locked && rep.state == PhaseState::Locked);
        assert_eq!(rep.psi_lock, 0.7);
        let rep = detect_phase(&t, &phase, &[0.7 - PI], &PhaseOptions::default());
        assert_eq!(rep.matched_root, Some(0.7 - PI));
        let rep = detect_phase(&t, &phase, &[1.5], &PhaseOptions::default());
        assert_eq!(rep.state, PhaseState::Undecided);
    }

    #[test]
    fn growing_phase_drifts() {
        let t = grid(4.0, 64);
        let phase: Vec<f64> = t.iter().map(|s| -2.0 * s.sqrt()).collect();
        let rep = detect_phase(&t, &phase, &[0.0], &PhaseOptions::default());
        assert_eq!(rep.state, PhaseState::Drifting);
        assert!(!rep.locked);
    }

    #[test]
    fn converging_phase_reports_rate() {
        let t = grid(4.0, 64);
        let phase: Vec<f64> = t.iter().map(|s| 1.0 + 0.5 * s.powf(-0.75)).collect();
        let rep = detect_phase(&t, &phase, &[1.0], &PhaseOptions::default());
        assert!(rep.locked);
        assert!((rep.convergence_rate_est.unwrap() - 0.75).abs() < 1e-6);
    }

    #[test]
    fn primitive_of_cosine() {
        let p = Primitive::new(|s: f64| 1.0 + s.cos(), 1.0);
        for &s in &[0.3, 2.0, 5.5, 8.0] {
            assert!((p.eval(s) - s.sin()).abs() < 1e-5);
        }
        assert!((p.max_abs - 1.0).abs() < 1e-5);
    }
}
