//! Stability boundary in the damping coefficient.
//!
//! The swept parameter is the coefficient `λ` of the force monomial `λ y`
//! (no `S` dependence). Each grid point is classified and integrated from the
//! scenario's first initial condition; the empirical class is the sign of the
//! late-time slope of `ln r` against `ln t`.

use phaselock_core::classifier::Stability;
use phaselock_core::integrator::Outcome;
use phaselock_core::model::TermKind;
use phaselock_core::scenario::Scenario;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::run_one;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub steps: usize,
    /// Decades at the end of the record used for the slope.
    pub fit_decades: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { lambda_min: -2.5, lambda_max: 0.5, steps: 61, fit_decades: 2.0 }
    }
}

impl SweepOptions {
    pub fn grid(&self) -> Vec<f64> {
        if self.steps < 2 {
            return vec![self.lambda_min];
        }
        let h = (self.lambda_max - self.lambda_min) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lambda_min + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub class: Stability,
    pub predicted_stable: bool,
    /// Late-time `d ln r / d ln t`; `+∞` after an escape.
    pub slope: f64,
    pub empirical_stable: bool,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub kappa: u32,
    pub points: Vec<SweepPoint>,
    /// `λ` where the empirical class flips, interpolated on the slope.
    pub empirical_boundaries: Vec<f64>,
    /// Midpoints between grid values where the classifier verdict flips.
    pub predicted_boundaries: Vec<f64>,
}

impl SweepReport {
    /// The flip closest to `near`, if any.
    pub fn empirical_boundary_near(&self, near: f64) -> Option<f64> {
        closest(&self.empirical_boundaries, near)
    }

    pub fn predicted_boundary_near(&self, near: f64) -> Option<f64> {
        closest(&self.predicted_boundaries, near)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,class,predicted_stable,slope,empirical_stable\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.6},{},{},{:.8e},{}\n",
                p.lambda,
                class_name(p.class),
                p.predicted_stable as u8,
                p.slope,
                p.empirical_stable as u8
            ));
        }
        out
    }
}

fn closest(xs: &[f64], near: f64) -> Option<f64> {
    xs.iter().copied().min_by(|a, b| (a - near).abs().total_cmp(&(b - near).abs()))
}

pub fn class_name(s: Stability) -> &'static str {
    match s {
        Stability::ExpStable => "exp_stable",
        Stability::PolyStable => "poly_stable",
        Stability::Unstable => "unstable",
        Stability::UnstableWithWeight { .. } => "weighted_unstable",
        Stability::Inconclusive => "inconclusive",
    }
}

/// Copy of `base` with the damping coefficient set to `lambda`.
pub fn with_damping(base: &Scenario, lambda: f64) -> Result<Scenario, CliError> {
    let mut sc = base.clone();
    let mut hits = sc
        .terms
        .iter_mut()
        .filter(|t| t.kind == TermKind::Force)
        .flat_map(|t| t.monomials.iter_mut())
        .filter(|m| m.x_pow == 0 && m.y_pow == 1 && m.s_harmonic == 0);
    let target = hits
        .next()
        .ok_or_else(|| CliError::Invalid(format!("{}: no damping monomial (force, x=0, y=1, s_harm=0)", base.name)))?;
    target.cos = lambda;
    target.sin = 0.0;
    if hits.next().is_some() {
        return Err(CliError::Invalid(format!("{}: more than one damping monomial", base.name)));
    }
    sc.name = format!("{}_lambda{lambda:+.4}", base.name);
    Ok(sc)
}

/// Least-squares slope of `ln r` on `ln t` over the last `decades` of the record.
pub fn late_slope(t: &[f64], log_r: &[f64], decades: f64) -> f64 {
    let Some(&t_last) = t.last() else { return f64::NAN };
    let t_from = t_last / 10f64.powf(decades);
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(log_r)
        .filter(|(&ti, lr)| ti >= t_from && lr.is_finite())
        .map(|(&ti, &lr)| (ti.ln(), lr))
        .collect();
    if pts.len() < 3 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

fn point(base: &Scenario, lambda: f64, opts: &SweepOptions) -> Result<SweepPoint, CliError> {
    let sc = with_damping(base, lambda)?;
    let a = sc.analyze()?;
    let ic = *sc
        .initial
        .first()
        .ok_or_else(|| CliError::Invalid(format!("{}: sweep needs an initial condition", base.name)))?;
    let traj = run_one(&sc, &a, ic)?;
    let slope = match traj.outcome {
        Outcome::Escaped { .. } => f64::INFINITY,
        Outcome::Collapsed { .. } => f64::NEG_INFINITY,
        Outcome::Completed => late_slope(&traj.t, &traj.log_r, opts.fit_decades),
    };
    Ok(SweepPoint {
        lambda,
        class: a.classification.summary,
        predicted_stable: a.classification.summary.is_stable(),
        slope,
        empirical_stable: slope < 0.0,
        outcome: traj.outcome,
    })
}

pub fn sweep(base: &Scenario, opts: &SweepOptions) -> Result<SweepReport, CliError> {
    let points: Vec<SweepPoint> =
        opts.grid().into_par_iter().map(|l| point(base, l, opts)).collect::<Result<_, CliError>>()?;
    let mut empirical = Vec::new();
    let mut predicted = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.empirical_stable != b.empirical_stable {
            let x = if a.slope.is_finite() && b.slope.is_finite() && a.slope != b.slope {
                a.lambda - a.slope * (b.lambda - a.lambda) / (b.slope - a.slope)
            } else {
                0.5 * (a.lambda + b.lambda)
            };
            empirical.push(x);
        }
        if a.predicted_stable != b.predicted_stable {
            predicted.push(0.5 * (a.lambda + b.lambda));
        }
    }
    Ok(SweepReport {
        scenario: base.name.clone(),
        kappa: base.system.kappa,
        points,
        empirical_boundaries: empirical,
        predicted_boundaries: predicted,
    })
}
