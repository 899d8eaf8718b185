//! Regime detection and stability decision tables for the averaged system.
//!
//! The averaged equations are `dv/dt = Σ τ^k Λ_k(v, ψ)`, `dψ/dt = Σ τ^k Ω_k(v, ψ)`
//! with `τ = t^{-1/2q}`. The leading phase coefficient `Ω_m` decides between
//! phase locking (a stable root of `Ω_m(0, ·)`) and phase drifting (`Ω_m`
//! bounded away from zero). The leading amplitude coefficient `Λ_n`, together
//! with the first linear coefficient after it when `Λ_n` is superlinear,
//! then decides stability.
//!
//! Rates are reported for `r = √(2E)` in the original variables.

use std::f64::consts::TAU;

use serde::Serialize;
use thiserror::Error;

use crate::averaging::AveragedModel;
use crate::quad;
use crate::seriesring::{MixedSeries, TrigPoly};

/// Coefficient magnitude below which an averaged coefficient counts as zero.
pub const STRUCTURE_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("every Λ_k vanishes up to order {0}")]
    AllZero(usize),
    #[error("every Ω_k vanishes up to order {0}")]
    NoPhaseEquation(usize),
    #[error("ω_m has a root near ψ = {0}")]
    DivideByZero(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// Amplitude range `[0, Δ0]` for the uniform-in-`v` hypotheses.
    pub delta0: f64,
    /// Hypotheses `expr < 0` fail unless `expr < -dead_zone`.
    pub dead_zone: f64,
    /// Points per axis on the `(v, ψ)` grid.
    pub grid: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { delta0: 0.25, dead_zone: 1e-9, grid: 256 }
    }
}

/// Structural indices of the averaged amplitude equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    /// `Λ_n = v (λ_n(ψ) + O(√v) + δ_{n,2q} l/q)`.
    Linear { lambda_n: TrigPoly },
    /// `Λ_n = v^{(σ+1)/2} (λ_{n,σ}(ψ) + O(√v))`, first linear coefficient at `n + d`.
    /// `d` is `None` when no `λ_k` with `n < k ≤ 2q` is nonzero.
    Nonlinear { sigma: u32, d: Option<usize>, nu: Option<f64>, lambda_sigma: TrigPoly, lambda_nd: Option<TrigPoly> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureInfo {
    pub n: usize,
    pub m: usize,
    pub structure: Structure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    Locking { psi_star: f64, theta_m: f64 },
    Drifting { delta_star: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Stability {
    ExpStable,
    PolyStable,
    Unstable,
    UnstableWithWeight { weight_exp: f64 },
    Inconclusive,
}

impl Stability {
    pub fn label(&self) -> &'static str {
        match self {
            Stability::ExpStable => "exponentially stable",
            Stability::PolyStable => "polynomially stable",
            Stability::Unstable => "unstable",
            Stability::UnstableWithWeight { .. } => {
                "weighted instability (original-variable instability not asserted)"
            }
            Stability::Inconclusive => "inconclusive",
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::ExpStable | Stability::PolyStable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateForm {
    /// `r ~ C t^β exp(c t^α)`; `exponent` is `α`, `coefficient` is `c`.
    ExpOfPower,
    /// `r ~ C t^p`; `exponent` is `p`, `coefficient` is the limit of `v t^{ν}` when known.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub form: RateForm,
    pub exponent: f64,
    pub coefficient: Option<f64>,
}

impl Rate {
    fn exp_of_power(q: u32, k: usize, lambda: f64) -> Rate {
        let two_q = 2.0 * q as f64;
        let k = k as f64;
        Rate { form: RateForm::ExpOfPower, exponent: 1.0 - k / two_q, coefficient: Some(q as f64 * lambda / (two_q - k)) }
    }

    fn power(exponent: f64, coefficient: Option<f64>) -> Rate {
        Rate { form: RateForm::Power, exponent, coefficient }
    }
}

/// Scalar diagnostics; absent entries were not needed by the decision.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Scalars {
    pub lambda_at_star: Option<f64>,
    pub lambda_sigma_at_star: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub gamma_sigma_hat: Option<f64>,
    pub chi_hat: Option<f64>,
    pub z_plus: Option<f64>,
    pub x_plus: Option<f64>,
    pub omega_minus: Option<f64>,
    pub r_star: Option<f64>,
    /// `ν` or `μ` in `v ~ R² t^{-ν}`.
    pub v_decay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeVerdict {
    pub regime: Regime,
    pub n: usize,
    pub m: usize,
    pub q: u32,
    pub l: u32,
    pub structure: Structure,
    pub scalars: Scalars,
    pub stability: Stability,
    pub rate: Option<Rate>,
    pub theorem_path: String,
}

/// All per-root verdicts plus a system-level summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdicts: Vec<RegimeVerdict>,
    pub summary: Stability,
    pub reason: Option<String>,
}

impl Classification {
    fn inconclusive(reason: String) -> Self {
        Classification { verdicts: Vec::new(), summary: Stability::Inconclusive, reason: Some(reason) }
    }

    /// The verdict whose locking root is closest to `psi` modulo `2π`, or the first one.
    pub fn verdict_near(&self, psi: Option<f64>) -> Option<&RegimeVerdict> {
        match psi {
            Some(p) => self.verdicts.iter().min_by(|a, b| {
                angle_gap(a, p).partial_cmp(&angle_gap(b, p)).unwrap_or(std::cmp::Ordering::Equal)
            }),
            None => self.verdicts.first(),
        }
    }

    pub fn report(&self) -> VerdictReport {
        let first = self.verdicts.first();
        let psi_star: Vec<f64> = self
            .verdicts
            .iter()
            .filter_map(|v| match v.regime {
                Regime::Locking { psi_star, .. } => Some(psi_star),
                Regime::Drifting { .. } => None,
            })
            .collect();
        let theta_m = first.and_then(|v| match v.regime {
            Regime::Locking { theta_m, .. } => Some(theta_m),
            Regime::Drifting { .. } => None,
        });
        let regime = match first.map(|v| v.regime) {
            Some(Regime::Locking { .. }) => "locking",
            Some(Regime::Drifting { .. }) => "drifting",
            None => "undetermined",
        };
        VerdictReport {
            regime: regime.to_string(),
            psi_star,
            theta_m,
            class: self.summary,
            rate: first.and_then(|v| v.rate),
            theorem_path: first.map(|v| v.theorem_path.clone()).unwrap_or_default(),
            n: first.map(|v| v.n),
            m: first.map(|v| v.m),
            structure: first.map(|v| StructureReport::from(&v.structure)),
            scalars: first.map(|v| v.scalars).unwrap_or_default(),
            per_root: self.verdicts.iter().map(RootReport::from).collect(),
            reason: self.reason.clone(),
        }
    }
}

fn angle_gap(v: &RegimeVerdict, p: f64) -> f64 {
    match v.regime {
        Regime::Locking { psi_star, .. } => {
            let d = (psi_star - p).rem_euclid(TAU);
            d.min(TAU - d)
        }
        Regime::Drifting { .. } => 0.0,
    }
}

/// Machine-readable verdict document.
#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub regime: String,
    pub psi_star: Vec<f64>,
    pub theta_m: Option<f64>,
    pub class: Stability,
    pub rate: Option<Rate>,
    pub theorem_path: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub structure: Option<StructureReport>,
    pub scalars: Scalars,
    pub per_root: Vec<RootReport>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub kind: String,
    pub sigma: Option<u32>,
    pub d: Option<usize>,
    pub nu: Option<f64>,
    pub lambda: Option<String>,
    pub lambda_sigma: Option<String>,
}

impl From<&Structure> for StructureReport {
    fn from(s: &Structure) -> Self {
        match s {
            Structure::Linear { lambda_n } => StructureReport {
                kind: "linear".into(),
                sigma: None,
                d: None,
                nu: None,
                lambda: Some(lambda_n.to_string()),
                lambda_sigma: None,
            },
            Structure::Nonlinear { sigma, d, nu, lambda_sigma, lambda_nd } => StructureReport {
                kind: "nonlinear".into(),
                sigma: Some(*sigma),
                d: *d,
                nu: *nu,
                lambda: lambda_nd.as_ref().map(|p| p.to_string()),
                lambda_sigma: Some(lambda_sigma.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RootReport {
    pub psi_star: Option<f64>,
    pub theta_m: Option<f64>,
    pub class: Stability,
    pub rate: Option<Rate>,
    pub theorem_path: String,
}

impl From<&RegimeVerdict> for RootReport {
    fn from(v: &RegimeVerdict) -> Self {
        let (psi_star, theta_m) = match v.regime {
            Regime::Locking { psi_star, theta_m } => (Some(psi_star), Some(theta_m)),
            Regime::Drifting { .. } => (None, None),
        };
        RootReport { psi_star, theta_m, class: v.stability, rate: v.rate, theorem_path: v.theorem_path.clone() }
    }
}

fn nonzero(s: &MixedSeries) -> bool {
    s.max_abs_coeff() > STRUCTURE_TOL
}

fn strip(p: TrigPoly) -> TrigPoly {
    let mut out = TrigPoly::zero();
    for (j, c) in p.iter() {
        let cos = if c.cos.abs() > STRUCTURE_TOL { c.cos } else { 0.0 };
        let sin = if c.sin.abs() > STRUCTURE_TOL { c.sin } else { 0.0 };
        out.add(j, cos, sin);
    }
    out
}

/// `ω_{m0}(ψ) = Ω_m(0, ψ)` with round-off terms dropped.
pub fn leading_phase(model: &AveragedModel, m: usize) -> TrigPoly {
    strip(model.omega[m].power_slice(0))
}

/// `λ_k(ψ)`: the `v`-linear part of `Λ_k` without the scaling drift.
pub fn linear_part(model: &AveragedModel, k: usize) -> TrigPoly {
    let mut p = model.lambda[k].power_slice(2);
    if k == 2 * model.q as usize {
        p = p.plus(&TrigPoly::constant(-(model.l as f64) / model.q as f64));
    }
    strip(p)
}

/// Reads `n`, `m`, `σ`, `d` off the averaged coefficients.
pub fn detect_structure(model: &AveragedModel) -> Result<StructureInfo, ClassifyError> {
    let two_q = 2 * model.q as usize;
    let n = (2..=model.n)
        .find(|&k| nonzero(&model.lambda[k]))
        .ok_or(ClassifyError::AllZero(model.n))?;
    // Orders whose phase coefficient vanishes at v = 0 are skipped.
    let m = (2..=model.m)
        .find(|&k| !strip(model.omega[k].power_slice(0)).is_zero())
        .or_else(|| (2..=model.m).find(|&k| nonzero(&model.omega[k])))
        .ok_or(ClassifyError::NoPhaseEquation(model.m))?;
    let lowest = model.lambda[n]
        .iter()
        .filter(|(_, _, c)| c.cos.abs().max(c.sin.abs()) > STRUCTURE_TOL)
        .map(|(p, _, _)| p)
        .min()
        .unwrap_or(2);
    if lowest <= 2 {
        return Ok(StructureInfo { n, m, structure: Structure::Linear { lambda_n: linear_part(model, n) } });
    }
    let sigma = (lowest - 1) as u32;
    let lambda_sigma = strip(model.lambda[n].power_slice(lowest));
    let last = model.n.min(two_q);
    let found = (n + 1..=last).find(|&k| !linear_part(model, k).is_zero());
    let (d, nu, lambda_nd) = match found {
        Some(k) => {
            let d = k - n;
            (Some(d), Some(d as f64 / (model.q as f64 * (sigma as f64 - 1.0))), Some(linear_part(model, k)))
        }
        None => (None, None, None),
    };
    Ok(StructureInfo { n, m, structure: Structure::Nonlinear { sigma, d, nu, lambda_sigma, lambda_nd } })
}

/// A stable root of the leading phase coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockingRoot {
    pub psi_star: f64,
    pub theta_m: f64,
}

/// Roots of `ω_{m0}` in `[0, 2π)` with negative slope.
pub fn find_locking(omega_m0: &TrigPoly) -> Vec<LockingRoot> {
    const SCAN: usize = 1024;
    let f = |x: f64| omega_m0.eval(x);
    let deriv = omega_m0.derivative();
    let mut roots: Vec<f64> = Vec::new();
    let mut a = 0.0;
    let mut fa = f(a);
    for i in 1..=SCAN {
        let b = TAU * i as f64 / SCAN as f64;
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    roots
        .into_iter()
        .map(|r| r.rem_euclid(TAU))
        .map(|r| LockingRoot { psi_star: r, theta_m: deriv.eval(r) })
        .filter(|r| r.theta_m < -1e-10)
        .collect()
}

/// `min |Ω_m(v, ψ)|` over `[0, δ] × [0, 2π)`, grid search refined by pattern search.
pub fn min_abs_on_strip(omega_m: &MixedSeries, delta: f64, grid: usize) -> f64 {
    let g = |v: f64, p: f64| omega_m.eval(v.clamp(0.0, delta), p, 0.0).abs();
    let nv = grid.max(2);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..nv {
        let v = delta * i as f64 / (nv - 1) as f64;
        for j in 0..grid {
            let p = TAU * j as f64 / grid as f64;
            let val = g(v, p);
            if val < best.0 {
                best = (val, v, p);
            }
        }
    }
    let (mut fv, mut v, mut p) = best;
    let (mut hv, mut hp) = (delta / (nv - 1) as f64, TAU / grid as f64);
    for _ in 0..200 {
        let mut moved = false;
        for (dv, dp) in [(hv, 0.0), (-hv, 0.0), (0.0, hp), (0.0, -hp)] {
            let nvv = (v + dv).clamp(0.0, delta);
            let val = g(nvv, p + dp);
            if val < fv {
                fv = val;
                v = nvv;
                p += dp;
                moved = true;
            }
        }
        if !moved {
            hv *= 0.5;
            hp *= 0.5;
            if hp < 1e-13 {
                break;
            }
        }
    }
    fv
}

/// Whether `Ω_m` stays away from zero on `[0, δ] × [0, 2π)`.
pub fn check_drifting(omega_m: &MixedSeries, delta: f64) -> bool {
    min_abs_on_strip(omega_m, delta, 256) > 1e-9
}

/// Averages along a drifting phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HatQuantities {
    pub gamma_hat: f64,
    pub chi_hat: f64,
    pub z_plus: f64,
    pub x_plus: f64,
    pub omega_minus: f64,
}

fn min_abs_periodic(p: &TrigPoly) -> (f64, f64) {
    const GRID: usize = 4096;
    let h = TAU / GRID as f64;
    let (mut best, mut at) = (f64::INFINITY, 0.0);
    for i in 0..GRID {
        let x = i as f64 * h;
        let v = p.eval(x).abs();
        if v < best {
            best = v;
            at = x;
        }
    }
    let (mut a, mut b) = (at - h, at + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if p.eval(c).abs() < p.eval(d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (p.eval(x).abs().min(best), x)
}

/// Maximum of `|∫_0^ψ (f − ⟨f⟩)|` over one period.
fn primitive_max<F: Fn(f64) -> f64>(f: F, mean: f64) -> f64 {
    const PIECES: usize = 1024;
    let h = TAU / PIECES as f64;
    let mut acc: f64 = 0.0;
    let mut best: f64 = 0.0;
    for i in 0..PIECES {
        let a = i as f64 * h;
        acc += quad::integrate(|s| f(s) - mean, a, a + h, 1e-14);
        best = best.max(acc.abs());
    }
    best
}

/// `γ̂`, `χ̂`, `Z⁺`, `X⁺`, `ω⁻` for the pair `(λ, ω_m)`.
pub fn hat_quantities(lambda: &TrigPoly, omega_m: &TrigPoly) -> Result<HatQuantities, ClassifyError> {
    let (omega_minus, at) = min_abs_periodic(omega_m);
    if omega_minus <= 1e-9 {
        return Err(ClassifyError::DivideByZero(at));
    }
    let gamma = |s: f64| lambda.eval(s) / omega_m.eval(s).abs();
    let chi = |s: f64| 1.0 / omega_m.eval(s).abs();
    let gamma_hat = quad::periodic_mean(gamma, 1e-13);
    let chi_hat = quad::periodic_mean(chi, 1e-13);
    Ok(HatQuantities {
        gamma_hat,
        chi_hat,
        z_plus: primitive_max(gamma, gamma_hat),
        x_plus: primitive_max(chi, chi_hat),
        omega_minus,
    })
}

struct Ctx<'a> {
    model: &'a AveragedModel,
    cfg: &'a ClassifierConfig,
    info: &'a StructureInfo,
    two_q: usize,
    lq: f64,
}

impl Ctx<'_> {
    fn neg(&self, x: f64) -> bool {
        x < -self.cfg.dead_zone
    }

    fn pos(&self, x: f64) -> bool {
        x > self.cfg.dead_zone
    }

    fn v_grid(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.cfg.grid.max(2);
        (0..n).map(move |i| self.cfg.delta0 * i as f64 / (n - 1) as f64)
    }

    fn psi_grid(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.cfg.grid.max(1);
        (0..n).map(move |j| TAU * j as f64 / n as f64)
    }

    /// `Λ_k(v, ψ) / v^{p/2}` minus the scaling drift when `p = 2`.
    fn reduced(&self, k: usize, p: i32, v: f64, psi: f64, lead: &TrigPoly) -> f64 {
        if v == 0.0 {
            return lead.eval(psi);
        }
        let mut val = self.model.lambda[k].eval(v, psi, 0.0) / v.powf(p as f64 / 2.0);
        if p == 2 && k == self.two_q {
            val -= self.lq;
        }
        val
    }

    /// `min over v ∈ [0, Δ0]` of the reduced coefficient at fixed `ψ`.
    fn min_over_v(&self, k: usize, p: i32, psi: f64, lead: &TrigPoly) -> f64 {
        self.v_grid().map(|v| self.reduced(k, p, v, psi, lead)).fold(f64::INFINITY, f64::min)
    }

    /// `min over the grid` of the reduced coefficient minus its `v = 0` value.
    fn min_tilde(&self, k: usize, p: i32, lead: &TrigPoly) -> f64 {
        let mut best = f64::INFINITY;
        for psi in self.psi_grid() {
            let base = lead.eval(psi);
            for v in self.v_grid().skip(1) {
                best = best.min(self.reduced(k, p, v, psi, lead) - base);
            }
        }
        best
    }

    fn verdict(&self, regime: Regime, scalars: Scalars, stability: Stability, rate: Option<Rate>, path: &str) -> RegimeVerdict {
        RegimeVerdict {
            regime,
            n: self.info.n,
            m: self.info.m,
            q: self.model.q,
            l: self.model.l,
            structure: self.info.structure.clone(),
            scalars,
            stability,
            rate,
            theorem_path: path.to_string(),
        }
    }

    fn weighted(&self) -> Stability {
        Stability::UnstableWithWeight { weight_exp: self.lq / 2.0 }
    }
}

fn grid_range(p: &TrigPoly) -> (f64, f64) {
    (0..4096).map(|i| p.eval(TAU * i as f64 / 4096.0)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Runs regime detection and the decision tables.
pub fn classify(model: &AveragedModel, cfg: &ClassifierConfig) -> Classification {
    let info = match detect_structure(model) {
        Ok(i) => i,
        Err(e) => return Classification::inconclusive(e.to_string()),
    };
    let ctx = Ctx { model, cfg, info: &info, two_q: 2 * model.q as usize, lq: model.l as f64 / model.q as f64 };
    let omega_m = &model.omega[info.m];
    let omega_m0 = strip(omega_m.power_slice(0));

    if !omega_m0.is_zero() {
        let roots = find_locking(&omega_m0);
        if !roots.is_empty() {
            let verdicts: Vec<RegimeVerdict> = roots.iter().map(|r| classify_locking(&ctx, *r)).collect();
            let first = verdicts[0].stability;
            let agree = verdicts.iter().all(|v| v.stability == first);
            return Classification {
                summary: if agree { first } else { Stability::Inconclusive },
                reason: if agree { None } else { Some("locking roots disagree".into()) },
                verdicts,
            };
        }
    }
    let delta_star = (0..8).map(|i| cfg.delta0 / 2f64.powi(i)).find(|&d| check_drifting(omega_m, d));
    let Some(delta_star) = delta_star else {
        return Classification::inconclusive("Ω_m vanishes without a stable locking root".into());
    };
    let verdict = match hat_quantities(&TrigPoly::constant(1.0), &omega_m0) {
        Ok(_) => classify_drifting(&ctx, &omega_m0, delta_star),
        Err(e) => return Classification::inconclusive(e.to_string()),
    };
    Classification { summary: verdict.stability, reason: None, verdicts: vec![verdict] }
}

fn classify_locking(ctx: &Ctx<'_>, root: LockingRoot) -> RegimeVerdict {
    let regime = Regime::Locking { psi_star: root.psi_star, theta_m: root.theta_m };
    let (n, m, two_q, lq, q) = (ctx.info.n, ctx.info.m, ctx.two_q, ctx.lq, ctx.model.q);
    let ps = root.psi_star;
    let mut sc = Scalars::default();
    match &ctx.info.structure {
        Structure::Linear { lambda_n } => {
            let lam = lambda_n.eval(ps);
            sc.lambda_at_star = Some(lam);
            let exp_rate = (n < two_q).then(|| Rate::exp_of_power(q, n, lam));
            let pow_rate = Some(Rate::power(lam / 2.0, None));
            if n < two_q && ctx.neg(lam) {
                let (s, path) = if m < two_q {
                    (Stability::ExpStable, "locking.linear.exp")
                } else {
                    (Stability::PolyStable, "locking.linear.slow-phase")
                };
                return ctx.verdict(regime, sc, s, exp_rate, path);
            }
            if n == two_q && ctx.neg(lam + lq) {
                return ctx.verdict(regime, sc, Stability::PolyStable, pow_rate, "locking.linear.poly");
            }
            if ctx.pos(ctx.min_over_v(n, 2, ps, lambda_n)) {
                let rate = if n < two_q { exp_rate } else { pow_rate };
                return ctx.verdict(regime, sc, Stability::Unstable, rate, "locking.linear.unstable");
            }
            if n == two_q && ctx.model.l != 0 && ctx.neg(lam) && ctx.pos(lam + lq) {
                return ctx.verdict(regime, sc, ctx.weighted(), pow_rate, "locking.linear.weighted");
            }
            ctx.verdict(regime, sc, Stability::Inconclusive, None, "locking.linear.boundary")
        }
        Structure::Nonlinear { sigma, d, nu, lambda_sigma, lambda_nd } => {
            let sigma = *sigma;
            let ls = lambda_sigma.eval(ps);
            sc.lambda_sigma_at_star = Some(ls);
            let root_of = |num: f64| (num / ls.abs()).powf(1.0 / (sigma as f64 - 1.0));
            let (Some(d), Some(nu), Some(lnd)) = (*d, *nu, lambda_nd.as_ref()) else {
                if ctx.model.l == 0 {
                    return ctx.verdict(regime, sc, Stability::Inconclusive, None, "locking.nonlinear.far.isochronous");
                }
                let mu = (two_q - n) as f64 / (q as f64 * (sigma as f64 - 1.0));
                sc.v_decay = Some(mu);
                if m <= two_q && ctx.neg(ls) {
                    let r = root_of(mu + lq);
                    sc.r_star = Some(r);
                    let rate = Rate::power(-(mu + lq) / 2.0, Some(r * r));
                    return ctx.verdict(regime, sc, Stability::PolyStable, Some(rate), "locking.nonlinear.far");
                }
                return ctx.verdict(regime, sc, Stability::Inconclusive, None, "locking.nonlinear.far.boundary");
            };
            let k = n + d;
            let lam = lnd.eval(ps);
            sc.lambda_at_star = Some(lam);
            sc.v_decay = Some(nu);
            let shift = if k == two_q { nu + lq } else { 0.0 };
            let balance = |sc: &mut Scalars| {
                let r = root_of(lam + shift);
                sc.r_star = Some(r);
                Some(Rate::power(-(nu + lq) / 2.0, Some(r * r)))
            };
            if k <= two_q {
                let up_lin = ctx.min_over_v(k, 2, ps, lnd);
                let up_sig = ctx.min_over_v(n, sigma as i32 + 1, ps, lambda_sigma);
                if ctx.pos(up_lin) && ctx.pos(up_sig) {
                    let rate = (k < two_q).then(|| Rate::exp_of_power(q, k, lam));
                    return ctx.verdict(regime, sc, Stability::Unstable, rate, "locking.nonlinear.unstable");
                }
            }
            if m <= k && k == two_q {
                if ctx.neg(lam + shift) {
                    let rate = Some(Rate::power(lam / 2.0, None));
                    return ctx.verdict(regime, sc, Stability::PolyStable, rate, "locking.nonlinear.critical.decay");
                }
                if ctx.pos(lam + shift) && ctx.neg(ls) {
                    let rate = balance(&mut sc);
                    return ctx.verdict(regime, sc, Stability::PolyStable, rate, "locking.nonlinear.critical.balance");
                }
                if ctx.pos(lam + shift) && ctx.pos(ls) {
                    return ctx.verdict(regime, sc, Stability::Unstable, None, "locking.nonlinear.critical.escape");
                }
            }
            if k < two_q {
                let slow = m == two_q && k < m;
                if ctx.neg(lam) {
                    let (s, path) = if slow {
                        (Stability::PolyStable, "locking.nonlinear.slow-phase.decay")
                    } else {
                        (Stability::ExpStable, "locking.nonlinear.exp")
                    };
                    return ctx.verdict(regime, sc, s, Some(Rate::exp_of_power(q, k, lam)), path);
                }
                if ctx.pos(lam) && ctx.neg(ls) {
                    let rate = balance(&mut sc);
                    return ctx.verdict(regime, sc, Stability::PolyStable, rate, "locking.nonlinear.balance");
                }
            }
            ctx.verdict(regime, sc, Stability::Inconclusive, None, "locking.nonlinear.boundary")
        }
    }
}

fn classify_drifting(ctx: &Ctx<'_>, omega_m0: &TrigPoly, delta_star: f64) -> RegimeVerdict {
    let regime = Regime::Drifting { delta_star };
    let (n, m, two_q, lq, q) = (ctx.info.n, ctx.info.m, ctx.two_q, ctx.lq, ctx.model.q);
    let mut sc = Scalars::default();
    let hats = |lam: &TrigPoly, sc: &mut Scalars| {
        let h = hat_quantities(lam, omega_m0).expect("ω_m checked nonvanishing");
        sc.gamma_hat = Some(h.gamma_hat);
        sc.chi_hat = Some(h.chi_hat);
        sc.z_plus = Some(h.z_plus);
        sc.x_plus = Some(h.x_plus);
        sc.omega_minus = Some(h.omega_minus);
        h
    };
    match &ctx.info.structure {
        Structure::Linear { lambda_n } => {
            let h = hats(lambda_n, &mut sc);
            let lam_eff = h.gamma_hat / h.chi_hat;
            sc.lambda_at_star = Some(lam_eff);
            let rate = if n < two_q { Rate::exp_of_power(q, n, lam_eff) } else { Rate::power(lam_eff / 2.0, None) };
            let (lo, hi) = grid_range(lambda_n);
            if n < two_q && ctx.neg(hi) {
                return ctx.verdict(regime, sc, Stability::ExpStable, Some(rate), "drifting.definite.exp");
            }
            if n == two_q && ctx.neg(hi + lq) {
                return ctx.verdict(regime, sc, Stability::PolyStable, Some(rate), "drifting.definite.poly");
            }
            let tilde_ok = ctx.min_tilde(n, 2, lambda_n) >= -ctx.cfg.dead_zone;
            if ctx.pos(lo) && tilde_ok {
                return ctx.verdict(regime, sc, Stability::Unstable, Some(rate), "drifting.definite.unstable");
            }
            if n < two_q && m < two_q && ctx.neg(h.gamma_hat) {
                return ctx.verdict(regime, sc, Stability::ExpStable, Some(rate), "drifting.mean.exp");
            }
            if n < two_q && m == two_q && ctx.neg(h.gamma_hat + h.z_plus * (m - n) as f64 / (q as f64 * h.omega_minus)) {
                return ctx.verdict(regime, sc, Stability::ExpStable, Some(rate), "drifting.mean.slow-phase");
            }
            if n == two_q && ctx.neg(h.gamma_hat + h.chi_hat * lq) {
                return ctx.verdict(regime, sc, Stability::PolyStable, Some(rate), "drifting.mean.poly");
            }
            if ctx.pos(h.gamma_hat) && tilde_ok {
                return ctx.verdict(regime, sc, Stability::Unstable, Some(rate), "drifting.mean.unstable");
            }
            let min_chi = 1.0 / max_abs(omega_m0);
            if n == two_q && ctx.model.l != 0 && ctx.pos(h.gamma_hat + min_chi * lq) {
                return ctx.verdict(regime, sc, ctx.weighted(), Some(rate), "drifting.mean.weighted");
            }
            ctx.verdict(regime, sc, Stability::Inconclusive, None, "drifting.linear.boundary")
        }
        Structure::Nonlinear { sigma, d, nu, lambda_sigma, lambda_nd } => {
            let sigma = *sigma;
            let hs = hat_quantities(lambda_sigma, omega_m0).expect("ω_m checked nonvanishing");
            sc.gamma_sigma_hat = Some(hs.gamma_hat);
            let root_of = |num: f64| (num / hs.gamma_hat.abs()).powf(1.0 / (sigma as f64 - 1.0));
            let (Some(d), Some(nu), Some(lnd)) = (*d, *nu, lambda_nd.as_ref()) else {
                sc.chi_hat = Some(hs.chi_hat);
                sc.omega_minus = Some(hs.omega_minus);
                if ctx.model.l == 0 {
                    return ctx.verdict(regime, sc, Stability::Inconclusive, None, "drifting.nonlinear.far.isochronous");
                }
                let mu = (two_q - n) as f64 / (q as f64 * (sigma as f64 - 1.0));
                sc.v_decay = Some(mu);
                if ctx.neg(hs.gamma_hat) {
                    let r = root_of((mu + lq) * hs.chi_hat);
                    sc.r_star = Some(r);
                    let rate = Rate::power(-(mu + lq) / 2.0, Some(r * r));
                    return ctx.verdict(regime, sc, Stability::PolyStable, Some(rate), "drifting.nonlinear.far");
                }
                return ctx.verdict(regime, sc, Stability::Inconclusive, None, "drifting.nonlinear.far.boundary");
            };
            let k = n + d;
            sc.v_decay = Some(nu);
            let h = hats(lnd, &mut sc);
            let lam_eff = h.gamma_hat / h.chi_hat;
            sc.lambda_at_star = Some(lam_eff);
            let shift = if k == two_q { nu + lq } else { 0.0 };
            let decay_rate = if k < two_q { Rate::exp_of_power(q, k, lam_eff) } else { Rate::power(lam_eff / 2.0, None) };
            let (lo, hi) = grid_range(lnd);
            let (slo, shi) = grid_range(lambda_sigma);

            if k < two_q && ctx.neg(hi) {
                return ctx.verdict(regime, sc, Stability::ExpStable, Some(decay_rate), "drifting.nonlinear.definite.exp");
            }
            if k == two_q && (ctx.neg(hi + nu + lq) || (ctx.neg(hi + lq) && ctx.neg(shi))) {
                return ctx.verdict(regime, sc, Stability::PolyStable, Some(decay_rate), "drifting.nonlinear.definite.poly");
            }
            if k <= two_q && ctx.pos(lo) && ctx.pos(slo) {
                let tl = ctx.min_tilde(k, 2, lnd) >= -ctx.cfg.dead_zone;
                let ts = ctx.min_tilde(n, sigma as i32 + 1, lambda_sigma) >= -ctx.cfg.dead_zone;
                if tl && ts {
                    let rate = (k < two_q).then_some(decay_rate);
                    return ctx.verdict(regime, sc, Stability::Unstable, rate, "drifting.nonlinear.definite.unstable");
                }
            }
            if k <= two_q {
                if k < two_q && m < two_q && ctx.neg(h.gamma_hat) {
                    return ctx.verdict(regime, sc, Stability::ExpStable, Some(decay_rate), "drifting.nonlinear.mean.exp");
                }
                if k < two_q && m == two_q && ctx.neg(h.gamma_hat + h.z_plus * (m - k) as f64 / (q as f64 * h.omega_minus)) {
                    return ctx.verdict(regime, sc, Stability::ExpStable, Some(decay_rate), "drifting.nonlinear.mean.slow-phase");
                }
                if k == two_q && ctx.neg(h.gamma_hat + h.chi_hat * shift) {
                    return ctx.verdict(regime, sc, Stability::PolyStable, Some(decay_rate), "drifting.nonlinear.mean.poly");
                }
                if m < k && ctx.pos(h.gamma_hat) && ctx.neg(hs.gamma_hat) {
                    let r = root_of(h.gamma_hat + h.chi_hat * shift);
                    sc.r_star = Some(r);
                    let rate = Rate::power(-(nu + lq) / 2.0, Some(r * r));
                    return ctx.verdict(regime, sc, Stability::PolyStable, Some(rate), "drifting.nonlinear.balance");
                }
            }
            if k < m && ctx.pos(lo) && ctx.neg(shi) {
                let r = quad::periodic_mean(|s| (lnd.eval(s) / lambda_sigma.eval(s).abs()).powf(2.0 / (sigma as f64 - 1.0)), 1e-12);
                sc.r_star = Some(r.sqrt());
                let rate = Rate::power(-(nu + lq) / 2.0, Some(r));
                return ctx.verdict(regime, sc, Stability::PolyStable, Some(rate), "drifting.nonlinear.definite.balance");
            }
            if k <= two_q && ctx.pos(h.gamma_hat + h.chi_hat * shift) && ctx.pos(hs.gamma_hat) {
                return ctx.verdict(regime, sc, Stability::Unstable, None, "drifting.nonlinear.mean.escape");
            }
            ctx.verdict(regime, sc, Stability::Inconclusive, None, "drifting.nonlinear.boundary")
        }
    }
}

fn max_abs(p: &TrigPoly) -> f64 {
    (0..4096).map(|i| p.eval(TAU * i as f64 / 4096.0).abs()).fold(0.0, f64::max)
}
