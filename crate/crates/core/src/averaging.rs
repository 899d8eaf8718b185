//! Near-identity averaging transform.
//!
//! In the rescaled variables `𝓔 = t^{l/q} E`, `θ = φ − S/κ` the system reads
//!
//! ```text
//!   d𝓔/dt = Σ τ^k A_k(𝓔, θ, S),   dθ/dt = Σ τ^k B_k(𝓔, θ, S),   τ = t^{-1/2q}.
//! ```
//!
//! We look for `v = 𝓔 + Σ τ^k v_k`, `ψ = θ + Σ τ^k ψ_k` with zero S-mean
//! corrections such that `dv/dt = Σ τ^k Λ_k(v, ψ)` and `dψ/dt = Σ τ^k Ω_k(v, ψ)`
//! up to the chosen orders. Each order is a homological equation
//! `s0 ∂_S v_k = Λ_k − R_k` solved by S-averaging.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::model::{derive_fg, lindstedt_expand, ActionAngleSeries, ModelError, PhaseLaw, SystemSpec};
use crate::seriesring::{MixedSeries, SeriesError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("l = 0 requires an isochronous oscillator (h = 0), got h = {0}")]
    InvalidScaling(f64),
    #[error("averaged coefficient at order {k}: {source}")]
    Series { k: usize, source: SeriesError },
    #[error("orders N = {n}, M = {m} must lie in 2..={max}")]
    BadOrder { n: usize, m: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Right-hand sides graded by powers of `τ`.
#[derive(Debug, Clone)]
pub struct RescaledField {
    pub l: u32,
    pub q: u32,
    pub kappa: u32,
    /// Coefficients of `S'(t)` by power of `τ`.
    pub sigma: Vec<f64>,
    /// `A_k`, including the `(l/q)𝓔` drift at `k = 2q`.
    pub a: Vec<MixedSeries>,
    /// `B_k`.
    pub b: Vec<MixedSeries>,
    pub aa: ActionAngleSeries,
}

impl RescaledField {
    pub fn order(&self) -> usize {
        self.a.len() - 1
    }
}

/// Picks the amplitude scaling exponent `l` in `E = t^{-l/q} 𝓔`.
///
/// Without a probe the answer is `0` for an isochronous oscillator and `1`
/// otherwise. With a probe computed at `l = 1` whose leading phase
/// coefficient vanishes at `v = 0`, the exponent is raised until the first
/// `v`-free phase term at order `m2` is reached by the `v`-dependent one.
pub fn choose_l(spec: &SystemSpec, probe: Option<&AveragedModel>) -> u32 {
    if spec.h == 0.0 {
        return 0;
    }
    let Some(probe) = probe else { return 1 };
    let nonzero: Vec<usize> = (2..probe.omega.len()).filter(|&k| !probe.omega[k].is_zero()).collect();
    let Some(&m1) = nonzero.first() else { return probe.l };
    if !probe.omega[m1].power_slice(0).is_zero() {
        return probe.l;
    }
    let Some(&m2) = nonzero.iter().skip(1).find(|&&k| !probe.omega[k].power_slice(0).is_zero()) else {
        return probe.l;
    };
    let jmin = probe.omega[m1].min_power().unwrap_or(2).max(1) as usize;
    probe.l + (m2 - m1).div_ceil(jmin) as u32
}

/// Re-grades `f_k, g_k` on the `τ` scale up to order `order`.
pub fn rescale(spec: &SystemSpec, l: u32, order: usize) -> Result<RescaledField, AveragingError> {
    if l == 0 && spec.h != 0.0 {
        return Err(AveragingError::InvalidScaling(spec.h));
    }
    let q = spec.q();
    let kappa = spec.kappa();
    let max_deg = spec.terms.iter().flat_map(|t| t.monomials.iter().map(|m| m.degree())).max().unwrap_or(0) as i32;
    // Largest half power that can land at index ≤ order.
    let jmax = if l == 0 { max_deg + 2 } else { (order as i32 - 2) / l as i32 + 2 };
    let lp_order = if spec.h == 0.0 { 0 } else { (jmax as usize) / 2 + 2 };
    let aa = lindstedt_expand(spec.h, lp_order);
    let fg = derive_fg(spec, &aa, jmax.max(2));

    let zero = MixedSeries::zero(kappa);
    let mut a = vec![zero.clone(); order + 1];
    let mut b = vec![zero.clone(); order + 1];
    let sigma = spec.phase.sigma();

    for entry in &fg {
        let i = entry.k as i32;
        let f = entry.f.shift_theta(kappa).map_err(|e| AveragingError::Series { k: 0, source: e })?;
        let g = entry.g.shift_theta(kappa).map_err(|e| AveragingError::Series { k: 0, source: e })?;
        for (p, h, c) in f.iter() {
            let k = 2 * i + l as i32 * (p - 2);
            if (2..=order as i32).contains(&k) {
                a[k as usize].add_term(p, h.j_theta, h.k_s, c.cos, c.sin);
            }
        }
        for (p, h, c) in g.iter() {
            let k = 2 * i + l as i32 * p;
            if (2..=order as i32).contains(&k) {
                b[k as usize].add_term(p, h.j_theta, h.k_s, c.cos, c.sin);
            }
        }
    }
    if l > 0 {
        for (n, &w) in aa.omega.iter().enumerate().skip(1) {
            let k = 2 * l as usize * n;
            if k <= order {
                b[k].add_term(2 * n as i32, 0, 0, w, 0.0);
            }
        }
    }
    for (k, &s) in sigma.iter().enumerate().skip(1) {
        if k <= order && s != 0.0 {
            b[k].add_term(0, 0, 0, -s / kappa as f64, 0.0);
        }
    }
    let two_q = 2 * q as usize;
    if l > 0 && two_q <= order {
        a[two_q].add_term(2, 0, 0, l as f64 / q as f64, 0.0);
    }
    Ok(RescaledField { l, q, kappa, sigma, a, b, aa })
}

/// Averaged system and the transform that produces it.
#[derive(Debug, Clone)]
pub struct AveragedModel {
    pub l: u32,
    pub q: u32,
    pub kappa: u32,
    pub n: usize,
    pub m: usize,
    /// `Λ_k(v, ψ)`, index `k`, entries below 2 are empty.
    pub lambda: Vec<MixedSeries>,
    /// `Ω_k(v, ψ)`.
    pub omega: Vec<MixedSeries>,
    /// `v_k(𝓔, θ, S)`.
    pub v: Vec<MixedSeries>,
    /// `ψ_k(𝓔, θ, S)`.
    pub psi: Vec<MixedSeries>,
    pub phase: PhaseLaw,
    pub aa: ActionAngleSeries,
    lambda_over_v: Vec<MixedSeries>,
}

fn tau_mul(x: &[MixedSeries], y: &[MixedSeries], max_deg: usize, kappa: u32) -> Vec<MixedSeries> {
    let mut out = vec![MixedSeries::zero(kappa); max_deg + 1];
    for (i, xi) in x.iter().enumerate().take(max_deg + 1) {
        if xi.is_zero() {
            continue;
        }
        for (j, yj) in y.iter().enumerate().take(max_deg + 1 - i) {
            if !yj.is_zero() {
                out[i + j] = out[i + j].add(&xi.mul(yj));
            }
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Solves the homological chain through order `max(n, m)`.
pub fn solve_chain(field: &RescaledField, phase: &PhaseLaw, n: usize, m: usize) -> Result<AveragedModel, AveragingError> {
    let order = n.max(m);
    if n < 2 || m < 2 || order > field.order() {
        return Err(AveragingError::BadOrder { n, m, max: field.order() });
    }
    let kappa = field.kappa;
    let two_q = 2 * field.q as usize;
    let s0 = field.sigma[0];
    let zero = MixedSeries::zero(kappa);
    let mut v = vec![zero.clone(); order + 1];
    let mut psi = vec![zero.clone(); order + 1];
    let mut lambda = vec![zero.clone(); order + 1];
    let mut omega = vec![zero.clone(); order + 1];
    // Partial derivatives ∂_E^a ∂_θ^b of Λ_j, Ω_j keyed by (a, b).
    let mut lam_d: Vec<Vec<((usize, usize), MixedSeries)>> = vec![Vec::new(); order + 1];
    let mut om_d: Vec<Vec<((usize, usize), MixedSeries)>> = vec![Vec::new(); order + 1];
    let max_ab = order.saturating_sub(2) / 2;

    for k in 2..=order {
        let mut rv = field.a[k].clone();
        let mut rp = field.b[k].clone();
        for i in 2..=k.saturating_sub(2) {
            let j = k - i;
            for (r, w) in [(&mut rv, &v[i]), (&mut rp, &psi[i])] {
                if w.is_zero() {
                    continue;
                }
                if !field.a[j].is_zero() {
                    *r = r.add(&field.a[j].mul(&w.diff(Var::E)));
                }
                if !field.b[j].is_zero() {
                    *r = r.add(&field.b[j].mul(&w.diff(Var::Theta)));
                }
            }
        }
        for i in 2..k {
            let sig = field.sigma.get(k - i).copied().unwrap_or(0.0);
            if sig != 0.0 {
                rv = rv.add(&v[i].diff(Var::S).scale(sig));
                rp = rp.add(&psi[i].diff(Var::S).scale(sig));
            }
        }
        if k >= two_q + 2 {
            let c = (k - two_q) as f64 / two_q as f64;
            rv = rv.sub(&v[k - two_q].scale(c));
            rp = rp.sub(&psi[k - two_q].scale(c));
        }
        // Taylor terms Λ_j(𝓔 + δ, θ + η) − Λ_j(𝓔, θ) at order k.
        if k >= 4 {
            let deg = k - 2;
            let delta: Vec<MixedSeries> = (0..=deg).map(|i| if i >= 2 { v[i].clone() } else { zero.clone() }).collect();
            let eta: Vec<MixedSeries> = (0..=deg).map(|i| if i >= 2 { psi[i].clone() } else { zero.clone() }).collect();
            let mut one = vec![zero.clone(); deg + 1];
            one[0] = MixedSeries::constant(kappa, 1.0);
            let mut dpow = vec![one.clone()];
            let mut epow = vec![one];
            for p in 1..=max_ab {
                let d = tau_mul(&dpow[p - 1], &delta, deg, kappa);
                let e = tau_mul(&epow[p - 1], &eta, deg, kappa);
                dpow.push(d);
                epow.push(e);
            }
            for a in 0..=max_ab {
                for bb in 0..=(max_ab - a) {
                    if a + bb == 0 || 2 * (a + bb) > deg {
                        continue;
                    }
                    let prod = tau_mul(&dpow[a], &epow[bb], deg, kappa);
                    let norm = factorial(a) * factorial(bb);
                    for j in 2..=k - 2 * (a + bb) {
                        let r = k - j;
                        if r > deg || prod[r].is_zero() {
                            continue;
                        }
                        if let Some((_, d)) = lam_d[j].iter().find(|(ab, _)| *ab == (a, bb)) {
                            rv = rv.sub(&d.mul(&prod[r]).scale(1.0 / norm));
                        }
                        if let Some((_, d)) = om_d[j].iter().find(|(ab, _)| *ab == (a, bb)) {
                            rp = rp.sub(&d.mul(&prod[r]).scale(1.0 / norm));
                        }
                    }
                }
            }
        }
        let lam = rv.mean_s().finalize().map_err(|e| AveragingError::Series { k, source: e })?;
        let om = rp.mean_s().finalize().map_err(|e| AveragingError::Series { k, source: e })?;
        v[k] = rv
            .sub(&lam)
            .antiderivative_s()
            .map_err(|e| AveragingError::Series { k, source: e })?
            .scale(-1.0 / s0);
        psi[k] = rp
            .sub(&om)
            .antiderivative_s()
            .map_err(|e| AveragingError::Series { k, source: e })?
            .scale(-1.0 / s0);
        for (store, base) in [(&mut lam_d[k], &lam), (&mut om_d[k], &om)] {
            if base.is_zero() {
                continue;
            }
            let mut by_e = base.clone();
            for a in 0..=max_ab {
                let mut cur = by_e.clone();
                for bb in 0..=(max_ab - a) {
                    if a + bb > 0 && !cur.is_zero() {
                        store.push(((a, bb), cur.clone()));
                    }
                    cur = cur.diff(Var::Theta);
                }
                by_e = by_e.diff(Var::E);
            }
        }
        lambda[k] = lam;
        omega[k] = om;
    }
    lambda.truncate(n + 1);
    omega.truncate(m + 1);
    v.truncate(n + 1);
    psi.truncate(m + 1);
    let lambda_over_v = lambda.iter().map(|s| s.shift_power(-2)).collect();
    Ok(AveragedModel {
        l: field.l,
        q: field.q,
        kappa,
        n,
        m,
        lambda,
        omega,
        v,
        psi,
        phase: phase.clone(),
        aa: field.aa.clone(),
        lambda_over_v,
    })
}

/// `rescale` followed by `solve_chain` with orders `(n, m)`.
pub fn average(spec: &SystemSpec, l: u32, n: usize, m: usize) -> Result<AveragedModel, AveragingError> {
    let field = rescale(spec, l, n.max(m))?;
    solve_chain(&field, &spec.phase, n, m)
}

/// Chooses `l` (probing at `l = 1` when needed) and averages to `(n, m)`.
pub fn average_auto(spec: &SystemSpec, n: usize, m: usize) -> Result<AveragedModel, AveragingError> {
    let mut l = choose_l(spec, None);
    let mut model = average(spec, l, n, m)?;
    for _ in 0..4 {
        let next = choose_l(spec, Some(&model));
        if next == l {
            break;
        }
        l = next;
        model = average(spec, l, n, m)?;
    }
    Ok(model)
}

impl AveragedModel {
    pub fn tau(&self, t: f64) -> f64 {
        t.powf(-1.0 / (2.0 * self.q as f64))
    }

    /// `(𝓔, θ)` from `(E, φ)` at time `t`.
    pub fn to_scaled(&self, t: f64, e: f64, phi: f64) -> (f64, f64) {
        let scaled = e * t.powf(self.l as f64 / self.q as f64);
        (scaled, phi - self.phase.phase(t) / self.kappa as f64)
    }

    /// `V_N(𝓔, θ, t)`.
    pub fn v_transform(&self, t: f64, e: f64, theta: f64) -> f64 {
        let s = self.phase.phase(t);
        let tau = self.tau(t);
        let mut acc = e;
        for (i, vi) in self.v.iter().enumerate().skip(2) {
            if !vi.is_zero() {
                acc += tau.powi(i as i32) * vi.eval(e, theta, s);
            }
        }
        acc
    }

    /// `Ψ_M(𝓔, θ, t)`.
    pub fn psi_transform(&self, t: f64, e: f64, theta: f64) -> f64 {
        let s = self.phase.phase(t);
        let tau = self.tau(t);
        let mut acc = theta;
        for (i, pi) in self.psi.iter().enumerate().skip(2) {
            if !pi.is_zero() {
                acc += tau.powi(i as i32) * pi.eval(e, theta, s);
            }
        }
        acc
    }

    /// `Σ_{k≤N} τ^k Λ_k(v, ψ)`.
    pub fn lambda_sum(&self, t: f64, v: f64, psi: f64) -> f64 {
        let tau = self.tau(t);
        self.lambda.iter().enumerate().skip(2).map(|(k, s)| tau.powi(k as i32) * s.eval(v, psi, 0.0)).sum()
    }

    /// `Σ_{k≤N} τ^k Λ_k(v, ψ) / v`, finite at `v = 0`.
    pub fn log_rate(&self, t: f64, v: f64, psi: f64) -> f64 {
        let tau = self.tau(t);
        self.lambda_over_v
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, s)| tau.powi(k as i32) * s.eval(v, psi, 0.0))
            .sum()
    }

    /// `Σ_{k≤M} τ^k Ω_k(v, ψ)`.
    pub fn omega_sum(&self, t: f64, v: f64, psi: f64) -> f64 {
        let tau = self.tau(t);
        self.omega.iter().enumerate().skip(2).map(|(k, s)| tau.powi(k as i32) * s.eval(v, psi, 0.0)).sum()
    }

    /// Pretty-printed `Λ_k`, `Ω_k`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# averaged model: l={} q={} kappa={} N={} M={}", self.l, self.q, self.kappa, self.n, self.m);
        for (name, list) in [("Lambda", &self.lambda), ("Omega", &self.omega)] {
            for (k, s) in list.iter().enumerate().skip(2) {
                let _ = writeln!(out, "[{name}_{k}]");
                let _ = write!(out, "{}", s.render("v", "ψ"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    /// Largest `|dV_N/dt − Σ τ^k Λ_k| / 𝓔` over the probe points at each time.
    pub residuals: Vec<f64>,
    pub slope: f64,
    pub expected_slope: f64,
    /// Same for `dΨ_M/dt − Σ τ^k Ω_k`.
    pub phase_residuals: Vec<f64>,
    pub phase_slope: f64,
    pub phase_expected_slope: f64,
    pub pass: bool,
}

/// Residual of the averaged `v`-equation along the true vector field.
///
/// Probe points are a deterministic grid in `(𝓔, θ)`; the map to `(x, y)`
/// uses the action-angle series and the time derivatives of `(E, φ)` come
/// from the Cartesian field through the inverse Jacobian.
pub fn residual_check(model: &AveragedModel, spec: &SystemSpec, t_grid: &[f64]) -> ResidualReport {
    let kappa = model.kappa as f64;
    let lq = model.l as f64 / model.q as f64;
    let two_q = 2.0 * model.q as f64;
    let aa = &model.aa;
    let (xe, xp) = (aa.x.diff(Var::E), aa.x.diff(Var::Theta));
    let (ye, yp) = (aa.y.diff(Var::E), aa.y.diff(Var::Theta));
    let dv_e: Vec<MixedSeries> = model.v.iter().map(|s| s.diff(Var::E)).collect();
    let dv_th: Vec<MixedSeries> = model.v.iter().map(|s| s.diff(Var::Theta)).collect();
    let dv_s: Vec<MixedSeries> = model.v.iter().map(|s| s.diff(Var::S)).collect();
    let dp_e: Vec<MixedSeries> = model.psi.iter().map(|s| s.diff(Var::E)).collect();
    let dp_th: Vec<MixedSeries> = model.psi.iter().map(|s| s.diff(Var::Theta)).collect();
    let dp_s: Vec<MixedSeries> = model.psi.iter().map(|s| s.diff(Var::S)).collect();
    let scaled = [0.01, 0.03];
    let thetas: Vec<f64> = (0..7).map(|i| 0.3 + i as f64 * 0.87).collect();

    let mut residuals = Vec::with_capacity(t_grid.len());
    let mut phase_residuals = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let s = model.phase.phase(t);
        let sp = model.phase.rate(t);
        let tau = model.tau(t);
        let mut worst: f64 = 0.0;
        let mut worst_phase: f64 = 0.0;
        for &es in &scaled {
            for &th in &thetas {
                let e = es * t.powf(-lq);
                let phi = th + s / kappa;
                let (x, y) = (aa.x.eval(e, phi, 0.0), aa.y.eval(e, phi, 0.0));
                let (dx, dy) = spec.rhs(t, x, y);
                let de = (x - spec.h * x.powi(3)) * dx + y * dy;
                let (a, b) = (xe.eval(e, phi, 0.0), xp.eval(e, phi, 0.0));
                let (c, d) = (ye.eval(e, phi, 0.0), yp.eval(e, phi, 0.0));
                let dphi = (c * dx - a * dy) / (b * c - a * d);
                let des = lq * es / t + t.powf(lq) * de;
                let dth = dphi - sp / kappa;
                let mut dv = des;
                let mut vn = es;
                for i in 2..model.v.len() {
                    if model.v[i].is_zero() {
                        continue;
                    }
                    let ti = tau.powi(i as i32);
                    let val = model.v[i].eval(es, th, s);
                    vn += ti * val;
                    dv += -(i as f64) / two_q * ti / t * val
                        + ti * (sp * dv_s[i].eval(es, th, s) + des * dv_e[i].eval(es, th, s) + dth * dv_th[i].eval(es, th, s));
                }
                let mut dpsi = dth;
                let mut psin = th;
                for i in 2..model.psi.len() {
                    if model.psi[i].is_zero() {
                        continue;
                    }
                    let ti = tau.powi(i as i32);
                    let val = model.psi[i].eval(es, th, s);
                    psin += ti * val;
                    dpsi += -(i as f64) / two_q * ti / t * val
                        + ti * (sp * dp_s[i].eval(es, th, s) + des * dp_e[i].eval(es, th, s) + dth * dp_th[i].eval(es, th, s));
                }
                let r = (dv - model.lambda_sum(t, vn, psin)).abs() / es;
                worst = worst.max(r);
                worst_phase = worst_phase.max((dpsi - model.omega_sum(t, vn, psin)).abs());
            }
        }
        residuals.push(worst);
        phase_residuals.push(worst_phase);
    }
    let fit = |res: &[f64]| {
        let pts: Vec<(f64, f64)> =
            t_grid.iter().zip(res).filter(|(_, &r)| r > 0.0).map(|(&t, &r)| (t.ln(), r.ln())).collect();
        if pts.len() >= 2 {
            linear_slope(&pts)
        } else {
            f64::NEG_INFINITY
        }
    };
    let expected_slope = -((model.n + 1) as f64) / two_q;
    let phase_expected_slope = -((model.m + 1) as f64) / two_q;
    let slope = fit(&residuals);
    let phase_slope = fit(&phase_residuals);
    let pass = residuals.iter().all(|&r| r < 1e-13) || slope <= expected_slope + 0.1;
    ResidualReport {
        times: t_grid.to_vec(),
        residuals,
        slope,
        expected_slope,
        phase_residuals,
        phase_slope,
        phase_expected_slope,
        pass,
    }
}

fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Smallest `t0` on a log grid such that `|V_N − 𝓔| ≤ eps·𝓔` for
/// `𝓔 ∈ (0, e_max]` and all sampled `θ` at every later grid time up to `t_max`.
pub fn near_identity_time(model: &AveragedModel, eps: f64, e_max: f64, t_max: f64) -> Option<f64> {
    let grid: Vec<f64> = (0..=((t_max.log10() * 16.0) as usize)).map(|i| 10f64.powf(i as f64 / 16.0)).collect();
    let ok = |t: f64| {
        (1..=8).all(|ie| {
            let e = e_max * ie as f64 / 8.0;
            (0..24).all(|it| {
                let th = it as f64 * std::f64::consts::TAU / 24.0;
                (model.v_transform(t, e, th) - e).abs() <= eps * e
            })
        })
    };
    let mut t0 = None;
    for &t in grid.iter().rev() {
        if ok(t) {
            t0 = Some(t);
        } else {
            break;
        }
    }
    t0
}
