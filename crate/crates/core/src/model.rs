//! The perturbed oscillator, its phase law, and action-angle variables.
//!
//! The unperturbed Hamiltonian is `H0 = (x² + y²)/2 − h x⁴/4`. Perturbations
//! decay as `t^{-k/q}` and are `2π`-periodic in the phase `S(t)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;
use crate::seriesring::{MixedSeries, SeriesError, Truncation, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("phase law is not resonant: s0 = {s0}, expected kappa = {kappa}")]
    NonResonant { s0: f64, kappa: u32 },
    #[error("phase law needs q + 1 = {expected} coefficients, got {got}")]
    PhaseLength { expected: usize, got: usize },
    #[error("q and kappa must be positive")]
    ZeroParameter,
    #[error("h must be non-negative, got {0}")]
    NegativeH(f64),
    #[error("perturbation index k must be at least 1")]
    ZeroIndex,
    #[error("{kind} term k={k} has a monomial of degree {degree}; need at least {min}")]
    BadDegree { kind: &'static str, k: u32, degree: u32, min: u32 },
    #[error("non-finite coefficient in term k={0}")]
    NonFinite(u32),
    #[error("point ({x}, {y}) lies outside the well of closed orbits")]
    OutsideDomain { x: f64, y: f64 },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// `S(t) = Σ_{k<q} s_k t^{1−k/q} + s_q log t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLaw {
    pub kappa: u32,
    pub q: u32,
    pub s: Vec<f64>,
}

impl PhaseLaw {
    pub fn new(kappa: u32, q: u32, s: Vec<f64>) -> Result<Self, ModelError> {
        let law = PhaseLaw { kappa, q, s };
        law.validate()?;
        Ok(law)
    }

    /// The resonance condition is `s0 = κ·ω(0)` with `ω(0) = 1`.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.q == 0 || self.kappa == 0 {
            return Err(ModelError::ZeroParameter);
        }
        let expected = self.q as usize + 1;
        if self.s.len() != expected {
            return Err(ModelError::PhaseLength { expected, got: self.s.len() });
        }
        if (self.s[0] - self.kappa as f64).abs() > 1e-12 {
            return Err(ModelError::NonResonant { s0: self.s[0], kappa: self.kappa });
        }
        Ok(())
    }

    pub fn phase(&self, t: f64) -> f64 {
        let q = self.q as f64;
        let mut acc = self.s[self.q as usize] * t.ln();
        for (k, &sk) in self.s.iter().enumerate().take(self.q as usize) {
            if sk != 0.0 {
                acc += sk * t.powf(1.0 - k as f64 / q);
            }
        }
        acc
    }

    pub fn rate(&self, t: f64) -> f64 {
        let q = self.q as f64;
        let mut acc = self.s[self.q as usize] / t;
        for (k, &sk) in self.s.iter().enumerate().take(self.q as usize) {
            if sk != 0.0 {
                acc += sk * (1.0 - k as f64 / q) * t.powf(-(k as f64) / q);
            }
        }
        acc
    }

    /// Coefficients of `S'(t)` in powers of `τ = t^{-1/2q}`, indexed `0..=2q`.
    pub fn sigma(&self) -> Vec<f64> {
        let q = self.q as usize;
        let mut out = vec![0.0; 2 * q + 1];
        for m in 0..=q {
            let factor = 1.0 - m as f64 / q as f64 + if m == q { 1.0 } else { 0.0 };
            out[2 * m] = self.s[m] * factor;
        }
        out
    }
}

/// Phase `S(t)` for a validated law.
pub fn eval_phase(law: &PhaseLaw, t: f64) -> f64 {
    law.phase(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Hamiltonian,
    Force,
}

/// `coef · x^x_pow · y^y_pow` with `coef = cos·cos(nS) + sin·sin(nS)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    #[serde(rename = "x")]
    pub x_pow: u32,
    #[serde(rename = "y")]
    pub y_pow: u32,
    #[serde(default, rename = "s_harm", alias = "n")]
    pub s_harmonic: i32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.x_pow + self.y_pow
    }

    fn coef(&self, s: f64) -> f64 {
        let (sn, cs) = (self.s_harmonic as f64 * s).sin_cos();
        self.cos * cs + self.sin * sn
    }

    fn value(&self, x: f64, y: f64, s: f64) -> f64 {
        self.coef(s) * x.powi(self.x_pow as i32) * y.powi(self.y_pow as i32)
    }

    fn dx(&self, x: f64, y: f64, s: f64) -> f64 {
        if self.x_pow == 0 {
            return 0.0;
        }
        self.coef(s) * self.x_pow as f64 * x.powi(self.x_pow as i32 - 1) * y.powi(self.y_pow as i32)
    }

    fn dy(&self, x: f64, y: f64, s: f64) -> f64 {
        if self.y_pow == 0 {
            return 0.0;
        }
        self.coef(s) * self.y_pow as f64 * x.powi(self.x_pow as i32) * y.powi(self.y_pow as i32 - 1)
    }
}

/// One term `t^{-k/q}·H_k` or `t^{-k/q}·F_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbTerm {
    pub k: u32,
    pub kind: TermKind,
    pub monomials: Vec<Monomial>,
}

impl PerturbTerm {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 {
            return Err(ModelError::ZeroIndex);
        }
        let (name, min) = match self.kind {
            TermKind::Hamiltonian => ("hamiltonian", 2),
            TermKind::Force => ("force", 1),
        };
        for m in &self.monomials {
            if !(m.cos.is_finite() && m.sin.is_finite()) {
                return Err(ModelError::NonFinite(self.k));
            }
            if m.degree() < min {
                return Err(ModelError::BadDegree { kind: name, k: self.k, degree: m.degree(), min });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub h: f64,
    pub phase: PhaseLaw,
    pub terms: Vec<PerturbTerm>,
}

impl SystemSpec {
    pub fn new(h: f64, phase: PhaseLaw, terms: Vec<PerturbTerm>) -> Result<Self, ModelError> {
        let spec = SystemSpec { h, phase, terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.h >= 0.0) {
            return Err(ModelError::NegativeH(self.h));
        }
        self.phase.validate()?;
        self.terms.iter().try_for_each(PerturbTerm::validate)
    }

    pub fn kappa(&self) -> u32 {
        self.phase.kappa
    }

    pub fn q(&self) -> u32 {
        self.phase.q
    }

    pub fn h0(&self, x: f64, y: f64) -> f64 {
        0.5 * (x * x + y * y) - 0.25 * self.h * x.powi(4)
    }

    /// Cartesian vector field `(ẋ, ẏ)`.
    pub fn rhs(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let s = self.phase.phase(t);
        let mut dx = y;
        let mut dy = -x + self.h * x * x * x;
        let q = self.phase.q as f64;
        for term in &self.terms {
            let w = t.powf(-(term.k as f64) / q);
            match term.kind {
                TermKind::Hamiltonian => {
                    for m in &term.monomials {
                        dx += w * m.dy(x, y, s);
                        dy -= w * m.dx(x, y, s);
                    }
                }
                TermKind::Force => {
                    for m in &term.monomials {
                        dy += w * m.value(x, y, s);
                    }
                }
            }
        }
        (dx, dy)
    }
}

/// Action-angle parametrization of the level lines of `H0` as truncated
/// series in `E`: `x = X(φ, E)`, `y = Y(φ, E)`, with `ω X_φ = Y` and
/// `ω Y_φ = −X + hX³`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAngleSeries {
    pub x: MixedSeries,
    pub y: MixedSeries,
    /// `ω(E) = Σ omega[n] Eⁿ`.
    pub omega: Vec<f64>,
    pub order: usize,
}

impl ActionAngleSeries {
    pub fn omega_at(&self, e: f64) -> f64 {
        self.omega.iter().rev().fold(0.0, |acc, &c| acc * e + c)
    }
}

// Truncated power series helpers; index = power.
fn ps_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (i, &ai) in a.iter().enumerate().take(n + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(n + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn ps_compose(outer: &[f64], inner: &[f64], n: usize) -> Vec<f64> {
    // Horner; inner[0] must be zero.
    let mut out = vec![0.0; n + 1];
    for &c in outer.iter().take(n + 1).rev() {
        out = ps_mul(&out, inner, n);
        out[0] += c;
    }
    out
}

/// `a^r` for a series with `a[0] = 1`.
fn ps_pow(a: &[f64], r: f64, n: usize) -> Vec<f64> {
    // (a^r)' a = r a' (a^r)
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    for k in 1..=n {
        let mut acc = 0.0;
        for j in 1..=k {
            let aj = a.get(j).copied().unwrap_or(0.0);
            acc += (r * j as f64 - (k - j) as f64) * aj * out[k - j];
        }
        out[k] = acc / k as f64;
    }
    out
}

/// Lindstedt–Poincaré expansion of the periodic orbits of `H0`.
///
/// `order` is the number of corrections in `hE` beyond the harmonic
/// oscillator; `X` carries half powers up to `E^{order + 1/2}`.
pub fn lindstedt_expand(h: f64, order: usize) -> ActionAngleSeries {
    let n = order;
    // U(φ; ε) = Σ εⁱ U_i(φ), normalized amplitude with ε = h A²:
    //   ω² U'' + U − ε U³ = 0,  U_0 = cos φ, U_i ⟂ cos φ for i ≥ 1.
    let trig = |j: i32, c: f64| MixedSeries::monomial(1, 0, j, 0, c, 0.0);
    let mut u: Vec<MixedSeries> = vec![trig(1, 1.0)];
    let mut w2 = vec![1.0];
    let mut cubes: Vec<MixedSeries> = Vec::new();
    for i in 1..=n {
        // [ε^{i−1}] U³
        let mut cube = MixedSeries::zero(1);
        for a in 0..i {
            for b in 0..(i - a) {
                let c = i - 1 - a - b;
                cube = cube.add(&u[a].mul(&u[b]).mul(&u[c]));
            }
        }
        cubes.push(cube.clone());
        // U_i'' + U_i = cube − Σ_{m=1}^{i} w2[m] U_{i−m}''  (unknown w2[i] multiplies U_0'' = −cos φ)
        let mut rhs = cube;
        for m in 1..i {
            rhs = rhs.sub(&u[i - m].diff(Var::Theta).diff(Var::Theta).scale(w2[m]));
        }
        // coefficient of cos φ: rhs_1 + w2[i] = 0
        let r1 = rhs.coeff(0, 1, 0).cos;
        w2.push(-r1);
        rhs = rhs.add(&trig(1, -r1));
        let mut ui = MixedSeries::zero(1);
        for (_, hmn, c) in rhs.iter() {
            let m = hmn.j_theta;
            debug_assert!(m != 1);
            let f = 1.0 - (m * m) as f64;
            ui.add_term(0, m, 0, c.cos / f, c.sin / f);
        }
        u.push(ui);
    }
    // E = H0(A U(0), 0) = (A²/2)·P(ε), P = U(0)² − (ε/2) U(0)⁴.
    let u0: Vec<f64> = u.iter().map(|ui| ui.eval(1.0, 0.0, 0.0)).collect();
    let u0_sq = ps_mul(&u0, &u0, n + 1);
    let u0_4 = ps_mul(&u0_sq, &u0_sq, n + 1);
    let mut p = u0_sq.clone();
    for i in 0..=n {
        p[i + 1] -= 0.5 * u0_4[i];
    }
    // Invert ε = 2w / P(ε), w = hE.
    let p_inv = ps_pow(&p, -1.0, n + 1);
    let mut eps = vec![0.0; n + 2];
    eps[1] = 2.0;
    for _ in 0..=n + 1 {
        let pinv_eps = ps_compose(&p_inv, &eps, n + 1);
        let mut next = vec![0.0; n + 2];
        for i in 0..=n {
            next[i + 1] = 2.0 * pinv_eps[i];
        }
        eps = next;
    }
    // A = √(2E) P(ε(w))^{-1/2}
    let p_w = ps_compose(&p, &eps, n);
    let amp = ps_pow(&p_w, -0.5, n);
    // ω(w) = √(ω²(ε(w)))
    let mut w2s = w2.clone();
    w2s.resize(n + 1, 0.0);
    let omega_w = ps_pow(&ps_compose(&w2s, &eps, n), 0.5, n);

    // X = √(2E) amp(w) Σ ε(w)^i U_i, collected by powers of w.
    let mut eps_pow = vec![0.0; n + 1];
    eps_pow[0] = 1.0;
    let mut x_w: Vec<MixedSeries> = vec![MixedSeries::zero(1); n + 1];
    for ui in u.iter().take(n + 1) {
        let coeff = ps_mul(&amp, &eps_pow, n);
        for (k, &ck) in coeff.iter().enumerate() {
            if ck != 0.0 {
                x_w[k] = x_w[k].add(&ui.scale(ck));
            }
        }
        eps_pow = ps_mul(&eps_pow, &eps, n);
    }
    let trunc = Truncation { power: 2 * n as i32 + 1, ..Truncation::default() };
    let mut x = MixedSeries::with_truncation(1, trunc);
    let root2 = 2f64.sqrt();
    for (k, xk) in x_w.iter().enumerate() {
        let f = root2 * h.powi(k as i32);
        for (_, hm, c) in xk.iter() {
            x.add_term(2 * k as i32 + 1, hm.j_theta, 0, f * c.cos, f * c.sin);
        }
    }
    let omega: Vec<f64> = omega_w.iter().enumerate().map(|(k, &c)| c * h.powi(k as i32)).collect();
    let mut omega_series = MixedSeries::with_truncation(1, trunc);
    for (k, &c) in omega.iter().enumerate() {
        omega_series.add_term(2 * k as i32, 0, 0, c, 0.0);
    }
    let y = omega_series.mul(&x.diff(Var::Theta));
    ActionAngleSeries { x, y, omega, order }
}

/// Exact `(E, φ)` of a point inside the well, by quadrature along the level line.
pub fn action_angle_numeric(h: f64, x: f64, y: f64) -> Result<(f64, f64), ModelError> {
    let e = 0.5 * (x * x + y * y) - 0.25 * h * x.powi(4);
    if h > 0.0 && (e >= 0.25 / h || x * x >= 1.0 / h) {
        return Err(ModelError::OutsideDomain { x, y });
    }
    if e <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let xm2 = 4.0 * e / (1.0 + (1.0 - 4.0 * h * e).sqrt());
    let xm = xm2.sqrt();
    let k = 0.5 * h * xm2;
    let dt = |a: f64| 1.0 / (1.0 - k * (1.0 + a.cos().powi(2))).sqrt();
    let quarter = quad::integrate(dt, 0.0, PI / 2.0, 1e-15);
    let omega = TAU / (4.0 * quarter);
    let alpha = (x / xm).clamp(-1.0, 1.0).acos();
    let t_alpha = quad::integrate(dt, 0.0, alpha, 1e-15);
    let phi = if y <= 0.0 { omega * t_alpha } else { TAU - omega * t_alpha };
    Ok((e, phi.rem_euclid(TAU)))
}

/// Exact frequency `ω(E)` of the level line `H0 = E`.
pub fn omega_numeric(h: f64, e: f64) -> f64 {
    if e <= 0.0 {
        return 1.0;
    }
    let xm2 = 4.0 * e / (1.0 + (1.0 - 4.0 * h * e).sqrt());
    let k = 0.5 * h * xm2;
    let quarter = quad::integrate(|a| 1.0 / (1.0 - k * (1.0 + a.cos().powi(2))).sqrt(), 0.0, PI / 2.0, 1e-15);
    TAU / (4.0 * quarter)
}

/// Perturbation in action-angle form, one entry per distinct index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAnglePerturbation {
    pub k: u32,
    /// Contribution to `dE/dt`.
    pub f: MixedSeries,
    /// Contribution to `dφ/dt − ω(E)`.
    pub g: MixedSeries,
}

/// `f_k = ω(−∂_φH_k + F_k ∂_φX)`, `g_k = ω(∂_E H_k − F_k ∂_E X)` evaluated on
/// `(X, Y)`, with S-frequencies in units of `1/κ`. Terms above `E^{max_p/2}`
/// are dropped.
pub fn derive_fg(spec: &SystemSpec, aa: &ActionAngleSeries, max_p: i32) -> Vec<ActionAnglePerturbation> {
    let kappa = spec.kappa();
    let trunc = Truncation { power: max_p + 2, ..Truncation::default() };
    let lift = |s: &MixedSeries| {
        let mut out = s.with_kappa(kappa).expect("kappa multiple of 1");
        out.set_truncation(trunc);
        out
    };
    let x = lift(&aa.x);
    let y = lift(&aa.y);
    let mut omega = MixedSeries::with_truncation(kappa, trunc);
    for (n, &c) in aa.omega.iter().enumerate() {
        omega.add_term(2 * n as i32, 0, 0, c, 0.0);
    }
    let x_phi = x.diff(Var::Theta);
    let x_e = x.diff(Var::E);
    let max_deg = spec.terms.iter().flat_map(|t| t.monomials.iter().map(|m| m.x_pow.max(m.y_pow))).max().unwrap_or(0);
    let pow = |base: &MixedSeries| {
        let mut v = vec![MixedSeries::constant(kappa, 1.0)];
        for i in 1..=max_deg as usize {
            let next = v[i - 1].mul(base);
            v.push(next);
        }
        v
    };
    let xp = pow(&x);
    let yp = pow(&y);
    let compose = |m: &Monomial| {
        let coef = MixedSeries::monomial(kappa, 0, 0, m.s_harmonic * kappa as i32, m.cos, m.sin);
        xp[m.x_pow as usize].mul(&yp[m.y_pow as usize]).mul(&coef)
    };

    let mut ks: Vec<u32> = spec.terms.iter().map(|t| t.k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let mut ham = MixedSeries::with_truncation(kappa, trunc);
            let mut force = MixedSeries::with_truncation(kappa, trunc);
            for term in spec.terms.iter().filter(|t| t.k == k) {
                for m in &term.monomials {
                    match term.kind {
                        TermKind::Hamiltonian => ham = ham.add(&compose(m)),
                        TermKind::Force => force = force.add(&compose(m)),
                    }
                }
            }
            let f = omega.mul(&ham.diff(Var::Theta).scale(-1.0).add(&force.mul(&x_phi)));
            let g = omega.mul(&ham.diff(Var::E).sub(&force.mul(&x_e)));
            ActionAnglePerturbation { k, f: f.truncate_power(max_p), g: g.truncate_power(max_p) }
        })
        .collect()
}
