//! Truncated mixed power/Fourier series.
//!
//! A [`MixedSeries`] is a finite sum
//!
//! ```text
//!   Σ E^{p/2} ( c·cos(jθ + (k/κ)S) + s·sin(jθ + (k/κ)S) )
//! ```
//!
//! where `p` counts half powers of the amplitude variable, `j` is the
//! θ-harmonic and `k/κ` the S-frequency. Harmonics are stored in a canonical
//! half-plane (`j > 0`, or `j = 0` and `k ≥ 0`) so every trigonometric
//! monomial has a unique key.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Coefficients smaller than this in absolute value are dropped.
pub const ZERO_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("S-antiderivative of a series with non-zero S-mean (term E^{{{p}/2}}, j={j})")]
    NonZeroMean { p: i32, j: i32 },
    #[error("negative half power E^{{{p}/2}} survived to a finalized series")]
    UnbalancedHalfPower { p: i32 },
    #[error("cannot express S-frequencies in units of 1/{to} (series uses 1/{from})")]
    IncompatibleKappa { from: u32, to: u32 },
}

/// Differentiation variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    E,
    Theta,
    S,
}

/// A harmonic `jθ + (k/κ)S` in canonical orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Harmonic {
    pub j_theta: i32,
    pub k_s: i32,
}

impl Harmonic {
    /// Canonicalizes `(j, k)`; the returned sign multiplies the sine coefficient.
    pub fn canonical(j_theta: i32, k_s: i32) -> (Harmonic, f64) {
        if j_theta < 0 || (j_theta == 0 && k_s < 0) {
            (Harmonic { j_theta: -j_theta, k_s: -k_s }, -1.0)
        } else {
            (Harmonic { j_theta, k_s }, 1.0)
        }
    }

    pub fn is_constant(&self) -> bool {
        self.j_theta == 0 && self.k_s == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrigCoeff {
    pub cos: f64,
    pub sin: f64,
}

impl TrigCoeff {
    fn negligible(&self) -> bool {
        self.cos.abs() < ZERO_THRESHOLD && self.sin.abs() < ZERO_THRESHOLD
    }
}

/// Bounds applied after every ring operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    /// Largest retained half power `p`.
    pub power: i32,
    /// Largest retained `|j|` and `|k|`.
    pub harmonic: i32,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { power: 64, harmonic: 96 }
    }
}

impl Truncation {
    fn meet(self, other: Truncation) -> Truncation {
        Truncation {
            power: self.power.min(other.power),
            harmonic: self.harmonic.min(other.harmonic),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSeries {
    terms: BTreeMap<(i32, Harmonic), TrigCoeff>,
    kappa: u32,
    trunc: Truncation,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MixedSeries {
    pub fn zero(kappa: u32) -> Self {
        Self::with_truncation(kappa, Truncation::default())
    }

    pub fn with_truncation(kappa: u32, trunc: Truncation) -> Self {
        assert!(kappa >= 1, "kappa must be positive");
        MixedSeries { terms: BTreeMap::new(), kappa, trunc }
    }

    pub fn constant(kappa: u32, c: f64) -> Self {
        let mut s = Self::zero(kappa);
        s.add_term(0, 0, 0, c, 0.0);
        s
    }

    /// Single term `E^{p/2}(cos·cos(jθ+(k/κ)S) + sin·sin(...))`.
    pub fn monomial(kappa: u32, p: i32, j: i32, k: i32, cos: f64, sin: f64) -> Self {
        let mut s = Self::zero(kappa);
        s.add_term(p, j, k, cos, sin);
        s
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn set_truncation(&mut self, trunc: Truncation) {
        self.trunc = trunc;
        self.prune();
    }

    /// Accumulates one term, canonicalizing its harmonic.
    pub fn add_term(&mut self, p: i32, j: i32, k: i32, cos: f64, sin: f64) {
        if p > self.trunc.power || j.abs() > self.trunc.harmonic || k.abs() > self.trunc.harmonic {
            return;
        }
        let (h, sign) = Harmonic::canonical(j, k);
        let entry = self.terms.entry((p, h)).or_default();
        entry.cos += cos;
        entry.sin += sign * sin;
        if h.is_constant() {
            entry.sin = 0.0;
        }
        if entry.negligible() {
            self.terms.remove(&(p, h));
        }
    }

    fn prune(&mut self) {
        let trunc = self.trunc;
        self.terms.retain(|&(p, h), c| {
            if h.is_constant() {
                c.sin = 0.0;
            }
            if c.cos.abs() < ZERO_THRESHOLD {
                c.cos = 0.0;
            }
            if c.sin.abs() < ZERO_THRESHOLD {
                c.sin = 0.0;
            }
            p <= trunc.power
                && h.j_theta.abs() <= trunc.harmonic
                && h.k_s.abs() <= trunc.harmonic
                && !c.negligible()
        });
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, Harmonic, TrigCoeff)> + '_ {
        self.terms.iter().map(|(&(p, h), &c)| (p, h, c))
    }

    pub fn coeff(&self, p: i32, j: i32, k: i32) -> TrigCoeff {
        let (h, sign) = Harmonic::canonical(j, k);
        self.terms
            .get(&(p, h))
            .map(|c| TrigCoeff { cos: c.cos, sin: sign * c.sin })
            .unwrap_or_default()
    }

    pub fn min_power(&self) -> Option<i32> {
        self.terms.keys().map(|&(p, _)| p).min()
    }

    pub fn max_power(&self) -> Option<i32> {
        self.terms.keys().map(|&(p, _)| p).max()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.cos.abs().max(c.sin.abs())).fold(0.0, f64::max)
    }

    /// Re-expresses S-frequencies in units of `1/kappa`.
    pub fn with_kappa(&self, kappa: u32) -> Result<Self, SeriesError> {
        if kappa == self.kappa {
            return Ok(self.clone());
        }
        if kappa % self.kappa != 0 {
            return Err(SeriesError::IncompatibleKappa { from: self.kappa, to: kappa });
        }
        let factor = (kappa / self.kappa) as i32;
        let mut out = Self::with_truncation(kappa, self.trunc);
        for (p, h, c) in self.iter() {
            out.add_term(p, h.j_theta, h.k_s * factor, c.cos, c.sin);
        }
        Ok(out)
    }

    fn common_kappa(a: &Self, b: &Self) -> u32 {
        a.kappa / gcd(a.kappa, b.kappa) * b.kappa
    }

    fn aligned<'a>(a: &'a Self, b: &'a Self) -> (std::borrow::Cow<'a, Self>, std::borrow::Cow<'a, Self>) {
        use std::borrow::Cow;
        if a.kappa == b.kappa {
            return (Cow::Borrowed(a), Cow::Borrowed(b));
        }
        let k = Self::common_kappa(a, b);
        (
            Cow::Owned(a.with_kappa(k).expect("lcm is a multiple")),
            Cow::Owned(b.with_kappa(k).expect("lcm is a multiple")),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.linear_combination(1.0, other, -1.0)
    }

    /// `alpha·self + beta·other`.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let (a, b) = Self::aligned(self, other);
        let mut out = Self::with_truncation(a.kappa, a.trunc.meet(b.trunc));
        for (p, h, c) in a.iter() {
            out.add_term(p, h.j_theta, h.k_s, alpha * c.cos, alpha * c.sin);
        }
        for (p, h, c) in b.iter() {
            out.add_term(p, h.j_theta, h.k_s, beta * c.cos, beta * c.sin);
        }
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Self, beta: f64) {
        if other.kappa != self.kappa {
            *self = self.linear_combination(1.0, other, beta);
            return;
        }
        for (p, h, c) in other.iter() {
            self.add_term(p, h.j_theta, h.k_s, beta * c.cos, beta * c.sin);
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::with_truncation(self.kappa, self.trunc);
        for (p, h, t) in self.iter() {
            out.add_term(p, h.j_theta, h.k_s, c * t.cos, c * t.sin);
        }
        out
    }

    /// Product via product-to-sum identities.
    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = Self::aligned(self, other);
        let mut out = Self::with_truncation(a.kappa, a.trunc.meet(b.trunc));
        let max_p = out.trunc.power;
        for (pa, ha, ca) in a.iter() {
            for (pb, hb, cb) in b.iter() {
                let p = pa + pb;
                if p > max_p {
                    continue;
                }
                let cc = 0.5 * (ca.cos * cb.cos);
                let ss = 0.5 * (ca.sin * cb.sin);
                let sc = 0.5 * (ca.sin * cb.cos);
                let cs = 0.5 * (ca.cos * cb.sin);
                out.add_term(
                    p,
                    ha.j_theta - hb.j_theta,
                    ha.k_s - hb.k_s,
                    cc + ss,
                    sc - cs,
                );
                out.add_term(
                    p,
                    ha.j_theta + hb.j_theta,
                    ha.k_s + hb.k_s,
                    cc - ss,
                    sc + cs,
                );
            }
        }
        out
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = Self::with_truncation(self.kappa, self.trunc);
        out.add_term(0, 0, 0, 1.0, 0.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative. Differentiating in `E` may produce negative half
    /// powers; [`MixedSeries::finalize`] rejects them where they are not allowed.
    pub fn diff(&self, var: Var) -> Self {
        let mut out = Self::with_truncation(self.kappa, self.trunc);
        let kappa = self.kappa as f64;
        for (p, h, c) in self.iter() {
            match var {
                Var::E => {
                    if p != 0 {
                        let f = p as f64 / 2.0;
                        out.add_term(p - 2, h.j_theta, h.k_s, f * c.cos, f * c.sin);
                    }
                }
                Var::Theta => {
                    let w = h.j_theta as f64;
                    out.add_term(p, h.j_theta, h.k_s, w * c.sin, -w * c.cos);
                }
                Var::S => {
                    let w = h.k_s as f64 / kappa;
                    out.add_term(p, h.j_theta, h.k_s, w * c.sin, -w * c.cos);
                }
            }
        }
        out
    }

    /// Average over `S ∈ [0, 2πκ)`.
    pub fn mean_s(&self) -> Self {
        let mut out = Self::with_truncation(self.kappa, self.trunc);
        for (p, h, c) in self.iter() {
            if h.k_s == 0 {
                out.add_term(p, h.j_theta, 0, c.cos, c.sin);
            }
        }
        out
    }

    /// Zero-mean S-antiderivative.
    pub fn antiderivative_s(&self) -> Result<Self, SeriesError> {
        let mut out = Self::with_truncation(self.kappa, self.trunc);
        let kappa = self.kappa as f64;
        for (p, h, c) in self.iter() {
            if h.k_s == 0 {
                return Err(SeriesError::NonZeroMean { p, j: h.j_theta });
            }
            let w = h.k_s as f64 / kappa;
            out.add_term(p, h.j_theta, h.k_s, -c.sin / w, c.cos / w);
        }
        Ok(out)
    }

    /// Substitutes `φ = θ + S/κ` into a series written in `(E, φ, S)`.
    ///
    /// The result carries S-frequencies in units of `1/kappa`.
    pub fn shift_theta(&self, kappa: u32) -> Result<Self, SeriesError> {
        let base = self.with_kappa(kappa)?;
        let mut out = Self::with_truncation(kappa, self.trunc);
        for (p, h, c) in base.iter() {
            out.add_term(p, h.j_theta, h.k_s + h.j_theta, c.cos, c.sin);
        }
        Ok(out)
    }

    /// Multiplies by `E^{dp/2}`.
    pub fn shift_power(&self, dp: i32) -> Self {
        let mut out = Self::with_truncation(self.kappa, self.trunc);
        out.trunc.power = out.trunc.power.saturating_add(dp.max(0));
        for (p, h, c) in self.iter() {
            out.add_term(p + dp, h.j_theta, h.k_s, c.cos, c.sin);
        }
        out
    }

    /// Keeps only terms with `p ≤ max_p`.
    pub fn truncate_power(&self, max_p: i32) -> Self {
        let mut out = self.clone();
        out.terms.retain(|&(p, _), _| p <= max_p);
        out
    }

    /// Fails if any negative half power survived.
    pub fn finalize(self) -> Result<Self, SeriesError> {
        match self.min_power() {
            Some(p) if p < 0 => Err(SeriesError::UnbalancedHalfPower { p }),
            _ => Ok(self),
        }
    }

    /// The S-independent coefficient of `E^{p/2}` as a trigonometric
    /// polynomial in θ.
    pub fn power_slice(&self, p: i32) -> TrigPoly {
        let mut out = TrigPoly::zero();
        for (pp, h, c) in self.iter() {
            if pp == p && h.k_s == 0 {
                out.add(h.j_theta, c.cos, c.sin);
            }
        }
        out
    }

    /// Whether any term with `k ≠ 0` is present.
    pub fn depends_on_s(&self) -> bool {
        self.terms.keys().any(|(_, h)| h.k_s != 0)
    }

    pub fn eval(&self, e: f64, theta: f64, s: f64) -> f64 {
        let root = e.sqrt();
        let kappa = self.kappa as f64;
        let mut acc = 0.0;
        for (p, h, c) in self.iter() {
            let arg = h.j_theta as f64 * theta + h.k_s as f64 / kappa * s;
            let (sn, cs) = arg.sin_cos();
            acc += root.powi(p) * (c.cos * cs + c.sin * sn);
        }
        acc
    }
}

impl MixedSeries {
    /// One line per non-zero trigonometric term, ordered by `(p, j, k)`,
    /// with the given names for the amplitude and angle variables.
    pub fn render(&self, amp: &str, angle: &str) -> String {
        let mut out = String::new();
        for (p, h, c) in self.iter() {
            for (name, v) in [("cos", c.cos), ("sin", c.sin)] {
                if v != 0.0 {
                    out.push_str(&format!(
                        "{amp}^{{{}/2}} {name}({}·{angle} + ({}/{})·S) * {:.12e}\n",
                        p, h.j_theta, h.k_s, self.kappa, v
                    ));
                }
            }
        }
        out
    }
}

impl fmt::Display for MixedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("E", "θ"))
    }
}

impl Add for &MixedSeries {
    type Output = MixedSeries;
    fn add(self, rhs: &MixedSeries) -> MixedSeries {
        MixedSeries::add(self, rhs)
    }
}

impl Sub for &MixedSeries {
    type Output = MixedSeries;
    fn sub(self, rhs: &MixedSeries) -> MixedSeries {
        MixedSeries::sub(self, rhs)
    }
}

impl Mul for &MixedSeries {
    type Output = MixedSeries;
    fn mul(self, rhs: &MixedSeries) -> MixedSeries {
        MixedSeries::mul(self, rhs)
    }
}

impl Neg for &MixedSeries {
    type Output = MixedSeries;
    fn neg(self) -> MixedSeries {
        self.scale(-1.0)
    }
}

/// Trigonometric polynomial `Σ c_j cos jψ + s_j sin jψ`, `j ≥ 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigPoly {
    coeffs: BTreeMap<i32, TrigCoeff>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        TrigPoly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut t = TrigPoly::zero();
        t.add(0, c, 0.0);
        t
    }

    pub fn add(&mut self, j: i32, cos: f64, sin: f64) {
        let (j, sin) = if j < 0 { (-j, -sin) } else { (j, sin) };
        let e = self.coeffs.entry(j).or_default();
        e.cos += cos;
        e.sin += sin;
        if j == 0 {
            e.sin = 0.0;
        }
        if e.negligible() {
            self.coeffs.remove(&j);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, TrigCoeff)> + '_ {
        self.coeffs.iter().map(|(&j, &c)| (j, c))
    }

    pub fn mean(&self) -> f64 {
        self.coeffs.get(&0).map_or(0.0, |c| c.cos)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.keys().all(|&j| j == 0)
    }

    pub fn eval(&self, psi: f64) -> f64 {
        self.iter()
            .map(|(j, c)| {
                let (s, co) = (j as f64 * psi).sin_cos();
                c.cos * co + c.sin * s
            })
            .sum()
    }

    pub fn derivative(&self) -> TrigPoly {
        let mut out = TrigPoly::zero();
        for (j, c) in self.iter() {
            let w = j as f64;
            out.add(j, w * c.sin, -w * c.cos);
        }
        out
    }

    pub fn scale(&self, f: f64) -> TrigPoly {
        let mut out = TrigPoly::zero();
        for (j, c) in self.iter() {
            out.add(j, f * c.cos, f * c.sin);
        }
        out
    }

    pub fn plus(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for (j, c) in other.iter() {
            out.add(j, c.cos, c.sin);
        }
        out
    }

    /// Sum of coefficient magnitudes, an upper bound on `max |f|`.
    pub fn abs_bound(&self) -> f64 {
        self.iter().map(|(_, c)| c.cos.hypot(c.sin)).sum()
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, c) in self.iter() {
            for (name, v) in [("cos", c.cos), ("sin", c.sin)] {
                if v == 0.0 {
                    continue;
                }
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                if j == 0 {
                    write!(f, "{v:.9}")?;
                } else {
                    write!(f, "{v:.9}·{name}({j}ψ)")?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn arb_series(kappa: u32) -> impl Strategy<Value = MixedSeries> {
        prop::collection::vec((0i32..6, -3i32..4, -4i32..5, -2.0f64..2.0, -2.0f64..2.0), 0..8).prop_map(
            move |terms| {
                let mut s = MixedSeries::zero(kappa);
                for (p, j, k, c, sn) in terms {
                    s.add_term(p, j, k, c, sn);
                }
                s
            },
        )
    }

    fn point() -> impl Strategy<Value = (f64, f64, f64)> {
        (0.05f64..1.5, -PI..PI, -10.0f64..10.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn product_matches_pointwise(a in arb_series(2), b in arb_series(2), (e, th, s) in point()) {
            let lhs = a.mul(&b).eval(e, th, s);
            let rhs = a.eval(e, th, s) * b.eval(e, th, s);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 10.0);
        }

        #[test]
        fn product_commutes(a in arb_series(3), b in arb_series(3)) {
            let d = a.mul(&b).sub(&b.mul(&a));
            prop_assert!(d.max_abs_coeff() <= 1e-12);
        }

        #[test]
        fn product_distributes(a in arb_series(1), b in arb_series(1), c in arb_series(1)) {
            let lhs = a.mul(&b.add(&c));
            let rhs = a.mul(&b).add(&a.mul(&c));
            prop_assert!(lhs.sub(&rhs).max_abs_coeff() <= 1e-12);
        }

        #[test]
        fn product_associates(a in arb_series(2), b in arb_series(2), c in arb_series(2)) {
            let lhs = a.mul(&b).mul(&c);
            let rhs = a.mul(&b.mul(&c));
            prop_assert!(lhs.sub(&rhs).max_abs_coeff() <= 1e-12 * (1.0 + lhs.max_abs_coeff()));
        }

        #[test]
        fn derivatives_obey_leibniz(a in arb_series(2), b in arb_series(2)) {
            for var in [Var::E, Var::Theta, Var::S] {
                let lhs = a.mul(&b).diff(var);
                let rhs = a.diff(var).mul(&b).add(&a.mul(&b.diff(var)));
                prop_assert!(lhs.sub(&rhs).max_abs_coeff() <= 1e-12 * (1.0 + lhs.max_abs_coeff()));
            }
        }

        #[test]
        fn antiderivative_inverts_diff(a in arb_series(2)) {
            let osc = a.sub(&a.mean_s());
            let back = osc.antiderivative_s().unwrap().diff(Var::S);
            prop_assert!(back.sub(&osc).max_abs_coeff() <= 1e-12);
        }

        #[test]
        fn mean_of_derivative_vanishes(a in arb_series(2)) {
            prop_assert!(a.diff(Var::S).mean_s().is_zero());
        }

        #[test]
        fn mean_matches_quadrature(a in arb_series(2), (e, th, _s) in point()) {
            let n = 64;
            let period = 2.0 * PI * 2.0;
            let avg: f64 = (0..n).map(|i| a.eval(e, th, period * i as f64 / n as f64)).sum::<f64>() / n as f64;
            prop_assert!((avg - a.mean_s().eval(e, th, 0.0)).abs() <= 1e-12 * (1.0 + avg.abs()) * 10.0);
        }

        #[test]
        fn shift_is_substitution(a in arb_series(1), (e, th, s) in point()) {
            let kappa = 2;
            let shifted = a.shift_theta(kappa).unwrap();
            let phi = th + s / kappa as f64;
            let direct = a.eval(e, phi, s);
            prop_assert!((shifted.eval(e, th, s) - direct).abs() <= 1e-12 * (1.0 + direct.abs()) * 10.0);
        }

        #[test]
        fn theta_derivative_matches_finite_difference(a in arb_series(2), (e, th, s) in point()) {
            let h = 1e-5;
            let fd = (a.eval(e, th + h, s) - a.eval(e, th - h, s)) / (2.0 * h);
            prop_assert!((a.diff(Var::Theta).eval(e, th, s) - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }

        #[test]
        fn energy_derivative_matches_finite_difference(a in arb_series(1), (e, th, s) in point()) {
            let h = 1e-6;
            let fd = (a.eval(e + h, th, s) - a.eval(e - h, th, s)) / (2.0 * h);
            prop_assert!((a.diff(Var::E).eval(e, th, s) - fd).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn shift_example() {
        // cos 2φ with φ = θ + S/2 is cos(2θ + S).
        let a = MixedSeries::monomial(1, 0, 2, 0, 1.0, 0.0);
        let b = a.shift_theta(2).unwrap();
        assert_eq!(b.coeff(0, 2, 2), TrigCoeff { cos: 1.0, sin: 0.0 });
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn product_example() {
        // (√E cos θ)(√E sin θ) = (E/2) sin 2θ
        let a = MixedSeries::monomial(1, 1, 1, 0, 1.0, 0.0);
        let b = MixedSeries::monomial(1, 1, 1, 0, 0.0, 1.0);
        let p = a.mul(&b);
        assert_eq!(p.len(), 1);
        assert!((p.coeff(2, 2, 0).sin - 0.5).abs() < 1e-15);
    }

    #[test]
    fn canonical_form_flips_sine() {
        let mut s = MixedSeries::zero(1);
        s.add_term(0, -1, 2, 1.0, 3.0);
        assert_eq!(s.coeff(0, 1, -2), TrigCoeff { cos: 1.0, sin: -3.0 });
        assert_eq!(s.coeff(0, -1, 2), TrigCoeff { cos: 1.0, sin: 3.0 });
    }

    #[test]
    fn constant_term_has_no_sine() {
        let mut s = MixedSeries::zero(1);
        s.add_term(2, 0, 0, 1.0, 5.0);
        assert_eq!(s.coeff(2, 0, 0).sin, 0.0);
    }

    #[test]
    fn antiderivative_rejects_mean() {
        let s = MixedSeries::monomial(1, 2, 1, 0, 1.0, 0.0);
        assert!(matches!(s.antiderivative_s(), Err(SeriesError::NonZeroMean { .. })));
    }

    #[test]
    fn finalize_rejects_negative_powers() {
        let s = MixedSeries::monomial(1, 1, 0, 0, 1.0, 0.0).diff(Var::E);
        assert_eq!(s.clone().finalize(), Err(SeriesError::UnbalancedHalfPower { p: -1 }));
        assert!(s.shift_power(2).finalize().is_ok());
    }

    #[test]
    fn mixed_kappa_aligns() {
        let a = MixedSeries::monomial(1, 0, 0, 1, 1.0, 0.0);
        let b = MixedSeries::monomial(2, 0, 0, 1, 1.0, 0.0);
        let c = a.add(&b);
        assert_eq!(c.kappa(), 2);
        assert_eq!(c.coeff(0, 0, 2).cos, 1.0);
        assert_eq!(c.coeff(0, 0, 1).cos, 1.0);
    }

    #[test]
    fn dump_format() {
        let s = MixedSeries::monomial(2, 3, 2, -1, 0.25, 0.0);
        assert_eq!(s.to_string(), "E^{3/2} cos(2·θ + (-1/2)·S) * 2.500000000000e-1\n");
    }

    #[test]
    fn trig_poly_derivative() {
        let mut t = TrigPoly::zero();
        t.add(2, 1.0, 0.5);
        let d = t.derivative();
        let x = 0.37;
        let fd = (t.eval(x + 1e-6) - t.eval(x - 1e-6)) / 2e-6;
        assert!((d.eval(x) - fd).abs() < 1e-8);
    }
}
