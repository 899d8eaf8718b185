//! Hand-derived closed forms for the three worked systems, written out term by
//! term and evaluated pointwise. Shared by the golden tests and the acceptance
//! target.

#![allow(dead_code)]

use phaselock_core::averaging::{average, AveragedModel};
use phaselock_core::model::{Monomial, PerturbTerm, PhaseLaw, SystemSpec, TermKind};
use phaselock_core::seriesring::MixedSeries;

pub fn mono(x: u32, y: u32, n: i32, cos: f64) -> Monomial {
    Monomial { x_pow: x, y_pow: y, s_harmonic: n, cos, sin: 0.0 }
}

fn force(k: u32, monomials: Vec<Monomial>) -> PerturbTerm {
    PerturbTerm { k, kind: TermKind::Force, monomials }
}

/// Amplitude and phase of `a cos X + b sin X = c cos(X − δ)`; with the sign
/// conventions below this is `δ = atan2(b, a)`, equal to `arccos(a/c)` for `b ≥ 0`.
pub fn polar(a: f64, b: f64) -> (f64, f64) {
    (a.hypot(b), b.atan2(a))
}

/// Linear forcing `t^{-1/2}(a(S)x + b(S)y)` with `S = t + s1 √t + s2 ln t`.
#[derive(Debug, Clone, Copy)]
pub struct Ex1 {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub s1: f64,
    pub s2: f64,
    pub h: f64,
}

impl Ex1 {
    pub fn spec(&self) -> SystemSpec {
        let law = PhaseLaw::new(1, 2, vec![1.0, self.s1, self.s2]).unwrap();
        let f = force(1, vec![mono(1, 0, 0, self.a0), mono(1, 0, 1, self.a1), mono(0, 1, 0, self.b0), mono(0, 1, 1, self.b1)]);
        SystemSpec::new(self.h, law, vec![f]).unwrap()
    }

    pub fn model(&self) -> AveragedModel {
        average(&self.spec(), 2, 4, 4).unwrap()
    }

    fn c(&self) -> (f64, f64, f64, f64) {
        let (c0, d0) = polar(self.a0, self.b0);
        let (c1, d1) = polar(self.a1, self.b1);
        (c0, d0, c1, d1)
    }

    pub fn lambda(&self, k: usize, v: f64, psi: f64) -> f64 {
        let (_, _, c1, d1) = self.c();
        match k {
            2 => self.b0 * v,
            4 => v / 4.0 * (4.0 - self.a1 * c1 * (2.0 * psi + d1).sin()),
            _ => 0.0,
        }
    }

    pub fn omega(&self, k: usize, v: f64, psi: f64) -> f64 {
        let (c0, _, c1, d1) = self.c();
        match k {
            2 => -0.5 * (self.s1 + self.a0),
            4 => {
                -self.s2 - (3.0 * c0 * c0 + 2.0 * c1 * c1 + 3.0 * self.a1 * c1 * (2.0 * psi + d1).cos()) / 24.0
                    - 0.75 * self.h * v
            }
            _ => 0.0,
        }
    }

    pub fn v2(&self, e: f64, th: f64, s: f64) -> f64 {
        let (c0, d0, c1, d1) = self.c();
        -e / 6.0
            * (3.0 * c0 * (2.0 * s + 2.0 * th + d0).cos()
                + 3.0 * c1 * (s + 2.0 * th + d1).cos()
                + c1 * (3.0 * s + 2.0 * th + d1).cos()
                + 6.0 * self.b1 * s.sin())
    }

    pub fn psi2(&self, _e: f64, th: f64, s: f64) -> f64 {
        let (c0, d0, c1, d1) = self.c();
        (3.0 * c0 * (2.0 * s + 2.0 * th + d0).sin()
            + 3.0 * c1 * (s + 2.0 * th + d1).sin()
            + c1 * (3.0 * s + 2.0 * th + d1).sin()
            + 6.0 * self.a1 * s.sin())
            / 12.0
    }

    pub fn v4(&self, e: f64, th: f64, s: f64) -> f64 {
        let Ex1 { a0, a1, b0, b1, s1, .. } = *self;
        e / 144.0
            * (48.0 * (a0 * a1 + b0 * b1) * s.cos() - 24.0 * (a1 * b0 - a0 * b1 - 3.0 * b1 * s1) * s.sin()
                + 3.0 * (4.0 * b1 * b1 - a1 * a1 + 5.0 * a1 * b1) * (4.0 * s + 2.0 * th).sin()
                - 36.0 * (a0 * a1 + b0 * b1 + a1 * s1) * (s + 2.0 * th).cos()
                + 36.0 * (a1 * b0 + a0 * b1 + b1 * s1) * (s + 2.0 * th).sin()
                - 4.0 * (5.0 * a0 * a1 - 9.0 * b0 * b1 - a1 * s1) * (3.0 * s + 2.0 * th).cos()
                + 4.0 * (11.0 * a0 * b1 + 3.0 * a1 * b0 - b1 * s1) * (3.0 * s + 2.0 * th).sin()
                - 12.0 * (2.0 * a1 * a1 + 3.0 * a0 * a0 - 2.0 * b1 * b1) * (2.0 * s + 2.0 * th).cos()
                + 12.0 * (3.0 * a0 * b0 + 4.0 * a1 * b1) * (2.0 * s + 2.0 * th).sin()
                + 12.0 * (a1 * a1 - 2.0 * b1 * b1) * (2.0 * s).cos())
    }

    pub fn psi4(&self, _e: f64, th: f64, s: f64) -> f64 {
        let Ex1 { a0, a1, b0, b1, s1, .. } = *self;
        let c1sq = a1 * a1 + b1 * b1;
        (a1 * b0 - a0 * b1) * s.cos() / 12.0 - (a1 * s1 - 7.0 / 6.0 * (a0 * a1 + b0 * b1)) * s.sin() / 4.0
            + c1sq * (2.0 * s).sin() / 24.0
            + (a0 * a0 + 2.0 / 3.0 * a1 * a1) * (2.0 * s + 2.0 * th).sin() / 8.0
            + (a1 * b0 + b1 * (2.0 * a0 + s1)) * (s + 2.0 * th).cos() / 8.0
            + a1 * (3.0 * a0 + s1) * (s + 2.0 * th).sin() / 8.0
            + (3.0 * a0 * b0 + 2.0 * a1 * b1) * (2.0 * s + 2.0 * th).cos() / 24.0
            + a1 * b1 * (2.0 * s + 4.0 * th).cos() / 16.0
            + (a1 * a1 - b1 * b1) * (2.0 * s + 4.0 * th).sin() / 32.0
            + a1 * (b1 + a1) * (4.0 * s + 2.0 * th).sin() / 96.0
            + a1 * b1 * (6.0 * s + 4.0 * th).cos() / 144.0
            + (a1 * b0 + b1 / 3.0 * (2.0 * a0 - s1)) * (3.0 * s + 2.0 * th).cos() / 24.0
            + a1 * (5.0 * a0 - s1) * (3.0 * s + 2.0 * th).sin() / 72.0
            + (a0 * a1 - b0 * b1) * (3.0 * s + 4.0 * th).sin() / 16.0
            + (a1 * b0 + a0 * b1) * (3.0 * s + 4.0 * th).cos() / 16.0
            + (a0 * b0 + 2.0 / 3.0 * a1 * b1) * (4.0 * s + 4.0 * th).cos() / 16.0
            + (a1 * a1 - b1 * b1) * (6.0 * s + 4.0 * th).sin() / 288.0
            + (a1 * b0 + a0 * b1) * (5.0 * s + 4.0 * th).cos() / 48.0
            + (a0 * a1 - b0 * b1) * (5.0 * s + 4.0 * th).sin() / 48.0
            + ((a0 * a0 - b0 * b0) + 2.0 / 3.0 * (a1 * a1 - b1 * b1)) * (4.0 * s + 4.0 * th).sin() / 32.0
    }

    /// `v4` with the `cos(S+2θ)` coefficient using `3a0a1` and the `(4S+2θ)`
    /// harmonic split into its cosine and sine parts.
    pub fn v4_amended(&self, e: f64, th: f64, s: f64) -> f64 {
        let Ex1 { a0, a1, b1, .. } = *self;
        let x = 4.0 * s + 2.0 * th;
        self.v4(e, th, s)
            + e / 144.0 * (-72.0 * a0 * a1 * (s + 2.0 * th).cos() + 3.0 * (4.0 * b1 * b1 - a1 * a1) * (x.cos() - x.sin()))
    }

    /// `psi4` with the `(4S+2θ)` harmonic read as `a1(b1 cos + a1 sin)/96`.
    pub fn psi4_amended(&self, e: f64, th: f64, s: f64) -> f64 {
        let x = 4.0 * s + 2.0 * th;
        self.psi4(e, th, s) + self.a1 * self.b1 * (x.cos() - x.sin()) / 96.0
    }
}

/// Same forcing with `S = 2t + s1 √t + s2 ln t`.
#[derive(Debug, Clone, Copy)]
pub struct Ex2 {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub s1: f64,
    pub s2: f64,
    pub h: f64,
}

impl Ex2 {
    pub fn spec(&self) -> SystemSpec {
        let law = PhaseLaw::new(2, 2, vec![2.0, self.s1, self.s2]).unwrap();
        let f = force(1, vec![mono(1, 0, 0, self.a0), mono(1, 0, 1, self.a1), mono(0, 1, 0, self.b0), mono(0, 1, 1, self.b1)]);
        SystemSpec::new(self.h, law, vec![f]).unwrap()
    }

    pub fn model(&self) -> AveragedModel {
        average(&self.spec(), 1, 2, 2).unwrap()
    }

    pub fn lambda(&self, k: usize, v: f64, psi: f64) -> f64 {
        let (c1, d1) = polar(self.a1, self.b1);
        match k {
            2 => (self.b0 - c1 / 2.0 * (2.0 * psi + d1).sin()) * v,
            _ => 0.0,
        }
    }

    pub fn omega(&self, k: usize, v: f64, psi: f64) -> f64 {
        let (c1, d1) = polar(self.a1, self.b1);
        match k {
            2 => -(2.0 * self.a0 + self.s1 + c1 * (2.0 * psi + d1).cos() + 3.0 * self.h * v) / 4.0,
            _ => 0.0,
        }
    }

    pub fn v2(&self, e: f64, th: f64, s: f64) -> f64 {
        let (c0, d0) = polar(self.a0, self.b0);
        let (c1, d1) = polar(self.a1, self.b1);
        -e / 8.0 * (4.0 * c0 * (s + 2.0 * th + d0).cos() + c1 * (2.0 * s + 2.0 * th + d1).cos() + 4.0 * self.b1 * s.sin())
    }

    pub fn psi2(&self, _e: f64, th: f64, s: f64) -> f64 {
        let (c0, d0) = polar(self.a0, self.b0);
        let (c1, d1) = polar(self.a1, self.b1);
        (4.0 * c0 * (s + 2.0 * th + d0).sin() + c1 * (2.0 * s + 2.0 * th + d1).sin() + 4.0 * self.a1 * s.sin()) / 16.0
    }
}

/// Cubic, linear and damping terms at three decay rates, `S = t + s2 √t + s4 ln t`.
#[derive(Debug, Clone, Copy)]
pub struct Ex3 {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub z0: f64,
    pub z1: f64,
    pub s2: f64,
    pub s4: f64,
    pub h: f64,
}

impl Ex3 {
    pub fn spec(&self) -> SystemSpec {
        let law = PhaseLaw::new(1, 4, vec![1.0, 0.0, self.s2, 0.0, self.s4]).unwrap();
        SystemSpec::new(
            self.h,
            law,
            vec![
                force(1, vec![mono(2, 1, 0, self.z0), mono(2, 1, 1, self.z1)]),
                force(2, vec![mono(1, 0, 0, self.a0), mono(1, 0, 1, self.a1)]),
                force(4, vec![mono(0, 1, 0, self.b0), mono(0, 1, 1, self.b1)]),
            ],
        )
        .unwrap()
    }

    pub fn model(&self) -> AveragedModel {
        average(&self.spec(), 2, 8, 8).unwrap()
    }

    pub fn lambda(&self, k: usize, v: f64, psi: f64) -> f64 {
        match k {
            6 => self.z0 / 2.0 * v * v,
            8 => v / 4.0 * (2.0 + 4.0 * self.b0 - self.a1 * self.a1 * (2.0 * psi).sin()),
            _ => 0.0,
        }
    }

    pub fn omega(&self, k: usize, v: f64, psi: f64) -> f64 {
        let h = self.h;
        match k {
            4 => -(self.s2 + self.a0) / 2.0 - 0.75 * h * v,
            6 => -375.0 * h.powi(3) / 256.0 * v.powi(3),
            8 => {
                -self.s4 - (3.0 * self.a0 * self.a0 + 2.0 * self.a1 * self.a1 + 3.0 * self.a1 * self.a1 * (2.0 * psi).cos()) / 24.0
                    - 3.0 * self.a0 * h / 8.0 * v
                    - 375.0 * h.powi(3) / 256.0 * v.powi(3)
            }
            _ => 0.0,
        }
    }

    /// `omega` with the frequency correction carried through consistently:
    /// nothing at order 6, and `−(3a0h/4)v + ω₂h²v²` at order 8.
    pub fn omega_amended(&self, k: usize, v: f64, psi: f64) -> f64 {
        let h = self.h;
        match k {
            6 => 0.0,
            8 => {
                -self.s4 - (3.0 * self.a0 * self.a0 + 2.0 * self.a1 * self.a1 + 3.0 * self.a1 * self.a1 * (2.0 * psi).cos()) / 24.0
                    - 0.75 * self.a0 * h * v
                    - 69.0 / 64.0 * h * h * v * v
            }
            _ => self.omega(k, v, psi),
        }
    }

    pub fn v4(&self, e: f64, th: f64, s: f64) -> f64 {
        -e / 6.0
            * (3.0 * self.a0 * (2.0 * s + 2.0 * th).cos() + 3.0 * self.a1 * (s + 2.0 * th).cos() + self.a1 * (3.0 * s + 2.0 * th).cos())
    }

    pub fn psi4(&self, _e: f64, th: f64, s: f64) -> f64 {
        (6.0 * self.a1 * s.sin()
            + 3.0 * self.a0 * (2.0 * s + 2.0 * th).sin()
            + 3.0 * self.a1 * (s + 2.0 * th).sin()
            + self.a1 * (3.0 * s + 2.0 * th).sin())
            / 12.0
    }

    pub fn v6(&self, e: f64, th: f64, s: f64) -> f64 {
        e * e / 2.0
            * (self.z0 / 4.0 * (4.0 * s + 4.0 * th).sin() - self.z1 * s.sin()
                + self.z1 / 6.0 * (3.0 * s + 4.0 * th).sin()
                + self.z1 / 10.0 * (5.0 * s + 4.0 * th).sin())
    }

    pub fn psi6(&self, e: f64, th: f64, s: f64) -> f64 {
        e / 4.0
            * (self.z0 / 4.0 * (8.0 * (s + th).cos().powi(4) - 3.0)
                + self.z1 / 12.0 * (4.0 * (3.0 * s + 2.0 * th).cos() + (3.0 * s + 4.0 * th).cos())
                + self.z1 / 10.0 * (5.0 * s + 4.0 * th).cos()
                + self.z1 * (s + 2.0 * th).cos())
    }

    /// `psi6` with the `cos(3S+4θ)` coefficient doubled to `z1/24`.
    pub fn psi6_amended(&self, e: f64, th: f64, s: f64) -> f64 {
        self.psi6(e, th, s) + e * self.z1 / 48.0 * (3.0 * s + 4.0 * th).cos()
    }
}

/// Largest `|series − oracle|` over a fixed grid of `(amplitude, angle, S)`.
pub fn max_gap(series: &MixedSeries, oracle: impl Fn(f64, f64, f64) -> f64, with_s: bool) -> f64 {
    let mut worst: f64 = 0.0;
    for &a in &[0.05, 0.3, 0.77, 1.4] {
        for i in 0..13 {
            let angle = -3.0 + 0.5 * i as f64;
            for j in 0..(if with_s { 11 } else { 1 }) {
                let s = if with_s { -7.1 + 1.37 * j as f64 } else { 0.0 };
                worst = worst.max((series.eval(a, angle, s) - oracle(a, angle, s)).abs());
            }
        }
    }
    worst
}

/// Gap of every `Λ_k`, `Ω_k` for `2 ≤ k ≤ order` against the oracle (zero where none is printed).
pub fn coefficient_gaps(
    model: &AveragedModel,
    order: usize,
    lambda: impl Fn(usize, f64, f64) -> f64,
    omega: impl Fn(usize, f64, f64) -> f64,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for k in 2..=order {
        out.push((format!("Lambda_{k}"), max_gap(&model.lambda[k], |v, p, _| lambda(k, v, p), false)));
        out.push((format!("Omega_{k}"), max_gap(&model.omega[k], |v, p, _| omega(k, v, p), false)));
    }
    out
}

pub const EX1: Ex1 = Ex1 { a0: 0.3, a1: 0.4, b0: 0.5, b1: 0.2, s1: 0.7, s2: 0.5, h: 1.0 / 6.0 };
pub const EX1_NEG: Ex1 = Ex1 { a0: 0.8, a1: 0.8, b0: -0.5, b1: -0.6, s1: -0.8, s2: 1.0, h: 1.0 / 6.0 };
pub const EX2: Ex2 = Ex2 { a0: 0.8, a1: 0.8, b0: 0.3, b1: 0.6, s1: -1.0, s2: 0.4, h: 1.0 / 6.0 };
pub const EX3_H0: Ex3 = Ex3 { a0: -1.0, a1: 1.0, b0: -0.2, b1: 0.3, z0: 0.2, z1: 0.4, s2: 1.0, s4: -0.25, h: 0.0 };
pub const EX3_H: Ex3 = Ex3 { a0: 0.3, a1: 0.5, b0: -0.25, b1: 0.2, z0: 0.6, z1: 0.3, s2: 1.0, s4: 0.5, h: 1.0 / 6.0 };
