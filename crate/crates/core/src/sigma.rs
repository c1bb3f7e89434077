//! The odd building-block function `[u]` in its rational, trigonometric and
//! elliptic forms, together with q-Pochhammer symbols, theta functions, the
//! elliptic gamma function and the gamma functions `G_±(u|δ)`.
//!
//! Normalizations: `[u] = u`, `[u] = 2i·sin(πu/ω₁) = z^{1/2} − z^{-1/2}`, and
//! `[u] = 2i·sin(πu/ω₁)(pz;p)∞(p/z;p)∞ = −z^{-1/2}θ(z;p)` with `z = e(u/ω₁)`,
//! `p = e(ω₂/ω₁)`. No quadratic exponential factor is ever attached.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex scalar used by all numeric code.
pub type C = Complex64;

/// Denominator magnitudes below this raise [`Error::Pole`].
pub const POLE_THRESHOLD: f64 = 1e-10;

/// `e(x) = exp(2πi x)`.
pub fn e(x: C) -> C {
    (C::new(0.0, 2.0 * PI) * x).exp()
}

fn finite(u: C, what: &str) -> Result<()> {
    if u.re.is_finite() && u.im.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what}: non-finite input {u}")))
    }
}

fn check_denominator(d: C, what: &str) -> Result<()> {
    if d.norm() < POLE_THRESHOLD {
        Err(Error::Pole(format!("{what}: |denominator| = {:.3e}", d.norm())))
    } else {
        Ok(())
    }
}

/// Truncation policy for infinite products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub max_terms: usize,
    /// A factor `1 − w` is dropped once `|w| < term_tol`.
    pub term_tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { max_terms: 64, term_tol: 1e-16 }
    }
}

impl Truncation {
    pub fn new(max_terms: usize, term_tol: f64) -> Result<Self> {
        if max_terms == 0 {
            return Err(Error::Param("max_terms must be at least 1".into()));
        }
        if !(term_tol >= 0.0) {
            return Err(Error::Param("term_tol must be nonnegative".into()));
        }
        Ok(Truncation { max_terms, term_tol })
    }
}

/// A truncated value with an estimate of the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approx {
    pub value: C,
    pub error: f64,
}

/// `(z;q)_n`, or `(z;q)_∞` when `n` is `None`.
pub fn qpoch(z: C, q: C, n: Option<usize>, tr: Truncation) -> Result<Approx> {
    finite(z, "qpoch")?;
    finite(q, "qpoch")?;
    match n {
        Some(n) => {
            let mut acc = C::new(1.0, 0.0);
            let mut w = z;
            for _ in 0..n {
                acc *= C::new(1.0, 0.0) - w;
                w *= q;
            }
            Ok(Approx { value: acc, error: 0.0 })
        }
        None => {
            if q.norm() >= 1.0 {
                return Err(Error::Divergent(format!("(z;q)_inf with |q| = {}", q.norm())));
            }
            let mut acc = C::new(1.0, 0.0);
            let mut w = z;
            let mut tail = 0.0;
            for k in 0..tr.max_terms {
                if w.norm() < tr.term_tol {
                    tail = w.norm();
                    break;
                }
                acc *= C::new(1.0, 0.0) - w;
                w *= q;
                if k + 1 == tr.max_terms {
                    tail = w.norm() / (1.0 - q.norm());
                }
            }
            Ok(Approx { value: acc, error: tail * acc.norm() })
        }
    }
}

/// `θ(z;p) = (z;p)∞ (p/z;p)∞`.
pub fn theta(z: C, p: C, tr: Truncation) -> Result<Approx> {
    if p.norm() >= 1.0 {
        return Err(Error::Domain(format!("theta with |p| = {}", p.norm())));
    }
    if z.norm() == 0.0 {
        return Err(Error::Domain("theta at z = 0".into()));
    }
    let a = qpoch(z, p, None, tr)?;
    let b = qpoch(p / z, p, None, tr)?;
    Ok(Approx { value: a.value * b.value, error: a.error * b.value.norm() + b.error * a.value.norm() })
}

/// Ruijsenaars' elliptic gamma function `Γ(z;p,q) = (pq/z;p,q)∞ / (z;p,q)∞`,
/// truncated on the triangle `i + j < max_terms`.
pub fn elliptic_gamma(z: C, p: C, q: C, tr: Truncation) -> Result<Approx> {
    finite(z, "elliptic_gamma")?;
    if p.norm() >= 1.0 || q.norm() >= 1.0 {
        return Err(Error::Domain(format!("elliptic gamma with |p| = {}, |q| = {}", p.norm(), q.norm())));
    }
    if z.norm() == 0.0 {
        return Err(Error::Domain("elliptic gamma at z = 0".into()));
    }
    let one = C::new(1.0, 0.0);
    let zi = p * q / z;
    let size = z.norm().max(zi.norm());
    let mut acc = one;
    let mut tail: f64 = 0.0;
    let mut pi = one;
    for i in 0..tr.max_terms {
        if i > 0 && pi.norm() * size < tr.term_tol {
            break;
        }
        let mut w = pi;
        for j in 0..(tr.max_terms - i) {
            if w.norm() * size < tr.term_tol {
                break;
            }
            let den = one - w * z;
            check_denominator(den, "elliptic gamma factor")?;
            acc *= (one - w * zi) / den;
            w *= q;
            if j + 1 == tr.max_terms - i {
                tail = tail.max(w.norm() * size);
            }
        }
        pi *= p;
    }
    Ok(Approx { value: acc, error: tail * acc.norm() })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Euler gamma of a complex argument (Lanczos, g = 7, with reflection).
pub fn euler_gamma(z: C) -> Result<C> {
    finite(z, "gamma")?;
    let nearest = z.re.round();
    if nearest <= 0.0 && (z - C::new(nearest, 0.0)).norm() < POLE_THRESHOLD {
        return Err(Error::Pole(format!("Euler gamma at {z}")));
    }
    if z.re < 0.5 {
        let s = (C::new(PI, 0.0) * z).sin();
        return Ok(C::new(PI, 0.0) / (s * euler_gamma(C::new(1.0, 0.0) - z)?));
    }
    let z = z - 1.0;
    let mut x = C::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok((2.0 * PI).sqrt() * ((z + 0.5) * t.ln() - t).exp() * x)
}

/// Which of the three classes `[u]` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "rational")]
    Rational,
    #[serde(rename = "trig")]
    Trigonometric,
    #[serde(rename = "elliptic")]
    Elliptic,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Rational, Kind::Trigonometric, Kind::Elliptic];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Rational => "rational",
            Kind::Trigonometric => "trig",
            Kind::Elliptic => "elliptic",
        }
    }

    pub fn rho(self) -> usize {
        match self {
            Kind::Rational => 1,
            Kind::Trigonometric => 2,
            Kind::Elliptic => 4,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" => Ok(Kind::Rational),
            "trig" | "trigonometric" => Ok(Kind::Trigonometric),
            "elliptic" => Ok(Kind::Elliptic),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

/// Sign choice for the gamma functions `G_±`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GammaSign {
    #[serde(rename = "plus")]
    Plus,
    #[serde(rename = "minus")]
    Minus,
}

/// The function `[u]` with its half-period tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaFamily {
    pub kind: Kind,
    pub omega1: C,
    pub omega2: C,
    pub rho: usize,
    /// `ω_1, …, ω_ρ`; the last entry is always 0.
    pub omegas: Vec<C>,
    pub etas: Vec<C>,
    pub epsilons: Vec<i8>,
    pub trunc: Truncation,
}

impl SigmaFamily {
    pub fn rational() -> Self {
        SigmaFamily {
            kind: Kind::Rational,
            omega1: C::new(0.0, 0.0),
            omega2: C::new(0.0, 0.0),
            rho: 1,
            omegas: vec![C::new(0.0, 0.0)],
            etas: vec![C::new(0.0, 0.0)],
            epsilons: vec![1],
            trunc: Truncation::default(),
        }
    }

    pub fn trigonometric(omega1: C) -> Result<Self> {
        finite(omega1, "omega1")?;
        if omega1.norm() == 0.0 {
            return Err(Error::Param("omega1 must be nonzero".into()));
        }
        let zero = C::new(0.0, 0.0);
        Ok(SigmaFamily {
            kind: Kind::Trigonometric,
            omega1,
            omega2: zero,
            rho: 2,
            omegas: vec![omega1, zero],
            etas: vec![zero, zero],
            epsilons: vec![-1, 1],
            trunc: Truncation::default(),
        })
    }

    pub fn elliptic(omega1: C, omega2: C, trunc: Truncation) -> Result<Self> {
        finite(omega1, "omega1")?;
        finite(omega2, "omega2")?;
        if omega1.norm() == 0.0 || (omega2 / omega1).im <= 0.0 {
            return Err(Error::Domain("elliptic family needs Im(ω₂/ω₁) > 0".into()));
        }
        let zero = C::new(0.0, 0.0);
        let inv = C::new(1.0, 0.0) / omega1;
        Ok(SigmaFamily {
            kind: Kind::Elliptic,
            omega1,
            omega2,
            rho: 4,
            omegas: vec![omega1, omega2, -omega1 - omega2, zero],
            etas: vec![zero, -inv, inv, zero],
            epsilons: vec![-1, -1, -1, 1],
            trunc,
        })
    }

    /// Build a family of the given kind from periods (ignored where unused).
    pub fn of_kind(kind: Kind, omega1: C, omega2: C, trunc: Truncation) -> Result<Self> {
        let fam = match kind {
            Kind::Rational => SigmaFamily::rational(),
            Kind::Trigonometric => SigmaFamily::trigonometric(omega1)?,
            Kind::Elliptic => SigmaFamily::elliptic(omega1, omega2, trunc)?,
        };
        Ok(fam.with_truncation(trunc))
    }

    pub fn with_truncation(mut self, trunc: Truncation) -> Self {
        self.trunc = trunc;
        self
    }

    /// Elliptic nome `p = e(ω₂/ω₁)`; zero for the other classes.
    pub fn nome(&self) -> C {
        match self.kind {
            Kind::Elliptic => e(self.omega2 / self.omega1),
            _ => C::new(0.0, 0.0),
        }
    }

    /// Evaluate `[u]`.
    pub fn eval(&self, u: C) -> Result<C> {
        finite(u, "sigma")?;
        match self.kind {
            Kind::Rational => Ok(u),
            Kind::Trigonometric => Ok(C::new(0.0, 2.0) * (PI * u / self.omega1).sin()),
            Kind::Elliptic => {
                // Same value as −z^{-1/2}θ(z;p); the sine form keeps full relative
                // accuracy near the zero at u = 0.
                let p = self.nome();
                let z = e(u / self.omega1);
                let a = qpoch(p * z, p, None, self.trunc)?;
                let b = qpoch(p / z, p, None, self.trunc)?;
                Ok(C::new(0.0, 2.0) * (PI * u / self.omega1).sin() * a.value * b.value)
            }
        }
    }

    /// Product `∏ [u_k]`.
    pub fn prod(&self, us: impl IntoIterator<Item = C>) -> Result<C> {
        let mut acc = C::new(1.0, 0.0);
        for u in us {
            acc *= self.eval(u)?;
        }
        Ok(acc)
    }

    /// Ratio `[num]/[den]`, raising a pole error on a vanishing denominator.
    pub fn ratio(&self, num: C, den: C, what: &str) -> Result<C> {
        let d = self.eval(den)?;
        check_denominator(d, what)?;
        Ok(self.eval(num)? / d)
    }

    /// The gamma function `G_±(u|δ)` with `G_±(u+δ|δ) = ±[u]·G_±(u|δ)`.
    pub fn gamma(&self, sign: GammaSign, u: C, delta: C) -> Result<C> {
        finite(u, "gamma")?;
        finite(delta, "gamma")?;
        if delta.norm() == 0.0 {
            return Err(Error::Param("δ must be nonzero".into()));
        }
        match self.kind {
            Kind::Rational => match sign {
                GammaSign::Plus => rational_gamma_plus(u, delta),
                GammaSign::Minus => {
                    let g = rational_gamma_plus(delta - u, delta)?;
                    check_denominator(g, "rational G_-")?;
                    Ok(C::new(1.0, 0.0) / g)
                }
            },
            Kind::Trigonometric | Kind::Elliptic => {
                let tau = delta / self.omega1;
                if tau.im <= 0.0 {
                    return Err(Error::Domain("gamma function needs Im(δ/ω₁) > 0".into()));
                }
                let x = u / delta;
                let quad = delta / (2.0 * self.omega1) * (x * (x - 1.0) / 2.0);
                let z = e(u / self.omega1);
                let q = e(tau);
                match (self.kind, sign) {
                    (Kind::Trigonometric, GammaSign::Minus) => {
                        let den = qpoch(z, q, None, self.trunc)?.value;
                        check_denominator(den, "trigonometric G_-")?;
                        Ok(e(-quad) / den)
                    }
                    (Kind::Trigonometric, GammaSign::Plus) => Ok(e(quad) * qpoch(q / z, q, None, self.trunc)?.value),
                    (_, GammaSign::Minus) => Ok(e(-quad) * elliptic_gamma(z, self.nome(), q, self.trunc)?.value),
                    (_, GammaSign::Plus) => {
                        let p = self.nome();
                        Ok(e(quad) * elliptic_gamma(p * z, p, q, self.trunc)?.value)
                    }
                }
            }
        }
    }

    /// Normalized residual of the four-term Riemann relation.
    pub fn riemann_residual(&self, x: C, y: C, u: C, v: C) -> Result<f64> {
        let a = self.prod([x + u, x - u, y + v, y - v])?;
        let b = self.prod([x + v, x - v, y + u, y - u])?;
        let c = self.prod([x + y, x - y, u + v, u - v])?;
        let scale = a.norm().max(b.norm()).max(c.norm());
        Ok((a - b - c).norm() / scale.max(1.0))
    }

    /// Largest residual of the two duplication identities at `(u, c)`.
    pub fn duplication_residual(&self, u: C, c: C) -> Result<f64> {
        let s2 = self.eval(2.0 * u)?;
        check_denominator(s2, "[2u] in duplication")?;
        let mut rhs = 2.0 * self.eval(u)?;
        for s in 0..self.rho - 1 {
            let h = self.omegas[s] / 2.0;
            rhs *= self.ratio(u - h, -h, "[−ω_s/2]")?;
        }
        let r1 = (s2 - rhs).norm() / s2.norm().max(rhs.norm()).max(1.0);
        let lhs = self.eval(2.0 * u + c)? / s2;
        let mut rhs2 = C::new(1.0, 0.0);
        for s in 0..self.rho {
            let h = self.omegas[s] / 2.0;
            rhs2 *= self.ratio(u + c / 2.0 - h, u - h, "[u − ω_s/2]")?;
        }
        let r2 = (lhs - rhs2).norm() / lhs.norm().max(rhs2.norm()).max(1.0);
        Ok(r1.max(r2))
    }

    /// Largest residual of `[u+ω_r] = ε_r e(η_r(u+ω_r/2)) [u]` over `r`.
    pub fn quasi_period_residual(&self, u: C) -> Result<f64> {
        let base = self.eval(u)?;
        let mut worst: f64 = 0.0;
        for r in 0..self.rho {
            let w = self.omegas[r];
            let lhs = self.eval(u + w)?;
            let rhs = f64::from(self.epsilons[r]) * e(self.etas[r] * (u + w / 2.0)) * base;
            worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0));
        }
        Ok(worst)
    }
}

fn rational_gamma_plus(u: C, delta: C) -> Result<C> {
    let x = u / delta;
    Ok((x * delta.ln()).exp() * euler_gamma(x)?)
}
