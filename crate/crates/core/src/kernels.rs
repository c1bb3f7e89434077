//! Kernel functions of Cauchy and dual Cauchy type, numeric and exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{LaurentPoly, Q};
use crate::sigma::{e, qpoch, GammaSign, Kind, SigmaFamily, Truncation, C};

/// Which kernel a [`KernelSpec`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    PhiA,
    PsiA,
    PhiBcRatio,
    PhiBcProduct,
    PsiBc,
    /// Multiplicative kernels of the trigonometric BC case.
    Phi0,
    PhiInf,
    PhiPlus,
    PhiMinus,
}

impl KernelKind {
    pub const MULTIPLICATIVE: [KernelKind; 4] = [KernelKind::Phi0, KernelKind::PhiInf, KernelKind::PhiPlus, KernelKind::PhiMinus];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::PhiA => "phi-a",
            KernelKind::PsiA => "psi-a",
            KernelKind::PhiBcRatio => "phi-bc-ratio",
            KernelKind::PhiBcProduct => "phi-bc-product",
            KernelKind::PsiBc => "psi-bc",
            KernelKind::Phi0 => "phi0",
            KernelKind::PhiInf => "phi-inf",
            KernelKind::PhiPlus => "phi-plus",
            KernelKind::PhiMinus => "phi-minus",
        }
    }
}

/// Default gamma function: `G_−` for trigonometric, `G_+` otherwise.
pub fn default_gamma_sign(kind: Kind) -> GammaSign {
    match kind {
        Kind::Trigonometric => GammaSign::Minus,
        _ => GammaSign::Plus,
    }
}

/// A numeric kernel together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub fam: SigmaFamily,
    pub delta: C,
    pub kappa: C,
    /// Auxiliary parameter of the type-A kernels.
    pub v: C,
    pub gamma_sign: GammaSign,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, fam: SigmaFamily, delta: C, kappa: C) -> Self {
        let gamma_sign = default_gamma_sign(fam.kind);
        KernelSpec { kind, fam, delta, kappa, v: C::new(0.0, 0.0), gamma_sign }
    }

    pub fn with_v(mut self, v: C) -> Self {
        self.v = v;
        self
    }

    pub fn with_gamma_sign(mut self, s: GammaSign) -> Self {
        self.gamma_sign = s;
        self
    }

    pub fn eval(&self, x: &[C], y: &[C]) -> Result<C> {
        match self.kind {
            KernelKind::PhiA => phi_a(self, x, y),
            KernelKind::PsiA => psi_a(x, y, self.v, &self.fam),
            KernelKind::PhiBcRatio | KernelKind::PhiBcProduct => phi_bc(self, x, y),
            KernelKind::PsiBc => psi_bc(x, y, &self.fam),
            KernelKind::Phi0 | KernelKind::PhiInf | KernelKind::PhiPlus | KernelKind::PhiMinus => {
                if self.fam.kind != Kind::Trigonometric {
                    return Err(Error::Param(format!("{} needs the trigonometric family", self.kind.name())));
                }
                phi_mult(self.kind, self.fam.omega1, self.delta, self.kappa, x, y, self.fam.trunc)
            }
        }
    }
}

fn g(spec: &KernelSpec, u: C) -> Result<C> {
    spec.fam.gamma(spec.gamma_sign, u, spec.delta)
}

fn nonzero(d: C, what: &str) -> Result<C> {
    if d.norm() < crate::sigma::POLE_THRESHOLD || !d.is_finite() {
        return Err(Error::Pole(what.into()));
    }
    Ok(d)
}

/// `Φ_A(x;y|δ,κ) = ∏_{j,l} G(x_j+y_l+v−κ|δ)/G(x_j+y_l+v|δ)`.
pub fn phi_a(spec: &KernelSpec, x: &[C], y: &[C]) -> Result<C> {
    let mut acc = C::new(1.0, 0.0);
    for xj in x {
        for yl in y {
            let u = xj + yl + spec.v;
            acc *= g(spec, u - spec.kappa)? / nonzero(g(spec, u)?, "Φ_A gamma denominator")?;
        }
    }
    Ok(acc)
}

/// `Ψ_A(x;y) = ∏_{j,l} [x_j−y_l+v]`.
pub fn psi_a(x: &[C], y: &[C], v: C, fam: &SigmaFamily) -> Result<C> {
    fam.prod(x.iter().flat_map(|xj| y.iter().map(move |yl| xj - yl + v)))
}

/// `Φ_BC` in ratio or four-fold product form, selected by `spec.kind`.
pub fn phi_bc(spec: &KernelSpec, x: &[C], y: &[C]) -> Result<C> {
    let lo = (spec.delta - spec.kappa) / 2.0;
    let hi = (spec.delta + spec.kappa) / 2.0;
    let mut acc = C::new(1.0, 0.0);
    for xj in x {
        for yl in y {
            match spec.kind {
                KernelKind::PhiBcRatio => {
                    for s in [1.0, -1.0] {
                        let u = xj + s * yl;
                        acc *= g(spec, u + lo)? / nonzero(g(spec, u + hi)?, "Φ_BC gamma denominator")?;
                    }
                }
                KernelKind::PhiBcProduct => {
                    for s1 in [1.0, -1.0] {
                        for s2 in [1.0, -1.0] {
                            acc *= g(spec, s1 * xj + s2 * yl + lo)?;
                        }
                    }
                }
                other => return Err(Error::Param(format!("{} is not a BC Cauchy kernel", other.name()))),
            }
        }
    }
    Ok(acc)
}

/// `Ψ_BC(x;y) = ∏_{j,l} [x_j+y_l][x_j−y_l]`.
pub fn psi_bc(x: &[C], y: &[C], fam: &SigmaFamily) -> Result<C> {
    fam.prod(x.iter().flat_map(|xj| y.iter().flat_map(move |yl| [xj + yl, xj - yl])))
}

/// `Π(z;w|q,t) = ∏_{j,l} (t z_j w_l;q)_∞/(z_j w_l;q)_∞`.
pub fn pi_macdonald(z: &[C], w: &[C], q: C, t: C, tr: Truncation) -> Result<C> {
    let mut acc = C::new(1.0, 0.0);
    for zj in z {
        for wl in w {
            let u = zj * wl;
            let den = qpoch(u, q, None, tr)?.value;
            acc *= qpoch(t * u, q, None, tr)?.value / nonzero(den, "Π denominator")?;
        }
    }
    Ok(acc)
}

/// The four trigonometric kernels `Φ₀, Φ_∞, Φ_+, Φ_−` from additive
/// coordinates, with `z = e(x/ω₁)`, `w = e(y/ω₁)`, `q = e(δ/ω₁)`, `t = e(κ/ω₁)`.
pub fn phi_mult(kind: KernelKind, omega1: C, delta: C, kappa: C, x: &[C], y: &[C], tr: Truncation) -> Result<C> {
    let (m, n) = (x.len() as f64, y.len() as f64);
    let q = e(delta / omega1);
    if q.norm() >= 1.0 {
        return Err(Error::Divergent("|q| ≥ 1 in a multiplicative kernel".into()));
    }
    let sqt = e((delta + kappa) / (2.0 * omega1));
    let sqt_inv = e((delta - kappa) / (2.0 * omega1));
    let poch = |u: C| -> Result<C> { Ok(qpoch(u, q, None, tr)?.value) };
    let sx: C = x.iter().sum();
    let quad =
        n * x.iter().map(|v| v * v).sum::<C>() + m * y.iter().map(|v| v * v).sum::<C>() + m * n / 4.0 * (kappa * kappa - delta * delta);
    let mut acc = C::new(1.0, 0.0);
    match kind {
        KernelKind::Phi0 | KernelKind::PhiInf => {
            let sgn = if kind == KernelKind::Phi0 { 1.0 } else { -1.0 };
            acc *= e(sgn * n * kappa * sx / (delta * omega1));
            for xj in x {
                let z = e(sgn * xj / omega1);
                for yl in y {
                    let w = e(yl / omega1);
                    for ww in [w, w.inv()] {
                        acc *= poch(sqt * z * ww)? / nonzero(poch(sqt_inv * z * ww)?, "Φ₀ denominator")?;
                    }
                }
            }
        }
        KernelKind::PhiPlus | KernelKind::PhiMinus => {
            let plus = kind == KernelKind::PhiPlus;
            acc *= e(if plus { quad } else { -quad } / (omega1 * delta));
            for xj in x {
                let z = e(xj / omega1);
                for yl in y {
                    let w = e(yl / omega1);
                    for zz in [z, z.inv()] {
                        for ww in [w, w.inv()] {
                            if plus {
                                acc *= poch(sqt * zz * ww)?;
                            } else {
                                acc /= nonzero(poch(sqt_inv * zz * ww)?, "Φ_− factor")?;
                            }
                        }
                    }
                }
            }
        }
        other => return Err(Error::Param(format!("{} is not a multiplicative kernel", other.name()))),
    }
    Ok(acc)
}

/// `Ψ(z;w) = ∏_{j,l} (z_j + z_j^{-1} − w_l − w_l^{-1})` in `m + n` variables, `z` first.
pub fn kern_psi_mult(m: usize, n: usize) -> LaurentPoly {
    let nv = m + n;
    let mut acc = LaurentPoly::one(nv);
    for j in 0..m {
        for l in 0..n {
            let f = LaurentPoly::var_pow(nv, j, 1) + LaurentPoly::var_pow(nv, j, -1)
                - LaurentPoly::var_pow(nv, m + l, 1)
                - LaurentPoly::var_pow(nv, m + l, -1);
            acc = &acc * &f;
        }
    }
    acc
}

/// `Φ_{−k}(z;w) = ∏_{j,l} [w_l; q^{(1−k)/2} z_j]_{q,k}` in `m + n` variables,
/// `z` first, from `sq = q^{1/2}`. Each factor is
/// `∏_{i<k} (w + w^{-1} − c_i z − c_i^{-1} z^{-1})` with `c_i = q^{(1−k)/2+i}`.
pub fn phi_minus_k(m: usize, n: usize, sq: &Q, k: u32) -> Result<LaurentPoly> {
    if sq == &Q::from_integer(0.into()) {
        return Err(Error::Param("q^{1/2} must be nonzero".into()));
    }
    let nv = m + n;
    let mut acc = LaurentPoly::one(nv);
    for j in 0..m {
        for l in 0..n {
            for i in 0..k {
                let c = crate::laurent::qpow(sq, 1 - i64::from(k) + 2 * i64::from(i));
                let mut f = LaurentPoly::var_pow(nv, m + l, 1) + LaurentPoly::var_pow(nv, m + l, -1);
                let mut ez = vec![0; nv];
                ez[j] = 2;
                f.add_term(ez.clone(), -c.clone());
                ez[j] = -2;
                f.add_term(ez, -c.recip());
                acc = &acc * &f;
            }
        }
    }
    Ok(acc)
}
