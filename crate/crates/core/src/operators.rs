//! Ruijsenaars difference operators of types A and BC applied to numeric
//! functions, the Koornwinder operator in multiplicative variables, and exact
//! Koornwinder and Macdonald operators on Laurent polynomials.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::laurent::{binomial_poly, qpow, sum_fractions, Binomial, ExactParams, Fraction, LaurentPoly, Q};
use crate::sigma::{e, Kind, SigmaFamily, C};

/// A numeric function of `m` complex variables.
pub type FnM<'a> = dyn Fn(&[C]) -> Result<C> + Sync + 'a;

/// `x + d·e_i`.
pub fn shifted(x: &[C], i: usize, d: C) -> Vec<C> {
    let mut y = x.to_vec();
    y[i] += d;
    y
}

fn neg_all(x: &[C]) -> Vec<C> {
    x.iter().map(|v| -v).collect()
}

/// Whether `u` lies within `tol` of the period lattice of `fam`.
pub fn in_lattice(fam: &SigmaFamily, u: C, tol: f64) -> bool {
    match fam.kind {
        Kind::Rational => u.norm() < tol,
        Kind::Trigonometric => {
            let r = u / fam.omega1;
            r.im.abs() < tol && (r.re - r.re.round()).abs() < tol
        }
        Kind::Elliptic => {
            // u = a ω₁ + b ω₂ with real a, b
            let (w1, w2) = (fam.omega1, fam.omega2);
            let det = w1.re * w2.im - w1.im * w2.re;
            let a = (u.re * w2.im - u.im * w2.re) / det;
            let b = (w1.re * u.im - w1.im * u.re) / det;
            (a - a.round()).abs() < tol && (b - b.round()).abs() < tol
        }
    }
}

/// Type-A data: shift `δ` and coupling `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsA {
    pub fam: SigmaFamily,
    pub delta: C,
    pub kappa: C,
}

impl ParamsA {
    pub fn new(fam: SigmaFamily, delta: C, kappa: C) -> Result<Self> {
        for (name, v) in [("δ", delta), ("κ", kappa)] {
            if in_lattice(&fam, v, 1e-12) {
                return Err(Error::Param(format!("{name} = {v} lies on the period lattice")));
            }
        }
        Ok(ParamsA { fam, delta, kappa })
    }

    /// The same family with shift and coupling exchanged.
    pub fn swapped(&self) -> Self {
        ParamsA { fam: self.fam.clone(), delta: self.kappa, kappa: self.delta }
    }
}

/// `A_i(x;κ) = ∏_{j≠i} [x_i−x_j+κ]/[x_i−x_j]`.
pub fn coeff_a(p: &ParamsA, x: &[C], i: usize) -> Result<C> {
    let mut acc = C::new(1.0, 0.0);
    for j in 0..x.len() {
        if j != i {
            let d = x[i] - x[j];
            acc *= p.fam.ratio(d + p.kappa, d, "type A coefficient")?;
        }
    }
    Ok(acc)
}

/// The summands `A_i(x;κ) f(x+δe_i)` of `D_x f`.
pub fn terms_a(p: &ParamsA, f: &FnM, x: &[C]) -> Result<Vec<C>> {
    (0..x.len()).map(|i| Ok(coeff_a(p, x, i)? * f(&shifted(x, i, p.delta))?)).collect()
}

/// `D_x f = Σ_i A_i(x;κ) f(x+δe_i)`.
pub fn apply_a(p: &ParamsA, f: &FnM, x: &[C]) -> Result<C> {
    Ok(terms_a(p, f, x)?.into_iter().sum())
}

/// Coefficient of `T_I` in `D_r`: `∏_{i∈I, j∉I} [x_i−x_j+κ]/[x_i−x_j]`.
pub fn coeff_a_subset(p: &ParamsA, x: &[C], mask: u32) -> Result<C> {
    let mut acc = C::new(1.0, 0.0);
    for i in 0..x.len() {
        if mask & (1 << i) == 0 {
            continue;
        }
        for j in 0..x.len() {
            if mask & (1 << j) == 0 {
                let d = x[i] - x[j];
                acc *= p.fam.ratio(d + p.kappa, d, "higher type A coefficient")?;
            }
        }
    }
    Ok(acc)
}

/// The order-`r` operator `D_r f = Σ_{|I|=r} (coefficient) f(x + δ Σ_{i∈I} e_i)`.
pub fn apply_a_higher(p: &ParamsA, r: usize, f: &FnM, x: &[C]) -> Result<C> {
    Ok(terms_a_higher(p, r, f, x)?.into_iter().sum())
}

/// The summands of `D_r f`, one per subset `I`.
pub fn terms_a_higher(p: &ParamsA, r: usize, f: &FnM, x: &[C]) -> Result<Vec<C>> {
    let m = x.len();
    if r == 0 || r > m {
        return Err(Error::Param(format!("order r = {r} outside 1..={m}")));
    }
    let mut acc = Vec::new();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != r {
            continue;
        }
        let mut y = x.to_vec();
        for (i, yi) in y.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                *yi += p.delta;
            }
        }
        acc.push(coeff_a_subset(p, x, mask)? * f(&y)?);
    }
    Ok(acc)
}

/// `|D_r D_s f − D_s D_r f|` at `x`.
pub fn commutator_residual(p: &ParamsA, r: usize, s: usize, f: &FnM, x: &[C]) -> Result<f64> {
    let inner_s = |y: &[C]| apply_a_higher(p, s, f, y);
    let inner_r = |y: &[C]| apply_a_higher(p, r, f, y);
    let rs = apply_a_higher(p, r, &inner_s, x)?;
    let sr = apply_a_higher(p, s, &inner_r, x)?;
    Ok((rs - sr).norm() / rs.norm().max(sr.norm()).max(1.0))
}

/// Sign of a BC shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Type-BC data: `2ρ` parameters `μ`, shift `δ` and coupling `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsBC {
    pub fam: SigmaFamily,
    pub mu: Vec<C>,
    pub delta: C,
    pub kappa: C,
}

impl ParamsBC {
    pub fn new(fam: SigmaFamily, mu: Vec<C>, delta: C, kappa: C) -> Result<Self> {
        if mu.len() != 2 * fam.rho {
            return Err(Error::Dimension(format!("{} parameters μ for ρ = {}", mu.len(), fam.rho)));
        }
        Ok(ParamsBC { fam, mu, delta, kappa })
    }

    /// `c^{(μ|δ,κ)} = Σμ_s − (ρ/2)(δ+κ) + Σω_s`.
    pub fn c_const(&self) -> C {
        let rho = self.fam.rho as f64;
        self.mu.iter().sum::<C>() - rho / 2.0 * (self.delta + self.kappa) + self.fam.omegas.iter().sum::<C>()
    }

    pub fn with(&self, mu: Vec<C>, delta: C, kappa: C) -> Self {
        ParamsBC { fam: self.fam.clone(), mu, delta, kappa }
    }

    /// Parameters `ν_s = (δ+κ)/2 − μ_s` of the dual operator.
    pub fn dual_nu(&self) -> Vec<C> {
        self.mu.iter().map(|m| (self.delta + self.kappa) / 2.0 - m).collect()
    }
}

fn half(w: C) -> C {
    w / 2.0
}

fn coeff_bc_plus(p: &ParamsBC, x: &[C], i: usize) -> Result<C> {
    let f = &p.fam;
    let xi = x[i];
    let mut acc = f.prod(p.mu.iter().map(|m| xi + m))?;
    for s in 0..f.rho {
        let w = half(f.omegas[s]);
        let d = f.eval(xi - w)? * f.eval(xi + half(p.delta) - w)?;
        if d.norm() < crate::sigma::POLE_THRESHOLD {
            return Err(Error::Pole("BC coefficient half-period factor".into()));
        }
        acc /= d;
    }
    for j in 0..x.len() {
        if j != i {
            acc *= f.ratio(xi + x[j] + p.kappa, xi + x[j], "BC coefficient [x_i+x_j]")?;
            acc *= f.ratio(xi - x[j] + p.kappa, xi - x[j], "BC coefficient [x_i−x_j]")?;
        }
    }
    Ok(acc)
}

/// `A_i^±(x;μ|δ,κ)`, with `A_i^−(x) = A_i^+(−x)`.
pub fn coeff_bc(p: &ParamsBC, x: &[C], i: usize, sign: Sign) -> Result<C> {
    match sign {
        Sign::Plus => coeff_bc_plus(p, x, i),
        Sign::Minus => coeff_bc_plus(p, &neg_all(x), i),
    }
}

/// `A_r^0(x;μ|δ,κ)` including its exponential factor.
pub fn coeff_bc_zero(p: &ParamsBC, x: &[C], r: usize) -> Result<C> {
    let f = &p.fam;
    let m = x.len() as f64;
    let wr = f.omegas[r];
    let base = half(wr - p.delta);
    let mut acc = e(-(m * p.kappa + p.c_const() / 2.0) * f.etas[r]);
    acc *= f.prod(p.mu.iter().map(|mu| base + mu))?;
    let mut den = f.eval(p.kappa)?;
    for s in 0..f.rho {
        if s != r {
            den *= f.eval(half(wr - f.omegas[s]))?;
        }
        den *= f.eval(half(wr - f.omegas[s] + p.kappa - p.delta))?;
    }
    if den.norm() < crate::sigma::POLE_THRESHOLD {
        return Err(Error::Pole("A^0 constant denominator".into()));
    }
    acc /= den;
    for &xj in x {
        acc *= f.ratio(base + xj + p.kappa, base + xj, "A^0 factor")?;
        acc *= f.ratio(base - xj + p.kappa, base - xj, "A^0 factor")?;
    }
    Ok(acc)
}

/// `A^0 = Σ_r A_r^0`.
pub fn coeff_bc_zero_total(p: &ParamsBC, x: &[C]) -> Result<C> {
    (0..p.fam.rho).map(|r| coeff_bc_zero(p, x, r)).sum()
}

/// The constant `C^{(μ|δ,κ)}`: the operator `E` in zero variables.
pub fn const_c(p: &ParamsBC) -> Result<C> {
    coeff_bc_zero_total(p, &[])
}

/// The summands of `E_x f`: the shifted terms followed by the `A_r^0` terms.
pub fn terms_e_bc(p: &ParamsBC, f: &FnM, x: &[C]) -> Result<Vec<C>> {
    let mut acc = Vec::with_capacity(2 * x.len() + p.fam.rho);
    for i in 0..x.len() {
        acc.push(coeff_bc(p, x, i, Sign::Plus)? * f(&shifted(x, i, p.delta))?);
        acc.push(coeff_bc(p, x, i, Sign::Minus)? * f(&shifted(x, i, -p.delta))?);
    }
    let f0 = f(x)?;
    for r in 0..p.fam.rho {
        acc.push(coeff_bc_zero(p, x, r)? * f0);
    }
    Ok(acc)
}

/// `E_x f = Σ A_i^+ f(x+δe_i) + Σ A_i^− f(x−δe_i) + A^0 f(x)`.
pub fn apply_e_bc(p: &ParamsBC, f: &FnM, x: &[C]) -> Result<C> {
    Ok(terms_e_bc(p, f, x)?.into_iter().sum())
}

/// `E_x(1)` at `x`.
pub fn e_bc_one(p: &ParamsBC, x: &[C]) -> Result<C> {
    let mut acc = coeff_bc_zero_total(p, x)?;
    for i in 0..x.len() {
        acc += coeff_bc(p, x, i, Sign::Plus)? + coeff_bc(p, x, i, Sign::Minus)?;
    }
    Ok(acc)
}

/// The summands `A_i^± f(x±δe_i)` and `−A_i^± f(x)` of `D_x f`.
pub fn terms_d_bc(p: &ParamsBC, f: &FnM, x: &[C]) -> Result<Vec<C>> {
    let f0 = f(x)?;
    let mut acc = Vec::with_capacity(4 * x.len());
    for i in 0..x.len() {
        for (sign, d) in [(Sign::Plus, p.delta), (Sign::Minus, -p.delta)] {
            let a = coeff_bc(p, x, i, sign)?;
            acc.push(a * f(&shifted(x, i, d))?);
            acc.push(-a * f0);
        }
    }
    Ok(acc)
}

/// `D_x f = Σ A_i^+ (f(x+δe_i) − f(x)) + Σ A_i^− (f(x−δe_i) − f(x))`.
pub fn apply_d_bc(p: &ParamsBC, f: &FnM, x: &[C]) -> Result<C> {
    Ok(terms_d_bc(p, f, x)?.into_iter().sum())
}

/// The duplication-rewritten form of `(1/4)∏_{s<ρ}[ω_s/2]² E_x f`.
pub fn apply_e_bc_rewritten(p: &ParamsBC, f: &FnM, x: &[C]) -> Result<C> {
    let fam = &p.fam;
    let m = x.len();
    let mut acc = C::new(0.0, 0.0);
    for (sgn, d) in [(1.0, p.delta), (-1.0, -p.delta)] {
        for i in 0..m {
            let xi = sgn * x[i];
            let mut c = fam.prod(p.mu.iter().map(|mu| xi + mu))?;
            let den = fam.eval(2.0 * xi)? * fam.eval(2.0 * xi + p.delta)?;
            if den.norm() < crate::sigma::POLE_THRESHOLD {
                return Err(Error::Pole("[2x][2x+δ]".into()));
            }
            c /= den;
            for j in 0..m {
                if j != i {
                    c *= fam.ratio(xi + x[j] + p.kappa, xi + x[j], "rewritten coefficient")?;
                    c *= fam.ratio(xi - x[j] + p.kappa, xi - x[j], "rewritten coefficient")?;
                }
            }
            acc += c * f(&shifted(x, i, d))?;
        }
    }
    let cc = p.c_const();
    let mut zero = C::new(0.0, 0.0);
    for r in 0..fam.rho {
        let wr = fam.omegas[r];
        let base = half(wr - p.delta);
        let k = e(-(wr + (m as f64 + 1.0) * p.kappa - p.delta + cc / 2.0) * fam.etas[r]);
        let mut c = k * fam.prod(p.mu.iter().map(|mu| base + mu))?;
        let den = 2.0 * fam.eval(p.kappa)? * fam.eval(p.kappa - p.delta)?;
        if den.norm() < crate::sigma::POLE_THRESHOLD {
            return Err(Error::Pole("2[κ][κ−δ]".into()));
        }
        c /= den;
        for &xj in x {
            c *= fam.ratio(base + xj + p.kappa, base + xj, "rewritten A^0")?;
            c *= fam.ratio(base - xj + p.kappa, base - xj, "rewritten A^0")?;
        }
        zero += c;
    }
    Ok(acc + zero * f(x)?)
}

/// The constant `(1/4)∏_{s<ρ}[ω_s/2]²` relating `E` to its rewritten form.
pub fn rewritten_prefactor(fam: &SigmaFamily) -> Result<C> {
    let mut acc = C::new(0.25, 0.0);
    for s in 0..fam.rho - 1 {
        let v = fam.eval(half(fam.omegas[s]))?;
        acc *= v * v;
    }
    Ok(acc)
}

/// Koornwinder operator in multiplicative variables, evaluated from additive
/// coordinates `z_i = e(x_i/ω₁)`. Parameters `a_s = e(μ_s/ω₁)`, the shift
/// `e(shift/ω₁)` plays the role of `q` and `e(coupling/ω₁)` that of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoornwinderMult {
    pub omega1: C,
    pub mu: [C; 4],
    pub shift: C,
    pub coupling: C,
}

impl KoornwinderMult {
    fn coeff_plus(&self, x: &[C], i: usize) -> Result<C> {
        let w = self.omega1;
        let one = C::new(1.0, 0.0);
        let z: Vec<C> = x.iter().map(|xi| e(xi / w)).collect();
        let zi = z[i];
        let alpha = e((self.mu.iter().sum::<C>() - self.shift) / (2.0 * w));
        let t = e(self.coupling / w);
        let qq = e(self.shift / w);
        let tpow = e((x.len() as f64 - 1.0) * self.coupling / w);
        let mut num = one;
        for mu in &self.mu {
            num *= one - e(mu / w) * zi;
        }
        let mut den = alpha * tpow * (one - zi * zi) * (one - qq * zi * zi);
        for (j, &zj) in z.iter().enumerate() {
            if j != i {
                num *= (one - t * zi * zj) * (one - t * zi / zj);
                den *= (one - zi * zj) * (one - zi / zj);
            }
        }
        if den.norm() < crate::sigma::POLE_THRESHOLD {
            return Err(Error::Pole("Koornwinder coefficient".into()));
        }
        Ok(num / den)
    }

    /// `𝒟 f = Σ 𝒜_i^+(T_i − 1) f + Σ 𝒜_i^−(T_i^{-1} − 1) f`.
    pub fn apply(&self, f: &FnM, x: &[C]) -> Result<C> {
        Ok(self.terms(f, x)?.into_iter().sum())
    }

    /// The summands `𝒜_i^± f(T^{±1}x)` and `−𝒜_i^± f(x)` of `𝒟 f`.
    pub fn terms(&self, f: &FnM, x: &[C]) -> Result<Vec<C>> {
        let f0 = f(x)?;
        let xm = neg_all(x);
        let mut acc = Vec::with_capacity(4 * x.len());
        for i in 0..x.len() {
            for (a, d) in [(self.coeff_plus(x, i)?, self.shift), (self.coeff_plus(&xm, i)?, -self.shift)] {
                acc.push(a * f(&shifted(x, i, d))?);
                acc.push(-a * f0);
            }
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// Exact operators

/// `∏_s (1 − a_s z_i)` from the square-rational parameters.
fn aw_numerator(ep: &ExactParams, m: usize, i: usize, sign: i32) -> LaurentPoly {
    let mut acc = LaurentPoly::one(m);
    for a in [ep.a(), ep.b(), ep.c(), ep.d()] {
        let mut f = LaurentPoly::one(m);
        let mut e = vec![0; m];
        e[i] = 2 * sign;
        f.add_term(e, -a);
        acc = &acc * &f;
    }
    acc
}

fn unit_vec(m: usize, pairs: &[(usize, i32)]) -> Vec<i32> {
    let mut v = vec![0; m];
    for &(i, k) in pairs {
        v[i] += k;
    }
    v
}

/// Binomial factors of `∏_i(1−z_i²) ∏_{i<j}(1−z_iz_j)(1−z_i/z_j)`.
fn weyl_denominator(m: usize) -> Vec<Binomial> {
    let mut out = Vec::new();
    for i in 0..m {
        out.push(Binomial { c: Q::one(), v: unit_vec(m, &[(i, 4)]) });
    }
    for i in 0..m {
        for j in i + 1..m {
            out.push(Binomial { c: Q::one(), v: unit_vec(m, &[(i, 2), (j, 2)]) });
            out.push(Binomial { c: Q::one(), v: unit_vec(m, &[(i, 2), (j, -2)]) });
        }
    }
    out
}

struct KoornCache {
    /// Numerator kernel for the `(1, +)` term over the Weyl denominator.
    kernel: LaurentPoly,
    /// For each `(i, ε)`: signed permutation and the unit `u` with `w(D) = u·D`.
    images: Vec<(Vec<usize>, Vec<i32>, Vec<i32>, Q)>,
}

fn koorn_cache(ep: &ExactParams, m: usize) -> Result<Arc<KoornCache>> {
    type Key = (ExactParams, usize);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<KoornCache>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (ep.clone(), m);
    if let Some(c) = cache.lock().expect("cache lock").get(&key) {
        return Ok(c.clone());
    }
    let t = ep.t();
    let mut kernel = aw_numerator(ep, m, 0, 1);
    for j in 1..m {
        let mut f = LaurentPoly::one(m);
        f.add_term(unit_vec(m, &[(j, 4)]), -Q::one());
        kernel = &kernel * &f;
        let mut g = LaurentPoly::one(m);
        g.add_term(unit_vec(m, &[(0, 2), (j, 2)]), -t.clone());
        let mut h = LaurentPoly::one(m);
        h.add_term(unit_vec(m, &[(0, 2), (j, -2)]), -t.clone());
        kernel = &(&kernel * &g) * &h;
        for k in j + 1..m {
            kernel = &kernel * &binomial_poly(m, &Binomial { c: Q::one(), v: unit_vec(m, &[(j, 2), (k, 2)]) });
            kernel = &kernel * &binomial_poly(m, &Binomial { c: Q::one(), v: unit_vec(m, &[(j, 2), (k, -2)]) });
        }
    }
    let norm = ep.alpha() * qpow(&t, m as i64 - 1);
    kernel = kernel.scale(&norm.recip());

    let mut dpoly = LaurentPoly::one(m);
    for b in weyl_denominator(m) {
        dpoly = &dpoly * &binomial_poly(m, &b);
    }
    let (dlast, dcoef) = dpoly.terms().last().map(|(e, c)| (e.clone(), c.clone())).expect("nonzero");
    let mut images = Vec::new();
    for i in 0..m {
        for sign in [1, -1] {
            let mut perm: Vec<usize> = (0..m).collect();
            let mut signs = vec![1; m];
            perm.swap(0, i);
            signs[0] = sign;
            let wd = dpoly.signed_permute(&perm, &signs);
            let (wl, wc) = wd.terms().last().map(|(e, c)| (e.clone(), c.clone())).expect("nonzero");
            let uexp: Vec<i32> = wl.iter().zip(&dlast).map(|(a, b)| a - b).collect();
            let ucoef = wc / &dcoef;
            if dpoly.mul_monomial(&uexp, &ucoef) != wd {
                return Err(Error::InexactDivision("Weyl denominator is not W-semi-invariant".into()));
            }
            images.push((perm, signs, uexp, ucoef));
        }
    }
    let c = Arc::new(KoornCache { kernel, images });
    cache.lock().expect("cache lock").insert(key, c.clone());
    Ok(c)
}

/// Exact `𝒟_z f` for the Koornwinder operator in `m` variables.
///
/// W-invariant input goes through a symmetrized numerator over the Weyl
/// denominator; anything else is summed term by term over the full common
/// denominator, and a non-polynomial result is reported as
/// [`Error::InexactDivision`].
pub fn apply_koorn_mult(ep: &ExactParams, f: &LaurentPoly, m: usize) -> Result<LaurentPoly> {
    if f.nvars() != m {
        return Err(Error::Dimension(format!("polynomial in {} variables, operator in {m}", f.nvars())));
    }
    if m == 0 {
        return Ok(LaurentPoly::zero(0));
    }
    if f.is_w_invariant() {
        if let Ok(r) = koorn_symmetric(ep, f, m) {
            return Ok(r);
        }
    }
    koorn_general(ep, f, m)
}

fn koorn_symmetric(ep: &ExactParams, f: &LaurentPoly, m: usize) -> Result<LaurentPoly> {
    let cache = koorn_cache(ep, m)?;
    let diff = &f.scale_var(0, &ep.sq) - f;
    let g = diff.div_binomial(&ep.q(), &unit_vec(m, &[(0, 4)]))?;
    let n1 = &cache.kernel * &g;
    let mut total = LaurentPoly::zero(m);
    for (perm, signs, uexp, ucoef) in &cache.images {
        let img = n1.signed_permute(perm, signs);
        let inv: Vec<i32> = uexp.iter().map(|k| -k).collect();
        total = &total + &img.mul_monomial(&inv, &ucoef.recip());
    }
    for b in weyl_denominator(m) {
        total = total.div_binomial(&b.c, &b.v)?;
    }
    Ok(total)
}

fn koorn_general(ep: &ExactParams, f: &LaurentPoly, m: usize) -> Result<LaurentPoly> {
    let t = ep.t();
    let q = ep.q();
    let norm = (ep.alpha() * qpow(&t, m as i64 - 1)).recip();
    let mut terms = Vec::new();
    for i in 0..m {
        for sign in [1i32, -1] {
            let shifted = if sign == 1 { f.scale_var(i, &ep.sq) } else { f.scale_var(i, &ep.sq.recip()) };
            let mut num = &aw_numerator(ep, m, i, sign) * &(&shifted - f);
            let mut den = vec![
                Binomial { c: Q::one(), v: unit_vec(m, &[(i, 4 * sign)]) },
                Binomial { c: q.clone(), v: unit_vec(m, &[(i, 4 * sign)]) },
            ];
            for j in 0..m {
                if j == i {
                    continue;
                }
                for sj in [2, -2] {
                    let v = unit_vec(m, &[(i, 2 * sign), (j, sj)]);
                    num = &num * &binomial_poly(m, &Binomial { c: t.clone(), v: v.clone() });
                    den.push(Binomial { c: Q::one(), v });
                }
            }
            terms.push(Fraction { num: num.scale(&norm), den });
        }
    }
    sum_fractions(m, terms)
}

/// `T_{q,z_i}` for rational `q` on integral exponents.
fn q_shift_integral(f: &LaurentPoly, i: usize, qv: &Q) -> Result<LaurentPoly> {
    let mut out = LaurentPoly::zero(f.nvars());
    for (e, c) in f.terms() {
        if e[i] % 2 != 0 {
            return Err(Error::Param("half-integer exponent under a rational q-shift".into()));
        }
        out.add_term(e.clone(), c * qpow(qv, i64::from(e[i] / 2)));
    }
    Ok(out)
}

/// Exact Macdonald operator
/// `𝒟_r = t^{r(r−1)/2} Σ_{|I|=r} ∏_{i∈I, j∉I} (t z_i − z_j)/(z_i − z_j) T_{q,I}`.
pub fn apply_macdonald_mult(qv: &Q, tv: &Q, r: usize, f: &LaurentPoly, m: usize) -> Result<LaurentPoly> {
    if f.nvars() != m {
        return Err(Error::Dimension(format!("polynomial in {} variables, operator in {m}", f.nvars())));
    }
    if r == 0 || r > m {
        return Err(Error::Param(format!("order r = {r} outside 1..={m}")));
    }
    let mut terms = Vec::new();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != r {
            continue;
        }
        let mut num = f.clone();
        for i in 0..m {
            if mask & (1 << i) != 0 {
                num = q_shift_integral(&num, i, qv)?;
            }
        }
        let mut den = Vec::new();
        for i in (0..m).filter(|i| mask & (1 << i) != 0) {
            for j in (0..m).filter(|j| mask & (1 << j) == 0) {
                // (t z_i − z_j)/(z_i − z_j) = (t − z_j/z_i)/(1 − z_j/z_i)
                let v = unit_vec(m, &[(j, 2), (i, -2)]);
                let mut g = LaurentPoly::constant(m, tv.clone());
                g.add_term(v.clone(), -Q::one());
                num = &num * &g;
                den.push(Binomial { c: Q::one(), v });
            }
        }
        terms.push(Fraction { num, den });
    }
    let scale = qpow(tv, (r * (r - 1) / 2) as i64);
    Ok(sum_fractions(m, terms)?.scale(&scale))
}

/// Eigenvalue of `𝒟_r` on `P_λ`: `e_r(q^{λ_1}t^{m−1}, …, q^{λ_m})`.
pub fn macdonald_eigenvalue(qv: &Q, tv: &Q, r: usize, lambda: &[u32], m: usize) -> Q {
    let xs: Vec<Q> = (0..m).map(|i| qpow(qv, i64::from(lambda.get(i).copied().unwrap_or(0))) * qpow(tv, (m - 1 - i) as i64)).collect();
    // e_r via the standard recurrence
    let mut el = vec![Q::zero(); r + 1];
    el[0] = Q::one();
    for x in &xs {
        for k in (1..=r).rev() {
            let add = &el[k - 1] * x;
            el[k] += add;
        }
    }
    el[r].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laurent::{orbit_sum, q, qi, sym_orbit_sum, Partition};
    use crate::sigma::Truncation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn fams() -> Vec<SigmaFamily> {
        vec![
            SigmaFamily::rational(),
            SigmaFamily::trigonometric(c(1.0, 0.0)).unwrap(),
            SigmaFamily::elliptic(c(1.0, 0.0), c(0.31, 0.2561), Truncation::default()).unwrap(),
        ]
    }

    fn pt(rng: &mut ChaCha8Rng, m: usize) -> Vec<C> {
        (0..m).map(|_| c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.25..0.25))).collect()
    }

    fn params_bc(fam: &SigmaFamily, rng: &mut ChaCha8Rng) -> ParamsBC {
        let mu = pt(rng, 2 * fam.rho);
        ParamsBC::new(fam.clone(), mu, c(0.23, 0.19), c(0.17, 0.11)).unwrap()
    }

    fn test_fn(x: &[C]) -> Result<C> {
        Ok(x.iter().enumerate().map(|(k, v)| (v * (k as f64 + 1.0)).sin() + 0.3 * v * v).sum::<C>() + 1.0)
    }

    #[test]
    fn type_a_basics() {
        let fam = SigmaFamily::trigonometric(c(1.0, 0.0)).unwrap();
        let p = ParamsA::new(fam.clone(), c(0.23, 0.19), c(0.17, 0.11)).unwrap();
        assert_eq!(coeff_a(&p, &[c(0.1, 0.0)], 0).unwrap(), c(1.0, 0.0));
        let p0 = ParamsA { kappa: c(0.0, 0.0), ..p.clone() };
        let x = [c(0.1, 0.05), c(-0.2, 0.1), c(0.33, -0.02)];
        assert!((coeff_a(&p0, &x, 1).unwrap() - 1.0).norm() < 1e-14);
        let one = |_: &[C]| -> Result<C> { Ok(c(1.0, 0.0)) };
        assert!((apply_a(&p, &one, &x[..1]).unwrap() - 1.0).norm() < 1e-14);
        // f ≡ 1: D(1) = [mκ]/[κ]
        let v = apply_a(&p, &one, &x).unwrap();
        let expect = fam.eval(3.0 * p.kappa).unwrap() / fam.eval(p.kappa).unwrap();
        assert!((v - expect).norm() < 1e-12);
        // brute force for m = 2
        let x2 = &x[..2];
        let a0 = fam.eval(x2[0] - x2[1] + p.kappa).unwrap() / fam.eval(x2[0] - x2[1]).unwrap();
        let a1 = fam.eval(x2[1] - x2[0] + p.kappa).unwrap() / fam.eval(x2[1] - x2[0]).unwrap();
        let brute = a0 * test_fn(&shifted(x2, 0, p.delta)).unwrap() + a1 * test_fn(&shifted(x2, 1, p.delta)).unwrap();
        assert!((apply_a(&p, &test_fn, x2).unwrap() - brute).norm() < 1e-14);
        assert!(ParamsA::new(fam, c(1.0, 0.0), c(0.1, 0.0)).is_err());
        assert!(matches!(coeff_a(&p, &[c(0.1, 0.0), c(0.1, 0.0)], 0), Err(Error::Pole(_))));
    }

    #[test]
    fn higher_order_type_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for fam in fams() {
            let p = ParamsA::new(fam.clone(), c(0.23, 0.19), c(0.17, 0.11)).unwrap();
            let x = pt(&mut rng, 3);
            let top = apply_a_higher(&p, 3, &test_fn, &x).unwrap();
            let all: Vec<C> = x.iter().map(|v| v + p.delta).collect();
            assert!((top - test_fn(&all).unwrap()).norm() < 1e-12);
            let r1 = apply_a_higher(&p, 1, &test_fn, &x).unwrap();
            assert!((r1 - apply_a(&p, &test_fn, &x).unwrap()).norm() < 1e-12);
            for (r, s) in [(1, 2), (1, 3), (2, 3)] {
                assert!(commutator_residual(&p, r, s, &test_fn, &x).unwrap() < 1e-9, "{:?}", fam.kind);
            }
            assert!(apply_a_higher(&p, 4, &test_fn, &x).is_err());
        }
    }

    #[test]
    fn bc_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for fam in fams() {
            let p = params_bc(&fam, &mut rng);
            for _ in 0..10 {
                let x = pt(&mut rng, 2);
                let xm = neg_all(&x);
                for i in 0..2 {
                    let a = coeff_bc(&p, &x, i, Sign::Minus).unwrap();
                    let b = coeff_bc(&p, &xm, i, Sign::Plus).unwrap();
                    assert!((a - b).norm() < 1e-14 * a.norm().max(1.0));
                }
                // D = E − E(1)
                let d = apply_d_bc(&p, &test_fn, &x).unwrap();
                let e2 = apply_e_bc(&p, &test_fn, &x).unwrap() - e_bc_one(&p, &x).unwrap() * test_fn(&x).unwrap();
                assert!((d - e2).norm() / d.norm().max(1.0) < 1e-12);
                let one = |_: &[C]| -> Result<C> { Ok(c(1.0, 0.0)) };
                assert!(apply_d_bc(&p, &one, &x).unwrap().norm() < 1e-14);
                // rewritten form
                let lhs = rewritten_prefactor(&fam).unwrap() * apply_e_bc(&p, &test_fn, &x).unwrap();
                let rhs = apply_e_bc_rewritten(&p, &test_fn, &x).unwrap();
                assert!((lhs - rhs).norm() / lhs.norm().max(1.0) < 1e-10, "{:?} {lhs} {rhs}", fam.kind);
                // sign symmetry
                let neg = p.with(p.mu.iter().map(|m| -m).collect(), p.delta, p.kappa);
                let flip = p.with(p.mu.clone(), -p.delta, -p.kappa);
                let a = apply_e_bc(&flip, &test_fn, &x).unwrap();
                let b = apply_e_bc(&neg, &test_fn, &x).unwrap();
                assert!((a - b).norm() / a.norm().max(1.0) < 1e-10, "{:?}", fam.kind);
            }
        }
    }

    #[test]
    fn m1_brute_force_and_constant() {
        let fam = SigmaFamily::trigonometric(c(1.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = params_bc(&fam, &mut rng);
        let x = [c(0.13, 0.07)];
        let br = |u: C| fam.eval(u).unwrap();
        let mut num = c(1.0, 0.0);
        for mu in &p.mu {
            num *= br(x[0] + mu);
        }
        let den = br(x[0] - 0.5) * br(x[0] + p.delta / 2.0 - 0.5) * br(x[0]) * br(x[0] + p.delta / 2.0);
        assert!((coeff_bc(&p, &x, 0, Sign::Plus).unwrap() - num / den).norm() < 1e-12);
        // m = 0: E reduces to C
        assert!((e_bc_one(&p, &[]).unwrap() - const_c(&p).unwrap()).norm() < 1e-15);
        // trigonometric E(1) = C + ([2mκ+c] − [c])/[κ]
        let x = pt(&mut rng, 2);
        let cc = p.c_const();
        let expect = const_c(&p).unwrap() + (br(4.0 * p.kappa + cc) - br(cc)) / br(p.kappa);
        let got = e_bc_one(&p, &x).unwrap();
        assert!((got - expect).norm() < 1e-10);
    }

    #[test]
    fn multiplicative_koornwinder_matches_additive() {
        // D_x = −𝒟_z with [u] = 2i sin(πu/ω₁) and a_s = e(μ_s/ω₁)
        let fam = SigmaFamily::trigonometric(c(1.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = params_bc(&fam, &mut rng);
        let km = KoornwinderMult { omega1: c(1.0, 0.0), mu: [p.mu[0], p.mu[1], p.mu[2], p.mu[3]], shift: p.delta, coupling: p.kappa };
        for m in 1..=3 {
            let x = pt(&mut rng, m);
            let a = apply_d_bc(&p, &test_fn, &x).unwrap();
            let b = km.apply(&test_fn, &x).unwrap();
            assert!((a + b).norm() / a.norm().max(1.0) < 1e-10, "{a} {b}");
        }
    }

    fn koorn_m1_oracle(ep: &ExactParams) -> Q {
        // coefficient of z in 𝒟(z + 1/z) for m = 1: αq + 1/(αq) − α − 1/α
        let al = ep.alpha();
        let aq = &al * ep.q();
        &aq + aq.recip() - &al - al.recip()
    }

    #[test]
    fn exact_koornwinder_basics() {
        let ep = ExactParams::default();
        for m in 1..=3 {
            assert!(apply_koorn_mult(&ep, &LaurentPoly::one(m), m).unwrap().is_zero());
        }
        let m1 = orbit_sum(&Partition::row(1), 1).unwrap();
        let r = apply_koorn_mult(&ep, &m1, 1).unwrap();
        assert_eq!(r.coeff(&[2]), koorn_m1_oracle(&ep));
        assert_eq!(r.coeff(&[2]), r.coeff(&[-2]));
        assert!(r.terms().all(|(e, _)| e[0].abs() <= 2));
        assert!(apply_koorn_mult(&ep, &m1, 2).is_err());
    }

    #[test]
    fn exact_koornwinder_paths_agree_and_triangular() {
        let ep = ExactParams::default();
        for m in 1..=2 {
            for mu in Partition::in_box(m, 2) {
                let f = orbit_sum(&mu, m).unwrap();
                let a = koorn_symmetric(&ep, &f, m).unwrap();
                let b = koorn_general(&ep, &f, m).unwrap();
                assert_eq!(a, b, "{mu}");
                assert!(a.is_w_invariant());
                for nu in a.orbit_coefficients().unwrap().keys() {
                    assert!(nu.dominance_leq(&mu), "{nu} not below {mu}");
                }
            }
        }
    }

    #[test]
    fn exact_koornwinder_matches_numeric() {
        // evaluate both at a real point via a_s = e(μ_s/ω₁) with ω₁ = −i·ln-scale
        // so that multiplicative values are the exact rationals.
        let ep = ExactParams::default();
        let m = 2;
        let f = orbit_sum(&"2,1".parse().unwrap(), m).unwrap();
        let g = apply_koorn_mult(&ep, &f, m).unwrap();
        // additive coordinate u with e(u/ω₁) = s²: choose ω₁ = 2πi, u = ln(s²)
        let w1 = c(0.0, 2.0 * std::f64::consts::PI);
        let add = |s: &Q| c((crate::laurent::q_to_f64(s)).powi(2).ln(), 0.0);
        let km = KoornwinderMult {
            omega1: w1,
            mu: [add(&ep.sa), add(&ep.sb), add(&ep.sc), add(&ep.sd)],
            shift: add(&ep.sq),
            coupling: add(&ep.st),
        };
        let x = [c(0.3, 0.0), c(-0.45, 0.0)];
        let fnum = |x: &[C]| -> Result<C> { f.eval_numeric(&x.iter().map(|v| (v / 2.0).exp()).collect::<Vec<_>>()) };
        let lhs = km.apply(&fnum, &x).unwrap();
        let rhs = g.eval_numeric(&x.iter().map(|v| (v / 2.0).exp()).collect::<Vec<_>>()).unwrap();
        assert!((lhs - rhs).norm() < 1e-9 * rhs.norm().max(1.0), "{lhs} {rhs}");
    }

    #[test]
    fn non_invariant_input_reports_inexact_division() {
        let ep = ExactParams::default();
        let f = LaurentPoly::var_pow(1, 0, 2);
        assert!(matches!(apply_koorn_mult(&ep, &f, 1), Err(Error::InexactDivision(_))));
    }

    #[test]
    fn exact_macdonald() {
        let (qv, tv) = (q(1, 3), q(2, 5));
        // m = 2, r = 1, f = 1 → 1 + t
        let one = LaurentPoly::one(2);
        let r = apply_macdonald_mult(&qv, &tv, 1, &one, 2).unwrap();
        assert_eq!(r, LaurentPoly::constant(2, qi(1) + &tv));
        assert_eq!(macdonald_eigenvalue(&qv, &tv, 1, &[], 2), qi(1) + &tv);
        // m_(1) = P_(1), eigenvalue q t + 1 for m = 2
        let m1 = sym_orbit_sum(&Partition::row(1), 2).unwrap();
        let d = apply_macdonald_mult(&qv, &tv, 1, &m1, 2).unwrap();
        assert_eq!(d, m1.scale(&(&qv * &tv + qi(1))));
        assert_eq!(macdonald_eigenvalue(&qv, &tv, 1, &[1], 2), &qv * &tv + qi(1));
        // commutativity on m_(2,1)
        let f = sym_orbit_sum(&"2,1".parse().unwrap(), 2).unwrap();
        let a = apply_macdonald_mult(&qv, &tv, 1, &apply_macdonald_mult(&qv, &tv, 2, &f, 2).unwrap(), 2).unwrap();
        let b = apply_macdonald_mult(&qv, &tv, 2, &apply_macdonald_mult(&qv, &tv, 1, &f, 2).unwrap(), 2).unwrap();
        assert_eq!(a, b);
        // 𝒟₂ for m = 2 is t·T_{q,z1}T_{q,z2}
        assert_eq!(apply_macdonald_mult(&qv, &tv, 2, &f, 2).unwrap(), f.scale(&(&tv * qpow(&qv, 3))));
        // triangular on monomial symmetric functions of fixed degree
        let m2 = sym_orbit_sum(&Partition::row(2), 2).unwrap();
        let d2 = apply_macdonald_mult(&qv, &tv, 1, &m2, 2).unwrap();
        let m11 = sym_orbit_sum(&"1,1".parse().unwrap(), 2).unwrap();
        let c2 = d2.coeff(&[4, 0]);
        let c11 = d2.coeff(&[2, 2]);
        assert_eq!(d2, &m2.scale(&c2) + &m11.scale(&c11));
        assert_eq!(c2, macdonald_eigenvalue(&qv, &tv, 1, &[2], 2));
    }
}
