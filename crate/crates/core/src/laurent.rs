//! Exact multivariate Laurent polynomials over the rationals on the doubled
//! exponent lattice, hyperoctahedral orbit sums, partitions, and the
//! square-rational Askey–Wilson parameter bundle.
//!
//! A stored exponent `e` stands for `z^{e/2}`; every constant that needs a
//! square root is carried by that root (`x = s²`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigma::C;

/// Exact rational scalar.
pub type Q = BigRational;

/// `n/d` as an exact rational.
pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// The integer `n` as an exact rational.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// `x^e` for any integer `e` (`x ≠ 0` when `e < 0`).
pub fn qpow(x: &Q, e: i64) -> Q {
    let mag = e.unsigned_abs();
    let n = num_traits::pow::pow(x.numer().clone(), mag as usize);
    let d = num_traits::pow::pow(x.denom().clone(), mag as usize);
    if e >= 0 {
        Q::new(n, d)
    } else {
        Q::new(d, n)
    }
}

/// Parse `"n"` or `"n/d"`.
pub fn parse_q(s: &str) -> Result<Q> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| Error::Param(format!("bad rational '{s}'")))?;
    let d: BigInt = d.parse().map_err(|_| Error::Param(format!("bad rational '{s}'")))?;
    if d.is_zero() {
        return Err(Error::Param(format!("zero denominator in '{s}'")));
    }
    Ok(Q::new(n, d))
}

/// `⟨x⟩ = x^{1/2} − x^{-1/2}` for `x = s²`, given the root `s`.
pub fn bracket(s: &Q) -> Q {
    s - s.recip()
}

/// `⟨x⟩_{t,l} = ∏_{k<l} ⟨t^k x⟩` from the roots `s = √x`, `st = √t`.
pub fn bracket_factorial(s: &Q, st: &Q, l: usize) -> Q {
    let mut acc = Q::one();
    let mut r = s.clone();
    for _ in 0..l {
        acc *= bracket(&r);
        r *= st;
    }
    acc
}

/// `(x;t)_l` as an exact rational.
pub fn poch(x: &Q, t: &Q, l: usize) -> Q {
    let mut acc = Q::one();
    let mut w = x.clone();
    for _ in 0..l {
        acc *= Q::one() - &w;
        w *= t;
    }
    acc
}

/// Exact Laurent polynomial in `nvars` variables on the doubled lattice.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LaurentPoly {
    nvars: usize,
    terms: BTreeMap<Vec<i32>, Q>,
}

impl fmt::Debug for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    k if k % 2 == 0 => write!(f, "*z{}^{}", i + 1, k / 2)?,
                    k => write!(f, "*z{}^({}/2)", i + 1, k)?,
                }
            }
        }
        Ok(())
    }
}

impl LaurentPoly {
    pub fn zero(nvars: usize) -> Self {
        LaurentPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Q::one())
    }

    /// `c·z^{e/2}` with `e` on the doubled lattice.
    pub fn monomial(nvars: usize, exp: Vec<i32>, c: Q) -> Result<Self> {
        if exp.len() != nvars {
            return Err(Error::Dimension(format!("exponent of length {} for {} variables", exp.len(), nvars)));
        }
        let mut p = Self::zero(nvars);
        p.add_term(exp, c);
        Ok(p)
    }

    /// `z_i^{k}` for an integer power `k`.
    pub fn var_pow(nvars: usize, i: usize, k: i32) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 2 * k;
        let mut p = Self::zero(nvars);
        p.add_term(e, Q::one());
        p
    }

    /// `z_i + z_i^{-1} − (w + w^{-1})` with `w = s²`.
    pub fn bracket_var(nvars: usize, i: usize, s: &Q) -> Self {
        let w = s * s;
        let mut p = Self::var_pow(nvars, i, 1) + Self::var_pow(nvars, i, -1);
        p.add_term(vec![0; nvars], -(&w + w.recip()));
        p
    }

    /// `[z_i;a]_{q,l} = ∏_{k<l}[z_i; q^k a]` from roots `sa`, `sq`.
    pub fn bracket_var_factorial(nvars: usize, i: usize, sa: &Q, sq: &Q, l: usize) -> Self {
        let mut acc = Self::one(nvars);
        let mut r = sa.clone();
        for _ in 0..l {
            acc = &acc * &Self::bracket_var(nvars, i, &r);
            r *= sq;
        }
        acc
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i32>, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exp: &[i32]) -> Q {
        self.terms.get(exp).cloned().unwrap_or_else(Q::zero)
    }

    /// Add `c·z^{exp/2}` in place, keeping the map free of zeros.
    pub fn add_term(&mut self, exp: Vec<i32>, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exp) {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    fn check_vars(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::Dimension(format!("{} vs {} variables", self.nvars, other.nvars)));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&-other)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let mut acc: HashMap<Vec<i32>, Q> = HashMap::with_capacity(self.len() * other.len());
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<i32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                let c = c1 * c2;
                match acc.get_mut(&e) {
                    Some(v) => *v += c,
                    None => {
                        acc.insert(e, c);
                    }
                }
            }
        }
        let terms = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        Ok(LaurentPoly { nvars: self.nvars, terms })
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        LaurentPoly { nvars: self.nvars, terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect() }
    }

    /// Multiply by `c·z^{exp/2}`.
    pub fn mul_monomial(&self, exp: &[i32], c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        let terms = self.terms.iter().map(|(e, v)| (e.iter().zip(exp).map(|(a, b)| a + b).collect(), v * c)).collect();
        LaurentPoly { nvars: self.nvars, terms }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Substitute `z_i ↦ s²·z_i^{sign}` (`sign = ±1`), given the root `s`.
    pub fn substitute(&self, i: usize, s: &Q, sign: i32) -> Result<Self> {
        if i >= self.nvars {
            return Err(Error::Dimension(format!("variable {i} out of range")));
        }
        if s.is_zero() {
            return Err(Error::Param("substitution by zero".into()));
        }
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e[i];
            let mut ne = e.clone();
            ne[i] = sign * k;
            out.add_term(ne, c * qpow(s, i64::from(k)));
        }
        Ok(out)
    }

    /// `z_i ↦ s²·z_i` applied as a diagonal scaling.
    pub fn scale_var(&self, i: usize, s: &Q) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c * qpow(s, i64::from(e[i])))).collect();
        LaurentPoly { nvars: self.nvars, terms }
    }

    /// Apply a signed permutation: variable `k` is replaced by `z_{perm[k]}^{signs[k]}`.
    pub fn signed_permute(&self, perm: &[usize], signs: &[i32]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut ne = vec![0; self.nvars];
                for k in 0..self.nvars {
                    ne[perm[k]] = signs[k] * e[k];
                }
                (ne, c.clone())
            })
            .collect();
        LaurentPoly { nvars: self.nvars, terms }
    }

    /// Exponent map: variables of `self` go to positions `map` in an `nvars`-variable ring.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Result<Self> {
        if map.len() != self.nvars || map.iter().any(|&k| k >= nvars) {
            return Err(Error::Dimension("bad embedding map".into()));
        }
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut ne = vec![0; nvars];
                for (k, &t) in map.iter().enumerate() {
                    ne[t] += e[k];
                }
                (ne, c.clone())
            })
            .collect();
        Ok(LaurentPoly { nvars, terms })
    }

    /// Invariance under permutations of the given variables and inversion of each.
    pub fn is_invariant_on(&self, vars: &[usize]) -> bool {
        let id: Vec<usize> = (0..self.nvars).collect();
        let plus = vec![1; self.nvars];
        for w in vars.windows(2) {
            let mut perm = id.clone();
            perm.swap(w[0], w[1]);
            if self.signed_permute(&perm, &plus) != *self {
                return false;
            }
        }
        if let Some(&last) = vars.last() {
            let mut signs = plus.clone();
            signs[last] = -1;
            if self.signed_permute(&id, &signs) != *self {
                return false;
            }
        }
        true
    }

    /// Invariance under the hyperoctahedral group acting on all variables.
    pub fn is_w_invariant(&self) -> bool {
        let vars: Vec<usize> = (0..self.nvars).collect();
        self.is_invariant_on(&vars)
    }

    /// Invariance under permutations of all variables.
    pub fn is_symmetric(&self) -> bool {
        let id: Vec<usize> = (0..self.nvars).collect();
        let plus = vec![1; self.nvars];
        (0..self.nvars.saturating_sub(1)).all(|k| {
            let mut perm = id.clone();
            perm.swap(k, k + 1);
            self.signed_permute(&perm, &plus) == *self
        })
    }

    /// Exact division by `1 − c·z^{v/2}`; errors unless the remainder vanishes.
    pub fn div_binomial(&self, c: &Q, v: &[i32]) -> Result<Self> {
        let j = v.iter().position(|&x| x != 0).ok_or_else(|| Error::InexactDivision("division by a constant binomial".into()))?;
        let vj = v[j];
        let mut lines: HashMap<Vec<i32>, BTreeMap<i32, Q>> = HashMap::new();
        for (e, coef) in &self.terms {
            let k = e[j].div_euclid(vj);
            let base: Vec<i32> = e.iter().zip(v).map(|(a, b)| a - k * b).collect();
            lines.entry(base).or_default().insert(k, coef.clone());
        }
        let mut out = Self::zero(self.nvars);
        for (base, line) in lines {
            let (&kmin, _) = line.iter().next().unwrap();
            let (&kmax, _) = line.iter().next_back().unwrap();
            let mut carry = Q::zero();
            for k in kmin..=kmax {
                let fk = line.get(&k).cloned().unwrap_or_else(Q::zero);
                let gk = fk + c * &carry;
                if k == kmax {
                    if !gk.is_zero() {
                        return Err(Error::InexactDivision(format!("nonzero remainder dividing by 1 − ({c})·z^{v:?}/2")));
                    }
                } else {
                    if !gk.is_zero() {
                        out.add_term(base.iter().zip(v).map(|(a, b)| a + k * b).collect(), gk.clone());
                    }
                    carry = gk;
                }
            }
        }
        Ok(out)
    }

    /// Numeric value with `z_i = s_i²`, where the roots `s_i` fix the branch.
    pub fn eval_numeric(&self, roots: &[C]) -> Result<C> {
        if roots.len() != self.nvars {
            return Err(Error::Dimension(format!("{} roots for {} variables", roots.len(), self.nvars)));
        }
        if roots.iter().any(|s| s.norm() == 0.0) {
            return Err(Error::Domain("zero coordinate".into()));
        }
        let mut acc = C::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut t = C::new(q_to_f64(c), 0.0);
            for (s, &k) in roots.iter().zip(e) {
                t *= s.powi(k);
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Exact value with `z_i = s_i²`.
    pub fn eval_exact(&self, roots: &[Q]) -> Result<Q> {
        if roots.len() != self.nvars {
            return Err(Error::Dimension(format!("{} roots for {} variables", roots.len(), self.nvars)));
        }
        if roots.iter().any(Zero::is_zero) {
            return Err(Error::Domain("zero coordinate".into()));
        }
        let mut acc = Q::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (s, &k) in roots.iter().zip(e) {
                if k != 0 {
                    t *= qpow(s, i64::from(k));
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Terms of total (true) degree at most `cap`, counting only nonnegative exponents.
    pub fn truncate_degree(&self, cap: i32) -> Self {
        let terms = self.terms.iter().filter(|(e, _)| e.iter().sum::<i32>() <= 2 * cap).map(|(e, c)| (e.clone(), c.clone())).collect();
        LaurentPoly { nvars: self.nvars, terms }
    }

    /// Coefficients of `m_μ` in a W-invariant polynomial, read at dominant exponents.
    pub fn orbit_coefficients(&self) -> Result<BTreeMap<Partition, Q>> {
        let mut out = BTreeMap::new();
        for (e, c) in &self.terms {
            if e.iter().all(|&k| k >= 0) && e.windows(2).all(|w| w[0] >= w[1]) {
                if e.iter().any(|&k| k % 2 != 0) {
                    return Err(Error::Domain("half-integer exponent in orbit expansion".into()));
                }
                out.insert(Partition::new(e.iter().map(|&k| (k / 2) as u32).collect())?, c.clone());
            }
        }
        Ok(out)
    }

    /// Polynomial JSON: `{vars, lattice: "half", terms: [{exp, num, den}]}`.
    pub fn to_json(&self) -> PolyJson {
        PolyJson {
            vars: self.nvars,
            lattice: "half".into(),
            terms: self
                .terms
                .iter()
                .map(|(e, c)| TermJson { exp: e.clone(), num: c.numer().to_string(), den: c.denom().to_string() })
                .collect(),
        }
    }

    pub fn from_json(j: &PolyJson) -> Result<Self> {
        if j.lattice != "half" {
            return Err(Error::Param(format!("unsupported lattice '{}'", j.lattice)));
        }
        let mut p = Self::zero(j.vars);
        for t in &j.terms {
            if t.exp.len() != j.vars {
                return Err(Error::Dimension("term exponent length".into()));
            }
            let c = parse_q(&format!("{}/{}", t.num, t.den))?;
            p.add_term(t.exp.clone(), c);
        }
        Ok(p)
    }
}

/// Serialized polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyJson {
    pub vars: usize,
    pub lattice: String,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermJson {
    pub exp: Vec<i32>,
    pub num: String,
    pub den: String,
}

/// Lossy conversion used only for numeric evaluation.
pub fn q_to_f64(x: &Q) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or_else(|| {
        let n = x.numer().to_f64().unwrap_or(f64::NAN);
        let d = x.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

macro_rules! binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl $tr<&LaurentPoly> for &LaurentPoly {
            type Output = LaurentPoly;
            fn $m(self, rhs: &LaurentPoly) -> LaurentPoly {
                self.$f(rhs).expect("variable count mismatch")
            }
        }
        impl $tr<LaurentPoly> for LaurentPoly {
            type Output = LaurentPoly;
            fn $m(self, rhs: LaurentPoly) -> LaurentPoly {
                (&self).$f(&rhs).expect("variable count mismatch")
            }
        }
    };
}
binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Neg for &LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        LaurentPoly { nvars: self.nvars, terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect() }
    }
}

impl Neg for LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        -&self
    }
}

/// A binomial `1 − c·z^{v/2}` used as an exact denominator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Binomial {
    pub c: Q,
    pub v: Vec<i32>,
}

/// A Laurent polynomial over a product of binomials.
#[derive(Debug, Clone)]
pub struct Fraction {
    pub num: LaurentPoly,
    pub den: Vec<Binomial>,
}

impl Fraction {
    /// Rewrite every binomial so its first nonzero exponent is positive,
    /// moving the monomial `−c·z^{v/2}` into the numerator.
    fn canonical(self) -> Fraction {
        let mut num = self.num;
        let mut den = Vec::with_capacity(self.den.len());
        for b in self.den {
            let lead = b.v.iter().copied().find(|&x| x != 0).unwrap_or(0);
            if lead < 0 {
                // 1 − c z^v = −c z^v (1 − c^{-1} z^{-v})
                let neg: Vec<i32> = b.v.iter().map(|x| -x).collect();
                num = num.mul_monomial(&neg, &-b.c.recip());
                den.push(Binomial { c: b.c.recip(), v: neg });
            } else {
                den.push(b);
            }
        }
        Fraction { num, den }
    }
}

/// Sum of fractions, divided out exactly over the least common denominator.
pub fn sum_fractions(nvars: usize, terms: Vec<Fraction>) -> Result<LaurentPoly> {
    let terms: Vec<Fraction> = terms.into_iter().map(Fraction::canonical).collect();
    let mut lcm: BTreeMap<Binomial, usize> = BTreeMap::new();
    for t in &terms {
        let mut here: BTreeMap<&Binomial, usize> = BTreeMap::new();
        for b in &t.den {
            *here.entry(b).or_default() += 1;
        }
        for (b, k) in here {
            let e = lcm.entry(b.clone()).or_default();
            *e = (*e).max(k);
        }
    }
    let mut total = LaurentPoly::zero(nvars);
    for t in terms {
        let mut have: BTreeMap<&Binomial, usize> = BTreeMap::new();
        for b in &t.den {
            *have.entry(b).or_default() += 1;
        }
        let mut num = t.num.clone();
        for (b, k) in &lcm {
            let missing = k - have.get(b).copied().unwrap_or(0);
            for _ in 0..missing {
                num = &num * &binomial_poly(nvars, b);
            }
        }
        total = &total + &num;
    }
    for (b, k) in &lcm {
        for _ in 0..*k {
            total = total.div_binomial(&b.c, &b.v)?;
        }
    }
    Ok(total)
}

/// `1 − c·z^{v/2}` as a polynomial.
pub fn binomial_poly(nvars: usize, b: &Binomial) -> LaurentPoly {
    let mut p = LaurentPoly::one(nvars);
    p.add_term(b.v.clone(), -b.c.clone());
    p
}

/// Weakly decreasing list of positive integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition(Vec<u32>);

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Vec<u32> {
        p.0
    }
}

impl Partition {
    /// Validates weak decrease and trims trailing zeros.
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Param(format!("{parts:?} is not weakly decreasing")));
        }
        while parts.last() == Some(&0) {
            parts.pop();
        }
        Ok(Partition(parts))
    }

    pub fn empty() -> Self {
        Partition(Vec::new())
    }

    /// The column `(1^r)`.
    pub fn column(r: usize) -> Self {
        Partition(vec![1; r])
    }

    /// The row `(r)`.
    pub fn row(r: u32) -> Self {
        Partition::new(vec![r]).expect("single part")
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    /// `λ_i` with zero padding.
    pub fn part(&self, i: usize) -> u32 {
        self.0.get(i).copied().unwrap_or(0)
    }

    pub fn size(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn length(&self) -> usize {
        self.0.len()
    }

    pub fn conjugate(&self) -> Self {
        let top = self.part(0);
        Partition((1..=top).map(|k| self.0.iter().filter(|&&p| p >= k).count() as u32).collect())
    }

    /// `μ ⊆ λ`: `μ_i ≤ λ_i` for every `i`.
    pub fn contained_in(&self, lambda: &Partition) -> bool {
        self.length() <= lambda.length() && self.0.iter().enumerate().all(|(i, &p)| p <= lambda.part(i))
    }

    /// BC dominance: partial sums bounded and `|μ| ≤ |λ|`.
    pub fn dominance_leq(&self, lambda: &Partition) -> bool {
        let n = self.length().max(lambda.length());
        let (mut a, mut b) = (0u32, 0u32);
        for i in 0..n {
            a += self.part(i);
            b += lambda.part(i);
            if a > b {
                return false;
            }
        }
        self.size() <= lambda.size()
    }

    /// Padded to `m` entries; errors if the length exceeds `m`.
    pub fn padded(&self, m: usize) -> Result<Vec<u32>> {
        if self.length() > m {
            return Err(Error::Dimension(format!("partition {self} has more than {m} parts")));
        }
        Ok((0..m).map(|i| self.part(i)).collect())
    }

    /// Every partition with at most `rows` parts, each at most `cols`.
    pub fn in_box(rows: usize, cols: u32) -> Vec<Partition> {
        fn rec(rows: usize, cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Partition>) {
            out.push(Partition::new(cur.clone()).expect("decreasing"));
            if cur.len() == rows {
                return;
            }
            for p in 1..=cap {
                cur.push(p);
                rec(rows, p, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(rows, cols, &mut Vec::new(), &mut out);
        out.sort();
        out
    }

    /// All `μ ≤ λ` with at most `m` parts, ordered so larger elements come first
    /// (by size, then lexicographically), a linear extension of dominance.
    pub fn below(&self, m: usize) -> Vec<Partition> {
        let mut v: Vec<Partition> = Partition::in_box(m, self.part(0)).into_iter().filter(|mu| mu.dominance_leq(self)).collect();
        v.sort_by(|a, b| (b.size(), &b.0).cmp(&(a.size(), &a.0)));
        v
    }

    /// All partitions of `k` with at most `m` parts.
    pub fn of_size(k: u32, m: usize) -> Vec<Partition> {
        Partition::in_box(m, k).into_iter().filter(|p| p.size() == k).collect()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        let s: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&s.join(","))
    }
}

impl FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Partition::empty());
        }
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<u32>().map_err(|_| Error::Param(format!("bad partition '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Partition::new(parts)
    }
}

/// `m_μ = Σ_{ν ∈ W·μ} z^ν` over signed permutations, in `m` variables.
pub fn orbit_sum(mu: &Partition, m: usize) -> Result<LaurentPoly> {
    let base = mu.padded(m)?;
    let mut seen: BTreeSet<Vec<i32>> = BTreeSet::new();
    for perm in distinct_permutations(&base) {
        let nz: Vec<usize> = (0..m).filter(|&i| perm[i] != 0).collect();
        for mask in 0u32..(1 << nz.len()) {
            let mut e: Vec<i32> = perm.iter().map(|&p| 2 * p as i32).collect();
            for (b, &i) in nz.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    e[i] = -e[i];
                }
            }
            seen.insert(e);
        }
    }
    let mut p = LaurentPoly::zero(m);
    for e in seen {
        p.add_term(e, Q::one());
    }
    Ok(p)
}

/// Monomial symmetric polynomial: sum of `z^ν` over distinct permutations of `μ`.
pub fn sym_orbit_sum(mu: &Partition, m: usize) -> Result<LaurentPoly> {
    let base = mu.padded(m)?;
    let mut p = LaurentPoly::zero(m);
    for perm in distinct_permutations(&base) {
        p.add_term(perm.iter().map(|&x| 2 * x as i32).collect(), Q::one());
    }
    Ok(p)
}

fn distinct_permutations(base: &[u32]) -> Vec<Vec<u32>> {
    let mut v = base.to_vec();
    v.sort();
    let mut out = vec![v.clone()];
    // next lexicographic permutation
    loop {
        let n = v.len();
        if n < 2 {
            break;
        }
        let mut i = n - 1;
        while i > 0 && v[i - 1] >= v[i] {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let mut j = n - 1;
        while v[j] <= v[i - 1] {
            j -= 1;
        }
        v.swap(i - 1, j);
        v[i..].reverse();
        out.push(v.clone());
    }
    out
}

/// Size of the W-orbit of `μ` in `m` variables, by stabilizer counting.
pub fn orbit_size(mu: &Partition, m: usize) -> Result<u64> {
    let base = mu.padded(m)?;
    let fact = |k: u64| (1..=k).product::<u64>();
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for &p in &base {
        *counts.entry(p).or_default() += 1;
    }
    let mut stab = 1u64;
    for (&p, &k) in &counts {
        stab *= fact(k);
        if p == 0 {
            stab *= 1u64 << k;
        }
    }
    Ok(fact(m as u64) * (1u64 << m) / stab)
}

/// Askey–Wilson parameters `(a,b,c,d,q,t)` stored by their square roots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactParams {
    #[serde(with = "q_str")]
    pub sa: Q,
    #[serde(with = "q_str")]
    pub sb: Q,
    #[serde(with = "q_str")]
    pub sc: Q,
    #[serde(with = "q_str")]
    pub sd: Q,
    #[serde(with = "q_str")]
    pub sq: Q,
    #[serde(with = "q_str")]
    pub st: Q,
}

mod q_str {
    use super::{parse_q, Q};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams::new(q(2, 3), q(3, 5), q(5, 7), q(7, 11), q(1, 2), q(2, 5)).expect("nonzero")
    }
}

impl ExactParams {
    pub fn new(sa: Q, sb: Q, sc: Q, sd: Q, sq: Q, st: Q) -> Result<Self> {
        let p = ExactParams { sa, sb, sc, sd, sq, st };
        p.validate()?;
        Ok(p)
    }

    /// A second generic set, used where two independent checks are wanted.
    pub fn alternate() -> Self {
        ExactParams::new(q(3, 4), q(2, 7), q(5, 3), q(4, 9), q(2, 3), q(3, 7)).expect("nonzero")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if v.is_zero() {
                return Err(Error::Param(format!("square root {name} is zero")));
            }
        }
        if self.sq.abs() == Q::one() || self.st.abs() == Q::one() {
            return Err(Error::Param("q and t must differ from 1".into()));
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, &Q); 6] {
        [("sa", &self.sa), ("sb", &self.sb), ("sc", &self.sc), ("sd", &self.sd), ("sq", &self.sq), ("st", &self.st)]
    }

    pub fn a(&self) -> Q {
        &self.sa * &self.sa
    }
    pub fn b(&self) -> Q {
        &self.sb * &self.sb
    }
    pub fn c(&self) -> Q {
        &self.sc * &self.sc
    }
    pub fn d(&self) -> Q {
        &self.sd * &self.sd
    }
    pub fn q(&self) -> Q {
        &self.sq * &self.sq
    }
    pub fn t(&self) -> Q {
        &self.st * &self.st
    }

    /// `α = (abcd/q)^{1/2}`.
    pub fn alpha(&self) -> Q {
        &self.sa * &self.sb * &self.sc * &self.sd / &self.sq
    }

    /// The same parameters with `q` and `t` exchanged.
    pub fn swap_qt(&self) -> Self {
        ExactParams { sq: self.st.clone(), st: self.sq.clone(), ..self.clone() }
    }

    /// A nearby generic set: `√t` multiplied by `1 + 1/(97 + k)`.
    pub fn perturbed(&self, k: u32) -> Self {
        let f = Q::one() + qi(97 + i64::from(k)).recip();
        ExactParams { st: &self.st * f, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(i: usize, k: i32) -> LaurentPoly {
        LaurentPoly::var_pow(2, i, k)
    }

    fn small_poly() -> impl Strategy<Value = LaurentPoly> {
        prop::collection::vec(((-2i32..=2, -2i32..=2), -5i64..=5, 1i64..=4), 0..5).prop_map(|ts| {
            let mut p = LaurentPoly::zero(2);
            for ((a, b), n, d) in ts {
                p.add_term(vec![2 * a, b], q(n, d));
            }
            p
        })
    }

    proptest! {
        #[test]
        fn ring_laws(a in small_poly(), b in small_poly(), c in small_poly()) {
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert!((&a - &a).is_zero());
            prop_assert_eq!(&a * &LaurentPoly::one(2), a.clone());
        }

        #[test]
        fn binomial_division_inverts_multiplication(a in small_poly(), n in -3i64..=3, v0 in -2i32..=2, v1 in 1i32..=2) {
            let c = if n == 0 { qi(1) } else { q(n, 2) };
            let b = Binomial { c: c.clone(), v: vec![v0, v1] };
            let prod = &a * &binomial_poly(2, &b);
            prop_assert_eq!(prod.div_binomial(&c, &[v0, v1]).unwrap(), a);
        }

        #[test]
        fn json_round_trip(a in small_poly()) {
            let s = serde_json::to_string(&a.to_json()).unwrap();
            let back: PolyJson = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(LaurentPoly::from_json(&back).unwrap(), a);
        }

        #[test]
        fn integral_lattice_closed(a in small_poly(), b in small_poly()) {
            let integral = |p: &LaurentPoly| {
                let mut o = LaurentPoly::zero(2);
                for (e, c) in p.terms() {
                    if e.iter().all(|k| k % 2 == 0) {
                        o.add_term(e.clone(), c.clone());
                    }
                }
                o
            };
            let prod = &integral(&a) * &integral(&b);
            prop_assert!(prod.terms().all(|(e, _)| e.iter().all(|k| k % 2 == 0)));
        }
    }

    #[test]
    fn basic_arithmetic() {
        let p = &z(0, 1) + &z(0, -1);
        let sq = &p * &p;
        let expect = &(&z(0, 2) + &LaurentPoly::constant(2, qi(2))) + &z(0, -2);
        assert_eq!(sq, expect);
        assert!((&p + &(-&p)).is_zero());
        assert!(LaurentPoly::one(1).try_add(&LaurentPoly::one(2)).is_err());
        assert_eq!(format!("{}", LaurentPoly::zero(1)), "0");
    }

    #[test]
    fn substitution_and_scaling() {
        // z ↦ 4 z^{-1} on z + z^{1/2}
        let mut p = LaurentPoly::zero(1);
        p.add_term(vec![2], qi(1));
        p.add_term(vec![1], qi(1));
        let s = p.substitute(0, &qi(2), -1).unwrap();
        let mut e = LaurentPoly::zero(1);
        e.add_term(vec![-2], qi(4));
        e.add_term(vec![-1], qi(2));
        assert_eq!(s, e);
        assert_eq!(p.scale_var(0, &qi(2)), p.substitute(0, &qi(2), 1).unwrap());
    }

    #[test]
    fn inexact_division_is_reported() {
        let p = &z(0, 1) + &LaurentPoly::one(2);
        assert!(matches!(p.div_binomial(&qi(1), &[2, 0]), Err(Error::InexactDivision(_))));
        assert!(matches!(p.div_binomial(&qi(1), &[0, 0]), Err(Error::InexactDivision(_))));
    }

    #[test]
    fn fractions_sum() {
        // 1/(1−z) + 1/(1−z^{-1}) = 1
        let one = LaurentPoly::one(1);
        let f1 = Fraction { num: one.clone(), den: vec![Binomial { c: qi(1), v: vec![2] }] };
        let f2 = Fraction { num: one.clone(), den: vec![Binomial { c: qi(1), v: vec![-2] }] };
        assert_eq!(sum_fractions(1, vec![f1, f2]).unwrap(), one);
    }

    #[test]
    fn orbit_sums() {
        assert_eq!(orbit_sum(&Partition::empty(), 3).unwrap(), LaurentPoly::one(3));
        let m1 = orbit_sum(&Partition::row(1), 2).unwrap();
        assert_eq!(m1, &(&(&z(0, 1) + &z(0, -1)) + &z(1, 1)) + &z(1, -1));
        let m21 = orbit_sum(&"2,1".parse().unwrap(), 2).unwrap();
        let mut brute = LaurentPoly::zero(2);
        for (a, b) in [(2, 1), (1, 2)] {
            for sa in [1, -1] {
                for sb in [1, -1] {
                    brute.add_term(vec![2 * sa * a, 2 * sb * b], qi(1));
                }
            }
        }
        assert_eq!(m21, brute);
        assert_eq!(m21.len(), 8);
        for m in 1..=3 {
            for mu in Partition::in_box(m, 3) {
                let o = orbit_sum(&mu, m).unwrap();
                assert_eq!(o.len() as u64, orbit_size(&mu, m).unwrap());
                assert!(o.is_w_invariant());
            }
        }
        assert!(!z(0, 1).is_w_invariant());
        assert!(orbit_sum(&"1,1,1".parse().unwrap(), 2).is_err());
    }

    #[test]
    fn dominance_is_partial_order() {
        let all: Vec<Partition> = (0..=6).flat_map(|k| Partition::of_size(k, 6)).collect();
        let a: Partition = "1,1".parse().unwrap();
        let b = Partition::row(2);
        assert!(a.dominance_leq(&b));
        assert!(!b.dominance_leq(&a));
        for x in &all {
            assert!(x.dominance_leq(x));
            for y in &all {
                if x.dominance_leq(y) && y.dominance_leq(x) {
                    assert_eq!(x, y);
                }
                for w in &all {
                    if x.dominance_leq(y) && y.dominance_leq(w) {
                        assert!(x.dominance_leq(w));
                    }
                }
            }
        }
    }

    #[test]
    fn below_is_linear_extension() {
        let lam: Partition = "3,3,3".parse().unwrap();
        let v = lam.below(3);
        assert_eq!(v[0], lam);
        assert_eq!(v.len(), 20);
        for i in 0..v.len() {
            for j in 0..i {
                assert!(!v[j].dominance_leq(&v[i]) || v[j] == v[i]);
            }
        }
    }

    #[test]
    fn partition_ops() {
        let p: Partition = "3,1".parse().unwrap();
        assert_eq!(p.conjugate(), "2,1,1".parse().unwrap());
        assert_eq!(p.to_string(), "3,1");
        assert!("1,2".parse::<Partition>().is_err());
        assert_eq!("2,0,0".parse::<Partition>().unwrap(), Partition::row(2));
        assert!(Partition::row(1).contained_in(&p));
        assert_eq!(Partition::empty().to_string(), "0");
    }

    #[test]
    fn evaluation() {
        let p = &z(0, 1) + &z(0, -1);
        let v = p.eval_numeric(&[C::new(2f64.sqrt(), 0.0), C::new(1.0, 0.0)]).unwrap();
        assert!((v - C::new(2.5, 0.0)).norm() < 1e-14);
        assert_eq!(p.eval_exact(&[qi(2), qi(1)]).unwrap(), q(17, 4));
        assert!(p.eval_exact(&[qi(0), qi(1)]).is_err());
        let c = LaurentPoly::constant(2, q(3, 7));
        assert_eq!(c.eval_exact(&[qi(5), qi(3)]).unwrap(), q(3, 7));
    }

    #[test]
    fn bracket_factorial_conversion() {
        // ⟨a⟩_{t,l} = (−1)^l t^{−l(l−1)/4} a^{−l/2} (a;t)_l
        let ep = ExactParams::default();
        for l in 0..5usize {
            let lhs = bracket_factorial(&ep.sa, &ep.st, l);
            let sign = if l % 2 == 0 { qi(1) } else { qi(-1) };
            let rhs = sign * qpow(&ep.st, -((l * l.saturating_sub(1) / 2) as i64)) * qpow(&ep.sa, -(l as i64)) * poch(&ep.a(), &ep.t(), l);
            assert_eq!(lhs, rhs);
        }
        let b1 = LaurentPoly::bracket_var_factorial(1, 0, &ep.sa, &ep.sq, 1);
        assert_eq!(b1, LaurentPoly::bracket_var(1, 0, &ep.sa));
        assert_eq!(LaurentPoly::bracket_var_factorial(1, 0, &ep.sa, &ep.sq, 0), LaurentPoly::one(1));
    }

    #[test]
    fn params_serde() {
        let ep = ExactParams::default();
        let s = serde_json::to_string(&ep).unwrap();
        assert!(s.contains("\"2/3\""));
        let back: ExactParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ep);
        assert!(ExactParams::new(qi(0), qi(1), qi(1), qi(1), q(1, 2), q(1, 3)).is_err());
        assert_eq!(ep.alpha(), q(2 * 3 * 5 * 7 * 2, 3 * 5 * 7 * 11));
    }
}
