//! Exact rational functions in a ratio variable `u = x₂/x₁` with coefficients in
//! K[q, q⁻¹], homogeneous two-variable polynomials, and their expansions as
//! truncated series (q = e^ℏ expanded to the working ℏ-order).

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::scalar::{rat_int, CycScalar, Rat};
use crate::series::{HSeries, SeriesCtx, SeriesError};

/// Exact Laurent polynomial in q with cyclotomic coefficients.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LaurentQ {
    order: u32,
    terms: BTreeMap<i64, CycScalar>,
}

impl LaurentQ {
    pub fn zero(order: u32) -> Self {
        Self { order, terms: BTreeMap::new() }
    }

    pub fn one(order: u32) -> Self {
        Self::monomial(CycScalar::one(order), 0)
    }

    /// `c · q^n`.
    pub fn monomial(c: CycScalar, n: i64) -> Self {
        let order = c.order();
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(n, c);
        }
        Self { order, terms }
    }

    pub fn scalar(c: CycScalar) -> Self {
        Self::monomial(c, 0)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &CycScalar)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (k, v) in &other.terms {
            let e = terms.entry(*k).or_insert_with(|| CycScalar::zero(self.order));
            *e += v;
            if e.is_zero() {
                terms.remove(k);
            }
        }
        Self { order: self.order, terms }
    }

    pub fn neg(&self) -> Self {
        Self { order: self.order, terms: self.terms.iter().map(|(k, v)| (*k, -v)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.order);
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                out = out.add(&Self::monomial(x * y, a + b));
            }
        }
        out
    }

    pub fn scale(&self, c: &CycScalar) -> Self {
        let mut out = Self::zero(self.order);
        for (k, v) in &self.terms {
            out = out.add(&Self::monomial(v * c, *k));
        }
        out
    }

    /// Multiplication by q^n.
    pub fn shift(&self, n: i64) -> Self {
        Self { order: self.order, terms: self.terms.iter().map(|(k, v)| (k + n, v.clone())).collect() }
    }

    /// The value at q = 1 (the classical limit ℏ = 0).
    pub fn at_q_one(&self) -> CycScalar {
        self.terms.values().fold(CycScalar::zero(self.order), |acc, v| &acc + v)
    }

    /// Σ c_n e^{nℏ} truncated at the context ℏ-order.
    pub fn to_series(&self, ctx: SeriesCtx) -> HSeries {
        let mut acc = HSeries::zero(ctx);
        for (n, c) in &self.terms {
            acc = acc.add(&HSeries::q_int(ctx, *n).scale(c));
        }
        acc
    }
}

impl fmt::Debug for LaurentQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(k, v)| format!("({v})q^{k}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Polynomial in u with K[q, q⁻¹] coefficients; index = degree.
#[derive(Clone, PartialEq, Eq)]
pub struct UPoly {
    order: u32,
    c: Vec<LaurentQ>,
}

impl UPoly {
    pub fn new(order: u32, mut c: Vec<LaurentQ>) -> Self {
        while c.last().is_some_and(LaurentQ::is_zero) {
            c.pop();
        }
        Self { order, c }
    }

    pub fn zero(order: u32) -> Self {
        Self { order, c: Vec::new() }
    }

    pub fn constant(l: LaurentQ) -> Self {
        Self::new(l.order(), vec![l])
    }

    /// `l · u^d`.
    pub fn monomial(l: LaurentQ, d: usize) -> Self {
        let order = l.order();
        let mut c = vec![LaurentQ::zero(order); d];
        c.push(l);
        Self::new(order, c)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree (−1 for the zero polynomial).
    pub fn degree(&self) -> i64 {
        self.c.len() as i64 - 1
    }

    pub fn coeff(&self, j: usize) -> LaurentQ {
        self.c.get(j).cloned().unwrap_or_else(|| LaurentQ::zero(self.order))
    }

    pub fn coeffs(&self) -> &[LaurentQ] {
        &self.c
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.c.len().max(other.c.len());
        Self::new(self.order, (0..n).map(|j| self.coeff(j).add(&other.coeff(j))).collect())
    }

    pub fn neg(&self) -> Self {
        Self::new(self.order, self.c.iter().map(LaurentQ::neg).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero(self.order);
        }
        let mut c = vec![LaurentQ::zero(self.order); self.c.len() + other.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in other.c.iter().enumerate() {
                c[i + j] = c[i + j].add(&a.mul(b));
            }
        }
        Self::new(self.order, c)
    }

    pub fn scale(&self, l: &LaurentQ) -> Self {
        Self::new(self.order, self.c.iter().map(|a| a.mul(l)).collect())
    }

    /// u ↦ ζ q^a u.
    pub fn rescale(&self, zeta: &CycScalar, a: i64) -> Self {
        let c = self
            .c
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let z = zeta.pow(j as i64).expect("root of unity is invertible");
                l.scale(&z).shift(a * j as i64)
            })
            .collect();
        Self::new(self.order, c)
    }

    /// u^d · p(1/u) for d ≥ deg p.
    pub fn reversed(&self, d: usize) -> Self {
        let c = (0..=d).map(|j| self.coeff(d - j)).collect();
        Self::new(self.order, c)
    }

    /// Coefficientwise value at q = 1.
    pub fn at_q_one(&self) -> Vec<CycScalar> {
        self.c.iter().map(LaurentQ::at_q_one).collect()
    }
}

impl fmt::Debug for UPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.c.iter().enumerate().map(|(j, l)| format!("[{l:?}]u^{j}")).collect();
        write!(f, "{}", if parts.is_empty() { "0".to_string() } else { parts.join(" + ") })
    }
}

/// Direction of a formal expansion of a rational function of u.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Expansion {
    /// Nonnegative powers of u = x₂/x₁ (region |x₁| > |x₂|).
    Iota12,
    /// Nonnegative powers of 1/u (region |x₂| > |x₁|).
    Iota21,
}

/// Coefficients `u^n ↦ ℏ-series`, exact for every exponent in `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct UExpansion {
    pub lo: i64,
    pub hi: i64,
    pub coeffs: BTreeMap<i64, HSeries>,
}

impl UExpansion {
    pub fn coeff(&self, n: i64, ctx: SeriesCtx) -> Result<HSeries, SeriesError> {
        if n > self.hi || n < self.lo {
            return Err(SeriesError::Window { h: 0, x: n, hi: self.hi });
        }
        Ok(self.coeffs.get(&n).cloned().unwrap_or_else(|| HSeries::zero(ctx)))
    }
}

/// A rational function N(u)/D(u); equality is decided by cross-multiplication.
#[derive(Clone, PartialEq, Eq)]
pub struct RatExpr {
    pub num: UPoly,
    pub den: UPoly,
}

impl RatExpr {
    pub fn new(num: UPoly, den: UPoly) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Self { num, den }
    }

    pub fn one(order: u32) -> Self {
        Self::new(UPoly::constant(LaurentQ::one(order)), UPoly::constant(LaurentQ::one(order)))
    }

    pub fn order(&self) -> u32 {
        self.num.order()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn inv(&self) -> Self {
        Self::new(self.den.clone(), self.num.clone())
    }

    /// r(1/u), written again as a quotient of polynomials in u.
    pub fn subst_inv_u(&self) -> Self {
        let d = self.num.degree().max(self.den.degree()).max(0) as usize;
        Self::new(self.num.reversed(d), self.den.reversed(d))
    }

    /// r(ζ q^a u).
    pub fn rescale(&self, zeta: &CycScalar, a: i64) -> Self {
        Self::new(self.num.rescale(zeta, a), self.den.rescale(zeta, a))
    }

    /// Exact equality as rational functions.
    pub fn same_function(&self, other: &Self) -> bool {
        self.num.mul(&other.den) == other.num.mul(&self.den)
    }

    /// Expansion in nonnegative powers of u (Iota12) or of 1/u (Iota21), for
    /// exponents up to `n_max` in the expansion variable.
    pub fn expand(&self, dir: Expansion, ctx: SeriesCtx, n_max: i64) -> Result<UExpansion, SeriesError> {
        match dir {
            Expansion::Iota12 => expand_at_zero(&self.num, &self.den, ctx, n_max, 0),
            Expansion::Iota21 => {
                let shift = self.den.degree() - self.num.degree().max(0);
                // r(u) = v^{deg D − deg N} · rev(N)(v) / rev(D)(v) with v = 1/u.
                let n = self.num.reversed(self.num.degree().max(0) as usize);
                let dd = self.den.reversed(self.den.degree().max(0) as usize);
                let v = expand_at_zero(&n, &dd, ctx, n_max - shift, shift)?;
                let coeffs = v.coeffs.into_iter().map(|(k, s)| (-k, s)).collect();
                Ok(UExpansion { lo: -v.hi, hi: -v.lo, coeffs })
            }
        }
    }

    /// Substitutes u = ξ^k e^x (q = e^ℏ) and expands in K((x))[[ℏ]].
    pub fn subst_exp(&self, k: i64, ctx: SeriesCtx) -> Result<HSeries, SeriesError> {
        let xi_k = CycScalar::xi_pow(ctx.order, k);
        let eval = |p: &UPoly| -> Result<HSeries, SeriesError> {
            let mut acc = HSeries::zero(ctx);
            for (j, l) in p.coeffs().iter().enumerate() {
                if l.is_zero() {
                    continue;
                }
                let ejx = exp_jx(ctx, j as i64);
                let z = xi_k.pow(j as i64)?;
                acc = acc.add(&ejx.mul(&l.to_series(ctx)).scale(&z));
            }
            Ok(acc)
        };
        eval(&self.num)?.div(&eval(&self.den)?)
    }

    /// Numerator and denominator evaluated at u = 0.
    pub fn at_zero(&self) -> (LaurentQ, LaurentQ) {
        (self.num.coeff(0), self.den.coeff(0))
    }
}

impl fmt::Debug for RatExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}) / ({:?})", self.num, self.den)
    }
}

/// e^{jx} as an x-Taylor series to the context cap.
pub fn exp_jx(ctx: SeriesCtx, j: i64) -> HSeries {
    let mut coeffs = Vec::new();
    let mut term = Rat::from_integer(1.into());
    for m in 0..=ctx.x_cap.max(0) {
        if m > 0 {
            term = term * rat_int(j) / rat_int(m);
        }
        coeffs.push(CycScalar::from_rat(ctx.order, term.clone()));
    }
    HSeries::from_x_coeffs(ctx, 0, coeffs, ctx.x_cap)
}

/// Power-series division N/D in the variable at 0; the result is multiplied by
/// `var^offset` (offset shifts the reported exponents).
fn expand_at_zero(
    num: &UPoly,
    den: &UPoly,
    ctx: SeriesCtx,
    n_max: i64,
    offset: i64,
) -> Result<UExpansion, SeriesError> {
    let to_s = |l: &LaurentQ| l.to_series(ctx);
    let d0 = to_s(&den.coeff(0));
    let d0_inv = d0
        .inverse()
        .map_err(|_| SeriesError::Precondition("pole at the expansion point".into()))?;
    let mut out: Vec<HSeries> = Vec::new();
    let upto = n_max.max(-1);
    for n in 0..=upto {
        let mut acc = to_s(&num.coeff(n as usize));
        for i in 1..=n as usize {
            let di = den.coeff(i);
            if !di.is_zero() {
                acc = acc.sub(&to_s(&di).mul(&out[n as usize - i]));
            }
        }
        out.push(acc.mul(&d0_inv));
    }
    let coeffs = out
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_zero())
        .map(|(n, s)| (n as i64 + offset, s))
        .collect();
    Ok(UExpansion { lo: i64::MIN / 4, hi: upto + offset, coeffs })
}

/// Homogeneous polynomial Σ_j c_j x₁^{deg−j} x₂^j.
#[derive(Clone, PartialEq, Eq)]
pub struct Homog {
    pub deg: usize,
    pub poly: UPoly,
}

impl Homog {
    pub fn new(deg: usize, poly: UPoly) -> Self {
        assert!(poly.degree() <= deg as i64, "homogeneous degree too small");
        Self { deg, poly }
    }

    pub fn one(order: u32) -> Self {
        Self::new(0, UPoly::constant(LaurentQ::one(order)))
    }

    /// a·x₁ + b·x₂.
    pub fn linear(a: LaurentQ, b: LaurentQ) -> Self {
        let order = a.order();
        Self::new(1, UPoly::new(order, vec![a, b]))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(self.deg + other.deg, self.poly.mul(&other.poly))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.deg, other.deg, "adding homogeneous polynomials of different degrees");
        Self::new(self.deg, self.poly.add(&other.poly))
    }

    pub fn scale(&self, l: &LaurentQ) -> Self {
        Self::new(self.deg, self.poly.scale(l))
    }

    /// P(x₂, x₁).
    pub fn swap(&self) -> Self {
        Self::new(self.deg, self.poly.reversed(self.deg))
    }

    /// x₂ ↦ ζ q^a x₂.
    pub fn rescale_x2(&self, zeta: &CycScalar, a: i64) -> Self {
        Self::new(self.deg, self.poly.rescale(zeta, a))
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    /// Monomials `(deg_x1, deg_x2, coefficient)`.
    pub fn monomials(&self) -> Vec<(usize, usize, LaurentQ)> {
        self.poly
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_zero())
            .map(|(j, l)| (self.deg - j, j, l.clone()))
            .collect()
    }

    /// The ratio self/other as a function of u = x₂/x₁ (degrees must agree).
    pub fn ratio(&self, other: &Self) -> RatExpr {
        assert_eq!(self.deg, other.deg, "ratio of homogeneous polynomials of different degrees");
        RatExpr::new(self.poly.clone(), other.poly.clone())
    }
}

impl fmt::Debug for Homog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .monomials()
            .into_iter()
            .map(|(a, b, l)| format!("[{l:?}]x1^{a}x2^{b}"))
            .collect();
        write!(f, "{}", if parts.is_empty() { "0".to_string() } else { parts.join(" + ") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn ctx() -> SeriesCtx {
        SeriesCtx::new(1, 4, 8)
    }

    fn lq(c: i64, n: i64) -> LaurentQ {
        LaurentQ::monomial(CycScalar::from_int(1, c), n)
    }

    fn qexp(n: i64) -> HSeries {
        HSeries::q_int(ctx(), n)
    }

    /// (q² − u)/(1 − q²u)
    fn g_a1() -> RatExpr {
        RatExpr::new(UPoly::new(1, vec![lq(1, 2), lq(-1, 0)]), UPoly::new(1, vec![lq(1, 0), lq(-1, 2)]))
    }

    #[test]
    fn iota12_geometric_oracle() {
        let e = g_a1().expand(Expansion::Iota12, ctx(), 4).unwrap();
        // q² + Σ_{n≥1} (q^{2n+2} − q^{2n−2}) u^n
        assert_eq!(e.coeff(0, ctx()).unwrap().first_mismatch(&qexp(2), 0, 0).unwrap(), None);
        for n in 1..=4 {
            let expect = qexp(2 * n + 2).sub(&qexp(2 * n - 2));
            assert_eq!(e.coeff(n, ctx()).unwrap().first_mismatch(&expect, 0, 0).unwrap(), None);
        }
        assert!(e.coeff(5, ctx()).is_err());
    }

    #[test]
    fn iota21_matches_inverse_variable_expansion() {
        // (q² − u)/(1 − q²u) = q⁻² · (1 − q²/u)/(1 − q⁻²/u)·… checked against
        // expanding r(1/v) in v.
        let r = g_a1();
        let e21 = r.expand(Expansion::Iota21, ctx(), 4).unwrap();
        let e12_inv = r.subst_inv_u().expand(Expansion::Iota12, ctx(), 4).unwrap();
        for n in 0..=4 {
            let a = e21.coeff(-n, ctx()).unwrap();
            let b = e12_inv.coeff(n, ctx()).unwrap();
            assert_eq!(a.first_mismatch(&b, 0, 0).unwrap(), None);
        }
    }

    #[test]
    fn subst_exp_coth_oracle() {
        let c = SeriesCtx::new(1, 0, 7);
        let r = RatExpr::new(UPoly::new(1, vec![lq(1, 0), lq(1, 0)]), UPoly::new(1, vec![lq(-1, 0), lq(1, 0)]));
        let s = r.subst_exp(0, c).unwrap();
        // (e^x + 1)/(e^x − 1) = 2/x + x/6 − x³/360 + x⁵/15120 − …
        let expect = [(-1, rat(2, 1)), (0, rat(0, 1)), (1, rat(1, 6)), (3, rat(-1, 360)), (5, rat(1, 15120))];
        for (m, v) in expect {
            assert_eq!(s.coeff(0, m).unwrap(), CycScalar::from_rat(1, v));
        }
    }

    #[test]
    fn subst_exp_tanh_oracle() {
        let c = SeriesCtx::new(2, 0, 7);
        let one = LaurentQ::one(2);
        let r = RatExpr::new(UPoly::new(2, vec![one.clone(), one.clone()]), UPoly::new(2, vec![one.neg(), one]));
        let s = r.subst_exp(1, c).unwrap();
        // u = −e^x: (1 − e^x)/(−1 − e^x) = tanh(x/2) = x/2 − x³/24 + x⁵/240 − …
        for (m, v) in [(0, rat(0, 1)), (1, rat(1, 2)), (3, rat(-1, 24)), (5, rat(1, 240))] {
            assert_eq!(s.coeff(0, m).unwrap(), CycScalar::from_rat(2, v));
        }
    }

    #[test]
    fn cross_multiplication_equality() {
        let r = g_a1();
        assert!(r.mul(&r.subst_inv_u()).same_function(&RatExpr::one(1)));
        assert!(!r.same_function(&RatExpr::one(1)));
    }
}
