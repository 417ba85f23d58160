//! Compact exact scalars for the Fock-space inner loops: a rational with an i64 fast
//! path that falls back to `BigRational` on overflow, and truncated power series in ℏ
//! over it.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num::{BigInt, One, ToPrimitive};

use crate::scalar::Rat;

/// Exact rational.  Values that fit in i64/i64 are always stored inline, so the
/// representation is canonical and structural equality is value equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Q {
    Small(i64, i64),
    Big(Box<Rat>),
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    gcd_u128(a.unsigned_abs() as u128, b.unsigned_abs() as u128) as i64
}

impl Q {
    pub fn zero() -> Self {
        Q::Small(0, 1)
    }

    pub fn one() -> Self {
        Q::Small(1, 1)
    }

    pub fn int(n: i64) -> Self {
        Q::Small(n, 1)
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Self::from_i128(n as i128, d as i128)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Q::Small(0, _))
    }

    fn from_i128(n: i128, d: i128) -> Self {
        assert!(d != 0, "zero denominator");
        let (mut n, mut d) = if d < 0 { (-n, -d) } else { (n, d) };
        let g = gcd_u128(n.unsigned_abs(), d as u128) as i128;
        if g > 1 {
            n /= g;
            d /= g;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(n), Ok(d)) => Q::Small(n, d),
            _ => Q::Big(Box::new(Rat::new(BigInt::from(n), BigInt::from(d)))),
        }
    }

    pub fn from_rat(r: &Rat) -> Self {
        match (r.numer().to_i64(), r.denom().to_i64()) {
            (Some(n), Some(d)) => Q::Small(n, d),
            _ => Q::Big(Box::new(r.clone())),
        }
    }

    pub fn to_rat(&self) -> Rat {
        match self {
            Q::Small(n, d) => Rat::new(BigInt::from(*n), BigInt::from(*d)),
            Q::Big(r) => (**r).clone(),
        }
    }

    fn big(r: Rat) -> Self {
        Self::from_rat(&r)
    }

    pub fn inv(&self) -> Self {
        match self {
            Q::Small(0, _) => panic!("inverse of zero"),
            Q::Small(n, d) => Self::from_i128(*d as i128, *n as i128),
            Q::Big(r) => Self::big(r.recip()),
        }
    }

    pub fn scale_int(&self, k: i64) -> Self {
        self * &Q::int(k)
    }
}

impl Add for &Q {
    type Output = Q;
    fn add(self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(0, _), _) => o.clone(),
            (_, Q::Small(0, _)) => self.clone(),
            (Q::Small(a, b), Q::Small(c, d)) => {
                let g = gcd_i64(*b, *d) as i128;
                let (b, d) = (*b as i128, *d as i128);
                Q::from_i128(*a as i128 * (d / g) + *c as i128 * (b / g), b * (d / g))
            }
            _ => Q::big(self.to_rat() + o.to_rat()),
        }
    }
}

impl Mul for &Q {
    type Output = Q;
    fn mul(self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(0, _), _) | (_, Q::Small(0, _)) => Q::zero(),
            (Q::Small(a, b), Q::Small(c, d)) => {
                let g1 = gcd_i64(*a, *d).max(1);
                let g2 = gcd_i64(*c, *b).max(1);
                let n = (*a / g1) as i128 * (*c / g2) as i128;
                let m = (*b / g2) as i128 * (*d / g1) as i128;
                match (i64::try_from(n), i64::try_from(m)) {
                    (Ok(n), Ok(m)) => Q::Small(n, m),
                    _ => Q::Big(Box::new(Rat::new(BigInt::from(n), BigInt::from(m)))),
                }
            }
            _ => Q::big(self.to_rat() * o.to_rat()),
        }
    }
}

impl Neg for &Q {
    type Output = Q;
    fn neg(self) -> Q {
        match self {
            Q::Small(n, d) => Q::from_i128(-(*n as i128), *d as i128),
            Q::Big(r) => Q::big(-(**r).clone()),
        }
    }
}

impl Sub for &Q {
    type Output = Q;
    fn sub(self, o: &Q) -> Q {
        self + &(-o)
    }
}

impl AddAssign<&Q> for Q {
    fn add_assign(&mut self, o: &Q) {
        *self = &*self + o;
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Q::Small(n, 1) => write!(f, "{n}"),
            Q::Small(n, d) => write!(f, "{n}/{d}"),
            Q::Big(r) => write!(f, "{r}"),
        }
    }
}

impl fmt::Debug for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Truncated power series Σ_{k≤H} c_k ℏ^k.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HPoly {
    c: Vec<Q>,
}

impl HPoly {
    pub fn zero(h: usize) -> Self {
        Self { c: vec![Q::zero(); h + 1] }
    }

    pub fn constant(h: usize, q: Q) -> Self {
        let mut p = Self::zero(h);
        p.c[0] = q;
        p
    }

    pub fn one(h: usize) -> Self {
        Self::constant(h, Q::one())
    }

    pub fn int(h: usize, n: i64) -> Self {
        Self::constant(h, Q::int(n))
    }

    /// ℏ itself.
    pub fn hbar(h: usize) -> Self {
        let mut p = Self::zero(h);
        if h >= 1 {
            p.c[1] = Q::one();
        }
        p
    }

    pub fn from_rats(h: usize, r: &[Rat]) -> Self {
        let mut p = Self::zero(h);
        for (k, v) in r.iter().enumerate().take(h + 1) {
            p.c[k] = Q::from_rat(v);
        }
        p
    }

    pub fn from_qs(h: usize, r: Vec<Q>) -> Self {
        let mut p = Self::zero(h);
        for (k, v) in r.into_iter().enumerate().take(h + 1) {
            p.c[k] = v;
        }
        p
    }

    /// e^{rℏ} = q^r.
    pub fn q_pow(h: usize, r: &Q) -> Self {
        let mut p = Self::zero(h);
        let mut term = Q::one();
        for k in 0..=h {
            p.c[k] = term.clone();
            term = &(&term * r) * &Q::frac(1, k as i64 + 1);
        }
        p
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeff(&self, k: usize) -> &Q {
        &self.c[k]
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.c
    }

    pub fn to_rats(&self) -> Vec<Rat> {
        self.c.iter().map(Q::to_rat).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(Q::is_zero)
    }

    /// Lowest nonzero ℏ-power.
    pub fn valuation(&self) -> Option<usize> {
        self.c.iter().position(|v| !v.is_zero())
    }

    pub fn scale(&self, q: &Q) -> Self {
        Self { c: self.c.iter().map(|v| v * q).collect() }
    }

    pub fn scale_int(&self, k: i64) -> Self {
        self.scale(&Q::int(k))
    }

    /// Multiplication by ℏ^j.
    pub fn shift(&self, j: usize) -> Self {
        let h = self.order();
        let mut p = Self::zero(h);
        for k in 0..=h {
            if k + j <= h {
                p.c[k + j] = self.c[k].clone();
            }
        }
        p
    }

    /// Accumulates a·b into self.
    pub fn add_mul(&mut self, a: &HPoly, b: &HPoly) {
        let h = self.order();
        for (i, x) in a.c.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.c.iter().enumerate().take(h + 1 - i) {
                if !y.is_zero() {
                    self.c[i + j] += &(x * y);
                }
            }
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::one(self.order()), |acc, _| &acc * self)
    }

    /// Multiplicative inverse (constant term must be nonzero).
    pub fn inverse(&self) -> Self {
        let h = self.order();
        let c0 = self.c[0].inv();
        let mut out = Self::zero(h);
        out.c[0] = c0.clone();
        for k in 1..=h {
            let mut s = Q::zero();
            for i in 1..=k {
                s += &(&self.c[i] * &out.c[k - i]);
            }
            out.c[k] = &(-&s) * &c0;
        }
        out
    }

    /// exp of a series with zero constant term.
    pub fn exp(&self) -> Self {
        assert!(self.c[0].is_zero(), "exp needs a vanishing constant term");
        let h = self.order();
        // f' = f·g' recursion: k f_k = Σ_{i=1}^k i g_i f_{k−i}.
        let mut out = Self::zero(h);
        out.c[0] = Q::one();
        for k in 1..=h {
            let mut s = Q::zero();
            for i in 1..=k {
                s += &(&self.c[i].scale_int(i as i64) * &out.c[k - i]);
            }
            out.c[k] = &s * &Q::frac(1, k as i64);
        }
        out
    }

    /// log of a series with constant term 1.
    pub fn log(&self) -> Self {
        assert!(self.c[0] == Q::one(), "log needs constant term 1");
        let h = self.order();
        // k g_k = k f_k − Σ_{i=1}^{k−1} i g_i f_{k−i}.
        let mut out = Self::zero(h);
        for k in 1..=h {
            let mut s = self.c[k].scale_int(k as i64);
            for i in 1..k {
                s = &s - &(&out.c[i].scale_int(i as i64) * &self.c[k - i]);
            }
            out.c[k] = &s * &Q::frac(1, k as i64);
        }
        out
    }

    /// Exact division by ℏ^j (the lowest j coefficients must vanish); the order drops by j.
    pub fn div_hbar(&self, j: usize) -> Option<Self> {
        if self.c.iter().take(j).any(|v| !v.is_zero()) {
            return None;
        }
        Some(Self { c: self.c[j.min(self.c.len())..].to_vec() })
    }

    pub fn truncate(&self, h: usize) -> Self {
        Self { c: self.c[..=h.min(self.order())].to_vec() }
    }
}

impl Add for &HPoly {
    type Output = HPoly;
    fn add(self, o: &HPoly) -> HPoly {
        HPoly { c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &HPoly {
    type Output = HPoly;
    fn sub(self, o: &HPoly) -> HPoly {
        HPoly { c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &HPoly {
    type Output = HPoly;
    fn neg(self) -> HPoly {
        HPoly { c: self.c.iter().map(|a| -a).collect() }
    }
}

impl Mul for &HPoly {
    type Output = HPoly;
    fn mul(self, o: &HPoly) -> HPoly {
        let mut p = HPoly::zero(self.order().min(o.order()));
        p.add_mul(self, o);
        p
    }
}

impl AddAssign<&HPoly> for HPoly {
    fn add_assign(&mut self, o: &HPoly) {
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            if !b.is_zero() {
                *a += b;
            }
        }
    }
}

impl fmt::Display for HPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .c
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(k, v)| match k {
                0 => format!("{v}"),
                1 => format!("({v})h"),
                _ => format!("({v})h^{k}"),
            })
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

impl fmt::Debug for HPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Binomial coefficient as an exact rational.
pub fn binomial(n: i64, k: i64) -> Q {
    if k < 0 || k > n {
        return Q::zero();
    }
    let mut acc = Q::one();
    for t in 0..k {
        acc = &(&acc * &Q::int(n - t)) * &Q::frac(1, t + 1);
    }
    acc
}

/// Converts an integer-valued rational to i64 when possible.
pub fn rat_to_i64(r: &Rat) -> Option<i64> {
    if r.denom().is_one() {
        r.numer().to_i64()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use proptest::prelude::*;

    #[test]
    fn overflow_promotes_and_demotes() {
        let big = Q::int(i64::MAX);
        let sq = &big * &big;
        assert!(matches!(sq, Q::Big(_)));
        let back = &sq * &Q::frac(1, i64::MAX);
        assert_eq!(back, Q::int(i64::MAX));
    }

    #[test]
    fn q_pow_and_log_round_trip() {
        let h = 6;
        let q = HPoly::q_pow(h, &Q::frac(1, 2));
        let lg = q.log();
        assert_eq!(lg, HPoly::hbar(h).scale(&Q::frac(1, 2)));
        assert_eq!(&q * &HPoly::q_pow(h, &Q::frac(-1, 2)), HPoly::one(h));
        assert_eq!(q.inverse(), HPoly::q_pow(h, &Q::frac(-1, 2)));
        assert_eq!(lg.exp(), q);
    }

    proptest! {
        #[test]
        fn agrees_with_bigrational(a in -50i64..50, b in 1i64..50, c in -50i64..50, d in 1i64..50, e in 0u32..5) {
            let (x, y) = (rat(a, b), rat(c, d));
            let big = num::pow(rat(3_000_000_007, 1), e as usize);
            let (qx, qy) = (Q::from_rat(&(x.clone() * big.clone())), Q::from_rat(&y));
            prop_assert_eq!((&qx + &qy).to_rat(), x.clone() * big.clone() + y.clone());
            prop_assert_eq!((&qx * &qy).to_rat(), x.clone() * big.clone() * y.clone());
            prop_assert_eq!((&qx - &qy).to_rat(), x * big - y);
        }
    }
}
