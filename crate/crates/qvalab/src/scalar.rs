//! Exact scalars: the rationals and the cyclotomic fields ℚ(ξ_N) for N ∈ {1, 2, 3}.
//!
//! Elements are stored in the power basis `1, ξ, …, ξ^{φ(N)−1}` reduced modulo the
//! N-th cyclotomic polynomial.  For N = 1 and N = 2 the field is ℚ itself (ξ = 1 and
//! ξ = −1 respectively); for N = 3 an element is `c0 + c1·ξ` with `ξ² = −1 − ξ`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational number used throughout the crate.
pub type Rat = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScalarError {
    #[error("cyclotomic order {0} is not supported (expected 1, 2 or 3)")]
    UnsupportedOrder(u32),
    #[error("scalar ring mismatch: order {0} vs order {1}")]
    OrderMismatch(u32, u32),
    #[error("division by zero")]
    DivisionByZero,
    #[error("malformed scalar: {0}")]
    Parse(String),
}

/// Rational number from an integer pair.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Rational number from an integer.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Euler totient for the supported orders.
fn totient(order: u32) -> usize {
    if order == 3 {
        2
    } else {
        1
    }
}

fn check_order(order: u32) -> Result<(), ScalarError> {
    match order {
        1..=3 => Ok(()),
        other => Err(ScalarError::UnsupportedOrder(other)),
    }
}

/// An element of ℚ(ξ_N), N ∈ {1, 2, 3}, in canonical power-basis form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CycScalar {
    order: u32,
    c0: Rat,
    c1: Rat,
}

impl CycScalar {
    /// Builds `c0 + c1·ξ`; `c1` must vanish unless `order == 3`.
    pub fn new(order: u32, coeffs: &[Rat]) -> Result<Self, ScalarError> {
        check_order(order)?;
        if coeffs.len() != totient(order) {
            return Err(ScalarError::Parse(format!(
                "order {order} expects {} coefficients, got {}",
                totient(order),
                coeffs.len()
            )));
        }
        let c1 = coeffs.get(1).cloned().unwrap_or_else(Rat::zero);
        Ok(Self { order, c0: coeffs[0].clone(), c1 })
    }

    pub fn zero(order: u32) -> Self {
        Self { order, c0: Rat::zero(), c1: Rat::zero() }
    }

    pub fn one(order: u32) -> Self {
        Self::from_rat(order, Rat::one())
    }

    pub fn from_rat(order: u32, q: Rat) -> Self {
        Self { order, c0: q, c1: Rat::zero() }
    }

    pub fn from_int(order: u32, n: i64) -> Self {
        Self::from_rat(order, rat_int(n))
    }

    /// ξ^k for the primitive N-th root of unity ξ.
    pub fn xi_pow(order: u32, k: i64) -> Self {
        match order {
            2 => Self::from_int(2, if k.rem_euclid(2) == 0 { 1 } else { -1 }),
            3 => match k.rem_euclid(3) {
                0 => Self::one(3),
                1 => Self { order: 3, c0: Rat::zero(), c1: Rat::one() },
                _ => Self { order: 3, c0: rat_int(-1), c1: rat_int(-1) },
            },
            o => Self::one(o),
        }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Power-basis coordinates, of length φ(N).
    pub fn coeffs(&self) -> Vec<Rat> {
        if self.order == 3 {
            vec![self.c0.clone(), self.c1.clone()]
        } else {
            vec![self.c0.clone()]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c0.is_zero() && self.c1.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.c0.is_one() && self.c1.is_zero()
    }

    /// The rational value, when the element lies in ℚ.
    pub fn to_rat(&self) -> Option<Rat> {
        if self.c1.is_zero() {
            Some(self.c0.clone())
        } else {
            None
        }
    }

    /// Same element viewed in a ring of a different order (only rational values move).
    pub fn with_order(&self, order: u32) -> Result<Self, ScalarError> {
        check_order(order)?;
        if self.order == order {
            return Ok(self.clone());
        }
        match self.to_rat() {
            Some(q) => Ok(Self::from_rat(order, q)),
            None => Err(ScalarError::OrderMismatch(self.order, order)),
        }
    }

    pub fn scale(&self, q: &Rat) -> Self {
        Self { order: self.order, c0: &self.c0 * q, c1: &self.c1 * q }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, ScalarError> {
        self.same_ring(other)?;
        Ok(Self { order: self.order, c0: &self.c0 + &other.c0, c1: &self.c1 + &other.c1 })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, ScalarError> {
        self.same_ring(other)?;
        if self.order != 3 || (self.c1.is_zero() && other.c1.is_zero()) {
            return Ok(Self {
                order: self.order,
                c0: &self.c0 * &other.c0,
                c1: &self.c0 * &other.c1 + &self.c1 * &other.c0,
            });
        }
        // (a + bξ)(c + dξ) = ac + (ad + bc)ξ + bdξ², with ξ² = −1 − ξ.
        let bd = &self.c1 * &other.c1;
        let c0 = &self.c0 * &other.c0 - &bd;
        let c1 = &self.c0 * &other.c1 + &self.c1 * &other.c0 - &bd;
        Ok(Self { order: 3, c0, c1 })
    }

    pub fn inverse(&self) -> Result<Self, ScalarError> {
        if self.is_zero() {
            return Err(ScalarError::DivisionByZero);
        }
        if self.c1.is_zero() {
            return Ok(Self::from_rat(self.order, self.c0.recip()));
        }
        // (a + bξ)⁻¹ = ((a − b) − bξ) / (a² − ab + b²), the norm form of ℚ(ξ_3).
        let (a, b) = (&self.c0, &self.c1);
        let norm = a * a - a * b + b * b;
        Ok(Self { order: 3, c0: (a - b) / &norm, c1: -(b / &norm) })
    }

    pub fn pow(&self, e: i64) -> Result<Self, ScalarError> {
        let base = if e < 0 { self.inverse()? } else { self.clone() };
        let mut acc = Self::one(self.order);
        let mut sq = base;
        let mut n = e.unsigned_abs();
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &sq;
            }
            n >>= 1;
            if n > 0 {
                sq = &sq * &sq;
            }
        }
        Ok(acc)
    }

    fn same_ring(&self, other: &Self) -> Result<(), ScalarError> {
        if self.order == other.order {
            Ok(())
        } else {
            Err(ScalarError::OrderMismatch(self.order, other.order))
        }
    }
}

/// The primitive N-th root of unity ξ_N = exp(2πi/N).
pub fn primitive_root(order: u32) -> Result<CycScalar, ScalarError> {
    check_order(order)?;
    Ok(CycScalar::xi_pow(order, 1))
}

/// Product with an explicit ring check.
pub fn cyc_mul(a: &CycScalar, b: &CycScalar) -> Result<CycScalar, ScalarError> {
    a.try_mul(b)
}

/// Multiplicative inverse; zero is an error.
pub fn cyc_inverse(a: &CycScalar) -> Result<CycScalar, ScalarError> {
    a.inverse()
}

impl fmt::Debug for CycScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CycScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c1.is_zero() {
            write!(f, "{}", self.c0)
        } else if self.c0.is_zero() {
            write!(f, "{}ξ", self.c1)
        } else if self.c1.is_negative() {
            write!(f, "{}-{}ξ", self.c0, -&self.c1)
        } else {
            write!(f, "{}+{}ξ", self.c0, self.c1)
        }
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl<'a> $trait<&'a CycScalar> for &'a CycScalar {
            type Output = CycScalar;
            fn $method(self, rhs: &'a CycScalar) -> CycScalar {
                let f: fn(&CycScalar, &CycScalar) -> Result<CycScalar, ScalarError> = $body;
                f(self, rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $trait<CycScalar> for CycScalar {
            type Output = CycScalar;
            fn $method(self, rhs: CycScalar) -> CycScalar {
                (&self).$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, |a, b| a.try_add(b));
forward_binop!(Sub, sub, |a, b| a.try_add(&-b));
forward_binop!(Mul, mul, |a, b| a.try_mul(b));

impl AddAssign<&CycScalar> for CycScalar {
    fn add_assign(&mut self, rhs: &CycScalar) {
        assert_eq!(self.order, rhs.order, "scalar ring mismatch");
        self.c0 += &rhs.c0;
        self.c1 += &rhs.c1;
    }
}

impl SubAssign<&CycScalar> for CycScalar {
    fn sub_assign(&mut self, rhs: &CycScalar) {
        assert_eq!(self.order, rhs.order, "scalar ring mismatch");
        self.c0 -= &rhs.c0;
        self.c1 -= &rhs.c1;
    }
}

impl MulAssign<&CycScalar> for CycScalar {
    fn mul_assign(&mut self, rhs: &CycScalar) {
        *self = &*self * rhs;
    }
}

impl Neg for &CycScalar {
    type Output = CycScalar;
    fn neg(self) -> CycScalar {
        CycScalar { order: self.order, c0: -&self.c0, c1: -&self.c1 }
    }
}

impl Neg for CycScalar {
    type Output = CycScalar;
    fn neg(self) -> CycScalar {
        -&self
    }
}

/// Formats a rational as `p/q` (always with an explicit denominator).
pub fn rat_to_string(q: &Rat) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Parses `p/q` or a bare integer.
pub fn rat_from_str(s: &str) -> Result<Rat, ScalarError> {
    let s = s.trim();
    let parse_int = |t: &str| {
        BigInt::from_str(t.trim()).map_err(|_| ScalarError::Parse(format!("bad integer {t:?}")))
    };
    match s.split_once('/') {
        Some((n, d)) => {
            let d = parse_int(d)?;
            if d.is_zero() {
                return Err(ScalarError::DivisionByZero);
            }
            Ok(Rat::new(parse_int(n)?, d))
        }
        None => Ok(Rat::from_integer(parse_int(s)?)),
    }
}

#[derive(Serialize, Deserialize)]
struct CycWire {
    order: u32,
    coeffs: Vec<String>,
}

impl Serialize for CycScalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CycWire { order: self.order, coeffs: self.coeffs().iter().map(rat_to_string).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CycScalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = CycWire::deserialize(d)?;
        let coeffs = wire
            .coeffs
            .iter()
            .map(|c| rat_from_str(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        CycScalar::new(wire.order, &coeffs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xi3() -> CycScalar {
        primitive_root(3).unwrap()
    }

    fn cyc3(a: i64, b: i64) -> CycScalar {
        CycScalar::new(3, &[rat_int(a), rat_int(b)]).unwrap()
    }

    #[test]
    fn primitive_roots_have_exact_order() {
        for n in 1..=3u32 {
            let xi = primitive_root(n).unwrap();
            assert!(xi.pow(n as i64).unwrap().is_one());
            for k in 1..n as i64 {
                assert!(!xi.pow(k).unwrap().is_one(), "ξ_{n}^{k} = 1");
            }
        }
        assert_eq!(primitive_root(2).unwrap(), CycScalar::from_int(2, -1));
        assert_eq!(primitive_root(3).unwrap().coeffs(), vec![rat_int(0), rat_int(1)]);
        assert_eq!(primitive_root(5), Err(ScalarError::UnsupportedOrder(5)));
    }

    #[test]
    fn reduction_modulo_cyclotomic_polynomial() {
        assert_eq!(&xi3() * &xi3(), cyc3(-1, -1));
        let m1 = CycScalar::from_int(2, -1);
        assert!((&m1 * &m1).is_one());
        assert!((&xi3() * &xi3().pow(2).unwrap()).is_one());
    }

    #[test]
    fn inverses() {
        assert_eq!(cyc_inverse(&xi3()).unwrap(), cyc3(-1, -1));
        assert_eq!(cyc_inverse(&CycScalar::from_int(2, -1)).unwrap(), CycScalar::from_int(2, -1));
        // Extended Euclid modulo t² + t + 1: (1 + t)·(−t) = −t − t² ≡ 1.
        assert_eq!(cyc_inverse(&cyc3(1, 1)).unwrap(), cyc3(0, -1));
        assert_eq!(cyc_inverse(&CycScalar::zero(3)), Err(ScalarError::DivisionByZero));
    }

    #[test]
    fn order_mismatch_is_an_error() {
        assert_eq!(
            cyc_mul(&CycScalar::one(2), &CycScalar::one(3)),
            Err(ScalarError::OrderMismatch(2, 3))
        );
    }

    #[test]
    fn json_round_trip() {
        let a = CycScalar::new(3, &[rat(1, 2), rat(-3, 4)]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"order":3,"coeffs":["1/2","-3/4"]}"#);
        let b: CycScalar = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }

    fn arb_cyc3() -> impl Strategy<Value = CycScalar> {
        (-20i64..20, 1i64..6, -20i64..20, 1i64..6)
            .prop_map(|(a, b, c, d)| CycScalar::new(3, &[rat(a, b), rat(c, d)]).unwrap())
    }

    proptest! {
        #[test]
        fn field_axioms(a in arb_cyc3(), b in arb_cyc3(), c in arb_cyc3()) {
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            if !a.is_zero() {
                prop_assert!((&a * &a.inverse().unwrap()).is_one());
            }
        }

        #[test]
        fn canonical_form_is_idempotent(a in arb_cyc3()) {
            let once = CycScalar::new(3, &a.coeffs()).unwrap();
            let twice = CycScalar::new(3, &once.coeffs()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
