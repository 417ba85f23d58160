//! Truncated elements of K((x))[[ℏ]] with explicit precision bookkeeping.
//!
//! Each ℏ-power `k ∈ [0, H]` owns a Laurent row in x.  A row knows every coefficient
//! up to its precision bound `hi` (coefficients below its valuation are exact zeros);
//! asking for anything above `hi` is a window error, never a silent zero.  Products,
//! shifts and the exp/log/inverse recursions propagate these bounds so that every
//! coefficient that is reported is exact.

use std::fmt;

use num::One;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::scalar::{rat, rat_int, CycScalar, Rat, ScalarError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("window too small: coefficient x^{x} at hbar^{h} is beyond the known precision x^{hi}")]
    Window { h: usize, x: i64, hi: i64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("incompatible series: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// Truncation context: scalar ring, ℏ-order and the largest x-exponent ever materialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SeriesCtx {
    pub order: u32,
    pub hbar_order: usize,
    pub x_cap: i64,
}

impl SeriesCtx {
    pub fn new(order: u32, hbar_order: usize, x_cap: i64) -> Self {
        Self { order, hbar_order, x_cap }
    }
}

/// Precision bound of a row that is an exact (finite) Laurent polynomial.
pub const EXACT: i64 = i64::MAX / 4;

/// One ℏ-level: coefficients `c[m - lo]` for x^m, exact for every m ≤ `hi`.
#[derive(Clone, Debug, PartialEq)]
struct Row {
    lo: i64,
    hi: i64,
    c: Vec<CycScalar>,
}

impl Row {
    fn zero(hi: i64) -> Self {
        Row { lo: hi + 1, hi, c: Vec::new() }
    }

    fn from_dense(lo: i64, hi: i64, mut c: Vec<CycScalar>) -> Self {
        let keep = (hi - lo + 1).max(0) as usize;
        c.truncate(keep);
        let mut row = Row { lo, hi, c };
        row.normalize();
        row
    }

    fn normalize(&mut self) {
        let lead = self.c.iter().take_while(|v| v.is_zero()).count();
        if lead == self.c.len() {
            self.c.clear();
            self.lo = self.hi + 1;
            return;
        }
        if lead > 0 {
            self.c.drain(..lead);
            self.lo += lead as i64;
        }
        while self.c.last().is_some_and(|v| v.is_zero()) {
            self.c.pop();
        }
    }

    /// Valuation bound: every coefficient below it is an exact zero.
    fn val(&self) -> i64 {
        if self.c.is_empty() {
            self.hi + 1
        } else {
            self.lo
        }
    }

    fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    fn is_exact(&self) -> bool {
        self.hi >= EXACT
    }

    /// Largest stored exponent (a very negative sentinel when empty).
    fn top(&self) -> i64 {
        if self.c.is_empty() {
            i64::MIN / 4
        } else {
            self.lo + self.c.len() as i64 - 1
        }
    }

    fn get(&self, m: i64) -> Option<&CycScalar> {
        if m < self.lo {
            return None;
        }
        self.c.get((m - self.lo) as usize)
    }

    fn iter(&self) -> impl Iterator<Item = (i64, &CycScalar)> {
        let lo = self.lo;
        self.c.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(move |(i, v)| (lo + i as i64, v))
    }

    fn add(&self, other: &Row, order: u32) -> Row {
        let hi = self.hi.min(other.hi);
        let lo = self.val().min(other.val()).min(hi + 1);
        let top = hi.min(self.top().max(other.top()));
        let len = (top - lo + 1).max(0) as usize;
        let mut c = vec![CycScalar::zero(order); len];
        for src in [self, other] {
            for (m, v) in src.iter() {
                if m <= hi {
                    c[(m - lo) as usize] += v;
                }
            }
        }
        Row::from_dense(lo, hi, c)
    }

    fn scale(&self, s: &CycScalar) -> Row {
        let mut r = Row { lo: self.lo, hi: self.hi, c: self.c.iter().map(|v| v * s).collect() };
        r.normalize();
        r
    }

    /// Precision of the product of two rows.
    fn mul_hi(&self, other: &Row) -> i64 {
        (self.val().saturating_add(other.hi)).min(self.hi.saturating_add(other.val()))
    }

    /// Accumulates `self * other` into a dense buffer covering `[lo, hi]`.
    fn mul_into(&self, other: &Row, lo: i64, hi: i64, acc: &mut [CycScalar]) {
        for (m1, a) in self.iter() {
            if m1 + other.val() > hi {
                continue;
            }
            for (m2, b) in other.iter() {
                let m = m1 + m2;
                if m > hi {
                    break;
                }
                if m >= lo {
                    acc[(m - lo) as usize] += &(a * b);
                }
            }
        }
    }
}

/// Truncated element of K((x))[[ℏ]].
#[derive(Clone, PartialEq)]
pub struct HSeries {
    ctx: SeriesCtx,
    rows: Vec<Row>,
}

/// First differing coefficient between two series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub h: usize,
    pub x: i64,
    pub lhs: CycScalar,
    pub rhs: CycScalar,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hbar^{} x^{}: lhs {} rhs {}", self.h, self.x, self.lhs, self.rhs)
    }
}

impl HSeries {
    pub fn zero(ctx: SeriesCtx) -> Self {
        Self { ctx, rows: vec![Row::zero(EXACT); ctx.hbar_order + 1] }
    }

    pub fn constant(ctx: SeriesCtx, c: CycScalar) -> Self {
        Self::monomial(ctx, c, 0, 0)
    }

    pub fn one(ctx: SeriesCtx) -> Self {
        Self::constant(ctx, CycScalar::one(ctx.order))
    }

    /// `c · ℏ^k · x^m` (exact up to the context cap).
    pub fn monomial(ctx: SeriesCtx, c: CycScalar, k: usize, m: i64) -> Self {
        let mut s = Self::zero(ctx);
        if k <= ctx.hbar_order {
            s.rows[k] = Row::from_dense(m, EXACT, vec![c]);
        }
        s
    }

    /// Builds a series from `(h, x, c)` triples; all rows are exact up to the cap.
    pub fn from_terms(ctx: SeriesCtx, terms: &[(usize, i64, CycScalar)]) -> Self {
        let mut s = Self::zero(ctx);
        for (k, m, c) in terms {
            s = s.add(&Self::monomial(ctx, c.clone(), *k, *m));
        }
        s
    }

    /// A univariate Taylor series in x (no ℏ) known through x^`hi`.
    pub fn from_x_coeffs(ctx: SeriesCtx, lo: i64, coeffs: Vec<CycScalar>, hi: i64) -> Self {
        let mut s = Self::zero(ctx);
        s.rows[0] = Row::from_dense(lo, hi.min(ctx.x_cap), coeffs);
        for r in s.rows.iter_mut().skip(1) {
            *r = Row::zero(EXACT);
        }
        s
    }

    /// A pure ℏ-series `Σ c_k ℏ^k`, constant in x.
    pub fn from_hbar_coeffs(ctx: SeriesCtx, coeffs: &[CycScalar]) -> Self {
        let mut s = Self::zero(ctx);
        for (k, c) in coeffs.iter().enumerate().take(ctx.hbar_order + 1) {
            s.rows[k] = Row::from_dense(0, EXACT, vec![c.clone()]);
        }
        s
    }

    /// The monomial x.
    pub fn x(ctx: SeriesCtx) -> Self {
        Self::monomial(ctx, CycScalar::one(ctx.order), 0, 1)
    }

    /// The monomial ℏ.
    pub fn hbar(ctx: SeriesCtx) -> Self {
        Self::monomial(ctx, CycScalar::one(ctx.order), 1, 0)
    }

    /// q^c = exp(cℏ) as a series constant in x.
    pub fn q_pow(ctx: SeriesCtx, c: &Rat) -> Self {
        let mut coeffs = Vec::with_capacity(ctx.hbar_order + 1);
        let mut term = Rat::one();
        for k in 0..=ctx.hbar_order {
            if k > 0 {
                term = term * c / rat_int(k as i64);
            }
            coeffs.push(CycScalar::from_rat(ctx.order, term.clone()));
        }
        Self::from_hbar_coeffs(ctx, &coeffs)
    }

    /// q^c for an integer c.
    pub fn q_int(ctx: SeriesCtx, c: i64) -> Self {
        Self::q_pow(ctx, &rat_int(c))
    }

    pub fn ctx(&self) -> SeriesCtx {
        self.ctx
    }

    pub fn order(&self) -> u32 {
        self.ctx.order
    }

    pub fn hbar_order(&self) -> usize {
        self.ctx.hbar_order
    }

    /// Precision bound of the ℏ^k row.
    pub fn x_hi(&self, k: usize) -> i64 {
        self.rows[k].hi
    }

    /// Smallest precision bound over all rows.
    pub fn min_x_hi(&self) -> i64 {
        self.rows.iter().map(|r| r.hi).min().unwrap_or(self.ctx.x_cap)
    }

    /// Smallest exponent carrying a nonzero coefficient, if any.
    pub fn min_x(&self) -> Option<i64> {
        self.rows.iter().filter(|r| !r.is_zero()).map(|r| r.lo).min()
    }

    /// Coefficient of ℏ^k x^m; exponents above the known precision are a window error.
    pub fn coeff(&self, k: usize, m: i64) -> Result<CycScalar, SeriesError> {
        if k > self.ctx.hbar_order {
            return Err(SeriesError::Window { h: k, x: m, hi: i64::MIN });
        }
        let row = &self.rows[k];
        if m > row.hi {
            return Err(SeriesError::Window { h: k, x: m, hi: row.hi });
        }
        Ok(row.get(m).cloned().unwrap_or_else(|| CycScalar::zero(self.ctx.order)))
    }

    /// All stored nonzero terms ordered by (h, x).
    pub fn terms(&self) -> Vec<(usize, i64, CycScalar)> {
        let mut out = Vec::new();
        for (k, row) in self.rows.iter().enumerate() {
            for (m, v) in row.iter() {
                out.push((k, m, v.clone()));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Row::is_zero)
    }

    fn check_compatible(&self, other: &Self) -> Result<(), SeriesError> {
        if self.ctx.order != other.ctx.order || self.ctx.hbar_order != other.ctx.hbar_order {
            return Err(SeriesError::Incompatible(format!(
                "ring/order ({}, H={}) vs ({}, H={})",
                self.ctx.order, self.ctx.hbar_order, other.ctx.order, other.ctx.hbar_order
            )));
        }
        Ok(())
    }

    fn joined_ctx(&self, other: &Self) -> SeriesCtx {
        SeriesCtx { x_cap: self.ctx.x_cap.min(other.ctx.x_cap), ..self.ctx }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_compatible(other)?;
        let ctx = self.joined_ctx(other);
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| a.add(b, ctx.order)).collect();
        Ok(Self { ctx, rows })
    }

    pub fn add(&self, other: &Self) -> Self {
        self.try_add(other).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-CycScalar::one(self.ctx.order))
    }

    pub fn scale(&self, s: &CycScalar) -> Self {
        Self { ctx: self.ctx, rows: self.rows.iter().map(|r| r.scale(s)).collect() }
    }

    pub fn scale_rat(&self, q: &Rat) -> Self {
        self.scale(&CycScalar::from_rat(self.ctx.order, q.clone()))
    }

    /// Truncated product; per-row precision is propagated exactly.
    pub fn try_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_compatible(other)?;
        let ctx = self.joined_ctx(other);
        let h = ctx.hbar_order;
        let mut rows = Vec::with_capacity(h + 1);
        for kk in 0..=h {
            let mut hi = i64::MAX;
            let mut lo = i64::MAX;
            let mut top = i64::MIN;
            for i in 0..=kk {
                let (a, b) = (&self.rows[i], &other.rows[kk - i]);
                hi = hi.min(a.mul_hi(b));
                if !a.is_zero() && !b.is_zero() {
                    lo = lo.min(a.lo + b.lo);
                    top = top.max(a.top() + b.top());
                }
            }
            hi = if hi >= EXACT { EXACT } else { hi.min(ctx.x_cap) };
            if lo == i64::MAX || lo > hi {
                rows.push(Row::zero(hi));
                continue;
            }
            let top = top.min(hi);
            let mut acc = vec![CycScalar::zero(ctx.order); (top - lo + 1) as usize];
            for i in 0..=kk {
                let (a, b) = (&self.rows[i], &other.rows[kk - i]);
                if !a.is_zero() && !b.is_zero() {
                    a.mul_into(b, lo, top, &mut acc);
                }
            }
            rows.push(Row::from_dense(lo, hi, acc));
        }
        Ok(Self { ctx, rows })
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.try_mul(other).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Multiplication by x^n.
    pub fn mul_x_pow(&self, n: i64) -> Self {
        let cap = self.ctx.x_cap;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let hi = if r.is_exact() { EXACT } else { (r.hi + n).min(cap) };
                Row::from_dense(r.lo + n, hi, r.c.clone())
            })
            .collect();
        Self { ctx: self.ctx, rows }
    }

    /// Multiplication by ℏ^j (levels pushed beyond H are dropped).
    pub fn mul_hbar_pow(&self, j: usize) -> Self {
        let h = self.ctx.hbar_order;
        let mut rows = vec![Row::zero(EXACT); h + 1];
        for k in 0..=h {
            if k + j <= h {
                rows[k + j] = self.rows[k].clone();
            }
        }
        Self { ctx: self.ctx, rows }
    }

    /// Exact division by ℏ^j; fails unless the lowest j levels vanish.
    pub fn div_hbar_pow(&self, j: usize) -> Result<Self, SeriesError> {
        if let Some(k) = self.rows.iter().take(j).position(|r| !r.is_zero()) {
            return Err(SeriesError::Precondition(format!(
                "series is not divisible by hbar^{j}: level {k} is nonzero"
            )));
        }
        let h = self.ctx.hbar_order;
        let ctx = SeriesCtx { hbar_order: h - j.min(h), ..self.ctx };
        let rows = (0..=ctx.hbar_order).map(|k| self.rows[k + j].clone()).collect();
        Ok(Self { ctx, rows })
    }

    /// Keeps ℏ-levels up to `h` (reduces the truncation order).
    pub fn truncate_hbar(&self, h: usize) -> Self {
        let h = h.min(self.ctx.hbar_order);
        Self { ctx: SeriesCtx { hbar_order: h, ..self.ctx }, rows: self.rows[..=h].to_vec() }
    }

    /// Forgets coefficients above x^hi.
    pub fn truncate_x(&self, hi: i64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| Row::from_dense(r.lo, r.hi.min(hi), r.c.clone()))
            .collect();
        Self { ctx: self.ctx, rows }
    }

    /// Strictly negative x-powers.
    pub fn singular_part(&self) -> Self {
        self.filter_x(|m| m < 0)
    }

    /// Nonnegative x-powers.
    pub fn regular_part(&self) -> Self {
        self.filter_x(|m| m >= 0)
    }

    fn filter_x(&self, keep: impl Fn(i64) -> bool) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let c = r
                    .c
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        if keep(r.lo + i as i64) {
                            v.clone()
                        } else {
                            CycScalar::zero(self.ctx.order)
                        }
                    })
                    .collect();
                Row::from_dense(r.lo, r.hi, c)
            })
            .collect();
        Self { ctx: self.ctx, rows }
    }

    /// d/dx.
    pub fn deriv(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let c = r.c.iter().enumerate().map(|(i, v)| v.scale(&rat_int(r.lo + i as i64))).collect();
                let hi = if r.is_exact() { EXACT } else { r.hi - 1 };
                Row::from_dense(r.lo - 1, hi, c)
            })
            .collect();
        Self { ctx: self.ctx, rows }
    }

    /// n-th derivative in x.
    pub fn deriv_n(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |acc, _| acc.deriv())
    }

    /// x·d/dx.
    pub fn x_deriv(&self) -> Self {
        self.map_coeffs(|_, m, v| v.scale(&rat_int(m)))
    }

    /// x ↦ s·x for a scalar s.
    pub fn scale_x(&self, s: &CycScalar) -> Self {
        let order = self.ctx.order;
        self.map_coeffs(|_, m, v| v * &s.pow(m).unwrap_or_else(|_| CycScalar::zero(order)))
    }

    /// x ↦ −x.
    pub fn neg_x(&self) -> Self {
        self.map_coeffs(|_, m, v| if m % 2 == 0 { v.clone() } else { -v })
    }

    fn map_coeffs(&self, f: impl Fn(usize, i64, &CycScalar) -> CycScalar) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let c = r.c.iter().enumerate().map(|(i, v)| f(k, r.lo + i as i64, v)).collect();
                Row::from_dense(r.lo, r.hi, c)
            })
            .collect();
        Self { ctx: self.ctx, rows }
    }

    /// q^{c∂_x}: x ↦ x + cℏ, i.e. Σ_j (cℏ)^j f^{(j)}(x)/j!.
    pub fn hbar_shift(&self, c: &Rat) -> Self {
        let h = self.ctx.hbar_order;
        let mut derivs = vec![self.clone()];
        for j in 1..=h {
            derivs.push(derivs[j - 1].deriv());
        }
        let mut rows = Vec::with_capacity(h + 1);
        for kk in 0..=h {
            let mut acc = Row::zero(EXACT);
            let mut coef = Rat::one();
            for j in 0..=kk {
                if j > 0 {
                    coef = coef * c / rat_int(j as i64);
                }
                let src = &derivs[j].rows[kk - j];
                acc = acc.add(&src.scale(&CycScalar::from_rat(self.ctx.order, coef.clone())), self.ctx.order);
            }
            rows.push(acc);
        }
        Self { ctx: self.ctx, rows }
    }

    /// q^{c x∂_x}: x ↦ e^{cℏ}x, multiplying the x^m coefficient by e^{cmℏ}.
    pub fn q_scale_x(&self, c: &Rat) -> Self {
        let h = self.ctx.hbar_order;
        let order = self.ctx.order;
        let mut rows: Vec<Row> = Vec::with_capacity(h + 1);
        for kk in 0..=h {
            let mut acc = Row::zero(EXACT);
            for j in 0..=kk {
                let src = &self.rows[kk - j];
                let fact: Rat = (1..=j as i64).fold(Rat::one(), |a, t| a * rat_int(t));
                let shifted = Row::from_dense(
                    src.lo,
                    src.hi,
                    src.c
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let m = rat_int(src.lo + i as i64);
                            v.scale(&(num::pow(c * &m, j) / &fact))
                        })
                        .collect(),
                );
                acc = acc.add(&shifted, order);
            }
            rows.push(acc);
        }
        Self { ctx: self.ctx, rows }
    }

    /// Applies `Σ_j q^{s_j ∂}` (additive) or `Σ_j q^{s_j x∂}` (multiplicative) for the
    /// shift list of the q-integer [m].
    pub fn qbracket(&self, m: i64, mode: ShiftMode) -> Self {
        let mut acc = Self::zero(self.ctx);
        for s in qbracket_shifts(m.abs()) {
            let term = match mode {
                ShiftMode::Additive => self.hbar_shift(&rat_int(s)),
                ShiftMode::Multiplicative => self.q_scale_x(&rat_int(s)),
            };
            acc = acc.add(&term);
        }
        if m < 0 {
            acc.neg()
        } else {
            acc
        }
    }

    /// Substitutes x = cℏ into a series with no negative x-powers.
    pub fn eval_x_at_hbar(&self, c: &CycScalar) -> Result<Self, SeriesError> {
        let h = self.ctx.hbar_order;
        let mut out = vec![CycScalar::zero(self.ctx.order); h + 1];
        for (k, row) in self.rows.iter().enumerate() {
            if !row.is_zero() && row.lo < 0 {
                return Err(SeriesError::Precondition("negative x-power in x = c·hbar substitution".into()));
            }
            let need = (h - k) as i64;
            if need > row.hi {
                return Err(SeriesError::Window { h: k, x: need, hi: row.hi });
            }
            for (m, v) in row.iter() {
                if m <= need {
                    out[k + m as usize] += &(v * &c.pow(m)?);
                }
            }
        }
        Ok(Self::from_hbar_coeffs(self.ctx, &out))
    }

    /// Value at x = 0 of a series without negative powers, as an ℏ-series.
    pub fn eval_x_zero(&self) -> Result<Self, SeriesError> {
        self.eval_x_at_hbar(&CycScalar::zero(self.ctx.order))
    }

    /// The x^0 coefficients as an ℏ-series (no regularity requirement).
    pub fn x_coeff_series(&self, m: i64) -> Result<Self, SeriesError> {
        let coeffs = (0..=self.ctx.hbar_order).map(|k| self.coeff(k, m)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_hbar_coeffs(self.ctx, &coeffs))
    }

    /// Multiplicative inverse; the ℏ⁰ row must be a nonzero Laurent series.
    pub fn inverse(&self) -> Result<Self, SeriesError> {
        let h = self.ctx.hbar_order;
        let inv0 = uni_inverse(&self.rows[0], self.ctx)?;
        let inv0_s = self.single_row(inv0);
        let mut out = vec![inv0_s.rows[0].clone()];
        for kk in 1..=h {
            let mut acc = Self::zero(self.ctx);
            for j in 1..=kk {
                let fj = self.single_row(self.rows[j].clone());
                let ik = self.single_row(out[kk - j].clone());
                acc = acc.add(&fj.mul(&ik));
            }
            out.push(acc.mul(&inv0_s).neg().rows[0].clone());
        }
        Ok(Self { ctx: self.ctx, rows: out })
    }

    pub fn div(&self, other: &Self) -> Result<Self, SeriesError> {
        Ok(self.mul(&other.inverse()?))
    }

    /// exp(f) for f with (x⁰, ℏ⁰)-coefficient 0 and no negative x-powers at ℏ⁰.
    pub fn exp(&self) -> Result<Self, SeriesError> {
        let r0 = &self.rows[0];
        if !r0.is_zero() && r0.lo <= 0 {
            return Err(SeriesError::Precondition(
                "exp needs the hbar^0 part in x*K[[x]] (no constant, no poles)".into(),
            ));
        }
        let h = self.ctx.hbar_order;
        let e0 = uni_exp(r0, self.ctx);
        let mut out = vec![e0];
        for kk in 1..=h {
            let mut acc = Self::zero(self.ctx);
            for j in 1..=kk {
                let fj = self.single_row(self.rows[j].clone()).scale_rat(&rat_int(j as i64));
                acc = acc.add(&fj.mul(&self.single_row(out[kk - j].clone())));
            }
            out.push(acc.scale_rat(&rat(1, kk as i64)).rows[0].clone());
        }
        Ok(Self { ctx: self.ctx, rows: out })
    }

    /// log(f) for f with constant term 1 and no negative x-powers at ℏ⁰.
    pub fn log(&self) -> Result<Self, SeriesError> {
        let r0 = &self.rows[0];
        let c0 = r0.get(0).cloned().unwrap_or_else(|| CycScalar::zero(self.ctx.order));
        if !c0.is_one() || r0.lo < 0 || r0.hi < 0 {
            return Err(SeriesError::Precondition("log needs constant term 1 and no poles at hbar^0".into()));
        }
        let h = self.ctx.hbar_order;
        let l0 = uni_log(r0, self.ctx);
        let inv0 = self.single_row(uni_inverse(r0, self.ctx)?);
        let mut out = vec![l0];
        for kk in 1..=h {
            let mut acc = self.single_row(self.rows[kk].clone());
            let mut corr = Self::zero(self.ctx);
            for j in 1..kk {
                let lj = self.single_row(out[j].clone()).scale_rat(&rat_int(j as i64));
                corr = corr.add(&lj.mul(&self.single_row(self.rows[kk - j].clone())));
            }
            acc = acc.sub(&corr.scale_rat(&rat(1, kk as i64)));
            out.push(acc.mul(&inv0).rows[0].clone());
        }
        Ok(Self { ctx: self.ctx, rows: out })
    }

    /// Square root of a series with constant term 1, via exp(½ log f).
    pub fn sqrt(&self) -> Result<Self, SeriesError> {
        self.log()?.scale_rat(&rat(1, 2)).exp()
    }

    /// Integer power (negative powers use the inverse).
    pub fn pow(&self, e: i64) -> Result<Self, SeriesError> {
        let base = if e < 0 { self.inverse()? } else { self.clone() };
        let mut acc = Self::one(self.ctx);
        for _ in 0..e.unsigned_abs() {
            acc = acc.mul(&base);
        }
        Ok(acc)
    }

    /// Series holding `row` at ℏ⁰ and exact zeros elsewhere (used by the recursions).
    fn single_row(&self, row: Row) -> Self {
        let mut s = Self::zero(self.ctx);
        s.rows[0] = row;
        s
    }

    /// Compares two series on x ∈ [x_lo, x_hi] at every ℏ-level.
    pub fn first_mismatch(&self, other: &Self, x_lo: i64, x_hi: i64) -> Result<Option<Mismatch>, SeriesError> {
        self.check_compatible(other)?;
        for k in 0..=self.ctx.hbar_order {
            for m in x_lo..=x_hi {
                let (a, b) = (self.coeff(k, m)?, other.coeff(k, m)?);
                if a != b {
                    return Ok(Some(Mismatch { h: k, x: m, lhs: a, rhs: b }));
                }
            }
        }
        Ok(None)
    }

    /// Re-tags a series over a larger ring (rational coefficients only move).
    pub fn with_order(&self, order: u32) -> Result<Self, SeriesError> {
        let ctx = SeriesCtx { order, ..self.ctx };
        let mut rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let c = r.c.iter().map(|v| v.with_order(order)).collect::<Result<Vec<_>, _>>()?;
            rows.push(Row { lo: r.lo, hi: r.hi, c });
        }
        Ok(Self { ctx, rows })
    }

    /// Rational ℏ-coefficients of the x^m column (fails on irrational entries).
    pub fn rational_column(&self, m: i64) -> Result<Vec<Rat>, SeriesError> {
        (0..=self.ctx.hbar_order)
            .map(|k| {
                let c = self.coeff(k, m)?;
                c.to_rat().ok_or_else(|| SeriesError::Precondition("irrational coefficient".into()))
            })
            .collect()
    }
}

/// Shifts s with [m]_{q^D} = Σ q^{s D}, for m ≥ 0: s = m−1, m−3, …, 1−m.
pub fn qbracket_shifts(m: i64) -> Vec<i64> {
    (0..m).map(|j| m - 1 - 2 * j).collect()
}

/// Whether q-shifts act by x ↦ x + cℏ or by x ↦ q^c x.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftMode {
    Additive,
    Multiplicative,
}

fn uni_inverse(row: &Row, ctx: SeriesCtx) -> Result<Row, SeriesError> {
    if row.is_zero() {
        return Err(SeriesError::Precondition("inverse of a series whose hbar^0 part vanishes".into()));
    }
    let v = row.lo;
    let prec = row.hi - v;
    let hi = (row.hi - 2 * v).min(ctx.x_cap);
    let n_terms = (hi + v + 1).max(0) as usize;
    let d0inv = row.c[0].inverse()?;
    let mut e: Vec<CycScalar> = Vec::with_capacity(n_terms);
    for n in 0..n_terms {
        if n == 0 {
            e.push(d0inv.clone());
            continue;
        }
        if n as i64 > prec {
            break;
        }
        let mut acc = CycScalar::zero(ctx.order);
        for i in 1..=n {
            if let Some(d) = row.c.get(i) {
                if !d.is_zero() {
                    acc += &(d * &e[n - i]);
                }
            }
        }
        e.push(-&(&acc * &d0inv));
    }
    Ok(Row::from_dense(-v, hi, e))
}

fn uni_exp(row: &Row, ctx: SeriesCtx) -> Row {
    let hi = row.hi.min(ctx.x_cap);
    if hi < 0 {
        return Row::zero(hi);
    }
    let coef = |i: i64| row.get(i).cloned().unwrap_or_else(|| CycScalar::zero(ctx.order));
    let mut e = vec![CycScalar::one(ctx.order)];
    for n in 1..=hi {
        let mut acc = CycScalar::zero(ctx.order);
        for i in 1..=n {
            let f = coef(i);
            if !f.is_zero() {
                acc += &(&f.scale(&rat_int(i)) * &e[(n - i) as usize]);
            }
        }
        e.push(acc.scale(&rat(1, n)));
    }
    Row::from_dense(0, hi, e)
}

fn uni_log(row: &Row, ctx: SeriesCtx) -> Row {
    let hi = row.hi.min(ctx.x_cap);
    let coef = |i: i64| row.get(i).cloned().unwrap_or_else(|| CycScalar::zero(ctx.order));
    let mut l = vec![CycScalar::zero(ctx.order)];
    for n in 1..=hi {
        let mut acc = coef(n);
        for i in 1..n {
            let r = coef(i);
            if !r.is_zero() {
                acc -= &(&r * &l[(n - i) as usize]).scale(&rat(n - i, n));
            }
        }
        l.push(acc);
    }
    Row::from_dense(0, hi, l)
}

impl fmt::Debug for HSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HSeries[H={}; ", self.ctx.hbar_order)?;
        for (k, r) in self.rows.iter().enumerate() {
            write!(f, "h^{k}: (")?;
            for (m, v) in r.iter() {
                write!(f, " {v}·x^{m}")?;
            }
            write!(f, " | x^{}+) ", r.hi + 1)?;
        }
        write!(f, "]")
    }
}

#[derive(Serialize)]
struct TermWire<'a> {
    h: usize,
    x: i64,
    c: &'a CycScalar,
}

impl Serialize for HSeries {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let terms = self.terms();
        let wire: Vec<TermWire<'_>> = terms.iter().map(|(h, x, c)| TermWire { h: *h, x: *x, c }).collect();
        let mut st = s.serialize_struct("HSeries", 2)?;
        st.serialize_field("hbar_order", &self.ctx.hbar_order)?;
        st.serialize_field("terms", &wire)?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(h: usize, cap: i64) -> SeriesCtx {
        SeriesCtx::new(1, h, cap)
    }

    fn q(n: i64, d: i64) -> CycScalar {
        CycScalar::from_rat(1, rat(n, d))
    }

    fn x_series(c: SeriesCtx, coeffs: &[(i64, i64)], hi: i64) -> HSeries {
        HSeries::from_x_coeffs(c, 0, coeffs.iter().map(|&(n, d)| q(n, d)).collect(), hi)
    }

    #[test]
    fn basic_products() {
        let c = ctx(4, 10);
        let a = HSeries::one(c).add(&HSeries::monomial(c, q(1, 1), 1, 1));
        let b = HSeries::one(c).sub(&HSeries::monomial(c, q(1, 1), 1, 1));
        let expect = HSeries::one(c).sub(&HSeries::monomial(c, q(1, 1), 2, 2));
        assert_eq!(a.mul(&b).first_mismatch(&expect, -3, 8).unwrap(), None);
        let xi = HSeries::monomial(c, q(1, 1), 0, -1).mul(&HSeries::x(c));
        assert_eq!(xi.first_mismatch(&HSeries::one(c), -3, 8).unwrap(), None);
        let qq = HSeries::q_int(c, 1).mul(&HSeries::q_int(c, -1));
        assert_eq!(qq.first_mismatch(&HSeries::one(c), -3, 8).unwrap(), None);
    }

    #[test]
    fn exp_and_log_oracles() {
        let c = ctx(2, 8);
        let e = HSeries::x(c).exp().unwrap();
        let mut fact = Rat::one();
        for m in 0..=8 {
            if m > 0 {
                fact *= rat_int(m);
            }
            assert_eq!(e.coeff(0, m).unwrap(), CycScalar::from_rat(1, fact.recip()));
        }
        // log(1 + x) = x − x²/2 + x³/3 − …
        let l = x_series(c, &[(1, 1), (1, 1)], 8).log().unwrap();
        for m in 1..=8 {
            let sign = if m % 2 == 1 { 1 } else { -1 };
            assert_eq!(l.coeff(0, m).unwrap(), q(sign, m));
        }
        // log(exp(ℏ)) = ℏ.
        let lq = HSeries::q_int(c, 1).log().unwrap();
        assert_eq!(lq.first_mismatch(&HSeries::hbar(c), 0, 8).unwrap(), None);
        // exp(log(1+x)) = 1 + x.
        let back = l.exp().unwrap();
        assert_eq!(back.first_mismatch(&x_series(c, &[(1, 1), (1, 1)], 8), 0, 8).unwrap(), None);
    }

    #[test]
    fn log_cosh_oracle() {
        let c = ctx(0, 8);
        // (e^x + e^{-x})/2 = Σ x^{2n}/(2n)!
        let mut coeffs = Vec::new();
        let mut fact = Rat::one();
        for m in 0..=8i64 {
            if m > 0 {
                fact *= rat_int(m);
            }
            coeffs.push(if m % 2 == 0 { CycScalar::from_rat(1, fact.recip()) } else { q(0, 1) });
        }
        let l = HSeries::from_x_coeffs(c, 0, coeffs, 8).log().unwrap();
        assert_eq!(l.coeff(0, 2).unwrap(), q(1, 2));
        assert_eq!(l.coeff(0, 4).unwrap(), q(-1, 12));
        assert_eq!(l.coeff(0, 6).unwrap(), q(1, 45));
    }

    #[test]
    fn shifts() {
        let c = ctx(4, 6);
        let xinv = HSeries::monomial(c, q(1, 1), 0, -1);
        let s = xinv.hbar_shift(&rat_int(1));
        for k in 0..=4usize {
            let sign = if k % 2 == 0 { 1 } else { -1 };
            assert_eq!(s.coeff(k, -1 - k as i64).unwrap(), q(sign, 1));
        }
        let x2 = HSeries::monomial(c, q(1, 1), 0, 2);
        let s2 = x2.hbar_shift(&rat_int(-2));
        let expect = HSeries::from_terms(c, &[(0, 2, q(1, 1)), (1, 1, q(-4, 1)), (2, 0, q(4, 1))]);
        assert_eq!(s2.first_mismatch(&expect, -2, 4).unwrap(), None);
    }

    #[test]
    fn qbracket_examples() {
        let c = ctx(4, 6);
        let x = HSeries::x(c);
        assert_eq!(x.qbracket(1, ShiftMode::Additive).first_mismatch(&x, 0, 5).unwrap(), None);
        let two_x = x.scale_rat(&rat_int(2));
        assert_eq!(x.qbracket(2, ShiftMode::Additive).first_mismatch(&two_x, 0, 5).unwrap(), None);
        let f = HSeries::monomial(c, q(3, 1), 1, -2).add(&x);
        assert_eq!(f.qbracket(-1, ShiftMode::Additive).first_mismatch(&f.neg(), -3, 5).unwrap(), None);
        assert!(f.qbracket(0, ShiftMode::Multiplicative).is_zero());
    }

    #[test]
    fn window_errors_are_reported() {
        let c = ctx(2, 5);
        let e = HSeries::x(c).exp().unwrap();
        assert!(matches!(e.coeff(0, 6), Err(SeriesError::Window { .. })));
        assert_eq!(HSeries::q_int(c, 1).coeff(1, 0).unwrap(), q(1, 1));
    }

    #[test]
    fn exp_precondition() {
        let c = ctx(2, 5);
        assert!(HSeries::one(c).exp().is_err());
        assert!(HSeries::monomial(c, q(1, 1), 0, -1).exp().is_err());
        // Poles are fine above ℏ⁰.
        assert!(HSeries::monomial(c, q(1, 1), 1, -1).exp().is_ok());
    }

    #[test]
    fn inverse_with_pole() {
        let c = ctx(3, 8);
        // (x + ℏ)⁻¹ = Σ (−ℏ)^k x^{−k−1}.
        let f = HSeries::x(c).add(&HSeries::hbar(c));
        let inv = f.inverse().unwrap();
        for k in 0..=3usize {
            let sign = if k % 2 == 0 { 1 } else { -1 };
            assert_eq!(inv.coeff(k, -1 - k as i64).unwrap(), q(sign, 1));
        }
        assert_eq!(inv.mul(&f).first_mismatch(&HSeries::one(c), -4, 3).unwrap(), None);
    }

    #[test]
    fn eval_at_hbar() {
        let c = ctx(3, 8);
        let e = HSeries::x(c).exp().unwrap();
        let v = e.eval_x_at_hbar(&q(2, 1)).unwrap();
        assert_eq!(v.first_mismatch(&HSeries::q_int(c, 2), 0, 0).unwrap(), None);
    }

    fn arb_series() -> impl Strategy<Value = HSeries> {
        proptest::collection::vec((0usize..4, -3i64..6, -9i64..9), 1..8).prop_map(|terms| {
            let c = ctx(3, 14);
            let t: Vec<_> = terms.into_iter().map(|(k, m, v)| (k, m, q(v, 1))).collect();
            HSeries::from_terms(c, &t)
        })
    }

    proptest! {
        #[test]
        fn shift_is_ring_morphism(a in arb_series(), b in arb_series()) {
            let c = rat(1, 2);
            let lhs = a.mul(&b).hbar_shift(&c);
            let rhs = a.hbar_shift(&c).mul(&b.hbar_shift(&c));
            prop_assert_eq!(lhs.first_mismatch(&rhs, -8, 2).unwrap(), None);
        }

        #[test]
        fn shifts_invert(a in arb_series()) {
            let back = a.hbar_shift(&rat_int(1)).hbar_shift(&rat_int(-1));
            prop_assert_eq!(back.first_mismatch(&a, -8, 4).unwrap(), None);
        }

        #[test]
        fn qbrackets_commute(a in arb_series(), m in -3i64..4, n in -3i64..4) {
            let l = a.qbracket(m, ShiftMode::Additive).qbracket(n, ShiftMode::Multiplicative);
            let r = a.qbracket(n, ShiftMode::Multiplicative).qbracket(m, ShiftMode::Additive);
            prop_assert_eq!(l.first_mismatch(&r, -8, 2).unwrap(), None);
        }

        #[test]
        fn exp_log_round_trip(a in arb_series()) {
            // Remove the ℏ⁰ principal part and constant so that exp applies.
            let c = a.ctx();
            let mut f = a.clone();
            for (k, m, v) in a.terms() {
                if k == 0 && m <= 0 {
                    f = f.sub(&HSeries::monomial(c, v, 0, m));
                }
            }
            let e = f.exp().unwrap();
            let back = e.log().unwrap();
            let hi = (0..=3).map(|k| back.x_hi(k)).min().unwrap().min(4);
            prop_assert_eq!(back.first_mismatch(&f, -8, hi).unwrap(), None);
        }
    }
}
