//! Windowed two-variable formal distributions Σ c_{e₁,e₂}(ℏ) x₁^{e₁} x₂^{e₂}.
//!
//! A distribution carries a rectangle of exponents on which every coefficient is
//! known exactly; coefficients outside it are unknown.  Comparisons are only made on
//! a caller-supplied safe rectangle, which must lie inside both operands' windows.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::rational::{Expansion, LaurentQ, RatExpr, UPoly};
use crate::report::{CheckReport, IdentityResult, Truncation};
use crate::scalar::{rat_int, CycScalar, Rat};
use crate::series::{HSeries, SeriesCtx, SeriesError};

/// Exponent bound standing for "no limit" in a window.
pub const UNBOUNDED: i64 = i64::MAX / 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("window too small: requested {what} outside the exactly known rectangle")]
    Window { what: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Closed exponent rectangle `[lo1, hi1] × [lo2, hi2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rect {
    pub lo1: i64,
    pub hi1: i64,
    pub lo2: i64,
    pub hi2: i64,
}

impl Rect {
    pub const ALL: Rect = Rect { lo1: -UNBOUNDED, hi1: UNBOUNDED, lo2: -UNBOUNDED, hi2: UNBOUNDED };

    pub fn square(m: i64) -> Self {
        Rect { lo1: -m, hi1: m, lo2: -m, hi2: m }
    }

    pub fn contains(&self, e1: i64, e2: i64) -> bool {
        (self.lo1..=self.hi1).contains(&e1) && (self.lo2..=self.hi2).contains(&e2)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.lo1 <= other.lo1 && other.hi1 <= self.hi1 && self.lo2 <= other.lo2 && other.hi2 <= self.hi2
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect {
            lo1: self.lo1.max(other.lo1),
            hi1: self.hi1.min(other.hi1),
            lo2: self.lo2.max(other.lo2),
            hi2: self.hi2.min(other.hi2),
        }
    }

    pub fn shifted(&self, a: i64, b: i64) -> Rect {
        let sh = |v: i64, d: i64| if v.abs() >= UNBOUNDED { v } else { v + d };
        Rect { lo1: sh(self.lo1, a), hi1: sh(self.hi1, a), lo2: sh(self.lo2, b), hi2: sh(self.hi2, b) }
    }
}

/// Coefficients are ℏ-series stored as `Vec` of length H+1.
#[derive(Clone, Debug, PartialEq)]
pub struct BiDist {
    ctx: SeriesCtx,
    window: Rect,
    terms: BTreeMap<(i64, i64), Vec<CycScalar>>,
}

/// First differing entry of two distributions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiMismatch {
    pub x1: i64,
    pub x2: i64,
    pub h: usize,
    pub lhs: CycScalar,
    pub rhs: CycScalar,
}

impl std::fmt::Display for BiMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x1^{} x2^{} hbar^{}: lhs {} rhs {}", self.x1, self.x2, self.h, self.lhs, self.rhs)
    }
}

fn hvec_zero(ctx: SeriesCtx) -> Vec<CycScalar> {
    vec![CycScalar::zero(ctx.order); ctx.hbar_order + 1]
}

fn hvec_mul(ctx: SeriesCtx, a: &[CycScalar], b: &[CycScalar]) -> Vec<CycScalar> {
    let mut out = hvec_zero(ctx);
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(ctx.hbar_order + 1 - i) {
            out[i + j] += &(x * y);
        }
    }
    out
}

/// The ℏ-coefficients of an x-constant series.
pub fn hbar_coeffs(s: &HSeries) -> Result<Vec<CycScalar>, SeriesError> {
    (0..=s.hbar_order()).map(|k| s.coeff(k, 0)).collect()
}

impl BiDist {
    pub fn zero(ctx: SeriesCtx, window: Rect) -> Self {
        Self { ctx, window, terms: BTreeMap::new() }
    }

    pub fn ctx(&self) -> SeriesCtx {
        self.ctx
    }

    pub fn window(&self) -> Rect {
        self.window
    }

    /// Adds `c(ℏ) x₁^{e1} x₂^{e2}`.
    pub fn add_term(&mut self, e1: i64, e2: i64, c: &[CycScalar]) {
        let entry = self.terms.entry((e1, e2)).or_insert_with(|| hvec_zero(self.ctx));
        for (k, v) in c.iter().enumerate().take(self.ctx.hbar_order + 1) {
            entry[k] += v;
        }
        if entry.iter().all(CycScalar::is_zero) {
            self.terms.remove(&(e1, e2));
        }
    }

    /// Coefficient at (e1, e2); outside the window it is a window error.
    pub fn coeff(&self, e1: i64, e2: i64) -> Result<Vec<CycScalar>, DistError> {
        if !self.window.contains(e1, e2) {
            return Err(DistError::Window { what: format!("x1^{e1} x2^{e2}") });
        }
        Ok(self.terms.get(&(e1, e2)).cloned().unwrap_or_else(|| hvec_zero(self.ctx)))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(i64, i64), &Vec<CycScalar>)> {
        self.terms.iter()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.ctx, self.window.intersect(&other.window));
        for src in [self, other] {
            for (&(a, b), c) in &src.terms {
                out.add_term(a, b, c);
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(&[-CycScalar::one(self.ctx.order)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Multiplication by an ℏ-series given by its coefficients.
    pub fn scale(&self, s: &[CycScalar]) -> Self {
        let mut out = Self::zero(self.ctx, self.window);
        for (&(a, b), c) in &self.terms {
            out.add_term(a, b, &hvec_mul(self.ctx, c, s));
        }
        out
    }

    /// Multiplication by a finite sum Σ s_t(ℏ) x₁^{a_t} x₂^{b_t}.
    pub fn mul_poly(&self, poly: &[(i64, i64, Vec<CycScalar>)]) -> Self {
        let mut window = Rect::ALL;
        for (a, b, _) in poly {
            window = window.intersect(&self.window.shifted(*a, *b));
        }
        let mut out = Self::zero(self.ctx, window);
        for (a, b, s) in poly {
            for (&(e1, e2), c) in &self.terms {
                out.add_term(e1 + a, e2 + b, &hvec_mul(self.ctx, c, s));
            }
        }
        out
    }

    /// (x₂∂_{x₂})^j.
    pub fn x2_deriv_pow(&self, j: u32) -> Self {
        let mut out = Self::zero(self.ctx, self.window);
        for (&(a, b), c) in &self.terms {
            let f = CycScalar::from_rat(self.ctx.order, rat_int(b).pow(j as i32));
            out.add_term(a, b, &c.iter().map(|v| v * &f).collect::<Vec<_>>());
        }
        out
    }

    /// x₂ ↦ q^c x₂.
    pub fn q_scale_x2(&self, c: &Rat) -> Result<Self, SeriesError> {
        let mut out = Self::zero(self.ctx, self.window);
        for (&(a, b), v) in &self.terms {
            let q = hbar_coeffs(&HSeries::q_pow(self.ctx, &(c * rat_int(b))))?;
            out.add_term(a, b, &hvec_mul(self.ctx, v, &q));
        }
        Ok(out)
    }

    /// The x₁^{e} coefficient as a distribution in x₂ (an HSeries in x₂ over the window).
    pub fn x1_coeff(&self, e: i64) -> Result<HSeries, DistError> {
        if e < self.window.lo1 || e > self.window.hi1 {
            return Err(DistError::Window { what: format!("x1^{e}") });
        }
        let hi = self.window.hi2.min(self.ctx.x_cap);
        let mut terms = Vec::new();
        for (&(a, b), c) in &self.terms {
            if a == e && b <= hi {
                for (k, v) in c.iter().enumerate() {
                    if !v.is_zero() {
                        terms.push((k, b, v.clone()));
                    }
                }
            }
        }
        Ok(HSeries::from_terms(self.ctx, &terms).truncate_x(hi))
    }

    /// Res_{x₁}: the coefficient of x₁^{-1}.
    pub fn residue_x1(&self) -> Result<HSeries, DistError> {
        self.x1_coeff(-1)
    }
}

/// (x₂∂_{x₂})^j δ(a·x₂/x₁) with a = ζ q^c, truncated to |n| ≤ M.
pub fn delta_window(ctx: SeriesCtx, zeta: &CycScalar, c: &Rat, j: u32, m: i64) -> Result<BiDist, SeriesError> {
    let mut d = BiDist::zero(ctx, Rect::square(m));
    for n in -m..=m {
        let zn = zeta.pow(n)?;
        let qn = hbar_coeffs(&HSeries::q_pow(ctx, &(c * rat_int(n))))?;
        let f = CycScalar::from_rat(ctx.order, rat_int(n).pow(j as i32));
        let coef: Vec<CycScalar> = qn.iter().map(|v| &(v * &zn) * &f).collect();
        d.add_term(-n, n, &coef);
    }
    Ok(d)
}

/// A rational function of u = x₂/x₁ expanded in the given direction, as a distribution
/// Σ c_n x₁^{-n} x₂^{n}; `m` bounds the expansion length.
pub fn expand_ratio(r: &RatExpr, dir: Expansion, ctx: SeriesCtx, m: i64) -> Result<BiDist, SeriesError> {
    let e = r.expand(dir, ctx, m)?;
    let window = match dir {
        Expansion::Iota12 => Rect { lo1: -e.hi, hi1: UNBOUNDED, lo2: -UNBOUNDED, hi2: e.hi },
        Expansion::Iota21 => Rect { lo1: -UNBOUNDED, hi1: -e.lo, lo2: e.lo, hi2: UNBOUNDED },
    };
    let mut d = BiDist::zero(ctx, window);
    for (n, s) in &e.coeffs {
        d.add_term(-n, *n, &hbar_coeffs(s)?);
    }
    Ok(d)
}

/// (ι₁₂ − ι₂₁) r(x₂/x₁).
pub fn iota_difference(r: &RatExpr, ctx: SeriesCtx, m: i64) -> Result<BiDist, SeriesError> {
    Ok(expand_ratio(r, Expansion::Iota12, ctx, m)?.sub(&expand_ratio(r, Expansion::Iota21, ctx, m)?))
}

/// Compares two distributions on `safe`; the safe rectangle must lie in both windows.
pub fn dist_equal(lhs: &BiDist, rhs: &BiDist, safe: &Rect) -> Result<Option<BiMismatch>, DistError> {
    for (name, d) in [("lhs", lhs), ("rhs", rhs)] {
        if !d.window.contains_rect(safe) {
            return Err(DistError::Window { what: format!("safe window {safe:?} not inside {name} window {:?}", d.window) });
        }
    }
    let keys: std::collections::BTreeSet<(i64, i64)> =
        lhs.terms.keys().chain(rhs.terms.keys()).copied().filter(|&(a, b)| safe.contains(a, b)).collect();
    for (a, b) in keys {
        let (l, r) = (lhs.coeff(a, b)?, rhs.coeff(a, b)?);
        if let Some(h) = (0..l.len()).find(|&k| l[k] != r[k]) {
            return Ok(Some(BiMismatch { x1: a, x2: b, h, lhs: l[h].clone(), rhs: r[h].clone() }));
        }
    }
    Ok(None)
}

/// Σ_{n} n^j u^n as a rational function: 1/(1−u) for j = 0 and u·A_j(u)/(1−u)^{j+1}
/// with the Eulerian polynomial A_j otherwise.
pub fn eulerian_ratio(j: u32) -> RatExpr {
    let lq = |c: i64| LaurentQ::scalar(CycScalar::from_int(1, c));
    let num: Vec<LaurentQ> = if j == 0 {
        vec![lq(1)]
    } else {
        let jj = j as i64;
        let binom = |n: i64, k: i64| (0..k).fold(1i64, |acc, t| acc * (n - t) / (t + 1));
        let mut c = vec![lq(0)];
        for k in 0..jj {
            let e: i64 = (0..=k).map(|i| (if i % 2 == 0 { 1 } else { -1 }) * binom(jj + 1, i) * (k + 1 - i).pow(j)).sum();
            c.push(lq(e));
        }
        c
    };
    let mut den = UPoly::constant(lq(1));
    for _ in 0..=j {
        den = den.mul(&UPoly::new(1, vec![lq(1), lq(-1)]));
    }
    RatExpr::new(UPoly::new(1, num), den)
}

/// (ι₁₂ − ι₂₁) of Σ n^j u^n against (x₂∂_{x₂})^j δ(x₂/x₁) on the square |n| ≤ m.
pub fn delta_identity_results(ctx: SeriesCtx, j_max: u32, m: i64) -> Vec<IdentityResult> {
    let one = CycScalar::one(ctx.order);
    (0..=j_max)
        .map(|j| {
            let name = format!("delta (iota12 - iota21) j={j}");
            let lhs = iota_difference(&eulerian_ratio(j), ctx, 2 * m);
            let rhs = delta_window(ctx, &one, &Rat::from_integer(0.into()), j, m);
            match (lhs, rhs) {
                (Ok(l), Ok(r)) => match dist_equal(&l, &r, &Rect::square(m)) {
                    Ok(mm) => IdentityResult::from_mismatch(name, mm.map(|x| x.to_string()), ((2 * m + 1) * (2 * m + 1)) as usize),
                    Err(e) => IdentityResult::skipped(name, e.to_string()),
                },
                (Err(e), _) | (_, Err(e)) => IdentityResult::fail(name, e.to_string()),
            }
        })
        .collect()
}

/// Converts an exact K[q, q⁻¹] coefficient to its ℏ-vector.
pub fn laurent_hvec(l: &LaurentQ, ctx: SeriesCtx) -> Result<Vec<CycScalar>, SeriesError> {
    hbar_coeffs(&l.to_series(ctx))
}

/// Res_z (P(∂_z) z^{-r-1}) e^{zx} computed by expanding both factors as a two-variable
/// distribution (x₁ = z, x₂ = x) and extracting the z^{-1} coefficient.
pub fn residue_fact_lhs(p: &[Rat], r: u32, ctx: SeriesCtx) -> Result<HSeries, DistError> {
    let n_max = r as i64 + p.len() as i64 + 4;
    // e^{zx} = Σ_n z^n x^n / n!
    let mut ezx = BiDist::zero(ctx, Rect { lo1: -UNBOUNDED, hi1: n_max, lo2: -UNBOUNDED, hi2: n_max });
    let mut fact = Rat::from_integer(1.into());
    for n in 0..=n_max {
        if n > 0 {
            fact *= rat_int(n);
        }
        let mut c = hvec_zero(ctx);
        c[0] = CycScalar::from_rat(ctx.order, fact.recip());
        ezx.add_term(n, n, &c);
    }
    // P(∂_z) z^{-r-1} = Σ_i p_i (−r−1)(−r−2)…(−r−i) z^{-r-1-i}
    let mut poly = Vec::new();
    for (i, pi) in p.iter().enumerate() {
        let mut falling = Rat::from_integer(1.into());
        for t in 0..i as i64 {
            falling *= rat_int(-(r as i64) - 1 - t);
        }
        let mut c = hvec_zero(ctx);
        c[0] = CycScalar::from_rat(ctx.order, pi * falling);
        poly.push((-(r as i64) - 1 - i as i64, 0, c));
    }
    ezx.mul_poly(&poly).residue_x1()
}

/// x^r P(−x) / r!.
pub fn residue_fact_rhs(p: &[Rat], r: u32, ctx: SeriesCtx) -> HSeries {
    let r_fact: Rat = (1..=r as i64).fold(Rat::from_integer(1.into()), |a, t| a * rat_int(t));
    let mut acc = HSeries::zero(ctx);
    for (i, pi) in p.iter().enumerate() {
        let sign = if i % 2 == 0 { rat_int(1) } else { rat_int(-1) };
        let c = CycScalar::from_rat(ctx.order, pi * sign / &r_fact);
        acc = acc.add(&HSeries::monomial(ctx, c, 0, r as i64 + i as i64));
    }
    acc
}

/// Residue fact on a list of (P, r) cases, compared on x-powers 0..=r+deg P+2.
pub fn residue_report(cases: &[(Vec<Rat>, u32)]) -> CheckReport {
    let ctx = SeriesCtx::new(1, 0, 24);
    let mut rep = CheckReport::new("residue", "-", Truncation::series(0, 0, 16));
    for (n, (p, r)) in cases.iter().enumerate() {
        let name = format!("residue fact case {n} (r={r}, deg P={})", p.len().saturating_sub(1));
        let hi = *r as i64 + p.len() as i64 + 2;
        rep.push(match residue_fact_lhs(p, *r, ctx) {
            Ok(lhs) => crate::structure::compare_series(name, &lhs, &residue_fact_rhs(p, *r, ctx), 0, hi),
            Err(e) => IdentityResult::fail(name, e.to_string()),
        });
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn ctx() -> SeriesCtx {
        SeriesCtx::new(1, 3, 16)
    }

    #[test]
    fn classical_delta_identities() {
        let one = CycScalar::one(1);
        for j in 0..=3 {
            let lhs = iota_difference(&eulerian_ratio(j), ctx(), 12).unwrap();
            let rhs = delta_window(ctx(), &one, &rat(0, 1), j, 6).unwrap();
            assert_eq!(dist_equal(&lhs, &rhs, &Rect::square(6)).unwrap(), None, "j = {j}");
        }
    }

    #[test]
    fn delta_suite_passes() {
        assert!(delta_identity_results(ctx(), 3, 5).iter().all(|r| r.status == crate::report::Status::Pass));
    }

    #[test]
    fn delta_with_q_power() {
        let d = delta_window(ctx(), &CycScalar::one(1), &rat(-2, 1), 0, 2).unwrap();
        let c = d.coeff(-2, 2).unwrap();
        // e^{−4ℏ} = 1 − 4ℏ + 8ℏ² − 32/3 ℏ³
        let expect = [rat(1, 1), rat(-4, 1), rat(8, 1), rat(-32, 3)];
        for (k, v) in expect.iter().enumerate() {
            assert_eq!(c[k], CycScalar::from_rat(1, v.clone()));
        }
    }

    #[test]
    fn comparison_outside_window_is_refused() {
        let one = CycScalar::one(1);
        let d = delta_window(ctx(), &one, &rat(0, 1), 0, 2).unwrap();
        assert!(dist_equal(&d, &d, &Rect::square(3)).is_err());
        assert_eq!(dist_equal(&d, &d, &Rect::square(2)).unwrap(), None);
    }

    #[test]
    fn residue_fact_examples() {
        let c = SeriesCtx::new(1, 0, 16);
        // P = 1, r = 0: Res z^{-1} e^{zx} = 1.
        let lhs = residue_fact_lhs(&[rat(1, 1)], 0, c).unwrap();
        assert_eq!(lhs.first_mismatch(&HSeries::one(c), -2, 5).unwrap(), None);
        // P(t) = t, r = 1: Res (∂_z z^{-2}) e^{zx} = −x².
        let lhs = residue_fact_lhs(&[rat(0, 1), rat(1, 1)], 1, c).unwrap();
        let expect = HSeries::monomial(c, CycScalar::from_int(1, -1), 0, 2);
        assert_eq!(lhs.first_mismatch(&expect, -2, 5).unwrap(), None);
    }
}
