//! Structure series attached to a root datum: the matrix C(x), the ϑ_k series, the
//! ĥ-valued series η = η^f + η₀, the κ_{i,j}, the exchange functions g̃_{i,j}, the
//! polynomials F^±, G^±, f^±, p^±, and the normalizing constants B_i, together with
//! the identities relating them.

use num::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::rational::{exp_jx, Homog, LaurentQ, RatExpr, UPoly};
use crate::report::{CheckReport, IdentityResult, Truncation};
use crate::roots::{orbit_data, OrbitData, RootDatum};
use crate::scalar::{rat, rat_int, CycScalar, Rat};
use crate::series::{HSeries, SeriesCtx, SeriesError, ShiftMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("internal consistency error: {0}")]
    Internal(String),
}

/// Deliberate table corruptions used as negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Corruption {
    pub epsilon: Option<(usize, usize)>,
    pub kappa: Option<(usize, usize)>,
    pub g: Option<(usize, usize)>,
}

impl Corruption {
    pub fn is_clean(&self) -> bool {
        *self == Self::default()
    }

    /// Applies the ε corruption to a datum.
    pub fn apply_to(&self, datum: &mut RootDatum) {
        if let Some((i, j)) = self.epsilon {
            datum.corrupt_epsilon(i, j);
        }
    }
}

/// Polynomial data of a pair (i, j) and sign ±.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPolys {
    pub f_big: Homog,
    pub g_big: Homog,
    /// Denominator Π_{k: μ^k(i)=j}(x₁ − ξ^{−k}x₂) of f^± = F^±/den.
    pub f_den: Homog,
    pub p: Homog,
}

/// All structure series for one datum at a fixed truncation.
#[derive(Clone, Debug)]
pub struct StructureTables {
    pub datum: RootDatum,
    pub orbit: OrbitData,
    pub ctx: SeriesCtx,
    /// Largest x-exponent certified for comparisons.
    pub x_order: i64,
    pub c: Vec<Vec<HSeries>>,
    pub vartheta: Vec<HSeries>,
    /// (ξ^k e^x + 1)/(ξ^k e^x − 1).
    pub kernel: Vec<HSeries>,
    /// η^f(α_i, x) and η₀(α_i, x) as components on the basis α_r.
    pub eta_f: Vec<Vec<HSeries>>,
    pub eta_0: Vec<Vec<HSeries>>,
    pub kappa: Vec<Vec<HSeries>>,
    pub g_tilde: Vec<Vec<RatExpr>>,
    /// Index 0 is the + sign, index 1 the − sign.
    pub polys: Vec<Vec<[PairPolys; 2]>>,
    pub b: Vec<HSeries>,
    pub corruption: Corruption,
}

/// Extra x-precision carried through the computation beyond the certified order.
fn working_cap(hbar_order: usize, x_order: i64) -> i64 {
    x_order + 3 * hbar_order as i64 + 6
}

fn sc(order: u32, q: Rat) -> CycScalar {
    CycScalar::from_rat(order, q)
}

fn factorial(n: i64) -> Rat {
    (1..=n).fold(Rat::one(), |a, t| a * rat_int(t))
}

/// ϑ_k(x) as an x-Taylor series.
pub fn vartheta(ctx: SeriesCtx, k: i64) -> Result<HSeries, SeriesError> {
    let n = ctx.order;
    let cap = ctx.x_cap.max(0);
    let inner = if k.rem_euclid(n as i64) == 0 {
        // (e^{x/2} − e^{−x/2})/x = Σ_{m odd} 2^{1−m} x^{m−1}/m!
        let coeffs = (0..=cap)
            .map(|e| {
                if e % 2 == 0 {
                    sc(n, rat(1, 1) / (num::pow(rat_int(2), e as usize) * factorial(e + 1)))
                } else {
                    CycScalar::zero(n)
                }
            })
            .collect();
        HSeries::from_x_coeffs(ctx, 0, coeffs, cap)
    } else {
        let xk = CycScalar::xi_pow(n, k);
        let denom = (&xk - &CycScalar::one(n)).inverse()?;
        let coeffs = (0..=cap)
            .map(|e| {
                let sign = if e % 2 == 0 { CycScalar::one(n) } else { -CycScalar::one(n) };
                let base = num::pow(rat(1, 2), e as usize) / factorial(e);
                &(&xk - &sign) * &denom.scale(&base)
            })
            .collect();
        HSeries::from_x_coeffs(ctx, 0, coeffs, cap)
    };
    inner.log()
}

/// (ξ^k e^x + 1)/(ξ^k e^x − 1) as a Laurent series in x.
pub fn coth_kernel(ctx: SeriesCtx, k: i64) -> Result<HSeries, SeriesError> {
    let ex = exp_jx(ctx, 1).scale(&CycScalar::xi_pow(ctx.order, k));
    let one = HSeries::one(ctx);
    ex.add(&one).div(&ex.sub(&one))
}

/// Π_{s}(1 + (s+1)ℏ/x) over the shifts of [a], inverted for a < 0: the factor
/// exp(([a]_{q^∂}q^∂ − a) log x).
pub fn log_correction(ctx: SeriesCtx, a: i64) -> Result<HSeries, SeriesError> {
    let mut acc = HSeries::one(ctx);
    for s in crate::series::qbracket_shifts(a.abs()) {
        let f = HSeries::one(ctx).add(&HSeries::monomial(ctx, CycScalar::from_int(ctx.order, s + 1), 1, -1));
        acc = acc.mul(&f);
    }
    if a < 0 {
        acc.inverse()
    } else {
        Ok(acc)
    }
}

/// [a]_{q^∂} q^∂ applied additively.
fn qbracket_shift(s: &HSeries, a: i64) -> HSeries {
    s.qbracket(a, ShiftMode::Additive).hbar_shift(&Rat::one())
}

/// Exact polynomial c·x₁^{d1}x₂^{d2} as a homogeneous polynomial.
fn homog_monomial(c: LaurentQ, d1: usize, d2: usize) -> Homog {
    Homog::new(d1 + d2, UPoly::monomial(c, d2))
}

fn lq(order: u32, c: CycScalar, qpow: i64) -> LaurentQ {
    LaurentQ::monomial(c.with_order(order).unwrap_or(c), qpow)
}

fn homog_pow(h: &Homog, e: usize, order: u32) -> Homog {
    (0..e).fold(Homog::one(order), |acc, _| acc.mul(h))
}

/// g̃_{i,j}(u) = Π_k (q^a − ξ^{−k}u)/(1 − q^a ξ^{−k}u), a = a_{μ^k(i),j}.
pub fn g_tilde(dt: &RootDatum, i: usize, j: usize) -> RatExpr {
    let n = dt.n;
    let mut r = RatExpr::one(n);
    for k in 0..n as i64 {
        let a = dt.a_mu(i, k, j);
        if a == 0 {
            continue;
        }
        let xk = CycScalar::xi_pow(n, -k);
        let num = UPoly::new(n, vec![lq(n, CycScalar::one(n), a), lq(n, -&xk, 0)]);
        let den = UPoly::new(n, vec![LaurentQ::one(n), lq(n, -&xk, a)]);
        r = r.mul(&RatExpr::new(num, den));
    }
    r
}

/// F^±, G^±, the f^± denominator and p^± for (i, j); `sign` is ±1.
pub fn pair_polys(dt: &RootDatum, orbit: &OrbitData, i: usize, j: usize, sign: i64) -> PairPolys {
    let n = dt.n;
    let one = CycScalar::one(n);
    let mut f_big = Homog::one(n);
    let mut g_big = Homog::one(n);
    let mut f_den = Homog::one(n);
    for k in 0..n as i64 {
        let a = dt.a_mu(i, k, j);
        let xk = CycScalar::xi_pow(n, -k);
        if a != 0 {
            f_big = f_big.mul(&Homog::linear(LaurentQ::one(n), lq(n, -&xk, sign * a)));
            g_big = g_big.mul(&Homog::linear(lq(n, one.clone(), sign * a), lq(n, -&xk, 0)));
        }
        if dt.mu_pow(i, k) == j {
            f_den = f_den.mul(&Homog::linear(LaurentQ::one(n), lq(n, -&xk, 0)));
        }
    }
    let (di, si, dij) = (orbit.d[i], orbit.s[i], orbit.d_pair[i][j]);
    let p = if dij == 0 {
        Homog::new(0, UPoly::zero(n))
    } else {
        let lead = homog_monomial(LaurentQ::one(n), di, 0)
            .add(&homog_monomial(lq(n, one.clone(), -sign * di as i64), 0, di));
        let m = dij / di;
        let mut geo = Homog::new(di * (m - 1), UPoly::zero(n));
        for r in 0..m {
            let e1 = di * (m - 1 - r);
            let term = homog_monomial(lq(n, one.clone(), 2 * sign * (di * (m - 1 - r)) as i64), e1, di * r);
            geo = geo.add(&term);
        }
        homog_pow(&lead, si - 1, n).mul(&geo)
    };
    PairPolys { f_big, g_big, f_den, p }
}

fn hvec_from(s: &HSeries) -> Vec<CycScalar> {
    (0..=s.hbar_order()).map(|k| s.coeff(k, 0).unwrap_or_else(|_| CycScalar::zero(s.order()))).collect()
}

/// sinh(rℏ)/ℏ as an ℏ-series.
fn sinh_over_hbar(ctx: SeriesCtx, r: &Rat) -> HSeries {
    let coeffs: Vec<CycScalar> = (0..=ctx.hbar_order as i64)
        .map(|k| {
            if k % 2 == 0 {
                sc(ctx.order, num::pow(r.clone(), (k + 1) as usize) / factorial(k + 1))
            } else {
                CycScalar::zero(ctx.order)
            }
        })
        .collect();
    HSeries::from_hbar_coeffs(ctx, &coeffs)
}

/// [r]_q = (q^r − q^{−r})/(q − q^{−1}) for rational r.
pub fn q_number(ctx: SeriesCtx, r: &Rat) -> Result<HSeries, SeriesError> {
    sinh_over_hbar(ctx, r).div(&sinh_over_hbar(ctx, &Rat::one()))
}

impl StructureTables {
    /// Builds every table for `datum` to ℏ-order `hbar_order`, certified through x^`x_order`.
    pub fn compute(datum: &RootDatum, hbar_order: usize, x_order: i64, corruption: Corruption) -> Result<Self, StructureError> {
        let mut datum = datum.clone();
        corruption.apply_to(&mut datum);
        let dt = &datum;
        let n = dt.n;
        let l = dt.rank;
        let ctx = SeriesCtx::new(n, hbar_order, working_cap(hbar_order, x_order));
        let orbit = orbit_data(dt);

        // C(x) = (e^x A(x) − A) A⁻¹ x⁻¹.
        let e2 = exp_jx(ctx, 2);
        let e1 = exp_jx(ctx, 1);
        let one = HSeries::one(ctx);
        let m: Vec<Vec<HSeries>> = (0..l)
            .map(|i| {
                (0..l)
                    .map(|j| match dt.a(i, j) {
                        2 => e2.sub(&one),
                        -1 => one.sub(&e1),
                        _ => HSeries::zero(ctx),
                    })
                    .collect()
            })
            .collect();
        let mut c = vec![vec![HSeries::zero(ctx); l]; l];
        for i in 0..l {
            for j in 0..l {
                let mut acc = HSeries::zero(ctx);
                for r in 0..l {
                    if !dt.cartan_inv[r][j].is_zero() {
                        acc = acc.add(&m[i][r].scale_rat(&dt.cartan_inv[r][j]));
                    }
                }
                if !acc.coeff(0, 0)?.is_zero() {
                    return Err(StructureError::Internal(format!("C({i},{j}): x^0 term before division by x")));
                }
                c[i][j] = acc.mul_x_pow(-1);
            }
        }

        let vartheta = (0..n as i64).map(|k| vartheta(ctx, k)).collect::<Result<Vec<_>, _>>()?;
        let kernel = (0..n as i64).map(|k| coth_kernel(ctx, k)).collect::<Result<Vec<_>, _>>()?;

        // η^f(α_i)_r = ½ Σ_k Σ_{j: μ^k(j)=r} Σ_n c_{ij,n} ℏ^{n+1} K_k^{(n)}.
        let kernel_derivs: Vec<Vec<HSeries>> = kernel
            .iter()
            .map(|kk| {
                let mut v = vec![kk.clone()];
                for t in 1..hbar_order {
                    v.push(v[t - 1].deriv());
                }
                v
            })
            .collect();
        let half = rat(1, 2);
        let mut eta_f = vec![vec![HSeries::zero(ctx); l]; l];
        let mut eta_0 = vec![vec![HSeries::zero(ctx); l]; l];
        for i in 0..l {
            for k in 0..n as i64 {
                for j in 0..l {
                    let r = dt.mu_pow(j, k);
                    let mut acc = HSeries::zero(ctx);
                    for (t, kd) in kernel_derivs[k as usize].iter().enumerate() {
                        let cij = c[i][j].coeff(0, t as i64)?;
                        if !cij.is_zero() {
                            acc = acc.add(&kd.scale(&cij).mul_hbar_pow(t + 1));
                        }
                    }
                    eta_f[i][r] = eta_f[i][r].add(&acc.scale_rat(&half));
                }
                let r = dt.mu_pow(i, k);
                eta_0[i][r] = eta_0[i][r].add(&vartheta[k as usize]);
            }
        }

        let mut kappa = vec![vec![HSeries::zero(ctx); l]; l];
        for i in 0..l {
            for j in 0..l {
                let mut acc = HSeries::zero(ctx);
                for k in 0..n as i64 {
                    let a = dt.a_mu(i, k, j);
                    if a != 0 {
                        acc = acc.add(&qbracket_shift(&vartheta[k as usize], a));
                    }
                }
                kappa[i][j] = acc.exp()?;
            }
        }
        if let Some((i, j)) = corruption.kappa {
            let bump = HSeries::one(ctx).add(&HSeries::monomial(ctx, CycScalar::one(n), 2, 2));
            kappa[i][j] = kappa[i][j].mul(&bump);
        }

        let mut g_tab: Vec<Vec<RatExpr>> = (0..l).map(|i| (0..l).map(|j| g_tilde(dt, i, j)).collect()).collect();
        if let Some((i, j)) = corruption.g {
            let g = &g_tab[i][j];
            g_tab[i][j] = RatExpr::new(g.num.scale(&LaurentQ::one(n).shift(1)), g.den.clone());
        }

        let polys = (0..l)
            .map(|i| (0..l).map(|j| [pair_polys(dt, &orbit, i, j, 1), pair_polys(dt, &orbit, i, j, -1)]).collect())
            .collect();

        let s_series = sinh_over_hbar(ctx, &Rat::one());
        let mut b = Vec::with_capacity(l);
        for i in 0..l {
            let k0 = kappa[i][i].eval_x_zero()?;
            b.push(k0.sqrt()?.div(&s_series.sqrt()?)?);
        }

        Ok(Self {
            orbit,
            ctx,
            x_order,
            c,
            vartheta,
            kernel,
            eta_f,
            eta_0,
            kappa,
            g_tilde: g_tab,
            polys,
            b,
            corruption,
            datum,
        })
    }

    pub fn rank(&self) -> usize {
        self.datum.rank
    }

    /// η(α_i, x) component on α_r.
    pub fn eta(&self, i: usize, r: usize) -> HSeries {
        self.eta_f[i][r].add(&self.eta_0[i][r])
    }

    /// ⟨η(α_i, x), α_j⟩.
    pub fn eta_pair(&self, i: usize, j: usize) -> HSeries {
        let mut acc = HSeries::zero(self.ctx);
        for r in 0..self.rank() {
            let a = self.datum.a(r, j);
            if a != 0 {
                acc = acc.add(&self.eta(i, r).scale_rat(&rat_int(a)));
            }
        }
        acc
    }

    /// ⟨η₀(α_i, x), α_j⟩.
    pub fn eta0_pair(&self, i: usize, j: usize) -> HSeries {
        let mut acc = HSeries::zero(self.ctx);
        for r in 0..self.rank() {
            let a = self.datum.a(r, j);
            if a != 0 {
                acc = acc.add(&self.eta_0[i][r].scale_rat(&rat_int(a)));
            }
        }
        acc
    }

    /// B_i².
    pub fn b_squared(&self, i: usize) -> HSeries {
        self.b[i].mul(&self.b[i])
    }

    fn truncation(&self) -> Truncation {
        Truncation::series(self.ctx.hbar_order, -(self.ctx.hbar_order as i64) - 2, self.x_order)
    }

    fn compare(&self, name: String, lhs: &HSeries, rhs: &HSeries) -> IdentityResult {
        let lo = -(self.ctx.hbar_order as i64) - 2;
        compare_series(name, lhs, rhs, lo, self.x_order)
    }

    /// C-matrix, ϑ and η identities.
    pub fn check_cmatrix(&self) -> CheckReport {
        let dt = &self.datum;
        let l = self.rank();
        let n = dt.n as i64;
        let x_hi = self.x_order;
        CheckReport::new("cmatrix", dt.label() + "/" + &dt.mu_spec.to_string(), self.truncation()).timed(|rep| {
            for i in 0..l {
                for j in 0..l {
                    let expect = if i == j { CycScalar::one(dt.n) } else { CycScalar::zero(dt.n) };
                    let got = self.c[i][j].coeff(0, 0);
                    rep.push(IdentityResult::from_bool(format!("c[{i},{j}](0)=delta"), got.as_ref() == Ok(&expect), || {
                        format!("x^0 coefficient {got:?}")
                    }));
                    let minv_j = dt.mu_pow(j, -1);
                    rep.push(self.compare(format!("c[mu({i}),{j}]=c[{i},mu^-1({j})]"), &self.c[dt.mu[i]][j], &self.c[i][minv_j]));
                }
            }
            for k in 0..n {
                let th = &self.vartheta[k as usize];
                let at0 = th.coeff(0, 0);
                rep.push(IdentityResult::from_bool(format!("vartheta[{k}](0)=0"), at0.map(|c| c.is_zero()).unwrap_or(false), || {
                    "nonzero constant term".into()
                }));
                let other = &self.vartheta[(-k).rem_euclid(n) as usize];
                rep.push(compare_series(format!("vartheta[{k}](x)=vartheta[-{k}](-x)"), th, &other.neg_x(), 0, x_hi));
                let mut rhs = self.kernel[k as usize].scale_rat(&rat(1, 2));
                if k == 0 {
                    rhs = rhs.sub(&HSeries::monomial(self.ctx, CycScalar::one(dt.n), 0, -1));
                }
                rep.push(compare_series(format!("d/dx vartheta[{k}] closed form"), &th.deriv(), &rhs, -1, x_hi - 1));
            }
            for i in 0..l {
                for r in 0..l {
                    let ef0 = self.eta_f[i][r].truncate_hbar(0);
                    rep.push(IdentityResult::from_bool(format!("eta_f[{i}]_{r} vanishes at hbar=0"), ef0.is_zero(), || {
                        "nonzero hbar^0 layer".into()
                    }));
                    let lhs = &self.eta_f[dt.mu[i]][dt.mu[r]];
                    rep.push(self.compare(format!("(mu x 1)eta_f(alpha_{i})_{r}=eta_f(mu alpha_{i})"), lhs, &self.eta_f[i][r]));
                }
                for j in 0..l {
                    let lhs = self.eta0_pair(i, j);
                    let rhs = self.eta0_pair(j, i).neg_x();
                    rep.push(compare_series(format!("<eta0(a{i},x),a{j}>=<a{i},eta0(a{j},-x)>"), &lhs, &rhs, 0, x_hi));
                }
            }
        })
    }

    /// κ identities: reconstruction from ⟨η,·⟩, the κ/g ratio identity and the shift identity.
    pub fn check_kappa(&self) -> CheckReport {
        let dt = &self.datum;
        let l = self.rank();
        CheckReport::new("kappa", dt.label() + "/" + &dt.mu_spec.to_string(), self.truncation()).timed(|rep| {
            for i in 0..l {
                for j in 0..l {
                    let k = &self.kappa[i][j];
                    let c00 = k.coeff(0, 0);
                    rep.push(IdentityResult::from_bool(format!("kappa[{i},{j}](0)=1 at hbar=0"), c00.map(|c| c.is_one()).unwrap_or(false), || {
                        "constant term is not 1".into()
                    }));
                    let a = dt.a(i, j);
                    let recon = self
                        .eta_pair(i, j)
                        .exp()
                        .and_then(|lhs| Ok((lhs, k.mul(&log_correction(self.ctx, a)?))));
                    rep.push(match recon {
                        Ok((lhs, rhs)) => self.compare(format!("exp<eta(a{i}),a{j}>=kappa[{i},{j}]*corr"), &lhs, &rhs),
                        Err(e) => IdentityResult::fail(format!("exp<eta(a{i}),a{j}>=kappa[{i},{j}]*corr"), e.to_string()),
                    });
                    rep.push(self.ratio_identity(i, j));
                    let lhs = k.hbar_shift(&rat_int(-2));
                    let rhs = self.kappa[j][i].neg_x();
                    rep.push(self.compare(format!("kappa[{i},{j}](x-2h)=kappa[{j},{i}](-x)"), &lhs, &rhs));
                }
            }
        })
    }

    /// κ_{i,j}(−x)κ_{j,i}(x)⁻¹(x − aℏ)/(x + aℏ) = g_{i,j}(e^x).
    fn ratio_identity(&self, i: usize, j: usize) -> IdentityResult {
        let name = format!("kappa[{i},{j}](-x)/kappa[{j},{i}](x)*(x-ah)/(x+ah)=g[{i},{j}](e^x)");
        let run = || -> Result<(HSeries, HSeries), SeriesError> {
            let ctx = self.ctx;
            let a = self.datum.a(i, j);
            let x_minus = HSeries::x(ctx).sub(&HSeries::monomial(ctx, CycScalar::from_int(ctx.order, a), 1, 0));
            let x_plus_inv = HSeries::one(ctx)
                .add(&HSeries::monomial(ctx, CycScalar::from_int(ctx.order, a), 1, -1))
                .inverse()?
                .mul_x_pow(-1);
            let lhs = self.kappa[i][j].neg_x().mul(&self.kappa[j][i].inverse()?).mul(&x_minus).mul(&x_plus_inv);
            let rhs = self.g_tilde[i][j].subst_exp(0, ctx)?;
            Ok((lhs, rhs))
        };
        match run() {
            Ok((lhs, rhs)) => self.compare(name, &lhs, &rhs),
            Err(e) => IdentityResult::fail(name, e.to_string()),
        }
    }

    /// Exact rational and polynomial identities (no truncation).
    pub fn check_rational(&self) -> CheckReport {
        let dt = &self.datum;
        let l = self.rank();
        let n = dt.n;
        let trunc = Truncation { hbar_order: 0, ..Truncation::default() };
        CheckReport::new("rational", dt.label() + "/" + &dt.mu_spec.to_string(), trunc).timed(|rep| {
            for i in 0..l {
                for j in 0..l {
                    let g = &self.g_tilde[i][j];
                    let prod = g.mul(&self.g_tilde[j][i].subst_inv_u());
                    rep.push(IdentityResult::from_bool(format!("g[{i},{j}](u)g[{j},{i}](1/u)=1"), prod.same_function(&RatExpr::one(n)), || {
                        format!("{prod:?}")
                    }));
                    let (num0, den0) = g.at_zero();
                    let abar = self.orbit.abar[i][j];
                    rep.push(IdentityResult::from_bool(format!("g[{i},{j}](0)=q^abar"), num0 == den0.shift(abar), || {
                        format!("{num0:?} / {den0:?}")
                    }));
                    let [plus, minus] = &self.polys[i][j];
                    let gf = plus.g_big.ratio(&plus.f_big);
                    rep.push(IdentityResult::from_bool(format!("g[{i},{j}](x2/x1)=G+/F+"), g.same_function(&gf), || {
                        format!("{g:?} vs {gf:?}")
                    }));
                    for (sgn, this, other) in [(1i64, plus, minus), (-1, minus, plus)] {
                        let tag = if sgn > 0 { "+" } else { "-" };
                        let rhs = other.f_big.scale(&LaurentQ::one(n).shift(sgn * abar));
                        rep.push(IdentityResult::from_bool(format!("G{tag}[{i},{j}]=q^({tag}abar)F{}[{i},{j}]", if sgn > 0 { "-" } else { "+" }), this.g_big == rhs, || {
                            format!("{:?} vs {:?}", this.g_big, rhs)
                        }));
                        let mut coef = CycScalar::one(n);
                        for k in 0..n as i64 {
                            if dt.a_mu(i, k, j) != 0 {
                                coef = &coef * &(-CycScalar::xi_pow(n, -k));
                            }
                        }
                        let swapped = self.polys[j][i][if sgn > 0 { 0 } else { 1 }].f_big.swap().scale(&LaurentQ::scalar(coef));
                        rep.push(IdentityResult::from_bool(format!("G{tag}[{i},{j}]=C F{tag}[{j},{i}](x2,x1)"), this.g_big == swapped, || {
                            format!("{:?} vs {:?}", this.g_big, swapped)
                        }));
                        rep.push(self.p_identity(i, j, sgn, &this.p));
                    }
                    if let Some(k) = (0..n as i64).find(|&k| dt.mu_pow(i, k) == j) {
                        let di = self.orbit.d[i];
                        let expect = homog_monomial(LaurentQ::one(n), di, 0)
                            .add(&homog_monomial(lq(n, -CycScalar::xi_pow(n, -k * di as i64), 0), 0, di));
                        rep.push(IdentityResult::from_bool(format!("f[{i},{j}] denominator=x1^d-xi^(-kd)x2^d"), plus.f_den == expect, || {
                            format!("{:?} vs {:?}", plus.f_den, expect)
                        }));
                    }
                }
            }
        })
    }

    /// p^±·(q^{±2d_i}x₁^{d_i} − x₂^{d_i}) = (x₁^{d_i} + q^{∓d_i}x₂^{d_i})^{s_i−1}(q^{±2d_ij}x₁^{d_ij} − x₂^{d_ij}).
    fn p_identity(&self, i: usize, j: usize, sgn: i64, p: &Homog) -> IdentityResult {
        let n = self.datum.n;
        let (di, si, dij) = (self.orbit.d[i], self.orbit.s[i], self.orbit.d_pair[i][j]);
        let one = CycScalar::one(n);
        let binom = |d: usize| {
            homog_monomial(lq(n, one.clone(), 2 * sgn * d as i64), d, 0)
                .add(&homog_monomial(lq(n, -&one, 0), 0, d))
        };
        let lhs = p.mul(&binom(di));
        let lead = homog_monomial(LaurentQ::one(n), di, 0).add(&homog_monomial(lq(n, one.clone(), -sgn * di as i64), 0, di));
        let rhs = homog_pow(&lead, si - 1, n).mul(&binom(dij));
        let ok = if lhs.is_zero() || rhs.is_zero() { lhs.is_zero() && rhs.is_zero() } else { lhs == rhs };
        let tag = if sgn > 0 { "+" } else { "-" };
        IdentityResult::from_bool(format!("p{tag}[{i},{j}] quotient"), ok, || format!("{lhs:?} vs {rhs:?}"))
    }

    /// B_i identities.
    pub fn check_b(&self) -> CheckReport {
        let dt = &self.datum;
        let ctx = self.ctx;
        CheckReport::new("bconst", dt.label() + "/" + &dt.mu_spec.to_string(), Truncation { hbar_order: ctx.hbar_order, ..Truncation::default() })
            .timed(|rep| {
                for i in 0..self.rank() {
                    let run = || -> Result<(HSeries, HSeries, HSeries, HSeries), SeriesError> {
                        let b2 = self.b_squared(i);
                        let k0 = self.kappa[i][i].eval_x_zero()?;
                        // B²·(2ℏ)⁻¹κ(0)⁻¹ = (q − q⁻¹)⁻¹, multiplied through by 2ℏ.
                        let lhs1 = b2.div(&k0)?;
                        let rhs1 = sinh_over_hbar(ctx, &Rat::one()).inverse()?;
                        let r = rat(self.orbit.d[i] as i64, self.orbit.s[i] as i64);
                        let rhs2 = q_number(ctx, &r)?.scale_rat(&r.recip());
                        Ok((lhs1, rhs1, b2, rhs2))
                    };
                    match run() {
                        Ok((l1, r1, l2, r2)) => {
                            rep.push(compare_series(format!("B[{i}]^2 (2h)^-1 kappa[{i},{i}](0)^-1=(q-q^-1)^-1"), &l1, &r1, 0, 0));
                            rep.push(compare_series(format!("B[{i}]^2=(s/d)[d/s]_q"), &l2, &r2, 0, 0));
                        }
                        Err(e) => rep.push(IdentityResult::fail(format!("B[{i}]"), e.to_string())),
                    }
                }
            })
    }

    /// JSON dump of the tables.
    pub fn to_json(&self) -> serde_json::Value {
        let l = self.rank();
        let mat = |m: &Vec<Vec<HSeries>>| serde_json::to_value(m).unwrap_or_default();
        let g: Vec<Vec<String>> = self.g_tilde.iter().map(|r| r.iter().map(|g| format!("{g:?}")).collect()).collect();
        let polys: Vec<serde_json::Value> = (0..l)
            .flat_map(|i| (0..l).map(move |j| (i, j)))
            .map(|(i, j)| {
                let [p, m] = &self.polys[i][j];
                serde_json::json!({
                    "i": i + 1, "j": j + 1,
                    "F+": format!("{:?}", p.f_big), "F-": format!("{:?}", m.f_big),
                    "G+": format!("{:?}", p.g_big), "G-": format!("{:?}", m.g_big),
                    "f_den": format!("{:?}", p.f_den),
                    "p+": format!("{:?}", p.p), "p-": format!("{:?}", m.p),
                })
            })
            .collect();
        let b2: Vec<Vec<String>> = (0..l).map(|i| hvec_from(&self.b_squared(i)).iter().map(|c| c.to_string()).collect()).collect();
        serde_json::json!({
            "datum": self.datum.dump(),
            "C": mat(&self.c),
            "vartheta": self.vartheta,
            "eta_f": mat(&self.eta_f),
            "eta_0": mat(&self.eta_0),
            "kappa": mat(&self.kappa),
            "g_tilde": g,
            "polynomials": polys,
            "B_squared": b2,
        })
    }
}

/// Coefficientwise comparison on x ∈ [lo, hi]; a window error means the comparison
/// could not be certified and is reported as skipped.
pub fn compare_series(name: String, lhs: &HSeries, rhs: &HSeries, lo: i64, hi: i64) -> IdentityResult {
    let count = (hi - lo + 1).max(0) as usize * (lhs.hbar_order() + 1);
    match lhs.first_mismatch(rhs, lo, hi) {
        Ok(None) => IdentityResult::pass(name, count),
        Ok(Some(m)) => IdentityResult::fail(name, m.to_string()),
        Err(e @ SeriesError::Window { .. }) => IdentityResult::skipped(name, e.to_string()),
        Err(e) => IdentityResult::fail(name, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roots::{builtin_data, datum_from_labels};

    fn ctx(order: u32, h: usize, x: i64) -> SeriesCtx {
        SeriesCtx::new(order, h, x)
    }

    fn q(n: i64, d: i64) -> CycScalar {
        CycScalar::from_rat(1, rat(n, d))
    }

    #[test]
    fn c11_for_a1() {
        let dt = datum_from_labels("A1", "identity").unwrap();
        let t = StructureTables::compute(&dt, 2, 6, Corruption::default()).unwrap();
        // (e^{2x} − 1)/(2x)
        for (m, v) in [(0, q(1, 1)), (1, q(1, 1)), (2, q(2, 3)), (3, q(1, 3)), (4, q(2, 15))] {
            assert_eq!(t.c[0][0].coeff(0, m).unwrap(), v);
        }
    }

    #[test]
    fn vartheta_examples() {
        let t0 = vartheta(ctx(1, 0, 8), 0).unwrap();
        assert_eq!(t0.coeff(0, 2).unwrap(), q(1, 24));
        assert_eq!(t0.coeff(0, 4).unwrap(), q(-1, 2880));
        assert!(t0.coeff(0, 3).unwrap().is_zero());
        let t1 = vartheta(ctx(2, 0, 8), 1).unwrap();
        assert_eq!(t1.coeff(0, 2).unwrap(), CycScalar::from_rat(2, rat(1, 8)));
        assert_eq!(t1.coeff(0, 4).unwrap(), CycScalar::from_rat(2, rat(-1, 192)));
        assert!(t1.coeff(0, 1).unwrap().is_zero());
    }

    #[test]
    fn kappa_a1_at_zero_is_sinh_ratio() {
        let dt = datum_from_labels("A1", "identity").unwrap();
        let t = StructureTables::compute(&dt, 6, 4, Corruption::default()).unwrap();
        let k0 = t.kappa[0][0].eval_x_zero().unwrap();
        let expect = [q(1, 1), q(0, 1), q(1, 6), q(0, 1), q(1, 120), q(0, 1), q(1, 5040)];
        for (k, v) in expect.iter().enumerate() {
            assert_eq!(&k0.coeff(k, 0).unwrap(), v);
        }
    }

    #[test]
    fn eta_a1_leading_term() {
        let dt = datum_from_labels("A1", "identity").unwrap();
        let t = StructureTables::compute(&dt, 3, 4, Corruption::default()).unwrap();
        let eta = t.eta(0, 0);
        assert_eq!(eta.coeff(1, -1).unwrap(), q(1, 1));
        assert_eq!(eta.coeff(0, 2).unwrap(), q(1, 24));
        // ½ℏ·c₁₁ at order ℏ²: c_{11,1}·(coth(x/2))' = −2x⁻²
        assert_eq!(eta.coeff(2, -2).unwrap(), q(-1, 1));
    }

    #[test]
    fn g_and_polys_for_a1() {
        let dt = datum_from_labels("A1", "identity").unwrap();
        let o = orbit_data(&dt);
        let g = g_tilde(&dt, 0, 0);
        let num = UPoly::new(1, vec![LaurentQ::one(1).shift(2), LaurentQ::scalar(-CycScalar::one(1))]);
        let den = UPoly::new(1, vec![LaurentQ::one(1), LaurentQ::scalar(-CycScalar::one(1)).shift(2)]);
        assert!(g.same_function(&RatExpr::new(num, den)));
        let pp = pair_polys(&dt, &o, 0, 0, 1);
        let f_expect = Homog::linear(LaurentQ::one(1), LaurentQ::scalar(-CycScalar::one(1)).shift(2));
        assert_eq!(pp.f_big, f_expect);
        let g_expect = Homog::linear(LaurentQ::one(1).shift(2), LaurentQ::scalar(-CycScalar::one(1)));
        assert_eq!(pp.g_big, g_expect);
        assert_eq!(pp.p, Homog::one(1));
    }

    #[test]
    fn q_number_half() {
        let c = ctx(1, 4, 0);
        let h = q_number(c, &rat(1, 2)).unwrap();
        // 1/(q^{1/2}+q^{-1/2}) = ½ − ℏ²/16 + …
        assert_eq!(h.coeff(0, 0).unwrap(), q(1, 2));
        assert_eq!(h.coeff(2, 0).unwrap(), q(-1, 16));
    }

    #[test]
    fn suites_pass_on_builtin_data() {
        for dt in builtin_data() {
            let t = StructureTables::compute(&dt, 4, 6, Corruption::default()).unwrap();
            for rep in [t.check_cmatrix(), t.check_kappa(), t.check_rational(), t.check_b()] {
                assert!(rep.passed(), "{}", rep.to_text());
            }
        }
    }

    #[test]
    fn corruptions_are_detected() {
        let dt = datum_from_labels("A2", "identity").unwrap();
        let bad_k = Corruption { kappa: Some((0, 1)), ..Corruption::default() };
        let t = StructureTables::compute(&dt, 3, 4, bad_k).unwrap();
        assert!(!t.check_kappa().passed());
        let bad_g = Corruption { g: Some((0, 1)), ..Corruption::default() };
        let t = StructureTables::compute(&dt, 3, 4, bad_g).unwrap();
        assert!(!t.check_rational().passed());
        assert!(!t.check_kappa().passed());
    }
}
