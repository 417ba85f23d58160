//! The η-deformed lattice vertex operators Y_L^η on the truncated Fock space (μ = id),
//! their singular parts against the closed κ-forms, Serre nilpotency of the zero modes,
//! the classical (ℏ = 0) lattice relations, and the series-level S-matrix, singular-part
//! and Λ-constant identities that hold for every built-in datum.
//!
//! Y_L^η(e_α, x) = Y(e_α, x)·exp(Φ(η(α, x))) is applied as one normal-ordered operator:
//! the n = 0 part of Φ gives the scalar e^{⟨β, η(α, x)⟩} on e_β, the n ≥ 1 parts are
//! annihilators and therefore add to the E⁺ translation.

use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

use crate::bidist::delta_identity_results;
use crate::fock::{truncate_vec, vec_mismatch, CreationTable, Factor, FockKey, FockSpace, FockVec, Gen};
use crate::report::{CheckReport, IdentityResult, Truncation};
use crate::roots::{LatVec, RootDatum};
use crate::scalar::{rat, rat_int, CycScalar, Rat};
use crate::series::{HSeries, SeriesCtx, SeriesError, ShiftMode};
use crate::structure::{compare_series, Corruption, StructureError, StructureTables};

#[derive(Debug, Error)]
pub enum DeformedError {
    #[error("the Fock-space realization needs an untwisted datum (mu = id), got {0}")]
    Twisted(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Deformed vertex operators on a truncated Fock space.
pub struct DeformedFock {
    pub fs: FockSpace,
    pub tables: StructureTables,
    pub ctx: SeriesCtx,
    eta_pair: Vec<Vec<HSeries>>,
    /// trans[i][s][n] = n(−1)^n/n!·Σ_r η(α_i)_r^{(n)} a_{rs}; index 0 unused.
    trans: Vec<Vec<Vec<HSeries>>>,
    eta_prime: Vec<Vec<HSeries>>,
}

fn factorial(n: i64) -> i64 {
    (1..=n).product()
}

impl DeformedFock {
    pub fn new(
        datum: &RootDatum,
        hbar_order: usize,
        x_order: i64,
        degree: i64,
        ball: i64,
        corruption: Corruption,
    ) -> Result<Self, DeformedError> {
        if datum.n != 1 {
            return Err(DeformedError::Twisted(datum.label()));
        }
        let tables = StructureTables::compute(datum, hbar_order, x_order, corruption)?;
        let fs = FockSpace::new(&tables.datum, degree, ball);
        let ctx = tables.ctx;
        let l = datum.rank;
        let eta_pair = (0..l).map(|i| (0..l).map(|j| tables.eta_pair(i, j)).collect()).collect();
        let mut trans = vec![vec![vec![HSeries::zero(ctx); degree.max(0) as usize + 1]; l]; l];
        let mut eta_prime = vec![vec![HSeries::zero(ctx); l]; l];
        for i in 0..l {
            for r in 0..l {
                let mut d = tables.eta(i, r);
                for n in 1..=degree.max(0) {
                    d = d.deriv();
                    if n == 1 {
                        eta_prime[i][r] = d.clone();
                    }
                    let sign = if n % 2 == 0 { 1 } else { -1 };
                    let w = d.scale_rat(&rat(sign * n, factorial(n)));
                    for (s, row) in trans[i].iter_mut().enumerate() {
                        let a = tables.datum.a(r, s);
                        if a != 0 {
                            row[n as usize] = row[n as usize].add(&w.scale_rat(&rat_int(a)));
                        }
                    }
                }
                if degree < 1 {
                    eta_prime[i][r] = tables.eta(i, r).deriv();
                }
            }
        }
        Ok(Self { fs, tables, ctx, eta_pair, trans, eta_prime })
    }

    pub fn datum(&self) -> &RootDatum {
        &self.tables.datum
    }

    pub fn hbar_order(&self) -> usize {
        self.ctx.hbar_order
    }

    /// Y_L^η(gen, x)v restricted to x-exponents ≤ `x_hi`.
    pub fn y(&self, gen: &Gen, v: &FockVec<HSeries>, x_hi: i64) -> FockVec<HSeries> {
        match gen {
            Gen::H(i) => self.y_heis(&unit(self.datum().rank, *i), v, x_hi),
            Gen::E(alpha) => self.y_vertex(alpha, v, x_hi),
        }
    }

    /// Y_L^η(a, x) = Y(a, x) + Φ(η′(a, x)) for a = Σ a_i α_i.
    pub fn y_heis(&self, a: &[i64], v: &FockVec<HSeries>, x_hi: i64) -> FockVec<HSeries> {
        let mut out = FockVec::new();
        let l = self.datum().rank;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            out.add_vec(&self.fs.classical_y_heis(i, v, x_hi).scale_frac(ai, 1));
            for r in 0..l {
                let phi = self.fs.phi_apply(&unit(l, r), &self.eta_prime[i][r], v);
                out.add_vec(&truncate_vec(&phi, x_hi).scale_frac(ai, 1));
            }
        }
        out.clipped |= v.clipped;
        out
    }

    /// Y_L^η(e_α, x)v for α = Σ c_i α_i.
    pub fn y_vertex(&self, alpha: &[i64], v: &FockVec<HSeries>, x_hi: i64) -> FockVec<HSeries> {
        let dt = self.datum();
        let ctx = self.ctx;
        let order = ctx.order;
        let l = dt.rank;
        let cache: RefCell<HashMap<LatVec, HSeries>> = RefCell::new(HashMap::new());
        let prefactor = |beta: &[i64]| -> HSeries {
            if let Some(p) = cache.borrow().get(beta) {
                return p.clone();
            }
            let mut arg = HSeries::zero(ctx);
            for (i, &ci) in alpha.iter().enumerate() {
                for (j, &bj) in beta.iter().enumerate() {
                    if ci * bj != 0 {
                        arg = arg.add(&self.eta_pair[i][j].scale_rat(&rat_int(ci * bj)));
                    }
                }
            }
            let e = arg.exp().expect("eta pairing has no constant or singular hbar^0 part");
            let p = e.mul_x_pow(dt.form(alpha, beta));
            cache.borrow_mut().insert(beta.to_vec(), p.clone());
            p
        };
        let dmax = self.fs.degree.max(0) as usize;
        let mut tr: Vec<Vec<Option<HSeries>>> = vec![vec![None; dmax + 1]; l];
        for (s, row) in tr.iter_mut().enumerate() {
            let pair = dt.form(alpha, &dt.simple(s));
            for (n, slot) in row.iter_mut().enumerate().skip(1) {
                let mut t = HSeries::monomial(ctx, CycScalar::from_int(order, -pair), 0, -(n as i64));
                for (i, &ci) in alpha.iter().enumerate() {
                    if ci != 0 {
                        t = t.add(&self.trans[i][s][n].scale_rat(&rat_int(ci)));
                    }
                }
                if !t.is_zero() {
                    *slot = Some(t);
                }
            }
        }
        let translation = |s: usize, n: u16| tr[s].get(n as usize).cloned().flatten();
        let creation = self.fs.alpha_creation(alpha, ctx);
        self.fs.apply_series_vertex(alpha, &prefactor, &translation, &creation, v, x_hi)
    }

    /// The mode u_n of Y_L^η(u, x) = Σ u_n x^{−n−1}, as a vector over K[[ℏ]].
    pub fn mode(&self, gen: &Gen, n: i64, v: &FockVec<HSeries>) -> Result<FockVec<HSeries>, SeriesError> {
        let full = self.y(gen, v, -n - 1);
        FockSpace::x_coefficient(&full, -n - 1)
    }

    /// Singular part of Y_L^η(gen, x)v.
    pub fn singular(&self, gen: &Gen, v: &FockVec<HSeries>) -> FockVec<HSeries> {
        let full = self.y(gen, v, -1);
        let mut out = FockVec::new();
        for (k, c) in full.iter() {
            out.add_term(k.clone(), c.singular_part());
        }
        out.clipped = full.clipped;
        out
    }

    /// A_i(zℏ)^{sign}·(1 ⊗ e_γ) with A_i(x) = exp(Σ_n α_i(−n)x^n/n).
    pub fn a_vector(&self, i: usize, z: &Rat, sign: i64, gamma: LatVec) -> FockVec<HSeries> {
        let ctx = self.ctx;
        let h = ctx.hbar_order as i64;
        let one = HSeries::one(ctx);
        let table = CreationTable::new(&[i], self.fs.degree.min(h), &one, |_, n| {
            let n = n as i64;
            if n > h {
                return HSeries::zero(ctx);
            }
            let c = Rat::from_integer(num::pow(z.clone(), n as usize).to_integer()) ;
            let c = if z.is_integer() { c } else { num::pow(z.clone(), n as usize) };
            HSeries::monomial(ctx, CycScalar::from_rat(ctx.order, c * rat(sign, n)), n as usize, 0)
        });
        let mut out = FockVec::new();
        for bucket in &table.by_weight {
            for (m, c) in bucket {
                out.add_term(FockKey::new(m.clone(), gamma.clone()), c.clone());
            }
        }
        out
    }

    fn vacuum(&self) -> FockVec<HSeries> {
        FockVec::single(FockKey::vacuum(self.datum().rank), HSeries::one(self.ctx))
    }

    fn group(&self, beta: LatVec) -> FockVec<HSeries> {
        FockVec::single(FockKey::group(beta), HSeries::one(self.ctx))
    }

    fn singular_lo(&self) -> i64 {
        -(self.ctx.hbar_order as i64) - 4
    }

    fn compare_vecs(&self, name: String, lhs: &FockVec<HSeries>, rhs: &FockVec<HSeries>, lo: i64, hi: i64) -> IdentityResult {
        if lhs.clipped || rhs.clipped {
            return IdentityResult::skipped(name, "truncation clipped a contributing term");
        }
        let count = lhs.len().max(rhs.len()) * (hi - lo + 1).max(0) as usize;
        IdentityResult::from_mismatch(name, vec_mismatch(lhs, rhs, lo, hi), count)
    }

    fn kappa_at(&self, i: usize, j: usize, c: i64) -> Result<HSeries, SeriesError> {
        self.tables.kappa[i][j].eval_x_at_hbar(&CycScalar::from_int(self.ctx.order, c))
    }

    /// (x + cℏ)^{−1} expanded in K((x))[[ℏ]].
    fn shifted_pole(&self, c: i64) -> Result<HSeries, SeriesError> {
        let ctx = self.ctx;
        HSeries::x(ctx).add(&HSeries::hbar(ctx).scale_rat(&rat_int(c))).inverse()
    }

    /// Singular parts of Y_L^η on generator pairs against their closed κ-forms.
    pub fn check_ope(&self) -> CheckReport {
        let tr = Truncation { fock_degree: Some(self.fs.degree), ..Truncation::series(self.hbar_order(), self.singular_lo(), -1) };
        let mut rep = CheckReport::new("ope", self.datum().label(), tr);
        let l = self.datum().rank;
        let lo = self.singular_lo();
        for i in 0..l {
            for j in 0..l {
                rep.extend(self.ope_pair(i, j, lo));
            }
        }
        rep
    }

    fn ope_pair(&self, i: usize, j: usize, lo: i64) -> Vec<IdentityResult> {
        let dt = self.datum();
        let l = dt.rank;
        let ctx = self.ctx;
        let a = dt.a(i, j);
        let mut out = Vec::new();
        let tag = format!("({},{})", i + 1, j + 1);
        let bracket = |m: i64| HSeries::monomial(ctx, CycScalar::one(ctx.order), 0, m).qbracket(a, ShiftMode::Additive).hbar_shift(&Rat::from_integer(1.into()));

        // h–h
        let aj = FockVec::single(FockKey::new(vec![Factor { node: j as u16, level: 1, mult: 1 }], vec![0; l]), HSeries::one(ctx));
        let lhs = self.singular(&Gen::H(i), &aj);
        let rhs = self.vacuum().scale(&bracket(-2));
        out.push(self.compare_vecs(format!("sing h-h {tag}"), &lhs, &rhs, lo, -1));

        for sigma in [1i64, -1] {
            let sj: LatVec = dt.simple(j).iter().map(|c| c * sigma).collect();
            // h–e
            let lhs = self.singular(&Gen::H(i), &self.group(sj.clone()));
            let rhs = self.group(sj.clone()).scale(&bracket(-1).scale_rat(&rat_int(sigma)));
            let s = if sigma > 0 { "+" } else { "-" };
            out.push(self.compare_vecs(format!("sing h-e{s} {tag}"), &lhs, &rhs, lo, -1));

            for delta in [1i64, -1] {
                let si: LatVec = dt.simple(i).iter().map(|c| c * delta).collect();
                let d = if delta > 0 { "+" } else { "-" };
                let name = format!("sing e{d}-e{s} {tag}");
                let lhs = self.singular(&Gen::E(si.clone()), &self.group(sj.clone()));
                let rhs = if delta * sigma * a >= 0 {
                    Ok(FockVec::new())
                } else if a == -1 {
                    self.closed_form_neg_one(i, j, delta)
                } else if i == j {
                    // Compared after multiplying the left side by 2ℏ.
                    self.closed_form_inverse_pair(i, delta)
                } else {
                    Err(SeriesError::Precondition(format!("unexpected Cartan entry {a}")))
                };
                let res = match rhs {
                    Err(e) => IdentityResult::fail(name, e.to_string()),
                    Ok(r) if delta * sigma * a < 0 && i == j => {
                        let two_h = HSeries::hbar(ctx).scale_rat(&rat_int(2));
                        self.compare_vecs(name, &lhs.scale(&two_h), &r, lo, -1)
                    }
                    Ok(r) => self.compare_vecs(name, &lhs, &r, lo, -1),
                };
                out.push(res);
            }
        }
        out
    }

    /// ε(α_i,α_j)(x+ℏ)^{−1}κ_ij(−ℏ)A_i(−ℏ)^{±1}e_{±(α_i+α_j)}.
    fn closed_form_neg_one(&self, i: usize, j: usize, sign: i64) -> Result<FockVec<HSeries>, SeriesError> {
        let dt = self.datum();
        let gamma: LatVec = dt.simple(i).iter().zip(dt.simple(j)).map(|(a, b)| sign * (a + b)).collect();
        let eps = dt.epsilon(&dt.simple(i), &dt.simple(j));
        let scalar = self.shifted_pole(1)?.mul(&self.kappa_at(i, j, -1)?).scale_rat(&rat_int(eps));
        Ok(self.a_vector(i, &rat_int(-1), sign, gamma).scale(&scalar))
    }

    /// (κ_ii(0)^{−1}x^{−1} − κ_ii(−2ℏ)^{−1}A_i(−2ℏ)^{±1}(x+2ℏ)^{−1})𝟏, i.e. 2ℏ times the singular part.
    fn closed_form_inverse_pair(&self, i: usize, sign: i64) -> Result<FockVec<HSeries>, SeriesError> {
        let ctx = self.ctx;
        let l = self.datum().rank;
        let k0 = self.kappa_at(i, i, 0)?.inverse()?;
        let k2 = self.kappa_at(i, i, -2)?.inverse()?;
        let first = self.vacuum().scale(&k0.mul(&HSeries::monomial(ctx, CycScalar::one(ctx.order), 0, -1)));
        let second = self.a_vector(i, &rat_int(-2), sign, vec![0; l]).scale(&k2.mul(&self.shifted_pole(2)?).neg());
        let mut out = first;
        out.add_vec(&second);
        Ok(out)
    }

    /// (e_{±α_i})_0(e_{±α_i})_0 e_{±α_j} = 0 for a_ij = −1, with the intermediate closed form.
    pub fn check_serre(&self) -> CheckReport {
        let tr = Truncation { fock_degree: Some(self.fs.degree), ..Truncation::series(self.hbar_order(), -1, -1) };
        let mut rep = CheckReport::new("serre", self.datum().label(), tr);
        let dt = self.datum();
        for i in 0..dt.rank {
            for j in 0..dt.rank {
                if dt.a(i, j) != -1 {
                    continue;
                }
                for sign in [1i64, -1] {
                    rep.extend(self.serre_pair(i, j, sign));
                }
            }
        }
        rep
    }

    fn serre_pair(&self, i: usize, j: usize, sign: i64) -> Vec<IdentityResult> {
        let dt = self.datum();
        let s = if sign > 0 { "+" } else { "-" };
        let tag = format!("({},{}) {s}", i + 1, j + 1);
        let ei = Gen::E(dt.simple(i).iter().map(|c| c * sign).collect());
        let ej: LatVec = dt.simple(j).iter().map(|c| c * sign).collect();
        let mut out = Vec::new();
        let w1 = match self.mode(&ei, 0, &self.group(ej)) {
            Ok(w) => w,
            Err(e) => return vec![IdentityResult::skipped(format!("serre zero mode {tag}"), e.to_string())],
        };
        match self.closed_form_neg_one(i, j, sign) {
            Ok(rhs) => {
                // The closed form carries (x+ℏ)^{-1}; its x^{-1} coefficient is the zero mode.
                match FockSpace::x_coefficient(&rhs, -1) {
                    Ok(r) => out.push(self.compare_vecs(format!("serre intermediate {tag}"), &w1, &r, 0, 0)),
                    Err(e) => out.push(IdentityResult::fail(format!("serre intermediate {tag}"), e.to_string())),
                }
            }
            Err(e) => out.push(IdentityResult::fail(format!("serre intermediate {tag}"), e.to_string())),
        }
        let name = format!("serre nilpotency {tag}");
        match self.mode(&ei, 0, &w1) {
            Ok(w2) => out.push(self.compare_vecs(name, &w2, &FockVec::new(), 0, 0)),
            Err(e) => out.push(IdentityResult::skipped(name, e.to_string())),
        }
        out
    }

    /// Lattice relations of the deformed operators at ℏ = 0 on low-degree vectors:
    /// Heisenberg commutators, h–e commutators, the derivative relation and the
    /// residue (locality) relation for generator roots.
    pub fn check_classical(&self, vec_degree: i64, window: i64) -> CheckReport {
        let tr = Truncation {
            hbar_order: self.hbar_order(),
            mode_window: Some(window),
            fock_degree: Some(self.fs.degree),
            ..Truncation::default()
        };
        let mut rep = CheckReport::new("classical", self.datum().label(), tr);
        let dt = self.datum();
        let l = dt.rank;
        let vectors: Vec<FockVec<HSeries>> = self
            .fs
            .basis_up_to(vec_degree)
            .into_iter()
            .filter(|k| k.beta.iter().map(|c| c.abs()).sum::<i64>() <= 1)
            .map(|k| FockVec::single(k, HSeries::one(self.ctx)))
            .collect();
        let roots: Vec<LatVec> = (0..l).flat_map(|i| [dt.simple(i), dt.simple(i).iter().map(|c| -c).collect()]).collect();

        for i in 0..l {
            for j in 0..l {
                let name = format!("AL2 ({},{})", i + 1, j + 1);
                rep.push(self.all_vectors(&name, &vectors, |v| {
                    let mut worst = None;
                    for m in -window..=window {
                        for n in -window..=window {
                            let lhs = self.commutator(&Gen::H(i), m, &Gen::H(j), n, v)?;
                            let rhs = if m + n == 0 { v.scale_frac(m * dt.a(i, j), 1) } else { FockVec::new() };
                            if let Some(r) = self.mode_mismatch(&lhs, &rhs, &format!("m={m} n={n}")) {
                                worst = Some(r);
                                break;
                            }
                        }
                    }
                    Ok(worst)
                }));
            }
        }
        for i in 0..l {
            for alpha in &roots {
                let name = format!("AL3 h{} e{:?}", i + 1, alpha);
                let pair = dt.form(alpha, &dt.simple(i));
                rep.push(self.all_vectors(&name, &vectors, |v| {
                    for m in -window..=window {
                        for n in -window..=window {
                            let lhs = self.commutator(&Gen::H(i), m, &Gen::E(alpha.clone()), n, v)?;
                            let rhs = self.mode(&Gen::E(alpha.clone()), m + n, v)?.scale_frac(pair, 1);
                            if let Some(r) = self.mode_mismatch(&lhs, &rhs, &format!("m={m} n={n}")) {
                                return Ok(Some(r));
                            }
                        }
                    }
                    Ok(None)
                }));
            }
        }
        for alpha in &roots {
            let name = format!("AL6 e{alpha:?}");
            rep.push(self.all_vectors(&name, &vectors, |v| {
                for k in -window..=window {
                    let lhs = self.mode(&Gen::E(alpha.clone()), k, v)?.scale_frac(-k - 1, 1);
                    let rhs = self.al6_rhs(alpha, k, v)?;
                    if let Some(r) = self.mode_mismatch(&lhs, &rhs, &format!("k={k}")) {
                        return Ok(Some(r));
                    }
                }
                Ok(None)
            }));
        }
        for alpha in &roots {
            for beta in &roots {
                let name = format!("AL7 e{alpha:?} e{beta:?}");
                rep.push(self.all_vectors(&name, &vectors, |v| {
                    for n in -window..=window {
                        let (lhs, rhs) = self.al7_sides(alpha, beta, n, v)?;
                        if let Some(r) = self.mode_mismatch(&lhs, &rhs, &format!("n={n}")) {
                            return Ok(Some(r));
                        }
                    }
                    Ok(None)
                }));
            }
        }
        rep.extend(delta_identity_results(SeriesCtx::new(1, self.hbar_order(), 4 * window + 8), 3, window));
        rep
    }

    fn all_vectors(
        &self,
        name: &str,
        vectors: &[FockVec<HSeries>],
        f: impl Fn(&FockVec<HSeries>) -> Result<Option<String>, SeriesError>,
    ) -> IdentityResult {
        for v in vectors {
            let label = v.iter().next().map(|(k, _)| k.to_string()).unwrap_or_default();
            match f(v) {
                Ok(None) => {}
                Ok(Some(m)) if m.starts_with("clipped") => return IdentityResult::skipped(name, format!("{label}: {m}")),
                Ok(Some(m)) => return IdentityResult::fail(name, format!("on {label}: {m}")),
                Err(e) => return IdentityResult::skipped(name, format!("{label}: {e}")),
            }
        }
        IdentityResult::pass(name, vectors.len())
    }

    fn mode_mismatch(&self, lhs: &FockVec<HSeries>, rhs: &FockVec<HSeries>, at: &str) -> Option<String> {
        if lhs.clipped || rhs.clipped {
            return Some(format!("clipped at {at}"));
        }
        vec_mismatch(lhs, rhs, 0, 0).map(|m| format!("{at}: {m}"))
    }

    /// [u_m, w_n]v.
    pub fn commutator(&self, u: &Gen, m: i64, w: &Gen, n: i64, v: &FockVec<HSeries>) -> Result<FockVec<HSeries>, SeriesError> {
        let mut out = self.mode(u, m, &self.mode(w, n, v)?)?;
        out.add_vec(&self.mode(w, n, &self.mode(u, m, v)?)?.scale_frac(-1, 1));
        Ok(out)
    }

    /// Σ_{n<0} α(n)e_α(k−n)v + Σ_{n≥0} e_α(k−n)α(n)v with deformed modes.
    fn al6_rhs(&self, alpha: &[i64], k: i64, v: &FockVec<HSeries>) -> Result<FockVec<HSeries>, SeriesError> {
        let e = Gen::E(alpha.to_vec());
        let lowest = self.lowest_mode(&e, v);
        let mut out = FockVec::new();
        let mut n = -1;
        while k - n <= lowest {
            let inner = self.mode(&e, k - n, v)?;
            out.add_vec(&self.heis_mode(alpha, n, &inner)?);
            n -= 1;
        }
        for n in 0..=v.max_degree() {
            let inner = self.heis_mode(alpha, n, v)?;
            out.add_vec(&self.mode(&e, k - n, &inner)?);
        }
        Ok(out)
    }

    fn heis_mode(&self, a: &[i64], n: i64, v: &FockVec<HSeries>) -> Result<FockVec<HSeries>, SeriesError> {
        let full = self.y_heis(a, v, -n - 1);
        FockSpace::x_coefficient(&full, -n - 1)
    }

    /// Largest n with e_n v possibly nonzero: from the lowest x-power of Y(e, x)v.
    fn lowest_mode(&self, e: &Gen, v: &FockVec<HSeries>) -> i64 {
        let full = self.y(e, v, -1);
        let low = full.iter().filter_map(|(_, c)| c.min_x()).min().unwrap_or(0);
        -low - 1
    }

    /// Both sides of the residue relation at the mode z^{−n−1}.
    fn al7_sides(&self, alpha: &[i64], beta: &[i64], n: i64, v: &FockVec<HSeries>) -> Result<(FockVec<HSeries>, FockVec<HSeries>), SeriesError> {
        let dt = self.datum();
        let k = dt.form(alpha, beta);
        let ea = Gen::E(alpha.to_vec());
        let eb = Gen::E(beta.to_vec());
        let top_b = self.lowest_mode(&eb, v);
        let top_a = self.lowest_mode(&ea, v);
        let mut lhs = FockVec::new();
        // Σ_j C(−k−1, j)(−1)^j e_α(−k−1−j) e_β(n+j) v
        let mut j = 0;
        while n + j <= top_b {
            let c = gbinom(-k - 1, j) * if j % 2 == 0 { 1 } else { -1 };
            if c != 0 {
                let inner = self.mode(&eb, n + j, v)?;
                lhs.add_vec(&self.mode(&ea, -k - 1 - j, &inner)?.scale_frac(c, 1));
            }
            j += 1;
        }
        // − Σ_j C(−k−1, j)(−1)^{k+1+j} e_β(n−k−1−j) e_α(j) v
        let mut j = 0;
        while j <= top_a {
            let c = gbinom(-k - 1, j) * if (k + 1 + j).rem_euclid(2) == 0 { 1 } else { -1 };
            if c != 0 {
                let inner = self.mode(&ea, j, v)?;
                lhs.add_vec(&self.mode(&eb, n - k - 1 - j, &inner)?.scale_frac(-c, 1));
            }
            j += 1;
        }
        let sum: LatVec = alpha.iter().zip(beta).map(|(a, b)| a + b).collect();
        let eps = dt.epsilon(alpha, beta);
        let rhs = if sum.iter().all(|&c| c == 0) {
            if n == -1 {
                v.scale_frac(eps, 1)
            } else {
                FockVec::new()
            }
        } else if self.fs.in_ball(&sum) && sum.iter().map(|c| c.abs()).sum::<i64>() <= 2 {
            self.mode(&Gen::E(sum), n, v)?.scale_frac(eps, 1)
        } else {
            let mut z = FockVec::new();
            z.clipped = true;
            z
        };
        Ok((lhs, rhs))
    }
}

/// Generalized binomial coefficient C(a, j) for integer a and j ≥ 0.
fn gbinom(a: i64, j: i64) -> i64 {
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    for t in 0..j {
        num *= (a - t) as i128;
        den *= (t + 1) as i128;
    }
    (num / den) as i64
}

fn unit(l: usize, i: usize) -> Vec<i64> {
    let mut v = vec![0; l];
    v[i] = 1;
    v
}

/// Singular parts at series level (no Fock space), valid for every datum:
/// ⟨η′(α_i),α_j⟩⁻, ⟨η″(α_i),α_j⟩⁻ and Sing x^{δδ′a}e^{δδ′⟨η(α_i,x),α_j⟩} against κ.
pub fn series_ope_report(t: &StructureTables) -> CheckReport {
    let ctx = t.ctx;
    let h = ctx.hbar_order as i64;
    let lo = -h - 4;
    let mut rep = CheckReport::new("ope-series", t.datum.label(), Truncation::series(ctx.hbar_order, lo, -1));
    let one = CycScalar::one(ctx.order);
    let xm = |m: i64| HSeries::monomial(ctx, one.clone(), 0, m);
    let l = t.rank();
    for i in 0..l {
        for j in 0..l {
            let a = t.datum.a(i, j);
            let tag = format!("({},{})", i + 1, j + 1);
            let pair = t.eta_pair(i, j);
            let br = |m: i64| xm(m).qbracket(a, ShiftMode::Additive).hbar_shift(&rat_int(1));
            let rhs1 = br(-1).sub(&xm(-1).scale_rat(&rat_int(a)));
            rep.push(compare_series(format!("sing eta' {tag}"), &pair.deriv().singular_part(), &rhs1, lo, -1));
            let rhs2 = br(-2).neg().add(&xm(-2).scale_rat(&rat_int(a)));
            rep.push(compare_series(format!("sing eta'' {tag}"), &pair.deriv_n(2).singular_part(), &rhs2, lo, -1));
            for sign in [1i64, -1] {
                let name = format!("sing x^a exp(eta) {tag} sign {sign}");
                let res = (|| -> Result<IdentityResult, SeriesError> {
                    let lhs = pair.scale_rat(&rat_int(sign)).exp()?.mul_x_pow(sign * a).singular_part();
                    let rhs = if sign * a >= 0 {
                        HSeries::zero(ctx)
                    } else if a == -1 {
                        let k = t.kappa[i][j].eval_x_at_hbar(&CycScalar::from_int(ctx.order, -1))?;
                        xm(1).add(&HSeries::hbar(ctx)).inverse()?.mul(&k)
                    } else {
                        let k0 = t.kappa[i][j].eval_x_zero()?.inverse()?;
                        let k2 = t.kappa[i][j].eval_x_at_hbar(&CycScalar::from_int(ctx.order, -2))?.inverse()?;
                        let p2 = xm(1).add(&HSeries::hbar(ctx).scale_rat(&rat_int(2))).inverse()?;
                        // Compared as 2ℏ·lhs.
                        return Ok(compare_series(
                            name.clone(),
                            &lhs.mul(&HSeries::hbar(ctx).scale_rat(&rat_int(2))),
                            &k0.mul(&xm(-1)).sub(&k2.mul(&p2)),
                            lo,
                            -1,
                        ));
                    };
                    Ok(compare_series(name.clone(), &lhs, &rhs, lo, -1))
                })();
                rep.push(res.unwrap_or_else(|e| IdentityResult::fail(format!("sing x^a exp(eta) {tag} sign {sign}"), e.to_string())));
            }
        }
    }
    rep
}

/// S-matrix entries from η against their closed forms, ℏ⁰-triviality, and unitarity.
pub fn smatrix_report(t: &StructureTables) -> CheckReport {
    let ctx = t.ctx;
    let lo = -(ctx.hbar_order as i64) - 4;
    let hi = t.x_order - 2;
    let mut rep = CheckReport::new("smatrix", t.datum.label(), Truncation::series(ctx.hbar_order, lo, hi));
    let n = t.datum.n as i64;
    let l = t.rank();
    let half = rat(1, 2);
    for i in 0..l {
        for j in 0..l {
            let tag = format!("({},{})", i + 1, j + 1);
            // e ⊗ e: exp(⟨η(α_i,−x),α_j⟩ − ⟨η(α_j,x),α_i⟩) = g̃_ij(e^x).
            let diff = t.eta_pair(i, j).neg_x().sub(&t.eta_pair(j, i));
            let name = format!("S e-e {tag}");
            match (diff.exp(), t.g_tilde[i][j].subst_exp(0, ctx)) {
                (Ok(lhs), Ok(rhs)) => {
                    rep.push(compare_series(name, &lhs, &rhs, lo, hi));
                    let triv = rhs.truncate_hbar(0);
                    rep.push(compare_series(format!("S e-e hbar^0 trivial {tag}"), &triv, &HSeries::one(triv.ctx()), lo, hi));
                }
                (Err(e), _) | (_, Err(e)) => rep.push(IdentityResult::fail(name, e.to_string())),
            }
            // α ⊗ α and e ⊗ α corrections.
            let mut aa = HSeries::zero(ctx);
            let mut ea = HSeries::zero(ctx);
            for k in 0..n {
                let a = t.datum.a_mu(i, k, j);
                if a == 0 {
                    continue;
                }
                let kern = &t.kernel[(-k).rem_euclid(n) as usize];
                // ξe^x/(ξe^x − 1)² = −½ d/dx of the coth kernel.
                let sq = kern.deriv().scale_rat(&rat(-1, 2));
                aa = aa.add(&sq.hbar_shift(&rat_int(-a)).sub(&sq.hbar_shift(&rat_int(a))));
                ea = ea.add(&kern.hbar_shift(&rat_int(a)).sub(&kern.hbar_shift(&rat_int(-a))).scale_rat(&half));
            }
            let lhs_aa = t.eta_pair(j, i).deriv_n(2).sub(&t.eta_pair(i, j).deriv_n(2).neg_x());
            rep.push(compare_series(format!("S h-h {tag}"), &lhs_aa, &aa, lo, hi));
            let lhs_ea = t.eta_pair(j, i).deriv().add(&t.eta_pair(i, j).deriv().neg_x());
            rep.push(compare_series(format!("S e-h {tag}"), &lhs_ea, &ea, lo, hi));
            rep.push(compare_series(format!("S h-h hbar^0 trivial {tag}"), &aa.truncate_hbar(0), &HSeries::zero(aa.truncate_hbar(0).ctx()), lo, hi));
            rep.push(compare_series(format!("S e-h hbar^0 trivial {tag}"), &ea.truncate_hbar(0), &HSeries::zero(ea.truncate_hbar(0).ctx()), lo, hi));
            let prod = t.g_tilde[i][j].mul(&t.g_tilde[j][i].subst_inv_u());
            rep.push(IdentityResult::from_bool(format!("S unitarity {tag}"), prod.same_function(&crate::rational::RatExpr::one(t.datum.n)), || {
                "g~_ij(u) g~_ji(1/u) is not 1".into()
            }));
        }
    }
    rep
}

/// The constant of the normal-ordered exponential: exp(E_γ) computed from the mode
/// commutator of the dressed Heisenberg field, against κ_ii(0)²/(κ_ii(aℏ)κ_ii(−aℏ)).
pub fn lambda_report(t: &StructureTables, values: &[Rat]) -> CheckReport {
    let ctx = t.ctx;
    let mut rep = CheckReport::new("lambda", t.datum.label(), Truncation::series(ctx.hbar_order, 0, 0));
    if t.datum.n != 1 {
        rep.push(IdentityResult::skipped("lambda constant", "module realization is untwisted only"));
        return rep;
    }
    for i in 0..t.rank() {
        for a in values {
            let name = format!("lambda constant i={} a={}", i + 1, crate::scalar::rat_to_string(a));
            let res = (|| -> Result<IdentityResult, SeriesError> {
                let lhs = lambda_constant_from_modes(ctx, a)?;
                let k = &t.kappa[i][i];
                let k0 = k.eval_x_zero()?;
                let kp = k.eval_x_at_hbar(&CycScalar::from_rat(ctx.order, a.clone()))?;
                let km = k.eval_x_at_hbar(&CycScalar::from_rat(ctx.order, -a.clone()))?;
                let rhs = k0.mul(&k0).div(&kp.mul(&km))?;
                Ok(compare_series(name.clone(), &lhs, &rhs, 0, 0))
            })();
            rep.push(res.unwrap_or_else(|e| IdentityResult::fail(format!("lambda constant i={} a={a}", i + 1), e.to_string())));
        }
    }
    rep
}

/// exp(E_γ) with γ(u) = Σ_n (q^{an}+q^{−an}−2)(1+q^{−2n})uⁿ/n = −Σ_c n_c log(1 − q^c u):
/// E_γ = −Σ_c n_c F(−cℏ), F(t) = log((1 − e^{−t})/t).
pub fn lambda_constant_from_modes(ctx: SeriesCtx, a: &Rat) -> Result<HSeries, SeriesError> {
    let two = rat_int(2);
    let weights: [(Rat, i64); 6] =
        [(a.clone(), 1), (-a.clone(), 1), (a - &two, 1), (-a - &two, 1), (rat_int(0), -2), (-two.clone(), -2)];
    let mut e = HSeries::zero(ctx);
    for (c, w) in weights {
        // F(−cℏ) = log Σ_k c^k ℏ^k/(k+1)!
        let mut coeffs = Vec::with_capacity(ctx.hbar_order + 1);
        let mut fact = Rat::from_integer(1.into());
        for k in 0..=ctx.hbar_order {
            fact *= rat_int(k as i64 + 1);
            coeffs.push(CycScalar::from_rat(ctx.order, num::pow(c.clone(), k) / &fact));
        }
        let f = HSeries::from_hbar_coeffs(ctx, &coeffs).log()?;
        e = e.sub(&f.scale_rat(&rat_int(w)));
    }
    e.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Status;
    use crate::roots::{builtin_data, datum_from_labels};

    fn failures(rep: &CheckReport) -> Vec<String> {
        rep.results.iter().filter(|r| r.status != Status::Pass).map(|r| format!("{} {:?} {:?}", r.identity, r.status, r.first_mismatch)).collect()
    }

    #[test]
    fn vertex_on_group_vectors_matches_formula() {
        let dt = datum_from_labels("A1", "id").unwrap();
        let d = DeformedFock::new(&dt, 2, 4, 4, 2, Corruption::default()).unwrap();
        let ctx = d.ctx;
        let y = d.y(&Gen::E(vec![1]), &d.group(vec![1]), 2);
        // Group-level coefficient: x^2 e^{⟨α,η(α,x)⟩} e_{2α}.
        let expect = d.tables.eta_pair(0, 0).exp().unwrap().mul_x_pow(2);
        let got = y.get(&FockKey::group(vec![2])).unwrap();
        assert_eq!(got.first_mismatch(&expect, -4, 2).unwrap(), None);
        let _ = ctx;
    }

    #[test]
    fn vacuum_has_no_singular_part() {
        let dt = datum_from_labels("A2", "id").unwrap();
        let d = DeformedFock::new(&dt, 2, 4, 4, 2, Corruption::default()).unwrap();
        let s = d.singular(&Gen::H(0), &d.vacuum());
        assert!(s.iter().all(|(_, c)| c.is_zero()));
    }

    #[test]
    fn ope_a1() {
        let dt = datum_from_labels("A1", "id").unwrap();
        let d = DeformedFock::new(&dt, 4, 4, 5, 2, Corruption::default()).unwrap();
        let rep = d.check_ope();
        assert!(rep.passed(), "{:?}", failures(&rep));
    }

    #[test]
    fn serre_a2_small() {
        let dt = datum_from_labels("A2", "id").unwrap();
        let d = DeformedFock::new(&dt, 3, 4, 5, 3, Corruption::default()).unwrap();
        let rep = d.check_serre();
        assert!(rep.passed(), "{:?}", failures(&rep));
    }

    #[test]
    fn classical_a1() {
        let dt = datum_from_labels("A1", "id").unwrap();
        let d = DeformedFock::new(&dt, 0, 6, 6, 3, Corruption::default()).unwrap();
        let rep = d.check_classical(1, 2);
        assert!(rep.passed(), "{:?}", failures(&rep));
    }

    #[test]
    fn series_level_identities_all_data() {
        for dt in builtin_data() {
            let t = StructureTables::compute(&dt, 3, 4, Corruption::default()).unwrap();
            let rep = series_ope_report(&t);
            assert!(rep.passed(), "{}: {:?}", dt.label(), failures(&rep));
            let rep = smatrix_report(&t);
            assert!(rep.passed(), "{}: {:?}", dt.label(), failures(&rep));
        }
    }

    #[test]
    fn lambda_constant() {
        let dt = datum_from_labels("A1", "id").unwrap();
        let t = StructureTables::compute(&dt, 5, 4, Corruption::default()).unwrap();
        let rep = lambda_report(&t, &[rat_int(0), rat_int(1), rat_int(-2), rat(1, 2)]);
        assert!(rep.passed(), "{:?}", failures(&rep));
    }
}

#[cfg(test)]
mod heavy {
    use super::*;
    use crate::roots::datum_from_labels;

    #[test]
    fn corrupted_epsilon_breaks_locality() {
        let dt = datum_from_labels("A2", "id").unwrap();
        let c = Corruption { epsilon: Some((0, 1)), ..Corruption::default() };
        let d = DeformedFock::new(&dt, 0, 6, 5, 3, c).unwrap();
        let rep = d.check_classical(0, 1);
        assert!(rep.failures().any(|r| r.identity.starts_with("AL7")));
    }

    #[test]
    #[ignore]
    fn timing_a2() {
        let dt = datum_from_labels("A2", "id").unwrap();
        let t = std::time::Instant::now();
        let d = DeformedFock::new(&dt, 6, 4, 7, 3, Corruption::default()).unwrap();
        let rep = d.check_ope();
        eprintln!("ope {:?} {}", t.elapsed(), rep.to_text());
        let t = std::time::Instant::now();
        let d = DeformedFock::new(&dt, 6, 4, 8, 3, Corruption::default()).unwrap();
        let rep = d.check_serre();
        eprintln!("serre {:?} {} {}", t.elapsed(), rep.passed(), rep.to_text());
    }
}
