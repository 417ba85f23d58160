//! The lattice Fock space S(ĥ⁻) ⊗ ℂ_ε[L] truncated by Heisenberg degree and a lattice
//! ball, with the Heisenberg and group actions, the generic normal-ordered vertex
//! operator exp(creation)·translation·e_α, the classical lattice vertex operators, the
//! Φ operator, and the classical φ-coordinated module operators for μ = id.
//!
//! A basis vector is a monomial in p_{s,n} = α_s(−n) (n ≥ 1) times e_β.  Annihilation
//! α_r(n), n > 0, acts as the derivation p_{s,n} ↦ n⟨α_r, α_s⟩, so the exponential of
//! annihilators is a translation P(p) ↦ P(p + t).

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::exact::{HPoly, Q};
use crate::roots::{LatVec, RootDatum};
use crate::scalar::{rat, rat_int, CycScalar};
use crate::series::{HSeries, SeriesCtx};

/// p_{node, level}^{mult}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub node: u16,
    pub level: u16,
    pub mult: u16,
}

/// Basis monomial: sorted factors with distinct (node, level).
pub type Mono = Vec<Factor>;

pub fn mono_degree(m: &[Factor]) -> i64 {
    m.iter().map(|f| f.level as i64 * f.mult as i64).sum()
}

/// Product of two monomials.
pub fn mono_mul(a: &[Factor], b: &[Factor]) -> Mono {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && (a[i].node, a[i].level) < (b[j].node, b[j].level));
        let take_b = i == a.len() || (j < b.len() && (b[j].node, b[j].level) < (a[i].node, a[i].level));
        if take_a {
            out.push(a[i]);
            i += 1;
        } else if take_b {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(Factor { mult: a[i].mult + b[j].mult, ..a[i] });
            i += 1;
            j += 1;
        }
    }
    out
}

/// All monomials in p_{s,n} (s ∈ `nodes`, n ≥ 1) indexed by exact weight 0..=max_weight.
pub fn monomials_by_weight(nodes: &[usize], max_weight: i64) -> Vec<Vec<Mono>> {
    let mut parts: Vec<(u16, u16)> = Vec::new();
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &s in &sorted {
        for n in 1..=max_weight.max(0) {
            parts.push((s as u16, n as u16));
        }
    }
    let mut out = vec![Vec::new(); max_weight.max(0) as usize + 1];
    fn rec(parts: &[(u16, u16)], idx: usize, left: i64, cur: &mut Mono, total: i64, out: &mut Vec<Vec<Mono>>) {
        if idx == parts.len() {
            out[total as usize].push(cur.clone());
            return;
        }
        let (node, level) = parts[idx];
        let mut mult = 0u16;
        loop {
            if mult > 0 {
                cur.push(Factor { node, level, mult });
            }
            rec(parts, idx + 1, left - mult as i64 * level as i64, cur, total + mult as i64 * level as i64, out);
            if mult > 0 {
                cur.pop();
            }
            mult += 1;
            if mult as i64 * level as i64 > left {
                break;
            }
        }
    }
    rec(&parts, 0, max_weight.max(0), &mut Vec::new(), 0, &mut out);
    for bucket in &mut out {
        bucket.sort();
    }
    out
}

/// Basis key of V_L: a Heisenberg monomial and a group element e_β.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FockKey {
    pub heis: Mono,
    pub beta: LatVec,
}

impl FockKey {
    pub fn new(heis: Mono, beta: LatVec) -> Self {
        Self { heis, beta }
    }

    /// 1 ⊗ e_β.
    pub fn group(beta: LatVec) -> Self {
        Self { heis: Vec::new(), beta }
    }

    pub fn vacuum(rank: usize) -> Self {
        Self::group(vec![0; rank])
    }

    pub fn degree(&self) -> i64 {
        mono_degree(&self.heis)
    }
}

/// Graded lexicographic: total degree, then group vector, then the monomial.
impl Ord for FockKey {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.degree(), &self.beta, &self.heis).cmp(&(o.degree(), &o.beta, &o.heis))
    }
}

impl PartialOrd for FockKey {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for FockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.heis.is_empty() {
            write!(f, "1")?;
        }
        for (k, p) in self.heis.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "a{}(-{})", p.node + 1, p.level)?;
            if p.mult > 1 {
                write!(f, "^{}", p.mult)?;
            }
        }
        write!(f, "⊗e{:?}", self.beta)
    }
}

impl Serialize for FockKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let heis: Vec<[u16; 3]> = self.heis.iter().map(|p| [p.node + 1, p.level, p.mult]).collect();
        let mut st = s.serialize_struct("FockKey", 2)?;
        st.serialize_field("heis", &heis)?;
        st.serialize_field("beta", &self.beta)?;
        st.end()
    }
}

/// Coefficient ring of Fock vectors.
pub trait Coeff: Clone + Send + Sync + fmt::Debug {
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, o: &Self);
    fn mul(&self, o: &Self) -> Self;
    fn scale_frac(&self, n: i64, d: i64) -> Self;
}

impl Coeff for HSeries {
    fn is_zero(&self) -> bool {
        HSeries::is_zero(self)
    }
    fn add_assign(&mut self, o: &Self) {
        *self = self.add(o);
    }
    fn mul(&self, o: &Self) -> Self {
        HSeries::mul(self, o)
    }
    fn scale_frac(&self, n: i64, d: i64) -> Self {
        self.scale_rat(&rat(n, d))
    }
}

impl Coeff for HPoly {
    fn is_zero(&self) -> bool {
        HPoly::is_zero(self)
    }
    fn add_assign(&mut self, o: &Self) {
        *self += o;
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale_frac(&self, n: i64, d: i64) -> Self {
        self.scale(&Q::frac(n, d))
    }
}

/// Sparse vector over a coefficient ring; `clipped` records that some contribution fell
/// outside the truncation and was dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVec<C> {
    terms: BTreeMap<FockKey, C>,
    pub clipped: bool,
}

impl<C: Coeff> Default for FockVec<C> {
    fn default() -> Self {
        Self { terms: BTreeMap::new(), clipped: false }
    }
}

impl<C: Coeff> FockVec<C> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(key: FockKey, c: C) -> Self {
        let mut v = Self::new();
        v.add_term(key, c);
        v
    }

    pub fn add_term(&mut self, key: FockKey, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(slot) => {
                slot.add_assign(&c);
                if slot.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c);
            }
        }
    }

    pub fn add_vec(&mut self, o: &Self) {
        for (k, c) in &o.terms {
            self.add_term(k.clone(), c.clone());
        }
        self.clipped |= o.clipped;
    }

    pub fn scale_frac(&self, n: i64, d: i64) -> Self {
        let mut out = Self { terms: BTreeMap::new(), clipped: self.clipped };
        for (k, c) in &self.terms {
            out.add_term(k.clone(), c.scale_frac(n, d));
        }
        out
    }

    /// Multiplies every coefficient by `c` on the given side-independent ring.
    pub fn scale(&self, s: &C) -> Self {
        let mut out = Self { terms: BTreeMap::new(), clipped: self.clipped };
        for (k, c) in &self.terms {
            out.add_term(k.clone(), c.mul(s));
        }
        out
    }

    pub fn get(&self, k: &FockKey) -> Option<&C> {
        self.terms.get(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FockKey, &C)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_degree(&self) -> i64 {
        self.terms.keys().map(FockKey::degree).max().unwrap_or(0)
    }
}

impl<C: Coeff + Serialize> Serialize for FockVec<C> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry<'a, C> {
            key: &'a FockKey,
            coeff: &'a C,
        }
        let entries: Vec<Entry<'_, C>> = self.terms.iter().map(|(key, coeff)| Entry { key, coeff }).collect();
        let mut st = s.serialize_struct("FockVec", 2)?;
        st.serialize_field("terms", &entries)?;
        st.serialize_field("clipped", &self.clipped)?;
        st.end()
    }
}

/// Creation monomials of exp(Σ c_{s,n} p_{s,n}) grouped by weight.
#[derive(Clone, Debug)]
pub struct CreationTable<C> {
    pub by_weight: Vec<Vec<(Mono, C)>>,
    /// True when the exponential has no terms beyond the table.
    pub complete: bool,
}

impl<C: Coeff> CreationTable<C> {
    /// `coeff(s, n)` is c_{s,n}; the coefficient of Π p^{e} is Π c^e/e!.
    pub fn new(nodes: &[usize], max_weight: i64, one: &C, coeff: impl Fn(usize, u16) -> C) -> Self {
        let monos = monomials_by_weight(nodes, max_weight);
        let by_weight = monos
            .into_iter()
            .map(|bucket| {
                bucket
                    .into_iter()
                    .filter_map(|m| {
                        let mut c = one.clone();
                        for f in &m {
                            let base = coeff(f.node as usize, f.level);
                            for e in 1..=f.mult as i64 {
                                c = c.mul(&base).scale_frac(1, e);
                            }
                        }
                        (!c.is_zero()).then_some((m, c))
                    })
                    .collect()
            })
            .collect();
        Self { by_weight, complete: false }
    }

    /// exp(0): only the empty monomial.
    pub fn trivial(one: &C) -> Self {
        Self { by_weight: vec![vec![(Vec::new(), one.clone())]], complete: true }
    }

    pub fn max_weight(&self) -> i64 {
        self.by_weight.len() as i64 - 1
    }
}

/// One term of exp(creation)·P(p + t): output monomial, total level removed by the
/// translation, creation weight added, and the coefficient.
#[derive(Clone, Debug)]
pub struct VertexTerm<C> {
    pub heis: Mono,
    pub lowered: i64,
    pub raised: i64,
    pub coeff: C,
}

/// Expands exp(creation)·P(p + t) for a monomial P, keeping creation weights in the
/// range returned by `raise(lowered, rest_degree)`.
pub fn vertex_terms<C: Coeff>(
    heis: &[Factor],
    translation: &dyn Fn(usize, u16) -> Option<C>,
    creation: &CreationTable<C>,
    raise: &dyn Fn(i64, i64) -> (i64, i64),
    one: &C,
) -> Vec<VertexTerm<C>> {
    let deg = mono_degree(heis);
    // Substitutions p_{s,n}^e → Σ_j C(e,j) p^{e−j} t^j, factor by factor.
    let mut partial: Vec<(Mono, i64, C)> = vec![(Vec::new(), 0, one.clone())];
    for f in heis {
        let t = translation(f.node as usize, f.level);
        let mut next = Vec::with_capacity(partial.len() * (f.mult as usize + 1));
        for (rest, low, c) in &partial {
            let mut tpow = one.clone();
            for j in 0..=f.mult {
                if j > 0 {
                    match &t {
                        Some(tv) => tpow = tpow.mul(tv),
                        None => break,
                    }
                }
                let binom = binomial_u(f.mult as u64, j as u64);
                let coef = c.mul(&tpow).scale_frac(binom as i64, 1);
                if coef.is_zero() {
                    continue;
                }
                let mut r = rest.clone();
                if j < f.mult {
                    r.push(Factor { mult: f.mult - j, ..*f });
                }
                next.push((r, low + j as i64 * f.level as i64, coef));
            }
        }
        partial = next;
    }
    let mut out = Vec::new();
    for (rest, low, c) in partial {
        let rest_deg = deg - low;
        let (a_lo, a_hi) = raise(low, rest_deg);
        for a in a_lo.max(0)..=a_hi.min(creation.max_weight()) {
            for (m, cc) in &creation.by_weight[a as usize] {
                out.push(VertexTerm { heis: mono_mul(&rest, m), lowered: low, raised: a, coeff: c.mul(cc) });
            }
        }
    }
    out
}

fn binomial_u(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, t| acc * (n - t) / (t + 1))
}

/// Truncated Fock space: Heisenberg degree ≤ `degree`, Σ|β_i| ≤ `ball`.
#[derive(Clone, Debug)]
pub struct FockSpace {
    pub datum: RootDatum,
    pub degree: i64,
    pub ball: i64,
}

/// Generator of a field: the Heisenberg field α_i or the vertex operator of e_α.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gen {
    H(usize),
    E(LatVec),
}

/// Normalization of the classical module operator Y_W(e_α, x).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModuleConvention {
    /// exp(creation)·exp(annihilation)·e_α·x^α with no extra scalar power.
    #[default]
    Pinned,
    /// The pinned operator times x^{⟨α,α⟩/2}.
    WeightShifted,
}

impl FockSpace {
    pub fn new(datum: &RootDatum, degree: i64, ball: i64) -> Self {
        Self { datum: datum.clone(), degree, ball }
    }

    pub fn rank(&self) -> usize {
        self.datum.rank
    }

    pub fn in_ball(&self, beta: &[i64]) -> bool {
        beta.iter().map(|c| c.abs()).sum::<i64>() <= self.ball
    }

    /// Basis in graded lexicographic order.
    pub fn basis(&self) -> Vec<FockKey> {
        self.basis_up_to(self.degree)
    }

    pub fn basis_up_to(&self, degree: i64) -> Vec<FockKey> {
        let nodes: Vec<usize> = (0..self.rank()).collect();
        let monos = monomials_by_weight(&nodes, degree);
        let mut out = Vec::new();
        for beta in self.datum.lattice_ball(self.ball) {
            for bucket in &monos {
                for m in bucket {
                    out.push(FockKey::new(m.clone(), beta.clone()));
                }
            }
        }
        out.sort();
        out
    }

    /// α_i(n) on a vector.
    pub fn heis_act<C: Coeff>(&self, i: usize, n: i64, v: &FockVec<C>) -> FockVec<C> {
        let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
        for (key, c) in v.iter() {
            if n == 0 {
                let pair = self.datum.form(&self.datum.simple(i), &key.beta);
                out.add_term(key.clone(), c.scale_frac(pair, 1));
            } else if n < 0 {
                if key.degree() - n > self.degree {
                    out.clipped = true;
                    continue;
                }
                let p = [Factor { node: i as u16, level: (-n) as u16, mult: 1 }];
                out.add_term(FockKey::new(mono_mul(&key.heis, &p), key.beta.clone()), c.clone());
            } else {
                for (idx, f) in key.heis.iter().enumerate() {
                    if f.level as i64 != n {
                        continue;
                    }
                    let a = self.datum.a(i, f.node as usize);
                    if a == 0 {
                        continue;
                    }
                    let mut heis = key.heis.clone();
                    if f.mult == 1 {
                        heis.remove(idx);
                    } else {
                        heis[idx].mult -= 1;
                    }
                    out.add_term(FockKey::new(heis, key.beta.clone()), c.scale_frac(n * a * f.mult as i64, 1));
                }
            }
        }
        out
    }

    /// e_α · v, with e_α e_β = ε(α, β) e_{α+β}.
    pub fn group_mult<C: Coeff>(&self, alpha: &[i64], v: &FockVec<C>) -> FockVec<C> {
        let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
        for (key, c) in v.iter() {
            let beta: LatVec = key.beta.iter().zip(alpha).map(|(b, a)| a + b).collect();
            if !self.in_ball(&beta) {
                out.clipped = true;
                continue;
            }
            let eps = self.datum.epsilon(alpha, &key.beta);
            out.add_term(FockKey::new(key.heis.clone(), beta), c.scale_frac(eps, 1));
        }
        out
    }

    /// Applies a normal-ordered vertex-type operator with x-dependent series data:
    /// prefactor(β)·exp(Σ c_{s,n} x^n p_{s,n})·P(p + t)·e_α, keeping x-exponents ≤ `x_hi`.
    /// The result is flagged as clipped when a dropped creation term could reach the window.
    pub fn apply_series_vertex(
        &self,
        alpha: &[i64],
        prefactor: &dyn Fn(&[i64]) -> HSeries,
        translation: &dyn Fn(usize, u16) -> Option<HSeries>,
        creation: &CreationTable<HSeries>,
        v: &FockVec<HSeries>,
        x_hi: i64,
    ) -> FockVec<HSeries> {
        let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
        let Some((_, c0)) = v.iter().next() else { return out };
        let one = HSeries::one(c0.ctx());
        for (key, c) in v.iter() {
            let beta: LatVec = key.beta.iter().zip(alpha).map(|(b, a)| a + b).collect();
            if !self.in_ball(&beta) {
                out.clipped = true;
                continue;
            }
            let eps = self.datum.epsilon(alpha, &key.beta);
            let pre = prefactor(&key.beta).mul(c).scale_frac(eps, 1);
            if pre.is_zero() {
                continue;
            }
            let shifted = vertex_terms(&key.heis, translation, &CreationTable::trivial(&one), &|_, _| (0, 0), &one);
            for t in shifted {
                let base = pre.mul(&t.coeff);
                let Some(low) = base.min_x() else { continue };
                let room = self.degree - mono_degree(&t.heis);
                let top = room.min(creation.max_weight());
                if low + top < x_hi && !(creation.complete && top == creation.max_weight()) {
                    out.clipped = true;
                }
                let top = top.min(x_hi - low);
                for a in 0..=top {
                    for (m, cc) in &creation.by_weight[a as usize] {
                        let coef = base.mul(cc).mul_x_pow(a);
                        out.add_term(FockKey::new(mono_mul(&t.heis, m), beta.clone()), coef);
                    }
                }
            }
        }
        out
    }

    /// Classical Y(e_α, x)v = E⁻(−α,x)E⁺(−α,x)e_α x^α v, as x-series coefficients.
    pub fn classical_y_vertex(&self, alpha: &[i64], v: &FockVec<HSeries>, ctx: SeriesCtx, x_hi: i64) -> FockVec<HSeries> {
        let dt = &self.datum;
        let order = ctx.order;
        let creation = self.alpha_creation(alpha, ctx);
        let pair: Vec<i64> = (0..self.rank()).map(|s| dt.form(alpha, &dt.simple(s))).collect();
        let translation = |s: usize, n: u16| {
            (pair[s] != 0).then(|| HSeries::monomial(ctx, CycScalar::from_int(order, -pair[s]), 0, -(n as i64)))
        };
        let prefactor = |beta: &[i64]| HSeries::monomial(ctx, CycScalar::one(order), 0, dt.form(alpha, beta));
        self.apply_series_vertex(alpha, &prefactor, &translation, &creation, v, x_hi)
    }

    /// exp(Σ_n α(−n)x^n/n) creation table (x-powers are attached by the caller).
    pub fn alpha_creation(&self, alpha: &[i64], ctx: SeriesCtx) -> CreationTable<HSeries> {
        let nodes: Vec<usize> = (0..self.rank()).filter(|&s| alpha[s] != 0).collect();
        CreationTable::new(&nodes, self.degree + 1, &HSeries::one(ctx), |s, n| {
            HSeries::constant(ctx, CycScalar::from_rat(ctx.order, rat(alpha[s], n as i64)))
        })
    }

    /// Classical Y(α_i, x)v = Σ_n α_i(n)v x^{−n−1} up to x^{x_hi}.
    pub fn classical_y_heis(&self, i: usize, v: &FockVec<HSeries>, x_hi: i64) -> FockVec<HSeries> {
        self.heis_field(i, v, -1, x_hi)
    }

    /// Σ_n α_i(n)v x^{−n+shift}, exponents ≤ `x_hi`.
    pub fn heis_field(&self, i: usize, v: &FockVec<HSeries>, shift: i64, x_hi: i64) -> FockVec<HSeries> {
        let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
        let top = v.max_degree();
        for n in (shift - x_hi)..=top {
            let img = self.heis_act(i, n, v);
            out.clipped |= img.clipped;
            for (k, c) in img.iter() {
                out.add_term(k.clone(), c.mul_x_pow(-n + shift));
            }
        }
        out
    }

    /// Φ(a, f)(x)v = Σ_{n≥0} (−1)^n/n! f^{(n)}(x) a(n)v for a = Σ a_r α_r.
    pub fn phi_apply(&self, a: &[i64], f: &HSeries, v: &FockVec<HSeries>) -> FockVec<HSeries> {
        let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
        let mut deriv = f.clone();
        let mut fact = 1i64;
        for n in 0..=v.max_degree() {
            if n > 0 {
                deriv = deriv.deriv();
                fact *= n;
            }
            let mut an = FockVec::<HSeries>::new();
            for (r, &ar) in a.iter().enumerate() {
                if ar != 0 {
                    an.add_vec(&self.heis_act(r, n, v).scale_frac(ar, 1));
                }
            }
            let sign = if n % 2 == 0 { 1 } else { -1 };
            let w = deriv.scale_rat(&rat(sign, fact));
            for (k, c) in an.iter() {
                out.add_term(k.clone(), c.mul(&w));
            }
        }
        out
    }

    /// Classical module operators for μ = id: Y_W(α_i, x) = Σ α_i(n)x^{−n} and
    /// Y_W(e_α, x) in the chosen normalization.
    pub fn phi_y_module(&self, gen: &Gen, v: &FockVec<HSeries>, conv: ModuleConvention, ctx: SeriesCtx, x_hi: i64) -> FockVec<HSeries> {
        match gen {
            Gen::H(i) => self.heis_field(*i, v, 0, x_hi),
            Gen::E(alpha) => {
                let s = match conv {
                    ModuleConvention::Pinned => 0,
                    ModuleConvention::WeightShifted => self.datum.form(alpha, alpha) / 2,
                };
                let base = self.classical_y_vertex(alpha, v, ctx, x_hi - s);
                match conv {
                    ModuleConvention::Pinned => base,
                    ModuleConvention::WeightShifted => {
                        let mut out = FockVec { terms: BTreeMap::new(), clipped: base.clipped };
                        for (k, c) in base.iter() {
                            out.add_term(k.clone(), c.mul_x_pow(s));
                        }
                        out
                    }
                }
            }
        }
    }

    /// Classical Y(gen, x)v.
    pub fn classical_y(&self, gen: &Gen, v: &FockVec<HSeries>, ctx: SeriesCtx, x_hi: i64) -> FockVec<HSeries> {
        match gen {
            Gen::H(i) => self.classical_y_heis(*i, v, x_hi),
            Gen::E(alpha) => self.classical_y_vertex(alpha, v, ctx, x_hi),
        }
    }

    /// Mode coefficient: the x^m part of a series-valued vector, as a vector of ℏ-series.
    pub fn x_coefficient(v: &FockVec<HSeries>, m: i64) -> Result<FockVec<HSeries>, crate::series::SeriesError> {
        let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
        for (k, c) in v.iter() {
            out.add_term(k.clone(), c.x_coeff_series(m)?);
        }
        Ok(out)
    }
}

/// First key and coefficient location where two series-valued vectors differ on the
/// x-window [lo, hi].
pub fn vec_mismatch(a: &FockVec<HSeries>, b: &FockVec<HSeries>, lo: i64, hi: i64) -> Option<String> {
    let keys: std::collections::BTreeSet<&FockKey> = a.terms.keys().chain(b.terms.keys()).collect();
    for k in keys {
        let (ca, cb) = match (a.get(k), b.get(k)) {
            (Some(x), Some(y)) => (x.clone(), y.clone()),
            (Some(x), None) => (x.clone(), HSeries::zero(x.ctx())),
            (None, Some(y)) => (HSeries::zero(y.ctx()), y.clone()),
            (None, None) => continue,
        };
        match ca.first_mismatch(&cb, lo, hi) {
            Ok(None) => {}
            Ok(Some(m)) => return Some(format!("{k}: {m}")),
            Err(e) => return Some(format!("{k}: {e}")),
        }
    }
    None
}

/// Restriction of every coefficient to x-exponents ≤ `hi`.
pub fn truncate_vec(v: &FockVec<HSeries>, hi: i64) -> FockVec<HSeries> {
    let mut out = FockVec { terms: BTreeMap::new(), clipped: v.clipped };
    for (k, c) in v.iter() {
        out.add_term(k.clone(), c.truncate_x(hi));
    }
    out
}

/// The vector 1 ⊗ e_β with coefficient 1.
pub fn group_vector(ctx: SeriesCtx, beta: LatVec) -> FockVec<HSeries> {
    FockVec::single(FockKey::group(beta), HSeries::one(ctx))
}

/// Monomial vector Π α_{s}(−n)·(1⊗e_β).
pub fn mono_vector(ctx: SeriesCtx, heis: Mono, beta: LatVec) -> FockVec<HSeries> {
    FockVec::single(FockKey::new(heis, beta), HSeries::one(ctx))
}

/// Integer scalar as a constant series.
pub fn int_series(ctx: SeriesCtx, n: i64) -> HSeries {
    HSeries::constant(ctx, CycScalar::from_rat(ctx.order, rat_int(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roots::datum_from_labels;
    use proptest::prelude::*;

    fn ctx0() -> SeriesCtx {
        SeriesCtx::new(1, 0, 40)
    }

    fn a1() -> FockSpace {
        FockSpace::new(&datum_from_labels("A1", "id").unwrap(), 6, 3)
    }

    fn p(node: u16, level: u16, mult: u16) -> Factor {
        Factor { node, level, mult }
    }

    #[test]
    fn heisenberg_examples() {
        let fs = a1();
        let ctx = ctx0();
        let v = group_vector(ctx, vec![1]);
        let z = fs.heis_act(0, 0, &v);
        assert_eq!(z, v.scale_frac(2, 1));
        let vac = group_vector(ctx, vec![0]);
        let up = fs.heis_act(0, -1, &vac);
        assert_eq!(fs.heis_act(0, 1, &up), vac.scale_frac(2, 1));
        assert!(fs.heis_act(0, 2, &vac).is_empty());
    }

    #[test]
    fn group_examples() {
        let ctx = ctx0();
        let a2 = FockSpace::new(&datum_from_labels("A2", "id").unwrap(), 4, 2);
        let vac = group_vector(ctx, vec![0, 0]);
        assert_eq!(a2.group_mult(&[1, 0], &vac), group_vector(ctx, vec![1, 0]));
        let e1 = group_vector(ctx, vec![1, 0]);
        assert_eq!(a2.group_mult(&[0, 1], &e1), group_vector(ctx, vec![1, 1]).scale_frac(-1, 1));
        let fs = a1();
        assert_eq!(fs.group_mult(&[1], &group_vector(ctx, vec![-1])), group_vector(ctx, vec![0]));
    }

    #[test]
    fn vertex_operator_examples() {
        let fs = a1();
        let ctx = ctx0();
        // Y(e_α, z)1 at z = 0 is e_α.
        let y = fs.classical_y(&Gen::E(vec![1]), &group_vector(ctx, vec![0]), ctx, 4);
        let at0 = FockSpace::x_coefficient(&y, 0).unwrap();
        assert_eq!(at0, group_vector(ctx, vec![1]));
        assert!(FockSpace::x_coefficient(&y, -1).unwrap().is_empty());
        // Y(e_α, z)e_{−α} = z^{−2}(1 + α(−1)z + O(z²))e_0.
        let y = fs.classical_y(&Gen::E(vec![1]), &group_vector(ctx, vec![-1]), ctx, 4);
        assert_eq!(FockSpace::x_coefficient(&y, -2).unwrap(), group_vector(ctx, vec![0]));
        assert_eq!(FockSpace::x_coefficient(&y, -1).unwrap(), mono_vector(ctx, vec![p(0, 1, 1)], vec![0]));
        // Y(h, z)1 = Σ_{n≥1} h(−n)z^{n−1}1.
        let y = fs.classical_y(&Gen::H(0), &group_vector(ctx, vec![0]), ctx, 4);
        for n in 1..=3 {
            let c = FockSpace::x_coefficient(&y, n - 1).unwrap();
            assert_eq!(c, mono_vector(ctx, vec![p(0, n as u16, 1)], vec![0]));
        }
        assert!(FockSpace::x_coefficient(&y, -1).unwrap().is_empty());
    }

    #[test]
    fn phi_examples() {
        let fs = a1();
        let ctx = ctx0();
        let f = HSeries::monomial(ctx, CycScalar::one(1), 0, -1);
        let e = group_vector(ctx, vec![1]);
        assert_eq!(fs.phi_apply(&[1], &f, &e), e.scale(&f.scale_rat(&rat_int(2))));
        assert!(fs.phi_apply(&[1], &f, &group_vector(ctx, vec![0])).is_empty());
        let v = mono_vector(ctx, vec![p(0, 1, 1)], vec![0]);
        let out = fs.phi_apply(&[1], &f, &v);
        let expect = FockVec::single(FockKey::vacuum(1), HSeries::monomial(ctx, CycScalar::from_int(1, 2), 0, -2));
        assert_eq!(vec_mismatch(&out, &expect, -5, 30), None);
    }

    #[test]
    fn module_operator_lowest_power() {
        let fs = a1();
        let ctx = ctx0();
        let v = group_vector(ctx, vec![-1]);
        let y = fs.phi_y_module(&Gen::E(vec![1]), &v, ModuleConvention::Pinned, ctx, 4);
        assert_eq!(FockSpace::x_coefficient(&y, -2).unwrap(), group_vector(ctx, vec![0]));
        let y = fs.phi_y_module(&Gen::E(vec![1]), &v, ModuleConvention::WeightShifted, ctx, 4);
        assert_eq!(FockSpace::x_coefficient(&y, -1).unwrap(), group_vector(ctx, vec![0]));
    }

    #[test]
    fn basis_is_graded_and_complete() {
        let fs = FockSpace::new(&datum_from_labels("A2", "id").unwrap(), 3, 1);
        let b = fs.basis();
        // 5 group elements × (1 + 2 + 5 + 10) monomials.
        assert_eq!(b.len(), 5 * 18);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!(b.windows(2).all(|w| w[0].degree() <= w[1].degree()));
    }

    proptest! {
        #[test]
        fn heisenberg_commutator(m in -3i64..=3, n in -3i64..=3, i in 0usize..2, j in 0usize..2, key_idx in 0usize..60) {
            let dt = datum_from_labels("A2", "id").unwrap();
            let fs = FockSpace::new(&dt, 10, 2);
            let small = FockSpace::new(&dt, 4, 2).basis();
            let key = small[key_idx % small.len()].clone();
            let ctx = ctx0();
            let v = FockVec::single(key, HSeries::one(ctx));
            let mut lhs = fs.heis_act(i, m, &fs.heis_act(j, n, &v));
            lhs.add_vec(&fs.heis_act(j, n, &fs.heis_act(i, m, &v)).scale_frac(-1, 1));
            let expect = if m + n == 0 { v.scale_frac(m * dt.a(i, j), 1) } else { FockVec::new() };
            prop_assert_eq!(lhs.iter().collect::<Vec<_>>(), expect.iter().collect::<Vec<_>>());
        }
    }
}
