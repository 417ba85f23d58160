//! ADE root lattices with a diagram automorphism μ, the bimultiplicative sign
//! cocycle ε, and the orbit invariants attached to (A, μ).
//!
//! Nodes follow Bourbaki numbering and are stored 0-based (node `i` of the
//! documentation is index `i − 1`).

use std::fmt;
use std::str::FromStr;

use num::{One, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::scalar::{rat_int, CycScalar, Rat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RootError {
    #[error("unknown Dynkin type {0:?} (expected A<n>, D<n> or E6/E7/E8)")]
    UnknownType(String),
    #[error("unknown diagram automorphism {0:?} (expected identity, flip or triality)")]
    UnknownMu(String),
    #[error("automorphism {mu} is not available for {kind}{rank}")]
    InvalidMu { kind: Kind, rank: usize, mu: MuSpec },
    #[error("permutation does not preserve the Cartan matrix")]
    NotAnAutomorphism,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Kind {
    A,
    D,
    E,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MuSpec {
    Identity,
    Flip,
    Triality,
}

impl fmt::Display for MuSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MuSpec::Identity => "identity",
            MuSpec::Flip => "flip",
            MuSpec::Triality => "triality",
        };
        write!(f, "{s}")
    }
}

impl FromStr for MuSpec {
    type Err = RootError;
    fn from_str(s: &str) -> Result<Self, RootError> {
        match s.to_ascii_lowercase().as_str() {
            "id" | "identity" => Ok(MuSpec::Identity),
            "flip" => Ok(MuSpec::Flip),
            "triality" => Ok(MuSpec::Triality),
            _ => Err(RootError::UnknownMu(s.to_string())),
        }
    }
}

/// Parses a type label such as `A2`, `D4`, `E6`.
pub fn parse_type(s: &str) -> Result<(Kind, usize), RootError> {
    let bad = || RootError::UnknownType(s.to_string());
    let s = s.trim();
    let (head, tail) = s.split_at(s.char_indices().nth(1).map(|(i, _)| i).unwrap_or(s.len()));
    let rank: usize = tail.parse().map_err(|_| bad())?;
    let kind = match head.to_ascii_uppercase().as_str() {
        "A" if rank >= 1 => Kind::A,
        "D" if rank >= 4 => Kind::D,
        "E" if (6..=8).contains(&rank) => Kind::E,
        _ => return Err(bad()),
    };
    Ok((kind, rank))
}

/// Lattice vector in simple-root coordinates.
pub type LatVec = Vec<i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootDatum {
    pub kind: Kind,
    pub rank: usize,
    pub mu_spec: MuSpec,
    pub cartan: Vec<Vec<i64>>,
    /// μ as a 0-based permutation of the nodes.
    pub mu: Vec<usize>,
    /// Order N of μ.
    pub n: u32,
    pub cartan_inv: Vec<Vec<Rat>>,
    /// ε(α_i, α_j) on generators.
    pub eps_table: Vec<Vec<i8>>,
}

fn edges(kind: Kind, rank: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    match kind {
        Kind::A => (1..rank).for_each(|i| e.push((i, i + 1))),
        Kind::D => {
            (1..rank - 1).for_each(|i| e.push((i, i + 1)));
            e.push((rank - 2, rank));
        }
        Kind::E => {
            e.extend([(1, 3), (3, 4), (4, 5), (5, 6), (2, 4)]);
            (6..rank).for_each(|i| e.push((i, i + 1)));
        }
    }
    e
}

fn mu_table(kind: Kind, rank: usize, spec: MuSpec) -> Result<Vec<usize>, RootError> {
    let invalid = || RootError::InvalidMu { kind, rank, mu: spec };
    // 1-based images, converted to 0-based below.
    let one_based: Vec<usize> = match (spec, kind) {
        (MuSpec::Identity, _) => (1..=rank).collect(),
        (MuSpec::Flip, Kind::A) if rank >= 2 => (1..=rank).map(|i| rank + 1 - i).collect(),
        (MuSpec::Flip, Kind::D) => {
            let mut p: Vec<usize> = (1..=rank).collect();
            p.swap(rank - 2, rank - 1);
            p
        }
        (MuSpec::Flip, Kind::E) if rank == 6 => vec![6, 2, 5, 4, 3, 1],
        (MuSpec::Triality, Kind::D) if rank == 4 => vec![3, 2, 4, 1],
        _ => return Err(invalid()),
    };
    Ok(one_based.into_iter().map(|i| i - 1).collect())
}

fn invert(a: &[Vec<i64>]) -> Vec<Vec<Rat>> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r: Vec<Rat> = row.iter().map(|&v| rat_int(v)).collect();
            r.extend((0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero()).expect("Cartan matrix is invertible");
        m.swap(col, piv);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= &f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Builds the datum for a Dynkin type and automorphism, verifying a_{μi,μj} = a_{ij}.
pub fn build_root_datum(kind: Kind, rank: usize, mu_spec: MuSpec) -> Result<RootDatum, RootError> {
    let valid_rank = match kind {
        Kind::A => rank >= 1,
        Kind::D => rank >= 4,
        Kind::E => (6..=8).contains(&rank),
    };
    if !valid_rank {
        return Err(RootError::UnknownType(format!("{kind}{rank}")));
    }
    let mut cartan = vec![vec![0i64; rank]; rank];
    for (i, row) in cartan.iter_mut().enumerate() {
        row[i] = 2;
    }
    for (i, j) in edges(kind, rank) {
        cartan[i - 1][j - 1] = -1;
        cartan[j - 1][i - 1] = -1;
    }
    let mu = mu_table(kind, rank, mu_spec)?;
    for i in 0..rank {
        for j in 0..rank {
            if cartan[mu[i]][mu[j]] != cartan[i][j] {
                return Err(RootError::NotAnAutomorphism);
            }
        }
    }
    let mut n = 1u32;
    let mut p = mu.clone();
    while p.iter().enumerate().any(|(i, &v)| i != v) {
        p = p.iter().map(|&v| mu[v]).collect();
        n += 1;
    }
    let eps_table = (0..rank)
        .map(|i| (0..rank).map(|j| if i > j && cartan[i][j] % 2 != 0 { -1 } else { 1 }).collect())
        .collect();
    let cartan_inv = invert(&cartan);
    Ok(RootDatum { kind, rank, mu_spec, cartan, mu, n, cartan_inv, eps_table })
}

/// Parses `type` and `mu` labels and builds the datum.
pub fn datum_from_labels(ty: &str, mu: &str) -> Result<RootDatum, RootError> {
    let (kind, rank) = parse_type(ty)?;
    build_root_datum(kind, rank, mu.parse()?)
}

impl RootDatum {
    pub fn label(&self) -> String {
        format!("{}{}", self.kind, self.rank)
    }

    pub fn a(&self, i: usize, j: usize) -> i64 {
        self.cartan[i][j]
    }

    /// μ^k(i) for any integer k.
    pub fn mu_pow(&self, i: usize, k: i64) -> usize {
        let k = k.rem_euclid(self.n as i64);
        (0..k).fold(i, |v, _| self.mu[v])
    }

    /// a_{μ^k(i), j}.
    pub fn a_mu(&self, i: usize, k: i64, j: usize) -> i64 {
        self.a(self.mu_pow(i, k), j)
    }

    /// Simple root α_i as a lattice vector.
    pub fn simple(&self, i: usize) -> LatVec {
        let mut v = vec![0; self.rank];
        v[i] = 1;
        v
    }

    /// ⟨α, β⟩ = αᵀ A β.
    pub fn form(&self, a: &[i64], b: &[i64]) -> i64 {
        let mut s = 0;
        for i in 0..self.rank {
            if a[i] == 0 {
                continue;
            }
            for j in 0..self.rank {
                s += a[i] * self.cartan[i][j] * b[j];
            }
        }
        s
    }

    /// μ acting on a lattice vector: μ(Σ c_i α_i) = Σ c_i α_{μ(i)}.
    pub fn mu_vec(&self, a: &[i64]) -> LatVec {
        let mut out = vec![0; self.rank];
        for (i, &c) in a.iter().enumerate() {
            out[self.mu[i]] += c;
        }
        out
    }

    /// Bimultiplicative extension of the generator table.
    pub fn epsilon(&self, a: &[i64], b: &[i64]) -> i64 {
        let mut odd = 0i64;
        for i in 0..self.rank {
            for j in 0..self.rank {
                if self.eps_table[i][j] < 0 {
                    odd += a[i] * b[j];
                }
            }
        }
        if odd.rem_euclid(2) == 0 {
            1
        } else {
            -1
        }
    }

    /// Negative-control hook: flips the sign of ε(α_i, α_j).
    pub fn corrupt_epsilon(&mut self, i: usize, j: usize) {
        self.eps_table[i][j] = -self.eps_table[i][j];
    }

    /// Σ_k ⟨μ^k α_i, α_i⟩ even for every generator (advisory).
    pub fn check_mu_evenness(&self) -> bool {
        (0..self.rank).all(|i| self.abar(i, i).rem_euclid(2) == 0)
    }

    /// ā_{ij} = Σ_k a_{μ^k(i), j}.
    pub fn abar(&self, i: usize, j: usize) -> i64 {
        (0..self.n as i64).map(|k| self.a_mu(i, k, j)).sum()
    }

    /// Lattice vectors with Σ|c_i| ≤ radius, in a deterministic order.
    pub fn lattice_ball(&self, radius: i64) -> Vec<LatVec> {
        let mut out = vec![vec![0; self.rank]];
        for _ in 0..radius {
            let mut next = out.clone();
            for v in &out {
                for i in 0..self.rank {
                    for s in [-1, 1] {
                        let mut w = v.clone();
                        w[i] += s;
                        if w.iter().map(|c: &i64| c.abs()).sum::<i64>() <= radius && !next.contains(&w) {
                            next.push(w);
                        }
                    }
                }
            }
            out = next;
        }
        out.sort_by_key(|v| (v.iter().map(|c: &i64| c.abs()).sum::<i64>(), v.clone()));
        out
    }
}

/// Orbit invariants of (A, μ).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitData {
    pub orbit_size: Vec<usize>,
    pub d: Vec<usize>,
    pub s: Vec<usize>,
    pub d_pair: Vec<Vec<usize>>,
    pub abar: Vec<Vec<i64>>,
    #[serde(serialize_with = "ser_matrix")]
    pub c: Vec<Vec<CycScalar>>,
}

fn ser_matrix<S: Serializer>(m: &[Vec<CycScalar>], s: S) -> Result<S::Ok, S::Error> {
    m.serialize(s)
}

/// Computes N_i, d_i, s_i, d_ij, ā_ij and C_ij.
pub fn orbit_data(dt: &RootDatum) -> OrbitData {
    let n = dt.n as usize;
    let l = dt.rank;
    let mut orbit_size = Vec::with_capacity(l);
    let mut d = Vec::with_capacity(l);
    let mut s = Vec::with_capacity(l);
    for i in 0..l {
        let mut orbit: Vec<usize> = (0..n as i64).map(|k| dt.mu_pow(i, k)).collect();
        orbit.sort_unstable();
        orbit.dedup();
        let ni = orbit.len();
        orbit_size.push(ni);
        d.push(n / ni);
        let two = ni % 2 == 0 && dt.a(dt.mu_pow(i, (ni / 2) as i64), i) == -1;
        s.push(if two { 2 } else { 1 });
    }
    let mut d_pair = vec![vec![0; l]; l];
    let mut abar = vec![vec![0; l]; l];
    let mut c = vec![vec![CycScalar::one(dt.n); l]; l];
    for i in 0..l {
        for j in 0..l {
            d_pair[i][j] = (0..n as i64).filter(|&k| dt.a_mu(i, k, j) != 0).count();
            abar[i][j] = dt.abar(i, j);
            for k in 0..n as i64 {
                if dt.a_mu(i, k, j) == -1 {
                    c[i][j] = &c[i][j] * &(-CycScalar::xi_pow(dt.n, -k));
                }
            }
        }
    }
    OrbitData { orbit_size, d, s, d_pair, abar, c }
}

#[derive(Serialize)]
pub struct DatumDump<'a> {
    pub label: String,
    pub mu: MuSpec,
    pub order: u32,
    pub cartan: &'a [Vec<i64>],
    pub mu_perm: Vec<usize>,
    pub epsilon: &'a [Vec<i8>],
    pub orbit: OrbitData,
    pub mu_evenness: bool,
}

impl RootDatum {
    /// Report header describing the datum (1-based μ images).
    pub fn dump(&self) -> DatumDump<'_> {
        DatumDump {
            label: self.label(),
            mu: self.mu_spec,
            order: self.n,
            cartan: &self.cartan,
            mu_perm: self.mu.iter().map(|v| v + 1).collect(),
            epsilon: &self.eps_table,
            orbit: orbit_data(self),
            mu_evenness: self.check_mu_evenness(),
        }
    }
}

/// The built-in (type, μ) pairs exercised by the structure suites.
pub fn builtin_data() -> Vec<RootDatum> {
    [
        ("A1", "identity"),
        ("A2", "identity"),
        ("A2", "flip"),
        ("A3", "identity"),
        ("A3", "flip"),
        ("D4", "identity"),
        ("D4", "flip"),
        ("D4", "triality"),
        ("E6", "flip"),
    ]
    .iter()
    .map(|(t, m)| datum_from_labels(t, m).expect("built-in datum"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let a1 = datum_from_labels("A1", "identity").unwrap();
        assert_eq!(a1.cartan, vec![vec![2]]);
        assert_eq!(a1.n, 1);
        let a2 = datum_from_labels("A2", "flip").unwrap();
        assert_eq!(a2.mu, vec![1, 0]);
        assert_eq!(a2.n, 2);
        let d4 = datum_from_labels("D4", "triality").unwrap();
        assert_eq!(d4.n, 3);
        assert_eq!(d4.mu_pow(0, 1), 2);
        assert_eq!(d4.mu_pow(1, 1), 1);
        assert!(datum_from_labels("A1", "flip").is_err());
        assert!(datum_from_labels("A3", "triality").is_err());
        assert!(parse_type("B2").is_err());
    }

    #[test]
    fn cartan_inverse() {
        for dt in builtin_data() {
            for i in 0..dt.rank {
                for j in 0..dt.rank {
                    let s: Rat = (0..dt.rank).map(|k| rat_int(dt.cartan[i][k]) * &dt.cartan_inv[k][j]).sum();
                    assert_eq!(s, if i == j { Rat::one() } else { Rat::zero() });
                }
            }
        }
    }

    #[test]
    fn epsilon_examples() {
        let a2 = datum_from_labels("A2", "identity").unwrap();
        let (a1, a2v) = (a2.simple(0), a2.simple(1));
        assert_eq!(a2.epsilon(&a1, &a1), 1);
        assert_eq!(a2.epsilon(&a1, &a2v), 1);
        assert_eq!(a2.epsilon(&a2v, &a1), -1);
        assert_eq!(a2.epsilon(&[1, 1], &a1), -1);
        assert_eq!(a2.epsilon(&a1, &[-1, 0]), 1);
    }

    #[test]
    fn orbit_examples() {
        let a1 = orbit_data(&datum_from_labels("A1", "identity").unwrap());
        assert_eq!((a1.orbit_size[0], a1.d[0], a1.s[0], a1.d_pair[0][0], a1.abar[0][0]), (1, 1, 1, 1, 2));
        assert!(a1.c[0][0].is_one());
        let a2 = orbit_data(&datum_from_labels("A2", "flip").unwrap());
        assert_eq!((a2.orbit_size[0], a2.d[0], a2.s[0], a2.d_pair[0][0]), (2, 1, 2, 2));
        let a3 = orbit_data(&datum_from_labels("A3", "flip").unwrap());
        assert_eq!((a3.orbit_size[1], a3.d[1], a3.s[1]), (1, 2, 1));
    }

    #[test]
    fn evenness_examples() {
        assert!(datum_from_labels("A1", "identity").unwrap().check_mu_evenness());
        assert!(!datum_from_labels("A2", "flip").unwrap().check_mu_evenness());
        assert!(datum_from_labels("D4", "triality").unwrap().check_mu_evenness());
    }

    #[test]
    fn orbit_symmetries() {
        for dt in builtin_data() {
            let o = orbit_data(&dt);
            for i in 0..dt.rank {
                assert_eq!(o.d_pair[i][i], o.s[i] * o.d[i]);
                for j in 0..dt.rank {
                    assert_eq!(o.d_pair[i][j], o.d_pair[j][i]);
                    assert_eq!(o.d_pair[dt.mu[i]][j], o.d_pair[i][j]);
                    assert_eq!(o.abar[i][j], o.abar[j][i]);
                    assert_eq!(o.d_pair[i][j] % o.d[i], 0);
                    let mut expect = CycScalar::one(dt.n);
                    for k in 0..dt.n as i64 {
                        if dt.a_mu(i, k, j) == -1 {
                            expect = &expect * &CycScalar::xi_pow(dt.n, -2 * k);
                        }
                    }
                    assert_eq!(&o.c[i][j] * &o.c[j][i], expect, "{} {i} {j}", dt.label());
                }
            }
        }
    }

    fn ball_pair() -> impl Strategy<Value = (usize, LatVec, LatVec)> {
        (0usize..9).prop_flat_map(|idx| {
            let rank = builtin_data()[idx].rank;
            let v = proptest::collection::vec(-2i64..=2, rank);
            (Just(idx), v.clone(), v)
        })
    }

    proptest! {
        #[test]
        fn epsilon_commutator_and_mu_invariance((idx, a, b) in ball_pair()) {
            let dt = &builtin_data()[idx];
            let sign = if dt.form(&a, &b).rem_euclid(2) == 0 { 1 } else { -1 };
            prop_assert_eq!(dt.epsilon(&a, &b) * dt.epsilon(&b, &a), sign);
            prop_assert_eq!(dt.form(&dt.mu_vec(&a), &dt.mu_vec(&b)), dt.form(&a, &b));
        }
    }
}
