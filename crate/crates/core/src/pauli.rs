//! Multi-qubit Pauli strings in symplectic form.
//!
//! A [`PauliString`] stores two bit sets over the dense internal site index of a
//! [`Universe`]. The operator it denotes is the ordered product over ascending
//! sites of `X^x Z^z`; no global phase is stored. A site carrying both bits is
//! therefore `XZ = -iY`, and the Hermitian Pauli operator with a `Y` there is
//! `i^k X^x Z^z` where `k = |x ∩ z|` (see [`PauliString::hermitian_phase`]).
//!
//! The text format (`"Z_-1 Y_0 Z_1"`) always names the Hermitian operator.

use std::collections::HashMap;
use std::fmt;
use std::ops::Mul;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Integer qubit label. 1D chains use signed labels in `[-2N, 2N]`; 2D lattices use
/// opaque labels handed out by the lattice builder.
pub type SiteId = i64;

/// Ordered set of sites making up one system, with the `SiteId` to bit-index map.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    sites: Vec<SiteId>,
    index: HashMap<SiteId, usize>,
    coords: Option<Vec<(i64, i64)>>,
}

impl Universe {
    pub fn new(sites: impl IntoIterator<Item = SiteId>) -> Result<Arc<Self>> {
        let mut sites: Vec<SiteId> = sites.into_iter().collect();
        sites.sort_unstable();
        let n = sites.len();
        sites.dedup();
        if sites.len() != n {
            return Err(Error::InvalidConfig("duplicate site labels".into()));
        }
        let index = sites.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        Ok(Arc::new(Self {
            sites,
            index,
            coords: None,
        }))
    }

    /// Sites `lo..=hi`.
    pub fn range(lo: SiteId, hi: SiteId) -> Arc<Self> {
        Self::new(lo..=hi).expect("a range has no duplicates")
    }

    /// Universe with a coordinate lookup table; `coords[k]` belongs to the k-th
    /// smallest label.
    pub fn with_coords(sites: Vec<(SiteId, (i64, i64))>) -> Result<Arc<Self>> {
        let mut sites = sites;
        sites.sort_unstable_by_key(|(s, _)| *s);
        let base = Self::new(sites.iter().map(|(s, _)| *s))?;
        let mut u = Arc::try_unwrap(base).expect("fresh Arc");
        u.coords = Some(sites.into_iter().map(|(_, c)| c).collect());
        Ok(Arc::new(u))
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn contains(&self, site: SiteId) -> bool {
        self.index.contains_key(&site)
    }

    pub fn index_of(&self, site: SiteId) -> Result<usize> {
        self.index
            .get(&site)
            .copied()
            .ok_or(Error::UnknownSite(site))
    }

    pub fn site_at(&self, index: usize) -> SiteId {
        self.sites[index]
    }

    pub fn coord(&self, site: SiteId) -> Option<(i64, i64)> {
        let k = *self.index.get(&site)?;
        self.coords.as_ref().map(|c| c[k])
    }

    pub fn all(&self) -> BitSet {
        BitSet::from_indices(0..self.len())
    }

    pub fn site_set(&self, sites: impl IntoIterator<Item = SiteId>) -> Result<BitSet> {
        let mut set = BitSet::default();
        for s in sites {
            set.insert(self.index_of(s)?);
        }
        Ok(set)
    }

    /// Labels of the sites in `set`, ascending.
    pub fn labels(&self, set: &BitSet) -> Vec<SiteId> {
        set.iter().map(|k| self.sites[k]).collect()
    }

    /// Single-site Pauli.
    pub fn single(&self, site: SiteId, p: Pauli) -> Result<PauliString> {
        self.string(&[(site, p)])
    }

    /// Bits of the Hermitian Pauli product described by `factors`.
    pub fn string(&self, factors: &[(SiteId, Pauli)]) -> Result<PauliString> {
        let mut out = PauliString::identity();
        for &(site, p) in factors {
            let k = self.index_of(site)?;
            if out.x.contains(k) || out.z.contains(k) {
                return Err(Error::Parse {
                    input: format!("{factors:?}"),
                    reason: format!("site {site} repeated"),
                });
            }
            let (xb, zb) = p.bits();
            if xb {
                out.x.insert(k);
            }
            if zb {
                out.z.insert(k);
            }
        }
        Ok(out)
    }

    /// `X_n X_{n+2} ... X_m`.
    pub fn x_string(&self, from: SiteId, to: SiteId) -> Result<PauliString> {
        if from > to || (to - from) % 2 != 0 {
            return Err(Error::InvalidXString { from, to });
        }
        let factors: Vec<_> = (from..=to).step_by(2).map(|s| (s, Pauli::X)).collect();
        self.string(&factors)
    }

    /// Renders the Hermitian operator named by `p`, e.g. `"Z_-1 Y_0 Z_1"`; the identity is `"I"`.
    pub fn render(&self, p: &PauliString) -> String {
        let mut parts = Vec::new();
        for k in p.support().iter() {
            let label = match (p.x.contains(k), p.z.contains(k)) {
                (true, true) => 'Y',
                (true, false) => 'X',
                (false, true) => 'Z',
                (false, false) => unreachable!(),
            };
            parts.push(format!("{label}_{}", self.sites[k]));
        }
        if parts.is_empty() {
            "I".to_string()
        } else {
            parts.join(" ")
        }
    }

    /// Inverse of [`Universe::render`].
    pub fn parse(&self, text: &str) -> Result<PauliString> {
        let err = |reason: String| Error::Parse {
            input: text.to_string(),
            reason,
        };
        let trimmed = text.trim();
        if trimmed == "I" || trimmed.is_empty() {
            return Ok(PauliString::identity());
        }
        let mut factors = Vec::new();
        for tok in trimmed.split_whitespace() {
            let (label, site) = tok
                .split_once('_')
                .ok_or_else(|| err(format!("token {tok:?} lacks '_'")))?;
            let p = match label {
                "X" => Pauli::X,
                "Y" => Pauli::Y,
                "Z" => Pauli::Z,
                other => return Err(err(format!("unknown Pauli {other:?}"))),
            };
            let site: SiteId = site
                .parse()
                .map_err(|_| err(format!("bad site label {site:?}")))?;
            factors.push((site, p));
        }
        self.string(&factors).map_err(|e| match e {
            Error::Parse { reason, .. } => err(reason),
            other => other,
        })
    }
}

/// Growable bit set with no trailing zero words, so equal sets compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitSet(Vec<u64>);

impl BitSet {
    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::default();
        for k in indices {
            s.insert(k);
        }
        s
    }

    pub fn insert(&mut self, k: usize) {
        let w = k / 64;
        if self.0.len() <= w {
            self.0.resize(w + 1, 0);
        }
        self.0[w] |= 1 << (k % 64);
    }

    pub fn remove(&mut self, k: usize) {
        let w = k / 64;
        if w < self.0.len() {
            self.0[w] &= !(1 << (k % 64));
            self.trim();
        }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.get(k / 64).is_some_and(|w| w >> (k % 64) & 1 == 1)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            })
        })
    }

    fn trim(&mut self) {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        let n = self.0.len().max(other.0.len());
        let mut out: Vec<u64> = (0..n)
            .map(|k| {
                f(
                    self.0.get(k).copied().unwrap_or(0),
                    other.0.get(k).copied().unwrap_or(0),
                )
            })
            .collect();
        while out.last() == Some(&0) {
            out.pop();
        }
        Self(out)
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn symmetric_difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.difference(other).is_empty()
    }

    /// Parity of `|self ∩ other|`.
    pub fn overlap_parity(&self, other: &Self) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }
}

/// Single-qubit Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// `(x, z)` bits; `Y` sets both.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }
}

/// Element `i^k` of the cyclic group {1, i, -1, -i}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn i_pow(k: usize) -> Self {
        Phase((k % 4) as u8)
    }

    pub fn sign(negative: bool) -> Self {
        if negative {
            Self::MINUS_ONE
        } else {
            Self::ONE
        }
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn conj(self) -> Self {
        Phase((4 - self.0) % 4)
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(["+1", "+i", "-1", "-i"][self.0 as usize])
    }
}

/// Canonical Pauli string `∏_s X_s^{x_s} Z_s^{z_s}` over ascending internal indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    x: BitSet,
    z: BitSet,
}

impl PauliString {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_bits(x: BitSet, z: BitSet) -> Self {
        Self { x, z }
    }

    pub fn x_bits(&self) -> &BitSet {
        &self.x
    }

    pub fn z_bits(&self) -> &BitSet {
        &self.z
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_empty() && self.z.is_empty()
    }

    pub fn support(&self) -> BitSet {
        self.x.union(&self.z)
    }

    pub fn weight(&self) -> usize {
        self.support().len()
    }

    /// Number of sites carrying both bits (the Y count).
    pub fn y_count(&self) -> usize {
        self.x.intersection(&self.z).len()
    }

    /// `P·P = square_sign · 1`; equals `(-1)^{|x∩z|}`.
    pub fn square_sign(&self) -> Phase {
        Phase::sign(self.y_count() % 2 == 1)
    }

    /// `P† = adjoint_sign · P`; same sign as the square.
    pub fn adjoint_sign(&self) -> Phase {
        self.square_sign()
    }

    /// Phase `i^{|x∩z|}` such that the Hermitian Pauli operator with these bits
    /// equals `hermitian_phase · P`.
    pub fn hermitian_phase(&self) -> Phase {
        Phase::i_pow(self.y_count())
    }

    /// Single-site factor at internal index `k`.
    pub fn factor(&self, k: usize) -> Pauli {
        match (self.x.contains(k), self.z.contains(k)) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (false, true) => Pauli::Z,
            (true, true) => Pauli::Y,
        }
    }

    /// Copy with the factor at `k` replaced by the bits of `p`.
    pub fn with_factor(&self, k: usize, p: Pauli) -> Self {
        let mut out = self.clone();
        out.x.remove(k);
        out.z.remove(k);
        let (xb, zb) = p.bits();
        if xb {
            out.x.insert(k);
        }
        if zb {
            out.z.insert(k);
        }
        out
    }

    /// Part of the string on the sites in `keep`.
    pub fn restrict(&self, keep: &BitSet) -> Self {
        Self {
            x: self.x.intersection(keep),
            z: self.z.intersection(keep),
        }
    }

    /// `self · other = phase · result`.
    pub fn mul(&self, other: &PauliString) -> (Phase, PauliString) {
        // Moving each Z of `self` past an X of `other` on the same site costs a sign.
        let phase = Phase::sign(self.z.overlap_parity(&other.x));
        let result = PauliString {
            x: self.x.symmetric_difference(&other.x),
            z: self.z.symmetric_difference(&other.z),
        };
        (phase, result)
    }

    pub fn commutes(&self, other: &PauliString) -> bool {
        self.x.overlap_parity(&other.z) == self.z.overlap_parity(&other.x)
    }

    /// True iff the string acts as the identity on every site of `sites`.
    pub fn restrict_identity_on(&self, sites: &BitSet) -> bool {
        self.support().is_disjoint(sites)
    }
}

/// Free-function form of [`PauliString::mul`].
pub fn mul(p: &PauliString, q: &PauliString) -> (Phase, PauliString) {
    p.mul(q)
}

pub fn commutes(p: &PauliString, q: &PauliString) -> bool {
    p.commutes(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Arc<Universe> {
        Universe::range(-4, 4)
    }

    #[test]
    fn single_qubit_table() {
        let u = chain();
        let x = u.single(0, Pauli::X).unwrap();
        let z = u.single(0, Pauli::Z).unwrap();
        let (ph, r) = x.mul(&z);
        assert_eq!(ph, Phase::ONE);
        assert_eq!(r, u.single(0, Pauli::Y).unwrap());
        // ZX = -XZ
        let (ph, r2) = z.mul(&x);
        assert_eq!(ph, Phase::MINUS_ONE);
        assert_eq!(r, r2);
        assert!(!x.commutes(&z));
        assert!(x.commutes(&u.single(1, Pauli::X).unwrap()));
    }

    #[test]
    fn identity_is_neutral() {
        let u = chain();
        let p = u.parse("Z_-1 Y_0 X_3").unwrap();
        assert_eq!(PauliString::identity().mul(&p), (Phase::ONE, p.clone()));
        assert_eq!(p.mul(&PauliString::identity()), (Phase::ONE, p.clone()));
    }

    #[test]
    fn squares_and_adjoint_sign() {
        let u = chain();
        for text in ["X_0", "Y_0", "Y_0 Y_1", "Z_-1 Y_0 Z_1", "Y_-2 Y_0 Y_2"] {
            let p = u.parse(text).unwrap();
            let (ph, r) = p.mul(&p);
            assert!(r.is_identity());
            assert_eq!(ph, p.square_sign(), "{text}");
        }
    }

    #[test]
    fn support_and_strings() {
        let u = chain();
        assert!(PauliString::identity().support().is_empty());
        let p = u.parse("Z_-1 X_0").unwrap();
        assert_eq!(u.labels(&p.support()), vec![-1, 0]);
        assert_eq!(u.render(&u.x_string(-4, 0).unwrap()), "X_-4 X_-2 X_0");
        assert_eq!(u.render(&u.x_string(0, 0).unwrap()), "X_0");
        assert_eq!(u.render(&u.x_string(2, 4).unwrap()), "X_2 X_4");
        assert!(matches!(
            u.x_string(2, 0),
            Err(Error::InvalidXString { .. })
        ));
        assert!(matches!(
            u.x_string(0, 3),
            Err(Error::InvalidXString { .. })
        ));
    }

    #[test]
    fn restrict_identity() {
        let u = chain();
        let odd = u.site_set([-3, -1, 1, 3]).unwrap();
        assert!(PauliString::identity().restrict_identity_on(&odd));
        assert!(!u.parse("Z_1 X_2 Z_3").unwrap().restrict_identity_on(&odd));
        assert!(u.x_string(0, 4).unwrap().restrict_identity_on(&odd));
    }

    #[test]
    fn render_parse_roundtrip() {
        let u = chain();
        for text in ["I", "Z_-1 X_0 Z_1", "X_-4 Y_0 Z_4"] {
            assert_eq!(u.render(&u.parse(text).unwrap()), text);
        }
        assert!(u.parse("X_9").is_err());
        assert!(u.parse("W_0").is_err());
        assert!(u.parse("X_0 Z_0").is_err());
    }

    #[test]
    fn bitset_ops() {
        let a = BitSet::from_indices([1, 70, 3]);
        let b = BitSet::from_indices([3, 70]);
        assert_eq!(a.len(), 3);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![1, 3, 70]);
        assert_eq!(a.symmetric_difference(&b), BitSet::from_indices([1]));
        assert!(b.is_subset(&a));
        assert!(!a.overlap_parity(&b));
        let mut c = a.clone();
        c.remove(70);
        assert_eq!(c, BitSet::from_indices([1, 3]));
    }

    #[test]
    fn phase_group() {
        assert_eq!(Phase::I * Phase::I, Phase::MINUS_ONE);
        assert_eq!(Phase::I * Phase::MINUS_I, Phase::ONE);
        assert_eq!(Phase::I.conj(), Phase::MINUS_I);
        assert_eq!(Phase::i_pow(7), Phase::MINUS_I);
    }
}

#[cfg(test)]
mod proptests {
    use num_complex::Complex64;
    use proptest::prelude::*;

    use crate::testing::{dense, pauli, universe};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn product_matches_dense(p in pauli(), q in pauli()) {
            let u = universe();
            let (ph, r) = p.mul(&q);
            let lhs = dense(&u, &p).mul(&dense(&u, &q));
            let rhs = dense(&u, &r).scale(ph.to_complex());
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }

        #[test]
        fn product_is_associative(p in pauli(), q in pauli(), r in pauli()) {
            let (a, pq) = p.mul(&q);
            let (b, left) = pq.mul(&r);
            let (c, qr) = q.mul(&r);
            let (d, right) = p.mul(&qr);
            prop_assert_eq!(left, right);
            prop_assert_eq!(a * b, c * d);
        }

        #[test]
        fn square_and_adjoint_signs(p in pauli()) {
            let (ph, sq) = p.mul(&p);
            prop_assert!(sq.is_identity());
            prop_assert_eq!(ph, p.square_sign());
            let u = universe();
            let d = dense(&u, &p);
            prop_assert!(d.adjoint().max_abs_diff(&d.scale(p.adjoint_sign().to_complex())) < 1e-15);
        }

        #[test]
        fn commute_or_anticommute(p in pauli(), q in pauli()) {
            let u = universe();
            let (pd, qd) = (dense(&u, &p), dense(&u, &q));
            let (pq, qp) = (pd.mul(&qd), qd.mul(&pd));
            let commuting = pq.max_abs_diff(&qp) < 1e-14;
            let anticommuting = pq.max_abs_diff(&qp.scale(Complex64::new(-1.0, 0.0))) < 1e-14;
            prop_assert!(commuting != anticommuting);
            prop_assert_eq!(commuting, p.commutes(&q));
        }
    }
}
