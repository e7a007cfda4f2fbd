//! Weighted sums of Pauli strings, plus the closed forms available for
//! densities of the form `2^{-n}(1 + Σ a_i P_i)` with mutually anticommuting `P_i`.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{BitSet, PauliString, Universe};

/// Coefficients below this magnitude are dropped.
pub const COEFF_EPS: f64 = 1e-14;
/// Slack allowed on `Σ a_i² ≤ 1`.
pub const POSITIVITY_SLACK: f64 = 1e-12;
/// `δ` at or above `1 - SINGULAR_GAP` is treated as singular.
pub const SINGULAR_GAP: f64 = 1e-12;
/// Floor used when a singular density needs a regulator and none was given.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// `Σ c_P · P` acting on the Hilbert space of `sites`.
///
/// Coefficients are stored against the canonical `X^x Z^z` strings; use
/// [`PauliSum::from_hermitian`] and [`PauliSum::hermitian_terms`] to work with
/// Y-labelled Hermitian strings instead.
#[derive(Debug, Clone)]
pub struct PauliSum {
    universe: Arc<Universe>,
    sites: BitSet,
    terms: BTreeMap<PauliString, Complex64>,
}

/// JSON term record; `string` names a Hermitian Pauli operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub string: String,
    pub re: f64,
    pub im: f64,
}

impl PauliSum {
    pub fn zero(universe: Arc<Universe>, sites: BitSet) -> Self {
        Self {
            universe,
            sites,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(universe: Arc<Universe>, sites: BitSet) -> Self {
        let mut s = Self::zero(universe, sites);
        s.terms
            .insert(PauliString::identity(), Complex64::new(1.0, 0.0));
        s
    }

    /// Sum over the whole universe.
    pub fn zero_on(universe: &Arc<Universe>) -> Self {
        Self::zero(universe.clone(), universe.all())
    }

    /// Builds `Σ c_k H_k` from Hermitian Pauli operators `H_k` (Y allowed).
    pub fn from_hermitian(
        universe: Arc<Universe>,
        sites: BitSet,
        terms: impl IntoIterator<Item = (Complex64, PauliString)>,
    ) -> Self {
        let mut s = Self::zero(universe, sites);
        for (c, p) in terms {
            let c = c * p.hermitian_phase().to_complex();
            s.add_term(p, c);
        }
        s.prune();
        s
    }

    /// Real-weighted sum of labelled strings, e.g. `[(1.0, "Z_-1 X_0")]`.
    pub fn from_labels(universe: &Arc<Universe>, terms: &[(f64, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|(c, t)| Ok((Complex64::new(*c, 0.0), universe.parse(t)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_hermitian(
            universe.clone(),
            universe.all(),
            parsed,
        ))
    }

    pub fn from_string(
        universe: Arc<Universe>,
        sites: BitSet,
        p: PauliString,
        c: Complex64,
    ) -> Self {
        let mut s = Self::zero(universe, sites);
        s.add_term(p, c);
        s.prune();
        s
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn sites(&self) -> &BitSet {
        &self.sites
    }

    /// Number of qubits in the Hilbert space.
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    pub fn identity_coeff(&self) -> Complex64 {
        self.coeff(&PauliString::identity())
    }

    /// `Tr = 2^n · (identity coefficient)`.
    pub fn trace(&self) -> Complex64 {
        self.identity_coeff() * 2f64.powi(self.n_sites() as i32)
    }

    /// Union of the term supports.
    pub fn support(&self) -> BitSet {
        self.terms
            .keys()
            .fold(BitSet::default(), |acc, p| acc.union(&p.support()))
    }

    /// Terms as `(Hermitian string, coefficient)` pairs.
    pub fn hermitian_terms(&self) -> impl Iterator<Item = (&PauliString, Complex64)> {
        self.terms
            .iter()
            .map(|(p, c)| (p, c * p.hermitian_phase().conj().to_complex()))
    }

    pub fn add_term(&mut self, p: PauliString, c: Complex64) {
        *self.terms.entry(p).or_default() += c;
    }

    pub fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() > COEFF_EPS);
    }

    fn check_universe(&self, other: &PauliSum) {
        assert!(
            Arc::ptr_eq(&self.universe, &other.universe) || self.universe == other.universe,
            "Pauli sums over different site universes"
        );
    }

    pub fn add(&self, other: &PauliSum) -> PauliSum {
        self.check_universe(other);
        let mut out = self.clone();
        out.sites = self.sites.union(&other.sites);
        for (p, c) in &other.terms {
            out.add_term(p.clone(), *c);
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &PauliSum) -> PauliSum {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> PauliSum {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.prune();
        out
    }

    pub fn scale_real(&self, c: f64) -> PauliSum {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Distributive product with phase tracking.
    pub fn mul_sum(&self, other: &PauliSum) -> PauliSum {
        self.check_universe(other);
        let mut out = PauliSum::zero(self.universe.clone(), self.sites.union(&other.sites));
        for (p, a) in &self.terms {
            for (q, b) in &other.terms {
                let (ph, r) = p.mul(q);
                out.add_term(r, a * b * ph.to_complex());
            }
        }
        out.prune();
        out
    }

    pub fn commutator(&self, other: &PauliSum) -> PauliSum {
        self.mul_sum(other).sub(&other.mul_sum(self))
    }

    pub fn adjoint(&self) -> PauliSum {
        let mut out = self.clone();
        for (p, c) in out.terms.iter_mut() {
            *c = c.conj() * p.adjoint_sign().to_complex();
        }
        out
    }

    /// `c · adjoint_sign(P) = conj(c)` for every term, within `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms
            .iter()
            .all(|(p, c)| (c * p.adjoint_sign().to_complex() - c.conj()).norm() <= tol)
    }

    /// Largest coefficient difference against `other`.
    pub fn max_abs_diff(&self, other: &PauliSum) -> f64 {
        let d = self.sub(other);
        d.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn with_sites(mut self, sites: BitSet) -> Self {
        self.sites = sites;
        self
    }

    /// Partial trace over `traced`: terms touching a traced site vanish, the rest
    /// pick up `2^{|traced|}`.
    pub fn ptrace(&self, traced: &BitSet) -> PauliSum {
        let traced = traced.intersection(&self.sites);
        let factor = 2f64.powi(traced.len() as i32);
        let mut out = PauliSum::zero(self.universe.clone(), self.sites.difference(&traced));
        for (p, c) in &self.terms {
            if p.restrict_identity_on(&traced) {
                out.add_term(p.clone(), c * factor);
            }
        }
        out.prune();
        out
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        self.hermitian_terms()
            .map(|(p, c)| TermRecord {
                string: self.universe.render(p),
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn from_records(
        universe: Arc<Universe>,
        sites: BitSet,
        records: &[TermRecord],
    ) -> Result<Self> {
        let terms = records
            .iter()
            .map(|r| Ok((Complex64::new(r.re, r.im), universe.parse(&r.string)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_hermitian(universe, sites, terms))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_records()).expect("records serialize")
    }

    pub fn from_json(universe: Arc<Universe>, sites: BitSet, json: &str) -> Result<Self> {
        let records: Vec<TermRecord> = serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("Pauli sum JSON: {e}")))?;
        Self::from_records(universe, sites, &records)
    }
}

/// Free-function form of [`PauliSum::ptrace`].
pub fn ptrace_sum(rho: &PauliSum, traced: &BitSet) -> PauliSum {
    rho.ptrace(traced)
}

/// `ρ = 2^{-n}(1 + Σ a_i P_i)` with Hermitian, pairwise anticommuting `P_i`.
#[derive(Debug, Clone)]
pub struct AnticommutingDensity {
    universe: Arc<Universe>,
    sites: BitSet,
    /// `(bits of the Hermitian string P_i, a_i)`.
    coeffs: Vec<(PauliString, f64)>,
}

impl AnticommutingDensity {
    pub fn new(
        universe: Arc<Universe>,
        sites: BitSet,
        coeffs: Vec<(PauliString, f64)>,
    ) -> Result<Self> {
        for (i, (p, _)) in coeffs.iter().enumerate() {
            if p.is_identity() {
                return Err(Error::InvalidParameter(
                    "identity among anticommuting terms".into(),
                ));
            }
            for (q, _) in &coeffs[..i] {
                if p.commutes(q) {
                    return Err(Error::NotAnticommuting(
                        universe.render(q),
                        universe.render(p),
                    ));
                }
            }
        }
        let norm2: f64 = coeffs.iter().map(|(_, a)| a * a).sum();
        if norm2 > 1.0 + POSITIVITY_SLACK {
            return Err(Error::NotPositive(norm2));
        }
        Ok(Self {
            universe,
            sites,
            coeffs,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &BitSet {
        &self.sites
    }

    pub fn coeffs(&self) -> &[(PauliString, f64)] {
        &self.coeffs
    }

    /// `δ = ‖a‖`, clipped into `[0, 1]`.
    pub fn delta(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(_, a)| a * a)
            .sum::<f64>()
            .sqrt()
            .min(1.0)
    }

    /// Unit-norm direction `P̃ = Σ a_i P_i / δ` as a Pauli sum (empty when δ = 0).
    pub fn direction(&self) -> PauliSum {
        let d = self.delta();
        if d == 0.0 {
            return PauliSum::zero(self.universe.clone(), self.sites.clone());
        }
        PauliSum::from_hermitian(
            self.universe.clone(),
            self.sites.clone(),
            self.coeffs
                .iter()
                .map(|(p, a)| (Complex64::new(a / d, 0.0), p.clone())),
        )
    }

    pub fn to_sum(&self) -> PauliSum {
        let norm = 2f64.powi(-(self.n_sites() as i32));
        let mut s = PauliSum::from_hermitian(
            self.universe.clone(),
            self.sites.clone(),
            self.coeffs
                .iter()
                .map(|(p, a)| (Complex64::new(*a, 0.0), p.clone())),
        );
        s.add_term(PauliString::identity(), Complex64::new(1.0, 0.0));
        s.scale_real(norm)
    }

    /// Spectrum `(1 ± δ)/2^n`, each with multiplicity `2^{n-1}` (δ > 0).
    pub fn eigenvalues(&self) -> [(f64, usize); 2] {
        let n = self.n_sites() as i32;
        let d = self.delta();
        let mult = if n == 0 { 0 } else { 1usize << (n - 1) };
        [
            ((1.0 + d) / 2f64.powi(n), mult),
            ((1.0 - d) / 2f64.powi(n), mult),
        ]
    }
}

/// Recognizes `ρ` as an [`AnticommutingDensity`].
pub fn as_anticommuting(rho: &PauliSum) -> Result<AnticommutingDensity> {
    let n = rho.n_sites();
    let norm = 2f64.powi(n as i32);
    if !rho.is_hermitian(1e-12) {
        return Err(Error::NotNormalized("operator is not Hermitian".into()));
    }
    let id = rho.identity_coeff();
    if (id * norm - 1.0).norm() > 1e-10 {
        return Err(Error::NotNormalized(format!(
            "identity coefficient {} != 2^-{n}",
            id.re
        )));
    }
    let mut coeffs = Vec::new();
    for (p, c) in rho.hermitian_terms() {
        if p.is_identity() {
            continue;
        }
        if c.im.abs() > 1e-12 {
            return Err(Error::NotNormalized(format!(
                "non-real coefficient on {}",
                rho.universe().render(p)
            )));
        }
        coeffs.push((p.clone(), c.re * norm));
    }
    AnticommutingDensity::new(rho.universe().clone(), rho.sites().clone(), coeffs)
}

/// `K = constant·1 + string_part`, with the projector form kept alongside.
#[derive(Debug, Clone)]
pub struct ModularHamiltonian {
    pub constant: f64,
    pub string_part: PauliSum,
    pub regulator_used: Option<f64>,
    /// δ actually used in the logs (`1 - ε` when regulated).
    pub effective_delta: f64,
    pub n_sites: usize,
    direction: PauliSum,
}

impl ModularHamiltonian {
    pub fn to_sum(&self) -> PauliSum {
        let mut s = self.string_part.clone();
        s.add_term(PauliString::identity(), Complex64::new(self.constant, 0.0));
        s.prune();
        s
    }

    /// `P̃`, the unit-norm string direction.
    pub fn direction(&self) -> &PauliSum {
        &self.direction
    }

    /// Coefficients `(c_0, c_+, c_-)` with `K = c_0·1 + c_+ (1+P̃)/2 + c_- (1-P̃)/2`.
    pub fn projector_form(&self) -> (f64, f64, f64) {
        let d = self.effective_delta;
        (self.n_sites as f64 * LN_2, -(1.0 + d).ln(), -(1.0 - d).ln())
    }
}

/// `K = -ln ρ` in closed form. A singular density (δ = 1) needs `regulator = Some(ε)`,
/// which replaces δ by `1 - ε`.
pub fn modular_hamiltonian_closed(
    rho: &AnticommutingDensity,
    regulator: Option<f64>,
) -> Result<ModularHamiltonian> {
    let n = rho.n_sites();
    let delta = rho.delta();
    let direction = rho.direction();
    let (effective, regulator_used) = if delta >= 1.0 - SINGULAR_GAP {
        match regulator {
            Some(eps) if eps > 0.0 && eps < 1.0 => (1.0 - eps, Some(eps)),
            Some(eps) => {
                return Err(Error::InvalidParameter(format!(
                    "regulator must lie in (0, 1), got {eps}"
                )))
            }
            None => return Err(Error::SingularDensity(delta)),
        }
    } else {
        (delta, None)
    };
    // ln(1+δ) + ln(1-δ) computed separately to stay accurate near δ = 1.
    let log_plus = effective.ln_1p();
    let log_minus = (-effective).ln_1p();
    let constant = n as f64 * LN_2 - 0.5 * (log_plus + log_minus);
    let string_coeff = -0.5 * (log_plus - log_minus);
    Ok(ModularHamiltonian {
        constant,
        string_part: direction.scale_real(string_coeff),
        regulator_used,
        effective_delta: effective,
        n_sites: n,
        direction,
    })
}

/// Von Neumann entropy (natural log) of an anticommuting density.
pub fn entropy_closed(rho: &AnticommutingDensity) -> f64 {
    let n = rho.n_sites() as f64;
    let d = rho.delta();
    let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    // (1±δ)/2 · ln(1±δ) vanishes at δ = 1 for the minus branch.
    n * LN_2 - (0.5 * xlogx(1.0 + d) + 0.5 * xlogx(1.0 - d))
}


#[cfg(test)]
mod proptests {
    use proptest::prelude::*;

    use super::*;
    use crate::dense::{entropy_dense, DenseLimits, DenseOperator};
    use crate::testing::{anticommuting_density, bits, pauli_sum};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn sum_product_matches_dense(a in pauli_sum(), b in pauli_sum()) {
            let limits = DenseLimits::default();
            let prod = DenseOperator::from_sum(&a.mul_sum(&b), &limits).unwrap();
            let want = DenseOperator::from_sum(&a, &limits).unwrap().mul(&DenseOperator::from_sum(&b, &limits).unwrap());
            prop_assert!(prod.max_abs_diff(&want) < 1e-12);
        }

        #[test]
        fn ptrace_commutes_with_dense(s in pauli_sum(), mask in 0u8..8) {
            let limits = DenseLimits::default();
            let traced = bits(mask);
            let sym = DenseOperator::from_sum(&s.ptrace(&traced), &limits).unwrap();
            let den = DenseOperator::from_sum(&s, &limits).unwrap().ptrace(&traced);
            prop_assert!(sym.max_abs_diff(&den) < 1e-12);
        }

        #[test]
        fn entropy_closed_matches_dense(rho in anticommuting_density()) {
            let limits = DenseLimits::default();
            let d = DenseOperator::from_sum(&rho.to_sum(), &limits).unwrap();
            prop_assert!((entropy_closed(&rho) - entropy_dense(&d, &limits).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn closed_modular_hamiltonian_exponentiates_back(rho in anticommuting_density()) {
            let limits = DenseLimits::default();
            let k = modular_hamiltonian_closed(&rho, None).unwrap();
            let back = DenseOperator::from_sum(&k.to_sum(), &limits).unwrap().exp_neg(&limits).unwrap();
            let want = DenseOperator::from_sum(&rho.to_sum(), &limits).unwrap();
            prop_assert!(back.max_abs_diff(&want) < 1e-9);
        }

        #[test]
        fn anticommuting_spectrum(rho in anticommuting_density()) {
            let limits = DenseLimits::default();
            let d = DenseOperator::from_sum(&rho.to_sum(), &limits).unwrap();
            let mut got = d.eigenvalues(&limits).unwrap();
            let mut want: Vec<f64> = rho.eigenvalues().iter().flat_map(|&(e, k)| std::iter::repeat_n(e, k)).collect();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-13);
            }
        }
    }
}
