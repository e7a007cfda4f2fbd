//! Brute-force ground truth: explicit matrices and state vectors.
//!
//! Tensor factors follow ascending site order, and the smallest site is the most
//! significant bit of a basis index. Every embedding or partial trace goes through
//! [`SiteLayout`], which maps between a site subset and its bit positions; nothing
//! here re-sorts matrices by hand.

use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::algebra::PauliSum;
use crate::error::{Error, Result};
use crate::modular::{Method, ModcomResult};
use crate::pauli::{BitSet, PauliString, Universe};
use crate::reduction::RegionAssignment;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues at or below this are treated as exact zeros of a density.
pub const ZERO_EIGENVALUE: f64 = 1e-13;
/// Allowed drift of J across the regulator sweep.
pub const EPSILON_STABILITY: f64 = 1e-8;
/// Allowed imaginary part of the raw trace.
pub const IMAG_TOLERANCE: f64 = 1e-10;

/// Size ceilings for dense work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLimits {
    /// Largest operator (matrix) built explicitly.
    pub max_dense_qubits: usize,
    /// Largest operator that is fully eigendecomposed.
    pub max_eig_qubits: usize,
    /// Largest pure state held as an amplitude vector.
    pub max_statevector_qubits: usize,
}

impl Default for DenseLimits {
    fn default() -> Self {
        Self {
            max_dense_qubits: 14,
            max_eig_qubits: 12,
            max_statevector_qubits: 22,
        }
    }
}

impl DenseLimits {
    pub const ENV_VAR: &'static str = "MODCOM_MAX_DENSE_QUBITS";

    /// Defaults, with `MODCOM_MAX_DENSE_QUBITS` overriding the operator ceiling.
    pub fn from_env() -> Self {
        let mut limits = Self::default();
        if let Some(n) = std::env::var(Self::ENV_VAR)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
        {
            limits = limits.with_max_qubits(n);
        }
        limits
    }

    /// Lowers (or raises) the operator ceiling; the eigendecomposition cap never exceeds it.
    pub fn with_max_qubits(mut self, n: usize) -> Self {
        self.max_dense_qubits = n;
        self.max_eig_qubits = self.max_eig_qubits.min(n);
        self
    }

    fn check(needed: usize, limit: usize) -> Result<()> {
        if needed > limit {
            Err(Error::TooLarge { needed, limit })
        } else {
            Ok(())
        }
    }

    pub fn check_operator(&self, n: usize) -> Result<()> {
        Self::check(n, self.max_dense_qubits)
    }

    pub fn check_eig(&self, n: usize) -> Result<()> {
        Self::check(n, self.max_eig_qubits)
    }

    pub fn check_state(&self, n: usize) -> Result<()> {
        Self::check(n, self.max_statevector_qubits)
    }
}

/// Eigenvalue floor used when taking `-ln ρ`, plus the sweep used to show that
/// results do not depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorConfig {
    pub epsilon: f64,
    pub sweep: Vec<f64>,
}

impl Default for RegulatorConfig {
    fn default() -> Self {
        Self {
            epsilon: crate::algebra::DEFAULT_EPSILON,
            sweep: vec![1e-12, 1e-9, 1e-6],
        }
    }
}

impl RegulatorConfig {
    pub fn with_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "regulator must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            ..Self::default()
        })
    }
}

/// Bit positions of a site subset inside a basis index over `sites`.
#[derive(Debug, Clone)]
struct SiteLayout {
    /// Internal indices in ascending order.
    order: Vec<usize>,
}

impl SiteLayout {
    fn new(sites: &BitSet) -> Self {
        Self {
            order: sites.iter().collect(),
        }
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    /// Bit position of internal site `k` within a basis index.
    fn shift_of(&self, k: usize) -> Option<usize> {
        let pos = self.order.iter().position(|&s| s == k)?;
        Some(self.n() - 1 - pos)
    }

    /// Shifts of `subset`'s sites, in ascending site order.
    fn shifts(&self, subset: &BitSet) -> Vec<usize> {
        subset
            .iter()
            .map(|k| self.shift_of(k).expect("subset of layout"))
            .collect()
    }
}

/// Places the bits of `compact` (most significant first) at the positions `shifts`.
fn scatter(compact: usize, shifts: &[usize]) -> usize {
    let n = shifts.len();
    shifts.iter().enumerate().fold(0, |acc, (i, &s)| {
        acc | (((compact >> (n - 1 - i)) & 1) << s)
    })
}

/// Complex matrix product. Above a small size it is assembled from four real
/// products, which nalgebra hands to its optimized f64 kernel.
fn cmul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    if a.nrows() * a.ncols() * b.ncols() < 1 << 15 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

/// Largest entry modulus.
pub fn max_entry_norm(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// 2×2 matrix of `X^x Z^z`.
fn canonical_factor(x: bool, z: bool) -> [[Complex64; 2]; 2] {
    match (x, z) {
        (false, false) => [[ONE, ZERO], [ZERO, ONE]],
        (true, false) => [[ZERO, ONE], [ONE, ZERO]],
        (false, true) => [[ONE, ZERO], [ZERO, -ONE]],
        // X·Z
        (true, true) => [[ZERO, -ONE], [ONE, ZERO]],
    }
}

/// Complex square matrix over a set of sites of a universe.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    universe: Arc<Universe>,
    sites: BitSet,
    mat: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn new(universe: Arc<Universe>, sites: BitSet, mat: DMatrix<Complex64>) -> Self {
        let dim = 1usize << sites.len();
        assert_eq!(
            mat.shape(),
            (dim, dim),
            "matrix size does not match site count"
        );
        Self {
            universe,
            sites,
            mat,
        }
    }

    pub fn identity(universe: Arc<Universe>, sites: BitSet) -> Self {
        let dim = 1usize << sites.len();
        Self::new(universe, sites, DMatrix::identity(dim, dim))
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn sites(&self) -> &BitSet {
        &self.sites
    }

    pub fn n_qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.mat
    }

    /// Matrix of a canonical string on `sites` (its support must lie inside).
    pub fn from_pauli(
        universe: Arc<Universe>,
        sites: BitSet,
        p: &PauliString,
        limits: &DenseLimits,
    ) -> Result<Self> {
        limits.check_operator(sites.len())?;
        if !p.support().is_subset(&sites) {
            return Err(Error::InvalidParameter(format!(
                "string {} acts outside the operator's sites",
                universe.render(p)
            )));
        }
        let mut mat = DMatrix::from_element(1, 1, ONE);
        for k in sites.iter() {
            let f = canonical_factor(p.x_bits().contains(k), p.z_bits().contains(k));
            let f = DMatrix::from_row_slice(2, 2, &[f[0][0], f[0][1], f[1][0], f[1][1]]);
            mat = mat.kronecker(&f);
        }
        Ok(Self::new(universe, sites, mat))
    }

    pub fn from_sum(sum: &PauliSum, limits: &DenseLimits) -> Result<Self> {
        let sites = sum.sites().clone();
        limits.check_operator(sites.len())?;
        let dim = 1usize << sites.len();
        let mut mat = DMatrix::from_element(dim, dim, ZERO);
        for (p, c) in sum.terms() {
            let term = Self::from_pauli(sum.universe().clone(), sites.clone(), p, limits)?;
            mat += term.mat * *c;
        }
        Ok(Self::new(sum.universe().clone(), sites, mat))
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn from_state(psi: &StateVector, limits: &DenseLimits) -> Result<Self> {
        psi.reduced_density(&psi.sites, limits)
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            self.universe.clone(),
            self.sites.clone(),
            self.mat.adjoint(),
        )
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_entry_norm(&(&self.mat - self.mat.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    fn same_space(&self, other: &Self) {
        assert_eq!(self.sites, other.sites, "operators act on different sites");
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.same_space(other);
        Self::new(
            self.universe.clone(),
            self.sites.clone(),
            cmul(&self.mat, &other.mat),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.same_space(other);
        Self::new(
            self.universe.clone(),
            self.sites.clone(),
            &self.mat + &other.mat,
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.same_space(other);
        Self::new(
            self.universe.clone(),
            self.sites.clone(),
            &self.mat - &other.mat,
        )
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::new(self.universe.clone(), self.sites.clone(), &self.mat * c)
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.same_space(other);
        max_entry_norm(&(&self.mat - &other.mat))
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        self.same_space(other);
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.mat[(i, j)] * other.mat[(j, i)];
            }
        }
        acc
    }

    /// Partial trace over `traced` (sites outside this operator are ignored).
    pub fn ptrace(&self, traced: &BitSet) -> Self {
        let traced = traced.intersection(&self.sites);
        if traced.is_empty() {
            return self.clone();
        }
        let kept = self.sites.difference(&traced);
        let layout = SiteLayout::new(&self.sites);
        let kept_shifts = layout.shifts(&kept);
        let traced_shifts = layout.shifts(&traced);
        let dk = 1usize << kept.len();
        let dt = 1usize << traced.len();
        let mut out = DMatrix::from_element(dk, dk, ZERO);
        let traced_offsets: Vec<usize> = (0..dt).map(|t| scatter(t, &traced_shifts)).collect();
        for i in 0..dk {
            let bi = scatter(i, &kept_shifts);
            for j in 0..dk {
                let bj = scatter(j, &kept_shifts);
                let mut acc = ZERO;
                for &t in &traced_offsets {
                    acc += self.mat[(bi | t, bj | t)];
                }
                out[(i, j)] = acc;
            }
        }
        Self::new(self.universe.clone(), kept, out)
    }

    /// `self ⊗ 𝟙` on the larger site set `target ⊇ sites`.
    pub fn embed(&self, target: &BitSet, limits: &DenseLimits) -> Result<Self> {
        if !self.sites.is_subset(target) {
            return Err(Error::InvalidParameter(
                "embedding target must contain the operator's sites".into(),
            ));
        }
        limits.check_operator(target.len())?;
        let layout = SiteLayout::new(target);
        let own = layout.shifts(&self.sites);
        let rest = layout.shifts(&target.difference(&self.sites));
        let d_own = self.dim();
        let d_rest = 1usize << rest.len();
        let dim = 1usize << target.len();
        let mut out = DMatrix::from_element(dim, dim, ZERO);
        let own_offsets: Vec<usize> = (0..d_own).map(|i| scatter(i, &own)).collect();
        for r in 0..d_rest {
            let br = scatter(r, &rest);
            for i in 0..d_own {
                for j in 0..d_own {
                    let v = self.mat[(i, j)];
                    if v != ZERO {
                        out[(br | own_offsets[i], br | own_offsets[j])] = v;
                    }
                }
            }
        }
        Ok(Self::new(self.universe.clone(), target.clone(), out))
    }

    /// Operator acting as `m` on `qubits` (listed most significant first) and as
    /// the identity on the rest of `sites`.
    pub fn local(
        universe: Arc<Universe>,
        sites: BitSet,
        qubits: &[usize],
        m: &DMatrix<Complex64>,
        limits: &DenseLimits,
    ) -> Result<Self> {
        let sub = BitSet::from_indices(qubits.iter().copied());
        if sub.len() != qubits.len() || !sub.is_subset(&sites) {
            return Err(Error::InvalidParameter(
                "local operator qubits must be distinct sites of the operator".into(),
            ));
        }
        // Reorder `m` into ascending-site order first.
        let k = qubits.len();
        let mut sorted: Vec<usize> = qubits.to_vec();
        sorted.sort_unstable();
        let perm: Vec<usize> = qubits
            .iter()
            .map(|q| k - 1 - sorted.iter().position(|s| s == q).unwrap())
            .collect();
        let d = 1usize << k;
        let reorder = |i: usize| scatter(i, &perm);
        let mut ascending = DMatrix::from_element(d, d, ZERO);
        for i in 0..d {
            for j in 0..d {
                ascending[(reorder(i), reorder(j))] = m[(i, j)];
            }
        }
        Self::new(universe, sub, ascending).embed(&sites, limits)
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &Self) -> Self {
        self.same_space(u);
        Self::new(
            self.universe.clone(),
            self.sites.clone(),
            cmul(&cmul(&u.mat, &self.mat), &u.mat.adjoint()),
        )
    }

    /// Eigenvalues (ascending) and eigenvectors of a Hermitian operator.
    pub fn hermitian_eigen(&self, limits: &DenseLimits) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
        limits.check_eig(self.n_qubits())?;
        // Symmetrize to keep rounding noise out of the solver.
        let h = (&self.mat + self.mat.adjoint()) * Complex64::new(0.5, 0.0);
        let dim = h.nrows();
        let eig = h.symmetric_eigen();
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(dim, idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
        Ok((values, vectors))
    }

    pub fn eigenvalues(&self, limits: &DenseLimits) -> Result<Vec<f64>> {
        Ok(self.hermitian_eigen(limits)?.0)
    }

    /// `V f(Λ) V†`.
    pub fn apply_spectral(
        &self,
        values: &[f64],
        vectors: &DMatrix<Complex64>,
        f: impl Fn(f64) -> f64,
    ) -> Self {
        let mut scaled = vectors.clone();
        for (c, &lam) in values.iter().enumerate() {
            let fl = f(lam);
            scaled.column_mut(c).scale_mut(fl);
        }
        Self::new(
            self.universe.clone(),
            self.sites.clone(),
            cmul(&scaled, &vectors.adjoint()),
        )
    }

    /// `exp(-H)` for Hermitian `H`.
    pub fn exp_neg(&self, limits: &DenseLimits) -> Result<Self> {
        let (values, vectors) = self.hermitian_eigen(limits)?;
        Ok(self.apply_spectral(&values, &vectors, |l| (-l).exp()))
    }
}

/// Result of [`matrix_log_modular`].
#[derive(Debug, Clone)]
pub struct ModularLog {
    pub k: DenseOperator,
    /// True when some eigenvalue was raised to the floor.
    pub clamped: bool,
}

/// `K = -ln ρ` with eigenvalues floored at `reg.epsilon`.
pub fn matrix_log_modular(
    rho: &DenseOperator,
    reg: &RegulatorConfig,
    limits: &DenseLimits,
) -> Result<ModularLog> {
    let (values, vectors) = rho.hermitian_eigen(limits)?;
    Ok(log_from_spectrum(rho, &values, &vectors, reg.epsilon))
}

fn log_from_spectrum(
    rho: &DenseOperator,
    values: &[f64],
    vectors: &DMatrix<Complex64>,
    epsilon: f64,
) -> ModularLog {
    let clamped = values.iter().any(|&l| l < epsilon);
    let k = rho.apply_spectral(values, vectors, |l| -(l.max(epsilon)).ln());
    ModularLog { k, clamped }
}

/// Von Neumann entropy `-Σ λ ln λ` (natural log), `0·ln 0 = 0`.
pub fn entropy_dense(rho: &DenseOperator, limits: &DenseLimits) -> Result<f64> {
    let values = rho.eigenvalues(limits)?;
    Ok(values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum())
}

/// Free-function form of [`DenseOperator::ptrace`].
pub fn ptrace_dense(rho: &DenseOperator, traced: &BitSet) -> DenseOperator {
    rho.ptrace(traced)
}

/// Dense form of anything representable.
pub fn to_dense(sum: &PauliSum, limits: &DenseLimits) -> Result<DenseOperator> {
    DenseOperator::from_sum(sum, limits)
}

/// Eigenvalues as a one-column CSV, for debugging.
pub fn eigenvalues_csv(rho: &DenseOperator, limits: &DenseLimits) -> Result<String> {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in rho.eigenvalues(limits)?.iter().enumerate() {
        writeln!(out, "{i},{v:.17e}").expect("write to string");
    }
    Ok(out)
}

struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl Spectrum {
    fn of(rho: &DenseOperator, limits: &DenseLimits) -> Result<Self> {
        let (values, vectors) = rho.hermitian_eigen(limits)?;
        Ok(Self { values, vectors })
    }

    fn smallest_nonzero(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|&l| l > ZERO_EIGENVALUE)
            .reduce(f64::min)
    }

    fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `J = i Tr(ρ_ABC [K_AB, K_BC])` by explicit matrix logarithms.
///
/// `rho_abc` must live on exactly `A ∪ B ∪ C`. The value is recomputed for every
/// regulator in the sweep that lies below the smallest nonzero eigenvalue of
/// `ρ_AB` and `ρ_BC` (a floor above it would modify the physical spectrum); a
/// spread above [`EPSILON_STABILITY`] is reported as [`Error::EpsilonSensitive`].
pub fn modcom_dense(
    rho_abc: &DenseOperator,
    regions: &RegionAssignment,
    reg: &RegulatorConfig,
    limits: &DenseLimits,
) -> Result<ModcomResult> {
    let (a, b, c) = (regions.a(), regions.b(), regions.c());
    let abc = a.union(&b).union(&c);
    if rho_abc.sites() != &abc {
        return Err(Error::InvalidParameter(
            "dense modular commutator needs a density on exactly A ∪ B ∪ C".into(),
        ));
    }
    limits.check_operator(abc.len())?;
    let rho_ab = rho_abc.ptrace(&c);
    let rho_bc = rho_abc.ptrace(&a);
    let spec_ab = Spectrum::of(&rho_ab, limits)?;
    let spec_bc = Spectrum::of(&rho_bc, limits)?;
    let min_eig = spec_ab.min().min(spec_bc.min());
    if min_eig < -1e-10 {
        return Err(Error::NotPositive(min_eig));
    }

    let floor = match (spec_ab.smallest_nonzero(), spec_bc.smallest_nonzero()) {
        (Some(x), Some(y)) => x.min(y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => 1.0,
    };
    let mut eps_values: Vec<f64> = std::iter::once(reg.epsilon)
        .chain(reg.sweep.iter().copied())
        .filter(|&e| e > 0.0 && e < floor)
        .collect();
    if eps_values.len() < 2 {
        eps_values.extend([floor * 1e-3, floor * 1e-6]);
    }
    eps_values.dedup();

    // K(ε) = K₀ − ln ε · Π₀ with Π₀ the null-space projector, so J(ε) is a
    // quadratic in ln ε and four products cover the whole sweep.
    let split =
        |rho: &DenseOperator, spec: &Spectrum| -> Result<(DenseOperator, Option<DenseOperator>)> {
            let k0 = rho.apply_spectral(&spec.values, &spec.vectors, |l| {
                if l > ZERO_EIGENVALUE {
                    -l.ln()
                } else {
                    0.0
                }
            });
            let null = spec.values.iter().any(|&l| l <= ZERO_EIGENVALUE).then(|| {
                rho.apply_spectral(&spec.values, &spec.vectors, |l| {
                    f64::from(u8::from(l <= ZERO_EIGENVALUE))
                })
            });
            Ok((
                k0.embed(&abc, limits)?,
                null.map(|p| p.embed(&abc, limits)).transpose()?,
            ))
        };
    let (k_ab, p_ab) = split(&rho_ab, &spec_ab)?;
    let (k_bc, p_bc) = split(&rho_bc, &spec_bc)?;
    let clamped = p_ab.is_some() || p_bc.is_some();
    let (rho_k_ab, rho_k_bc) = (rho_abc.mul(&k_ab), rho_abc.mul(&k_bc));
    let rho_p_ab = p_ab.as_ref().map(|p| rho_abc.mul(p));
    let rho_p_bc = p_bc.as_ref().map(|p| rho_abc.mul(p));
    // Tr(ρ X Y) with either factor possibly absent (zero).
    let tr = |rho_x: Option<&DenseOperator>, y: Option<&DenseOperator>| match (rho_x, y) {
        (Some(a), Some(b)) => a.trace_product(b),
        _ => ZERO,
    };
    let i = Complex64::new(0.0, 1.0);
    let c0 = i * (tr(Some(&rho_k_ab), Some(&k_bc)) - tr(Some(&rho_k_bc), Some(&k_ab)));
    let c1 = i
        * (tr(Some(&rho_k_ab), p_bc.as_ref()) + tr(rho_p_ab.as_ref(), Some(&k_bc))
            - tr(Some(&rho_k_bc), p_ab.as_ref())
            - tr(rho_p_bc.as_ref(), Some(&k_ab)));
    let c2 = i * (tr(rho_p_ab.as_ref(), p_bc.as_ref()) - tr(rho_p_bc.as_ref(), p_ab.as_ref()));
    let evaluate = |eps: f64| -> Result<(f64, f64, bool)> {
        let a = -eps.ln();
        let raw = c0 + c1 * a + c2 * (a * a);
        Ok((raw.re, raw.im, clamped))
    };

    let mut samples = Vec::with_capacity(eps_values.len());
    let mut primary = None;
    for &eps in &eps_values {
        let (value, imag, clamped) = evaluate(eps)?;
        if imag.abs() > IMAG_TOLERANCE {
            return Err(Error::NonReal(imag));
        }
        samples.push((eps, value));
        if primary.is_none() {
            primary = Some((eps, value, imag, clamped));
        }
    }
    let (eps, value, imag, clamped) = primary.expect("at least one regulator");
    let hi = samples
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    if hi - lo > EPSILON_STABILITY {
        return Err(Error::EpsilonSensitive {
            deviation: hi - lo,
            values: samples,
        });
    }
    Ok(ModcomResult {
        value,
        method: Method::Dense,
        deltas: Vec::new(),
        epsilon: clamped.then_some(eps),
        imaginary_part: imag,
        epsilon_sweep: samples,
    })
}

/// Pure state as an amplitude vector over every site of a universe.
#[derive(Debug, Clone)]
pub struct StateVector {
    universe: Arc<Universe>,
    sites: BitSet,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|+⟩^{⊗n}`, the all-X product state.
    pub fn plus(universe: Arc<Universe>, limits: &DenseLimits) -> Result<Self> {
        let n = universe.len();
        limits.check_state(n)?;
        let dim = 1usize << n;
        let a = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        Ok(Self {
            sites: universe.all(),
            universe,
            amps: vec![a; dim],
        })
    }

    pub fn from_amplitudes(universe: Arc<Universe>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1usize << universe.len() {
            return Err(Error::InvalidParameter(
                "amplitude count must be 2^n".into(),
            ));
        }
        Ok(Self {
            sites: universe.all(),
            universe,
            amps,
        })
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn n_qubits(&self) -> usize {
        self.universe.len()
    }

    fn shift(&self, k: usize) -> usize {
        self.n_qubits() - 1 - k
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies a 2×2 matrix to internal site `k`.
    pub fn apply_1q(&mut self, k: usize, m: &DMatrix<Complex64>) {
        let bit = 1usize << self.shift(k);
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[(0, 0)] * a0 + m[(0, 1)] * a1;
                self.amps[i | bit] = m[(1, 0)] * a0 + m[(1, 1)] * a1;
            }
        }
    }

    /// Applies a 4×4 matrix to `(first, second)`, with `first` the more significant
    /// qubit of the matrix's basis.
    pub fn apply_2q(&mut self, first: usize, second: usize, m: &DMatrix<Complex64>) {
        let b1 = 1usize << self.shift(first);
        let b2 = 1usize << self.shift(second);
        for i in 0..self.amps.len() {
            if i & (b1 | b2) == 0 {
                let idx = [i, i | b2, i | b1, i | b1 | b2];
                let v = idx.map(|j| self.amps[j]);
                for (r, &j) in idx.iter().enumerate() {
                    self.amps[j] = (0..4).map(|c| m[(r, c)] * v[c]).sum();
                }
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << self.shift(a)) | (1usize << self.shift(b));
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let bc = 1usize << self.shift(control);
        let bt = 1usize << self.shift(target);
        for i in 0..self.amps.len() {
            if i & bc != 0 && i & bt == 0 {
                self.amps.swap(i, i | bt);
            }
        }
    }

    /// `P|ψ⟩` for the canonical string `P = ∏ X^x Z^z`.
    pub fn apply_pauli(&self, p: &PauliString) -> Self {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        for k in p.x_bits().iter() {
            xmask |= 1 << self.shift(k);
        }
        for k in p.z_bits().iter() {
            zmask |= 1 << self.shift(k);
        }
        let mut amps = vec![ZERO; self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            // Z acts first, then X flips.
            let sign = if (i & zmask).count_ones() % 2 == 1 {
                -1.0
            } else {
                1.0
            };
            amps[i ^ xmask] = a * sign;
        }
        Self {
            universe: self.universe.clone(),
            sites: self.sites.clone(),
            amps,
        }
    }

    pub fn apply_sum(&self, sum: &PauliSum) -> Self {
        let mut amps = vec![ZERO; self.amps.len()];
        for (p, c) in sum.terms() {
            let v = self.apply_pauli(p);
            for (o, a) in amps.iter_mut().zip(&v.amps) {
                *o += c * a;
            }
        }
        Self {
            universe: self.universe.clone(),
            sites: self.sites.clone(),
            amps,
        }
    }

    pub fn expectation(&self, sum: &PauliSum) -> Complex64 {
        self.inner(&self.apply_sum(sum))
    }

    /// `Tr_{keepᶜ} |ψ⟩⟨ψ|`.
    pub fn reduced_density(&self, keep: &BitSet, limits: &DenseLimits) -> Result<DenseOperator> {
        limits.check_operator(keep.len())?;
        let layout = SiteLayout::new(&self.sites);
        let keep_shifts = layout.shifts(keep);
        let rest_shifts = layout.shifts(&self.sites.difference(keep));
        let dk = 1usize << keep_shifts.len();
        let dr = 1usize << rest_shifts.len();
        let rest_offsets: Vec<usize> = (0..dr).map(|r| scatter(r, &rest_shifts)).collect();
        let psi = DMatrix::from_fn(dk, dr, |i, r| {
            self.amps[scatter(i, &keep_shifts) | rest_offsets[r]]
        });
        let rho = cmul(&psi, &psi.adjoint());
        Ok(DenseOperator::new(self.universe.clone(), keep.clone(), rho))
    }
}

/// Haar-distributed unitary on `k` qubits (QR of a complex Gaussian matrix with
/// the phases of R's diagonal divided out).
pub fn random_unitary<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<Complex64> {
    let d = 1usize << k;
    let g = DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..d {
        let ph = r[(c, c)] / r[(c, c)].norm();
        for row in 0..d {
            q[(row, c)] *= ph;
        }
    }
    q
}

/// `‖U†U − 𝟙‖_max`.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let d = u.nrows();
    max_entry_norm(&(u.adjoint() * u - DMatrix::<Complex64>::identity(d, d)))
}

/// `n ln 2`, the entropy of the maximally mixed state on `n` qubits.
pub fn max_entropy(n: usize) -> f64 {
    n as f64 * LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;
    use rand::SeedableRng;

    fn lim() -> DenseLimits {
        DenseLimits::default()
    }

    #[test]
    fn identity_and_plus_projector() {
        let u = Universe::range(0, 0);
        let id = DenseOperator::from_sum(&PauliSum::identity(u.clone(), u.all()), &lim()).unwrap();
        assert!(id.max_abs_diff(&DenseOperator::identity(u.clone(), u.all())) < 1e-15);
        let plus = PauliSum::from_labels(&u, &[(0.5, "I"), (0.5, "X_0")]).unwrap();
        let m = DenseOperator::from_sum(&plus, &lim()).unwrap();
        assert!(m.mul(&m).max_abs_diff(&m) < 1e-15);
        assert!((m.trace() - 1.0).norm() < 1e-15);
        let psi = StateVector::plus(u.clone(), &lim()).unwrap();
        let rho = DenseOperator::from_state(&psi, &lim()).unwrap();
        assert!(rho.max_abs_diff(&m) < 1e-15);
    }

    #[test]
    fn hermitian_y_matrix() {
        let u = Universe::range(0, 0);
        let y = PauliSum::from_labels(&u, &[(1.0, "Y_0")]).unwrap();
        let m = DenseOperator::from_sum(&y, &lim()).unwrap();
        let i = Complex64::new(0.0, 1.0);
        assert!((m.matrix()[(0, 1)] + i).norm() < 1e-15);
        assert!((m.matrix()[(1, 0)] - i).norm() < 1e-15);
    }

    #[test]
    fn bell_pair_partial_trace() {
        let u = Universe::range(0, 1);
        let mut psi = StateVector::plus(u.clone(), &lim()).unwrap();
        // |+⟩|+⟩ → CZ gives a maximally entangled state.
        psi.apply_cz(0, 1);
        let rho = DenseOperator::from_state(&psi, &lim()).unwrap();
        let r = rho.ptrace(&u.site_set([1]).unwrap());
        let mixed = DenseOperator::identity(u.clone(), u.site_set([0]).unwrap())
            .scale(Complex64::new(0.5, 0.0));
        assert!(r.max_abs_diff(&mixed) < 1e-15);
        assert!(rho.ptrace(&BitSet::default()).max_abs_diff(&rho) < 1e-16);
        let r2 = psi
            .reduced_density(&u.site_set([0]).unwrap(), &lim())
            .unwrap();
        assert!(r2.max_abs_diff(&mixed) < 1e-15);
    }

    #[test]
    fn ptrace_matches_symbolic_on_strings() {
        let u = Universe::range(0, 2);
        let s = PauliSum::from_labels(
            &u,
            &[
                (0.125, "I"),
                (0.1, "X_0 Z_2"),
                (0.05, "Y_1"),
                (0.07, "Z_0 Y_2"),
            ],
        )
        .unwrap();
        let d = DenseOperator::from_sum(&s, &lim()).unwrap();
        for traced in [vec![0], vec![1], vec![2], vec![0, 2]] {
            let t = u.site_set(traced).unwrap();
            let lhs = d.ptrace(&t);
            let rhs = DenseOperator::from_sum(&s.ptrace(&t), &lim()).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }
    }

    #[test]
    fn embed_and_local_are_consistent() {
        let u = Universe::range(0, 2);
        let z0 = DenseOperator::from_pauli(
            u.clone(),
            u.site_set([0]).unwrap(),
            &u.single(0, Pauli::Z).unwrap(),
            &lim(),
        )
        .unwrap();
        let full = z0.embed(&u.all(), &lim()).unwrap();
        let direct =
            DenseOperator::from_pauli(u.clone(), u.all(), &u.single(0, Pauli::Z).unwrap(), &lim())
                .unwrap();
        assert!(full.max_abs_diff(&direct) < 1e-16);

        // CNOT with control 2 → target 0, given in (control, target) order.
        let mut cnot = DMatrix::from_element(4, 4, ZERO);
        for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            cnot[(r, c)] = ONE;
        }
        let g = DenseOperator::local(u.clone(), u.all(), &[2, 0], &cnot, &lim()).unwrap();
        let x2 =
            DenseOperator::from_pauli(u.clone(), u.all(), &u.single(2, Pauli::X).unwrap(), &lim())
                .unwrap();
        let x0x2 = DenseOperator::from_pauli(
            u.clone(),
            u.all(),
            &u.string(&[(0, Pauli::X), (2, Pauli::X)]).unwrap(),
            &lim(),
        )
        .unwrap();
        assert!(x2.conjugate(&g).max_abs_diff(&x0x2) < 1e-15);

        let mut psi = StateVector::plus(u.clone(), &lim()).unwrap();
        psi.apply_1q(2, &DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]));
        let mut a = psi.clone();
        a.apply_cnot(2, 0);
        let mut b = psi;
        b.apply_2q(2, 0, &cnot);
        assert!(a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .all(|(x, y)| (x - y).norm() < 1e-15));
    }

    #[test]
    fn log_of_mixed_state() {
        let u = Universe::range(0, 1);
        let rho = DenseOperator::identity(u.clone(), u.all()).scale(Complex64::new(0.25, 0.0));
        let k = matrix_log_modular(&rho, &RegulatorConfig::default(), &lim()).unwrap();
        assert!(!k.clamped);
        let expect =
            DenseOperator::identity(u.clone(), u.all()).scale(Complex64::new(2.0 * LN_2, 0.0));
        assert!(k.k.max_abs_diff(&expect) < 1e-14);
        assert!((entropy_dense(&rho, &lim()).unwrap() - max_entropy(2)).abs() < 1e-14);
    }

    #[test]
    fn pure_state_entropy_zero_and_clamped_log() {
        let u = Universe::range(0, 1);
        let mut psi = StateVector::plus(u.clone(), &lim()).unwrap();
        psi.apply_cz(0, 1);
        let rho = DenseOperator::from_state(&psi, &lim()).unwrap();
        assert!(entropy_dense(&rho, &lim()).unwrap().abs() < 1e-12);
        assert!(
            matrix_log_modular(&rho, &RegulatorConfig::default(), &lim())
                .unwrap()
                .clamped
        );
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for k in 1..=3 {
            assert!(unitarity_error(&random_unitary(k, &mut rng)) < 1e-12);
        }
    }

    #[test]
    fn size_ceiling() {
        let u = Universe::range(0, 15);
        let s = PauliSum::identity(u.clone(), u.all());
        assert!(matches!(
            DenseOperator::from_sum(&s, &lim()),
            Err(Error::TooLarge {
                needed: 16,
                limit: 14
            })
        ));
        assert_eq!(DenseLimits::default().with_max_qubits(8).max_eig_qubits, 8);
    }

    #[test]
    fn eigenvalue_dump() {
        let u = Universe::range(0, 0);
        let rho = DenseOperator::identity(u.clone(), u.all()).scale(Complex64::new(0.5, 0.0));
        let csv = eigenvalues_csv(&rho, &lim()).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("index,eigenvalue"));
    }
}
