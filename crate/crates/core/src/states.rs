//! State constructions: generator sets and the depth-two circuits that prepare them.
//!
//! Every state here is the unique common +1 eigenstate of a list of commuting,
//! involutory generators `g_i`, i.e. `ρ = ∏(𝟙 + g_i)/2`. Circuits act on the all-X
//! product state, and the generator of site `s` is the circuit's image of `X_s`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::PauliSum;
use crate::dense::{unitarity_error, DenseLimits, DenseOperator, StateVector};
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString, Phase, SiteId, Universe};
use crate::reduction::{sweep, SweepOptions};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Commuting involutory generators, one per site, in sweep order.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    universe: Arc<Universe>,
    generators: Vec<(SiteId, PauliSum)>,
}

impl GeneratorSet {
    pub fn new(universe: Arc<Universe>, generators: Vec<(SiteId, PauliSum)>) -> Self {
        Self {
            universe,
            generators,
        }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn generators(&self) -> &[(SiteId, PauliSum)] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn get(&self, site: SiteId) -> Option<&PauliSum> {
        self.generators
            .iter()
            .find(|(s, _)| *s == site)
            .map(|(_, g)| g)
    }

    /// `commutation_matrix()[i][j]` is true when `g_i` and `g_j` commute.
    pub fn commutation_matrix(&self) -> Vec<Vec<bool>> {
        self.generators
            .iter()
            .map(|(_, a)| {
                self.generators
                    .iter()
                    .map(|(_, b)| a.commutator(b).is_empty())
                    .collect()
            })
            .collect()
    }

    /// Generator-wise equality up to `tol` on the coefficients.
    pub fn max_abs_diff(&self, other: &GeneratorSet) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for ((s, a), (t, b)) in self.generators.iter().zip(&other.generators) {
            if s != t {
                return None;
            }
            worst = worst.max(a.max_abs_diff(b));
        }
        Some(worst)
    }

    /// Checks pairwise commutation, involution and that `∏(𝟙+g_i)/2` has unit trace
    /// (so it projects onto a single state).
    pub fn validate(&self) -> Result<()> {
        let n = self.universe.len();
        if self.len() != n {
            return Err(Error::InvalidGenerators(format!(
                "{} generators for {n} sites",
                self.len()
            )));
        }
        for (i, (si, gi)) in self.generators.iter().enumerate() {
            if !gi.is_hermitian(1e-12) {
                return Err(Error::InvalidGenerators(format!("h_{si} is not Hermitian")));
            }
            let sq = gi.mul_sum(gi);
            let id = PauliSum::identity(self.universe.clone(), sq.sites().clone());
            if sq.max_abs_diff(&id) > 1e-12 {
                return Err(Error::InvalidGenerators(format!(
                    "h_{si} does not square to 1"
                )));
            }
            for (sj, gj) in &self.generators[..i] {
                if gi.commutator(gj).terms().any(|(_, c)| c.norm() > 1e-12) {
                    return Err(Error::InvalidGenerators(format!(
                        "h_{sj} and h_{si} do not commute"
                    )));
                }
            }
        }
        let trace = self.symbolic_trace()?;
        if (trace - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidGenerators(format!(
                "product of projectors has trace {trace}, not 1"
            )));
        }
        Ok(())
    }

    /// `Tr ∏(𝟙+g_i)/2`, evaluated by the symbolic sweep.
    pub fn symbolic_trace(&self) -> Result<f64> {
        let out = sweep(self, &Default::default(), &SweepOptions::default())?;
        Ok(out.trace)
    }

    /// Dense `∏(𝟙+g_i)/2`.
    pub fn projector_dense(&self, limits: &DenseLimits) -> Result<DenseOperator> {
        let all = self.universe.all();
        limits.check_operator(all.len())?;
        let mut acc = DenseOperator::identity(self.universe.clone(), all.clone());
        for (_, g) in &self.generators {
            let mut half = PauliSum::identity(self.universe.clone(), all.clone()).add(g);
            half = half.scale_real(0.5).with_sites(all.clone());
            acc = acc.mul(&DenseOperator::from_sum(&half, limits)?);
        }
        Ok(acc)
    }

    /// `H = -Σ g_i` as a Pauli sum.
    pub fn hamiltonian(&self) -> PauliSum {
        let zero = PauliSum::zero_on(&self.universe);
        self.generators
            .iter()
            .fold(zero, |acc, (_, g)| acc.sub(g))
            .with_sites(self.universe.all())
    }

    /// Eigenvalues of `H = -Σ g_i` by full diagonalization.
    pub fn hamiltonian_spectrum(&self, limits: &DenseLimits) -> Result<Vec<f64>> {
        DenseOperator::from_sum(&self.hamiltonian(), limits)?.eigenvalues(limits)
    }

    /// Matrix-free test that the spectrum of `H = -Σ g_i` lies in the odd (or even)
    /// integers `-n, -n+2, …, n` (`n` generators): applies `∏_E (H − E)/n` to a random
    /// vector and returns the residual norm relative to the input norm.
    pub fn integer_spectrum_residual(&self, seed: u64, limits: &DenseLimits) -> Result<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 1usize << self.universe.len();
        limits.check_state(self.universe.len())?;
        let amps = (0..dim)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let v = StateVector::from_amplitudes(self.universe.clone(), amps)?;
        let n0 = v.norm_sqr().sqrt();
        let h = self.hamiltonian();
        let n = self.len() as i64;
        let scale = n.max(1) as f64;
        let mut w = v;
        for e in (-n..=n).step_by(2) {
            let hw = w.apply_sum(&h);
            let amps = hw
                .amplitudes()
                .iter()
                .zip(w.amplitudes())
                .map(|(a, b)| (a - b * e as f64) / scale)
                .collect();
            w = StateVector::from_amplitudes(self.universe.clone(), amps)?;
        }
        Ok(w.norm_sqr().sqrt() / n0)
    }

    /// Checks `g_i|ψ⟩ = |ψ⟩` for every generator.
    pub fn stabilizes(&self, psi: &StateVector, tol: f64) -> bool {
        self.generators.iter().all(|(_, g)| {
            let v = psi.apply_sum(g);
            v.amplitudes()
                .iter()
                .zip(psi.amplitudes())
                .all(|(a, b)| (a - b).norm() <= tol)
        })
    }
}

/// Rotation of the Bloch sphere, stored as the 3×3 orthogonal matrix acting on
/// the (X, Y, Z) coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochRotation(pub [[f64; 3]; 3]);

impl BlochRotation {
    /// Rotation by `angle` about `axis` (need not be normalized).
    pub fn axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        let [x, y, z] = axis.map(|a| a / norm);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self([
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ])
    }

    /// The rotation taking X to (X+Y+Z)/√3 along the shortest arc: axis
    /// `x̂ × (1,1,1)`, angle `arccos(1/√3)`.
    pub fn default_v() -> Self {
        Self::axis_angle([0.0, -1.0, 1.0], (1.0 / 3f64.sqrt()).acos())
    }

    /// A second rotation with the same X image but different Y and Z images.
    pub fn alternate_v() -> Self {
        Self::axis_angle([1.0, 1.0, 1.0], 1.1).compose(&Self::default_v())
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Self(m)
    }

    pub fn image_of_x(&self) -> [f64; 3] {
        [self.0[0][0], self.0[1][0], self.0[2][0]]
    }

    /// `max |RᵀR − 1|` and `det R`.
    pub fn orthogonality(&self) -> (f64, f64) {
        let m = &self.0;
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                err = err.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        (err, det)
    }

    /// A 2×2 unitary `U` with `U σ_j U† = Σ_k R_kj σ_k`, via the rotation's quaternion.
    pub fn su2(&self) -> DMatrix<Complex64> {
        let m = &self.0;
        let tr = m[0][0] + m[1][1] + m[2][2];
        // Shepperd's method: pivot on the largest quaternion component.
        let (w, x, y, z) = if tr > m[0][0].max(m[1][1]).max(m[2][2]) {
            let w = (1.0 + tr).sqrt() / 2.0;
            (
                w,
                (m[2][1] - m[1][2]) / (4.0 * w),
                (m[0][2] - m[2][0]) / (4.0 * w),
                (m[1][0] - m[0][1]) / (4.0 * w),
            )
        } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
            let x = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() / 2.0;
            (
                (m[2][1] - m[1][2]) / (4.0 * x),
                x,
                (m[0][1] + m[1][0]) / (4.0 * x),
                (m[0][2] + m[2][0]) / (4.0 * x),
            )
        } else if m[1][1] >= m[2][2] {
            let y = (1.0 - m[0][0] + m[1][1] - m[2][2]).sqrt() / 2.0;
            (
                (m[0][2] - m[2][0]) / (4.0 * y),
                (m[0][1] + m[1][0]) / (4.0 * y),
                y,
                (m[1][2] + m[2][1]) / (4.0 * y),
            )
        } else {
            let z = (1.0 - m[0][0] - m[1][1] + m[2][2]).sqrt() / 2.0;
            (
                (m[1][0] - m[0][1]) / (4.0 * z),
                (m[0][2] + m[2][0]) / (4.0 * z),
                (m[1][2] + m[2][1]) / (4.0 * z),
                z,
            )
        };
        // U = w·1 − i(x X + y Y + z Z)
        let c = |re: f64, im: f64| Complex64::new(re, im);
        DMatrix::from_row_slice(2, 2, &[c(w, -z), c(-y, -x), c(y, -x), c(w, z)])
    }
}

/// The gate kinds used by the constructions.
#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    Cz(SiteId, SiteId),
    Cnot {
        control: SiteId,
        target: SiteId,
    },
    Rotation {
        site: SiteId,
        rotation: BlochRotation,
    },
    /// `exp(-iθ Z_a Z_b / 2)`.
    ZzRotation {
        a: SiteId,
        b: SiteId,
        theta: f64,
    },
    /// Arbitrary two-qubit unitary, `first` being the more significant qubit of
    /// the matrix basis. Dense only.
    CustomTwoQubit {
        first: SiteId,
        second: SiteId,
        matrix: DMatrix<Complex64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub layer: u32,
}

impl Gate {
    pub fn new(kind: GateKind, layer: u32) -> Self {
        Self { kind, layer }
    }

    pub fn sites(&self) -> Vec<SiteId> {
        match &self.kind {
            GateKind::Cz(a, b) => vec![*a, *b],
            GateKind::Cnot { control, target } => vec![*control, *target],
            GateKind::Rotation { site, .. } => vec![*site],
            GateKind::ZzRotation { a, b, .. } => vec![*a, *b],
            GateKind::CustomTwoQubit { first, second, .. } => vec![*first, *second],
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GateKind::Cz(a, b) => format!("CZ({a},{b})"),
            GateKind::Cnot { control, target } => format!("CNOT({control}->{target})"),
            GateKind::Rotation { site, .. } => format!("R({site})"),
            GateKind::ZzRotation { a, b, theta } => format!("ZZ({a},{b};{theta})"),
            GateKind::CustomTwoQubit { first, second, .. } => format!("U({first},{second})"),
        }
    }

    /// Qubits (most significant first) and matrix.
    pub fn dense_matrix(&self) -> (Vec<SiteId>, DMatrix<Complex64>) {
        let diag =
            |d: [Complex64; 4]| DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d));
        match &self.kind {
            GateKind::Cz(a, b) => (vec![*a, *b], diag([ONE, ONE, ONE, -ONE])),
            GateKind::Cnot { control, target } => {
                let mut m = DMatrix::from_element(4, 4, ZERO);
                for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                    m[(r, c)] = ONE;
                }
                (vec![*control, *target], m)
            }
            GateKind::Rotation { site, rotation } => (vec![*site], rotation.su2()),
            GateKind::ZzRotation { a, b, theta } => {
                let m = Complex64::from_polar(1.0, -theta / 2.0);
                let p = m.conj();
                (vec![*a, *b], diag([m, p, p, m]))
            }
            GateKind::CustomTwoQubit {
                first,
                second,
                matrix,
            } => (vec![*first, *second], matrix.clone()),
        }
    }

    /// `G P G†` for a canonical string, as a list of `(coefficient, string)`.
    pub fn conjugate_string(
        &self,
        universe: &Arc<Universe>,
        p: &PauliString,
    ) -> Result<Vec<(Complex64, PauliString)>> {
        let idx = |s: SiteId| universe.index_of(s);
        match &self.kind {
            GateKind::Cz(a, b) => {
                let (ka, kb) = (idx(*a)?, idx(*b)?);
                let z = |k| {
                    PauliString::from_bits(
                        Default::default(),
                        crate::pauli::BitSet::from_indices([k]),
                    )
                };
                let x = |k| {
                    PauliString::from_bits(
                        crate::pauli::BitSet::from_indices([k]),
                        Default::default(),
                    )
                };
                let image = |k: usize, is_x: bool| -> (Phase, PauliString) {
                    if !is_x {
                        return (Phase::ONE, z(k));
                    }
                    let other = if k == ka { kb } else { ka };
                    x(k).mul(&z(other))
                };
                let (ph, q) = clifford_image(p, &[ka, kb], image);
                Ok(vec![(ph.to_complex(), q)])
            }
            GateKind::Cnot { control, target } => {
                let (kc, kt) = (idx(*control)?, idx(*target)?);
                let z = |k| {
                    PauliString::from_bits(
                        Default::default(),
                        crate::pauli::BitSet::from_indices([k]),
                    )
                };
                let x = |k| {
                    PauliString::from_bits(
                        crate::pauli::BitSet::from_indices([k]),
                        Default::default(),
                    )
                };
                let image = |k: usize, is_x: bool| -> (Phase, PauliString) {
                    match (k == kc, is_x) {
                        (true, true) => x(kc).mul(&x(kt)),
                        (false, false) => z(kc).mul(&z(kt)),
                        (true, false) => (Phase::ONE, z(kc)),
                        (false, true) => (Phase::ONE, x(kt)),
                    }
                };
                let (ph, q) = clifford_image(p, &[kc, kt], image);
                Ok(vec![(ph.to_complex(), q)])
            }
            GateKind::Rotation { site, rotation } => {
                let k = idx(*site)?;
                let local = match p.factor(k) {
                    Pauli::I => return Ok(vec![(ONE, p.clone())]),
                    Pauli::X => rotated_axis(universe, *site, rotation, 0),
                    Pauli::Z => rotated_axis(universe, *site, rotation, 2),
                    // Canonical XZ: image(X)·image(Z).
                    Pauli::Y => rotated_axis(universe, *site, rotation, 0)
                        .mul_sum(&rotated_axis(universe, *site, rotation, 2)),
                };
                let rest = p.with_factor(k, Pauli::I);
                Ok(local
                    .terms()
                    .map(|(q, c)| {
                        let (ph, r) = rest.mul(q);
                        (c * ph.to_complex(), r)
                    })
                    .collect())
            }
            GateKind::ZzRotation { a, b, theta } => {
                let zz = universe.string(&[(*a, Pauli::Z), (*b, Pauli::Z)])?;
                if p.commutes(&zz) {
                    return Ok(vec![(ONE, p.clone())]);
                }
                // e^{-iθQ/2} P e^{iθQ/2} = (cos θ − i sin θ Q) P for anticommuting P.
                let (ph, qp) = zz.mul(p);
                let (s, c) = theta.sin_cos();
                Ok(vec![
                    (Complex64::new(c, 0.0), p.clone()),
                    (Complex64::new(0.0, -s) * ph.to_complex(), qp),
                ])
            }
            GateKind::CustomTwoQubit { .. } => Err(Error::UnsupportedSymbolic(self.name())),
        }
    }

    /// `G S G†` for a Pauli sum.
    pub fn conjugate_sum(&self, sum: &PauliSum) -> Result<PauliSum> {
        let mut out = PauliSum::zero(sum.universe().clone(), sum.sites().clone());
        for (p, c) in sum.terms() {
            for (d, q) in self.conjugate_string(sum.universe(), p)? {
                out.add_term(q, c * d);
            }
        }
        out.prune();
        Ok(out)
    }

    pub fn apply_state(&self, psi: &mut StateVector) -> Result<()> {
        let u = psi.universe().clone();
        match &self.kind {
            GateKind::Cz(a, b) => psi.apply_cz(u.index_of(*a)?, u.index_of(*b)?),
            GateKind::Cnot { control, target } => {
                psi.apply_cnot(u.index_of(*control)?, u.index_of(*target)?)
            }
            _ => {
                let (qubits, m) = self.dense_matrix();
                match qubits.as_slice() {
                    [s] => psi.apply_1q(u.index_of(*s)?, &m),
                    [s, t] => psi.apply_2q(u.index_of(*s)?, u.index_of(*t)?, &m),
                    _ => unreachable!("gates act on one or two qubits"),
                }
            }
        }
        Ok(())
    }

    pub fn apply_dense(&self, rho: &DenseOperator, limits: &DenseLimits) -> Result<DenseOperator> {
        let (qubits, m) = self.dense_matrix();
        let u = rho.universe();
        let idx = qubits
            .iter()
            .map(|s| u.index_of(*s))
            .collect::<Result<Vec<_>>>()?;
        let g = DenseOperator::local(u.clone(), rho.sites().clone(), &idx, &m, limits)?;
        Ok(rho.conjugate(&g))
    }
}

/// Conjugates the factors of `p` on `local` sites through per-generator images
/// (the rest of `p` is untouched).
fn clifford_image(
    p: &PauliString,
    local: &[usize],
    image: impl Fn(usize, bool) -> (Phase, PauliString),
) -> (Phase, PauliString) {
    let mut sorted = local.to_vec();
    sorted.sort_unstable();
    let mut rest = p.clone();
    for &k in &sorted {
        rest = rest.with_factor(k, Pauli::I);
    }
    // p = rest · ∏_{k ascending} X_k^{x} Z_k^{z}; factors on distinct sites commute.
    let mut phase = Phase::ONE;
    let mut acc = rest;
    for &k in &sorted {
        for (is_x, present) in [
            (true, p.x_bits().contains(k)),
            (false, p.z_bits().contains(k)),
        ] {
            if present {
                let (ph_img, img) = image(k, is_x);
                let (ph, next) = acc.mul(&img);
                phase = phase * ph * ph_img;
                acc = next;
            }
        }
    }
    (phase, acc)
}

/// `Σ_k R[k][axis] σ_k` on one site.
fn rotated_axis(
    universe: &Arc<Universe>,
    site: SiteId,
    rotation: &BlochRotation,
    axis: usize,
) -> PauliSum {
    let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
    let sites = universe
        .site_set([site])
        .expect("rotation site in universe");
    PauliSum::from_hermitian(
        universe.clone(),
        sites,
        paulis.iter().enumerate().map(|(k, p)| {
            (
                Complex64::new(rotation.0[k][axis], 0.0),
                universe.single(site, *p).expect("site in universe"),
            )
        }),
    )
}

/// Ordered gate list over a universe.
#[derive(Debug, Clone)]
pub struct Circuit {
    universe: Arc<Universe>,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(universe: Arc<Universe>, gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            let sites = g.sites();
            for s in &sites {
                universe.index_of(*s)?;
            }
            if sites.len() == 2 && sites[0] == sites[1] {
                return Err(Error::InvalidConfig(format!(
                    "gate {} repeats a site",
                    g.name()
                )));
            }
            if let GateKind::CustomTwoQubit { matrix, .. } = &g.kind {
                if matrix.shape() != (4, 4) {
                    return Err(Error::InvalidConfig("custom gate must be 4x4".into()));
                }
                let err = unitarity_error(matrix);
                if err > 1e-10 {
                    return Err(Error::NotUnitary(err));
                }
            }
        }
        Ok(Self { universe, gates })
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn depth(&self) -> u32 {
        self.gates
            .iter()
            .map(|g| g.layer)
            .collect::<BTreeSet<_>>()
            .len() as u32
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &Circuit) -> Circuit {
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().cloned());
        Circuit {
            universe: self.universe.clone(),
            gates,
        }
    }

    /// The prepared state `C|+…+⟩`.
    pub fn prepare(&self, limits: &DenseLimits) -> Result<StateVector> {
        let mut psi = StateVector::plus(self.universe.clone(), limits)?;
        for g in &self.gates {
            g.apply_state(&mut psi)?;
        }
        Ok(psi)
    }

    /// Generators `C X_s C†`, by symbolic conjugation.
    pub fn generators(&self) -> Result<GeneratorSet> {
        let all = self.universe.all();
        let gens = self
            .universe
            .sites()
            .iter()
            .map(|&s| {
                let x = PauliSum::from_string(
                    self.universe.clone(),
                    all.clone(),
                    self.universe.single(s, Pauli::X)?,
                    ONE,
                );
                Ok((s, self.conjugate_sum(&x)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GeneratorSet::new(self.universe.clone(), gens))
    }

    /// `C S C†`.
    pub fn conjugate_sum(&self, sum: &PauliSum) -> Result<PauliSum> {
        self.gates
            .iter()
            .try_fold(sum.clone(), |acc, g| g.conjugate_sum(&acc))
    }

    /// `C G_i C†` for every generator.
    pub fn conjugate_generators(&self, gens: &GeneratorSet) -> Result<GeneratorSet> {
        let out = gens
            .generators()
            .iter()
            .map(|(s, g)| Ok((*s, self.conjugate_sum(g)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(GeneratorSet::new(gens.universe().clone(), out))
    }

    pub fn apply_dense(&self, rho: &DenseOperator, limits: &DenseLimits) -> Result<DenseOperator> {
        self.gates
            .iter()
            .try_fold(rho.clone(), |acc, g| g.apply_dense(&acc, limits))
    }
}

/// Sites `-2N..=2N`.
pub fn chain_universe(n: usize) -> Arc<Universe> {
    let n = n as SiteId;
    Universe::range(-2 * n, 2 * n)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    Ok(())
}

fn single_term(u: &Arc<Universe>, factors: &[(SiteId, Pauli)]) -> PauliSum {
    let p = u.string(factors).expect("sites inside the chain");
    PauliSum::from_hermitian(u.clone(), u.all(), [(ONE, p)])
}

fn two_terms(
    u: &Arc<Universe>,
    a: f64,
    pa: &[(SiteId, Pauli)],
    b: f64,
    pb: &[(SiteId, Pauli)],
) -> PauliSum {
    let pa = u.string(pa).expect("sites inside the chain");
    let pb = u.string(pb).expect("sites inside the chain");
    PauliSum::from_hermitian(
        u.clone(),
        u.all(),
        [(Complex64::new(a, 0.0), pa), (Complex64::new(b, 0.0), pb)],
    )
}

use Pauli::{X, Y, Z};

/// `Z_{i-1} X_i Z_{i+1}`, truncated at the chain ends.
fn zxz(n: SiteId, i: SiteId) -> Vec<(SiteId, Pauli)> {
    let mut f = Vec::new();
    if i > -2 * n {
        f.push((i - 1, Z));
    }
    f.push((i, X));
    if i < 2 * n {
        f.push((i + 1, Z));
    }
    f
}

/// The modified cluster chain on `-2N..=2N`: cluster generators everywhere except
/// a three-term `h_0` and a four-site `h_1`.
pub fn generators_1d(n: usize) -> Result<GeneratorSet> {
    check_n(n)?;
    let u = chain_universe(n);
    let nn = n as SiteId;
    let s3 = 1.0 / 3f64.sqrt();
    let gens = (-2 * nn..=2 * nn)
        .map(|i| {
            let g = match i {
                0 => {
                    let terms = [
                        vec![(-1, Z), (0, X)],
                        vec![(0, Z), (1, Z)],
                        vec![(-1, Z), (0, Y), (1, Z)],
                    ];
                    PauliSum::from_hermitian(
                        u.clone(),
                        u.all(),
                        terms
                            .iter()
                            .map(|f| (Complex64::new(s3, 0.0), u.string(f).expect("chain site"))),
                    )
                }
                1 => single_term(&u, &[(-1, Z), (0, X), (1, X), (2, Z)]),
                _ => single_term(&u, &zxz(nn, i)),
            };
            (i, g)
        })
        .collect();
    Ok(GeneratorSet::new(u, gens))
}

fn check_perturbation(n: usize, m: usize) -> Result<()> {
    check_n(n)?;
    if m == 0 || m + 1 > n {
        return Err(Error::InvalidParameter(format!(
            "perturbation range M = {m} needs 1 <= M <= N - 1 (N = {n})"
        )));
    }
    Ok(())
}

/// Generators of `U(θ)|ψ⟩`, with `U(θ)` the ZZ rotations of [`perturbation_unitary`].
pub fn generators_1d_perturbed(n: usize, m: usize, theta: f64) -> Result<GeneratorSet> {
    check_perturbation(n, m)?;
    let base = generators_1d(n)?;
    let u = base.universe().clone();
    let (s, c) = theta.sin_cos();
    let nn = n as SiteId;
    let mm = m as SiteId;
    let gens = base
        .generators()
        .iter()
        .map(|(i, g)| {
            let i = *i;
            if i == 0 || i.abs() > 2 * mm {
                return (i, g.clone());
            }
            let g = match (i % 2 == 0, i) {
                (true, i) if i <= -2 => two_terms(&u, c, &zxz(nn, i), s, &[(i - 1, Z), (i, Y)]),
                (true, _) => two_terms(&u, c, &zxz(nn, i), s, &[(i, Y), (i + 1, Z)]),
                (false, 1) => two_terms(
                    &u,
                    c,
                    &[(-1, Z), (0, X), (1, X), (2, Z)],
                    s,
                    &[(-1, Z), (0, X), (1, Y)],
                ),
                (false, i) if i <= -1 => two_terms(&u, c, &zxz(nn, i), s, &[(i, Y), (i + 1, Z)]),
                (false, _) => two_terms(&u, c, &zxz(nn, i), s, &[(i - 1, Z), (i, Y)]),
            };
            (i, g)
        })
        .collect();
    Ok(GeneratorSet::new(u, gens))
}

/// Cluster-state generators `X_v ∏_{w~v} Z_w` of a simple graph.
pub fn generators_cluster(
    universe: Arc<Universe>,
    edges: &[(SiteId, SiteId)],
) -> Result<GeneratorSet> {
    let nbrs = adjacency(&universe, edges)?;
    let gens = universe
        .sites()
        .iter()
        .map(|&v| {
            let mut f = vec![(v, X)];
            f.extend(nbrs[&v].iter().map(|&w| (w, Z)));
            f.sort_unstable_by_key(|(s, _)| *s);
            let p = universe.string(&f)?;
            Ok((
                v,
                PauliSum::from_hermitian(universe.clone(), universe.all(), [(ONE, p)]),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratorSet::new(universe, gens))
}

fn adjacency(
    universe: &Universe,
    edges: &[(SiteId, SiteId)],
) -> Result<BTreeMap<SiteId, BTreeSet<SiteId>>> {
    let mut nbrs: BTreeMap<SiteId, BTreeSet<SiteId>> = universe
        .sites()
        .iter()
        .map(|&s| (s, BTreeSet::new()))
        .collect();
    for &(a, b) in edges {
        universe.index_of(a)?;
        universe.index_of(b)?;
        if a == b {
            return Err(Error::InvalidConfig(format!("self-loop at {a}")));
        }
        if !nbrs.get_mut(&a).expect("known site").insert(b) {
            return Err(Error::InvalidConfig(format!("duplicate edge {a}-{b}")));
        }
        nbrs.get_mut(&b).expect("known site").insert(a);
    }
    Ok(nbrs)
}

/// Plain cluster chain on `-2N..=2N`.
pub fn cluster_chain(n: usize) -> Result<(Circuit, GeneratorSet)> {
    check_n(n)?;
    let u = chain_universe(n);
    let nn = n as SiteId;
    let edges: Vec<_> = (-2 * nn..2 * nn).map(|i| (i, i + 1)).collect();
    let circuit = Circuit::new(
        u.clone(),
        edges
            .iter()
            .map(|&(a, b)| Gate::new(GateKind::Cz(a, b), 2))
            .collect(),
    )?;
    Ok((circuit, generators_cluster(u, &edges)?))
}

/// Layer-1 two-qubit gate on the (1, 0) pair of the 1D chain.
#[derive(Debug, Clone, PartialEq)]
pub enum BlueGate {
    /// `CNOT_{1,0} R_0` with the given rotation.
    V(BlochRotation),
    /// Dense 4×4 unitary in the (site 1, site 0) basis.
    Custom(DMatrix<Complex64>),
}

impl Default for BlueGate {
    fn default() -> Self {
        BlueGate::V(BlochRotation::default_v())
    }
}

/// `CZ`s on every neighbouring pair except (0, 1), after the blue gate on (1, 0).
pub fn circuit_1d(n: usize) -> Result<Circuit> {
    circuit_1d_with(n, &BlueGate::default())
}

pub fn circuit_1d_with(n: usize, blue: &BlueGate) -> Result<Circuit> {
    check_n(n)?;
    let u = chain_universe(n);
    let nn = n as SiteId;
    let mut gates = match blue {
        BlueGate::V(r) => vec![
            Gate::new(
                GateKind::Rotation {
                    site: 0,
                    rotation: *r,
                },
                1,
            ),
            Gate::new(
                GateKind::Cnot {
                    control: 1,
                    target: 0,
                },
                1,
            ),
        ],
        BlueGate::Custom(m) => vec![Gate::new(
            GateKind::CustomTwoQubit {
                first: 1,
                second: 0,
                matrix: m.clone(),
            },
            1,
        )],
    };
    gates.extend(
        (-2 * nn..2 * nn)
            .filter(|&i| i != 0)
            .map(|i| Gate::new(GateKind::Cz(i, i + 1), 2)),
    );
    Circuit::new(u, gates)
}

/// Parses a 4×4 gate written as rows of `[re, im]` pairs.
pub fn two_qubit_gate_from_json(text: &str) -> Result<DMatrix<Complex64>> {
    let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(text).map_err(|e| Error::Parse {
        input: "two-qubit gate".into(),
        reason: e.to_string(),
    })?;
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(Error::InvalidConfig("custom gate must be 4x4".into()));
    }
    let m = DMatrix::from_fn(4, 4, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
    let err = unitarity_error(&m);
    if err > 1e-10 {
        return Err(Error::NotUnitary(err));
    }
    Ok(m)
}

/// Inverse of [`two_qubit_gate_from_json`].
pub fn two_qubit_gate_to_json(m: &DMatrix<Complex64>) -> String {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect();
    serde_json::to_string(&rows).expect("plain numbers serialize")
}

/// Dense matrix of `CNOT_{1,0} R_0` in the (site 1, site 0) basis.
pub fn v_gate_matrix(rotation: &BlochRotation) -> DMatrix<Complex64> {
    let r = rotation.su2();
    let mut id_r = DMatrix::from_element(4, 4, ZERO);
    for blk in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                id_r[(2 * blk + i, 2 * blk + j)] = r[(i, j)];
            }
        }
    }
    let (_, cnot) = Gate::new(
        GateKind::Cnot {
            control: 1,
            target: 0,
        },
        1,
    )
    .dense_matrix();
    cnot * id_r
}

/// `U(θ) = ∏_j R_{-2j}(θ) ∏_k R_{2k-1}(θ)` with `R_i(θ) = exp(-iθ Z_i Z_{i+1}/2)`.
pub fn perturbation_unitary(n: usize, m: usize, theta: f64) -> Result<Circuit> {
    check_n(n)?;
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "perturbation range M = {m} must lie in 1..=N"
        )));
    }
    let u = chain_universe(n);
    let mm = m as SiteId;
    let mut gates = Vec::new();
    for j in 1..=mm {
        gates.push(Gate::new(
            GateKind::ZzRotation {
                a: -2 * j,
                b: -2 * j + 1,
                theta,
            },
            3,
        ));
    }
    for k in 1..=mm {
        gates.push(Gate::new(
            GateKind::ZzRotation {
                a: 2 * k - 1,
                b: 2 * k,
                theta,
            },
            3,
        ));
    }
    Circuit::new(u, gates)
}

/// `U(θ) · circuit_1d(N)`.
pub fn circuit_1d_perturbed(n: usize, m: usize, theta: f64) -> Result<Circuit> {
    check_perturbation(n, m)?;
    Ok(circuit_1d(n)?.then(&perturbation_unitary(n, m, theta)?))
}

/// Region lists as they appear in a lattice config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionLists {
    #[serde(rename = "A")]
    pub a: Vec<SiteId>,
    #[serde(rename = "B")]
    pub b: Vec<SiteId>,
    #[serde(rename = "C")]
    pub c: Vec<SiteId>,
}

/// Honeycomb lattice in brick-wall form, with oriented blue edges `[i1, i0]`
/// (control `i1`, rotated target `i0`).
///
/// The lattice has `rows + 1` rows of `2·cols + 1` sites; site `(x, y)` has label
/// `y·(2·cols+1) + x`. Horizontal neighbours are always bonded; `(x, y)` and
/// `(x, y+1)` are bonded when `x + y` is even, which makes every site degree ≤ 3
/// and every face a hexagon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoneycombConfig {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub blue_edges: Vec<[SiteId; 2]>,
    #[serde(default)]
    pub region: Option<RegionLists>,
}

/// Geometry derived from a [`HoneycombConfig`].
#[derive(Debug, Clone)]
pub struct Honeycomb {
    pub universe: Arc<Universe>,
    pub width: usize,
    pub height: usize,
    pub edges: Vec<(SiteId, SiteId)>,
}

impl Honeycomb {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(
                "honeycomb needs at least one row and column".into(),
            ));
        }
        let width = 2 * cols + 1;
        let height = rows + 1;
        let label = |x: usize, y: usize| (y * width + x) as SiteId;
        let mut sites = Vec::new();
        let mut edges = Vec::new();
        for y in 0..height {
            for x in 0..width {
                sites.push((label(x, y), (x as i64, y as i64)));
                if x + 1 < width {
                    edges.push((label(x, y), label(x + 1, y)));
                }
                if y + 1 < height && (x + y) % 2 == 0 {
                    edges.push((label(x, y), label(x, y + 1)));
                }
            }
        }
        Ok(Self {
            universe: Universe::with_coords(sites)?,
            width,
            height,
            edges,
        })
    }

    pub fn label(&self, x: usize, y: usize) -> SiteId {
        (y * self.width + x) as SiteId
    }

    pub fn has_edge(&self, a: SiteId, b: SiteId) -> bool {
        self.edges
            .iter()
            .any(|&(p, q)| (p, q) == (a, b) || (p, q) == (b, a))
    }
}

impl HoneycombConfig {
    pub fn lattice(&self) -> Result<Honeycomb> {
        Honeycomb::new(self.rows, self.cols)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("honeycomb config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks blue edges are lattice bonds with no shared sites.
    pub fn validate(&self) -> Result<Honeycomb> {
        let lattice = self.lattice()?;
        let mut used = BTreeSet::new();
        for &[i1, i0] in &self.blue_edges {
            if !lattice.has_edge(i1, i0) {
                return Err(Error::InvalidConfig(format!(
                    "blue edge {i1}->{i0} is not a lattice bond"
                )));
            }
            if !used.insert(i1) || !used.insert(i0) {
                return Err(Error::InvalidConfig(format!(
                    "blue edge {i1}->{i0} overlaps another blue edge"
                )));
            }
        }
        Ok(lattice)
    }
}

/// Circuit and generators for a honeycomb config: blue `V` gates first, then `CZ`
/// on every other bond.
pub fn honeycomb_state(cfg: &HoneycombConfig) -> Result<(Circuit, GeneratorSet)> {
    let lattice = cfg.validate()?;
    let u = lattice.universe.clone();
    let blue: BTreeSet<(SiteId, SiteId)> = cfg
        .blue_edges
        .iter()
        .map(|&[a, b]| (a.min(b), a.max(b)))
        .collect();
    let mut gates = Vec::new();
    for &[i1, i0] in &cfg.blue_edges {
        gates.push(Gate::new(
            GateKind::Rotation {
                site: i0,
                rotation: BlochRotation::default_v(),
            },
            1,
        ));
        gates.push(Gate::new(
            GateKind::Cnot {
                control: i1,
                target: i0,
            },
            1,
        ));
    }
    for &(a, b) in &lattice.edges {
        if !blue.contains(&(a.min(b), a.max(b))) {
            gates.push(Gate::new(GateKind::Cz(a, b), 2));
        }
    }
    let circuit = Circuit::new(u.clone(), gates)?;

    let nbrs = adjacency(&u, &lattice.edges)?;
    let s3 = 1.0 / 3f64.sqrt();
    let z_on = |sites: &mut Vec<(SiteId, Pauli)>, of: SiteId, except: Option<SiteId>| {
        sites.extend(
            nbrs[&of]
                .iter()
                .filter(|&&w| Some(w) != except)
                .map(|&w| (w, Z)),
        );
    };
    let sorted = |mut f: Vec<(SiteId, Pauli)>| {
        f.sort_unstable_by_key(|(s, _)| *s);
        u.string(&f)
    };
    let mut special: BTreeMap<SiteId, PauliSum> = BTreeMap::new();
    for &[i1, i0] in &cfg.blue_edges {
        let mut t1 = vec![(i0, X)];
        z_on(&mut t1, i0, Some(i1));
        let mut t2 = vec![(i0, Y)];
        z_on(&mut t2, i0, None);
        let t3 = vec![(i0, Z), (i1, Z)];
        let h0 = PauliSum::from_hermitian(
            u.clone(),
            u.all(),
            [t1, t2, t3]
                .into_iter()
                .map(|f| Ok((Complex64::new(s3, 0.0), sorted(f)?)))
                .collect::<Result<Vec<_>>>()?,
        );
        let mut f1 = vec![(i0, X), (i1, X)];
        z_on(&mut f1, i0, Some(i1));
        z_on(&mut f1, i1, Some(i0));
        let h1 = PauliSum::from_hermitian(u.clone(), u.all(), [(ONE, sorted(f1)?)]);
        special.insert(i0, h0);
        special.insert(i1, h1);
    }
    let gens = u
        .sites()
        .iter()
        .map(|&v| {
            if let Some(g) = special.remove(&v) {
                return Ok((v, g));
            }
            let mut f = vec![(v, X)];
            z_on(&mut f, v, None);
            Ok((
                v,
                PauliSum::from_hermitian(u.clone(), u.all(), [(ONE, sorted(f)?)]),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((circuit, GeneratorSet::new(u, gens)))
}

/// A config with the topology of the trapezoid example: a bottom chain whose even
/// sites run A…B…C with odd sites outside, a single blue edge at the chain's
/// centre, and `interior_rows` rows of ABC above it closed off by a row of D.
///
/// `B` spans chain sites `center-2M ..= center+2M`; in the interior rows it is
/// widened by one column on each side so that A and C never touch. Side columns
/// of interior rows above the first are assigned to D. With `bulk_blue`, extra
/// blue edges are placed strictly inside the interior rows (requires at least two).
pub fn fig3_like(
    n: usize,
    m: usize,
    interior_rows: usize,
    bulk_blue: bool,
) -> Result<HoneycombConfig> {
    check_n(n)?;
    if m + 1 > n || interior_rows == 0 {
        return Err(Error::InvalidParameter(
            "need M <= N - 1 and at least one interior row".into(),
        ));
    }
    let cols = 2 * n;
    let rows = interior_rows + 1;
    let width = 2 * cols + 1;
    let label = |x: usize, y: usize| (y * width + x) as SiteId;
    let center = 2 * n;
    let (lo, hi) = (center - 2 * m, center + 2 * m);
    let mut region = RegionLists::default();
    for x in (0..width).step_by(2) {
        let l = label(x, 0);
        if x < lo {
            region.a.push(l);
        } else if x <= hi {
            region.b.push(l);
        } else {
            region.c.push(l);
        }
    }
    for y in 1..=interior_rows {
        for x in 0..width {
            if y >= 2 && (x == 0 || x == width - 1) {
                continue;
            }
            let l = label(x, y);
            if x + 1 < lo {
                region.a.push(l);
            } else if x <= hi + 1 {
                region.b.push(l);
            } else {
                region.c.push(l);
            }
        }
    }
    let mut blue_edges = vec![[label(center + 1, 0), label(center, 0)]];
    if bulk_blue {
        if interior_rows < 2 {
            return Err(Error::InvalidParameter(
                "bulk blue edges need at least two interior rows".into(),
            ));
        }
        // Vertical bonds (x, 1)-(x, 2) exist for odd x; keep them away from the sides.
        for x in (3..width - 3).step_by(4) {
            blue_edges.push([label(x, 2), label(x, 1)]);
        }
    }
    Ok(HoneycombConfig {
        rows,
        cols,
        blue_edges,
        region: Some(region),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim() -> DenseLimits {
        DenseLimits::default()
    }

    fn render(u: &Universe, g: &PauliSum) -> Vec<(String, f64)> {
        g.hermitian_terms()
            .map(|(p, c)| (u.render(p), c.re))
            .collect()
    }

    #[test]
    fn n1_generators_match_the_listed_strings() {
        let g = generators_1d(1).unwrap();
        let u = g.universe().clone();
        let expect = [
            (-2, "X_-2 Z_-1"),
            (-1, "Z_-2 X_-1 Z_0"),
            (1, "Z_-1 X_0 X_1 Z_2"),
            (2, "Z_1 X_2"),
        ];
        for (s, text) in expect {
            assert_eq!(render(&u, g.get(s).unwrap()), vec![(text.to_string(), 1.0)]);
        }
        let h0 = g.get(0).unwrap();
        let s3 = 1.0 / 3f64.sqrt();
        for text in ["Z_-1 X_0", "Z_0 Z_1", "Z_-1 Y_0 Z_1"] {
            let p = u.parse(text).unwrap();
            let c = h0.hermitian_terms().find(|(q, _)| **q == p).unwrap().1;
            assert!((c.re - s3).abs() < 1e-15 && c.im.abs() < 1e-15);
        }
        g.validate().unwrap();
    }

    #[test]
    fn generator_sets_validate() {
        for n in 1..=4 {
            generators_1d(n).unwrap().validate().unwrap();
            cluster_chain(n).unwrap().1.validate().unwrap();
        }
        generators_1d_perturbed(3, 2, 0.4)
            .unwrap()
            .validate()
            .unwrap();
        assert!(generators_1d(0).is_err());
        assert!(generators_1d_perturbed(2, 2, 0.1).is_err());
        assert!(generators_1d_perturbed(2, 0, 0.1).is_err());
    }

    #[test]
    fn broken_set_fails_validation() {
        let u = Universe::range(0, 1);
        let x0 = PauliSum::from_labels(&u, &[(1.0, "X_0")]).unwrap();
        let z0 = PauliSum::from_labels(&u, &[(1.0, "Z_0")]).unwrap();
        let bad = GeneratorSet::new(u.clone(), vec![(0, x0.clone()), (1, z0)]);
        assert!(matches!(bad.validate(), Err(Error::InvalidGenerators(_))));
        // Commuting and involutory, but the projector has rank 2.
        let dependent = GeneratorSet::new(u, vec![(0, x0.clone()), (1, x0)]);
        assert!(dependent.validate().is_err());
    }

    #[test]
    fn perturbed_at_zero_is_unperturbed() {
        let a = generators_1d_perturbed(3, 2, 0.0).unwrap();
        let b = generators_1d(3).unwrap();
        assert_eq!(a.max_abs_diff(&b), Some(0.0));
    }

    #[test]
    fn perturbed_even_generator_two_terms() {
        let theta: f64 = 0.7;
        let g = generators_1d_perturbed(2, 1, theta).unwrap();
        let u = g.universe().clone();
        let expect = PauliSum::from_labels(
            &u,
            &[(theta.cos(), "Z_1 X_2 Z_3"), (theta.sin(), "Y_2 Z_3")],
        )
        .unwrap();
        assert!(g.get(2).unwrap().max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn perturbed_generators_are_conjugated_generators() {
        for (n, m, theta) in [(2, 1, 0.3), (3, 2, 1.2), (4, 3, -0.8)] {
            let direct = generators_1d_perturbed(n, m, theta).unwrap();
            let conj = perturbation_unitary(n, m, theta)
                .unwrap()
                .conjugate_generators(&generators_1d(n).unwrap())
                .unwrap();
            assert!(
                direct.max_abs_diff(&conj).unwrap() < 1e-14,
                "{n} {m} {theta}"
            );
        }
    }

    #[test]
    fn perturbation_unitary_layout() {
        let c = perturbation_unitary(1, 1, 0.2).unwrap();
        let pairs: Vec<_> = c.gates().iter().map(|g| g.sites()).collect();
        assert_eq!(pairs, vec![vec![-2, -1], vec![1, 2]]);
        let zero = perturbation_unitary(2, 1, 0.0).unwrap();
        let g = generators_1d(2).unwrap();
        assert_eq!(
            zero.conjugate_generators(&g).unwrap().max_abs_diff(&g),
            Some(0.0)
        );
    }

    #[test]
    fn gate_conjugation_rules() {
        let u = Universe::range(-1, 2);
        let x = |s| PauliSum::from_labels(&u, &[(1.0, s)]).unwrap();
        let cnot = Gate::new(
            GateKind::Cnot {
                control: 1,
                target: 0,
            },
            1,
        );
        assert!(
            cnot.conjugate_sum(&x("X_1"))
                .unwrap()
                .max_abs_diff(&x("X_0 X_1"))
                < 1e-15
        );
        let cz = Gate::new(GateKind::Cz(0, 1), 2);
        assert!(
            cz.conjugate_sum(&x("X_0"))
                .unwrap()
                .max_abs_diff(&x("X_0 Z_1"))
                < 1e-15
        );
        assert!(
            cz.conjugate_sum(&x("Y_0"))
                .unwrap()
                .max_abs_diff(&x("Y_0 Z_1"))
                < 1e-15
        );
        let r = Gate::new(
            GateKind::Rotation {
                site: 0,
                rotation: BlochRotation::default_v(),
            },
            1,
        );
        let s3 = 1.0 / 3f64.sqrt();
        let expect = PauliSum::from_labels(&u, &[(s3, "X_0"), (s3, "Y_0"), (s3, "Z_0")]).unwrap();
        assert!(r.conjugate_sum(&x("X_0")).unwrap().max_abs_diff(&expect) < 1e-15);
        let custom = Gate::new(
            GateKind::CustomTwoQubit {
                first: 1,
                second: 0,
                matrix: DMatrix::identity(4, 4),
            },
            1,
        );
        assert!(matches!(
            custom.conjugate_sum(&x("X_0")),
            Err(Error::UnsupportedSymbolic(_))
        ));
    }

    #[test]
    fn rotations_are_proper_and_have_the_right_x_image() {
        let s3 = 1.0 / 3f64.sqrt();
        for r in [BlochRotation::default_v(), BlochRotation::alternate_v()] {
            let (err, det) = r.orthogonality();
            assert!(err < 1e-14 && (det - 1.0).abs() < 1e-14);
            for v in r.image_of_x() {
                assert!((v - s3).abs() < 1e-14);
            }
        }
        assert!(
            (BlochRotation::default_v().0[1][1] - BlochRotation::alternate_v().0[1][1]).abs()
                > 1e-3
        );
    }

    #[test]
    fn su2_matches_rotation_dense() {
        let u = Universe::range(0, 0);
        for r in [
            BlochRotation::default_v(),
            BlochRotation::alternate_v(),
            BlochRotation::axis_angle([0.3, -0.2, 0.9], 2.9),
            BlochRotation::axis_angle([1.0, 0.0, 0.0], std::f64::consts::PI),
        ] {
            let g = Gate::new(
                GateKind::Rotation {
                    site: 0,
                    rotation: r,
                },
                1,
            );
            for s in ["X_0", "Y_0", "Z_0"] {
                let p = PauliSum::from_labels(&u, &[(1.0, s)]).unwrap();
                let dense_in = DenseOperator::from_sum(&p, &lim()).unwrap();
                let lhs = g.apply_dense(&dense_in, &lim()).unwrap();
                let rhs = DenseOperator::from_sum(&g.conjugate_sum(&p).unwrap(), &lim()).unwrap();
                assert!(lhs.max_abs_diff(&rhs) < 1e-13);
            }
        }
    }

    #[test]
    fn circuit_generators_match_formulas() {
        for n in 1..=4 {
            let c = circuit_1d(n).unwrap();
            assert_eq!(c.depth(), 2);
            let from_circuit = c.generators().unwrap();
            assert!(
                from_circuit
                    .max_abs_diff(&generators_1d(n).unwrap())
                    .unwrap()
                    < 1e-14
            );
        }
        let n1 = circuit_1d(1).unwrap();
        let names: Vec<_> = n1.gates().iter().map(|g| g.name()).collect();
        assert_eq!(
            names,
            ["R(0)", "CNOT(1->0)", "CZ(-2,-1)", "CZ(-1,0)", "CZ(1,2)"]
        );
    }

    #[test]
    fn circuit_state_is_stabilized() {
        let c = circuit_1d(1).unwrap();
        let psi = c.prepare(&lim()).unwrap();
        assert!(generators_1d(1).unwrap().stabilizes(&psi, 1e-12));
        let alt = circuit_1d_with(1, &BlueGate::V(BlochRotation::alternate_v())).unwrap();
        assert!(generators_1d(1)
            .unwrap()
            .stabilizes(&alt.prepare(&lim()).unwrap(), 1e-12));
    }

    #[test]
    fn v_matrix_reproduces_rotation_then_cnot() {
        let v = v_gate_matrix(&BlochRotation::default_v());
        let custom = circuit_1d_with(2, &BlueGate::Custom(v))
            .unwrap()
            .prepare(&lim())
            .unwrap();
        let normal = circuit_1d(2).unwrap().prepare(&lim()).unwrap();
        assert!((custom.inner(&normal).norm() - 1.0).abs() < 1e-12);
        let bad = DMatrix::from_element(4, 4, ONE);
        assert!(matches!(
            circuit_1d_with(1, &BlueGate::Custom(bad)),
            Err(Error::NotUnitary(_))
        ));
    }

    #[test]
    fn cluster_graphs() {
        let u = Universe::range(0, 0);
        let g = generators_cluster(u.clone(), &[]).unwrap();
        assert_eq!(
            render(&u, g.get(0).unwrap()),
            vec![("X_0".to_string(), 1.0)]
        );
        let u3 = Universe::range(0, 2);
        let g = generators_cluster(u3.clone(), &[(0, 1), (1, 2)]).unwrap();
        let texts: Vec<_> = g
            .generators()
            .iter()
            .map(|(_, h)| render(&u3, h)[0].0.clone())
            .collect();
        assert_eq!(texts, ["X_0 Z_1", "Z_0 X_1 Z_2", "Z_1 X_2"]);
        let hex = HoneycombConfig {
            rows: 1,
            cols: 1,
            blue_edges: vec![],
            region: None,
        };
        let (_, g) = honeycomb_state(&hex).unwrap();
        assert!(g
            .generators()
            .iter()
            .all(|(_, h)| h.terms().next().unwrap().0.weight() == 3));
    }

    #[test]
    fn honeycomb_single_hexagon_with_blue_edge() {
        let hex = HoneycombConfig {
            rows: 1,
            cols: 1,
            blue_edges: vec![[1, 0]],
            region: None,
        };
        let (circuit, gens) = honeycomb_state(&hex).unwrap();
        gens.validate().unwrap();
        assert_eq!(gens.get(0).unwrap().len(), 3);
        let h1 = gens.get(1).unwrap();
        assert_eq!(h1.len(), 1);
        // deg(0) + deg(1) = 2 + 2 on the hexagon.
        assert_eq!(h1.terms().next().unwrap().0.weight(), 4);
        let via_circuit = circuit.generators().unwrap();
        assert!(via_circuit.max_abs_diff(&gens).unwrap() < 1e-14);
        let psi = circuit.prepare(&lim()).unwrap();
        let rho = DenseOperator::from_state(&psi, &lim()).unwrap();
        assert!(rho.max_abs_diff(&gens.projector_dense(&lim()).unwrap()) < 1e-10);
    }

    #[test]
    fn honeycomb_config_errors_and_json() {
        let overlapping = HoneycombConfig {
            rows: 1,
            cols: 1,
            blue_edges: vec![[1, 0], [2, 1]],
            region: None,
        };
        assert!(matches!(
            honeycomb_state(&overlapping),
            Err(Error::InvalidConfig(_))
        ));
        let not_bond = HoneycombConfig {
            rows: 1,
            cols: 1,
            blue_edges: vec![[0, 4]],
            region: None,
        };
        assert!(honeycomb_state(&not_bond).is_err());
        let cfg = fig3_like(2, 1, 2, true).unwrap();
        let back = HoneycombConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let (_, gens) = honeycomb_state(&cfg).unwrap();
        assert_eq!(gens.len(), 9 * 4);
        assert!(HoneycombConfig::from_json("{\"rows\": 1}").is_err());
    }

    #[test]
    fn gate_json_round_trip() {
        let m = v_gate_matrix(&BlochRotation::default_v());
        let back = two_qubit_gate_from_json(&two_qubit_gate_to_json(&m)).unwrap();
        assert_eq!(back, m);
        let bad = "[[[2,0],[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0],[0,0]],[[0,0],[0,0],[1,0],[0,0]],[[0,0],[0,0],[0,0],[1,0]]]";
        assert!(matches!(
            two_qubit_gate_from_json(bad),
            Err(Error::NotUnitary(_))
        ));
        assert!(matches!(
            two_qubit_gate_from_json("[[1]]"),
            Err(Error::Parse { .. })
        ));
    }
}
