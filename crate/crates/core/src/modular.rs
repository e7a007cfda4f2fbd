//! The modular commutator `J(A,B,C) = i Tr(ρ_ABC [K_AB, K_BC])`, `K = -ln ρ`.
//!
//! Three routes: closed forms for the two parametrized families, a symbolic route
//! for states whose `ρ_AB` and `ρ_BC` are anticommuting densities, and the dense
//! oracle. [`Problem`] picks between the last two.

use std::f64::consts::FRAC_PI_3;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{as_anticommuting, modular_hamiltonian_closed, PauliSum, POSITIVITY_SLACK};
use crate::dense::{modcom_dense, DenseLimits, RegulatorConfig};
use crate::error::{Error, Result};
use crate::pauli::SiteId;
use crate::reduction::{reduce_2d_to_chains, reduced_density, Region, RegionAssignment};
use crate::states::{
    circuit_1d, circuit_1d_perturbed, circuit_1d_with, cluster_chain, generators_1d,
    generators_1d_perturbed, honeycomb_state, BlueGate, Circuit, GeneratorSet, HoneycombConfig,
};

/// `ρ_ABC = 2^{-n}(𝟙 + α P_AB + β P_BC + γ i P_AB P_BC)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalAbcParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CanonicalAbcParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma };
        let norm2 = alpha * alpha + beta * beta + gamma * gamma;
        if norm2 > 1.0 + POSITIVITY_SLACK {
            return Err(Error::NotPositive(norm2));
        }
        Ok(p)
    }

    /// α = β = γ = 1/√3.
    pub fn symmetric() -> Self {
        let s = 1.0 / 3f64.sqrt();
        Self {
            alpha: s,
            beta: s,
            gamma: s,
        }
    }
}

fn log_ratio(x: f64) -> f64 {
    // ln((1+x)/(1-x)) = 2 atanh x
    2.0 * x.atanh()
}

/// `J = (γ/2) ln((1+α)/(1−α)) ln((1+β)/(1−β))`.
pub fn modcom_closed(p: &CanonicalAbcParams) -> Result<f64> {
    if p.alpha.abs() >= 1.0 || p.beta.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "|alpha| and |beta| must be below 1 (got {}, {})",
            p.alpha, p.beta
        )));
    }
    Ok(0.5 * p.gamma * log_ratio(p.alpha) * log_ratio(p.beta))
}

/// The perturbed family `U(θ)|ψ⟩` with rotations on `M` bonds per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub theta: f64,
    pub m: usize,
}

impl PerturbationSpec {
    pub fn new(theta: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("M must be at least 1".into()));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter("theta must be finite".into()));
        }
        Ok(Self { theta, m })
    }

    fn cos_2m(&self) -> f64 {
        self.theta.cos().powi(2 * self.m as i32)
    }

    /// `δ = sqrt(1 − (2/3) cos^{2M} θ)`.
    pub fn delta(&self) -> f64 {
        (1.0 - 2.0 / 3.0 * self.cos_2m()).sqrt()
    }

    /// `1 − δ`, computed without cancellation.
    pub fn one_minus_delta(&self) -> f64 {
        (2.0 / 3.0) * self.cos_2m() / (1.0 + self.delta())
    }
}

/// `J = cos^{4M}θ / (6√3 δ²) · ln²((1+δ)/(1−δ))`, with the `cos θ = 0` limit 0.
pub fn modcom_perturbed(p: &PerturbationSpec) -> f64 {
    let c2m = p.cos_2m();
    if c2m == 0.0 {
        return 0.0;
    }
    let d = p.delta();
    let l = ((1.0 + d) / p.one_minus_delta()).ln();
    c2m * c2m / (6.0 * 3f64.sqrt() * d * d) * l * l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Symbolic,
    Dense,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Symbolic => "symbolic",
            Method::Dense => "dense",
        }
    }
}

/// How a caller wants J computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Symbolic when the state allows it, dense otherwise.
    #[default]
    Auto,
    Symbolic,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModcomResult {
    pub value: f64,
    pub method: Method,
    /// δ of `ρ_AB` and `ρ_BC` on the symbolic route.
    pub deltas: Vec<f64>,
    /// Regulator, when one was needed.
    pub epsilon: Option<f64>,
    /// Imaginary part of the raw trace (dense route).
    pub imaginary_part: f64,
    /// `(ε, J)` samples of the dense regulator sweep.
    pub epsilon_sweep: Vec<(f64, f64)>,
}

impl ModcomResult {
    pub fn closed_form(value: f64) -> Self {
        Self {
            value,
            method: Method::ClosedForm,
            deltas: Vec::new(),
            epsilon: None,
            imaginary_part: 0.0,
            epsilon_sweep: Vec::new(),
        }
    }

    /// `J / (π/3)`, the value the conjectured relation would read as `c₋`.
    pub fn over_pi_thirds(&self) -> f64 {
        self.value / FRAC_PI_3
    }
}

/// `J` from the closed-form modular Hamiltonians of `ρ_AB` and `ρ_BC`.
///
/// Only the string parts of the two `K`s contribute, and `Tr(ρ S)` is `2^n` times
/// the identity coefficient of `ρ·S`.
pub fn modcom_symbolic(
    rho_abc: &PauliSum,
    regions: &RegionAssignment,
    regulator: Option<f64>,
) -> Result<ModcomResult> {
    let (a, c) = (regions.a(), regions.c());
    let abc = regions.abc();
    if rho_abc.sites() != &abc {
        return Err(Error::InvalidParameter(
            "symbolic modular commutator needs a density on exactly A ∪ B ∪ C".into(),
        ));
    }
    let rho_ab = as_anticommuting(&rho_abc.ptrace(&c))?;
    let rho_bc = as_anticommuting(&rho_abc.ptrace(&a))?;
    let k_ab = modular_hamiltonian_closed(&rho_ab, regulator)?;
    let k_bc = modular_hamiltonian_closed(&rho_bc, regulator)?;
    let s_ab = k_ab.string_part.clone().with_sites(abc.clone());
    let s_bc = k_bc.string_part.clone().with_sites(abc.clone());
    let comm = s_ab.commutator(&s_bc);
    let tr = rho_abc.mul_sum(&comm).trace();
    let raw = Complex64::new(0.0, 1.0) * tr;
    if raw.im.abs() > 1e-10 {
        return Err(Error::NonReal(raw.im));
    }
    Ok(ModcomResult {
        value: raw.re,
        method: Method::Symbolic,
        deltas: vec![rho_ab.delta(), rho_bc.delta()],
        epsilon: k_ab.regulator_used.or(k_bc.regulator_used),
        imaginary_part: raw.im,
        epsilon_sweep: Vec::new(),
    })
}

/// A state with a region assignment, in whichever representations are available.
#[derive(Debug, Clone)]
pub struct Problem {
    pub generators: GeneratorSet,
    /// Preparation circuit on the all-X product state; enables the
    /// state-vector dense route and the lattice reduction.
    pub circuit: Option<Circuit>,
    pub regions: RegionAssignment,
    /// Lattice states go through [`reduce_2d_to_chains`] on the symbolic route.
    pub lattice: bool,
}

impl Problem {
    /// Modified cluster chain (`theta = None`) or its perturbed version; regions use
    /// `B = [-2M, 2M]`.
    pub fn chain_1d(n: usize, m: usize, theta: Option<f64>) -> Result<Self> {
        let regions = RegionAssignment::canonical_1d(n, m)?;
        let (generators, circuit) = match theta {
            Some(t) => (
                generators_1d_perturbed(n, m, t)?,
                circuit_1d_perturbed(n, m, t)?,
            ),
            None => (generators_1d(n)?, circuit_1d(n)?),
        };
        Ok(Self {
            generators,
            circuit: Some(circuit),
            regions,
            lattice: false,
        })
    }

    /// Plain cluster chain with the canonical regions.
    pub fn cluster(n: usize, m: usize) -> Result<Self> {
        let (circuit, generators) = cluster_chain(n)?;
        Ok(Self {
            generators,
            circuit: Some(circuit),
            regions: RegionAssignment::canonical_1d(n, m)?,
            lattice: false,
        })
    }

    /// Honeycomb state; the config must carry its regions.
    pub fn honeycomb(cfg: &HoneycombConfig) -> Result<Self> {
        let lists = cfg
            .region
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("lattice config has no region lists".into()))?;
        let (circuit, generators) = honeycomb_state(cfg)?;
        let regions = RegionAssignment::from_lists(generators.universe().clone(), lists)?;
        Ok(Self {
            generators,
            circuit: Some(circuit),
            regions,
            lattice: true,
        })
    }

    pub fn with_regions(&self, regions: RegionAssignment) -> Self {
        Self {
            regions,
            ..self.clone()
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.generators.universe().len()
    }

    fn check_regions(&self) -> Result<()> {
        if self.regions.d().is_empty() {
            return Err(Error::EmptyComplement);
        }
        Ok(())
    }

    /// Symbolic J; lattice states are summed over their surviving chains.
    pub fn modcom_symbolic(&self, regulator: Option<f64>) -> Result<ModcomResult> {
        self.check_regions()?;
        if self.lattice {
            let circuit = self.circuit.as_ref().ok_or_else(|| {
                Error::InvalidConfig("lattice reduction needs the circuit".into())
            })?;
            let mut total = ModcomResult {
                value: 0.0,
                method: Method::Symbolic,
                deltas: Vec::new(),
                epsilon: None,
                imaginary_part: 0.0,
                epsilon_sweep: Vec::new(),
            };
            for chain in reduce_2d_to_chains(circuit, &self.regions)? {
                let rho = reduced_density(&chain.generators()?, &chain.regions.abc())?;
                let part = modcom_symbolic(&rho, &chain.regions, regulator)?;
                total.value += part.value;
                total.deltas.extend(part.deltas);
                total.epsilon = total.epsilon.or(part.epsilon);
            }
            return Ok(total);
        }
        let rho = reduced_density(&self.generators, &self.regions.abc())?;
        modcom_symbolic(&rho, &self.regions, regulator)
    }

    /// Dense J from the prepared state vector (or the dense projector when no
    /// circuit is known).
    pub fn modcom_dense(
        &self,
        reg: &RegulatorConfig,
        limits: &DenseLimits,
    ) -> Result<ModcomResult> {
        self.check_regions()?;
        let abc = self.regions.abc();
        let rho_abc = match &self.circuit {
            Some(c) => c.prepare(limits)?.reduced_density(&abc, limits)?,
            None => {
                let d = self.regions.d();
                self.generators.projector_dense(limits)?.ptrace(&d)
            }
        };
        modcom_dense(&rho_abc, &self.regions, reg, limits)
    }

    /// J by the requested method. `Auto` tries the symbolic route and falls back
    /// to dense when the state is outside its reach.
    pub fn modcom(
        &self,
        choice: MethodChoice,
        reg: &RegulatorConfig,
        limits: &DenseLimits,
    ) -> Result<ModcomResult> {
        match choice {
            MethodChoice::Symbolic => self.modcom_symbolic(Some(reg.epsilon)),
            MethodChoice::Dense => self.modcom_dense(reg, limits),
            MethodChoice::Auto => match self.modcom_symbolic(Some(reg.epsilon)) {
                Ok(r) => Ok(r),
                Err(
                    Error::NotAnticommuting(..)
                    | Error::NonChainStructure(_)
                    | Error::TermBudgetExceeded(_)
                    | Error::UnsupportedSymbolic(_)
                    | Error::NotPositive(_),
                ) => self.modcom_dense(reg, limits),
                Err(e) => Err(e),
            },
        }
    }
}

/// Dense J of the 1D chain with `blue` in place of the `V` gate, using the
/// canonical regions with `M = 0`.
pub fn modcom_custom_gate(
    n: usize,
    blue: &BlueGate,
    reg: &RegulatorConfig,
    limits: &DenseLimits,
) -> Result<ModcomResult> {
    let regions = RegionAssignment::canonical_1d(n, 0)?;
    let psi = circuit_1d_with(n, blue)?.prepare(limits)?;
    modcom_dense(
        &psi.reduced_density(&regions.abc(), limits)?,
        &regions,
        reg,
        limits,
    )
}

/// One row of a sensitivity scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub site: SiteId,
    pub from: Region,
    pub to: Region,
    pub value: f64,
    pub method: Method,
}

/// Recomputes J with each ABC site moved to D and, with `move_in`, each D site
/// that shares a gate with ABC moved into every region among its ABC neighbours.
/// `sites` restricts the scan (`None` scans everything).
pub fn sensitivity_scan(
    problem: &Problem,
    sites: Option<&[SiteId]>,
    move_in: bool,
    choice: MethodChoice,
    reg: &RegulatorConfig,
    limits: &DenseLimits,
) -> Result<Vec<SensitivityRow>> {
    let u = problem.generators.universe().clone();
    let wanted = |s: SiteId| sites.is_none_or(|list| list.contains(&s));
    let mut moves = Vec::new();
    for &s in u.sites() {
        let from = problem.regions.region_of(s)?;
        if !wanted(s) {
            continue;
        }
        if from != Region::D {
            moves.push((s, from, Region::D));
        } else if move_in {
            let mut targets = std::collections::BTreeSet::new();
            if let Some(c) = &problem.circuit {
                for g in c.gates() {
                    let gs = g.sites();
                    if gs.contains(&s) {
                        for &t in &gs {
                            let r = problem.regions.region_of(t)?;
                            if r != Region::D {
                                targets.insert(r);
                            }
                        }
                    }
                }
            }
            moves.extend(targets.into_iter().map(|r| (s, from, r)));
        }
    }
    moves
        .into_iter()
        .map(|(site, from, to)| {
            let moved = problem.with_regions(problem.regions.move_site(site, to)?);
            let r = moved.modcom(choice, reg, limits)?;
            Ok(SensitivityRow {
                site,
                from,
                to,
                value: r.value,
                method: r.method,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// (1/(2√3))·ln²(2+√3), evaluated independently (numpy).
    const J_SYM: f64 = 0.5006718321118494;

    #[test]
    fn closed_form_values() {
        assert!((modcom_closed(&CanonicalAbcParams::symmetric()).unwrap() - J_SYM).abs() < 1e-14);
        let p = CanonicalAbcParams::new(0.3, -0.4, 0.0).unwrap();
        assert_eq!(modcom_closed(&p).unwrap(), 0.0);
        let a = CanonicalAbcParams::new(0.3, 0.5, 0.2).unwrap();
        let b = CanonicalAbcParams::new(0.3, 0.5, -0.2).unwrap();
        assert!((modcom_closed(&a).unwrap() + modcom_closed(&b).unwrap()).abs() < 1e-16);
        assert!(CanonicalAbcParams::new(0.8, 0.8, 0.1).is_err());
        let edge = CanonicalAbcParams {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        assert!(modcom_closed(&edge).is_err());
    }

    #[test]
    fn perturbed_closed_form_values() {
        for m in 1..=4 {
            let p = PerturbationSpec::new(0.0, m).unwrap();
            assert!((modcom_perturbed(&p) - J_SYM).abs() < 1e-14);
            assert!((p.delta() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
        let half_pi = PerturbationSpec::new(std::f64::consts::FRAC_PI_2, 1).unwrap();
        assert!(modcom_perturbed(&half_pi).abs() < 1e-30);
        // numpy: N=2, M=1 dense values.
        let quarter = PerturbationSpec::new(std::f64::consts::FRAC_PI_4, 1).unwrap();
        assert!((modcom_perturbed(&quarter) - 0.18963224608662593).abs() < 1e-12);
        let expected = [
            0.44160483879553625,
            0.3892142212001276,
            0.342782044427228,
            0.30166329275423603,
            0.26527891217381794,
            0.23310947744334157,
        ];
        for (m, e) in (1..=6).zip(expected) {
            let v = modcom_perturbed(&PerturbationSpec::new(0.3, m).unwrap());
            assert!((v - e).abs() < 1e-13, "M = {m}");
        }
    }

    #[test]
    fn one_minus_delta_is_stable() {
        let p = PerturbationSpec::new(1.55, 6).unwrap();
        let naive = 1.0 - p.delta();
        assert!(p.one_minus_delta() > 0.0);
        assert!((p.one_minus_delta() - naive).abs() < 1e-15);
    }

    #[test]
    fn symbolic_matches_closed_forms() {
        for n in 1..=6 {
            let r = Problem::chain_1d(n, 0, None)
                .unwrap()
                .modcom_symbolic(None)
                .unwrap();
            assert!((r.value - J_SYM).abs() < 1e-12, "N = {n}");
            assert_eq!(r.method, Method::Symbolic);
        }
        let r = Problem::chain_1d(3, 1, Some(0.3))
            .unwrap()
            .modcom_symbolic(None)
            .unwrap();
        let closed = modcom_perturbed(&PerturbationSpec::new(0.3, 1).unwrap());
        assert!((r.value - closed).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_gives_zero() {
        let r = RegionAssignment::canonical_1d(1, 0).unwrap();
        let u = r.universe().clone();
        let rho = PauliSum::identity(u, r.abc()).scale_real(1.0 / 8.0);
        assert_eq!(modcom_symbolic(&rho, &r, None).unwrap().value, 0.0);
    }

    #[test]
    fn cluster_chain_gives_zero() {
        let p = Problem::cluster(2, 0).unwrap();
        let r = p
            .modcom(
                MethodChoice::Auto,
                &RegulatorConfig::default(),
                &DenseLimits::default(),
            )
            .unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn empty_complement_is_flagged() {
        let p = Problem::chain_1d(1, 0, None).unwrap();
        let mut r = p.regions.clone();
        for s in [-1, 1] {
            r = r.move_site(s, Region::B).unwrap();
        }
        let q = p.with_regions(r);
        assert!(matches!(
            q.modcom_symbolic(None),
            Err(Error::EmptyComplement)
        ));
    }

    #[test]
    fn custom_gate_route() {
        use crate::states::{v_gate_matrix, BlochRotation};
        let (reg, limits) = (RegulatorConfig::default(), DenseLimits::default());
        let v = BlueGate::Custom(v_gate_matrix(&BlochRotation::default_v()));
        let j = modcom_custom_gate(1, &v, &reg, &limits).unwrap().value;
        assert!((j - J_SYM).abs() < 1e-9);
        let id = BlueGate::Custom(nalgebra::DMatrix::identity(4, 4));
        assert!(
            modcom_custom_gate(1, &id, &reg, &limits)
                .unwrap()
                .value
                .abs()
                < 1e-9
        );
    }
}
