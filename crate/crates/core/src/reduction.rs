//! Reduced density operators from generator sets, and the reduction of a
//! lattice circuit to the decoupled chains that can carry a modular commutator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{PauliSum, COEFF_EPS};
use crate::error::{Error, Result};
use crate::pauli::{BitSet, PauliString, SiteId, Universe};
use crate::states::{
    chain_universe, generators_1d, Circuit, Gate, GateKind, GeneratorSet, RegionLists,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    A,
    B,
    C,
    D,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::A, Region::B, Region::C, Region::D];
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::A => "A",
            Region::B => "B",
            Region::C => "C",
            Region::D => "D",
        })
    }
}

/// Total map from sites to regions; `D` is the complement of `ABC`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAssignment {
    universe: Arc<Universe>,
    regions: Vec<Region>,
}

impl RegionAssignment {
    /// Every site in `D`.
    pub fn all_d(universe: Arc<Universe>) -> Self {
        let regions = vec![Region::D; universe.len()];
        Self { universe, regions }
    }

    /// Sites listed under A, B, C; everything else in D.
    pub fn from_lists(universe: Arc<Universe>, lists: &RegionLists) -> Result<Self> {
        let mut out = Self::all_d(universe);
        for (region, sites) in [
            (Region::A, &lists.a),
            (Region::B, &lists.b),
            (Region::C, &lists.c),
        ] {
            for &s in sites {
                let k = out.universe.index_of(s)?;
                if out.regions[k] != Region::D {
                    return Err(Error::InvalidConfig(format!(
                        "site {s} is listed in two regions"
                    )));
                }
                out.regions[k] = region;
            }
        }
        Ok(out)
    }

    /// A = even sites in `[-2N, -2M-2]`, B = even sites in `[-2M, 2M]`,
    /// C = even sites in `[2M+2, 2N]`, D = odd sites.
    pub fn canonical_1d(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m + 1 > n {
            return Err(Error::InvalidParameter(format!(
                "canonical regions need 0 <= M <= N - 1 (N = {n}, M = {m})"
            )));
        }
        let universe = chain_universe(n);
        let m = m as SiteId;
        let regions = universe
            .sites()
            .iter()
            .map(|&s| {
                if s.rem_euclid(2) == 1 {
                    Region::D
                } else if s < -2 * m {
                    Region::A
                } else if s <= 2 * m {
                    Region::B
                } else {
                    Region::C
                }
            })
            .collect();
        Ok(Self { universe, regions })
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn region_of(&self, site: SiteId) -> Result<Region> {
        Ok(self.regions[self.universe.index_of(site)?])
    }

    pub fn region_at(&self, k: usize) -> Region {
        self.regions[k]
    }

    pub fn set(&self, region: Region) -> BitSet {
        BitSet::from_indices(
            self.regions
                .iter()
                .enumerate()
                .filter(|(_, r)| **r == region)
                .map(|(k, _)| k),
        )
    }

    pub fn sites_in(&self, region: Region) -> Vec<SiteId> {
        self.universe.labels(&self.set(region))
    }

    pub fn a(&self) -> BitSet {
        self.set(Region::A)
    }

    pub fn b(&self) -> BitSet {
        self.set(Region::B)
    }

    pub fn c(&self) -> BitSet {
        self.set(Region::C)
    }

    pub fn d(&self) -> BitSet {
        self.set(Region::D)
    }

    pub fn abc(&self) -> BitSet {
        self.a().union(&self.b()).union(&self.c())
    }

    /// Copy with `site` reassigned to `to`.
    pub fn move_site(&self, site: SiteId, to: Region) -> Result<Self> {
        let k = self.universe.index_of(site)?;
        let mut out = self.clone();
        out.regions[k] = to;
        Ok(out)
    }

    pub fn to_lists(&self) -> RegionLists {
        RegionLists {
            a: self.sites_in(Region::A),
            b: self.sites_in(Region::B),
            c: self.sites_in(Region::C),
        }
    }
}

/// Controls for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Drop partial products that are non-identity on a traced site no later
    /// generator touches. Turning this off expands the full product.
    pub prune: bool,
    /// Abort once the number of live partial products exceeds this.
    pub term_budget: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            prune: true,
            term_budget: 1 << 22,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// `Tr_{keepᶜ} ∏(𝟙+g_i)/2`, normalized to unit trace, on the kept sites.
    pub rho: PauliSum,
    /// Trace of `∏(𝟙+g_i)/2` before normalization (1 for a unique state).
    pub trace: f64,
    /// Largest number of live partial products seen.
    pub peak_terms: usize,
}

/// Expands `∏(𝟙+g_i)` generator by generator and traces out everything outside
/// `keep`.
///
/// Once the sweep has passed the last generator touching a traced-out site, a
/// partial product that is not the identity there can never be cancelled, so it
/// is dropped immediately. That rule is exact for any generator order; ordering
/// along a chain is what keeps the number of live products small.
pub fn sweep(gens: &GeneratorSet, keep: &BitSet, opts: &SweepOptions) -> Result<SweepOutput> {
    let universe = gens.universe().clone();
    let all = universe.all();
    let keep = keep.intersection(&all);
    let traced = all.difference(&keep);

    // Traced sites that close right after generator i.
    let mut closing: Vec<BitSet> = vec![BitSet::default(); gens.len()];
    let mut last_touch: HashMap<usize, usize> = HashMap::new();
    for (i, (_, g)) in gens.generators().iter().enumerate() {
        for k in g.support().iter() {
            last_touch.insert(k, i);
        }
    }
    for k in traced.iter() {
        if let Some(&i) = last_touch.get(&k) {
            closing[i].insert(k);
        }
    }

    // Ordered maps keep the floating-point summation order (and so the output) reproducible.
    let mut state: BTreeMap<PauliString, Complex64> = BTreeMap::new();
    state.insert(PauliString::identity(), Complex64::new(1.0, 0.0));
    let mut peak = 1;
    for (i, (_, g)) in gens.generators().iter().enumerate() {
        let mut next = state.clone();
        for (p, c) in &state {
            for (t, a) in g.terms() {
                let (ph, q) = p.mul(t);
                *next.entry(q).or_default() += c * a * ph.to_complex();
            }
        }
        let closed = &closing[i];
        next.retain(|p, c| c.norm() > COEFF_EPS && (!opts.prune || p.restrict_identity_on(closed)));
        if next.len() > opts.term_budget {
            return Err(Error::TermBudgetExceeded(opts.term_budget));
        }
        peak = peak.max(next.len());
        state = next;
    }

    let n = universe.len() as i32;
    let n_gen = gens.len() as i32;
    let identity = state
        .get(&PauliString::identity())
        .copied()
        .unwrap_or_default();
    let trace = identity.re * 2f64.powi(n - n_gen);

    let mut rho = PauliSum::zero(universe, keep.clone());
    for (p, c) in state {
        if p.restrict_identity_on(&traced) {
            rho.add_term(p, c);
        }
    }
    let norm = rho.identity_coeff() * 2f64.powi(keep.len() as i32);
    if norm.norm() < 1e-300 {
        return Err(Error::NotNormalized(
            "reduced operator has zero trace".into(),
        ));
    }
    let rho = rho.scale(norm.inv());
    Ok(SweepOutput {
        rho,
        trace,
        peak_terms: peak,
    })
}

/// Generator supports must be intervals of the site order, with nondecreasing
/// left ends.
pub fn check_chain_order(gens: &GeneratorSet) -> Result<()> {
    let mut prev_start = 0usize;
    for (i, (s, g)) in gens.generators().iter().enumerate() {
        let support: Vec<usize> = g.support().iter().collect();
        let (Some(&lo), Some(&hi)) = (support.first(), support.last()) else {
            continue;
        };
        if hi - lo + 1 != support.len() {
            return Err(Error::NonChainStructure(format!(
                "support of generator {s} is not an interval"
            )));
        }
        if i > 0 && lo < prev_start {
            return Err(Error::NonChainStructure(format!(
                "generator {s} starts before its predecessor"
            )));
        }
        prev_start = lo;
    }
    Ok(())
}

/// `Tr_{keepᶜ} ∏(𝟙+g_i)/2` with unit trace, by the pruned sweep.
pub fn reduced_density(gens: &GeneratorSet, keep: &BitSet) -> Result<PauliSum> {
    check_chain_order(gens)?;
    Ok(sweep(gens, keep, &SweepOptions::default())?.rho)
}

/// Same as [`reduced_density`] but expanding every product (no pruning).
pub fn reduced_density_full(gens: &GeneratorSet, keep: &BitSet) -> Result<PauliSum> {
    let opts = SweepOptions {
        prune: false,
        ..SweepOptions::default()
    };
    Ok(sweep(gens, keep, &opts)?.rho)
}

/// One decoupled chain left after gate removal, relabeled to signed 1D indices.
#[derive(Debug, Clone)]
pub struct ChainProblem {
    pub circuit: Circuit,
    pub regions: RegionAssignment,
    /// `original_sites[k]` is the lattice label of the chain's k-th site.
    pub original_sites: Vec<SiteId>,
}

impl ChainProblem {
    pub fn universe(&self) -> &Arc<Universe> {
        self.circuit.universe()
    }

    /// Generators of the chain state, by symbolic circuit conjugation.
    pub fn generators(&self) -> Result<GeneratorSet> {
        self.circuit.generators()
    }

    /// `(N, M)` when this chain is exactly the modified cluster chain with its
    /// canonical regions.
    pub fn matches_1d_example(&self) -> Option<(usize, usize)> {
        let len = self.universe().len();
        if len < 5 || !(len - 1).is_multiple_of(4) {
            return None;
        }
        let n = (len - 1) / 4;
        if self.universe().sites() != chain_universe(n).sites() {
            return None;
        }
        let gens = self.generators().ok()?;
        let diff = gens.max_abs_diff(&generators_1d(n).ok()?)?;
        if diff > 1e-12 {
            return None;
        }
        (0..n)
            .find(|&m| {
                RegionAssignment::canonical_1d(n, m)
                    .map(|r| r.regions == self.regions.regions)
                    .unwrap_or(false)
            })
            .map(|m| (n, m))
    }
}

fn is_diagonal(g: &Gate) -> bool {
    matches!(g.kind, GateKind::Cz(..) | GateKind::ZzRotation { .. })
}

fn gates_commute(a: &Gate, b: &Gate) -> bool {
    let sa: BTreeSet<_> = a.sites().into_iter().collect();
    let shared = b.sites().iter().any(|s| sa.contains(s));
    !shared || (is_diagonal(a) && is_diagonal(b))
}

/// Removes gates that can be pushed to the end of the circuit and act inside a
/// single region, then splits what remains into connected chains and keeps
/// those touching all of A, B, C and D.
///
/// A gate is removable when all its sites lie in one region and it commutes with
/// every remaining gate after it; gates are examined last to first, so the
/// `CZ` layer goes before the blue layer it sits on. Chains are relabeled so the
/// blue gate's target is site 0 and its control is site 1.
pub fn reduce_2d_to_chains(
    circuit: &Circuit,
    regions: &RegionAssignment,
) -> Result<Vec<ChainProblem>> {
    let gates = circuit.gates();
    let region_of = |s: SiteId| regions.region_of(s);
    let mut residual = vec![true; gates.len()];
    for i in (0..gates.len()).rev() {
        let sites = gates[i].sites();
        let first = region_of(sites[0])?;
        let local = sites
            .iter()
            .map(|&s| region_of(s))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .all(|&r| r == first);
        if !local {
            continue;
        }
        let blocked =
            (i + 1..gates.len()).any(|j| residual[j] && !gates_commute(&gates[i], &gates[j]));
        if !blocked {
            residual[i] = false;
        }
    }

    // Connected components of the residual two-qubit gate graph.
    let mut nbrs: BTreeMap<SiteId, BTreeSet<SiteId>> = BTreeMap::new();
    for (g, _) in gates.iter().zip(&residual).filter(|(_, r)| **r) {
        if let [a, b] = g.sites()[..] {
            nbrs.entry(a).or_default().insert(b);
            nbrs.entry(b).or_default().insert(a);
        }
    }
    let mut seen = BTreeSet::new();
    let mut chains = Vec::new();
    for &start in nbrs.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if comp.insert(v) {
                stack.extend(nbrs[&v].iter().copied());
            }
        }
        seen.extend(comp.iter().copied());
        let touched: BTreeSet<Region> =
            comp.iter().map(|&s| region_of(s)).collect::<Result<_>>()?;
        if touched.len() < 4 {
            continue;
        }
        let order = path_order(&comp, &nbrs)?;
        chains.push(build_chain(gates, &residual, regions, &order)?);
    }
    Ok(chains)
}

/// Sites of a path component from one end to the other.
fn path_order(
    comp: &BTreeSet<SiteId>,
    nbrs: &BTreeMap<SiteId, BTreeSet<SiteId>>,
) -> Result<Vec<SiteId>> {
    let edges: usize = comp.iter().map(|v| nbrs[v].len()).sum::<usize>() / 2;
    if comp.iter().any(|v| nbrs[v].len() > 2) || edges + 1 != comp.len() {
        return Err(Error::NonChainStructure(format!(
            "residual gates around site {} do not form a path",
            comp.iter().next().expect("nonempty component")
        )));
    }
    let start = *comp
        .iter()
        .find(|v| nbrs[v].len() == 1)
        .expect("a path has an end");
    let mut order = vec![start];
    let mut prev = None;
    let mut cur = start;
    while let Some(&next) = nbrs[&cur].iter().find(|&&w| Some(w) != prev) {
        order.push(next);
        prev = Some(cur);
        cur = next;
    }
    Ok(order)
}

fn build_chain(
    gates: &[Gate],
    residual: &[bool],
    regions: &RegionAssignment,
    order: &[SiteId],
) -> Result<ChainProblem> {
    let members: BTreeSet<SiteId> = order.iter().copied().collect();
    let kept: Vec<&Gate> = gates
        .iter()
        .zip(residual)
        .filter(|(g, r)| **r && g.sites().iter().all(|s| members.contains(s)))
        .map(|(g, _)| g)
        .collect();

    // Orientation and origin from the unique (control → target) gate, if any.
    let directed: Vec<(SiteId, SiteId)> = kept
        .iter()
        .filter_map(|g| match &g.kind {
            GateKind::Cnot { control, target } => Some((*control, *target)),
            GateKind::CustomTwoQubit { first, second, .. } => Some((*first, *second)),
            _ => None,
        })
        .collect();
    let pos = |s: SiteId| order.iter().position(|&t| t == s).expect("site on path");
    let mut path = order.to_vec();
    let origin = match directed.as_slice() {
        [(i1, i0)] => {
            if pos(*i1) < pos(*i0) {
                path.reverse();
            }
            path.iter().position(|s| s == i0).expect("target on path") as SiteId
        }
        _ => {
            if path.last() < path.first() {
                path.reverse();
            }
            0
        }
    };
    let relabel: HashMap<SiteId, SiteId> = path
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, k as SiteId - origin))
        .collect();
    let new_universe = Universe::new(relabel.values().copied())?;
    let map = |s: &SiteId| relabel[s];
    let new_gates = kept
        .iter()
        .map(|g| {
            let kind = match &g.kind {
                GateKind::Cz(a, b) => GateKind::Cz(map(a), map(b)),
                GateKind::Cnot { control, target } => GateKind::Cnot {
                    control: map(control),
                    target: map(target),
                },
                GateKind::Rotation { site, rotation } => GateKind::Rotation {
                    site: map(site),
                    rotation: *rotation,
                },
                GateKind::ZzRotation { a, b, theta } => GateKind::ZzRotation {
                    a: map(a),
                    b: map(b),
                    theta: *theta,
                },
                GateKind::CustomTwoQubit {
                    first,
                    second,
                    matrix,
                } => GateKind::CustomTwoQubit {
                    first: map(first),
                    second: map(second),
                    matrix: matrix.clone(),
                },
            };
            Gate::new(kind, g.layer)
        })
        .collect();
    let circuit = Circuit::new(new_universe.clone(), new_gates)?;
    let mut new_regions = RegionAssignment::all_d(new_universe.clone());
    for &s in &path {
        new_regions = new_regions.move_site(relabel[&s], regions.region_of(s)?)?;
    }
    let original_sites = new_universe
        .sites()
        .iter()
        .map(|l| {
            *path
                .iter()
                .find(|&&s| relabel[&s] == *l)
                .expect("bijection")
        })
        .collect();
    Ok(ChainProblem {
        circuit,
        regions: new_regions,
        original_sites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{cluster_chain, fig3_like, generators_1d_perturbed, honeycomb_state};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn canonical_regions() {
        let r = RegionAssignment::canonical_1d(3, 1).unwrap();
        assert_eq!(r.sites_in(Region::A), vec![-6, -4]);
        assert_eq!(r.sites_in(Region::B), vec![-2, 0, 2]);
        assert_eq!(r.sites_in(Region::C), vec![4, 6]);
        assert_eq!(r.sites_in(Region::D), vec![-5, -3, -1, 1, 3, 5]);
        assert!(RegionAssignment::canonical_1d(2, 2).is_err());
    }

    #[test]
    fn move_site_cases() {
        let r = RegionAssignment::canonical_1d(2, 0).unwrap();
        let out = r.move_site(0, Region::D).unwrap();
        assert_eq!(out.abc().len(), 4);
        let inn = r.move_site(-1, Region::B).unwrap();
        assert_eq!(inn.sites_in(Region::B), vec![-1, 0]);
        assert_eq!(r.move_site(2, Region::C).unwrap(), r);
        assert!(r.move_site(99, Region::A).is_err());
    }

    #[test]
    fn cluster_chain_even_sites() {
        for n in 1..=4 {
            let (_, g) = cluster_chain(n).unwrap();
            let u = g.universe().clone();
            let even = u
                .site_set(u.sites().iter().copied().filter(|s| s % 2 == 0))
                .unwrap();
            let rho = reduced_density(&g, &even).unwrap();
            let nn = n as SiteId;
            let x = u.x_string(-2 * nn, 2 * nn).unwrap();
            let norm = 2f64.powi(-(2 * n as i32 + 1));
            assert_eq!(rho.len(), 2);
            assert!((rho.identity_coeff() - c(norm)).norm() < 1e-15);
            assert!((rho.coeff(&x) - c(norm)).norm() < 1e-15);
        }
    }

    #[test]
    fn modified_chain_reduced_state() {
        let s3 = 1.0 / 3f64.sqrt();
        for n in 1..=5 {
            let g = generators_1d(n).unwrap();
            let u = g.universe().clone();
            let r = RegionAssignment::canonical_1d(n, 0).unwrap();
            let rho = reduced_density(&g, &r.abc()).unwrap();
            let nn = n as SiteId;
            let norm = 2f64.powi(-(2 * n as i32 + 1));
            let expect = PauliSum::from_labels(&u, &[(1.0, "I")]).unwrap();
            let strings = [
                u.x_string(-2 * nn, 0).unwrap(),
                u.single(0, crate::pauli::Pauli::Z)
                    .unwrap()
                    .mul(&u.x_string(2, 2 * nn).unwrap())
                    .1,
                u.x_string(-2 * nn, -2)
                    .unwrap()
                    .mul(&u.single(0, crate::pauli::Pauli::Y).unwrap())
                    .1
                    .mul(&u.x_string(2, 2 * nn).unwrap())
                    .1,
            ];
            let mut expect = expect.scale_real(norm).with_sites(r.abc());
            for p in strings {
                expect = expect.add(&PauliSum::from_hermitian(
                    u.clone(),
                    r.abc(),
                    [(c(norm * s3), p)],
                ));
            }
            assert_eq!(rho.len(), 4);
            assert!(rho.max_abs_diff(&expect) < 1e-15, "N = {n}");
        }
    }

    #[test]
    fn pruning_matches_full_expansion() {
        for g in [
            generators_1d(2).unwrap(),
            generators_1d_perturbed(2, 1, 0.4).unwrap(),
        ] {
            let u = g.universe().clone();
            for keep in [vec![-4, -2, 0, 2, 4], vec![-1, 0, 1], vec![], vec![-4, 3]] {
                let keep = u.site_set(keep).unwrap();
                let a = reduced_density(&g, &keep).unwrap();
                let b = reduced_density_full(&g, &keep).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-14);
            }
        }
    }

    #[test]
    fn non_chain_order_is_rejected() {
        let g = generators_1d(1).unwrap();
        let mut reversed: Vec<_> = g.generators().to_vec();
        reversed.reverse();
        let rev = GeneratorSet::new(g.universe().clone(), reversed);
        let keep = g.universe().site_set([0]).unwrap();
        assert!(matches!(
            reduced_density(&rev, &keep),
            Err(Error::NonChainStructure(_))
        ));
        // The sweep itself is still exact in any order.
        let a = sweep(&rev, &keep, &SweepOptions::default()).unwrap().rho;
        assert!(a.max_abs_diff(&reduced_density(&g, &keep).unwrap()) < 1e-15);
    }

    #[test]
    fn term_budget() {
        let g = generators_1d(2).unwrap();
        let opts = SweepOptions {
            prune: false,
            term_budget: 4,
        };
        assert!(matches!(
            sweep(&g, &BitSet::default(), &opts),
            Err(Error::TermBudgetExceeded(4))
        ));
    }

    #[test]
    fn minimal_lattice_reduces_to_one_chain() {
        let cfg = fig3_like(1, 0, 1, false).unwrap();
        let (circuit, gens) = honeycomb_state(&cfg).unwrap();
        assert_eq!(gens.len(), 15);
        let regions =
            RegionAssignment::from_lists(gens.universe().clone(), cfg.region.as_ref().unwrap())
                .unwrap();
        assert_eq!(regions.abc().len(), 8);
        let chains = reduce_2d_to_chains(&circuit, &regions).unwrap();
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].matches_1d_example(), Some((1, 0)));
        assert_eq!(chains[0].original_sites, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn larger_lattices_reduce_to_one_chain() {
        for (n, m, rows, bulk) in [
            (2, 1, 1, false),
            (2, 0, 2, false),
            (3, 1, 3, true),
            (2, 1, 2, true),
        ] {
            let cfg = fig3_like(n, m, rows, bulk).unwrap();
            let (circuit, gens) = honeycomb_state(&cfg).unwrap();
            let regions =
                RegionAssignment::from_lists(gens.universe().clone(), cfg.region.as_ref().unwrap())
                    .unwrap();
            let chains = reduce_2d_to_chains(&circuit, &regions).unwrap();
            assert_eq!(chains.len(), 1, "{n} {m} {rows} {bulk}");
            assert_eq!(chains[0].matches_1d_example(), Some((n, m)));
        }
    }

    #[test]
    fn all_interior_or_empty_d_gives_no_chain() {
        let cfg = fig3_like(1, 0, 1, false).unwrap();
        let (circuit, gens) = honeycomb_state(&cfg).unwrap();
        let u = gens.universe().clone();
        let everything_b = RegionLists {
            a: vec![],
            b: u.sites().to_vec(),
            c: vec![],
        };
        let r = RegionAssignment::from_lists(u.clone(), &everything_b).unwrap();
        assert!(reduce_2d_to_chains(&circuit, &r).unwrap().is_empty());
        let mut no_d = cfg.region.clone().unwrap();
        no_d.b.extend(u.sites().iter().filter(|s| {
            let l = cfg.region.as_ref().unwrap();
            !l.a.contains(s) && !l.b.contains(s) && !l.c.contains(s)
        }));
        let r = RegionAssignment::from_lists(u, &no_d).unwrap();
        assert!(r.d().is_empty());
        assert!(reduce_2d_to_chains(&circuit, &r).unwrap().is_empty());
    }

    #[test]
    fn duplicate_region_listing_rejected() {
        let u = Universe::range(0, 2);
        let lists = RegionLists {
            a: vec![0],
            b: vec![0],
            c: vec![],
        };
        assert!(RegionAssignment::from_lists(u, &lists).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use std::sync::LazyLock;

    use proptest::prelude::*;

    use super::*;
    use crate::dense::{DenseLimits, DenseOperator};
    use crate::pauli::BitSet;
    use crate::states::{cluster_chain, generators_1d, generators_1d_perturbed, GeneratorSet};

    /// Generator sets with their dense projectors, built once.
    static SYSTEMS: LazyLock<Vec<(GeneratorSet, DenseOperator)>> = LazyLock::new(|| {
        let limits = DenseLimits::default();
        [
            generators_1d(1).unwrap(),
            generators_1d_perturbed(2, 1, 0.7).unwrap(),
            cluster_chain(2).unwrap().1,
        ]
        .into_iter()
        .map(|g| {
            let p = g.projector_dense(&limits).unwrap();
            (g, p)
        })
        .collect()
    });

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Symbolic reduction on arbitrary keep-sets, with and without pruning,
        /// against the dense projector traced down.
        #[test]
        fn reduced_density_matches_dense(which in 0usize..3, mask in any::<u16>()) {
            let limits = DenseLimits::default();
            let (gens, projector) = &SYSTEMS[which];
            let u = gens.universe().clone();
            let keep = BitSet::from_indices((0..u.len()).filter(|k| mask >> k & 1 == 1).take(6));
            let dense = projector.ptrace(&u.all().difference(&keep));
            let sym = reduced_density(gens, &keep).unwrap();
            prop_assert!(DenseOperator::from_sum(&sym, &limits).unwrap().max_abs_diff(&dense) < 1e-12);
            let full = reduced_density_full(gens, &keep).unwrap();
            prop_assert!(full.max_abs_diff(&sym) < 1e-14);
        }
    }
}
