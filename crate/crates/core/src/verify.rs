//! Self-check suite: every closed form and symbolic route against the dense
//! oracle, plus the structural invariants of the constructions.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

use num_complex::Complex64;
use rand::SeedableRng;
use serde::Serialize;

use crate::algebra::{
    as_anticommuting, entropy_closed, modular_hamiltonian_closed, AnticommutingDensity, PauliSum,
};
use crate::dense::{entropy_dense, random_unitary, DenseLimits, DenseOperator, RegulatorConfig};
use crate::error::{Error, Result};
use crate::modular::{
    modcom_closed, modcom_perturbed, sensitivity_scan, CanonicalAbcParams, MethodChoice,
    PerturbationSpec, Problem,
};
use crate::pauli::{Pauli, PauliString, Universe};
use crate::reduction::{reduced_density, Region, RegionAssignment};
use crate::states::{
    circuit_1d, circuit_1d_perturbed, circuit_1d_with, cluster_chain, fig3_like, generators_1d,
    generators_1d_perturbed, BlochRotation, BlueGate,
};

/// Deliberate defects, used to show the suite catches them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Negate the closed-form modular commutator before comparing.
    pub flip_closed_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub status: Status,
    /// Largest dense operator the check builds, in qubits.
    pub qubits: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub max_qubits: usize,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Failed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.status == Status::Failed)
    }
}

struct Ctx {
    limits: DenseLimits,
    reg: RegulatorConfig,
    faults: Faults,
}

type CheckFn = fn(&Ctx) -> std::result::Result<String, String>;

struct Check {
    name: &'static str,
    qubits: usize,
    run: CheckFn,
}

/// (1/(2√3))·ln²(2+√3).
pub fn symmetric_value() -> f64 {
    modcom_closed(&CanonicalAbcParams::symmetric()).expect("valid parameters")
}

fn close(label: &str, got: f64, want: f64, tol: f64) -> std::result::Result<(), String> {
    if (got - want).abs() <= tol && got.is_finite() {
        Ok(())
    } else {
        Err(format!(
            "{label}: got {got:.15}, expected {want:.15} (tol {tol:e})"
        ))
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

const CHECKS: &[Check] = &[
    Check {
        name: "pauli multiplication vs dense",
        qubits: 2,
        run: check_pauli_mul,
    },
    Check {
        name: "generator invariants",
        qubits: 0,
        run: check_generators,
    },
    Check {
        name: "closed modular Hamiltonian vs dense",
        qubits: 3,
        run: check_closed_k,
    },
    Check {
        name: "entropy_closed vs dense",
        qubits: 4,
        run: check_entropy,
    },
    Check {
        name: "reduced_density vs dense",
        qubits: 5,
        run: check_reduced,
    },
    Check {
        name: "circuit vs generators",
        qubits: 9,
        run: check_circuits,
    },
    Check {
        name: "modcom_closed vs dense",
        qubits: 3,
        run: check_closed_vs_dense,
    },
    Check {
        name: "modcom_symbolic vs dense",
        qubits: 5,
        run: check_symbolic_vs_dense,
    },
    Check {
        name: "modcom_perturbed vs dense",
        qubits: 5,
        run: check_perturbed_vs_dense,
    },
    Check {
        name: "cluster chain reduced state",
        qubits: 3,
        run: check_cluster_chain,
    },
    Check {
        name: "integer spectrum",
        qubits: 9,
        run: check_spectrum,
    },
    Check {
        name: "sensitivity to region boundaries",
        qubits: 5,
        run: check_sensitivity,
    },
    Check {
        name: "unitary invariance",
        qubits: 5,
        run: check_unitary_invariance,
    },
    Check {
        name: "lattice reduction",
        qubits: 8,
        run: check_lattice,
    },
];

/// Names of all checks, in run order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.name).collect()
}

/// Runs every check whose dense operators fit in `max_qubits`.
pub fn run_verification(max_qubits: usize, faults: Faults) -> VerifyReport {
    let ctx = Ctx {
        limits: DenseLimits::from_env().with_max_qubits(max_qubits),
        reg: RegulatorConfig::default(),
        faults,
    };
    let checks = CHECKS
        .iter()
        .map(|c| {
            let (status, detail) = if c.qubits > max_qubits {
                (Status::Skipped, format!("needs {} qubits", c.qubits))
            } else {
                match (c.run)(&ctx) {
                    Ok(d) => (Status::Passed, d),
                    Err(d) => (Status::Failed, d),
                }
            };
            CheckOutcome {
                name: c.name,
                status,
                qubits: c.qubits,
                detail,
            }
        })
        .collect();
    VerifyReport { max_qubits, checks }
}

fn check_pauli_mul(ctx: &Ctx) -> std::result::Result<String, String> {
    let u = Universe::range(0, 1);
    let all = u.all();
    let strings: Vec<PauliString> = (0..16)
        .map(|k| {
            let f = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
            u.string(
                &[(0, f[k % 4]), (1, f[k / 4])]
                    .into_iter()
                    .filter(|(_, p)| *p != Pauli::I)
                    .collect::<Vec<_>>(),
            )
            .expect("two sites")
        })
        .collect();
    let dense = |p: &PauliString| {
        DenseOperator::from_pauli(u.clone(), all.clone(), p, &ctx.limits).map_err(e2s)
    };
    for p in &strings {
        for q in &strings {
            let (ph, r) = p.mul(q);
            let lhs = dense(p)?.mul(&dense(q)?);
            let rhs = dense(&r)?.scale(ph.to_complex());
            if lhs.max_abs_diff(&rhs) > 1e-14 {
                return Err(format!("{} · {}", u.render(p), u.render(q)));
            }
            let comm = lhs
                .sub(&dense(q)?.mul(&dense(p)?))
                .matrix()
                .iter()
                .all(|z| z.norm() < 1e-14);
            if comm != p.commutes(q) {
                return Err(format!(
                    "commutation of {} and {}",
                    u.render(p),
                    u.render(q)
                ));
            }
        }
    }
    Ok("256 products".into())
}

fn check_generators(_: &Ctx) -> std::result::Result<String, String> {
    for n in 1..=4 {
        generators_1d(n)
            .and_then(|g| g.validate())
            .map_err(|e| format!("N={n}: {e}"))?;
        cluster_chain(n)
            .and_then(|(_, g)| g.validate())
            .map_err(|e| format!("cluster N={n}: {e}"))?;
        for m in 1..n {
            generators_1d_perturbed(n, m, 0.37)
                .and_then(|g| g.validate())
                .map_err(|e| format!("N={n} M={m}: {e}"))?;
        }
    }
    Ok("N = 1..4".into())
}

fn check_closed_k(ctx: &Ctx) -> std::result::Result<String, String> {
    let u = Universe::range(0, 2);
    let s3 = 1.0 / 3f64.sqrt();
    let p1 = u.parse("X_0 Z_1").map_err(e2s)?;
    let p2 = u.parse("Y_0 Z_1 X_2").map_err(e2s)?;
    let rho =
        AnticommutingDensity::new(u.clone(), u.all(), vec![(p1, s3), (p2, 0.5)]).map_err(e2s)?;
    let k = modular_hamiltonian_closed(&rho, None).map_err(e2s)?;
    let kd = DenseOperator::from_sum(&k.to_sum(), &ctx.limits).map_err(e2s)?;
    let rd = DenseOperator::from_sum(&rho.to_sum(), &ctx.limits).map_err(e2s)?;
    let back = kd.exp_neg(&ctx.limits).map_err(e2s)?;
    let err = back.max_abs_diff(&rd);
    if err > 1e-10 {
        return Err(format!("exp(-K) differs from rho by {err:e}"));
    }
    Ok(format!("max deviation {err:.1e}"))
}

fn check_entropy(ctx: &Ctx) -> std::result::Result<String, String> {
    let u = Universe::range(0, 3);
    let cases = [
        vec![("X_0", 0.4), ("Z_0 X_1", 0.3)],
        vec![("X_0 X_1 X_2 X_3", 1.0)],
        vec![("Y_1 Z_2", 1.0 / 3f64.sqrt())],
        vec![],
    ];
    for terms in cases {
        let coeffs = terms
            .iter()
            .map(|(t, a)| Ok((u.parse(t)?, *a)))
            .collect::<Result<Vec<_>>>()
            .map_err(e2s)?;
        let rho = AnticommutingDensity::new(u.clone(), u.all(), coeffs).map_err(e2s)?;
        let dense = DenseOperator::from_sum(&rho.to_sum(), &ctx.limits).map_err(e2s)?;
        close(
            "entropy",
            entropy_closed(&rho),
            entropy_dense(&dense, &ctx.limits).map_err(e2s)?,
            1e-10,
        )?;
    }
    Ok("4 densities".into())
}

fn check_reduced(ctx: &Ctx) -> std::result::Result<String, String> {
    let cases = [(1, None), (2, None), (2, Some((1, 0.3)))];
    for (n, pert) in cases {
        let (gens, circuit) = match pert {
            Some((m, t)) => (
                generators_1d_perturbed(n, m, t),
                circuit_1d_perturbed(n, m, t),
            ),
            None => (generators_1d(n), circuit_1d(n)),
        };
        let (gens, circuit) = (gens.map_err(e2s)?, circuit.map_err(e2s)?);
        let regions = RegionAssignment::canonical_1d(n, pert.map_or(0, |p| p.0)).map_err(e2s)?;
        let abc = regions.abc();
        let sym = reduced_density(&gens, &abc).map_err(e2s)?;
        let psi = circuit.prepare(&ctx.limits).map_err(e2s)?;
        let dense = psi.reduced_density(&abc, &ctx.limits).map_err(e2s)?;
        let err = DenseOperator::from_sum(&sym, &ctx.limits)
            .map_err(e2s)?
            .max_abs_diff(&dense);
        if err > 1e-12 {
            return Err(format!("N={n}: deviation {err:e}"));
        }
    }
    Ok("N = 1, 2 and perturbed N = 2".into())
}

fn check_circuits(ctx: &Ctx) -> std::result::Result<String, String> {
    for n in 1..=2 {
        let proj = generators_1d(n)
            .and_then(|g| g.projector_dense(&ctx.limits))
            .map_err(e2s)?;
        for r in [BlochRotation::default_v(), BlochRotation::alternate_v()] {
            let psi = circuit_1d_with(n, &BlueGate::V(r))
                .and_then(|c| c.prepare(&ctx.limits))
                .map_err(e2s)?;
            let rho = DenseOperator::from_state(&psi, &ctx.limits).map_err(e2s)?;
            let err = rho.max_abs_diff(&proj);
            if err > 1e-10 {
                return Err(format!("N={n}: deviation {err:e}"));
            }
        }
    }
    Ok("N = 1, 2 with two rotations".into())
}

fn check_closed_vs_dense(ctx: &Ctx) -> std::result::Result<String, String> {
    let mut closed = symmetric_value();
    if ctx.faults.flip_closed_sign {
        closed = -closed;
    }
    let dense = Problem::chain_1d(1, 0, None)
        .and_then(|p| p.modcom_dense(&ctx.reg, &ctx.limits))
        .map_err(e2s)?;
    close("J", closed, dense.value, 1e-9)?;
    Ok(format!("J = {:.12}", dense.value))
}

fn check_symbolic_vs_dense(ctx: &Ctx) -> std::result::Result<String, String> {
    for n in 1..=2 {
        let p = Problem::chain_1d(n, 0, None).map_err(e2s)?;
        let s = p.modcom_symbolic(None).map_err(e2s)?;
        let d = p.modcom_dense(&ctx.reg, &ctx.limits).map_err(e2s)?;
        close(&format!("N={n}"), s.value, d.value, 1e-9)?;
    }
    Ok("N = 1, 2".into())
}

fn check_perturbed_vs_dense(ctx: &Ctx) -> std::result::Result<String, String> {
    for theta in [0.3, FRAC_PI_4, FRAC_PI_2] {
        let closed = modcom_perturbed(&PerturbationSpec::new(theta, 1).map_err(e2s)?);
        let dense = Problem::chain_1d(2, 1, Some(theta))
            .and_then(|p| p.modcom_dense(&ctx.reg, &ctx.limits))
            .map_err(e2s)?;
        close(&format!("theta={theta}"), closed, dense.value, 1e-8)?;
    }
    Ok("N = 2, M = 1, three angles".into())
}

fn check_cluster_chain(ctx: &Ctx) -> std::result::Result<String, String> {
    let n = 2;
    let (_, gens) = cluster_chain(n).map_err(e2s)?;
    let regions = RegionAssignment::canonical_1d(n, 0).map_err(e2s)?;
    let u = gens.universe().clone();
    let rho = reduced_density(&gens, &regions.abc()).map_err(e2s)?;
    let x = u.x_string(-4, 4).map_err(e2s)?;
    let norm = 2f64.powi(-(n as i32 + 1) - n as i32);
    let expect = PauliSum::from_hermitian(
        u.clone(),
        regions.abc(),
        [
            (Complex64::new(norm, 0.0), PauliString::identity()),
            (Complex64::new(norm, 0.0), x),
        ],
    );
    if rho.max_abs_diff(&expect) > 1e-15 {
        return Err("reduced state is not 2^-(2N+1)(1 + X...X)".into());
    }
    let ac = as_anticommuting(&rho).map_err(e2s)?;
    close("entropy", entropy_closed(&ac), (2 * n) as f64 * LN_2, 1e-12)?;
    let dense = DenseOperator::from_sum(&rho, &ctx.limits).map_err(e2s)?;
    close(
        "dense entropy",
        entropy_dense(&dense, &ctx.limits).map_err(e2s)?,
        (2 * n) as f64 * LN_2,
        1e-10,
    )?;
    Ok("N = 2".into())
}

fn check_spectrum(ctx: &Ctx) -> std::result::Result<String, String> {
    for n in 1..=2 {
        let gens = generators_1d(n).map_err(e2s)?;
        let spec = gens.hamiltonian_spectrum(&ctx.limits).map_err(e2s)?;
        let worst = spec
            .iter()
            .map(|e| (e - e.round()).abs())
            .fold(0.0, f64::max);
        if worst > 1e-9 {
            return Err(format!("N={n}: eigenvalue off an integer by {worst:e}"));
        }
        let ground = -((4 * n + 1) as f64);
        let degeneracy = spec.iter().filter(|e| (*e - ground).abs() < 1e-9).count();
        if degeneracy != 1 {
            return Err(format!("N={n}: ground-state degeneracy {degeneracy}"));
        }
    }
    Ok("N = 1, 2".into())
}

fn check_sensitivity(ctx: &Ctx) -> std::result::Result<String, String> {
    let p = Problem::chain_1d(1, 0, None).map_err(e2s)?;
    let rows = sensitivity_scan(&p, None, false, MethodChoice::Auto, &ctx.reg, &ctx.limits)
        .map_err(e2s)?;
    for r in &rows {
        if r.value.abs() > 1e-9 {
            return Err(format!("moving site {} out leaves J = {}", r.site, r.value));
        }
    }
    Ok(format!("{} moves", rows.len()))
}

fn check_unitary_invariance(ctx: &Ctx) -> std::result::Result<String, String> {
    let p = Problem::chain_1d(1, 0, None).map_err(e2s)?;
    let circuit = p.circuit.clone().expect("chain has a circuit");
    let psi0 = circuit.prepare(&ctx.limits).map_err(e2s)?;
    let abc = p.regions.abc();
    let j0 = crate::dense::modcom_dense(
        &psi0.reduced_density(&abc, &ctx.limits).map_err(e2s)?,
        &p.regions,
        &ctx.reg,
        &ctx.limits,
    )
    .map_err(e2s)?
    .value;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for region in Region::ALL {
        let sites: Vec<usize> = p.regions.set(region).iter().take(2).collect();
        let u = random_unitary(sites.len(), &mut rng);
        let mut psi = psi0.clone();
        match sites.as_slice() {
            [a] => psi.apply_1q(*a, &u),
            [a, b] => psi.apply_2q(*a, *b, &u),
            _ => continue,
        }
        let j = crate::dense::modcom_dense(
            &psi.reduced_density(&abc, &ctx.limits).map_err(e2s)?,
            &p.regions,
            &ctx.reg,
            &ctx.limits,
        )
        .map_err(e2s)?
        .value;
        close(&format!("unitary on {region}"), j, j0, 1e-9)?;
    }
    Ok("one random unitary per region".into())
}

fn check_lattice(ctx: &Ctx) -> std::result::Result<String, String> {
    let cfg = fig3_like(1, 0, 1, false).map_err(e2s)?;
    let p = Problem::honeycomb(&cfg).map_err(e2s)?;
    let s = p.modcom_symbolic(None).map_err(e2s)?;
    close("reduced chains", s.value, symmetric_value(), 1e-12)?;
    let d = p.modcom_dense(&ctx.reg, &ctx.limits).map_err(e2s)?;
    close("full lattice", d.value, s.value, 1e-10)?;
    Ok(format!("J = {:.12}", d.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes() {
        let report = run_verification(14, Faults::default());
        for c in &report.checks {
            assert_eq!(c.status, Status::Passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn sign_fault_is_caught_by_name() {
        let report = run_verification(
            5,
            Faults {
                flip_closed_sign: true,
            },
        );
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["modcom_closed vs dense"]);
        assert!(!report.passed());
    }

    #[test]
    fn reduced_scope_skips_large_checks() {
        let report = run_verification(2, Faults::default());
        assert!(report.passed());
        assert!(report.checks.iter().any(|c| c.status == Status::Skipped));
        assert!(report.checks.iter().any(|c| c.status == Status::Passed));
    }
}
