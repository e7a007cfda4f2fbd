//! Proptest strategies shared by the unit tests.

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use crate::algebra::{AnticommutingDensity, PauliSum};
use crate::dense::{DenseLimits, DenseOperator};
use crate::pauli::{BitSet, PauliString, Universe};

pub const N_SITES: usize = 3;

pub fn universe() -> Arc<Universe> {
    Universe::range(-1, N_SITES as i64 - 2)
}

pub fn bits(mask: u8) -> BitSet {
    BitSet::from_indices((0..N_SITES).filter(|k| mask >> k & 1 == 1))
}

pub fn pauli() -> impl Strategy<Value = PauliString> {
    (0u8..8, 0u8..8).prop_map(|(x, z)| PauliString::from_bits(bits(x), bits(z)))
}

pub fn dense(u: &Arc<Universe>, p: &PauliString) -> DenseOperator {
    DenseOperator::from_pauli(u.clone(), u.all(), p, &DenseLimits::default()).unwrap()
}

pub fn pauli_sum() -> impl Strategy<Value = PauliSum> {
    prop::collection::vec((pauli(), -1.0f64..1.0, -1.0f64..1.0), 0..6).prop_map(|terms| {
        let u = universe();
        let mut s = PauliSum::zero_on(&u);
        for (p, re, im) in terms {
            s.add_term(p, Complex64::new(re, im));
        }
        s
    })
}

/// Up to three mutually anticommuting strings with weights of norm below one.
pub fn anticommuting_density() -> impl Strategy<Value = AnticommutingDensity> {
    (
        0usize..3,
        prop::collection::vec(-1.0f64..1.0, 1..=3),
        0.0f64..0.999,
    )
        .prop_map(|(pick, raw, radius)| {
            let u = universe();
            let families = [
                ["X_-1", "Y_-1", "Z_-1 X_0"],
                ["X_-1 Z_0", "Y_-1 Z_0", "Z_-1"],
                ["X_0 X_1", "Z_0", "Y_0 X_1"],
            ];
            let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            let coeffs = raw
                .iter()
                .zip(families[pick])
                .map(|(a, s)| (u.parse(s).unwrap(), a / norm * radius))
                .collect();
            AnticommutingDensity::new(u.clone(), u.all(), coeffs).unwrap()
        })
}
