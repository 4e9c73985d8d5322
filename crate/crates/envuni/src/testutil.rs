//! Shared helpers for unit tests: seeded random states and unitaries.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_core::{Rng, SeedableRng};

use crate::hilbert::{column_space_basis, CompositeSpace, LinearOperator, StateVector};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Uniform f64 in [0, 1) from the top 53 bits of one u64 draw.
pub fn uniform(r: &mut ChaCha12Rng) -> f64 {
    (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn random_complex(r: &mut ChaCha12Rng) -> Complex64 {
    Complex64::new(uniform(r) * 2.0 - 1.0, uniform(r) * 2.0 - 1.0)
}

/// Random normalized state with complex amplitudes.
pub fn random_state(space: &CompositeSpace, r: &mut ChaCha12Rng) -> StateVector {
    let amps: Array1<Complex64> = (0..space.total_dimension())
        .map(|_| random_complex(r))
        .collect();
    StateVector::new(space.clone(), amps)
        .unwrap()
        .normalized()
        .unwrap()
}

/// Random unitary via Gram–Schmidt of a random complex matrix.
pub fn random_unitary(space: &CompositeSpace, r: &mut ChaCha12Rng) -> LinearOperator {
    let n = space.total_dimension();
    loop {
        let m = Array2::from_shape_fn((n, n), |_| random_complex(r));
        let basis = column_space_basis(&m, 1e-6);
        if basis.len() < n {
            continue; // singular draw, retry
        }
        let mut u = Array2::zeros((n, n));
        for (j, b) in basis.iter().enumerate() {
            for i in 0..n {
                u[(i, j)] = b[i];
            }
        }
        return LinearOperator::new(space.clone(), u).unwrap();
    }
}

/// Random complex amplitudes of unit 2-norm, none below `floor` in
/// magnitude.
pub fn random_amplitudes(k: usize, floor: f64, r: &mut ChaCha12Rng) -> Vec<Complex64> {
    loop {
        let amps: Vec<Complex64> = (0..k).map(|_| random_complex(r)).collect();
        let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        let amps: Vec<Complex64> = amps.iter().map(|c| c / norm).collect();
        if amps.iter().all(|c| c.norm() >= floor) {
            return amps;
        }
    }
}
