//! Entanglement-assisted invariance: phase and swap operations on a
//! system that are undone by operations solely on its environment.
//!
//! For any recorded-measurement state, a phase rotation of the system's
//! condition subspaces is undone by the opposite rotation on the
//! environment's records. A swap of two conditions is undone by the
//! corresponding environment swap exactly when the two branch amplitudes
//! have equal magnitude; the residual left otherwise is the norm of the
//! two-branch difference state.

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{
    apply_lifted, lift, CompositeSpace, HilbertError, LinearOperator, StateVector, Tolerances,
};
use crate::measurement::{decompose_branches, MeasurementError};
use crate::universe::{SystemSpec, UniverseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvarianceError {
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("state does not decompose into branches: {0}")]
    DecompositionFailed(#[from] MeasurementError),
    #[error("got {got} phases for {want} conditions")]
    PhaseCount { got: usize, want: usize },
    #[error("cannot swap condition `{0}` with itself")]
    DegeneratePair(String),
    #[error("conditions `{a}` (rank {rank_a}) and `{b}` (rank {rank_b}) span subspaces of different dimension")]
    RankMismatch {
        a: String,
        rank_a: usize,
        b: String,
        rank_b: usize,
    },
}

/// Phase rotation e^{iσ_α} on each condition subspace of one system.
#[derive(Debug, Clone)]
pub struct PhaseSpec<'a> {
    pub system: &'a SystemSpec,
    /// One phase per condition, aligned with `system.conditions()`
    /// (the absent condition first).
    pub sigmas: Vec<f64>,
}

/// Exchange of two condition subspaces of one system.
#[derive(Debug, Clone)]
pub struct SwapSpec<'a> {
    pub system: &'a SystemSpec,
    pub pair: (String, String),
}

/// Verdict of an envariance check.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvarianceCertificate {
    pub envariant: bool,
    /// ‖U_E U_S ψ − ψ‖ with the constructed counter-operation included.
    pub residual: f64,
    /// Description of the environment operation used to undo the system
    /// operation.
    pub counter_op: String,
    /// For swap checks: ||ψ_β| − |ψ_γ||, the quantity the decision is
    /// made on.
    pub magnitude_gap: Option<f64>,
}

fn check_phase_count(sys: &SystemSpec, sigmas: &[f64]) -> Result<(), EnvarianceError> {
    if sigmas.len() != sys.conditions().len() {
        return Err(EnvarianceError::PhaseCount {
            got: sigmas.len(),
            want: sys.conditions().len(),
        });
    }
    Ok(())
}

/// U = Σ_α e^{iσ_α} P^α on the system's local space.
fn local_phase_operator(sys: &SystemSpec, sigmas: &[f64]) -> LinearOperator {
    let mut acc = LinearOperator::zero(&sys.local_space());
    for (alpha, sigma) in sigmas.iter().enumerate() {
        let p = sys
            .local_projector(alpha)
            .scaled(Complex64::from_polar(1.0, *sigma));
        acc = acc.add(&p).expect("same local space");
    }
    acc
}

/// Exchange the β and γ condition subspaces via the canonical basis
/// pairing (partition order, or Gram–Schmidt order of the projector
/// columns), identity elsewhere. Self-inverse.
fn local_swap_operator(
    sys: &SystemSpec,
    beta: usize,
    gamma: usize,
) -> Result<LinearOperator, EnvarianceError> {
    let basis_of = |alpha: usize| -> Vec<ndarray::Array1<Complex64>> {
        match sys.rep() {
            crate::universe::ProjectorRep::Partition(cells) => {
                let dim = sys.local_dimension();
                cells[alpha]
                    .iter()
                    .map(|&ix| {
                        let mut v = ndarray::Array1::zeros(dim);
                        v[ix] = Complex64::new(1.0, 0.0);
                        v
                    })
                    .collect()
            }
            crate::universe::ProjectorRep::Explicit(mats) => {
                crate::hilbert::column_space_basis(&mats[alpha], 1e-7)
            }
        }
    };
    let bb = basis_of(beta);
    let bg = basis_of(gamma);
    if bb.len() != bg.len() {
        return Err(EnvarianceError::RankMismatch {
            a: sys.conditions()[beta].clone(),
            rank_a: bb.len(),
            b: sys.conditions()[gamma].clone(),
            rank_b: bg.len(),
        });
    }
    // I − P^β − P^γ plus the cross terms |b^γ_j⟩⟨b^β_j| + |b^β_j⟩⟨b^γ_j|.
    let identity = LinearOperator::identity(&sys.local_space());
    let mut acc = identity
        .sub(&sys.local_projector(beta))
        .and_then(|m| m.sub(&sys.local_projector(gamma)))
        .expect("same local space");
    let dim = sys.local_dimension();
    let mut cross = ndarray::Array2::zeros((dim, dim));
    for (vb, vg) in bb.iter().zip(bg.iter()) {
        for i in 0..dim {
            for j in 0..dim {
                cross[(i, j)] += vg[i] * vb[j].conj() + vb[i] * vg[j].conj();
            }
        }
    }
    acc = acc
        .add(&LinearOperator::new(sys.local_space(), cross).expect("square"))
        .expect("same local space");
    Ok(acc)
}

/// The phase unitary Σ_α e^{iσ_α} P^α lifted to `space` as a dense
/// operator. Requires a validated family (it is unitary exactly then).
pub fn phase_unitary(
    spec: &PhaseSpec<'_>,
    space: &CompositeSpace,
    tol: &Tolerances,
) -> Result<LinearOperator, EnvarianceError> {
    spec.system.require_valid(tol)?;
    check_phase_count(spec.system, &spec.sigmas)?;
    Ok(lift(&local_phase_operator(spec.system, &spec.sigmas), space)?)
}

/// The swap unitary for a condition pair lifted to `space` as a dense
/// operator. Requires a validated family and equal subspace ranks.
pub fn swap_unitary(
    spec: &SwapSpec<'_>,
    space: &CompositeSpace,
    tol: &Tolerances,
) -> Result<LinearOperator, EnvarianceError> {
    spec.system.require_valid(tol)?;
    let (b, g) = resolve_pair(spec.system, &spec.pair)?;
    Ok(lift(&local_swap_operator(spec.system, b, g)?, space)?)
}

fn resolve_pair(
    sys: &SystemSpec,
    pair: &(String, String),
) -> Result<(usize, usize), EnvarianceError> {
    if pair.0 == pair.1 {
        return Err(EnvarianceError::DegeneratePair(pair.0.clone()));
    }
    let b = sys.condition_index(&pair.0)?;
    let g = sys.condition_index(&pair.1)?;
    Ok((b, g))
}

/// Apply the phase unitary of `sys` to a universe state without
/// materializing the lifted matrix.
pub fn apply_phase(
    sys: &SystemSpec,
    psi: &StateVector,
    sigmas: &[f64],
) -> Result<StateVector, EnvarianceError> {
    check_phase_count(sys, sigmas)?;
    Ok(apply_lifted(&local_phase_operator(sys, sigmas), psi)?)
}

/// Apply the swap unitary of `sys` to a universe state without
/// materializing the lifted matrix.
pub fn apply_swap(
    sys: &SystemSpec,
    psi: &StateVector,
    pair: &(String, String),
) -> Result<StateVector, EnvarianceError> {
    let (b, g) = resolve_pair(sys, pair)?;
    Ok(apply_lifted(&local_swap_operator(sys, b, g)?, psi)?)
}

/// Check that a phase rotation of the system's branches is undone by the
/// opposite rotation on the environment.
///
/// Holds identically for every recorded-measurement state, whatever the
/// phases: the state must decompose into branches between `env` and
/// `sys`, and the certificate then carries the (rounding-level) residual
/// of U_E(−σ) U_S(σ) ψ against ψ.
pub fn check_phase_envariance(
    psi: &StateVector,
    sys: &SystemSpec,
    env: &SystemSpec,
    sigmas: &[f64],
    tol: &Tolerances,
) -> Result<EnvarianceCertificate, EnvarianceError> {
    sys.require_valid(tol)?;
    env.require_valid(tol)?;
    check_phase_count(sys, sigmas)?;
    decompose_branches(psi, env, sys, tol)?;
    let rotated = apply_phase(sys, psi, sigmas)?;
    let negated: Vec<f64> = sigmas.iter().map(|s| -s).collect();
    let undone = apply_phase(env, &rotated, &negated)?;
    let residual = undone.distance(psi)?;
    Ok(EnvarianceCertificate {
        envariant: residual <= tol.env,
        residual,
        counter_op: format!("phase(-σ) on {}", env.name()),
        magnitude_gap: None,
    })
}

/// Check that swapping two conditions of the system is undone by the
/// matching swap on the environment (composed with a compensating phase
/// when the branch phases differ).
///
/// Envariant exactly when the two branch amplitudes have equal magnitude
/// within the envariance tolerance; the residual is the norm of the
/// remaining difference state, √2·||ψ_β|−|ψ_γ|| for a phase-compensated
/// pair.
pub fn check_swap_envariance(
    psi: &StateVector,
    sys: &SystemSpec,
    env: &SystemSpec,
    pair: &(String, String),
    tol: &Tolerances,
) -> Result<EnvarianceCertificate, EnvarianceError> {
    sys.require_valid(tol)?;
    env.require_valid(tol)?;
    let (b_ix, g_ix) = resolve_pair(sys, pair)?;
    let decomposition = decompose_branches(psi, env, sys, tol)?;
    let zero = Complex64::new(0.0, 0.0);
    let amp_b = decomposition.amplitude_of(&pair.0).unwrap_or(zero);
    let amp_g = decomposition.amplitude_of(&pair.1).unwrap_or(zero);
    let gap = (amp_b.norm() - amp_g.norm()).abs();

    // Compensating phase: after the two swaps, branch β carries ψ_γ and
    // branch γ carries ψ_β; a phase twist on the environment records
    // restores the original phases (it cannot repair magnitudes).
    let delta = if amp_b.norm() >= tol.branch && amp_g.norm() >= tol.branch {
        amp_b.arg() - amp_g.arg()
    } else {
        0.0
    };
    let mut sigmas = vec![0.0; sys.conditions().len()];
    sigmas[b_ix] = delta;
    sigmas[g_ix] = -delta;

    let swapped = apply_swap(sys, psi, pair)?;
    let counter_swapped = apply_swap(env, &swapped, pair)?;
    let compensated = apply_phase(env, &counter_swapped, &sigmas)?;
    let residual = compensated.distance(psi)?;

    let counter_op = if delta == 0.0 {
        format!("swap({},{}) on {}", pair.0, pair.1, env.name())
    } else {
        format!(
            "swap({},{}) ∘ phase(±{:.6}) on {}",
            pair.0,
            pair.1,
            delta,
            env.name()
        )
    };
    Ok(EnvarianceCertificate {
        envariant: gap <= tol.env,
        residual,
        counter_op,
        magnitude_gap: Some(gap),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::FactorSpace;
    use crate::measurement::{build_measurement_state, MeasurementScenario, ScenarioOptions};
    use crate::testutil::{random_amplitudes, rng, uniform};
    use crate::universe::{SystemSpec, ABSENT_CONDITION};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn scenario(amps: &[Complex64], apparatus: bool) -> MeasurementScenario {
        MeasurementScenario::new(
            &labels(amps.len()),
            amps,
            ScenarioOptions {
                apparatus,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_phases_give_identity() {
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), c(s, 0.0)], false);
        let spec = PhaseSpec {
            system: sc.system(),
            sigmas: vec![0.0; 3],
        };
        let u = phase_unitary(&spec, sc.space(), &Tolerances::default()).unwrap();
        let id = LinearOperator::identity(sc.space());
        assert_abs_diff_eq!(u.frobenius_distance(&id).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pi_phase_gives_diagonal_sign_flip() {
        // σ = (0, π) over the interesting conditions of a qubit family
        // acts as diag(1, −1) on the system factor.
        let sys = SystemSpec::pointer_basis(
            "S",
            FactorSpace::new("q", 2).unwrap(),
            &["0".to_string(), "1".to_string()],
        )
        .unwrap();
        let space = CompositeSpace::new(vec![FactorSpace::new("q", 2).unwrap()]).unwrap();
        let spec = PhaseSpec {
            system: &sys,
            sigmas: vec![0.0, 0.0, std::f64::consts::PI],
        };
        let u = phase_unitary(&spec, &space, &Tolerances::default()).unwrap();
        assert_abs_diff_eq!(u.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.matrix()[(1, 1)].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn opposite_phases_compose_to_identity() {
        let mut r = rng(201);
        let sc = scenario(&random_amplitudes(3, 1e-3, &mut r), false);
        let sigmas: Vec<f64> = (0..4).map(|_| uniform(&mut r) * 6.0 - 3.0).collect();
        let tol = Tolerances::default();
        let u = phase_unitary(
            &PhaseSpec {
                system: sc.system(),
                sigmas: sigmas.clone(),
            },
            sc.space(),
            &tol,
        )
        .unwrap();
        let v = phase_unitary(
            &PhaseSpec {
                system: sc.system(),
                sigmas: sigmas.iter().map(|s| -s).collect(),
            },
            sc.space(),
            &tol,
        )
        .unwrap();
        let prod = u.compose(&v).unwrap();
        let id = LinearOperator::identity(sc.space());
        assert!(prod.frobenius_distance(&id).unwrap() < 1e-12);
        assert!(u.is_unitary(1e-10));
    }

    #[test]
    fn swap_is_self_inverse_and_moves_basis_states() {
        let sc = scenario(&[c(0.6, 0.0), c(0.8, 0.0)], false);
        let tol = Tolerances::default();
        let spec = SwapSpec {
            system: sc.system(),
            pair: ("1".to_string(), "2".to_string()),
        };
        let u = swap_unitary(&spec, sc.space(), &tol).unwrap();
        assert!(u.is_unitary(1e-10));
        let twice = u.compose(&u).unwrap();
        let id = LinearOperator::identity(sc.space());
        assert_abs_diff_eq!(twice.frobenius_distance(&id).unwrap(), 0.0, epsilon = 1e-12);

        // |s^1⟩ → |s^2⟩ while the environment digit stays put.
        let s_beta = StateVector::basis_state(sc.space().clone(), &[0, 0]).unwrap();
        let s_gamma = StateVector::basis_state(sc.space().clone(), &[0, 1]).unwrap();
        let moved = u.apply(&s_beta).unwrap();
        assert_abs_diff_eq!(moved.distance(&s_gamma).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn swap_commutes_with_other_systems_projectors() {
        let sc = scenario(&[c(0.6, 0.0), c(0.8, 0.0)], false);
        let tol = Tolerances::default();
        let u = swap_unitary(
            &SwapSpec {
                system: sc.system(),
                pair: ("1".to_string(), "2".to_string()),
            },
            sc.space(),
            &tol,
        )
        .unwrap();
        for alpha in 0..sc.environment().conditions().len() {
            let p = sc.environment().projector(sc.space(), alpha).unwrap();
            let up = u.compose(&p).unwrap();
            let pu = p.compose(&u).unwrap();
            assert_abs_diff_eq!(up.frobenius_distance(&pu).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn explicit_rep_swap_matches_partition_swap() {
        // Same family in both representations must produce the same
        // unitary (the Gram–Schmidt pairing reduces to the partition
        // pairing for diagonal projectors).
        let sc = scenario(&[c(0.6, 0.0), c(0.8, 0.0)], false);
        let sys_p = sc.system();
        let mats: Vec<ndarray::Array2<Complex64>> = (0..sys_p.conditions().len())
            .map(|a| sys_p.local_projector(a).matrix().clone())
            .collect();
        let sys_e = SystemSpec::from_projectors(
            "S",
            sys_p.factors().to_vec(),
            sys_p.conditions().to_vec(),
            mats,
        )
        .unwrap();
        let tol = Tolerances::default();
        let pair = ("1".to_string(), "2".to_string());
        let up = swap_unitary(
            &SwapSpec {
                system: sys_p,
                pair: pair.clone(),
            },
            sc.space(),
            &tol,
        )
        .unwrap();
        let ue = swap_unitary(
            &SwapSpec {
                system: &sys_e,
                pair,
            },
            sc.space(),
            &tol,
        )
        .unwrap();
        assert_abs_diff_eq!(up.frobenius_distance(&ue).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn structural_application_matches_dense_operators() {
        let mut r = rng(207);
        let sc = scenario(&random_amplitudes(3, 1e-3, &mut r), true);
        let psi = build_measurement_state(&sc).unwrap();
        let tol = Tolerances::default();
        let sigmas: Vec<f64> = (0..4).map(|_| uniform(&mut r) * 6.0 - 3.0).collect();
        let dense = phase_unitary(
            &PhaseSpec {
                system: sc.system(),
                sigmas: sigmas.clone(),
            },
            sc.space(),
            &tol,
        )
        .unwrap()
        .apply(&psi)
        .unwrap();
        let structural = apply_phase(sc.system(), &psi, &sigmas).unwrap();
        assert!(dense.distance(&structural).unwrap() < 1e-12);

        let pair = ("1".to_string(), "3".to_string());
        let dense = swap_unitary(
            &SwapSpec {
                system: sc.system(),
                pair: pair.clone(),
            },
            sc.space(),
            &tol,
        )
        .unwrap()
        .apply(&psi)
        .unwrap();
        let structural = apply_swap(sc.system(), &psi, &pair).unwrap();
        assert!(dense.distance(&structural).unwrap() < 1e-12);
    }

    #[test]
    fn phase_envariance_holds_for_branch_states() {
        let mut r = rng(211);
        let tol = Tolerances::default();
        for trial in 0..25 {
            let k = 2 + (trial % 3);
            let sc = scenario(&random_amplitudes(k, 1e-3, &mut r), false);
            let psi = build_measurement_state(&sc).unwrap();
            let sigmas: Vec<f64> = (0..=k).map(|_| uniform(&mut r) * 6.0 - 3.0).collect();
            let cert =
                check_phase_envariance(&psi, sc.system(), sc.environment(), &sigmas, &tol).unwrap();
            assert!(cert.envariant, "residual {}", cert.residual);
            assert!(cert.residual < 1e-10);
        }
    }

    #[test]
    fn zero_phases_trivially_envariant() {
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), c(s, 0.0)], false);
        let psi = build_measurement_state(&sc).unwrap();
        let cert = check_phase_envariance(
            &psi,
            sc.system(),
            sc.environment(),
            &[0.0, 0.0, 0.0],
            &Tolerances::default(),
        )
        .unwrap();
        assert!(cert.envariant);
        assert_abs_diff_eq!(cert.residual, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn product_state_breaks_the_phase_identity() {
        // Counterexample without correlation: |e¹⟩ ⊗ (|s¹⟩+|s²⟩)/√2.
        // U_E(−σ) U_S(σ) shifts the relative phase of the s-branches and
        // the environment twist cannot restore it.
        let sc = scenario(&[c(1.0, 0.0), c(0.0, 0.0)], false);
        let s = 1.0 / 2.0_f64.sqrt();
        let mut amps = ndarray::Array1::zeros(4);
        amps[0] = c(s, 0.0);
        amps[1] = c(s, 0.0);
        let psi = StateVector::new(sc.space().clone(), amps).unwrap();
        let sigmas = [0.0, 0.0, 1.3];
        let rotated = apply_phase(sc.system(), &psi, &sigmas).unwrap();
        let negated: Vec<f64> = sigmas.iter().map(|x| -x).collect();
        let undone = apply_phase(sc.environment(), &rotated, &negated).unwrap();
        let residual = undone.distance(&psi).unwrap();
        assert!(residual > 0.5, "expected a visible residual, got {residual}");

        // The certificate path refuses such states up front.
        assert!(matches!(
            check_phase_envariance(
                &psi,
                sc.system(),
                sc.environment(),
                &sigmas,
                &Tolerances::default()
            ),
            Err(EnvarianceError::DecompositionFailed(_))
        ));
    }

    #[test]
    fn equal_magnitudes_are_swap_envariant() {
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), c(s, 0.0)], false);
        let psi = build_measurement_state(&sc).unwrap();
        let cert = check_swap_envariance(
            &psi,
            sc.system(),
            sc.environment(),
            &("1".to_string(), "2".to_string()),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(cert.envariant);
        assert!(cert.residual < 1e-10);
    }

    #[test]
    fn equal_magnitudes_with_different_phases_are_envariant() {
        // |ψ_β| = |ψ_γ| but arg differs: the compensating phase on the
        // environment finishes the undo.
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), Complex64::from_polar(s, 1.1)], false);
        let psi = build_measurement_state(&sc).unwrap();
        let cert = check_swap_envariance(
            &psi,
            sc.system(),
            sc.environment(),
            &("1".to_string(), "2".to_string()),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(cert.envariant, "residual {}", cert.residual);
        assert!(cert.residual < 1e-10);
        assert!(cert.counter_op.contains("phase"));
    }

    #[test]
    fn unequal_magnitudes_leave_the_difference_state() {
        let a1 = (1.0f64 / 3.0).sqrt();
        let a2 = (2.0f64 / 3.0).sqrt();
        let sc = scenario(&[c(a1, 0.0), c(a2, 0.0)], false);
        let psi = build_measurement_state(&sc).unwrap();
        let cert = check_swap_envariance(
            &psi,
            sc.system(),
            sc.environment(),
            &("1".to_string(), "2".to_string()),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(!cert.envariant);
        // ψ' − ψ = (ψ_β − ψ_γ)(|e²s²⟩ − |e¹s¹⟩): norm √2·|ψ_β − ψ_γ|.
        let expected = 2.0_f64.sqrt() * (a1 - a2).abs();
        assert_abs_diff_eq!(cert.residual, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(
            cert.magnitude_gap.unwrap(),
            (a1 - a2).abs(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn apparatus_scenarios_need_the_composite_record_side() {
        // With an apparatus factor, the counter-swap must act on the
        // full record side (E and A together); E alone leaves the
        // apparatus record attached to the wrong branch.
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), c(s, 0.0)], true);
        let psi = build_measurement_state(&sc).unwrap();
        let tol = Tolerances::default();
        let pair = ("1".to_string(), "2".to_string());

        let joint = check_swap_envariance(&psi, sc.system(), &sc.record_side(), &pair, &tol)
            .unwrap();
        assert!(joint.envariant, "residual {}", joint.residual);
        assert!(joint.residual < 1e-10);

        let env_only =
            check_swap_envariance(&psi, sc.system(), sc.environment(), &pair, &tol).unwrap();
        assert!(
            env_only.residual > 1.0,
            "the stranded apparatus record should leave a macroscopic residual, got {}",
            env_only.residual
        );
    }

    #[test]
    fn unequal_three_party_swap_keeps_the_closed_form_residual() {
        let a1 = (1.0f64 / 3.0).sqrt();
        let a2 = (2.0f64 / 3.0).sqrt();
        let sc = scenario(&[c(a1, 0.0), c(a2, 0.0)], true);
        let psi = build_measurement_state(&sc).unwrap();
        let cert = check_swap_envariance(
            &psi,
            sc.system(),
            &sc.record_side(),
            &("1".to_string(), "2".to_string()),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(!cert.envariant);
        assert_abs_diff_eq!(
            cert.residual,
            2.0_f64.sqrt() * (a1 - a2).abs(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn swap_with_self_is_rejected() {
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), c(s, 0.0)], false);
        let psi = build_measurement_state(&sc).unwrap();
        assert!(matches!(
            check_swap_envariance(
                &psi,
                sc.system(),
                sc.environment(),
                &("1".to_string(), "1".to_string()),
                &Tolerances::default()
            ),
            Err(EnvarianceError::DegeneratePair(_))
        ));
    }

    #[test]
    fn rank_mismatch_is_rejected() {
        // Absent has rank 0 here, condition "1" rank 1.
        let s = 1.0 / 2.0_f64.sqrt();
        let sc = scenario(&[c(s, 0.0), c(s, 0.0)], false);
        let psi = build_measurement_state(&sc).unwrap();
        assert!(matches!(
            check_swap_envariance(
                &psi,
                sc.system(),
                sc.environment(),
                &(ABSENT_CONDITION.to_string(), "1".to_string()),
                &Tolerances::default()
            ),
            Err(EnvarianceError::RankMismatch { .. })
        ));
    }

    #[test]
    fn decision_flips_exactly_at_the_envariance_tolerance() {
        // Magnitudes 0.5 and 0.5+g with a third branch soaking up the
        // normalization; the verdict must flip at g = env_tol.
        let tol = Tolerances::default();
        for (gap, expect) in [
            (0.0, true),
            (5.0e-9, true),
            (9.9e-9, true),
            (1.02e-8, false),
            (1.0e-6, false),
        ] {
            let b = 0.5_f64;
            let g = 0.5 + gap;
            let z = (1.0 - b * b - g * g).sqrt();
            let sc = scenario(&[c(b, 0.0), c(g, 0.0), c(z, 0.0)], false);
            let psi = build_measurement_state(&sc).unwrap();
            let cert = check_swap_envariance(
                &psi,
                sc.system(),
                sc.environment(),
                &("1".to_string(), "2".to_string()),
                &tol,
            )
            .unwrap();
            assert_eq!(
                cert.envariant, expect,
                "gap {gap:e}: got {}, want {expect}",
                cert.envariant
            );
        }
    }
}
