//! Born probabilities from counting: fine-grain rational branch weights
//! into equal-coefficient sub-branches, then count.
//!
//! Given branch weights m_α/M, an ancilla subdivides the environment's
//! record of condition α into m_α sub-records. The resulting state has M
//! branches, every coefficient exactly 1/√M, so swap envariance makes all
//! of them equally likely; counting per coarse condition returns m_α/M —
//! the Born weight — in exact integer arithmetic. Irrational weights are
//! reached by rational approximation with an explicit error bound.

use ndarray::Array1;
use num_complex::Complex64;
use num_rational::Ratio;
use thiserror::Error;

use crate::hilbert::{CompositeSpace, FactorSpace, HilbertError, StateVector, Tolerances};
use crate::measurement::{
    build_measurement_state, decompose_branches, BranchDecomposition, MeasurementError,
    MeasurementScenario,
};
use crate::universe::{ProjectorRep, SystemSpec, UniverseError, ABSENT_CONDITION};

/// An exact probability m/M.
pub type Probability = Ratio<u64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BornError {
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("weights need at least one condition")]
    EmptyWeights,
    #[error("count for condition {0} is zero; retained conditions need m >= 1")]
    ZeroCount(usize),
    #[error("got {got} counts for {want} scenario conditions")]
    WeightCount { got: usize, want: usize },
    #[error(
        "condition `{condition}`: |ψ|² = {got:.12} does not match m/M = {want:.12} within {tol:.1e}"
    )]
    WeightMismatch {
        condition: String,
        got: f64,
        want: f64,
        tol: f64,
    },
    #[error("absent condition carries amplitude {0:.3e}; cannot fine-grain it")]
    AbsentAmplitude(f64),
    #[error("fine-grained coefficient at basis index {index} has magnitude {got:.12e}, expected {want:.12e}")]
    UnequalCoefficients { index: usize, got: f64, want: f64 },
    #[error("amplitudes have squared norm {0:.12}, expected 1")]
    NotNormalized(f64),
    #[error("all amplitudes are zero")]
    Degenerate,
    #[error("max_denominator must be at least 1")]
    ZeroDenominator,
}

/// Exact integer branch weights {m_α}, M = Σ m_α, representing squared
/// amplitudes m_α/M. No floating point enters the counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalWeights {
    counts: Vec<u64>,
    total: u64,
}

impl RationalWeights {
    pub fn new(counts: Vec<u64>) -> Result<Self, BornError> {
        if counts.is_empty() {
            return Err(BornError::EmptyWeights);
        }
        if let Some(pos) = counts.iter().position(|&m| m == 0) {
            return Err(BornError::ZeroCount(pos));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// √(m_α/M) for each condition: the scenario amplitudes these weights
    /// represent.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&m| (m as f64 / self.total as f64).sqrt())
            .collect()
    }

    /// Build the canonical measurement scenario carrying these weights
    /// (real nonnegative amplitudes, no apparatus factor).
    pub fn scenario(&self, conditions: &[String]) -> Result<MeasurementScenario, BornError> {
        let amps: Vec<Complex64> = self
            .amplitudes()
            .iter()
            .map(|a| Complex64::new(*a, 0.0))
            .collect();
        Ok(MeasurementScenario::new(
            conditions,
            &amps,
            crate::measurement::ScenarioOptions {
                apparatus: false,
                ..Default::default()
            },
        )?)
    }
}

/// prob_α = m_α / M in exact rational arithmetic; the sum is exactly 1.
pub fn born_probabilities(weights: &RationalWeights) -> Vec<Probability> {
    weights
        .counts
        .iter()
        .map(|&m| Ratio::new(m, weights.total))
        .collect()
}

/// One equal-weight sub-branch of the fine-grained state.
#[derive(Debug, Clone, PartialEq)]
pub struct FineBranch {
    /// Coarse condition label.
    pub condition: String,
    /// Sub-record index β = 1..m_α within the coarse condition.
    pub sub: u64,
    pub coefficient: Complex64,
}

/// The ancilla extension of a measurement scenario: M branches of equal
/// coefficient 1/√M over the factors s, e, c.
///
/// The environment factor is subdivided into one basis state per
/// sub-record; the ancilla C records the doubly-indexed condition (α,β).
/// `fine_system` is the composite (s,e) system whose fine conditions the
/// ancilla records; swaps of its condition pairs are undone on the
/// ancilla alone.
#[derive(Debug, Clone)]
pub struct FineGrainedState {
    /// Branch decomposition of the originating scenario state.
    pub base: BranchDecomposition,
    /// The equal-coefficient state over s ⊗ e ⊗ c.
    pub state: StateVector,
    /// Ancilla C on factor c: doubly-indexed fine conditions.
    pub ancilla: SystemSpec,
    /// Composite (s,e) system carrying the same fine condition labels.
    pub fine_system: SystemSpec,
    /// The coarse system S re-expressed in the fine universe.
    pub system: SystemSpec,
    /// Coarse environment records read off the subdivided e factor.
    pub environment: SystemSpec,
    pub branches: Vec<FineBranch>,
    /// M, the number of fine branches.
    pub total: u64,
}

/// Label of the fine condition (α,β), β 1-based.
fn fine_label(condition: &str, beta: u64) -> String {
    format!("{condition}.{beta}")
}

/// Subdivide a scenario's branches into M equal-coefficient sub-branches
/// according to the given weights.
///
/// The scenario's squared amplitudes must match m_α/M within the
/// approximation tolerance; the fine state is constructed in the
/// canonical gauge (real positive coefficients).
pub fn fine_grain(
    weights: &RationalWeights,
    scenario: &MeasurementScenario,
    tol: &Tolerances,
    dim_cap: usize,
) -> Result<FineGrainedState, BornError> {
    let interesting = scenario.system().interesting_conditions();
    if weights.counts.len() != interesting.len() {
        return Err(BornError::WeightCount {
            got: weights.counts.len(),
            want: interesting.len(),
        });
    }
    let absent_amp = scenario.amplitudes()[0].norm();
    if absent_amp >= tol.branch {
        return Err(BornError::AbsentAmplitude(absent_amp));
    }
    let m_total = weights.total as f64;
    for ((cond, amp), &m) in interesting
        .iter()
        .zip(scenario.interesting_amplitudes())
        .zip(weights.counts())
    {
        let got = amp.norm_sqr();
        let want = m as f64 / m_total;
        if (got - want).abs() > tol.approx {
            return Err(BornError::WeightMismatch {
                condition: cond.clone(),
                got,
                want,
                tol: tol.approx,
            });
        }
    }

    let psi = build_measurement_state(scenario)?;
    let base = decompose_branches(&psi, scenario.environment(), scenario.system(), tol)?;

    let m_count = weights.total as usize;
    let s_dim = scenario.system().local_dimension();
    let fine_space = CompositeSpace::with_dim_cap(
        vec![
            FactorSpace::new("s", s_dim).expect("dim >= 1"),
            FactorSpace::new("e", m_count).expect("M >= 1"),
            FactorSpace::new("c", m_count).expect("M >= 1"),
        ],
        dim_cap,
    )?;

    // Representative s-digit per coarse condition (the pointer basis
    // state the scenario embeds that condition into).
    let s_rep: Vec<usize> = match scenario.system().rep() {
        ProjectorRep::Partition(cells) => cells
            .iter()
            .skip(1)
            .map(|cell| cell.first().copied().expect("interesting cells nonempty"))
            .collect(),
        ProjectorRep::Explicit(_) => unreachable!("scenario systems are partition-backed"),
    };

    // Fine index J runs over all (α,β); coarse_of[J] is α's position
    // among the interesting conditions.
    let mut coarse_of: Vec<usize> = Vec::with_capacity(m_count);
    let mut fine_conditions = vec![ABSENT_CONDITION.to_string()];
    let mut branches = Vec::with_capacity(m_count);
    let coefficient = Complex64::new(1.0 / (weights.total as f64).sqrt(), 0.0);
    for (alpha, (&m, cond)) in weights.counts().iter().zip(interesting).enumerate() {
        for beta in 1..=m {
            coarse_of.push(alpha);
            fine_conditions.push(fine_label(cond, beta));
            branches.push(FineBranch {
                condition: cond.clone(),
                sub: beta,
                coefficient,
            });
        }
    }

    let mut amplitudes = Array1::zeros(fine_space.total_dimension());
    for (j, &alpha) in coarse_of.iter().enumerate() {
        amplitudes[fine_space.index_of(&[s_rep[alpha], j, j])] = coefficient;
    }
    let state = StateVector::new(fine_space, amplitudes)?;

    // Ancilla C: one basis state of the c factor per fine condition.
    let mut c_cells = vec![Vec::new()];
    c_cells.extend((0..m_count).map(|j| vec![j]));
    let ancilla = SystemSpec::from_partition(
        "C",
        vec![FactorSpace::new("c", m_count).expect("M >= 1")],
        fine_conditions.clone(),
        c_cells,
    )?;

    // Composite (s,e) system: fine condition (α,β) owns the single local
    // pair (s_rep(α), J); everything inconsistent belongs to the absent
    // condition, which completes the family.
    let se_local_dim = s_dim * m_count;
    let mut owned = vec![false; se_local_dim];
    let mut se_cells: Vec<Vec<usize>> = vec![Vec::new()];
    for (j, &alpha) in coarse_of.iter().enumerate() {
        let local = s_rep[alpha] * m_count + j;
        owned[local] = true;
        se_cells.push(vec![local]);
    }
    se_cells[0] = (0..se_local_dim).filter(|&l| !owned[l]).collect();
    let fine_system = SystemSpec::from_partition(
        "SE",
        vec![
            FactorSpace::new("s", s_dim).expect("dim >= 1"),
            FactorSpace::new("e", m_count).expect("M >= 1"),
        ],
        fine_conditions,
        se_cells,
    )?;

    // Coarse environment records: condition α owns the m_α sub-records.
    let mut e_cells: Vec<Vec<usize>> = vec![Vec::new(); scenario.conditions().len()];
    for (j, &alpha) in coarse_of.iter().enumerate() {
        e_cells[alpha + 1].push(j);
    }
    let environment = SystemSpec::from_partition(
        "E",
        vec![FactorSpace::new("e", m_count).expect("M >= 1")],
        scenario.conditions().to_vec(),
        e_cells,
    )?;

    Ok(FineGrainedState {
        base,
        state,
        ancilla,
        fine_system,
        system: scenario.system().clone(),
        environment,
        branches,
        total: weights.total,
    })
}

/// Count fine branches per coarse condition, reading only the state.
///
/// Scans the amplitudes: every entry above the branch tolerance must have
/// magnitude 1/√M (with M the number of such entries), else the
/// coefficients are not all equal and the error reports the offender.
/// Assigns 1/M to each and sums per coarse condition in exact rational
/// arithmetic; the result equals [`born_probabilities`] exactly.
pub fn counting_oracle(
    fine: &FineGrainedState,
    tol: &Tolerances,
) -> Result<Vec<Probability>, BornError> {
    let state = &fine.state;
    let nonzero: Vec<usize> = (0..state.space().total_dimension())
        .filter(|&i| state.amplitudes()[i].norm() > tol.branch)
        .collect();
    let m = nonzero.len() as u64;
    if m == 0 {
        return Err(BornError::Degenerate);
    }
    let want = 1.0 / (m as f64).sqrt();
    for &i in &nonzero {
        let got = state.amplitudes()[i].norm();
        if (got - want).abs() > tol.op {
            return Err(BornError::UnequalCoefficients {
                index: i,
                got,
                want,
            });
        }
    }
    // Coarse condition via the s digit of each occupied basis index.
    let positions = fine.system.factor_positions(state.space())?;
    let cond_map = fine
        .system
        .local_condition_map()
        .expect("scenario systems are partition-backed");
    let k = fine.system.interesting_conditions().len();
    let mut counts = vec![0u64; k];
    for &i in &nonzero {
        let local = fine.system.local_index(state.space(), &positions, i);
        let alpha = cond_map[local].expect("occupied s digit owned by a condition");
        // alpha indexes the full condition list; 0 is absent.
        counts[alpha - 1] += 1;
    }
    Ok(counts.iter().map(|&n| Ratio::new(n, m)).collect())
}

/// Result of approximating squared amplitudes by rational weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalApproximation {
    pub weights: RationalWeights,
    /// Original indices of the conditions retained in `weights`.
    pub retained: Vec<usize>,
    /// Original indices whose best count was zero (dropped with
    /// a warning by callers; they have no fine-grained states).
    pub dropped: Vec<usize>,
    /// max_α |m_α/M − |ψ_α|²| at the chosen denominator.
    pub max_error: f64,
}

/// Best rational weights m/M with M ≤ max_denominator minimizing the
/// worst per-condition error against |ψ_α|².
///
/// For each M the optimal counts are the floor assignment with the
/// deficit distributed to the largest remainders (largest-remainder
/// rounding, optimal for the max-error objective at fixed M); the scan
/// over M keeps the smallest denominator among ties. The reported error
/// is at most 1/max_denominator.
pub fn rational_approximation(
    amplitudes: &[f64],
    max_denominator: u64,
    tol: &Tolerances,
) -> Result<RationalApproximation, BornError> {
    if max_denominator == 0 {
        return Err(BornError::ZeroDenominator);
    }
    if amplitudes.is_empty() || amplitudes.iter().all(|a| a.abs() < 1e-12) {
        return Err(BornError::Degenerate);
    }
    let probs: Vec<f64> = amplitudes.iter().map(|a| a * a).collect();
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > tol.approx {
        return Err(BornError::NotNormalized(sum));
    }

    let k = probs.len();
    let mut best: Option<(f64, Vec<u64>)> = None;
    let mut counts = vec![0u64; k];
    let mut rems: Vec<(usize, f64)> = vec![(0, 0.0); k];
    for m_total in 1..=max_denominator {
        let mf = m_total as f64;
        let mut assigned: i64 = 0;
        for (i, &p) in probs.iter().enumerate() {
            let scaled = p * mf;
            let floor = scaled.floor();
            counts[i] = floor as u64;
            rems[i] = (i, scaled - floor);
            assigned += floor as i64;
        }
        let mut deficit = m_total as i64 - assigned;
        if deficit > 0 {
            rems.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("remainders are finite"));
            for &(i, _) in rems.iter().take(deficit as usize) {
                counts[i] += 1;
            }
        } else if deficit < 0 {
            // Float drift near Σp ≈ 1 can overshoot by one; shave the
            // smallest remainders.
            rems.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("remainders are finite"));
            for &(i, _) in rems.iter() {
                if deficit == 0 {
                    break;
                }
                if counts[i] > 0 {
                    counts[i] -= 1;
                    deficit += 1;
                }
            }
        }
        let err = probs
            .iter()
            .zip(&counts)
            .map(|(&p, &m)| (m as f64 / mf - p).abs())
            .fold(0.0f64, f64::max);
        if best.as_ref().is_none_or(|(b, _)| err < *b) {
            best = Some((err, counts.clone()));
        }
    }
    let (max_error, best_counts) = best.expect("at least one denominator scanned");

    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut kept_counts = Vec::new();
    for (i, &m) in best_counts.iter().enumerate() {
        if m == 0 {
            dropped.push(i);
        } else {
            retained.push(i);
            kept_counts.push(m);
        }
    }
    if kept_counts.is_empty() {
        return Err(BornError::Degenerate);
    }
    Ok(RationalApproximation {
        weights: RationalWeights::new(kept_counts)?,
        retained,
        dropped,
        max_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envariance::check_swap_envariance;
    use crate::testutil::rng;
    use crate::universe::condition_amplitude;
    use approx::assert_abs_diff_eq;
    use num_traits::{One, Zero};
    use rand_chacha::ChaCha12Rng;
    use rand_core::Rng;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn fine(weights: &RationalWeights) -> FineGrainedState {
        let scenario = weights.scenario(&labels(weights.counts().len())).unwrap();
        fine_grain(weights, &scenario, &Tolerances::default(), 1 << 20).unwrap()
    }

    pub(crate) fn random_weights(k: usize, m_cap: u64, r: &mut ChaCha12Rng) -> RationalWeights {
        // k counts ≥ 1 with total ≤ m_cap.
        loop {
            let counts: Vec<u64> = (0..k).map(|_| 1 + r.next_u64() % (m_cap / k as u64)).collect();
            if counts.iter().sum::<u64>() <= m_cap {
                return RationalWeights::new(counts).unwrap();
            }
        }
    }

    #[test]
    fn equal_split_gives_two_half_branches() {
        let w = RationalWeights::new(vec![1, 1]).unwrap();
        let f = fine(&w);
        assert_eq!(f.total, 2);
        assert_eq!(f.branches.len(), 2);
        let want = 1.0 / 2.0_f64.sqrt();
        for b in &f.branches {
            assert_abs_diff_eq!(b.coefficient.re, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_two_split_gives_three_equal_branches() {
        let w = RationalWeights::new(vec![1, 2]).unwrap();
        let f = fine(&w);
        assert_eq!(f.total, 3);
        let want = 1.0 / 3.0_f64.sqrt();
        for b in &f.branches {
            assert_abs_diff_eq!(b.coefficient.norm(), want, epsilon = 1e-10);
        }
        // Condition 2 owns two of the three sub-branches.
        let owned: Vec<_> = f.branches.iter().filter(|b| b.condition == "2").collect();
        assert_eq!(owned.len(), 2);
        assert_eq!(owned[0].sub, 1);
        assert_eq!(owned[1].sub, 2);
    }

    #[test]
    fn coarse_amplitudes_survive_in_the_fine_universe() {
        let w = RationalWeights::new(vec![1, 2]).unwrap();
        let f = fine(&w);
        let tol = Tolerances::default();
        for (cond, &m) in f.system.interesting_conditions().iter().zip(w.counts()) {
            let ca = condition_amplitude(&f.state, &f.system, cond, &tol).unwrap();
            assert_abs_diff_eq!(
                ca.magnitude,
                (m as f64 / w.total() as f64).sqrt(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn every_fine_pair_swap_is_envariant() {
        let w = RationalWeights::new(vec![1, 2]).unwrap();
        let f = fine(&w);
        let tol = Tolerances::default();
        let fine_conditions = f.fine_system.interesting_conditions().to_vec();
        assert_eq!(fine_conditions.len(), 3);
        for i in 0..fine_conditions.len() {
            for j in (i + 1)..fine_conditions.len() {
                let cert = check_swap_envariance(
                    &f.state,
                    &f.fine_system,
                    &f.ancilla,
                    &(fine_conditions[i].clone(), fine_conditions[j].clone()),
                    &tol,
                )
                .unwrap();
                assert!(
                    cert.envariant && cert.residual < 1e-8,
                    "pair ({},{}) residual {}",
                    fine_conditions[i],
                    fine_conditions[j],
                    cert.residual
                );
            }
        }
    }

    #[test]
    fn born_probabilities_examples() {
        let half = born_probabilities(&RationalWeights::new(vec![1, 1]).unwrap());
        assert_eq!(half, vec![Ratio::new(1, 2), Ratio::new(1, 2)]);

        let thirds = born_probabilities(&RationalWeights::new(vec![1, 2]).unwrap());
        assert_eq!(thirds, vec![Ratio::new(1, 3), Ratio::new(2, 3)]);

        let tenths = born_probabilities(&RationalWeights::new(vec![2, 3, 5]).unwrap());
        assert_eq!(
            tenths,
            vec![Ratio::new(1, 5), Ratio::new(3, 10), Ratio::new(1, 2)]
        );
        let sum: Probability = tenths.into_iter().sum();
        assert!(sum.is_one());
    }

    #[test]
    fn counting_oracle_counts_the_state_itself() {
        let w = RationalWeights::new(vec![1, 2]).unwrap();
        let f = fine(&w);
        let probs = counting_oracle(&f, &Tolerances::default()).unwrap();
        assert_eq!(probs, vec![Ratio::new(1, 3), Ratio::new(2, 3)]);
    }

    #[test]
    fn counting_oracle_matches_born_probabilities_on_random_weights() {
        let mut r = rng(301);
        let tol = Tolerances::default();
        for trial in 0..40 {
            let k = 2 + (trial % 4);
            let w = random_weights(k, 48, &mut r);
            let f = fine(&w);
            let counted = counting_oracle(&f, &tol).unwrap();
            let derived = born_probabilities(&w);
            assert_eq!(counted, derived, "weights {:?}", w.counts());
            let sum: Probability = counted.into_iter().sum();
            assert!(sum.is_one());
        }
    }

    #[test]
    fn counting_oracle_rejects_unequal_coefficients() {
        let w = RationalWeights::new(vec![1, 2]).unwrap();
        let mut f = fine(&w);
        // Perturb one occupied amplitude beyond op_tol.
        let mut amps = f.state.amplitudes().clone();
        let hot = (0..amps.len()).find(|&i| amps[i].norm() > 0.1).unwrap();
        amps[hot] *= 1.001;
        f.state = StateVector::new(f.state.space().clone(), amps).unwrap();
        assert!(matches!(
            counting_oracle(&f, &Tolerances::default()),
            Err(BornError::UnequalCoefficients { .. })
        ));
    }

    #[test]
    fn weight_mismatch_is_rejected() {
        let w = RationalWeights::new(vec![1, 2]).unwrap();
        let other = RationalWeights::new(vec![2, 1]).unwrap();
        let scenario = other.scenario(&labels(2)).unwrap();
        assert!(matches!(
            fine_grain(&w, &scenario, &Tolerances::default(), 1 << 20),
            Err(BornError::WeightMismatch { .. })
        ));
    }

    #[test]
    fn zero_counts_are_rejected_at_construction() {
        assert!(matches!(
            RationalWeights::new(vec![1, 0, 2]),
            Err(BornError::ZeroCount(1))
        ));
        assert!(matches!(
            RationalWeights::new(vec![]),
            Err(BornError::EmptyWeights)
        ));
    }

    /// Brute-force oracle: enumerate every composition of every M up to
    /// the cap and return the smallest achievable max error.
    fn brute_force_best_error(probs: &[f64], max_denominator: u64) -> f64 {
        fn compositions(k: usize, total: u64, acc: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
            if k == 1 {
                acc.push(total);
                out.push(acc.clone());
                acc.pop();
                return;
            }
            for first in 0..=total {
                acc.push(first);
                compositions(k - 1, total - first, acc, out);
                acc.pop();
            }
        }
        let mut best = f64::INFINITY;
        for m_total in 1..=max_denominator {
            let mut all = Vec::new();
            compositions(probs.len(), m_total, &mut Vec::new(), &mut all);
            for counts in all {
                let err = probs
                    .iter()
                    .zip(&counts)
                    .map(|(&p, &m)| (m as f64 / m_total as f64 - p).abs())
                    .fold(0.0f64, f64::max);
                best = best.min(err);
            }
        }
        best
    }

    #[test]
    fn approximation_examples() {
        let tol = Tolerances::default();
        let r = rational_approximation(
            &[0.5_f64.sqrt(), 0.5_f64.sqrt()],
            10,
            &tol,
        )
        .unwrap();
        assert_eq!(r.weights.counts(), &[1, 1]);
        assert!(r.max_error < 1e-12);

        let r = rational_approximation(
            &[(1.0f64 / 3.0).sqrt(), (2.0f64 / 3.0).sqrt()],
            3,
            &tol,
        )
        .unwrap();
        assert_eq!(r.weights.counts(), &[1, 2]);
        assert!(r.max_error < 1e-12);
    }

    #[test]
    fn approximation_matches_brute_force_at_small_denominators() {
        let mut r = rng(307);
        let tol = Tolerances::default();
        for trial in 0..15 {
            let k = 2 + (trial % 2);
            let raw: Vec<f64> = (0..k).map(|_| 0.05 + crate::testutil::uniform(&mut r)).collect();
            let norm: f64 = raw.iter().map(|x| x * x).sum::<f64>();
            let amps: Vec<f64> = raw.iter().map(|x| x / norm.sqrt()).collect();
            let probs: Vec<f64> = amps.iter().map(|a| a * a).collect();
            for max_den in [3, 7, 12] {
                let got = rational_approximation(&amps, max_den, &tol).unwrap();
                let best = brute_force_best_error(&probs, max_den);
                assert_abs_diff_eq!(got.max_error, best, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn approximation_error_shrinks_with_the_denominator() {
        // |ψ|² = (1/π, 1 − 1/π): irrational weights approached within
        // 1/max_denominator, with Born probabilities converging.
        let p1 = 1.0 / std::f64::consts::PI;
        let amps = [p1.sqrt(), (1.0 - p1).sqrt()];
        let tol = Tolerances::default();
        let mut last = f64::INFINITY;
        for max_den in [10u64, 100, 1_000, 100_000, 1_000_000] {
            let r = rational_approximation(&amps, max_den, &tol).unwrap();
            assert!(
                r.max_error <= 1.0 / max_den as f64,
                "error {} exceeds 1/{max_den}",
                r.max_error
            );
            assert!(r.max_error <= last);
            last = r.max_error;
            let probs = born_probabilities(&r.weights);
            let p_back = *probs[0].numer() as f64 / *probs[0].denom() as f64;
            assert!((p_back - p1).abs() <= 1.0 / max_den as f64);
        }
    }

    #[test]
    fn approximation_drops_zero_counts_with_notice() {
        // A tiny weight vanishes at coarse denominators.
        let eps = 1e-4_f64;
        let amps = [eps.sqrt(), (1.0 - eps).sqrt()];
        let r = rational_approximation(&amps, 5, &Tolerances::default()).unwrap();
        assert_eq!(r.dropped, vec![0]);
        assert_eq!(r.retained, vec![1]);
        // M = 1 already achieves the best error, so the tie goes to it.
        assert_eq!(r.weights.counts(), &[1]);
        let sum: Probability = born_probabilities(&r.weights).into_iter().sum();
        assert!(sum.is_one());
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let tol = Tolerances::default();
        assert!(matches!(
            rational_approximation(&[0.0, 0.0], 10, &tol),
            Err(BornError::Degenerate)
        ));
        assert!(matches!(
            rational_approximation(&[1.0], 0, &tol),
            Err(BornError::ZeroDenominator)
        ));
        assert!(matches!(
            rational_approximation(&[0.9, 0.1], 10, &tol),
            Err(BornError::NotNormalized(_))
        ));
        let zero: Probability = Ratio::zero();
        assert!(zero.is_zero());
    }
}

