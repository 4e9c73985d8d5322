//! Correlated system/apparatus/environment states and their branch
//! decomposition.
//!
//! A measurement leaves a record: the environment condition is perfectly
//! correlated with the apparatus condition, which is perfectly correlated
//! with the system condition. Any state of that form decomposes into
//! orthogonal branches, one per condition, and the decomposition
//! reconstructs the state exactly.

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{CompositeSpace, FactorSpace, HilbertError, StateVector, Tolerances};
use crate::universe::{SystemSpec, UniverseError, ABSENT_CONDITION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("need at least one condition")]
    NoConditions,
    #[error("got {amps} amplitudes for {conds} conditions")]
    AmplitudeCount { amps: usize, conds: usize },
    #[error("amplitudes have squared norm {0:.12}, expected 1")]
    AmplitudesNotNormalized(f64),
    #[error("condition `{0}` collides with the reserved absent label")]
    ReservedLabel(String),
    #[error("systems `{a}` and `{b}` carry different condition labels")]
    ConditionMismatch { a: String, b: String },
    #[error(
        "state is not of recorded-measurement form: correlation residual {residual:.3e} exceeds {tol:.1e}"
    )]
    CorrelationViolated { residual: f64, tol: f64 },
    #[error("absent condition has amplitude {0:.3e} but no basis state to carry it")]
    AbsentUnrepresentable(f64),
    #[error("cannot reconstruct from an empty branch list")]
    EmptyBranches,
}

/// Construction options for [`MeasurementScenario`].
#[derive(Debug, Clone, Copy)]
pub struct ScenarioOptions {
    /// Model the apparatus factor explicitly (three-way correlation).
    pub apparatus: bool,
    /// When set, each factor gains a dedicated basis state for the absent
    /// condition, carrying this amplitude in the constructed state.
    pub absent_amplitude: Option<Complex64>,
    /// Dimension guard for the scenario's universe space.
    pub dim_cap: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            apparatus: true,
            absent_amplitude: None,
            dim_cap: crate::hilbert::DEFAULT_DIM_CAP,
        }
    }
}

/// A measurement setup: the measured system S, an optional apparatus A,
/// the recording environment E (all sharing one condition label set), and
/// the amplitude each condition carries in the correlated state.
///
/// Each factor has one basis state per interesting condition (plus one for
/// the absent condition when it carries amplitude); condition projectors
/// are the corresponding basis partitions.
#[derive(Debug, Clone)]
pub struct MeasurementScenario {
    space: CompositeSpace,
    system: SystemSpec,
    apparatus: Option<SystemSpec>,
    environment: SystemSpec,
    /// Aligned with `system.conditions()`: index 0 is the absent
    /// condition's amplitude (zero unless explicitly modeled).
    amplitudes: Vec<Complex64>,
}

impl MeasurementScenario {
    pub fn new(
        conditions: &[String],
        amplitudes: &[Complex64],
        options: ScenarioOptions,
    ) -> Result<Self, MeasurementError> {
        Self::with_tolerances(conditions, amplitudes, options, &Tolerances::default())
    }

    pub fn with_tolerances(
        conditions: &[String],
        amplitudes: &[Complex64],
        options: ScenarioOptions,
        tol: &Tolerances,
    ) -> Result<Self, MeasurementError> {
        if conditions.is_empty() {
            return Err(MeasurementError::NoConditions);
        }
        if conditions.iter().any(|c| c == ABSENT_CONDITION) {
            return Err(MeasurementError::ReservedLabel(ABSENT_CONDITION.into()));
        }
        if amplitudes.len() != conditions.len() {
            return Err(MeasurementError::AmplitudeCount {
                amps: amplitudes.len(),
                conds: conditions.len(),
            });
        }
        let absent_amp = options.absent_amplitude.unwrap_or(Complex64::new(0.0, 0.0));
        let mut full_amps = Vec::with_capacity(conditions.len() + 1);
        full_amps.push(absent_amp);
        full_amps.extend_from_slice(amplitudes);
        let sq: f64 = full_amps.iter().map(|a| a.norm_sqr()).sum();
        if (sq - 1.0).abs() > tol.norm {
            return Err(MeasurementError::AmplitudesNotNormalized(sq));
        }

        let k = conditions.len();
        let absent_state = options.absent_amplitude.is_some();
        let dim = if absent_state { k + 1 } else { k };
        // Local index of condition α: with a dedicated absent state the
        // absent condition owns index 0 and interesting conditions shift
        // up by one.
        let mut partition: Vec<Vec<usize>> = Vec::with_capacity(k + 1);
        if absent_state {
            partition.push(vec![0]);
            partition.extend((0..k).map(|i| vec![i + 1]));
        } else {
            partition.push(Vec::new());
            partition.extend((0..k).map(|i| vec![i]));
        }
        let mut full_conditions = Vec::with_capacity(k + 1);
        full_conditions.push(ABSENT_CONDITION.to_string());
        full_conditions.extend(conditions.iter().cloned());

        let make = |name: &str, label: &str| -> Result<SystemSpec, UniverseError> {
            SystemSpec::from_partition(
                name,
                vec![FactorSpace::new(label, dim).expect("dim >= 1")],
                full_conditions.clone(),
                partition.clone(),
            )
        };
        let environment = make("E", "e")?;
        let apparatus = if options.apparatus {
            Some(make("A", "a")?)
        } else {
            None
        };
        let system = make("S", "s")?;

        let mut factors = vec![FactorSpace::new("e", dim).expect("dim >= 1")];
        if options.apparatus {
            factors.push(FactorSpace::new("a", dim).expect("dim >= 1"));
        }
        factors.push(FactorSpace::new("s", dim).expect("dim >= 1"));
        let space = CompositeSpace::with_dim_cap(factors, options.dim_cap)?;

        Ok(Self {
            space,
            system,
            apparatus,
            environment,
            amplitudes: full_amps,
        })
    }

    /// Universe space: factors e, (a,) s in that order.
    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn apparatus(&self) -> Option<&SystemSpec> {
        self.apparatus.as_ref()
    }

    pub fn environment(&self) -> &SystemSpec {
        &self.environment
    }

    /// Amplitudes aligned with `system().conditions()` (absent first).
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Amplitudes of the interesting conditions only.
    pub fn interesting_amplitudes(&self) -> &[Complex64] {
        &self.amplitudes[1..]
    }

    pub fn conditions(&self) -> &[String] {
        self.system.conditions()
    }

    /// Everything that records the system: the environment factor joined
    /// with the apparatus factor when one is modeled.
    ///
    /// Condition α owns the correlated digit pair (e^α, a^α); inconsistent
    /// pairs belong to the absent condition. Envariance counter-operations
    /// act on this composite system — with an apparatus present, an
    /// operation on the environment factor alone cannot undo a swap,
    /// because the apparatus record rides along with the branch.
    pub fn record_side(&self) -> SystemSpec {
        let Some(apparatus) = &self.apparatus else {
            return self.environment.clone();
        };
        let e_dim = self.environment.local_dimension();
        let a_dim = apparatus.local_dimension();
        let reps: Vec<Option<usize>> = match self.system.rep() {
            crate::universe::ProjectorRep::Partition(cells) => {
                cells.iter().map(|cell| cell.first().copied()).collect()
            }
            crate::universe::ProjectorRep::Explicit(_) => unreachable!("scenario systems are partition-backed"),
        };
        let mut owned = vec![false; e_dim * a_dim];
        let mut cells: Vec<Vec<usize>> = vec![Vec::new()];
        for rep in &reps[1..] {
            match rep.map(|r| r * a_dim + r) {
                Some(l) => {
                    owned[l] = true;
                    cells.push(vec![l]);
                }
                None => cells.push(Vec::new()),
            }
        }
        // Absent condition: its own diagonal pair when modeled, plus every
        // inconsistent pair.
        let mut absent: Vec<usize> = Vec::new();
        if let Some(r) = reps[0] {
            let l = r * a_dim + r;
            owned[l] = true;
            absent.push(l);
        }
        absent.extend((0..e_dim * a_dim).filter(|&l| !owned[l]));
        absent.sort_unstable();
        cells[0] = absent;
        SystemSpec::from_partition(
            "EA",
            vec![
                self.environment.factors()[0].clone(),
                apparatus.factors()[0].clone(),
            ],
            self.system.conditions().to_vec(),
            cells,
        )
        .expect("record side mirrors validated families")
    }
}

/// Construct the correlated universe state Σ_α ψ_α |e^α (a^α) s^α⟩.
pub fn build_measurement_state(
    scenario: &MeasurementScenario,
) -> Result<StateVector, MeasurementError> {
    let space = scenario.space();
    let n_factors = space.factors().len();
    let mut amplitudes = ndarray::Array1::zeros(space.total_dimension());
    for (alpha, amp) in scenario.amplitudes.iter().enumerate() {
        if amp.norm() == 0.0 {
            continue;
        }
        let rep = match scenario.system.rep() {
            crate::universe::ProjectorRep::Partition(cells) => cells[alpha].first().copied(),
            crate::universe::ProjectorRep::Explicit(_) => None,
        };
        let Some(rep) = rep else {
            return Err(MeasurementError::AbsentUnrepresentable(amp.norm()));
        };
        let digits = vec![rep; n_factors];
        amplitudes[space.index_of(&digits)] = *amp;
    }
    Ok(StateVector::new(space.clone(), amplitudes)?)
}

/// One entry of a correlation check: the residual of
/// P_a^α P_b^β ψ = δ_{αβ} P_b^β ψ for a single condition pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub a_condition: String,
    pub b_condition: String,
    pub residual: f64,
}

/// Residuals of the perfect-correlation condition between two systems,
/// over every condition pair.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub system_a: String,
    pub system_b: String,
    pub max_residual: f64,
    pub worst: (String, String),
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

/// Check ‖P_a^α P_b^β ψ − δ_{αβ} P_b^β ψ‖ over all condition pairs of two
/// validated systems.
pub fn verify_correlation(
    psi: &StateVector,
    a: &SystemSpec,
    b: &SystemSpec,
    tol: &Tolerances,
) -> Result<CorrelationReport, MeasurementError> {
    a.require_valid(tol)?;
    b.require_valid(tol)?;
    let mut entries = Vec::new();
    let mut max_residual: f64 = 0.0;
    let mut worst = (String::new(), String::new());
    for (ia, ca) in a.conditions().iter().enumerate() {
        for (ib, cb) in b.conditions().iter().enumerate() {
            let pb = b.apply_projector(ib, psi)?;
            let papb = a.apply_projector(ia, &pb)?;
            // δ_{αβ} = 0 off the diagonal: the double projection must
            // vanish there.
            let residual = if ca == cb {
                papb.distance(&pb)?
            } else {
                papb.norm()
            };
            if residual > max_residual {
                max_residual = residual;
                worst = (ca.clone(), cb.clone());
            }
            entries.push(CorrelationEntry {
                a_condition: ca.clone(),
                b_condition: cb.clone(),
                residual,
            });
        }
    }
    Ok(CorrelationReport {
        system_a: a.name().to_string(),
        system_b: b.name().to_string(),
        max_residual,
        worst,
        entries,
    })
}

/// One branch of the universe: a condition, its complex amplitude, and
/// the unit branch state (gauge-fixed).
#[derive(Debug, Clone)]
pub struct Branch {
    pub condition: String,
    pub amplitude: Complex64,
    pub state: StateVector,
}

/// The complete orthogonal decomposition of a recorded-measurement state.
///
/// `Σ_α amplitude_α |branch_α⟩` reconstructs the input; branches are
/// pairwise orthogonal; conditions whose amplitude magnitude fell below
/// the branch tolerance are listed in `dropped`.
#[derive(Debug, Clone)]
pub struct BranchDecomposition {
    pub branches: Vec<Branch>,
    pub dropped: Vec<String>,
}

impl BranchDecomposition {
    pub fn amplitude_of(&self, condition: &str) -> Option<Complex64> {
        self.branches
            .iter()
            .find(|b| b.condition == condition)
            .map(|b| b.amplitude)
    }
}

/// Decompose a universe state into orthogonal branches labeled by the
/// shared conditions of `env` and `sys`.
///
/// Requires the state to be of recorded-measurement form: the E–S
/// correlation residual must not exceed the operator tolerance. The
/// branch state keeps the canonical gauge (first significant component
/// real positive) and the amplitude carries the removed phase, so
/// `amplitude · state = P_S^α ψ` exactly.
pub fn decompose_branches(
    psi: &StateVector,
    env: &SystemSpec,
    sys: &SystemSpec,
    tol: &Tolerances,
) -> Result<BranchDecomposition, MeasurementError> {
    if env.conditions() != sys.conditions() {
        return Err(MeasurementError::ConditionMismatch {
            a: env.name().to_string(),
            b: sys.name().to_string(),
        });
    }
    psi.require_normalized(tol.norm)?;
    let correlation = verify_correlation(psi, env, sys, tol)?;
    if !correlation.passes(tol.op) {
        return Err(MeasurementError::CorrelationViolated {
            residual: correlation.max_residual,
            tol: tol.op,
        });
    }
    let mut branches = Vec::new();
    let mut dropped = Vec::new();
    for (alpha, cond) in sys.conditions().iter().enumerate() {
        let raw = sys.apply_projector(alpha, psi)?;
        let magnitude = raw.norm();
        if magnitude < tol.branch {
            dropped.push(cond.clone());
            continue;
        }
        let unit = raw.scaled(Complex64::new(1.0 / magnitude, 0.0));
        let (state, phase) = unit.canonical_phase(tol.branch);
        branches.push(Branch {
            condition: cond.clone(),
            amplitude: phase * magnitude,
            state,
        });
    }
    Ok(BranchDecomposition { branches, dropped })
}

/// Rebuild the universe state Σ_α ψ_α |branch_α⟩ from a decomposition.
pub fn reconstruct(decomposition: &BranchDecomposition) -> Result<StateVector, MeasurementError> {
    let mut iter = decomposition.branches.iter();
    let first = iter.next().ok_or(MeasurementError::EmptyBranches)?;
    let mut acc = first.state.scaled(first.amplitude);
    for branch in iter {
        acc = acc.add(&branch.state.scaled(branch.amplitude))?;
    }
    Ok(acc)
}
