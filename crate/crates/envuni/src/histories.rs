//! Fine-grained history eigenstates over all recordable systems,
//! coarse-graining by known records, reduced density matrices, and the
//! record-update operation.
//!
//! A history is a joint condition assignment, one condition per system;
//! its weight is the squared norm of the joint projection. Learning a new
//! record projects the coarse-grained state and renormalizes — the
//! "collapse" is bookkeeping on knowledge, not dynamics, and commuting
//! records make the update order irrelevant.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hilbert::{partial_trace, DensityMatrix, HilbertError, StateVector, Tolerances};
use crate::universe::{SystemSpec, UniverseError};

/// Guard on the number of joint condition labels enumerated at once.
pub const ENUMERATION_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistoryError {
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("a universe model needs at least one system")]
    NoSystems,
    #[error("factor `{0}` is claimed by more than one system")]
    FactorOverlap(String),
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("system index {index} out of range for {count} systems")]
    SystemRange { index: usize, count: usize },
    #[error("{labels} joint labels exceed the enumeration cap {cap}; prune with min_weight")]
    EnumerationCap { labels: usize, cap: usize },
    #[error("records are contradictory: joint projection has norm {0:.3e}")]
    ZeroProbability(f64),
    #[error("system {0} already has a recorded condition")]
    AlreadyRecorded(usize),
}

/// A set of recordable systems and the universe state they live in.
#[derive(Debug, Clone)]
pub struct UniverseModel {
    systems: Vec<SystemSpec>,
    state: StateVector,
}

impl UniverseModel {
    /// Validates every projector family, requires pairwise-disjoint
    /// factors, and checks the state is normalized.
    pub fn new(
        systems: Vec<SystemSpec>,
        state: StateVector,
        tol: &Tolerances,
    ) -> Result<Self, HistoryError> {
        if systems.is_empty() {
            return Err(HistoryError::NoSystems);
        }
        let mut seen: Vec<&str> = Vec::new();
        for sys in &systems {
            sys.require_valid(tol)?;
            sys.factor_positions(state.space())?;
            for f in sys.factors() {
                if seen.contains(&f.label()) {
                    return Err(HistoryError::FactorOverlap(f.label().to_string()));
                }
                seen.push(f.label());
            }
        }
        state.require_normalized(tol.norm)?;
        Ok(Self { systems, state })
    }

    pub fn systems(&self) -> &[SystemSpec] {
        &self.systems
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn system(&self, index: usize) -> Result<&SystemSpec, HistoryError> {
        self.systems.get(index).ok_or(HistoryError::SystemRange {
            index,
            count: self.systems.len(),
        })
    }

    pub fn system_index(&self, name: &str) -> Result<usize, HistoryError> {
        self.systems
            .iter()
            .position(|s| s.name() == name)
            .ok_or_else(|| HistoryError::UnknownSystem(name.to_string()))
    }
}

/// Known measurement records: system index → recorded condition index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordSet {
    known: BTreeMap<usize, usize>,
}

impl RecordSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from (system name, condition label) pairs against a model.
    pub fn from_labels(
        model: &UniverseModel,
        records: &[(&str, &str)],
    ) -> Result<Self, HistoryError> {
        let mut set = Self::new();
        for (system, condition) in records {
            let i = model.system_index(system)?;
            let kappa = model.system(i)?.condition_index(condition)?;
            if set.known.insert(i, kappa).is_some() {
                return Err(HistoryError::AlreadyRecorded(i));
            }
        }
        Ok(set)
    }

    pub fn with(&self, system: usize, condition: usize) -> Result<Self, HistoryError> {
        if self.known.contains_key(&system) {
            return Err(HistoryError::AlreadyRecorded(system));
        }
        let mut next = self.clone();
        next.known.insert(system, condition);
        Ok(next)
    }

    pub fn contains(&self, system: usize) -> bool {
        self.known.contains_key(&system)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.known.iter().map(|(&i, &k)| (i, k))
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

/// One fine-grained history: a condition per system and the weight
/// ‖(Π_i P_i^{α_i}) Ψ‖².
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    /// Condition labels, one per system, in system order.
    pub conditions: Vec<String>,
    pub weight: f64,
}

/// All joint condition assignments with weight ≥ `min_weight`.
///
/// The full (unpruned) weights sum to 1 by completeness. Projection never
/// increases the norm, so subtrees are pruned as soon as the running
/// weight drops below `min_weight`; models whose full label product
/// exceeds the cap must prune.
pub fn enumerate_histories(
    model: &UniverseModel,
    min_weight: f64,
) -> Result<Vec<History>, HistoryError> {
    enumerate_histories_capped(model, min_weight, ENUMERATION_CAP)
}

pub fn enumerate_histories_capped(
    model: &UniverseModel,
    min_weight: f64,
    cap: usize,
) -> Result<Vec<History>, HistoryError> {
    let total_labels: usize = model
        .systems
        .iter()
        .map(|s| s.conditions().len())
        .product();
    if total_labels > cap && min_weight <= 0.0 {
        return Err(HistoryError::EnumerationCap {
            labels: total_labels,
            cap,
        });
    }
    let mut out = Vec::new();
    let mut labels: Vec<String> = Vec::with_capacity(model.systems.len());
    descend(model, 0, &model.state, min_weight, cap, &mut labels, &mut out)?;
    Ok(out)
}

fn descend(
    model: &UniverseModel,
    depth: usize,
    state: &StateVector,
    min_weight: f64,
    cap: usize,
    labels: &mut Vec<String>,
    out: &mut Vec<History>,
) -> Result<(), HistoryError> {
    if depth == model.systems.len() {
        let weight = state.norm().powi(2);
        if weight >= min_weight {
            if out.len() >= cap {
                return Err(HistoryError::EnumerationCap {
                    labels: out.len() + 1,
                    cap,
                });
            }
            out.push(History {
                conditions: labels.clone(),
                weight,
            });
        }
        return Ok(());
    }
    let sys = &model.systems[depth];
    for (alpha, cond) in sys.conditions().iter().enumerate() {
        let projected = sys.apply_projector(alpha, state)?;
        // Further projections only shrink the norm; cut early.
        if projected.norm().powi(2) < min_weight {
            continue;
        }
        labels.push(cond.clone());
        descend(model, depth + 1, &projected, min_weight, cap, labels, out)?;
        labels.pop();
    }
    Ok(())
}

/// The normalized projection of the universe state onto a set of known
/// records, with its cumulative history weight.
#[derive(Debug, Clone)]
pub struct CoarseState {
    pub records: RecordSet,
    pub state: StateVector,
    /// ‖(Π_{i∈K} P_i^{κ_i}) Ψ‖² against the original universe state.
    pub weight: f64,
}

/// Project the universe state onto every recorded condition and
/// renormalize. Contradictory records (zero-probability joint projection)
/// are a hard error.
pub fn coarse_grain(
    model: &UniverseModel,
    records: &RecordSet,
    tol: &Tolerances,
) -> Result<CoarseState, HistoryError> {
    let mut state = model.state.clone();
    for (i, kappa) in records.iter() {
        let sys = model.system(i)?;
        state = sys.apply_projector(kappa, &state)?;
    }
    let norm = state.norm();
    if norm < tol.branch {
        return Err(HistoryError::ZeroProbability(norm));
    }
    Ok(CoarseState {
        records: records.clone(),
        state: state.scaled(num_complex::Complex64::new(1.0 / norm, 0.0)),
        weight: norm * norm,
    })
}

/// Reduced density matrix of one system: everything else traced out.
pub fn reduce(
    model: &UniverseModel,
    coarse: &CoarseState,
    target: usize,
) -> Result<DensityMatrix, HistoryError> {
    let sys = model.system(target)?;
    let keep = sys.factor_labels();
    Ok(partial_trace(&DensityMatrix::pure(&coarse.state), &keep)?)
}

/// A record update and the probability it carried.
#[derive(Debug, Clone)]
pub struct RecordUpdate {
    pub state: CoarseState,
    /// ‖P^κ Ψ_K‖²: the Born weight of the newly learned record given the
    /// previous ones.
    pub probability: f64,
}

/// Learn one new record: project the coarse state onto the recorded
/// condition and renormalize.
///
/// Equals `coarse_grain` over the enlarged record set; the reported
/// probability equals Tr(ρ_before P^κ) of the pre-update reduced state.
pub fn record_update(
    model: &UniverseModel,
    coarse: &CoarseState,
    system: usize,
    condition: &str,
    tol: &Tolerances,
) -> Result<RecordUpdate, HistoryError> {
    if coarse.records.contains(system) {
        return Err(HistoryError::AlreadyRecorded(system));
    }
    let sys = model.system(system)?;
    let kappa = sys.condition_index(condition)?;
    let projected = sys.apply_projector(kappa, &coarse.state)?;
    let norm = projected.norm();
    if norm < tol.branch {
        return Err(HistoryError::ZeroProbability(norm));
    }
    let records = coarse.records.with(system, kappa)?;
    let probability = norm * norm;
    Ok(RecordUpdate {
        state: CoarseState {
            records,
            state: projected.scaled(num_complex::Complex64::new(1.0 / norm, 0.0)),
            weight: coarse.weight * probability,
        },
        probability,
    })
}
