//! Systems as labeled projector families on the universe space.
//!
//! A system is characterized by a complete family of mutually orthogonal
//! projectors, one per named condition. Condition 0 is always present and
//! reserved for the system "not existing"; scenarios that model
//! always-existing systems give it the zero operator, in which case the
//! remaining projectors must already resolve the identity.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{
    apply_lifted, lift, CompositeSpace, FactorSpace, HilbertError, LinearOperator, StateVector,
    Tolerances,
};

/// Reserved label of the mandatory α = 0 condition.
pub const ABSENT_CONDITION: &str = "absent";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UniverseError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("system `{0}` needs at least the `{ABSENT_CONDITION}` condition")]
    NoConditions(String),
    #[error("system `{system}`: condition 0 must be labeled `{ABSENT_CONDITION}`, got `{got}`")]
    MissingAbsent { system: String, got: String },
    #[error("system `{system}`: duplicate condition label `{label}`")]
    DuplicateCondition { system: String, label: String },
    #[error("system `{system}`: expected {want} projectors, got {got}")]
    ProjectorCount {
        system: String,
        want: usize,
        got: usize,
    },
    #[error("system `{system}`: partition index {index} out of range for local dimension {dim}")]
    PartitionRange {
        system: String,
        index: usize,
        dim: usize,
    },
    #[error("system `{system}`: unknown condition `{condition}`")]
    UnknownCondition { system: String, condition: String },
    #[error("system `{system}` is not a valid projector family:\n{report}")]
    InvalidFamily { system: String, report: String },
    #[error("condition `{condition}` of system `{system}` has empty support; no eigenstate")]
    EmptySupport { system: String, condition: String },
}

/// How the condition projectors are represented.
///
/// `Partition` assigns each local basis index of the system's factors to
/// at most one condition (a diagonal projector family); `Explicit` stores
/// one dense matrix per condition on the system's local space.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectorRep {
    Partition(Vec<Vec<usize>>),
    Explicit(Vec<Array2<Complex64>>),
}

/// A named system: the tensor factors it occupies and a labeled family of
/// condition projectors on them.
///
/// Most systems live on a single factor; composite systems (used by the
/// fine-graining construction) may span several.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    name: String,
    factors: Vec<FactorSpace>,
    conditions: Vec<String>,
    rep: ProjectorRep,
}

/// One failed family invariant, with the offending pair and residual.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationFailure {
    /// ‖P^α P^β − δ_{αβ} P^α‖_F for a pair of distinct conditions.
    Orthogonality {
        a: String,
        b: String,
        residual: f64,
    },
    /// ‖Σ_α P^α − I‖_F.
    Completeness { residual: f64 },
    /// ‖P² − P‖_F for one condition.
    NotIdempotent { condition: String, residual: f64 },
    /// ‖P† − P‖_F for one condition.
    NotHermitian { condition: String, residual: f64 },
}

impl std::fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationFailure::Orthogonality { a, b, residual } => {
                write!(f, "conditions `{a}` and `{b}` not orthogonal, residual {residual:.6e}")
            }
            ValidationFailure::Completeness { residual } => {
                write!(f, "projectors do not sum to identity, residual {residual:.6e}")
            }
            ValidationFailure::NotIdempotent { condition, residual } => {
                write!(f, "condition `{condition}` not idempotent, residual {residual:.6e}")
            }
            ValidationFailure::NotHermitian { condition, residual } => {
                write!(f, "condition `{condition}` not hermitian, residual {residual:.6e}")
            }
        }
    }
}

/// Outcome of validating a projector family; empty means valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub system: String,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.failures.is_empty() {
            write!(f, "family `{}` valid", self.system)
        } else {
            for (i, failure) in self.failures.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{failure}")?;
            }
            Ok(())
        }
    }
}

impl SystemSpec {
    /// A system on the given factors whose conditions partition the local
    /// basis. `conditions[0]` must be [`ABSENT_CONDITION`]; its cell may
    /// be empty (the zero operator) for always-existing systems.
    pub fn from_partition(
        name: impl Into<String>,
        factors: Vec<FactorSpace>,
        conditions: Vec<String>,
        partition: Vec<Vec<usize>>,
    ) -> Result<Self, UniverseError> {
        let name = name.into();
        check_conditions(&name, &conditions)?;
        if partition.len() != conditions.len() {
            return Err(UniverseError::ProjectorCount {
                system: name,
                want: conditions.len(),
                got: partition.len(),
            });
        }
        let dim: usize = factors.iter().map(|f| f.dimension()).product();
        for cell in &partition {
            for &ix in cell {
                if ix >= dim {
                    return Err(UniverseError::PartitionRange {
                        system: name,
                        index: ix,
                        dim,
                    });
                }
            }
        }
        Ok(Self {
            name,
            factors,
            conditions,
            rep: ProjectorRep::Partition(partition),
        })
    }

    /// Single-factor system with one basis state per interesting
    /// condition, in order, and the mandatory absent condition carrying
    /// the zero operator.
    pub fn pointer_basis(
        name: impl Into<String>,
        factor: FactorSpace,
        interesting: &[String],
    ) -> Result<Self, UniverseError> {
        let mut conditions = Vec::with_capacity(interesting.len() + 1);
        conditions.push(ABSENT_CONDITION.to_string());
        conditions.extend(interesting.iter().cloned());
        let mut partition = vec![Vec::new()];
        partition.extend((0..interesting.len()).map(|i| vec![i]));
        Self::from_partition(name, vec![factor], conditions, partition)
    }

    /// A system whose projectors are explicit dense matrices on the local
    /// space of its factors.
    pub fn from_projectors(
        name: impl Into<String>,
        factors: Vec<FactorSpace>,
        conditions: Vec<String>,
        projectors: Vec<Array2<Complex64>>,
    ) -> Result<Self, UniverseError> {
        let name = name.into();
        check_conditions(&name, &conditions)?;
        if projectors.len() != conditions.len() {
            return Err(UniverseError::ProjectorCount {
                system: name,
                want: conditions.len(),
                got: projectors.len(),
            });
        }
        let dim: usize = factors.iter().map(|f| f.dimension()).product();
        for m in &projectors {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(UniverseError::Hilbert(HilbertError::ShapeMismatch {
                    rows: m.nrows(),
                    cols: m.ncols(),
                    dim,
                }));
            }
        }
        Ok(Self {
            name,
            factors,
            conditions,
            rep: ProjectorRep::Explicit(projectors),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn factors(&self) -> &[FactorSpace] {
        &self.factors
    }

    pub fn factor_labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.label()).collect()
    }

    /// All condition labels, `ABSENT_CONDITION` first.
    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    /// Condition labels with α > 0.
    pub fn interesting_conditions(&self) -> &[String] {
        &self.conditions[1..]
    }

    pub fn condition_index(&self, label: &str) -> Result<usize, UniverseError> {
        self.conditions
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| UniverseError::UnknownCondition {
                system: self.name.clone(),
                condition: label.to_string(),
            })
    }

    pub fn rep(&self) -> &ProjectorRep {
        &self.rep
    }

    /// Product of the dimensions of this system's factors.
    pub fn local_dimension(&self) -> usize {
        self.factors.iter().map(|f| f.dimension()).product()
    }

    /// The local space spanned by this system's factors, in their stored
    /// order. Never capped: the factors were already admitted into a
    /// universe space.
    pub fn local_space(&self) -> CompositeSpace {
        CompositeSpace::with_dim_cap(self.factors.clone(), usize::MAX)
            .expect("factors validated at construction")
    }

    /// Dense projector for one condition on the local space.
    pub fn local_projector(&self, alpha: usize) -> LinearOperator {
        let dim = self.local_dimension();
        let matrix = match &self.rep {
            ProjectorRep::Partition(cells) => {
                let mut m = Array2::zeros((dim, dim));
                for &ix in &cells[alpha] {
                    m[(ix, ix)] = Complex64::new(1.0, 0.0);
                }
                m
            }
            ProjectorRep::Explicit(mats) => mats[alpha].clone(),
        };
        LinearOperator::new(self.local_space(), matrix).expect("shape checked at construction")
    }

    /// The projector for `alpha` lifted to `space` as a dense operator.
    pub fn projector(
        &self,
        space: &CompositeSpace,
        alpha: usize,
    ) -> Result<LinearOperator, UniverseError> {
        Ok(lift(&self.local_projector(alpha), space)?)
    }

    /// Apply P^α to a state without materializing the lifted matrix.
    /// Partition families reduce to an O(dim) mask.
    pub fn apply_projector(
        &self,
        alpha: usize,
        s: &StateVector,
    ) -> Result<StateVector, UniverseError> {
        match &self.rep {
            ProjectorRep::Partition(cells) => {
                let positions = self.factor_positions(s.space())?;
                let mut member = vec![false; self.local_dimension()];
                for &ix in &cells[alpha] {
                    member[ix] = true;
                }
                let mut out = Array1::zeros(s.space().total_dimension());
                for i in 0..s.space().total_dimension() {
                    if member[self.local_index(s.space(), &positions, i)] {
                        out[i] = s.amplitudes()[i];
                    }
                }
                Ok(StateVector::new(s.space().clone(), out)?)
            }
            ProjectorRep::Explicit(_) => Ok(apply_lifted(&self.local_projector(alpha), s)?),
        }
    }

    /// Map from local basis index to owning condition, for partition
    /// families (`None` entries are owned by no condition; `None` result
    /// for explicit families).
    pub fn local_condition_map(&self) -> Option<Vec<Option<usize>>> {
        match &self.rep {
            ProjectorRep::Partition(cells) => {
                let mut map = vec![None; self.local_dimension()];
                for (alpha, cell) in cells.iter().enumerate() {
                    for &ix in cell {
                        map[ix] = Some(alpha);
                    }
                }
                Some(map)
            }
            ProjectorRep::Explicit(_) => None,
        }
    }

    /// Positions of this system's factors inside `space`, checking
    /// existence and dimensions.
    pub fn factor_positions(&self, space: &CompositeSpace) -> Result<Vec<usize>, UniverseError> {
        self.factors
            .iter()
            .map(|f| {
                let pos = space
                    .factor_position(f.label())
                    .ok_or_else(|| HilbertError::UnknownLabel(f.label().to_string()))?;
                if space.factors()[pos].dimension() != f.dimension() {
                    return Err(HilbertError::FactorDimensionMismatch {
                        label: f.label().to_string(),
                        got: f.dimension(),
                        want: space.factors()[pos].dimension(),
                    });
                }
                Ok(pos)
            })
            .collect::<Result<_, _>>()
            .map_err(UniverseError::from)
    }

    /// Local basis index of a global one, over this system's factors in
    /// their stored order.
    pub fn local_index(&self, space: &CompositeSpace, positions: &[usize], global: usize) -> usize {
        let mut l = 0usize;
        for (&p, f) in positions.iter().zip(&self.factors) {
            l = l * f.dimension() + space.digit_at(global, p);
        }
        l
    }

    /// Condition owning a local basis index, for partition families.
    pub fn condition_of_local(&self, local: usize) -> Option<usize> {
        match &self.rep {
            ProjectorRep::Partition(cells) => cells
                .iter()
                .position(|cell| cell.contains(&local)),
            ProjectorRep::Explicit(_) => None,
        }
    }

    /// Require `validate_family` to pass, rendering failures into the
    /// error.
    pub fn require_valid(&self, tol: &Tolerances) -> Result<(), UniverseError> {
        let report = validate_family(self, tol);
        if report.is_valid() {
            Ok(())
        } else {
            Err(UniverseError::InvalidFamily {
                system: self.name.clone(),
                report: report.to_string(),
            })
        }
    }
}

fn check_conditions(name: &str, conditions: &[String]) -> Result<(), UniverseError> {
    if conditions.is_empty() {
        return Err(UniverseError::NoConditions(name.to_string()));
    }
    if conditions[0] != ABSENT_CONDITION {
        return Err(UniverseError::MissingAbsent {
            system: name.to_string(),
            got: conditions[0].clone(),
        });
    }
    for (i, c) in conditions.iter().enumerate() {
        if conditions[..i].contains(c) {
            return Err(UniverseError::DuplicateCondition {
                system: name.to_string(),
                label: c.clone(),
            });
        }
    }
    Ok(())
}

/// Check pairwise orthogonality, completeness, and per-projector validity
/// of a family. Failures are reported, not thrown; residuals are
/// Frobenius norms on the system's local space.
pub fn validate_family(sys: &SystemSpec, tol: &Tolerances) -> ValidationReport {
    let mut failures = Vec::new();
    let k = sys.conditions().len();
    let dim = sys.local_dimension();

    match sys.rep() {
        ProjectorRep::Partition(cells) => {
            // Partition projectors are exact; residuals follow from set
            // combinatorics. Orthogonality fails by √|A∩B|, completeness
            // by the multiset deviation from exact cover.
            for a in 0..k {
                for b in (a + 1)..k {
                    let overlap = cells[a].iter().filter(|ix| cells[b].contains(ix)).count();
                    if overlap > 0 {
                        failures.push(ValidationFailure::Orthogonality {
                            a: sys.conditions()[a].clone(),
                            b: sys.conditions()[b].clone(),
                            residual: (overlap as f64).sqrt(),
                        });
                    }
                }
            }
            let mut counts = vec![0usize; dim];
            for cell in cells {
                for &ix in cell {
                    counts[ix] += 1;
                }
            }
            let sq: f64 = counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - 1.0;
                    d * d
                })
                .sum();
            if sq > 0.0 {
                failures.push(ValidationFailure::Completeness { residual: sq.sqrt() });
            }
        }
        ProjectorRep::Explicit(_) => {
            let projectors: Vec<LinearOperator> =
                (0..k).map(|alpha| sys.local_projector(alpha)).collect();
            for (alpha, p) in projectors.iter().enumerate() {
                let idem = p
                    .compose(p)
                    .and_then(|pp| pp.frobenius_distance(p))
                    .expect("same space");
                if idem > tol.op {
                    failures.push(ValidationFailure::NotIdempotent {
                        condition: sys.conditions()[alpha].clone(),
                        residual: idem,
                    });
                }
                let herm = p.frobenius_distance(&p.adjoint()).expect("same space");
                if herm > tol.op {
                    failures.push(ValidationFailure::NotHermitian {
                        condition: sys.conditions()[alpha].clone(),
                        residual: herm,
                    });
                }
            }
            for a in 0..k {
                for b in (a + 1)..k {
                    let prod = projectors[a].compose(&projectors[b]).expect("same space");
                    let residual = prod.frobenius_norm();
                    if residual > tol.op {
                        failures.push(ValidationFailure::Orthogonality {
                            a: sys.conditions()[a].clone(),
                            b: sys.conditions()[b].clone(),
                            residual,
                        });
                    }
                }
            }
            let mut sum = LinearOperator::zero(&sys.local_space());
            for p in &projectors {
                sum = sum.add(p).expect("same space");
            }
            let residual = sum
                .frobenius_distance(&LinearOperator::identity(&sys.local_space()))
                .expect("same space");
            if residual > tol.op {
                failures.push(ValidationFailure::Completeness { residual });
            }
        }
    }

    ValidationReport {
        system: sys.name().to_string(),
        failures,
    }
}

/// The magnitude and unit eigenstate of one condition of a system in a
/// universe state: P^α ψ = ψ^α |s^α⟩.
#[derive(Debug, Clone)]
pub struct ConditionAmplitude {
    pub condition: String,
    /// ‖P^α ψ‖.
    pub magnitude: f64,
    /// Unit eigenstate with canonical phase (first significant component
    /// real positive); `None` when the magnitude is below the branch
    /// tolerance.
    pub eigenstate: Option<StateVector>,
}

/// Compute ‖P^α ψ‖ and the gauge-fixed unit eigenstate for condition
/// `alpha` of a validated system.
pub fn condition_amplitude(
    psi: &StateVector,
    sys: &SystemSpec,
    alpha: &str,
    tol: &Tolerances,
) -> Result<ConditionAmplitude, UniverseError> {
    sys.require_valid(tol)?;
    psi.require_normalized(tol.norm).map_err(HilbertError::from)?;
    let ix = sys.condition_index(alpha)?;
    let raw = sys.apply_projector(ix, psi)?;
    let magnitude = raw.norm();
    let eigenstate = if magnitude >= tol.branch {
        let (state, _) = raw
            .scaled(Complex64::new(1.0 / magnitude, 0.0))
            .canonical_phase(tol.branch);
        Some(state)
    } else {
        None
    };
    Ok(ConditionAmplitude {
        condition: alpha.to_string(),
        magnitude,
        eigenstate,
    })
}
