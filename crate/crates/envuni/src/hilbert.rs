//! Dense complex linear algebra over labeled tensor-product spaces.
//!
//! A [`CompositeSpace`] is an ordered list of labeled factors; basis index
//! and mixed-radix digit tuple are in bijection, row-major over factor
//! order (the first factor is the most significant digit). States,
//! operators and density matrices are plain dense arrays over that basis.
//! Serialized amplitudes follow the same basis order, so states written by
//! one process load bit-identically in another.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Default guard on the total dimension of a composite space. Dense
/// matrices above this size stop being desk-scale; the guard can be
/// raised per space (or via `ENVUNI_DIM_CAP` in the CLI).
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Numerical tolerances used by validation and decision operations.
///
/// Pure algebra (tensor products, inner products, operator application)
/// never consults these; only operations that accept or reject something
/// do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// State normalization checks.
    pub norm: f64,
    /// Operator residuals: projector/unitary validity, correlation.
    pub op: f64,
    /// Amplitude magnitude below which a branch counts as absent.
    pub branch: f64,
    /// Envariance residual decisions. Looser than `op` because two
    /// operator applications compound rounding.
    pub env: f64,
    /// Matching scenario amplitudes against rational weights.
    pub approx: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm: 1e-10,
            op: 1e-10,
            branch: 1e-12,
            env: 1e-8,
            approx: 1e-9,
        }
    }
}

impl Tolerances {
    /// Set every tolerance to `t` (the CLI `--tolerance` override).
    pub fn uniform(t: f64) -> Self {
        Self {
            norm: t,
            op: t,
            branch: t,
            env: t,
            approx: t,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("factor `{0}` must have dimension >= 1")]
    ZeroDimension(String),
    #[error("a composite space needs at least one factor")]
    NoFactors,
    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),
    #[error("factor `{label}` has dimension {got} here, {want} elsewhere")]
    FactorDimensionMismatch {
        label: String,
        got: usize,
        want: usize,
    },
    #[error("total dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("operands are defined on different spaces")]
    SpaceMismatch,
    #[error("expected {want} amplitudes for this space, got {got}")]
    LengthMismatch { want: usize, got: usize },
    #[error("matrix is {rows}x{cols}, space dimension is {dim}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("state has norm {norm:.6e}, not 1 within {tol:.1e}")]
    NotNormalized { norm: f64, tol: f64 },
    #[error("cannot normalize a state of norm {0:.3e}")]
    ZeroNorm(f64),
    #[error("partial trace must keep at least one factor")]
    EmptyKeep,
    #[error("basis digit {digit} out of range for factor `{label}` of dimension {dim}")]
    DigitRange {
        label: String,
        digit: usize,
        dim: usize,
    },
}

/// One labeled tensor factor of the universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSpace {
    label: String,
    dimension: usize,
}

impl FactorSpace {
    pub fn new(label: impl Into<String>, dimension: usize) -> Result<Self, HilbertError> {
        let label = label.into();
        if dimension == 0 {
            return Err(HilbertError::ZeroDimension(label));
        }
        Ok(Self { label, dimension })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// An ordered tensor product of labeled factors.
///
/// The basis is indexed row-major: index `i` corresponds to the digit
/// tuple `(d_0, …, d_{k-1})` with `i = Σ d_j · stride_j` and
/// `stride_j = Π_{l>j} dim_l`.
#[derive(Debug, Clone)]
pub struct CompositeSpace {
    factors: Vec<FactorSpace>,
    strides: Vec<usize>,
    total: usize,
    cap: usize,
}

impl PartialEq for CompositeSpace {
    fn eq(&self, other: &Self) -> bool {
        // The cap is a construction guard, not part of the space identity.
        self.factors == other.factors
    }
}

impl CompositeSpace {
    pub fn new(factors: Vec<FactorSpace>) -> Result<Self, HilbertError> {
        Self::with_dim_cap(factors, DEFAULT_DIM_CAP)
    }

    /// Build a space under an explicit dimension guard.
    pub fn with_dim_cap(factors: Vec<FactorSpace>, cap: usize) -> Result<Self, HilbertError> {
        if factors.is_empty() {
            return Err(HilbertError::NoFactors);
        }
        for (i, f) in factors.iter().enumerate() {
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(HilbertError::DuplicateLabel(f.label.clone()));
            }
        }
        let mut total: usize = 1;
        for f in &factors {
            total = total
                .checked_mul(f.dimension)
                .ok_or(HilbertError::DimensionCap {
                    dim: usize::MAX,
                    cap,
                })?;
        }
        if total > cap {
            return Err(HilbertError::DimensionCap { dim: total, cap });
        }
        let mut strides = vec![1usize; factors.len()];
        for j in (0..factors.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * factors[j + 1].dimension;
        }
        Ok(Self {
            factors,
            strides,
            total,
            cap,
        })
    }

    pub fn factors(&self) -> &[FactorSpace] {
        &self.factors
    }

    pub fn total_dimension(&self) -> usize {
        self.total
    }

    pub fn dim_cap(&self) -> usize {
        self.cap
    }

    pub fn factor_position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn stride(&self, position: usize) -> usize {
        self.strides[position]
    }

    /// Mixed-radix digits of a basis index, one per factor.
    pub fn digits(&self, index: usize) -> Vec<usize> {
        self.factors
            .iter()
            .zip(&self.strides)
            .map(|(f, s)| (index / s) % f.dimension)
            .collect()
    }

    /// Basis index of a digit tuple. Digits must already be in range.
    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.strides)
            .map(|(d, s)| d * s)
            .sum()
    }

    /// Digit of `index` for the factor at `position`.
    pub fn digit_at(&self, index: usize, position: usize) -> usize {
        (index / self.strides[position]) % self.factors[position].dimension
    }
}

/// A complex amplitude vector over a composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: CompositeSpace,
    amplitudes: Array1<Complex64>,
}

impl StateVector {
    pub fn new(space: CompositeSpace, amplitudes: Array1<Complex64>) -> Result<Self, HilbertError> {
        if amplitudes.len() != space.total_dimension() {
            return Err(HilbertError::LengthMismatch {
                want: space.total_dimension(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { space, amplitudes })
    }

    /// The basis state |d_0 d_1 …⟩ for one digit per factor.
    pub fn basis_state(space: CompositeSpace, digits: &[usize]) -> Result<Self, HilbertError> {
        if digits.len() != space.factors().len() {
            return Err(HilbertError::LengthMismatch {
                want: space.factors().len(),
                got: digits.len(),
            });
        }
        for (d, f) in digits.iter().zip(space.factors()) {
            if *d >= f.dimension() {
                return Err(HilbertError::DigitRange {
                    label: f.label().to_string(),
                    digit: *d,
                    dim: f.dimension(),
                });
            }
        }
        let mut amplitudes = Array1::zeros(space.total_dimension());
        amplitudes[space.index_of(digits)] = Complex64::new(1.0, 0.0);
        Ok(Self { space, amplitudes })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn require_normalized(&self, tol: f64) -> Result<(), HilbertError> {
        let norm = self.norm();
        if (norm - 1.0).abs() <= tol {
            Ok(())
        } else {
            Err(HilbertError::NotNormalized { norm, tol })
        }
    }

    pub fn normalized(&self) -> Result<Self, HilbertError> {
        let norm = self.norm();
        if norm < 1e-300 {
            return Err(HilbertError::ZeroNorm(norm));
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            space: self.space.clone(),
            amplitudes: self.amplitudes.mapv(|a| a * c),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, HilbertError> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(Self {
            space: self.space.clone(),
            amplitudes: &self.amplitudes + &other.amplitudes,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, HilbertError> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(Self {
            space: self.space.clone(),
            amplitudes: &self.amplitudes - &other.amplitudes,
        })
    }

    /// ‖self − other‖₂.
    pub fn distance(&self, other: &Self) -> Result<f64, HilbertError> {
        Ok(self.sub(other)?.norm())
    }

    /// Multiply by a global phase so the first component with modulus
    /// above `threshold` becomes real positive. Returns the gauge-fixed
    /// state and the removed phase factor e^{iφ} (so
    /// `returned.scaled(phase) == self`). A state with no component above
    /// the threshold is returned unchanged with phase 1.
    pub fn canonical_phase(&self, threshold: f64) -> (Self, Complex64) {
        for a in self.amplitudes.iter() {
            if a.norm() > threshold {
                let phase = a / a.norm();
                return (self.scaled(phase.conj()), phase);
            }
        }
        (self.clone(), Complex64::new(1.0, 0.0))
    }
}

/// Kronecker product of two states; the result's factor order is `a`'s
/// factors followed by `b`'s.
pub fn tensor(a: &StateVector, b: &StateVector) -> Result<StateVector, HilbertError> {
    let mut factors = a.space.factors().to_vec();
    factors.extend_from_slice(b.space.factors());
    let cap = a.space.dim_cap().max(b.space.dim_cap());
    let space = CompositeSpace::with_dim_cap(factors, cap)?;
    let nb = b.amplitudes.len();
    let mut amplitudes = Array1::zeros(space.total_dimension());
    for (i, ai) in a.amplitudes.iter().enumerate() {
        for (j, bj) in b.amplitudes.iter().enumerate() {
            amplitudes[i * nb + j] = ai * bj;
        }
    }
    StateVector::new(space, amplitudes)
}

/// ⟨a|b⟩, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Complex64, HilbertError> {
    if a.space != b.space {
        return Err(HilbertError::SpaceMismatch);
    }
    Ok(a.amplitudes
        .iter()
        .zip(b.amplitudes.iter())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// A dense linear operator on a composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    space: CompositeSpace,
    matrix: Array2<Complex64>,
}

impl LinearOperator {
    pub fn new(space: CompositeSpace, matrix: Array2<Complex64>) -> Result<Self, HilbertError> {
        let dim = space.total_dimension();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(HilbertError::ShapeMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                dim,
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &CompositeSpace) -> Self {
        Self {
            space: space.clone(),
            matrix: Array2::eye(space.total_dimension()),
        }
    }

    pub fn zero(space: &CompositeSpace) -> Self {
        Self {
            space: space.clone(),
            matrix: Array2::zeros((space.total_dimension(), space.total_dimension())),
        }
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    /// Matrix-vector product. The result is not re-normalized.
    pub fn apply(&self, s: &StateVector) -> Result<StateVector, HilbertError> {
        if self.space != s.space {
            return Err(HilbertError::SpaceMismatch);
        }
        StateVector::new(self.space.clone(), self.matrix.dot(&s.amplitudes))
    }

    /// `self · other` as an operator (apply `other` first).
    pub fn compose(&self, other: &Self) -> Result<Self, HilbertError> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(Self {
            space: self.space.clone(),
            matrix: self.matrix.dot(&other.matrix),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, HilbertError> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, HilbertError> {
        if self.space != other.space {
            return Err(HilbertError::SpaceMismatch);
        }
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.mapv(|a| a * c),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.t().mapv(|a| a.conj()),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.matrix)
    }

    /// ‖self − other‖_F.
    pub fn frobenius_distance(&self, other: &Self) -> Result<f64, HilbertError> {
        Ok(self.sub(other)?.frobenius_norm())
    }

    /// ‖P² − P‖_F ≤ tol and ‖P† − P‖_F ≤ tol.
    pub fn is_projector(&self, tol: f64) -> bool {
        let idem = frobenius(&(self.matrix.dot(&self.matrix) - &self.matrix));
        let herm = frobenius(&(self.adjoint().matrix - &self.matrix));
        idem <= tol && herm <= tol
    }

    /// ‖U†U − I‖_F ≤ tol.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let gram = self.adjoint().matrix.dot(&self.matrix);
        frobenius(&(gram - Array2::<Complex64>::eye(self.matrix.nrows()))) <= tol
    }
}

pub(crate) fn frobenius(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Positions in `space` of each factor of `local`, checking labels and
/// dimensions agree.
fn locate_factors(
    local: &CompositeSpace,
    space: &CompositeSpace,
) -> Result<Vec<usize>, HilbertError> {
    local
        .factors()
        .iter()
        .map(|f| {
            let pos = space
                .factor_position(f.label())
                .ok_or_else(|| HilbertError::UnknownLabel(f.label().to_string()))?;
            let want = space.factors()[pos].dimension();
            if want != f.dimension() {
                return Err(HilbertError::FactorDimensionMismatch {
                    label: f.label().to_string(),
                    got: f.dimension(),
                    want,
                });
            }
            Ok(pos)
        })
        .collect()
}

/// Offset table: local basis index → contribution to the global index.
fn embedding_offsets(local: &CompositeSpace, space: &CompositeSpace, positions: &[usize]) -> Vec<usize> {
    let local_dim = local.total_dimension();
    let mut offsets = vec![0usize; local_dim];
    for (l, off) in offsets.iter_mut().enumerate() {
        let digits = local.digits(l);
        *off = digits
            .iter()
            .zip(positions)
            .map(|(d, &p)| d * space.stride(p))
            .sum();
    }
    offsets
}

/// Embed an operator acting on a subset of factors into a larger space,
/// acting as the identity on all other factors. Operators lifted from
/// disjoint factor sets commute exactly.
pub fn lift(local: &LinearOperator, space: &CompositeSpace) -> Result<LinearOperator, HilbertError> {
    let positions = locate_factors(local.space(), space)?;
    let offsets = embedding_offsets(local.space(), space, &positions);
    let local_dim = local.space().total_dimension();
    let dim = space.total_dimension();
    let mut matrix = Array2::zeros((dim, dim));
    // Iterate over global rows; each row i couples only to columns that
    // share its digits outside the local factors.
    for i in 0..dim {
        let lrow = local_row_index(space, &positions, i);
        let base = i - offsets[lrow];
        for lcol in 0..local_dim {
            let v = local.matrix()[(lrow, lcol)];
            if v != Complex64::new(0.0, 0.0) {
                matrix[(i, base + offsets[lcol])] = v;
            }
        }
    }
    LinearOperator::new(space.clone(), matrix)
}

fn local_row_index(space: &CompositeSpace, positions: &[usize], global: usize) -> usize {
    let mut l = 0usize;
    for &p in positions {
        l = l * space.factors()[p].dimension() + space.digit_at(global, p);
    }
    l
}

/// Apply an operator defined on a subset of factors to a state on the full
/// space without materializing the lifted matrix. O(dim · local_dim).
pub fn apply_lifted(
    local: &LinearOperator,
    s: &StateVector,
) -> Result<StateVector, HilbertError> {
    let space = s.space();
    let positions = locate_factors(local.space(), space)?;
    let offsets = embedding_offsets(local.space(), space, &positions);
    let local_dim = local.space().total_dimension();
    let mut out = Array1::zeros(space.total_dimension());
    for i in 0..space.total_dimension() {
        let lrow = local_row_index(space, &positions, i);
        let base = i - offsets[lrow];
        let mut acc = Complex64::new(0.0, 0.0);
        for lcol in 0..local_dim {
            let v = local.matrix()[(lrow, lcol)];
            if v != Complex64::new(0.0, 0.0) {
                acc += v * s.amplitudes()[base + offsets[lcol]];
            }
        }
        out[i] = acc;
    }
    StateVector::new(space.clone(), out)
}

/// A Hermitian positive-semidefinite matrix of unit trace (possibly on a
/// sub-composite after tracing).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: CompositeSpace,
    matrix: Array2<Complex64>,
}

impl DensityMatrix {
    pub fn new(space: CompositeSpace, matrix: Array2<Complex64>) -> Result<Self, HilbertError> {
        let dim = space.total_dimension();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(HilbertError::ShapeMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                dim,
            });
        }
        Ok(Self { space, matrix })
    }

    /// |s⟩⟨s| for a unit state.
    pub fn pure(s: &StateVector) -> Self {
        let n = s.amplitudes.len();
        let mut matrix = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = s.amplitudes[i] * s.amplitudes[j].conj();
            }
        }
        Self {
            space: s.space.clone(),
            matrix,
        }
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        frobenius(&(self.matrix.t().mapv(|c| c.conj()) - &self.matrix))
    }

    /// Tr(ρ A) for a Hermitian observable A on the same space; the
    /// imaginary part (rounding only) is discarded.
    pub fn expectation(&self, op: &LinearOperator) -> Result<f64, HilbertError> {
        if self.space != *op.space() {
            return Err(HilbertError::SpaceMismatch);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                acc += self.matrix[(i, j)] * op.matrix()[(j, i)];
            }
        }
        Ok(acc.re)
    }
}

/// Trace out every factor not named in `keep`. The kept factors stay in
/// their original order; trace and positivity are preserved.
pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix, HilbertError> {
    if keep.is_empty() {
        return Err(HilbertError::EmptyKeep);
    }
    let space = rho.space();
    for label in keep {
        if space.factor_position(label).is_none() {
            return Err(HilbertError::UnknownLabel(label.to_string()));
        }
    }
    let (kept, traced): (Vec<usize>, Vec<usize>) = (0..space.factors().len())
        .partition(|&p| keep.contains(&space.factors()[p].label()));
    let kept_factors: Vec<FactorSpace> = kept.iter().map(|&p| space.factors()[p].clone()).collect();
    let kept_space = CompositeSpace::with_dim_cap(kept_factors, space.dim_cap())?;

    // Offset tables indexed by the kept/traced sub-bases.
    let kept_offsets = sub_basis_offsets(space, &kept);
    let traced_offsets = sub_basis_offsets(space, &traced);

    let dk = kept_offsets.len();
    let mut matrix = Array2::zeros((dk, dk));
    for (r, &ro) in kept_offsets.iter().enumerate() {
        for (c, &co) in kept_offsets.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &t in &traced_offsets {
                acc += rho.matrix()[(ro + t, co + t)];
            }
            matrix[(r, c)] = acc;
        }
    }
    DensityMatrix::new(kept_space, matrix)
}

/// Global-index offsets of every digit combination over the factors at
/// `positions` (all other digits zero), in row-major order over those
/// factors.
fn sub_basis_offsets(space: &CompositeSpace, positions: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &p in positions {
        let dim = space.factors()[p].dimension();
        let stride = space.stride(p);
        let mut next = Vec::with_capacity(offsets.len() * dim);
        for &o in &offsets {
            for d in 0..dim {
                next.push(o + d * stride);
            }
        }
        offsets = next;
    }
    offsets
}

/// Orthonormal basis of the column space of `m` (modified Gram–Schmidt,
/// columns in order, vectors with residual norm below `tol` skipped).
pub(crate) fn column_space_basis(m: &Array2<Complex64>, tol: f64) -> Vec<Array1<Complex64>> {
    let mut basis: Vec<Array1<Complex64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: Array1<Complex64> = m.column(j).to_owned();
        for b in &basis {
            let overlap: Complex64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
            v = &v - &b.mapv(|c| c * overlap);
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > tol {
            basis.push(v.mapv(|c| c / norm));
        }
    }
    basis
}
