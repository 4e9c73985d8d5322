//! Scenario files: versioned JSON with a kind tag and a kind-specific
//! payload, plus JSON forms of states, operators and systems.
//!
//! Complex numbers are always `[re, im]` pairs; amplitudes follow the
//! basis order fixed by the factor list. Unknown fields are rejected so
//! schema violations surface before dispatch.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{ExperimentDesign, ExperimentError};
use crate::hilbert::{
    CompositeSpace, FactorSpace, HilbertError, LinearOperator, StateVector, Tolerances,
};
use crate::histories::{HistoryError, RecordSet, UniverseModel};
use crate::measurement::{MeasurementError, MeasurementScenario, ScenarioOptions};
use crate::universe::{SystemSpec, UniverseError};

/// The scenario file format version this build reads and writes.
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported scenario version {got}; this build reads version {want}")]
    Version { got: u32, want: u32 },
    #[error("unknown scenario kind `{0}`")]
    UnknownKind(String),
    #[error("kind `{kind}` does not fit the `{command}` command")]
    KindMismatch { kind: String, command: String },
    #[error("system `{0}` needs exactly one of `partition` or `projectors`")]
    ProjectorChoice(String),
    #[error("measurement payload needs `amplitudes` or an explicit `state`")]
    MissingAmplitudes,
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// A complex number as its `[re, im]` wire form.
pub type ComplexPair = [f64; 2];

pub fn to_complex(pair: &ComplexPair) -> Complex64 {
    Complex64::new(pair[0], pair[1])
}

pub fn from_complex(c: Complex64) -> ComplexPair {
    [c.re, c.im]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDef {
    pub label: String,
    pub dimension: usize,
}

/// A state vector in wire form: factor list, then amplitudes in basis
/// order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerializedState {
    pub factors: Vec<FactorDef>,
    pub amplitudes: Vec<ComplexPair>,
}

impl SerializedState {
    pub fn from_state(state: &StateVector) -> Self {
        Self {
            factors: state
                .space()
                .factors()
                .iter()
                .map(|f| FactorDef {
                    label: f.label().to_string(),
                    dimension: f.dimension(),
                })
                .collect(),
            amplitudes: state.amplitudes().iter().map(|&a| from_complex(a)).collect(),
        }
    }

    pub fn to_state(&self, dim_cap: usize) -> Result<StateVector, ScenarioError> {
        let space = build_space(&self.factors, dim_cap)?;
        let amps: Array1<Complex64> = self.amplitudes.iter().map(to_complex).collect();
        Ok(StateVector::new(space, amps)?)
    }
}

/// An operator in wire form: factor list, then the matrix row by row.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerializedOperator {
    pub factors: Vec<FactorDef>,
    pub matrix: Vec<Vec<ComplexPair>>,
}

impl SerializedOperator {
    pub fn from_operator(op: &LinearOperator) -> Self {
        let n = op.space().total_dimension();
        Self {
            factors: op
                .space()
                .factors()
                .iter()
                .map(|f| FactorDef {
                    label: f.label().to_string(),
                    dimension: f.dimension(),
                })
                .collect(),
            matrix: (0..n)
                .map(|i| (0..n).map(|j| from_complex(op.matrix()[(i, j)])).collect())
                .collect(),
        }
    }

    pub fn to_operator(&self, dim_cap: usize) -> Result<LinearOperator, ScenarioError> {
        let space = build_space(&self.factors, dim_cap)?;
        let n = space.total_dimension();
        let mut matrix = Array2::zeros((n, n));
        if self.matrix.len() != n {
            return Err(HilbertError::ShapeMismatch {
                rows: self.matrix.len(),
                cols: self.matrix.first().map_or(0, Vec::len),
                dim: n,
            }
            .into());
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != n {
                return Err(HilbertError::ShapeMismatch {
                    rows: self.matrix.len(),
                    cols: row.len(),
                    dim: n,
                }
                .into());
            }
            for (j, pair) in row.iter().enumerate() {
                matrix[(i, j)] = to_complex(pair);
            }
        }
        Ok(LinearOperator::new(space, matrix)?)
    }
}

fn build_space(factors: &[FactorDef], dim_cap: usize) -> Result<CompositeSpace, ScenarioError> {
    let factors = factors
        .iter()
        .map(|f| FactorSpace::new(f.label.clone(), f.dimension))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CompositeSpace::with_dim_cap(factors, dim_cap)?)
}

fn default_true() -> bool {
    true
}

/// Payload of `measurement` scenarios (also nested inside `envariance`
/// and usable by `born` runs derived from amplitudes).
///
/// Either `amplitudes` (one per condition; the correlated state is built
/// from them) or an explicit `state` over the full universe basis must be
/// given. An explicit state lets `measure` verify inputs that are not of
/// recorded-measurement form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementPayload {
    pub conditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<ComplexPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<ComplexPair>>,
    #[serde(default = "default_true")]
    pub apparatus: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absent_amplitude: Option<ComplexPair>,
}

impl MeasurementPayload {
    pub fn to_scenario(
        &self,
        dim_cap: usize,
        tol: &Tolerances,
    ) -> Result<MeasurementScenario, ScenarioError> {
        let amps: Vec<Complex64> = match &self.amplitudes {
            Some(pairs) => pairs.iter().map(to_complex).collect(),
            // Explicit-state payloads still need the system structure;
            // uniform placeholder amplitudes define it without affecting
            // the state under test.
            None if self.state.is_some() => {
                let k = self.conditions.len().max(1);
                let absent_sq = self
                    .absent_amplitude
                    .as_ref()
                    .map_or(0.0, |p| to_complex(p).norm_sqr());
                let each = ((1.0 - absent_sq) / k as f64).max(0.0).sqrt();
                vec![Complex64::new(each, 0.0); k]
            }
            None => return Err(ScenarioError::MissingAmplitudes),
        };
        Ok(MeasurementScenario::with_tolerances(
            &self.conditions,
            &amps,
            ScenarioOptions {
                apparatus: self.apparatus,
                absent_amplitude: self.absent_amplitude.as_ref().map(to_complex),
                dim_cap,
            },
            tol,
        )?)
    }

    /// The explicit state over the scenario's universe space, when one
    /// was supplied. Must be normalized.
    pub fn explicit_state(
        &self,
        scenario: &MeasurementScenario,
        tol: &Tolerances,
    ) -> Result<Option<StateVector>, ScenarioError> {
        let Some(pairs) = &self.state else {
            return Ok(None);
        };
        let amps: Array1<Complex64> = pairs.iter().map(to_complex).collect();
        let state = StateVector::new(scenario.space().clone(), amps)?;
        state.require_normalized(tol.norm)?;
        Ok(Some(state))
    }
}

/// The operation an `envariance` scenario asks about.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OperationSpec {
    /// One phase per interesting condition, radians (the absent condition
    /// keeps phase 0).
    Phase { sigmas: Vec<f64> },
    Swap { pair: [String; 2] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvariancePayload {
    pub scenario: MeasurementPayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<OperationSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BornPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<u64>>,
    /// Real amplitudes ψ_α (their squares are the branch weights).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_denominator: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPayload {
    pub outcomes: Vec<String>,
    pub amplitudes: Vec<ComplexPair>,
    pub runs: usize,
    pub seed: u64,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_band: Option<f64>,
}

impl ExperimentPayload {
    pub fn to_design(&self, tol: &Tolerances) -> Result<ExperimentDesign, ScenarioError> {
        let amps: Vec<Complex64> = self.amplitudes.iter().map(to_complex).collect();
        Ok(ExperimentDesign::with_tolerances(
            self.outcomes.clone(),
            amps,
            self.runs,
            self.seed,
            tol,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub name: String,
    pub factors: Vec<String>,
    pub conditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projectors: Option<Vec<Vec<Vec<ComplexPair>>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub system: String,
    pub condition: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesPayload {
    pub factors: Vec<FactorDef>,
    pub state: Vec<ComplexPair>,
    pub systems: Vec<SystemDef>,
    #[serde(default)]
    pub records: Vec<RecordEntry>,
}

impl HistoriesPayload {
    fn build_system(
        &self,
        def: &SystemDef,
        space: &CompositeSpace,
    ) -> Result<SystemSpec, ScenarioError> {
        let factors = def
            .factors
            .iter()
            .map(|label| {
                let pos = space
                    .factor_position(label)
                    .ok_or_else(|| HilbertError::UnknownLabel(label.clone()))?;
                Ok::<_, ScenarioError>(space.factors()[pos].clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        match (&def.partition, &def.projectors) {
            (Some(partition), None) => Ok(SystemSpec::from_partition(
                def.name.clone(),
                factors,
                def.conditions.clone(),
                partition.clone(),
            )?),
            (None, Some(projectors)) => {
                let dim: usize = factors.iter().map(|f| f.dimension()).product();
                let mats = projectors
                    .iter()
                    .map(|rows| {
                        let mut m = Array2::zeros((dim, dim));
                        if rows.len() != dim {
                            return Err(ScenarioError::from(HilbertError::ShapeMismatch {
                                rows: rows.len(),
                                cols: rows.first().map_or(0, Vec::len),
                                dim,
                            }));
                        }
                        for (i, row) in rows.iter().enumerate() {
                            if row.len() != dim {
                                return Err(ScenarioError::from(HilbertError::ShapeMismatch {
                                    rows: rows.len(),
                                    cols: row.len(),
                                    dim,
                                }));
                            }
                            for (j, pair) in row.iter().enumerate() {
                                m[(i, j)] = to_complex(pair);
                            }
                        }
                        Ok(m)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SystemSpec::from_projectors(
                    def.name.clone(),
                    factors,
                    def.conditions.clone(),
                    mats,
                )?)
            }
            _ => Err(ScenarioError::ProjectorChoice(def.name.clone())),
        }
    }

    /// Build just the system specs, without requiring valid families or a
    /// normalized state (the `validate` command reports on them instead).
    pub fn systems_only(&self, dim_cap: usize) -> Result<Vec<SystemSpec>, ScenarioError> {
        let space = build_space(&self.factors, dim_cap)?;
        self.systems
            .iter()
            .map(|def| self.build_system(def, &space))
            .collect()
    }

    /// Build the model and resolve the record log against it.
    pub fn to_model(
        &self,
        dim_cap: usize,
        tol: &Tolerances,
    ) -> Result<(UniverseModel, Vec<(String, String)>), ScenarioError> {
        let space = build_space(&self.factors, dim_cap)?;
        let amps: Array1<Complex64> = self.state.iter().map(to_complex).collect();
        let state = StateVector::new(space.clone(), amps)?;
        let systems = self
            .systems
            .iter()
            .map(|def| self.build_system(def, &space))
            .collect::<Result<Vec<_>, _>>()?;
        let model = UniverseModel::new(systems, state, tol)?;
        let records = self
            .records
            .iter()
            .map(|r| (r.system.clone(), r.condition.clone()))
            .collect();
        Ok((model, records))
    }

    /// The record log as a RecordSet (order preserved separately).
    pub fn record_set(&self, model: &UniverseModel) -> Result<RecordSet, ScenarioError> {
        let pairs: Vec<(&str, &str)> = self
            .records
            .iter()
            .map(|r| (r.system.as_str(), r.condition.as_str()))
            .collect();
        Ok(RecordSet::from_labels(model, &pairs)?)
    }
}

/// A parsed scenario file.
#[derive(Debug, Clone)]
pub enum ScenarioBody {
    Measurement(MeasurementPayload),
    Envariance(EnvariancePayload),
    Born(BornPayload),
    Experiment(ExperimentPayload),
    Histories(HistoriesPayload),
}

impl ScenarioBody {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioBody::Measurement(_) => "measurement",
            ScenarioBody::Envariance(_) => "envariance",
            ScenarioBody::Born(_) => "born",
            ScenarioBody::Experiment(_) => "experiment",
            ScenarioBody::Histories(_) => "histories",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: u32,
    kind: String,
    payload: serde_json::Value,
}

/// Parse and schema-validate a scenario file.
pub fn parse_scenario(json: &str) -> Result<ScenarioBody, ScenarioError> {
    let raw: RawScenario = serde_json::from_str(json)?;
    if raw.version != SCENARIO_VERSION {
        return Err(ScenarioError::Version {
            got: raw.version,
            want: SCENARIO_VERSION,
        });
    }
    let body = match raw.kind.as_str() {
        "measurement" => ScenarioBody::Measurement(serde_json::from_value(raw.payload)?),
        "envariance" => ScenarioBody::Envariance(serde_json::from_value(raw.payload)?),
        "born" => ScenarioBody::Born(serde_json::from_value(raw.payload)?),
        "experiment" => ScenarioBody::Experiment(serde_json::from_value(raw.payload)?),
        "histories" => ScenarioBody::Histories(serde_json::from_value(raw.payload)?),
        other => return Err(ScenarioError::UnknownKind(other.to_string())),
    };
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn measurement_scenario_roundtrip() {
        let json = r#"{
            "version": 1,
            "kind": "measurement",
            "payload": {
                "conditions": ["up", "down"],
                "amplitudes": [[0.7071067811865476, 0.0], [0.0, 0.7071067811865476]],
                "apparatus": false
            }
        }"#;
        let body = parse_scenario(json).unwrap();
        let ScenarioBody::Measurement(payload) = body else {
            panic!("wrong kind");
        };
        let scenario = payload.to_scenario(4096, &Tolerances::default()).unwrap();
        assert_eq!(scenario.conditions().len(), 3);
        assert!(scenario.apparatus().is_none());
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let json = r#"{
            "version": 1,
            "kind": "measurement",
            "payload": {
                "conditions": ["a"],
                "amplitudes": [[1.0, 0.0]],
                "unexpected": true
            }
        }"#;
        assert!(matches!(
            parse_scenario(json),
            Err(ScenarioError::Json(_))
        ));
    }

    #[test]
    fn version_and_kind_are_checked() {
        let wrong_version = r#"{"version": 2, "kind": "born", "payload": {}}"#;
        assert!(matches!(
            parse_scenario(wrong_version),
            Err(ScenarioError::Version { got: 2, .. })
        ));
        let wrong_kind = r#"{"version": 1, "kind": "quantum", "payload": {}}"#;
        assert!(matches!(
            parse_scenario(wrong_kind),
            Err(ScenarioError::UnknownKind(_))
        ));
    }

    #[test]
    fn state_roundtrips_through_wire_form() {
        let space = CompositeSpace::new(vec![
            FactorSpace::new("a", 2).unwrap(),
            FactorSpace::new("b", 2).unwrap(),
        ])
        .unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        let state = StateVector::new(
            space,
            ndarray::array![
                Complex64::new(s, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, 0.0)
            ],
        )
        .unwrap();
        let wire = SerializedState::from_state(&state);
        let json = serde_json::to_string(&wire).unwrap();
        let back: SerializedState = serde_json::from_str(&json).unwrap();
        let restored = back.to_state(4096).unwrap();
        assert_abs_diff_eq!(restored.distance(&state).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn operator_roundtrips_through_wire_form() {
        let space = CompositeSpace::new(vec![FactorSpace::new("q", 2).unwrap()]).unwrap();
        let op = LinearOperator::new(
            space,
            ndarray::array![
                [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
                [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)]
            ],
        )
        .unwrap();
        let wire = SerializedOperator::from_operator(&op);
        let back = wire.to_operator(4096).unwrap();
        assert_abs_diff_eq!(back.frobenius_distance(&op).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn histories_payload_builds_a_model() {
        let json = r#"{
            "version": 1,
            "kind": "histories",
            "payload": {
                "factors": [{"label": "x", "dimension": 2}, {"label": "y", "dimension": 2}],
                "state": [[0.7071067811865476, 0.0], [0.0, 0.0], [0.0, 0.0], [0.7071067811865476, 0.0]],
                "systems": [
                    {"name": "X", "factors": ["x"], "conditions": ["absent", "lo", "hi"], "partition": [[], [0], [1]]},
                    {"name": "Y", "factors": ["y"], "conditions": ["absent", "lo", "hi"], "partition": [[], [0], [1]]}
                ],
                "records": [{"system": "X", "condition": "lo"}]
            }
        }"#;
        let ScenarioBody::Histories(payload) = parse_scenario(json).unwrap() else {
            panic!("wrong kind");
        };
        let (model, records) = payload.to_model(4096, &Tolerances::default()).unwrap();
        assert_eq!(model.systems().len(), 2);
        assert_eq!(records, vec![("X".to_string(), "lo".to_string())]);
        let set = payload.record_set(&model).unwrap();
        assert!(set.contains(0));
    }

    #[test]
    fn explicit_projectors_are_accepted() {
        let json = r#"{
            "version": 1,
            "kind": "histories",
            "payload": {
                "factors": [{"label": "q", "dimension": 2}],
                "state": [[1.0, 0.0], [0.0, 0.0]],
                "systems": [{
                    "name": "Q",
                    "factors": ["q"],
                    "conditions": ["absent", "plus", "minus"],
                    "projectors": [
                        [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]],
                        [[[0.5, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.5, 0.0]]],
                        [[[0.5, 0.0], [-0.5, 0.0]], [[-0.5, 0.0], [0.5, 0.0]]]
                    ]
                }],
                "records": []
            }
        }"#;
        let ScenarioBody::Histories(payload) = parse_scenario(json).unwrap() else {
            panic!("wrong kind");
        };
        let (model, _) = payload.to_model(4096, &Tolerances::default()).unwrap();
        assert_eq!(model.systems()[0].conditions().len(), 3);
    }

    #[test]
    fn partition_or_projectors_is_mandatory() {
        let json = r#"{
            "version": 1,
            "kind": "histories",
            "payload": {
                "factors": [{"label": "q", "dimension": 2}],
                "state": [[1.0, 0.0], [0.0, 0.0]],
                "systems": [{"name": "Q", "factors": ["q"], "conditions": ["absent", "a", "b"]}],
                "records": []
            }
        }"#;
        let ScenarioBody::Histories(payload) = parse_scenario(json).unwrap() else {
            panic!("wrong kind");
        };
        assert!(matches!(
            payload.to_model(4096, &Tolerances::default()),
            Err(ScenarioError::ProjectorChoice(_))
        ));
    }
}
