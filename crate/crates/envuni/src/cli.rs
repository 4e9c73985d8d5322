//! Command runners behind the batch front-end: load a scenario, dispatch
//! to the modules, and assemble a report with explicit pass/fail checks.
//!
//! Reports are deterministic: no timestamps, stable field order, the seed
//! echoed whenever anything was sampled, and every numeric check carrying
//! the tolerance it was judged against. Exit policy: 0 when all checks
//! pass, 1 on a failed numerical check, 2 on schema or usage errors.

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::born::{
    born_probabilities, counting_oracle, fine_grain, rational_approximation, RationalWeights,
};
use crate::envariance::{check_phase_envariance, check_swap_envariance, EnvarianceError};
use crate::experiments::{frequency_report, ExperimentDesign};
use crate::hilbert::{Tolerances, DEFAULT_DIM_CAP};
use crate::histories::{coarse_grain, record_update, reduce, RecordSet};
use crate::measurement::{
    build_measurement_state, decompose_branches, verify_correlation, MeasurementError,
    MeasurementScenario,
};
use crate::scenario::{
    parse_scenario, from_complex, BornPayload, ExperimentPayload, OperationSpec, ScenarioBody,
};
use crate::universe::{validate_family, SystemSpec};

/// Configuration shared by every command.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub tolerances: Tolerances,
    /// Dimension guard; the `ENVUNI_DIM_CAP` environment variable
    /// overrides the default.
    pub dim_cap: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

/// Input/configuration problems: exit code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    fn schema(e: impl std::fmt::Display) -> Self {
        CliError::Schema(e.to_string())
    }
}

/// One named numerical check with its verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl Check {
    fn against(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: residual <= tolerance,
            residual: Some(residual),
            tolerance: Some(tolerance),
        }
    }

    fn verdict(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            residual: None,
            tolerance: None,
        }
    }
}

/// The machine-readable result of one command run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 of the input file (or of the canonical flag string).
    pub inputs_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Human-readable table, printed to stdout; not part of the JSON.
    #[serde(skip)]
    pub table: String,
    /// CSV rows (experiment distribution only); written via `--csv`.
    #[serde(skip)]
    pub csv: Option<String>,
}

impl RunReport {
    fn assemble(
        command: &str,
        digest_source: &str,
        seed: Option<u64>,
        tolerances: &Tolerances,
        results: serde_json::Value,
        checks: Vec<Check>,
        table: String,
        csv: Option<String>,
    ) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self {
            command: command.to_string(),
            inputs_digest: digest(digest_source),
            seed,
            tolerances: *tolerances,
            results,
            checks,
            passed,
            table,
            csv,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// The stdout rendering: table first, then one line per check.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command: {}\n", self.command));
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed: {seed}\n"));
        }
        if !self.table.is_empty() {
            out.push_str(&self.table);
            if !self.table.ends_with('\n') {
                out.push('\n');
            }
        }
        for check in &self.checks {
            let mark = if check.passed { "PASS" } else { "FAIL" };
            match (check.residual, check.tolerance) {
                (Some(r), Some(t)) => out.push_str(&format!(
                    "[{mark}] {} (residual {r:.3e}, tolerance {t:.1e})\n",
                    check.name
                )),
                _ => out.push_str(&format!("[{mark}] {}\n", check.name)),
            }
        }
        out.push_str(&format!(
            "result: {}\n",
            if self.passed { "pass" } else { "fail" }
        ));
        out
    }
}

fn digest(source: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn complex_json(c: Complex64) -> serde_json::Value {
    json!(from_complex(c))
}

/// `validate`: check every projector family a scenario defines.
pub fn run_validate(source: &str, cfg: &CliConfig) -> Result<RunReport, CliError> {
    let body = parse_scenario(source).map_err(CliError::schema)?;
    let systems: Vec<SystemSpec> = match &body {
        ScenarioBody::Measurement(p) => scenario_systems(
            &p.to_scenario(cfg.dim_cap, &cfg.tolerances)
                .map_err(CliError::schema)?,
        ),
        ScenarioBody::Envariance(p) => scenario_systems(
            &p.scenario
                .to_scenario(cfg.dim_cap, &cfg.tolerances)
                .map_err(CliError::schema)?,
        ),
        ScenarioBody::Born(p) => {
            let weights = match (&p.weights, &p.amplitudes) {
                (Some(w), None) => RationalWeights::new(w.clone()).map_err(CliError::schema)?,
                (None, Some(a)) => {
                    let max_den = p.max_denominator.unwrap_or(1_000_000);
                    rational_approximation(a, max_den, &cfg.tolerances)
                        .map_err(CliError::schema)?
                        .weights
                }
                _ => {
                    return Err(CliError::Schema(
                        "born payload needs exactly one of weights or amplitudes".into(),
                    ))
                }
            };
            let labels: Vec<String> =
                (1..=weights.counts().len()).map(|i| i.to_string()).collect();
            scenario_systems(&weights.scenario(&labels).map_err(CliError::schema)?)
        }
        ScenarioBody::Histories(p) => p.systems_only(cfg.dim_cap).map_err(CliError::schema)?,
        ScenarioBody::Experiment(_) => {
            return Err(CliError::Schema(
                "experiment scenarios define no projector families to validate".into(),
            ))
        }
    };

    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut table = String::from("system      conditions  verdict\n");
    for sys in &systems {
        let report = validate_family(sys, &cfg.tolerances);
        let worst = report
            .failures
            .iter()
            .map(|f| match f {
                crate::universe::ValidationFailure::Orthogonality { residual, .. }
                | crate::universe::ValidationFailure::Completeness { residual }
                | crate::universe::ValidationFailure::NotIdempotent { residual, .. }
                | crate::universe::ValidationFailure::NotHermitian { residual, .. } => *residual,
            })
            .fold(0.0f64, f64::max);
        table.push_str(&format!(
            "{:<11} {:<11} {}\n",
            sys.name(),
            sys.conditions().len(),
            if report.is_valid() { "valid" } else { "INVALID" }
        ));
        rows.push(json!({
            "system": sys.name(),
            "valid": report.is_valid(),
            "failures": report.failures.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        }));
        checks.push(Check::against(
            format!("family `{}` valid", sys.name()),
            worst,
            cfg.tolerances.op,
        ));
    }
    Ok(RunReport::assemble(
        "validate",
        source,
        None,
        &cfg.tolerances,
        json!({ "kind": body.kind(), "families": rows }),
        checks,
        table,
        None,
    ))
}

fn scenario_systems(scenario: &MeasurementScenario) -> Vec<SystemSpec> {
    let mut systems = vec![scenario.environment().clone()];
    if let Some(a) = scenario.apparatus() {
        systems.push(a.clone());
    }
    systems.push(scenario.system().clone());
    systems
}

/// `measure`: build the correlated state, verify all pairwise record
/// correlations, and decompose into branches.
pub fn run_measure(source: &str, cfg: &CliConfig) -> Result<RunReport, CliError> {
    let body = parse_scenario(source).map_err(CliError::schema)?;
    let ScenarioBody::Measurement(payload) = body else {
        return Err(CliError::Schema(format!(
            "kind `{}` does not fit the `measure` command",
            body.kind()
        )));
    };
    let scenario = payload
        .to_scenario(cfg.dim_cap, &cfg.tolerances)
        .map_err(CliError::schema)?;
    let tol = &cfg.tolerances;
    let psi = match payload.explicit_state(&scenario, tol).map_err(CliError::schema)? {
        Some(state) => state,
        None => build_measurement_state(&scenario).map_err(CliError::schema)?,
    };

    let mut checks = Vec::new();
    let mut correlations = Vec::new();
    let mut pairs: Vec<(&SystemSpec, &SystemSpec, &str)> = Vec::new();
    if let Some(a) = scenario.apparatus() {
        pairs.push((scenario.environment(), a, "E-A"));
        pairs.push((a, scenario.system(), "A-S"));
    }
    pairs.push((scenario.environment(), scenario.system(), "E-S"));
    for (a, b, label) in pairs {
        let report = verify_correlation(&psi, a, b, tol).map_err(CliError::schema)?;
        checks.push(Check::against(
            format!("correlation {label}"),
            report.max_residual,
            tol.op,
        ));
        correlations.push(json!({
            "pair": label,
            "max_residual": report.max_residual,
            "worst": [report.worst.0, report.worst.1],
        }));
    }

    let mut table = String::new();
    let mut branch_rows = Vec::new();
    let mut dropped: Vec<String> = Vec::new();
    let mut reconstruction_residual = None;
    match decompose_branches(&psi, scenario.environment(), scenario.system(), tol) {
        Ok(decomposition) => {
            table.push_str("condition   amplitude                probability\n");
            let absent = &scenario.conditions()[0];
            for branch in &decomposition.branches {
                let flag = if &branch.condition == absent {
                    "  [absent-condition branch]"
                } else {
                    ""
                };
                table.push_str(&format!(
                    "{:<11} {:>+10.6} {:>+10.6}i  {:<10.6}{}\n",
                    branch.condition,
                    branch.amplitude.re,
                    branch.amplitude.im,
                    branch.amplitude.norm_sqr(),
                    flag,
                ));
                branch_rows.push(json!({
                    "condition": branch.condition,
                    "amplitude": complex_json(branch.amplitude),
                    "probability": branch.amplitude.norm_sqr(),
                    "absent": &branch.condition == absent,
                }));
            }
            dropped = decomposition.dropped.clone();
            let rebuilt = crate::measurement::reconstruct(&decomposition)
                .map_err(CliError::schema)?;
            let residual = rebuilt.distance(&psi).map_err(CliError::schema)?;
            reconstruction_residual = Some(residual);
            checks.push(Check::against("branch reconstruction", residual, 1e-9));
            let total: f64 = decomposition
                .branches
                .iter()
                .map(|b| b.amplitude.norm_sqr())
                .sum();
            checks.push(Check::against(
                "branch weights sum to 1",
                (total - 1.0).abs(),
                1e-9,
            ));
        }
        Err(MeasurementError::CorrelationViolated { residual, tol }) => {
            checks.push(Check::against(
                "state is of recorded-measurement form",
                residual,
                tol,
            ));
        }
        Err(other) => return Err(CliError::schema(other)),
    }

    Ok(RunReport::assemble(
        "measure",
        source,
        None,
        tol,
        json!({
            "conditions": scenario.conditions(),
            "correlations": correlations,
            "branches": branch_rows,
            "dropped": dropped,
            "reconstruction_residual": reconstruction_residual,
        }),
        checks,
        table,
        None,
    ))
}

/// `envariance`: decide a phase or swap certificate for a scenario.
pub fn run_envariance(
    source: &str,
    operation_flag: Option<OperationSpec>,
    cfg: &CliConfig,
) -> Result<RunReport, CliError> {
    let body = parse_scenario(source).map_err(CliError::schema)?;
    let (scenario_payload, payload_op) = match body {
        ScenarioBody::Envariance(p) => (p.scenario, p.operation),
        ScenarioBody::Measurement(p) => (p, None),
        other => {
            return Err(CliError::Schema(format!(
                "kind `{}` does not fit the `envariance` command",
                other.kind()
            )))
        }
    };
    let operation = operation_flag
        .or(payload_op)
        .ok_or_else(|| CliError::Schema("no operation: give --phase or --swap".into()))?;
    let scenario = scenario_payload
        .to_scenario(cfg.dim_cap, &cfg.tolerances)
        .map_err(CliError::schema)?;
    let tol = &cfg.tolerances;
    let psi = match scenario_payload
        .explicit_state(&scenario, tol)
        .map_err(CliError::schema)?
    {
        Some(state) => state,
        None => build_measurement_state(&scenario).map_err(CliError::schema)?,
    };

    let (cert_result, op_json) = match &operation {
        OperationSpec::Phase { sigmas } => {
            if sigmas.len() != scenario.system().interesting_conditions().len() {
                return Err(CliError::Schema(format!(
                    "got {} phases for {} conditions",
                    sigmas.len(),
                    scenario.system().interesting_conditions().len()
                )));
            }
            let mut full = vec![0.0];
            full.extend_from_slice(sigmas);
            let cert =
                check_phase_envariance(&psi, scenario.system(), &scenario.record_side(), &full, tol);
            (cert, json!({ "phase": { "sigmas": sigmas } }))
        }
        OperationSpec::Swap { pair } => {
            let cert = check_swap_envariance(
                &psi,
                scenario.system(),
                &scenario.record_side(),
                &(pair[0].clone(), pair[1].clone()),
                tol,
            );
            (cert, json!({ "swap": { "pair": pair } }))
        }
    };

    let (checks, certificate_json, table) = match cert_result {
        Ok(certificate) => {
            // The decision quantity is the magnitude gap for swaps and
            // the state residual for phases; the certificate's verdict is
            // authoritative.
            let checks = vec![Check {
                name: "operation is envariant".into(),
                passed: certificate.envariant,
                residual: Some(certificate.magnitude_gap.unwrap_or(certificate.residual)),
                tolerance: Some(tol.env),
            }];
            let table = format!(
                "envariant: {}\nresidual:  {:.6e}\ncounter:   {}\n",
                certificate.envariant, certificate.residual, certificate.counter_op
            );
            let json = json!({
                "envariant": certificate.envariant,
                "residual": certificate.residual,
                "counter_op": certificate.counter_op,
                "magnitude_gap": certificate.magnitude_gap,
            });
            (checks, json, table)
        }
        Err(EnvarianceError::DecompositionFailed(MeasurementError::CorrelationViolated {
            residual,
            tol: bound,
        })) => {
            let checks = vec![Check::against(
                "state is of recorded-measurement form",
                residual,
                bound,
            )];
            let table = format!(
                "state is not of recorded-measurement form (correlation residual {residual:.6e})\n"
            );
            (checks, json!(null), table)
        }
        Err(other) => return Err(CliError::schema(other)),
    };

    Ok(RunReport::assemble(
        "envariance",
        source,
        None,
        tol,
        json!({
            "operation": op_json,
            "certificate": certificate_json,
        }),
        checks,
        table,
        None,
    ))
}

/// Flag-driven inputs for `born`.
#[derive(Debug, Clone, Default)]
pub struct BornArgs {
    pub source: Option<String>,
    pub weights: Option<Vec<u64>>,
    pub amplitudes: Option<Vec<f64>>,
    pub max_denominator: Option<u64>,
}

/// `born`: exact probabilities from weights, the fine-grained state when
/// it fits, and rational approximation for decimal amplitudes.
pub fn run_born(args: &BornArgs, cfg: &CliConfig) -> Result<RunReport, CliError> {
    let tol = &cfg.tolerances;
    let payload: BornPayload = match &args.source {
        Some(source) => {
            let body = parse_scenario(source).map_err(CliError::schema)?;
            match body {
                ScenarioBody::Born(p) => p,
                other => {
                    return Err(CliError::Schema(format!(
                        "kind `{}` does not fit the `born` command",
                        other.kind()
                    )))
                }
            }
        }
        None => BornPayload {
            weights: None,
            amplitudes: None,
            max_denominator: None,
        },
    };
    let weights_input = args.weights.as_deref().or(payload.weights.as_deref());
    let amplitudes_input = args
        .amplitudes
        .as_deref()
        .or(payload.amplitudes.as_deref());
    let max_denominator = args
        .max_denominator
        .or(payload.max_denominator)
        .unwrap_or(1_000_000);

    let mut checks = Vec::new();
    let mut approximation = serde_json::Value::Null;
    let (weights, condition_names): (RationalWeights, Vec<String>) =
        match (weights_input, amplitudes_input) {
            (Some(w), None) => {
                let weights = RationalWeights::new(w.to_vec()).map_err(CliError::schema)?;
                let names = (1..=w.len()).map(|i| i.to_string()).collect();
                (weights, names)
            }
            (None, Some(amps)) => {
                // Normalize typed decimals before approximating.
                let norm: f64 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(CliError::Schema("all amplitudes are zero".into()));
                }
                let normalized: Vec<f64> = amps.iter().map(|a| a / norm).collect();
                let approx = rational_approximation(&normalized, max_denominator, tol)
                    .map_err(CliError::schema)?;
                checks.push(Check::against(
                    "approximation error within 1/max_denominator",
                    approx.max_error,
                    1.0 / max_denominator as f64,
                ));
                let names = approx
                    .retained
                    .iter()
                    .map(|&i| (i + 1).to_string())
                    .collect();
                approximation = json!({
                    "max_denominator": max_denominator,
                    "max_error": approx.max_error,
                    "dropped_conditions": approx.dropped.iter().map(|&i| (i + 1).to_string()).collect::<Vec<_>>(),
                });
                (approx.weights, names)
            }
            _ => {
                return Err(CliError::Schema(
                    "give exactly one of --weights or --amplitudes".into(),
                ))
            }
        };

    let probabilities = born_probabilities(&weights);
    let total: crate::born::Probability = probabilities.iter().copied().sum();
    checks.push(Check::verdict(
        "probabilities sum to 1 exactly",
        total == crate::born::Probability::new(1, 1),
    ));

    let mut table = String::from("condition   m     M     probability   decimal\n");
    let mut rows = Vec::new();
    for ((name, &m), p) in condition_names
        .iter()
        .zip(weights.counts())
        .zip(&probabilities)
    {
        let decimal = *p.numer() as f64 / *p.denom() as f64;
        table.push_str(&format!(
            "{:<11} {:<5} {:<5} {:<13} {:.6}\n",
            name,
            m,
            weights.total(),
            format!("{}/{}", p.numer(), p.denom()),
            decimal
        ));
        rows.push(json!({
            "condition": name,
            "m": m,
            "M": weights.total(),
            "fraction": format!("{}/{}", p.numer(), p.denom()),
            "decimal": decimal,
        }));
    }

    // Fine-grain when the s ⊗ e ⊗ c space fits the dimension guard.
    let k = weights.counts().len();
    let m_total = weights.total() as usize;
    let fine_dim = k.saturating_mul(m_total).saturating_mul(m_total);
    let mut fine_json = json!({ "skipped": true, "dimension": fine_dim, "cap": cfg.dim_cap });
    if fine_dim <= cfg.dim_cap {
        let scenario = weights
            .scenario(&condition_names)
            .map_err(CliError::schema)?;
        let fine = fine_grain(&weights, &scenario, tol, cfg.dim_cap).map_err(CliError::schema)?;
        let want = 1.0 / (weights.total() as f64).sqrt();
        let coeff_residual = fine
            .branches
            .iter()
            .map(|b| (b.coefficient.norm() - want).abs())
            .fold(0.0f64, f64::max);
        checks.push(Check::against(
            "fine-grained coefficients all equal 1/sqrt(M)",
            coeff_residual,
            tol.op,
        ));
        let counted = counting_oracle(&fine, tol).map_err(CliError::schema)?;
        checks.push(Check::verdict(
            "counting oracle equals m/M exactly",
            counted == probabilities,
        ));
        fine_json = json!({
            "skipped": false,
            "branches": fine.total,
            "coefficient": want,
        });
    }

    let digest_source = args.source.clone().unwrap_or_else(|| {
        format!(
            "born weights={:?} amplitudes={:?} max_denominator={max_denominator}",
            weights_input, amplitudes_input
        )
    });
    Ok(RunReport::assemble(
        "born",
        &digest_source,
        None,
        tol,
        json!({
            "weights": { "counts": weights.counts(), "total": weights.total() },
            "probabilities": rows,
            "approximation": approximation,
            "fine_grain": fine_json,
        }),
        checks,
        table,
        None,
    ))
}

/// Flag-driven inputs for `experiment`.
#[derive(Debug, Clone, Default)]
pub struct ExperimentArgs {
    pub source: Option<String>,
    /// Real amplitudes; outcomes are auto-labeled 1..k.
    pub amplitudes: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub target: Option<String>,
    pub z_band: Option<f64>,
}

/// `experiment`: sample runs, compare the observed frequency against the
/// Bernoulli distribution and its concentration band.
pub fn run_experiment(args: &ExperimentArgs, cfg: &CliConfig) -> Result<RunReport, CliError> {
    let tol = &cfg.tolerances;
    let (design, target, z_band): (ExperimentDesign, String, Option<f64>) = match &args.source {
        Some(source) => {
            let body = parse_scenario(source).map_err(CliError::schema)?;
            let ScenarioBody::Experiment(p) = body else {
                return Err(CliError::Schema(format!(
                    "kind `{}` does not fit the `experiment` command",
                    body.kind()
                )));
            };
            let payload = ExperimentPayload {
                seed: args.seed.unwrap_or(p.seed),
                ..p
            };
            let design = payload.to_design(tol).map_err(CliError::schema)?;
            (design, payload.target, args.z_band.or(payload.z_band))
        }
        None => {
            let amplitudes = args
                .amplitudes
                .as_ref()
                .ok_or_else(|| CliError::Schema("give --amplitudes or a scenario file".into()))?;
            let runs = args
                .runs
                .ok_or_else(|| CliError::Schema("give --runs".into()))?;
            if runs == 0 {
                return Err(CliError::Schema("--runs must be at least 1".into()));
            }
            let target = args
                .target
                .clone()
                .ok_or_else(|| CliError::Schema("give --target".into()))?;
            let norm: f64 = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(CliError::Schema("all amplitudes are zero".into()));
            }
            let outcomes: Vec<String> = (1..=amplitudes.len()).map(|i| i.to_string()).collect();
            let amps: Vec<Complex64> = amplitudes
                .iter()
                .map(|a| Complex64::new(a / norm, 0.0))
                .collect();
            let design =
                ExperimentDesign::with_tolerances(outcomes, amps, runs, args.seed.unwrap_or(0), tol)
                    .map_err(CliError::schema)?;
            (design, target, args.z_band)
        }
    };

    let report = frequency_report(&design, &target).map_err(CliError::schema)?;

    let mut checks = vec![Check::against(
        "distribution normalized",
        (report.distribution.total_mass() - 1.0).abs(),
        1e-9,
    )];
    if design.runs() >= 100 {
        checks.push(Check::verdict(
            "distribution sharply peaked (>= 99% within 3 sigma)",
            report.concentration.sharply_peaked,
        ));
    }
    if let Some(z) = z_band {
        checks.push(Check::against(
            format!("observed frequency within {z} sigma of expectation"),
            report.z_score.abs(),
            z,
        ));
    }

    let embed_distribution = design.runs() <= 10_000;
    let distribution_json = if embed_distribution {
        json!(report
            .distribution
            .frequencies()
            .map(|(f, p)| json!([f, p]))
            .collect::<Vec<_>>())
    } else {
        json!(null)
    };
    let mut csv = String::from("f,p\n");
    for (f, p) in report.distribution.frequencies() {
        csv.push_str(&format!("{f},{p}\n"));
    }

    let table = format!(
        "target      {}\nruns        {}\nobserved_f  {:.6}\nexpected_f  {:.6}\nstd         {:.6}\nz           {:+.4}\n3σ band     [{:.6}, {:.6}]\nband mass   {:.6}\nmaverick    {:.3e}\n",
        report.target,
        report.runs,
        report.observed_f,
        report.expected_f,
        report.concentration.std,
        report.z_score,
        report.concentration.band.0,
        report.concentration.band.1,
        report.concentration.band_mass,
        report.concentration.maverick_mass,
    );
    let digest_source = args.source.clone().unwrap_or_else(|| {
        format!(
            "experiment amplitudes={:?} runs={:?} seed={} target={target}",
            args.amplitudes,
            design.runs(),
            design.seed()
        )
    });
    Ok(RunReport::assemble(
        "experiment",
        &digest_source,
        Some(design.seed()),
        tol,
        json!({
            "target": report.target,
            "runs": report.runs,
            "observed_f": report.observed_f,
            "expected_f": report.expected_f,
            "z_score": report.z_score,
            "concentration": {
                "n": report.concentration.n,
                "std": report.concentration.std,
                "band": [report.concentration.band.0, report.concentration.band.1],
                "band_mass": report.concentration.band_mass,
                "maverick_mass": report.concentration.maverick_mass,
            },
            "distribution": distribution_json,
        }),
        checks,
        table,
        Some(csv),
    ))
}

/// `collapse`: replay a record log step by step, reporting per-update
/// probabilities and the cumulative history weight.
pub fn run_collapse(source: &str, cfg: &CliConfig) -> Result<RunReport, CliError> {
    let body = parse_scenario(source).map_err(CliError::schema)?;
    let ScenarioBody::Histories(payload) = body else {
        return Err(CliError::Schema(format!(
            "kind `{}` does not fit the `collapse` command",
            body.kind()
        )));
    };
    let tol = &cfg.tolerances;
    let (model, records) = payload.to_model(cfg.dim_cap, tol).map_err(CliError::schema)?;

    let mut checks = Vec::new();
    let mut steps = Vec::new();
    let mut table = String::from("step  system      condition   probability  cumulative\n");
    let mut coarse = coarse_grain(&model, &RecordSet::new(), tol).map_err(CliError::schema)?;
    let mut product = 1.0f64;
    let mut consistent = true;
    let mut collapse_residual = 0.0f64;
    for (step, (system, condition)) in records.iter().enumerate() {
        let index = model.system_index(system).map_err(CliError::schema)?;
        match record_update(&model, &coarse, index, condition, tol) {
            Ok(update) => {
                product *= update.probability;
                // The new reduced state is an eigenstate of the recorded
                // condition: Tr(ρ' P^κ) = 1.
                let sys = model.system(index).map_err(CliError::schema)?;
                let kappa = sys.condition_index(condition).map_err(CliError::schema)?;
                let rho = reduce(&model, &update.state, index).map_err(CliError::schema)?;
                let expectation = rho
                    .expectation(&sys.local_projector(kappa))
                    .map_err(CliError::schema)?;
                collapse_residual = collapse_residual.max((expectation - 1.0).abs());
                table.push_str(&format!(
                    "{:<5} {:<11} {:<11} {:<12.6} {:<12.6}\n",
                    step + 1,
                    system,
                    condition,
                    update.probability,
                    update.state.weight
                ));
                steps.push(json!({
                    "step": step + 1,
                    "system": system,
                    "condition": condition,
                    "probability": update.probability,
                    "cumulative_weight": update.state.weight,
                    "reduced_expectation": expectation,
                }));
                coarse = update.state;
            }
            Err(crate::histories::HistoryError::ZeroProbability(norm)) => {
                consistent = false;
                steps.push(json!({
                    "step": step + 1,
                    "system": system,
                    "condition": condition,
                    "error": format!("zero-probability record (norm {norm:.3e})"),
                }));
                table.push_str(&format!(
                    "{:<5} {:<11} {:<11} contradictory record\n",
                    step + 1,
                    system,
                    condition
                ));
                break;
            }
            Err(other) => return Err(CliError::schema(other)),
        }
    }
    checks.push(Check::verdict("record sequence consistent", consistent));
    if consistent {
        checks.push(Check::against(
            "cumulative weight equals product of step probabilities",
            (coarse.weight - product).abs(),
            1e-9,
        ));
        if !records.is_empty() {
            checks.push(Check::against(
                "updated reduced states are record eigenstates",
                collapse_residual,
                1e-9,
            ));
        }
    }

    Ok(RunReport::assemble(
        "collapse",
        source,
        None,
        tol,
        json!({
            "systems": model.systems().iter().map(|s| s.name()).collect::<Vec<_>>(),
            "steps": steps,
            "final_weight": if consistent { json!(coarse.weight) } else { json!(null) },
        }),
        checks,
        table,
        None,
    ))
}
