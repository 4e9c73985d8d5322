//! Repeated-experiment statistics: the relative-frequency observable on
//! n-fold product states, its Bernoulli distribution, de Moivre–Laplace
//! concentration, and seeded Monte Carlo sampling of run outcomes.
//!
//! Large n never materializes a tensor state: the engine works in the
//! product probability measure, which agrees with the explicit state for
//! commuting record projectors. The explicit construction is kept as a
//! small-n oracle.

use ndarray::Array1;
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_core::{Rng, SeedableRng};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::hilbert::{CompositeSpace, FactorSpace, HilbertError, StateVector, Tolerances};

/// Guard on the Bernoulli distribution size; beyond n = 60 the
/// coefficients are computed in log space, and beyond the cap not at all.
pub const BINOMIAL_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("an experiment needs at least one run")]
    ZeroRuns,
    #[error("an experiment needs at least one outcome")]
    NoOutcomes,
    #[error("duplicate outcome label `{0}`")]
    DuplicateOutcome(String),
    #[error("got {amps} amplitudes for {outcomes} outcomes")]
    AmplitudeCount { amps: usize, outcomes: usize },
    #[error("outcome amplitudes have squared norm {0:.12}, expected 1")]
    NotNormalized(f64),
    #[error("unknown outcome label `{0}`")]
    UnknownOutcome(String),
    #[error("empty outcome sequence")]
    EmptySequence,
    #[error("sequence was sampled from different outcomes than this design")]
    VocabularyMismatch,
    #[error("{runs} runs exceed the binomial stability cap {cap}")]
    BinomialCap { runs: usize, cap: usize },
}

/// An identically-repeated experiment: one amplitude per outcome, a run
/// count, and the seed that makes sampling reproducible.
#[derive(Debug, Clone)]
pub struct ExperimentDesign {
    outcomes: Vec<String>,
    amplitudes: Vec<Complex64>,
    runs: usize,
    seed: u64,
}

impl ExperimentDesign {
    pub fn new(
        outcomes: Vec<String>,
        amplitudes: Vec<Complex64>,
        runs: usize,
        seed: u64,
    ) -> Result<Self, ExperimentError> {
        Self::with_tolerances(outcomes, amplitudes, runs, seed, &Tolerances::default())
    }

    pub fn with_tolerances(
        outcomes: Vec<String>,
        amplitudes: Vec<Complex64>,
        runs: usize,
        seed: u64,
        tol: &Tolerances,
    ) -> Result<Self, ExperimentError> {
        if runs == 0 {
            return Err(ExperimentError::ZeroRuns);
        }
        if outcomes.is_empty() {
            return Err(ExperimentError::NoOutcomes);
        }
        for (i, o) in outcomes.iter().enumerate() {
            if outcomes[..i].contains(o) {
                return Err(ExperimentError::DuplicateOutcome(o.clone()));
            }
        }
        if amplitudes.len() != outcomes.len() {
            return Err(ExperimentError::AmplitudeCount {
                amps: amplitudes.len(),
                outcomes: outcomes.len(),
            });
        }
        let sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (sq - 1.0).abs() > tol.norm {
            return Err(ExperimentError::NotNormalized(sq));
        }
        Ok(Self {
            outcomes,
            amplitudes,
            runs,
            seed,
        })
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn outcome_index(&self, label: &str) -> Result<usize, ExperimentError> {
        self.outcomes
            .iter()
            .position(|o| o == label)
            .ok_or_else(|| ExperimentError::UnknownOutcome(label.to_string()))
    }

    /// |ψ(ℓ)|² for one outcome.
    pub fn probability(&self, label: &str) -> Result<f64, ExperimentError> {
        Ok(self.amplitudes[self.outcome_index(label)?].norm_sqr())
    }
}

/// The outcomes of n runs, stored as indices into the design's outcome
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSequence {
    outcomes: Vec<String>,
    results: Vec<u32>,
}

impl OutcomeSequence {
    pub fn from_labels(
        outcomes: Vec<String>,
        labels: &[&str],
    ) -> Result<Self, ExperimentError> {
        let results = labels
            .iter()
            .map(|l| {
                outcomes
                    .iter()
                    .position(|o| o == l)
                    .map(|p| p as u32)
                    .ok_or_else(|| ExperimentError::UnknownOutcome(l.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { outcomes, results })
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn results(&self) -> impl Iterator<Item = &str> {
        self.results.iter().map(|&ix| self.outcomes[ix as usize].as_str())
    }

    pub fn indices(&self) -> &[u32] {
        &self.results
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.outcomes
    }

    /// Outcome counts aligned with the vocabulary.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.outcomes.len()];
        for &ix in &self.results {
            counts[ix as usize] += 1;
        }
        counts
    }
}

/// (1/n) Σ_i δ(m_i, ℓ).
pub fn relative_frequency(seq: &OutcomeSequence, ell: &str) -> Result<f64, ExperimentError> {
    if seq.is_empty() {
        return Err(ExperimentError::EmptySequence);
    }
    let hits = seq.results().filter(|m| *m == ell).count();
    Ok(hits as f64 / seq.len() as f64)
}

/// Expected relative frequency of outcome ℓ over the n-fold product
/// measure: |ψ(ℓ)|², independent of n.
pub fn frequency_expectation(
    design: &ExperimentDesign,
    ell: &str,
) -> Result<f64, ExperimentError> {
    design.probability(ell)
}

/// The distribution of the relative frequency f = j/n of one outcome:
/// p(f) = C(n, j) q^j (1−q)^{n−j}.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDistribution {
    n: usize,
    q: f64,
    /// probs[j] = P(f = j/n).
    probs: Vec<f64>,
}

impl FrequencyDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// (f, p) pairs in increasing f.
    pub fn frequencies(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(j, &p)| (j as f64 / self.n as f64, p))
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability mass at f within [lo, hi], inclusive.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        self.frequencies()
            .filter(|(f, _)| *f >= lo && *f <= hi)
            .map(|(_, p)| p)
            .sum()
    }

    /// Closed-form standard deviation of f: √(q(1−q)/n).
    pub fn std(&self) -> f64 {
        (self.q * (1.0 - self.q) / self.n as f64).sqrt()
    }
}

/// Bernoulli distribution of the relative frequency of outcome ℓ over n
/// independent runs. Exact recurrence up to n = 60, log-space binomials
/// beyond, hard error past [`BINOMIAL_CAP`].
pub fn frequency_distribution(
    design: &ExperimentDesign,
    ell: &str,
) -> Result<FrequencyDistribution, ExperimentError> {
    let n = design.runs;
    if n > BINOMIAL_CAP {
        return Err(ExperimentError::BinomialCap {
            runs: n,
            cap: BINOMIAL_CAP,
        });
    }
    let q = design.probability(ell)?;
    let mut probs = vec![0.0; n + 1];
    if q <= 0.0 {
        probs[0] = 1.0;
    } else if q >= 1.0 {
        probs[n] = 1.0;
    } else if n <= 60 {
        // p_{j+1} = p_j · (n−j)/(j+1) · q/(1−q), from p_0 = (1−q)^n.
        let ratio = q / (1.0 - q);
        let mut p = (1.0 - q).powi(n as i32);
        for j in 0..=n {
            probs[j] = p;
            if j < n {
                p *= ratio * (n - j) as f64 / (j + 1) as f64;
            }
        }
    } else {
        let ln_n = ln_gamma(n as f64 + 1.0);
        let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
        for (j, slot) in probs.iter_mut().enumerate() {
            let ln_c = ln_n - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0);
            *slot = (ln_c + j as f64 * ln_q + (n - j) as f64 * ln_1q).exp();
        }
    }
    Ok(FrequencyDistribution { n, q, probs })
}

/// Concentration diagnostics for the frequency distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub n: usize,
    pub q: f64,
    /// √(q(1−q)/n), closed form.
    pub std: f64,
    /// The ±3σ band around q, clamped to [0, 1].
    pub band: (f64, f64),
    /// Probability mass inside the band.
    pub band_mass: f64,
    /// Mass outside the band: the total weight of maverick branches whose
    /// frequency strays from the Born value. Reported, never suppressed.
    pub maverick_mass: f64,
    /// Whether band_mass ≥ 0.99 (the de Moivre–Laplace regime expectation
    /// for n ≥ 100).
    pub sharply_peaked: bool,
}

/// Check that the frequency distribution concentrates at q = |ψ(ℓ)|²
/// with std √(q(1−q)/n). Needs n ≥ 2 for a meaningful spread.
pub fn concentration_check(
    design: &ExperimentDesign,
    ell: &str,
) -> Result<ConcentrationReport, ExperimentError> {
    if design.runs < 2 {
        return Err(ExperimentError::ZeroRuns);
    }
    let distribution = frequency_distribution(design, ell)?;
    let q = distribution.q();
    let std = distribution.std();
    let band = ((q - 3.0 * std).max(0.0), (q + 3.0 * std).min(1.0));
    let band_mass = distribution.mass_within(band.0, band.1);
    Ok(ConcentrationReport {
        n: design.runs,
        q,
        std,
        band,
        band_mass,
        maverick_mass: (1.0 - band_mass).max(0.0),
        sharply_peaked: band_mass >= 0.99,
    })
}

/// Draw n i.i.d. outcomes with P(m) = |ψ(m)|², deterministically from the
/// design's seed.
///
/// Generator: ChaCha12 (`rand_chacha`), seeded with `seed_from_u64`,
/// stream 0. Each run consumes exactly one `u64`; the uniform variate is
/// the top 53 bits scaled by 2⁻⁵³, and the outcome is the first index
/// whose cumulative probability exceeds it. Parallel reimplementations
/// must reproduce this exact consumption order (or split runs across
/// ChaCha streams and merge counts, which are order-independent).
pub fn sample_runs(design: &ExperimentDesign) -> OutcomeSequence {
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    let cumulative: Vec<f64> = design
        .amplitudes
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a.norm_sqr();
            Some(*acc)
        })
        .collect();
    let last = design.outcomes.len() - 1;
    let results = (0..design.runs)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(last) as u32
        })
        .collect();
    OutcomeSequence {
        outcomes: design.outcomes.clone(),
        results,
    }
}

/// Probability of one complete outcome sequence under the product
/// measure: Π_i |ψ(m_i)|².
pub fn sequence_probability(
    design: &ExperimentDesign,
    seq: &OutcomeSequence,
) -> Result<f64, ExperimentError> {
    if seq.vocabulary() != design.outcomes() {
        return Err(ExperimentError::VocabularyMismatch);
    }
    Ok(seq
        .indices()
        .iter()
        .map(|&ix| design.amplitudes[ix as usize].norm_sqr())
        .product())
}

/// The explicit n-fold tensor state Σ ψ(m_1)···ψ(m_n) |m_1…m_n⟩ over
/// factors r1…rn. Small-n oracle for the product measure; errors once
/// (outcomes)^n exceeds the dimension cap.
pub fn explicit_product_state(
    design: &ExperimentDesign,
    dim_cap: usize,
) -> Result<StateVector, ExperimentError> {
    let k = design.outcomes.len();
    let single = |i: usize| -> Result<StateVector, ExperimentError> {
        let space = CompositeSpace::with_dim_cap(
            vec![FactorSpace::new(format!("r{}", i + 1), k).expect("k >= 1")],
            dim_cap,
        )?;
        let amps: Array1<Complex64> = design.amplitudes.iter().copied().collect();
        Ok(StateVector::new(space, amps)?)
    };
    let mut state = single(0)?;
    for i in 1..design.runs {
        state = crate::hilbert::tensor(&state, &single(i)?)?;
    }
    Ok(state)
}

/// Everything the CLI reports about one experiment: observed vs expected
/// frequency, the full distribution, and concentration diagnostics.
#[derive(Debug, Clone)]
pub struct FrequencyReport {
    pub target: String,
    pub runs: usize,
    pub seed: u64,
    pub observed_f: f64,
    pub expected_f: f64,
    pub z_score: f64,
    pub distribution: FrequencyDistribution,
    pub concentration: ConcentrationReport,
}

/// Sample the design once and compare the observed frequency of `ell`
/// against its distribution.
pub fn frequency_report(
    design: &ExperimentDesign,
    ell: &str,
) -> Result<FrequencyReport, ExperimentError> {
    let expected_f = frequency_expectation(design, ell)?;
    let sequence = sample_runs(design);
    let observed_f = relative_frequency(&sequence, ell)?;
    let distribution = frequency_distribution(design, ell)?;
    let concentration = concentration_check(design, ell)?;
    let z_score = if concentration.std > 0.0 {
        (observed_f - expected_f) / concentration.std
    } else {
        0.0
    };
    Ok(FrequencyReport {
        target: ell.to_string(),
        runs: design.runs,
        seed: design.seed,
        observed_f,
        expected_f,
        z_score,
        distribution,
        concentration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_outcome(q: f64, runs: usize, seed: u64) -> ExperimentDesign {
        ExperimentDesign::new(
            vec!["1".into(), "2".into()],
            vec![c(q.sqrt(), 0.0), c((1.0 - q).sqrt(), 0.0)],
            runs,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn relative_frequency_basics() {
        let vocab = vec!["a".to_string(), "b".to_string()];
        let all = OutcomeSequence::from_labels(vocab.clone(), &["a", "a", "a"]).unwrap();
        assert_abs_diff_eq!(relative_frequency(&all, "a").unwrap(), 1.0);
        let half = OutcomeSequence::from_labels(vocab, &["a", "b", "a", "b"]).unwrap();
        assert_abs_diff_eq!(relative_frequency(&half, "a").unwrap(), 0.5);
    }

    #[test]
    fn relative_frequency_matches_recount() {
        let design = two_outcome(0.37, 500, 7);
        let seq = sample_runs(&design);
        // Independent recount: walk the labels and tally by hand.
        let mut hits = 0usize;
        for m in seq.results() {
            if m == "1" {
                hits += 1;
            }
        }
        assert_abs_diff_eq!(
            relative_frequency(&seq, "1").unwrap(),
            hits as f64 / 500.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let seq = OutcomeSequence::from_labels(vec!["a".to_string()], &[]).unwrap();
        assert!(matches!(
            relative_frequency(&seq, "a"),
            Err(ExperimentError::EmptySequence)
        ));
    }

    #[test]
    fn expectation_is_the_outcome_probability() {
        let uniform = two_outcome(0.5, 10, 0);
        assert_abs_diff_eq!(frequency_expectation(&uniform, "1").unwrap(), 0.5);
        for runs in [1, 5, 1000] {
            let d = two_outcome(0.3, runs, 0);
            assert_abs_diff_eq!(
                frequency_expectation(&d, "1").unwrap(),
                0.3,
                epsilon = 1e-12
            );
        }
        assert!(matches!(
            frequency_expectation(&uniform, "zz"),
            Err(ExperimentError::UnknownOutcome(_))
        ));
    }

    /// Brute-force oracle: Σ over all outcome tuples of f_ℓ · Π |ψ(m_i)|².
    fn expectation_by_enumeration(design: &ExperimentDesign, ell: &str) -> f64 {
        let k = design.outcomes().len();
        let n = design.runs();
        let ell_ix = design.outcome_index(ell).unwrap();
        let probs: Vec<f64> = design.amplitudes().iter().map(|a| a.norm_sqr()).collect();
        let mut total = 0.0;
        let mut tuple = vec![0usize; n];
        loop {
            let weight: f64 = tuple.iter().map(|&m| probs[m]).product();
            let hits = tuple.iter().filter(|&&m| m == ell_ix).count();
            total += weight * hits as f64 / n as f64;
            // Odometer increment over k^n tuples.
            let mut pos = n;
            loop {
                if pos == 0 {
                    return total;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < k {
                    break;
                }
                tuple[pos] = 0;
            }
        }
    }

    #[test]
    fn expectation_matches_explicit_sum() {
        let design = ExperimentDesign::new(
            vec!["1".into(), "2".into()],
            vec![c(0.3f64.sqrt(), 0.0), c(0.7f64.sqrt(), 0.0)],
            3,
            0,
        )
        .unwrap();
        let brute = expectation_by_enumeration(&design, "1");
        assert_abs_diff_eq!(
            frequency_expectation(&design, "1").unwrap(),
            brute,
            epsilon = 1e-12
        );
    }

    #[test]
    fn distribution_for_single_run() {
        let d = two_outcome(0.3, 1, 0);
        let dist = frequency_distribution(&d, "1").unwrap();
        assert_abs_diff_eq!(dist.probs()[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probs()[1], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn distribution_for_fair_coin() {
        let d = two_outcome(0.5, 2, 0);
        let dist = frequency_distribution(&d, "1").unwrap();
        assert_abs_diff_eq!(dist.probs()[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probs()[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probs()[2], 0.25, epsilon = 1e-12);
    }

    /// Pascal-triangle oracle: B(n,j) built by the binomial recursion.
    fn pascal_distribution(n: usize, q: f64) -> Vec<f64> {
        let mut row = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; row.len() + 1];
            for (j, &p) in row.iter().enumerate() {
                next[j] += p * (1.0 - q);
                next[j + 1] += p * q;
            }
            row = next;
        }
        row
    }

    #[test]
    fn distribution_matches_pascal_oracle_and_peaks_at_q() {
        let d = two_outcome(0.3, 100, 0);
        let dist = frequency_distribution(&d, "1").unwrap();
        let oracle = pascal_distribution(100, 0.3);
        for (got, want) in dist.probs().iter().zip(&oracle) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-12);
        }
        let mode = dist
            .frequencies()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        assert_abs_diff_eq!(mode, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn log_space_distribution_stays_normalized() {
        for n in [61, 1000, 100_000] {
            let d = two_outcome(0.3, n, 0);
            let dist = frequency_distribution(&d, "1").unwrap();
            assert_abs_diff_eq!(dist.total_mass(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn binomial_cap_is_enforced() {
        let d = two_outcome(0.3, BINOMIAL_CAP + 1, 0);
        assert!(matches!(
            frequency_distribution(&d, "1"),
            Err(ExperimentError::BinomialCap { .. })
        ));
    }

    #[test]
    fn std_scales_as_inverse_sqrt_n() {
        let d100 = concentration_check(&two_outcome(0.5, 100, 0), "1").unwrap();
        let d400 = concentration_check(&two_outcome(0.5, 400, 0), "1").unwrap();
        assert_abs_diff_eq!(d400.std / d100.std, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn std_closed_form_at_n_1000() {
        let report = concentration_check(&two_outcome(0.3, 1000, 0), "1").unwrap();
        assert_abs_diff_eq!(report.std, (0.21f64 / 1000.0).sqrt(), epsilon = 1e-15);
        assert!(report.sharply_peaked);
        assert!(report.band_mass >= 0.99);
        assert_abs_diff_eq!(
            report.band_mass + report.maverick_mass,
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degenerate_probabilities_have_zero_std() {
        for q in [0.0, 1.0] {
            let report = concentration_check(&two_outcome(q, 50, 0), "1").unwrap();
            assert_abs_diff_eq!(report.std, 0.0);
            assert_abs_diff_eq!(report.band_mass, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn certain_outcome_samples_identically() {
        let d = two_outcome(1.0, 200, 9);
        let seq = sample_runs(&d);
        assert!(seq.results().all(|m| m == "1"));
    }

    #[test]
    fn same_seed_reproduces_the_sequence() {
        let d = two_outcome(0.3, 1000, 12345);
        let a = sample_runs(&d);
        let b = sample_runs(&d);
        assert_eq!(a, b);
        let other = two_outcome(0.3, 1000, 12346);
        assert_ne!(a, sample_runs(&other));
    }

    #[test]
    fn fixed_seed_lands_in_the_three_sigma_band() {
        let d = two_outcome(0.3, 10_000, 42);
        let seq = sample_runs(&d);
        let f = relative_frequency(&seq, "1").unwrap();
        let band = 3.0 * (0.21f64 / 10_000.0).sqrt();
        assert!((f - 0.3).abs() <= band, "f = {f}, band = {band}");
    }

    #[test]
    fn explicit_state_for_single_run_is_the_run_state() {
        let d = two_outcome(0.3, 1, 0);
        let s = explicit_product_state(&d, 4096).unwrap();
        assert_eq!(s.space().total_dimension(), 2);
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn explicit_state_amplitudes_are_products() {
        let d = ExperimentDesign::new(
            vec!["1".into(), "2".into()],
            vec![c(0.6, 0.0), c(0.0, 0.8)],
            2,
            0,
        )
        .unwrap();
        let s = explicit_product_state(&d, 4096).unwrap();
        assert_eq!(s.space().total_dimension(), 4);
        // Index (m1, m2) row-major; amplitude ψ(m1)ψ(m2).
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.36, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].im, 0.48, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[3].re, -0.64, epsilon = 1e-15);
    }

    #[test]
    fn product_measure_matches_explicit_state() {
        let d = ExperimentDesign::new(
            vec!["1".into(), "2".into()],
            vec![c(0.3f64.sqrt(), 0.0), c(0.7f64.sqrt(), 0.0)],
            3,
            0,
        )
        .unwrap();
        let s = explicit_product_state(&d, 4096).unwrap();
        let space = s.space();
        for index in 0..space.total_dimension() {
            let digits = space.digits(index);
            let labels: Vec<&str> = digits.iter().map(|&m| d.outcomes()[m].as_str()).collect();
            let seq = OutcomeSequence::from_labels(d.outcomes().to_vec(), &labels).unwrap();
            let engine = sequence_probability(&d, &seq).unwrap();
            let oracle = s.amplitudes()[index].norm_sqr();
            assert_abs_diff_eq!(engine, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_cap_guards_the_explicit_state() {
        let d = two_outcome(0.5, 13, 0);
        assert!(matches!(
            explicit_product_state(&d, 4096),
            Err(ExperimentError::Hilbert(HilbertError::DimensionCap { .. }))
        ));
    }

    #[test]
    fn report_assembles_consistently() {
        let d = two_outcome(0.3, 1000, 7);
        let report = frequency_report(&d, "1").unwrap();
        assert_eq!(report.runs, 1000);
        assert_eq!(report.seed, 7);
        assert_abs_diff_eq!(report.expected_f, 0.3, epsilon = 1e-12);
        let reconstructed = report.expected_f + report.z_score * report.concentration.std;
        assert_abs_diff_eq!(report.observed_f, reconstructed, epsilon = 1e-12);
    }
}
