//! The decoding pipeline, logical-failure test, direct Monte Carlo and
//! defect-count statistics.
//!
//! One trial samples an error, extracts its syndrome, runs the pre-decoder
//! when enabled, ships the remaining defects through the wire format, matches
//! them, and combines both corrections. The residual (error plus correction)
//! must have an empty syndrome; anything else is an invariant violation.
//!
//! Monte Carlo runs are deterministic: trial `i` always draws from stream `i`
//! of the master seed, trials execute in fixed-size batches, and the batch
//! results are folded in index order. The stop point is the exact trial at
//! which the failure target is reached, so the outcome does not depend on
//! the number of worker threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use crate::bits::Bits;
use crate::codec::{bandwidth_report, compress, decompress};
use crate::error::{Error, Result};
use crate::lattice::CodeLattice;
use crate::matching::{correction_from_matching, timed_mwpm, DefectGraph};
use crate::noise::{sample_error, syndrome_of, trial_rng, ErrorConfig, NoiseParams, SyndromeHistory};
use crate::predecoder::{Predecoder, PredecoderParams};

/// Trials per parallel batch. Fixed so that results never depend on the
/// thread count.
pub const BATCH_SIZE: u64 = 256;

/// Winding of a residual across the two cuts of the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LogicalFailure {
    /// Odd crossing of the vertical cut `qx = 0`.
    pub x: bool,
    /// Odd crossing of the horizontal cut `qy = 0`.
    pub y: bool,
}

impl LogicalFailure {
    pub fn either(&self) -> bool {
        self.x || self.y
    }
}

/// Homology class of a residual phase-flip pattern.
///
/// The residual must commute with every X-stabilizer; otherwise the
/// correction was inconsistent and an invariant violation is returned.
pub fn logical_failure(residual_qubits: &Bits, lattice: &CodeLattice) -> Result<LogicalFailure> {
    if residual_qubits.len() != lattice.n_qubits() {
        return Err(Error::InvalidParameter(format!(
            "residual has {} qubits, lattice has {}",
            residual_qubits.len(),
            lattice.n_qubits()
        )));
    }
    for a in 0..lattice.n_stab() {
        let parity = lattice.vertex_edges(a)[..4]
            .iter()
            .filter(|&&e| residual_qubits.get(lattice.edge_qubit(e).unwrap()))
            .count();
        if parity % 2 == 1 {
            return Err(Error::InvariantViolation(format!(
                "residual anticommutes with stabilizer {a}"
            )));
        }
    }
    let mut out = LogicalFailure::default();
    for q in residual_qubits.iter_ones() {
        let (on_x, on_y) = lattice.qubit_on_cuts(q);
        out.x ^= on_x;
        out.y ^= on_y;
    }
    Ok(out)
}

/// Measurements from one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub error_weight: usize,
    pub failure_x: bool,
    pub failure_y: bool,
    pub defects_raw: usize,
    /// Defects sent to the matcher, `M`.
    pub defects_after_predecode: usize,
    pub matcher_time_ns: u64,
    pub ideal_bits: u64,
    pub model16_bits: u64,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.failure_x || self.failure_y
    }
}

/// Result of decoding one error configuration.
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub failure: LogicalFailure,
    pub residual: ErrorConfig,
    pub defects_raw: usize,
    pub defects_after_predecode: usize,
    pub matcher_time_ns: u64,
    pub ideal_bits: u64,
    pub model16_bits: u64,
}

/// Pre-decoder plus matcher bound to one lattice.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    lattice: &'a CodeLattice,
    predecoder: Predecoder<'a>,
}

impl<'a> Pipeline<'a> {
    pub fn new(lattice: &'a CodeLattice, params: PredecoderParams) -> Self {
        Pipeline {
            lattice,
            predecoder: Predecoder::new(lattice, params),
        }
    }

    pub fn lattice(&self) -> &'a CodeLattice {
        self.lattice
    }

    pub fn params(&self) -> PredecoderParams {
        self.predecoder.params()
    }

    /// Defects left for the matcher, with the pre-decoder's edges.
    pub fn predecode(&self, s: &SyndromeHistory) -> (SyndromeHistory, Option<ErrorConfig>) {
        if self.params().is_enabled() {
            let out = self.predecoder.predecode(s);
            (out.modified_syndrome, Some(out.matched_edges))
        } else {
            (s.clone(), None)
        }
    }

    pub fn decode(&self, error: &ErrorConfig) -> Result<DecodeOutcome> {
        let lat = self.lattice;
        let s = syndrome_of(lat, error);
        let (remaining, matched) = self.predecode(&s);

        let message = compress(lat, &remaining);
        let bw = bandwidth_report(&message, lat);
        let received = decompress(&message, lat)?;
        let graph = DefectGraph::from_syndrome(lat, &received);
        let (matching, ns) = if graph.is_empty() {
            (Default::default(), 0)
        } else {
            timed_mwpm(&graph).map_err(|e| match e {
                Error::OddDefectCount(n) => {
                    Error::InvariantViolation(format!("odd defect count {n} reached the matcher"))
                }
                other => other,
            })?
        };
        let correction = correction_from_matching(&matching, lat);

        let mut residual = error.xor(&correction.edges);
        if let Some(m) = &matched {
            residual.xor_with(m);
        }
        if !syndrome_of(lat, &residual).is_clear() {
            return Err(Error::InvariantViolation(
                "combined correction leaves a non-empty syndrome".into(),
            ));
        }
        let failure = logical_failure(&residual.qubit_parity(lat), lat)?;
        Ok(DecodeOutcome {
            failure,
            residual,
            defects_raw: s.defect_count(),
            defects_after_predecode: remaining.defect_count(),
            matcher_time_ns: ns,
            ideal_bits: bw.ideal_bits,
            model16_bits: bw.model16_bits,
        })
    }

    /// True when decoding `error` ends in a logical failure.
    pub fn fails(&self, error: &ErrorConfig) -> Result<bool> {
        Ok(self.decode(error)?.failure.either())
    }

    pub fn trial(&self, params: NoiseParams, seed: u64, index: u64) -> Result<TrialRecord> {
        let mut rng = trial_rng(seed, index);
        let error = sample_error(self.lattice, params, &mut rng);
        let out = self.decode(&error)?;
        Ok(TrialRecord {
            index,
            error_weight: error.weight(),
            failure_x: out.failure.x,
            failure_y: out.failure.y,
            defects_raw: out.defects_raw,
            defects_after_predecode: out.defects_after_predecode,
            matcher_time_ns: out.matcher_time_ns,
            ideal_bits: out.ideal_bits,
            model16_bits: out.model16_bits,
        })
    }
}

/// One full trial on a caller-supplied random stream.
pub fn run_trial<R: rand::Rng + ?Sized>(
    lattice: &CodeLattice,
    p: NoiseParams,
    params: PredecoderParams,
    rng: &mut R,
) -> Result<TrialRecord> {
    let pipe = Pipeline::new(lattice, params);
    let error = sample_error(lattice, p, rng);
    let out = pipe.decode(&error)?;
    Ok(TrialRecord {
        index: 0,
        error_weight: error.weight(),
        failure_x: out.failure.x,
        failure_y: out.failure.y,
        defects_raw: out.defects_raw,
        defects_after_predecode: out.defects_after_predecode,
        matcher_time_ns: out.matcher_time_ns,
        ideal_bits: out.ideal_bits,
        model16_bits: out.model16_bits,
    })
}

/// When a direct Monte Carlo run ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_failures: u64,
    pub max_trials: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_failures: 10,
            max_trials: 10_000_000,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_failures == 0 || self.max_trials == 0 {
            return Err(Error::InvalidParameter(
                "stop rule needs positive failure and trial limits".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureStats {
    pub trials: u64,
    /// Either-axis failures.
    pub failures: u64,
    pub failures_x: u64,
    pub failures_y: u64,
}

impl FailureStats {
    pub fn record(&mut self, r: &TrialRecord) {
        self.trials += 1;
        self.failures += u64::from(r.failed());
        self.failures_x += u64::from(r.failure_x);
        self.failures_y += u64::from(r.failure_y);
    }

    pub fn merge(&mut self, other: &FailureStats) {
        self.trials += other.trials;
        self.failures += other.failures;
        self.failures_x += other.failures_x;
        self.failures_y += other.failures_y;
    }

    pub fn probability(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.failures as f64 / self.trials as f64
    }

    /// Binomial standard error of [`Self::probability`].
    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let f = self.probability();
        (f * (1.0 - f) / self.trials as f64).sqrt()
    }

    /// With no failures observed, the 95% upper bound `3 / trials`.
    pub fn upper_bound(&self) -> Option<f64> {
        (self.failures == 0 && self.trials > 0).then(|| 3.0 / self.trials as f64)
    }
}

/// Defect counts `M` sent to the matcher, accumulated over trials.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DefectStats {
    pub trials: u64,
    pub volume: usize,
    pub fault_volume: usize,
    pub sum_raw: u64,
    pub sum_after: u64,
    /// Histogram of `M`.
    pub histogram: BTreeMap<usize, u64>,
}

impl DefectStats {
    pub fn new(lattice: &CodeLattice) -> Self {
        DefectStats {
            volume: lattice.volume(),
            fault_volume: lattice.fault_volume(),
            ..Default::default()
        }
    }

    pub fn record(&mut self, raw: usize, after: usize) {
        self.trials += 1;
        self.sum_raw += raw as u64;
        self.sum_after += after as u64;
        *self.histogram.entry(after).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &DefectStats) {
        self.trials += other.trials;
        self.sum_raw += other.sum_raw;
        self.sum_after += other.sum_after;
        for (&m, &c) in &other.histogram {
            *self.histogram.entry(m).or_insert(0) += c;
        }
    }

    /// Mean of `M`.
    pub fn mean(&self) -> f64 {
        self.sum_after as f64 / self.trials.max(1) as f64
    }

    pub fn mean_raw(&self) -> f64 {
        self.sum_raw as f64 / self.trials.max(1) as f64
    }

    /// Mean defects per fault location, the normalization of the density
    /// models.
    pub fn density(&self) -> f64 {
        self.mean() / self.fault_volume as f64
    }

    pub fn density_raw(&self) -> f64 {
        self.mean_raw() / self.fault_volume as f64
    }

    /// Mean defects per spacetime vertex.
    pub fn density_per_vertex(&self) -> f64 {
        self.mean() / self.volume as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub failures: FailureStats,
    pub defects: DefectStats,
    pub total_matcher_ns: u64,
    /// Set when the trial budget ran out before the failure target.
    pub hit_max_trials: bool,
}

/// Direct Monte Carlo estimate of the logical failure probability.
pub fn direct_mc(
    lattice: &CodeLattice,
    p: NoiseParams,
    params: PredecoderParams,
    stop: StopRule,
    seed: u64,
) -> Result<McResult> {
    stop.validate()?;
    let pipe = Pipeline::new(lattice, params);
    let mut failures = FailureStats::default();
    let mut defects = DefectStats::new(lattice);
    let mut total_ns = 0u64;
    let mut next = 0u64;
    while next < stop.max_trials {
        let end = (next + BATCH_SIZE).min(stop.max_trials);
        let batch: Vec<Result<TrialRecord>> = (next..end)
            .into_par_iter()
            .map(|i| pipe.trial(p, seed, i))
            .collect();
        for r in batch {
            let r = r?;
            failures.record(&r);
            defects.record(r.defects_raw, r.defects_after_predecode);
            total_ns += r.matcher_time_ns;
            if failures.failures >= stop.min_failures {
                return Ok(McResult {
                    failures,
                    defects,
                    total_matcher_ns: total_ns,
                    hit_max_trials: false,
                });
            }
        }
        next = end;
    }
    Ok(McResult {
        failures,
        defects,
        total_matcher_ns: total_ns,
        hit_max_trials: true,
    })
}

/// Every trial record of a fixed-size run, in index order.
pub fn trial_records(
    lattice: &CodeLattice,
    p: NoiseParams,
    params: PredecoderParams,
    trials: u64,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let pipe = Pipeline::new(lattice, params);
    (0..trials).into_par_iter().map(|i| pipe.trial(p, seed, i)).collect()
}

/// Defect counts before and after pre-decoding, without running the
/// matcher.
pub fn defect_counts(
    lattice: &CodeLattice,
    p: NoiseParams,
    params: PredecoderParams,
    trials: u64,
    seed: u64,
) -> DefectStats {
    let pipe = Pipeline::new(lattice, params);
    let counts: Vec<(usize, usize)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let s = syndrome_of(lattice, &sample_error(lattice, p, &mut rng));
            let (after, _) = pipe.predecode(&s);
            (s.defect_count(), after.defect_count())
        })
        .collect();
    let mut stats = DefectStats::new(lattice);
    for (raw, after) in counts {
        stats.record(raw, after);
    }
    stats
}

/// Least-squares line through `(fault volume, mean M)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFit {
    /// Defects per fault location.
    pub density: f64,
    pub intercept: f64,
    pub points: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
}

/// Defect density from the growth of the mean defect count with volume.
pub fn defect_density(
    lattices: &[CodeLattice],
    p: NoiseParams,
    params: PredecoderParams,
    trials: u64,
    seed: u64,
) -> Result<DensityFit> {
    if lattices.len() < 2 {
        return Err(Error::InvalidParameter(
            "a density fit needs at least two lattice sizes".into(),
        ));
    }
    let points: Vec<(f64, f64)> = lattices
        .iter()
        .map(|l| {
            let s = defect_counts(l, p, params, trials, seed);
            (l.fault_volume() as f64, s.mean())
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let line = crate::analysis::ols(&xs, &ys)?;
    Ok(DensityFit {
        density: line.slope,
        intercept: line.intercept,
        residuals: line.residuals,
        points,
    })
}

/// Pearson chi-square test of a histogram of `M` against `M/2 ~
/// Poisson(mean(M)/2)`. Bins with small expectation are pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub lambda: f64,
}

pub fn poisson_chi_square(histogram: &BTreeMap<usize, u64>) -> Result<ChiSquareTest> {
    let n: u64 = histogram.values().sum();
    if n == 0 {
        return Err(Error::InvalidParameter("empty histogram".into()));
    }
    let mut halves: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total = 0.0;
    for (&m, &c) in histogram {
        if m % 2 != 0 {
            return Err(Error::InvariantViolation(format!("odd defect count {m} in histogram")));
        }
        *halves.entry(m as u64 / 2).or_insert(0) += c;
        total += (m as f64 / 2.0) * c as f64;
    }
    let lambda = total / n as f64;
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter("histogram has zero mean".into()));
    }
    let pois = Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let kmax = *halves.keys().last().unwrap();

    // Pool adjacent bins, left to right, until each expects at least five.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for k in 0..=kmax {
        obs += *halves.get(&k).unwrap_or(&0) as f64;
        exp += n as f64 * pois.pmf(k);
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    exp += n as f64 * (1.0 - pois.cdf(kmax));
    match bins.last_mut() {
        Some(last) if exp < 5.0 => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => bins.push((obs, exp)),
    }
    if bins.len() < 3 {
        return Err(Error::InvalidParameter(
            "too few populated bins for a chi-square test".into(),
        ));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 2;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi.sf(statistic),
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::EdgeId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat(d: usize) -> CodeLattice {
        CodeLattice::build(d).unwrap()
    }

    #[test]
    fn zero_rate_never_fails() {
        let l = lat(6);
        let r = direct_mc(
            &l,
            NoiseParams::new(0.0).unwrap(),
            PredecoderParams::with_radius(0),
            StopRule {
                min_failures: 1,
                max_trials: 300,
            },
            1,
        )
        .unwrap();
        assert_eq!(r.failures.failures, 0);
        assert_eq!(r.failures.trials, 300);
        assert!(r.hit_max_trials);
        assert_eq!(r.failures.probability(), 0.0);
        assert_eq!(r.failures.upper_bound(), Some(0.01));
    }

    #[test]
    fn single_fault_is_removed_by_predecoder() {
        let l = lat(8);
        let e = l.edge_index(EdgeId::Space { qx: 1, qy: 4, t: 3 }).unwrap();
        let out = Pipeline::new(&l, PredecoderParams::with_radius(0))
            .decode(&ErrorConfig::from_edges(&l, [e]))
            .unwrap();
        assert_eq!(out.defects_raw, 2);
        assert_eq!(out.defects_after_predecode, 0);
        assert!(!out.failure.either());
        assert!(out.residual.is_empty());
    }

    #[test]
    fn logical_rows_and_columns() {
        let l = lat(6);
        assert_eq!(
            logical_failure(&Bits::zeros(36), &l).unwrap(),
            LogicalFailure::default()
        );
        let row = Bits::from_indices(36, (0..6).map(|x| 2 * 6 + x));
        assert_eq!(
            logical_failure(&row, &l).unwrap(),
            LogicalFailure { x: true, y: false }
        );
        let col = Bits::from_indices(36, (0..6).map(|y| y * 6 + 3));
        assert_eq!(
            logical_failure(&col, &l).unwrap(),
            LogicalFailure { x: false, y: true }
        );
        let single = Bits::from_indices(36, [7]);
        assert!(matches!(
            logical_failure(&single, &l),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn stabilizer_products_are_trivial() {
        let d = 8;
        let l = lat(d);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let mut flips = Bits::zeros(d * d);
            for _ in 0..rng.random_range(1..12) {
                // Z-plaquette: lower-left corner with x + y odd.
                let y = rng.random_range(0..d);
                let x = (2 * rng.random_range(0..d / 2) + 1 + y) % d;
                for (qx, qy) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
                    flips.toggle((qy % d) * d + qx % d);
                }
            }
            assert_eq!(logical_failure(&flips, &l).unwrap(), LogicalFailure::default());
        }
    }

    #[test]
    fn full_run_is_deterministic() {
        let l = lat(6);
        let run = || {
            direct_mc(
                &l,
                NoiseParams::new(0.03).unwrap(),
                PredecoderParams::DISABLED,
                StopRule {
                    min_failures: 5,
                    max_trials: 5000,
                },
                99,
            )
            .unwrap()
        };
        let (mut a, mut b) = (run(), run());
        a.total_matcher_ns = 0;
        b.total_matcher_ns = 0;
        assert_eq!(a, b);
    }

    #[test]
    fn records_are_even_and_consistent() {
        let l = lat(6);
        let recs = trial_records(
            &l,
            NoiseParams::new(0.05).unwrap(),
            PredecoderParams::with_radius(1),
            300,
            3,
        )
        .unwrap();
        for r in recs {
            assert_eq!(r.defects_raw % 2, 0);
            assert_eq!(r.defects_after_predecode % 2, 0);
        }
    }

    #[test]
    fn chi_square_accepts_poisson_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pois = Poisson::new(6.0).unwrap();
        let mut hist = BTreeMap::new();
        for _ in 0..5000 {
            let u: f64 = rng.random();
            let k = (0u64..).find(|&k| pois.cdf(k) >= u).unwrap();
            *hist.entry(2 * k as usize).or_insert(0) += 1;
        }
        let t = poisson_chi_square(&hist).unwrap();
        assert!(t.p_value > 1e-3, "{t:?}");
        assert!((t.lambda - 6.0).abs() < 0.2);
    }

    #[test]
    fn density_fit_needs_two_sizes() {
        let err = defect_density(
            &[lat(4)],
            NoiseParams::new(0.01).unwrap(),
            PredecoderParams::DISABLED,
            10,
            0,
        );
        assert!(err.is_err());
    }
}
