//! Rare-event estimation of sub-threshold failure probabilities.
//!
//! A Metropolis chain samples the failing errors at rate `p` with weight
//! proportional to `p^|E| (1-p)^(N-|E|)`. The samples give an unbiased
//! estimate of `f(p') / f(p)` for a nearby rate `p'`, and a ladder of such
//! ratios carries a direct Monte Carlo anchor down to rates where failures
//! are too rare to observe.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{FailureStats, Pipeline};
use crate::lattice::CodeLattice;
use crate::noise::{trial_rng, ErrorConfig};
use crate::predecoder::PredecoderParams;

/// Least-weight failing error: a straight run of `d/2` phase flips along a
/// row in one round, with single gaps after every run of `r~ + 1` kept
/// flips. The gaps are closed by the pre-decoder, which leaves two defects
/// half the code apart for the matcher.
///
/// Placements are tried in a fixed order (row, start column, direction,
/// gap phase) until the pipeline fails, so the result depends only on the
/// lattice and the scheme.
pub fn construct_failing_error(lattice: &CodeLattice, params: PredecoderParams) -> Result<ErrorConfig> {
    let pipe = Pipeline::new(lattice, params);
    let d = lattice.d();
    let len = d / 2;
    let (period, gaps) = match params.effective_radius() {
        Some(rt) => (rt + 2, ((len + 1) / (rt + 2)).saturating_sub(1)),
        None => (len + 1, 0),
    };
    for y in 0..2 {
        for x0 in 0..d {
            for dir in [1isize, -1] {
                for phase in 0..period.min(len) {
                    let candidate = string_error(lattice, y, x0, dir, period, gaps, phase);
                    if candidate.weight() + gaps != len {
                        continue;
                    }
                    if pipe.fails(&candidate)? {
                        return Ok(candidate);
                    }
                }
            }
        }
    }
    Err(Error::ConstructionFailed { d })
}

fn string_error(
    lattice: &CodeLattice,
    y: usize,
    x0: usize,
    dir: isize,
    period: usize,
    gaps: usize,
    phase: usize,
) -> ErrorConfig {
    let d = lattice.d();
    let len = d / 2;
    let is_gap = |i: usize| {
        (0..gaps).any(|k| (k * period + period - 1).checked_sub(phase) == Some(i))
    };
    let edges = (0..len).filter(|&i| !is_gap(i)).map(|i| {
        let qx = (x0 as isize + dir * i as isize).rem_euclid(d as isize) as usize;
        y * d + qx
    });
    ErrorConfig::from_edges(lattice, edges)
}

/// Chain state; the stored error always fails the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailingChainState {
    error: ErrorConfig,
    weight: usize,
}

impl FailingChainState {
    /// Verifies that `error` fails before accepting it as a start state.
    pub fn new(pipe: &Pipeline<'_>, error: ErrorConfig) -> Result<Self> {
        if !pipe.fails(&error)? {
            return Err(Error::InvalidParameter("chain must start on a failing error".into()));
        }
        let weight = error.weight();
        Ok(FailingChainState { error, weight })
    }

    pub fn error(&self) -> &ErrorConfig {
        &self.error
    }

    pub fn weight(&self) -> usize {
        self.weight
    }
}

/// One Metropolis move: toggle a uniformly chosen edge and accept with
/// probability `min(1, (p / (1-p))^dw)` provided the result still fails.
/// Returns whether the move was accepted.
pub fn metropolis_step<R: Rng + ?Sized>(
    state: &mut FailingChainState,
    p: f64,
    pipe: &Pipeline<'_>,
    rng: &mut R,
) -> Result<bool> {
    let n = state.error.len();
    let e = rng.random_range(0..n);
    let adding = !state.error.contains(e);
    let odds = p / (1.0 - p);
    let accept = if adding { odds.min(1.0) } else { (1.0 / odds).min(1.0) };
    if accept < 1.0 && rng.random::<f64>() >= accept {
        return Ok(false);
    }
    state.error.toggle(e);
    if pipe.fails(&state.error)? {
        state.weight = if adding { state.weight + 1 } else { state.weight - 1 };
        Ok(true)
    } else {
        state.error.toggle(e);
        Ok(false)
    }
}

/// Chain lengths, in units of one sweep (`N` proposed moves, `N` being
/// the number of fault locations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub samples: usize,
    pub burn_in_sweeps: usize,
    pub thin_sweeps: usize,
    /// Rungs whose effective sample size falls below this are flagged.
    pub min_ess: f64,
    /// Largest `|ln ratio|` per rung before a midpoint rung is inserted.
    pub max_log_ratio: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            samples: 1000,
            burn_in_sweeps: 10,
            thin_sweeps: 1,
            min_ess: 100.0,
            max_log_ratio: 3.0,
        }
    }
}

/// Weights `|E|` of the retained samples of one chain at rate `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub p: f64,
    pub n_edges: usize,
    pub weights: Vec<usize>,
    pub acceptance_rate: f64,
}

/// Runs one chain from the constructed failing error. Every retained
/// sample is decoded again before it is recorded.
pub fn sample_failing(
    lattice: &CodeLattice,
    params: PredecoderParams,
    p: f64,
    config: &ChainConfig,
    seed: u64,
    stream: u64,
) -> Result<ChainSamples> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidParameter(format!("chain rate {p} outside (0, 1/2)")));
    }
    let pipe = Pipeline::new(lattice, params);
    let start = construct_failing_error(lattice, params)?;
    let mut state = FailingChainState::new(&pipe, start)?;
    let mut rng = trial_rng(seed, stream);
    let n = lattice.n_edges();
    let mut accepted = 0u64;
    let mut proposed = 0u64;
    for _ in 0..config.burn_in_sweeps * n {
        accepted += u64::from(metropolis_step(&mut state, p, &pipe, &mut rng)?);
        proposed += 1;
    }
    let mut weights = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        for _ in 0..config.thin_sweeps.max(1) * n {
            accepted += u64::from(metropolis_step(&mut state, p, &pipe, &mut rng)?);
            proposed += 1;
        }
        if !pipe.fails(state.error())? {
            return Err(Error::InvariantViolation(
                "retained chain sample does not fail".into(),
            ));
        }
        weights.push(state.weight());
    }
    Ok(ChainSamples {
        p,
        n_edges: n,
        weights,
        acceptance_rate: accepted as f64 / proposed.max(1) as f64,
    })
}

/// Estimate of `f(p_to) / f(p_from)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub p_from: f64,
    pub p_to: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Sample count corrected for autocorrelation of the weights.
    pub ess: f64,
}

/// `ln` of the likelihood ratio of an error of weight `w` out of `n`.
fn log_likelihood_ratio(w: usize, n: usize, p_from: f64, p_to: f64) -> f64 {
    w as f64 * (p_to / p_from).ln() + (n - w) as f64 * ((1.0 - p_to) / (1.0 - p_from)).ln()
}

/// Mean likelihood ratio over failing samples drawn at `p_from`.
pub fn ratio_estimate(samples: &ChainSamples, p_to: f64) -> Result<RatioEstimate> {
    let n = samples.weights.len();
    if n == 0 {
        return Err(Error::InvalidParameter("ratio estimate needs samples".into()));
    }
    if !(p_to > 0.0 && p_to < 0.5) {
        return Err(Error::InvalidParameter(format!("target rate {p_to} outside (0, 1/2)")));
    }
    let p_from = samples.p;
    if p_to == p_from {
        return Ok(RatioEstimate {
            p_from,
            p_to,
            estimate: 1.0,
            std_error: 0.0,
            samples: n,
            ess: n as f64,
        });
    }
    let values: Vec<f64> = samples
        .weights
        .iter()
        .map(|&w| log_likelihood_ratio(w, samples.n_edges, p_from, p_to).exp())
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let ess = effective_sample_size(&values);
    Ok(RatioEstimate {
        p_from,
        p_to,
        estimate: mean,
        std_error: (var / ess).sqrt(),
        samples: n,
        ess,
    })
}

/// `n / tau` with the integrated autocorrelation time `tau` summed over
/// lags until the autocorrelation first drops to zero or below.
pub fn effective_sample_size(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 3 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let c0 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = values[..n - lag]
            .iter()
            .zip(&values[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64;
        let rho = c / c0;
        if rho <= 0.0 {
            break;
        }
        tau += 2.0 * rho;
    }
    (n as f64 / tau).clamp(1.0, n as f64)
}

/// One rung of a splitting ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub p: f64,
    pub f: f64,
    /// Standard error, propagated in relative terms from the anchor and
    /// every ratio above this rung.
    pub std_error: f64,
    /// Ratio that led here from the previous rung; `None` at the anchor.
    pub ratio: Option<RatioEstimate>,
    pub acceptance_rate: Option<f64>,
    /// Set when this rung's ratio rests on too few effective samples.
    pub flagged: bool,
    /// Set for rungs inserted to bound the per-rung ratio.
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderResult {
    pub rungs: Vec<Rung>,
}

impl LadderResult {
    pub fn any_flagged(&self) -> bool {
        self.rungs.iter().any(|r| r.flagged)
    }

    /// The rungs at the requested rates, skipping inserted ones.
    pub fn requested(&self) -> impl Iterator<Item = &Rung> {
        self.rungs.iter().filter(|r| !r.inserted)
    }
}

/// Carries a direct Monte Carlo anchor at `ladder[0]` down a descending
/// list of rates. Chains at different rungs are independent and run in
/// parallel; the chain sampled at rung `k` uses stream `k` of `seed`, with
/// inserted midpoint rungs taking streams past the end of the list.
pub fn splitting_ladder(
    lattice: &CodeLattice,
    params: PredecoderParams,
    ladder: &[f64],
    anchor: FailureStats,
    config: &ChainConfig,
    seed: u64,
) -> Result<LadderResult> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("ladder needs at least one rate".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("ladder rates must descend".into()));
    }
    if anchor.failures == 0 {
        return Err(Error::InvalidParameter("anchor run observed no failures".into()));
    }
    let f0 = anchor.probability();
    let mut rungs = vec![Rung {
        p: ladder[0],
        f: f0,
        std_error: anchor.std_error(),
        ratio: None,
        acceptance_rate: None,
        flagged: false,
        inserted: false,
    }];
    let mut rel_var = (anchor.std_error() / f0).powi(2);

    // First pass: every requested step, in parallel.
    let steps: Vec<(f64, f64, u64)> = ladder
        .windows(2)
        .enumerate()
        .map(|(k, w)| (w[0], w[1], k as u64))
        .collect();
    let first: Vec<Result<(ChainSamples, RatioEstimate)>> = steps
        .par_iter()
        .map(|&(from, to, stream)| {
            let s = sample_failing(lattice, params, from, config, seed, stream)?;
            let r = ratio_estimate(&s, to)?;
            Ok((s, r))
        })
        .collect();

    let mut next_stream = ladder.len() as u64;
    for ((from, to, _), res) in steps.into_iter().zip(first) {
        let (samples, ratio) = res?;
        let mut pieces = Vec::new();
        refine(
            lattice,
            params,
            config,
            seed,
            &mut next_stream,
            (from, to, samples, ratio),
            &mut pieces,
        )?;
        let n = pieces.len();
        for (i, (s, r)) in pieces.into_iter().enumerate() {
            let prev = rungs.last().unwrap().f;
            rel_var += (r.std_error / r.estimate).powi(2);
            let f = prev * r.estimate;
            rungs.push(Rung {
                p: r.p_to,
                f,
                std_error: f * rel_var.sqrt(),
                ratio: Some(r),
                acceptance_rate: Some(s.acceptance_rate),
                flagged: r.ess < config.min_ess || !(r.estimate > 0.0),
                inserted: i + 1 < n,
            });
        }
    }
    Ok(LadderResult { rungs })
}

/// Splits a step at the geometric midpoint while its ratio is too large.
fn refine(
    lattice: &CodeLattice,
    params: PredecoderParams,
    config: &ChainConfig,
    seed: u64,
    next_stream: &mut u64,
    step: (f64, f64, ChainSamples, RatioEstimate),
    out: &mut Vec<(ChainSamples, RatioEstimate)>,
) -> Result<()> {
    let (from, to, samples, ratio) = step;
    let too_wide = !(ratio.estimate > 0.0) || ratio.estimate.ln().abs() > config.max_log_ratio;
    // Stop splitting once the rates are nearly equal; the rung is then
    // reported and flagged by its sample size.
    if !too_wide || (from / to).ln() < 1e-3 {
        out.push((samples, ratio));
        return Ok(());
    }
    let mid = (from * to).sqrt();
    let upper = ratio_estimate(&samples, mid)?;
    refine(lattice, params, config, seed, next_stream, (from, mid, samples, upper), out)?;
    let stream = *next_stream;
    *next_stream += 1;
    let lower_samples = sample_failing(lattice, params, mid, config, seed, stream)?;
    let lower = ratio_estimate(&lower_samples, to)?;
    refine(lattice, params, config, seed, next_stream, (mid, to, lower_samples, lower), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::lw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructions_have_least_weight() {
        for (d, r, w) in [(10, Some(0), 4), (6, Some(0), 3), (16, Some(0), 6), (8, None, 4)] {
            let l = CodeLattice::build(d).unwrap();
            let params = r.map_or(PredecoderParams::DISABLED, PredecoderParams::with_radius);
            let e = construct_failing_error(&l, params).unwrap();
            assert_eq!(e.weight(), w);
            assert_eq!(e.weight(), lw(d, params));
            assert!(Pipeline::new(&l, params).fails(&e).unwrap());
        }
    }

    #[test]
    fn unfailing_moves_are_rejected() {
        let l = CodeLattice::build(6).unwrap();
        let params = PredecoderParams::DISABLED;
        let pipe = Pipeline::new(&l, params);
        let start = construct_failing_error(&l, params).unwrap();
        let mut state = FailingChainState::new(&pipe, start).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            metropolis_step(&mut state, 0.05, &pipe, &mut rng).unwrap();
            assert!(pipe.fails(state.error()).unwrap());
            assert_eq!(state.weight(), state.error().weight());
        }
    }

    #[test]
    fn non_failing_start_rejected() {
        let l = CodeLattice::build(6).unwrap();
        let pipe = Pipeline::new(&l, PredecoderParams::DISABLED);
        assert!(FailingChainState::new(&pipe, ErrorConfig::empty(&l)).is_err());
    }

    #[test]
    fn identity_ratio() {
        let s = ChainSamples {
            p: 0.02,
            n_edges: 100,
            weights: vec![3, 4, 5],
            acceptance_rate: 0.5,
        };
        let r = ratio_estimate(&s, 0.02).unwrap();
        assert_eq!((r.estimate, r.std_error), (1.0, 0.0));
    }

    #[test]
    fn single_sample_ratio_is_likelihood_ratio() {
        let s = ChainSamples {
            p: 0.02,
            n_edges: 100,
            weights: vec![4],
            acceptance_rate: 1.0,
        };
        let r = ratio_estimate(&s, 0.01).unwrap();
        let direct = (0.01f64 / 0.02).powi(4) * (0.99f64 / 0.98).powi(96);
        assert!((r.estimate - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn empty_samples_rejected() {
        let s = ChainSamples {
            p: 0.02,
            n_edges: 100,
            weights: vec![],
            acceptance_rate: 0.0,
        };
        assert!(ratio_estimate(&s, 0.01).is_err());
    }

    #[test]
    fn ess_of_independent_and_constant_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        assert!(effective_sample_size(&iid) > 1000.0);
        let sticky: Vec<f64> = (0..2000).map(|i| (i / 100) as f64).collect();
        assert!(effective_sample_size(&sticky) < 100.0);
    }

    #[test]
    fn single_rung_ladder_is_anchor() {
        let l = CodeLattice::build(4).unwrap();
        let anchor = FailureStats {
            trials: 100,
            failures: 10,
            failures_x: 6,
            failures_y: 5,
        };
        let out = splitting_ladder(
            &l,
            PredecoderParams::DISABLED,
            &[0.02],
            anchor,
            &ChainConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(out.rungs.len(), 1);
        assert_eq!(out.rungs[0].f, 0.1);
    }
}
