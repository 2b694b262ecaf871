//! Scaling models and fits: least-weight failing errors and their
//! multiplicities, required and effective code distances, defect densities,
//! defect-count percentiles, runtime laws and threshold estimates.

mod fit;

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

pub use fit::{median, ols, power_law, Line, PowerLaw};

use crate::error::{Error, Result};
use crate::predecoder::{isolation_volume, PredecoderParams};

/// Largest distance searched by [`required_distance`] by default.
pub const DEFAULT_D_MAX: usize = 400;

fn check_distance(d: usize) -> Result<()> {
    if d < 4 || d % 2 != 0 {
        return Err(Error::InvalidDistance(d));
    }
    Ok(())
}

/// Weight of the least-weight failing error.
///
/// Matching alone fails first on a string of `d/2` faults. The radius-`r`
/// pre-decoder can be defeated by `ceil((r~+1)/(r~+2) * (d/2 + 1))` faults,
/// capped at `d/2` since the matching bound always applies.
pub fn lw(d: usize, scheme: PredecoderParams) -> usize {
    let half = d / 2;
    match scheme.effective_radius() {
        None => half,
        Some(rt) => {
            let num = (rt + 1) * (half + 1);
            let den = rt + 2;
            num.div_ceil(den).min(half)
        }
    }
}

/// Largest even `d` with `lw(d) == d/2` under a pre-decoder.
pub fn max_matching_equivalent_distance(scheme: PredecoderParams) -> Option<usize> {
    scheme.effective_radius()?;
    (4..=DEFAULT_D_MAX)
        .step_by(2)
        .take_while(|&d| lw(d, scheme) == d / 2)
        .last()
}

/// Multiplicity model `A(d)` of the least-weight failing errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Multiplicity {
    /// `A = 1`.
    Unit,
    /// `A = 2^d` with pre-decoding, `A = 4^d` without.
    Rough,
    /// With pre-decoding, `A = 2^(P a - 2 + alpha b)` where
    /// `d = P a + b - 2`, `0 <= b < P` and `P = 2 (r~ + 2)` is the period of
    /// the weight formula. Coincides with the rough model when `b = 0`.
    /// Without pre-decoding this is the rough model.
    Refined { alpha: f64 },
}

/// `log2 A(d)`.
pub fn log2_multiplicity(d: usize, scheme: PredecoderParams, model: Multiplicity) -> f64 {
    let d_f = d as f64;
    match (model, scheme.effective_radius()) {
        (Multiplicity::Unit, _) => 0.0,
        (_, None) => 2.0 * d_f,
        (Multiplicity::Rough, Some(_)) => d_f,
        (Multiplicity::Refined { alpha }, Some(rt)) => {
            let (a, b) = refined_split(d, rt);
            (2 * (rt + 2) * a) as f64 - 2.0 + alpha * b as f64
        }
    }
}

/// `(a, b)` with `d = P a + b - 2`, `0 <= b < P`, `P = 2 (r~ + 2)`.
pub fn refined_split(d: usize, rt: usize) -> (usize, usize) {
    let period = 2 * (rt + 2);
    ((d + 2) / period, (d + 2) % period)
}

/// Ansatz failure probability `A(d) p^lw(d)`.
pub fn ansatz_failure(d: usize, p: f64, scheme: PredecoderParams, model: Multiplicity) -> f64 {
    ln_ansatz_failure(d, p, scheme, model).exp()
}

fn ln_ansatz_failure(d: usize, p: f64, scheme: PredecoderParams, model: Multiplicity) -> f64 {
    log2_multiplicity(d, scheme, model) * std::f64::consts::LN_2 + lw(d, scheme) as f64 * p.ln()
}

fn check_rate(p: f64, f_target: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("error rate {p} outside (0, 1)")));
    }
    if !(f_target > 0.0 && f_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target failure probability {f_target} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Smallest even `d >= 4` whose ansatz failure probability is at most
/// `f_target`.
pub fn required_distance(
    p: f64,
    f_target: f64,
    scheme: PredecoderParams,
    model: Multiplicity,
    d_max: usize,
) -> Result<usize> {
    check_rate(p, f_target)?;
    let target = f_target.ln();
    (4..=d_max)
        .step_by(2)
        .find(|&d| ln_ansatz_failure(d, p, scheme, model) <= target)
        .ok_or(Error::NoSolution { d_max })
}

/// Real-valued matching-only distance `d'` with the same ansatz failure
/// probability as the pre-decoded scheme at distance `d`.
///
/// Matching alone has `ln f = d' (ln 4 + ln(p)/2)` under the rough model,
/// which is inverted in closed form; the refined model coincides with it
/// without pre-decoding.
pub fn effective_mwpm_distance(
    d: usize,
    p: f64,
    scheme: PredecoderParams,
    model: Multiplicity,
) -> Result<f64> {
    check_distance(d)?;
    check_rate(p, 0.5)?;
    if !scheme.is_enabled() {
        return Ok(d as f64);
    }
    let per_unit = match model {
        Multiplicity::Unit => 0.5 * p.ln(),
        _ => 4f64.ln() + 0.5 * p.ln(),
    };
    if per_unit >= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "error rate {p} is above the matching ansatz threshold"
        )));
    }
    Ok(ln_ansatz_failure(d, p, scheme, model) / per_unit)
}

/// Modelled defect density per fault location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub density: f64,
    /// Set outside the validity domain `p < 1 / V_r` of the pre-decoded
    /// models; the value is still the formula's.
    pub extrapolated: bool,
}

/// `2p` without pre-decoding, `p^2 V_0` at radius 0 and `2 p^2 V_r` above.
pub fn density_model(p: f64, scheme: PredecoderParams) -> DensityModel {
    match scheme.radius() {
        None => DensityModel {
            density: 2.0 * p,
            extrapolated: false,
        },
        Some(r) => {
            let v = isolation_volume(r) as f64;
            let factor = if r == 0 { 1.0 } else { 2.0 };
            DensityModel {
                density: factor * p * p * v,
                extrapolated: p * v >= 1.0,
            }
        }
    }
}

/// Modelled matcher runtime ratio, pre-decoded over plain matching: the
/// square of the density ratio, `(p V_0 / 2)^2` at radius 0 and
/// `(p V_r)^2` above.
pub fn runtime_ratio_model(p: f64, r: usize) -> f64 {
    let pre = density_model(p, PredecoderParams::with_radius(r)).density;
    let plain = density_model(p, PredecoderParams::DISABLED).density;
    (pre / plain).powi(2)
}

/// Modelled matcher speed-up from pre-decoding, the inverse of
/// [`runtime_ratio_model`].
pub fn speedup_model(p: f64, r: usize) -> f64 {
    1.0 / runtime_ratio_model(p, r)
}

/// Smallest even `M` with `P(Poisson(mean/2) > M/2) <= f`, where `mean` is
/// the expected defect count `rho * volume`.
pub fn poisson_mmax(rho: f64, volume: f64, f: f64) -> Result<u64> {
    let mean = rho * volume;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::InvalidParameter(format!("expected defect count {mean} must be positive")));
    }
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidParameter(format!("tail probability {f} outside (0, 1)")));
    }
    let lambda = mean / 2.0;
    let pois = Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    // Exponential search for an upper bracket, then bisection on the
    // monotone survival function.
    let mut hi = lambda.ceil().max(1.0) as u64;
    while pois.sf(hi) > f {
        hi *= 2;
    }
    let mut lo = 0u64;
    if pois.sf(0) <= f {
        return Ok(0);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pois.sf(mid) <= f {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(2 * hi)
}

/// [`poisson_mmax`] over one of `rounds` equal slices of the volume.
pub fn poisson_mmax_per_round(rho: f64, volume: f64, rounds: usize, f: f64) -> Result<u64> {
    poisson_mmax(rho, volume / rounds as f64, f)
}

/// Matcher wall time against volume at one error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeFit {
    pub p: f64,
    /// Free exponent of `RT ~ V^k`.
    pub exponent: f64,
    /// `A` in `RT = A V^2`, least squares through the origin.
    pub quadratic_prefactor: f64,
    pub power_law: PowerLaw,
    /// Set when fewer than three volumes were supplied.
    pub under_populated: bool,
}

/// Fits `(volume, mean runtime)` points at one error rate.
pub fn runtime_fit(p: f64, points: &[(f64, f64)]) -> Result<RuntimeFit> {
    let (vs, rts): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let law = power_law(&vs, &rts)?;
    let num: f64 = points.iter().map(|(v, rt)| rt * v * v).sum();
    let den: f64 = points.iter().map(|(v, _)| v.powi(4)).sum();
    Ok(RuntimeFit {
        p,
        exponent: law.exponent,
        quadratic_prefactor: num / den,
        power_law: law,
        under_populated: points.len() < 3,
    })
}

/// Failure probability of one code at one rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailurePoint {
    pub d: usize,
    pub p: f64,
    pub f: f64,
}

/// Sub-threshold scaling `f = C (p / p_th)^(k d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `(p, m, intercept)` from `ln f = m d + intercept` at each rate.
    pub gradients: Vec<(f64, f64, f64)>,
    /// Decay constant from `m = k ln p + c`.
    pub k: f64,
    pub k_std_error: f64,
    pub p_th: f64,
    /// Mean of `exp(intercept)` over the rates.
    pub c: f64,
}

pub fn scaling_fit(points: &[FailurePoint]) -> Result<ScalingFit> {
    let mut rates: Vec<f64> = points.iter().map(|pt| pt.p).collect();
    rates.sort_by(|a, b| a.total_cmp(b));
    rates.dedup();
    let mut gradients = Vec::new();
    for &p in &rates {
        let (ds, lf): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|pt| pt.p == p && pt.f > 0.0)
            .map(|pt| (pt.d as f64, pt.f.ln()))
            .unzip();
        if ds.len() >= 2 {
            let line = ols(&ds, &lf)?;
            gradients.push((p, line.slope, line.intercept));
        }
    }
    if gradients.len() < 2 {
        return Err(Error::InvalidParameter(
            "scaling fit needs two rates with two distances each".into(),
        ));
    }
    let lp: Vec<f64> = gradients.iter().map(|g| g.0.ln()).collect();
    let ms: Vec<f64> = gradients.iter().map(|g| g.1).collect();
    let line = ols(&lp, &ms)?;
    let k = line.slope;
    let c = gradients.iter().map(|g| g.2.exp()).sum::<f64>() / gradients.len() as f64;
    Ok(ScalingFit {
        gradients,
        k,
        k_std_error: line.slope_std_error,
        p_th: (-line.intercept / k).exp(),
        c,
    })
}

/// `lw` and `A` read off the low-rate behaviour of one code:
/// `ln f = lw ln p + ln A`.
pub fn fit_weight_and_multiplicity(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (lp, lf): (Vec<f64>, Vec<f64>) = points.iter().map(|(p, f)| (p.ln(), f.ln())).unzip();
    let line = ols(&lp, &lf)?;
    Ok((line.slope, line.intercept.exp()))
}

/// Least-squares `alpha` of the refined multiplicity model from measured
/// `(d, A)` pairs.
pub fn fit_alpha(scheme: PredecoderParams, measured: &[(usize, f64)]) -> Result<f64> {
    let rt = scheme
        .effective_radius()
        .ok_or_else(|| Error::InvalidParameter("alpha is defined for pre-decoding only".into()))?;
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, a) in measured {
        let (ka, b) = refined_split(d, rt);
        let y = a.log2() - ((2 * (rt + 2) * ka) as f64 - 2.0);
        num += b as f64 * y;
        den += (b * b) as f64;
    }
    if den == 0.0 {
        return Err(Error::InvalidParameter(
            "alpha is unconstrained when every distance has b = 0".into(),
        ));
    }
    Ok(num / den)
}

/// Crossing points of failure curves of adjacent distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    /// `(d_small, d_large, p_cross)`.
    pub crossings: Vec<(usize, usize, f64)>,
    pub p_th: f64,
}

/// Threshold as the median crossing of `f_d(p)` curves at adjacent
/// distances, interpolating `ln f` linearly in `ln p`.
pub fn threshold_crossing(points: &[FailurePoint]) -> Result<ThresholdEstimate> {
    let mut ds: Vec<usize> = points.iter().map(|pt| pt.d).collect();
    ds.sort_unstable();
    ds.dedup();
    let curve = |d: usize| {
        let mut c: Vec<(f64, f64)> = points
            .iter()
            .filter(|pt| pt.d == d && pt.f > 0.0)
            .map(|pt| (pt.p, pt.f))
            .collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        c
    };
    let mut crossings = Vec::new();
    for w in ds.windows(2) {
        let (small, large) = (curve(w[0]), curve(w[1]));
        let diffs: Vec<(f64, f64)> = small
            .iter()
            .filter_map(|&(p, fs)| {
                large
                    .iter()
                    .find(|&&(q, _)| q == p)
                    .map(|&(_, fl)| (p.ln(), fl.ln() - fs.ln()))
            })
            .collect();
        for pair in diffs.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if y0 == 0.0 {
                crossings.push((w[0], w[1], x0.exp()));
            } else if y0 * y1 < 0.0 {
                let x = x0 - y0 * (x1 - x0) / (y1 - y0);
                crossings.push((w[0], w[1], x.exp()));
            }
        }
    }
    let ps: Vec<f64> = crossings.iter().map(|c| c.2).collect();
    let p_th = median(&ps).ok_or_else(|| {
        Error::InvalidParameter("failure curves do not cross on the sampled rates".into())
    })?;
    Ok(ThresholdEstimate { crossings, p_th })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MWPM: PredecoderParams = PredecoderParams::DISABLED;
    const PRE0: PredecoderParams = PredecoderParams::with_radius(0);

    #[test]
    fn weights() {
        assert_eq!(lw(16, PRE0), 6);
        assert_eq!(lw(16, PRE0), lw(12, MWPM));
        assert_eq!(lw(8, PRE0), 4);
        assert_eq!(lw(22, PRE0), 8);
        assert_eq!(lw(10, PRE0), 4);
        assert_eq!(lw(6, PRE0), 3);
        assert_eq!(lw(4, PredecoderParams::with_radius(2)), 2);
        assert_eq!(max_matching_equivalent_distance(PRE0), Some(8));
        assert_eq!(max_matching_equivalent_distance(MWPM), None);
    }

    #[test]
    fn multiplicities() {
        assert_eq!(log2_multiplicity(10, MWPM, Multiplicity::Rough), 20.0);
        assert_eq!(log2_multiplicity(10, PRE0, Multiplicity::Rough), 10.0);
        assert_eq!(f64::from(3 * lw(10, PRE0) as u32 - 2), 10.0);
        let refined = Multiplicity::Refined { alpha: 1.7 };
        for d in [4, 10, 16] {
            assert_eq!(log2_multiplicity(d, PRE0, refined), d as f64);
        }
        assert_relative_eq!(log2_multiplicity(12, PRE0, refined), 10.0 + 2.0 * 1.7);
    }

    #[test]
    fn unit_model() {
        // lw = 2 at d = 4.
        assert_relative_eq!(ansatz_failure(4, 0.1, MWPM, Multiplicity::Unit), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn required_distances() {
        let d = |p, scheme| required_distance(p, 1e-15, scheme, Multiplicity::Rough, 400).unwrap();
        assert_eq!(d(1e-3, PRE0), 18);
        assert_eq!(d(1e-3, MWPM), 18);
        let refined = required_distance(1e-3, 1e-15, PRE0, Multiplicity::Refined { alpha: 3.5 }, 400);
        assert_eq!(refined.unwrap(), 22);
        assert!(matches!(
            required_distance(0.3, 1e-15, MWPM, Multiplicity::Rough, 40),
            Err(Error::NoSolution { d_max: 40 })
        ));
    }

    #[test]
    fn effective_distance_limits() {
        assert_eq!(effective_mwpm_distance(16, 1e-3, MWPM, Multiplicity::Rough).unwrap(), 16.0);
        for d in [4, 6, 8] {
            let gap = |p| effective_mwpm_distance(d, p, PRE0, Multiplicity::Rough).unwrap() - d as f64;
            assert!(gap(1e-80).abs() < gap(1e-12).abs());
            assert!(gap(1e-80).abs() < 0.1, "{}", gap(1e-80));
        }
        assert!(effective_mwpm_distance(16, 1e-3, PRE0, Multiplicity::Rough).unwrap() > 13.0);
    }

    #[test]
    fn densities() {
        assert_relative_eq!(density_model(1e-3, PRE0).density, 5.7e-5, max_relative = 1e-12);
        assert_relative_eq!(density_model(1e-4, PRE0).density, 5.7e-7, max_relative = 1e-12);
        assert_relative_eq!(density_model(0.01, MWPM).density, 0.02);
        assert_relative_eq!(
            density_model(0.002, PredecoderParams::with_radius(2)).density,
            2.0 * 4e-6 * 163.0
        );
        assert!(!density_model(1.0 / 57.0 * 0.99, PRE0).extrapolated);
        assert!(density_model(1.0 / 57.0 * 1.01, PRE0).extrapolated);
        let reduction = (1.0 / 16.0) / density_model(1e-3, PRE0).density;
        assert!((reduction - 1.1e3).abs() < 0.1e3);
    }

    #[test]
    fn speedups() {
        assert_relative_eq!(runtime_ratio_model(1e-3, 0), 0.0285f64.powi(2), max_relative = 1e-12);
        assert_relative_eq!(runtime_ratio_model(1e-3, 2), (1e-3f64 * 163.0).powi(2), max_relative = 1e-12);
        assert!((speedup_model(1e-3, 0) - 1231.0).abs() < 1.0);
    }

    #[test]
    fn mmax_basics() {
        let m = poisson_mmax(1.0, 1000.0, 1e-15).unwrap();
        assert_eq!(m % 2, 0);
        assert!((m as f64) / 1000.0 < 1.4);
        let med = poisson_mmax(1.0, 1e4, 0.5).unwrap() as f64;
        assert!((med / 1e4 - 1.0).abs() < 0.01);
        assert!(poisson_mmax(0.0, 10.0, 0.1).is_err());
        assert!(poisson_mmax(1.0, 10.0, 1.5).is_err());
        assert_eq!(
            poisson_mmax_per_round(1.0, 1000.0, 10, 1e-3).unwrap(),
            poisson_mmax(1.0, 100.0, 1e-3).unwrap()
        );
    }

    #[test]
    fn scaling_fit_recovers_parameters() {
        let (k, p_th, c) = (0.4, 0.02, 0.3);
        let pts: Vec<FailurePoint> = [1e-3, 3e-3, 6e-3]
            .iter()
            .flat_map(|&p| {
                [4, 6, 8].map(|d| FailurePoint {
                    d,
                    p,
                    f: c * (p / p_th as f64).powf(k * d as f64),
                })
            })
            .collect();
        let fit = scaling_fit(&pts).unwrap();
        assert_relative_eq!(fit.k, k, max_relative = 1e-9);
        assert_relative_eq!(fit.p_th, p_th, max_relative = 1e-9);
        assert_relative_eq!(fit.c, c, max_relative = 1e-9);
    }

    #[test]
    fn crossing_of_two_lines() {
        let pts = vec![
            FailurePoint { d: 4, p: 0.01, f: 0.1 },
            FailurePoint { d: 4, p: 0.03, f: 0.3 },
            FailurePoint { d: 6, p: 0.01, f: 0.05 },
            FailurePoint { d: 6, p: 0.03, f: 0.6 },
        ];
        let t = threshold_crossing(&pts).unwrap();
        assert_eq!(t.crossings.len(), 1);
        assert!(t.p_th > 0.01 && t.p_th < 0.03);
    }

    #[test]
    fn alpha_round_trip() {
        let model = Multiplicity::Refined { alpha: 2.5 };
        let measured: Vec<(usize, f64)> = [6, 8, 12, 14]
            .iter()
            .map(|&d| (d, log2_multiplicity(d, PRE0, model).exp2()))
            .collect();
        assert_relative_eq!(fit_alpha(PRE0, &measured).unwrap(), 2.5, max_relative = 1e-9);
    }

    #[test]
    fn runtime_fit_quadratic() {
        let pts: Vec<(f64, f64)> = [100.0, 200.0, 400.0].iter().map(|&v| (v, 2e-3 * v * v)).collect();
        let fit = runtime_fit(0.02, &pts).unwrap();
        assert_relative_eq!(fit.exponent, 2.0, max_relative = 1e-9);
        assert_relative_eq!(fit.quadratic_prefactor, 2e-3, max_relative = 1e-9);
        assert!(!fit.under_populated);
    }
}
