use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{Discrete, Poisson};

use predecode::analysis::{
    self, density_model, median, poisson_mmax, required_distance, runtime_fit, speedup_model,
    threshold_crossing, FailurePoint, Multiplicity,
};
use predecode::codec::{bandwidth_report, compress, decompress, CompressedSyndrome};
use predecode::evaluation::{
    defect_counts, defect_density, direct_mc, poisson_chi_square, trial_records, StopRule,
};
use predecode::noise::{sample_error, syndrome_of, trial_rng};
use predecode::rare_event::{splitting_ladder, ChainConfig};
use predecode::{CodeLattice, NoiseParams, PredecoderParams, SyndromeHistory, VertexId};

use crate::output::Context;
use crate::{CliError, Command};

pub fn dispatch(command: &Command, ctx: &Context) -> Result<(), CliError> {
    match command {
        Command::Threshold(a) => threshold(a, ctx),
        Command::Density(a) => density(a, ctx),
        Command::Histogram(a) => histogram(a, ctx),
        Command::Runtime(a) => runtime(a, ctx),
        Command::RareEvent(a) => rare_event(a, ctx),
        Command::Analysis(a) => analysis_table(a, ctx),
        Command::Codec(a) => codec(a, ctx),
    }
}

/// Independent seed for the `k`-th point of a sweep (SplitMix64 finaliser).
fn point_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn non_empty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(CliError::Usage(format!("--{name} needs at least one value")));
    }
    Ok(())
}

fn lattice(d: usize) -> Result<CodeLattice, CliError> {
    Ok(CodeLattice::build(d)?)
}

fn rate(p: f64) -> Result<NoiseParams, CliError> {
    Ok(NoiseParams::new(p)?)
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Code distances.
    #[arg(short = 'd', long = "distances", value_delimiter = ',', required = true)]
    pub distances: Vec<usize>,
    /// Physical error rates.
    #[arg(short = 'p', long = "rates", value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    /// Isolation radius, or `none` for matching alone.
    #[arg(long, default_value = "0")]
    pub radius: PredecoderParams,
    #[arg(long, default_value_t = 10)]
    pub min_failures: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_trials: u64,
}

#[derive(Serialize)]
struct ThresholdRow {
    d: usize,
    p: f64,
    radius: String,
    trials: u64,
    failures: u64,
    failures_x: u64,
    failures_y: u64,
    f: f64,
    std_error: f64,
    upper_bound: Option<f64>,
    hit_max_trials: bool,
}

fn threshold(a: &ThresholdArgs, ctx: &Context) -> Result<(), CliError> {
    non_empty("distances", &a.distances)?;
    non_empty("rates", &a.rates)?;
    let stop = StopRule {
        min_failures: a.min_failures,
        max_trials: a.max_trials,
    };
    stop.validate()?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut k = 0;
    for &d in &a.distances {
        let l = lattice(d)?;
        for &p in &a.rates {
            let r = direct_mc(&l, rate(p)?, a.radius, stop, point_seed(ctx.seed, k))?;
            k += 1;
            let fs = r.failures;
            points.push(FailurePoint {
                d,
                p,
                f: fs.probability(),
            });
            rows.push(ThresholdRow {
                d,
                p,
                radius: a.radius.to_string(),
                trials: fs.trials,
                failures: fs.failures,
                failures_x: fs.failures_x,
                failures_y: fs.failures_y,
                f: fs.probability(),
                std_error: fs.std_error(),
                upper_bound: fs.upper_bound(),
                hit_max_trials: r.hit_max_trials,
            });
        }
    }
    let summary = threshold_crossing(&points).map_or(Value::Null, |t| json!(t));
    let config = json!({
        "distances": a.distances, "rates": a.rates, "radius": a.radius,
        "min_failures": a.min_failures, "max_trials": a.max_trials,
    });
    ctx.emit("threshold", config, &rows, summary)
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// At least two code distances; the fit runs over their volumes.
    #[arg(short = 'd', long = "distances", value_delimiter = ',', default_value = "8,10,12")]
    pub distances: Vec<usize>,
    #[arg(short = 'p', long = "rates", value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[arg(long, default_value = "0")]
    pub radius: PredecoderParams,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
}

#[derive(Serialize)]
struct DensityRow {
    p: f64,
    radius: String,
    density: f64,
    model: f64,
    relative_deviation: f64,
    intercept: f64,
    extrapolated: bool,
}

fn density(a: &DensityArgs, ctx: &Context) -> Result<(), CliError> {
    non_empty("rates", &a.rates)?;
    if a.distances.len() < 2 {
        return Err(CliError::Usage("--distances needs at least two values".into()));
    }
    let lats = a.distances.iter().map(|&d| lattice(d)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (k, &p) in a.rates.iter().enumerate() {
        let fit = defect_density(&lats, rate(p)?, a.radius, a.trials, point_seed(ctx.seed, k as u64))?;
        let model = density_model(p, a.radius);
        rows.push(DensityRow {
            p,
            radius: a.radius.to_string(),
            density: fit.density,
            model: model.density,
            relative_deviation: fit.density / model.density - 1.0,
            intercept: fit.intercept,
            extrapolated: model.extrapolated,
        });
    }
    let config = json!({
        "distances": a.distances, "rates": a.rates, "radius": a.radius, "trials": a.trials,
    });
    ctx.emit("density", config, &rows, Value::Null)
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(short = 'd', long, default_value_t = 20)]
    pub distance: usize,
    #[arg(short = 'p', long)]
    pub rate: f64,
    #[arg(long, default_value = "0")]
    pub radius: PredecoderParams,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Tail probability for the reported `M_max`.
    #[arg(long, default_value_t = 1e-15)]
    pub tail: f64,
}

#[derive(Serialize)]
struct HistogramRow {
    defects: usize,
    count: u64,
    poisson_expected: f64,
}

fn histogram(a: &HistogramArgs, ctx: &Context) -> Result<(), CliError> {
    let l = lattice(a.distance)?;
    let stats = defect_counts(&l, rate(a.rate)?, a.radius, a.trials, ctx.seed);
    let lambda = stats.mean() / 2.0;
    let pois = (lambda > 0.0).then(|| Poisson::new(lambda).ok()).flatten();
    let rows: Vec<HistogramRow> = stats
        .histogram
        .iter()
        .map(|(&m, &count)| {
            let pmf = match &pois {
                Some(d) => d.pmf((m / 2) as u64),
                None => f64::from(u8::from(m == 0)),
            };
            HistogramRow {
                defects: m,
                count,
                poisson_expected: a.trials as f64 * pmf,
            }
        })
        .collect();
    let chi = poisson_chi_square(&stats.histogram).ok();
    let mmax = if stats.mean() > 0.0 {
        poisson_mmax(stats.density(), l.fault_volume() as f64, a.tail).ok()
    } else {
        None
    };
    let summary = json!({
        "mean": stats.mean(),
        "density": stats.density(),
        "density_raw": stats.density_raw(),
        "model": density_model(a.rate, a.radius),
        "chi_square": chi,
        "m_max": mmax,
    });
    let config = json!({
        "distance": a.distance, "rate": a.rate, "radius": a.radius,
        "trials": a.trials, "tail": a.tail,
    });
    ctx.emit("histogram", config, &rows, summary)
}

#[derive(Debug, Args)]
pub struct RuntimeArgs {
    #[arg(short = 'd', long = "distances", value_delimiter = ',', required = true)]
    pub distances: Vec<usize>,
    #[arg(short = 'p', long, default_value_t = 0.02)]
    pub rate: f64,
    #[arg(long, default_value = "none")]
    pub radius: PredecoderParams,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
}

#[derive(Serialize)]
struct RuntimeRow {
    d: usize,
    volume: usize,
    mean_defects: f64,
    mean_ns: f64,
    median_ns: f64,
}

fn runtime(a: &RuntimeArgs, ctx: &Context) -> Result<(), CliError> {
    non_empty("distances", &a.distances)?;
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let mut rows = Vec::new();
    for (k, &d) in a.distances.iter().enumerate() {
        let l = lattice(d)?;
        let recs = trial_records(&l, rate(a.rate)?, a.radius, a.trials, point_seed(ctx.seed, k as u64))?;
        let ns: Vec<f64> = recs.iter().map(|r| r.matcher_time_ns as f64).collect();
        let n = recs.len() as f64;
        rows.push(RuntimeRow {
            d,
            volume: l.volume(),
            mean_defects: recs.iter().map(|r| r.defects_after_predecode as f64).sum::<f64>() / n,
            mean_ns: ns.iter().sum::<f64>() / n,
            median_ns: median(&ns).unwrap_or(0.0),
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.volume as f64, r.mean_ns)).collect();
    let summary = runtime_fit(a.rate, &pts).map_or(Value::Null, |f| json!(f));
    let config = json!({
        "distances": a.distances, "rate": a.rate, "radius": a.radius, "trials": a.trials,
    });
    ctx.emit("runtime", config, &rows, summary)
}

#[derive(Debug, Args)]
pub struct RareEventArgs {
    #[arg(short = 'd', long)]
    pub distance: usize,
    /// Descending error rates; the first is sampled directly.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ladder: Vec<f64>,
    #[arg(long, default_value = "0")]
    pub radius: PredecoderParams,
    /// Failures collected by the direct run at the top rung.
    #[arg(long, default_value_t = 100)]
    pub anchor_failures: u64,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub burn_in_sweeps: usize,
    #[arg(long, default_value_t = 1)]
    pub thin_sweeps: usize,
}

#[derive(Serialize)]
struct RungRow {
    p: f64,
    f: f64,
    std_error: f64,
    ratio: Option<f64>,
    ratio_std_error: Option<f64>,
    ess: Option<f64>,
    acceptance_rate: Option<f64>,
    flagged: bool,
    inserted: bool,
}

fn rare_event(a: &RareEventArgs, ctx: &Context) -> Result<(), CliError> {
    non_empty("ladder", &a.ladder)?;
    let l = lattice(a.distance)?;
    let stop = StopRule {
        min_failures: a.anchor_failures,
        max_trials: 100_000_000,
    };
    let anchor = direct_mc(&l, rate(a.ladder[0])?, a.radius, stop, point_seed(ctx.seed, 0))?;
    if anchor.hit_max_trials {
        return Err(CliError::Usage(format!(
            "no anchor: fewer than {} failures at p = {}",
            a.anchor_failures, a.ladder[0]
        )));
    }
    let config = ChainConfig {
        samples: a.samples,
        burn_in_sweeps: a.burn_in_sweeps,
        thin_sweeps: a.thin_sweeps,
        ..ChainConfig::default()
    };
    let res = splitting_ladder(&l, a.radius, &a.ladder, anchor.failures, &config, point_seed(ctx.seed, 1))?;
    let rows: Vec<RungRow> = res
        .rungs
        .iter()
        .map(|r| RungRow {
            p: r.p,
            f: r.f,
            std_error: r.std_error,
            ratio: r.ratio.map(|x| x.estimate),
            ratio_std_error: r.ratio.map(|x| x.std_error),
            ess: r.ratio.map(|x| x.ess),
            acceptance_rate: r.acceptance_rate,
            flagged: r.flagged,
            inserted: r.inserted,
        })
        .collect();
    let summary = json!({ "any_flagged": res.any_flagged(), "anchor": anchor.failures });
    let cfg = json!({
        "distance": a.distance, "ladder": a.ladder, "radius": a.radius, "chain": config,
        "anchor_failures": a.anchor_failures,
    });
    ctx.emit("rare-event", cfg, &rows, summary)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Unit,
    Rough,
    Refined,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    #[arg(short = 'p', long = "rates", value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[arg(long, default_value = "0")]
    pub radius: PredecoderParams,
    /// Target logical failure probability.
    #[arg(long, default_value_t = 1e-15)]
    pub target: f64,
    #[arg(long, value_enum, default_value_t = ModelChoice::Rough)]
    pub multiplicity: ModelChoice,
    /// Slope of the refined multiplicity model.
    #[arg(long, default_value_t = 3.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = analysis::DEFAULT_D_MAX)]
    pub d_max: usize,
}

#[derive(Serialize)]
struct AnalysisRow {
    p: f64,
    d_pre: usize,
    d_mwpm: usize,
    qubit_ratio: f64,
    effective_distance: f64,
    density_pre: f64,
    density_mwpm: f64,
    speedup_model: Option<f64>,
    extrapolated: bool,
}

fn analysis_table(a: &AnalysisArgs, ctx: &Context) -> Result<(), CliError> {
    non_empty("rates", &a.rates)?;
    let model = match a.multiplicity {
        ModelChoice::Unit => Multiplicity::Unit,
        ModelChoice::Rough => Multiplicity::Rough,
        ModelChoice::Refined => Multiplicity::Refined { alpha: a.alpha },
    };
    let mut rows = Vec::new();
    for &p in &a.rates {
        let d_pre = required_distance(p, a.target, a.radius, model, a.d_max)?;
        let d_mwpm = required_distance(p, a.target, PredecoderParams::DISABLED, model, a.d_max)?;
        let pre = density_model(p, a.radius);
        rows.push(AnalysisRow {
            p,
            d_pre,
            d_mwpm,
            qubit_ratio: (d_pre as f64 / d_mwpm as f64).powi(2),
            effective_distance: analysis::effective_mwpm_distance(d_pre, p, a.radius, model)?,
            density_pre: pre.density,
            density_mwpm: density_model(p, PredecoderParams::DISABLED).density,
            speedup_model: a.radius.radius().map(|r| speedup_model(p, r)),
            extrapolated: pre.extrapolated,
        });
    }
    let config = json!({
        "rates": a.rates, "radius": a.radius, "target": a.target,
        "multiplicity": model, "d_max": a.d_max,
    });
    ctx.emit("analysis", config, &rows, Value::Null)
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    #[command(subcommand)]
    pub action: CodecAction,
}

#[derive(Debug, Subcommand)]
pub enum CodecAction {
    /// Encode a defect list, or a freshly sampled syndrome, as `.synz`.
    Compress {
        /// Text file: a `d <distance>` line, then one `x y t` per defect.
        #[arg(long, conflicts_with_all = ["distance", "rate"])]
        input: Option<PathBuf>,
        /// Sample a syndrome at this distance instead of reading one.
        #[arg(short = 'd', long, requires = "rate")]
        distance: Option<usize>,
        #[arg(short = 'p', long, requires = "distance")]
        rate: Option<f64>,
        /// Pre-decode the sampled syndrome before encoding it.
        #[arg(long, default_value = "none")]
        radius: PredecoderParams,
        /// Destination `.synz` file.
        #[arg(long)]
        output: PathBuf,
    },
    /// List the defects of a `.synz` file.
    Decompress {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Serialize)]
struct DefectRow {
    address: usize,
    x: usize,
    y: usize,
    t: usize,
}

#[derive(Serialize)]
struct CompressRow {
    d: usize,
    defects: usize,
    bytes: usize,
    address_bits: u32,
    ideal_bits: u64,
    uncompressed_bits: u64,
}

fn read_defect_list(path: &Path) -> Result<(CodeLattice, SyndromeHistory), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let header = lines.next().ok_or_else(|| bad("empty defect list".into()))?;
    let d: usize = header
        .strip_prefix("d ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad(format!("expected `d <distance>`, got `{header}`")))?;
    let l = lattice(d)?;
    let mut s = SyndromeHistory::empty(&l);
    for line in lines {
        let v: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("bad coordinate line `{line}`")))?;
        let [x, y, t] = v[..] else {
            return Err(bad(format!("expected `x y t`, got `{line}`")));
        };
        let a = l.vertex_address(VertexId::new(x, y, t))?;
        if s.is_defect(a) {
            return Err(bad(format!("defect `{line}` listed twice")));
        }
        s.toggle(a);
    }
    Ok((l, s))
}

fn codec(a: &CodecArgs, ctx: &Context) -> Result<(), CliError> {
    match &a.action {
        CodecAction::Compress {
            input,
            distance,
            rate: p,
            radius,
            output,
        } => {
            let (l, s) = match (input, distance, p) {
                (Some(path), _, _) => read_defect_list(path)?,
                (None, Some(d), Some(p)) => {
                    let l = lattice(*d)?;
                    let e = sample_error(&l, rate(*p)?, &mut trial_rng(ctx.seed, 0));
                    let s = syndrome_of(&l, &e);
                    let s = predecode::predecoder::Predecoder::new(&l, *radius)
                        .predecode(&s)
                        .modified_syndrome;
                    (l, s)
                }
                _ => {
                    return Err(CliError::Usage(
                        "compress needs --input or both --distance and --rate".into(),
                    ))
                }
            };
            let m = compress(&l, &s);
            m.write_file(output)?;
            let report = bandwidth_report(&m, &l);
            let row = CompressRow {
                d: l.d(),
                defects: m.count(),
                bytes: m.encoded_len(),
                address_bits: report.address_bits,
                ideal_bits: report.ideal_bits,
                uncompressed_bits: report.uncompressed_bits,
            };
            let config = json!({ "output": output, "input": input, "distance": distance, "rate": p, "radius": radius });
            ctx.emit("codec compress", config, &[row], Value::Null)
        }
        CodecAction::Decompress { input } => {
            let m = CompressedSyndrome::read_file(input)?;
            let l = lattice(usize::from(m.d()))?;
            let s = decompress(&m, &l)?;
            let rows = s
                .defects()
                .into_iter()
                .map(|a| {
                    let v = l.address_vertex(a)?;
                    Ok(DefectRow {
                        address: a,
                        x: v.x,
                        y: v.y,
                        t: v.t,
                    })
                })
                .collect::<Result<Vec<_>, predecode::Error>>()?;
            let config = json!({ "input": input });
            ctx.emit("codec decompress", config, &rows, json!({ "d": m.d(), "count": m.count() }))
        }
    }
}
