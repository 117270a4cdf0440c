//! Verification diagnostics: attributes diagram, performance diagram,
//! bootstrap intervals and a paired bootstrap test.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{write_atomic, GridField};
use crate::scores::{check_binary, check_pair, scored_pixels, Neumaier};

pub const N_BINS: usize = 20;

/// Probability thresholds 0.00, 0.01, ..., 1.00.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

pub fn bin_edges() -> Vec<f64> {
    (0..=N_BINS).map(|i| i as f64 / N_BINS as f64).collect()
}

/// Bin of a probability; 1.0 falls in the last bin.
pub fn bin_index(p: f64) -> usize {
    let n = N_BINS as f64;
    let mut k = ((p * n).floor() as usize).min(N_BINS - 1);
    if k > 0 && p < k as f64 / n {
        k -= 1;
    } else if k + 1 < N_BINS && p >= (k + 1) as f64 / n {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributesBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub mean_forecast: Option<f64>,
    pub event_frequency: Option<f64>,
    pub consistency: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributesData {
    pub bin_edges: Vec<f64>,
    pub bins: Vec<AttributesBin>,
    pub n: u64,
    pub base_rate: f64,
    pub rel: f64,
    pub bs: f64,
    pub bs_clim: f64,
    pub bss: f64,
    pub flags: Vec<String>,
}

fn check_samples(p: &[GridField], y: &[GridField]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    if p.len() != y.len() {
        return Err(Error::Argument(format!(
            "{} forecast samples for {} observation samples",
            p.len(),
            y.len()
        )));
    }
    for (pf, yf) in p.iter().zip(y) {
        check_pair(pf, yf)?;
        check_binary(yf)?;
    }
    Ok(())
}

/// Scored `(p, y)` pairs of one sample.
fn scored_pairs<'a>(p: &'a GridField, y: &'a GridField) -> impl Iterator<Item = (f64, f64)> + 'a {
    let scored = scored_pixels(p, y);
    p.values()
        .iter()
        .zip(y.values())
        .zip(scored)
        .filter(|(_, s)| *s)
        .map(|((p, y), _)| (*p, *y))
}

pub fn attributes_diagram(p: &[GridField], y: &[GridField]) -> Result<AttributesData> {
    check_samples(p, y)?;
    let mut n = 0u64;
    let mut events = Neumaier::default();
    for (pf, yf) in p.iter().zip(y) {
        for (_, yv) in scored_pairs(pf, yf) {
            n += 1;
            events.add(yv);
        }
    }
    if n == 0 {
        return Err(Error::Argument("no pixels left to score".into()));
    }
    let base_rate = events.total() / n as f64;

    let mut counts = [0u64; N_BINS];
    let mut sum_p = [Neumaier::default(); N_BINS];
    let mut sum_y = [Neumaier::default(); N_BINS];
    let mut sse = Neumaier::default();
    let mut sse_clim = Neumaier::default();
    for (pf, yf) in p.iter().zip(y) {
        for (pv, yv) in scored_pairs(pf, yf) {
            let k = bin_index(pv);
            counts[k] += 1;
            sum_p[k].add(pv);
            sum_y[k].add(yv);
            sse.add((pv - yv) * (pv - yv));
            sse_clim.add((base_rate - yv) * (base_rate - yv));
        }
    }
    let edges = bin_edges();
    let mut rel = Neumaier::default();
    let bins: Vec<AttributesBin> = (0..N_BINS)
        .map(|k| {
            let (mean_forecast, event_frequency) = if counts[k] > 0 {
                let c = counts[k] as f64;
                let (pb, yb) = (sum_p[k].total() / c, sum_y[k].total() / c);
                rel.add(c * (pb - yb) * (pb - yb));
                (Some(pb), Some(yb))
            } else {
                (None, None)
            };
            AttributesBin {
                lower: edges[k],
                upper: edges[k + 1],
                count: counts[k],
                mean_forecast,
                event_frequency,
                consistency: None,
            }
        })
        .collect();
    let nf = n as f64;
    let (bs, bs_clim) = (sse.total() / nf, sse_clim.total() / nf);
    let mut flags = Vec::new();
    let bss = if bs_clim > 0.0 {
        1.0 - bs / bs_clim
    } else {
        flags.push("bss_undefined".to_string());
        0.0
    };
    Ok(AttributesData {
        bin_edges: edges,
        bins,
        n,
        base_rate,
        rel: rel.total() / nf,
        bs,
        bs_clim,
        bss,
        flags,
    })
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Percentile of sorted data with linear interpolation between order
/// statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

fn check_boot(n_boot: usize, level: f64) -> Result<()> {
    if n_boot < 2 {
        return Err(Error::Argument(format!("n_boot = {n_boot}; need at least 2")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("level {level} must lie in (0, 1)")));
    }
    Ok(())
}

fn interval_of(mut draws: Vec<f64>, level: f64) -> Interval {
    draws.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: percentile(&draws, tail),
        hi: percentile(&draws, 1.0 - tail),
    }
}

/// Event frequencies expected in each bin if the forecast were calibrated:
/// `N_k` outcomes are redrawn from Bernoulli(mean forecast) `n_boot` times.
pub fn consistency_bars(
    attr: &AttributesData,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<Option<Interval>>> {
    check_boot(n_boot, level)?;
    attr.bins
        .iter()
        .enumerate()
        .map(|(k, bin)| {
            let Some(pk) = bin.mean_forecast else {
                return Ok(None);
            };
            let dist = Binomial::new(bin.count, pk.clamp(0.0, 1.0))
                .map_err(|e| Error::Argument(format!("bin {k}: {e}")))?;
            let c = bin.count as f64;
            let draws: Vec<f64> = (0..n_boot)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(seed, ((k as u64) << 32) | i as u64);
                    dist.sample(&mut rng) as f64 / c
                })
                .collect();
            Ok(Some(interval_of(draws, level)))
        })
        .collect()
}

pub fn with_consistency_bars(mut attr: AttributesData, n_boot: usize, level: f64, seed: u64) -> Result<AttributesData> {
    let bars = consistency_bars(&attr, n_boot, level, seed)?;
    for (bin, bar) in attr.bins.iter_mut().zip(bars) {
        bin.consistency = bar;
    }
    Ok(attr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformancePoint {
    pub threshold: f64,
    pub hits: u64,
    pub false_alarms: u64,
    pub misses: u64,
    pub correct_negatives: u64,
    pub pod: Option<f64>,
    pub sr: Option<f64>,
    pub csi: Option<f64>,
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceData {
    pub points: Vec<PerformancePoint>,
    pub aupd: f64,
    pub flags: Vec<String>,
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Argument("no thresholds".into()));
    }
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(
            "thresholds must be strictly ascending within [0, 1]".into(),
        ));
    }
    Ok(())
}

/// Counts that summarise one time step for every diagnostic, so resampled
/// sets of steps can be scored without revisiting pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub n: u64,
    pub events: u64,
    pub sse: f64,
    pub bin_count: Vec<u64>,
    pub bin_sum_p: Vec<f64>,
    pub bin_sum_y: Vec<f64>,
    /// Events and non-events with `p >= threshold`, per threshold.
    pub events_at_or_above: Vec<u64>,
    pub non_events_at_or_above: Vec<u64>,
}

pub fn step_stats(p: &GridField, y: &GridField, thresholds: &[f64]) -> Result<StepStats> {
    check_pair(p, y)?;
    check_binary(y)?;
    check_thresholds(thresholds)?;
    let nt = thresholds.len();
    let mut s = StepStats {
        n: 0,
        events: 0,
        sse: 0.0,
        bin_count: vec![0; N_BINS],
        bin_sum_p: vec![0.0; N_BINS],
        bin_sum_y: vec![0.0; N_BINS],
        events_at_or_above: vec![0; nt],
        non_events_at_or_above: vec![0; nt],
    };
    // histogram over "number of thresholds at or below p", then cumulate
    let mut ev_hist = vec![0u64; nt + 1];
    let mut ne_hist = vec![0u64; nt + 1];
    let mut sse = Neumaier::default();
    for (pv, yv) in scored_pairs(p, y) {
        s.n += 1;
        let k = bin_index(pv);
        s.bin_count[k] += 1;
        s.bin_sum_p[k] += pv;
        s.bin_sum_y[k] += yv;
        sse.add((pv - yv) * (pv - yv));
        let m = thresholds.partition_point(|&t| t <= pv);
        if yv == 1.0 {
            s.events += 1;
            ev_hist[m] += 1;
        } else {
            ne_hist[m] += 1;
        }
    }
    s.sse = sse.total();
    let (mut ev, mut ne) = (0u64, 0u64);
    for j in (0..nt).rev() {
        ev += ev_hist[j + 1];
        ne += ne_hist[j + 1];
        s.events_at_or_above[j] = ev;
        s.non_events_at_or_above[j] = ne;
    }
    Ok(s)
}

fn point_from_counts(threshold: f64, a: u64, b: u64, c: u64, d: u64) -> PerformancePoint {
    let (af, bf, cf) = (a as f64, b as f64, c as f64);
    let pod = (a + c > 0).then(|| af / (af + cf));
    let sr = (a + b > 0).then(|| af / (af + bf));
    let csi = match (pod, sr) {
        (Some(p), Some(s)) if p > 0.0 && s > 0.0 => Some(1.0 / (1.0 / p + 1.0 / s - 1.0)),
        _ if a + b + c > 0 => Some(0.0),
        _ => None,
    };
    let bias = (a + c > 0).then(|| (af + bf) / (af + cf));
    PerformancePoint {
        threshold,
        hits: a,
        false_alarms: b,
        misses: c,
        correct_negatives: d,
        pod,
        sr,
        csi,
        bias,
    }
}

/// Performance diagram from pooled step statistics.
pub fn performance_from_steps(steps: &[&StepStats], thresholds: &[f64]) -> PerformanceData {
    let events: u64 = steps.iter().map(|s| s.events).sum();
    let n: u64 = steps.iter().map(|s| s.n).sum();
    let points: Vec<PerformancePoint> = thresholds
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let a: u64 = steps.iter().map(|s| s.events_at_or_above[j]).sum();
            let b: u64 = steps.iter().map(|s| s.non_events_at_or_above[j]).sum();
            let c = events - a;
            let d = n - events - b;
            point_from_counts(t, a, b, c, d)
        })
        .collect();
    let mut flags = Vec::new();
    let aupd = if events == 0 {
        flags.push("no_events".to_string());
        0.0
    } else {
        let curve: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|pt| Some((pt.sr?, pt.pod?)))
            .collect();
        aupd(&curve)
    };
    PerformanceData { points, aupd, flags }
}

pub fn performance_diagram(p: &[GridField], y: &[GridField], thresholds: &[f64]) -> Result<PerformanceData> {
    check_samples(p, y)?;
    check_thresholds(thresholds)?;
    let steps = p
        .iter()
        .zip(y)
        .map(|(pf, yf)| step_stats(pf, yf, thresholds))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&StepStats> = steps.iter().collect();
    Ok(performance_from_steps(&refs, thresholds))
}

/// Area under the `(SR, POD)` curve.
///
/// The curve is the upper envelope `f(x) = max { POD_i : SR_i >= x }` over
/// `x` in [0, 1]: it runs flat from SR = 0 at the highest POD, drops at the
/// SR of each point, and reaches 0 past the largest SR. The envelope is a
/// step function, integrated exactly over its corners. Raising any point's
/// POD or SR never lowers the area.
pub fn aupd(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(sr, pod)| (sr.clamp(0.0, 1.0), pod.clamp(0.0, 1.0)))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut area = 0.0;
    let mut best = 0.0_f64;
    for (i, &(sr, pod)) in pts.iter().enumerate() {
        best = best.max(pod);
        let left = pts.get(i + 1).map_or(0.0, |p| p.0);
        area += (sr - left) * best;
    }
    area.clamp(0.0, 1.0)
}

/// Headline statistics of a set of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub bs: f64,
    pub bs_clim: f64,
    pub bss: f64,
    pub rel: f64,
    pub aupd: f64,
}

pub fn summary_from_steps(steps: &[&StepStats], thresholds: &[f64]) -> SummaryStats {
    let n: u64 = steps.iter().map(|s| s.n).sum();
    let events: u64 = steps.iter().map(|s| s.events).sum();
    let nf = n.max(1) as f64;
    let bs = steps.iter().map(|s| s.sse).sum::<f64>() / nf;
    let base = events as f64 / nf;
    let bs_clim = base * (1.0 - base);
    let bss = if bs_clim > 0.0 { 1.0 - bs / bs_clim } else { 0.0 };
    let mut rel = 0.0;
    for k in 0..N_BINS {
        let c: u64 = steps.iter().map(|s| s.bin_count[k]).sum();
        if c > 0 {
            let cf = c as f64;
            let pb = steps.iter().map(|s| s.bin_sum_p[k]).sum::<f64>() / cf;
            let yb = steps.iter().map(|s| s.bin_sum_y[k]).sum::<f64>() / cf;
            rel += cf * (pb - yb) * (pb - yb);
        }
    }
    SummaryStats {
        bs,
        bs_clim,
        bss,
        rel: rel / nf,
        aupd: performance_from_steps(steps, thresholds).aupd,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    /// The statistic on the full sample set.
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Resampled sets of sample indices, one per iteration. Iteration `i` draws
/// from its own random stream, so the result does not depend on threading.
fn resample_indices(n: usize, n_boot: usize, seed: u64) -> impl IndexedParallelIterator<Item = Vec<usize>> {
    (0..n_boot).into_par_iter().map(move |i| {
        let mut rng = rng_for(seed, i as u64);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    })
}

fn check_sample_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Argument(format!("{n} samples; need at least 2")));
    }
    Ok(())
}

/// Percentile bootstrap interval, resampling whole samples with replacement.
pub fn bootstrap_ci<T, F>(stat: F, samples: &[T], n_boot: usize, level: f64, seed: u64) -> Result<BootstrapCi>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    check_boot(n_boot, level)?;
    check_sample_count(samples.len())?;
    let all: Vec<&T> = samples.iter().collect();
    let estimate = stat(&all);
    let draws: Vec<f64> = resample_indices(samples.len(), n_boot, seed)
        .map(|idx| {
            let pick: Vec<&T> = idx.iter().map(|&i| &samples[i]).collect();
            stat(&pick)
        })
        .collect();
    let iv = interval_of(draws, level);
    Ok(BootstrapCi {
        estimate,
        lo: iv.lo,
        hi: iv.hi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    /// `stat_a - stat_b` on the full sample set.
    pub diff: f64,
    /// Mean of the resampled differences.
    pub diff_mean: f64,
    pub p_value: f64,
    pub significant_95: bool,
}

/// Two-sided paired bootstrap test of `stat_a - stat_b`: both statistics see
/// the same resampled samples, and the p-value doubles the smaller tail
/// fraction of differences on either side of zero.
pub fn paired_bootstrap_test<T, FA, FB>(
    stat_a: FA,
    stat_b: FB,
    samples: &[T],
    n_boot: usize,
    seed: u64,
) -> Result<PairedTest>
where
    T: Sync,
    FA: Fn(&[&T]) -> f64 + Sync,
    FB: Fn(&[&T]) -> f64 + Sync,
{
    check_boot(n_boot, 0.95)?;
    check_sample_count(samples.len())?;
    let all: Vec<&T> = samples.iter().collect();
    let diff = stat_a(&all) - stat_b(&all);
    let diffs: Vec<f64> = resample_indices(samples.len(), n_boot, seed)
        .map(|idx| {
            let pick: Vec<&T> = idx.iter().map(|&i| &samples[i]).collect();
            stat_a(&pick) - stat_b(&pick)
        })
        .collect();
    let nb = n_boot as f64;
    let below = diffs.iter().filter(|d| **d <= 0.0).count() as f64 / nb;
    let above = diffs.iter().filter(|d| **d >= 0.0).count() as f64 / nb;
    let p_value = (2.0 * below.min(above)).min(1.0);
    Ok(PairedTest {
        diff,
        diff_mean: diffs.iter().sum::<f64>() / nb,
        p_value,
        significant_95: p_value < 0.05,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub value: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

/// Everything needed to redraw an attributes and a performance diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attributes: AttributesData,
    pub performance: PerformanceData,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub bars_n_boot: usize,
    pub ci_n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            bars_n_boot: 100,
            ci_n_boot: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Builds the full report. Bootstrap intervals on the summary statistics
/// resample time steps and need at least two of them.
pub fn build_report(p: &[GridField], y: &[GridField], thresholds: &[f64], opts: ReportOptions) -> Result<EvalReport> {
    let attributes = with_consistency_bars(attributes_diagram(p, y)?, opts.bars_n_boot, opts.level, opts.seed)?;
    let performance = performance_diagram(p, y, thresholds)?;
    let steps = p
        .iter()
        .zip(y)
        .map(|(pf, yf)| step_stats(pf, yf, thresholds))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    let point = [
        ("n", attributes.n as f64),
        ("base_rate", attributes.base_rate),
        ("bs", attributes.bs),
        ("bs_clim", attributes.bs_clim),
        ("bss", attributes.bss),
        ("rel", attributes.rel),
        ("aupd", performance.aupd),
    ];
    type Pick = fn(&SummaryStats) -> f64;
    let resampled: [(&str, Pick); 4] = [
        ("bss", |s| s.bss),
        ("rel", |s| s.rel),
        ("bs", |s| s.bs),
        ("aupd", |s| s.aupd),
    ];
    for (name, value) in point {
        let mut row = SummaryRow {
            name: name.to_string(),
            value: Some(value),
            ci_lo: None,
            ci_hi: None,
        };
        if let Some((_, pick)) = resampled.iter().find(|(n, _)| *n == name) {
            if steps.len() >= 2 {
                let ci = bootstrap_ci(
                    |set: &[&StepStats]| pick(&summary_from_steps(set, thresholds)),
                    &steps,
                    opts.ci_n_boot,
                    opts.level,
                    opts.seed,
                )?;
                row.ci_lo = Some(ci.lo);
                row.ci_hi = Some(ci.hi);
            }
        }
        summary.push(row);
    }
    Ok(EvalReport {
        attributes,
        performance,
        summary,
    })
}

pub const REPORT_CSV_HEADER: [&str; 17] = [
    "section",
    "bin_lower",
    "bin_upper",
    "count",
    "mean_forecast",
    "event_frequency",
    "bar_lo",
    "bar_hi",
    "threshold",
    "pod",
    "sr",
    "csi",
    "bias",
    "stat",
    "value",
    "ci_lo",
    "ci_hi",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row per bin, per threshold and per summary statistic, under
/// [`REPORT_CSV_HEADER`]. Absent values are empty cells.
pub fn report_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Validation(format!("csv: {e}"));
    w.write_record(REPORT_CSV_HEADER).map_err(csv_err)?;
    let blank = String::new;
    for b in &report.attributes.bins {
        w.write_record([
            "bin".to_string(),
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            cell(b.mean_forecast),
            cell(b.event_frequency),
            cell(b.consistency.map(|c| c.lo)),
            cell(b.consistency.map(|c| c.hi)),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
        ])
        .map_err(csv_err)?;
    }
    for pt in &report.performance.points {
        w.write_record([
            "threshold".to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            pt.threshold.to_string(),
            cell(pt.pod),
            cell(pt.sr),
            cell(pt.csi),
            cell(pt.bias),
            blank(),
            blank(),
            blank(),
            blank(),
        ])
        .map_err(csv_err)?;
    }
    for row in &report.summary {
        let mut rec = vec![String::new(); REPORT_CSV_HEADER.len()];
        rec[0] = "summary".to_string();
        rec[13] = row.name.clone();
        rec[14] = cell(row.value);
        rec[15] = cell(row.ci_lo);
        rec[16] = cell(row.ci_hi);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("csv: {e}")))
}

/// Writes the report as pretty JSON and as CSV.
pub fn emit_report(report: &EvalReport, json_path: &Path, csv_path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).map_err(|e| Error::Validation(format!("json: {e}")))?;
    write_atomic(json_path, &json)?;
    write_atomic(csv_path, &report_csv(report)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldKind;
    use proptest::prelude::*;
    use rand::Rng;

    fn prob(v: Vec<f64>) -> GridField {
        GridField::new(1, v.len(), 0.0125, FieldKind::Prob, v).unwrap()
    }

    fn mask(v: Vec<f64>) -> GridField {
        GridField::new(1, v.len(), 0.0125, FieldKind::Mask, v).unwrap()
    }

    fn bernoulli_pair(n: usize, seed: u64) -> (GridField, GridField) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = p.iter().map(|&q| if rng.random::<f64>() < q { 1.0 } else { 0.0 }).collect();
        (prob(p), mask(y))
    }

    #[test]
    fn bin_boundaries() {
        assert_eq!(bin_index(0.0), 0);
        assert_eq!(bin_index(0.05), 1);
        assert_eq!(bin_index(0.0499999), 0);
        assert_eq!(bin_index(0.15), 3);
        assert_eq!(bin_index(0.95), 19);
        assert_eq!(bin_index(1.0), 19);
        for i in 0..=1000 {
            let p = i as f64 / 1000.0;
            let k = bin_index(p);
            assert!(p >= k as f64 / 20.0 && (p < (k + 1) as f64 / 20.0 || k == 19));
        }
    }

    #[test]
    fn climatology_and_perfect_forecast() {
        let y = mask(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let rate = 2.0 / 7.0;
        let a = attributes_diagram(&[prob(vec![rate; 7])], &[y.clone()]).unwrap();
        assert_eq!(a.bss, 0.0);
        let a = attributes_diagram(&[prob(y.values().to_vec())], &[y]).unwrap();
        assert_eq!(a.bss, 1.0);
        assert_eq!(a.rel, 0.0);
        let total: u64 = a.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, a.n);
        assert!(a.bins[5].mean_forecast.is_none());
    }

    #[test]
    fn no_events_flags_bss() {
        let a = attributes_diagram(&[prob(vec![0.1, 0.2])], &[mask(vec![0.0, 0.0])]).unwrap();
        assert_eq!(a.bss, 0.0);
        assert_eq!(a.flags, vec!["bss_undefined"]);
        assert!(attributes_diagram(&[], &[]).is_err());
    }

    #[test]
    fn calibrated_data_has_small_rel() {
        let (p, y) = bernoulli_pair(200_000, 11);
        let a = attributes_diagram(&[p], &[y]).unwrap();
        assert!(a.rel < 0.001, "{}", a.rel);
        for b in &a.bins {
            let pb = b.mean_forecast.unwrap();
            assert!(pb >= b.lower && pb <= b.upper);
        }
    }

    #[test]
    fn binomial_bar_width() {
        let (p, y) = (prob(vec![0.5; 10_000]), mask(vec![0.0; 10_000]));
        let a = with_consistency_bars(attributes_diagram(&[p], &[y]).unwrap(), 100, 0.95, 3).unwrap();
        let bar = a.bins[10].consistency.unwrap();
        let width = bar.hi - bar.lo;
        assert!((0.015..=0.027).contains(&width), "{width}");
        assert!(bar.lo <= 0.5 && bar.hi >= 0.5);
        assert!(a.bins[0].consistency.is_none());
    }

    #[test]
    fn performance_of_perfect_and_flat_forecasts() {
        let y = mask(vec![1.0, 0.0, 0.0, 1.0, 0.0]);
        let perf = performance_diagram(&[prob(y.values().to_vec())], &[y.clone()], &default_thresholds()).unwrap();
        assert_eq!(perf.aupd, 1.0);
        for pt in perf.points.iter().filter(|pt| pt.threshold > 0.0 && pt.threshold < 1.0) {
            assert_eq!((pt.pod, pt.sr, pt.csi, pt.bias), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        }
        let perf = performance_diagram(&[prob(vec![0.5; 5])], &[y], &[0.25]).unwrap();
        assert_eq!(perf.points[0].pod, Some(1.0));
        assert_eq!(perf.points[0].sr, Some(0.4));
    }

    #[test]
    fn no_events_gives_flagged_zero_aupd() {
        let perf = performance_diagram(&[prob(vec![0.3, 0.6])], &[mask(vec![0.0, 0.0])], &[0.5]).unwrap();
        assert_eq!(perf.aupd, 0.0);
        assert_eq!(perf.flags, vec!["no_events"]);
        assert!(performance_diagram(&[prob(vec![0.3])], &[mask(vec![0.0])], &[0.5, 0.2]).is_err());
    }

    #[test]
    fn csi_identity_at_every_threshold() {
        let (p, y) = bernoulli_pair(5_000, 5);
        let perf = performance_diagram(&[p], &[y], &default_thresholds()).unwrap();
        for pt in &perf.points {
            let (a, b, c) = (pt.hits as f64, pt.false_alarms as f64, pt.misses as f64);
            if a + b + c > 0.0 {
                assert!((pt.csi.unwrap() - a / (a + b + c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn step_counts_match_direct_thresholding() {
        let (p, y) = bernoulli_pair(3_000, 9);
        let th = default_thresholds();
        let s = step_stats(&p, &y, &th).unwrap();
        for (j, &t) in th.iter().enumerate() {
            let a = p.values().iter().zip(y.values()).filter(|(p, y)| **p >= t && **y == 1.0).count();
            let b = p.values().iter().zip(y.values()).filter(|(p, y)| **p >= t && **y == 0.0).count();
            assert_eq!((s.events_at_or_above[j], s.non_events_at_or_above[j]), (a as u64, b as u64));
        }
    }

    #[test]
    fn bootstrap_basics() {
        let xs: Vec<f64> = vec![2.0; 10];
        let mean = |s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64;
        let ci = bootstrap_ci(mean, &xs, 200, 0.95, 1).unwrap();
        assert_eq!((ci.lo, ci.hi), (2.0, 2.0));
        assert!(bootstrap_ci(mean, &xs, 1, 0.95, 1).is_err());
        assert!(bootstrap_ci(mean, &xs[..1], 100, 0.95, 1).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let draws: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
        let ci = bootstrap_ci(mean, &draws, 1000, 0.95, 7).unwrap();
        let expect = 2.0 * 1.96 / 1000f64.sqrt();
        assert!(((ci.hi - ci.lo) / expect - 1.0).abs() < 0.2);
        assert_eq!(ci, bootstrap_ci(mean, &draws, 1000, 0.95, 7).unwrap());
    }

    #[test]
    fn paired_test_extremes() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mean = |s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64;
        let same = paired_bootstrap_test(mean, mean, &xs, 1000, 4).unwrap();
        assert_eq!(same.p_value, 1.0);
        assert!(!same.significant_95);
        let shifted = paired_bootstrap_test(|s: &[&f64]| mean(s) + 10.0, mean, &xs, 1000, 4).unwrap();
        assert!(shifted.p_value <= 0.002);
        assert!(shifted.significant_95);
    }

    #[test]
    fn report_rows_and_round_trip() {
        let (p1, y1) = bernoulli_pair(500, 1);
        let (p2, y2) = bernoulli_pair(500, 2);
        let th = default_thresholds();
        let opts = ReportOptions {
            ci_n_boot: 50,
            ..Default::default()
        };
        let r = build_report(&[p1, p2], &[y1, y2], &th, opts).unwrap();
        let csv = report_csv(&r).unwrap();
        let rows = csv.iter().filter(|b| **b == b'\n').count() - 1;
        assert_eq!(rows, N_BINS + th.len() + r.summary.len());
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);

        let (p, y) = (prob(vec![0.01, 0.02]), mask(vec![0.0, 1.0]));
        let r = build_report(&[p], &[y], &th, opts).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"mean_forecast\":null"));
    }

    proptest! {
        #[test]
        fn aupd_in_unit_interval(pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..30)) {
            let a = aupd(&pts);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn aupd_monotone_in_each_point(
            pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..30),
            bumps in prop::collection::vec((0.0f64..0.3, 0.0f64..0.3), 30),
        ) {
            let better: Vec<(f64, f64)> = pts
                .iter()
                .zip(&bumps)
                .map(|(&(x, y), &(dx, dy))| ((x + dx).min(1.0), (y + dy).min(1.0)))
                .collect();
            prop_assert!(aupd(&better) >= aupd(&pts));
        }

        #[test]
        fn rel_nonnegative_and_bss_at_most_one(seed in any::<u64>(), n in 2usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
            let a = attributes_diagram(&[prob(p)], &[mask(y)]).unwrap();
            prop_assert!(a.rel >= 0.0);
            prop_assert!(a.bss <= 1.0);
        }

        #[test]
        fn sharpening_towards_truth_never_lowers_aupd(seed in any::<u64>(), t in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 400;
            let y: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 }).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let better: Vec<f64> = p.iter().zip(&y).map(|(p, y)| p + t * (y - p)).collect();
            let th = default_thresholds();
            let a0 = performance_diagram(&[prob(p)], &[mask(y.clone())], &th).unwrap().aupd;
            let a1 = performance_diagram(&[prob(better)], &[mask(y)], &th).unwrap().aupd;
            prop_assert!(a1 >= a0 - 1e-12, "{} -> {}", a0, a1);
        }

        #[test]
        fn interval_contains_mean(seed in any::<u64>(), n in 5usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let mean = |s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64;
            let ci = bootstrap_ci(mean, &xs, 200, 0.95, seed).unwrap();
            prop_assert!(ci.lo <= ci.estimate && ci.estimate <= ci.hi);
        }
    }
}
